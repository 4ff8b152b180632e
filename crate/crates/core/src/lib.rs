//! Compact extended formulations of the permutahedron built from comparator
//! sorting networks, together with convex relaxations of the 2-SUM seriation
//! problem and the machinery to turn relaxed points back into permutations.
//!
//! The crate is organised bottom-up:
//!
//! * [`sortnet`] generates and checks bitonic / odd-even comparator networks.
//! * [`snpoly`] turns a network into the sparse sorting-network polytope and
//!   exports it (MPS, MatrixMarket).
//! * [`birkhoff`] holds the doubly-stochastic baseline and its assignment oracle.
//! * [`model`] builds 2-SUM problems and evaluation metrics.
//! * [`spectral`] computes Fiedler pairs and the spectral ordering.
//! * [`frankwolfe`] and [`splitqp`] are the two relaxation solvers.
//! * [`recover`] rounds and decomposes relaxed points.
//! * [`harness`] generates instances and runs experiments end to end.

pub mod birkhoff;
pub mod error;
pub mod frankwolfe;
pub mod harness;
pub mod io;
mod linalg;
pub mod model;
pub mod perm;
pub mod recover;
pub mod snpoly;
pub mod sortnet;
pub mod spectral;
pub mod splitqp;

pub use error::{Error, Result};
pub use model::{LaplacianOperator, SideConstraint, SideConstraints, SimilarityMatrix};
pub use perm::PermutationVec;
pub use snpoly::SnPolytope;
pub use sortnet::{Comparator, ComparatorNetwork, NetworkKind};
