//! Seeded fixtures shared by the benchmarks.

use snperm_core::harness::{markov_chain_cov, substream, Instance};
use snperm_core::model::sample_ordering_constraints;
use snperm_core::spectral::with_lambda2;
use snperm_core::{LaplacianOperator, SideConstraints};

pub const SIZES: [usize; 3] = [50, 100, 200];

/// A Markov-chain instance with its Laplacian (λ₂ cached) and `n` ordering constraints.
pub struct Fixture {
    pub instance: Instance,
    pub laplacian: LaplacianOperator,
    pub constraints: SideConstraints,
}

pub fn markov_fixture(n: usize, seed: u64) -> Fixture {
    let instance = markov_chain_cov(n, 0.999, 0.5, 50, &mut substream(seed, 0)).expect("valid generator arguments");
    let (laplacian, _) = with_lambda2(LaplacianOperator::from_matrix(instance.similarity.clone())).expect("n ≥ 2");
    let truth = instance.truth.as_ref().expect("synthetic instances carry a truth");
    let constraints = sample_ordering_constraints(truth, n, &mut substream(seed, 1)).expect("truth is a permutation");
    Fixture { instance, laplacian, constraints }
}
