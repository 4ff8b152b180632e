//! The sorting-network polytope: an extended formulation of the convex hull
//! of all permutations of an ascending vector `v`.
//!
//! Variable layout: the `n` network inputs come first, then every comparator
//! contributes two fresh variables (its top and bottom outputs) in comparator
//! order. A wire's output variable is the last segment variable on that wire,
//! so there are exactly `n + 2m` variables. The constraints are
//!
//! * per comparator: `in_top + in_bottom − out_top − out_bottom = 0`,
//!   `out_top − in_top ≤ 0` and `out_top − in_bottom ≤ 0`;
//! * per wire: `x_out(i) = v_i`.

pub mod mps;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::perm::PermutationVec;
use crate::sortnet::ComparatorNetwork;

pub const DEFAULT_TOL: f64 = 1e-9;

/// A sparse row `Σ coef_k · x_{idx_k}` against a right-hand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub idx: Vec<usize>,
    pub coef: Vec<f64>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn new(terms: &[(usize, f64)], rhs: f64) -> Self {
        Self { idx: terms.iter().map(|t| t.0).collect(), coef: terms.iter().map(|t| t.1).collect(), rhs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.coef).map(|(&i, c)| c * x[i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparatorVars {
    pub in_top: usize,
    pub in_bottom: usize,
    pub out_top: usize,
    pub out_bottom: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnPolytope {
    n: usize,
    num_vars: usize,
    input_idx: Vec<usize>,
    output_idx: Vec<usize>,
    comparator_vars: Vec<ComparatorVars>,
    /// Comparator sum rows first (one per comparator), then the `n` output pins.
    eq_rows: Vec<SparseRow>,
    /// Two rows per comparator, `row·x ≤ rhs`.
    ineq_rows: Vec<SparseRow>,
    v: Vec<f64>,
    network: ComparatorNetwork,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub eq_max: f64,
    pub ineq_max: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.eq_max.max(self.ineq_max)
    }
}

impl SnPolytope {
    /// Builds the polytope for `net` with output pins `v` (ascending).
    pub fn build(net: &ComparatorNetwork, v: &[f64]) -> Result<Self> {
        let n = net.n();
        check_len(n, v.len())?;
        crate::error::check_finite(v, "target vector")?;
        if v.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::NotAscending);
        }
        let m = net.len();
        let mut wire_var: Vec<usize> = (0..n).collect();
        let mut next = n;
        let mut comparator_vars = Vec::with_capacity(m);
        let mut eq_rows = Vec::with_capacity(m + n);
        let mut ineq_rows = Vec::with_capacity(2 * m);
        for c in net.comparators() {
            let cv = ComparatorVars {
                in_top: wire_var[c.top],
                in_bottom: wire_var[c.bottom],
                out_top: next,
                out_bottom: next + 1,
            };
            next += 2;
            wire_var[c.top] = cv.out_top;
            wire_var[c.bottom] = cv.out_bottom;
            eq_rows.push(SparseRow::new(
                &[(cv.in_top, 1.0), (cv.in_bottom, 1.0), (cv.out_top, -1.0), (cv.out_bottom, -1.0)],
                0.0,
            ));
            ineq_rows.push(SparseRow::new(&[(cv.out_top, 1.0), (cv.in_top, -1.0)], 0.0));
            ineq_rows.push(SparseRow::new(&[(cv.out_top, 1.0), (cv.in_bottom, -1.0)], 0.0));
            comparator_vars.push(cv);
        }
        for (w, &var) in wire_var.iter().enumerate() {
            eq_rows.push(SparseRow::new(&[(var, 1.0)], v[w]));
        }
        Ok(Self {
            n,
            num_vars: next,
            input_idx: (0..n).collect(),
            output_idx: wire_var,
            comparator_vars,
            eq_rows,
            ineq_rows,
            v: v.to_vec(),
            network: net.clone(),
        })
    }

    /// The permutahedron case `v = (1, …, n)`.
    pub fn permutahedron(net: &ComparatorNetwork) -> Self {
        let v: Vec<f64> = (1..=net.n()).map(|i| i as f64).collect();
        Self::build(net, &v).expect("identity target is ascending")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_comparators(&self) -> usize {
        self.comparator_vars.len()
    }

    pub fn input_idx(&self) -> &[usize] {
        &self.input_idx
    }

    pub fn output_idx(&self) -> &[usize] {
        &self.output_idx
    }

    pub fn comparator_vars(&self) -> &[ComparatorVars] {
        &self.comparator_vars
    }

    pub fn eq_rows(&self) -> &[SparseRow] {
        &self.eq_rows
    }

    pub fn ineq_rows(&self) -> &[SparseRow] {
        &self.ineq_rows
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn network(&self) -> &ComparatorNetwork {
        &self.network
    }

    /// Forward-simulates the network from input `x`, filling every internal
    /// and output variable. `x` must be a permutation of `v`.
    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let scale = self.v.iter().fold(1.0f64, |m, a| m.max(a.abs()));
        if sorted.iter().zip(&self.v).any(|(a, b)| (a - b).abs() > 1e-12 * scale) {
            return Err(Error::InvalidPermutation("input is not a permutation of v".into()));
        }
        Ok(self.simulate(x))
    }

    pub fn lift_permutation(&self, perm: &PermutationVec) -> Result<Vec<f64>> {
        self.lift(&perm.to_f64())
    }

    /// Forward simulation without the permutation check; the result satisfies
    /// every comparator constraint, and the output pins exactly when `x` is a
    /// permutation of `v`.
    pub fn simulate(&self, x: &[f64]) -> Vec<f64> {
        let mut point = vec![0.0; self.num_vars];
        point[..self.n].copy_from_slice(x);
        for cv in &self.comparator_vars {
            let (a, b) = (point[cv.in_top], point[cv.in_bottom]);
            point[cv.out_top] = a.min(b);
            point[cv.out_bottom] = a.max(b);
        }
        point
    }

    pub fn project_input(&self, point: &[f64]) -> Result<Vec<f64>> {
        check_len(self.num_vars, point.len())?;
        Ok(self.input_idx.iter().map(|&i| point[i]).collect())
    }

    /// Largest equality and inequality violations at `point`.
    pub fn residuals(&self, point: &[f64]) -> Result<Residuals> {
        check_len(self.num_vars, point.len())?;
        let eq_max = self.eq_rows.iter().map(|r| (r.eval(point) - r.rhs).abs()).fold(0.0, f64::max);
        let ineq_max = self.ineq_rows.iter().map(|r| r.eval(point) - r.rhs).fold(0.0, f64::max);
        Ok(Residuals { eq_max, ineq_max })
    }

    pub fn is_feasible(&self, point: &[f64], tol: f64) -> Result<bool> {
        Ok(self.residuals(point)?.max() <= tol)
    }

    /// MatrixMarket coordinate dumps of the equality and inequality blocks.
    pub fn constraint_matrix_market(&self) -> (String, String) {
        (coordinate_dump(&self.eq_rows, self.num_vars), coordinate_dump(&self.ineq_rows, self.num_vars))
    }

    /// Right-hand sides of the equality and inequality blocks as MatrixMarket arrays.
    pub fn rhs_matrix_market(&self) -> (String, String) {
        let eq: Vec<f64> = self.eq_rows.iter().map(|r| r.rhs).collect();
        let ineq: Vec<f64> = self.ineq_rows.iter().map(|r| r.rhs).collect();
        (crate::io::write_matrix_market_array(eq.len(), 1, &eq), crate::io::write_matrix_market_array(ineq.len(), 1, &ineq))
    }
}

fn coordinate_dump(rows: &[SparseRow], cols: usize) -> String {
    let nnz: usize = rows.iter().map(|r| r.idx.len()).sum();
    let mut s = String::new();
    let _ = writeln!(s, "%%MatrixMarket matrix coordinate real general");
    let _ = writeln!(s, "{} {} {}", rows.len(), cols, nnz);
    for (r, row) in rows.iter().enumerate() {
        for (&c, &v) in row.idx.iter().zip(&row.coef) {
            let _ = writeln!(s, "{} {} {}", r + 1, c + 1, v);
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub member: bool,
    /// `min_k (Σ_{i≤k} v_(n+1−i) − Σ_{i≤k} z_i)`, negative when a prefix bound fails.
    pub worst_prefix_slack: f64,
    /// `Σ x − Σ v`.
    pub sum_residual: f64,
}

/// Majorization test: `x` lies in the convex hull of the permutations of `v`
/// iff every prefix sum of `x` sorted descending is bounded by the matching
/// prefix sum of `v` sorted descending, with equal totals.
pub fn permutahedron_contains(x: &[f64], v: &[f64], tol: f64) -> Result<MembershipReport> {
    check_len(v.len(), x.len())?;
    let mut z = x.to_vec();
    z.sort_by(|a, b| b.total_cmp(a));
    let mut vd = v.to_vec();
    vd.sort_by(|a, b| b.total_cmp(a));
    let mut worst = f64::INFINITY;
    let (mut sz, mut sv) = (0.0, 0.0);
    for k in 0..x.len() {
        sz += z[k];
        sv += vd[k];
        if k + 1 < x.len() {
            worst = worst.min(sv - sz);
        }
    }
    if x.len() <= 1 {
        worst = 0.0;
    }
    let sum_residual = sz - sv;
    Ok(MembershipReport { member: worst >= -tol && sum_residual.abs() <= tol, worst_prefix_slack: worst, sum_residual })
}

/// Quadratic objective `xᵀQx + cᵀx` for export; `Q` is given as triplets
/// (both triangles, or either), and must touch input variables only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadraticObjective {
    pub quad: Vec<(usize, usize, f64)>,
    pub linear: Vec<(usize, f64)>,
}

impl QuadraticObjective {
    /// `Q` given as a dense `n × n` block on the input variables.
    pub fn dense_inputs(poly: &SnPolytope, q: &[f64]) -> Result<Self> {
        let n = poly.n();
        check_len(n * n, q.len())?;
        let idx = poly.input_idx();
        let mut quad = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = q[i * n + j];
                if v != 0.0 {
                    quad.push((idx[i], idx[j], v));
                }
            }
        }
        Ok(Self { quad, linear: Vec::new() })
    }
}

/// Writes the polytope, side constraints, and objective as a fixed-format MPS
/// file with a `QMATRIX` section.
pub fn export_problem(
    poly: &SnPolytope,
    objective: &QuadraticObjective,
    side: &crate::model::SideConstraints,
) -> Result<String> {
    mps::write(poly, objective, side)
}
