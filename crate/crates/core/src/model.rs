//! 2-SUM problem construction and evaluation metrics.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::birkhoff::{RegScheme, YMatrix};
use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg;
use crate::perm::PermutationVec;

const SYMMETRY_TOL: f64 = 1e-9;
const R_SCORE_TOL: f64 = 1e-12;

/// Symmetric, entrywise nonnegative similarity matrix (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        check_len(n * n, data.len())?;
        check_finite(&data, "similarity matrix")?;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((data[i * n + j] - data[j * n + i]).abs());
            }
        }
        if worst > SYMMETRY_TOL {
            return Err(Error::Asymmetric(worst));
        }
        for i in 0..n {
            for j in 0..n {
                let v = data[i * n + j];
                if v < 0.0 {
                    return Err(Error::NegativeEntry { row: i, col: j, value: v });
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            check_len(n, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(n, data)
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `B[π(i)][π(j)] = A[i][j]`: object `i` moves to position `π(i)`.
    pub fn reorder(&self, perm: &PermutationVec) -> Result<Self> {
        check_len(self.n, perm.len())?;
        let n = self.n;
        let p = perm.entries();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[(p[i] - 1) * n + (p[j] - 1)] = self.data[i * n + j];
            }
        }
        Ok(Self { n, data })
    }

    /// `B[i][j] = A[order[i]][order[j]]`.
    pub fn permute_symmetric(&self, order: &[usize]) -> Result<Self> {
        check_len(self.n, order.len())?;
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = self.data[order[i] * n + order[j]];
            }
        }
        Ok(Self { n, data })
    }
}

/// Matrix-free `L_A = diag(A·1) − A`, optionally regularized to `L_A − μP`
/// with `P = I − 11ᵀ/n`.
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    a: Arc<SimilarityMatrix>,
    degree: Vec<f64>,
    mu: f64,
    lambda2: Option<f64>,
}

impl LaplacianOperator {
    pub fn new(a: Arc<SimilarityMatrix>) -> Self {
        let degree = (0..a.n()).map(|i| a.row(i).iter().sum()).collect();
        Self { a, degree, mu: 0.0, lambda2: None }
    }

    pub fn from_matrix(a: SimilarityMatrix) -> Self {
        Self::new(Arc::new(a))
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn similarity(&self) -> &SimilarityMatrix {
        &self.a
    }

    pub fn similarity_arc(&self) -> Arc<SimilarityMatrix> {
        Arc::clone(&self.a)
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda2(&self) -> Option<f64> {
        self.lambda2
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidArgument(format!("μ must be finite and ≥ 0, got {mu}")));
        }
        self.mu = mu;
        Ok(self)
    }

    pub fn with_lambda2(mut self, lambda2: f64) -> Self {
        self.lambda2 = Some(lambda2);
        self
    }

    /// `out = L·x`
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let row = self.a.row(i);
            out[i] = self.degree[i] * x[i] - linalg::dot(row, x);
        }
        debug_assert_eq!(out.len(), n);
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.apply_into(x, &mut out);
        out
    }

    /// `out = (L − μP)·x = L·x − μ(x − mean(x)·1)`
    pub fn apply_q_into(&self, x: &[f64], out: &mut [f64]) {
        self.apply_into(x, out);
        if self.mu != 0.0 {
            let m = linalg::mean(x);
            for (o, xi) in out.iter_mut().zip(x) {
                *o -= self.mu * (xi - m);
            }
        }
    }

    pub fn apply_q(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.apply_q_into(x, &mut out);
        out
    }

    /// `xᵀ(L − μP)x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        linalg::dot(x, &self.apply_q(x))
    }

    /// `‖L‖_∞`, the largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n())
            .map(|i| {
                let row = self.a.row(i);
                let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
                (self.degree[i] - row[i]).abs() + off
            })
            .fold(0.0, f64::max)
    }

    /// Gershgorin shift `max_i 2·d_i`, an upper bound on the spectrum of `L`.
    pub fn gershgorin_shift(&self) -> f64 {
        (0..self.n())
            .map(|i| 2.0 * (self.degree[i] - self.a.get(i, i)))
            .fold(0.0, f64::max)
    }

    pub fn dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = -self.a.get(i, j);
            }
            out[i * n + i] += self.degree[i];
        }
        out
    }
}

/// `x_i + gap ≤ x_j` over 0-based positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideConstraint {
    pub i: usize,
    pub j: usize,
    pub gap: f64,
}

impl SideConstraint {
    pub fn violation(&self, x: &[f64]) -> f64 {
        x[self.i] + self.gap - x[self.j]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SideConstraints {
    pub entries: Vec<SideConstraint>,
}

impl SideConstraints {
    pub fn new(n: usize, entries: Vec<SideConstraint>) -> Result<Self> {
        for c in &entries {
            for idx in [c.i, c.j] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if c.i == c.j {
                return Err(Error::InvalidArgument(format!("side constraint on a single position {}", c.i)));
            }
            if !(c.gap > 0.0 && c.gap.is_finite()) {
                return Err(Error::InvalidArgument(format!("side constraint gap must be > 0, got {}", c.gap)));
            }
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// The tiebreak `x_1 + 1 ≤ x_n`.
    pub fn tiebreak(n: usize) -> SideConstraint {
        SideConstraint { i: 0, j: n - 1, gap: 1.0 }
    }

    pub fn with_tiebreak(mut self, n: usize) -> Self {
        let tb = Self::tiebreak(n);
        if n >= 2 && !self.entries.contains(&tb) {
            self.entries.push(tb);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SideConstraint> {
        self.entries.iter()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }
}

/// Which relaxation a [`TwoSumProblem`] is posed over.
#[derive(Debug, Clone)]
pub enum PolytopeChoice {
    Permutahedron,
    Birkhoff { y: YMatrix, scheme: RegScheme },
}

#[derive(Debug, Clone)]
pub struct TwoSumProblem {
    pub laplacian: LaplacianOperator,
    pub constraints: SideConstraints,
    pub polytope: PolytopeChoice,
}

impl TwoSumProblem {
    pub fn permutahedron(laplacian: LaplacianOperator, constraints: SideConstraints) -> Self {
        Self { laplacian, constraints, polytope: PolytopeChoice::Permutahedron }
    }

    pub fn n(&self) -> usize {
        self.laplacian.n()
    }

    /// `true` when `μ` is known to exceed the convexity threshold of the
    /// chosen scheme.
    pub fn mu_exceeds_limit(&self) -> bool {
        let Some(l2) = self.laplacian.lambda2() else { return false };
        let mu = self.laplacian.mu();
        match &self.polytope {
            PolytopeChoice::Permutahedron => mu >= l2 && mu > 0.0,
            PolytopeChoice::Birkhoff { y, scheme } => match scheme {
                RegScheme::Vector => mu >= l2 && mu > 0.0,
                RegScheme::Matrix => mu > 0.0 && mu >= l2 * y.min_gram_eigenvalue(),
            },
        }
    }
}

/// Canonical 2-SUM value `πᵀ L_A π`.
pub fn two_sum(l: &LaplacianOperator, perm: &PermutationVec) -> f64 {
    two_sum_values(l.similarity(), &perm.to_f64())
}

/// `Σ_{i<j} A_ij (x_i − x_j)² = xᵀ L_A x` for any vector.
pub fn two_sum_values(a: &SimilarityMatrix, x: &[f64]) -> f64 {
    let n = a.n();
    let mut total = 0.0;
    for i in 0..n {
        let row = a.row(i);
        for j in (i + 1)..n {
            let d = x[i] - x[j];
            total += row[j] * d * d;
        }
    }
    total
}

/// The double-sum convention `Σ_i Σ_j A_ij (π(i) − π(j))²`, twice [`two_sum`].
pub fn two_sum_double(l: &LaplacianOperator, perm: &PermutationVec) -> f64 {
    2.0 * two_sum(l, perm)
}

/// Number of violated Robinson inequalities `A_ij ≤ A_(i−1)j` and
/// `A_ij ≤ A_i(j+1)` over the strict lower triangle, each counted separately.
pub fn r_score(a: &SimilarityMatrix) -> usize {
    let n = a.n();
    let mut count = 0;
    for i in 1..n {
        for j in 0..i {
            let v = a.get(i, j);
            if v > a.get(i - 1, j) + R_SCORE_TOL {
                count += 1;
            }
            if v > a.get(i, j + 1) + R_SCORE_TOL {
                count += 1;
            }
        }
    }
    count
}

/// Kendall's τ-a between two permutations.
pub fn kendall_tau(p: &PermutationVec, q: &PermutationVec) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let n = p.len();
    if n < 2 {
        return Ok(1.0);
    }
    let (a, b) = (p.entries(), q.entries());
    let mut score: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (a[i] as i64 - a[j] as i64).signum() * (b[i] as i64 - b[j] as i64).signum();
            score += s;
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// `‖π − (n+1)/2·1‖²` for any permutation: `n(n²−1)/12`.
pub fn centered_permutation_norm_sq(n: usize) -> f64 {
    let n = n as f64;
    n * (n * n - 1.0) / 12.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    /// Set when `λ₂ ≈ 0`: the similarity graph is disconnected and the bound is trivial.
    pub disconnected: bool,
}

/// `λ₂ · n(n²−1)/12`, a lower bound on `πᵀLπ` over all permutations.
pub fn spectral_lower_bound(l: &LaplacianOperator) -> Result<LowerBound> {
    let lambda2 = l
        .lambda2()
        .ok_or_else(|| Error::InvalidArgument("λ₂ has not been computed for this Laplacian".into()))?;
    let scale = l.norm_inf().max(f64::MIN_POSITIVE);
    let disconnected = lambda2 <= 1e-10 * scale;
    let value = if disconnected { 0.0 } else { lambda2 * centered_permutation_norm_sq(l.n()) };
    Ok(LowerBound { value, disconnected })
}

/// Draws `count` distinct ordering constraints `x_i + (π(j) − π(i)) ≤ x_j`
/// with `π(j) > π(i)`, all satisfied with equality by `π` itself.
pub fn sample_ordering_constraints<R: Rng + ?Sized>(
    truth: &PermutationVec,
    count: usize,
    rng: &mut R,
) -> Result<SideConstraints> {
    let n = truth.len();
    let max_pairs = n * n.saturating_sub(1) / 2;
    if count > max_pairs {
        return Err(Error::InvalidArgument(format!(
            "{count} ordering constraints requested but only {max_pairs} pairs exist"
        )));
    }
    let p = truth.entries();
    let mut seen = HashSet::with_capacity(count);
    let mut entries = Vec::with_capacity(count);
    while entries.len() < count {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let (i, j) = if p[a] < p[b] { (a, b) } else { (b, a) };
        if seen.insert((i, j)) {
            entries.push(SideConstraint { i, j, gap: (p[j] - p[i]) as f64 });
        }
    }
    Ok(SideConstraints { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::all_permutations;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path3() -> SimilarityMatrix {
        SimilarityMatrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap()
    }

    fn random_similarity(n: usize, rng: &mut ChaCha8Rng) -> SimilarityMatrix {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let v: f64 = rng.random();
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        SimilarityMatrix::new(n, data).unwrap()
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            SimilarityMatrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]),
            Err(Error::Asymmetric(_))
        ));
        assert!(matches!(
            SimilarityMatrix::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]),
            Err(Error::NegativeEntry { .. })
        ));
    }

    #[test]
    fn laplacian_examples() {
        let l = LaplacianOperator::from_matrix(SimilarityMatrix::zeros(4));
        assert_eq!(l.apply(&[1.0, -2.0, 3.0, 0.5]), vec![0.0; 4]);

        let a = SimilarityMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let l = LaplacianOperator::from_matrix(a);
        assert_eq!(l.apply(&[1.0, 2.0]), vec![-1.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = LaplacianOperator::from_matrix(random_similarity(9, &mut rng));
        let ones = l.apply(&[1.0; 9]);
        let scale = linalg::norm2(l.degree());
        assert!(linalg::norm_inf(&ones) <= 1e-8 * scale);
    }

    #[test]
    fn two_sum_examples() {
        let l = LaplacianOperator::from_matrix(SimilarityMatrix::zeros(3));
        assert_eq!(two_sum(&l, &PermutationVec::identity(3)), 0.0);

        let a = SimilarityMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let l = LaplacianOperator::from_matrix(a);
        let id = PermutationVec::identity(2);
        assert_eq!(two_sum(&l, &id), 1.0);
        assert_eq!(two_sum_double(&l, &id), 2.0);
    }

    #[test]
    fn two_sum_matches_quadratic_form_and_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..8 {
            let l = LaplacianOperator::from_matrix(random_similarity(n, &mut rng));
            for p in all_permutations(n).step_by(7) {
                let direct = two_sum(&l, &p);
                let quad = l.quad_form(&p.to_f64());
                assert!((direct - quad).abs() <= 1e-9 * (1.0 + direct));
                assert!((direct - two_sum(&l, &p.reversed())).abs() <= 1e-9 * (1.0 + direct));
                assert!(direct >= 0.0);
            }
        }
    }

    #[test]
    fn shift_identity_and_regularized_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let l = LaplacianOperator::from_matrix(random_similarity(n, &mut rng));
        let p = PermutationVec::identity(n);
        let x = p.to_f64();
        let shifted: Vec<f64> = x.iter().map(|v| v - (n as f64 + 1.0) / 2.0).collect();
        assert!((l.quad_form(&x) - l.quad_form(&shifted)).abs() <= 1e-8 * l.quad_form(&x));

        let mu = 0.37;
        let lq = l.clone().with_mu(mu).unwrap();
        for _ in 0..20 {
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut py = y.clone();
            linalg::center(&mut py);
            let expected = l.quad_form(&y) - mu * linalg::dot(&py, &py);
            assert!((lq.quad_form(&y) - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn r_score_examples() {
        // R-matrix by construction: A_ij = n - |i - j|.
        let n = 6;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (n as f64) - (i as f64 - j as f64).abs()).collect())
            .collect();
        assert_eq!(r_score(&SimilarityMatrix::from_rows(&rows).unwrap()), 0);

        // A_31 > A_21 (1-based), everything else monotone.
        let a = SimilarityMatrix::from_rows(&[
            vec![3.0, 1.0, 2.0],
            vec![1.0, 3.0, 2.0],
            vec![2.0, 2.0, 3.0],
        ])
        .unwrap();
        assert_eq!(r_score(&a), 1);

        let mut eye = vec![0.0; 25];
        for i in 0..5 {
            eye[i * 5 + i] = 1.0;
        }
        assert_eq!(r_score(&SimilarityMatrix::new(5, eye).unwrap()), 0);
    }

    #[test]
    fn kendall_examples() {
        let id = PermutationVec::identity(5);
        assert_eq!(kendall_tau(&id, &id).unwrap(), 1.0);
        assert_eq!(kendall_tau(&id.reversed(), &id).unwrap(), -1.0);
        let p = PermutationVec::new(vec![1, 3, 2]).unwrap();
        let q = PermutationVec::identity(3);
        assert!((kendall_tau(&p, &q).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&p, &id).is_err());
    }

    #[test]
    fn kendall_is_symmetric() {
        let ps: Vec<_> = all_permutations(5).collect();
        for a in ps.iter().step_by(13) {
            for b in ps.iter().step_by(17) {
                assert_eq!(kendall_tau(a, b).unwrap(), kendall_tau(b, a).unwrap());
            }
        }
    }

    #[test]
    fn lower_bound_constant_and_zero_graph() {
        assert_eq!(centered_permutation_norm_sq(3), 2.0);
        // 14 − 12 from the raw moment identities.
        let n = 3.0f64;
        assert_eq!(n * (n + 1.0) * (2.0 * n + 1.0) / 6.0 - n * (n + 1.0).powi(2) / 4.0, 2.0);
        let l = LaplacianOperator::from_matrix(SimilarityMatrix::zeros(4)).with_lambda2(0.0);
        let lb = spectral_lower_bound(&l).unwrap();
        assert_eq!(lb.value, 0.0);
        assert!(lb.disconnected);
        assert!(spectral_lower_bound(&LaplacianOperator::from_matrix(path3())).is_err());
    }

    #[test]
    fn ordering_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = PermutationVec::new(vec![4, 2, 5, 1, 3]).unwrap();
        assert!(sample_ordering_constraints(&truth, 0, &mut rng).unwrap().is_empty());
        let cs = sample_ordering_constraints(&truth, 10, &mut rng).unwrap();
        assert_eq!(cs.len(), 10);
        let x = truth.to_f64();
        for c in cs.iter() {
            assert_eq!(c.violation(&x), 0.0);
        }
        assert!(sample_ordering_constraints(&truth, 11, &mut rng).is_err());
    }

    #[test]
    fn ordering_constraints_golden() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let truth = PermutationVec::new(vec![3, 1, 4, 2, 6, 5]).unwrap();
        let cs = sample_ordering_constraints(&truth, 4, &mut rng).unwrap();
        let got: Vec<(usize, usize, f64)> = cs.iter().map(|c| (c.i, c.j, c.gap)).collect();
        assert_eq!(got, GOLDEN_CONSTRAINTS.to_vec());
    }

    const GOLDEN_CONSTRAINTS: [(usize, usize, f64); 4] = [(1, 4, 5.0), (2, 5, 1.0), (1, 2, 3.0), (0, 5, 2.0)];
}
