//! Fiedler pairs of graph Laplacians and the spectral seriation baseline.
//!
//! `λ₂` is computed by Lanczos on `L` restricted to `1^⊥`, with full
//! reorthogonalization and explicit restarts from the current Ritz vector.
//! If the restarts run out, shifted power iteration on `σI − L` (with the
//! Gershgorin shift `σ`) takes over.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, center, dot, norm2};
use crate::model::{LaplacianOperator, SimilarityMatrix};
use crate::perm::PermutationVec;
use crate::recover::order_round;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20_000;
const KRYLOV_MAX: usize = 120;
const START_SEED: u64 = 0x51ed_1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiedlerResult {
    pub lambda2: f64,
    /// Unit norm, orthogonal to `1`; sign fixed so the first significant entry is positive.
    pub vector: Vec<f64>,
    /// Laplacian applications used.
    pub iterations: usize,
    /// `‖L·y − λ₂·y‖₂`
    pub residual: f64,
    /// `λ₂ ≈ 0` relative to `‖L‖_∞`: the similarity graph is disconnected.
    pub disconnected: bool,
}

pub fn fiedler(l: &LaplacianOperator, tol: f64, max_iter: usize) -> Result<FiedlerResult> {
    let n = l.n();
    if n < 2 {
        return Err(Error::InvalidArgument("the Fiedler pair needs at least two vertices".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let scale = l.norm_inf().max(f64::MIN_POSITIVE);
    let target = tol * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED ^ n as u64);
    let mut start = random_centered(n, &mut rng);
    let mut used = 0;
    let dim = (n - 1).min(KRYLOV_MAX);

    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    while used < max_iter {
        let steps = dim.min(max_iter - used);
        let (theta, y, matvecs) = lanczos_smallest(l, &start, steps, &mut rng);
        used += matvecs;
        let res = residual(l, &y, theta);
        let better = best.as_ref().is_none_or(|b| res < b.2);
        if better {
            best = Some((theta, y.clone(), res));
        }
        if res <= target {
            break;
        }
        start = y;
    }
    let (mut lambda, mut y, mut res) = best.expect("at least one Lanczos pass runs");
    if res > target {
        let (pl, py, pres, pm) = power_fallback(l, &y, target, max_iter);
        used += pm;
        if pres < res {
            (lambda, y, res) = (pl, py, pres);
        }
        if res > target {
            return Err(Error::NotConverged { iterations: used });
        }
    }
    fix_sign(&mut y);
    let lambda2 = lambda.max(0.0);
    Ok(FiedlerResult { lambda2, vector: y, iterations: used, residual: res, disconnected: lambda2 <= 1e-10 * scale })
}

pub fn fiedler_default(l: &LaplacianOperator) -> Result<FiedlerResult> {
    fiedler(l, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Returns `L` with its `λ₂` cached, as needed by the lower bound and μ helpers.
pub fn with_lambda2(l: LaplacianOperator) -> Result<(LaplacianOperator, FiedlerResult)> {
    let f = fiedler_default(&l)?;
    Ok((l.with_lambda2(f.lambda2), f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralOrder {
    pub permutation: PermutationVec,
    pub fiedler: FiedlerResult,
    /// Set when the Fiedler vector has tied entries, so part of the order
    /// comes from the index tie rule alone.
    pub degenerate: bool,
}

/// Ranks objects by their Fiedler vector entry, ascending, ties by index.
pub fn spectral_order(a: &SimilarityMatrix) -> Result<SpectralOrder> {
    spectral_order_with(&LaplacianOperator::from_matrix(a.clone()), DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn spectral_order_with(l: &LaplacianOperator, tol: f64, max_iter: usize) -> Result<SpectralOrder> {
    let f = fiedler(l, tol, max_iter)?;
    let permutation = order_round(&f.vector)?;
    let degenerate = has_ties(&f.vector);
    Ok(SpectralOrder { permutation, fiedler: f, degenerate })
}

pub(crate) fn has_ties(y: &[f64]) -> bool {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    s.windows(2).any(|w| w[1] - w[0] <= 1e-12 * scale)
}

fn random_centered(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    center(&mut v);
    v
}

fn residual(l: &LaplacianOperator, y: &[f64], theta: f64) -> f64 {
    let mut r = l.apply(y);
    axpy(-theta, y, &mut r);
    norm2(&r)
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        center(w);
        for v in basis {
            let c = dot(w, v);
            axpy(-c, v, w);
        }
    }
}

/// One Lanczos pass of at most `steps` vectors from `start`; returns the
/// smallest Ritz pair in `1^⊥` and the number of Laplacian applications.
fn lanczos_smallest(l: &LaplacianOperator, start: &[f64], steps: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<f64>, usize) {
    let n = l.n();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut q = start.to_vec();
    orthogonalize(&mut q, &[]);
    let mut nq = norm2(&q);
    if nq == 0.0 {
        q = random_centered(n, rng);
        nq = norm2(&q);
    }
    q.iter_mut().for_each(|x| *x /= nq);
    let scale = l.norm_inf().max(f64::MIN_POSITIVE);
    let mut w = vec![0.0; n];
    let mut matvecs = 0;
    for j in 0..steps.max(1) {
        l.apply_into(&q, &mut w);
        matvecs += 1;
        let a = dot(&q, &w);
        alpha.push(a);
        basis.push(q.clone());
        if j + 1 == steps.max(1) || basis.len() == n - 1 {
            break;
        }
        orthogonalize(&mut w, &basis);
        let mut b = norm2(&w);
        if b <= 1e-12 * scale {
            // invariant subspace found: continue with a fresh direction
            let mut fresh = random_centered(n, rng);
            orthogonalize(&mut fresh, &basis);
            let nf = norm2(&fresh);
            if nf <= 1e-10 {
                break;
            }
            w = fresh.iter().map(|x| x / nf).collect();
            b = 0.0;
            q.clone_from(&w);
        } else {
            q = w.iter().map(|x| x / b).collect();
        }
        beta.push(b);
    }
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (k, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("tridiagonal matrix is nonempty");
    let s = eig.eigenvectors.column(k);
    let mut y = vec![0.0; n];
    for (i, v) in basis.iter().enumerate() {
        axpy(s[i], v, &mut y);
    }
    center(&mut y);
    let ny = norm2(&y);
    y.iter_mut().for_each(|x| *x /= ny);
    (theta, y, matvecs)
}

/// Shifted power iteration on `σI − L` in `1^⊥`.
fn power_fallback(l: &LaplacianOperator, start: &[f64], target: f64, max_iter: usize) -> (f64, Vec<f64>, f64, usize) {
    let sigma = l.gershgorin_shift();
    let mut x = start.to_vec();
    let mut lx = vec![0.0; x.len()];
    let mut theta = 0.0;
    let mut res = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        l.apply_into(&x, &mut lx);
        it += 1;
        theta = dot(&x, &lx);
        let mut r = lx.clone();
        axpy(-theta, &x, &mut r);
        res = norm2(&r);
        if res <= target {
            break;
        }
        for (xi, li) in x.iter_mut().zip(&lx) {
            *xi = sigma * *xi - li;
        }
        center(&mut x);
        let nx = norm2(&x);
        x.iter_mut().for_each(|v| *v /= nx);
    }
    (theta, x, res, it)
}

fn fix_sign(y: &mut [f64]) {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = y.iter().find(|v| v.abs() > 1e-8 * scale) {
        if *first < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap(rows: &[Vec<f64>]) -> LaplacianOperator {
        LaplacianOperator::from_matrix(SimilarityMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn path_graph() {
        let l = lap(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
        let f = fiedler_default(&l).unwrap();
        assert!((f.lambda2 - 1.0).abs() < 1e-10);
        let s = 1.0 / 2f64.sqrt();
        for (a, b) in f.vector.iter().zip([s, 0.0, -s]) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(!f.disconnected);
    }

    #[test]
    fn complete_graph() {
        let l = lap(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]);
        let f = fiedler_default(&l).unwrap();
        assert!((f.lambda2 - 3.0).abs() < 1e-10);
        assert!(f.vector.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn disconnected_pair_is_flagged() {
        let l = lap(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let f = fiedler_default(&l).unwrap();
        assert_eq!(f.lambda2, 0.0);
        assert!(f.disconnected);
        assert!((norm2(&f.vector) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn single_vertex_is_rejected() {
        assert!(fiedler_default(&lap(&[vec![0.0]])).is_err());
    }

    #[test]
    fn sorted_fiedler_vector_gives_identity() {
        // path 1–2–3–4 with the sign fixed so entry 0 is positive: descending
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if (i as i64 - j as i64).abs() == 1 { 1.0 } else { 0.0 }).collect())
            .collect();
        let o = spectral_order(&SimilarityMatrix::from_rows(&rows).unwrap()).unwrap();
        assert_eq!(o.permutation.entries(), &[4, 3, 2, 1]);
        assert!(!o.degenerate);
    }

    #[test]
    fn ties_are_reported() {
        assert!(has_ties(&[0.5, 0.5, -1.0]));
        assert!(!has_ties(&[0.5, 0.0, -0.5]));
    }
}
