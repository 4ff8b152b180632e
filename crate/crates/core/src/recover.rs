//! Turning relaxed points back into permutations.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::birkhoff::DoublyStochastic;
use crate::error::{check_finite, Error, Result};
use crate::model::{two_sum, LaplacianOperator};
use crate::perm::PermutationVec;
use crate::snpoly::permutahedron_contains;

pub const DEFAULT_VARIANCE: f64 = 0.5;

/// Rank vector of `x`: the smallest entry gets 1. Ties go to the lower index first.
pub fn order_round(x: &[f64]) -> Result<PermutationVec> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("rounding input"));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut entries = vec![0; x.len()];
    for (rank, &i) in idx.iter().enumerate() {
        entries[i] = rank + 1;
    }
    Ok(PermutationVec::from_entries_unchecked(entries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledRounding {
    pub permutation: PermutationVec,
    pub two_sum: f64,
    /// `0` for the unperturbed rounding, otherwise the 1-based trial that won.
    pub trial: usize,
}

/// Rounds `x` and `trials` Gaussian perturbations of it (i.i.d. `N(0, variance)`
/// per coordinate), keeping the permutation with the smallest 2-SUM value.
pub fn sample_round<R: Rng + ?Sized>(
    x: &[f64],
    trials: usize,
    variance: f64,
    rng: &mut R,
    l: &LaplacianOperator,
) -> Result<SampledRounding> {
    check_finite(x, "rounding input")?;
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one rounding trial is required".into()));
    }
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::InvalidArgument(format!("variance must be finite and ≥ 0, got {variance}")));
    }
    let base = order_round(x)?;
    let mut best = SampledRounding { two_sum: two_sum(l, &base), permutation: base, trial: 0 };
    let noise = Normal::new(0.0, variance.sqrt()).expect("σ is finite and ≥ 0");
    let mut y = x.to_vec();
    for t in 1..=trials {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + noise.sample(rng);
        }
        let p = order_round(&y)?;
        let v = two_sum(l, &p);
        if v < best.two_sum {
            best = SampledRounding { permutation: p, two_sum: v, trial: t };
        }
    }
    Ok(best)
}

/// Birkhoff-side rounding: order `Π·v` for random sorted `v`, keeping the best.
pub fn sample_round_birkhoff<R: Rng + ?Sized>(
    m: &DoublyStochastic,
    trials: usize,
    rng: &mut R,
    l: &LaplacianOperator,
) -> Result<SampledRounding> {
    let n = m.n();
    let base = order_round(&m.project_to_vector())?;
    let mut best = SampledRounding { two_sum: two_sum(l, &base), permutation: base, trial: 0 };
    for t in 1..=trials {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        v.sort_by(f64::total_cmp);
        let x: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m.get(i, j) * v[j]).sum()).collect();
        let p = order_round(&x)?;
        let val = two_sum(l, &p);
        if val < best.two_sum {
            best = SampledRounding { permutation: p, two_sum: val, trial: t };
        }
    }
    Ok(best)
}

/// `x = Σ weights[i] · perms[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub weights: Vec<f64>,
    pub perms: Vec<PermutationVec>,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.perms.first().map_or(0, |p| p.len());
        let mut x = vec![0.0; n];
        for (w, p) in self.weights.iter().zip(&self.perms) {
            for (xi, &e) in x.iter_mut().zip(p.entries()) {
                *xi += w * e as f64;
            }
        }
        x
    }
}

/// Greedy peeling: take the vertex co-ordered with the residual and the
/// largest weight that keeps the rest inside the shrunken permutahedron.
pub fn decompose(x: &[f64], tol: f64) -> Result<Decomposition> {
    let n = x.len();
    check_finite(x, "decomposition input")?;
    if n == 0 {
        return Err(Error::InvalidArgument("cannot decompose an empty vector".into()));
    }
    let v: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let report = permutahedron_contains(x, &v, tol)?;
    if !report.member {
        return Err(Error::NotInPermutahedron(format!(
            "prefix slack {:.3e}, sum residual {:.3e}",
            report.worst_prefix_slack, report.sum_residual
        )));
    }
    // top-k sums of v
    let big_v: Vec<f64> = (1..=n).map(|k| (0..k).map(|i| (n - i) as f64).sum()).collect();
    let limit = n + 1;
    let eps = 1e-13 * n as f64 * n as f64;
    let mut r = x.to_vec();
    let mut t = 1.0f64;
    let mut weights = Vec::new();
    let mut perms = Vec::new();
    while t > eps {
        if weights.len() == limit {
            return Err(Error::DecompositionTooLong { limit });
        }
        let pi = order_round(&r)?;
        let pf = pi.to_f64();
        let mut lambda = t;
        for _ in 0..4 * n + 8 {
            let (h, k, set) = worst_prefix(&r, &pf, lambda, t, &big_v);
            if h >= -eps {
                break;
            }
            let sr: f64 = set.iter().map(|&i| r[i]).sum();
            let sp: f64 = set.iter().map(|&i| pf[i]).sum();
            let denom = big_v[k] - sp;
            if denom <= 0.0 {
                break;
            }
            let next = ((t * big_v[k] - sr) / denom).clamp(0.0, lambda);
            if next >= lambda {
                break;
            }
            lambda = next;
        }
        if lambda <= 0.0 {
            return Err(Error::NotInPermutahedron("no admissible step from the residual".into()));
        }
        for (ri, p) in r.iter_mut().zip(&pf) {
            *ri -= lambda * p;
        }
        t -= lambda;
        weights.push(lambda);
        perms.push(pi);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Decomposition { weights, perms })
}

/// `min_k [(t − λ)V_k − topk(r − λπ)]` with the minimizing `k` (0-based) and its index set.
fn worst_prefix(r: &[f64], pi: &[f64], lambda: f64, t: f64, big_v: &[f64]) -> (f64, usize, Vec<usize>) {
    let n = r.len();
    let y: Vec<f64> = r.iter().zip(pi).map(|(a, b)| a - lambda * b).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let mut best = (f64::INFINITY, 0);
    let mut s = 0.0;
    for k in 0..n.saturating_sub(1) {
        s += y[idx[k]];
        let slack = (t - lambda) * big_v[k] - s;
        if slack < best.0 {
            best = (slack, k);
        }
    }
    if n <= 1 {
        return (0.0, 0, Vec::new());
    }
    (best.0, best.1, idx[..=best.1].to_vec())
}
