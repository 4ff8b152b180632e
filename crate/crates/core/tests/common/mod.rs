//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snperm_core::perm::all_permutations;
use snperm_core::{PermutationVec, SimilarityMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric nonnegative matrix with zero diagonal.
pub fn random_similarity(n: usize, rng: &mut ChaCha8Rng) -> SimilarityMatrix {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rng.random();
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    SimilarityMatrix::new(n, a).unwrap()
}

/// `Σ_{i<j} A_ij (π_i − π_j)²` written out directly.
pub fn pair_sum(a: &SimilarityMatrix, p: &[f64]) -> f64 {
    let n = a.n();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += a.get(i, j) * (p[i] - p[j]).powi(2);
        }
    }
    s
}

pub fn brute_two_sum(a: &SimilarityMatrix, tiebreak: bool) -> (f64, PermutationVec) {
    let mut best = (f64::INFINITY, PermutationVec::identity(a.n()));
    for p in all_permutations(a.n()) {
        if tiebreak && !p.satisfies_tiebreak() {
            continue;
        }
        let v = pair_sum(a, &p.to_f64());
        if v < best.0 {
            best = (v, p);
        }
    }
    best
}

pub fn brute_linear(c: &[f64], tiebreak: bool) -> (f64, PermutationVec) {
    let mut best = (f64::INFINITY, PermutationVec::identity(c.len()));
    for p in all_permutations(c.len()) {
        if tiebreak && !p.satisfies_tiebreak() {
            continue;
        }
        let v: f64 = c.iter().zip(p.entries()).map(|(a, &b)| a * b as f64).sum();
        if v < best.0 {
            best = (v, p);
        }
    }
    best
}

pub fn dense_laplacian(a: &SimilarityMatrix) -> DMatrix<f64> {
    let n = a.n();
    DMatrix::from_fn(n, n, |i, j| if i == j { (0..n).filter(|&k| k != i).map(|k| a.get(i, k)).sum() } else { -a.get(i, j) })
}

/// Eigenvalues of the dense Laplacian, ascending.
pub fn laplacian_spectrum(a: &SimilarityMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(dense_laplacian(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Non-increasing isotonic regression by pool-adjacent-violators.
fn isotonic_nonincreasing(w: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in w {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64, c1 + c2);
        }
    }
    blocks.into_iter().flat_map(|(m, c)| std::iter::repeat_n(m, c)).collect()
}

/// Euclidean projection onto the permutahedron of `(1, …, n)`.
pub fn project_permutahedron(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| z[b].total_cmp(&z[a]));
    let w: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| z[i] - (n - k) as f64).collect();
    let iso = isotonic_nonincreasing(&w);
    let mut x = vec![0.0; n];
    for (k, &i) in idx.iter().enumerate() {
        x[i] = z[i] - iso[k];
    }
    x
}

/// Projection onto `{x : x₀ + 1 ≤ x_{n−1}}`.
fn project_tiebreak(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut x = z.to_vec();
    let viol = x[0] + 1.0 - x[n - 1];
    if viol > 0.0 {
        x[0] -= viol / 2.0;
        x[n - 1] += viol / 2.0;
    }
    x
}

/// Dykstra's alternating projections onto the permutahedron ∩ tiebreak halfspace.
pub fn project_tiebroken(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut x = z.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..2000 {
        let yin: Vec<f64> = (0..n).map(|i| x[i] + p[i]).collect();
        let y = project_permutahedron(&yin);
        for i in 0..n {
            p[i] = yin[i] - y[i];
        }
        let xin: Vec<f64> = (0..n).map(|i| y[i] + q[i]).collect();
        let xn = project_tiebreak(&xin);
        for i in 0..n {
            q[i] = xin[i] - xn[i];
        }
        let change: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = xn;
        if change < 1e-13 {
            break;
        }
    }
    x
}

/// `min xᵀQx` over the (optionally tie-broken) permutahedron by accelerated
/// projected gradient, `Q` dense row-major and PSD.
pub fn qp_oracle(q: &[f64], n: usize, tiebreak: bool) -> (f64, Vec<f64>) {
    let qm = DMatrix::from_row_slice(n, n, q);
    let lip = 2.0 * SymmetricEigen::new(qm.clone()).eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let proj = |z: &[f64]| if tiebreak { project_tiebroken(z) } else { project_permutahedron(z) };
    let f = |x: &[f64]| {
        let xv = nalgebra::DVector::from_column_slice(x);
        (xv.transpose() * &qm * &xv)[(0, 0)]
    };
    let mut x = proj(&(1..=n).map(|i| i as f64).collect::<Vec<_>>());
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..20000 {
        let yv = nalgebra::DVector::from_column_slice(&y);
        let g = (&qm * &yv) * 2.0;
        let step: Vec<f64> = (0..n).map(|i| y[i] - g[i] / lip).collect();
        let xn = proj(&step);
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / tn;
        y = (0..n).map(|i| xn[i] + mom * (xn[i] - x[i])).collect();
        let change: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = xn;
        t = tn;
        if change < 1e-12 {
            break;
        }
    }
    (f(&x), x)
}

/// Random point of the permutahedron as a convex combination of random permutations.
pub fn random_permutahedron_point(n: usize, terms: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand::seq::SliceRandom;
    let mut w: Vec<f64> = (0..terms).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let mut x = vec![0.0; n];
    for wk in w {
        let mut p: Vec<usize> = (1..=n).collect();
        p.shuffle(rng);
        for i in 0..n {
            x[i] += wk * p[i] as f64;
        }
    }
    x
}

/// Central-difference gradient.
pub fn finite_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let old = xp[i];
        xp[i] = old + h;
        let fp = f(&xp);
        xp[i] = old - h;
        let fm = f(&xp);
        xp[i] = old;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
