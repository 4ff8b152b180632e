//! Birkhoff-polytope baseline: doubly stochastic matrices, the assignment
//! oracle, and the matrix/vector regularized objectives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::model::LaplacianOperator;
use crate::perm::PermutationVec;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Dense row-major `n × n` doubly stochastic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublyStochastic {
    n: usize,
    entries: Vec<f64>,
}

impl DoublyStochastic {
    pub fn new(n: usize, entries: Vec<f64>, tol: f64) -> Result<Self> {
        check_len(n * n, entries.len())?;
        check_finite(&entries, "doubly stochastic matrix")?;
        if let Some((k, &v)) = entries.iter().enumerate().find(|(_, &v)| v < -tol) {
            return Err(Error::NegativeEntry { row: k / n, col: k % n, value: v });
        }
        for i in 0..n {
            let row: f64 = entries[i * n..(i + 1) * n].iter().sum();
            let col: f64 = (0..n).map(|r| entries[r * n + i]).sum();
            if (row - 1.0).abs() > tol || (col - 1.0).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "row/column {i} sums to {row}/{col}, expected 1"
                )));
            }
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_permutation(&PermutationVec::identity(n))
    }

    pub fn barycenter(n: usize) -> Self {
        Self { n, entries: vec![1.0 / n as f64; n * n] }
    }

    /// The permutation matrix `Π` with `Π·π_I = perm`, i.e. `Π[i][π(i)] = 1`.
    pub fn from_permutation(perm: &PermutationVec) -> Self {
        let n = perm.len();
        let mut entries = vec![0.0; n * n];
        for (i, &c) in perm.entries().iter().enumerate() {
            entries[i * n + c - 1] = 1.0;
        }
        Self { n, entries }
    }

    pub(crate) fn from_raw(n: usize, entries: Vec<f64>) -> Self {
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// `x = Π·π_I`, i.e. `x_i = Σ_j j·Π_ij`.
    pub fn project_to_vector(&self) -> Vec<f64> {
        project_matrix_to_vector(self.n, &self.entries)
    }
}

pub(crate) fn project_matrix_to_vector(n: usize, entries: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| entries[i * n..(i + 1) * n].iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum())
        .collect()
}

/// Sinkhorn-normalized random positive matrix.
pub fn random_doubly_stochastic<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DoublyStochastic {
    let mut m: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() + 1e-3).collect();
    sinkhorn(n, &mut m, 100, 1e-10);
    DoublyStochastic { n, entries: m }
}

/// Alternating row/column normalization. Returns the final max deviation of
/// any row or column sum from 1.
pub fn sinkhorn(n: usize, m: &mut [f64], max_iter: usize, tol: f64) -> f64 {
    let mut dev = f64::INFINITY;
    for _ in 0..max_iter {
        for i in 0..n {
            let s: f64 = m[i * n..(i + 1) * n].iter().sum();
            m[i * n..(i + 1) * n].iter_mut().for_each(|v| *v /= s);
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| m[i * n + j]).sum();
            (0..n).for_each(|i| m[i * n + j] /= s);
        }
        dev = (0..n)
            .map(|i| (m[i * n..(i + 1) * n].iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        if dev <= tol {
            break;
        }
    }
    dev
}

/// `p` column vectors of length `n` (`Y ∈ R^{n×p}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YMatrix {
    n: usize,
    columns: Vec<Vec<f64>>,
}

impl YMatrix {
    pub fn new(n: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidArgument("Y needs at least one column".into()));
        }
        for col in &columns {
            check_len(n, col.len())?;
            check_finite(col, "Y column")?;
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument("Y column has repeated entries".into()));
            }
        }
        Ok(Self { n, columns })
    }

    /// `Y = π_I`, `p = 1`.
    pub fn identity_column(n: usize) -> Self {
        Self { n, columns: vec![(1..=n).map(|v| v as f64).collect()] }
    }

    /// `p` columns, each a sorted vector of i.i.d. uniform `[0,1]` draws.
    pub fn sorted_uniform<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Self {
        let columns = (0..p)
            .map(|_| {
                let mut c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                c.sort_by(f64::total_cmp);
                c
            })
            .collect();
        Self { n, columns }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Dense `Y·Yᵀ`.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.n;
        let mut g = vec![0.0; n * n];
        for c in &self.columns {
            for i in 0..n {
                for j in 0..n {
                    g[i * n + j] += c[i] * c[j];
                }
            }
        }
        g
    }

    /// Smallest eigenvalue of `Y·Yᵀ` (zero whenever `p < n`).
    pub fn min_gram_eigenvalue(&self) -> f64 {
        let n = self.n;
        let g = nalgebra::DMatrix::from_row_slice(n, n, &self.gram());
        let eig = g.symmetric_eigenvalues();
        eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegScheme {
    /// `(1/p)·Tr(YᵀΠᵀLΠY) − (μ/p)·‖PΠ‖²_F`
    Matrix,
    /// `(1/p)·Tr(YᵀΠᵀ(L − μP)ΠY)`
    Vector,
}

/// Largest `μ` keeping the objective convex: `λ₂` for the vector scheme and
/// `λ₂·λ₁(YYᵀ)` for the matrix scheme.
pub fn mu_limit(scheme: RegScheme, lambda2: f64, y: &YMatrix) -> f64 {
    match scheme {
        RegScheme::Vector => lambda2,
        RegScheme::Matrix => lambda2 * y.min_gram_eigenvalue(),
    }
}

/// Objective value and gradient (row-major `n × n`) of the regularized
/// Birkhoff objective at `Π` (given as raw row-major entries). `μ` is taken
/// from the Laplacian.
pub fn matrix_reg_objective(
    pi: &[f64],
    y: &YMatrix,
    l: &LaplacianOperator,
    scheme: RegScheme,
) -> Result<(f64, Vec<f64>)> {
    let n = l.n();
    check_len(n * n, pi.len())?;
    check_len(n, y.n())?;
    let p = y.p() as f64;
    let mu = l.mu();
    let plain = l.clone().with_mu(0.0)?;
    let op = match scheme {
        RegScheme::Vector => l,
        RegScheme::Matrix => &plain,
    };

    // LY[:, k] = op · (Π y_k), accumulated into G = (2/p) Σ_k LY_k y_kᵀ.
    let mut value = 0.0;
    let mut grad = vec![0.0; n * n];
    let mut m = vec![0.0; n];
    let mut lm = vec![0.0; n];
    for col in y.columns() {
        for i in 0..n {
            m[i] = pi[i * n..(i + 1) * n].iter().zip(col).map(|(a, b)| a * b).sum();
        }
        op.apply_q_into(&m, &mut lm);
        value += crate::linalg::dot(&m, &lm);
        for i in 0..n {
            let s = 2.0 * lm[i] / p;
            for j in 0..n {
                grad[i * n + j] += s * col[j];
            }
        }
    }
    value /= p;

    if scheme == RegScheme::Matrix && mu != 0.0 {
        // ‖PΠ‖²_F with P centering each column of Π.
        let mut pen = 0.0;
        for j in 0..n {
            let cm: f64 = (0..n).map(|i| pi[i * n + j]).sum::<f64>() / n as f64;
            for i in 0..n {
                let c = pi[i * n + j] - cm;
                pen += c * c;
                grad[i * n + j] -= 2.0 * mu / p * c;
            }
        }
        value -= mu / p * pen;
    }
    Ok((value, grad))
}

/// Minimizes `⟨C, Π⟩` over permutation matrices. The returned permutation
/// lists the (1-based) column assigned to each row. Among optimal
/// assignments the lexicographically smallest one is returned.
pub fn assignment_lmo(n: usize, cost: &[f64]) -> Result<PermutationVec> {
    check_len(n * n, cost.len())?;
    if cost.iter().any(|c| c.is_nan()) {
        return Err(Error::NonFinite("assignment cost"));
    }
    check_finite(cost, "assignment cost")?;
    if n == 0 {
        return Ok(PermutationVec::identity(0));
    }
    let (mut row_to_col, u, v) = hungarian(n, cost);
    lex_smallest_optimal(n, cost, &u, &v, &mut row_to_col);
    Ok(PermutationVec::from_entries_unchecked(row_to_col.iter().map(|c| c + 1).collect()))
}

/// Shortest-augmenting-path Hungarian method with row/column potentials.
/// Returns the 0-based column of each row and the potentials.
fn hungarian(n: usize, cost: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // col_row[j] = row (1-based) matched to column j (1-based); 0 = free.
    let mut col_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[col_row[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites an optimal matching into the lexicographically smallest optimal
/// one by fixing rows in order and rerouting through zero-reduced-cost edges.
fn lex_smallest_optimal(n: usize, cost: &[f64], u: &[f64], v: &[f64], row_to_col: &mut [usize]) {
    let scale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-12 * scale * n as f64;
    let tight = |i: usize, j: usize| (cost[i * n + j] - u[i] - v[j]).abs() <= tol;
    let mut col_to_row = vec![0; n];
    for (i, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = i;
    }
    let mut col_fixed = vec![false; n];
    for i in 0..n {
        let current = row_to_col[i];
        for j in 0..current {
            if col_fixed[j] || !tight(i, j) {
                continue;
            }
            // Row `r` holds `j`; find an alternating path that hands `current` to someone.
            let r = col_to_row[j];
            if let Some(path) = reroute(n, r, i, j, current, &col_fixed, &tight, &col_to_row, row_to_col) {
                // path: sequence of (row, new column)
                for &(row, col) in &path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        col_fixed[row_to_col[i]] = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn reroute(
    n: usize,
    start_row: usize,
    moving_row: usize,
    taken_col: usize,
    freed_col: usize,
    col_fixed: &[bool],
    tight: &dyn Fn(usize, usize) -> bool,
    col_to_row: &[usize],
    row_to_col: &[usize],
) -> Option<Vec<(usize, usize)>> {
    // BFS over rows; parent[col] = row that would move into col.
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut visited_row = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    visited_row[start_row] = true;
    visited_row[moving_row] = true;
    queue.push_back(start_row);
    while let Some(row) = queue.pop_front() {
        for col in 0..n {
            if col == taken_col || col_fixed[col] || parent[col].is_some() || !tight(row, col) {
                continue;
            }
            parent[col] = Some(row);
            if col == freed_col {
                let mut path = Vec::new();
                let mut c = col;
                loop {
                    let r = parent[c].expect("parent set on path");
                    path.push((r, c));
                    if r == start_row {
                        break;
                    }
                    c = row_to_col[r];
                }
                return Some(path);
            }
            let next = col_to_row[col];
            if !visited_row[next] {
                visited_row[next] = true;
                queue.push_back(next);
            }
        }
    }
    None
}
