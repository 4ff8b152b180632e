//! Operator-splitting (ADMM) solver for sparse convex QPs
//!
//! ```text
//! minimize ½ xᵀHx + qᵀx   subject to   l ≤ A x ≤ u,
//! ```
//!
//! in the style of OSQP: over-relaxation `α = 1.6`, proximal weight
//! `σ = 1e-6`, per-row penalties (equality rows get `1e3·ρ`) and adaptive
//! `ρ`. The linear subproblem `(H + σI + AᵀRA) x = b` is solved with a
//! sparse Cholesky factorization (AMD ordering, refactored when `ρ` moves),
//! falling back to Jacobi-preconditioned conjugate gradients when the
//! factorization fails. Small problems get a dense KKT polishing step on the
//! guessed active set at the end.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{dot, norm2, norm_inf};
use crate::model::{LaplacianOperator, SideConstraints};
use crate::snpoly::mps::{MpsModel, RowKind};
use crate::snpoly::SnPolytope;

const SIGMA: f64 = 1e-6;
const ALPHA: f64 = 1.6;
const RHO_INIT: f64 = 0.1;
const RHO_EQ_SCALE: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const ADAPT_RATIO: f64 = 10.0;
const ADAPT_FACTOR: f64 = 2.0;
const ADAPT_EVERY: usize = 25;
const CHECK_EVERY: usize = 5;
const POLISH_MAX_DIM: usize = 2000;
const DIRECT_MAX_VARS: usize = 50_000;
const POLISH_ROUNDS: usize = 60;
const POLISH_FEAS_TOL: f64 = 1e-10;
const POLISH_SIGN_TOL: f64 = 1e-9;
const INFEASIBILITY_TOL: f64 = 1e-6;

/// The quadratic part, as `H` in `½ xᵀHx`.
#[derive(Debug, Clone)]
pub enum QuadOperator {
    Zero,
    /// `H = 2(L − μP)` acting on the listed variables.
    Laplacian { op: LaplacianOperator, vars: Vec<usize> },
    /// Full symmetric `H` as triplets.
    Sparse(Vec<(usize, usize, f64)>),
}

impl QuadOperator {
    fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Zero => {}
            Self::Laplacian { op, vars } => {
                let xi: Vec<f64> = vars.iter().map(|&v| x[v]).collect();
                let qx = op.apply_q(&xi);
                for (&v, q) in vars.iter().zip(qx) {
                    out[v] += 2.0 * q;
                }
            }
            Self::Sparse(t) => {
                for &(i, j, h) in t {
                    out[i] += h * x[j];
                }
            }
        }
    }

    fn diagonal_add(&self, out: &mut [f64]) {
        match self {
            Self::Zero => {}
            Self::Laplacian { op, vars } => {
                let n = vars.len() as f64;
                let a = op.similarity();
                for (k, &v) in vars.iter().enumerate() {
                    out[v] += 2.0 * (op.degree()[k] - a.get(k, k) - op.mu() * (1.0 - 1.0 / n));
                }
            }
            Self::Sparse(t) => {
                for &(i, j, h) in t {
                    if i == j {
                        out[i] += h;
                    }
                }
            }
        }
    }

    fn triplets_into(&self, out: &mut Vec<Triplet<usize, usize, f64>>) {
        match self {
            Self::Zero => {}
            Self::Laplacian { op, vars } => {
                let n = vars.len();
                let l = op.dense();
                let mu = op.mu();
                for a in 0..n {
                    for b in 0..n {
                        let p = if a == b { 1.0 - 1.0 / n as f64 } else { -1.0 / n as f64 };
                        out.push(Triplet::new(vars[a], vars[b], 2.0 * (l[a * n + b] - mu * p)));
                    }
                }
            }
            Self::Sparse(t) => out.extend(t.iter().map(|&(i, j, h)| Triplet::new(i, j, h))),
        }
    }

    fn dense_into(&self, dim: usize, out: &mut nalgebra::DMatrix<f64>) {
        match self {
            Self::Zero => {}
            Self::Laplacian { op, vars } => {
                let n = vars.len();
                let l = op.dense();
                let mu = op.mu();
                for a in 0..n {
                    for b in 0..n {
                        let p = if a == b { 1.0 - 1.0 / n as f64 } else { -1.0 / n as f64 };
                        out[(vars[a], vars[b])] += 2.0 * (l[a * n + b] - mu * p);
                    }
                }
            }
            Self::Sparse(t) => {
                for &(i, j, h) in t {
                    debug_assert!(i < dim && j < dim);
                    out[(i, j)] += h;
                }
            }
        }
    }
}

/// One constraint `lower ≤ row·x ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub idx: Vec<usize>,
    pub coef: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl ConstraintRow {
    fn eval(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.coef).map(|(&i, c)| c * x[i]).sum()
    }

    pub fn is_equality(&self) -> bool {
        self.lower == self.upper
    }
}

#[derive(Debug, Clone)]
pub struct SparseQp {
    pub num_vars: usize,
    pub quad: QuadOperator,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub rows: Vec<ConstraintRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SparseQp {
    /// An unconstrained, free-variable problem with zero objective.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            quad: QuadOperator::Zero,
            linear: vec![0.0; num_vars],
            constant: 0.0,
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_eq(&self) -> usize {
        self.rows.iter().filter(|r| r.is_equality()).count()
    }

    pub fn num_ineq(&self) -> usize {
        self.rows.len() - self.num_eq()
    }

    pub fn add_row(&mut self, terms: &[(usize, f64)], lower: f64, upper: f64) -> Result<()> {
        for &(i, _) in terms {
            if i >= self.num_vars {
                return Err(Error::IndexOutOfRange { index: i, n: self.num_vars });
            }
        }
        if lower > upper || lower.is_nan() || upper.is_nan() {
            return Err(Error::InvalidArgument(format!("empty row range [{lower}, {upper}]")));
        }
        self.rows.push(ConstraintRow {
            idx: terms.iter().map(|t| t.0).collect(),
            coef: terms.iter().map(|t| t.1).collect(),
            lower,
            upper,
        });
        Ok(())
    }

    /// `½ xᵀHx + qᵀx + constant`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; self.num_vars];
        self.quad.apply_add(x, &mut hx);
        0.5 * dot(x, &hx) + dot(&self.linear, x) + self.constant
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| {
            let v = r.eval(x);
            (r.lower - v).max(v - r.upper).max(0.0)
        });
        let bounds = (0..self.num_vars).map(|i| (self.lower[i] - x[i]).max(x[i] - self.upper[i]).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

/// Builds `min xᵀ(L − μP)x` over the polytope (on its input variables) with
/// side constraints `x_i − x_j ≤ −gap`, plus the tiebreak `x₁ + 1 ≤ x_n` if requested.
pub fn assemble(poly: &SnPolytope, l: &LaplacianOperator, side: &SideConstraints, tiebreak: bool) -> Result<SparseQp> {
    let n = poly.n();
    check_len(n, l.n())?;
    let mut qp = SparseQp::new(poly.num_vars());
    qp.quad = QuadOperator::Laplacian { op: l.clone(), vars: poly.input_idx().to_vec() };
    for r in poly.eq_rows() {
        let terms: Vec<(usize, f64)> = r.idx.iter().copied().zip(r.coef.iter().copied()).collect();
        qp.add_row(&terms, r.rhs, r.rhs)?;
    }
    for r in poly.ineq_rows() {
        let terms: Vec<(usize, f64)> = r.idx.iter().copied().zip(r.coef.iter().copied()).collect();
        qp.add_row(&terms, f64::NEG_INFINITY, r.rhs)?;
    }
    let mut all: Vec<_> = side.iter().copied().collect();
    if tiebreak {
        if n < 2 {
            return Err(Error::InvalidArgument("the tiebreak needs at least two positions".into()));
        }
        all.push(SideConstraints::tiebreak(n));
    }
    for c in all {
        for idx in [c.i, c.j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
        let (vi, vj) = (poly.input_idx()[c.i], poly.input_idx()[c.j]);
        qp.add_row(&[(vi, 1.0), (vj, -1.0)], f64::NEG_INFINITY, -c.gap)?;
    }
    Ok(qp)
}

/// `μ = fraction · λ₂` for `fraction ∈ [0, 1)`.
pub fn fiedler_fraction_mu(l: &LaplacianOperator, fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "μ fraction must lie in [0, 1) to keep the objective convex, got {fraction}"
        )));
    }
    let l2 = l.lambda2().ok_or_else(|| Error::InvalidArgument("λ₂ has not been computed".into()))?;
    Ok(fraction * l2)
}

/// Converts a parsed MPS model (`cᵀx + ½xᵀHx`).
pub fn from_mps(model: &MpsModel) -> Result<SparseQp> {
    let nv = model.num_cols();
    let mut qp = SparseQp::new(nv);
    qp.linear.clone_from(&model.objective);
    qp.constant = model.objective_constant;
    qp.lower.clone_from(&model.lower);
    qp.upper.clone_from(&model.upper);
    if !model.hessian.is_empty() {
        qp.quad = QuadOperator::Sparse(model.hessian.clone());
    }
    let mut terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_rows()];
    for &(r, c, v) in &model.entries {
        terms[r].push((c, v));
    }
    for (r, t) in terms.iter().enumerate() {
        let b = model.rhs[r];
        let (lo, hi) = match model.row_kinds[r] {
            RowKind::Eq => (b, b),
            RowKind::Le => (f64::NEG_INFINITY, b),
            RowKind::Ge => (b, f64::INFINITY),
        };
        qp.add_row(t, lo, hi)?;
    }
    Ok(qp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    /// When set, also stop once the primal residual is within tolerance and
    /// the duality gap is below this fraction of `|objective|`.
    pub objective_gap_rel: Option<f64>,
    pub polish: bool,
    /// Extra attempts, each from the best iterate with a randomly rescaled `ρ`.
    pub restarts: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { eps_abs: 1e-6, eps_rel: 1e-6, max_iter: 20_000, objective_gap_rel: None, polish: true, restarts: 0 }
    }
}

impl QpSettings {
    /// Loose protocol: 5% relative objective gap.
    pub fn loose() -> Self {
        Self { eps_abs: 1e-4, eps_rel: 1e-4, objective_gap_rel: Some(0.05), ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    /// Stopped on the relative objective-gap rule.
    SolvedGap,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub polished: bool,
    pub rho: f64,
}

impl QpSolution {
    pub fn converged(&self) -> bool {
        self.status != QpStatus::MaxIterations
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Constraint rows and finite variable bounds stacked into one `A`.
struct Stacked<'a> {
    qp: &'a SparseQp,
    rows: Vec<(Vec<usize>, Vec<f64>)>,
    l: Vec<f64>,
    u: Vec<f64>,
}

impl<'a> Stacked<'a> {
    fn new(qp: &'a SparseQp) -> Self {
        let mut rows = Vec::with_capacity(qp.rows.len());
        let mut l = Vec::new();
        let mut u = Vec::new();
        for r in &qp.rows {
            rows.push((r.idx.clone(), r.coef.clone()));
            l.push(r.lower);
            u.push(r.upper);
        }
        for i in 0..qp.num_vars {
            if qp.lower[i].is_finite() || qp.upper[i].is_finite() {
                rows.push((vec![i], vec![1.0]));
                l.push(qp.lower[i]);
                u.push(qp.upper[i]);
            }
        }
        Self { qp, rows, l, u }
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn a(&self, x: &[f64], out: &mut [f64]) {
        for (o, (idx, coef)) in out.iter_mut().zip(&self.rows) {
            *o = idx.iter().zip(coef).map(|(&i, c)| c * x[i]).sum();
        }
    }

    fn at(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (yr, (idx, coef)) in y.iter().zip(&self.rows) {
            if *yr != 0.0 {
                for (&i, c) in idx.iter().zip(coef) {
                    out[i] += c * yr;
                }
            }
        }
    }

    fn h(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.qp.quad.apply_add(x, out);
    }
}

/// Cached Cholesky factor of `H + σI + AᵀRA`; the symbolic analysis is reused
/// across `ρ` updates.
struct DirectSolver {
    symbolic: SymbolicLlt<usize>,
    llt: Llt<usize, f64>,
}

impl DirectSolver {
    fn matrix(s: &Stacked, rv: &[f64]) -> Option<SparseColMat<usize, f64>> {
        let n = s.qp.num_vars;
        let mut t = Vec::new();
        s.qp.quad.triplets_into(&mut t);
        t.extend((0..n).map(|i| Triplet::new(i, i, SIGMA)));
        for (r, (idx, coef)) in s.rows.iter().enumerate() {
            for (&i, &ci) in idx.iter().zip(coef) {
                for (&j, &cj) in idx.iter().zip(coef) {
                    t.push(Triplet::new(i, j, rv[r] * ci * cj));
                }
            }
        }
        SparseColMat::try_new_from_triplets(n, n, &t).ok()
    }

    fn new(s: &Stacked, rv: &[f64]) -> Option<Self> {
        let k = Self::matrix(s, rv)?;
        let symbolic = SymbolicLlt::try_new(k.symbolic(), Side::Lower).ok()?;
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), k.as_ref(), Side::Lower).ok()?;
        Some(Self { symbolic, llt })
    }

    fn refactor(self, s: &Stacked, rv: &[f64]) -> Option<Self> {
        let k = Self::matrix(s, rv)?;
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), k.as_ref(), Side::Lower).ok()?;
        Some(Self { symbolic: self.symbolic, llt })
    }

    fn solve(&self, b: &[f64], x: &mut [f64]) {
        let mut rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = rhs[(i, 0)];
        }
    }
}

struct State {
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

struct Metrics {
    rp: f64,
    rd: f64,
    eps_p: f64,
    eps_d: f64,
    p_scale: f64,
    d_scale: f64,
    gap: f64,
    obj: f64,
}

fn metrics(s: &Stacked, st: &State, settings: &QpSettings) -> Metrics {
    let n = s.qp.num_vars;
    let mut ax = vec![0.0; s.m()];
    s.a(&st.x, &mut ax);
    let mut hx = vec![0.0; n];
    s.h(&st.x, &mut hx);
    let mut aty = vec![0.0; n];
    s.at(&st.y, &mut aty);
    let rp = ax.iter().zip(&st.z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rd = (0..n).map(|i| (hx[i] + s.qp.linear[i] + aty[i]).abs()).fold(0.0, f64::max);
    let p_scale = norm_inf(&ax).max(norm_inf(&st.z));
    let d_scale = norm_inf(&hx).max(norm_inf(&aty)).max(norm_inf(&s.qp.linear));
    let xhx = dot(&st.x, &hx);
    let qx = dot(&s.qp.linear, &st.x);
    let obj = 0.5 * xhx + qx + s.qp.constant;
    let gap = (xhx + qx + dot(&st.y, &st.z)).abs();
    Metrics {
        rp,
        rd,
        eps_p: settings.eps_abs + settings.eps_rel * p_scale,
        eps_d: settings.eps_abs + settings.eps_rel * d_scale,
        p_scale,
        d_scale,
        gap,
        obj,
    }
}

/// Solves `qp`. `rng` only drives the penalty rescaling of restarts.
pub fn solve<R: Rng + ?Sized>(
    qp: &SparseQp,
    settings: &QpSettings,
    warm_start: Option<&[f64]>,
    rng: &mut R,
) -> Result<QpSolution> {
    validate(qp, settings)?;
    let mut rho = RHO_INIT;
    let mut start = warm_start.map(<[f64]>::to_vec);
    let mut used = 0;
    let mut last = None;
    for attempt in 0..=settings.restarts {
        let sol = admm(qp, settings, start.as_deref(), rho)?;
        used += sol.iterations;
        if sol.converged() || attempt == settings.restarts {
            return Ok(QpSolution { iterations: used, ..sol });
        }
        rho = sol.rho * 10f64.powf(rng.random_range(-1.0..1.0));
        start = Some(sol.x.clone());
        last = Some(sol);
    }
    Ok(last.expect("at least one attempt runs"))
}

fn validate(qp: &SparseQp, settings: &QpSettings) -> Result<()> {
    check_len(qp.num_vars, qp.linear.len())?;
    check_len(qp.num_vars, qp.lower.len())?;
    check_len(qp.num_vars, qp.upper.len())?;
    check_finite(&qp.linear, "linear objective")?;
    if !(settings.eps_abs >= 0.0 && settings.eps_rel >= 0.0) || settings.eps_abs + settings.eps_rel == 0.0 {
        return Err(Error::InvalidArgument("tolerances must be nonnegative and not both zero".into()));
    }
    for r in &qp.rows {
        if r.idx.iter().any(|&i| i >= qp.num_vars) {
            return Err(Error::IndexOutOfRange { index: *r.idx.iter().max().unwrap_or(&0), n: qp.num_vars });
        }
    }
    if let QuadOperator::Sparse(t) = &qp.quad {
        if let Some(&(i, j, _)) = t.iter().find(|&&(i, j, _)| i >= qp.num_vars || j >= qp.num_vars) {
            return Err(Error::IndexOutOfRange { index: i.max(j), n: qp.num_vars });
        }
    }
    Ok(())
}

fn admm(qp: &SparseQp, settings: &QpSettings, warm_start: Option<&[f64]>, rho0: f64) -> Result<QpSolution> {
    let s = Stacked::new(qp);
    let n = qp.num_vars;
    let m = s.m();
    let eq: Vec<bool> = (0..m).map(|r| s.l[r] == s.u[r]).collect();
    let mut rho = rho0;
    let mut rv: Vec<f64> = eq.iter().map(|&e| if e { RHO_EQ_SCALE * rho } else { rho }).collect();

    let mut x = match warm_start {
        Some(w) => {
            check_len(n, w.len())?;
            w.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut z = vec![0.0; m];
    s.a(&x, &mut z);
    for r in 0..m {
        z[r] = z[r].clamp(s.l[r], s.u[r]);
    }
    let mut st = State { x: std::mem::take(&mut x), z, y: vec![0.0; m] };

    let mut hdiag = vec![0.0; n];
    qp.quad.diagonal_add(&mut hdiag);
    let precond = |rv: &[f64]| -> Vec<f64> {
        let mut d: Vec<f64> = hdiag.iter().map(|h| h + SIGMA).collect();
        for (r, (idx, coef)) in s.rows.iter().enumerate() {
            for (&i, c) in idx.iter().zip(coef) {
                d[i] += rv[r] * c * c;
            }
        }
        d.into_iter().map(|v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect()
    };
    let mut minv = precond(&rv);
    let mut direct = if n <= DIRECT_MAX_VARS { DirectSolver::new(&s, &rv) } else { None };

    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let mut cg_tol = f64::INFINITY;
    let mut status = QpStatus::MaxIterations;
    let mut iterations = 0;
    let mut rhs = vec![0.0; n];
    let mut tmp_m = vec![0.0; m];
    let mut zt = vec![0.0; m];
    let mut xt = st.x.clone();
    let mut last_metrics = metrics(&s, &st, settings);

    for k in 1..=settings.max_iter {
        iterations = k;
        // rhs = σx − q + Aᵀ(Rz − y)
        for r in 0..m {
            tmp_m[r] = rv[r] * st.z[r] - st.y[r];
        }
        s.at(&tmp_m, &mut rhs);
        for i in 0..n {
            rhs[i] += SIGMA * st.x[i] - qp.linear[i];
        }
        let bnorm = norm2(&rhs);
        let tol = (0.01 * cg_tol).min(1e-3 * bnorm.max(1e-300)).max(1e-14 * bnorm);
        match &direct {
            Some(d) => d.solve(&rhs, &mut xt),
            None => {
                xt.clone_from(&st.x);
                conjugate_gradient(&s, &rv, &minv, &rhs, &mut xt, tol, 10 * n + 50);
            }
        }
        s.a(&xt, &mut zt);
        let y_prev = st.y.clone();
        for i in 0..n {
            st.x[i] = ALPHA * xt[i] + (1.0 - ALPHA) * st.x[i];
        }
        for r in 0..m {
            let zr = ALPHA * zt[r] + (1.0 - ALPHA) * st.z[r];
            let znew = (zr + st.y[r] / rv[r]).clamp(s.l[r], s.u[r]);
            st.y[r] += rv[r] * (zr - znew);
            st.z[r] = znew;
        }

        if k % CHECK_EVERY != 0 && k != settings.max_iter {
            continue;
        }
        let mt = metrics(&s, &st, settings);
        cg_tol = mt.rp.min(mt.rd).max(1e-14);
        let score = (mt.rp / mt.eps_p).max(mt.rd / mt.eps_d);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, st.x.clone(), st.z.clone(), st.y.clone()));
        }
        if mt.rp <= mt.eps_p && mt.rd <= mt.eps_d {
            status = QpStatus::Solved;
            last_metrics = mt;
            break;
        }
        if let Some(g) = settings.objective_gap_rel {
            if mt.rp <= mt.eps_p && mt.gap <= g * mt.obj.abs().max(1e-12) {
                status = QpStatus::SolvedGap;
                last_metrics = mt;
                break;
            }
        }
        if primal_infeasible(&s, &st.y, &y_prev) {
            return Err(Error::Infeasible);
        }
        if k % ADAPT_EVERY == 0 {
            let pr = mt.rp / mt.p_scale.max(1e-12);
            let dr = mt.rd / mt.d_scale.max(1e-12);
            let factor = if pr > ADAPT_RATIO * dr {
                ADAPT_FACTOR
            } else if dr > ADAPT_RATIO * pr {
                1.0 / ADAPT_FACTOR
            } else {
                1.0
            };
            let next = (rho * factor).clamp(RHO_MIN, RHO_MAX);
            if next != rho {
                rho = next;
                for r in 0..m {
                    rv[r] = if eq[r] { RHO_EQ_SCALE * rho } else { rho };
                }
                minv = precond(&rv);
                direct = direct.and_then(|d| d.refactor(&s, &rv));
            }
        }
        last_metrics = mt;
    }
    if status == QpStatus::MaxIterations {
        if let Some((_, bx, bz, by)) = best {
            st = State { x: bx, z: bz, y: by };
            last_metrics = metrics(&s, &st, settings);
        }
    }
    let mut polished = false;
    if settings.polish && n + m <= POLISH_MAX_DIM {
        if let Some(p) = polish(&s, &st) {
            let pm = metrics(&s, &p, settings);
            let ok_p = pm.rp <= last_metrics.rp.max(pm.eps_p);
            let ok_d = pm.rd <= last_metrics.rd.max(pm.eps_d);
            if ok_p && ok_d {
                if pm.rp <= pm.eps_p && pm.rd <= pm.eps_d {
                    status = QpStatus::Solved;
                }
                st = p;
                last_metrics = pm;
                polished = true;
            }
        }
    }
    Ok(QpSolution {
        objective: qp.objective(&st.x),
        x: st.x,
        y: st.y,
        primal_residual: last_metrics.rp,
        dual_residual: last_metrics.rd,
        iterations,
        status,
        polished,
        rho,
    })
}

fn conjugate_gradient(s: &Stacked, rv: &[f64], minv: &[f64], b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) {
    let n = x.len();
    let m = s.m();
    let mut ax = vec![0.0; m];
    let mut kx = vec![0.0; n];
    let apply = |v: &[f64], out: &mut [f64], ax: &mut [f64]| {
        s.h(v, out);
        s.a(v, ax);
        for r in 0..m {
            ax[r] *= rv[r];
        }
        let mut at = vec![0.0; n];
        s.at(ax, &mut at);
        for i in 0..n {
            out[i] += SIGMA * v[i] + at[i];
        }
    };
    apply(x, &mut kx, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
    if norm2(&r) <= tol {
        return;
    }
    let mut zv: Vec<f64> = r.iter().zip(minv).map(|(a, b)| a * b).collect();
    let mut p = zv.clone();
    let mut rz = dot(&r, &zv);
    for _ in 0..max_iter {
        apply(&p, &mut kx, &mut ax);
        let pkp = dot(&p, &kx);
        if pkp <= 0.0 {
            break;
        }
        let a = rz / pkp;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * kx[i];
        }
        if norm2(&r) <= tol {
            break;
        }
        for i in 0..n {
            zv[i] = r[i] * minv[i];
        }
        let rz_new = dot(&r, &zv);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = zv[i] + beta * p[i];
        }
    }
}

/// Certificate test on `δy`: `‖Aᵀδy‖∞` small while `uᵀδy₊ + lᵀδy₋ < 0`.
fn primal_infeasible(s: &Stacked, y: &[f64], y_prev: &[f64]) -> bool {
    let dy: Vec<f64> = y.iter().zip(y_prev).map(|(a, b)| a - b).collect();
    let norm = norm_inf(&dy);
    if norm <= 1e-12 {
        return false;
    }
    let mut atdy = vec![0.0; s.qp.num_vars];
    s.at(&dy, &mut atdy);
    if norm_inf(&atdy) > INFEASIBILITY_TOL * norm {
        return false;
    }
    let mut support = 0.0;
    for (r, &d) in dy.iter().enumerate() {
        if d > 0.0 {
            if !s.u[r].is_finite() {
                return false;
            }
            support += s.u[r] * d;
        } else if d < 0.0 {
            if !s.l[r].is_finite() {
                return false;
            }
            support += s.l[r] * d;
        }
    }
    support < -INFEASIBILITY_TOL * norm
}

/// Solves the equality-constrained QP on the guessed active set with a
/// regularized dense KKT system plus iterative refinement.
fn polish(s: &Stacked, st: &State) -> Option<State> {
    let m = s.m();
    // side +1 upper, −1 lower, 0 equality
    let mut side = vec![None; m];
    for r in 0..m {
        if s.l[r] == s.u[r] {
            side[r] = Some(0i8);
        } else if s.u[r].is_finite() && s.u[r] - st.z[r] < st.y[r] {
            side[r] = Some(1);
        } else if s.l[r].is_finite() && st.z[r] - s.l[r] < -st.y[r] {
            side[r] = Some(-1);
        }
    }
    // the first guess misses weakly active rows on degenerate faces; repair it
    for _ in 0..POLISH_ROUNDS {
        let (x, y) = polish_solve(s, &side)?;
        let mut z = vec![0.0; m];
        s.a(&x, &mut z);
        // add every violated row; only once feasible, drop the worst multiplier
        let mut changed = false;
        for r in 0..m {
            if side[r].is_none() {
                if z[r] > s.u[r] + POLISH_FEAS_TOL {
                    side[r] = Some(1);
                    changed = true;
                } else if z[r] < s.l[r] - POLISH_FEAS_TOL {
                    side[r] = Some(-1);
                    changed = true;
                }
            }
        }
        if !changed {
            let wrong = |r: usize| match side[r] {
                Some(1) => -y[r],
                Some(-1) => y[r],
                _ => f64::NEG_INFINITY,
            };
            if let Some(r) = (0..m).filter(|&r| wrong(r) > POLISH_SIGN_TOL).max_by(|&a, &b| wrong(a).total_cmp(&wrong(b))) {
                side[r] = None;
                changed = true;
            }
        }
        if !changed {
            for r in 0..m {
                z[r] = z[r].clamp(s.l[r], s.u[r]);
            }
            return Some(State { x, z, y });
        }
    }
    None
}

/// Solves the equality-constrained KKT system for a fixed active set.
fn polish_solve(s: &Stacked, side: &[Option<i8>]) -> Option<(Vec<f64>, Vec<f64>)> {
    use nalgebra::{DMatrix, DVector};
    let n = s.qp.num_vars;
    let m = s.m();
    let active: Vec<(usize, f64)> = (0..m)
        .filter_map(|r| match side[r]? {
            -1 => Some((r, s.l[r])),
            _ => Some((r, s.u[r])),
        })
        .collect();
    let k = active.len();
    let dim = n + k;
    let delta = 1e-9;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    s.qp.quad.dense_into(n, &mut kkt);
    for (a, &(r, _)) in active.iter().enumerate() {
        let (idx, coef) = &s.rows[r];
        for (&i, &c) in idx.iter().zip(coef) {
            kkt[(n + a, i)] += c;
            kkt[(i, n + a)] += c;
        }
    }
    let exact = kkt.clone();
    for i in 0..n {
        kkt[(i, i)] += delta;
    }
    for a in 0..k {
        kkt[(n + a, n + a)] -= delta;
    }
    let mut rhs = DVector::<f64>::zeros(dim);
    for i in 0..n {
        rhs[i] = -s.qp.linear[i];
    }
    for (a, &(_, b)) in active.iter().enumerate() {
        rhs[n + a] = b;
    }
    let lu = kkt.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..5 {
        let res = &rhs - &exact * &sol;
        let corr = lu.solve(&res)?;
        sol += corr;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let mut y = vec![0.0; m];
    for (a, &(r, _)) in active.iter().enumerate() {
        y[r] = sol[n + a];
    }
    Some((x, y))
}
