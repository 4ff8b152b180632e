//! Conditional-gradient (Frank-Wolfe) solver over the permutahedron, the
//! tie-broken permutahedron, and the Birkhoff polytope.
//!
//! Side constraints are not part of any oracle; they enter the objective as
//! the quadratic hinge `ρ·Σ max(0, x_i + gap − x_j)²`.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::birkhoff::{assignment_lmo, matrix_reg_objective, project_matrix_to_vector, DoublyStochastic, RegScheme};
use crate::error::{check_finite, Error, Result};
use crate::linalg::dot;
use crate::model::{PolytopeChoice, SideConstraints, TwoSumProblem};
use crate::perm::PermutationVec;

/// Minimizes `c·x` over the permutahedron: the index holding the `k`-th
/// smallest cost receives `n + 1 − k`. Among equal costs the lower index
/// receives the lower value, so a constant cost yields the identity.
pub fn lmo_permutahedron(c: &[f64]) -> Result<PermutationVec> {
    if c.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("linear cost"));
    }
    let n = c.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(b.cmp(&a)));
    let mut entries = vec![0; n];
    for (k, &i) in idx.iter().enumerate() {
        entries[i] = n - k;
    }
    Ok(PermutationVec::from_entries_unchecked(entries))
}

/// Minimizes `c·x` over permutations with `x₁ + 1 ≤ x_n`.
///
/// Every pair of values `a < b` for the first and last position is tried;
/// the middle positions take the remaining values matched by sorting, with
/// the cost of each pair read off prefix sums.
pub fn lmo_tiebroken(c: &[f64]) -> Result<PermutationVec> {
    let n = c.len();
    if n < 2 {
        return Err(Error::InvalidArgument("the tiebreak needs at least two positions".into()));
    }
    if c.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("linear cost"));
    }
    let (c1, cn) = (c[0], c[n - 1]);
    // middle positions in matching order: ascending cost, ties to the higher index
    let mut mid: Vec<usize> = (1..n - 1).collect();
    mid.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(b.cmp(&a)));
    let m = mid.len();
    // s0[k] = Σ_{j<k} r_j, s1[k] = Σ_{j<k} (j+1)·r_j over the sorted middle costs
    let mut s0 = vec![0.0; m + 1];
    let mut s1 = vec![0.0; m + 1];
    for (j, &i) in mid.iter().enumerate() {
        s0[j + 1] = s0[j] + c[i];
        s1[j + 1] = s1[j] + (j + 1) as f64 * c[i];
    }
    // Σ_{k=lo..=hi} r_k·(off − k), 1-based k
    let seg = |lo: usize, hi: usize, off: f64| -> f64 {
        if lo > hi || lo > m || hi == 0 {
            return 0.0;
        }
        let hi = hi.min(m);
        off * (s0[hi] - s0[lo - 1]) - (s1[hi] - s1[lo - 1])
    };
    let nf = n as f64;
    let mut best = (f64::INFINITY, 1, n);
    for a in 1..n {
        for b in (a + 1..=n).rev() {
            let pb = n + 1 - b;
            let pa = n + 1 - a;
            let cost = c1 * a as f64
                + cn * b as f64
                + seg(1, pb - 1, nf + 1.0)
                + seg(pb, pa - 2, nf)
                + seg(pa - 1, m, nf - 1.0);
            if cost < best.0 {
                best = (cost, a, b);
            }
        }
    }
    let (_, a, b) = best;
    let mut entries = vec![0; n];
    entries[0] = a;
    entries[n - 1] = b;
    let mut values = (1..=n).rev().filter(|&v| v != a && v != b);
    for &i in &mid {
        entries[i] = values.next().expect("n − 2 middle values");
    }
    Ok(PermutationVec::from_entries_unchecked(entries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `γ_k = 2/(k + 2)`
    Harmonic,
    LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmoKind {
    Permutahedron,
    Tiebroken,
    Assignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwConfig {
    pub max_iter: usize,
    /// Stop once `gap ≤ gap_tol_relative · |f|`.
    pub gap_tol_relative: f64,
    pub step: StepRule,
    /// Hinge penalty weight `ρ` for side constraints.
    pub penalty_weight: f64,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self { max_iter: 1000, gap_tol_relative: 0.01, step: StepRule::Harmonic, penalty_weight: 0.0 }
    }
}

impl FwConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gap_tol_relative > 0.0) {
            return Err(Error::InvalidArgument("gap_tol_relative must be positive".into()));
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(Error::InvalidArgument("penalty weight must be finite and ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwRecord {
    pub iter: usize,
    pub objective: f64,
    pub gap: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedPoint {
    /// Position vector (`Π·π_I` for Birkhoff runs).
    pub x: Vec<f64>,
    pub matrix: Option<DoublyStochastic>,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The gap is a stationarity measure only ("FW gap (nonconvex)").
    pub nonconvex: bool,
    pub penalty_weight: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwTrace {
    pub records: Vec<FwRecord>,
    pub point: RelaxedPoint,
}

impl FwTrace {
    /// `iter,objective,gap,seconds` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,objective,gap,seconds\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.iter, r.objective, r.gap, r.seconds);
        }
        s
    }
}

/// The smooth part of the objective plus the linear map to positions.
trait Objective {
    fn dim(&self) -> usize;
    fn quad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn positions(&self, z: &[f64]) -> Vec<f64>;
    /// Adds `Jᵀ·gx` to `gz`, where `J` is the Jacobian of `positions`.
    fn pull_back(&self, gx: &[f64], gz: &mut [f64]);
    fn lmo(&self, gz: &[f64]) -> Result<Vec<f64>>;
}

struct PermObjective<'a> {
    problem: &'a TwoSumProblem,
    tiebroken: bool,
}

impl Objective for PermObjective<'_> {
    fn dim(&self) -> usize {
        self.problem.n()
    }

    fn quad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let qz = self.problem.laplacian.apply_q(z);
        let f = dot(z, &qz);
        Ok((f, qz.into_iter().map(|v| 2.0 * v).collect()))
    }

    fn positions(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }

    fn pull_back(&self, gx: &[f64], gz: &mut [f64]) {
        gz.iter_mut().zip(gx).for_each(|(a, b)| *a += b);
    }

    fn lmo(&self, gz: &[f64]) -> Result<Vec<f64>> {
        let p = if self.tiebroken { lmo_tiebroken(gz)? } else { lmo_permutahedron(gz)? };
        Ok(p.to_f64())
    }
}

struct BirkhoffObjective<'a> {
    problem: &'a TwoSumProblem,
    y: &'a crate::birkhoff::YMatrix,
    scheme: RegScheme,
}

impl Objective for BirkhoffObjective<'_> {
    fn dim(&self) -> usize {
        self.problem.n() * self.problem.n()
    }

    fn quad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        matrix_reg_objective(z, self.y, &self.problem.laplacian, self.scheme)
    }

    fn positions(&self, z: &[f64]) -> Vec<f64> {
        project_matrix_to_vector(self.problem.n(), z)
    }

    fn pull_back(&self, gx: &[f64], gz: &mut [f64]) {
        let n = self.problem.n();
        for i in 0..n {
            for j in 0..n {
                gz[i * n + j] += gx[i] * (j + 1) as f64;
            }
        }
    }

    fn lmo(&self, gz: &[f64]) -> Result<Vec<f64>> {
        let n = self.problem.n();
        let p = assignment_lmo(n, gz)?;
        Ok(DoublyStochastic::from_permutation(&p).entries().to_vec())
    }
}

/// `(ρ·Σ h_c², ∂/∂x)` with `h_c = max(0, x_i + gap − x_j)`.
pub fn hinge_penalty(side: &SideConstraints, rho: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; x.len()];
    let mut v = 0.0;
    if rho == 0.0 {
        return (0.0, g);
    }
    for c in side.iter() {
        let h = (x[c.i] + c.gap - x[c.j]).max(0.0);
        if h > 0.0 {
            v += rho * h * h;
            g[c.i] += 2.0 * rho * h;
            g[c.j] -= 2.0 * rho * h;
        }
    }
    (v, g)
}

/// Value and gradient of the full penalized objective of `problem` at `z`
/// (positions for the permutahedron, row-major `Π` for Birkhoff).
pub fn objective_and_gradient(problem: &TwoSumProblem, rho: f64, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    match &problem.polytope {
        PolytopeChoice::Permutahedron => total(&PermObjective { problem, tiebroken: false }, &problem.constraints, rho, z),
        PolytopeChoice::Birkhoff { y, scheme } => {
            total(&BirkhoffObjective { problem, y, scheme: *scheme }, &problem.constraints, rho, z)
        }
    }
}

fn total(obj: &dyn Objective, side: &SideConstraints, rho: f64, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (q, mut g) = obj.quad(z)?;
    let x = obj.positions(z);
    let (p, gx) = hinge_penalty(side, rho, &x);
    obj.pull_back(&gx, &mut g);
    let f = q + p;
    if !f.is_finite() {
        return Err(Error::NonFinite("objective"));
    }
    Ok((f, g))
}

/// Runs Frank-Wolfe from the oracle vertex at the barycenter gradient.
pub fn fw_solve(problem: &TwoSumProblem, config: &FwConfig, lmo: LmoKind) -> Result<FwTrace> {
    fw_solve_from(problem, config, lmo, None)
}

/// Runs Frank-Wolfe from `start`, which must lie in the feasible polytope
/// (positions, or row-major `Π` for Birkhoff problems).
pub fn fw_solve_from(problem: &TwoSumProblem, config: &FwConfig, lmo: LmoKind, start: Option<&[f64]>) -> Result<FwTrace> {
    config.validate()?;
    let n = problem.n();
    if n == 0 {
        return Err(Error::InvalidArgument("empty problem".into()));
    }
    match (&problem.polytope, lmo) {
        (PolytopeChoice::Permutahedron, LmoKind::Permutahedron | LmoKind::Tiebroken) => {
            let obj = PermObjective { problem, tiebroken: lmo == LmoKind::Tiebroken };
            run(&obj, problem, config, start, problem.mu_exceeds_limit(), false)
        }
        (PolytopeChoice::Birkhoff { y, scheme }, LmoKind::Assignment) => {
            let obj = BirkhoffObjective { problem, y, scheme: *scheme };
            let nonconvex = (*scheme == RegScheme::Matrix && problem.laplacian.mu() > 0.0) || problem.mu_exceeds_limit();
            run(&obj, problem, config, start, nonconvex, true)
        }
        _ => Err(Error::InvalidArgument(format!("oracle {lmo:?} does not match the problem's polytope"))),
    }
}

fn run(
    obj: &dyn Objective,
    problem: &TwoSumProblem,
    config: &FwConfig,
    start: Option<&[f64]>,
    nonconvex: bool,
    birkhoff: bool,
) -> Result<FwTrace> {
    let side = &problem.constraints;
    let rho = config.penalty_weight;
    let dim = obj.dim();
    let clock = Instant::now();
    let mut z = match start {
        Some(s) => {
            if s.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: s.len() });
            }
            check_finite(s, "starting point")?;
            s.to_vec()
        }
        None => {
            let n = problem.n();
            let bary = if birkhoff { vec![1.0 / n as f64; dim] } else { vec![(n as f64 + 1.0) / 2.0; dim] };
            let (_, g) = total(obj, side, rho, &bary)?;
            obj.lmo(&g)?
        }
    };
    let mut records = Vec::new();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let (mut f, mut g) = total(obj, side, rho, &z)?;
    for k in 0..config.max_iter.max(1) {
        iterations = k + 1;
        let s = obj.lmo(&g)?;
        let d: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a - b).collect();
        let gap = -dot(&g, &d);
        records.push(FwRecord { iter: k, objective: f, gap, seconds: clock.elapsed().as_secs_f64() });
        if best.as_ref().is_none_or(|b| f < b.0) {
            best = Some((f, z.clone(), gap));
        }
        if gap <= config.gap_tol_relative * f.abs().max(1e-12) {
            converged = true;
            break;
        }
        if k + 1 == config.max_iter {
            break;
        }
        let gamma = match config.step {
            StepRule::Harmonic => 2.0 / (k as f64 + 2.0),
            StepRule::LineSearch => line_search(obj, side, rho, &z, &s, &d, f)?,
        };
        if gamma == 0.0 {
            // line search found no decrease along the oracle direction
            converged = !nonconvex && gap <= 1e-12 * f.abs().max(1.0);
            break;
        }
        for (zi, di) in z.iter_mut().zip(&d) {
            *zi += gamma * di;
        }
        (f, g) = total(obj, side, rho, &z)?;
    }
    let (objective, zb, gap) = best.expect("at least one iteration runs");
    let x = obj.positions(&zb);
    let max_violation = side.max_violation(&x);
    let matrix = birkhoff.then(|| DoublyStochastic::from_raw(problem.n(), zb));
    Ok(FwTrace {
        records,
        point: RelaxedPoint {
            x,
            matrix,
            objective,
            gap,
            iterations,
            converged,
            nonconvex,
            penalty_weight: rho,
            max_violation,
        },
    })
}

/// Exact minimization of `φ(γ) = f(z + γd)` over `[0, 1]`: the smooth part is
/// quadratic in `γ` and the hinge term is convex piecewise quadratic, so the
/// derivative is bisected and the result compared against both endpoints.
#[allow(clippy::too_many_arguments)]
fn line_search(
    obj: &dyn Objective,
    side: &SideConstraints,
    rho: f64,
    z: &[f64],
    s: &[f64],
    d: &[f64],
    f0: f64,
) -> Result<f64> {
    let (q0, gq) = obj.quad(z)?;
    let (q1, _) = obj.quad(s)?;
    let a1 = dot(&gq, d);
    let a2 = q1 - q0 - a1;
    let x = obj.positions(z);
    let dx: Vec<f64> = obj.positions(s).iter().zip(&x).map(|(a, b)| a - b).collect();
    let at = |gamma: f64| -> Vec<f64> { x.iter().zip(&dx).map(|(a, b)| a + gamma * b).collect() };
    let phi = |gamma: f64| -> f64 { q0 + a1 * gamma + a2 * gamma * gamma + hinge_penalty(side, rho, &at(gamma)).0 };
    let dphi = |gamma: f64| -> f64 {
        let (_, gx) = hinge_penalty(side, rho, &at(gamma));
        a1 + 2.0 * a2 * gamma + dot(&gx, &dx)
    };
    let mut candidates = vec![0.0, 1.0];
    if dphi(0.0) < 0.0 && dphi(1.0) > 0.0 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if dphi(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        candidates.push(0.5 * (lo + hi));
    }
    let mut best = (f0, 0.0);
    for &c in &candidates[1..] {
        let v = phi(c);
        if v < best.0 {
            best = (v, c);
        }
    }
    Ok(best.1)
}

/// Solves with `ρ ∈ {10, 100, 1000}·‖L‖_∞` in turn, each stage warm-started
/// from the previous one. Problems without side constraints take one stage.
pub fn fw_solve_escalating(problem: &TwoSumProblem, config: &FwConfig, lmo: LmoKind) -> Result<FwTrace> {
    if problem.constraints.is_empty() {
        return fw_solve(problem, &FwConfig { penalty_weight: 0.0, ..*config }, lmo);
    }
    let scale = problem.laplacian.norm_inf().max(1.0);
    let mut start: Option<Vec<f64>> = None;
    let mut records = Vec::new();
    let mut last = None;
    for factor in [10.0, 100.0, 1000.0] {
        let cfg = FwConfig { penalty_weight: factor * scale, ..*config };
        let trace = fw_solve_from(problem, &cfg, lmo, start.as_deref())?;
        let offset = records.len();
        records.extend(trace.records.iter().map(|r| FwRecord { iter: r.iter + offset, ..*r }));
        start = Some(match &trace.point.matrix {
            Some(m) => m.entries().to_vec(),
            None => trace.point.x.clone(),
        });
        last = Some(trace.point);
    }
    Ok(FwTrace { records, point: last.expect("three stages run") })
}
