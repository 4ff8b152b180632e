//! Instance generators and end-to-end experiment runs.
//!
//! Every generator shuffles its objects with a hidden permutation and returns
//! it as ground truth: `truth(i)` is the position of shuffled object `i` in
//! the underlying sequence, so `similarity.reorder(&truth)` undoes the shuffle.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birkhoff::{mu_limit, DoublyStochastic, RegScheme, YMatrix};
use crate::error::{Error, Result};
use crate::frankwolfe::{fw_solve_escalating, FwConfig, FwRecord, LmoKind, StepRule};
use crate::io::{read_similarity, DenseMatrix, MatrixFormat};
use crate::model::{
    kendall_tau, r_score, sample_ordering_constraints, spectral_lower_bound, two_sum, LaplacianOperator, PolytopeChoice,
    SideConstraints, SimilarityMatrix, TwoSumProblem,
};
use crate::perm::PermutationVec;
use crate::recover::{sample_round, sample_round_birkhoff, DEFAULT_VARIANCE};
use crate::snpoly::SnPolytope;
use crate::sortnet::{network, NetworkKind};
use crate::spectral::{fiedler_default, spectral_order_with, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::splitqp::{assemble, fiedler_fraction_mu, solve, QpSettings};

pub const SCHEMA: &str = "snperm/1";

// RNG substreams derived from the run seed
const STREAM_GENERATE: u64 = 0;
const STREAM_CONSTRAINTS: u64 = 1;
const STREAM_Y: u64 = 2;
const STREAM_SOLVER: u64 = 3;
const STREAM_ROUNDING: u64 = 4;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub similarity: SimilarityMatrix,
    pub truth: Option<PermutationVec>,
    /// Incidence matrix for consecutive-ones instances, rows shuffled with the similarity.
    pub incidence: Option<DenseMatrix>,
}

fn shuffle_order<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<usize>, PermutationVec) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let truth = PermutationVec::from_entries_unchecked(order.iter().map(|o| o + 1).collect());
    (order, truth)
}

/// Sample covariance of `samples` independent chains `X_i = b·X_{i−1} + ε_i`,
/// `ε_i ~ N(0, σ²)`, `X_0 = 0`. Negative covariances are clamped to zero so
/// the result is a valid similarity.
pub fn markov_chain_cov<R: Rng + ?Sized>(n: usize, b: f64, sigma: f64, samples: usize, rng: &mut R) -> Result<Instance> {
    if samples < 2 {
        return Err(Error::InvalidArgument("at least two samples are needed for a covariance".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty chain".into()));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut data = vec![0.0; samples * n];
    for s in 0..samples {
        let mut prev = 0.0;
        for i in 0..n {
            prev = b * prev + noise.sample(rng);
            data[s * n + i] = prev;
        }
    }
    let mut mean = vec![0.0; n];
    for s in 0..samples {
        for i in 0..n {
            mean[i] += data[s * n + i] / samples as f64;
        }
    }
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let c: f64 =
                (0..samples).map(|s| (data[s * n + i] - mean[i]) * (data[s * n + j] - mean[j])).sum::<f64>()
                    / (samples - 1) as f64;
            let c = c.max(0.0);
            cov[i * n + j] = c;
            cov[j * n + i] = c;
        }
    }
    let (order, truth) = shuffle_order(n, rng);
    let similarity = SimilarityMatrix::new(n, cov)?.permute_symmetric(&order)?;
    Ok(Instance { similarity, truth: Some(truth), incidence: None })
}

/// Incidence matrix with one contiguous block of ones per column (lengths in
/// `block_len`, inclusive), each entry then flipped with probability `flip_prob`.
/// Objects are the rows; the similarity is `M Mᵀ`.
pub fn consecutive_ones_instance<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    block_len: (usize, usize),
    flip_prob: f64,
    rng: &mut R,
) -> Result<Instance> {
    let (lo, hi) = block_len;
    if lo == 0 || lo > hi || hi > rows {
        return Err(Error::InvalidArgument(format!("block lengths {lo}..={hi} must lie in 1..={rows}")));
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::InvalidArgument(format!("flip probability {flip_prob} outside [0, 1]")));
    }
    let mut m = DenseMatrix::zeros(rows, cols);
    for c in 0..cols {
        let len = rng.random_range(lo..=hi);
        let start = rng.random_range(0..=rows - len);
        for r in start..start + len {
            m.set(r, c, 1.0);
        }
    }
    if flip_prob > 0.0 {
        for v in m.data.iter_mut() {
            if rng.random_bool(flip_prob) {
                *v = 1.0 - *v;
            }
        }
    }
    let (order, truth) = shuffle_order(rows, rng);
    let m = m.permute_rows(&order)?;
    let similarity = m.gram()?;
    Ok(Instance { similarity, truth: Some(truth), incidence: Some(m) })
}

/// Shuffled Robinson matrix `A_ij = exp(−3·|t_i − t_j|)` over sorted uniform
/// points `t`, so entries are distinct with probability one.
pub fn pre_r_instance<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Instance> {
    let mut t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    t.sort_by(f64::total_cmp);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (-3.0 * (t[i] - t[j]).abs()).exp();
        }
    }
    let (order, truth) = shuffle_order(n, rng);
    let similarity = SimilarityMatrix::new(n, a)?.permute_symmetric(&order)?;
    Ok(Instance { similarity, truth: Some(truth), incidence: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    Markov { b: f64, sigma: f64, samples: usize },
    ConsecutiveOnes { cols: usize, block_min: usize, block_max: usize, flip_prob: f64 },
    PreR,
    File { path: PathBuf, format: Option<MatrixFormat> },
}

impl ProblemSource {
    pub fn markov_default() -> Self {
        Self::Markov { b: 0.999, sigma: 0.5, samples: 50 }
    }

    /// Shape of the Munsingen grave/artifact table: 70 artifact types.
    pub fn munsingen_like(flip_prob: f64) -> Self {
        Self::ConsecutiveOnes { cols: 70, block_min: 3, block_max: 15, flip_prob }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ConstraintBudget {
    Count(usize),
    /// `round(f · n)` constraints, e.g. 0.5, 1, 1.5.
    FractionOfN(f64),
}

impl ConstraintBudget {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            Self::Count(c) => c,
            Self::FractionOfN(f) => (f * n as f64).round().max(0.0) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Spectral,
    FwPerm,
    FwBirkhoff,
    Splitqp,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "fw_perm" | "fw-perm" => Ok(Self::FwPerm),
            "fw_birkhoff" | "fw-birkhoff" => Ok(Self::FwBirkhoff),
            "splitqp" => Ok(Self::Splitqp),
            other => Err(Error::InvalidArgument(format!("unknown method {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: ProblemSource,
    pub n: usize,
    pub seed: u64,
    pub constraints: ConstraintBudget,
    pub mu_fraction: f64,
    pub method: Method,
    pub trials: usize,
    pub variance: f64,
    pub network: NetworkKind,
    /// Add `x₁ + 1 ≤ x_n` when no ordering constraints are sampled.
    pub tiebreak: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub birkhoff_scheme: RegScheme,
    pub birkhoff_columns: usize,
    /// Relative objective gap for splitqp.
    pub objective_gap: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(source: ProblemSource, n: usize, seed: u64, method: Method) -> Self {
        Self {
            source,
            n,
            seed,
            constraints: ConstraintBudget::Count(0),
            mu_fraction: 0.0,
            method,
            trials: 100,
            variance: DEFAULT_VARIANCE,
            network: NetworkKind::Bitonic,
            tiebreak: true,
            tol: 1e-4,
            max_iter: 5000,
            birkhoff_scheme: RegScheme::Vector,
            birkhoff_columns: 4,
            objective_gap: Some(0.05),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mu_fraction) {
            return Err(Error::InvalidArgument(format!("μ fraction {} outside [0, 1)", self.mu_fraction)));
        }
        if self.n < 2 && !matches!(self.source, ProblemSource::File { .. }) {
            return Err(Error::InvalidArgument("n must be at least 2".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("at least one rounding trial is required".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub generate: f64,
    pub solve: f64,
    pub recover: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: String,
    pub config: ExperimentConfig,
    pub n: usize,
    pub permutation: PermutationVec,
    pub two_sum: f64,
    pub lower_bound: f64,
    pub r_score: usize,
    /// `τ(π, truth)` and `τ(reverse(π), truth)` when ground truth is known.
    pub kendall_tau: Option<f64>,
    pub kendall_tau_reversed: Option<f64>,
    pub truth_two_sum: Option<f64>,
    pub lambda2: f64,
    pub mu: f64,
    pub mu_limit: f64,
    pub constraints_used: usize,
    /// Convex method run without ordering constraints.
    pub no_side_information: bool,
    /// Disconnected similarity graph or degenerate Fiedler vector.
    pub degenerate: bool,
    pub converged: bool,
    pub solver_iterations: usize,
    pub max_violation: f64,
    pub seconds: PhaseTimes,
    pub trace: Vec<FwRecord>,
}

impl ResultRecord {
    pub fn best_tau(&self) -> Option<f64> {
        Some(self.kendall_tau?.max(self.kendall_tau_reversed?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn generate(config: &ExperimentConfig) -> Result<Instance> {
    let mut rng = substream(config.seed, STREAM_GENERATE);
    match &config.source {
        ProblemSource::Markov { b, sigma, samples } => markov_chain_cov(config.n, *b, *sigma, *samples, &mut rng),
        ProblemSource::ConsecutiveOnes { cols, block_min, block_max, flip_prob } => {
            consecutive_ones_instance(config.n, *cols, (*block_min, *block_max), *flip_prob, &mut rng)
        }
        ProblemSource::PreR => pre_r_instance(config.n, &mut rng),
        ProblemSource::File { path, format } => {
            Ok(Instance { similarity: read_similarity(path, *format)?, truth: None, incidence: None })
        }
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultRecord> {
    config.validate()?;
    let clock = Instant::now();
    let instance = generate(config)?;
    let t_generate = clock.elapsed().as_secs_f64();
    run_on_instance(config, &instance, t_generate)
}

pub fn run_on_instance(config: &ExperimentConfig, instance: &Instance, t_generate: f64) -> Result<ResultRecord> {
    config.validate()?;
    let a = &instance.similarity;
    let n = a.n();
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let clock = Instant::now();
    let base = LaplacianOperator::from_matrix(a.clone());
    let fiedler = fiedler_default(&base)?;
    let base = base.with_lambda2(fiedler.lambda2);
    let count = config.constraints.resolve(n);
    let side = if count > 0 {
        let truth = instance
            .truth
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("ordering constraints need a known ground truth".into()))?;
        sample_ordering_constraints(truth, count, &mut substream(config.seed, STREAM_CONSTRAINTS))?
    } else {
        SideConstraints::empty()
    };
    let use_tiebreak = config.tiebreak && side.is_empty();
    let mut y_rng = substream(config.seed, STREAM_Y);
    let y = YMatrix::sorted_uniform(n, config.birkhoff_columns.max(1), &mut y_rng);
    let limit = match config.method {
        Method::FwBirkhoff => mu_limit(config.birkhoff_scheme, fiedler.lambda2, &y),
        _ => fiedler.lambda2,
    };
    let mu = match config.method {
        Method::FwBirkhoff => config.mu_fraction * limit,
        _ => fiedler_fraction_mu(&base, config.mu_fraction)?,
    };
    let l = base.clone().with_mu(mu)?;
    let mut rounding_rng = substream(config.seed, STREAM_ROUNDING);

    let mut trace = Vec::new();
    let mut degenerate = fiedler.disconnected;
    let (converged, iterations, relaxed): (bool, usize, Relaxed) = match config.method {
        Method::Spectral => {
            let o = spectral_order_with(&base, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            degenerate |= o.degenerate;
            (true, o.fiedler.iterations, Relaxed::Exact(o.permutation))
        }
        Method::FwPerm => {
            let lmo = if use_tiebreak { LmoKind::Tiebroken } else { LmoKind::Permutahedron };
            let problem = TwoSumProblem::permutahedron(l.clone(), side.clone());
            let cfg = FwConfig {
                max_iter: config.max_iter,
                gap_tol_relative: config.tol.max(1e-12),
                step: StepRule::LineSearch,
                penalty_weight: 0.0,
            };
            let t = fw_solve_escalating(&problem, &cfg, lmo)?;
            trace = t.records;
            (t.point.converged, t.point.iterations, Relaxed::Vector(t.point.x))
        }
        Method::FwBirkhoff => {
            let problem = TwoSumProblem {
                laplacian: l.clone(),
                constraints: side.clone(),
                polytope: PolytopeChoice::Birkhoff { y, scheme: config.birkhoff_scheme },
            };
            let cfg = FwConfig {
                max_iter: config.max_iter,
                gap_tol_relative: config.tol.max(1e-12),
                step: StepRule::LineSearch,
                penalty_weight: 0.0,
            };
            let t = fw_solve_escalating(&problem, &cfg, LmoKind::Assignment)?;
            trace = t.records;
            let m = t.point.matrix.expect("Birkhoff runs return a matrix");
            (t.point.converged, t.point.iterations, Relaxed::Matrix(m))
        }
        Method::Splitqp => {
            let net = network(config.network, n)?;
            let poly = SnPolytope::permutahedron(&net);
            let qp = assemble(&poly, &l, &side, use_tiebreak)?;
            let start = spectral_order_with(&base, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            let warm = poly.lift_permutation(&start.permutation)?;
            let settings = QpSettings {
                eps_abs: config.tol,
                eps_rel: config.tol,
                max_iter: config.max_iter,
                objective_gap_rel: config.objective_gap,
                polish: true,
                restarts: 1,
            };
            let sol = solve(&qp, &settings, Some(&warm), &mut substream(config.seed, STREAM_SOLVER))?;
            (sol.converged(), sol.iterations, Relaxed::Vector(poly.project_input(&sol.x)?))
        }
    };
    let t_solve = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (permutation, max_violation) = match &relaxed {
        Relaxed::Exact(p) => (p.clone(), side.max_violation(&p.to_f64())),
        Relaxed::Vector(x) => {
            let r = sample_round(x, config.trials, config.variance, &mut rounding_rng, &base)?;
            (r.permutation, side.max_violation(x))
        }
        Relaxed::Matrix(m) => {
            let x = m.project_to_vector();
            let r = sample_round(&x, config.trials, config.variance, &mut rounding_rng, &base)?;
            let rb = sample_round_birkhoff(m, config.trials, &mut rounding_rng, &base)?;
            let best = if rb.two_sum < r.two_sum { rb } else { r };
            (best.permutation, side.max_violation(&x))
        }
    };
    let t_recover = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let value = two_sum(&base, &permutation);
    let lb = spectral_lower_bound(&base)?;
    let rs = r_score(&a.reorder(&permutation)?);
    let (tau, tau_rev, truth_value) = match &instance.truth {
        Some(t) => (
            Some(kendall_tau(&permutation, t)?),
            Some(kendall_tau(&permutation.reversed(), t)?),
            Some(two_sum(&base, t)),
        ),
        None => (None, None, None),
    };
    let t_score = clock.elapsed().as_secs_f64();

    Ok(ResultRecord {
        schema: SCHEMA.to_string(),
        config: config.clone(),
        n,
        permutation,
        two_sum: value,
        lower_bound: lb.value,
        r_score: rs,
        kendall_tau: tau,
        kendall_tau_reversed: tau_rev,
        truth_two_sum: truth_value,
        lambda2: fiedler.lambda2,
        mu,
        mu_limit: limit,
        constraints_used: side.len(),
        no_side_information: config.method != Method::Spectral && side.is_empty(),
        degenerate,
        converged,
        solver_iterations: iterations,
        max_violation,
        seconds: PhaseTimes { generate: t_generate, solve: t_solve, recover: t_recover, score: t_score },
        trace,
    })
}

enum Relaxed {
    Exact(PermutationVec),
    Vector(Vec<f64>),
    Matrix(DoublyStochastic),
}

/// Runs independent configurations in parallel; results keep the input order.
pub fn sweep(configs: &[ExperimentConfig]) -> Vec<Result<ResultRecord>> {
    configs.par_iter().map(run_experiment).collect()
}

/// The grid of protocol levels for one source and size: constraint budgets
/// `{0, n/2, n, 3n/2}`, `μ` fractions `{0, 0.5, 0.9}`, and the given methods and seeds.
pub fn protocol_grid(source: &ProblemSource, n: usize, seeds: &[u64], methods: &[Method]) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for &seed in seeds {
        for &method in methods {
            for budget in [0.0, 0.5, 1.0, 1.5] {
                for fraction in [0.0, 0.5, 0.9] {
                    if method == Method::Spectral && (budget > 0.0 || fraction > 0.0) {
                        continue;
                    }
                    let mut c = ExperimentConfig::new(source.clone(), n, seed, method);
                    c.constraints = ConstraintBudget::FractionOfN(budget);
                    c.mu_fraction = fraction;
                    out.push(c);
                }
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    schema: &'a str,
    method: Method,
    n: usize,
    seed: u64,
    constraints: usize,
    mu_fraction: f64,
    mu: f64,
    two_sum: f64,
    lower_bound: f64,
    r_score: usize,
    kendall_tau: Option<f64>,
    kendall_tau_reversed: Option<f64>,
    converged: bool,
    iterations: usize,
    no_side_information: bool,
    seconds_solve: f64,
    seconds_total: f64,
}

/// One aggregate row per record.
pub fn records_to_csv(records: &[ResultRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        let s = r.seconds;
        w.serialize(CsvRow {
            schema: &r.schema,
            method: r.config.method,
            n: r.n,
            seed: r.config.seed,
            constraints: r.constraints_used,
            mu_fraction: r.config.mu_fraction,
            mu: r.mu,
            two_sum: r.two_sum,
            lower_bound: r.lower_bound,
            r_score: r.r_score,
            kendall_tau: r.kendall_tau,
            kendall_tau_reversed: r.kendall_tau_reversed,
            converged: r.converged,
            iterations: r.solver_iterations,
            no_side_information: r.no_side_information,
            seconds_solve: s.solve,
            seconds_total: s.generate + s.solve + s.recover + s.score,
        })
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Long-format objective-versus-time rows: `run,method,iter,objective,gap,seconds`.
pub fn traces_to_csv(records: &[ResultRecord]) -> String {
    let mut s = String::from("run,method,iter,objective,gap,seconds\n");
    for (k, r) in records.iter().enumerate() {
        let method = serde_json::to_value(r.config.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        for t in &r.trace {
            s.push_str(&format!("{k},{method},{},{},{},{}\n", t.iter, t.objective, t.gap, t.seconds));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::DenseMatrix;

    #[test]
    fn markov_shuffle_is_consistent() {
        let inst = markov_chain_cov(12, 0.9, 0.5, 30, &mut substream(3, 0)).unwrap();
        let truth = inst.truth.unwrap();
        let unshuffled = inst.similarity.reorder(&truth).unwrap();
        // the same draws without the shuffle
        let mut twin = substream(3, 0);
        let again = markov_chain_cov(12, 0.9, 0.5, 30, &mut twin).unwrap();
        assert_eq!(again.similarity, inst.similarity);
        assert!(unshuffled.data().iter().all(|v| *v >= 0.0));
        // A_shuffled[i][j] = A[truth(i)][truth(j)]
        let t = truth.entries();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(inst.similarity.get(i, j), unshuffled.get(t[i] - 1, t[j] - 1));
            }
        }
    }

    #[test]
    fn markov_independent_coordinates() {
        let inst = markov_chain_cov(5, 0.0, 1.0, 4000, &mut substream(1, 0)).unwrap();
        let a = &inst.similarity;
        for i in 0..5 {
            assert!((a.get(i, i) - 1.0).abs() < 0.1);
            for j in 0..5 {
                if i != j {
                    assert!(a.get(i, j) < 0.1);
                }
            }
        }
        assert!(markov_chain_cov(5, 0.0, 1.0, 1, &mut substream(1, 0)).is_err());
    }

    #[test]
    fn consecutive_ones_noiseless_is_robinson() {
        for seed in 0..5 {
            let inst = consecutive_ones_instance(20, 15, (2, 8), 0.0, &mut substream(seed, 0)).unwrap();
            let sorted = inst.similarity.reorder(inst.truth.as_ref().unwrap()).unwrap();
            assert_eq!(r_score(&sorted), 0);
        }
        let big = consecutive_ones_instance(59, 70, (3, 15), 0.0, &mut substream(0, 0)).unwrap();
        assert_eq!(big.incidence.as_ref().map(|m: &DenseMatrix| (m.rows, m.cols)), Some((59, 70)));
        assert!(consecutive_ones_instance(5, 5, (2, 6), 0.0, &mut substream(0, 0)).is_err());
    }

    #[test]
    fn consecutive_ones_heavy_noise_breaks_robinson() {
        for seed in 0..20 {
            let inst = consecutive_ones_instance(20, 15, (2, 8), 0.5, &mut substream(seed, 0)).unwrap();
            let sorted = inst.similarity.reorder(inst.truth.as_ref().unwrap()).unwrap();
            assert!(r_score(&sorted) > 0);
        }
    }

    #[test]
    fn sampled_constraints_hold_for_truth() {
        let inst = pre_r_instance(15, &mut substream(2, 0)).unwrap();
        let truth = inst.truth.unwrap();
        let side = sample_ordering_constraints(&truth, 20, &mut substream(2, 1)).unwrap();
        assert_eq!(side.max_violation(&truth.to_f64()), 0.0);
    }

    #[test]
    fn config_validation_and_budget() {
        let mut c = ExperimentConfig::new(ProblemSource::PreR, 10, 0, Method::Spectral);
        assert!(c.validate().is_ok());
        c.mu_fraction = 1.0;
        assert!(c.validate().is_err());
        assert_eq!(ConstraintBudget::FractionOfN(1.5).resolve(10), 15);
        assert_eq!(ConstraintBudget::FractionOfN(0.5).resolve(9), 5);
    }

    #[test]
    fn spectral_run_recovers_pre_r() {
        let c = ExperimentConfig::new(ProblemSource::PreR, 30, 11, Method::Spectral);
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.best_tau(), Some(1.0));
        assert!(!r.no_side_information);
        assert!(r.two_sum >= r.lower_bound);
    }

    #[test]
    fn convex_without_constraints_is_flagged() {
        let mut c = ExperimentConfig::new(ProblemSource::PreR, 8, 5, Method::FwPerm);
        c.trials = 5;
        let r = run_experiment(&c).unwrap();
        assert!(r.no_side_information);
    }

    #[test]
    fn records_are_deterministic_and_serialize() {
        let mut c = ExperimentConfig::new(ProblemSource::markov_default(), 12, 4, Method::Splitqp);
        c.constraints = ConstraintBudget::FractionOfN(1.0);
        c.trials = 10;
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.permutation, b.permutation);
        assert_eq!(a.two_sum, b.two_sum);
        assert_eq!(a.solver_iterations, b.solver_iterations);
        let json: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        assert_eq!(json["schema"], SCHEMA);
        let csv = records_to_csv(&[a]).unwrap();
        assert!(csv.starts_with("schema,method,n,seed"));
    }

    #[test]
    fn grid_shape() {
        let g = protocol_grid(&ProblemSource::PreR, 10, &[1, 2], &[Method::Spectral, Method::FwPerm]);
        assert_eq!(g.len(), 2 * (1 + 12));
    }
}
