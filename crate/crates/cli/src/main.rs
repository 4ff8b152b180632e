use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use snperm_core::harness::{
    generate, records_to_csv, run_experiment, substream, sweep, traces_to_csv, ConstraintBudget,
    ExperimentConfig, Instance, Method, ProblemSource, ResultRecord,
};
use snperm_core::io::{
    parse_permutation, read_similarity, write_binary01, write_csv, write_permutation, write_similarity_matrix_market,
    DenseMatrix, MatrixFormat,
};
use snperm_core::model::{kendall_tau, r_score, sample_ordering_constraints, spectral_lower_bound, two_sum, two_sum_double};
use snperm_core::snpoly::{export_problem, QuadraticObjective};
use snperm_core::spectral::with_lambda2;
use snperm_core::splitqp::fiedler_fraction_mu;
use snperm_core::{sortnet, Error, LaplacianOperator, NetworkKind, SideConstraints, SnPolytope};

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_INVALID_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "snperm", version, about = "Seriation with sorting-network relaxations of the permutahedron")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance.
    Gen(GenArgs),
    /// Run one experiment and print its JSON record.
    Solve(SolveArgs),
    /// Write the relaxation of an instance as an MPS file.
    Export(ExportArgs),
    /// Score a permutation against a similarity matrix.
    Score(ScoreArgs),
    /// Run a grid of experiments in parallel.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceKind {
    Markov,
    ConsecutiveOnes,
    PreR,
}

#[derive(Clone, Copy, ValueEnum)]
enum NetworkArg {
    Bitonic,
    OddEven,
}

impl From<NetworkArg> for NetworkKind {
    fn from(n: NetworkArg) -> Self {
        match n {
            NetworkArg::Bitonic => NetworkKind::Bitonic,
            NetworkArg::OddEven => NetworkKind::OddEven,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Mtx,
    Csv,
    Binary,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Mtx => MatrixFormat::MatrixMarket,
            FormatArg::Csv => MatrixFormat::Csv,
            FormatArg::Binary => MatrixFormat::Binary01,
        }
    }
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Synthetic generator, ignored when --input is given.
    #[arg(long, value_enum, default_value = "markov")]
    source: SourceKind,
    /// Read the similarity matrix (or a 0-1 incidence matrix) from a file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Format of --input; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bit-flip probability for the consecutive-ones generator.
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
}

impl ProblemArgs {
    fn source(&self) -> ProblemSource {
        if let Some(path) = &self.input {
            return ProblemSource::File { path: path.clone(), format: self.format.map(Into::into) };
        }
        match self.source {
            SourceKind::Markov => ProblemSource::markov_default(),
            SourceKind::ConsecutiveOnes => ProblemSource::munsingen_like(self.flip),
            SourceKind::PreR => ProblemSource::PreR,
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// spectral, fw_perm, fw_birkhoff or splitqp.
    #[arg(long, default_value = "splitqp")]
    method: String,
    /// Ordering constraints: a count such as `15` or a multiple of n such as `0.5n`.
    #[arg(long, default_value = "0")]
    constraints: String,
    /// μ as a fraction of the largest convexity-preserving value.
    #[arg(long, default_value_t = 0.0)]
    mu_fraction: f64,
    #[arg(long, value_enum, default_value = "bitonic")]
    network: NetworkArg,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
}

fn parse_budget(s: &str) -> Result<ConstraintBudget> {
    let s = s.trim();
    if let Some(f) = s.strip_suffix('n') {
        let f: f64 = if f.is_empty() { 1.0 } else { f.parse().with_context(|| format!("bad constraint level {s}"))? };
        return Ok(ConstraintBudget::FractionOfN(f));
    }
    Ok(ConstraintBudget::Count(s.parse().with_context(|| format!("bad constraint count {s}"))?))
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let method: Method = self.method.parse()?;
        let mut cfg = ExperimentConfig::new(self.problem.source(), self.problem.n, self.problem.seed, method);
        cfg.constraints = parse_budget(&self.constraints)?;
        cfg.mu_fraction = self.mu_fraction;
        cfg.network = self.network.into();
        cfg.tol = self.tol;
        cfg.trials = self.trials;
        cfg.max_iter = self.max_iter;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Output matrix file.
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the hidden ordering, one position per line.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the 0-1 incidence matrix instead of its similarity (consecutive-ones only).
    #[arg(long)]
    incidence: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the record here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also print the 2-SUM in the double-sum convention.
    #[arg(long)]
    double_sum: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "0")]
    constraints: String,
    #[arg(long, default_value_t = 0.0)]
    mu_fraction: f64,
    #[arg(long, value_enum, default_value = "bitonic")]
    network: NetworkArg,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Similarity matrix.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Permutation file: position of each object, one per line.
    #[arg(long)]
    perm: PathBuf,
    /// Ground-truth permutation for Kendall τ.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    double_sum: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "spectral,fw_perm,splitqp")]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.9")]
    mu_fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5n,1n,1.5n")]
    constraint_levels: Vec<String>,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Directory for records.jsonl, results.csv and traces.csv.
    #[arg(short, long)]
    output: PathBuf,
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn load_instance(problem: &ProblemArgs) -> Result<Instance> {
    let cfg = ExperimentConfig::new(problem.source(), problem.n, problem.seed, Method::Spectral);
    cfg.validate()?;
    Ok(generate(&cfg)?)
}

fn cmd_gen(args: &GenArgs) -> Result<bool> {
    if args.problem.input.is_some() {
        bail!(Error::InvalidArgument("gen creates synthetic instances; drop --input".into()));
    }
    let inst = load_instance(&args.problem)?;
    let format: MatrixFormat =
        args.problem.format.map(Into::into).unwrap_or_else(|| MatrixFormat::from_path(&args.output));
    let text = if args.incidence || format == MatrixFormat::Binary01 {
        let m = inst
            .incidence
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("only the consecutive-ones source has an incidence matrix".into()))?;
        match format {
            MatrixFormat::Binary01 => write_binary01(m),
            MatrixFormat::Csv => write_csv(m),
            MatrixFormat::MatrixMarket => snperm_core::io::write_matrix_market_coordinate(m, false),
        }
    } else {
        let a = &inst.similarity;
        match format {
            MatrixFormat::Csv => write_csv(&DenseMatrix::new(a.n(), a.n(), a.data().to_vec())?),
            _ => write_similarity_matrix_market(a),
        }
    };
    write_out(Some(&args.output), &text)?;
    if let (Some(path), Some(truth)) = (&args.truth, &inst.truth) {
        write_out(Some(path), &write_permutation(truth))?;
    }
    Ok(true)
}

fn cmd_solve(args: &SolveArgs) -> Result<bool> {
    let cfg = args.run.config()?;
    let record = run_experiment(&cfg)?;
    let mut value = serde_json::to_value(&record)?;
    if args.double_sum {
        value["two_sum_double"] = serde_json::json!(2.0 * record.two_sum);
    }
    write_out(args.output.as_deref(), &serde_json::to_string_pretty(&value)?)?;
    Ok(record.converged)
}

fn cmd_export(args: &ExportArgs) -> Result<bool> {
    let inst = load_instance(&args.problem)?;
    let a = inst.similarity;
    let n = a.n();
    let (l, _) = with_lambda2(LaplacianOperator::from_matrix(a))?;
    let mu = fiedler_fraction_mu(&l, args.mu_fraction)?;
    let mut q = l.dense();
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] -= mu * (f64::from(u8::from(i == j)) - 1.0 / n as f64);
        }
    }
    let count = parse_budget(&args.constraints)?.resolve(n);
    let side = if count > 0 {
        let truth = inst
            .truth
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("ordering constraints need a known ground truth".into()))?;
        sample_ordering_constraints(truth, count, &mut substream(args.problem.seed, 1))?
    } else {
        SideConstraints::empty().with_tiebreak(n)
    };
    let poly = SnPolytope::permutahedron(&sortnet::network(args.network.into(), n)?);
    let objective = QuadraticObjective::dense_inputs(&poly, &q)?;
    write_out(Some(&args.output), &export_problem(&poly, &objective, &side)?)?;
    Ok(true)
}

fn cmd_score(args: &ScoreArgs) -> Result<bool> {
    let a = read_similarity(&args.input, args.format.map(Into::into))?;
    let perm = parse_permutation(&fs::read_to_string(&args.perm)?)?;
    if perm.len() != a.n() {
        bail!(Error::DimensionMismatch { expected: a.n(), got: perm.len() });
    }
    let (l, _) = with_lambda2(LaplacianOperator::from_matrix(a.clone()))?;
    let mut out = serde_json::json!({
        "n": a.n(),
        "two_sum": two_sum(&l, &perm),
        "lower_bound": spectral_lower_bound(&l)?.value,
        "r_score": r_score(&a.reorder(&perm)?),
    });
    if args.double_sum {
        out["two_sum_double"] = serde_json::json!(two_sum_double(&l, &perm));
    }
    if let Some(path) = &args.truth {
        let truth = parse_permutation(&fs::read_to_string(path)?)?;
        out["kendall_tau"] = serde_json::json!(kendall_tau(&perm, &truth)?);
        out["kendall_tau_reversed"] = serde_json::json!(kendall_tau(&perm.reversed(), &truth)?);
    }
    write_out(None, &serde_json::to_string_pretty(&out)?)?;
    Ok(true)
}

fn cmd_sweep(args: &SweepArgs) -> Result<bool> {
    let methods: Vec<Method> = args.methods.iter().map(|m| m.parse()).collect::<snperm_core::Result<_>>()?;
    let seeds: Vec<u64> = (args.problem.seed..args.problem.seed + args.seeds).collect();
    let source = args.problem.source();
    let mut configs = Vec::new();
    for &seed in &seeds {
        for &method in &methods {
            for (li, level) in args.constraint_levels.iter().enumerate() {
                for (fi, &fraction) in args.mu_fractions.iter().enumerate() {
                    // the spectral baseline ignores both knobs
                    if method == Method::Spectral && (li > 0 || fi > 0) {
                        continue;
                    }
                    let mut cfg = ExperimentConfig::new(source.clone(), args.problem.n, seed, method);
                    if method != Method::Spectral {
                        cfg.constraints = parse_budget(level)?;
                        cfg.mu_fraction = fraction;
                    }
                    cfg.tol = args.tol;
                    cfg.trials = args.trials;
                    cfg.validate()?;
                    configs.push(cfg);
                }
            }
        }
    }
    let results = sweep(&configs);
    let mut records: Vec<ResultRecord> = Vec::new();
    let mut all_converged = true;
    for (cfg, r) in configs.iter().zip(results) {
        match r {
            Ok(rec) => {
                all_converged &= rec.converged;
                records.push(rec);
            }
            Err(e) => {
                eprintln!("seed {} {:?}: {e}", cfg.seed, cfg.method);
                all_converged = false;
            }
        }
    }
    fs::create_dir_all(&args.output)?;
    let jsonl: Vec<String> = records.iter().map(|r| r.to_json()).collect::<snperm_core::Result<_>>()?;
    fs::write(args.output.join("records.jsonl"), jsonl.join("\n") + "\n")?;
    fs::write(args.output.join("results.csv"), records_to_csv(&records)?)?;
    fs::write(args.output.join("traces.csv"), traces_to_csv(&records))?;
    eprintln!("{} runs written to {}", records.len(), args.output.display());
    Ok(all_converged)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NotConverged { .. }) => EXIT_NOT_CONVERGED,
        _ => EXIT_INVALID_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Export(a) => cmd_export(a),
        Command::Score(a) => cmd_score(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("solver did not converge");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
