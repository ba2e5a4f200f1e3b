mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use trialdesign::baselines::DEFAULT_REPLICATES;
use trialdesign::evaluation::{mean_relative_gap, DEFAULT_RAND_DESIGNS, DEFAULT_Z0_COUNT};
use trialdesign::limits::DEFAULT_TIME_LIMIT;
use trialdesign::report::evaluate_allocation;
use trialdesign::{
    encode_csv, generate_synthetic, rand_report, random_balanced_allocations, solve_exact_in, solve_lb_in,
    surrogate_gap_scan, variance_reduction, CovariateMatrix64, CovariateSpace64, DesignReport, SolveLimits,
    SolveMode, SpectralCache, SyntheticSpec,
};

use crate::io::{
    allocation_csv, covariates_csv, default_names, emit_json, read_allocation, read_covariates, read_schema,
    sha256_hex, write_bytes, CliError, CliResult,
};

#[derive(Parser, Debug)]
#[command(name = "trialdesign", version, about = "Covariate-aware balanced treatment allocation")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "TRIALDESIGN_THREADS")]
    threads: Option<usize>,
    /// Log solver progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic ±1 covariate matrix as CSV.
    Synth(SynthArgs),
    /// Compute an allocation and write its report.
    Design(DesignArgs),
    /// Evaluate a stored allocation against random designs.
    Evaluate(EvaluateArgs),
    /// Exact-versus-surrogate objective pairs over random allocations.
    Scan(ScanArgs),
    /// Encode categorical trial records into a covariate matrix.
    Encode(EncodeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Exact,
    Lb,
    Rand,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Auto,
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SpaceArg {
    Hypercube,
    Rows,
}

impl SpaceArg {
    fn space(self) -> CovariateSpace64 {
        match self {
            SpaceArg::Hypercube => CovariateSpace64::FullHypercube,
            SpaceArg::Rows => CovariateSpace64::Rows,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DesignArgs {
    /// Covariate CSV with a header row; the first column must be all ones.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Lb)]
    method: MethodArg,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = DEFAULT_TIME_LIMIT)]
    time_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = SpaceArg::Hypercube)]
    space: SpaceArg,
    /// Random replicates for `--method rand`.
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    replicates: usize,
    /// Report JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allocation CSV path.
    #[arg(long)]
    allocation_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Allocation CSV with a `treatment` column of ±1.
    #[arg(long)]
    allocation: PathBuf,
    #[arg(long, default_value_t = DEFAULT_Z0_COUNT)]
    z0_count: usize,
    #[arg(long, default_value_t = DEFAULT_RAND_DESIGNS)]
    rand_designs: usize,
    /// Random replicates for the quantile benchmark.
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SpaceArg::Hypercube)]
    space: SpaceArg,
    /// Summary JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-covariate-vector variance rows as CSV.
    #[arg(long)]
    rows_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ScanArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scatter CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EncodeArgs {
    /// Raw records CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// TOML schema with `[[columns]]` entries.
    #[arg(long)]
    schema: PathBuf,
    /// Encoded covariate CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Every output names the command, echoes its parameters and hashes its
/// inputs.
#[derive(Serialize)]
struct Envelope<'a, P: Serialize, B: Serialize> {
    command: &'static str,
    input_sha256: &'a str,
    parameters: &'a P,
    #[serde(flatten)]
    body: B,
}

fn synth(args: &SynthArgs) -> CliResult<()> {
    let spec = SyntheticSpec::new(args.n, args.p, args.seed)?;
    let h: CovariateMatrix64 = generate_synthetic(&spec);
    let bytes = covariates_csv(&h, &default_names(args.p))?;
    write_bytes(&args.out, &bytes)?;
    #[derive(Serialize)]
    struct Body {
        output_sha256: String,
        n: usize,
        p: usize,
        synthetic_retries: u32,
        gram_condition: f64,
    }
    let body = Body {
        output_sha256: sha256_hex(&bytes),
        n: h.n(),
        p: h.p(),
        synthetic_retries: h.diagnostics().synthetic_retries,
        gram_condition: h.diagnostics().gram_condition,
    };
    emit_json(
        &Envelope { command: "synth", input_sha256: "", parameters: args, body },
        None,
    )
}

fn limits(args: &DesignArgs) -> SolveLimits {
    SolveLimits {
        epsilon: args.epsilon,
        time_limit: Some(args.time_limit),
        seed: args.seed,
        mode: match args.mode {
            ModeArg::Auto => SolveMode::Auto,
            ModeArg::Exact => SolveMode::Exact,
            ModeArg::Heuristic => SolveMode::Heuristic,
        },
        ..SolveLimits::default()
    }
}

fn design(args: &DesignArgs) -> CliResult<()> {
    let (h, _, hash) = read_covariates(&args.input)?;
    info!("design: n = {}, p = {}, method {:?}", h.n(), h.p(), args.method);
    let space = args.space.space();
    let report: DesignReport = match args.method {
        MethodArg::Exact => solve_exact_in(&h, space, &limits(args))?,
        MethodArg::Lb => solve_lb_in(&h, space, &limits(args))?,
        MethodArg::Rand => rand_report(&h, &space, args.replicates, args.seed)?,
    };
    if let Some(path) = &args.allocation_out {
        write_bytes(path, &allocation_csv(&report.allocation)?)?;
    }
    #[derive(Serialize)]
    struct Body<'a> {
        report: &'a DesignReport,
    }
    emit_json(
        &Envelope {
            command: "design",
            input_sha256: &hash,
            parameters: args,
            body: Body { report: &report },
        },
        args.out.as_deref(),
    )
}

fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let (h, _, hash) = read_covariates(&args.input)?;
    let (x, allocation_hash) = read_allocation(&args.allocation)?;
    let space = args.space.space();
    let cache = SpectralCache::new(&h)?;
    let objectives = evaluate_allocation(&cache, &x, &space)?;
    let vr = variance_reduction(&h, &x, args.z0_count, args.rand_designs, args.seed)?;
    let benchmark = rand_report(&h, &space, args.replicates, args.seed)?
        .rand
        .expect("rand reports carry quantiles");
    if let Some(path) = &args.rows_out {
        let mut w = csv::Writer::from_writer(Vec::new());
        let p = h.p();
        let header: Vec<String> = (0..p)
            .map(|k| format!("z{k}"))
            .chain(["mean_random", "optimal", "reduction"].map(String::from))
            .collect();
        w.write_record(&header).map_err(trialdesign::DesignError::from)?;
        for row in &vr.per_z0 {
            let cells: Vec<String> = row
                .z0
                .iter()
                .map(|v| v.to_string())
                .chain([row.mean_random, row.optimal, row.reduction].map(|v| v.to_string()))
                .collect();
            w.write_record(&cells).map_err(trialdesign::DesignError::from)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| trialdesign::DesignError::Csv(e.to_string()))?;
        write_bytes(path, &bytes)?;
    }
    let reductions: Vec<f64> = vr.per_z0.iter().map(|r| r.reduction).collect();
    #[derive(Serialize)]
    struct Objectives {
        surrogate_value: f64,
        original_value: Option<f64>,
        lb_objective: f64,
    }
    #[derive(Serialize)]
    struct Reduction {
        fraction_positive: f64,
        mean_reduction: Option<f64>,
        min_reduction: Option<f64>,
        max_reduction: Option<f64>,
        z0_count: usize,
        rand_designs: usize,
        redrawn: usize,
    }
    #[derive(Serialize)]
    struct Body<'a> {
        allocation_sha256: &'a str,
        objectives: Objectives,
        variance_reduction: Reduction,
        rand: trialdesign::report::RandSummary,
    }
    let body = Body {
        allocation_sha256: &allocation_hash,
        objectives: Objectives {
            surrogate_value: objectives.surrogate_value,
            original_value: objectives.original_value,
            lb_objective: objectives.lb_objective,
        },
        variance_reduction: Reduction {
            fraction_positive: vr.fraction_positive,
            mean_reduction: (!reductions.is_empty())
                .then(|| reductions.iter().sum::<f64>() / reductions.len() as f64),
            min_reduction: reductions.iter().copied().reduce(f64::min),
            max_reduction: reductions.iter().copied().reduce(f64::max),
            z0_count: args.z0_count,
            rand_designs: vr.rand_designs,
            redrawn: vr.redrawn,
        },
        rand: benchmark,
    };
    emit_json(
        &Envelope { command: "evaluate", input_sha256: &hash, parameters: args, body },
        args.out.as_deref(),
    )
}

fn scan(args: &ScanArgs) -> CliResult<()> {
    let (h, _, hash) = read_covariates(&args.input)?;
    let allocations = random_balanced_allocations(h.n(), args.replicates, args.seed)?;
    let points = surrogate_gap_scan(&h, &allocations)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::from(trialdesign::DesignError::from(e));
    w.write_record(["replicate", "original", "surrogate", "relative_gap"]).map_err(csv_err)?;
    for (i, pt) in points.iter().enumerate() {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        w.write_record([i.to_string(), opt(pt.original), pt.surrogate.to_string(), opt(pt.relative_gap())])
            .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| trialdesign::DesignError::Csv(e.to_string()))?;
    write_bytes(&args.out, &bytes)?;
    #[derive(Serialize)]
    struct Body {
        output_sha256: String,
        points: usize,
        confounded: usize,
        mean_relative_gap: Option<f64>,
    }
    let body = Body {
        output_sha256: sha256_hex(&bytes),
        points: points.len(),
        confounded: points.iter().filter(|p| p.original.is_none()).count(),
        mean_relative_gap: mean_relative_gap(&points),
    };
    emit_json(&Envelope { command: "scan", input_sha256: &hash, parameters: args, body }, None)
}

fn encode(args: &EncodeArgs) -> CliResult<()> {
    let (schema, schema_hash) = read_schema(&args.schema)?;
    let data_hash = sha256_hex(&io::read_bytes(&args.data)?);
    let encoded = encode_csv::<f64>(&args.data, &schema)?;
    let bytes = covariates_csv(&encoded.matrix, &encoded.column_names)?;
    write_bytes(&args.out, &bytes)?;
    #[derive(Serialize)]
    struct Body<'a> {
        schema_sha256: &'a str,
        output_sha256: String,
        n: usize,
        p: usize,
        excluded_rows: usize,
        columns: &'a [String],
    }
    let body = Body {
        schema_sha256: &schema_hash,
        output_sha256: sha256_hex(&bytes),
        n: encoded.matrix.n(),
        p: encoded.matrix.p(),
        excluded_rows: encoded.excluded_rows,
        columns: &encoded.column_names,
    };
    emit_json(&Envelope { command: "encode", input_sha256: &data_hash, parameters: args, body }, None)
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Threads(e.to_string()))?;
    }
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Design(a) => design(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Scan(a) => scan(a),
        Command::Encode(a) => encode(a),
    }
}

fn report_error(e: &CliError) {
    let json = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    eprintln!("{json}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::FAILURE
        }
    }
}
