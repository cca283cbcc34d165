use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ccjs::confidence::{epsilon_ls, epsilon_ml, gamma, ConfidenceSpec, Framework};
use ccjs::divergence::{log_grid, MomentMethod};
use ccjs::eval::{default_zeta, score_recovery};
use ccjs::experiment::{self, EpsilonPoint, SweepConfig};
use ccjs::format::to_json_string;
use ccjs::problem::{InstanceParams, ProblemInstance};
use ccjs::rng::{stream, Stream};
use ccjs::solver::{self, InnerStep, Restart, SolverConfig};

#[derive(Parser)]
#[command(name = "ccjs", version, about = "Row-sparse recovery from Poisson MMV counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic instance and write it as JSON.
    Generate(GenerateArgs),
    /// Recover the row support of a stored instance.
    Solve(SolveArgs),
    /// Recovered row sparsity over a grid of constraint radii.
    SweepEpsilon(SweepEpsilonArgs),
    /// Empirical and certified recovery probability over intensities.
    SweepIntensity(SweepIntensityArgs),
    /// Mean and variance of the I-divergence of a Poisson draw.
    Moments(MomentsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepArg {
    Proximal,
    Subgradient,
}

#[derive(Clone, Copy, ValueEnum)]
enum RestartArg {
    Warm,
    Randomize,
}

#[derive(Args, Clone)]
struct InstanceOpts {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Measurement rows, unknown rows and columns.
    #[arg(long, value_name = "M,K,N", default_value = "30,50,10", value_parser = parse_dims)]
    dims: (usize, usize, usize),
    #[arg(long, default_value_t = 3)]
    sparsity: usize,
    #[arg(long, default_value_t = 1e3)]
    theta: f64,
    /// Confidence level parameter of the radii.
    #[arg(long, default_value_t = 0.05)]
    p: f64,
}

impl InstanceOpts {
    fn params(&self) -> InstanceParams {
        let (m, k, n) = self.dims;
        InstanceParams {
            m,
            k,
            n,
            s: self.sparsity,
            theta: self.theta,
            ..Default::default()
        }
    }
}

#[derive(Args, Clone)]
struct SolverOpts {
    #[arg(long, default_value_t = 3000)]
    max_inner: usize,
    #[arg(long, default_value_t = 30)]
    max_outer: usize,
    #[arg(long, value_enum, default_value = "proximal")]
    step: StepArg,
    #[arg(long, value_enum, default_value = "warm")]
    restart: RestartArg,
    /// End an inner solve once the constraint is met within tolerance.
    #[arg(long)]
    stop_on_boundary: bool,
}

impl SolverOpts {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            max_inner: self.max_inner,
            max_outer: self.max_outer,
            step: match self.step {
                StepArg::Proximal => InnerStep::Proximal,
                StepArg::Subgradient => InnerStep::Subgradient,
            },
            restart: match self.restart {
                RestartArg::Warm => Restart::Warm,
                RestartArg::Randomize => Restart::Randomize,
            },
            stop_on_boundary: self.stop_on_boundary,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    instance: InstanceOpts,
    /// Stored RIP constant of order 2s.
    #[arg(long)]
    delta_2s: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance document written by `generate`.
    instance: PathBuf,
    #[arg(long, default_value = "ls")]
    framework: Framework,
    #[arg(long, default_value_t = 0.05)]
    p: f64,
    /// Radius used in place of the formula value.
    #[arg(long)]
    epsilon_override: Option<f64>,
    /// Seed of the solver's starting point; defaults to the instance seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
}

#[derive(Args)]
struct SweepOpts {
    #[command(flatten)]
    instance: InstanceOpts,
    #[arg(long, default_value = "ls")]
    framework: Framework,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[command(flatten)]
    solver: SolverOpts,
    /// Trial rows as CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Encoding of the end-of-run summary on standard error.
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct SweepEpsilonArgs {
    #[command(flatten)]
    sweep: SweepOpts,
    #[arg(long, default_value_t = 1e2)]
    eps_lo: f64,
    #[arg(long, default_value_t = 1e9)]
    eps_hi: f64,
    #[arg(long, default_value_t = 15)]
    eps_points: usize,
    /// Add a grid point at each trial's formula radius.
    #[arg(long)]
    at_formula: bool,
}

#[derive(Args)]
struct SweepIntensityArgs {
    #[command(flatten)]
    sweep: SweepOpts,
    #[arg(long, default_value_t = 1e-2)]
    theta_lo: f64,
    #[arg(long, default_value_t = 1e9)]
    theta_hi: f64,
    #[arg(long, default_value_t = 20)]
    theta_points: usize,
    /// RIP constant for the certificates instead of the estimate.
    #[arg(long)]
    delta_2s: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    rip_supports: usize,
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long, default_value_t = 0.01)]
    lambda_lo: f64,
    #[arg(long, default_value_t = 1e3)]
    lambda_hi: f64,
    #[arg(long, default_value_t = 60)]
    points: usize,
    #[arg(long, default_value = "series")]
    method: MomentMethod,
    /// Series terms or Monte-Carlo draws per rate.
    #[arg(long, default_value_t = 1_000_000)]
    budget: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [m, k, n] = parts.as_slice() else {
        return Err(format!("expected M,K,N, got {s:?}"));
    };
    let num = |v: &str| v.parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(m)?, num(k)?, num(n)?))
}

fn open_out(path: Option<&Path>) -> anyhow::Result<Box<dyn Write + Send>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout()),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    let mut out = open_out(path)?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn require_json(format: OutputFormat, command: &str) -> anyhow::Result<()> {
    if format != OutputFormat::Json {
        bail!("{command} writes JSON only");
    }
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<()> {
    require_json(args.format, "generate")?;
    let opts = &args.instance;
    let mut inst = ProblemInstance::generate(&opts.params(), opts.seed)?;
    if let Some(d) = args.delta_2s {
        if !(0.0..1.0).contains(&d) {
            bail!("--delta-2s must lie in [0, 1), got {d}");
        }
        inst = inst.with_rip_delta(d);
    }
    let text = inst.to_json()?;
    match &args.out {
        Some(path) => inst.save(path)?,
        None => write_text(None, &text)?,
    }
    let (m, _, n) = inst.dims();
    let psi = inst.observations().total();
    eprintln!(
        "psi {psi}  gamma {}  epsilon_ls {}  epsilon_ml {}",
        gamma(inst.truth().matrix())?,
        epsilon_ls(psi, opts.p)?,
        epsilon_ml(m, n, opts.p)?
    );
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> anyhow::Result<()> {
    require_json(args.format, "solve")?;
    let inst = ProblemInstance::load(&args.instance)?;
    let system = inst.system();
    let spec = match args.epsilon_override {
        Some(eps) => ConfidenceSpec::with_epsilon(args.framework, args.p, eps)?,
        None => ConfidenceSpec::for_system(args.framework, &system, args.p)?,
    };
    let config = args.solver.config();
    let seed = args.seed.unwrap_or(inst.seed());
    let result = solver::solve(&system, &spec, &config, &mut stream(seed, Stream::SolverInit))
        .with_context(|| format!("solving {} with the {} statistic", args.instance.display(), args.framework))?;
    let truth = inst.truth().matrix();
    let zeta = default_zeta(truth)?;
    let report = score_recovery(&result.x_star, truth, zeta)?;
    let doc = serde_json::json!({
        "framework": args.framework,
        "p": args.p,
        "epsilon": spec.epsilon,
        "seed": seed,
        "zeta": zeta,
        "kkt_satisfied": result.kkt_satisfied(),
        "solver": result.to_json_value(),
        "report": report,
    });
    write_text(args.out.as_deref(), &to_json_string(&doc)?)?;
    eprintln!(
        "r0 {}  pattern_match {}  lambda {:e}  g {:e}",
        report.recovered.r0, report.pattern_match, result.lambda_star, result.g_residual
    );
    Ok(())
}

fn sweep_config(mut cfg: SweepConfig, opts: &SweepOpts) -> SweepConfig {
    cfg.params = opts.instance.params();
    cfg.p = opts.instance.p;
    cfg.trials = opts.trials;
    cfg.base_seed = opts.instance.seed;
    cfg.solver = opts.solver.config();
    cfg.output_path = opts.out.clone();
    cfg
}

fn report_summary(format: OutputFormat, json: serde_json::Value, line: String) -> anyhow::Result<()> {
    match format {
        OutputFormat::Json => eprintln!("{}", to_json_string(&json)?),
        OutputFormat::Csv => eprintln!("{line}"),
    }
    Ok(())
}

fn cmd_sweep_epsilon(args: &SweepEpsilonArgs) -> anyhow::Result<usize> {
    let opts = &args.sweep;
    let mut cfg = sweep_config(SweepConfig::epsilon_sensitivity(opts.framework), opts);
    cfg.epsilon_grid = if args.eps_points == 0 {
        Vec::new()
    } else {
        log_grid(args.eps_lo, args.eps_hi, args.eps_points)?
            .into_iter()
            .map(EpsilonPoint::Value)
            .collect()
    };
    if args.at_formula {
        cfg.epsilon_grid.push(EpsilonPoint::Formula);
    }
    let out = experiment::sweep_epsilon(&cfg, open_out(cfg.output_path.as_deref())?)?;
    let json = serde_json::json!(out
        .summaries
        .iter()
        .map(|s| serde_json::json!({
            "epsilon": s.epsilon,
            "completed": s.completed,
            "r0_mean": s.r0_mean,
            "r0_std": s.r0_std,
            "pattern_rate": s.pattern_rate,
        }))
        .collect::<Vec<_>>());
    let line = format!("{} trials, {} failed", out.trials.len(), out.failures());
    report_summary(opts.format, json, line)?;
    Ok(out.failures())
}

fn cmd_sweep_intensity(args: &SweepIntensityArgs) -> anyhow::Result<usize> {
    let opts = &args.sweep;
    let mut cfg = sweep_config(SweepConfig::intensity_recovery(opts.framework), opts);
    cfg.theta_grid = if args.theta_points == 0 {
        Vec::new()
    } else {
        log_grid(args.theta_lo, args.theta_hi, args.theta_points)?
    };
    cfg.delta_2s = args.delta_2s;
    cfg.rip_supports = args.rip_supports;
    let out = experiment::sweep_intensity(&cfg, open_out(cfg.output_path.as_deref())?)?;
    let fmt = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:e}"));
    let line = format!(
        "{} trials, {} failed; delta_2s {} ({}); transitions empirical {} certificate {}; log10 gap {}",
        out.trials.len(),
        out.failures(),
        out.delta_2s,
        out.delta_source.as_str(),
        fmt(out.empirical_transition),
        fmt(out.certificate_transition),
        fmt(out.log10_gap()),
    );
    report_summary(opts.format, out.to_json_value(), line)?;
    Ok(out.failures())
}

fn cmd_moments(args: &MomentsArgs) -> anyhow::Result<()> {
    let grid = log_grid(args.lambda_lo, args.lambda_hi, args.points)?;
    match args.format {
        OutputFormat::Csv => {
            experiment::sweep_moments(&grid, args.method, args.budget, args.seed, open_out(args.out.as_deref())?)?;
        }
        OutputFormat::Json => {
            let rows = experiment::sweep_moments(&grid, args.method, args.budget, args.seed, io::sink())?;
            write_text(args.out.as_deref(), &to_json_string(&rows)?)?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<usize> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| 0),
        Command::Solve(a) => cmd_solve(a).map(|_| 0),
        Command::SweepEpsilon(a) => cmd_sweep_epsilon(a),
        Command::SweepIntensity(a) => cmd_sweep_intensity(a),
        Command::Moments(a) => cmd_moments(a).map(|_| 0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("error: {failed} trial(s) failed; see the status column");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
