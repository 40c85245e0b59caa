//! Command-line front end: instance generation, design solving, Monte-Carlo
//! simulation, parameter sweeps, and streamed runs.
//!
//! Exit codes are a stable contract for CI: 0 success, 2 configuration
//! error, 3 I/O failure, 4 solver failure.

mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};

use budgetab::design::{bernoulli_design, constrained_optimal_design, unconstrained_optimal_design};
use budgetab::model::{
    expected_tte, validate_instance, ExperimentMatrix, ProblemInstance, UtilityMode,
};
use budgetab::online::OnlineRunner;
use budgetab::sim::{
    generate_instance, rows_to_csv, run_trials, sweep, DesignKind, EstimatorKind, SimConfig,
    SummaryStats, SweepGrid, SweepRow,
};
use budgetab::solver::{SolverCertificate, SolverConfig};
use budgetab::throttle::ThrottleKind;

#[derive(Parser)]
#[command(
    name = "budgetab",
    version,
    about = "Design and simulate budget-constrained A/B experiments on one-to-many platforms"
)]
struct Cli {
    /// Master seed; omitted = fresh entropy, echoed to stderr.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for trials and grid points (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// KKT tolerance for the constrained solver.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    /// Trials per instance (simulate / sweep override).
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Instances per grid point (sweep override).
    #[arg(long, global = true)]
    instances: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic problem instance from a JSON config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Construct an experiment matrix (plus certificate) for an instance.
    Design {
        #[arg(long)]
        instance: PathBuf,
        /// bernoulli[:p] | unconstrained | constrained
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        /// Outer iteration cap for the constrained solve.
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Monte-Carlo trials of one design on one instance.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// bernoulli[:p] | unconstrained | constrained | online
        #[arg(long)]
        design: String,
        #[arg(long, default_value = "random")]
        throttle: String,
        #[arg(long, default_value = "plugin")]
        estimator: String,
        /// Write the summary JSON here as well as stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep; writes sweep.csv and figure SVGs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Skip SVG rendering.
        #[arg(long)]
        no_svg: bool,
    },
    /// Streamed design over one instance with a per-step trace.
    Online {
        #[arg(long)]
        instance: PathBuf,
        /// JSON array with an arrival order (defaults to 0..m).
        #[arg(long)]
        permutation: Option<PathBuf>,
        /// Write the per-step trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the result JSON here as well as stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Config(String),
    Io(String),
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<budgetab::Error> for CliError {
    fn from(e: budgetab::Error) -> Self {
        match e {
            budgetab::Error::OnlineSolverFailure { .. } => CliError::Solver(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_err(context: &str, path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{context} {}: {e}", path.display()))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err("reading", path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err("writing", path, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(raw: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_str(raw).map_err(|e| CliError::Config(format!("bad {what}: {e}")))
}

fn load_instance(path: &Path) -> Result<ProblemInstance, CliError> {
    let inst: ProblemInstance = parse_json(&read_file(path)?, "instance JSON")?;
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err(CliError::Config(format!(
            "instance {} is invalid:\n{report}",
            path.display()
        )));
    }
    Ok(inst)
}

fn resolve_seed(explicit: Option<u64>) -> u64 {
    match explicit {
        Some(s) => s,
        None => {
            let s: u64 = rand::rng().random();
            eprintln!("seed: {s}");
            s
        }
    }
}

fn solver_config(tolerance: Option<f64>, max_iterations: Option<usize>) -> SolverConfig {
    let mut cfg = SolverConfig::default();
    if let Some(t) = tolerance {
        cfg.kkt_tolerance = t;
    }
    if let Some(m) = max_iterations {
        cfg.max_iterations = m;
    }
    cfg
}

/// JSON config for `generate`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    n: usize,
    r1: f64,
    r2: f64,
    r3: f64,
    seed: Option<u64>,
    utility_mode: Option<UtilityMode>,
}

fn cmd_generate(cli: &Cli, config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: GenerateConfig = parse_json(&read_file(config)?, "generate config")?;
    let seed = resolve_seed(cfg.seed.or(cli.seed));
    let sim = SimConfig {
        n: cfg.n,
        r1: cfg.r1,
        r2: cfg.r2,
        r3: cfg.r3,
        utility_mode: cfg.utility_mode.unwrap_or(UtilityMode::FixedRealization),
        seed,
        ..SimConfig::default()
    };
    sim.validate()?;
    let inst = generate_instance(&sim, seed)?;
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err(CliError::Config(format!(
            "generated instance failed validation:\n{report}"
        )));
    }
    write_file(out, &inst.to_json())?;

    let mut summary = format!(
        "instance written to {}\nm = {}, n = {}, tte = {}\n",
        out.display(),
        inst.m,
        inst.n,
        expected_tte(&inst)
    );
    for j in 0..inst.n {
        let max_cost = inst
            .w1
            .spend(&inst.costs, j)
            .max(inst.w0.spend(&inst.costs, j));
        let _ = writeln!(
            summary,
            "buyer {j}: budget = {:.6}, slack = {:.6}",
            inst.budgets[j],
            inst.budgets[j] - max_cost
        );
    }
    print!("{summary}");
    Ok(())
}

/// Output document of `design`.
#[derive(Serialize, Deserialize)]
struct DesignFile {
    kind: String,
    x: ExperimentMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<SolverCertificate>,
}

fn cmd_design(
    cli: &Cli,
    instance: &Path,
    kind: &str,
    out: &Path,
    max_iterations: Option<usize>,
) -> Result<(), CliError> {
    let inst = load_instance(instance)?;
    let parsed: DesignKind = kind.parse()?;
    let (x, certificate) = match parsed {
        DesignKind::Bernoulli { p } => (bernoulli_design(&inst.w0, &inst.w1, p)?, None),
        DesignKind::Unconstrained => (unconstrained_optimal_design(&inst), None),
        DesignKind::Constrained => {
            let cfg = solver_config(cli.tolerance, max_iterations);
            let (x, cert) = constrained_optimal_design(&inst, &cfg)?;
            (x, Some(cert))
        }
        DesignKind::Online => {
            return Err(CliError::Config(
                "design kind 'online' is run via the online subcommand".into(),
            ))
        }
    };
    let converged = certificate.as_ref().is_none_or(|c| c.converged);
    let doc = DesignFile {
        kind: parsed.to_string(),
        x,
        certificate,
    };
    write_file(
        out,
        &serde_json::to_string_pretty(&doc).expect("design serialization cannot fail"),
    )?;
    if let Some(cert) = &doc.certificate {
        println!(
            "objective = {}, kkt residual = {:.3e}, iterations = {}, converged = {}",
            cert.objective, cert.max_kkt_residual, cert.iterations, cert.converged
        );
    }
    if !converged {
        return Err(CliError::Solver(format!(
            "constrained solve did not converge (certificate written to {})",
            out.display()
        )));
    }
    println!("design written to {}", out.display());
    Ok(())
}

fn cmd_simulate(
    cli: &Cli,
    instance: &Path,
    design: &str,
    throttle: &str,
    estimator: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let inst = load_instance(instance)?;
    let design: DesignKind = design.parse()?;
    let throttle: ThrottleKind = throttle.parse()?;
    let estimator: EstimatorKind = estimator.parse()?;
    let seed = resolve_seed(cli.seed);
    let cfg = SimConfig {
        // Generator rates are irrelevant when the instance is supplied.
        r1: 1.0,
        r2: 1.0,
        r3: 0.0,
        n: inst.n,
        trials: cli.trials.unwrap_or(20_000),
        instances: 1,
        design,
        throttle,
        estimator,
        utility_mode: inst.utility.mode,
        seed,
        solver: solver_config(cli.tolerance, None),
    };
    let stats = run_trials(&inst, &cfg)?;
    let json = serde_json::to_string_pretty(&stats).expect("stats serialization cannot fail");
    println!("{json}");
    if let Some(path) = out {
        write_file(path, &json)?;
    }
    Ok(())
}

/// JSON config for `sweep`: a preset name and/or explicit grid fields.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SweepFileConfig {
    preset: Option<String>,
    n: Option<usize>,
    r1: Option<Vec<f64>>,
    r2: Option<Vec<f64>>,
    r3: Option<Vec<f64>>,
    designs: Option<Vec<String>>,
    throttle: Option<String>,
    estimator: Option<String>,
    utility_mode: Option<UtilityMode>,
    trials: Option<usize>,
    instances: Option<usize>,
    seed: Option<u64>,
}

fn build_grid(cli: &Cli, cfg: &SweepFileConfig) -> Result<SweepGrid, CliError> {
    let mut grid = match &cfg.preset {
        Some(name) => SweepGrid::preset(name)?,
        None => SweepGrid::default(),
    };
    if let Some(n) = cfg.n {
        grid.n = n;
    }
    if let Some(r1) = &cfg.r1 {
        grid.r1 = r1.clone();
    }
    if let Some(r2) = &cfg.r2 {
        grid.r2 = r2.clone();
    }
    if let Some(r3) = &cfg.r3 {
        grid.r3 = r3.clone();
    }
    if let Some(designs) = &cfg.designs {
        grid.designs = designs
            .iter()
            .map(|d| d.parse())
            .collect::<Result<Vec<DesignKind>, _>>()?;
    }
    if let Some(t) = &cfg.throttle {
        grid.throttle = t.parse()?;
    }
    if let Some(e) = &cfg.estimator {
        grid.estimator = e.parse()?;
    }
    if let Some(m) = cfg.utility_mode {
        grid.utility_mode = m;
    }
    grid.trials = cli.trials.or(cfg.trials).unwrap_or(grid.trials);
    grid.instances = cli.instances.or(cfg.instances).unwrap_or(grid.instances);
    grid.seed = resolve_seed(cli.seed.or(cfg.seed));
    if let Some(t) = cli.tolerance {
        grid.solver.kkt_tolerance = t;
    }
    grid.validate()?;
    Ok(grid)
}

fn cmd_sweep(cli: &Cli, config: &Path, out_dir: &Path, no_svg: bool) -> Result<(), CliError> {
    let cfg: SweepFileConfig = parse_json(&read_file(config)?, "sweep config")?;
    let grid = build_grid(cli, &cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err("creating", out_dir, e))?;
    let rows = sweep(&grid)?;
    let csv_path = out_dir.join("sweep.csv");
    write_file(&csv_path, &rows_to_csv(&rows))?;
    println!("wrote {} rows to {}", rows.len(), csv_path.display());
    if !no_svg {
        for (name, contents) in render_figures(cfg.preset.as_deref(), &grid, &rows) {
            let path = out_dir.join(name);
            write_file(&path, &contents)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Builds the figure SVGs appropriate for the preset (or a generic chart
/// when exactly one grid axis varies).
fn render_figures(
    preset: Option<&str>,
    grid: &SweepGrid,
    rows: &[SweepRow],
) -> Vec<(String, String)> {
    let series_by_design = |value: fn(&SummaryStats) -> f64,
                            axis: fn(&SweepRow) -> f64,
                            dashed: bool,
                            label: &str| {
        grid.designs
            .iter()
            .map(|d| {
                let pts: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.design == *d)
                    .map(|r| (axis(r), value(&r.stats)))
                    .collect();
                svg::Series {
                    name: if label.is_empty() {
                        d.to_string()
                    } else {
                        format!("{label} ({d})")
                    },
                    points: pts,
                    dashed,
                }
            })
            .collect::<Vec<_>>()
    };

    match preset {
        Some("fig3") => vec![
            (
                "fig3_bias.svg".into(),
                svg::line_chart(
                    "Bias vs supply-demand rate",
                    "r1 = m/n",
                    "bias",
                    &series_by_design(|s| s.bias, |r| r.r1, false, ""),
                ),
            ),
            (
                "fig3_std.svg".into(),
                svg::line_chart(
                    "Standard deviation vs supply-demand rate",
                    "r1 = m/n",
                    "stddev",
                    &series_by_design(|s| s.stddev, |r| r.r1, false, ""),
                ),
            ),
        ],
        Some("fig4") => vec![(
            "fig4.svg".into(),
            svg::line_chart(
                "Bias vs budget-cost rate",
                "r2",
                "bias",
                &series_by_design(|s| s.bias, |r| r.r2, false, ""),
            ),
        )],
        Some("fig5") => {
            let mut series = series_by_design(|s| s.stddev, |r| r.r1, false, "stddev");
            series.extend(series_by_design(|s| s.bias, |r| r.r1, true, "bias"));
            vec![(
                "fig5.svg".into(),
                svg::line_chart(
                    "Offline vs streamed design",
                    "r1 = m/n",
                    "stddev / bias",
                    &series,
                ),
            )]
        }
        Some("fig6") => {
            let series: Vec<svg::Series> = grid
                .r2
                .iter()
                .map(|&r2| svg::Series {
                    name: format!("r2 = {r2}"),
                    points: rows
                        .iter()
                        .filter(|r| r.r2 == r2)
                        .map(|r| (r.r3, r.stats.bias))
                        .collect(),
                    dashed: false,
                })
                .collect();
            vec![(
                "fig6.svg".into(),
                svg::line_chart("Bias vs consistency rate", "r3", "bias", &series),
            )]
        }
        _ => {
            let varying = [
                (grid.r1.len() > 1, "r1"),
                (grid.r2.len() > 1, "r2"),
                (grid.r3.len() > 1, "r3"),
            ];
            let axes: Vec<&str> = varying.iter().filter(|(v, _)| *v).map(|(_, n)| *n).collect();
            if axes.len() != 1 {
                return Vec::new();
            }
            let axis: fn(&SweepRow) -> f64 = match axes[0] {
                "r1" => |r| r.r1,
                "r2" => |r| r.r2,
                _ => |r| r.r3,
            };
            vec![(
                "sweep.svg".into(),
                svg::line_chart(
                    "Bias",
                    axes[0],
                    "bias",
                    &series_by_design(|s| s.bias, axis, false, ""),
                ),
            )]
        }
    }
}

const TRACE_HEADER: &str = "step,buyer,feasible,spend";

fn trace_csv(steps: &[budgetab::online::OnlineTrialStep]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for s in steps {
        let buyer = s.sampled_buyer.map(|j| j.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", s.step, buyer, s.feasible, s.spend);
    }
    out
}

#[derive(Serialize)]
struct OnlineResultDoc {
    estimate: f64,
    seed: u64,
    rejections: usize,
    solver_invocations: usize,
    trace_rows: usize,
}

fn cmd_online(
    cli: &Cli,
    instance: &Path,
    permutation: Option<&Path>,
    trace: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let inst = load_instance(instance)?;
    let order: Vec<usize> = match permutation {
        Some(path) => parse_json(&read_file(path)?, "permutation JSON")?,
        None => (0..inst.m).collect(),
    };
    let seed = resolve_seed(cli.seed);
    let solver = solver_config(cli.tolerance, None);
    let mut rng = budgetab::rng::stream_rng(seed, 0);

    let mut runner = OnlineRunner::new(&inst, &solver, &order)?;
    while !runner.is_done() {
        if let Err(e) = runner.step(&mut rng) {
            // Keep the completed prefix on solver failure.
            if let Some(path) = trace {
                write_file(path, &trace_csv(runner.trace()))?;
                eprintln!("partial trace written to {}", path.display());
            }
            return Err(e.into());
        }
    }
    let result = runner.finish()?;
    if let Some(path) = trace {
        write_file(path, &trace_csv(&result.trace))?;
    }
    let doc = OnlineResultDoc {
        estimate: result.estimate,
        seed,
        rejections: result.rejections,
        solver_invocations: result.solver_invocations,
        trace_rows: result.trace.len(),
    };
    let json = serde_json::to_string_pretty(&doc).expect("result serialization cannot fail");
    println!("{json}");
    if let Some(path) = out {
        write_file(path, &json)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate { config, out } => cmd_generate(cli, config, out),
        Command::Design {
            instance,
            kind,
            out,
            max_iterations,
        } => cmd_design(cli, instance, kind, out, *max_iterations),
        Command::Simulate {
            instance,
            design,
            throttle,
            estimator,
            out,
        } => cmd_simulate(cli, instance, design, throttle, estimator, out.as_deref()),
        Command::Sweep {
            config,
            out_dir,
            no_svg,
        } => cmd_sweep(cli, config, out_dir, *no_svg),
        Command::Online {
            instance,
            permutation,
            trace,
            out,
        } => cmd_online(
            cli,
            instance,
            permutation.as_deref(),
            trace.as_deref(),
            out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("BUDGETAB_LOG")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("warning: could not configure {jobs} worker threads: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
