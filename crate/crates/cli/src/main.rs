use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use dmadmm::comm::CommGraph;
use dmadmm::harness::{self, AlgorithmKind, Metrics, ScenarioConfig, Trace};
use dmadmm::oracle;
use dmadmm::Error;

const EXIT_INVARIANT: u8 = 3;
const EXIT_RUN_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "dmadmm", version, about = "Decentralized ADMM demand-side frequency control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-loop simulation of grid, estimators and loads.
    Simulate(Common),
    /// Offline convergence run with exact residuals and certificate checks.
    Converge(Common),
    /// Paired closed-loop runs of several algorithms on the same scenario.
    Compare(Common),
    /// Centralized solution of the offline instance.
    Oracle(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON); defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// dmadmm, pjadmm, dual or none. Repeatable for `compare`.
    #[arg(long)]
    algo: Vec<AlgorithmKind>,
    #[arg(long, value_enum)]
    noise: Option<Switch>,
    /// Neighbour radius of 1D-grid averaging.
    #[arg(long = "comm", value_name = "N0")]
    comm: Option<usize>,
    /// Output directory for traces and reports.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Residual tolerance (`converge`) or balance tolerance (`oracle`), MW.
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn scenario(&self) -> anyhow::Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(&kind) = self.algo.first() {
            cfg.algorithm.kind = kind;
        }
        if let Some(noise) = self.noise {
            cfg.noise = matches!(noise, Switch::On);
        }
        if let Some(n0) = self.comm {
            cfg.comm = CommGraph::Grid1d { n0 };
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output_dir(cfg: &ScenarioConfig) -> anyhow::Result<Option<PathBuf>> {
    let Some(dir) = cfg.output_dir.as_ref().map(PathBuf::from) else { return Ok(None) };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(Some(dir))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit_bytes(bytes: &[u8]) -> anyhow::Result<()> {
    match std::io::stdout().lock().write_all(bytes) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(line: &str) -> anyhow::Result<()> {
    emit_bytes(format!("{line}\n").as_bytes())
}

fn summary_line(m: &Metrics) -> String {
    let steady: Vec<String> = m.windows.iter().map(|w| format!("{:.4}", w.steady_state_abs_deviation_hz)).collect();
    format!(
        "{:<8} max|dw| {:.4} Hz  overshoot {:.4} Hz  steady |dw| [{}] Hz  disutility {:.4}",
        m.algorithm,
        m.max_abs_deviation_hz,
        m.overshoot_hz,
        steady.join(", "),
        m.final_disutility
    )
}

fn save_trace(dir: &Option<PathBuf>, name: &str, trace: &Trace) -> anyhow::Result<()> {
    if let Some(dir) = dir {
        let path = dir.join(name);
        trace.save_csv(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn simulate(args: &Common) -> anyhow::Result<ExitCode> {
    let cfg = args.scenario()?;
    let dir = output_dir(&cfg)?;
    let trace = harness::run_closed_loop(&cfg)?;
    match &dir {
        Some(_) => save_trace(&dir, "trace.csv", &trace)?,
        None => {
            let mut csv = Vec::new();
            trace.write_csv(&mut csv)?;
            emit_bytes(&csv)?;
        }
    }
    let metrics = harness::compute_metrics(&trace)?;
    if let Some(dir) = &dir {
        write_json(&dir.join("metrics.json"), &metrics)?;
    }
    eprintln!("{}", summary_line(&metrics));
    if let Some(failure) = &trace.failure {
        eprintln!("run stopped early: {failure}");
        return Ok(ExitCode::from(EXIT_RUN_FAILED));
    }
    Ok(ExitCode::SUCCESS)
}

fn converge(args: &Common) -> anyhow::Result<ExitCode> {
    let cfg = args.scenario()?;
    let tol = args.tol.unwrap_or(cfg.offline.residual_tol_mw);
    let report = harness::run_offline(&cfg, tol)?;
    emit(&serde_json::to_string_pretty(&report)?)?;
    if let Some(dir) = output_dir(&cfg)? {
        write_json(&dir.join("report.json"), &report)?;
    }
    if !report.step_condition_satisfied {
        eprintln!("rho = {} exceeds the step-size bound {}; decrease is not guaranteed", report.rho, report.rho_max);
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(args: &Common) -> anyhow::Result<ExitCode> {
    let cfg = args.scenario()?;
    let dir = output_dir(&cfg)?;
    let kinds = if args.algo.is_empty() {
        vec![AlgorithmKind::Dmadmm, AlgorithmKind::Pjadmm, AlgorithmKind::Dual, AlgorithmKind::None]
    } else {
        args.algo.clone()
    };
    let mut code = ExitCode::SUCCESS;
    let mut all = Vec::new();
    for (kind, result) in harness::compare(&cfg, &kinds) {
        match result {
            Ok((trace, metrics)) => {
                save_trace(&dir, &format!("trace_{}.csv", kind.name()), &trace)?;
                emit(&summary_line(&metrics))?;
                if let Some(failure) = &trace.failure {
                    emit(&format!("{:<8} stopped early: {failure}", kind.name()))?;
                    code = ExitCode::from(EXIT_RUN_FAILED);
                }
                all.push(metrics);
            }
            Err(e) => emit(&format!("{:<8} not run: {e}", kind.name()))?,
        }
    }
    if let Some(dir) = &dir {
        write_json(&dir.join("metrics.json"), &all)?;
    }
    Ok(code)
}

fn solve_oracle(args: &Common) -> anyhow::Result<ExitCode> {
    let cfg = args.scenario()?;
    let tol = args.tol.unwrap_or(cfg.offline.oracle_tol_mw);
    let built = harness::build_instance(&cfg)?;
    let sol = oracle::solve(&built.problem, tol)?;
    emit(&serde_json::to_string_pretty(&sol)?)?;
    if let Some(dir) = output_dir(&cfg)? {
        write_json(&dir.join("oracle.json"), &sol)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Converge(a) => converge(a),
        Command::Compare(a) => compare(a),
        Command::Oracle(a) => solve_oracle(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure_code(&e))
        }
    }
}

fn failure_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::InvariantViolation(_)) => EXIT_INVARIANT,
        _ => 1,
    }
}
