//! `usvf`: run formation scenarios from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use usv_formation::privacy::run_privacy_audit;
use usv_formation::sim::{
    certify, integrate_planner_from, max_tracking_error, settle_time, trace_metadata, PlannerOptions,
};
use usv_formation::trace::{export_trace, ExportedFiles, TraceFormat};
use usv_formation::{integrate_closed_loop, ClosedLoopRun, Exec, PlannerRun, Scenario, SimTrace, Vec2};

/// Exit status when a run completes but its verdict is negative (failed
/// audit, uncertified gains).
const EXIT_VERDICT: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "usvf",
    version,
    about = "Privacy-preserving formation control for surface vessels"
)]
struct Cli {
    /// Execution mode for per-vessel and per-case work.
    #[arg(long, value_enum, global = true, default_value_t = ExecArg::Parallel)]
    exec: ExecArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExecArg {
    Sequential,
    Parallel,
}

impl From<ExecArg> for Exec {
    fn from(e: ExecArg) -> Self {
        match e {
            ExecArg::Sequential => Exec::Sequential,
            ExecArg::Parallel => Exec::Parallel,
        }
    }
}

#[derive(Debug, clap::Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "USVF_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the formation planner alone and export its trace.
    Plan {
        scenario: PathBuf,
        #[command(flatten)]
        out: OutArgs,
        /// Run to the horizon even after convergence.
        #[arg(long)]
        full_horizon: bool,
    },
    /// Run planner, controllers and vessels together and export the trace.
    Track {
        scenario: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// `plan` followed by `track`, plus the certificate report.
    Full {
        scenario: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Check that a shifted initial position of one agent is invisible to
    /// the scenario's adversary.
    PrivacyAudit {
        scenario: PathBuf,
        /// Agent whose position is shifted (1-based).
        #[arg(long)]
        target: usize,
        /// Shift of the target's initial position, as `X,Y`.
        #[arg(long, value_parser = parse_vec2, allow_hyphen_values = true)]
        dq: Vec2,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Print the planner decay rate and each vessel's ultimate-bound constants.
    Certify { scenario: PathBuf },
    /// Write the default four-vessel scenario.
    Init {
        /// Destination file; standard output when omitted.
        path: Option<PathBuf>,
    },
}

fn parse_vec2(s: &str) -> std::result::Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [x, y] = parts.as_slice() else {
        return Err(format!("expected X,Y, got {s:?}"));
    };
    let x: f64 = x.parse().map_err(|e| format!("{x:?}: {e}"))?;
    let y: f64 = y.parse().map_err(|e| format!("{y:?}: {e}"))?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(format!("non-finite component in {s:?}"));
    }
    Ok(Vec2::new(x, y))
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn export(trace: &SimTrace, scenario: &Scenario, dir: &Path, stem: &str) -> Result<ExportedFiles> {
    let files = export_trace(trace, TraceFormat::Both, dir, stem, &trace_metadata(scenario)?)?;
    for f in files.csv.iter().chain(&files.manifest) {
        println!("wrote {}", f.display());
    }
    Ok(files)
}

fn plan(scenario: &Scenario, out: &Path, full_horizon: bool, exec: Exec) -> Result<PlannerRun> {
    let options = PlannerOptions {
        early_stop: !full_horizon,
    };
    let run = integrate_planner_from(scenario, &scenario.initial_planner_state(), options, exec)?;
    let residual = run.residual;
    match run.converged_at {
        Some(t) => println!("planner converged at t = {t} s"),
        None => println!("planner did not converge within {} s", scenario.integration.horizon),
    }
    println!(
        "final residuals: gradient {:.3e}, consensus {:.3e}, auxiliary {:.3e}",
        residual.gradient, residual.consensus, residual.omega
    );
    println!(
        "centroid estimate of agent 1: ({:.6}, {:.6})",
        run.final_state.agents[0].eta_hat.x, run.final_state.agents[0].eta_hat.y
    );
    export(&run.trace, scenario, out, "plan")?;
    Ok(run)
}

fn track(scenario: &Scenario, out: &Path, exec: Exec) -> Result<ClosedLoopRun> {
    let run = integrate_closed_loop(scenario, exec)?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    let time = &run.trace.time;
    for (i, cert) in run.certificates.iter().enumerate() {
        let errors: Vec<f64> = run.trace.vessel_series(i).map(|v| v.e_b.norm()).collect();
        let last = errors.last().copied().unwrap_or(f64::NAN);
        match cert {
            Some(c) => println!(
                "vessel {}: final |e_b| {last:.3e} m, radius {:.3e} m, inside from {}",
                i + 1,
                c.radius,
                settle_time(time, &errors, c.radius).map_or("never".to_string(), |t| format!("t = {t} s"))
            ),
            None => println!("vessel {}: final |e_b| {last:.3e} m, no certificate", i + 1),
        }
    }
    let worst = max_tracking_error(&run.trace).last().copied().unwrap_or(f64::NAN);
    println!("largest final tracking error: {worst:.3e} m");
    export(&run.trace, scenario, out, "track")?;
    Ok(run)
}

fn print_certificates(scenario: &Scenario) -> Result<bool> {
    let report = certify(scenario)?;
    println!("rho = {}", report.decay_rate);
    let mut all = true;
    for (i, c) in report.vessels.iter().enumerate() {
        match c {
            Some(c) => println!("vessel {}: c1 = {} c2 = {} radius = {}", i + 1, c.c1, c.c2, c.radius),
            None => {
                all = false;
                println!("vessel {}: gains do not certify an ultimate bound", i + 1);
            }
        }
    }
    Ok(all)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let exec = Exec::from(cli.exec);
    match cli.command {
        Command::Plan {
            scenario,
            out,
            full_horizon,
        } => {
            plan(&load(&scenario)?, &out.out, full_horizon, exec)?;
        }
        Command::Track { scenario, out } => {
            track(&load(&scenario)?, &out.out, exec)?;
        }
        Command::Full { scenario, out } => {
            let s = load(&scenario)?;
            plan(&s, &out.out, false, exec)?;
            track(&s, &out.out, exec)?;
            let report = certify(&s)?;
            let path = out.out.join("certificates.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
            if !print_certificates(&s)? {
                return Ok(ExitCode::from(EXIT_VERDICT));
            }
        }
        Command::PrivacyAudit {
            scenario,
            target,
            dq,
            out,
        } => {
            let s = load(&scenario)?;
            if target == 0 || target > s.len() {
                bail!("target {target} is not an agent of this {}-agent scenario", s.len());
            }
            let outcome = run_privacy_audit(&s, target - 1, dq, &out.out)?;
            print!("{}", outcome.report);
            println!("wrote {}", out.out.display());
            if !outcome.report.pass {
                return Ok(ExitCode::from(EXIT_VERDICT));
            }
        }
        Command::Certify { scenario } => {
            if !print_certificates(&load(&scenario)?)? {
                return Ok(ExitCode::from(EXIT_VERDICT));
            }
        }
        Command::Init { path } => {
            let text = Scenario::default().to_toml_string();
            match path {
                Some(p) => {
                    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
                    println!("wrote {}", p.display());
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
