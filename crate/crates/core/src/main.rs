//! Command-line front end: run a scenario to completion and grade it,
//! validate a scenario file (including barrier synthesis) without
//! simulating, or monitor a previously logged trajectory offline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tempnav::barrier::{synthesize, AtomGeometry, TemporalProfile};
use tempnav::output::{emit_outputs, read_positions_csv};
use tempnav::rigid_body::Vec3;
use tempnav::scenario::{preset, preset_names, ActuationMode, Scenario};
use tempnav::sim::run_closed_loop;
use tempnav::stl::{evaluate, parse_spec, robustness, Trajectory};

#[derive(Parser)]
#[command(
    name = "tempnav",
    version,
    about = "Temporal waypoint missions for a multi-UAV slung-payload team"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy)]
enum Mode {
    Ideal,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and grade the result. Exit code 0 only when the
    /// run passes (mission satisfied and the barrier never went negative).
    Run {
        /// Scenario file (JSON). Omit when using --preset.
        scenario: Option<PathBuf>,
        /// Write trajectory/barrier CSVs, the JSON report, and SVG plots here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use a built-in scenario instead of a file.
        #[arg(long, value_parser = preset_parser)]
        preset: Option<Scenario>,
        /// Override the scenario's actuation mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a scenario file and synthesize its barriers, without
    /// simulating. Prints the goal schedule.
    Check {
        /// Scenario file (JSON), or a preset name with --preset.
        scenario: Option<PathBuf>,
        #[arg(long, value_parser = preset_parser)]
        preset: Option<Scenario>,
    },
    /// Evaluate a formula against a logged trajectory CSV (columns t,x,y,z
    /// first; extra columns ignored). Exit code 0 only when satisfied.
    Monitor {
        trajectory: PathBuf,
        /// Formula text, e.g. "F[0, 14](ball(r0, [2, 2, 2]) <= 0.1)".
        spec: String,
    },
}

fn preset_parser(name: &str) -> Result<Scenario, String> {
    preset(name).ok_or_else(|| {
        format!(
            "unknown preset {name:?}; available: {}",
            preset_names().join(", ")
        )
    })
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            preset,
            mode,
            seed,
        } => run(scenario, out, preset, mode, seed),
        Command::Check { scenario, preset } => check(scenario, preset),
        Command::Monitor { trajectory, spec } => monitor(&trajectory, &spec),
    }
}

fn load(file: Option<PathBuf>, preset: Option<Scenario>) -> anyhow::Result<Scenario> {
    match (file, preset) {
        (Some(_), Some(_)) => anyhow::bail!("give either a scenario file or --preset, not both"),
        (Some(path), None) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
            Ok(Scenario::from_json_str(&text)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?)
        }
        (None, Some(scenario)) => Ok(scenario),
        (None, None) => anyhow::bail!(
            "no scenario given; pass a file or --preset ({})",
            preset_names().join(", ")
        ),
    }
}

fn run(
    file: Option<PathBuf>,
    out: Option<PathBuf>,
    preset: Option<Scenario>,
    mode: Option<Mode>,
    seed: Option<u64>,
) -> anyhow::Result<ExitCode> {
    let mut scenario = load(file, preset)?;
    match mode {
        Some(Mode::Ideal) => scenario.actuation = ActuationMode::Ideal,
        Some(Mode::Full) => scenario.actuation = ActuationMode::Full,
        None => {}
    }
    if let Some(seed) = seed {
        scenario.seed = seed;
    }

    let outcome = run_closed_loop(&scenario)?;
    let report = &outcome.report;

    println!(
        "{} [{}]: {} over {} s at {} Hz",
        report.scenario,
        report.actuation,
        if report.pass { "PASS" } else { "FAIL" },
        report.duration,
        (1.0 / report.control_period).round()
    );
    println!(
        "  formula {} (robustness {:+.4})",
        if report.satisfied {
            "satisfied"
        } else {
            "violated"
        },
        report.robustness
    );
    for c in &report.conjuncts {
        println!(
            "    {} {:+.4}  {}",
            if c.satisfied { "ok " } else { "VIO" },
            c.robustness,
            c.formula
        );
    }
    if let Some(b) = report.min_b {
        println!("  min barrier {b:+.4}");
    }
    println!(
        "  qp: {} steps, {} optimal, {} relaxed, {} reused; max slack {:.3e}",
        report.qp.steps,
        report.qp.optimal,
        report.qp.relaxed,
        report.qp.reused_previous,
        report.qp.max_slack
    );
    println!(
        "  latency: mean {:.3} ms, max {:.3} ms; max accel residual {:.3e}",
        report.latency.mean_ms, report.latency.max_ms, report.max_accel_residual
    );

    if let Some(dir) = out {
        let written = emit_outputs(&dir, &outcome.log, report, &outcome.barrier)?;
        for path in written {
            println!("  wrote {}", path.display());
        }
    }

    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn describe_profile(profile: &TemporalProfile) -> String {
    match *profile {
        TemporalProfile::Constant { value } => format!("constant {value:.3}"),
        TemporalProfile::Linear {
            start_value,
            decay_rate,
            t_start,
            t_freeze,
        } => format!(
            "linear {start_value:.3} - {decay_rate:.3}*(t - {t_start:.1}), frozen at t = {t_freeze:.1}"
        ),
        TemporalProfile::Exponential {
            amplitude,
            rate,
            offset,
            t_start,
        } => format!(
            "exponential {amplitude:.3}*exp(-{rate:.3}*(t - {t_start:.1})) + {offset:.3}"
        ),
    }
}

fn check(file: Option<PathBuf>, preset: Option<Scenario>) -> anyhow::Result<ExitCode> {
    let scenario = load(file, preset)?;
    scenario.validate()?;
    let formula = scenario.formula()?;
    let r0 = Vec3::from_column_slice(&scenario.initial.position);
    let barrier = synthesize(&formula, 0.0, &r0, &scenario.barrier)?;

    println!(
        "{}: valid; {} goal atoms over {} s",
        if scenario.name.is_empty() {
            "scenario"
        } else {
            &scenario.name
        },
        barrier.atoms().len(),
        scenario.duration
    );
    for atom in barrier.atoms() {
        let shape = match atom.geometry {
            AtomGeometry::Ball { center, .. } => {
                format!(
                    "ball at ({:.1}, {:.1}, {:.1})",
                    center.x, center.y, center.z
                )
            }
            AtomGeometry::Halfspace { normal } => {
                format!(
                    "halfspace n = ({:.1}, {:.1}, {:.1})",
                    normal.x, normal.y, normal.z
                )
            }
        };
        println!(
            "  [{:6.1}, {:6.1}] {:<28} {:<44} {}",
            atom.t_activate,
            atom.t_expire,
            shape,
            describe_profile(&atom.profile),
            atom.label
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn monitor(trajectory: &Path, spec: &str) -> anyhow::Result<ExitCode> {
    let formula = parse_spec(spec)?;
    let (times, positions) = read_positions_csv(trajectory)?;
    anyhow::ensure!(times.len() >= 2, "need at least two samples to monitor");
    let period = times[1] - times[0];
    for window in times.windows(2) {
        let gap = window[1] - window[0];
        anyhow::ensure!(
            (gap - period).abs() <= 1e-6 * period.max(1.0),
            "samples are not uniformly spaced: found gaps {period} and {gap}"
        );
    }
    let traj = Trajectory::from_positions(times[0], period, &positions)?;
    let satisfied = evaluate(&formula, &traj, times[0])?;
    let rho = robustness(&formula, &traj, times[0])?;
    println!(
        "{}: {} (robustness {rho:+.4}) over {} samples at {:.1} Hz",
        trajectory.display(),
        if satisfied { "satisfied" } else { "violated" },
        times.len(),
        1.0 / period
    );
    Ok(if satisfied {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
