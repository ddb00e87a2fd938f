use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use jumpmart::benes_harness::{self, with_threads, ThreadCheck, Verdict};
use jumpmart::brownian_ref::refinement_ladder;
use jumpmart::config::{parse_configs, Driver};
use jumpmart::girsanov::{verify_girsanov, TiltedBatch};
use jumpmart::report::{results_csv_string, write_run, ManifestInput};
use jumpmart::{ControlSpec, Error, ExperimentConfig, ExperimentResult, JumpMeasureSpec, Result};

const THREADS_ENV: &str = "JUMPMART_THREADS";

#[derive(Parser)]
#[command(
    name = "jumpmart",
    version,
    about = "Monte Carlo checks of E z_T = 1 for jump-driven stochastic exponentials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Run experiments and write the artifacts without judging them
    Simulate,
    /// Test E z_T = 1; exit 1 on any non-consistent verdict
    VerifyMartingale,
    /// Check the tilted compensator and the tilted martingale decomposition
    VerifyGirsanov,
    /// Brownian reference case, including an h-refinement ladder
    Brownian,
    /// Run a list of experiments
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyMartingale => "verify-martingale",
            Command::VerifyGirsanov => "verify-girsanov",
            Command::Brownian => "brownian",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON config: one experiment, an array, or {"experiments": [...]}
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of every experiment
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides num_paths of every experiment
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = "jumpmart-out")]
    out: PathBuf,
    /// Worker threads; JUMPMART_THREADS takes precedence
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Rerun on one thread and compare with the parallel results
    #[arg(long, global = true)]
    single_thread_check: bool,
    /// Write wall-clock times into results.csv (the file is then no longer reproducible)
    #[arg(long, global = true)]
    timing: bool,
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Io(format!("{THREADS_ENV}={v} is not a positive integer")));
    }
    Ok(flag
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1))
}

fn default_configs(command: Command) -> Vec<ExperimentConfig> {
    let unit = JumpMeasureSpec::unit(1.0);
    let benes = |c: f64| {
        ExperimentConfig::jump(unit.clone(), ControlSpec::BenesSqrt { c }, 1.0)
            .with_id(format!("benes-c{c}"))
    };
    match command {
        Command::Simulate | Command::VerifyMartingale => vec![benes(1.0)],
        Command::VerifyGirsanov => {
            vec![
                ExperimentConfig::jump(unit, ControlSpec::Constant { a: 0.5 }, 1.0)
                    .with_id("constant-a0.5"),
            ]
        }
        Command::Brownian => {
            let bm = |control| {
                ExperimentConfig::new(
                    Driver::Brownian {
                        grid_step: 2f64.powi(-10),
                    },
                    control,
                    1.0,
                )
                .with_paths(10_000)
            };
            vec![
                bm(ControlSpec::Constant { a: 1.0 }).with_id("bm-constant-a1"),
                bm(ControlSpec::BenesSqrt { c: 1.0 }).with_id("bm-benes-c1"),
            ]
        }
        Command::Sweep => [0.0, 0.5, 1.0, 2.0].into_iter().map(benes).collect(),
    }
}

fn load_configs(command: Command, args: &RunArgs) -> Result<Vec<ExperimentConfig>> {
    let mut configs = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            parse_configs(&text)?
        }
        None => default_configs(command),
    };
    for c in &mut configs {
        if let Some(seed) = args.seed {
            c.seed = seed;
        }
        if let Some(n) = args.paths {
            c.num_paths = n;
        }
        c.validate()?;
    }
    let wanted = match command {
        Command::VerifyGirsanov => Some("jump"),
        Command::Brownian => Some("brownian"),
        _ => None,
    };
    if let Some(expected) = wanted {
        for c in &configs {
            let is_jump = matches!(c.driver, Driver::Jump(_));
            if is_jump != (expected == "jump") {
                return Err(Error::WrongDriver { expected });
            }
        }
    }
    Ok(configs)
}

/// Command-specific checks beyond the per-experiment verdicts.
fn extra_checks(
    command: Command,
    configs: &[ExperimentConfig],
    threads: usize,
) -> Result<(Value, bool)> {
    match command {
        Command::VerifyGirsanov => {
            let mut out = Vec::new();
            let mut ok = true;
            for c in configs {
                let measure = c
                    .driver
                    .measure()
                    .ok_or(Error::WrongDriver { expected: "jump" })?;
                let check = with_threads(threads, || {
                    let batch = TiltedBatch::simulate(
                        measure,
                        &c.control,
                        c.stop_level,
                        c.horizon,
                        c.num_paths,
                        c.seed,
                        c.quad_step,
                    )?;
                    let t = c.horizon;
                    verify_girsanov(&batch, &[0.25 * t, 0.5 * t, t], c.verdict_threshold)
                })??;
                ok &= check.consistent;
                out.push(check);
            }
            Ok((json!({ "girsanov": out }), ok))
        }
        Command::Brownian => {
            let horizon = configs.first().map_or(1.0, |c| c.horizon);
            let paths = configs.first().map_or(10_000, |c| c.num_paths);
            let seed = configs.first().map_or(1, |c| c.seed);
            let ladder = with_threads(threads, || {
                refinement_ladder(
                    &ControlSpec::BenesSqrt { c: 1.0 },
                    horizon,
                    2f64.powi(-12),
                    4,
                    paths,
                    seed,
                )
            })??;
            let shrinking = ladder
                .windows(2)
                .all(|w| w[1].strong_error.mean < w[0].strong_error.mean);
            Ok((
                json!({ "benes_refinement": ladder, "strong_error_shrinks": shrinking }),
                shrinking,
            ))
        }
        _ => Ok((Value::Null, true)),
    }
}

fn print_summary(results: &[ExperimentResult]) {
    for r in results {
        let e = &r.martingale.estimate;
        println!(
            "{:<20} {:<24} mean_z {:.6} stderr {:.3e} z {:+.2}",
            r.id,
            r.martingale.verdict,
            e.mean,
            e.stderr,
            e.z_score(1.0)
        );
        if let Some(g) = &r.diagnostics.gronwall {
            let k = &g.constants;
            println!(
                "{:<20} gronwall V {:.4} bound {:.4e} (r {} k_free {} k_alpha {} sharp {:.4e})",
                "", g.v_hat.mean, k.bound, k.r, k.k_free, k.k_alpha, k.sharp_bound
            );
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let started = Instant::now();
    let threads = thread_count(cli.run.threads)?;
    let configs = load_configs(cli.command, &cli.run)?;
    let results = with_threads(threads, || benes_harness::sweep(&configs))??;
    let (mut extra, mut ok) = extra_checks(cli.command, &configs, threads)?;
    if cli.run.single_thread_check {
        let serial = with_threads(1, || benes_harness::sweep(&configs))??;
        let check = ThreadCheck::from_runs(threads, &results, &serial);
        println!(
            "single-thread check: max relative difference {:e} (tolerance {:e})",
            check.max_relative_difference, check.tolerance
        );
        ok &= check.ok;
        if !extra.is_object() {
            extra = json!({});
        }
        extra["thread_check"] = json!(check);
    }
    let csv = results_csv_string(&results, cli.run.timing)?;
    write_run(
        &cli.run.out,
        &results,
        extra,
        ManifestInput {
            command: cli.command.name(),
            seed: cli.run.seed.unwrap_or_else(|| configs[0].seed),
            timestamp: chrono::Utc::now().to_rfc3339(),
            wall_ms: started.elapsed().as_millis() as u64,
            threads,
            results_csv: csv.as_bytes(),
        },
    )?;
    print_summary(&results);
    if cli.command == Command::Simulate {
        return Ok(ExitCode::SUCCESS);
    }
    ok &= results
        .iter()
        .all(|r| r.martingale.verdict == Verdict::Consistent);
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
