//! `po-suite`: train agents, run sweeps and emit tables and plots.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when a
//! run or emission fails at runtime.

mod settings;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use po_suite_core::harness::{evaluate_run, run_all, run_training, CellStatus};
use po_suite_core::report::{build_table, emit_plot, emit_table, load_runs, plot_data, DEFAULT_SIGMA};
use po_suite_core::seeding::SeedStreams;
use po_suite_core::wrappers::PomdpMode;

use settings::{default_out_root, merge_with_file, RunSettings, SweepSettings};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<po_suite_core::Error> for CliError {
    fn from(e: po_suite_core::Error) -> Self {
        use po_suite_core::Error as E;
        match e {
            E::Config(_) | E::UnknownEnv(_) | E::UnknownAlgo(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "po-suite",
    version,
    about = "Continuous-control RL under partial observability"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its run directory.
    Train {
        /// Flat JSON file with the same keys as the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: RunSettings,
    },
    /// Train every cell of a grid, skipping finished runs.
    Sweep {
        /// Flat JSON file with the same keys as the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// List the cells without training.
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        settings: SweepSettings,
    },
    /// Best-return table (rows env × mode, columns algorithms).
    Table {
        /// Run directories or roots containing them.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Where table.txt and table.csv go [default: <out root>/report].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smoothed learning curves with half-std bands, one plot per env/mode.
    Plot {
        /// Run directories or roots containing them.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Only this task.
        #[arg(long)]
        env: Option<String>,
        /// Only this observation mode.
        #[arg(long)]
        pomdp: Option<String>,
        /// Gaussian smoothing width in evaluation points.
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        /// Where <env>-<mode>.svg/.csv go [default: <out root>/report].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate the final policy of a finished run.
    Eval {
        run: PathBuf,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        /// Evaluation seed [default: the run's own evaluation seed].
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn report_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| default_out_root().join("report"))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { config, settings } => {
            let cfg = merge_with_file(&settings, config.as_deref())?.to_run_config()?;
            let outcome = run_training(&cfg)?;
            println!("{}", cfg.out_dir.display());
            println!("max_avg_return {}", outcome.max_avg_return);
            Ok(())
        }
        Command::Sweep {
            config,
            dry_run,
            settings,
        } => {
            let settings = merge_with_file(&settings, config.as_deref())?;
            let cells = settings.to_spec()?.cells()?;
            if dry_run {
                for c in &cells {
                    println!("{} seed={}", c.out_dir.display(), c.seed);
                }
                println!("{} cells", cells.len());
                return Ok(());
            }
            let statuses = run_all(&cells, settings.jobs());
            let mut failed = 0;
            for (c, s) in cells.iter().zip(&statuses) {
                let tag = match s {
                    CellStatus::Trained => "trained".to_string(),
                    CellStatus::Skipped => "skipped (complete)".to_string(),
                    CellStatus::Failed(e) => {
                        failed += 1;
                        format!("FAILED: {e}")
                    }
                };
                println!("{} {tag}", c.out_dir.display());
            }
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} of {} cells failed", cells.len())));
            }
            Ok(())
        }
        Command::Table { paths, out } => {
            let runs = load_runs(&paths)?;
            if runs.is_empty() {
                return Err(CliError::Usage("no run directories found".into()));
            }
            let table = build_table(&runs)?;
            let dir = report_dir(out);
            emit_table(&table, &dir)?;
            print!("{}", table.to_text());
            println!("\nwrote {}", dir.join("table.csv").display());
            Ok(())
        }
        Command::Plot {
            paths,
            env,
            pomdp,
            sigma,
            out,
        } => {
            let mode = pomdp.as_deref().map(|m| m.parse::<PomdpMode>()).transpose()?;
            let runs = load_runs(&paths)?;
            let pairs: BTreeSet<(String, PomdpMode)> = runs
                .iter()
                .map(|r| (r.config.env.clone(), r.config.wrapper.mode))
                .filter(|(e, m)| env.as_deref().is_none_or(|x| x == e) && mode.is_none_or(|x| x == *m))
                .collect();
            if pairs.is_empty() {
                return Err(CliError::Usage("no matching run directories found".into()));
            }
            let dir = report_dir(out);
            for (e, m) in pairs {
                let data = plot_data(&runs, Some(&e), Some(m), sigma)?;
                for w in &data.warnings {
                    eprintln!("warning: {w}");
                }
                let stem = format!("{e}-{m}");
                emit_plot(&data, &dir, &stem)?;
                println!("wrote {}", dir.join(format!("{stem}.svg")).display());
            }
            Ok(())
        }
        Command::Eval { run, episodes, seed } => {
            if episodes == 0 {
                return Err(CliError::Usage("--episodes must be > 0".into()));
            }
            let seed = match seed {
                Some(s) => s,
                None => SeedStreams::new(po_suite_core::harness::read_config(&run)?.seed).eval,
            };
            let rec = evaluate_run(&run, episodes, seed)?;
            println!(
                "{}",
                serde_json::json!({ "returns": rec.returns, "mean": rec.mean, "seed": seed })
            );
            Ok(())
        }
    }
}
