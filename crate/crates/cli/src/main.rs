//! `dpkit` command-line interface.
//!
//! Results go to `--output`, else the config's `output_dir`, else
//! `$DPKIT_OUTPUT`, else `./dpkit-out`. Failures print one JSON object
//! `{"error": kind, "message": ...}` on stderr and exit nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpkit::accountant;
use dpkit::dpsgd::Budget;
use dpkit::harness::{
    privacy_curve, run_and_record, summarize, sweep_lr, ErrorRecord, ExperimentConfig,
    ResultsStore,
};
use dpkit::model::TrainStrategy;
use dpkit::Error;

#[derive(Parser)]
#[command(name = "dpkit", version, about = "Differentially private SGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration.
    Train {
        config: PathBuf,
        /// Override the config's epsilon (a number or `inf`).
        #[arg(long)]
        eps: Option<Budget>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        /// `head`, `last:<k>`, `all` or `recurrent`.
        #[arg(long)]
        strategy: Option<TrainStrategy>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Learning-rate sweep over the config's `lr_grid` and `eps_list`.
    Sweep {
        config: PathBuf,
        /// Comma-separated grid overriding `lr_grid`.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Macro-F1 against privacy budget, as CSV and SVG.
    Curve {
        config: PathBuf,
        /// Comma-separated budgets, e.g. `1,2,5,inf`.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<Budget>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// ε spent by the subsampled Gaussian mechanism.
    Accountant {
        /// Sampling rate q = L/N.
        #[arg(long)]
        q: f64,
        /// Noise multiplier σ.
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = accountant::DEFAULT_DELTA)]
        delta: f64,
    },
    /// Smallest noise multiplier whose ε stays within the target.
    Calibrate {
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = accountant::DEFAULT_DELTA)]
        delta: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        steps: u64,
    },
    /// Summarize every record and timing in a results directory.
    Report { dir: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::Shape { .. } => 2,
        Error::Calibration { .. } => 3,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) | Error::Toml(_) => 4,
        Error::Io(_) | Error::Checkpoint(_) => 5,
    }
}

fn load(path: &Path) -> dpkit::Result<ExperimentConfig> {
    ExperimentConfig::load(path)
}

fn store_for(config: &ExperimentConfig, output: Option<PathBuf>, command: &str) -> dpkit::Result<ResultsStore> {
    let dir = output.unwrap_or_else(|| config.output_root());
    ResultsStore::open(dir, format!("{command}-{}", &config.digest()[..12]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", ErrorRecord::new(&e, None).to_json_line());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(command: Command) -> dpkit::Result<()> {
    match command {
        Command::Train {
            config,
            eps,
            seed,
            lr,
            strategy,
            output,
        } => {
            let mut c = load(&config)?;
            if let Some(e) = eps {
                c.epsilon = e;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(l) = lr {
                c.lr = l;
            }
            if let Some(s) = strategy {
                c.strategy = s;
            }
            c.validate()?;
            let store = store_for(&c, output, "train")?;
            let out = run_and_record(&c, &store)?;
            let r = &out.record;
            println!(
                "strategy {}  epsilon {}  accuracy {:.4}  macro-F1 {:.4}  gap {:.4}",
                r.strategy, r.epsilon_target, r.accuracy, r.macro_f1, r.collapse_gap
            );
            if let Some(e) = r.realized.epsilon {
                println!("realized epsilon {e:.6} (sigma {:.6}, q {}, steps {})", r.realized.sigma, r.realized.q, r.realized.steps);
            }
            println!("results: {}", store.dir().display());
        }
        Command::Sweep { config, grid, output } => {
            let c = load(&config)?;
            let grid = grid.unwrap_or_else(|| c.lr_grid.clone());
            let store = store_for(&c, output, "sweep")?;
            let report = sweep_lr(&c, &grid, Some(&store))?;
            let path = store.write_artifact("lr_sweep.csv", &report.to_csv())?;
            print!("{}", report.to_csv());
            print!("{}", report.to_text());
            println!("table: {}", path.display());
        }
        Command::Curve { config, eps, output } => {
            let c = load(&config)?;
            let eps = eps.unwrap_or_else(|| c.eps_list.clone());
            let store = store_for(&c, output, "curve")?;
            let report = privacy_curve(&c, &eps, Some(&store))?;
            let csv = store.write_artifact("privacy_curve.csv", &report.to_csv())?;
            let svg = store.write_artifact("privacy_curve.svg", &report.to_svg())?;
            print!("{}", report.to_csv());
            println!("table: {}\nchart: {}", csv.display(), svg.display());
        }
        Command::Accountant { q, sigma, steps, delta } => {
            let r = accountant::epsilon(q, sigma, steps, delta)?;
            print!("{}", r.to_text());
            println!("{}", serde_json::to_string(&r)?);
        }
        Command::Calibrate { eps, delta, q, steps } => {
            let sigma = accountant::calibrate_sigma(eps, delta, q, steps)?;
            let r = accountant::epsilon(q, sigma, steps, delta)?;
            println!("sigma {sigma}");
            println!("{}", serde_json::to_string(&r)?);
        }
        Command::Report { dir } => {
            let summary = summarize(&dir)?;
            let store = ResultsStore::open(&dir, "report")?;
            store.write_artifact("summary.csv", &summary.records_csv())?;
            store.write_artifact("timing.csv", &summary.timing.to_csv())?;
            print!("{}", summary.to_text());
        }
    }
    Ok(())
}
