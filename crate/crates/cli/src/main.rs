mod io;
mod run;
mod separate;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use stairverify::bounds::{deeppoly_bounds, interval_bounds, PreActBounds};
use stairverify::separation::Direction;
use stairverify::verifier::{Mode, VerifyConfig};

use crate::io::{load_dataset, load_network, parse_vector, read_text, CliError, CliResult};

#[derive(Parser)]
#[command(name = "stairverify", version, about = "Robustness verification for networks with staircase and piecewise-linear activations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundMethod {
    Deeppoly,
    Interval,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Upper,
    Lower,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-activation bounds of every neuron over an input region.
    Bounds {
        #[arg(long)]
        net: PathBuf,
        /// Centre of the region (JSON array or comma-separated numbers).
        /// Without it the whole input box is used.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = BoundMethod::Deeppoly)]
        method: BoundMethod,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        out: OutFormat,
    },
    /// Verifies every row of a dataset (CSV, label in the last column).
    Verify {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        eps: f64,
        /// deeppoly, bigm-lp, cayley-lp, bigm-exact or cayley-exact.
        #[arg(long, default_value = "cayley-lp")]
        mode: Mode,
        #[arg(long, default_value_t = 20)]
        max_cut_rounds: usize,
        /// Minimum violation for a cut to be added.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Per-row time limit in seconds for the exact modes.
        #[arg(long, default_value_t = 120.0)]
        timeout: f64,
        #[arg(long, default_value_t = 100_000)]
        node_limit: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Seed for `--sample`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Check a random subset of this many rows.
        #[arg(long)]
        sample: Option<usize>,
        /// Exact modes: solve to optimality instead of stopping at the verdict.
        #[arg(long)]
        optimize: bool,
        /// Zero the timing fields (for reproducible output).
        #[arg(long)]
        no_times: bool,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        out: OutFormat,
    },
    /// Separates one point from the hull of one neuron (debugging aid).
    Separate {
        /// JSON file with `neuron`, `x`, `y`, `z` and optionally `direction`.
        #[arg(long)]
        instance: PathBuf,
        /// Overrides the direction in the instance file.
        #[arg(long, value_enum)]
        direction: Option<DirectionArg>,
        #[arg(long)]
        json: bool,
    },
}

fn bounds_csv(b: &PreActBounds) -> String {
    let mut s = String::from("neuron,lower,upper\n");
    for (layer, row) in b.layers.iter().enumerate() {
        for (index, (l, u)) in row.iter().enumerate() {
            s.push_str(&format!("L{layer}N{index},{l},{u}\n"));
        }
    }
    s
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Other(e.to_string()))
}

fn execute(cmd: Command) -> CliResult<String> {
    match cmd {
        Command::Bounds { net, input, eps, method, out } => {
            let network = load_network(&net)?;
            let region = match input {
                Some(p) => {
                    let x = parse_vector(&read_text(&p)?, &p.display().to_string())?;
                    network.input_box().intersect_ball(&x, eps)?
                }
                None => network.input_box().clone(),
            };
            let b = match method {
                BoundMethod::Deeppoly => deeppoly_bounds(&network, &region)?,
                BoundMethod::Interval => interval_bounds(&network, &region)?,
            };
            match out {
                OutFormat::Json => Ok(serde_json::to_string(&b).map_err(|e| CliError::Other(e.to_string()))? + "\n"),
                OutFormat::Csv => Ok(bounds_csv(&b)),
            }
        }
        Command::Verify {
            net,
            dataset,
            eps,
            mode,
            max_cut_rounds,
            tol,
            timeout,
            node_limit,
            jobs,
            seed,
            sample,
            optimize,
            no_times,
            out,
        } => {
            if !(timeout > 0.0) || !timeout.is_finite() {
                return Err(CliError::Input(format!("timeout must be a positive number of seconds, got {timeout}")));
            }
            let network = load_network(&net)?;
            let data = load_dataset(&dataset)?;
            let config = VerifyConfig {
                mode,
                max_cut_rounds,
                cut_tol: tol,
                node_limit,
                timeout: Duration::from_secs_f64(timeout),
                optimize,
                ..VerifyConfig::default()
            };
            let settings = run::RunSettings {
                net_path: net,
                dataset_path: dataset,
                eps,
                config,
                jobs,
                seed,
                sample,
                strip_times: no_times,
            };
            let manifest = run::run(&network, &data, &settings)?;
            eprintln!("{}", run::summary_line(mode, &manifest.summary));
            match out {
                OutFormat::Json => Ok(to_json(&manifest)? + "\n"),
                OutFormat::Csv => run::to_csv(&manifest),
            }
        }
        Command::Separate { instance, direction, json } => {
            let text = read_text(&instance)?;
            let inst: separate::Instance =
                serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", instance.display())))?;
            let dir = direction.map(|d| match d {
                DirectionArg::Upper => Direction::Upper,
                DirectionArg::Lower => Direction::Lower,
            });
            let out = separate::run(&inst, dir)?;
            if json {
                Ok(to_json(&out)? + "\n")
            } else {
                Ok(separate::render_text(&out))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STAIRVERIFY_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("stairverify: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
