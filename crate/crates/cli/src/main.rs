use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thermal_muscle::controller::TrajectoryRequest;
use thermal_muscle_cli::commands;
use thermal_muscle_cli::eval;
use thermal_muscle_cli::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "tmctl", version, about = "Thermal muscle twin and ensemble controller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by commands that read a run configuration.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Twin parameter file.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Hold durations in seconds, comma separated.
    #[arg(long)]
    holds: Option<String>,
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    /// Any configuration key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self, extra: &[(String, String)]) -> CliResult<RunConfig> {
        let mut overrides = Vec::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Invalid(format!("--set expects KEY=VALUE, got {item:?}")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut named = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                overrides.push((key.to_string(), v));
            }
        };
        named("seed", self.seed.map(|v| v.to_string()));
        named("params", self.params.as_ref().map(|p| p.display().to_string()));
        named("holds", self.holds.clone());
        named("members", self.members.map(|v| v.to_string()));
        named("epochs", self.epochs.map(|v| v.to_string()));
        named("fps", self.fps.map(|v| v.to_string()));
        named("noise_std", self.noise_std.map(|v| v.to_string()));
        overrides.extend_from_slice(extra);
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

#[derive(Args, Clone, Copy)]
struct RequestArgs {
    /// Initial displacement, mm.
    #[arg(long)]
    di: f64,
    /// Final displacement, mm.
    #[arg(long)]
    df: f64,
    /// Time constant, s.
    #[arg(long)]
    tau: f64,
    /// Episode length, s.
    #[arg(long)]
    duration: f64,
}

impl RequestArgs {
    fn request(self) -> TrajectoryRequest {
        TrajectoryRequest {
            d_init: self.di,
            d_final: self.df,
            tau: self.tau,
            duration: self.duration,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the excitation schedules and build the training dataset.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the ensemble on a dataset file.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the ensemble's power for a trajectory request.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        request: RequestArgs,
    },
    /// Run an open-loop episode on the twin.
    Control {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        request: RequestArgs,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate data, train, run the held-out battery and check every criterion.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Use this dataset instead of generating one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Chart the columns of a CSV file against its first column.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = config.resolve(&[])?;
            let build = commands::gen_data(&cfg, &out)?;
            println!(
                "wrote {} samples from {} schedules to {}",
                build.dataset.len(),
                build.footage.len(),
                out.display()
            );
        }
        Command::Train { config, dataset, out } => {
            let cfg = config.resolve(&[])?;
            let ens = commands::train(&cfg, &dataset, &out)?;
            for (k, m) in ens.members.iter().enumerate() {
                println!(
                    "member {k:2}: lambda {:.3e}, final val loss {:.5}",
                    m.lambda,
                    m.val_loss.last().copied().unwrap_or(f64::NAN)
                );
            }
            println!("bundle written to {}", out.join("bundle").display());
        }
        Command::Predict { bundle, request } => {
            let req = request.request();
            let (pred, elapsed) = commands::predict(&bundle, &req)?;
            if pred.extrapolated {
                eprintln!("{}", commands::extrapolation_warning(&req));
            }
            let mut value = commands::prediction_json(&pred);
            value["inference_ms"] = (elapsed.as_secs_f64() * 1e3).into();
            print!("{}", thermal_muscle_cli::output::to_json_text(&value));
        }
        Command::Control {
            config,
            bundle,
            request,
            repeats,
            out,
        } => {
            let extra: Vec<(String, String)> = repeats.map(|r| ("repeats".to_string(), r.to_string())).into_iter().collect();
            let cfg = config.resolve(&extra)?;
            let req = request.request();
            let run = commands::control(&cfg, &bundle, &req, &out)?;
            if run.report.prediction.extrapolated {
                eprintln!("{}", commands::extrapolation_warning(&req));
            }
            print!("{}", run.summary);
        }
        Command::Eval { config, dataset, out } => {
            let cfg = config.resolve(&[])?;
            let outcome = eval::eval(&cfg, &out, dataset.as_deref())?;
            print!("{}", outcome.table(cfg.params()?.full_stroke));
            println!("report: {}", out.join(eval::REPORT_FILE).display());
            if !outcome.passed() {
                let failed: Vec<String> = outcome
                    .criteria
                    .iter()
                    .filter(|c| !c.passed())
                    .map(|c| c.id.to_string())
                    .collect();
                return Err(CliError::Criteria(format!("criteria {} failed", failed.join(", "))));
            }
        }
        Command::Plot { input, out, title } => {
            commands::plot(&input, &out, title.as_deref())?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
