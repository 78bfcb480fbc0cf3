use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nibp::experiment::{self, ExperimentConfig};
use nibp::icla::DEFAULT_N_WALKS;
use nibp::{io, Error, Result};
use serde::Serialize;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "nibp", version, about = "Noisy QAOA landscape sweeps and gradient-flattening analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample landscapes over a layer sweep, run ICLA and write the gradient curve.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run ICLA on a landscape CSV.
    Icla {
        landscape: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_WALKS)]
        n_walks: usize,
        #[arg(long)]
        seed: u64,
        /// Use only the first K points of the file.
        #[arg(long, value_name = "K")]
        max_points: Option<usize>,
        /// Write the JSON result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the flattening point of a gradient curve and derive the effective T1.
    Analyze {
        curve: PathBuf,
        #[arg(long, default_value_t = nibp::analysis::DEFAULT_P_THRESHOLD)]
        p_threshold: f64,
        /// One T1 value (us) per line, for the percentile of the effective T1.
        #[arg(long)]
        t1_file: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Final-state eigenvalue spectra at each configured depth.
    Spectrum {
        #[command(flatten)]
        config: ConfigArgs,
        /// Parameter sets, one comma-separated vector per line.
        #[arg(long)]
        theta_file: Option<PathBuf>,
    },
    /// Shot-noise floor of the ICLA estimator at each configured depth.
    NoiseFloor {
        #[command(flatten)]
        config: ConfigArgs,
        /// Gradient curve to compare the floor against.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

/// Config file plus flag overrides. Flags win over the file; `--set`
/// reaches every key, including nested ones such as `noise.t1_mean`.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_qubits: Option<usize>,
    /// Comma-separated layer counts, e.g. 2,6,10.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    exact_cost: bool,
    #[arg(long)]
    platform: Option<String>,
    /// none, depolarizing, amplitude_damping, ad_dephasing or damping_probability.
    #[arg(long)]
    noise: Option<String>,
    /// per_layer or per_gate.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_walks: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    tag: Option<String>,
    /// Arbitrary override, repeatable: KEY=VALUE with a TOML literal value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        if let Some(v) = self.seed {
            push("seed", v.to_string());
        }
        if let Some(v) = self.n_qubits {
            push("n_qubits", v.to_string());
        }
        if let Some(v) = &self.layers {
            let items: Vec<String> = v.iter().map(ToString::to_string).collect();
            push("layers", format!("[{}]", items.join(", ")));
        }
        if let Some(v) = self.shots {
            push("shots", v.to_string());
        }
        if self.exact_cost {
            push("exact_cost", "true".into());
        }
        if let Some(v) = &self.platform {
            push("platform", quoted(v));
        }
        if let Some(v) = &self.noise {
            push("noise.kind", quoted(v));
        }
        if let Some(v) = &self.schedule {
            push("noise.schedule", quoted(v));
        }
        if let Some(v) = self.p {
            push("noise.p", format!("{v:?}"));
        }
        if let Some(v) = self.gamma {
            push("noise.gamma", format!("{v:?}"));
        }
        if let Some(v) = self.n_walks {
            push("n_walks", v.to_string());
        }
        if let Some(v) = &self.output_dir {
            push("output_dir", quoted(&v.to_string_lossy()));
        }
        if let Some(v) = &self.tag {
            push("tag", quoted(v));
        }
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{item}'")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides()?)
    }
}

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { config } => {
            let cfg = config.load()?;
            let (dir, outcome) = experiment::cmd_sweep(&cfg)?;
            eprintln!("wrote {}", dir.display());
            emit(&outcome.reports(), None)
        }
        Command::Icla {
            landscape,
            n_walks,
            seed,
            max_points,
            out,
        } => {
            let result = experiment::cmd_icla(&landscape, n_walks, seed, max_points)?;
            emit(&result, out.as_deref())
        }
        Command::Analyze {
            curve,
            p_threshold,
            t1_file,
            out,
        } => {
            let result = experiment::cmd_analyze(&curve, p_threshold, t1_file.as_deref())?;
            emit(&result, out.as_deref())
        }
        Command::Spectrum { config, theta_file } => {
            let cfg = config.load()?;
            let (dir, summary) = experiment::cmd_spectrum(&cfg, theta_file.as_deref())?;
            eprintln!("wrote {}", dir.display());
            emit(&summary, None)
        }
        Command::NoiseFloor { config, curve } => {
            let cfg = config.load()?;
            let (path, entries) = experiment::cmd_noise_floor(&cfg, curve.as_deref())?;
            eprintln!("wrote {}", path.display());
            emit(&entries, None)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}
