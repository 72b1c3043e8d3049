mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mi_updates::dp_audit::{run_audit, write_audit_csv, DpAuditConfig};
use mi_updates::experiment::{
    run_experiment_with, run_sweep, write_sweep_csv, ExperimentConfig, ExperimentOutput, Instantiation, SweepRow,
};
use mi_updates::mean_lab::{run_mean_experiment, write_mean_csv, MeanLabConfig};
use mi_updates::Execution;
use serde::Serialize;

use manifest::{config_hash, unix_now, RunManifest, ARTIFACT_VERSION};

#[derive(Parser)]
#[command(name = "mi-updates", version, about = "Membership inference against updated models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-update game: attacks on (f0, f1) against no-update baselines.
    Single(Common),
    /// Multi-update game with k >= 2 updates.
    Multi(Common),
    /// Single update drawn from a mixture of the population and a target.
    Shift(Common),
    /// Mean-estimation distinguishers with and without the update.
    MeanLab(Common),
    /// DP-SGD update audit over a grid of noise multipliers.
    DpAudit(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, env = "MI_UPDATES_OUT")]
    out: PathBuf,
    /// Concurrent worlds; 1 runs sequentially. Defaults to available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{message}")]
    Config { message: String, path: Option<PathBuf> },
    #[error("{message}")]
    Runtime { message: String, path: Option<PathBuf> },
}

impl CliError {
    fn config(message: impl Into<String>, path: &Path) -> Self {
        CliError::Config {
            message: message.into(),
            path: Some(path.to_path_buf()),
        }
    }

    fn runtime(message: impl Into<String>, path: &Path) -> Self {
        CliError::Runtime {
            message: message.into(),
            path: Some(path.to_path_buf()),
        }
    }

    /// Config errors point at the config file; runtime errors keep the
    /// library's own description.
    fn from_lib(e: mi_updates::Error, config: &Path) -> Self {
        if e.is_config() {
            CliError::config(e.to_string(), config)
        } else {
            CliError::Runtime {
                message: e.to_string(),
                path: None,
            }
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime { .. } => 3,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, message, path) = match self {
            CliError::Config { message, path } => ("config", message, path),
            CliError::Runtime { message, path } => ("runtime", message, path),
        };
        serde_json::json!({
            "error": {
                "kind": kind,
                "message": message,
                "path": path,
                "exit_code": self.exit_code(),
            }
        })
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Single(c) => experiment_command("single", c),
        Command::Multi(c) => experiment_command("multi", c),
        Command::Shift(c) => experiment_command("shift", c),
        Command::MeanLab(c) => mean_lab_command(c),
        Command::DpAudit(c) => dp_audit_command(c),
    }
}

fn read_config(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read config: {e}"), path))
}

fn base_dir(config: &Path) -> &Path {
    config.parent().unwrap_or(Path::new("."))
}

/// Collects output files and writes the manifest last.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    started: f64,
}

impl Outputs {
    fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime(format!("cannot create output directory: {e}"), dir))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: unix_now(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string(), &path))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::runtime(e.to_string(), &path))
    }

    fn finish<T: Serialize>(mut self, command: &'static str, config_path: &Path, config: &T, seed: u64) -> CliResult<()> {
        let hash = config_hash(config).map_err(|e| CliError::runtime(e.to_string(), config_path))?;
        let manifest_path = self.dir.join("manifest.json");
        let manifest = RunManifest {
            artifact_version: ARTIFACT_VERSION,
            command,
            config_path: config_path.to_path_buf(),
            config_hash: hash,
            seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            outputs: std::mem::take(&mut self.written),
        };
        self.json("manifest.json", &manifest)?;
        eprintln!("wrote {}", manifest_path.display());
        Ok(())
    }
}

fn experiment_command(command: &'static str, args: Common) -> CliResult<()> {
    let text = read_config(&args.config)?;
    let mut config = ExperimentConfig::from_json(&text).map_err(|e| CliError::from_lib(e, &args.config))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if config.instantiation.name() != command {
        return Err(CliError::config(
            format!(
                "config describes a {} experiment but the {command} command was used",
                config.instantiation.name()
            ),
            &args.config,
        ));
    }
    config.validate().map_err(|e| CliError::from_lib(e, &args.config))?;

    let exec = Execution::with_workers(args.workers);
    let base = base_dir(&args.config);
    let mut outputs = Outputs::create(&args.out)?;
    let out = run_experiment_with(&config, exec, base).map_err(|e| CliError::from_lib(e, &args.config))?;
    outputs.json("summary.json", &out.report)?;

    let path = outputs.path("trials.jsonl");
    let file = File::create(&path).map_err(|e| CliError::runtime(e.to_string(), &path))?;
    let mut w = BufWriter::new(file);
    out.write_trials_jsonl(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::runtime(e.to_string(), &path))?;

    let rows = if config.sweep.is_some() {
        run_sweep(&config, exec, base).map_err(|e| CliError::from_lib(e, &args.config))?
    } else {
        current_rows(&config, &out)
    };
    let path = outputs.path("sweep.csv");
    write_sweep_csv(&path, &rows).map_err(|e| CliError::runtime(e.to_string(), &path))?;

    for m in &out.report.attacks {
        println!(
            "{:<45} accuracy {:.4} ± {:.4}  specific {:.4}{}",
            m.attack,
            m.accuracy,
            m.accuracy_stderr,
            m.specific_accuracy,
            if m.best { "  *" } else { "" }
        );
    }
    outputs.finish(command, &args.config, &config, config.seed)
}

/// Sweep rows for an unswept run: the instantiation's natural axis at its
/// configured value.
fn current_rows(config: &ExperimentConfig, out: &ExperimentOutput) -> Vec<SweepRow> {
    let (parameter, value) = match &config.instantiation {
        Instantiation::Single => ("n_up", config.n_up as f64),
        Instantiation::Multi { k } => ("k", *k as f64),
        Instantiation::Shift { alpha, .. } => ("alpha", *alpha),
    };
    out.report
        .attacks
        .iter()
        .map(|m| SweepRow {
            parameter: parameter.into(),
            value,
            attack: m.attack.clone(),
            trials: m.trials,
            accuracy: m.accuracy,
            accuracy_stderr: m.accuracy_stderr,
            generic_accuracy: m.generic_accuracy,
            specific_accuracy: m.specific_accuracy,
            precision: m.precision,
            recall: m.recall,
        })
        .collect()
}

fn mean_lab_command(args: Common) -> CliResult<()> {
    let text = read_config(&args.config)?;
    let mut config = MeanLabConfig::from_json(&text).map_err(|e| CliError::from_lib(e, &args.config))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(|e| CliError::from_lib(e, &args.config))?;
    let mut outputs = Outputs::create(&args.out)?;
    let rows = run_mean_experiment(&config, Execution::with_workers(args.workers))
        .map_err(|e| CliError::from_lib(e, &args.config))?;
    outputs.json("summary.json", &rows)?;
    let path = outputs.path("mean_lab.csv");
    write_mean_csv(&rows, &path).map_err(|e| CliError::runtime(e.to_string(), &path))?;
    for r in &rows {
        println!("n1 = {:<5} {:<10} accuracy {:.4} ± {:.4}", r.n1, r.attack, r.accuracy, r.stderr);
    }
    outputs.finish("mean-lab", &args.config, &config, config.seed)
}

fn dp_audit_command(args: Common) -> CliResult<()> {
    let text = read_config(&args.config)?;
    let mut config = DpAuditConfig::from_json(&text).map_err(|e| CliError::from_lib(e, &args.config))?;
    if let Some(seed) = args.seed {
        config.experiment.seed = seed;
    }
    config.validate().map_err(|e| CliError::from_lib(e, &args.config))?;
    let mut outputs = Outputs::create(&args.out)?;
    let results = run_audit(&config, Execution::with_workers(args.workers), base_dir(&args.config))
        .map_err(|e| CliError::from_lib(e, &args.config))?;
    outputs.json("audit.json", &results)?;
    let path = outputs.path("audit.csv");
    write_audit_csv(&results, &path).map_err(|e| CliError::runtime(e.to_string(), &path))?;
    for r in &results {
        println!(
            "sigma {:<6} epsilon {:<10.4} precision {:.4}  epsilon lower bound {:.4}",
            r.noise_multiplier,
            r.epsilon_value(),
            r.precision.unwrap_or(f64::NAN),
            r.epsilon_lower_value()
        );
    }
    outputs.finish("dp-audit", &args.config, &config, config.experiment.seed)
}
