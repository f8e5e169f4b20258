use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hgfc::model::UnrelatedInstance;
use hgfc_cli::{
    gen_instance, run_experiment, run_sweep, verify_dir, write_bundle, Algorithm, BenchmarkChoice, CliError,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "hgfc", version, about = "Online scheduling experiments with mechanically checked duals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the generated instances as JSON.
    Gen(Common),
    /// Run one experiment and write its results bundle.
    Run {
        #[command(flatten)]
        common: Common,
        /// Instance file to run instead of generating one.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Re-derive every summary row of a results directory from its ledger.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every config of a JSON array into numbered subdirectories.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; a JSON array for `sweep`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    #[arg(long, value_enum)]
    benchmark: Option<BenchmarkChoice>,
    #[arg(long)]
    trials: Option<usize>,
}

impl Common {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(v) = self.delta {
            config.delta = v;
        }
        if let Some(v) = self.epsilon {
            config.epsilon = Some(v);
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.algorithm {
            config.algorithm = v;
        }
        if let Some(v) = self.benchmark {
            config.benchmark = v;
        }
        if let Some(v) = self.trials {
            config.trials = v;
        }
    }

    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => serde_json::from_str(&read(path)?)?,
            None => ExperimentConfig::default(),
        };
        self.apply(&mut config);
        Ok(config)
    }

    fn configs(&self) -> Result<Vec<ExperimentConfig>, CliError> {
        let path = self.config.as_ref().ok_or_else(|| CliError::BadConfig("sweep needs --config".into()))?;
        let mut configs: Vec<ExperimentConfig> = serde_json::from_str(&read(path)?)?;
        for c in &mut configs {
            self.apply(c);
        }
        Ok(configs)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// `Ok(true)` when every invariant held.
fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Gen(common) => {
            let config = common.config()?;
            fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out, e))?;
            for trial in 0..config.trials {
                let inst = gen_instance(&config, trial)?;
                let path = common.out.join(format!("instance_{trial:04}.json"));
                let text = serde_json::to_string_pretty(&inst)? + "\n";
                fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            }
            println!("wrote {} instances to {}", config.trials, common.out.display());
            Ok(true)
        }
        Command::Run { common, instance } => {
            let mut config = common.config()?;
            if let Some(path) = instance {
                let inst: UnrelatedInstance = serde_json::from_str(&read(&path)?)?;
                config.delta = inst.delta;
                config.n_machines = inst.machines;
                config.jobs = Some(inst.jobs);
            }
            let bundle = run_experiment(&config)?;
            write_bundle(&bundle, &common.out)?;
            let rows = bundle.rows();
            let passed = rows.iter().filter(|r| r.pass).count();
            println!("{passed}/{} trials pass; results in {}", rows.len(), common.out.display());
            Ok(bundle.all_pass())
        }
        Command::Verify { out } => {
            let outcome = verify_dir(&out)?;
            for m in &outcome.mismatches {
                println!("mismatch {m}");
            }
            for f in &outcome.failures {
                println!("fail {f}");
            }
            println!(
                "{} rows, {} mismatches, {} failures",
                outcome.rows,
                outcome.mismatches.len(),
                outcome.failures.len()
            );
            Ok(outcome.ok())
        }
        Command::Sweep(common) => {
            let rows = run_sweep(&common.configs()?, &common.out)?;
            let passed = rows.iter().filter(|r| r.pass).count();
            println!("{passed}/{} trials pass; results in {}", rows.len(), common.out.display());
            Ok(passed == rows.len())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
