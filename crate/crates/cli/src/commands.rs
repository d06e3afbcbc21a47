//! Subcommands of the `per` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use per_core::equibasis::joint_basis;
use per_core::group::Group;
use per_core::rep::Rep;
use per_core::tasks::trajectory::write_trajectories_csv;
use per_core::tasks::Split;
use per_core::{Error, Result};

use crate::config::{preset, ExperimentConfig};
use crate::experiment::{evaluate_checkpoint, prepare_data, raw_trajectories};
use crate::results::read_rows;
use crate::stats::{correlate, observations, read_wide_table, write_report};
use crate::sweep::{execute, sweep_jobs, write_cells, Job, SweepConfig};

#[derive(Debug, Parser)]
#[command(name = "per", version, about = "Equivariance-regularized MLPs under mixed symmetries")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Global {
    /// Experiment (or sweep) config JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Bundled config: desk, paper, desk-cossim, paper-cossim,
    /// desk-trajectories, paper-trajectories.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Run this single seed instead of the configured list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the train/val/test splits as CSV.
    GenData,
    /// Train every seed; artifacts under `<out>/seed_<s>`, rows in `<out>/results.csv`.
    Train,
    /// Run a hyperparameter grid given by a sweep config.
    Sweep,
    /// Correlate data equivariance error with the per-group training quantities.
    Correlate {
        /// Results tables written by `train` or `sweep`.
        #[arg(long = "results", num_args = 1..)]
        results: Vec<PathBuf>,
        /// A wide per-dataset table (`data_err_<axis>`, `model_err_<axis>`, ...).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Score a saved checkpoint on the regenerated test split.
    Eval {
        /// Checkpoint stem (the path without `.csv` / `.json`).
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write the equivariant basis of a linear map as CSV, one column per line.
    BasisDump {
        /// Comma-separated groups, e.g. `o2z,o2x`.
        #[arg(long, value_delimiter = ',', required = true)]
        groups: Vec<String>,
        #[arg(long)]
        rep_in: String,
        #[arg(long)]
        rep_out: String,
    },
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged { .. } | Error::NonFinite(_) => 3,
        Error::Io(_) => 4,
        _ => 2,
    }
}

impl Global {
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either --config or --preset, not both".into()))
            }
            (Some(path), None) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::GenData => gen_data(&g.experiment()?),
        Command::Train => train(&g.experiment()?, g.workers).map(|_| ()),
        Command::Sweep => sweep(g),
        Command::Correlate { results, table } => correlate_cmd(results, table.as_deref(), g.out.as_deref()),
        Command::Eval { checkpoint } => eval(&g.experiment()?, checkpoint, g.out.as_deref()),
        Command::BasisDump {
            groups,
            rep_in,
            rep_out,
        } => basis_dump(groups, rep_in, rep_out, g.out.as_deref()),
    }
}

/// Splits of the first configured seed.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let seed = cfg.seeds[0];
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    if cfg.is_trajectory() {
        let raw = raw_trajectories(cfg, seed)?;
        let parts: Vec<(Split, &[_])> = Split::ALL.iter().map(|s| (*s, raw[s].as_slice())).collect();
        return write_trajectories_csv(&out.join("trajectories.csv"), &parts);
    }
    let data = prepare_data(cfg, seed)?;
    for s in Split::ALL {
        data.splits.get(s).write_csv(&out.join(format!("{}.csv", s.name())))?;
    }
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<crate::results::ResultRow>> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    cfg.save(&out.join("config.json"))?;
    let jobs: Vec<Job> = cfg
        .seeds
        .iter()
        .map(|&seed| Job {
            cfg: cfg.clone(),
            seed,
            dir: out.join(format!("seed_{seed}")),
        })
        .collect();
    execute(&jobs, workers, &out.join("results.csv"))
}

fn sweep(g: &Global) -> Result<()> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs --config <sweep.json>".into()))?;
    let mut s = SweepConfig::load(path)?;
    if let Some(seed) = g.seed {
        s.base.seeds = vec![seed];
    }
    if let Some(out) = &g.out {
        s.base.output_dir = out.clone();
    }
    let out = s.base.output_dir.clone();
    write_cells(&s, &out.join("cells.csv"))?;
    execute(&sweep_jobs(&s, &out), g.workers, &out.join("results.csv")).map(|_| ())
}

fn emit(out: Option<&Path>, file: &str, bytes: &[u8]) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(file), bytes)?;
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn correlate_cmd(results: &[PathBuf], table: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let mut obs = Vec::new();
    for p in results {
        obs.extend(observations(&read_rows(p)?));
    }
    if let Some(t) = table {
        obs.extend(read_wide_table(t)?);
    }
    if obs.is_empty() {
        return Err(Error::Config("correlate needs --results or --table".into()));
    }
    let mut buf = Vec::new();
    write_report(&mut buf, &correlate(&obs)?)?;
    emit(out, "correlation.csv", &buf)
}

fn eval(cfg: &ExperimentConfig, checkpoint: &Path, out: Option<&Path>) -> Result<()> {
    let (metric, errs) = evaluate_checkpoint(cfg, checkpoint, cfg.seeds[0])?;
    let json = serde_json::json!({ "test_metric": metric, "equiv_errors": errs });
    let mut text = serde_json::to_string_pretty(&json)?;
    text.push('\n');
    emit(out, "eval.json", text.as_bytes())
}

fn basis_dump(groups: &[String], rep_in: &str, rep_out: &str, out: Option<&Path>) -> Result<()> {
    let groups = groups.iter().map(|g| g.parse()).collect::<Result<Vec<Group>>>()?;
    let rep_in: Rep = rep_in.parse()?;
    let rep_out: Rep = rep_out.parse()?;
    let basis = joint_basis(&groups, &rep_in, &rep_out)?;
    let mut buf = Vec::new();
    basis.write_csv(&mut buf)?;
    emit(out, "basis.csv", &buf)
}
