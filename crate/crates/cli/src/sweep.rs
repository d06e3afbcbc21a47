//! Grids of PER hyperparameters and the worker pool that runs them.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use per_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::experiment::{failed_row, persist, result_row, run_seed};
use crate::results::{append_row, ResultRow};

/// Empty axes keep the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub adjust_epochs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub schema: u32,
    pub base: ExperimentConfig,
    #[serde(default)]
    pub grid: Grid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lambda: f64,
    pub gamma: f64,
    pub adjust_epoch: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported sweep schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        self.base.validate()?;
        for c in self.cells() {
            let max = self.base.train.max_epochs;
            if c.adjust_epoch >= max {
                return Err(Error::Config(format!(
                    "adjust epoch {} is not below max_epochs {max}",
                    c.adjust_epoch
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SweepConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cartesian product in (λ, γ, adjust epoch) order, λ slowest.
    pub fn cells(&self) -> Vec<Cell> {
        let t = &self.base.train;
        let or = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let lambdas = or(&self.grid.lambdas, t.lambda);
        let gammas = or(&self.grid.gammas, t.gamma);
        let adjusts = if self.grid.adjust_epochs.is_empty() {
            vec![t.adjust_epoch]
        } else {
            self.grid.adjust_epochs.clone()
        };
        let mut out = Vec::new();
        for &lambda in &lambdas {
            for &gamma in &gammas {
                for &adjust_epoch in &adjusts {
                    out.push(Cell {
                        lambda,
                        gamma,
                        adjust_epoch,
                    });
                }
            }
        }
        out
    }

    pub fn cell_config(&self, cell: &Cell) -> ExperimentConfig {
        let mut c = self.base.clone();
        c.train.lambda = cell.lambda;
        c.train.gamma = cell.gamma;
        c.train.adjust_epoch = cell.adjust_epoch;
        c
    }
}

/// One training run and where its artifacts go.
#[derive(Debug, Clone)]
pub struct Job {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub dir: PathBuf,
}

fn run_job(job: &Job) -> (ResultRow, Option<Error>) {
    let outcome = run_seed(&job.cfg, job.seed).and_then(|o| {
        persist(&o, &job.dir)?;
        Ok(o)
    });
    match outcome {
        Ok(o) => (result_row(&job.cfg, &o), None),
        Err(e) => (failed_row(&job.cfg, job.seed, &e), Some(e)),
    }
}

/// Run jobs on up to `workers` threads. A single collector appends rows to
/// `results` in job order; failed jobs get a status row and the first error
/// is returned once every job has finished.
pub fn execute(jobs: &[Job], workers: usize, results: &Path) -> Result<Vec<ResultRow>> {
    let workers = workers.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, ResultRow, Option<Error>)>();
    std::thread::scope(|s| -> Result<Vec<ResultRow>> {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let (row, err) = run_job(job);
                if tx.send((i, row, err)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending: Vec<Option<(ResultRow, Option<Error>)>> =
            (0..jobs.len()).map(|_| None).collect();
        let mut written = 0;
        let mut rows = Vec::with_capacity(jobs.len());
        let mut first_err = None;
        let mut io_err = None;
        for (i, row, err) in rx {
            pending[i] = Some((row, err));
            while let Some(Some((row, err))) = pending.get_mut(written).map(Option::take) {
                if io_err.is_none() {
                    if let Err(e) = append_row(results, &row) {
                        io_err = Some(e);
                    }
                }
                if first_err.is_none() {
                    first_err = err;
                }
                rows.push(row);
                written += 1;
            }
        }
        match io_err.or(first_err) {
            Some(e) => Err(e),
            None => Ok(rows),
        }
    })
}

pub fn sweep_jobs(sweep: &SweepConfig, out: &Path) -> Vec<Job> {
    let mut jobs = Vec::new();
    for (i, cell) in sweep.cells().iter().enumerate() {
        let cfg = sweep.cell_config(cell);
        for &seed in &cfg.seeds {
            jobs.push(Job {
                cfg: cfg.clone(),
                seed,
                dir: out.join(format!("cell_{i}")).join(format!("seed_{seed}")),
            });
        }
    }
    jobs
}

/// `cells.csv`: the hyperparameters behind each `cell_<i>` directory.
pub fn write_cells(sweep: &SweepConfig, path: &Path) -> Result<()> {
    let mut text = String::from("cell,lambda,gamma,adjust_epoch\n");
    for (i, c) in sweep.cells().iter().enumerate() {
        text.push_str(&format!("{i},{:e},{:e},{}\n", c.lambda, c.gamma, c.adjust_epoch));
    }
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    std::fs::write(path, text)?;
    Ok(())
}
