//! Versioned JSON experiment configuration and the bundled presets.

use std::path::{Path, PathBuf};

use per_core::net::{Activation, InitScheme};
use per_core::regularize::PriorSigmas;
use per_core::tasks::{NormalizationMode, TaskSpec, DEFAULT_MC_ELEMENTS, DEFAULT_MC_INPUTS,
    DEFAULT_SPLIT_SIZE};
use per_core::train::{DEFAULT_EVAL_EVERY, DEFAULT_PATIENCE};
use per_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Inertia,
    Cossim,
    Trajectories,
    Import,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Emlp,
    Rpp,
    Memlp,
    Per,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Emlp => "emlp",
            ModelKind::Rpp => "rpp",
            ModelKind::Memlp => "memlp",
            ModelKind::Per => "per",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_u8() -> u8 {
    1
}

fn default_sizes() -> [usize; 3] {
    [DEFAULT_SPLIT_SIZE; 3]
}

fn default_layers() -> usize {
    4
}

fn default_patience() -> usize {
    DEFAULT_PATIENCE
}

fn default_eval_every() -> usize {
    DEFAULT_EVAL_EVERY
}

fn default_mc_inputs() -> usize {
    DEFAULT_MC_INPUTS
}

fn default_mc_elements() -> usize {
    DEFAULT_MC_ELEMENTS
}

fn default_gamma() -> f64 {
    2.0
}

/// Optimizer and PER settings shared by all seeds of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub minibatch: usize,
    pub max_epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Initial PER coefficient, shared by every group.
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub adjust_epoch: usize,
    #[serde(default)]
    pub rpp_sigmas: Option<PriorSigmas>,
    #[serde(default = "default_mc_inputs")]
    pub mc_inputs: usize,
    #[serde(default = "default_mc_elements")]
    pub mc_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub task: TaskKind,
    #[serde(default = "one_u8")]
    pub error_type: u8,
    #[serde(default = "one")]
    pub error_scale: f64,
    /// Constant wind acceleration of the synthetic trajectories.
    #[serde(default)]
    pub wind: [f64; 3],
    #[serde(default)]
    pub noise: f64,
    /// Trajectory CSV read by the `import` task.
    #[serde(default)]
    pub import_path: Option<PathBuf>,
    pub model: ModelKind,
    #[serde(default)]
    pub groups: Vec<String>,
    /// MEMLP only: the groups enforced exactly.
    #[serde(default)]
    pub exact_groups: Vec<String>,
    /// Groups for the reported model and data equivariance errors; defaults
    /// to `groups`.
    #[serde(default)]
    pub eval_groups: Vec<String>,
    pub width: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default)]
    pub activation: Option<Activation>,
    #[serde(default)]
    pub init: Option<InitScheme>,
    pub train: TrainSettings,
    #[serde(default)]
    pub normalization: Option<NormalizationMode>,
    #[serde(default = "default_sizes")]
    pub sizes: [usize; 3],
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported config schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        match self.model {
            ModelKind::Per | ModelKind::Emlp | ModelKind::Rpp if self.groups.is_empty() => {
                return Err(Error::Config(format!(
                    "model {} needs at least one group",
                    self.model.name()
                )));
            }
            ModelKind::Memlp => {
                if self.groups.is_empty() || self.exact_groups.is_empty() {
                    return Err(Error::Config(
                        "model memlp needs `groups` and a nonempty `exact_groups` subset".into(),
                    ));
                }
                if let Some(g) = self.exact_groups.iter().find(|g| !self.groups.contains(g)) {
                    return Err(Error::Config(format!("exact group `{g}` not in `groups`")));
                }
            }
            _ => {}
        }
        if self.task == TaskKind::Import && self.import_path.is_none() {
            return Err(Error::Config("task import needs `import_path`".into()));
        }
        if self.sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("split sizes must be positive".into()));
        }
        for g in self.groups.iter().chain(&self.eval_groups) {
            g.parse::<per_core::group::Group>()?;
        }
        Ok(())
    }

    pub fn init_scheme(&self) -> InitScheme {
        self.init.unwrap_or(InitScheme::Standard)
    }

    /// The generator behind synthetic tasks; `None` for imported data.
    pub fn task_spec(&self) -> Option<TaskSpec> {
        match self.task {
            TaskKind::Inertia => Some(TaskSpec::Inertia {
                error_type: self.error_type,
                error_scale: self.error_scale,
            }),
            TaskKind::Cossim => Some(TaskSpec::Cossim {
                error_type: self.error_type,
                error_scale: self.error_scale,
            }),
            TaskKind::Trajectories => Some(TaskSpec::Trajectories {
                wind: self.wind,
                noise: self.noise,
            }),
            TaskKind::Import => None,
        }
    }

    pub fn eval_groups(&self) -> &[String] {
        if self.eval_groups.is_empty() {
            &self.groups
        } else {
            &self.eval_groups
        }
    }

    pub fn is_trajectory(&self) -> bool {
        matches!(self.task, TaskKind::Trajectories | TaskKind::Import)
    }

    pub fn task_name(&self) -> &'static str {
        match self.task {
            TaskKind::Inertia => "inertia",
            TaskKind::Cossim => "cossim",
            TaskKind::Trajectories => "trajectories",
            TaskKind::Import => "import",
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub const PRESETS: [&str; 6] = [
    "desk",
    "paper",
    "desk-cossim",
    "paper-cossim",
    "desk-trajectories",
    "paper-trajectories",
];

fn per_config(
    task: TaskKind,
    error_type: u8,
    groups: &[&str],
    width: usize,
    train: TrainSettings,
) -> ExperimentConfig {
    ExperimentConfig {
        schema: SCHEMA_VERSION,
        task,
        error_type,
        error_scale: 1.0,
        wind: [0.0; 3],
        noise: 0.0,
        import_path: None,
        model: ModelKind::Per,
        groups: groups.iter().map(|g| g.to_string()).collect(),
        exact_groups: Vec::new(),
        eval_groups: Vec::new(),
        width,
        layers: 4,
        activation: None,
        init: None,
        train,
        normalization: None,
        sizes: default_sizes(),
        seeds: (0..5).collect(),
        output_dir: PathBuf::from("runs"),
    }
}

fn settings(minibatch: usize, max_epochs: usize, base_lr: f64, weight_decay: f64) -> TrainSettings {
    TrainSettings {
        minibatch,
        max_epochs,
        base_lr,
        weight_decay,
        patience: DEFAULT_PATIENCE,
        eval_every: DEFAULT_EVAL_EVERY,
        lambda: 1.0,
        gamma: 2.0,
        adjust_epoch: 0,
        rpp_sigmas: None,
        mc_inputs: DEFAULT_MC_INPUTS,
        mc_elements: DEFAULT_MC_ELEMENTS,
    }
}

/// `paper*` presets are the full-scale settings; desk presets shrink width
/// and epochs to laptop scale.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let axes = ["o2z", "o2x", "o2y"];
    let cfg = match name {
        "desk" => {
            // Batch 125 gives 4000 Adam steps by the adjust epoch, the same
            // count as the `paper` preset.
            let mut t = settings(125, 2000, 1e-3, 2e-4);
            (t.lambda, t.gamma, t.adjust_epoch) = (100.0, 2.0, 500);
            per_config(TaskKind::Inertia, 4, &axes, 64, t)
        }
        "paper" => {
            let mut t = settings(500, 8000, 1e-3, 2e-4);
            (t.lambda, t.gamma, t.adjust_epoch) = (100.0, 2.0, 2000);
            per_config(TaskKind::Inertia, 4, &axes, 384, t)
        }
        "desk-cossim" => {
            let mut t = settings(200, 2000, 1e-3, 2e-5);
            (t.lambda, t.gamma, t.adjust_epoch) = (0.005, 2.0, 500);
            per_config(TaskKind::Cossim, 2, &["so3", "s3"], 64, t)
        }
        "paper-cossim" => {
            let mut t = settings(200, 10_000, 2e-4, 2e-5);
            (t.lambda, t.gamma, t.adjust_epoch) = (0.005, 2.0, 2500);
            per_config(TaskKind::Cossim, 2, &["so3", "s3"], 128, t)
        }
        "desk-trajectories" => {
            let mut t = settings(128, 200, 1e-3, 0.0);
            (t.lambda, t.gamma, t.adjust_epoch) = (0.3, 5.0, 40);
            let mut c = per_config(TaskKind::Trajectories, 1, &axes, 64, t);
            c.wind = [0.0, 1.0, 0.0];
            c.noise = 0.05;
            c.normalization = Some(NormalizationMode::SymmetryAware);
            c.init = Some(InitScheme::HalfSoft);
            c
        }
        "paper-trajectories" => {
            let mut t = settings(128, 500, 2e-4, 0.0);
            (t.lambda, t.gamma, t.adjust_epoch) = (0.3, 5.0, 100);
            let mut c = per_config(TaskKind::Trajectories, 1, &axes, 384, t);
            c.normalization = Some(NormalizationMode::SymmetryAware);
            c.init = Some(InitScheme::HalfSoft);
            c
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}` (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let text = serde_json::to_string(&cfg).unwrap();
            assert!(text.contains("\"schema\":1"));
            let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, cfg);
        }
        assert!(preset("laptop").is_err());
    }

    #[test]
    fn full_scale_presets() {
        let c = preset("paper").unwrap();
        assert_eq!((c.width, c.layers, c.train.minibatch, c.train.max_epochs), (384, 4, 500, 8000));
        assert_eq!((c.train.base_lr, c.train.weight_decay), (1e-3, 2e-4));
        assert_eq!((c.train.lambda, c.train.gamma, c.train.adjust_epoch), (100.0, 2.0, 2000));
        assert_eq!(c.train.patience, 50);
        let c = preset("paper-cossim").unwrap();
        assert_eq!((c.width, c.train.minibatch, c.train.max_epochs), (128, 200, 10_000));
        assert_eq!((c.train.base_lr, c.train.weight_decay, c.train.adjust_epoch), (2e-4, 2e-5, 2500));
    }

    #[test]
    fn validation_rules() {
        let mut c = preset("desk").unwrap();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = preset("desk").unwrap();
        c.groups.clear();
        assert!(c.validate().is_err());
        c.model = ModelKind::Mlp;
        assert!(c.validate().is_ok());
        let mut c = preset("desk").unwrap();
        c.model = ModelKind::Memlp;
        assert!(c.validate().is_err());
        c.exact_groups = vec!["o2z".into()];
        assert!(c.validate().is_ok());
        c.exact_groups = vec!["o3".into()];
        assert!(c.validate().is_err());
        let mut c = preset("desk").unwrap();
        c.schema = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn minimal_json_fills_defaults() {
        let text = r#"{"schema": 1, "task": "cossim", "model": "mlp", "width": 32,
            "train": {"minibatch": 100, "max_epochs": 10, "base_lr": 0.001, "weight_decay": 0},
            "seeds": [3], "output_dir": "out"}"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!((c.error_type, c.layers, c.sizes), (1, 4, [1000; 3]));
        assert_eq!(c.train.patience, 50);
    }
}
