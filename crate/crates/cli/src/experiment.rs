//! One experiment seed end to end: data, model, training, artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use per_core::group::Group;
use per_core::net::{
    build_network, save_checkpoint, Activation, InitScheme, LayerKind, Network, NetworkConfig,
};
use per_core::regularize::PerConfig;
use per_core::tasks::trajectory::{read_trajectories_csv, trajectories_split, trajectory_dataset};
use per_core::tasks::{
    ade, apply_normalization, data_equivariance_error, fit_normalization, DatasetMeta,
    NormalizationStats, Split, Splits, Trajectory,
};
use per_core::train::{train, Metric, RunResult, TrainConfig};
use per_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ModelKind, TaskKind};
use crate::results::ResultRow;

const INIT_STREAM: u64 = 7;

/// Splits ready for training, plus what is needed to score trajectories in
/// their original units.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub splits: Splits,
    pub stats: Option<NormalizationStats>,
    pub raw_test: Option<Vec<Trajectory>>,
}

fn trajectory_meta(seed: u64, split: Split) -> DatasetMeta {
    DatasetMeta {
        task: "trajectories".into(),
        error_type: 0,
        error_scale: 0.0,
        seed,
        split,
    }
}

pub fn raw_trajectories(cfg: &ExperimentConfig, seed: u64) -> Result<BTreeMap<Split, Vec<Trajectory>>> {
    match cfg.task {
        TaskKind::Import => {
            let path = cfg.import_path.as_ref().expect("validated");
            let splits = read_trajectories_csv(path)?;
            if let Some((s, _)) = splits.iter().find(|(_, t)| t.is_empty()) {
                return Err(Error::Config(format!(
                    "{}: no trajectories in split {}",
                    path.display(),
                    s.name()
                )));
            }
            Ok(splits)
        }
        _ => {
            let wind = nalgebra::Vector3::from(cfg.wind);
            Split::ALL
                .iter()
                .zip(cfg.sizes)
                .map(|(&s, n)| Ok((s, trajectories_split(n, &wind, cfg.noise, seed, s)?)))
                .collect()
        }
    }
}

pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    if !cfg.is_trajectory() {
        let spec = cfg.task_spec().expect("synthetic task");
        return Ok(PreparedData {
            splits: spec.generate_splits(cfg.sizes, seed)?,
            stats: None,
            raw_test: None,
        });
    }
    let mut raw = raw_trajectories(cfg, seed)?;
    let stats = match cfg.normalization {
        Some(mode) => Some(fit_normalization(&raw[&Split::Train], mode)?),
        None => None,
    };
    let build = |split: Split| {
        let trajs = raw.get(&split).expect("all splits");
        let trajs: Vec<Trajectory> = match &stats {
            Some(st) => trajs.iter().map(|t| apply_normalization(t, st).traj).collect(),
            None => trajs.clone(),
        };
        trajectory_dataset(&trajs, trajectory_meta(seed, split))
    };
    let splits = Splits {
        train: build(Split::Train),
        val: build(Split::Val),
        test: build(Split::Test),
    };
    Ok(PreparedData {
        splits,
        stats,
        raw_test: raw.remove(&Split::Test),
    })
}

pub fn network_config(cfg: &ExperimentConfig, splits: &Splits) -> NetworkConfig {
    let base = NetworkConfig::mlp(
        splits.train.rep_in.clone(),
        splits.train.rep_out.clone(),
        cfg.width,
        cfg.layers,
    );
    let default_act = match cfg.model {
        ModelKind::Mlp => Activation::Swish,
        _ => Activation::Gated,
    };
    let net = match cfg.model {
        ModelKind::Mlp => base,
        ModelKind::Per => base.with_groups(&cfg.groups),
        ModelKind::Emlp => base.with_kind(LayerKind::Emlp).with_groups(&cfg.groups),
        ModelKind::Rpp => base.with_kind(LayerKind::Rpp).with_groups(&cfg.groups),
        ModelKind::Memlp => base
            .with_kind(LayerKind::Memlp)
            .with_groups(&cfg.groups)
            .with_exact_groups(&cfg.exact_groups),
    };
    net.with_activation(cfg.activation.unwrap_or(default_act))
}

pub fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    let t = &cfg.train;
    let mut tc = TrainConfig::new(t.minibatch, t.max_epochs, t.base_lr, t.weight_decay);
    tc.patience = t.patience;
    tc.eval_every = t.eval_every;
    tc.seed = seed;
    tc.mc_inputs = t.mc_inputs;
    tc.mc_elements = t.mc_elements;
    tc.eval_groups = cfg.eval_groups().to_vec();
    if cfg.is_trajectory() {
        tc.metric = Metric::Ade;
    }
    match cfg.model {
        ModelKind::Per => {
            tc.per = Some(PerConfig::uniform(&cfg.groups, t.lambda, t.gamma, t.adjust_epoch));
        }
        ModelKind::Rpp | ModelKind::Memlp => {
            tc.rpp_sigmas = Some(t.rpp_sigmas.unwrap_or_default());
        }
        _ => {}
    }
    tc
}

/// Soft schemes only make sense for the regularized standard network; every
/// other model starts from the standard draw.
pub fn init_scheme(cfg: &ExperimentConfig) -> InitScheme {
    match cfg.model {
        ModelKind::Per => cfg.init_scheme(),
        _ => InitScheme::Standard,
    }
}

pub fn build_model(cfg: &ExperimentConfig, splits: &Splits, seed: u64) -> Result<Network> {
    let mut net = build_network(&network_config(cfg, splits))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    net.init_weights(init_scheme(cfg), &mut rng)?;
    Ok(net)
}

/// Test ADE in the original coordinates of normalized trajectories.
pub fn original_unit_ade(
    net: &Network,
    raw_test: &[Trajectory],
    stats: &NormalizationStats,
) -> Result<f64> {
    let normalized: Vec<_> = raw_test.iter().map(|t| apply_normalization(t, stats)).collect();
    let trajs: Vec<Trajectory> = normalized.iter().map(|n| n.traj.clone()).collect();
    let ds = trajectory_dataset(&trajs, trajectory_meta(0, Split::Test));
    let pred = net.forward(&ds.inputs)?;
    let mut total = 0.0;
    for (r, (n, raw)) in normalized.iter().zip(raw_test).enumerate() {
        let p: Vec<f64> = pred
            .row(r)
            .iter()
            .copied()
            .collect::<Vec<_>>()
            .chunks(3)
            .flat_map(|c| {
                let v = stats.denormalize_point(&nalgebra::Vector3::new(c[0], c[1], c[2])) + n.offset;
                [v.x, v.y, v.z]
            })
            .collect();
        total += ade(&p, &raw.future_flat())?;
    }
    Ok(total / raw_test.len().max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub result: RunResult,
    pub data_equiv: BTreeMap<String, f64>,
    pub net: Network,
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    cfg.validate()?;
    let data = prepare_data(cfg, seed)?;
    let mut net = build_model(cfg, &data.splits, seed)?;
    let mut result = train(&mut net, &data.splits, &train_config(cfg, seed))?;
    if let (Some(stats), Some(raw)) = (&data.stats, &data.raw_test) {
        result.test_metric = original_unit_ade(&net, raw, stats)?;
    }
    let mut data_equiv = BTreeMap::new();
    if let Some(spec) = cfg.task_spec() {
        for g in cfg.eval_groups() {
            let group: Group = g.parse()?;
            let e = data_equivariance_error(
                &spec,
                &group,
                cfg.train.mc_inputs,
                cfg.train.mc_elements,
                seed,
            )?;
            data_equiv.insert(g.clone(), e);
        }
    }
    Ok(RunOutcome {
        seed,
        result,
        data_equiv,
        net,
    })
}

/// `trace.csv`, `summary.json` and the `model` checkpoint pair.
pub fn persist(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    outcome.result.write_trace_csv(&dir.join("trace.csv"))?;
    outcome.result.write_summary_json(&dir.join("summary.json"))?;
    save_checkpoint(&outcome.net, &dir.join("model"))?;
    Ok(())
}

pub fn result_row(cfg: &ExperimentConfig, outcome: &RunOutcome) -> ResultRow {
    let res = &outcome.result;
    let groups = cfg.eval_groups().to_vec();
    let per_value = |values: &[f64], g: &str| {
        res.per_groups
            .iter()
            .position(|p| p == g)
            .map(|i| values[i])
            .unwrap_or(f64::NAN)
    };
    ResultRow {
        seed: outcome.seed,
        task: cfg.task_name().into(),
        error_type: cfg.error_type,
        error_scale: cfg.error_scale,
        model: cfg.model.name().into(),
        test_metric: res.test_metric,
        lambda: groups.iter().map(|g| per_value(&res.final_lambdas, g)).collect(),
        regularizer: groups.iter().map(|g| per_value(&res.final_r, g)).collect(),
        model_equiv: groups
            .iter()
            .map(|g| res.equiv_errors.get(g).copied().unwrap_or(f64::NAN))
            .collect(),
        data_equiv: groups
            .iter()
            .map(|g| outcome.data_equiv.get(g).copied().unwrap_or(f64::NAN))
            .collect(),
        groups,
        wall_time: res.wall_time,
        status: "ok".into(),
    }
}

/// A row recording a failed run.
pub fn failed_row(cfg: &ExperimentConfig, seed: u64, err: &Error) -> ResultRow {
    let groups = cfg.eval_groups().to_vec();
    let nan = vec![f64::NAN; groups.len()];
    ResultRow {
        seed,
        task: cfg.task_name().into(),
        error_type: cfg.error_type,
        error_scale: cfg.error_scale,
        model: cfg.model.name().into(),
        test_metric: f64::NAN,
        lambda: nan.clone(),
        regularizer: nan.clone(),
        model_equiv: nan.clone(),
        data_equiv: nan,
        groups,
        wall_time: 0.0,
        status: match err {
            Error::Diverged { .. } => format!("diverged: {err}"),
            _ => format!("failed: {err}"),
        },
    }
}

/// Regenerate the test split and score a saved model on it.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    stem: &Path,
    seed: u64,
) -> Result<(f64, BTreeMap<String, f64>)> {
    let net = per_core::net::load_checkpoint(stem)?;
    let data = prepare_data(cfg, seed)?;
    let tc = train_config(cfg, seed);
    let metric = match (&data.stats, &data.raw_test) {
        (Some(stats), Some(raw)) => original_unit_ade(&net, raw, stats)?,
        _ => per_core::train::evaluate(&net, &data.splits.test, tc.metric)?,
    };
    let mut errs = BTreeMap::new();
    let test = &data.splits.test;
    let rows = tc.mc_inputs.min(test.len());
    for g in cfg.eval_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = per_core::tasks::model_equivariance_error(
            &net,
            &g.parse()?,
            &test.rep_in,
            &test.rep_out,
            &test.inputs.rows(0, rows).into_owned(),
            tc.mc_elements,
            &mut rng,
        )?;
        errs.insert(g.clone(), e);
    }
    Ok((metric, errs))
}
