//! Adam with cosine decay, early stopping and the regularized objective.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::Group;
use crate::net::Network;
use crate::regularize::{autotune, network_prior, per_total_with, PerConfig, PriorSigmas};
use crate::tasks::{
    ade, model_equivariance_error, mse, Dataset, Splits, DEFAULT_MC_ELEMENTS, DEFAULT_MC_INPUTS,
};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const DEFAULT_PATIENCE: usize = 50;
pub const DEFAULT_EVAL_EVERY: usize = 10;

const SHUFFLE_STREAM: u64 = 1 << 32;
const EQUIV_STREAM: u64 = 1 << 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Mse,
    Ade,
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub minibatch: usize,
    pub max_epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub per: Option<PerConfig>,
    #[serde(default)]
    pub rpp_sigmas: Option<PriorSigmas>,
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub metric: Metric,
    /// Groups for the final model equivariance errors.
    #[serde(default)]
    pub eval_groups: Vec<String>,
    #[serde(default = "default_mc_inputs")]
    pub mc_inputs: usize,
    #[serde(default = "default_mc_elements")]
    pub mc_elements: usize,
}

impl TrainConfig {
    pub fn new(minibatch: usize, max_epochs: usize, base_lr: f64, weight_decay: f64) -> Self {
        TrainConfig {
            minibatch,
            max_epochs,
            base_lr,
            weight_decay,
            patience: DEFAULT_PATIENCE,
            per: None,
            rpp_sigmas: None,
            seed: 0,
            eval_every: DEFAULT_EVAL_EVERY,
            metric: Metric::Mse,
            eval_groups: Vec::new(),
            mc_inputs: DEFAULT_MC_INPUTS,
            mc_elements: DEFAULT_MC_ELEMENTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.minibatch == 0 || self.max_epochs == 0 || self.patience == 0 || self.eval_every == 0
        {
            return Err(Error::Config(
                "minibatch, max_epochs, patience and eval_every must be >= 1".into(),
            ));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if let Some(per) = &self.per {
            per.validate()?;
        }
        Ok(())
    }
}

pub fn cosine_lr(epoch: usize, max_epochs: usize, base_lr: f64) -> Result<f64> {
    if max_epochs == 0 {
        return Err(Error::InvalidValue("cosine schedule needs max_epochs >= 1".into()));
    }
    if epoch > max_epochs {
        return Err(Error::InvalidValue(format!(
            "epoch {epoch} beyond schedule length {max_epochs}"
        )));
    }
    let phase = std::f64::consts::PI * epoch as f64 / max_epochs as f64;
    Ok(base_lr * (1.0 + phase.cos()) / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update with decoupled weight decay `lr·wd·p`.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t as i32);
    let c2 = 1.0 - BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * weight_decay * params[i] + lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

pub fn evaluate(net: &Network, ds: &Dataset, metric: Metric) -> Result<f64> {
    if ds.in_dim() != net.input_dim() || ds.out_dim() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: ds.in_dim(),
        });
    }
    let pred = net.forward(&ds.inputs)?;
    match metric {
        Metric::Mse => mse(&pred, &ds.targets),
        Metric::Ade => {
            let mut total = 0.0;
            for r in 0..ds.len() {
                let p: Vec<f64> = pred.row(r).iter().copied().collect();
                let t: Vec<f64> = ds.targets.row(r).iter().copied().collect();
                total += ade(&p, &t)?;
            }
            Ok(total / ds.len().max(1) as f64)
        }
    }
}

/// One row of the training trace. `r` holds the unweighted regularizer of
/// every PER group at the last minibatch of the epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
    pub r: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    #[serde(skip)]
    pub trace: Vec<EpochRecord>,
    pub per_groups: Vec<String>,
    pub best_val: f64,
    pub best_epoch: usize,
    pub test_metric: f64,
    pub equiv_errors: BTreeMap<String, f64>,
    pub final_lambdas: Vec<f64>,
    pub final_r: Vec<f64>,
    pub wall_time: f64,
    pub stopped_epoch: usize,
}

fn fmt_f64(v: f64) -> String {
    v.to_string()
}

impl RunResult {
    /// `epoch,train_loss,val_loss,lr,R_<group>...,lambda_<group>...`; epochs
    /// without validation leave `val_loss` empty.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let mut header = vec!["epoch".to_string(), "train_loss".into(), "val_loss".into(), "lr".into()];
        header.extend(self.per_groups.iter().map(|g| format!("R_{g}")));
        header.extend(self.per_groups.iter().map(|g| format!("lambda_{g}")));
        writeln!(w, "{}", header.join(","))?;
        for rec in &self.trace {
            let mut row = vec![
                rec.epoch.to_string(),
                fmt_f64(rec.train_loss),
                rec.val_loss.map(fmt_f64).unwrap_or_default(),
                fmt_f64(rec.lr),
            ];
            row.extend(rec.r.iter().copied().map(fmt_f64));
            row.extend(rec.lambda.iter().copied().map(fmt_f64));
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    /// Validation losses in the order they were recorded.
    pub fn val_losses(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.trace.iter().filter_map(|r| r.val_loss.map(|v| (r.epoch, v)))
    }
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Diverged {
            epoch,
            reason: format!("non-finite {what}"),
        },
        other => other,
    }
}

/// Train `net` in place; on return it holds the best-validation parameters.
/// With PER auto-tuning, training always reaches the adjustment and only
/// evaluations after it compete.
pub fn train(net: &mut Network, splits: &Splits, cfg: &TrainConfig) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let train_ds = &splits.train;
    if train_ds.is_empty() || splits.val.is_empty() || splits.test.is_empty() {
        return Err(Error::InvalidValue("every split must be nonempty".into()));
    }
    let mut per = cfg.per.clone();
    if let Some(p) = &per {
        for g in &p.groups {
            net.register_group(&g.parse::<Group>()?)?;
        }
    }
    let per_groups: Vec<String> = per.as_ref().map(|p| p.groups.clone()).unwrap_or_default();

    let n = train_ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(net.param_count());
    let mut trace = Vec::with_capacity(cfg.max_epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = net.params().to_vec();
    let mut stale = 0;
    let mut last_r = vec![0.0; per_groups.len()];
    let mut stopped_epoch = 0;

    for epoch in 0..cfg.max_epochs {
        if let Some(p) = per.as_mut() {
            if epoch == p.adjust_epoch && !p.adjusted && epoch > 0 {
                let eff = net.effective_weights()?;
                let r = per_total_with(net, &eff, p)?.per_group;
                *p = autotune(p, &r)?;
                // The objective changed: early stopping starts over.
                best_val = f64::INFINITY;
                stale = 0;
            }
        }
        let lr = cosine_lr(epoch, cfg.max_epochs, cfg.base_lr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(SHUFFLE_STREAM + epoch as u64);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.minibatch) {
            let (x, y) = train_ds.columns(chunk);
            let eff = net.effective_weights()?;
            let per_total = match &per {
                Some(p) => Some(per_total_with(net, &eff, p)?),
                None => None,
            };
            let extra = per_total.as_ref().map(|t| t.grads.as_slice());
            let (loss, mut grad) = net
                .loss_and_gradient_with(&eff, &x, &y, extra)
                .map_err(|e| diverged(epoch + 1, e))?;
            if let Some(t) = &per_total {
                last_r.clone_from(&t.per_group);
            }
            if let Some(sigmas) = cfg.rpp_sigmas {
                let (_, g) = network_prior(net, sigmas)?;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            adam_step(net.params_mut(), &grad, &mut adam, lr, cfg.weight_decay)
                .map_err(|e| diverged(epoch + 1, e))?;
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let done = epoch + 1;
        stopped_epoch = done;

        let evaluate_now = done % cfg.eval_every == 0 || done == cfg.max_epochs;
        let val_loss = if evaluate_now {
            let v = evaluate(net, &splits.val, cfg.metric)?;
            if !v.is_finite() {
                return Err(Error::Diverged {
                    epoch: done,
                    reason: "non-finite validation loss".into(),
                });
            }
            if v < best_val {
                best_val = v;
                best_epoch = done;
                best_params.copy_from_slice(net.params());
                stale = 0;
            } else {
                stale += 1;
            }
            Some(v)
        } else {
            None
        };
        trace.push(EpochRecord {
            epoch: done,
            train_loss,
            val_loss,
            lr,
            r: last_r.clone(),
            lambda: per.as_ref().map(|p| p.lambdas.clone()).unwrap_or_default(),
        });
        // Stopping before a pending adjustment would skip the tuning.
        let pending = per
            .as_ref()
            .is_some_and(|p| !p.adjusted && p.adjust_epoch > 0 && p.adjust_epoch < cfg.max_epochs);
        if stale >= cfg.patience && !pending {
            break;
        }
    }

    net.set_params(&best_params)?;
    let test_metric = evaluate(net, &splits.test, cfg.metric)?;
    let final_r = match &per {
        Some(p) => per_total_with(net, &net.effective_weights()?, p)?.per_group,
        None => Vec::new(),
    };

    let eval_groups: Vec<String> = if cfg.eval_groups.is_empty() {
        per_groups.clone()
    } else {
        cfg.eval_groups.clone()
    };
    let mut equiv_errors = BTreeMap::new();
    let rows = cfg.mc_inputs.min(splits.test.len());
    let inputs = splits.test.inputs.rows(0, rows).into_owned();
    for name in &eval_groups {
        let g: Group = name.parse()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(EQUIV_STREAM);
        let e = model_equivariance_error(
            net,
            &g,
            &splits.test.rep_in,
            &splits.test.rep_out,
            &inputs,
            cfg.mc_elements,
            &mut rng,
        )?;
        equiv_errors.insert(name.clone(), e);
    }

    Ok(RunResult {
        trace,
        per_groups,
        best_val,
        best_epoch,
        test_metric,
        equiv_errors,
        final_lambdas: per.map(|p| p.lambdas).unwrap_or_default(),
        final_r,
        wall_time: start.elapsed().as_secs_f64(),
        stopped_epoch,
    })
}
