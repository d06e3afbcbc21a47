//! Feedforward networks with standard, EMLP, RPP and mixed-EMLP linear
//! layers.
//!
//! Parameters live in one flat vector; each layer owns named blocks of it.
//! Every forward pass first materializes the effective affine maps
//! `(W, b)` of all layers, so training, regularization and equivariance
//! checks all work on the same objects whatever the layer kind.
//!
//! Batches passed to the public entry points have one sample per row.

mod activation;
pub mod checkpoint;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::equibasis::{default_solver, EquivariantBasis};
use crate::error::{Error, Result};
use crate::group::{Family, Group};
use crate::rep::{Rep, Representation};

pub use activation::{
    allocate_hidden_rep, gated_activation, gated_backward, gated_lipschitz, sigmoid, swish,
    swish_backward, swish_grad, swish_matrix, Activation, HiddenRepAllocation, MIN_MIXED_WIDTH,
    SWISH_LIPSCHITZ,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Standard,
    Emlp,
    Rpp,
    Memlp,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Standard => "standard",
            LayerKind::Emlp => "emlp",
            LayerKind::Rpp => "rpp",
            LayerKind::Memlp => "memlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Standard,
    Soft,
    HalfSoft,
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(InitScheme::Standard),
            "soft" => Ok(InitScheme::Soft),
            "half_soft" | "half-soft" => Ok(InitScheme::HalfSoft),
            _ => Err(Error::Config(format!("unknown init scheme `{s}`"))),
        }
    }
}

/// Off-subspace variance factor of the soft initialization.
pub const SOFT_EPSILON: f64 = 1e-4;
/// Off-subspace variance factor of the half-soft initialization.
pub const HALF_SOFT_LAMBDA: f64 = 0.5;
/// `σ₂ / σ₁` used to draw residual parameters of RPP and MEMLP layers.
pub const RESIDUAL_INIT_RATIO: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Mse,
}

pub(crate) mod rep_string {
    use super::Rep;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rep: &Rep, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(rep)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rep, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything needed to rebuild a network's structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub kind: LayerKind,
    #[serde(with = "rep_string")]
    pub rep_in: Rep,
    #[serde(with = "rep_string")]
    pub rep_out: Rep,
    pub width: usize,
    /// Number of linear layers.
    pub layers: usize,
    pub activation: Activation,
    /// Groups the network is built with (EMLP/RPP/MEMLP) or regularized
    /// towards (standard layers).
    #[serde(default)]
    pub groups: Vec<String>,
    /// MEMLP only: the subset of `groups` enforced exactly.
    #[serde(default)]
    pub exact_groups: Vec<String>,
}

impl NetworkConfig {
    pub fn mlp(rep_in: Rep, rep_out: Rep, width: usize, layers: usize) -> Self {
        NetworkConfig {
            kind: LayerKind::Standard,
            rep_in,
            rep_out,
            width,
            layers,
            activation: Activation::Swish,
            groups: Vec::new(),
            exact_groups: Vec::new(),
        }
    }

    pub fn with_kind(mut self, kind: LayerKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_groups<S: AsRef<str>>(mut self, groups: &[S]) -> Self {
        self.groups = groups.iter().map(|g| g.as_ref().to_string()).collect();
        self
    }

    pub fn with_exact_groups<S: AsRef<str>>(mut self, groups: &[S]) -> Self {
        self.exact_groups = groups.iter().map(|g| g.as_ref().to_string()).collect();
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }
}

/// Weight basis `Q` and bias basis `R` of one layer.
#[derive(Debug, Clone)]
pub struct LayerBases {
    pub weight: Arc<EquivariantBasis>,
    pub bias: Arc<EquivariantBasis>,
}

impl LayerBases {
    pub fn solve(groups: &[Group], rep_in: &Rep, rep_out: &Rep) -> Result<Self> {
        let solver = default_solver();
        Ok(LayerBases {
            weight: Arc::new(solver.map_basis(groups, rep_in, rep_out)?),
            bias: Arc::new(solver.vector_basis(groups, rep_out)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub kind: LayerKind,
    pub n_in: usize,
    pub n_out: usize,
    pub rep_in: Rep,
    pub rep_out: Rep,
    pub activation: Activation,
    /// Channel layout of this layer's output (used by the gated activation).
    pub alloc: HiddenRepAllocation,
    pub blocks: Vec<ParamBlock>,
    /// `Q/R` for EMLP and RPP layers; `Q₁/R₁` for MEMLP.
    pub primary: Option<LayerBases>,
    /// `Q₂/R₂` for MEMLP.
    pub secondary: Option<LayerBases>,
}

impl Layer {
    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    fn range(&self, name: &str) -> std::ops::Range<usize> {
        let b = self.block(name).expect("layer block exists");
        b.offset..b.offset + b.len
    }
}

/// Effective affine map of one layer, `z = W a + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Affine {
    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Affine {
            weight: DMatrix::zeros(n_out, n_in),
            bias: DVector::zeros(n_out),
        }
    }
}

/// Forward intermediates kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<DMatrix<f64>>,
    pre_activations: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    groups: Vec<Group>,
    exact_groups: Vec<Group>,
    layers: Vec<Layer>,
    params: Vec<f64>,
    registry: Vec<BTreeMap<String, LayerBases>>,
}

fn parse_groups(names: &[String]) -> Result<Vec<Group>> {
    let mut out: Vec<Group> = Vec::new();
    for n in names {
        let g: Group = n.parse()?;
        if !out.contains(&g) {
            out.push(g);
        }
    }
    Ok(out)
}

/// Validate `config` and create the network with every parameter zero.
pub fn build_network(config: &NetworkConfig) -> Result<Network> {
    if config.layers == 0 {
        return Err(Error::Config("a network needs at least one layer".into()));
    }
    if config.width == 0 {
        return Err(Error::Config("width must be positive".into()));
    }
    let groups = parse_groups(&config.groups)?;
    let exact_groups = parse_groups(&config.exact_groups)?;
    match config.kind {
        LayerKind::Emlp | LayerKind::Rpp if groups.is_empty() => {
            return Err(Error::Config(format!("{} layers need a group", config.kind)));
        }
        LayerKind::Memlp => {
            if groups.is_empty() || exact_groups.is_empty() {
                return Err(Error::Config(
                    "memlp needs a full group list and an exact subset".into(),
                ));
            }
            if let Some(g) = exact_groups.iter().find(|g| !groups.contains(g)) {
                return Err(Error::Config(format!(
                    "exact group `{g}` is not among the network groups"
                )));
            }
        }
        _ => {}
    }

    let nontrivial = groups.iter().any(|g| g.family() != Family::Trivial);
    let alloc = if nontrivial && config.layers > 1 {
        HiddenRepAllocation::mixed(config.width)?
    } else {
        HiddenRepAllocation::scalars_only(config.width)
    };
    let hidden = alloc.rep();
    let base_dim = groups.first().map(|g| g.base_dim()).unwrap_or(3);

    let mut layers = Vec::with_capacity(config.layers);
    let mut registry = Vec::with_capacity(config.layers);
    let mut offset = 0;
    for l in 0..config.layers {
        let last = l + 1 == config.layers;
        let rep_in = if l == 0 { config.rep_in.clone() } else { hidden.clone() };
        let rep_out = if last { config.rep_out.clone() } else { hidden.clone() };
        let n_in = rep_in.dim(base_dim);
        let n_out = rep_out.dim(base_dim);

        let mut entry = BTreeMap::new();
        for g in &groups {
            let bases = LayerBases::solve(std::slice::from_ref(g), &rep_in, &rep_out)?;
            entry.insert(g.name().to_string(), bases);
        }

        let (primary, secondary) = match config.kind {
            LayerKind::Standard => (None, None),
            LayerKind::Emlp | LayerKind::Rpp => {
                (Some(LayerBases::solve(&groups, &rep_in, &rep_out)?), None)
            }
            LayerKind::Memlp => (
                Some(LayerBases::solve(&groups, &rep_in, &rep_out)?),
                Some(LayerBases::solve(&exact_groups, &rep_in, &rep_out)?),
            ),
        };

        let sizes: Vec<(&str, usize)> = match config.kind {
            LayerKind::Standard => vec![("w", n_in * n_out), ("b", n_out)],
            LayerKind::Emlp => {
                let p = primary.as_ref().unwrap();
                vec![("theta", p.weight.dim()), ("beta", p.bias.dim())]
            }
            LayerKind::Rpp => vec![
                ("w1", n_in * n_out),
                ("b1", n_out),
                ("w2", n_in * n_out),
                ("b2", n_out),
            ],
            LayerKind::Memlp => {
                let p = primary.as_ref().unwrap();
                let s = secondary.as_ref().unwrap();
                vec![
                    ("theta1", p.weight.dim()),
                    ("beta1", p.bias.dim()),
                    ("theta2", s.weight.dim()),
                    ("beta2", s.bias.dim()),
                ]
            }
        };
        let mut blocks = Vec::with_capacity(sizes.len());
        for (name, len) in sizes {
            blocks.push(ParamBlock {
                name: name.to_string(),
                offset,
                len,
            });
            offset += len;
        }

        layers.push(Layer {
            kind: config.kind,
            n_in,
            n_out,
            rep_in,
            rep_out,
            activation: if last { Activation::None } else { config.activation },
            alloc: if last {
                HiddenRepAllocation::scalars_only(n_out)
            } else {
                alloc
            },
            blocks,
            primary,
            secondary,
        });
        registry.push(entry);
    }

    Ok(Network {
        config: config.clone(),
        groups,
        exact_groups,
        layers,
        params: vec![0.0; offset],
        registry,
    })
}

fn add_bias(z: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in z.column_iter_mut() {
        col += b;
    }
}

impl Network {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn exact_groups(&self) -> &[Group] {
        &self.exact_groups
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn block(&self, layer: usize, name: &str) -> Option<&[f64]> {
        let b = self.layers.get(layer)?.block(name)?;
        Some(&self.params[b.offset..b.offset + b.len])
    }

    pub fn block_mut(&mut self, layer: usize, name: &str) -> Option<&mut [f64]> {
        let b = self.layers.get(layer)?.block(name)?.clone();
        Some(&mut self.params[b.offset..b.offset + b.len])
    }

    /// Representation of layer `l`'s input under `group`.
    pub fn rep_in(&self, layer: usize, group: &Group) -> Representation {
        Representation::new(self.layers[layer].rep_in.clone(), group)
    }

    pub fn rep_out(&self, layer: usize, group: &Group) -> Representation {
        Representation::new(self.layers[layer].rep_out.clone(), group)
    }

    /// Per-group bases of layer `l`, if `group` was registered.
    pub fn bases(&self, layer: usize, group: &str) -> Option<&LayerBases> {
        self.registry.get(layer)?.get(group)
    }

    /// Compute and store the single-group bases of every layer.
    pub fn register_group(&mut self, group: &Group) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            if !self.registry[l].contains_key(group.name()) {
                let b = LayerBases::solve(std::slice::from_ref(group), &layer.rep_in, &layer.rep_out)?;
                self.registry[l].insert(group.name().to_string(), b);
            }
        }
        Ok(())
    }

    /// Bases equivariant to every network group at once.
    pub fn joint_bases(&self, layer: usize) -> Result<LayerBases> {
        if self.groups.is_empty() {
            return Err(Error::MissingBasis(format!("layer {layer} has no groups")));
        }
        let l = &self.layers[layer];
        LayerBases::solve(&self.groups, &l.rep_in, &l.rep_out)
    }

    /// Overwrite a standard layer's weight (`n_out x n_in`) and bias.
    pub fn set_layer_weights(&mut self, layer: usize, affine: &Affine) -> Result<()> {
        let l = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::InvalidValue(format!("no layer {layer}")))?;
        if l.kind != LayerKind::Standard {
            return Err(Error::InvalidValue(format!(
                "cannot set weights of a {} layer directly",
                l.kind
            )));
        }
        if affine.weight.shape() != (l.n_out, l.n_in) || affine.bias.len() != l.n_out {
            return Err(Error::DimensionMismatch {
                expected: l.n_out * l.n_in,
                actual: affine.weight.len(),
            });
        }
        let (w, b) = (l.range("w"), l.range("b"));
        self.params[w].copy_from_slice(affine.weight.as_slice());
        self.params[b].copy_from_slice(affine.bias.as_slice());
        Ok(())
    }

    fn missing(layer: usize, kind: LayerKind) -> Error {
        Error::MissingBasis(format!("{kind} layer {layer}"))
    }

    /// `(W, b)` of every layer built from the current parameters.
    pub fn effective_weights(&self) -> Result<Vec<Affine>> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| self.effective_layer(i, l))
            .collect()
    }

    fn effective_layer(&self, i: usize, l: &Layer) -> Result<Affine> {
        let p = &self.params;
        let mut w = vec![0.0; l.n_in * l.n_out];
        let mut b = vec![0.0; l.n_out];
        match l.kind {
            LayerKind::Standard => {
                w.copy_from_slice(&p[l.range("w")]);
                b.copy_from_slice(&p[l.range("b")]);
            }
            LayerKind::Emlp => {
                let q = l.primary.as_ref().ok_or_else(|| Self::missing(i, l.kind))?;
                q.weight.expand_into(&p[l.range("theta")], &mut w)?;
                q.bias.expand_into(&p[l.range("beta")], &mut b)?;
            }
            LayerKind::Rpp => {
                let q = l.primary.as_ref().ok_or_else(|| Self::missing(i, l.kind))?;
                let c = q.weight.coefficients(&p[l.range("w1")])?;
                q.weight.expand_into(&c, &mut w)?;
                let c = q.bias.coefficients(&p[l.range("b1")])?;
                q.bias.expand_into(&c, &mut b)?;
                for (x, y) in w.iter_mut().zip(&p[l.range("w2")]) {
                    *x += y;
                }
                for (x, y) in b.iter_mut().zip(&p[l.range("b2")]) {
                    *x += y;
                }
            }
            LayerKind::Memlp => {
                let q1 = l.primary.as_ref().ok_or_else(|| Self::missing(i, l.kind))?;
                let q2 = l.secondary.as_ref().ok_or_else(|| Self::missing(i, l.kind))?;
                q1.weight.expand_into(&p[l.range("theta1")], &mut w)?;
                q1.bias.expand_into(&p[l.range("beta1")], &mut b)?;
                q2.weight.expand_into(&p[l.range("theta2")], &mut w)?;
                q2.bias.expand_into(&p[l.range("beta2")], &mut b)?;
            }
        }
        Ok(Affine {
            weight: DMatrix::from_vec(l.n_out, l.n_in, w),
            bias: DVector::from_vec(b),
        })
    }

    fn check_rows(&self, x: &DMatrix<f64>, expected: usize) -> Result<()> {
        if x.nrows() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: x.nrows(),
            });
        }
        Ok(())
    }

    fn activate(layer: &Layer, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match layer.activation {
            Activation::None => Ok(z.clone()),
            Activation::Swish => Ok(swish_matrix(z)),
            Activation::Gated => gated_activation(z, &layer.alloc),
        }
    }

    /// Forward pass on a `n_in x batch` matrix with the given effective
    /// weights.
    pub fn forward_columns_with(
        &self,
        eff: &[Affine],
        x: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        self.check_rows(x, self.input_dim())?;
        let mut a = x.clone();
        for (layer, aff) in self.layers.iter().zip(eff) {
            let mut z = &aff.weight * &a;
            add_bias(&mut z, &aff.bias);
            a = Self::activate(layer, &z)?;
        }
        Ok(a)
    }

    pub fn forward_columns(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let eff = self.effective_weights()?;
        self.forward_columns_with(&eff, x)
    }

    /// Forward pass on a batch with one sample per row.
    pub fn forward(&self, batch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: batch.ncols(),
            });
        }
        Ok(self.forward_columns(&batch.transpose())?.transpose())
    }

    pub fn forward_taped(
        &self,
        eff: &[Affine],
        x: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, Tape)> {
        self.check_rows(x, self.input_dim())?;
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.clone();
        for (layer, aff) in self.layers.iter().zip(eff) {
            let mut z = &aff.weight * &a;
            add_bias(&mut z, &aff.bias);
            let next = Self::activate(layer, &z)?;
            tape.inputs.push(a);
            tape.pre_activations.push(z);
            a = next;
        }
        Ok((a, tape))
    }

    /// Gradients with respect to every layer's effective `(W, b)` given the
    /// gradient of the loss with respect to the output.
    pub fn backprop(&self, eff: &[Affine], tape: &Tape, d_out: DMatrix<f64>) -> Vec<Affine> {
        let mut grads = vec![None; self.layers.len()];
        let mut delta = d_out;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let z = &tape.pre_activations[l];
            let dz = match layer.activation {
                Activation::None => delta,
                Activation::Swish => swish_backward(z, &delta),
                Activation::Gated => gated_backward(z, &delta, &layer.alloc),
            };
            let weight = &dz * tape.inputs[l].transpose();
            let bias = dz.column_sum();
            if l > 0 {
                delta = eff[l].weight.tr_mul(&dz);
            } else {
                delta = DMatrix::zeros(0, 0);
            }
            grads[l] = Some(Affine { weight, bias });
        }
        grads.into_iter().map(|g| g.unwrap()).collect()
    }

    /// Map effective-weight gradients onto the flat parameter vector.
    pub fn param_gradient(&self, eff_grads: &[Affine]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.params.len()];
        for (i, (l, g)) in self.layers.iter().zip(eff_grads).enumerate() {
            let dw = g.weight.as_slice();
            let db = g.bias.as_slice();
            match l.kind {
                LayerKind::Standard => {
                    out[l.range("w")].copy_from_slice(dw);
                    out[l.range("b")].copy_from_slice(db);
                }
                LayerKind::Emlp => {
                    let q = l.primary.as_ref().ok_or_else(|| Self::missing(i, l.kind))?;
                    out[l.range("theta")].copy_from_slice(&q.weight.coefficients(dw)?);
                    out[l.range("beta")].copy_from_slice(&q.bias.coefficients(db)?);
                }
                LayerKind::Rpp => {
                    let q = l.primary.as_ref().ok_or_else(|| Self::missing(i, l.kind))?;
                    out[l.range("w1")].copy_from_slice(&q.weight.project(dw)?);
                    out[l.range("b1")].copy_from_slice(&q.bias.project(db)?);
                    out[l.range("w2")].copy_from_slice(dw);
                    out[l.range("b2")].copy_from_slice(db);
                }
                LayerKind::Memlp => {
                    let q1 = l.primary.as_ref().ok_or_else(|| Self::missing(i, l.kind))?;
                    let q2 = l.secondary.as_ref().ok_or_else(|| Self::missing(i, l.kind))?;
                    out[l.range("theta1")].copy_from_slice(&q1.weight.coefficients(dw)?);
                    out[l.range("beta1")].copy_from_slice(&q1.bias.coefficients(db)?);
                    out[l.range("theta2")].copy_from_slice(&q2.weight.coefficients(dw)?);
                    out[l.range("beta2")].copy_from_slice(&q2.bias.coefficients(db)?);
                }
            }
        }
        Ok(out)
    }

    /// MSE on column-layout data and its gradient with respect to the
    /// parameters. `extra` is added to the effective-weight gradients before
    /// they are mapped onto parameters.
    pub fn loss_and_gradient(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        extra: Option<&[Affine]>,
    ) -> Result<(f64, Vec<f64>)> {
        let eff = self.effective_weights()?;
        self.loss_and_gradient_with(&eff, x, y, extra)
    }

    pub fn loss_and_gradient_with(
        &self,
        eff: &[Affine],
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        extra: Option<&[Affine]>,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_rows(y, self.output_dim())?;
        if x.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                actual: y.ncols(),
            });
        }
        let (out, tape) = self.forward_taped(eff, x)?;
        let batch = x.ncols().max(1) as f64;
        let resid = out - y;
        let loss = resid.norm_squared() / batch;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads = self.backprop(eff, &tape, resid * (2.0 / batch));
        if let Some(extra) = extra {
            for (g, e) in grads.iter_mut().zip(extra) {
                g.weight += &e.weight;
                g.bias += &e.bias;
            }
        }
        Ok((loss, self.param_gradient(&grads)?))
    }

    /// Loss and parameter gradient on a batch with one sample per row.
    pub fn backward(
        &self,
        batch: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        loss: Loss,
        extra: Option<&[Affine]>,
    ) -> Result<(f64, Vec<f64>)> {
        match loss {
            Loss::Mse => {
                self.loss_and_gradient(&batch.transpose(), &targets.transpose(), extra)
            }
        }
    }

    /// Draw fresh parameters. Biases start at zero in every scheme.
    pub fn init_weights<R: Rng + ?Sized>(&mut self, scheme: InitScheme, rng: &mut R) -> Result<()> {
        if scheme != InitScheme::Standard && self.config.kind != LayerKind::Standard {
            return Err(Error::InvalidValue(format!(
                "{scheme:?} initialization applies to standard layers only"
            )));
        }
        let mut params = vec![0.0; self.params.len()];
        for li in 0..self.layers.len() {
            let l = &self.layers[li];
            let sigma = (2.0 / l.n_in as f64).sqrt();
            let mut normal = |n: usize, s: f64| -> Vec<f64> {
                (0..n).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
            };
            match (l.kind, scheme) {
                (LayerKind::Standard, InitScheme::Standard) => {
                    let w = normal(l.n_in * l.n_out, sigma);
                    params[l.range("w")].copy_from_slice(&w);
                }
                (LayerKind::Standard, InitScheme::Soft) => {
                    let q = self.joint_bases(li)?.weight;
                    let mut w = normal(l.n_in * l.n_out, SOFT_EPSILON.sqrt() * sigma);
                    q.expand_into(&normal(q.dim(), sigma), &mut w)?;
                    params[l.range("w")].copy_from_slice(&w);
                }
                (LayerKind::Standard, InitScheme::HalfSoft) => {
                    let q = self.joint_bases(li)?.weight;
                    let z = normal(l.n_in * l.n_out, sigma);
                    let p = q.project(&z)?;
                    let s = HALF_SOFT_LAMBDA.sqrt();
                    let w: Vec<f64> = z.iter().zip(&p).map(|(z, p)| p + s * (z - p)).collect();
                    params[l.range("w")].copy_from_slice(&w);
                }
                (LayerKind::Emlp, _) => {
                    let r = l.range("theta");
                    params[r.clone()].copy_from_slice(&normal(r.len(), sigma));
                }
                (LayerKind::Rpp, _) => {
                    let n = l.n_in * l.n_out;
                    params[l.range("w1")].copy_from_slice(&normal(n, sigma));
                    params[l.range("w2")].copy_from_slice(&normal(n, RESIDUAL_INIT_RATIO * sigma));
                }
                (LayerKind::Memlp, _) => {
                    let r = l.range("theta1");
                    params[r.clone()].copy_from_slice(&normal(r.len(), sigma));
                    let r = l.range("theta2");
                    params[r.clone()]
                        .copy_from_slice(&normal(r.len(), RESIDUAL_INIT_RATIO * sigma));
                }
            }
        }
        self.params = params;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn randn(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn inertia_cfg(kind: LayerKind, width: usize) -> NetworkConfig {
        NetworkConfig::mlp("5S+5V".parse().unwrap(), Rep::tensor(2), width, 3)
            .with_kind(kind)
            .with_activation(Activation::Gated)
    }

    fn randomize(net: &mut Network, seed: u64) {
        let mut r = rng(seed);
        for p in net.params_mut() {
            *p = 0.3 * r.sample::<f64, _>(StandardNormal);
        }
    }

    #[test]
    fn zero_emlp_is_the_zero_map() {
        let net = build_network(&inertia_cfg(LayerKind::Emlp, 16).with_groups(&["o3"])).unwrap();
        let x = randn(4, 20, &mut rng(1));
        assert_eq!(net.forward(&x).unwrap(), DMatrix::zeros(4, 9));
    }

    #[test]
    fn identity_network_passes_batch_through() {
        let cfg = NetworkConfig::mlp(Rep::scalars(4), Rep::scalars(4), 4, 1);
        let mut net = build_network(&cfg).unwrap();
        net.set_layer_weights(
            0,
            &Affine {
                weight: DMatrix::identity(4, 4),
                bias: DVector::zeros(4),
            },
        )
        .unwrap();
        let x = randn(7, 4, &mut rng(2));
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut net = build_network(&inertia_cfg(LayerKind::Standard, 16).with_groups(&["o2z"])).unwrap();
        net.init_weights(InitScheme::Standard, &mut rng(3)).unwrap();
        let x = randn(5, 20, &mut rng(4));
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn emlp_layers_are_equivariant() {
        for group in ["o3", "so3", "o2y", "s3", "sl2z"] {
            let g: Group = group.parse().unwrap();
            let cfg = NetworkConfig::mlp("2S+2V".parse().unwrap(), Rep::Vector, 16, 1)
                .with_kind(LayerKind::Emlp)
                .with_groups(&[group]);
            let mut net = build_network(&cfg).unwrap();
            net.init_weights(InitScheme::Standard, &mut rng(5)).unwrap();
            let beta = net.block_mut(0, "beta").unwrap();
            beta.iter_mut().for_each(|b| *b = 0.7);
            let mut r = rng(6);
            for _ in 0..10 {
                let x = randn(8, 1, &mut r);
                let e = g.sample(&mut r);
                let rin = net.rep_in(0, &g).rho(&e);
                let rout = net.rep_out(0, &g).rho(&e);
                let lhs = net.forward_columns(&(&rin * &x)).unwrap();
                let rhs = &rout * net.forward_columns(&x).unwrap();
                assert!((lhs - rhs).norm() <= 1e-5 * (1.0 + x.norm()), "{group}");
            }
        }
    }

    #[test]
    fn rpp_without_residual_equals_projected_emlp() {
        let cfg = inertia_cfg(LayerKind::Rpp, 16).with_groups(&["o3"]);
        let mut net = build_network(&cfg).unwrap();
        net.init_weights(InitScheme::Standard, &mut rng(7)).unwrap();
        for l in 0..3 {
            net.block_mut(l, "w2").unwrap().fill(0.0);
            net.block_mut(l, "b1").unwrap().fill(0.4);
        }
        let mut emlp = build_network(&cfg.clone().with_kind(LayerKind::Emlp)).unwrap();
        for l in 0..3 {
            let q = net.layers()[l].primary.clone().unwrap();
            let theta = q.weight.coefficients(net.block(l, "w1").unwrap()).unwrap();
            let beta = q.bias.coefficients(net.block(l, "b1").unwrap()).unwrap();
            emlp.block_mut(l, "theta").unwrap().copy_from_slice(&theta);
            emlp.block_mut(l, "beta").unwrap().copy_from_slice(&beta);
        }
        let x = randn(6, 20, &mut rng(8));
        let diff = net.forward(&x).unwrap() - emlp.forward(&x).unwrap();
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = build_network(&inertia_cfg(LayerKind::Standard, 16)).unwrap();
        assert!(matches!(
            net.forward(&DMatrix::zeros(2, 19)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(build_network(&inertia_cfg(LayerKind::Emlp, 16)).is_err());
        let memlp = inertia_cfg(LayerKind::Memlp, 16).with_groups(&["o2z"]);
        assert!(build_network(&memlp.clone().with_exact_groups(&["o3"])).is_err());
        assert!(build_network(&memlp.with_exact_groups(&["o2z"])).is_ok());
        assert!(matches!(
            build_network(&inertia_cfg(LayerKind::Standard, 13).with_groups(&["o3"])),
            Err(Error::WidthTooSmall { .. })
        ));
    }

    #[test]
    fn equal_width_standard_and_per_nets_have_equal_counts() {
        let mlp = build_network(&inertia_cfg(LayerKind::Standard, 64)).unwrap();
        let per = build_network(&inertia_cfg(LayerKind::Standard, 64).with_groups(&["o2x", "o2y", "o2z"])).unwrap();
        assert_eq!(mlp.param_count(), per.param_count());
        assert_eq!(mlp.param_count(), 20 * 64 + 64 + 64 * 64 + 64 + 64 * 9 + 9);
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-5))
            .fold(0.0, f64::max)
    }

    fn fd_gradient(net: &Network, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
        let h = 1e-5;
        let mut probe = net.clone();
        (0..net.param_count())
            .map(|i| {
                let p0 = net.params()[i];
                probe.params_mut()[i] = p0 + h;
                let fp = probe.loss_and_gradient(x, y, None).unwrap().0;
                probe.params_mut()[i] = p0 - h;
                let fm = probe.loss_and_gradient(x, y, None).unwrap().0;
                probe.params_mut()[i] = p0;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases = [
            (LayerKind::Standard, Activation::Swish, vec!["o3"], vec![]),
            (LayerKind::Standard, Activation::Gated, vec!["o2z"], vec![]),
            (LayerKind::Emlp, Activation::Gated, vec!["o3"], vec![]),
            (LayerKind::Rpp, Activation::Swish, vec!["o2x"], vec![]),
            (LayerKind::Memlp, Activation::Gated, vec!["o3", "o2z"], vec!["o2z"]),
        ];
        for (i, (kind, act, groups, exact)) in cases.into_iter().enumerate() {
            let cfg = NetworkConfig::mlp("2S+2V".parse().unwrap(), Rep::tensor(2), 16, 3)
                .with_kind(kind)
                .with_activation(act)
                .with_groups(&groups)
                .with_exact_groups(&exact);
            let mut net = build_network(&cfg).unwrap();
            randomize(&mut net, 10 + i as u64);
            let mut r = rng(20 + i as u64);
            let x = randn(8, 5, &mut r);
            let y = randn(9, 5, &mut r);
            let (_, g) = net.loss_and_gradient(&x, &y, None).unwrap();
            let fd = fd_gradient(&net, &x, &y);
            let err = max_rel_err(&g, &fd);
            assert!(err < 1e-4, "{kind} {act:?}: {err}");
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let mut net = build_network(&inertia_cfg(LayerKind::Standard, 16)).unwrap();
        net.init_weights(InitScheme::Standard, &mut rng(30)).unwrap();
        let x = randn(20, 6, &mut rng(31));
        let y = net.forward_columns(&x).unwrap();
        let (loss, g) = net.loss_and_gradient(&x, &y, None).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_gradient_is_linear_in_the_residual() {
        let mut net = build_network(&inertia_cfg(LayerKind::Standard, 16)).unwrap();
        net.init_weights(InitScheme::Standard, &mut rng(32)).unwrap();
        let x = randn(20, 6, &mut rng(33));
        let f = net.forward_columns(&x).unwrap();
        let d = randn(9, 6, &mut rng(34));
        let (_, g1) = net.loss_and_gradient(&x, &(&f + &d), None).unwrap();
        let (_, g2) = net.loss_and_gradient(&x, &(&f + &d * 2.0), None).unwrap();
        let last = net.layers()[2].block("w").unwrap().clone();
        let r = last.offset..last.offset + last.len;
        for (a, b) in g1[r.clone()].iter().zip(&g2[r]) {
            assert!((2.0 * a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut net = build_network(&inertia_cfg(LayerKind::Standard, 16)).unwrap();
        net.params_mut()[0] = f64::NAN;
        let x = DMatrix::from_element(20, 2, 1.0);
        let y = DMatrix::zeros(9, 2);
        assert!(matches!(
            net.loss_and_gradient(&x, &y, None),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn standard_init_variance() {
        let cfg = NetworkConfig::mlp(Rep::scalars(2), Rep::scalars(1), 1000, 1);
        let mut net = build_network(&cfg).unwrap();
        let mut r = rng(40);
        let mut draws = Vec::new();
        while draws.len() < 100_000 {
            net.init_weights(InitScheme::Standard, &mut r).unwrap();
            draws.extend_from_slice(net.block(0, "w").unwrap());
        }
        let var = draws.iter().map(|x| x * x).sum::<f64>() / draws.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
        assert!(net.block(0, "b").unwrap().iter().all(|b| *b == 0.0));
    }

    #[test]
    fn soft_init_stays_near_the_subspace() {
        let cfg = inertia_cfg(LayerKind::Standard, 16).with_groups(&["o3"]);
        let mut net = build_network(&cfg).unwrap();
        net.init_weights(InitScheme::Soft, &mut rng(41)).unwrap();
        for l in 0..3 {
            let q = net.joint_bases(l).unwrap().weight;
            let w = net.block(l, "w").unwrap();
            let ratio = q.residual_norm(w).unwrap() / norm(w);
            // Off-subspace share is sqrt(ε · (D − d) / d) in expectation.
            assert!(ratio > 0.0 && ratio < 0.2, "layer {l}: {ratio}");
        }
        assert!(net.clone().init_weights(InitScheme::Soft, &mut rng(1)).is_ok());
        let mut plain = build_network(&inertia_cfg(LayerKind::Standard, 16)).unwrap();
        assert!(matches!(
            plain.init_weights(InitScheme::Soft, &mut rng(1)),
            Err(Error::MissingBasis(_))
        ));
    }

    #[test]
    fn soft_init_limit_lies_in_the_subspace() {
        // With the off-subspace part removed the draw is exactly Q(σz).
        let cfg = NetworkConfig::mlp(Rep::Vector, Rep::Vector, 3, 1).with_groups(&["o2z"]);
        let net = build_network(&cfg).unwrap();
        let q = net.joint_bases(0).unwrap().weight;
        let w = q.expand(&[0.4, -1.3]).unwrap();
        assert!(q.residual_norm(&w).unwrap() < 1e-8 * norm(&w));
    }

    #[test]
    fn half_soft_residual_share() {
        let cfg = NetworkConfig::mlp(Rep::Vector, Rep::Vector, 3, 1).with_groups(&["o2z"]);
        let mut net = build_network(&cfg).unwrap();
        let q = net.joint_bases(0).unwrap().weight;
        let (d, dt) = (q.dim() as f64, (q.ambient_dim() - q.dim()) as f64);
        let mut r = rng(42);
        let (mut res, mut tot) = (0.0, 0.0);
        for _ in 0..10_000 {
            net.init_weights(InitScheme::HalfSoft, &mut r).unwrap();
            let w = net.block(0, "w").unwrap();
            res += q.residual_norm(w).unwrap().powi(2);
            tot += norm(w).powi(2);
        }
        let expected = HALF_SOFT_LAMBDA * dt / (d + HALF_SOFT_LAMBDA * dt);
        let got = res / tot;
        assert!((got / expected - 1.0).abs() < 0.1, "{got} vs {expected}");
    }

    #[test]
    fn memlp_secondary_basis_is_larger() {
        let cfg = inertia_cfg(LayerKind::Memlp, 16)
            .with_groups(&["o3", "o2z"])
            .with_exact_groups(&["o2z"]);
        let net = build_network(&cfg).unwrap();
        for l in net.layers() {
            let p = l.primary.as_ref().unwrap();
            let s = l.secondary.as_ref().unwrap();
            assert!(p.weight.dim() < s.weight.dim());
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = inertia_cfg(LayerKind::Memlp, 32)
            .with_groups(&["o3", "o2z"])
            .with_exact_groups(&["o2z"]);
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"5S+5V\""));
        let back: NetworkConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }
}
