//! Projection-based equivariance penalties, the residual-pathway prior,
//! one-shot coefficient tuning and a certified equivariance-error bound.

use serde::{Deserialize, Serialize};

use crate::equibasis::EquivariantBasis;
use crate::error::{Error, Result};
use crate::group::Group;
use crate::linalg::{dot, norm};
use crate::net::{gated_lipschitz, Activation, Affine, LayerKind, Network, SWISH_LIPSCHITZ};
use crate::rep::Rep;

/// Per-group penalty strengths and the tuning schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerConfig {
    pub groups: Vec<String>,
    pub lambdas: Vec<f64>,
    pub gamma: f64,
    pub adjust_epoch: usize,
    #[serde(default)]
    pub adjusted: bool,
}

impl PerConfig {
    /// Every group starts from the same `lambda`.
    pub fn uniform<S: AsRef<str>>(groups: &[S], lambda: f64, gamma: f64, adjust_epoch: usize) -> Self {
        PerConfig {
            groups: groups.iter().map(|g| g.as_ref().to_string()).collect(),
            lambdas: vec![lambda; groups.len()],
            gamma,
            adjust_epoch,
            adjusted: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::EmptyGroupList);
        }
        if self.groups.len() != self.lambdas.len() {
            return Err(Error::DimensionMismatch {
                expected: self.groups.len(),
                actual: self.lambdas.len(),
            });
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidValue(format!("lambda must be positive, got {l}")));
        }
        if !(self.gamma >= 1.0) {
            return Err(Error::InvalidValue(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerTerm {
    pub value: f64,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

/// `λ/2 ‖vec(W) − QQᵀvec(W)‖² + λ/2 ‖b − RRᵀb‖²` with its gradient.
/// `weight` is the column-major `vec(W)`.
pub fn per_term(
    weight: &[f64],
    bias: &[f64],
    q: &EquivariantBasis,
    r: &EquivariantBasis,
    lambda: f64,
) -> Result<PerTerm> {
    let rw = q.residual(weight)?;
    let rb = r.residual(bias)?;
    let value = 0.5 * lambda * (dot(&rw, &rw) + dot(&rb, &rb));
    Ok(PerTerm {
        value,
        grad_weight: rw.into_iter().map(|x| lambda * x).collect(),
        grad_bias: rb.into_iter().map(|x| lambda * x).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct PerTotal {
    /// `Σ_k λ_k R_k`.
    pub total: f64,
    /// Unweighted `R_k = Σ_l ½(‖W_l − P_k W_l‖² + ‖b_l − P_k b_l‖²)`.
    pub per_group: Vec<f64>,
    /// Gradient of `total` with respect to each layer's effective `(W, b)`.
    pub grads: Vec<Affine>,
}

pub fn per_total(net: &Network, cfg: &PerConfig) -> Result<PerTotal> {
    per_total_with(net, &net.effective_weights()?, cfg)
}

/// [`per_total`] on precomputed effective weights.
pub fn per_total_with(net: &Network, eff: &[Affine], cfg: &PerConfig) -> Result<PerTotal> {
    cfg.validate()?;
    let mut grads: Vec<Affine> = eff
        .iter()
        .map(|a| Affine::zeros(a.weight.nrows(), a.weight.ncols()))
        .collect();
    let mut per_group = vec![0.0; cfg.groups.len()];
    let mut total = 0.0;
    for (k, (group, &lambda)) in cfg.groups.iter().zip(&cfg.lambdas).enumerate() {
        for (l, aff) in eff.iter().enumerate() {
            let bases = net
                .bases(l, group)
                .ok_or_else(|| Error::MissingBasis(format!("group `{group}` at layer {l}")))?;
            let t = per_term(
                aff.weight.as_slice(),
                aff.bias.as_slice(),
                &bases.weight,
                &bases.bias,
                lambda,
            )?;
            total += t.value;
            per_group[k] += t.value / lambda;
            for (g, d) in grads[l].weight.as_mut_slice().iter_mut().zip(&t.grad_weight) {
                *g += d;
            }
            for (g, d) in grads[l].bias.as_mut_slice().iter_mut().zip(&t.grad_bias) {
                *g += d;
            }
        }
    }
    Ok(PerTotal {
        total,
        per_group,
        grads,
    })
}

/// Prior standard deviations of the equivariant and residual parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSigmas {
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for PriorSigmas {
    fn default() -> Self {
        // σ₁² = 1.0, σ₂² = 0.04
        PriorSigmas {
            sigma1: 1.0,
            sigma2: 0.2,
        }
    }
}

impl PriorSigmas {
    fn validate(&self) -> Result<()> {
        for s in [self.sigma1, self.sigma2] {
            if !(s > 0.0) {
                return Err(Error::InvalidValue(format!("prior sigma must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

pub fn rpp_prior(
    w1: &[f64],
    b1: &[f64],
    w2: &[f64],
    b2: &[f64],
    sigmas: PriorSigmas,
) -> Result<f64> {
    sigmas.validate()?;
    let first = dot(w1, w1) + dot(b1, b1);
    let second = dot(w2, w2) + dot(b2, b2);
    Ok(first / (2.0 * sigmas.sigma1.powi(2)) + second / (2.0 * sigmas.sigma2.powi(2)))
}

/// Prior summed over every RPP or MEMLP layer, with its gradient on the
/// flat parameter vector. Standard and EMLP layers contribute nothing.
pub fn network_prior(net: &Network, sigmas: PriorSigmas) -> Result<(f64, Vec<f64>)> {
    sigmas.validate()?;
    let p = net.params();
    let mut grad = vec![0.0; p.len()];
    let mut value = 0.0;
    for (li, layer) in net.layers().iter().enumerate() {
        let names: [(&str, f64); 4] = match layer.kind {
            LayerKind::Rpp => [
                ("w1", sigmas.sigma1),
                ("b1", sigmas.sigma1),
                ("w2", sigmas.sigma2),
                ("b2", sigmas.sigma2),
            ],
            LayerKind::Memlp => [
                ("theta1", sigmas.sigma1),
                ("beta1", sigmas.sigma1),
                ("theta2", sigmas.sigma2),
                ("beta2", sigmas.sigma2),
            ],
            _ => continue,
        };
        for (name, sigma) in names {
            let b = layer
                .block(name)
                .ok_or_else(|| Error::MissingBasis(format!("block {name} at layer {li}")))?;
            let inv = 1.0 / (sigma * sigma);
            for i in b.offset..b.offset + b.len {
                value += 0.5 * inv * p[i] * p[i];
                grad[i] = inv * p[i];
            }
        }
    }
    Ok((value, grad))
}

/// Rescale each coefficient by `(min R / R_k)^γ` and mark the config as
/// adjusted.
pub fn autotune(cfg: &PerConfig, r_values: &[f64]) -> Result<PerConfig> {
    cfg.validate()?;
    if cfg.adjusted {
        return Err(Error::AlreadyAdjusted);
    }
    if r_values.len() != cfg.groups.len() {
        return Err(Error::DimensionMismatch {
            expected: cfg.groups.len(),
            actual: r_values.len(),
        });
    }
    for (g, &r) in cfg.groups.iter().zip(r_values) {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::NonPositiveRegularizer {
                group: g.clone(),
                value: r,
            });
        }
    }
    let min = r_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambdas = cfg
        .lambdas
        .iter()
        .zip(r_values)
        .map(|(l, r)| l * (min / r).powf(cfg.gamma))
        .collect();
    Ok(PerConfig {
        lambdas,
        adjusted: true,
        ..cfg.clone()
    })
}

/// Constants of the certified bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Bound on `‖x‖` over the input domain.
    pub input_norm: f64,
    /// Lipschitz constant assumed for the hidden activations. The bound
    /// never uses less than the activation's own constant.
    pub lipschitz: f64,
    pub layers: usize,
}

/// Largest `‖ρ(g)‖_op` for a representation whose most tensorial component
/// has `rank`, when `‖g‖_op <= element_bound`.
pub fn representation_norm_bound(rep: &Rep, element_bound: f64) -> f64 {
    element_bound.max(1.0).powi(rep.max_rank() as i32)
}

/// Upper bound on `sup_{‖x‖ <= U, g} ‖ρ_Y(g) f(x) − f(ρ_X(g) x)‖`.
///
/// Per layer `l` with input bound `H` (over both `x` and `ρ(g)x`):
///
/// ```text
///   E_z(l) <= (‖ρ_l‖ + ‖ρ_{l-1}‖) H_{l-1} r_W(l) + (‖ρ_l‖ + 1) r_b(l) + ‖W_l‖_F E(l-1)
///   E(l)   <= L_l E_z(l)
///   H_l    <= ‖W_l‖_F H_{l-1} + ‖b_l‖
/// ```
///
/// where `r_W`, `r_b` are distances of the effective weights to the
/// equivariant subspaces. Both activations satisfy `‖σ(z)‖ <= ‖z‖`. The
/// gated activation is only locally Lipschitz; `L_l` is taken on the ball
/// that contains `ρ_l(g) z_l(x)` and `z_l(ρ(g)x)`.
pub fn equivariance_bound(net: &Network, group: &Group, inputs: BoundInputs) -> Result<f64> {
    let BoundInputs {
        input_norm,
        lipschitz,
        layers,
    } = inputs;
    if !(input_norm > 0.0 && lipschitz > 0.0) {
        return Err(Error::InvalidValue("bound constants must be positive".into()));
    }
    if !input_norm.is_finite() {
        return Err(Error::InvalidValue("input bound must be finite".into()));
    }
    if layers != net.layers().len() {
        return Err(Error::DimensionMismatch {
            expected: net.layers().len(),
            actual: layers,
        });
    }
    let element = group.element_norm_bound();
    if !element.is_finite() {
        return Err(Error::InvalidValue(format!("group `{group}` is unbounded")));
    }
    let eff = net.effective_weights()?;
    let rho_in0 = representation_norm_bound(&net.layers()[0].rep_in, element);
    let mut h = input_norm * rho_in0.max(1.0);
    let mut err = 0.0;
    for (l, (layer, aff)) in net.layers().iter().zip(&eff).enumerate() {
        let bases = net
            .bases(l, group.name())
            .ok_or_else(|| Error::MissingBasis(format!("group `{group}` at layer {l}")))?;
        let r_w = bases.weight.residual_norm(aff.weight.as_slice())?;
        let r_b = bases.bias.residual_norm(aff.bias.as_slice())?;
        let rho_out = representation_norm_bound(&layer.rep_out, element);
        let rho_in = representation_norm_bound(&layer.rep_in, element);
        let w_norm = aff.weight.norm();
        let b_norm = norm(aff.bias.as_slice());
        let ez = (rho_out + rho_in) * h * r_w + (rho_out + 1.0) * r_b + w_norm * err;
        let z_bound = w_norm * h + b_norm;
        let local = match layer.activation {
            Activation::None => 1.0,
            Activation::Swish => SWISH_LIPSCHITZ,
            Activation::Gated => gated_lipschitz(z_bound * rho_out.max(1.0)),
        };
        let lip = if layer.activation == Activation::None {
            1.0
        } else {
            lipschitz.max(local)
        };
        err = lip * ez;
        h = z_bound;
    }
    Ok(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equibasis::joint_basis;
    use crate::net::{build_network, InitScheme, NetworkConfig};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn g(name: &str) -> Group {
        name.parse().unwrap()
    }

    fn bases(group: &str, rep_in: &str, rep_out: &str) -> (EquivariantBasis, EquivariantBasis) {
        let gs = [g(group)];
        let ri: Rep = rep_in.parse().unwrap();
        let ro: Rep = rep_out.parse().unwrap();
        (
            joint_basis(&gs, &ri, &ro).unwrap(),
            crate::equibasis::joint_invariant_basis(&gs, &ro).unwrap(),
        )
    }

    fn randv(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn equivariant_parameters_cost_nothing() {
        let (q, r) = bases("o3", "S+V", "2V");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = q.expand(&randv(q.dim(), &mut rng)).unwrap();
        let b = vec![0.0; 6];
        let t = per_term(&w, &b, &q, &r, 3.0).unwrap();
        assert!(t.value < 1e-24);
    }

    #[test]
    fn orthogonal_weights_with_lambda_two_give_squared_norm() {
        let (q, r) = bases("o3", "S+V", "2V");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = q.residual(&randv(24, &mut rng)).unwrap();
        let t = per_term(&w, &[0.0; 6], &q, &r, 2.0).unwrap();
        assert!((t.value - dot(&w, &w)).abs() < 1e-12);
    }

    #[test]
    fn per_gradient_matches_finite_differences() {
        let (q, r) = bases("o2z", "S+V", "2V");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = randv(24, &mut rng);
        let b = randv(6, &mut rng);
        let t = per_term(&w, &b, &q, &r, 1.7).unwrap();
        let h = 1e-6;
        let f = |w: &[f64], b: &[f64]| per_term(w, b, &q, &r, 1.7).unwrap().value;
        for i in 0..24 {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            let fd = (f(&wp, &b) - f(&wm, &b)) / (2.0 * h);
            let a = t.grad_weight[i];
            assert!((fd - a).abs() <= 1e-6 * a.abs().max(1.0), "w{i}: {fd} vs {a}");
        }
        for i in 0..6 {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += h;
            bm[i] -= h;
            let fd = (f(&w, &bp) - f(&w, &bm)) / (2.0 * h);
            let a = t.grad_bias[i];
            assert!((fd - a).abs() <= 1e-6 * a.abs().max(1.0), "b{i}");
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (q, r) = bases("o3", "S+V", "2V");
        assert!(per_term(&[0.0; 5], &[0.0; 6], &q, &r, 1.0).is_err());
    }

    fn random_net(groups: &[&str], layers: usize, seed: u64) -> Network {
        let cfg = NetworkConfig::mlp("2S+2V".parse().unwrap(), "V2".parse().unwrap(), 16, layers)
            .with_groups(groups)
            .with_activation(Activation::Gated);
        let mut net = build_network(&cfg).unwrap();
        net.init_weights(InitScheme::Standard, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for l in 0..layers {
            for b in net.block_mut(l, "b").unwrap() {
                *b = 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        net
    }

    #[test]
    fn single_layer_total_equals_the_term() {
        let net = random_net(&["o2x"], 1, 4);
        let cfg = PerConfig::uniform(&["o2x"], 5.0, 2.0, 0);
        let total = per_total(&net, &cfg).unwrap();
        let bases = net.bases(0, "o2x").unwrap();
        let t = per_term(
            net.block(0, "w").unwrap(),
            net.block(0, "b").unwrap(),
            &bases.weight,
            &bases.bias,
            5.0,
        )
        .unwrap();
        assert!((total.total - t.value).abs() < 1e-12);
        assert!((total.per_group[0] * 5.0 - t.value).abs() < 1e-12);
    }

    #[test]
    fn total_is_additive_over_layers_and_groups() {
        let net = random_net(&["o2x", "o2z", "o3"], 3, 5);
        let cfg = PerConfig {
            groups: vec!["o2x".into(), "o2z".into(), "o3".into()],
            lambdas: vec![1.0, 2.0, 0.5],
            gamma: 2.0,
            adjust_epoch: 0,
            adjusted: false,
        };
        let total = per_total(&net, &cfg).unwrap();
        let eff = net.effective_weights().unwrap();
        let mut by_hand = 0.0;
        for (k, group) in cfg.groups.iter().enumerate() {
            let mut rk = 0.0;
            for (l, a) in eff.iter().enumerate() {
                let b = net.bases(l, group).unwrap();
                rk += per_term(a.weight.as_slice(), a.bias.as_slice(), &b.weight, &b.bias, 1.0)
                    .unwrap()
                    .value;
            }
            assert!((rk - total.per_group[k]).abs() < 1e-10);
            by_hand += cfg.lambdas[k] * rk;
        }
        assert!((by_hand - total.total).abs() < 1e-10);
    }

    #[test]
    fn emlp_network_has_zero_penalty_for_its_group() {
        let cfg = NetworkConfig::mlp("2S+2V".parse().unwrap(), "V2".parse().unwrap(), 16, 2)
            .with_kind(LayerKind::Emlp)
            .with_groups(&["o3"])
            .with_activation(Activation::Gated);
        let mut net = build_network(&cfg).unwrap();
        net.init_weights(InitScheme::Standard, &mut ChaCha8Rng::seed_from_u64(6))
            .unwrap();
        let total = per_total(&net, &PerConfig::uniform(&["o3"], 1.0, 2.0, 0)).unwrap();
        assert!(total.total < 1e-20);
        let bound = equivariance_bound(
            &net,
            &g("o3"),
            BoundInputs {
                input_norm: 2.0,
                lipschitz: 1.0,
                layers: 2,
            },
        )
        .unwrap();
        assert!(bound < 1e-9, "{bound}");
    }

    #[test]
    fn missing_group_is_an_error() {
        let net = random_net(&["o2x"], 2, 7);
        let cfg = PerConfig::uniform(&["o2y"], 1.0, 2.0, 0);
        assert!(matches!(per_total(&net, &cfg), Err(Error::MissingBasis(_))));
    }

    #[test]
    fn prior_examples() {
        let s = PriorSigmas::default();
        assert_eq!(rpp_prior(&[0.0; 4], &[0.0; 2], &[0.0; 4], &[0.0; 2], s).unwrap(), 0.0);
        let unit = PriorSigmas {
            sigma1: 1.0,
            sigma2: 1.0,
        };
        let w2 = [1.0, 1.0, 0.0, 0.0];
        assert_eq!(rpp_prior(&[0.0; 4], &[0.0; 2], &w2, &[0.0; 2], unit).unwrap(), 1.0);
        let half = PriorSigmas {
            sigma1: 1.0,
            sigma2: 0.5,
        };
        assert_eq!(rpp_prior(&[0.0; 4], &[0.0; 2], &w2, &[0.0; 2], half).unwrap(), 4.0);
        let bad = PriorSigmas {
            sigma1: 0.0,
            sigma2: 1.0,
        };
        assert!(rpp_prior(&[], &[], &[], &[], bad).is_err());
    }

    #[test]
    fn network_prior_gradient() {
        let cfg = NetworkConfig::mlp("2S+2V".parse().unwrap(), "V2".parse().unwrap(), 16, 2)
            .with_kind(LayerKind::Rpp)
            .with_groups(&["o3"]);
        let mut net = build_network(&cfg).unwrap();
        net.init_weights(InitScheme::Standard, &mut ChaCha8Rng::seed_from_u64(8))
            .unwrap();
        let s = PriorSigmas::default();
        let (v, grad) = network_prior(&net, s).unwrap();
        let mut by_hand = 0.0;
        for l in 0..2 {
            by_hand += rpp_prior(
                net.block(l, "w1").unwrap(),
                net.block(l, "b1").unwrap(),
                net.block(l, "w2").unwrap(),
                net.block(l, "b2").unwrap(),
                s,
            )
            .unwrap();
        }
        assert!((v - by_hand).abs() < 1e-10);
        let h = 1e-6;
        for i in (0..net.param_count()).step_by(37) {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let fp = network_prior(&p, s).unwrap().0;
            p.params_mut()[i] -= 2.0 * h;
            let fm = network_prior(&p, s).unwrap().0;
            assert!(((fp - fm) / (2.0 * h) - grad[i]).abs() < 1e-5 * grad[i].abs().max(1.0));
        }
    }

    #[test]
    fn autotune_examples() {
        let cfg = PerConfig::uniform(&["a", "b", "c"], 100.0, 2.0, 10);
        let out = autotune(&cfg, &[4.0, 1.0, 1.0]).unwrap();
        assert_eq!(out.lambdas, vec![6.25, 100.0, 100.0]);
        assert!(out.adjusted);
        assert!(matches!(autotune(&out, &[1.0, 1.0, 1.0]), Err(Error::AlreadyAdjusted)));
        let same = autotune(&cfg, &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(same.lambdas, cfg.lambdas);
        assert!(matches!(
            autotune(&cfg, &[1.0, 0.0, 1.0]),
            Err(Error::NonPositiveRegularizer { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = PerConfig::uniform(&["o3"], 1.0, 0.5, 0);
        assert!(cfg.validate().is_err());
        cfg.gamma = 2.0;
        cfg.lambdas[0] = -1.0;
        assert!(cfg.validate().is_err());
    }

    fn mc_sup(net: &Network, group: &Group, u: f64, n: usize, seed: u64) -> f64 {
        // Independent oracle: direct evaluation at sampled (x, g) pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..n {
            let mut x = DMatrix::from_fn(net.input_dim(), 1, |_, _| rng.sample(StandardNormal));
            let scale: f64 = rng.random_range(0.0..1.0);
            x *= u * scale / x.norm();
            let e = group.sample(&mut rng);
            let rin = net.rep_in(0, group).rho(&e);
            let rout = net.rep_out(net.layers().len() - 1, group).rho(&e);
            let lhs = &rout * net.forward_columns(&x).unwrap();
            let rhs = net.forward_columns(&(&rin * &x)).unwrap();
            worst = worst.max((lhs - rhs).norm());
        }
        worst
    }

    #[test]
    fn bound_dominates_sampled_error() {
        for (i, group) in ["o3", "o2z", "s3", "sl2x"].iter().enumerate() {
            let net = random_net(&[group], 1 + i % 3, 9 + i as u64);
            let grp = g(group);
            let inputs = BoundInputs {
                input_norm: 3.0,
                lipschitz: 1.0,
                layers: net.layers().len(),
            };
            let bound = equivariance_bound(&net, &grp, inputs).unwrap();
            let mc = mc_sup(&net, &grp, 3.0, 300, 50 + i as u64);
            assert!(mc <= bound, "{group}: {mc} > {bound}");
            assert!(mc > 0.0);
        }
    }

    #[test]
    fn bound_is_linear_in_a_single_residual() {
        // Exactly equivariant two-layer net, then a residual scaled by t in
        // the last layer only.
        let cfg = NetworkConfig::mlp("2S+2V".parse().unwrap(), "V2".parse().unwrap(), 16, 2)
            .with_groups(&["o3"])
            .with_activation(Activation::Gated);
        let mut net = build_network(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        net.init_weights(InitScheme::Standard, &mut rng).unwrap();
        for l in 0..2 {
            let q = net.bases(l, "o3").unwrap().weight.clone();
            let p = q.project(net.block(l, "w").unwrap()).unwrap();
            net.block_mut(l, "w").unwrap().copy_from_slice(&p);
        }
        let q = net.bases(1, "o3").unwrap().weight.clone();
        let dir = q.residual(&randv(q.ambient_dim(), &mut rng)).unwrap();
        let base = net.block(1, "w").unwrap().to_vec();
        let inputs = BoundInputs {
            input_norm: 1.0,
            lipschitz: 1.0,
            layers: 2,
        };
        let mut at = |t: f64| {
            let w: Vec<f64> = base.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            net.block_mut(1, "w").unwrap().copy_from_slice(&w);
            equivariance_bound(&net, &g("o3"), inputs).unwrap()
        };
        let (b1, b2, b4) = (at(1.0), at(2.0), at(4.0));
        assert!(at(0.0) < 1e-9);
        assert!((b2 / b1 - 2.0).abs() < 1e-9 && (b4 / b1 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn bound_input_validation() {
        let net = random_net(&["o3"], 2, 12);
        let mk = |u: f64, s: usize| BoundInputs {
            input_norm: u,
            lipschitz: 1.0,
            layers: s,
        };
        assert!(equivariance_bound(&net, &g("o3"), mk(f64::INFINITY, 2)).is_err());
        assert!(equivariance_bound(&net, &g("o3"), mk(1.0, 3)).is_err());
        assert!(matches!(
            equivariance_bound(&net, &g("o2x"), mk(1.0, 2)),
            Err(Error::MissingBasis(_))
        ));
    }

    proptest! {
        #[test]
        fn per_is_blind_to_equivariant_components(
            seed in 0u64..1000,
            c in proptest::collection::vec(-3.0f64..3.0, 1..8),
        ) {
            let (q, r) = bases("o2y", "S+V", "2V");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = randv(24, &mut rng);
            let b = randv(6, &mut rng);
            let mut coef = vec![0.0; q.dim()];
            for (i, v) in c.iter().enumerate().take(q.dim()) {
                coef[i] = *v;
            }
            let shift = q.expand(&coef).unwrap();
            let w2: Vec<f64> = w.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let a = per_term(&w, &b, &q, &r, 1.3).unwrap().value;
            let bb = per_term(&w2, &b, &q, &r, 1.3).unwrap().value;
            prop_assert!((a - bb).abs() <= 1e-10 * a.max(1.0));
        }

        #[test]
        fn autotune_is_scale_invariant_and_keeps_the_argmin(
            rs in proptest::collection::vec(1e-3f64..1e3, 2..6),
            t in 1e-3f64..1e3,
            gamma in 1.0f64..5.0,
        ) {
            let names: Vec<String> = (0..rs.len()).map(|i| format!("g{i}")).collect();
            let cfg = PerConfig::uniform(&names, 100.0, gamma, 0);
            let a = autotune(&cfg, &rs).unwrap();
            let scaled: Vec<f64> = rs.iter().map(|r| r * t).collect();
            let b = autotune(&cfg, &scaled).unwrap();
            for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
            }
            let argmin = (0..rs.len()).min_by(|&i, &j| rs[i].total_cmp(&rs[j])).unwrap();
            let max = a.lambdas.iter().cloned().fold(0.0, f64::max);
            prop_assert_eq!(a.lambdas[argmin], max);
            prop_assert_eq!(a.lambdas[argmin], 100.0);
        }
    }
}
