//! Swish and the equivariant gated nonlinearity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::Group;
use crate::rep::{Rep, Representation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
    Gated,
    None,
}

/// Supremum of `|swish'(s)|`, attained near `s ≈ 2.4`.
pub const SWISH_LIPSCHITZ: f64 = 1.0999;

#[inline]
pub fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

#[inline]
pub fn swish(s: f64) -> f64 {
    s * sigmoid(s)
}

#[inline]
pub fn swish_grad(s: f64) -> f64 {
    let sg = sigmoid(s);
    sg * (1.0 + s * (1.0 - sg))
}

/// How a hidden layer of `width` channels splits into scalars, vectors,
/// rank-2 tensors and one gate scalar per non-scalar object.
///
/// Channel layout: `[scalars | vectors | tensors | gates]`; gate `k` belongs
/// to the `k`-th object counting vectors first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenRepAllocation {
    pub width: usize,
    pub n_scalar: usize,
    pub n_vector: usize,
    pub n_tensor2: usize,
    pub n_gates: usize,
}

pub const MIN_MIXED_WIDTH: usize = 15;

impl HiddenRepAllocation {
    pub fn scalars_only(width: usize) -> Self {
        HiddenRepAllocation {
            width,
            n_scalar: width,
            n_vector: 0,
            n_tensor2: 0,
            n_gates: 0,
        }
    }

    /// Deterministic split: a third of the width is the budget for each of
    /// the vector and tensor ranks (each object paying for its gate), at
    /// least one object of each rank, remainder to scalars.
    pub fn mixed(width: usize) -> Result<Self> {
        if width < MIN_MIXED_WIDTH {
            return Err(Error::WidthTooSmall {
                width,
                min: MIN_MIXED_WIDTH,
            });
        }
        let budget = width / 3;
        let n_tensor2 = (budget / 10).max(1);
        let n_vector = (budget / 4).max(1);
        let n_scalar = width - 10 * n_tensor2 - 4 * n_vector;
        Ok(HiddenRepAllocation {
            width,
            n_scalar,
            n_vector,
            n_tensor2,
            n_gates: n_vector + n_tensor2,
        })
    }

    pub fn rep(&self) -> Rep {
        let mut parts = Vec::new();
        if self.n_scalar > 0 {
            parts.push(Rep::scalars(self.n_scalar));
        }
        if self.n_vector > 0 {
            parts.push(Rep::vectors(self.n_vector));
        }
        if self.n_tensor2 > 0 {
            parts.push(Rep::Copies(Box::new(Rep::tensor(2)), self.n_tensor2));
        }
        if self.n_gates > 0 {
            parts.push(Rep::scalars(self.n_gates));
        }
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Rep::DirectSum(parts)
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.n_scalar + 3 * self.n_vector + 9 * self.n_tensor2 + self.n_gates == self.width
            && self.n_gates == self.n_vector + self.n_tensor2
    }

    fn gate_offset(&self) -> usize {
        self.n_scalar + 3 * self.n_vector + 9 * self.n_tensor2
    }

    /// `(start, len, gate_channel)` for every gated object.
    pub fn objects(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let gates = self.gate_offset();
        let v0 = self.n_scalar;
        let t0 = v0 + 3 * self.n_vector;
        (0..self.n_vector)
            .map(move |k| (v0 + 3 * k, 3, gates + k))
            .chain((0..self.n_tensor2).map(move |k| (t0 + 9 * k, 9, gates + self.n_vector + k)))
    }

    /// Channels that pass through swish: the plain scalars and the gates.
    fn swish_channels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_scalar).chain(self.gate_offset()..self.width)
    }
}

/// Hidden representation for networks acting through `group`; the trivial
/// group gets an all-scalar layer.
pub fn allocate_hidden_rep(
    group: &Group,
    width: usize,
) -> Result<(Representation, HiddenRepAllocation)> {
    let alloc = if group.family() == crate::group::Family::Trivial {
        HiddenRepAllocation::scalars_only(width)
    } else {
        HiddenRepAllocation::mixed(width)?
    };
    Ok((Representation::new(alloc.rep(), group), alloc))
}

/// Swish on scalars and gates; every vector or tensor object is multiplied
/// by `sigmoid` of its gate. Operates on a `width x batch` matrix.
pub fn gated_activation(z: &DMatrix<f64>, alloc: &HiddenRepAllocation) -> Result<DMatrix<f64>> {
    if z.nrows() != alloc.width {
        return Err(Error::DimensionMismatch {
            expected: alloc.width,
            actual: z.nrows(),
        });
    }
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for b in 0..z.ncols() {
        let zc = z.column(b);
        let mut oc = out.column_mut(b);
        for i in alloc.swish_channels() {
            oc[i] = swish(zc[i]);
        }
        for (start, len, gate) in alloc.objects() {
            let s = sigmoid(zc[gate]);
            for i in start..start + len {
                oc[i] = zc[i] * s;
            }
        }
    }
    Ok(out)
}

/// Vector-Jacobian product of [`gated_activation`].
pub fn gated_backward(
    z: &DMatrix<f64>,
    upstream: &DMatrix<f64>,
    alloc: &HiddenRepAllocation,
) -> DMatrix<f64> {
    let mut dz = DMatrix::zeros(z.nrows(), z.ncols());
    for b in 0..z.ncols() {
        let zc = z.column(b);
        let uc = upstream.column(b);
        let mut dc = dz.column_mut(b);
        for i in alloc.swish_channels() {
            dc[i] = uc[i] * swish_grad(zc[i]);
        }
        for (start, len, gate) in alloc.objects() {
            let s = sigmoid(zc[gate]);
            let mut acc = 0.0;
            for i in start..start + len {
                dc[i] = uc[i] * s;
                acc += uc[i] * zc[i];
            }
            dc[gate] += acc * s * (1.0 - s);
        }
    }
    dz
}

pub fn swish_matrix(z: &DMatrix<f64>) -> DMatrix<f64> {
    z.map(swish)
}

pub fn swish_backward(z: &DMatrix<f64>, upstream: &DMatrix<f64>) -> DMatrix<f64> {
    z.zip_map(upstream, |s, u| u * swish_grad(s))
}

/// Lipschitz constant of the gated activation on the ball `‖z‖ <= radius`:
/// each object block `(o, s) -> (o·σ(s), swish(s))` has Jacobian norm at
/// most `sqrt(1 + ‖o‖²/16) + swish_lip`.
pub fn gated_lipschitz(radius: f64) -> f64 {
    (1.0 + radius * radius / 16.0).sqrt() + SWISH_LIPSCHITZ
}
