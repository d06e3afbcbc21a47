//! Catalog of matrix groups acting on R^3 and their element samplers.
//!
//! Every group is described by a finite set of generators: discrete
//! generators (group elements, e.g. a reflection) and Lie-algebra
//! generators (the infinitesimal directions of the identity component).
//! A linear map commutes with every group element iff it commutes with the
//! discrete generators and with the lifted Lie generators, which is what the
//! basis solver exploits.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::expm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two coordinates the axis-embedded 2x2 groups act on, ordered so
    /// that the rotation generator is right-handed about the axis.
    pub fn complement(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (2, 0),
            Axis::Z => (0, 1),
        }
    }

    fn letter(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }

    fn from_letter(c: char) -> Option<Axis> {
        match c {
            'x' => Some(Axis::X),
            'y' => Some(Axis::Y),
            'z' => Some(Axis::Z),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Trivial,
    SO3,
    O3,
    /// O(2) acting on the plane orthogonal to an axis.
    O2,
    /// Uniform positive scaling `{e^t I}`.
    S3,
    SL2,
    GL2,
}

impl Family {
    pub fn is_axis_embedded(self) -> bool {
        matches!(self, Family::O2 | Family::SL2 | Family::GL2)
    }

    fn stem(self) -> &'static str {
        match self {
            Family::Trivial => "trivial",
            Family::SO3 => "so3",
            Family::O3 => "o3",
            Family::O2 => "o2",
            Family::S3 => "s3",
            Family::SL2 => "sl2",
            Family::GL2 => "gl2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    Identity,
    HaarOrthogonal,
    HaarSubgroup,
    LogUniformScaling,
    BoundedMatrix,
}

/// A matrix group acting on `R^base_dim`.
#[derive(Debug, Clone)]
pub struct Group {
    family: Family,
    axis: Option<Axis>,
    name: String,
    base_dim: usize,
    discrete_generators: Vec<DMatrix<f64>>,
    lie_generators: Vec<DMatrix<f64>>,
    sampler: SamplerKind,
}

impl PartialEq for Group {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Eq for Group {}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let fixed = match lower.as_str() {
            "trivial" => Some(Family::Trivial),
            "so3" => Some(Family::SO3),
            "o3" => Some(Family::O3),
            "s3" => Some(Family::S3),
            _ => None,
        };
        if let Some(family) = fixed {
            return Group::new(family, None);
        }
        for family in [Family::O2, Family::SL2, Family::GL2] {
            if let Some(rest) = lower.strip_prefix(family.stem()) {
                let mut chars = rest.chars();
                if let (Some(c), None) = (chars.next(), chars.next()) {
                    if let Some(axis) = Axis::from_letter(c) {
                        return Group::new(family, Some(axis));
                    }
                }
            }
        }
        Err(Error::UnknownGroup(s.to_string()))
    }
}

fn unit(i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 3);
    m[(i, j)] = 1.0;
    m
}

/// so(3) generator for rotations about `axis`.
pub fn rotation_generator(axis: Axis) -> DMatrix<f64> {
    let (a, b) = axis.complement();
    unit(b, a) - unit(a, b)
}

impl Group {
    /// Build a catalog group. `axis` is required exactly for the
    /// axis-embedded families (O(2), SL(2), GL(2)).
    pub fn new(family: Family, axis: Option<Axis>) -> Result<Group> {
        let id = DMatrix::<f64>::identity(3, 3);
        let name = match (family.is_axis_embedded(), axis) {
            (true, Some(ax)) => format!("{}{}", family.stem(), ax.letter()),
            (false, None) => family.stem().to_string(),
            (true, None) => {
                return Err(Error::InvalidAxis {
                    group: family.stem().into(),
                    reason: "an axis is required".into(),
                })
            }
            (false, Some(_)) => {
                return Err(Error::InvalidAxis {
                    group: family.stem().into(),
                    reason: "the group is not axis-embedded".into(),
                })
            }
        };
        let (discrete, lie, sampler) = match family {
            Family::Trivial => (vec![], vec![], SamplerKind::Identity),
            Family::SO3 => (
                vec![],
                vec![
                    rotation_generator(Axis::X),
                    rotation_generator(Axis::Y),
                    rotation_generator(Axis::Z),
                ],
                SamplerKind::HaarOrthogonal,
            ),
            Family::O3 => {
                let mut reflection = id.clone();
                reflection[(0, 0)] = -1.0;
                (
                    vec![reflection],
                    vec![
                        rotation_generator(Axis::X),
                        rotation_generator(Axis::Y),
                        rotation_generator(Axis::Z),
                    ],
                    SamplerKind::HaarOrthogonal,
                )
            }
            Family::O2 => {
                let ax = axis.expect("checked above");
                let (_, b) = ax.complement();
                let mut reflection = id.clone();
                reflection[(b, b)] = -1.0;
                (
                    vec![reflection],
                    vec![rotation_generator(ax)],
                    SamplerKind::HaarSubgroup,
                )
            }
            Family::S3 => (vec![], vec![id.clone()], SamplerKind::LogUniformScaling),
            Family::SL2 => {
                let (a, b) = axis.expect("checked above").complement();
                (vec![], vec![unit(a, b), unit(b, a)], SamplerKind::BoundedMatrix)
            }
            Family::GL2 => {
                let (a, b) = axis.expect("checked above").complement();
                (
                    vec![],
                    vec![unit(a, a), unit(a, b), unit(b, a), unit(b, b)],
                    SamplerKind::BoundedMatrix,
                )
            }
        };
        Ok(Group {
            family,
            axis,
            name,
            base_dim: 3,
            discrete_generators: discrete,
            lie_generators: lie,
            sampler,
        })
    }

    pub fn trivial() -> Group {
        Group::new(Family::Trivial, None).expect("catalog group")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn axis(&self) -> Option<Axis> {
        self.axis
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn discrete_generators(&self) -> &[DMatrix<f64>] {
        &self.discrete_generators
    }

    pub fn lie_generators(&self) -> &[DMatrix<f64>] {
        &self.lie_generators
    }

    pub fn sampler_kind(&self) -> SamplerKind {
        self.sampler
    }

    pub fn is_orthogonal(&self) -> bool {
        matches!(
            self.family,
            Family::Trivial | Family::SO3 | Family::O3 | Family::O2
        )
    }

    /// Upper bound on `‖g‖_op` over everything the sampler can produce.
    pub fn element_norm_bound(&self) -> f64 {
        match self.sampler {
            SamplerKind::Identity | SamplerKind::HaarOrthogonal | SamplerKind::HaarSubgroup => 1.0,
            SamplerKind::LogUniformScaling => 1f64.exp(),
            // ‖exp(Σ c_i A_i)‖ <= exp(Σ |c_i| ‖A_i‖) with |c_i| <= 1.
            SamplerKind::BoundedMatrix => self
                .lie_generators
                .iter()
                .map(crate::linalg::op_norm)
                .sum::<f64>()
                .exp(),
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            matrix: DMatrix::identity(self.base_dim, self.base_dim),
            group: self.name.clone(),
        }
    }

    /// Draw a group element. Compact groups are Haar-distributed; scaling and
    /// SL/GL groups use `exp(Σ c_i A_i)` with `c_i ~ U[-1, 1]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        let matrix = match self.family {
            Family::Trivial => DMatrix::identity(3, 3),
            Family::O3 => haar_orthogonal(3, rng),
            Family::SO3 => {
                let mut q = haar_orthogonal(3, rng);
                if q.determinant() < 0.0 {
                    q.column_mut(0).neg_mut();
                }
                q
            }
            Family::O2 => {
                let (a, b) = self.axis.expect("axis group").complement();
                let q2 = haar_orthogonal(2, rng);
                let mut m = DMatrix::identity(3, 3);
                let idx = [a, b];
                for (i, &ri) in idx.iter().enumerate() {
                    for (j, &cj) in idx.iter().enumerate() {
                        m[(ri, cj)] = q2[(i, j)];
                    }
                }
                m
            }
            Family::S3 => {
                let u: f64 = rng.random_range(-1.0..=1.0);
                DMatrix::from_diagonal_element(3, 3, u.exp())
            }
            Family::SL2 | Family::GL2 => {
                let mut a = DMatrix::zeros(3, 3);
                for gen in &self.lie_generators {
                    let c: f64 = rng.random_range(-1.0..=1.0);
                    a += gen * c;
                }
                expm(&a)
            }
        };
        GroupElement {
            matrix,
            group: self.name.clone(),
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// An explicit group element acting on the base space.
#[derive(Debug, Clone)]
pub struct GroupElement {
    pub matrix: DMatrix<f64>,
    pub group: String,
}

impl GroupElement {
    pub fn inverse(&self) -> GroupElement {
        let matrix = self
            .matrix
            .clone()
            .try_inverse()
            .expect("group elements are invertible");
        GroupElement {
            matrix,
            group: self.group.clone(),
        }
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            matrix: &self.matrix * &other.matrix,
            group: self.group.clone(),
        }
    }
}

/// Every name accepted by [`Group::from_str`].
pub const CATALOG: [&str; 13] = [
    "trivial", "so3", "o3", "o2x", "o2y", "o2z", "s3", "sl2x", "sl2y", "sl2z", "gl2x", "gl2y",
    "gl2z",
];

pub fn catalog() -> Vec<Group> {
    CATALOG
        .iter()
        .map(|n| n.parse().expect("catalog names parse"))
        .collect()
}
