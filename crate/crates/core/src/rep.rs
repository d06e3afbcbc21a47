//! Finite-dimensional representations built from scalars, vectors, tensor
//! powers, direct sums and copies.
//!
//! [`Rep`] is the group-agnostic structure; the same hidden layer layout is
//! reused for every group a network is regularized towards. [`Representation`]
//! pairs a structure with a concrete [`Group`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Group, GroupElement};
use crate::linalg::{block_diag, kron};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rep {
    Scalar,
    Vector,
    TensorPower(Box<Rep>, u32),
    DirectSum(Vec<Rep>),
    Copies(Box<Rep>, usize),
}

impl Rep {
    pub fn scalars(n: usize) -> Rep {
        Rep::Copies(Box::new(Rep::Scalar), n)
    }

    pub fn vectors(n: usize) -> Rep {
        Rep::Copies(Box::new(Rep::Vector), n)
    }

    /// `V^rank`.
    pub fn tensor(rank: u32) -> Rep {
        Rep::TensorPower(Box::new(Rep::Vector), rank)
    }

    pub fn dim(&self, base_dim: usize) -> usize {
        match self {
            Rep::Scalar => 1,
            Rep::Vector => base_dim,
            Rep::TensorPower(b, k) => b.dim(base_dim).pow(*k),
            Rep::DirectSum(parts) => parts.iter().map(|p| p.dim(base_dim)).sum(),
            Rep::Copies(r, n) => n * r.dim(base_dim),
        }
    }

    /// Tensor rank of the most tensorial component (scalars 0, vectors 1).
    pub fn max_rank(&self) -> u32 {
        match self {
            Rep::Scalar => 0,
            Rep::Vector => 1,
            Rep::TensorPower(b, k) => b.max_rank() * k,
            Rep::DirectSum(parts) => parts.iter().map(Rep::max_rank).max().unwrap_or(0),
            Rep::Copies(r, n) => {
                if *n == 0 {
                    0
                } else {
                    r.max_rank()
                }
            }
        }
    }

    /// Lift a base-space group element to this representation.
    pub fn lift_element(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Rep::Scalar => DMatrix::identity(1, 1),
            Rep::Vector => g.clone(),
            Rep::TensorPower(b, k) => {
                let base = b.lift_element(g);
                let mut out = DMatrix::identity(1, 1);
                for _ in 0..*k {
                    out = kron(&out, &base);
                }
                out
            }
            Rep::DirectSum(parts) => {
                let blocks: Vec<_> = parts.iter().map(|p| p.lift_element(g)).collect();
                block_diag(&blocks)
            }
            Rep::Copies(r, n) => {
                if *n == 0 {
                    return DMatrix::zeros(0, 0);
                }
                block_diag(&vec![r.lift_element(g); *n])
            }
        }
    }

    /// Lift a Lie-algebra generator (the derivative of [`Rep::lift_element`]
    /// at the identity; tensor powers follow the Leibniz rule).
    pub fn lift_lie(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Rep::Scalar => DMatrix::zeros(1, 1),
            Rep::Vector => a.clone(),
            Rep::TensorPower(b, k) => {
                let base = b.lift_lie(a);
                let bd = base.nrows();
                let k = *k as usize;
                if k == 0 {
                    return DMatrix::zeros(1, 1);
                }
                let n = bd.pow(k as u32);
                let mut out = DMatrix::zeros(n, n);
                for slot in 0..k {
                    let mut term = DMatrix::identity(1, 1);
                    for i in 0..k {
                        let factor = if i == slot {
                            base.clone()
                        } else {
                            DMatrix::identity(bd, bd)
                        };
                        term = kron(&term, &factor);
                    }
                    out += term;
                }
                out
            }
            Rep::DirectSum(parts) => {
                let blocks: Vec<_> = parts.iter().map(|p| p.lift_lie(a)).collect();
                block_diag(&blocks)
            }
            Rep::Copies(r, n) => {
                if *n == 0 {
                    return DMatrix::zeros(0, 0);
                }
                block_diag(&vec![r.lift_lie(a); *n])
            }
        }
    }

    /// Flatten into `(offset, leaf)` pairs, expanding direct sums and copies.
    /// Lifted generators are block diagonal over these leaves.
    pub fn leaves(&self, base_dim: usize) -> Vec<(usize, Rep)> {
        let mut out = Vec::new();
        let mut offset = 0;
        self.collect_leaves(base_dim, &mut offset, &mut out);
        out
    }

    fn collect_leaves(&self, base_dim: usize, offset: &mut usize, out: &mut Vec<(usize, Rep)>) {
        match self {
            Rep::DirectSum(parts) => {
                for p in parts {
                    p.collect_leaves(base_dim, offset, out);
                }
            }
            Rep::Copies(r, n) => {
                for _ in 0..*n {
                    r.collect_leaves(base_dim, offset, out);
                }
            }
            Rep::TensorPower(_, 0) => {
                out.push((*offset, Rep::Scalar));
                *offset += 1;
            }
            leaf => {
                out.push((*offset, leaf.clone()));
                *offset += leaf.dim(base_dim);
            }
        }
    }
}

impl fmt::Display for Rep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rep::Scalar => write!(f, "S"),
            Rep::Vector => write!(f, "V"),
            Rep::TensorPower(b, k) => match **b {
                Rep::Vector => write!(f, "V{k}"),
                _ => write!(f, "({b}){k}"),
            },
            Rep::DirectSum(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
            Rep::Copies(r, n) => write!(f, "{n}{r}"),
        }
    }
}

/// Parses `+`-separated terms such as `5S+5V`, `V2`, `3V`, `S+V+2V2`.
impl FromStr for Rep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Rep> {
        let bad = || Error::Config(format!("cannot parse representation `{s}`"));
        let mut terms = Vec::new();
        for raw in s.split('+') {
            let t = raw.trim();
            if t.is_empty() {
                return Err(bad());
            }
            let digits: String = t.chars().take_while(|c| c.is_ascii_digit()).collect();
            let rest = &t[digits.len()..];
            let count = if digits.is_empty() {
                1
            } else {
                digits.parse::<usize>().map_err(|_| bad())?
            };
            let mut chars = rest.chars();
            let base = match chars.next() {
                Some('S') | Some('s') => Rep::Scalar,
                Some('V') | Some('v') | Some('T') | Some('t') => Rep::Vector,
                _ => return Err(bad()),
            };
            let rank_str: String = chars.collect();
            let leaf = if rank_str.is_empty() {
                base
            } else {
                let rank: u32 = rank_str.parse().map_err(|_| bad())?;
                if base == Rep::Scalar {
                    if rank == 0 {
                        Rep::Scalar
                    } else {
                        return Err(bad());
                    }
                } else if rank == 1 {
                    Rep::Vector
                } else {
                    Rep::tensor(rank)
                }
            };
            terms.push(if count == 1 {
                leaf
            } else {
                Rep::Copies(Box::new(leaf), count)
            });
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Rep::DirectSum(terms)
        })
    }
}

/// A structure bound to the group acting through it.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub structure: Rep,
    pub group: Group,
}

impl Representation {
    pub fn new(structure: Rep, group: &Group) -> Representation {
        Representation {
            structure,
            group: group.clone(),
        }
    }

    pub fn scalar(group: &Group) -> Representation {
        Representation::new(Rep::Scalar, group)
    }

    pub fn vector(group: &Group) -> Representation {
        Representation::new(Rep::Vector, group)
    }

    pub fn dim(&self) -> usize {
        self.structure.dim(self.group.base_dim())
    }

    pub fn copies(&self, n: usize) -> Representation {
        Representation::new(Rep::Copies(Box::new(self.structure.clone()), n), &self.group)
    }

    /// `ρ(g)` in the lifted space.
    pub fn rho(&self, g: &GroupElement) -> DMatrix<f64> {
        self.structure.lift_element(&g.matrix)
    }

    pub fn act(&self, g: &GroupElement, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        Ok(self.rho(g) * v)
    }

    pub fn lifted_discrete_generators(&self) -> Vec<DMatrix<f64>> {
        self.group
            .discrete_generators()
            .iter()
            .map(|h| self.structure.lift_element(h))
            .collect()
    }

    pub fn lifted_lie_generators(&self) -> Vec<DMatrix<f64>> {
        self.group
            .lie_generators()
            .iter()
            .map(|a| self.structure.lift_lie(a))
            .collect()
    }
}

/// Direct sum of representations of one group.
pub fn direct_sum(reps: &[Representation]) -> Result<Representation> {
    let first = reps.first().ok_or(Error::EmptyGroupList)?;
    for r in reps {
        if r.group != first.group {
            return Err(Error::GroupMismatch(
                first.group.name().into(),
                r.group.name().into(),
            ));
        }
    }
    let structure = if reps.len() == 1 {
        first.structure.clone()
    } else {
        Rep::DirectSum(reps.iter().map(|r| r.structure.clone()).collect())
    };
    Ok(Representation::new(structure, &first.group))
}

pub fn tensor_power(base: &Representation, rank: u32) -> Representation {
    let structure = match rank {
        0 => Rep::Scalar,
        1 => base.structure.clone(),
        k => Rep::TensorPower(Box::new(base.structure.clone()), k),
    };
    Representation::new(structure, &base.group)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn o3() -> Group {
        "o3".parse().unwrap()
    }

    #[test]
    fn dims() {
        let g = o3();
        let s = Representation::scalar(&g);
        let v = Representation::vector(&g);
        assert_eq!(direct_sum(&[s.clone()]).unwrap().dim(), 1);
        let inp = direct_sum(&[s.copies(5), v.copies(5)]).unwrap();
        assert_eq!(inp.dim(), 20);
        assert_eq!(tensor_power(&v, 0).dim(), 1);
        assert_eq!(tensor_power(&v, 2).dim(), 9);
    }

    #[test]
    fn direct_sum_rejects_mixed_groups() {
        let a = Representation::vector(&o3());
        let b = Representation::vector(&"so3".parse().unwrap());
        assert!(matches!(direct_sum(&[a, b]), Err(Error::GroupMismatch(..))));
    }

    #[test]
    fn reflection_on_s_plus_v() {
        let g = o3();
        let sv = direct_sum(&[Representation::scalar(&g), Representation::vector(&g)]).unwrap();
        let lifted = &sv.lifted_discrete_generators()[0];
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0]));
        assert_eq!(lifted, &expected);
    }

    #[test]
    fn rank_two_lie_lift_is_leibniz() {
        let a = crate::group::rotation_generator(crate::group::Axis::Y);
        let lifted = Rep::tensor(2).lift_lie(&a);
        let id = DMatrix::identity(3, 3);
        let expected = kron(&a, &id) + kron(&id, &a);
        assert_eq!(lifted, expected);
    }

    #[test]
    fn scalars_are_invariant_and_rotation_flips_x() {
        let g = o3();
        let s = Representation::scalar(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = g.sample(&mut rng);
        let c = DVector::from_vec(vec![2.5]);
        assert_eq!(s.act(&e, &c).unwrap(), c);

        let half_turn = GroupElement {
            matrix: crate::linalg::expm(
                &(crate::group::rotation_generator(crate::group::Axis::Z) * std::f64::consts::PI),
            ),
            group: "so3".into(),
        };
        let v = Representation::vector(&g);
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let y = v.act(&half_turn, &x).unwrap();
        assert!((y + x).norm() < 1e-12);
    }

    #[test]
    fn tensor_square_acts_by_conjugation() {
        let g = o3();
        let v2 = tensor_power(&Representation::vector(&g), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = g.sample(&mut rng);
        let m = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 - 2.0);
        let vec_m = DVector::from_column_slice(m.as_slice());
        let lhs = v2.act(&e, &vec_m).unwrap();
        let conj = &e.matrix * &m * e.matrix.transpose();
        let rhs = DVector::from_column_slice(conj.as_slice());
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn act_checks_dimension() {
        let v = Representation::vector(&o3());
        let e = o3().identity();
        assert!(matches!(
            v.act(&e, &DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn parse_and_display() {
        let r: Rep = "5S+5V".parse().unwrap();
        assert_eq!(r.dim(3), 20);
        assert_eq!(r.to_string(), "5S+5V");
        let t: Rep = "V2".parse().unwrap();
        assert_eq!(t, Rep::tensor(2));
        assert_eq!(t.to_string(), "V2");
        assert_eq!("3V".parse::<Rep>().unwrap().dim(3), 9);
        assert!("5Q".parse::<Rep>().is_err());
        assert!("".parse::<Rep>().is_err());
    }

    #[test]
    fn leaves_expand_copies() {
        let r: Rep = "2S+V+V2".parse().unwrap();
        let leaves = r.leaves(3);
        let offsets: Vec<usize> = leaves.iter().map(|(o, _)| *o).collect();
        assert_eq!(offsets, vec![0, 1, 2, 5]);
        assert_eq!(leaves[3].1, Rep::tensor(2));
    }
}
