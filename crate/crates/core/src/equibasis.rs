//! Orthonormal bases of equivariant linear maps and invariant vectors.
//!
//! For a linear map `W: R^n -> R^m` between representations, equivariance
//! under a group generated by Lie generators `A` and discrete generators `h`
//! is the linear system (column-major `vec`)
//!
//! ```text
//!   (dρ_in(A)ᵀ ⊗ I − I ⊗ dρ_out(A)) vec(W) = 0
//!   (ρ_in(h)ᵀ ⊗ ρ_out(h)⁻¹ − I)      vec(W) = 0
//! ```
//!
//! whose null space is computed from a dense SVD. Lifted generators are
//! block diagonal over the leaves of a representation, so the system splits
//! into independent blocks, one per (output leaf, input leaf) pair; each
//! block is solved once per leaf pair and group set and cached.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::group::Group;
use crate::linalg::{kron, null_space, vstack};
use crate::rep::{Rep, Representation};

/// Singular values below `DEFAULT_TOLERANCE * σ_max` count as zero.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_SIZE_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbientKind {
    Map { n_in: usize, n_out: usize },
    Vector { n_out: usize },
}

impl AmbientKind {
    pub fn dim(&self) -> usize {
        match *self {
            AmbientKind::Map { n_in, n_out } => n_in * n_out,
            AmbientKind::Vector { n_out } => n_out,
        }
    }
}

/// Orthonormal columns supported on a subset of ambient coordinates.
#[derive(Debug, Clone)]
pub struct BasisBlock {
    pub indices: Vec<usize>,
    pub local: Arc<DMatrix<f64>>,
}

/// Orthonormal basis `Q` stored as disjoint blocks; the global column set is
/// the union of all block columns, in block order.
#[derive(Debug, Clone)]
pub struct EquivariantBasis {
    ambient: AmbientKind,
    blocks: Vec<BasisBlock>,
    dim: usize,
    tolerance: f64,
    groups: Vec<String>,
}

impl EquivariantBasis {
    fn from_blocks(
        ambient: AmbientKind,
        blocks: Vec<BasisBlock>,
        tolerance: f64,
        groups: &[Group],
    ) -> Self {
        let blocks: Vec<_> = blocks.into_iter().filter(|b| b.local.ncols() > 0).collect();
        let dim = blocks.iter().map(|b| b.local.ncols()).sum();
        EquivariantBasis {
            ambient,
            blocks,
            dim,
            tolerance,
            groups: groups.iter().map(|g| g.name().to_string()).collect(),
        }
    }

    /// Basis spanning the whole ambient space (no constraints).
    pub fn full(ambient: AmbientKind) -> Self {
        let n = ambient.dim();
        let block = BasisBlock {
            indices: (0..n).collect(),
            local: Arc::new(DMatrix::identity(n, n)),
        };
        Self::from_blocks(ambient, vec![block], 0.0, &[])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient.dim()
    }

    pub fn ambient(&self) -> AmbientKind {
        self.ambient
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                actual: len,
            });
        }
        Ok(())
    }

    /// `Qᵀ v`.
    pub fn coefficients(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v.len())?;
        let mut out = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            let q = &b.local;
            for c in 0..q.ncols() {
                let col = q.column(c);
                let mut s = 0.0;
                for (k, &i) in b.indices.iter().enumerate() {
                    s += col[k] * v[i];
                }
                out.push(s);
            }
        }
        Ok(out)
    }

    /// `Q θ` added into `out`.
    pub fn expand_into(&self, theta: &[f64], out: &mut [f64]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: theta.len(),
            });
        }
        self.check(out.len())?;
        let mut t = 0;
        for b in &self.blocks {
            let q = &b.local;
            for c in 0..q.ncols() {
                let coef = theta[t];
                t += 1;
                if coef == 0.0 {
                    continue;
                }
                let col = q.column(c);
                for (k, &i) in b.indices.iter().enumerate() {
                    out[i] += coef * col[k];
                }
            }
        }
        Ok(())
    }

    pub fn expand(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.ambient_dim()];
        self.expand_into(theta, &mut out)?;
        Ok(out)
    }

    /// `Q Qᵀ v`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let c = self.coefficients(v)?;
        self.expand(&c)
    }

    /// `v − Q Qᵀ v`.
    pub fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p = self.project(v)?;
        Ok(v.iter().zip(&p).map(|(a, b)| a - b).collect())
    }

    pub fn residual_norm(&self, v: &[f64]) -> Result<f64> {
        let r = self.residual(v)?;
        Ok(crate::linalg::norm(&r))
    }

    /// Dense `ambient_dim x dim` matrix of the columns.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.ambient_dim(), self.dim);
        let mut col0 = 0;
        for b in &self.blocks {
            for c in 0..b.local.ncols() {
                for (k, &i) in b.indices.iter().enumerate() {
                    out[(i, col0 + c)] = b.local[(k, c)];
                }
            }
            col0 += b.local.ncols();
        }
        out
    }

    /// Headerless CSV, one basis column per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dense = self.to_dense();
        for c in 0..dense.ncols() {
            let line: Vec<String> = dense.column(c).iter().map(|x| format!("{x:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Stacked equivariance constraints for maps `rep_in -> rep_out` under every
/// group in `groups`.
pub fn map_constraints(groups: &[Group], rep_in: &Rep, rep_out: &Rep) -> DMatrix<f64> {
    let mut rows = Vec::new();
    let mut ncols = 0;
    for g in groups {
        let d = g.base_dim();
        let n = rep_in.dim(d);
        let m = rep_out.dim(d);
        ncols = n * m;
        for a in g.lie_generators() {
            let din = rep_in.lift_lie(a);
            let dout = rep_out.lift_lie(a);
            rows.push(
                kron(&din.transpose(), &DMatrix::identity(m, m))
                    - kron(&DMatrix::identity(n, n), &dout),
            );
        }
        for h in g.discrete_generators() {
            let rin = rep_in.lift_element(h);
            let rout_inv = rep_out
                .lift_element(h)
                .try_inverse()
                .expect("catalog generators are invertible");
            rows.push(kron(&rin.transpose(), &rout_inv) - DMatrix::identity(n * m, n * m));
        }
    }
    if ncols == 0 {
        if let Some(g) = groups.first() {
            ncols = rep_in.dim(g.base_dim()) * rep_out.dim(g.base_dim());
        }
    }
    vstack(&rows, ncols)
}

/// Stacked invariance constraints for vectors of `rep_out`.
pub fn vector_constraints(groups: &[Group], rep_out: &Rep) -> DMatrix<f64> {
    let mut rows = Vec::new();
    let mut ncols = 0;
    for g in groups {
        let m = rep_out.dim(g.base_dim());
        ncols = m;
        for a in g.lie_generators() {
            rows.push(rep_out.lift_lie(a));
        }
        for h in g.discrete_generators() {
            rows.push(rep_out.lift_element(h) - DMatrix::identity(m, m));
        }
    }
    vstack(&rows, ncols)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct BlockKey {
    groups: Vec<String>,
    rep_in: Option<Rep>,
    rep_out: Rep,
}

/// Null-space solver with a per-leaf-pair cache.
#[derive(Debug)]
pub struct BasisSolver {
    tolerance: f64,
    size_cap: usize,
    cache: RwLock<HashMap<BlockKey, Arc<DMatrix<f64>>>>,
}

impl Default for BasisSolver {
    fn default() -> Self {
        BasisSolver::new(DEFAULT_TOLERANCE, DEFAULT_SIZE_CAP)
    }
}

fn check_groups(groups: &[Group]) -> Result<usize> {
    let first = groups.first().ok_or(Error::EmptyGroupList)?;
    for g in groups {
        if g.base_dim() != first.base_dim() {
            return Err(Error::GroupMismatch(first.name().into(), g.name().into()));
        }
    }
    Ok(first.base_dim())
}

fn sorted_names(groups: &[Group]) -> Vec<String> {
    let mut names: Vec<String> = groups.iter().map(|g| g.name().to_string()).collect();
    names.sort();
    names.dedup();
    names
}

impl BasisSolver {
    pub fn new(tolerance: f64, size_cap: usize) -> Self {
        BasisSolver {
            tolerance,
            size_cap,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn solve(&self, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if c.nrows() * c.ncols() > self.size_cap {
            return Err(Error::ConstraintTooLarge {
                rows: c.nrows(),
                cols: c.ncols(),
                cap: self.size_cap,
            });
        }
        Ok(null_space(c, self.tolerance))
    }

    fn cached(
        &self,
        key: BlockKey,
        build: impl FnOnce() -> Result<DMatrix<f64>>,
    ) -> Result<Arc<DMatrix<f64>>> {
        if let Some(hit) = self.cache.read().expect("basis cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let value = Arc::new(build()?);
        let mut w = self.cache.write().expect("basis cache poisoned");
        Ok(w.entry(key).or_insert(value).clone())
    }

    /// Joint basis of maps `rep_in -> rep_out` equivariant to every group.
    pub fn map_basis(
        &self,
        groups: &[Group],
        rep_in: &Rep,
        rep_out: &Rep,
    ) -> Result<EquivariantBasis> {
        let d = check_groups(groups)?;
        let n_in = rep_in.dim(d);
        let n_out = rep_out.dim(d);
        let names = sorted_names(groups);
        let in_leaves = rep_in.leaves(d);
        let out_leaves = rep_out.leaves(d);
        let mut blocks = Vec::with_capacity(in_leaves.len() * out_leaves.len());
        for (oi, li) in &in_leaves {
            let di = li.dim(d);
            for (oj, lj) in &out_leaves {
                let dj = lj.dim(d);
                let key = BlockKey {
                    groups: names.clone(),
                    rep_in: Some(li.clone()),
                    rep_out: lj.clone(),
                };
                let local = self.cached(key, || self.solve(&map_constraints(groups, li, lj)))?;
                if local.ncols() == 0 {
                    continue;
                }
                let mut indices = Vec::with_capacity(di * dj);
                for c in 0..di {
                    for r in 0..dj {
                        indices.push((oi + c) * n_out + (oj + r));
                    }
                }
                blocks.push(BasisBlock { indices, local });
            }
        }
        Ok(EquivariantBasis::from_blocks(
            AmbientKind::Map { n_in, n_out },
            blocks,
            self.tolerance,
            groups,
        ))
    }

    /// Joint basis of vectors of `rep_out` invariant under every group.
    pub fn vector_basis(&self, groups: &[Group], rep_out: &Rep) -> Result<EquivariantBasis> {
        let d = check_groups(groups)?;
        let names = sorted_names(groups);
        let mut blocks = Vec::new();
        for (oj, lj) in rep_out.leaves(d) {
            let dj = lj.dim(d);
            let key = BlockKey {
                groups: names.clone(),
                rep_in: None,
                rep_out: lj.clone(),
            };
            let local = self.cached(key, || self.solve(&vector_constraints(groups, &lj)))?;
            if local.ncols() == 0 {
                continue;
            }
            blocks.push(BasisBlock {
                indices: (oj..oj + dj).collect(),
                local,
            });
        }
        Ok(EquivariantBasis::from_blocks(
            AmbientKind::Vector {
                n_out: rep_out.dim(d),
            },
            blocks,
            self.tolerance,
            groups,
        ))
    }

    /// The same basis as [`BasisSolver::map_basis`] from one SVD of the
    /// whole constraint matrix, without block decomposition or caching.
    pub fn dense_map_basis(
        &self,
        groups: &[Group],
        rep_in: &Rep,
        rep_out: &Rep,
    ) -> Result<EquivariantBasis> {
        let d = check_groups(groups)?;
        let n_in = rep_in.dim(d);
        let n_out = rep_out.dim(d);
        let q = self.solve(&map_constraints(groups, rep_in, rep_out))?;
        let block = BasisBlock {
            indices: (0..n_in * n_out).collect(),
            local: Arc::new(q),
        };
        Ok(EquivariantBasis::from_blocks(
            AmbientKind::Map { n_in, n_out },
            vec![block],
            self.tolerance,
            groups,
        ))
    }

    pub fn dense_vector_basis(&self, groups: &[Group], rep_out: &Rep) -> Result<EquivariantBasis> {
        let d = check_groups(groups)?;
        let n_out = rep_out.dim(d);
        let q = self.solve(&vector_constraints(groups, rep_out))?;
        let block = BasisBlock {
            indices: (0..n_out).collect(),
            local: Arc::new(q),
        };
        Ok(EquivariantBasis::from_blocks(
            AmbientKind::Vector { n_out },
            vec![block],
            self.tolerance,
            groups,
        ))
    }
}

/// Process-wide solver with the default tolerance and size cap.
pub fn default_solver() -> &'static BasisSolver {
    static SOLVER: OnceLock<BasisSolver> = OnceLock::new();
    SOLVER.get_or_init(BasisSolver::default)
}

pub fn equivariant_map_basis(
    rep_in: &Representation,
    rep_out: &Representation,
) -> Result<EquivariantBasis> {
    if rep_in.group != rep_out.group {
        return Err(Error::GroupMismatch(
            rep_in.group.name().into(),
            rep_out.group.name().into(),
        ));
    }
    default_solver().map_basis(
        std::slice::from_ref(&rep_in.group),
        &rep_in.structure,
        &rep_out.structure,
    )
}

pub fn invariant_vector_basis(rep_out: &Representation) -> Result<EquivariantBasis> {
    default_solver().vector_basis(std::slice::from_ref(&rep_out.group), &rep_out.structure)
}

/// Maps equivariant to all of `groups` at once (null space of the stacked
/// constraints).
pub fn joint_basis(groups: &[Group], rep_in: &Rep, rep_out: &Rep) -> Result<EquivariantBasis> {
    default_solver().map_basis(groups, rep_in, rep_out)
}

pub fn joint_invariant_basis(groups: &[Group], rep_out: &Rep) -> Result<EquivariantBasis> {
    default_solver().vector_basis(groups, rep_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(name: &str) -> Group {
        name.parse().unwrap()
    }

    fn v() -> Rep {
        Rep::Vector
    }

    #[test]
    fn trivial_group_allows_everything() {
        let b = joint_basis(&[Group::trivial()], &Rep::vectors(2), &Rep::scalars(4)).unwrap();
        assert_eq!(b.dim(), 24);
    }

    #[test]
    fn o3_vector_maps_are_multiples_of_identity() {
        let b = joint_basis(&[g("o3")], &v(), &v()).unwrap();
        assert_eq!(b.dim(), 1);
        let q = b.to_dense();
        let expected = DMatrix::<f64>::identity(3, 3) / 3f64.sqrt();
        let col = DMatrix::from_column_slice(3, 3, q.column(0).as_slice());
        let sign = col[(0, 0)].signum();
        assert!((col * sign - expected).norm() < 1e-10);
    }

    #[test]
    fn o2z_vector_maps_have_two_blocks() {
        let b = joint_basis(&[g("o2z")], &v(), &v()).unwrap();
        assert_eq!(b.dim(), 2);
        // Any element of the span is blockdiag(aI2, c).
        let w = b.expand(&[0.3, -1.2]).unwrap();
        let w = DMatrix::from_column_slice(3, 3, &w);
        assert!(w[(0, 1)].abs() < 1e-12 && w[(1, 0)].abs() < 1e-12);
        assert!((w[(0, 0)] - w[(1, 1)]).abs() < 1e-12);
        assert!(w[(0, 2)].abs() < 1e-12 && w[(2, 0)].abs() < 1e-12);
    }

    #[test]
    fn invariant_vectors() {
        assert_eq!(joint_invariant_basis(&[g("o3")], &v()).unwrap().dim(), 0);
        assert_eq!(joint_invariant_basis(&[g("s3")], &v()).unwrap().dim(), 0);
        let z = joint_invariant_basis(&[g("o2z")], &v()).unwrap();
        assert_eq!(z.dim(), 1);
        let d = z.to_dense();
        assert!((d[(2, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_axis_groups_match_o3() {
        let axes = [g("o2x"), g("o2y"), g("o2z")];
        for (a, b) in [(v(), v()), (Rep::tensor(2), Rep::tensor(2)), (v(), Rep::tensor(2))] {
            let joint = joint_basis(&axes, &a, &b).unwrap().dim();
            let o3 = joint_basis(&[g("o3")], &a, &b).unwrap().dim();
            assert_eq!(joint, o3, "{a} -> {b}");
        }
    }

    #[test]
    fn so3_and_scaling_on_vectors() {
        let b = joint_basis(&[g("so3"), g("s3")], &v(), &v()).unwrap();
        assert_eq!(b.dim(), 1);
        // Scaling kills maps between different tensor ranks.
        let c = joint_basis(&[g("so3"), g("s3")], &v(), &Rep::tensor(2)).unwrap();
        assert_eq!(c.dim(), 0);
        assert_eq!(joint_basis(&[g("so3")], &v(), &Rep::tensor(2)).unwrap().dim(), 1);
    }

    #[test]
    fn projection_properties() {
        let b = joint_basis(&[g("o2y")], &"S+V".parse().unwrap(), &"V+S".parse().unwrap()).unwrap();
        let v: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = b.project(&v).unwrap();
        let pp = b.project(&p).unwrap();
        for (a, c) in p.iter().zip(&pp) {
            assert!((a - c).abs() < 1e-10);
        }
        let r = b.residual_norm(&v).unwrap();
        let pn = crate::linalg::norm(&p);
        let vn = crate::linalg::norm(&v);
        assert!((r * r + pn * pn - vn * vn).abs() < 1e-9);
        assert!(b.residual_norm(&p).unwrap() < 1e-10);
    }

    #[test]
    fn empty_basis_projects_to_zero() {
        let b = joint_invariant_basis(&[g("o3")], &Rep::vectors(2)).unwrap();
        assert_eq!(b.dim(), 0);
        let v = vec![1.0; 6];
        assert!(b.project(&v).unwrap().iter().all(|x| *x == 0.0));
        assert!((b.residual_norm(&v).unwrap() - 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let b = joint_basis(&[g("o3")], &v(), &v()).unwrap();
        assert!(matches!(b.project(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_group_list_is_an_error() {
        assert!(matches!(joint_basis(&[], &v(), &v()), Err(Error::EmptyGroupList)));
    }

    #[test]
    fn size_cap_fails_fast() {
        let solver = BasisSolver::new(DEFAULT_TOLERANCE, 100);
        let err = solver.dense_map_basis(&[g("o3")], &Rep::tensor(2), &Rep::tensor(2));
        assert!(matches!(err, Err(Error::ConstraintTooLarge { .. })));
    }

    #[test]
    fn mismatched_groups_rejected() {
        let a = Representation::vector(&g("o3"));
        let b = Representation::vector(&g("so3"));
        assert!(matches!(equivariant_map_basis(&a, &b), Err(Error::GroupMismatch(..))));
    }

    #[test]
    fn block_and_dense_routes_agree() {
        let solver = BasisSolver::default();
        let rin: Rep = "2S+V+V2".parse().unwrap();
        let rout: Rep = "S+2V".parse().unwrap();
        for name in ["o3", "so3", "o2x", "s3", "sl2z", "gl2y"] {
            let gs = [g(name)];
            let blocked = solver.map_basis(&gs, &rin, &rout).unwrap();
            let dense = solver.dense_map_basis(&gs, &rin, &rout).unwrap();
            assert_eq!(blocked.dim(), dense.dim(), "{name}");
            // Same span: projectors agree.
            let pb = blocked.to_dense() * blocked.to_dense().transpose();
            let pd = dense.to_dense() * dense.to_dense().transpose();
            assert!((pb - pd).norm() < 1e-8, "{name}");
        }
    }

    #[test]
    fn projected_maps_are_equivariant_for_sampled_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rin: Rep = "S+V+V2".parse().unwrap();
        let rout: Rep = "V2+V".parse().unwrap();
        for grp in crate::group::catalog() {
            let b = joint_basis(std::slice::from_ref(&grp), &rin, &rout).unwrap();
            let n_in = rin.dim(3);
            let n_out = rout.dim(3);
            let v: Vec<f64> = (0..n_in * n_out).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
            let p = b.project(&v).unwrap();
            let w = DMatrix::from_column_slice(n_out, n_in, &p);
            for _ in 0..10 {
                let e = grp.sample(&mut rng);
                let lhs = rout.lift_element(&e.matrix) * &w;
                let rhs = &w * rin.lift_element(&e.matrix);
                assert!(
                    (lhs - rhs).norm() <= 1e-6 * w.norm().max(1e-300),
                    "{}",
                    grp.name()
                );
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_and_satisfies_constraints() {
        let rin: Rep = "5S+5V".parse().unwrap();
        let rout = Rep::tensor(2);
        for name in ["o3", "o2z", "so3"] {
            let gs = [g(name)];
            let b = joint_basis(&gs, &rin, &rout).unwrap();
            let q = b.to_dense();
            let gram = q.transpose() * &q;
            assert!((gram - DMatrix::identity(b.dim(), b.dim())).norm() < 1e-8);
            let c = map_constraints(&gs, &rin, &rout);
            for col in 0..q.ncols() {
                assert!((&c * q.column(col)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn dimension_stable_across_tolerance_decade() {
        let rin: Rep = "S+V+V2".parse().unwrap();
        for grp in crate::group::catalog() {
            let gs = [grp.clone()];
            let dims: Vec<usize> = [1e-9, 1e-8, 1e-7]
                .iter()
                .map(|t| {
                    BasisSolver::new(*t, DEFAULT_SIZE_CAP)
                        .dense_map_basis(&gs, &rin, &rin)
                        .unwrap()
                        .dim()
                })
                .collect();
            assert!(dims.windows(2).all(|w| w[0] == w[1]), "{}: {dims:?}", grp.name());
        }
    }

    #[test]
    fn csv_dump_has_one_line_per_column() {
        let b = joint_basis(&[g("o2z")], &v(), &v()).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 9);
    }
}
