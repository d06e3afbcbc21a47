//! Synthetic ballistic trajectories, per-trajectory centering and the three
//! normalization schemes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{split_rng, Dataset, DatasetMeta, Split};
use crate::error::{Error, Result};
use crate::net::checkpoint::csv_err;
use crate::rep::Rep;

pub const T_PAST: usize = 6;
pub const T_FUTURE: usize = 6;
pub const GRAVITY: f64 = 9.8;
pub const DT: f64 = 0.4;
pub const SPEED_RANGE: (f64, f64) = (5.0, 20.0);
pub const MAX_ELEVATION: f64 = std::f64::consts::FRAC_PI_3;
pub const START_SPREAD: f64 = 5.0;
pub const SCALE_ALPHA: [f64; 3] = [1.0, 1.0, 0.993];

pub fn points_rep() -> Rep {
    Rep::vectors(T_PAST)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub past: [Vector3<f64>; T_PAST],
    pub future: [Vector3<f64>; T_FUTURE],
}

fn to_points<const N: usize>(flat: &[f64]) -> Result<[Vector3<f64>; N]> {
    if flat.len() != 3 * N {
        return Err(Error::DimensionMismatch {
            expected: 3 * N,
            actual: flat.len(),
        });
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trajectory coordinate".into()));
    }
    Ok(std::array::from_fn(|i| Vector3::from_column_slice(&flat[3 * i..3 * i + 3])))
}

fn flatten(points: &[Vector3<f64>]) -> Vec<f64> {
    points.iter().flat_map(|p| p.iter().copied()).collect()
}

impl Trajectory {
    pub fn from_flat(past: &[f64], future: &[f64]) -> Result<Self> {
        Ok(Trajectory {
            past: to_points(past)?,
            future: to_points(future)?,
        })
    }

    pub fn past_flat(&self) -> Vec<f64> {
        flatten(&self.past)
    }

    pub fn future_flat(&self) -> Vec<f64> {
        flatten(&self.future)
    }

    pub fn past_mean(&self) -> Vector3<f64> {
        self.past.iter().sum::<Vector3<f64>>() / T_PAST as f64
    }

    pub fn map(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Trajectory {
        Trajectory {
            past: self.past.each_ref().map(&f),
            future: self.future.each_ref().map(&f),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.past.iter().chain(&self.future)
    }
}

pub fn acceleration(wind: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY) + wind
}

fn time(k: usize) -> f64 {
    k as f64 * DT
}

/// Maps past points to the noise-free continuation: fit start and velocity
/// by least squares after removing the known acceleration term, then
/// extrapolate.
pub fn label(past: &[f64], wind: &Vector3<f64>) -> Result<DVector<f64>> {
    let past: [Vector3<f64>; T_PAST] = to_points(past)?;
    let a = acceleration(wind);
    let ts: Vec<f64> = (0..T_PAST).map(time).collect();
    let t_mean = ts.iter().sum::<f64>() / T_PAST as f64;
    let resid: Vec<Vector3<f64>> = past
        .iter()
        .zip(&ts)
        .map(|(p, &t)| p - a * (0.5 * t * t))
        .collect();
    let r_mean = resid.iter().sum::<Vector3<f64>>() / T_PAST as f64;
    let stt: f64 = ts.iter().map(|t| (t - t_mean).powi(2)).sum();
    let v = resid
        .iter()
        .zip(&ts)
        .map(|(r, &t)| (r - r_mean) * (t - t_mean))
        .sum::<Vector3<f64>>()
        / stt;
    let p0 = r_mean - v * t_mean;
    let future: Vec<Vector3<f64>> = (T_PAST..T_PAST + T_FUTURE)
        .map(|k| {
            let t = time(k);
            p0 + v * t + a * (0.5 * t * t)
        })
        .collect();
    Ok(DVector::from_vec(flatten(&future)))
}

pub fn sample_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    wind: &Vector3<f64>,
    noise: f64,
) -> Trajectory {
    let p0 = Vector3::from_fn(|_, _| {
        let z: f64 = StandardNormal.sample(rng);
        START_SPREAD * z
    });
    let speed = rng.random_range(SPEED_RANGE.0..SPEED_RANGE.1);
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let elevation = rng.random_range(0.0..MAX_ELEVATION);
    let v = Vector3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    ) * speed;
    let a = acceleration(wind);
    let mut point = |k: usize| {
        let t = time(k);
        let mut p = p0 + v * t + a * (0.5 * t * t);
        if noise > 0.0 {
            let d = Normal::new(0.0, noise).expect("positive noise");
            p += Vector3::from_fn(|_, _| d.sample(rng));
        }
        p
    };
    let past = std::array::from_fn(&mut point);
    let future = std::array::from_fn(|k| point(T_PAST + k));
    Trajectory { past, future }
}

pub fn sample_input<R: Rng + ?Sized>(rng: &mut R, wind: &Vector3<f64>) -> DVector<f64> {
    DVector::from_vec(sample_trajectory(rng, wind, 0.0).past_flat())
}

fn meta(seed: u64, split: Split) -> DatasetMeta {
    DatasetMeta {
        task: "trajectories".into(),
        error_type: 0,
        error_scale: 0.0,
        seed,
        split,
    }
}

pub fn trajectories_split(
    n: usize,
    wind: &Vector3<f64>,
    noise: f64,
    seed: u64,
    split: Split,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::InvalidValue("dataset size must be positive".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidValue(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = split_rng(seed, split);
    Ok((0..n).map(|_| sample_trajectory(&mut rng, wind, noise)).collect())
}

pub fn gen_trajectories(n: usize, wind: &Vector3<f64>, noise: f64, seed: u64) -> Result<Dataset> {
    let trajs = trajectories_split(n, wind, noise, seed, Split::Train)?;
    Ok(trajectory_dataset(&trajs, meta(seed, Split::Train)))
}

/// Past points as `6V` inputs, future points as `6V` targets.
pub fn trajectory_dataset(trajs: &[Trajectory], meta: DatasetMeta) -> Dataset {
    let n = trajs.len();
    let mut inputs = DMatrix::zeros(n, 3 * T_PAST);
    let mut targets = DMatrix::zeros(n, 3 * T_FUTURE);
    for (r, t) in trajs.iter().enumerate() {
        for (c, v) in t.past_flat().into_iter().enumerate() {
            inputs[(r, c)] = v;
        }
        for (c, v) in t.future_flat().into_iter().enumerate() {
            targets[(r, c)] = v;
        }
    }
    Dataset {
        inputs,
        targets,
        rep_in: points_rep(),
        rep_out: points_rep(),
        meta,
    }
}

pub fn dataset_trajectories(ds: &Dataset) -> Result<Vec<Trajectory>> {
    (0..ds.len())
        .map(|r| {
            let x: Vec<f64> = ds.inputs.row(r).iter().copied().collect();
            let y: Vec<f64> = ds.targets.row(r).iter().copied().collect();
            Trajectory::from_flat(&x, &y)
        })
        .collect()
}

/// The `α ⊙ x̄` offset removed by [`center`].
pub fn centering_offset(traj: &Trajectory, alpha: &[f64; 3]) -> Vector3<f64> {
    traj.past_mean().component_mul(&Vector3::from(*alpha))
}

pub fn center(traj: &Trajectory, alpha: &[f64; 3]) -> Trajectory {
    let off = centering_offset(traj, alpha);
    traj.map(|p| p - off)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    ScaleAware,
    SymmetryAware,
    SymmetryScaleAware,
}

impl NormalizationMode {
    pub fn alpha(self) -> [f64; 3] {
        match self {
            NormalizationMode::SymmetryScaleAware => SCALE_ALPHA,
            _ => [1.0; 3],
        }
    }

    pub fn is_pooled(self) -> bool {
        self != NormalizationMode::ScaleAware
    }
}

impl std::str::FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scale_aware" => Ok(NormalizationMode::ScaleAware),
            "symmetry_aware" => Ok(NormalizationMode::SymmetryAware),
            "symmetry_scale_aware" => Ok(NormalizationMode::SymmetryScaleAware),
            other => Err(Error::Config(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Pooled modes store the scalar `m` and `s` in every component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mode: NormalizationMode,
    pub mu: [f64; 3],
    pub sigma: [f64; 3],
    pub alpha: [f64; 3],
}

/// Statistics over the centered past points of the training set.
pub fn fit_normalization(
    train: &[Trajectory],
    mode: NormalizationMode,
) -> Result<NormalizationStats> {
    if train.is_empty() {
        return Err(Error::InvalidValue("normalization needs training trajectories".into()));
    }
    let alpha = mode.alpha();
    let centered: Vec<Vector3<f64>> = train
        .iter()
        .flat_map(|t| center(t, &alpha).past)
        .collect();
    let count = centered.len() as f64;
    let (mu, sigma) = if mode.is_pooled() {
        let m = centered.iter().map(|p| p.sum()).sum::<f64>() / (3.0 * count);
        let ss: f64 = centered
            .iter()
            .map(|p| p.add_scalar(-m).norm_squared())
            .sum();
        let s = (ss / (3.0 * count)).sqrt();
        ([m; 3], [s; 3])
    } else {
        let mean = centered.iter().sum::<Vector3<f64>>() / count;
        let var = centered
            .iter()
            .map(|p| (p - mean).component_mul(&(p - mean)))
            .sum::<Vector3<f64>>()
            / count;
        (mean.into(), var.map(f64::sqrt).into())
    };
    if sigma.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidValue(format!(
            "zero variance in normalization statistics: {sigma:?}"
        )));
    }
    Ok(NormalizationStats {
        mode,
        mu,
        sigma,
        alpha,
    })
}

/// A normalized trajectory together with the centering offset needed to
/// map it back.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub traj: Trajectory,
    pub offset: Vector3<f64>,
}

impl NormalizationStats {
    /// Pooled modes only rescale, so they commute with every orthogonal map.
    pub fn normalize_point(&self, c: &Vector3<f64>) -> Vector3<f64> {
        if self.mode.is_pooled() {
            c / self.sigma[0]
        } else {
            (c - Vector3::from(self.mu)).component_div(&Vector3::from(self.sigma))
        }
    }

    pub fn denormalize_point(&self, n: &Vector3<f64>) -> Vector3<f64> {
        if self.mode.is_pooled() {
            n * self.sigma[0]
        } else {
            n.component_mul(&Vector3::from(self.sigma)) + Vector3::from(self.mu)
        }
    }
}

pub fn apply_normalization(traj: &Trajectory, stats: &NormalizationStats) -> Normalized {
    let offset = centering_offset(traj, &stats.alpha);
    Normalized {
        traj: traj.map(|p| stats.normalize_point(&(p - offset))),
        offset,
    }
}

pub fn invert_normalization(n: &Normalized, stats: &NormalizationStats) -> Trajectory {
    n.traj.map(|p| stats.denormalize_point(p) + n.offset)
}

const SPLITS: [Split; 3] = [Split::Train, Split::Val, Split::Test];

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    t: usize,
    x: f64,
    y: f64,
    z: f64,
    traj_id: usize,
    split: String,
}

/// One row per point: `t,x,y,z,traj_id,split`, `t` indexing the 12 samples.
pub fn write_trajectories_csv(path: &Path, splits: &[(Split, &[Trajectory])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut id = 0;
    for (split, trajs) in splits {
        for traj in trajs.iter() {
            for (t, p) in traj.points().enumerate() {
                w.serialize(PointRow {
                    t,
                    x: p.x,
                    y: p.y,
                    z: p.z,
                    traj_id: id,
                    split: split.name().into(),
                })
                .map_err(csv_err)?;
            }
            id += 1;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories_csv(path: &Path) -> Result<BTreeMap<Split, Vec<Trajectory>>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let mut grouped: BTreeMap<usize, (Split, BTreeMap<usize, Vector3<f64>>)> = BTreeMap::new();
    for row in r.deserialize() {
        let row: PointRow = row.map_err(csv_err)?;
        let split: Split = row.split.parse()?;
        let entry = grouped
            .entry(row.traj_id)
            .or_insert_with(|| (split, BTreeMap::new()));
        if entry.0 != split {
            return Err(Error::Config(format!(
                "trajectory {} spans several splits",
                row.traj_id
            )));
        }
        if entry.1.insert(row.t, Vector3::new(row.x, row.y, row.z)).is_some() {
            return Err(Error::Config(format!(
                "trajectory {} repeats time index {}",
                row.traj_id, row.t
            )));
        }
    }
    let mut out: BTreeMap<Split, Vec<Trajectory>> = SPLITS.iter().map(|&s| (s, Vec::new())).collect();
    for (id, (split, pts)) in grouped {
        let want: Vec<usize> = (0..T_PAST + T_FUTURE).collect();
        if pts.keys().copied().collect::<Vec<_>>() != want {
            return Err(Error::Config(format!(
                "trajectory {id} needs time indices 0..{}",
                T_PAST + T_FUTURE
            )));
        }
        let flat = flatten(&pts.into_values().collect::<Vec<_>>());
        let traj = Trajectory::from_flat(&flat[..3 * T_PAST], &flat[3 * T_PAST..])?;
        out.get_mut(&split).expect("all splits present").push(traj);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Group;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rotate(traj: &Trajectory, q: &DMatrix<f64>) -> Trajectory {
        let q = nalgebra::Matrix3::from_iterator(q.iter().copied());
        traj.map(|p| q * p)
    }

    #[test]
    fn label_reproduces_noise_free_future() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wind = Vector3::new(0.0, 1.5, 0.0);
        for _ in 0..10 {
            let t = sample_trajectory(&mut rng, &wind, 0.0);
            let y = label(&t.past_flat(), &wind).unwrap();
            let err = (y - DVector::from_vec(t.future_flat())).amax();
            assert!(err < 1e-9, "{err}");
        }
    }

    #[test]
    fn centering_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = sample_trajectory(&mut rng, &Vector3::zeros(), 0.1);
        let c = center(&t, &[1.0; 3]);
        assert!(c.past_mean().norm() < 1e-12);
        let again = center(&c, &[1.0; 3]);
        for (a, b) in again.points().zip(c.points()) {
            assert!((a - b).norm() < 1e-12);
        }
        let p = Vector3::new(2.0, -3.0, 10.0);
        let constant = Trajectory {
            past: [p; 6],
            future: [p; 6],
        };
        let cc = center(&constant, &SCALE_ALPHA);
        for q in cc.points() {
            assert!((q - Vector3::new(0.0, 0.0, 0.007 * 10.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn scale_aware_standardizes_training_points() {
        let trajs = trajectories_split(50, &Vector3::zeros(), 0.2, 3, Split::Train).unwrap();
        let stats = fit_normalization(&trajs, NormalizationMode::ScaleAware).unwrap();
        let pts: Vec<Vector3<f64>> = trajs
            .iter()
            .flat_map(|t| apply_normalization(t, &stats).traj.past)
            .collect();
        let n = pts.len() as f64;
        let mean = pts.iter().sum::<Vector3<f64>>() / n;
        let var = pts.iter().map(|p| (p - mean).component_mul(&(p - mean))).sum::<Vector3<f64>>() / n;
        assert!(mean.amax() < 1e-10);
        assert!((var - Vector3::repeat(1.0)).amax() < 1e-10);
    }

    #[test]
    fn unit_variance_single_trajectory() {
        // Past points ±1 around zero in every coordinate.
        let s = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let past = s.map(|v| Vector3::repeat(v));
        let t = Trajectory {
            past,
            future: past,
        };
        let stats = fit_normalization(&[t], NormalizationMode::ScaleAware).unwrap();
        for k in 0..3 {
            assert!((stats.sigma[k] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetry_stats_are_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trajs = trajectories_split(30, &Vector3::new(1.0, 0.0, 0.0), 0.3, 4, Split::Train)
            .unwrap();
        let centered: Vec<Trajectory> = trajs.iter().map(|t| center(t, &[1.0; 3])).collect();
        let stats = fit_normalization(&centered, NormalizationMode::SymmetryAware).unwrap();
        let q = "so3".parse::<Group>().unwrap().sample(&mut rng).matrix;
        let rotated: Vec<Trajectory> = centered.iter().map(|t| rotate(t, &q)).collect();
        let rstats = fit_normalization(&rotated, NormalizationMode::SymmetryAware).unwrap();
        assert!((stats.sigma[0] - rstats.sigma[0]).abs() < 1e-9);
    }

    #[test]
    fn pooled_modes_commute_with_rotations_and_scale_aware_does_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trajs = trajectories_split(20, &Vector3::zeros(), 0.1, 5, Split::Train).unwrap();
        let o3: Group = "o3".parse().unwrap();
        for mode in [NormalizationMode::SymmetryAware, NormalizationMode::SymmetryScaleAware] {
            let stats = fit_normalization(&trajs, mode).unwrap();
            for t in &trajs {
                let c = center(t, &stats.alpha);
                let q = o3.sample(&mut rng).matrix;
                let lhs = rotate(&c, &q).map(|p| stats.normalize_point(p));
                let rhs = rotate(&c.map(|p| stats.normalize_point(p)), &q);
                for (a, b) in lhs.points().zip(rhs.points()) {
                    assert!((a - b).norm() < 1e-9);
                }
            }
        }
        let stats = NormalizationStats {
            mode: NormalizationMode::ScaleAware,
            mu: [0.0; 3],
            sigma: [1.0, 1.0, 10.0],
            alpha: [1.0; 3],
        };
        let v = Vector3::new(0.0, 0.0, 5.0);
        assert_eq!(stats.normalize_point(&v), Vector3::new(0.0, 0.0, 0.5));
        // A quarter turn about x moves z into y, where the scale differs.
        let q = nalgebra::Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((stats.normalize_point(&(q * v)) - q * stats.normalize_point(&v)).norm() > 1.0);
        assert_eq!(
            fit_normalization(&trajs, NormalizationMode::SymmetryScaleAware).unwrap().alpha,
            [1.0, 1.0, 0.993]
        );
    }

    #[test]
    fn normalization_round_trip() {
        let trajs = trajectories_split(10, &Vector3::zeros(), 0.5, 6, Split::Train).unwrap();
        for mode in [
            NormalizationMode::ScaleAware,
            NormalizationMode::SymmetryAware,
            NormalizationMode::SymmetryScaleAware,
        ] {
            let stats = fit_normalization(&trajs, mode).unwrap();
            for t in &trajs {
                let back = invert_normalization(&apply_normalization(t, &stats), &stats);
                for (a, b) in back.points().zip(t.points()) {
                    assert!((a - b).amax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_variance_is_rejected() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        let t = Trajectory {
            past: [p; 6],
            future: [p; 6],
        };
        assert!(fit_normalization(&[t.clone()], NormalizationMode::ScaleAware).is_err());
        assert!(fit_normalization(&[t], NormalizationMode::SymmetryAware).is_err());
        assert!(fit_normalization(&[], NormalizationMode::SymmetryAware).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let train = trajectories_split(3, &Vector3::zeros(), 0.1, 7, Split::Train).unwrap();
        let test = trajectories_split(2, &Vector3::zeros(), 0.1, 7, Split::Test).unwrap();
        write_trajectories_csv(&path, &[(Split::Train, &train), (Split::Test, &test)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,x,y,z,traj_id,split\n0,"));
        let back = read_trajectories_csv(&path).unwrap();
        assert_eq!(back[&Split::Train], train);
        assert_eq!(back[&Split::Test], test);
        assert!(back[&Split::Val].is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let w = Vector3::new(0.0, 2.0, 0.0);
        let a = gen_trajectories(5, &w, 0.2, 11).unwrap();
        let b = gen_trajectories(5, &w, 0.2, 11).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
        assert_eq!(dataset_trajectories(&a).unwrap().len(), 5);
    }
}
