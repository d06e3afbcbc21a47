//! Synthetic tasks, dataset I/O and task metrics.

pub mod cossim;
pub mod inertia;
pub mod trajectory;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::Group;
use crate::net::checkpoint::csv_err;
use crate::net::Network;
use crate::rep::{Rep, Representation};

pub use cossim::{avg_cos_sim, gen_cossim};
pub use inertia::{gen_inertia, moment_of_inertia};
pub use trajectory::{
    apply_normalization, center, fit_normalization, gen_trajectories, invert_normalization,
    NormalizationMode, NormalizationStats, Trajectory,
};

pub const DEFAULT_SPLIT_SIZE: usize = 1000;
pub const DEFAULT_MC_INPUTS: usize = 256;
pub const DEFAULT_MC_ELEMENTS: usize = 64;
pub const EQUIV_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        self as u64
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Each split draws from its own ChaCha stream, so the three splits never
/// share samples for a given seed.
pub fn split_rng(seed: u64, split: Split) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split.stream());
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: String,
    pub error_type: u8,
    pub error_scale: f64,
    pub seed: u64,
    pub split: Split,
}

/// One sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub rep_in: Rep,
    pub rep_out: Rep,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn in_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn representation_in(&self, group: &Group) -> Representation {
        Representation::new(self.rep_in.clone(), group)
    }

    pub fn representation_out(&self, group: &Group) -> Representation {
        Representation::new(self.rep_out.clone(), group)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.targets.nrows(), self.inputs.nrows()),
            (self.rep_in.dim(3), self.in_dim()),
            (self.rep_out.dim(3), self.out_dim()),
        ];
        for (expected, actual) in checks {
            if expected != actual {
                return Err(Error::DimensionMismatch { expected, actual });
            }
        }
        Ok(())
    }

    /// Inputs and targets of the given rows, one sample per column.
    pub fn columns(&self, rows: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let pick = |m: &DMatrix<f64>| {
            DMatrix::from_fn(m.ncols(), rows.len(), |i, j| m[(rows[j], i)])
        };
        (pick(&self.inputs), pick(&self.targets))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        let header: Vec<String> = (0..self.in_dim())
            .map(|i| format!("in_{i}"))
            .chain((0..self.out_dim()).map(|i| format!("out_{i}")))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for r in 0..self.len() {
            let row: Vec<String> = self
                .inputs
                .row(r)
                .iter()
                .chain(self.targets.row(r).iter())
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `in_*,out_*` layout; the column split comes from the header.
    pub fn read_csv(path: &Path, rep_in: Rep, rep_out: Rep, meta: DatasetMeta) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(File::open(path)?);
        let header = r.headers().map_err(csv_err)?.clone();
        let n_in = header.iter().filter(|h| h.starts_with("in_")).count();
        let n_out = header.iter().filter(|h| h.starts_with("out_")).count();
        if n_in + n_out != header.len() {
            return Err(Error::Config("dataset header must be in_* then out_*".into()));
        }
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            for field in rec.iter() {
                values.push(field.trim().parse::<f64>().map_err(|e| {
                    Error::Config(format!("bad number `{field}`: {e}"))
                })?);
            }
        }
        let width = n_in + n_out;
        let n = values.len() / width.max(1);
        let all = DMatrix::from_row_slice(n, width, &values);
        let ds = Dataset {
            inputs: all.columns(0, n_in).into_owned(),
            targets: all.columns(n_in, n_out).into_owned(),
            rep_in,
            rep_out,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// A generator together with its ground-truth labeling function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskSpec {
    Inertia { error_type: u8, error_scale: f64 },
    Cossim { error_type: u8, error_scale: f64 },
    Trajectories { wind: [f64; 3], noise: f64 },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Inertia { .. } => "inertia",
            TaskSpec::Cossim { .. } => "cossim",
            TaskSpec::Trajectories { .. } => "trajectories",
        }
    }

    pub fn rep_in(&self) -> Rep {
        match self {
            TaskSpec::Inertia { .. } => inertia::input_rep(),
            TaskSpec::Cossim { .. } => cossim::input_rep(),
            TaskSpec::Trajectories { .. } => trajectory::points_rep(),
        }
    }

    pub fn rep_out(&self) -> Rep {
        match self {
            TaskSpec::Inertia { .. } => inertia::output_rep(),
            TaskSpec::Cossim { .. } => cossim::output_rep(),
            TaskSpec::Trajectories { .. } => trajectory::points_rep(),
        }
    }

    pub fn generate(&self, n: usize, seed: u64, split: Split) -> Result<Dataset> {
        match *self {
            TaskSpec::Inertia { error_type, error_scale } => {
                inertia::gen_inertia_split(n, error_type, error_scale, seed, split)
            }
            TaskSpec::Cossim { error_type, error_scale } => {
                cossim::gen_cossim_split(n, error_type, error_scale, seed, split)
            }
            TaskSpec::Trajectories { wind, noise } => {
                let trajs =
                    trajectory::trajectories_split(n, &Vector3::from(wind), noise, seed, split)?;
                Ok(trajectory::trajectory_dataset(
                    &trajs,
                    DatasetMeta {
                        task: self.name().into(),
                        error_type: 0,
                        error_scale: 0.0,
                        seed,
                        split,
                    },
                ))
            }
        }
    }

    pub fn generate_splits(&self, sizes: [usize; 3], seed: u64) -> Result<Splits> {
        Ok(Splits {
            train: self.generate(sizes[0], seed, Split::Train)?,
            val: self.generate(sizes[1], seed, Split::Val)?,
            test: self.generate(sizes[2], seed, Split::Test)?,
        })
    }

    pub fn label(&self, input: &[f64]) -> Result<DVector<f64>> {
        match *self {
            TaskSpec::Inertia { error_type, error_scale } => {
                inertia::label(input, error_type, error_scale)
            }
            TaskSpec::Cossim { error_type, error_scale } => {
                cossim::label(input, error_type, error_scale)
            }
            TaskSpec::Trajectories { wind, .. } => trajectory::label(input, &Vector3::from(wind)),
        }
    }

    /// Labels every column of `x`.
    pub fn label_columns(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let out_dim = self.rep_out().dim(3);
        let mut y = DMatrix::zeros(out_dim, x.ncols());
        for c in 0..x.ncols() {
            let col: Vec<f64> = x.column(c).iter().copied().collect();
            y.set_column(c, &self.label(&col)?);
        }
        Ok(y)
    }

    pub fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        match self {
            TaskSpec::Inertia { .. } => Ok(inertia::sample_input(rng)),
            TaskSpec::Cossim { .. } => cossim::sample_input(rng),
            TaskSpec::Trajectories { wind, .. } => {
                Ok(trajectory::sample_input(rng, &Vector3::from(*wind)))
            }
        }
    }
}

/// Mean over samples of the squared Euclidean residual (rows are samples).
pub fn mse(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    Ok((pred - truth).norm_squared() / pred.nrows().max(1) as f64)
}

/// `(1/T) Σ ‖y⁽ᵗ⁾ − ŷ⁽ᵗ⁾‖` over flattened point sequences.
pub fn ade(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.len() % 3 != 0 || pred.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    let t = pred.len() / 3;
    let sum: f64 = pred
        .chunks(3)
        .zip(truth.chunks(3))
        .map(|(a, b)| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        })
        .sum();
    Ok(sum / t as f64)
}

/// Monte Carlo estimate of the normalized defect
/// `‖ρ_Y(g) f(x) − f(ρ_X(g) x)‖ / (‖ρ_Y(g) f(x)‖ ‖f(ρ_X(g) x)‖ + ε)`
/// for a column-batched map `f`.
pub fn equivariance_defect<F, R>(
    f: F,
    x: &DMatrix<f64>,
    rep_in: &Rep,
    rep_out: &Rep,
    group: &Group,
    n_g: usize,
    rng: &mut R,
) -> Result<f64>
where
    F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    R: Rng + ?Sized,
{
    if n_g == 0 || x.ncols() == 0 {
        return Err(Error::InvalidValue(
            "equivariance error needs inputs and group samples".into(),
        ));
    }
    let fx = f(x)?;
    let mut total = 0.0;
    for _ in 0..n_g {
        let g = group.sample(rng);
        let lhs = rep_out.lift_element(&g.matrix) * &fx;
        let rhs = f(&(rep_in.lift_element(&g.matrix) * x))?;
        for c in 0..x.ncols() {
            let (a, b) = (lhs.column(c), rhs.column(c));
            total += (a - b).norm() / (a.norm() * b.norm() + EQUIV_EPS);
        }
    }
    Ok(total / (n_g * x.ncols()) as f64)
}

/// Model equivariance error over `inputs` (one sample per row).
pub fn model_equivariance_error<R: Rng + ?Sized>(
    net: &Network,
    group: &Group,
    rep_in: &Rep,
    rep_out: &Rep,
    inputs: &DMatrix<f64>,
    n_g: usize,
    rng: &mut R,
) -> Result<f64> {
    let eff = net.effective_weights()?;
    equivariance_defect(
        |x| net.forward_columns_with(&eff, x),
        &inputs.transpose(),
        rep_in,
        rep_out,
        group,
        n_g,
        rng,
    )
}

/// The same estimator applied to the task's ground-truth labeling function,
/// on `n` fresh inputs.
pub fn data_equivariance_error(
    task: &TaskSpec,
    group: &Group,
    n: usize,
    n_g: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (0..n)
        .map(|_| task.sample_input(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    if cols.is_empty() {
        return Err(Error::InvalidValue("data equivariance error needs n >= 1".into()));
    }
    let x = DMatrix::from_columns(&cols);
    equivariance_defect(
        |x| task.label_columns(x),
        &x,
        &task.rep_in(),
        &task.rep_out(),
        group,
        n_g,
        &mut rng,
    )
}
