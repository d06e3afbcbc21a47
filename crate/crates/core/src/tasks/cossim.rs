//! Average pairwise cosine similarity of three particles.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{split_rng, Dataset, DatasetMeta, Split};
use crate::error::{Error, Result};
use crate::rep::Rep;

pub const INPUT_DIM: usize = 9;
pub const MIN_NORM: f64 = 1e-12;
pub const RESAMPLE_NORM: f64 = 1e-6;
pub const MAX_RESAMPLES: usize = 1000;

pub fn input_rep() -> Rep {
    Rep::vectors(3)
}

pub fn output_rep() -> Rep {
    Rep::Scalar
}

fn points(input: &[f64]) -> [Vector3<f64>; 3] {
    [
        Vector3::from_column_slice(&input[0..3]),
        Vector3::from_column_slice(&input[3..6]),
        Vector3::from_column_slice(&input[6..9]),
    ]
}

pub fn avg_cos_sim(x1: &Vector3<f64>, x2: &Vector3<f64>, x3: &Vector3<f64>) -> Result<f64> {
    let (n1, n2, n3) = (x1.norm(), x2.norm(), x3.norm());
    if n1.min(n2).min(n3) <= MIN_NORM {
        return Err(Error::InvalidValue("cosine similarity of a zero vector".into()));
    }
    let cs = x1.dot(x2) / (n1 * n2) + x2.dot(x3) / (n2 * n3) + x1.dot(x3) / (n1 * n3);
    Ok(cs / 3.0)
}

fn axis_ratio(x: &[Vector3<f64>; 3]) -> Result<f64> {
    let num: f64 = x.iter().map(|v| v.x.abs()).sum();
    let den: f64 = x.iter().map(|v| v.y.abs() + v.z.abs()).sum();
    if den <= MIN_NORM {
        return Err(Error::InvalidValue("axis ratio with vanishing denominator".into()));
    }
    Ok(num / den)
}

fn check_error_type(error_type: u8) -> Result<()> {
    if (1..=4).contains(&error_type) {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!(
            "cossim error type must be 1..4, got {error_type}"
        )))
    }
}

pub fn perturbation(input: &[f64], error_type: u8) -> Result<f64> {
    check_error_type(error_type)?;
    let x = points(input);
    let mean_norm = || x.iter().map(|v| v.norm()).sum::<f64>() / 3.0;
    Ok(match error_type {
        1 => 0.0,
        2 => -mean_norm(),
        3 => -axis_ratio(&x)?,
        _ => -mean_norm() + axis_ratio(&x)?,
    })
}

pub fn label(input: &[f64], error_type: u8, error_scale: f64) -> Result<DVector<f64>> {
    if input.len() != INPUT_DIM {
        return Err(Error::DimensionMismatch {
            expected: INPUT_DIM,
            actual: input.len(),
        });
    }
    let [a, b, c] = points(input);
    let y = avg_cos_sim(&a, &b, &c)? + error_scale * perturbation(input, error_type)?;
    Ok(DVector::from_element(1, y))
}

/// Three standard normal vectors, redrawn while any is shorter than
/// [`RESAMPLE_NORM`].
pub fn sample_input<R: Rng + ?Sized>(rng: &mut R) -> Result<DVector<f64>> {
    for _ in 0..=MAX_RESAMPLES {
        let x = DVector::from_fn(INPUT_DIM, |_, _| StandardNormal.sample(rng));
        if x.as_slice().chunks(3).all(|v| Vector3::from_column_slice(v).norm() >= RESAMPLE_NORM) {
            return Ok(x);
        }
    }
    Err(Error::InvalidValue(format!(
        "no non-degenerate sample after {MAX_RESAMPLES} retries"
    )))
}

pub fn gen_cossim_split(
    n: usize,
    error_type: u8,
    error_scale: f64,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    check_error_type(error_type)?;
    if n == 0 {
        return Err(Error::InvalidValue("dataset size must be positive".into()));
    }
    let mut rng = split_rng(seed, split);
    let mut inputs = DMatrix::zeros(n, INPUT_DIM);
    let mut targets = DMatrix::zeros(n, 1);
    for r in 0..n {
        let x = sample_input(&mut rng)?;
        targets[(r, 0)] = label(x.as_slice(), error_type, error_scale)?[0];
        inputs.row_mut(r).copy_from(&x.transpose());
    }
    Ok(Dataset {
        inputs,
        targets,
        rep_in: input_rep(),
        rep_out: output_rep(),
        meta: DatasetMeta {
            task: "cossim".into(),
            error_type,
            error_scale,
            seed,
            split,
        },
    })
}

pub fn gen_cossim(n: usize, error_type: u8, seed: u64) -> Result<Dataset> {
    gen_cossim_split(n, error_type, 1.0, seed, Split::Train)
}
