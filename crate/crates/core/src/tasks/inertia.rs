//! Moment of inertia of five point masses, with axis-aligned perturbations.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{split_rng, Dataset, DatasetMeta, Split};
use crate::error::{Error, Result};
use crate::rep::Rep;

pub const N_PARTICLES: usize = 5;
pub const INPUT_DIM: usize = 4 * N_PARTICLES;
pub const OUTPUT_DIM: usize = 9;

pub fn input_rep() -> Rep {
    "5S+5V".parse().expect("static rep")
}

pub fn output_rep() -> Rep {
    Rep::tensor(2)
}

/// `Σ mᵢ (xᵢᵀxᵢ I − xᵢxᵢᵀ)`.
pub fn moment_of_inertia(masses: &[f64], positions: &[Vector3<f64>]) -> Matrix3<f64> {
    masses
        .iter()
        .zip(positions)
        .fold(Matrix3::zeros(), |acc, (&m, x)| {
            acc + (Matrix3::identity() * x.norm_squared() - x * x.transpose()) * m
        })
}

fn check_error_type(error_type: u8) -> Result<()> {
    if (1..=5).contains(&error_type) {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!(
            "inertia error type must be 1..5, got {error_type}"
        )))
    }
}

/// The unscaled perturbation added to `𝓘` for each error type.
pub fn perturbation(inertia: &Matrix3<f64>, error_type: u8) -> Result<Matrix3<f64>> {
    check_error_type(error_type)?;
    let proj = |axis: usize| {
        let mut p = Matrix3::zeros();
        p[(axis, axis)] = 1.0;
        p
    };
    Ok(match error_type {
        1 => Matrix3::zeros(),
        2 | 3 | 4 => -(inertia * proj(error_type as usize - 2)),
        _ => -(inertia * (proj(0) - proj(1) + proj(2))) * 0.3,
    })
}

/// Ground-truth target for one `5S+5V` input, as the row-major vec of the
/// perturbed inertia matrix.
pub fn label(input: &[f64], error_type: u8, error_scale: f64) -> Result<DVector<f64>> {
    if input.len() != INPUT_DIM {
        return Err(Error::DimensionMismatch {
            expected: INPUT_DIM,
            actual: input.len(),
        });
    }
    let (masses, rest) = input.split_at(N_PARTICLES);
    let positions: Vec<Vector3<f64>> = rest.chunks(3).map(Vector3::from_column_slice).collect();
    let inertia = moment_of_inertia(masses, &positions);
    let target = inertia + perturbation(&inertia, error_type)? * error_scale;
    Ok(DVector::from_iterator(9, target.transpose().iter().copied()))
}

pub fn softplus(s: f64) -> f64 {
    if s > 30.0 {
        s
    } else {
        s.exp().ln_1p()
    }
}

pub fn sample_input<R: Rng + ?Sized>(rng: &mut R) -> DVector<f64> {
    let mut x = DVector::zeros(INPUT_DIM);
    for i in 0..N_PARTICLES {
        x[i] = softplus(StandardNormal.sample(rng));
    }
    for i in N_PARTICLES..INPUT_DIM {
        x[i] = StandardNormal.sample(rng);
    }
    x
}

pub fn gen_inertia_split(
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
    let mut targets = DMatrix::zeros(n, OUTPUT_DIM);
    for r in 0..n {
        let x = sample_input(&mut rng);
        let y = label(x.as_slice(), error_type, error_scale)?;
        inputs.row_mut(r).copy_from(&x.transpose());
        targets.row_mut(r).copy_from(&y.transpose());
    }
    Ok(Dataset {
        inputs,
        targets,
        rep_in: input_rep(),
        rep_out: output_rep(),
        meta: DatasetMeta {
            task: "inertia".into(),
            error_type,
            error_scale,
            seed,
            split,
        },
    })
}

pub fn gen_inertia(n: usize, error_type: u8, error_scale: f64, seed: u64) -> Result<Dataset> {
    gen_inertia_split(n, error_type, error_scale, seed, Split::Train)
}
