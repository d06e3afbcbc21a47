//! Small dense helpers on top of nalgebra: Kronecker products, the matrix
//! exponential, and SVD null spaces.

use nalgebra::DMatrix;

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// `exp(a)` by scaling and squaring with a Taylor series evaluated to
/// double precision.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = a.norm();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Orthonormal basis (as columns) of the null space of `c`, keeping right
/// singular vectors whose singular value is below `rel_tol * sigma_max`.
///
/// A matrix with no rows, or an all-zero one, has the full space as null
/// space.
pub fn null_space(c: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = c.ncols();
    if c.nrows() == 0 || n == 0 {
        return DMatrix::identity(n, n);
    }
    // Thin SVD only yields min(rows, cols) right vectors; pad so V is square.
    let padded = if c.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
        p
    } else {
        c.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return DMatrix::identity(n, n);
    }
    let cutoff = rel_tol * sigma_max;
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < cutoff)
        .map(|(i, _)| i)
        .collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (col, &row) in keep.iter().enumerate() {
        for k in 0..n {
            out[(k, col)] = v_t[(row, k)];
        }
    }
    out
}

/// Numerical rank with the same relative cutoff as [`null_space`].
pub fn rank(c: &DMatrix<f64>, rel_tol: f64) -> usize {
    if c.nrows() == 0 || c.ncols() == 0 {
        return 0;
    }
    let sv = c.singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s >= rel_tol * sigma_max).count()
}

/// Stack matrices with equal column counts vertically.
pub fn vstack(blocks: &[DMatrix<f64>], ncols: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, ncols);
    let mut r = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), ncols);
        out.view_mut((r, 0), (b.nrows(), ncols)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Spectral norm via the largest singular value.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().cloned().fold(0.0, f64::max)
}
