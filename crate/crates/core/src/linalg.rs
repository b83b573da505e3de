use faer::Mat;
use nalgebra::{Matrix4, Matrix5, Vector4};

use crate::model::C64;
use crate::{Error, Result};

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending, eigenvectors as
/// columns.
pub(crate) fn hermitian_eigen(h: &Mat<C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let evd = h
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let vals: Vec<f64> = (0..h.nrows()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
pub(crate) fn general_eigen(m: &Mat<C64>) -> Result<(Vec<C64>, Mat<C64>)> {
    let evd = m.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let vals: Vec<C64> = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

pub(crate) fn mat_vec(m: &Mat<C64>, v: &[C64]) -> Vec<C64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub(crate) fn norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn to_m4(m: &[[C64; 4]; 4]) -> Matrix4<C64> {
    Matrix4::from_fn(|i, j| m[i][j])
}

/// Solve the 4×4 system `m x = b` by LU with partial pivoting.
pub(crate) fn solve4(m: &[[C64; 4]; 4], b: [C64; 4]) -> Option<[C64; 4]> {
    let x = to_m4(m).lu().solve(&Vector4::from(b))?;
    let out = [x[0], x[1], x[2], x[3]];
    out.iter().all(|c| c.re.is_finite() && c.im.is_finite()).then_some(out)
}

/// Exact step of the driven linear system `ẋ = -i m x + f` over time `h`,
/// computed from the exponential of the augmented 5×5 generator (valid for
/// singular `m`).
pub(crate) fn driven_linear_step(m: &[[C64; 4]; 4], f: [C64; 4], x: [C64; 4], h: f64) -> [C64; 4] {
    let mi = C64::new(0.0, -h);
    let g = Matrix5::from_fn(|i, j| match (i < 4, j < 4) {
        (true, true) => mi * m[i][j],
        (true, false) => f[i] * h,
        _ => C64::new(0.0, 0.0),
    });
    let e = g.exp();
    let mut out = [C64::new(0.0, 0.0); 4];
    for (i, o) in out.iter_mut().enumerate() {
        *o = e[(i, 4)] + (0..4).map(|j| e[(i, j)] * x[j]).sum::<C64>();
    }
    out
}

/// `(e^z - 1)/z`, accurate near zero.
pub(crate) fn phi1(z: C64) -> C64 {
    if z.norm() < 1e-5 {
        C64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0
    } else {
        (z.exp() - 1.0) / z
    }
}
