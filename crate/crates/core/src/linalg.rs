//! Small dense linear-algebra and rotation helpers shared across modules.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use std::f64::consts::PI;

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_TOL: f64 = 1e-9;

/// Wraps an angle to `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = a - two_pi * ((a + PI) / two_pi).floor();
    // floor rounding can land exactly on +pi
    if w >= PI {
        w - two_pi
    } else {
        w
    }
}

/// Signed shortest difference `b - a` between two angles.
pub fn angle_diff(b: f64, a: f64) -> f64 {
    wrap_angle(b - a)
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`skew`], reading the skew-symmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rodrigues exponential on SO(3).
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let th2 = w.norm_squared();
    let k = skew(w);
    let (a, b) = if th2 < 1e-8 {
        (1.0 - th2 / 6.0 + th2 * th2 / 120.0, 0.5 - th2 / 24.0 + th2 * th2 / 720.0)
    } else {
        let th = th2.sqrt();
        (th.sin() / th, (1.0 - th.cos()) / th2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Logarithm on SO(3), valid away from rotations by pi.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let th = c.acos();
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if th < 1e-6 {
        v * (0.5 + th * th / 12.0)
    } else {
        v * (th / (2.0 * th.sin()))
    }
}

/// Inverse right Jacobian of SO(3): maps body rate to the rate of the
/// exponential coordinates `theta` in `R = R0 * exp(theta)`.
pub fn so3_right_jacobian_inv(theta: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
    let th2 = theta.norm_squared();
    let c = if th2 < 1e-6 {
        1.0 / 12.0 + th2 / 720.0
    } else {
        let th = th2.sqrt();
        1.0 / th2 - (1.0 + th.cos()) / (2.0 * th * th.sin())
    };
    let tw = theta.cross(w);
    w + tw * 0.5 + theta.cross(&tw) * c
}

/// Projects `r` back onto SO(3) (polar decomposition via SVD).
pub fn reorthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * vt;
    if out.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        out = u2 * vt;
    }
    out
}

/// Numerical rank with a relative singular-value cutoff.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis (columns) of the column span of `m`.
pub fn column_span(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    // SVD of a wide matrix only returns min(n, k) columns of U, which is enough.
    let svd = m.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > rel_tol * smax)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])])
}

/// Orthonormal basis of the right nullspace of `m`, i.e. `{x : m x = 0}`.
pub fn nullspace(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to square so the SVD yields a full V.
    let rows = m.nrows().max(n);
    let mut sq = DMatrix::zeros(rows, n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let null: Vec<usize> = (0..n)
        .filter(|&i| smax == 0.0 || svd.singular_values[i] <= rel_tol * smax)
        .collect();
    DMatrix::from_fn(n, null.len(), |r, c| vt[(null[c], r)])
}

/// Modified Gram-Schmidt on columns, dropping dependent ones.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        for c in &cols {
            let d = c.dot(&v);
            v -= c * d;
        }
        let nv = v.norm();
        if nv > 1e-12 {
            cols.push(v / nv);
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Stacks `cols` side by side; `nrows x 0` when there are none.
pub fn hstack(nrows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(nrows, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

/// Largest principal-angle sine between the column spans of `a` and `b`.
///
/// Spans of different dimension return 1.
pub fn subspace_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = column_span(a, RANK_TOL);
    let qb = column_span(b, RANK_TOL);
    if qa.ncols() != qb.ncols() {
        return 1.0;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    let resid = &qa - &qb * (qb.transpose() * &qa);
    let s1 = resid.singular_values().iter().cloned().fold(0.0, f64::max);
    let resid2 = &qb - &qa * (qa.transpose() * &qb);
    let s2 = resid2.singular_values().iter().cloned().fold(0.0, f64::max);
    s1.max(s2)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Weights of the 5-point first-derivative stencil at offsets -2h..2h.
pub const D1_5: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
/// Weights of the 5-point second-derivative stencil at offsets -2h..2h.
pub const D2_5: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

/// 5-point first derivative of a vector-valued function of one variable.
pub fn five_point_derivative<F>(f: F, h: f64) -> DVector<f64>
where
    F: Fn(f64) -> DVector<f64>,
{
    let mut acc: Option<DVector<f64>> = None;
    for (k, w) in D1_5.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let v = f((k as f64 - 2.0) * h) * *w;
        acc = Some(match acc {
            Some(a) => a + v,
            None => v,
        });
    }
    acc.unwrap() / h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_relative_eq!(wrap_angle(3.0 * PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert!(wrap_angle(-PI) == -PI);
    }

    #[test]
    fn exp_log_roundtrip() {
        let w = Vector3::new(0.3, -1.2, 0.7);
        let r = so3_exp(&w);
        assert_relative_eq!((r.transpose() * r), Matrix3::identity(), epsilon = 1e-14);
        assert_relative_eq!(so3_log(&r), w, epsilon = 1e-12);
    }

    #[test]
    fn right_jacobian_inverse_matches_finite_difference() {
        // d/dt log(exp(theta) exp(t w)) at t = 0
        let theta = Vector3::new(0.4, 0.9, -0.5);
        let w = Vector3::new(-0.2, 0.3, 1.1);
        let h = 1e-5;
        let r0 = so3_exp(&theta);
        let fd = (so3_log(&(r0 * so3_exp(&(w * h)))) - so3_log(&(r0 * so3_exp(&(w * -h))))) / (2.0 * h);
        assert_relative_eq!(so3_right_jacobian_inv(&theta, &w), fd, epsilon = 1e-8);
    }

    #[test]
    fn nullspace_and_span() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.0]);
        let n = nullspace(&m, RANK_TOL);
        assert_eq!(n.ncols(), 1);
        assert!((&m * &n).norm() < 1e-14);
        assert_eq!(rank(&m, RANK_TOL), 2);
        let a = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 1, &[-2.0, -2.0, 0.0]);
        assert!(subspace_sine(&a, &b) < 1e-15);
    }
}
