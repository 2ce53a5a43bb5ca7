//! Rotation-group helpers: skew matrices, the SO(3) exponential and logarithm,
//! and the right Jacobian with its inverse.
//!
//! Rotation vectors are plain `Vector3<f64>` (axis times angle, radians) and
//! rotation matrices are `Matrix3<f64>`. Both closed forms switch to Taylor
//! series below a small-angle threshold where the closed form loses precision.

use nalgebra::{Matrix3, Vector3};

/// Rotation vector, axis × angle in radians.
pub type RotationVector = Vector3<f64>;
/// Proper orthonormal 3×3 matrix.
pub type RotationMatrix = Matrix3<f64>;

/// Below this angle `exp_map` uses its 4th-order series.
pub const EXP_SERIES_THRESHOLD: f64 = 1e-7;
/// Below this angle the Jacobians use their series expansions.
pub const JACOBIAN_SERIES_THRESHOLD: f64 = 1e-5;

/// Cross-product matrix: `skew(v) * w == v.cross(&w)`.
#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; reads the antisymmetric part of `m`.
#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// `exp(phi×)` by the Rodrigues formula.
pub fn exp_map(phi: &RotationVector) -> RotationMatrix {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    let k2 = k * k;
    let (a, b) = if theta < EXP_SERIES_THRESHOLD {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k2 * b
}

/// Principal logarithm of a rotation matrix, `|phi| <= pi`.
pub fn log_map(c: &RotationMatrix) -> RotationVector {
    let w = vee(c);
    let sin_theta = w.norm();
    let cos_theta = (c.trace() - 1.0) * 0.5;
    let theta = sin_theta.atan2(cos_theta);
    if theta < 1e-6 {
        return w * (1.0 + sin_theta * sin_theta / 6.0);
    }
    if theta < std::f64::consts::PI - 1e-3 {
        return w * (theta / sin_theta);
    }
    // near a half turn: (C + Cᵀ)/2 − cos θ I = (1 − cos θ) a aᵀ
    let b = (c + c.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
    let i = (0..3).max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)])).unwrap_or(0);
    let mut axis = b.column(i).normalize();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Right Jacobian of SO(3):
/// `sin(φ)/φ I + (1 − sin(φ)/φ) a aᵀ − (1 − cos φ)/φ (a×)`.
pub fn right_jacobian(phi: &RotationVector) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    if theta < JACOBIAN_SERIES_THRESHOLD {
        let k = skew(phi);
        return Matrix3::identity() - k * (0.5 - theta2 / 24.0) + k * k * (1.0 / 6.0 - theta2 / 120.0);
    }
    let a = phi / theta;
    let s = theta.sin() / theta;
    Matrix3::identity() * s + a * a.transpose() * (1.0 - s) - skew(&a) * ((1.0 - theta.cos()) / theta)
}

/// Inverse of [`right_jacobian`].
pub fn right_jacobian_inv(phi: &RotationVector) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    let c = if theta < JACOBIAN_SERIES_THRESHOLD {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() + k * 0.5 + k * k * c
}

/// Closest rotation matrix in the Frobenius sense (polar factor).
pub fn orthonormalize(c: &Matrix3<f64>) -> RotationMatrix {
    let svd = c.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// `‖CᵀC − I‖` max-abs plus `|det C − 1|`; zero for an exact rotation.
pub fn orthonormality_error(c: &Matrix3<f64>) -> f64 {
    let e = c.transpose() * c - Matrix3::identity();
    e.amax() + (c.determinant() - 1.0).abs()
}
