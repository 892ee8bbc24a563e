//! Rotation math for exponential-map pose channels: conversion to unit
//! quaternions (with the analytic Jacobian used to backpropagate through the
//! quaternion transformation layer), rotation matrices, and intrinsic Z-Y-X
//! Euler angles.
//!
//! Every map that divides by the rotation angle carries a series branch for
//! small angles. The trig and series forms of each map are public so the
//! hand-off at [`SMALL_ANGLE_EPS`] can be checked directly.

use crate::error::{Error, Result};

/// Axis-angle (exponential map) rotation vector.
pub type Vec3 = [f64; 3];
/// Quaternion stored as `[w, x, y, z]`.
pub type Quat = [f64; 4];
/// Row-major 3x3 rotation matrix.
pub type Mat3 = [[f64; 3]; 3];
/// Jacobian of [`expmap_to_quat`]: four rows (quaternion components) by
/// three columns (rotation-vector components).
pub type QuatJacobian = [[f64; 3]; 4];

/// Below this rotation angle (radians) the series branches take over.
pub const SMALL_ANGLE_EPS: f64 = 1e-6;

/// Tolerance for treating a quaternion as unit-norm.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// |R31| must be within this of 1 to trigger the gimbal-lock branch.
const GIMBAL_LOCK_TOL: f64 = 1e-9;

fn check_finite3(e: &Vec3) -> Result<()> {
    if e.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite rotation vector {e:?}")))
    }
}

/// Unit quaternion of the rotation vector `e`:
/// `w = cos(θ/2)`, vector part `= sin(θ/2)/θ · e` with `θ = ‖e‖`.
pub fn expmap_to_quat(e: &Vec3) -> Result<Quat> {
    check_finite3(e)?;
    let theta = norm3(e);
    Ok(if theta < SMALL_ANGLE_EPS {
        expmap_to_quat_series(e)
    } else {
        expmap_to_quat_trig(e)
    })
}

/// Closed trig form of [`expmap_to_quat`]; accurate away from `θ = 0`.
pub fn expmap_to_quat_trig(e: &Vec3) -> Quat {
    let theta = norm3(e);
    let k = (0.5 * theta).sin() / theta;
    [(0.5 * theta).cos(), k * e[0], k * e[1], k * e[2]]
}

/// Second-order series form of [`expmap_to_quat`] for small `θ`:
/// `cos(θ/2) ≈ 1 − θ²/8`, `sin(θ/2)/θ ≈ 1/2 − θ²/48`.
pub fn expmap_to_quat_series(e: &Vec3) -> Quat {
    let t2 = dot3(e, e);
    let k = 0.5 - t2 / 48.0;
    [1.0 - t2 / 8.0, k * e[0], k * e[1], k * e[2]]
}

/// Analytic Jacobian of [`expmap_to_quat`].
///
/// With `θ = ‖e‖` and `ê = e/θ`:
/// row 1 is `−(1/2)·sin(θ/2)·êᵀ`; rows 2-4 are
/// `(1/2)·cos(θ/2)·êêᵀ + (sin(θ/2)/θ)·(I − êêᵀ)`.
pub fn expmap_to_quat_jacobian(e: &Vec3) -> Result<QuatJacobian> {
    check_finite3(e)?;
    let theta = norm3(e);
    Ok(if theta < SMALL_ANGLE_EPS {
        quat_jacobian_series(e)
    } else {
        quat_jacobian_trig(e)
    })
}

/// Closed trig form of [`expmap_to_quat_jacobian`]; accurate away from `θ = 0`.
pub fn quat_jacobian_trig(e: &Vec3) -> QuatJacobian {
    let theta = norm3(e);
    let unit = [e[0] / theta, e[1] / theta, e[2] / theta];
    let half_sin = (0.5 * theta).sin();
    let half_cos = (0.5 * theta).cos();
    let sinc = half_sin / theta;

    let mut j = [[0.0; 3]; 4];
    for c in 0..3 {
        j[0][c] = -0.5 * half_sin * unit[c];
    }
    for r in 0..3 {
        for c in 0..3 {
            let outer = unit[r] * unit[c];
            let eye = if r == c { 1.0 } else { 0.0 };
            j[r + 1][c] = 0.5 * half_cos * outer + sinc * (eye - outer);
        }
    }
    j
}

/// Second-order series form of [`expmap_to_quat_jacobian`] for small `θ`:
/// row 1 `= −(1/4)·(1 − θ²/24)·eᵀ`, rows 2-4
/// `= (1/2 − θ²/48)·I − eeᵀ/24`. At `e = 0` this is exactly row 1 zero and
/// `(1/2)·I` below, the limit of the trig form.
pub fn quat_jacobian_series(e: &Vec3) -> QuatJacobian {
    let t2 = dot3(e, e);
    let row1 = -0.25 * (1.0 - t2 / 24.0);
    let diag = 0.5 - t2 / 48.0;

    let mut j = [[0.0; 3]; 4];
    for c in 0..3 {
        j[0][c] = row1 * e[c];
    }
    for r in 0..3 {
        for c in 0..3 {
            let eye = if r == c { diag } else { 0.0 };
            j[r + 1][c] = eye - e[r] * e[c] / 24.0;
        }
    }
    j
}

/// Rodrigues rotation matrix of `e`: `R = I + sin(θ)/θ·K + (1−cos θ)/θ²·K²`
/// with `K = hat(e)`.
pub fn expmap_to_rotmat(e: &Vec3) -> Result<Mat3> {
    check_finite3(e)?;
    let theta = norm3(e);
    // Series: sin(θ)/θ ≈ 1 − θ²/6, (1 − cos θ)/θ² ≈ 1/2 − θ²/24.
    let (a, b) = if theta < SMALL_ANGLE_EPS {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    let k = hat(e);
    let k2 = mat3_mul(&k, &k);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let eye = if i == j { 1.0 } else { 0.0 };
            r[i][j] = eye + a * k[i][j] + b * k2[i][j];
        }
    }
    Ok(r)
}

/// Rotation matrix of a unit quaternion `[w, x, y, z]`.
///
/// Errors if `‖q‖` deviates from 1 by more than [`UNIT_NORM_TOL`].
pub fn quat_to_rotmat(q: &Quat) -> Result<Mat3> {
    if !q.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite quaternion {q:?}")));
    }
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::InvalidInput(format!(
            "quaternion norm {norm} is not within {UNIT_NORM_TOL} of 1"
        )));
    }
    let [w, x, y, z] = *q;
    Ok([
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ])
}

/// Intrinsic Z-Y-X Euler angles of the rotation `e`, returned in application
/// order `[z, y, x]`, each wrapped to `(−π, π]`.
///
/// At gimbal lock (`|R31| = 1` within 1e-9, i.e. pitch `±π/2`) the x angle is
/// set to 0 and the z angle absorbs the remaining rotation.
pub fn expmap_to_euler(e: &Vec3) -> Result<Vec3> {
    let r = expmap_to_rotmat(e)?;
    let r31 = r[2][0];
    if 1.0 - r31.abs() <= GIMBAL_LOCK_TOL {
        let y = if r31 < 0.0 {
            std::f64::consts::FRAC_PI_2
        } else {
            -std::f64::consts::FRAC_PI_2
        };
        let z = (-r[0][1]).atan2(r[1][1]);
        Ok([wrap_angle(z), y, 0.0])
    } else {
        let y = (-r31).clamp(-1.0, 1.0).asin();
        let z = r[1][0].atan2(r[0][0]);
        let x = r[2][1].atan2(r[2][2]);
        Ok([wrap_angle(z), y, wrap_angle(x)])
    }
}

/// Wrap an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let two_pi = 2.0 * PI;
    let mut w = a % two_pi;
    if w < 0.0 {
        w += two_pi;
    }
    // w ∈ [0, 2π): fold the upper half to the negative side.
    if w > PI {
        w - two_pi
    } else {
        w
    }
}

/// Quaternion transformation of a whole pose: each consecutive 3-channel
/// exponential map becomes 4 quaternion channels, concatenated in order.
pub fn pose_to_quats(pose: &[f64]) -> Result<Vec<f64>> {
    if pose.len() % 3 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "pose length {} is not a multiple of 3",
            pose.len()
        )));
    }
    let mut out = Vec::with_capacity(pose.len() / 3 * 4);
    for joint in pose.chunks_exact(3) {
        let q = expmap_to_quat(&[joint[0], joint[1], joint[2]])?;
        out.extend_from_slice(&q);
    }
    Ok(out)
}

/// Pull an upstream gradient (one value per quaternion channel) back through
/// [`pose_to_quats`]: per joint, `grad = Jᵀ·upstream`.
pub fn pose_to_quats_backward(pose: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    if pose.len() % 3 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "pose length {} is not a multiple of 3",
            pose.len()
        )));
    }
    if upstream.len() != pose.len() / 3 * 4 {
        return Err(Error::ShapeMismatch(format!(
            "upstream length {} does not match {} quaternion channels",
            upstream.len(),
            pose.len() / 3 * 4
        )));
    }
    let mut out = vec![0.0; pose.len()];
    for (i, joint) in pose.chunks_exact(3).enumerate() {
        let jac = expmap_to_quat_jacobian(&[joint[0], joint[1], joint[2]])?;
        let up = &upstream[i * 4..(i + 1) * 4];
        for c in 0..3 {
            let mut acc = 0.0;
            for r in 0..4 {
                acc += jac[r][c] * up[r];
            }
            out[i * 3 + c] = acc;
        }
    }
    Ok(out)
}

fn norm3(e: &Vec3) -> f64 {
    dot3(e, e).sqrt()
}

fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Skew-symmetric cross-product matrix.
fn hat(e: &Vec3) -> Mat3 {
    [
        [0.0, -e[2], e[1]],
        [e[2], 0.0, -e[0]],
        [-e[1], e[0], 0.0],
    ]
}

fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (k, bk) in b.iter().enumerate() {
                out[i][j] += a[i][k] * bk[j];
            }
        }
    }
    out
}
