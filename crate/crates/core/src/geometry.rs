//! Planar angle helpers and quaternion/yaw conversion. Quaternions are stored
//! in `(x, y, z, w)` order throughout the crate.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

pub type Quaternion = [f64; 4];

#[derive(Debug, Clone, Copy, Error, PartialEq)]
#[error("quaternion has zero norm")]
pub struct ZeroQuaternion;

/// Wraps an angle to `(-pi, pi]`; `pi` itself stays `pi`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Unit quaternion for a rotation of `yaw` about +z.
pub fn yaw_to_quaternion(yaw: f64) -> Quaternion {
    let (s, c) = (yaw * 0.5).sin_cos();
    [0.0, 0.0, s, c]
}

/// Heading (rotation about z) of a quaternion. Inputs that are not unit length
/// are normalized first.
pub fn quaternion_to_yaw(q: Quaternion) -> Result<f64, ZeroQuaternion> {
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return Err(ZeroQuaternion);
    }
    let [x, y, z, w] = if (norm - 1.0).abs() > 1e-6 {
        q.map(|c| c / norm)
    } else {
        q
    };
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    Ok(wrap_angle(yaw))
}
