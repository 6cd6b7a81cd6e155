//! Pose parameterization, rigid transforms and the pose metrics.
//!
//! Poses are `[x, y, z, alpha, beta, gamma]` with translations in millimeters
//! and Euler angles in degrees. The rotation is the intrinsic Z-Y-X
//! composition `R = Rz(gamma) * Ry(beta) * Rx(alpha)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `|cos(beta)|` the Euler extraction refuses to answer.
pub const GIMBAL_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose6 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Pose6 {
    pub const IDENTITY: Pose6 = Pose6 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        Pose6 {
            x,
            y,
            z,
            alpha,
            beta,
            gamma,
        }
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Pose6::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.alpha, self.beta, self.gamma]
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn to_matrix(&self) -> HomTransform {
        pose_to_matrix(self)
    }

    /// CSV row `x,y,z,alpha,beta,gamma` with 17 significant digits.
    pub fn to_csv_row(&self) -> String {
        format_row(&self.to_array())
    }
}

impl FromStr for Pose6 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals = parse_row(s)?;
        if vals.len() != 6 {
            return Err(Error::Parse(format!(
                "pose row needs 6 fields, found {}",
                vals.len()
            )));
        }
        Ok(Pose6::from_array([
            vals[0], vals[1], vals[2], vals[3], vals[4], vals[5],
        ]))
    }
}

impl fmt::Display for Pose6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.4}, {:.4}, {:.4} mm; {:.4}, {:.4}, {:.4} deg)",
            self.x, self.y, self.z, self.alpha, self.beta, self.gamma
        )
    }
}

/// Shortest-roundtrip is not used on purpose: rows always carry exactly 17
/// significant digits so files are byte-stable across platforms.
pub fn format_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

pub fn format_row(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| format_f64(*v))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_row(s: &str) -> Result<Vec<f64>> {
    s.trim()
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad number {:?}: {}", f.trim(), e)))
        })
        .collect()
}

/// Rigid transform; rotation block plus translation in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for HomTransform {
    fn default() -> Self {
        HomTransform::identity()
    }
}

impl HomTransform {
    pub fn identity() -> Self {
        HomTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// The caller is responsible for `rotation` being orthonormal.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        HomTransform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        HomTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Reads the rotation and translation blocks; the bottom row is ignored.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        HomTransform {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    pub fn compose(&self, other: &HomTransform) -> HomTransform {
        compose(self, other)
    }

    pub fn inverse(&self) -> HomTransform {
        inverse(self)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_pose(&self) -> Result<Pose6> {
        matrix_to_pose(self)
    }
}

pub fn rot_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn pose_to_matrix(p: &Pose6) -> HomTransform {
    HomTransform {
        rotation: rot_z(p.gamma) * rot_y(p.beta) * rot_x(p.alpha),
        translation: p.translation(),
    }
}

pub fn matrix_to_pose(t: &HomTransform) -> Result<Pose6> {
    let r = &t.rotation;
    let cos_beta = r[(0, 0)].hypot(r[(1, 0)]);
    if cos_beta < GIMBAL_EPS {
        return Err(Error::GimbalLock { cos_beta });
    }
    let beta = (-r[(2, 0)]).atan2(cos_beta);
    let alpha = r[(2, 1)].atan2(r[(2, 2)]);
    let gamma = r[(1, 0)].atan2(r[(0, 0)]);
    Ok(Pose6 {
        x: t.translation.x,
        y: t.translation.y,
        z: t.translation.z,
        alpha: alpha.to_degrees(),
        beta: beta.to_degrees(),
        gamma: gamma.to_degrees(),
    })
}

/// Differential of `matrix_to_pose` at `t` along the matrix direction `dt`.
///
/// Only the upper 3x4 block of `dt` is read.
pub fn pose_differential(t: &HomTransform, dt: &Matrix4<f64>) -> Result<[f64; 6]> {
    let r = &t.rotation;
    let cb2 = r[(0, 0)] * r[(0, 0)] + r[(1, 0)] * r[(1, 0)];
    if cb2.sqrt() < GIMBAL_EPS {
        return Err(Error::GimbalLock {
            cos_beta: cb2.sqrt(),
        });
    }
    let na = r[(2, 1)] * r[(2, 1)] + r[(2, 2)] * r[(2, 2)];
    let dalpha = (r[(2, 2)] * dt[(2, 1)] - r[(2, 1)] * dt[(2, 2)]) / na;
    // beta = atan2(-r20, sqrt(r00^2 + r10^2)); r20^2 + cb2 = 1 on SO(3).
    let cb = cb2.sqrt();
    let dcb = (r[(0, 0)] * dt[(0, 0)] + r[(1, 0)] * dt[(1, 0)]) / cb;
    let nb = r[(2, 0)] * r[(2, 0)] + cb2;
    let dbeta = (-dt[(2, 0)] * cb + r[(2, 0)] * dcb) / nb;
    let dgamma = (r[(0, 0)] * dt[(1, 0)] - r[(1, 0)] * dt[(0, 0)]) / cb2;
    Ok([
        dt[(0, 3)],
        dt[(1, 3)],
        dt[(2, 3)],
        dalpha.to_degrees(),
        dbeta.to_degrees(),
        dgamma.to_degrees(),
    ])
}

pub fn compose(a: &HomTransform, b: &HomTransform) -> HomTransform {
    HomTransform {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn inverse(t: &HomTransform) -> HomTransform {
    let rt = t.rotation.transpose();
    HomTransform {
        rotation: rt,
        translation: -(rt * t.translation),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistancePair {
    /// Millimeters.
    pub positional: f64,
    /// Degrees.
    pub rotational: f64,
}

impl DistancePair {
    pub fn total(&self) -> f64 {
        self.positional + self.rotational
    }
}

pub fn dist_sq_r6(a: &Pose6, b: &Pose6) -> f64 {
    let (a, b) = (a.to_array(), b.to_array());
    let mut s = 0.0;
    for k in 0..6 {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

/// Euclidean distance in R^6 with mm and degrees weighted 1:1.
pub fn dist_l2_r6(a: &Pose6, b: &Pose6) -> f64 {
    dist_sq_r6(a, b).sqrt()
}

pub fn dist_l1_split(a: &Pose6, b: &Pose6) -> DistancePair {
    DistancePair {
        positional: (a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs(),
        rotational: (a.alpha - b.alpha).abs()
            + (a.beta - b.beta).abs()
            + (a.gamma - b.gamma).abs(),
    }
}

/// Wraps an angle difference into (-180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}
