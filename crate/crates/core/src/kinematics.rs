//! Classic (distal) Denavit-Hartenberg forward kinematics with a uniform
//! link strain and per-joint encoder biases.
//!
//! A row contributes `Rz(theta) * Tz((1+r) d) * Tx((1+r) a) * Rx(alpha)` where
//! `theta = q_measured - b + theta_offset`. Twists and offsets are angles and
//! do not dilate.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Matrix6xX, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{compose, pose_differential, HomTransform, Pose6};

/// Sanity bound on |r|.
pub const MAX_STRAIN: f64 = 0.5;
/// Sanity bound on |b_i| in degrees.
pub const MAX_BIAS_DEG: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    /// Link length (mm).
    pub a: f64,
    /// Link twist (deg).
    pub alpha: f64,
    /// Link offset (mm).
    pub d: f64,
    /// Joint angle offset (deg).
    pub theta: f64,
}

impl DhRow {
    pub fn new(a: f64, alpha: f64, d: f64, theta: f64) -> Self {
        DhRow { a, alpha, d, theta }
    }

    fn is_finite(&self) -> bool {
        self.a.is_finite() && self.alpha.is_finite() && self.d.is_finite() && self.theta.is_finite()
    }

    /// Link transform for joint angle `theta_deg` (offset already applied)
    /// and length scale `s = 1 + r`.
    fn transform(&self, theta_deg: f64, s: f64) -> HomTransform {
        let (st, ct) = theta_deg.to_radians().sin_cos();
        let (sa, ca) = self.alpha.to_radians().sin_cos();
        let rot = Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca);
        let t = Vector3::new(s * self.a * ct, s * self.a * st, s * self.d);
        HomTransform::from_parts(rot, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainFile", into = "ChainFile")]
pub struct KinematicChain {
    rows: Vec<DhRow>,
}

#[derive(Serialize, Deserialize)]
struct ChainFile {
    rows: Vec<DhRow>,
}

impl TryFrom<ChainFile> for KinematicChain {
    type Error = Error;

    fn try_from(f: ChainFile) -> Result<Self> {
        KinematicChain::new(f.rows)
    }
}

impl From<KinematicChain> for ChainFile {
    fn from(c: KinematicChain) -> Self {
        ChainFile { rows: c.rows }
    }
}

impl KinematicChain {
    pub fn new(rows: Vec<DhRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("chain needs at least one joint".into()));
        }
        if let Some(i) = rows.iter().position(|r| !r.is_finite()) {
            return Err(Error::Validation(format!("row {} has a non-finite entry", i)));
        }
        Ok(KinematicChain { rows })
    }

    /// 7-DOF arm with the iiwa-14 link layout: d = 360/0/420/0/400/0/126 mm,
    /// all a = 0, twists -90/90/90/-90/-90/90/0.
    pub fn reference() -> Self {
        let rows = vec![
            DhRow::new(0.0, -90.0, 360.0, 0.0),
            DhRow::new(0.0, 90.0, 0.0, 0.0),
            DhRow::new(0.0, 90.0, 420.0, 0.0),
            DhRow::new(0.0, -90.0, 0.0, 0.0),
            DhRow::new(0.0, -90.0, 400.0, 0.0),
            DhRow::new(0.0, 90.0, 0.0, 0.0),
            DhRow::new(0.0, 0.0, 126.0, 0.0),
        ];
        KinematicChain { rows }
    }

    pub fn rows(&self) -> &[DhRow] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Sum of |a| + |d| over rows, an upper bound on the reach.
    pub fn max_reach(&self) -> f64 {
        self.rows.iter().map(|r| r.a.abs() + r.d.abs()).sum()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| {
            // serde wraps our validation message; surface it as such.
            if e.is_data() && e.to_string().contains("validation error") {
                Error::Validation(e.to_string())
            } else {
                Error::Parse(e.to_string())
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain serializes")
    }
}

/// Reads a chain config `{ "rows": [{"a":..,"alpha":..,"d":..,"theta":..}, ..] }`.
pub fn load_chain(path: &Path) -> Result<KinematicChain> {
    crate::io::require(path)?;
    let text = std::fs::read_to_string(path)?;
    KinematicChain::from_json(&text)
}

/// Estimated parameters: strain `r` and encoder biases `b` (deg).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicParams {
    pub strain: f64,
    pub bias: Vec<f64>,
}

impl KinematicParams {
    pub fn new(strain: f64, bias: Vec<f64>) -> Result<Self> {
        let p = KinematicParams { strain, bias };
        p.validate()?;
        Ok(p)
    }

    pub fn zero(n: usize) -> Self {
        KinematicParams {
            strain: 0.0,
            bias: vec![0.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.strain.is_finite() || self.strain.abs() >= MAX_STRAIN {
            return Err(Error::Validation(format!("strain {} out of range", self.strain)));
        }
        if let Some(b) = self
            .bias
            .iter()
            .find(|b| !b.is_finite() || b.abs() >= MAX_BIAS_DEG)
        {
            return Err(Error::Validation(format!("bias {} out of range", b)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.bias.len()
    }

    /// Flattened `[r, b_1, .., b_n]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.bias.len() + 1);
        v.push(self.strain);
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        KinematicParams {
            strain: v[0],
            bias: v[1..].to_vec(),
        }
    }
}

/// Joint angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        JointVector(v)
    }
}

fn check_dims(chain: &KinematicChain, q: &[f64], params: &KinematicParams) -> Result<()> {
    if q.len() != chain.n() {
        return Err(Error::DimensionMismatch {
            expected: chain.n(),
            actual: q.len(),
        });
    }
    if params.bias.len() != chain.n() {
        return Err(Error::DimensionMismatch {
            expected: chain.n(),
            actual: params.bias.len(),
        });
    }
    Ok(())
}

fn link_transforms(chain: &KinematicChain, q: &[f64], params: &KinematicParams) -> Vec<HomTransform> {
    let s = 1.0 + params.strain;
    chain
        .rows
        .iter()
        .zip(q.iter().zip(&params.bias))
        .map(|(row, (qi, bi))| row.transform(qi - bi + row.theta, s))
        .collect()
}

/// Base-to-flange transform.
pub fn forward_kinematics(
    chain: &KinematicChain,
    q_measured: &[f64],
    params: &KinematicParams,
) -> Result<HomTransform> {
    check_dims(chain, q_measured, params)?;
    Ok(link_transforms(chain, q_measured, params)
        .iter()
        .fold(HomTransform::identity(), |acc, a| compose(&acc, a)))
}

/// Flange transform and its matrix derivatives with respect to
/// `[r, b_1, .., b_n]`, in that order.
pub fn fk_with_derivatives(
    chain: &KinematicChain,
    q_measured: &[f64],
    params: &KinematicParams,
) -> Result<(HomTransform, Vec<Matrix4<f64>>)> {
    check_dims(chain, q_measured, params)?;
    let links = link_transforms(chain, q_measured, params);
    let n = links.len();

    // prefix[i] = A_1 .. A_i, suffix[i] = A_{i+1} .. A_n (0-based rows).
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Matrix4::<f64>::identity());
    for a in &links {
        let next = prefix.last().unwrap() * a.to_matrix();
        prefix.push(next);
    }
    let mut suffix = vec![Matrix4::<f64>::identity(); n + 1];
    for i in (0..n).rev() {
        suffix[i] = links[i].to_matrix() * suffix[i + 1];
    }

    let mut gen_z = Matrix4::<f64>::zeros();
    gen_z[(0, 1)] = -1.0;
    gen_z[(1, 0)] = 1.0;
    let deg = std::f64::consts::PI / 180.0;

    let mut d_strain = Matrix4::<f64>::zeros();
    let mut derivs = Vec::with_capacity(n + 1);
    derivs.push(Matrix4::zeros());
    for (i, row) in chain.rows.iter().enumerate() {
        // d A_i / d r: translation-only, Rz(theta) * (a, 0, d).
        let theta = q_measured[i] - params.bias[i] + row.theta;
        let (st, ct) = theta.to_radians().sin_cos();
        let mut da = Matrix4::<f64>::zeros();
        da[(0, 3)] = row.a * ct;
        da[(1, 3)] = row.a * st;
        da[(2, 3)] = row.d;
        d_strain += prefix[i] * da * suffix[i + 1];

        // d A_i / d theta = G_z A_i, and d theta / d b_i = -1 (deg).
        derivs.push(-deg * (prefix[i] * gen_z * suffix[i]));
    }
    derivs[0] = d_strain;
    Ok((HomTransform::from_matrix(&prefix[n]), derivs))
}

/// Jacobian of the flange `Pose6` with respect to `[r, b_1, .., b_n]`.
///
/// Rows follow `[x, y, z, alpha, beta, gamma]` (mm, deg); the strain column
/// is per unit strain and bias columns are per degree.
pub fn fk_gradient(
    chain: &KinematicChain,
    q_measured: &[f64],
    params: &KinematicParams,
) -> Result<(Pose6, Matrix6xX<f64>)> {
    let (t, derivs) = fk_with_derivatives(chain, q_measured, params)?;
    let pose = t.to_pose()?;
    let mut jac = Matrix6xX::zeros(derivs.len());
    for (j, d) in derivs.iter().enumerate() {
        let col = pose_differential(&t, d)?;
        for k in 0..6 {
            jac[(k, j)] = col[k];
        }
    }
    Ok((pose, jac))
}
