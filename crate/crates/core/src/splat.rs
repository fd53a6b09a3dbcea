//! Gaussian splat primitives: 14 values per splat laid out as
//! `mu[3], scale[3], rotation[4] (w, x, y, z), color[3], opacity`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPLAT_LEN: usize = 14;
const RECORD_BYTES: usize = SPLAT_LEN * 8;

/// Quaternions closer than this to unit norm are kept untouched.
pub const UNIT_TOL: f64 = 1e-9;
/// Quaternions within this distance of unit norm are renormalized.
pub const RENORM_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldViolation {
    pub field: &'static str,
    pub message: String,
}

impl FieldViolation {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplatFields")]
pub struct GaussianSplat {
    mu: [f64; 3],
    scale: [f64; 3],
    rotation: [f64; 4],
    color: [f64; 3],
    opacity: f64,
}

#[derive(Deserialize)]
struct SplatFields {
    mu: [f64; 3],
    scale: [f64; 3],
    rotation: [f64; 4],
    color: [f64; 3],
    opacity: f64,
}

impl TryFrom<SplatFields> for GaussianSplat {
    type Error = Error;

    fn try_from(f: SplatFields) -> Result<Self> {
        let mut raw = [0.0; SPLAT_LEN];
        raw[0..3].copy_from_slice(&f.mu);
        raw[3..6].copy_from_slice(&f.scale);
        raw[6..10].copy_from_slice(&f.rotation);
        raw[10..13].copy_from_slice(&f.color);
        raw[13] = f.opacity;
        validate_splat(&raw)
    }
}

impl GaussianSplat {
    pub fn mu(&self) -> [f64; 3] {
        self.mu
    }

    pub fn scale(&self) -> [f64; 3] {
        self.scale
    }

    /// Unit quaternion `(w, x, y, z)`.
    pub fn rotation(&self) -> [f64; 4] {
        self.rotation
    }

    pub fn color(&self) -> [f64; 3] {
        self.color
    }

    pub fn opacity(&self) -> f64 {
        self.opacity
    }

    pub fn to_raw(&self) -> [f64; SPLAT_LEN] {
        let mut raw = [0.0; SPLAT_LEN];
        raw[0..3].copy_from_slice(&self.mu);
        raw[3..6].copy_from_slice(&self.scale);
        raw[6..10].copy_from_slice(&self.rotation);
        raw[10..13].copy_from_slice(&self.color);
        raw[13] = self.opacity;
        raw
    }

    /// Same splat with its rotation pre-multiplied by `q`.
    pub fn rotated(&self, q: [f64; 4]) -> Result<Self> {
        let mut raw = self.to_raw();
        raw[6..10].copy_from_slice(&quat_mul(q, self.rotation));
        validate_splat(&raw)
    }
}

fn check_range(out: &mut Vec<FieldViolation>, field: &'static str, values: &[f64], lo: f64, hi: f64) {
    for (i, &v) in values.iter().enumerate() {
        if !(lo..=hi).contains(&v) {
            let at = if values.len() > 1 { format!("[{i}]") } else { String::new() };
            out.push(FieldViolation::new(field, format!("value{at} {v} outside [{lo}, {hi}]")));
        }
    }
}

/// Parses a raw 14-vector. Every violated field is reported; nothing is
/// clamped. A quaternion within `RENORM_TOL` of unit norm is renormalized.
pub fn validate_splat(raw: &[f64]) -> Result<GaussianSplat> {
    if raw.len() != SPLAT_LEN {
        return Err(Error::DimensionMismatch {
            context: "splat",
            expected: SPLAT_LEN,
            found: raw.len(),
        });
    }
    let mut bad = Vec::new();

    if raw[0..3].iter().any(|v| !v.is_finite()) {
        bad.push(FieldViolation::new("mu", "position must be finite"));
    }
    for (i, &s) in raw[3..6].iter().enumerate() {
        if !(s > 0.0 && s.is_finite()) {
            bad.push(FieldViolation::new("scale", format!("extent[{i}] = {s} must be positive and finite")));
        }
    }

    let mut rotation = [raw[6], raw[7], raw[8], raw[9]];
    let norm = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() {
        bad.push(FieldViolation::new("rotation", "quaternion must be finite"));
    } else if (norm - 1.0).abs() > RENORM_TOL {
        bad.push(FieldViolation::new("rotation", format!("quaternion norm {norm} is not unit")));
    } else if (norm - 1.0).abs() > UNIT_TOL {
        rotation.iter_mut().for_each(|v| *v /= norm);
    }

    check_range(&mut bad, "color", &raw[10..13], 0.0, 1.0);
    check_range(&mut bad, "opacity", &raw[13..14], 0.0, 1.0);

    if !bad.is_empty() {
        return Err(Error::InvalidSplat(bad));
    }
    Ok(GaussianSplat {
        mu: [raw[0], raw[1], raw[2]],
        scale: [raw[3], raw[4], raw[5]],
        rotation,
        color: [raw[10], raw[11], raw[12]],
        opacity: raw[13],
    })
}

/// Hamilton product `a ⊗ b`, both `(w, x, y, z)`.
pub fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [aw, ax, ay, az] = a;
    let [bw, bx, by, bz] = b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

/// Rotation matrix of `q / |q|`.
pub fn rotation_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n2: f64 = q.iter().map(|v| v * v).sum();
    let s = 2.0 / n2;
    let [w, x, y, z] = q;
    [
        [1.0 - s * (y * y + z * z), s * (x * y - w * z), s * (x * z + w * y)],
        [s * (x * y + w * z), 1.0 - s * (x * x + z * z), s * (y * z - w * x)],
        [s * (x * z - w * y), s * (y * z + w * x), 1.0 - s * (x * x + y * y)],
    ]
}

/// `Σ = R · diag(s²) · Rᵀ`.
pub fn covariance_of(splat: &GaussianSplat) -> [[f64; 3]; 3] {
    let r = rotation_matrix(splat.rotation);
    let s2 = splat.scale.map(|s| s * s);
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            sigma[i][j] = (0..3).map(|k| r[i][k] * s2[k] * r[j][k]).sum();
        }
    }
    sigma
}

pub fn encode_splats(splats: &[GaussianSplat]) -> Vec<u8> {
    let mut out = Vec::with_capacity(splats.len() * RECORD_BYTES);
    for s in splats {
        for v in s.to_raw() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_splats(bytes: &[u8]) -> Result<Vec<GaussianSplat>> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::InvalidArgument(format!(
            "splat file length {} is not a multiple of {RECORD_BYTES}",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .map(|rec| {
            let raw: Vec<f64> = rec
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            validate_splat(&raw)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(scale: [f64; 3], q: [f64; 4]) -> [f64; SPLAT_LEN] {
        let mut r = [0.1, -0.2, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.8];
        r[3..6].copy_from_slice(&scale);
        r[6..10].copy_from_slice(&q);
        r
    }

    #[test]
    fn unit_sphere_and_axis_aligned() {
        let s = validate_splat(&raw([1.0; 3], [1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(covariance_of(&s), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let s = validate_splat(&raw([2.0, 1.0, 1.0], [1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(covariance_of(&s), [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn quarter_turn_about_z_swaps_axes() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = validate_splat(&raw([2.0, 1.0, 1.0], [h, 0.0, 0.0, h])).unwrap();
        let c = covariance_of(&s);
        assert!((c[0][0] - 1.0).abs() < 1e-12);
        assert!((c[1][1] - 4.0).abs() < 1e-12);
        assert!(c[0][1].abs() < 1e-12);
    }

    #[test]
    fn round_trip_is_lossless() {
        let r = raw([0.3, 2.0, 1.5], [0.5, 0.5, 0.5, 0.5]);
        let s = validate_splat(&r).unwrap();
        assert_eq!(s.to_raw(), r);
        assert_eq!(decode_splats(&encode_splats(&[s, s])).unwrap(), vec![s, s]);
        let back: GaussianSplat = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn opacity_out_of_range_is_named() {
        let mut r = raw([1.0; 3], [1.0, 0.0, 0.0, 0.0]);
        r[13] = 1.2;
        match validate_splat(&r) {
            Err(Error::InvalidSplat(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].field, "opacity");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_collected() {
        let mut r = raw([1.0, -1.0, 1.0], [2.0, 0.0, 0.0, 0.0]);
        r[0] = f64::NAN;
        r[11] = -0.1;
        r[13] = 1.5;
        let Err(Error::InvalidSplat(v)) = validate_splat(&r) else {
            panic!("expected violations");
        };
        let fields: Vec<&str> = v.iter().map(|f| f.field).collect();
        assert_eq!(fields, vec!["mu", "scale", "rotation", "color", "opacity"]);
    }

    #[test]
    fn near_unit_quaternion_renormalized() {
        let s = validate_splat(&raw([1.0; 3], [0.9995, 0.0, 0.0, 0.0])).unwrap();
        let n: f64 = s.rotation().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_rejects_invalid() {
        let bad = r#"{"mu":[0,0,0],"scale":[1,1,1],"rotation":[1,0,0,0],"color":[0,0,0],"opacity":2}"#;
        assert!(serde_json::from_str::<GaussianSplat>(bad).is_err());
    }

    #[test]
    fn truncated_binary_rejected() {
        assert!(decode_splats(&[0u8; 100]).is_err());
        assert_eq!(
            validate_splat(&[0.0; 13]),
            Err(Error::DimensionMismatch { context: "splat", expected: 14, found: 13 })
        );
    }
}
