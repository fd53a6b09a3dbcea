//! Synthetic physical systems and span masking.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{from_f64, Real};
use crate::ssm::Sequence;

use super::model::WindowEncoder;

/// Fine step of the ground-truth generator.
pub const FINE_DT: f64 = 1e-4;
/// Allowed true-energy drift, relative to `max(1, |E_0|)`.
pub const GENERATOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Harmonic,
    DoubleWell,
    Pendulum,
}

impl FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(SystemKind::Harmonic),
            "double-well" => Ok(SystemKind::DoubleWell),
            "pendulum" => Ok(SystemKind::Pendulum),
            other => Err(Error::InvalidArgument(format!(
                "unknown system `{other}` (expected harmonic, double-well or pendulum)"
            ))),
        }
    }
}

/// One-dimensional conservative system `H = p²/2 + V(q)`:
/// harmonic `k q²/2`, double well `k (q² − 1)²/4`, pendulum `k (1 − cos q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSystem {
    pub kind: SystemKind,
    pub stiffness: f64,
}

impl SyntheticSystem {
    pub fn new(kind: SystemKind, stiffness: f64) -> Result<Self> {
        if !(stiffness > 0.0 && stiffness.is_finite()) {
            return Err(Error::InvalidArgument(format!("stiffness must be > 0, got {stiffness}")));
        }
        Ok(Self { kind, stiffness })
    }

    pub fn potential(&self, q: f64) -> f64 {
        let k = self.stiffness;
        match self.kind {
            SystemKind::Harmonic => 0.5 * k * q * q,
            SystemKind::DoubleWell => 0.25 * k * (q * q - 1.0).powi(2),
            SystemKind::Pendulum => k * (1.0 - q.cos()),
        }
    }

    pub fn force(&self, q: f64) -> f64 {
        let k = self.stiffness;
        match self.kind {
            SystemKind::Harmonic => -k * q,
            SystemKind::DoubleWell => -k * q * (q * q - 1.0),
            SystemKind::Pendulum => -k * q.sin(),
        }
    }

    pub fn energy(&self, q: f64, p: f64) -> f64 {
        0.5 * p * p + self.potential(q)
    }

    fn rk4(&self, q: f64, p: f64, h: f64) -> (f64, f64) {
        let f = |q: f64, p: f64| (p, self.force(q));
        let (k1q, k1p) = f(q, p);
        let (k2q, k2p) = f(q + 0.5 * h * k1q, p + 0.5 * h * k1p);
        let (k3q, k3p) = f(q + 0.5 * h * k2q, p + 0.5 * h * k2p);
        let (k4q, k4p) = f(q + h * k3q, p + h * k3p);
        (
            q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
            p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        )
    }

    /// `len` samples `[q, p]` spaced `interval` apart, integrated with RK4 at
    /// [`FINE_DT`]. Fails if the true energy drifts beyond [`GENERATOR_TOL`].
    pub fn generate(&self, q0: f64, p0: f64, len: usize, interval: f64) -> Result<Sequence<f64>> {
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample interval must be > 0, got {interval}")));
        }
        let sub = (interval / FINE_DT).round().max(1.0) as usize;
        let h = interval / sub as f64;
        let e0 = self.energy(q0, p0);
        let tol = GENERATOR_TOL * e0.abs().max(1.0);
        let (mut q, mut p) = (q0, p0);
        let mut data = Vec::with_capacity(2 * len);
        let mut worst = 0.0_f64;
        for t in 0..len {
            if t > 0 {
                for _ in 0..sub {
                    (q, p) = self.rk4(q, p, h);
                }
            }
            worst = worst.max((self.energy(q, p) - e0).abs());
            data.extend([q, p]);
        }
        if !(worst <= tol) {
            return Err(Error::GeneratorDrift {
                drift: worst,
                tolerance: tol,
            });
        }
        Sequence::new(len, 2, data)
    }

    pub fn random_initial(&self, rng: &mut impl Rng) -> (f64, f64) {
        match self.kind {
            SystemKind::Harmonic | SystemKind::Pendulum => (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            SystemKind::DoubleWell => (rng.random_range(-1.5..1.5), rng.random_range(-0.5..0.5)),
        }
    }

    pub fn dataset(&self, rng: &mut impl Rng, count: usize, len: usize, interval: f64) -> Result<Vec<Sequence<f64>>> {
        (0..count)
            .map(|_| {
                let (q, p) = self.random_initial(rng);
                self.generate(q, p, len, interval)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    Spans(Vec<Span>),
    /// One contiguous span covering `ceil(ratio · L)` positions.
    Ratio(f64),
}

/// Draws the span for [`MaskSpec::Ratio`]. The span never starts at 0 unless
/// it covers the whole sequence, so the predictor always has context.
pub fn ratio_span(len: usize, ratio: f64, rng: &mut impl Rng) -> Result<Span> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("mask ratio must lie in [0, 1], got {ratio}")));
    }
    let m = (ratio * len as f64).ceil() as usize;
    if m == 0 {
        return Err(Error::EmptyMask);
    }
    if m >= len {
        return Ok(Span { start: 0, len });
    }
    Ok(Span {
        start: rng.random_range(1..=len - m),
        len: m,
    })
}

/// Sorted, non-empty, non-overlapping and in bounds.
pub fn validate_spans(spans: &[Span], len: usize) -> Result<Vec<Span>> {
    if spans.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut sorted = spans.to_vec();
    sorted.sort_by_key(|s| s.start);
    for (i, s) in sorted.iter().enumerate() {
        if s.len == 0 {
            return Err(Error::InvalidArgument(format!("span at {} is empty", s.start)));
        }
        if s.end() > len {
            return Err(Error::InvalidArgument(format!(
                "span {}..{} exceeds sequence length {len}",
                s.start,
                s.end()
            )));
        }
        if i > 0 && sorted[i - 1].end() > s.start {
            return Err(Error::InvalidArgument(format!("spans overlap at {}", s.start)));
        }
    }
    Ok(sorted)
}

/// Context with masked rows zeroed, plus the targets for those rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    /// `L × (D + 1)`; the last channel is 1 at masked positions.
    pub context: Sequence<f64>,
    pub spans: Vec<Span>,
    /// One target embedding per masked position, in order.
    pub targets: Vec<Vec<f64>>,
}

impl MaskedBatch {
    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.spans.iter().flat_map(|s| s.start..s.end())
    }
}

pub fn apply_mask(seq: &Sequence<f64>, spans: &[Span]) -> Result<Sequence<f64>> {
    let spans = validate_spans(spans, seq.len())?;
    let d = seq.dim();
    let mut data = Vec::with_capacity(seq.len() * (d + 1));
    for (t, row) in seq.rows().enumerate() {
        if spans.iter().any(|s| (s.start..s.end()).contains(&t)) {
            data.extend(std::iter::repeat_n(0.0, d));
            data.push(1.0);
        } else {
            data.extend_from_slice(row);
            data.push(0.0);
        }
    }
    Sequence::new(seq.len(), d + 1, data)
}

/// Target embeddings at `positions`, computed on the unmasked sequence.
/// The values are produced with the gradient path severed.
pub fn target_embeddings<T: Real>(encoder: &WindowEncoder<T>, seq: &Sequence<f64>, positions: &[usize]) -> Vec<Vec<T>> {
    let rows: Vec<Vec<T>> = seq.rows().map(from_f64).collect();
    positions
        .iter()
        .map(|&t| encoder.encode_at(&rows, t).into_iter().map(T::detach).collect())
        .collect()
}

pub fn make_masked_batch(
    seq: &Sequence<f64>,
    spec: &MaskSpec,
    target_encoder: &WindowEncoder<f64>,
    rng: &mut impl Rng,
) -> Result<MaskedBatch> {
    let spans = match spec {
        MaskSpec::Spans(s) => validate_spans(s, seq.len())?,
        MaskSpec::Ratio(r) => vec![ratio_span(seq.len(), *r, rng)?],
    };
    let context = apply_mask(seq, &spans)?;
    let positions: Vec<usize> = spans.iter().flat_map(|s| s.start..s.end()).collect();
    let targets = target_embeddings(target_encoder, seq, &positions);
    if targets.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target embeddings"));
    }
    Ok(MaskedBatch { context, spans, targets })
}
