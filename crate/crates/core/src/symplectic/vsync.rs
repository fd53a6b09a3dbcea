use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cosine-bank modulated timestep:
/// `Δt_eff(n) = dt · (1 + (1/K) Σ_k cos(2π f_k n dt))`, always in `[0, 2 dt]`
/// for `dt > 0`.
pub fn vsync_timestep(dt: f64, n: u64, freqs: &[f64]) -> Result<f64> {
    if freqs.is_empty() {
        return Err(Error::EmptyFrequencies);
    }
    let t = n as f64 * dt;
    let phase_sum: f64 = freqs.iter().map(|&f| (2.0 * PI * f * t).cos()).sum();
    // rounding in the cosine sum can step a hair outside [0, 2 dt]
    let eff = dt * (1.0 + phase_sum / freqs.len() as f64);
    Ok(if dt > 0.0 { eff.clamp(0.0, 2.0 * dt) } else { eff })
}

/// `Δt_eff` for `n = 0..count`.
pub fn vsync_series(dt: f64, count: u64, freqs: &[f64]) -> Result<Vec<f64>> {
    (0..count).map(|n| vsync_timestep(dt, n, freqs)).collect()
}
