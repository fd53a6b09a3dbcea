use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{hamiltonian_energy, ExpertBank, PhaseState};
use crate::real::Real;

/// States `0..=n`, their energies, and the step size used for each of the
/// `n` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T = f64> {
    pub states: Vec<PhaseState<T>>,
    pub energies: Vec<T>,
    pub effective_dts: Vec<f64>,
    /// Steps executed as no-ops because `Δt_eff` collapsed to ~0.
    pub null_steps: Vec<bool>,
}

impl<T: Real> Trajectory<T> {
    pub(crate) fn with_capacity(n_steps: usize) -> Self {
        Self {
            states: Vec::with_capacity(n_steps + 1),
            energies: Vec::with_capacity(n_steps + 1),
            effective_dts: Vec::with_capacity(n_steps),
            null_steps: Vec::with_capacity(n_steps),
        }
    }

    pub(crate) fn push_initial(&mut self, state: PhaseState<T>, energy: T) {
        self.states.push(state);
        self.energies.push(energy);
    }

    pub(crate) fn push_step(&mut self, state: PhaseState<T>, energy: T, dt_eff: f64, null: bool) {
        self.states.push(state);
        self.energies.push(energy);
        self.effective_dts.push(dt_eff);
        self.null_steps.push(null);
    }

    /// Number of recorded states.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> &PhaseState<T> {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub initial_energy: f64,
    /// `max_t |H_t − H_0|`
    pub max_abs: f64,
    /// `mean_{t≥1} |H_t − H_0|`
    pub mean_abs: f64,
    /// `max_abs / |H_0|`
    pub max_rel: f64,
    pub steps: usize,
}

impl Trajectory<f64> {
    pub fn drift_summary(&self) -> DriftSummary {
        let h0 = self.energies.first().copied().unwrap_or(0.0);
        let devs: Vec<f64> = self.energies.iter().skip(1).map(|h| (h - h0).abs()).collect();
        let max_abs = devs.iter().copied().fold(0.0, f64::max);
        let mean_abs = if devs.is_empty() {
            0.0
        } else {
            devs.iter().sum::<f64>() / devs.len() as f64
        };
        DriftSummary {
            initial_energy: h0,
            max_abs,
            mean_abs,
            max_rel: if h0 != 0.0 { max_abs / h0.abs() } else { max_abs },
            steps: self.effective_dts.len(),
        }
    }

    /// Recompute every energy from the stored states; largest relative
    /// disagreement with the recorded values.
    pub fn energy_consistency(&self, bank: &ExpertBank<f64>) -> Result<f64> {
        let mut worst = 0.0_f64;
        for (s, &h) in self.states.iter().zip(&self.energies) {
            let again = hamiltonian_energy(bank, s)?;
            worst = worst.max((again - h).abs() / h.abs().max(1e-300));
        }
        Ok(worst)
    }

    /// Columns: `step, dt_eff, h0.., p0.., H`. The initial row has `dt_eff = 0`.
    pub fn to_csv(&self) -> String {
        let d = self.states.first().map_or(0, PhaseState::dim);
        let mut out = String::from("step,dt_eff");
        for i in 0..d {
            let _ = write!(out, ",h{i}");
        }
        for i in 0..d {
            let _ = write!(out, ",p{i}");
        }
        out.push_str(",H\n");
        for (t, (s, h)) in self.states.iter().zip(&self.energies).enumerate() {
            let dt = if t == 0 { 0.0 } else { self.effective_dts[t - 1] };
            let _ = write!(out, "{t},{dt:e}");
            for v in s.h.iter().chain(&s.p) {
                let _ = write!(out, ",{v:e}");
            }
            let _ = writeln!(out, ",{h:e}");
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(Error::from)
    }
}

/// A rollout that stopped early.
#[derive(Debug, Clone)]
pub struct RolloutFailure<T = f64> {
    pub partial: Box<Trajectory<T>>,
    pub error: Error,
}

impl<T> fmt::Display for RolloutFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rollout stopped after {} states: {}", self.partial.states.len(), self.error)
    }
}

impl<T: fmt::Debug> std::error::Error for RolloutFailure<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl<T> From<RolloutFailure<T>> for Error {
    fn from(f: RolloutFailure<T>) -> Self {
        f.error
    }
}
