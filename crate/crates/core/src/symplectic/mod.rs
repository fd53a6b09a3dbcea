//! Time integration of the latent Hamiltonian.
//!
//! The leapfrog (Störmer–Verlet) step is the reference scheme:
//!
//! ```text
//! p_½  = p  − (dt/2) ∇V(h)
//! h'   = h  + dt · p_½
//! p'   = p_½ − (dt/2) ∇V(h')
//! ```
//!
//! Explicit Euler and classical RK4 are kept as controls. A rollout records
//! the energy after every step and can modulate the step with the V-Sync
//! cosine bank.

mod hfm;
mod trajectory;
mod vsync;

use serde::{Deserialize, Serialize};

pub use hfm::{hfm_integrate, FlowResult};
pub use trajectory::{DriftSummary, RolloutFailure, Trajectory};
pub use vsync::{vsync_series, vsync_timestep};

use crate::error::{ensure_dim, Error, Result};
use crate::hamiltonian::{grad_potential, hamiltonian_energy, ExpertBank, PhaseState};
use crate::real::Real;

/// Steps with `Δt_eff < dt · NULL_STEP_RATIO` are executed as no-ops.
pub const NULL_STEP_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Leapfrog,
    Euler,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leapfrog" => Ok(Scheme::Leapfrog),
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// V-Sync oscillator frequencies; `None` keeps the step fixed.
    pub vsync: Option<Vec<f64>>,
    pub scheme: Scheme,
}

impl IntegratorConfig {
    pub fn leapfrog(dt: f64, n_steps: usize) -> Self {
        Self {
            dt,
            n_steps,
            vsync: None,
            scheme: Scheme::Leapfrog,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_vsync(mut self, freqs: Vec<f64>) -> Self {
        self.vsync = Some(freqs);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if let Some(freqs) = &self.vsync {
            if freqs.is_empty() {
                return Err(Error::EmptyFrequencies);
            }
            if freqs.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
                return Err(Error::InvalidArgument("V-Sync frequencies must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    /// Step size used for step `n` (0-based).
    pub fn step_size(&self, n: usize) -> Result<f64> {
        match &self.vsync {
            Some(freqs) => vsync_timestep(self.dt, n as u64, freqs),
            None => Ok(self.dt),
        }
    }
}

fn axpy<T: Real>(x: &[T], a: T, y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(&xi, &yi)| xi + a * yi).collect()
}

/// One leapfrog step. `dt` may be negative; two gradient evaluations, no
/// caching between calls.
pub fn leapfrog_step<T: Real>(state: &PhaseState<T>, bank: &ExpertBank<T>, dt: T) -> Result<PhaseState<T>> {
    ensure_dim("phase state", bank.dim(), state.dim())?;
    let half = dt * T::cst(0.5);
    let g0 = grad_potential(bank, &state.h)?;
    let p_half = axpy(&state.p, -half, &g0);
    let h = axpy(&state.h, dt, &p_half);
    let g1 = grad_potential(bank, &h)?;
    let p = axpy(&p_half, -half, &g1);
    let next = PhaseState { h, p };
    next.check_finite()?;
    Ok(next)
}

/// Explicit Euler; not symplectic.
pub fn euler_step<T: Real>(state: &PhaseState<T>, bank: &ExpertBank<T>, dt: T) -> Result<PhaseState<T>> {
    ensure_dim("phase state", bank.dim(), state.dim())?;
    let g = grad_potential(bank, &state.h)?;
    let next = PhaseState {
        h: axpy(&state.h, dt, &state.p),
        p: axpy(&state.p, -dt, &g),
    };
    next.check_finite()?;
    Ok(next)
}

/// Classical RK4 on `(ḣ, ṗ) = (p, −∇V(h))`.
pub fn rk4_step<T: Real>(state: &PhaseState<T>, bank: &ExpertBank<T>, dt: T) -> Result<PhaseState<T>> {
    ensure_dim("phase state", bank.dim(), state.dim())?;
    let half = dt * T::cst(0.5);
    let f = |h: &[T], p: &[T]| -> Result<(Vec<T>, Vec<T>)> {
        let g = grad_potential(bank, h)?;
        Ok((p.to_vec(), g.into_iter().map(|v| -v).collect()))
    };
    let (k1h, k1p) = f(&state.h, &state.p)?;
    let (k2h, k2p) = f(&axpy(&state.h, half, &k1h), &axpy(&state.p, half, &k1p))?;
    let (k3h, k3p) = f(&axpy(&state.h, half, &k2h), &axpy(&state.p, half, &k2p))?;
    let (k4h, k4p) = f(&axpy(&state.h, dt, &k3h), &axpy(&state.p, dt, &k3p))?;
    let sixth = dt / T::cst(6.0);
    let two = T::cst(2.0);
    let comb = |x: &[T], a: &[T], b: &[T], c: &[T], d: &[T]| -> Vec<T> {
        (0..x.len())
            .map(|i| x[i] + sixth * (a[i] + two * b[i] + two * c[i] + d[i]))
            .collect()
    };
    let next = PhaseState {
        h: comb(&state.h, &k1h, &k2h, &k3h, &k4h),
        p: comb(&state.p, &k1p, &k2p, &k3p, &k4p),
    };
    next.check_finite()?;
    Ok(next)
}

pub fn step<T: Real>(scheme: Scheme, state: &PhaseState<T>, bank: &ExpertBank<T>, dt: T) -> Result<PhaseState<T>> {
    match scheme {
        Scheme::Leapfrog => leapfrog_step(state, bank, dt),
        Scheme::Euler => euler_step(state, bank, dt),
        Scheme::Rk4 => rk4_step(state, bank, dt),
    }
}

/// Apply the configured scheme `n_steps` times, recording `H_t` after every
/// step. On failure the trajectory up to the last good state is returned
/// alongside the error.
pub fn rollout<T: Real>(
    state0: &PhaseState<T>,
    bank: &ExpertBank<T>,
    config: &IntegratorConfig,
) -> std::result::Result<Trajectory<T>, RolloutFailure<T>> {
    let fail = |partial: Trajectory<T>, error: Error| RolloutFailure {
        partial: Box::new(partial),
        error,
    };
    let mut traj = Trajectory::with_capacity(config.n_steps);
    if let Err(e) = config.validate().and_then(|_| state0.check_finite()) {
        return Err(fail(traj, e));
    }
    let h0 = match hamiltonian_energy(bank, state0) {
        Ok(h) => h,
        Err(e) => return Err(fail(traj, e)),
    };
    traj.push_initial(state0.clone(), h0);

    for n in 0..config.n_steps {
        let dt_eff = match config.step_size(n) {
            Ok(v) => v,
            Err(e) => return Err(fail(traj, e)),
        };
        let current = traj.last_state().clone();
        if dt_eff < config.dt * NULL_STEP_RATIO {
            let h = *traj.energies.last().expect("initial energy");
            traj.push_step(current, h, dt_eff, true);
            continue;
        }
        let next = step(config.scheme, &current, bank, T::cst(dt_eff))
            .and_then(|s| hamiltonian_energy(bank, &s).map(|h| (s, h)));
        match next {
            Ok((s, h)) if h.is_finite() => traj.push_step(s, h, dt_eff, false),
            Ok(_) => return Err(fail(traj, Error::NonFinite("energy"))),
            Err(e) => return Err(fail(traj, e)),
        }
    }
    Ok(traj)
}
