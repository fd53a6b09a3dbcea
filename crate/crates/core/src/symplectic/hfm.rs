//! Gradient-flow sampler: integrates `dz/dt = −∇V(z)` with fixed-step RK4.

use crate::error::{Error, Result};
use crate::hamiltonian::{grad_potential, total_potential, ExpertBank};
use crate::real::{all_finite, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult<T> {
    pub z: Vec<T>,
    /// `V(z_t)` for `t = 0..=n_steps`.
    pub potential_trace: Vec<T>,
}

fn axpy<T: Real>(z: &[T], a: T, k: &[T]) -> Vec<T> {
    z.iter().zip(k).map(|(&zi, &ki)| zi + a * ki).collect()
}

fn neg_grad<T: Real>(bank: &ExpertBank<T>, z: &[T]) -> Result<Vec<T>> {
    Ok(grad_potential(bank, z)?.into_iter().map(|g| -g).collect())
}

pub fn hfm_integrate<T: Real>(
    z0: &[T],
    bank: &ExpertBank<T>,
    n_steps: usize,
    step_size: f64,
) -> Result<FlowResult<T>> {
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidArgument(format!("step_size must be > 0, got {step_size}")));
    }
    if !all_finite(z0) {
        return Err(Error::NonFinite("flow start"));
    }
    let h = T::cst(step_size);
    let half = T::cst(0.5 * step_size);
    let sixth = T::cst(step_size / 6.0);
    let two = T::cst(2.0);

    let mut z = z0.to_vec();
    let mut trace = Vec::with_capacity(n_steps + 1);
    trace.push(total_potential(bank, &z)?);
    for _ in 0..n_steps {
        let k1 = neg_grad(bank, &z)?;
        let k2 = neg_grad(bank, &axpy(&z, half, &k1))?;
        let k3 = neg_grad(bank, &axpy(&z, half, &k2))?;
        let k4 = neg_grad(bank, &axpy(&z, h, &k3))?;
        z = (0..z.len())
            .map(|i| z[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
            .collect();
        if !all_finite(&z) {
            return Err(Error::NonFinite("flow state"));
        }
        trace.push(total_potential(bank, &z)?);
    }
    Ok(FlowResult {
        z,
        potential_trace: trace,
    })
}
