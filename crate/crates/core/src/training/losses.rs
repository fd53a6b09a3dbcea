use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::real::{norm2, sum, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_h: f64,
    pub lambda_s: f64,
    /// Radius of the latent ball inside which the stability term is zero.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_h: 0.1,
            lambda_s: 0.01,
            beta: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_h", self.lambda_h), ("lambda_s", self.lambda_s), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Mean squared error over every element, with the target side detached:
/// `mean_{t,j} (sg(z_target) − z_pred)²`.
pub fn jepa_loss<T: Real>(target: &[Vec<T>], predicted: &[Vec<T>]) -> Result<T> {
    ensure_dim("jepa rows", target.len(), predicted.len())?;
    if target.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut terms = Vec::new();
    for (t, p) in target.iter().zip(predicted) {
        ensure_dim("jepa width", t.len(), p.len())?;
        terms.extend(t.iter().zip(p).map(|(&t, &p)| {
            let d = t.detach() - p;
            d * d
        }));
    }
    let n = terms.len() as f64;
    Ok(sum(terms) / T::cst(n))
}

/// `mean_{t≥1} |H_t − H_0|`. The `t = 0` term is identically zero and is
/// left out of the mean.
pub fn hamilton_loss<T: Real>(energies: &[T]) -> Result<T> {
    if energies.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "energy drift needs at least two states, got {}",
            energies.len()
        )));
    }
    let h0 = energies[0];
    let n = (energies.len() - 1) as f64;
    Ok(sum(energies[1..].iter().map(|&h| (h - h0).abs())) / T::cst(n))
}

/// `max(0, ‖h‖₂ − β)`.
pub fn stability_loss<T: Real>(h: &[T], beta: f64) -> T {
    (norm2(h) - T::cst(beta)).relu()
}

pub fn total_loss<T: Real>(jepa: T, hamilton: T, stability: T, w: &LossWeights) -> T {
    jepa + T::cst(w.lambda_h) * hamilton + T::cst(w.lambda_s) * stability
}
