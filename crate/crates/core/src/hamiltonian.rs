//! Gated expert potentials and the separable Hamiltonian
//! `H(h, p) = ½‖p‖² + Σ_i g_i(h) V_i(h)`.
//!
//! Gates come from a linear router: the top-K logits are softmaxed and every
//! other expert gets an exact zero. For gradients the selected set is held
//! fixed, which is only valid away from the cut between the K-th and
//! (K+1)-th logit; [`grad_potential`] reports a [`Error::SelectionBoundary`]
//! when the two are within [`BOUNDARY_TOL`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::Matrix;
use crate::real::{all_finite, dot, sum, Real};

/// Minimum gap between the K-th and (K+1)-th router logit for which the
/// active set is treated as locally constant.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Point in latent phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState<T> {
    pub h: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Real> PhaseState<T> {
    pub fn new(h: Vec<T>, p: Vec<T>) -> Result<Self> {
        ensure_dim("phase state momentum", h.len(), p.len())?;
        let s = Self { h, p };
        s.check_finite()?;
        Ok(s)
    }

    /// Zero momentum at `h`.
    pub fn at_rest(h: Vec<T>) -> Result<Self> {
        let p = vec![T::zero(); h.len()];
        Self::new(h, p)
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn check_finite(&self) -> Result<()> {
        if all_finite(&self.h) && all_finite(&self.p) {
            Ok(())
        } else {
            Err(Error::NonFinite("phase state"))
        }
    }

    pub fn with_negated_momentum(&self) -> Self {
        Self {
            h: self.h.clone(),
            p: self.p.iter().map(|&v| -v).collect(),
        }
    }

    pub fn to_f64(&self) -> PhaseState<f64> {
        PhaseState {
            h: crate::real::to_f64(&self.h),
            p: crate::real::to_f64(&self.p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertPotential<T> {
    /// `½ hᵀQh + bᵀh + c`
    Quadratic { q: Matrix<T>, b: Vec<T>, c: T },
    /// `w2 · tanh(W1 h + b1) + b2`
    Feedforward {
        w1: Matrix<T>,
        b1: Vec<T>,
        w2: Vec<T>,
        b2: T,
    },
}

impl<T: Real> ExpertPotential<T> {
    pub fn quadratic(q: Matrix<T>, b: Vec<T>, c: T) -> Result<Self> {
        let e = ExpertPotential::Quadratic { q, b, c };
        e.validate()?;
        Ok(e)
    }

    pub fn feedforward(w1: Matrix<T>, b1: Vec<T>, w2: Vec<T>, b2: T) -> Result<Self> {
        let e = ExpertPotential::Feedforward { w1, b1, w2, b2 };
        e.validate()?;
        Ok(e)
    }

    /// `V ≡ 0` on a `dim`-dimensional latent.
    pub fn zero(dim: usize) -> Self {
        ExpertPotential::Quadratic {
            q: Matrix::zeros(dim, dim),
            b: vec![T::zero(); dim],
            c: T::zero(),
        }
    }

    /// `½‖h‖²`
    pub fn unit_quadratic(dim: usize) -> Self {
        ExpertPotential::Quadratic {
            q: Matrix::identity(dim),
            b: vec![T::zero(); dim],
            c: T::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ExpertPotential::Quadratic { q, .. } => q.cols(),
            ExpertPotential::Feedforward { w1, .. } => w1.cols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExpertPotential::Quadratic { q, b, c } => {
                ensure_dim("quadratic expert Q", q.rows(), q.cols())?;
                ensure_dim("quadratic expert b", q.rows(), b.len())?;
                if !(q.is_finite() && all_finite(b) && c.is_finite()) {
                    return Err(Error::NonFinite("quadratic expert"));
                }
                let n = q.rows();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if (q.get(i, j).value() - q.get(j, i).value()).abs() > 1e-12 {
                            return Err(Error::InvalidArgument(format!(
                                "quadratic expert Q not symmetric at ({i}, {j})"
                            )));
                        }
                    }
                }
            }
            ExpertPotential::Feedforward { w1, b1, w2, b2 } => {
                ensure_dim("feedforward expert b1", w1.rows(), b1.len())?;
                ensure_dim("feedforward expert w2", w1.rows(), w2.len())?;
                if !(w1.is_finite() && all_finite(b1) && all_finite(w2) && b2.is_finite()) {
                    return Err(Error::NonFinite("feedforward expert"));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, h: &[T]) -> T {
        match self {
            ExpertPotential::Quadratic { q, b, c } => {
                let qh = q.matvec(h);
                T::cst(0.5) * dot(h, &qh) + dot(b, h) + *c
            }
            ExpertPotential::Feedforward { w1, b1, w2, b2 } => {
                let act: Vec<T> = w1
                    .matvec(h)
                    .into_iter()
                    .zip(b1)
                    .map(|(a, &b)| (a + b).tanh())
                    .collect();
                dot(w2, &act) + *b2
            }
        }
    }

    /// Value and gradient in one pass.
    pub fn value_and_grad(&self, h: &[T]) -> (T, Vec<T>) {
        match self {
            ExpertPotential::Quadratic { q, b, c } => {
                let qh = q.matvec(h);
                let qth = q.tmatvec(h);
                let v = T::cst(0.5) * dot(h, &qh) + dot(b, h) + *c;
                // ½(Q + Qᵀ)h + b, exact even when Q is perturbed off-symmetric
                let g = qh
                    .iter()
                    .zip(&qth)
                    .zip(b)
                    .map(|((&a, &t), &bi)| T::cst(0.5) * (a + t) + bi)
                    .collect();
                (v, g)
            }
            ExpertPotential::Feedforward { w1, b1, w2, b2 } => {
                let act: Vec<T> = w1
                    .matvec(h)
                    .into_iter()
                    .zip(b1)
                    .map(|(a, &b)| (a + b).tanh())
                    .collect();
                let v = dot(w2, &act) + *b2;
                let back: Vec<T> = act
                    .iter()
                    .zip(w2)
                    .map(|(&t, &w)| w * (T::one() - t * t))
                    .collect();
                (v, w1.tmatvec(&back))
            }
        }
    }

    pub fn map_tensors<U: Real>(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &[usize], &[T]) -> Vec<U>,
    ) -> ExpertPotential<U> {
        let mat = |name: &str, m: &Matrix<T>, f: &mut dyn FnMut(&str, &[usize], &[T]) -> Vec<U>| {
            Matrix::from_vec(m.rows(), m.cols(), f(&format!("{prefix}.{name}"), &m.shape(), m.data()))
                .expect("tensor map preserves length")
        };
        match self {
            ExpertPotential::Quadratic { q, b, c } => ExpertPotential::Quadratic {
                q: mat("q", q, f),
                b: f(&format!("{prefix}.b"), &[b.len()], b),
                c: f(&format!("{prefix}.c"), &[], &[*c])[0],
            },
            ExpertPotential::Feedforward { w1, b1, w2, b2 } => ExpertPotential::Feedforward {
                w1: mat("w1", w1, f),
                b1: f(&format!("{prefix}.b1"), &[b1.len()], b1),
                w2: f(&format!("{prefix}.w2"), &[w2.len()], w2),
                b2: f(&format!("{prefix}.b2"), &[], &[*b2])[0],
            },
        }
    }

    /// Largest eigenvalue bound for a quadratic expert (Gershgorin), `None`
    /// for feedforward experts.
    pub fn curvature_bound(&self) -> Option<f64> {
        match self {
            ExpertPotential::Quadratic { q, .. } => Some(q.norm_inf()),
            ExpertPotential::Feedforward { .. } => None,
        }
    }
}

impl ExpertPotential<f64> {
    /// Random symmetric positive semi-definite quadratic expert.
    pub fn random_quadratic(rng: &mut impl Rng, dim: usize, scale: f64) -> Self {
        let m: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut q = Matrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = 0.0;
                for k in 0..dim {
                    acc += m[k * dim + i] * m[k * dim + j];
                }
                let diag = if i == j { 0.1 } else { 0.0 };
                q.set(i, j, scale * (acc / dim as f64 + diag));
            }
        }
        // exact symmetry
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = q.get(i, j);
                q.set(j, i, v);
            }
        }
        let b = (0..dim).map(|_| scale * rng.random_range(-0.5..0.5)).collect();
        let c = rng.random_range(-0.5..0.5);
        ExpertPotential::Quadratic { q, b, c }
    }

    pub fn random_feedforward(rng: &mut impl Rng, dim: usize, width: usize, scale: f64) -> Self {
        let w1 = Matrix::from_vec(
            width,
            dim,
            (0..width * dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
        )
        .expect("shape");
        let b1 = (0..width).map(|_| rng.random_range(-0.5..0.5)).collect();
        let w2 = (0..width).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        ExpertPotential::Feedforward {
            w1,
            b1,
            w2,
            b2: 0.0,
        }
    }
}

/// `N` expert potentials and a linear router `D_h → N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertBank<T> {
    experts: Vec<ExpertPotential<T>>,
    router_w: Matrix<T>,
    router_b: Vec<T>,
    top_k: usize,
}

impl<T: Real> ExpertBank<T> {
    pub fn new(
        experts: Vec<ExpertPotential<T>>,
        router_w: Matrix<T>,
        router_b: Vec<T>,
        top_k: usize,
    ) -> Result<Self> {
        let n = experts.len();
        if n == 0 {
            return Err(Error::InvalidArgument("expert bank needs at least one expert".into()));
        }
        if top_k == 0 || top_k > n {
            return Err(Error::InvalidArgument(format!(
                "active experts K={top_k} must satisfy 1 <= K <= N={n}"
            )));
        }
        let dim = experts[0].dim();
        for e in &experts {
            ensure_dim("expert latent dimension", dim, e.dim())?;
            e.validate()?;
        }
        ensure_dim("router rows", n, router_w.rows())?;
        ensure_dim("router columns", dim, router_w.cols())?;
        ensure_dim("router bias", n, router_b.len())?;
        if !(router_w.is_finite() && all_finite(&router_b)) {
            return Err(Error::NonFinite("router"));
        }
        Ok(Self {
            experts,
            router_w,
            router_b,
            top_k,
        })
    }

    /// One expert, always fully gated.
    pub fn single(expert: ExpertPotential<T>) -> Result<Self> {
        let dim = expert.dim();
        Self::new(vec![expert], Matrix::zeros(1, dim), vec![T::zero()], 1)
    }

    pub fn experts(&self) -> &[ExpertPotential<T>] {
        &self.experts
    }
    pub fn router_weights(&self) -> &Matrix<T> {
        &self.router_w
    }
    pub fn router_bias(&self) -> &[T] {
        &self.router_b
    }
    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }
    pub fn top_k(&self) -> usize {
        self.top_k
    }
    pub fn dim(&self) -> usize {
        self.router_w.cols()
    }

    pub fn router_logits(&self, h: &[T]) -> Vec<T> {
        self.router_w
            .matvec(h)
            .into_iter()
            .zip(&self.router_b)
            .map(|(a, &b)| a + b)
            .collect()
    }

    /// Rebuild with every tensor passed through `f`. Skips validation so that
    /// finite-difference probes may perturb single entries of `Q`.
    pub fn map_tensors<U: Real>(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &[usize], &[T]) -> Vec<U>,
    ) -> ExpertBank<U> {
        let router_w = Matrix::from_vec(
            self.router_w.rows(),
            self.router_w.cols(),
            f(&format!("{prefix}.router_w"), &self.router_w.shape(), self.router_w.data()),
        )
        .expect("tensor map preserves length");
        let router_b = f(&format!("{prefix}.router_b"), &[self.router_b.len()], &self.router_b);
        let experts = self
            .experts
            .iter()
            .enumerate()
            .map(|(i, e)| e.map_tensors(&format!("{prefix}.expert{i:02}"), f))
            .collect();
        ExpertBank {
            experts,
            router_w,
            router_b,
            top_k: self.top_k,
        }
    }

    /// Largest quadratic curvature bound across experts, if all are quadratic.
    pub fn curvature_bound(&self) -> Option<f64> {
        self.experts
            .iter()
            .map(ExpertPotential::curvature_bound)
            .try_fold(0.0_f64, |m, c| c.map(|c| m.max(c)))
    }
}

impl ExpertBank<f64> {
    pub fn random_router(rng: &mut impl Rng, n: usize, dim: usize, scale: f64) -> (Matrix<f64>, Vec<f64>) {
        let w = Matrix::from_vec(
            n,
            dim,
            (0..n * dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
        )
        .expect("shape");
        let b = (0..n).map(|_| scale * rng.random_range(-0.5..0.5)).collect();
        (w, b)
    }

    pub fn random_quadratic(rng: &mut impl Rng, dim: usize, n: usize, k: usize) -> Result<Self> {
        let experts = (0..n)
            .map(|_| ExpertPotential::random_quadratic(rng, dim, 1.0))
            .collect();
        let (w, b) = Self::random_router(rng, n, dim, 1.0);
        Self::new(experts, w, b, k)
    }

    pub fn random_feedforward(rng: &mut impl Rng, dim: usize, n: usize, k: usize, width: usize) -> Result<Self> {
        let experts = (0..n)
            .map(|_| ExpertPotential::random_feedforward(rng, dim, width, 1.0))
            .collect();
        let (w, b) = Self::random_router(rng, n, dim, 1.0);
        Self::new(experts, w, b, k)
    }
}

/// Gate weights together with the selection that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Gating<T> {
    /// Length `N`; exactly `K` nonzero entries.
    pub weights: Vec<T>,
    /// Selected experts in descending logit order.
    pub active: Vec<usize>,
    pub logits: Vec<T>,
    /// Logit gap between the last selected and first rejected expert;
    /// infinite when `K = N`.
    pub margin: f64,
}

/// Top-K softmax gating. Ties are broken toward the lower index.
pub fn gating<T: Real>(bank: &ExpertBank<T>, h: &[T]) -> Result<Gating<T>> {
    ensure_dim("gate input", bank.dim(), h.len())?;
    if !all_finite(h) {
        return Err(Error::NonFinite("gate input"));
    }
    let logits = bank.router_logits(h);
    if !all_finite(&logits) {
        return Err(Error::NonFinite("router logits"));
    }
    let n = logits.len();
    let k = bank.top_k;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .value()
            .partial_cmp(&logits[a].value())
            .expect("finite logits")
            .then(a.cmp(&b))
    });
    let active: Vec<usize> = order[..k].to_vec();
    let margin = if k < n {
        logits[order[k - 1]].value() - logits[order[k]].value()
    } else {
        f64::INFINITY
    };

    let top = logits[active[0]];
    let exps: Vec<T> = active.iter().map(|&i| (logits[i] - top).exp()).collect();
    let z = sum(exps.iter().copied());
    let mut weights = vec![T::zero(); n];
    for (&i, &e) in active.iter().zip(&exps) {
        weights[i] = e / z;
    }
    Ok(Gating {
        weights,
        active,
        logits,
        margin,
    })
}

pub fn gate<T: Real>(bank: &ExpertBank<T>, h: &[T]) -> Result<Vec<T>> {
    gating(bank, h).map(|g| g.weights)
}

/// `V(h) = Σ_{i active} g_i(h) V_i(h)`
pub fn total_potential<T: Real>(bank: &ExpertBank<T>, h: &[T]) -> Result<T> {
    let g = gating(bank, h)?;
    let v = sum(g.active.iter().map(|&i| g.weights[i] * bank.experts[i].value(h)));
    if !v.is_finite() {
        return Err(Error::NonFinite("potential"));
    }
    Ok(v)
}

pub fn kinetic_energy<T: Real>(p: &[T]) -> T {
    T::cst(0.5) * dot(p, p)
}

/// `H = ½‖p‖² + V(h)`
pub fn hamiltonian_energy<T: Real>(bank: &ExpertBank<T>, state: &PhaseState<T>) -> Result<T> {
    ensure_dim("phase state", bank.dim(), state.dim())?;
    Ok(kinetic_energy(&state.p) + total_potential(bank, &state.h)?)
}

/// `∇_h V` through both the gates and the experts, with the active set held
/// fixed:
///
/// `∇V = Σ_i g_i [∇V_i + (V_i − V) w_i]`, `w_i` the router row of expert `i`.
pub fn grad_potential<T: Real>(bank: &ExpertBank<T>, h: &[T]) -> Result<Vec<T>> {
    potential_and_grad(bank, h).map(|(_, g)| g)
}

pub fn potential_and_grad<T: Real>(bank: &ExpertBank<T>, h: &[T]) -> Result<(T, Vec<T>)> {
    let g = gating(bank, h)?;
    if g.margin < BOUNDARY_TOL {
        let rejected = (0..bank.num_experts())
            .filter(|i| !g.active.contains(i))
            .max_by(|&a, &b| {
                g.logits[a]
                    .value()
                    .partial_cmp(&g.logits[b].value())
                    .expect("finite")
                    .then(b.cmp(&a))
            })
            .expect("K < N leaves a rejected expert");
        return Err(Error::SelectionBoundary {
            upper: g.active[bank.top_k - 1],
            lower: rejected,
            gap: g.margin,
        });
    }

    let parts: Vec<(usize, T, Vec<T>)> = g
        .active
        .iter()
        .map(|&i| {
            let (v, grad) = bank.experts[i].value_and_grad(h);
            (i, v, grad)
        })
        .collect();
    let v_total = sum(parts.iter().map(|(i, v, _)| g.weights[*i] * *v));

    let mut grad = vec![T::zero(); h.len()];
    for (i, v, gi) in &parts {
        let wi = g.weights[*i];
        let spread = *v - v_total;
        let row = bank.router_w.row(*i);
        for d in 0..grad.len() {
            grad[d] = grad[d] + wi * (gi[d] + spread * row[d]);
        }
    }
    if !(v_total.is_finite() && all_finite(&grad)) {
        return Err(Error::NonFinite("potential gradient"));
    }
    Ok((v_total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn central_grad(bank: &ExpertBank<f64>, h: &[f64], eps: f64) -> Vec<f64> {
        (0..h.len())
            .map(|d| {
                let mut hp = h.to_vec();
                let mut hm = h.to_vec();
                hp[d] += eps;
                hm[d] -= eps;
                (total_potential(bank, &hp).unwrap() - total_potential(bank, &hm).unwrap()) / (2.0 * eps)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-8)
    }

    fn bank_with_router(n: usize, k: usize, router_b: Vec<f64>) -> ExpertBank<f64> {
        ExpertBank::new(
            (0..n).map(|_| ExpertPotential::unit_quadratic(2)).collect(),
            Matrix::zeros(n, 2),
            router_b,
            k,
        )
        .unwrap()
    }

    #[test]
    fn equal_logits_split_evenly() {
        let bank = bank_with_router(2, 2, vec![0.3, 0.3]);
        assert_eq!(gate(&bank, &[1.0, -1.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn top1_is_one_hot_at_argmax() {
        let bank = bank_with_router(4, 1, vec![0.1, 2.0, -1.0, 1.9]);
        assert_eq!(gate(&bank, &[0.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn bank_validation() {
        assert!(ExpertBank::<f64>::new(vec![], Matrix::zeros(0, 2), vec![], 1).is_err());
        assert!(bank_with_router_res(2, 3).is_err());
        assert!(bank_with_router_res(2, 0).is_err());
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(ExpertPotential::quadratic(asym, vec![0.0; 2], 0.0).is_err());
    }

    fn bank_with_router_res(n: usize, k: usize) -> Result<ExpertBank<f64>> {
        ExpertBank::new(
            (0..n).map(|_| ExpertPotential::unit_quadratic(2)).collect(),
            Matrix::zeros(n, 2),
            vec![0.0; n],
            k,
        )
    }

    #[test]
    fn single_unit_quadratic_potential() {
        let bank = ExpertBank::single(ExpertPotential::unit_quadratic(2)).unwrap();
        assert_eq!(total_potential(&bank, &[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(grad_potential(&bank, &[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn identical_experts_ignore_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = ExpertPotential::random_quadratic(&mut rng, 3, 1.0);
        let (w, b) = ExpertBank::random_router(&mut rng, 2, 3, 2.0);
        let bank = ExpertBank::new(vec![e.clone(), e.clone()], w, b, 2).unwrap();
        let h = [0.4, -1.2, 0.9];
        let v = total_potential(&bank, &h).unwrap();
        assert!((v - e.value(&h)).abs() <= 1e-15 * e.value(&h).abs().max(1.0));
    }

    #[test]
    fn energy_closed_forms() {
        let bank = ExpertBank::single(ExpertPotential::unit_quadratic(2)).unwrap();
        let ground = PhaseState::at_rest(vec![0.0, 0.0]).unwrap();
        assert_eq!(hamiltonian_energy(&bank, &ground).unwrap(), 0.0);
        let free = ExpertBank::single(ExpertPotential::zero(2)).unwrap();
        let s = PhaseState::new(vec![0.7, 0.1], vec![3.0, 4.0]).unwrap();
        assert_eq!(hamiltonian_energy(&free, &s).unwrap(), 12.5);
    }

    #[test]
    fn dense_gating_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let bank = ExpertBank::random_quadratic(&mut rng, 3, 3, 3).unwrap();
        for _ in 0..20 {
            let h: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let g = grad_potential(&bank, &h).unwrap();
            assert!(rel_err(&g, &central_grad(&bank, &h, 1e-5)) < 1e-6);
        }
    }

    #[test]
    fn sparse_feedforward_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let bank = ExpertBank::random_feedforward(&mut rng, 4, 8, 2, 6).unwrap();
        let mut checked = 0;
        while checked < 20 {
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            // stay clear of the cut so the central stencil does not straddle it
            if gating(&bank, &h).unwrap().margin < 1e-3 {
                continue;
            }
            let g = grad_potential(&bank, &h).unwrap();
            assert!(rel_err(&g, &central_grad(&bank, &h, 1e-5)) < 1e-5);
            checked += 1;
        }
    }

    #[test]
    fn boundary_is_reported() {
        let bank = bank_with_router(3, 1, vec![1.0, 1.0, 0.0]);
        match grad_potential(&bank, &[0.2, 0.2]) {
            Err(Error::SelectionBoundary { upper, lower, gap }) => {
                assert_eq!((upper, lower), (0, 1));
                assert_eq!(gap, 0.0);
            }
            other => panic!("expected boundary, got {other:?}"),
        }
        // the gate itself is still defined on the boundary
        assert_eq!(gate(&bank, &[0.2, 0.2]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn non_finite_input_rejected() {
        let bank = bank_with_router(2, 1, vec![0.0, 1.0]);
        assert!(matches!(gate(&bank, &[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
        assert!(PhaseState::new(vec![1.0], vec![f64::INFINITY]).is_err());
        assert!(PhaseState::new(vec![1.0], vec![0.0, 1.0]).is_err());
    }
}
