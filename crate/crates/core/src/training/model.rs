//! The predictor: a window encoder feeding a selective SSM whose last
//! unmasked output seeds a phase state, which the expert bank integrates
//! across the masked span before a linear head maps positions to embeddings.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{ensure_dim, Error, Result};
use crate::hamiltonian::{ExpertBank, ExpertPotential, PhaseState};
use crate::linalg::Matrix;
use crate::locking::ParamImage;
use crate::real::{from_f64, Real};
use crate::ssm::{selective_scan, Selector, Sequence};
use crate::symplectic::{rollout, IntegratorConfig, Trajectory};

use super::data::Span;

type TensorFn<'a, T, U> = dyn FnMut(&str, &[usize], &[T]) -> Vec<U> + 'a;

fn map_matrix<T: Real, U: Real>(name: &str, m: &Matrix<T>, f: &mut TensorFn<'_, T, U>) -> Matrix<U> {
    Matrix::from_vec(m.rows(), m.cols(), f(name, &m.shape(), m.data())).expect("tensor map preserves length")
}

fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

/// `tanh(W · [x_{t−1}, x_t, x_{t+1}] + b)` with zero padding at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEncoder<T> {
    pub w: Matrix<T>,
    pub b: Vec<T>,
}

impl<T: Real> WindowEncoder<T> {
    pub fn new(w: Matrix<T>, b: Vec<T>) -> Result<Self> {
        ensure_dim("encoder bias", w.rows(), b.len())?;
        if !w.cols().is_multiple_of(3) {
            return Err(Error::InvalidArgument("encoder width must cover a 3-step window".into()));
        }
        Ok(Self { w, b })
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols() / 3
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn encode_at(&self, rows: &[Vec<T>], t: usize) -> Vec<T> {
        let d = self.input_dim();
        let mut window = Vec::with_capacity(3 * d);
        for off in [-1isize, 0, 1] {
            let i = t as isize + off;
            if i < 0 || i as usize >= rows.len() {
                window.extend(std::iter::repeat_n(T::zero(), d));
            } else {
                window.extend_from_slice(&rows[i as usize]);
            }
        }
        self.w
            .matvec(&window)
            .into_iter()
            .zip(&self.b)
            .map(|(v, &b)| (v + b).tanh())
            .collect()
    }

    pub fn encode(&self, rows: &[Vec<T>]) -> Vec<Vec<T>> {
        (0..rows.len()).map(|t| self.encode_at(rows, t)).collect()
    }

    pub fn map_tensors<U: Real>(&self, prefix: &str, f: &mut TensorFn<'_, T, U>) -> WindowEncoder<U> {
        WindowEncoder {
            w: map_matrix(&format!("{prefix}.w"), &self.w, f),
            b: f(&format!("{prefix}.b"), &[self.b.len()], &self.b),
        }
    }
}

impl WindowEncoder<f64> {
    pub fn random(rng: &mut impl Rng, input_dim: usize, output_dim: usize) -> Self {
        let fan_in = 3 * input_dim;
        let scale = (3.0 / fan_in as f64).sqrt();
        let w = uniform_matrix(rng, output_dim, fan_in, scale);
        let b = (0..output_dim).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self { w, b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpertKind {
    Quadratic,
    Feedforward,
}

impl std::str::FromStr for ExpertKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ExpertKind::Quadratic),
            "feedforward" => Ok(ExpertKind::Feedforward),
            other => Err(Error::InvalidArgument(format!("unknown expert kind `{other}`"))),
        }
    }
}

/// Initial momentum of a rollout seeded from an encoder output `h_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentumInit {
    /// `p_0 = 0`.
    Zero,
    /// `p_0 = P h_0` with a trainable `P`.
    Learned,
}

impl std::str::FromStr for MomentumInit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(MomentumInit::Zero),
            "learned" => Ok(MomentumInit::Learned),
            other => Err(Error::InvalidArgument(format!("unknown momentum init `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Channels of the observed sequence (the mask indicator is added on top).
    pub input_dim: usize,
    pub embed_dim: usize,
    pub latent_dim: usize,
    pub state_size: usize,
    pub context_width: usize,
    pub n_experts: usize,
    pub top_k: usize,
    pub expert: ExpertKind,
    pub expert_width: usize,
    pub momentum: MomentumInit,
    pub dt: f64,
    pub vsync: Option<Vec<f64>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 2,
            embed_dim: 4,
            latent_dim: 2,
            state_size: 4,
            context_width: 8,
            n_experts: 2,
            top_k: 1,
            expert: ExpertKind::Quadratic,
            expert_width: 8,
            momentum: MomentumInit::Zero,
            dt: 0.1,
            vsync: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("embed_dim", self.embed_dim),
            ("latent_dim", self.latent_dim),
            ("state_size", self.state_size),
            ("context_width", self.context_width),
            ("n_experts", self.n_experts),
            ("top_k", self.top_k),
            ("expert_width", self.expert_width),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if self.top_k > self.n_experts {
            return Err(Error::InvalidArgument(format!(
                "top_k = {} exceeds n_experts = {}",
                self.top_k, self.n_experts
            )));
        }
        self.integrator(1).validate()
    }

    pub fn integrator(&self, n_steps: usize) -> IntegratorConfig {
        IntegratorConfig {
            vsync: self.vsync.clone(),
            ..IntegratorConfig::leapfrog(self.dt, n_steps)
        }
    }
}

/// Trainable parameters. The selector's `rates` tensor is stored in log
/// space so that decay rates stay positive under unconstrained updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model<T> {
    pub context: WindowEncoder<T>,
    pub ssm: Selector<T>,
    pub bank: ExpertBank<T>,
    pub head_w: Matrix<T>,
    pub head_b: Vec<T>,
    /// Present for [`MomentumInit::Learned`].
    pub momentum_w: Option<Matrix<T>>,
}

/// Output of one forward pass over a masked sequence.
#[derive(Debug, Clone)]
pub struct Prediction<T> {
    /// One embedding per masked position, spans in order.
    pub embeddings: Vec<Vec<T>>,
    /// One rollout per span.
    pub rollouts: Vec<Trajectory<T>>,
}

impl<T: Real> Model<T> {
    pub fn latent_dim(&self) -> usize {
        self.bank.dim()
    }

    pub fn map_tensors<U: Real>(&self, f: &mut TensorFn<'_, T, U>) -> Model<U> {
        Model {
            context: self.context.map_tensors("context", f),
            ssm: self.ssm.map_tensors("ssm", f),
            bank: self.bank.map_tensors("bank", f),
            head_w: map_matrix("head.w", &self.head_w, f),
            head_b: f("head.b", &[self.head_b.len()], &self.head_b),
            momentum_w: self.momentum_w.as_ref().map(|m| map_matrix("momentum.w", m, f)),
        }
    }

    fn selector(&self) -> Selector<T> {
        Selector {
            rates: self.ssm.rates.iter().map(|r| r.exp()).collect(),
            ..self.ssm.clone()
        }
    }

    /// SSM outputs for the first `upto` positions of the (already masked)
    /// context.
    pub fn encode(&self, context: &Sequence<f64>, upto: usize) -> Result<Vec<Vec<T>>> {
        if upto == 0 {
            return Ok(Vec::new());
        }
        let rows: Vec<Vec<T>> = context.rows().take(upto + 1).map(from_f64).collect();
        let mut features = Vec::with_capacity(upto);
        for t in 0..upto {
            features.push(self.context.encode_at(&rows, t));
        }
        let seq = Sequence::from_rows(&features)?;
        let h0 = vec![T::zero(); self.ssm.state_size()];
        let out = selective_scan(&self.selector(), &seq, &h0)?;
        Ok(out.y.rows().map(<[T]>::to_vec).collect())
    }

    /// Phase state seeded from an SSM output row (the origin when there is
    /// no context).
    pub fn anchor(&self, y: Option<&[T]>) -> Result<PhaseState<T>> {
        let h = y.map_or_else(|| vec![T::zero(); self.latent_dim()], <[T]>::to_vec);
        match &self.momentum_w {
            Some(m) => {
                let p = m.matvec(&h);
                PhaseState::new(h, p)
            }
            None => PhaseState::at_rest(h),
        }
    }

    pub fn head(&self, h: &[T]) -> Vec<T> {
        self.head_w
            .matvec(h)
            .into_iter()
            .zip(&self.head_b)
            .map(|(v, &b)| v + b)
            .collect()
    }

    pub fn predict(&self, context: &Sequence<f64>, spans: &[Span], cfg: &ModelConfig) -> Result<Prediction<T>> {
        let upto = spans.iter().map(|s| s.start).max().unwrap_or(0);
        let ys = self.encode(context, upto)?;
        let mut embeddings = Vec::new();
        let mut rollouts = Vec::with_capacity(spans.len());
        for span in spans {
            let state = self.anchor(span.start.checked_sub(1).map(|i| ys[i].as_slice()))?;
            let traj = rollout(&state, &self.bank, &cfg.integrator(span.len))?;
            embeddings.extend(traj.states[1..].iter().map(|s| self.head(&s.h)));
            rollouts.push(traj);
        }
        Ok(Prediction { embeddings, rollouts })
    }
}

/// Name, shape and position of one tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

impl Model<f64> {
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let (din, dh, s, du) = (cfg.input_dim + 1, cfg.latent_dim, cfg.state_size, cfg.context_width);
        let context = WindowEncoder::random(rng, din, du);

        let ssm = Selector {
            delta_w: (0..du).map(|_| rng.random_range(-0.1..0.1)).collect(),
            delta_b: 0.0,
            rates: (0..s).map(|_| rng.random_range(0.5f64..2.0).ln()).collect(),
            b_gate_w: uniform_matrix(rng, s, du, 0.1),
            b_gate_b: vec![0.0; s],
            c_gate_w: uniform_matrix(rng, s, du, 0.1),
            c_gate_b: vec![0.0; s],
            b_base: uniform_matrix(rng, s, du, (1.0 / du as f64).sqrt()),
            c_base: uniform_matrix(rng, dh, s, (1.0 / s as f64).sqrt()),
            d: uniform_matrix(rng, dh, du, 0.1 / (du as f64).sqrt()),
        };

        let experts = (0..cfg.n_experts)
            .map(|_| match cfg.expert {
                ExpertKind::Quadratic => ExpertPotential::random_quadratic(rng, dh, 1.0),
                ExpertKind::Feedforward => ExpertPotential::random_feedforward(rng, dh, cfg.expert_width, 1.0),
            })
            .collect();
        let (router_w, router_b) = ExpertBank::random_router(rng, cfg.n_experts, dh, 1.0);
        let bank = ExpertBank::new(experts, router_w, router_b, cfg.top_k)?;

        let head_w = uniform_matrix(rng, cfg.embed_dim, dh, (1.0 / dh as f64).sqrt());
        let head_b = vec![0.0; cfg.embed_dim];
        let momentum_w = match cfg.momentum {
            MomentumInit::Zero => None,
            MomentumInit::Learned => Some(uniform_matrix(rng, dh, dh, 0.1)),
        };
        Ok(Self {
            context,
            ssm,
            bank,
            head_w,
            head_b,
            momentum_w,
        })
    }

    pub fn flatten(&self) -> (Vec<ParamEntry>, Vec<f64>) {
        let mut entries = Vec::new();
        let mut flat = Vec::new();
        self.map_tensors::<f64>(&mut |name, shape, vals| {
            entries.push(ParamEntry {
                name: name.to_string(),
                shape: shape.to_vec(),
                range: flat.len()..flat.len() + vals.len(),
            });
            flat.extend_from_slice(vals);
            vals.to_vec()
        });
        (entries, flat)
    }

    /// Same structure with values taken in order from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let mut pos = 0;
        let out = self.map_tensors::<f64>(&mut |_, _, vals| {
            let end = (pos + vals.len()).min(flat.len());
            let v = flat[pos.min(end)..end].to_vec();
            pos += vals.len();
            if v.len() == vals.len() {
                v
            } else {
                vals.to_vec()
            }
        });
        ensure_dim("flat parameters", pos, flat.len())?;
        Ok(out)
    }

    /// Every parameter becomes a leaf on `tape`; the leaves are returned in
    /// flat order.
    pub fn lift<'t>(&self, tape: &'t Tape) -> (Model<Var<'t>>, Vec<Var<'t>>) {
        let mut leaves = Vec::new();
        let model = self.map_tensors(&mut |_, _, vals| {
            let vs = tape.vars(vals);
            leaves.extend_from_slice(&vs);
            vs
        });
        (model, leaves)
    }

    pub fn write_image(&self, image: &mut ParamImage, prefix: &str) -> Result<()> {
        let mut result = Ok(());
        self.map_tensors::<f64>(&mut |name, shape, vals| {
            if result.is_ok() {
                result = image.insert(format!("{prefix}{name}"), shape, vals.to_vec());
            }
            vals.to_vec()
        });
        result
    }
}
