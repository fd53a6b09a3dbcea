use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::locking::ParamImage;
use crate::real::{sum, Real};
use crate::ssm::Sequence;
use crate::symplectic::rollout;

use super::data::{make_masked_batch, MaskSpec, MaskedBatch, Span, SyntheticSystem, SystemKind};
use super::losses::{hamilton_loss, jepa_loss, stability_loss, total_loss, LossWeights};
use super::model::{Model, ModelConfig, WindowEncoder};

/// Attempts at re-masking an element whose forward pass lands on a top-K
/// selection boundary.
const RESAMPLE_ATTEMPTS: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub system: SystemKind,
    pub stiffness: f64,
    pub n_train: usize,
    pub n_heldout: usize,
    pub seq_len: usize,
    pub sample_interval: f64,
    pub mask_ratio: f64,
    pub model: ModelConfig,
    pub weights: LossWeights,
    /// Apply the stability term to every rollout state instead of the last.
    pub stability_all_steps: bool,
    pub lr: f64,
    pub momentum: f64,
    pub cosine: bool,
    pub epochs: usize,
    pub heldout_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Harmonic,
            stiffness: 1.0,
            n_train: 16,
            n_heldout: 8,
            seq_len: 32,
            sample_interval: 0.1,
            mask_ratio: 0.25,
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            stability_all_steps: false,
            lr: 3e-4,
            momentum: 0.0,
            cosine: false,
            epochs: 200,
            heldout_steps: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        SyntheticSystem::new(self.system, self.stiffness)?;
        if self.model.input_dim != 2 {
            return Err(Error::InvalidArgument("synthetic systems emit 2 channels; input_dim must be 2".into()));
        }
        if self.n_train == 0 || self.seq_len < 2 || self.heldout_steps == 0 {
            return Err(Error::InvalidArgument(
                "n_train, heldout_steps must be >= 1 and seq_len >= 2".into(),
            ));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!("mask_ratio must lie in (0, 1], got {}", self.mask_ratio)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

/// Loss components of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub jepa: T,
    pub hamilton: T,
    pub stability: T,
    pub total: T,
}

impl<T: Real> LossParts<T> {
    fn value(&self) -> LossParts<f64> {
        LossParts {
            jepa: self.jepa.value(),
            hamilton: self.hamilton.value(),
            stability: self.stability.value(),
            total: self.total.value(),
        }
    }
}

/// Full objective for one masked sequence. `targets` are detached inside
/// [`jepa_loss`], so target-side parameters never receive gradient.
pub fn objective<T: Real>(
    model: &Model<T>,
    context: &Sequence<f64>,
    spans: &[Span],
    targets: &[Vec<T>],
    cfg: &ModelConfig,
    weights: &LossWeights,
    stability_all_steps: bool,
) -> Result<LossParts<T>> {
    let pred = model.predict(context, spans, cfg)?;
    let jepa = jepa_loss(targets, &pred.embeddings)?;
    let n = T::cst(pred.rollouts.len() as f64);
    let hamilton = sum(pred.rollouts.iter().map(|r| hamilton_loss(&r.energies)).collect::<Result<Vec<_>>>()?) / n;
    let stability = if stability_all_steps {
        let terms: Vec<T> = pred
            .rollouts
            .iter()
            .flat_map(|r| r.states[1..].iter().map(|s| stability_loss(&s.h, weights.beta)))
            .collect();
        let count = T::cst(terms.len() as f64);
        sum(terms) / count
    } else {
        sum(pred.rollouts.iter().map(|r| stability_loss(&r.last_state().h, weights.beta))) / n
    };
    Ok(LossParts {
        jepa,
        hamilton,
        stability,
        total: total_loss(jepa, hamilton, stability, weights),
    })
}

/// Loss components and the gradient of `total` over the flat parameters.
pub fn loss_and_grad(
    model: &Model<f64>,
    batch: &MaskedBatch,
    cfg: &ModelConfig,
    weights: &LossWeights,
    stability_all_steps: bool,
) -> Result<(LossParts<f64>, Vec<f64>)> {
    let tape = Tape::new();
    let (m, leaves) = model.lift(&tape);
    let targets: Vec<Vec<_>> = batch
        .targets
        .iter()
        .map(|t| t.iter().map(|&v| Real::cst(v)).collect())
        .collect();
    let parts = objective(&m, &batch.context, &batch.spans, &targets, cfg, weights, stability_all_steps)?;
    let grads = tape.gradient(parts.total)?;
    Ok((parts.value(), grads.wrt_all(&leaves)))
}

/// Pairwise sum with a shape fixed by the number of inputs, so the result
/// does not depend on how the inputs were computed.
pub fn tree_sum(mut items: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        items = next;
    }
    items.pop()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 0 is the evaluation before any update.
    pub epoch: usize,
    pub jepa: f64,
    pub hamilton: f64,
    pub stability: f64,
    pub total: f64,
    /// Mean energy drift of long rollouts started from held-out sequences.
    pub heldout_drift: f64,
    /// Elements dropped after repeated selection-boundary hits.
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub metrics: Vec<EpochMetrics>,
    pub model: Model<f64>,
    pub target: WindowEncoder<f64>,
}

impl TrainReport {
    pub fn initial(&self) -> &EpochMetrics {
        &self.metrics[0]
    }

    pub fn last(&self) -> &EpochMetrics {
        self.metrics.last().expect("initial record always present")
    }

    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for m in &self.metrics {
            out.push_str(&serde_json::to_string(m)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Trained parameters under `model.`, the frozen target encoder under
    /// `target.`.
    pub fn checkpoint(&self) -> Result<ParamImage> {
        let mut img = ParamImage::new();
        self.model.write_image(&mut img, "model.")?;
        let mut res = Ok(());
        self.target.map_tensors::<f64>("target", &mut |name, shape, vals| {
            if res.is_ok() {
                res = img.insert(name, shape, vals.to_vec());
            }
            vals.to_vec()
        });
        res?;
        Ok(img)
    }
}

/// Everything derived from the seed before the first update.
struct Setup {
    train: Vec<Sequence<f64>>,
    batches: Vec<MaskedBatch>,
    heldout: Vec<Sequence<f64>>,
    target: WindowEncoder<f64>,
    model: Model<f64>,
}

fn setup(cfg: &TrainConfig) -> Result<Setup> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let system = SyntheticSystem::new(cfg.system, cfg.stiffness)?;
    let train = system.dataset(&mut rng, cfg.n_train, cfg.seq_len, cfg.sample_interval)?;
    let heldout = system.dataset(&mut rng, cfg.n_heldout, cfg.seq_len, cfg.sample_interval)?;
    let target = WindowEncoder::random(&mut rng, cfg.model.input_dim, cfg.model.embed_dim);
    let model = Model::init(&cfg.model, &mut rng)?;
    let batches = train
        .iter()
        .map(|s| make_masked_batch(s, &MaskSpec::Ratio(cfg.mask_ratio), &target, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Setup {
        train,
        batches,
        heldout,
        target,
        model,
    })
}

/// Mean drift of `heldout_steps` leapfrog steps started from each held-out
/// sequence's final encoder output.
pub fn heldout_drift(model: &Model<f64>, heldout: &[Sequence<f64>], cfg: &TrainConfig) -> Result<f64> {
    let mut drifts = Vec::with_capacity(heldout.len());
    for seq in heldout {
        let ctx = unmasked_context(seq)?;
        let ys = model.encode(&ctx, seq.len())?;
        let state = model.anchor(ys.last().map(Vec::as_slice))?;
        match rollout(&state, &model.bank, &cfg.model.integrator(cfg.heldout_steps)) {
            Ok(t) => drifts.push(hamilton_loss(&t.energies)?),
            Err(f) if matches!(f.error, Error::SelectionBoundary { .. }) => {
                log::warn!("held-out rollout hit a selection boundary; skipped");
            }
            Err(f) => return Err(f.error),
        }
    }
    if drifts.is_empty() {
        return Ok(0.0);
    }
    Ok(drifts.iter().sum::<f64>() / drifts.len() as f64)
}

fn unmasked_context(seq: &Sequence<f64>) -> Result<Sequence<f64>> {
    let d = seq.dim();
    let mut data = Vec::with_capacity(seq.len() * (d + 1));
    for row in seq.rows() {
        data.extend_from_slice(row);
        data.push(0.0);
    }
    Sequence::new(seq.len(), d + 1, data)
}

fn element_grad(
    cfg: &TrainConfig,
    model: &Model<f64>,
    setup: &Setup,
    idx: usize,
    epoch: usize,
) -> Result<Option<(LossParts<f64>, Vec<f64>)>> {
    let mut batch = setup.batches[idx].clone();
    for attempt in 0..=RESAMPLE_ATTEMPTS {
        match loss_and_grad(model, &batch, &cfg.model, &cfg.weights, cfg.stability_all_steps) {
            Err(Error::SelectionBoundary { upper, lower, gap }) if attempt < RESAMPLE_ATTEMPTS => {
                log::warn!(
                    "epoch {epoch}, element {idx}: experts {upper}/{lower} tie within {gap:e}; re-masking"
                );
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((epoch as u64) << 32) | ((idx as u64) << 8) | (attempt + 1));
                batch = make_masked_batch(
                    &setup.train[idx],
                    &MaskSpec::Ratio(cfg.mask_ratio),
                    &setup.target,
                    &mut rng,
                )?;
            }
            Err(Error::SelectionBoundary { .. }) => {
                log::warn!("epoch {epoch}, element {idx}: dropped after {RESAMPLE_ATTEMPTS} re-masks");
                return Ok(None);
            }
            other => return other.map(Some),
        }
    }
    unreachable!("loop returns on the final attempt")
}

/// Full-batch gradient descent on the synthetic system. Record `k` of the
/// report holds the losses after `k` updates.
pub fn train_toy(cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let setup = setup(cfg)?;
    let mut model = setup.model.clone();
    let (_, mut flat) = model.flatten();
    let mut velocity = vec![0.0; flat.len()];
    let mut metrics = Vec::with_capacity(cfg.epochs + 1);

    for epoch in 0..=cfg.epochs {
        let results = (0..setup.batches.len())
            .into_par_iter()
            .map(|i| element_grad(cfg, &model, &setup, i, epoch))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::NonFinite(what) => Error::Divergence { epoch, what },
                // epoch 0 ran on the same data, so a later failure comes from the parameters
                _ if epoch > 0 => Error::Divergence { epoch, what: "forward pass" },
                other => other,
            })?;
        let skipped = results.iter().filter(|r| r.is_none()).count();
        let used: Vec<_> = results.into_iter().flatten().collect();
        if used.is_empty() {
            return Err(Error::InvalidArgument(format!("epoch {epoch}: every element was dropped")));
        }
        let n = used.len() as f64;
        let mean = |f: fn(&LossParts<f64>) -> f64| {
            tree_sum(used.iter().map(|(p, _)| vec![f(p)]).collect()).expect("non-empty")[0] / n
        };
        let record = EpochMetrics {
            epoch,
            jepa: mean(|p| p.jepa),
            hamilton: mean(|p| p.hamilton),
            stability: mean(|p| p.stability),
            total: mean(|p| p.total),
            heldout_drift: heldout_drift(&model, &setup.heldout, cfg).map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence {
                    epoch,
                    what: "held-out drift",
                },
                _ if epoch > 0 => Error::Divergence {
                    epoch,
                    what: "held-out drift",
                },
                other => other,
            })?,
            skipped,
        };
        if !record.total.is_finite() {
            return Err(Error::Divergence { epoch, what: "loss" });
        }
        if !record.heldout_drift.is_finite() {
            return Err(Error::Divergence {
                epoch,
                what: "held-out drift",
            });
        }
        log::debug!("epoch {epoch}: total {:.6e} drift {:.6e}", record.total, record.heldout_drift);
        metrics.push(record);
        if epoch == cfg.epochs {
            break;
        }

        let grad = tree_sum(used.into_iter().map(|(_, g)| g).collect()).expect("non-empty");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch, what: "gradient" });
        }
        let lr = if cfg.cosine {
            0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos())
        } else {
            cfg.lr
        };
        for ((p, v), g) in flat.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v + g / n;
            *p -= lr * *v;
        }
        if flat.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                what: "parameters",
            });
        }
        model = model.with_flat(&flat)?;
    }

    Ok(TrainReport {
        config: cfg.clone(),
        metrics,
        model,
        target: setup.target,
    })
}
