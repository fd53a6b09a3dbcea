//! Paired-seed comparisons along the ablation axes.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::train::{train_toy, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    /// `λ_H = 0` against the configured weight.
    Hamiltonian,
    /// Fixed step against a V-Sync modulated step.
    Vsync,
    /// A single expert against sixteen experts with top-2 routing.
    Smoe,
}

impl FromStr for AblationAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamiltonian" => Ok(AblationAxis::Hamiltonian),
            "vsync" => Ok(AblationAxis::Vsync),
            "smoe" => Ok(AblationAxis::Smoe),
            other => Err(Error::InvalidArgument(format!(
                "unknown ablation axis `{other}` (expected hamiltonian, vsync or smoe)"
            ))),
        }
    }
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Hamiltonian => "hamiltonian",
            AblationAxis::Vsync => "vsync",
            AblationAxis::Smoe => "smoe",
        }
    }

    /// `(label, config)` for the ablated and the full variant, in that order.
    fn variants(self, base: &TrainConfig, vsync_freqs: &[f64]) -> [(String, TrainConfig); 2] {
        match self {
            AblationAxis::Hamiltonian => {
                let on = if base.weights.lambda_h > 0.0 { base.weights.lambda_h } else { 0.1 };
                let mut off_cfg = base.clone();
                off_cfg.weights.lambda_h = 0.0;
                let mut on_cfg = base.clone();
                on_cfg.weights.lambda_h = on;
                [("lambda_h=0".into(), off_cfg), (format!("lambda_h={on}"), on_cfg)]
            }
            AblationAxis::Vsync => {
                let mut off_cfg = base.clone();
                off_cfg.model.vsync = None;
                let mut on_cfg = base.clone();
                on_cfg.model.vsync = Some(vsync_freqs.to_vec());
                [("fixed_dt".into(), off_cfg), ("vsync".into(), on_cfg)]
            }
            AblationAxis::Smoe => {
                let mut one = base.clone();
                one.model.n_experts = 1;
                one.model.top_k = 1;
                let mut many = base.clone();
                many.model.n_experts = 16;
                many.model.top_k = 2;
                [("experts=1".into(), one), ("experts=16,k=2".into(), many)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub variant: String,
    pub seeds: Vec<u64>,
    /// Final held-out drift per seed, in seed order.
    pub drifts: Vec<f64>,
    pub median_heldout_drift: f64,
    pub median_final_jepa: f64,
    pub median_final_total: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Two rows per axis (ablated first), each the median over `seeds`. Runs are
/// independent and execute in parallel.
pub fn ablate(base: &TrainConfig, axes: &[AblationAxis], seeds: &[u64], vsync_freqs: &[f64]) -> Result<Vec<AblationRow>> {
    if axes.is_empty() {
        return Err(Error::InvalidArgument("at least one ablation axis is required".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let variants: Vec<(AblationAxis, String, TrainConfig)> = axes
        .iter()
        .flat_map(|&axis| axis.variants(base, vsync_freqs).map(|(label, cfg)| (axis, label, cfg)))
        .collect();
    for (_, _, cfg) in &variants {
        cfg.validate()?;
    }
    let jobs: Vec<(usize, TrainConfig)> = variants
        .iter()
        .enumerate()
        .flat_map(|(v, (_, _, cfg))| {
            seeds.iter().map(move |&seed| {
                let mut c = cfg.clone();
                c.seed = seed;
                (v, c)
            })
        })
        .collect();
    let finals = jobs
        .par_iter()
        .map(|(_, cfg)| train_toy(cfg).map(|r| r.last().clone()))
        .collect::<Result<Vec<_>>>()?;

    Ok(variants
        .into_iter()
        .enumerate()
        .map(|(v, (axis, variant, _))| {
            let runs: Vec<_> = jobs
                .iter()
                .zip(&finals)
                .filter(|((j, _), _)| *j == v)
                .map(|(_, m)| m)
                .collect();
            let drifts: Vec<f64> = runs.iter().map(|m| m.heldout_drift).collect();
            let jepa: Vec<f64> = runs.iter().map(|m| m.jepa).collect();
            let total: Vec<f64> = runs.iter().map(|m| m.total).collect();
            AblationRow {
                axis,
                variant,
                seeds: seeds.to_vec(),
                median_heldout_drift: median(&drifts),
                median_final_jepa: median(&jepa),
                median_final_total: median(&total),
                drifts,
            }
        })
        .collect())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn rows_to_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("axis,variant,seeds,median_heldout_drift,median_final_jepa,median_final_total\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:e},{:e}",
            r.axis.name(),
            csv_field(&r.variant),
            r.seeds.len(),
            r.median_heldout_drift,
            r.median_final_jepa,
            r.median_final_total
        );
    }
    out
}
