//! One function per subcommand. Each parses and validates its whole config
//! before touching the output directory.

use std::fs;
use std::path::Path;

use hssd::hamiltonian::{ExpertBank, ExpertPotential, PhaseState};
use hssd::linalg::Matrix;
use hssd::locking::{lock, verify_digest, LockRecord, ParamImage, Verification};
use hssd::memory::{CellGraph, CellId, Reduce};
use hssd::splat::{covariance_of, encode_splats, validate_splat, GaussianSplat};
use hssd::symplectic::{rollout, vsync_series, IntegratorConfig, Scheme};
use hssd::training::{
    ablate, rows_to_csv, train_toy, AblationAxis, ExpertKind, LossWeights, ModelConfig, MomentumInit, SystemKind,
    TrainConfig,
};
use hssd::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{key, required, Key, RunConfig};
use crate::error::{CliError, EXIT_OK, EXIT_VIOLATION};

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read(path: &Path, what: &str) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::validation(format!("cannot read {what} {}: {e}", path.display())))
}

fn to_json(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("json values always serialize")
}

// ---- simulate ----------------------------------------------------------------

pub const SIMULATE: &[Key] = &[
    key("potential", "quadratic", "expert family: quadratic or feedforward"),
    key("dim", "1", "latent dimension"),
    key("stiffness", "1.0", "k in V = k |h|^2 / 2 for the single quadratic expert"),
    key("n_experts", "1", "experts in the bank (random unless a single quadratic)"),
    key("top_k", "1", "active experts per step"),
    key("width", "8", "hidden width of feedforward experts"),
    key("h0", "1.0", "initial position, comma separated"),
    key("p0", "0.0", "initial momentum, comma separated"),
    key("dt", "0.1", "base step size"),
    key("n_steps", "10000", "number of steps"),
    key("scheme", "leapfrog", "leapfrog, euler or rk4"),
    key("vsync", "", "V-Sync frequencies, comma separated; empty keeps dt fixed"),
];

fn simulation_bank(cfg: &RunConfig) -> Result<ExpertBank<f64>, CliError> {
    let kind: ExpertKind = cfg.get("potential")?;
    let dim: usize = cfg.get("dim")?;
    let n: usize = cfg.get("n_experts")?;
    let k: usize = cfg.get("top_k")?;
    if dim == 0 {
        return Err(CliError::validation("dim must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed()?);
    let bank = match (kind, n) {
        (ExpertKind::Quadratic, 1) => {
            let stiffness: f64 = cfg.get("stiffness")?;
            let q = Matrix::from_vec(dim, dim, (0..dim * dim).map(|i| if i % (dim + 1) == 0 { stiffness } else { 0.0 }).collect())
                .map_err(CliError::invalid)?;
            ExpertPotential::quadratic(q, vec![0.0; dim], 0.0).and_then(ExpertBank::single)
        }
        (ExpertKind::Quadratic, _) => ExpertBank::random_quadratic(&mut rng, dim, n, k),
        (ExpertKind::Feedforward, _) => ExpertBank::random_feedforward(&mut rng, dim, n, k, cfg.get("width")?),
    };
    bank.map_err(CliError::invalid)
}

pub fn simulate(cfg: &RunConfig) -> Result<u8, CliError> {
    let bank = simulation_bank(cfg)?;
    let state = PhaseState::new(cfg.list("h0")?, cfg.list("p0")?).map_err(CliError::invalid)?;
    if state.dim() != bank.dim() {
        return Err(CliError::validation(format!("h0/p0 have {} entries but dim is {}", state.dim(), bank.dim())));
    }
    let scheme: Scheme = cfg.get("scheme")?;
    let freqs: Vec<f64> = cfg.list("vsync")?;
    let mut integ = IntegratorConfig::leapfrog(cfg.get("dt")?, cfg.get("n_steps")?).with_scheme(scheme);
    if !freqs.is_empty() {
        integ = integ.with_vsync(freqs);
    }
    integ.validate().map_err(CliError::invalid)?;
    state.check_finite().map_err(CliError::invalid)?;

    let out = cfg.out_dir();
    create_out(&out)?;
    let (traj, failure) = match rollout(&state, &bank, &integ) {
        Ok(t) => (t, None),
        Err(f) => (*f.partial, Some(f.error)),
    };
    write(&out, "trajectory.csv", traj.to_csv())?;
    write(&out, "trajectory.json", traj.to_json().map_err(CliError::failed)?)?;
    let summary = traj.drift_summary();
    let doc = json!({
        "scheme": scheme,
        "steps": summary.steps,
        "initial_energy": summary.initial_energy,
        "max_abs_drift": summary.max_abs,
        "mean_abs_drift": summary.mean_abs,
        "max_rel_drift": summary.max_rel,
        "completed": failure.is_none(),
    });
    write(&out, "summary.json", serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
    println!("{}", to_json(&doc));
    match failure {
        None => Ok(EXIT_OK),
        Some(e) => Err(CliError::runtime(format!("rollout stopped after {} steps: {e}", summary.steps))),
    }
}

// ---- vsync -------------------------------------------------------------------

pub const VSYNC: &[Key] = &[
    key("dt", "0.001", "base step size in seconds"),
    key("freqs", "30,100,10", "oscillator frequencies in Hz"),
    key("count", "100", "number of steps to tabulate"),
];

pub fn vsync(cfg: &RunConfig) -> Result<u8, CliError> {
    let dt: f64 = cfg.get("dt")?;
    let freqs: Vec<f64> = cfg.list("freqs")?;
    let count: u64 = cfg.get("count")?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CliError::validation(format!("dt must be > 0, got {dt}")));
    }
    let series = vsync_series(dt, count, &freqs).map_err(CliError::invalid)?;

    let out = cfg.out_dir();
    create_out(&out)?;
    let mut csv = String::from("n,dt_eff\n");
    for (n, v) in series.iter().enumerate() {
        csv.push_str(&format!("{n},{v:e}\n"));
    }
    write(&out, "vsync.csv", csv)?;
    let mean = if series.is_empty() { 0.0 } else { series.iter().sum::<f64>() / series.len() as f64 };
    let doc = json!({
        "dt": dt,
        "count": count,
        "mean_dt_eff": mean,
        "min_dt_eff": series.iter().copied().fold(f64::INFINITY, f64::min),
        "max_dt_eff": series.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    println!("{}", to_json(&doc));
    Ok(EXIT_OK)
}

// ---- train / ablate ----------------------------------------------------------

pub const TRAIN: &[Key] = &[
    key("system", "harmonic", "harmonic, double-well or pendulum"),
    key("stiffness", "1.0", "system stiffness k"),
    key("n_train", "16", "training sequences"),
    key("n_heldout", "8", "held-out sequences for the drift metric"),
    key("seq_len", "32", "samples per sequence"),
    key("sample_interval", "0.1", "time between samples"),
    key("mask_ratio", "0.25", "fraction of each sequence masked"),
    key("embed_dim", "4", "embedding width"),
    key("latent_dim", "2", "phase-space dimension"),
    key("state_size", "4", "SSM state size"),
    key("context_width", "8", "context encoder width"),
    key("n_experts", "2", "experts in the bank"),
    key("top_k", "1", "active experts"),
    key("expert", "quadratic", "quadratic or feedforward"),
    key("expert_width", "8", "hidden width of feedforward experts"),
    key("momentum_init", "zero", "zero or learned"),
    key("dt", "0.1", "rollout step size"),
    key("vsync", "", "V-Sync frequencies for rollouts; empty keeps dt fixed"),
    key("lambda_h", "0.1", "weight of the energy-drift term"),
    key("lambda_s", "0.01", "weight of the stability term"),
    key("beta", "1.0", "stability radius"),
    key("stability_all_steps", "false", "apply the stability term at every rollout step"),
    key("lr", "3e-4", "learning rate"),
    key("momentum", "0.0", "SGD momentum"),
    key("cosine", "false", "cosine learning-rate decay"),
    key("epochs", "200", "training epochs"),
    key("heldout_steps", "100", "rollout length for the held-out drift"),
];

pub const ABLATE_EXTRA: &[Key] = &[
    key("axes", "hamiltonian", "comma separated subset of hamiltonian, vsync, smoe"),
    key("seeds", "5", "number of paired seeds, starting at `seed`"),
    key("vsync_freqs", "30,100,10", "frequencies for the vsync variant"),
];

pub fn ablate_schema() -> Vec<Key> {
    TRAIN
        .iter()
        .chain(ABLATE_EXTRA)
        .map(|k| Key {
            name: k.name,
            default: k.default,
            help: k.help,
        })
        .collect()
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig, CliError> {
    let freqs: Vec<f64> = cfg.list("vsync")?;
    let momentum_init: MomentumInit = cfg.get("momentum_init")?;
    let system: SystemKind = cfg.get("system")?;
    let tc = TrainConfig {
        system,
        stiffness: cfg.get("stiffness")?,
        n_train: cfg.get("n_train")?,
        n_heldout: cfg.get("n_heldout")?,
        seq_len: cfg.get("seq_len")?,
        sample_interval: cfg.get("sample_interval")?,
        mask_ratio: cfg.get("mask_ratio")?,
        model: ModelConfig {
            embed_dim: cfg.get("embed_dim")?,
            latent_dim: cfg.get("latent_dim")?,
            state_size: cfg.get("state_size")?,
            context_width: cfg.get("context_width")?,
            n_experts: cfg.get("n_experts")?,
            top_k: cfg.get("top_k")?,
            expert: cfg.get("expert")?,
            expert_width: cfg.get("expert_width")?,
            momentum: momentum_init,
            dt: cfg.get("dt")?,
            vsync: if freqs.is_empty() { None } else { Some(freqs) },
            ..ModelConfig::default()
        },
        weights: LossWeights {
            lambda_h: cfg.get("lambda_h")?,
            lambda_s: cfg.get("lambda_s")?,
            beta: cfg.get("beta")?,
        },
        stability_all_steps: cfg.get("stability_all_steps")?,
        lr: cfg.get("lr")?,
        momentum: cfg.get("momentum")?,
        cosine: cfg.get("cosine")?,
        epochs: cfg.get("epochs")?,
        heldout_steps: cfg.get("heldout_steps")?,
        seed: cfg.seed()?,
    };
    tc.validate().map_err(CliError::invalid)?;
    Ok(tc)
}

pub fn train(cfg: &RunConfig) -> Result<u8, CliError> {
    let tc = train_config(cfg)?;
    let out = cfg.out_dir();
    create_out(&out)?;
    let report = train_toy(&tc).map_err(CliError::failed)?;
    write(&out, "metrics.jsonl", report.to_json_lines().map_err(CliError::failed)?)?;
    let ckpt = report.checkpoint().map_err(CliError::failed)?.to_bytes();
    write(&out, "checkpoint.bin", &ckpt)?;
    let (first, last) = (report.initial(), report.last());
    println!(
        "{}",
        to_json(&json!({
            "epochs": tc.epochs,
            "initial_jepa": first.jepa,
            "final_jepa": last.jepa,
            "final_total": last.total,
            "final_heldout_drift": last.heldout_drift,
            "checkpoint_bytes": ckpt.len(),
        }))
    );
    Ok(EXIT_OK)
}

pub fn ablate_cmd(cfg: &RunConfig) -> Result<u8, CliError> {
    let tc = train_config(cfg)?;
    let axes: Vec<AblationAxis> = cfg.list("axes")?;
    if axes.is_empty() {
        return Err(CliError::validation(
            "axes is empty; usage: --set axes=hamiltonian[,vsync][,smoe]",
        ));
    }
    let n_seeds: u64 = cfg.get("seeds")?;
    if n_seeds == 0 {
        return Err(CliError::validation("seeds must be >= 1"));
    }
    let seeds: Vec<u64> = (0..n_seeds).map(|i| tc.seed.wrapping_add(i)).collect();
    let freqs: Vec<f64> = cfg.list("vsync_freqs")?;
    if axes.contains(&AblationAxis::Vsync) && freqs.is_empty() {
        return Err(CliError::validation("the vsync axis needs vsync_freqs"));
    }

    let out = cfg.out_dir();
    create_out(&out)?;
    let rows = ablate(&tc, &axes, &seeds, &freqs).map_err(CliError::failed)?;
    write(&out, "ablation.csv", rows_to_csv(&rows))?;
    write(&out, "ablation.json", serde_json::to_string_pretty(&rows).expect("json") + "\n")?;
    for r in &rows {
        println!(
            "{}",
            to_json(&json!({
                "axis": r.axis,
                "variant": r.variant,
                "median_heldout_drift": r.median_heldout_drift,
                "median_final_jepa": r.median_final_jepa,
            }))
        );
    }
    Ok(EXIT_OK)
}

// ---- lock / verify -----------------------------------------------------------

pub const LOCK: &[Key] = &[
    required("checkpoint", "checkpoint file in the canonical parameter format"),
    key("salt", "", "salt appended to the checkpoint bytes before hashing"),
    key("record", "", "where to write the lock record (default <out>/lock.json)"),
];

pub const VERIFY: &[Key] = &[
    required("checkpoint", "checkpoint file to check"),
    required("record", "lock record written by `lock`"),
];

pub fn lock_cmd(cfg: &RunConfig) -> Result<u8, CliError> {
    let bytes = read(&cfg.path("checkpoint"), "checkpoint")?;
    let image = ParamImage::from_bytes(&bytes).map_err(CliError::invalid)?;
    if image.to_bytes() != bytes {
        return Err(CliError::validation("checkpoint is not in canonical form"));
    }
    let record = lock(&image, cfg.raw("salt").as_bytes());
    let path = match cfg.raw("record") {
        "" => {
            let out = cfg.out_dir();
            create_out(&out)?;
            out.join("lock.json")
        }
        p => Path::new(p).to_path_buf(),
    };
    let text = record.to_json().map_err(CliError::failed)?;
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
    println!("{}", record.digest_hex());
    Ok(EXIT_OK)
}

pub fn verify_cmd(cfg: &RunConfig) -> Result<u8, CliError> {
    let text = read(&cfg.path("record"), "lock record")?;
    let record = std::str::from_utf8(&text)
        .map_err(|e| Error::InvalidArgument(e.to_string()))
        .and_then(LockRecord::from_json)
        .map_err(|e| CliError::validation(format!("lock record: {e}")))?;
    let bytes = read(&cfg.path("checkpoint"), "checkpoint")?;

    let report = if let Err(e) = ParamImage::from_bytes(&bytes) {
        json!({ "status": "violation", "reason": "malformed-checkpoint", "detail": e.to_string() })
    } else {
        match verify_digest(&bytes, &record.salt, &record) {
            Verification::Verified => json!({ "status": "verified", "digest": record.digest_hex() }),
            Verification::Violation { expected, found } => json!({
                "status": "violation",
                "reason": "digest-mismatch",
                "expected": expected,
                "found": found,
            }),
        }
    };
    println!("{}", to_json(&report));
    Ok(if report["status"] == "verified" { EXIT_OK } else { EXIT_VIOLATION })
}

// ---- cells -------------------------------------------------------------------

pub const CELLS: &[Key] = &[
    key("snapshot", "", "existing graph snapshot to inspect; empty builds a random forest"),
    key("cells", "20", "cells in a generated forest"),
    key("capacity", "16", "buffer capacity per cell"),
    key("latent_dim", "4", "memory vector width"),
    key("items", "100", "memories inserted into a generated forest"),
    key("alpha", "0.5", "blend factor for the root context broadcast"),
    key("reduce", "mean", "summary reduction: mean, max or last"),
];

fn random_forest(cfg: &RunConfig) -> Result<CellGraph, CliError> {
    let n: u32 = cfg.get("cells")?;
    let dim: usize = cfg.get("latent_dim")?;
    let items: usize = cfg.get("items")?;
    let alpha: f64 = cfg.get("alpha")?;
    let mut g = CellGraph::new(dim, cfg.get("capacity")?).map_err(CliError::invalid)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CliError::validation(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed()?);
    for id in 0..n {
        g.add_cell(id).map_err(CliError::failed)?;
        if id > 0 && rng.random_bool(0.8) {
            g.add_child(rng.random_range(0..id), id).map_err(CliError::failed)?;
        }
    }
    if n > 0 {
        for _ in 0..items {
            let id: CellId = rng.random_range(0..n);
            let v = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            g.insert_memory(id, v).map_err(CliError::failed)?;
        }
    }
    for root in g.roots() {
        let ctx: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        g.broadcast_context(root, &ctx, alpha).map_err(CliError::failed)?;
    }
    Ok(g)
}

pub fn cells(cfg: &RunConfig) -> Result<u8, CliError> {
    let reduce: Reduce = cfg.get("reduce")?;
    let graph = match cfg.raw("snapshot") {
        "" => random_forest(cfg)?,
        p => {
            let text = read(Path::new(p), "snapshot")?;
            let text = String::from_utf8(text).map_err(|e| CliError::validation(format!("snapshot: {e}")))?;
            CellGraph::from_json(&text).map_err(|e| CliError::validation(format!("snapshot: {e}")))?
        }
    };
    graph.check_invariants().map_err(CliError::failed)?;
    let summaries: Vec<_> = graph
        .roots()
        .into_iter()
        .map(|r| graph.report_summary(r, reduce).map(|s| json!({ "root": r, "summary": s })))
        .collect::<Result<_, _>>()
        .map_err(CliError::failed)?;

    let out = cfg.out_dir();
    create_out(&out)?;
    write(&out, "snapshot.json", graph.to_json().map_err(CliError::failed)? + "\n")?;
    write(&out, "summaries.json", serde_json::to_string_pretty(&summaries).expect("json") + "\n")?;
    println!("{}", to_json(&json!({ "cells": graph.len(), "roots": summaries.len() })));
    Ok(EXIT_OK)
}

// ---- splats ------------------------------------------------------------------

pub const SPLATS: &[Key] = &[required("input", "JSON array of 14-value splat vectors")];

pub fn splats(cfg: &RunConfig) -> Result<u8, CliError> {
    let text = read(&cfg.path("input"), "splat input")?;
    let raws: Vec<Vec<f64>> =
        serde_json::from_slice(&text).map_err(|e| CliError::validation(format!("splat input: {e}")))?;
    let mut valid: Vec<GaussianSplat> = Vec::with_capacity(raws.len());
    let mut problems = Vec::new();
    for (i, raw) in raws.iter().enumerate() {
        match validate_splat(raw) {
            Ok(s) => valid.push(s),
            Err(Error::InvalidSplat(vs)) => {
                for v in vs {
                    problems.push(json!({ "index": i, "field": v.field, "message": v.message }));
                }
            }
            Err(e) => problems.push(json!({ "index": i, "field": null, "message": e.to_string() })),
        }
    }
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("{}", to_json(p));
        }
        return Err(CliError::validation(format!("{} splat field violation(s)", problems.len())));
    }

    let out = cfg.out_dir();
    create_out(&out)?;
    let covs: Vec<_> = valid.iter().map(|s| json!({ "covariance": covariance_of(s) })).collect();
    write(&out, "covariances.json", serde_json::to_string_pretty(&covs).expect("json") + "\n")?;
    write(&out, "splats.bin", encode_splats(&valid))?;
    println!("{}", to_json(&json!({ "splats": valid.len() })));
    Ok(EXIT_OK)
}
