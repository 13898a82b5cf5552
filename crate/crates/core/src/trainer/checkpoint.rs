//! Training checkpoints: a directory holding
//!
//! * `theta1.{cndt,txt}` and, for network pairs, `theta2.{cndt,txt}`
//! * `adam1_m.cndt`, `adam1_v.cndt` (and `adam2_*`)
//! * `state.txt`: config, epoch counter, config hash, Adam step counts
//! * `log.csv`: the training log so far

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::checkpoint::parse_key_values;
use crate::model::{load_params, save_params, AdamState, ModelParams};
use crate::numerics::{load_tensor, save_tensor, TensorData};
use crate::pair::Modality;

use super::{EpochLog, Objective, TrainConfig, TrainState};

const LOG_HEADER: [&str; 7] = ["epoch", "L_n", "L_w", "L_r", "L", "val_rmse", "val_ssim"];

fn save_adam(dir: &Path, stem: &str, adam: &AdamState) -> Result<()> {
    save_tensor(dir.join(format!("{stem}_m.cndt")), &[adam.m.len()], &TensorData::F64(adam.m.clone()))?;
    save_tensor(dir.join(format!("{stem}_v.cndt")), &[adam.v.len()], &TensorData::F64(adam.v.clone()))
}

fn load_adam(dir: &Path, stem: &str, len: usize, t: u64, lr: f64) -> Result<AdamState> {
    let mut adam = AdamState::new(len, lr);
    for (suffix, slot) in [("m", &mut adam.m), ("v", &mut adam.v)] {
        let path = dir.join(format!("{stem}_{suffix}.cndt"));
        let file = load_tensor(&path)?;
        if file.dims != [len] {
            return Err(Error::Malformed {
                path,
                reason: format!("dims {:?}, expected [{len}]", file.dims),
            });
        }
        *slot = file.data.into_f64()?;
    }
    adam.t = t;
    Ok(adam)
}

/// Writes the training log as CSV.
pub fn write_log_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LOG_HEADER)?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            r.l_n.to_string(),
            r.l_w.to_string(),
            r.l_r.to_string(),
            r.total.to_string(),
            r.val_rmse.to_string(),
            r.val_ssim.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_log_csv(path: &Path) -> Result<Vec<EpochLog>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let bad = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    if rdr.headers()?.iter().ne(LOG_HEADER) {
        return Err(bad("unexpected log header".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("column {i} of {:?}", rec)))
        };
        rows.push(EpochLog {
            epoch: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("epoch column".into()))?,
            l_n: f(1)?,
            l_w: f(2)?,
            l_r: f(3)?,
            total: f(4)?,
            val_rmse: f(5)?,
            val_ssim: f(6)?,
        });
    }
    Ok(rows)
}

fn state_text(s: &TrainState) -> String {
    let c = &s.config;
    let mut t = String::new();
    let _ = writeln!(t, "modality = {}", s.modality.label());
    let _ = writeln!(t, "objective = {}", c.objective);
    let _ = writeln!(t, "patch = {}", c.patch);
    let _ = writeln!(t, "batch = {}", c.batch);
    let _ = writeln!(t, "patches_per_slice = {}", c.patches_per_slice);
    let _ = writeln!(t, "epochs = {}", c.epochs);
    let _ = writeln!(t, "lr = {}", c.lr);
    let _ = writeln!(t, "beta_w = {}", c.beta_w);
    let _ = writeln!(t, "beta_r = {}", c.beta_r);
    let _ = writeln!(t, "seed = {}", c.seed);
    let _ = writeln!(t, "depth = {}", c.depth);
    let _ = writeln!(t, "base_features = {}", c.base_features);
    let _ = writeln!(t, "config_hash = {}", c.hash());
    let _ = writeln!(t, "epoch = {}", s.epoch);
    let _ = writeln!(t, "freeze_theta2 = {}", s.freeze_theta2);
    if let Some(r) = s.reference_ln {
        let _ = writeln!(t, "reference_ln = {r}");
    }
    let _ = writeln!(t, "adam1_t = {}", s.adam1.t);
    if let Some(a) = &s.adam2 {
        let _ = writeln!(t, "adam2_t = {}", a.t);
    }
    t
}

pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_params(dir, "theta1", &state.theta1)?;
    save_adam(dir, "adam1", &state.adam1)?;
    if let (Some(t2), Some(a2)) = (&state.theta2, &state.adam2) {
        save_params(dir, "theta2", t2)?;
        save_adam(dir, "adam2", a2)?;
    }
    write_log_csv(&dir.join("log.csv"), &state.log)?;
    let path = dir.join("state.txt");
    fs::write(&path, state_text(state)).map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Config(format!("checkpoint state lacks {key:?}")))?;
    raw.parse()
        .map_err(|e| Error::Config(format!("checkpoint state {key} = {raw:?}: {e}")))
}

/// Loads a checkpoint. With `expected`, the stored config hash must match
/// it (the epoch budget may differ) and the returned state adopts its epoch
/// budget.
pub fn load_checkpoint(dir: &Path, expected: Option<&TrainConfig>) -> Result<TrainState> {
    let path = dir.join("state.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let map = parse_key_values(&text)?;
    let config = TrainConfig {
        patch: field(&map, "patch")?,
        batch: field(&map, "batch")?,
        patches_per_slice: field(&map, "patches_per_slice")?,
        epochs: field(&map, "epochs")?,
        lr: field(&map, "lr")?,
        beta_w: field(&map, "beta_w")?,
        beta_r: field(&map, "beta_r")?,
        seed: field(&map, "seed")?,
        objective: Objective::parse(&field::<String>(&map, "objective")?)?,
        depth: field(&map, "depth")?,
        base_features: field(&map, "base_features")?,
    };
    let stored_hash: String = field(&map, "config_hash")?;
    if stored_hash != config.hash() {
        return Err(Error::Config(format!(
            "checkpoint state is inconsistent: hash {stored_hash} vs recomputed {}",
            config.hash()
        )));
    }
    let config = match expected {
        Some(e) if e.hash() != stored_hash => {
            return Err(Error::Config(format!(
                "checkpoint was trained with config {stored_hash}, requested {}",
                e.hash()
            )))
        }
        Some(e) => TrainConfig { epochs: e.epochs, ..config },
        None => config,
    };
    let modality = Modality::parse(&field::<String>(&map, "modality")?)?;
    let theta1: ModelParams = load_params(dir, "theta1")?;
    if theta1.config != config.unet(modality) {
        return Err(Error::Config("theta1 architecture disagrees with the recorded config".into()));
    }
    let adam1 = load_adam(dir, "adam1", theta1.len(), field(&map, "adam1_t")?, config.lr)?;
    let (theta2, adam2) = if config.objective.is_pair() {
        let t2 = load_params(dir, "theta2")?;
        let a2 = load_adam(dir, "adam2", t2.len(), field(&map, "adam2_t")?, config.lr)?;
        (Some(t2), Some(a2))
    } else {
        (None, None)
    };
    let reference_ln = match map.get("reference_ln") {
        Some(_) => Some(field(&map, "reference_ln")?),
        None => None,
    };
    let log = read_log_csv(&dir.join("log.csv"))?;
    let epoch: usize = field(&map, "epoch")?;
    if log.len() != epoch {
        return Err(Error::Config(format!("log has {} rows for {epoch} epochs", log.len())));
    }
    Ok(TrainState {
        config,
        modality,
        theta1,
        adam1,
        theta2,
        adam2,
        epoch,
        freeze_theta2: field(&map, "freeze_theta2")?,
        reference_ln,
        log,
    })
}
