//! Experiment configuration files: UTF-8, one `key = value` per line, `#`
//! starts a comment, unknown and duplicate keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::ct_sim::{CtConfig, DoseModel};
use crate::error::{Error, Result};
use crate::model::checkpoint::parse_key_values;
use crate::mr_sim::{AmplifyMode, MrConfig};
use crate::pair::Modality;
use crate::trainer::{Objective, TrainConfig};

/// Every accepted key.
pub const KEYS: [&str; 23] = [
    "modality",
    "grid",
    "views",
    "detectors",
    "i0",
    "dose",
    "accel",
    "center_keep",
    "amplify_mode",
    "slices_train",
    "slices_test",
    "seed",
    "depth",
    "base_features",
    "patch",
    "batch",
    "patches_per_slice",
    "epochs",
    "lr",
    "beta_w",
    "beta_r",
    "objective",
    "out_dir",
];

pub const REQUIRED: [&str; 3] = ["modality", "grid", "seed"];

const CT_ONLY: [&str; 4] = ["views", "detectors", "i0", "dose"];
const MR_ONLY: [&str; 3] = ["accel", "center_keep", "amplify_mode"];

/// Acquisition settings of one modality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Acquisition {
    Ct(CtConfig),
    Mr(MrConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Keys exactly as written in the file.
    pub raw: BTreeMap<String, String>,
    pub modality: Modality,
    pub grid: usize,
    pub seed: u64,
    pub acquisition: Acquisition,
    pub slices_train: usize,
    pub slices_test: usize,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

fn value<T: FromStr>(raw: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    raw.get(key)
        .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("{key} = {v:?}: {e}"))))
        .transpose()
}

/// Parses and validates a configuration; absent optional keys take the
/// desk defaults of the chosen modality.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw = parse_key_values(text)?;
    let unknown: Vec<&str> = raw.keys().map(String::as_str).filter(|k| !KEYS.contains(k)).collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !raw.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
    }
    let modality = Modality::parse(&raw["modality"]).map_err(|e| Error::Config(e.to_string()))?;
    let foreign = match modality {
        Modality::Ct => &MR_ONLY[..],
        Modality::Mr => &CT_ONLY[..],
    };
    if let Some(k) = foreign.iter().find(|k| raw.contains_key(**k)) {
        return Err(Error::Config(format!("key {k} does not apply to {} experiments", modality.label())));
    }
    let grid: usize = value(&raw, "grid")?.expect("required");
    let seed: u64 = value(&raw, "seed")?.expect("required");

    let acquisition = match modality {
        Modality::Ct => {
            let d = CtConfig::desk(grid);
            let dose = DoseModel {
                i0: value(&raw, "i0")?.unwrap_or(d.dose.i0),
                dose: value(&raw, "dose")?.unwrap_or(d.dose.dose),
            };
            let c = CtConfig {
                views: value(&raw, "views")?.unwrap_or(d.views),
                detectors: value(&raw, "detectors")?.unwrap_or(d.detectors),
                dose,
                ..d
            };
            c.validate()?;
            Acquisition::Ct(c)
        }
        Modality::Mr => {
            let d = MrConfig::desk(grid);
            let amplify = match raw.get("amplify_mode") {
                Some(s) => AmplifyMode::parse(s)?,
                None => d.amplify,
            };
            let c = MrConfig {
                accel: value(&raw, "accel")?.unwrap_or(d.accel),
                center_keep: value(&raw, "center_keep")?.unwrap_or(d.center_keep),
                amplify,
                ..d
            };
            c.validate().map_err(|e| Error::Config(e.to_string()))?;
            Acquisition::Mr(c)
        }
    };

    let d = TrainConfig::desk(modality);
    let objective = match raw.get("objective") {
        Some(s) => Objective::parse(s)?,
        None => d.objective,
    };
    let train = TrainConfig {
        patch: value(&raw, "patch")?.unwrap_or(d.patch),
        batch: value(&raw, "batch")?.unwrap_or(d.batch),
        patches_per_slice: value(&raw, "patches_per_slice")?.unwrap_or(d.patches_per_slice),
        epochs: value(&raw, "epochs")?.unwrap_or(d.epochs),
        lr: value(&raw, "lr")?.unwrap_or(d.lr),
        beta_w: value(&raw, "beta_w")?.unwrap_or(d.beta_w),
        beta_r: value(&raw, "beta_r")?.unwrap_or(d.beta_r),
        seed,
        objective,
        depth: value(&raw, "depth")?.unwrap_or(d.depth),
        base_features: value(&raw, "base_features")?.unwrap_or(d.base_features),
    };
    train.validate()?;
    if train.patch > grid {
        return Err(Error::Config(format!("patch {} exceeds grid {grid}", train.patch)));
    }
    let slices_train = value(&raw, "slices_train")?.unwrap_or(200);
    let slices_test = value(&raw, "slices_test")?.unwrap_or(40);
    if slices_train == 0 {
        return Err(Error::Config("slices_train must be positive".into()));
    }
    let out_dir = raw.get("out_dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    Ok(ExperimentConfig {
        raw,
        modality,
        grid,
        seed,
        acquisition,
        slices_train,
        slices_test,
        train,
        out_dir,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
