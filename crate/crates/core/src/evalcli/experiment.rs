//! End-to-end run: train every requested objective on one corpus, score
//! them against the input reconstruction, write the report.

use std::path::Path;

use crate::error::Result;
use crate::trainer::{save_checkpoint, train_from, write_log_csv, EpochLog, Objective, TrainConfig, TrainState};

use super::config::ExperimentConfig;
use super::dataset::Dataset;
use super::report::{evaluate, report, Method, MetricsRow};

/// Table order.
pub const METHOD_ORDER: [Objective; 3] = [Objective::Noise2Noise, Objective::Consensus, Objective::Noise2Clean];

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<MetricsRow>,
    pub states: Vec<TrainState>,
}

/// Trains one objective with the experiment's schedule; checkpoints after
/// every epoch when `ckpt_dir` is given.
pub fn train_objective(
    train: &TrainConfig,
    objective: Objective,
    data: &Dataset,
    ckpt_dir: Option<&Path>,
    mut progress: impl FnMut(Objective, &EpochLog),
) -> Result<TrainState> {
    let cfg = TrainConfig { objective, ..*train };
    let state = TrainState::new(cfg, data.modality)?;
    train_from(state, &data.train, &data.test, |s, row| {
        progress(objective, row);
        if let Some(dir) = ckpt_dir {
            save_checkpoint(s, dir)?;
        }
        Ok(())
    })
}

/// Rows for the input reconstruction and each trained state, in table order.
pub fn score(data: &Dataset, states: &[TrainState]) -> Result<Vec<MetricsRow>> {
    let mut methods = vec![Method::Input];
    for o in METHOD_ORDER {
        if let Some(s) = states.iter().find(|s| s.config.objective == o) {
            methods.push(Method::Trained(o.label(), s));
        }
    }
    evaluate(&data.test, &methods)
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &Dataset,
    objectives: &[Objective],
    out_dir: Option<&Path>,
    mut progress: impl FnMut(Objective, &EpochLog),
) -> Result<ExperimentOutcome> {
    let mut states = Vec::new();
    for &o in objectives {
        let ckpt = out_dir.map(|d| d.join("checkpoints").join(o.label()));
        let s = train_objective(&cfg.train, o, data, ckpt.as_deref(), &mut progress)?;
        if let Some(d) = out_dir {
            write_log_csv(&d.join(format!("log_{}.csv", o.label())), &s.log)?;
        }
        states.push(s);
    }
    let rows = score(data, &states)?;
    if let Some(d) = out_dir {
        let mut methods = vec![Method::Input];
        for s in &states {
            methods.push(Method::Trained(s.config.objective.label(), s));
        }
        report(d, &rows, data.modality, data.test.first().map(|p| (p, &methods[..])))?;
    }
    Ok(ExperimentOutcome { rows, states })
}
