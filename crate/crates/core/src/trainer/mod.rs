//! Patch-based mini-batch training of a consensus network pair and of the
//! single-network baselines.
//!
//! Randomness: `Rng::new(seed)` is the master; network initialization uses
//! streams `u64::MAX` (Θ1) and `u64::MAX - 1` (Θ2), epoch `e` (1-based)
//! uses stream `e`. Baselines therefore start from the same Θ1 as the
//! consensus pair, and a resumed run replays exactly.

mod checkpoint;
mod config;
mod inference;
mod patches;

pub use checkpoint::{load_checkpoint, save_checkpoint, write_log_csv};
pub use config::{default_betas, Objective, TrainConfig};
pub use inference::{apply_tiled, apply_whole, denoise_with, receptive_radius};
pub use patches::{extract_patches, stack, PatchTuple};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::evalcli::metrics::{report_rmse, report_ssim, SsimConfig};
use crate::losses::{
    aggregate, loss_consensus, loss_consistency, loss_noise2clean, loss_noise2noise, loss_weight_decay,
    total_on_tape, weight_decay_value, LossBreakdown,
};
use crate::model::{adam_step, build_unet, init_he, AdamState, ModelParams};
use crate::numerics::Rng;
use crate::pair::{Image, Modality, SplitPair};

/// Validation uses at most this many held-out slices per epoch.
pub const VALIDATION_SLICES: usize = 4;

/// Abort when a batch's `|L_n|` exceeds this multiple of the first epoch's mean.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_n: f64,
    pub l_w: f64,
    pub l_r: f64,
    pub total: f64,
    pub val_rmse: f64,
    pub val_ssim: f64,
}

/// Everything needed to continue training or to run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub modality: Modality,
    pub theta1: ModelParams,
    pub adam1: AdamState,
    pub theta2: Option<ModelParams>,
    pub adam2: Option<AdamState>,
    /// Completed epochs.
    pub epoch: usize,
    /// Keep Θ2 fixed (only meaningful for the consensus objective).
    pub freeze_theta2: bool,
    /// Mean `L_n` of the first epoch, for the divergence guard.
    pub reference_ln: Option<f64>,
    pub log: Vec<EpochLog>,
}

/// He-normal initialization with the residual head zeroed, so training
/// starts from the identity map.
pub fn init_identity_start(params: &mut ModelParams, rng: &mut Rng) {
    init_he(params, rng);
    if let Some(head) = params.layout.last() {
        let range = head.offset..head.offset + head.len();
        params.theta[range].fill(0.0);
    }
}

impl TrainState {
    pub fn new(config: TrainConfig, modality: Modality) -> Result<Self> {
        config.validate()?;
        let master = Rng::new(config.seed);
        let mut theta1 = build_unet(config.unet(modality))?;
        init_identity_start(&mut theta1, &mut master.derive(u64::MAX));
        let theta2 = if config.objective.is_pair() {
            let mut t = build_unet(config.unet(modality))?;
            init_identity_start(&mut t, &mut master.derive(u64::MAX - 1));
            Some(t)
        } else {
            None
        };
        let adam1 = AdamState::new(theta1.len(), config.lr);
        let adam2 = theta2.as_ref().map(|t| AdamState::new(t.len(), config.lr));
        Ok(Self {
            config,
            modality,
            theta1,
            adam1,
            theta2,
            adam2,
            epoch: 0,
            freeze_theta2: false,
            reference_ln: None,
            log: Vec::new(),
        })
    }

    /// Denoised slice, in the stored (normalized) units of `pair`.
    pub fn denoise(&self, pair: &SplitPair) -> Result<Image> {
        self.denoise_images(&pair.r1, &pair.r2)
    }

    pub fn denoise_images(&self, r1: &Image, r2: &Image) -> Result<Image> {
        denoise_with(&self.theta1, self.theta2.as_ref(), r1, r2)
    }
}

fn check_dataset(state: &TrainState, data: &[SplitPair]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    for (i, p) in data.iter().enumerate() {
        if p.modality != state.modality {
            return Err(Error::Shape(format!("slice {i} is {}, expected {}", p.modality.label(), state.modality.label())));
        }
        if state.config.objective == Objective::Noise2Clean && p.clean.is_none() {
            return Err(Error::Config(format!("noise2clean needs clean targets; slice {i} has none")));
        }
    }
    Ok(())
}

/// One optimizer step on a mini-batch; returns the batch's loss terms.
fn train_step(state: &mut TrainState, batch: &[&PatchTuple]) -> Result<LossBreakdown> {
    let cfg = state.config;
    let (c, p) = (state.modality.channels(), cfg.patch);
    let mut tape = Tape::new();
    let a1 = state.theta1.attach(&mut tape);
    let x1 = tape.constant(stack(batch, c, p, |t| &t.r1)?);
    let y1 = state.theta1.forward(&mut tape, &a1, x1)?;
    match cfg.objective {
        Objective::Consensus => {
            let theta2 = state.theta2.as_ref().expect("consensus state holds theta2");
            let a2 = if state.freeze_theta2 {
                theta2.attach_frozen(&mut tape)
            } else {
                theta2.attach(&mut tape)
            };
            let x2 = tape.constant(stack(batch, c, p, |t| &t.r2)?);
            let est = tape.constant(stack(batch, c, p, |t| &t.est)?);
            let y2 = theta2.forward(&mut tape, &a2, x2)?;
            let l_n = loss_consensus(&mut tape, y1, y2, x1, x2)?;
            let l_w = loss_weight_decay(&mut tape, &[&a1, &a2])?;
            let z = aggregate(&mut tape, y1, y2)?;
            let l_r = loss_consistency(&mut tape, z, est)?;
            let total = total_on_tape(&mut tape, l_n, Some(l_w), Some(l_r), cfg.beta_w, cfg.beta_r)?;
            let parts = LossBreakdown::new(
                tape.scalar_value(l_n),
                tape.scalar_value(l_w),
                tape.scalar_value(l_r),
                cfg.beta_w,
                cfg.beta_r,
            );
            if !parts.total.is_finite() {
                return Ok(parts);
            }
            tape.backward(total)?;
            let g1 = state.theta1.gather_grads(&tape, &a1);
            let g2 = theta2.gather_grads(&tape, &a2);
            adam_step(&mut state.theta1, &g1, &mut state.adam1)?;
            if !state.freeze_theta2 {
                let theta2 = state.theta2.as_mut().expect("consensus state holds theta2");
                let adam2 = state.adam2.as_mut().expect("consensus state holds adam2");
                adam_step(theta2, &g2, adam2)?;
            }
            Ok(parts)
        }
        Objective::Noise2Noise | Objective::Noise2Clean => {
            let target = if cfg.objective == Objective::Noise2Noise {
                stack(batch, c, p, |t| &t.r2)?
            } else {
                stack(batch, c, p, |t| t.clean.as_deref().expect("checked by check_dataset"))?
            };
            let target = tape.constant(target);
            let loss = if cfg.objective == Objective::Noise2Noise {
                loss_noise2noise(&mut tape, y1, target)?
            } else {
                loss_noise2clean(&mut tape, y1, target)?
            };
            let parts = LossBreakdown::new(
                tape.scalar_value(loss),
                weight_decay_value(&[&state.theta1.theta]),
                0.0,
                0.0,
                0.0,
            );
            if !parts.total.is_finite() {
                return Ok(parts);
            }
            tape.backward(loss)?;
            let g1 = state.theta1.gather_grads(&tape, &a1);
            adam_step(&mut state.theta1, &g1, &mut state.adam1)?;
            Ok(parts)
        }
    }
}

/// Mean RMSE / SSIM of the denoised output against clean references on up
/// to [`VALIDATION_SLICES`] slices; NaN when none carry a reference.
pub fn validate(state: &TrainState, val: &[SplitPair]) -> Result<(f64, f64)> {
    let cfg = SsimConfig::default();
    let (mut rmse, mut ssim, mut n) = (0.0, 0.0, 0usize);
    for pair in val.iter().filter(|p| p.clean.is_some()).take(VALIDATION_SLICES) {
        let clean = pair.clean.as_ref().expect("filtered");
        let z = state.denoise(pair)?;
        rmse += report_rmse(&z, clean)?;
        ssim += report_ssim(&z, clean, &cfg)?;
        n += 1;
    }
    if n == 0 {
        return Ok((f64::NAN, f64::NAN));
    }
    Ok((rmse / n as f64, ssim / n as f64))
}

/// Runs the next epoch: fresh patches from every slice, shuffled into
/// mini-batches, one update per batch for each trained network.
pub fn train_epoch(state: &mut TrainState, data: &[SplitPair], val: &[SplitPair]) -> Result<EpochLog> {
    check_dataset(state, data)?;
    let cfg = state.config;
    let epoch = state.epoch + 1;
    let mut rng = Rng::new(cfg.seed).derive(epoch as u64);
    let mut pool = Vec::with_capacity(data.len() * cfg.patches_per_slice);
    for pair in data {
        pool.extend(extract_patches(pair, cfg.patch, cfg.patches_per_slice, &mut rng)?);
    }
    rng.shuffle(&mut pool);
    let mut sums = [0.0; 4];
    let mut batches = 0usize;
    for (b, chunk) in pool.chunks(cfg.batch).enumerate() {
        let refs: Vec<&PatchTuple> = chunk.iter().collect();
        let parts = train_step(state, &refs)?;
        if !parts.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss {} (L_n {}, L_w {}, L_r {}) at epoch {epoch}, batch {b}",
                parts.total, parts.l_n, parts.l_w, parts.l_r
            )));
        }
        if let Some(r) = state.reference_ln {
            if r != 0.0 && parts.l_n.abs() > DIVERGENCE_FACTOR * r.abs() {
                return Err(Error::Numeric(format!(
                    "diverged at epoch {epoch}, batch {b}: |L_n| = {} exceeds {DIVERGENCE_FACTOR} x first-epoch {}",
                    parts.l_n.abs(),
                    r.abs()
                )));
            }
        }
        sums[0] += parts.l_n;
        sums[1] += parts.l_w;
        sums[2] += parts.l_r;
        sums[3] += parts.total;
        batches += 1;
    }
    let nb = batches as f64;
    let (val_rmse, val_ssim) = validate(state, val)?;
    let row = EpochLog {
        epoch,
        l_n: sums[0] / nb,
        l_w: sums[1] / nb,
        l_r: sums[2] / nb,
        total: sums[3] / nb,
        val_rmse,
        val_ssim,
    };
    if state.reference_ln.is_none() {
        state.reference_ln = Some(row.l_n);
    }
    state.epoch = epoch;
    state.log.push(row);
    Ok(row)
}

/// Trains until `state.config.epochs` epochs are complete, calling
/// `on_epoch` after each one.
pub fn train_from(
    mut state: TrainState,
    data: &[SplitPair],
    val: &[SplitPair],
    mut on_epoch: impl FnMut(&TrainState, &EpochLog) -> Result<()>,
) -> Result<TrainState> {
    while state.epoch < state.config.epochs {
        let row = train_epoch(&mut state, data, val)?;
        on_epoch(&state, &row)?;
    }
    Ok(state)
}

/// Fresh initialization followed by the full schedule.
pub fn train(config: TrainConfig, data: &[SplitPair], val: &[SplitPair]) -> Result<TrainState> {
    let modality = data
        .first()
        .map(|p| p.modality)
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    train_from(TrainState::new(config, modality)?, data, val, |_, _| Ok(()))
}
