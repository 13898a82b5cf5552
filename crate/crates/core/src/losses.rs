//! Training objectives.
//!
//! Norms are plain sums of squares over every pixel and channel; batch
//! averages divide by the batch size `N` (the leading tensor dimension).
//!
//! * supervised: `(1/N) Σ ‖y_i − x_i‖²`
//! * noisy target: `(1/N) Σ ‖f(x+n1) − (x+n2)‖²`
//! * consensus: `(1/N) Σ ½‖y1 − r2‖² + ½‖y2 − r1‖² − ¼‖y1 − y2‖²`
//!   with `y1 = f(r1; Θ1)`, `y2 = f(r2; Θ2)`; the denoised image is
//!   `z = (y1 + y2) / 2`
//! * weight decay: `‖Θ1‖² + ‖Θ2‖²`
//! * image consistency: `(1/N) Σ ‖z − x_est‖²`
//! * total: `L_n + β_w L_w + β_r L_r`
//!
//! The consensus loss is unbounded below along `y1 − y2` for a single
//! sample (its Hessian has a null direction there); training relies on
//! dataset averaging and weight decay.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::AttachedParams;

fn batch_size(tape: &Tape, v: Var) -> Result<usize> {
    match tape.value(v).dims().first() {
        Some(&n) if n > 0 => Ok(n),
        _ => Err(Error::Shape(format!(
            "loss input needs a leading batch dimension, got {:?}",
            tape.value(v).dims()
        ))),
    }
}

fn mean_sq_dist(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let n = batch_size(tape, a)?;
    let d = tape.sub(a, b)?;
    let s = tape.sq_norm(d);
    Ok(tape.scale(s, 1.0 / n as f64))
}

/// Supervised objective against clean targets.
pub fn loss_noise2clean(tape: &mut Tape, y: Var, clean: Var) -> Result<Var> {
    mean_sq_dist(tape, y, clean)
}

/// Objective against an independent noisy realization.
pub fn loss_noise2noise(tape: &mut Tape, y1: Var, target2: Var) -> Result<Var> {
    mean_sq_dist(tape, y1, target2)
}

/// Consensus objective over the two network outputs and the two noisy
/// inputs. May be negative.
pub fn loss_consensus(tape: &mut Tape, y1: Var, y2: Var, r1: Var, r2: Var) -> Result<Var> {
    let n = batch_size(tape, y1)? as f64;
    let a = tape.sub(y1, r2)?;
    let a = tape.sq_norm(a);
    let b = tape.sub(y2, r1)?;
    let b = tape.sq_norm(b);
    let c = tape.sub(y1, y2)?;
    let c = tape.sq_norm(c);
    let ab = tape.add(a, b)?;
    let ab = tape.scale(ab, 0.5 / n);
    let c = tape.scale(c, 0.25 / n);
    tape.sub(ab, c)
}

/// Elementwise mean of the two outputs.
pub fn aggregate(tape: &mut Tape, y1: Var, y2: Var) -> Result<Var> {
    let s = tape.add(y1, y2)?;
    Ok(tape.scale(s, 0.5))
}

/// `Σ‖Θ‖²` over every attached parameter set.
pub fn loss_weight_decay(tape: &mut Tape, sets: &[&AttachedParams]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for set in sets {
        for &(w, b) in &set.layers {
            for v in [w, b] {
                let s = tape.sq_norm(v);
                total = Some(match total {
                    Some(t) => tape.add(t, s)?,
                    None => s,
                });
            }
        }
    }
    total.ok_or_else(|| Error::InvalidArgument("weight decay over no parameters".into()))
}

/// Plain `‖Θ1‖² + ‖Θ2‖²`.
pub fn weight_decay_value(thetas: &[&[f64]]) -> f64 {
    thetas.iter().flat_map(|t| t.iter()).map(|v| v * v).sum()
}

/// Distance of the aggregated output to the estimate `x_est`.
pub fn loss_consistency(tape: &mut Tape, z: Var, est: Var) -> Result<Var> {
    mean_sq_dist(tape, z, est)
}

/// Values of the three loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_n: f64,
    pub l_w: f64,
    pub l_r: f64,
    pub total: f64,
    pub beta_w: f64,
    pub beta_r: f64,
}

impl LossBreakdown {
    pub fn new(l_n: f64, l_w: f64, l_r: f64, beta_w: f64, beta_r: f64) -> Self {
        Self {
            l_n,
            l_w,
            l_r,
            total: l_n + beta_w * l_w + beta_r * l_r,
            beta_w,
            beta_r,
        }
    }
}

/// Weighted total `L_n + β_w L_w + β_r L_r`.
pub fn loss_total(l_n: f64, l_w: f64, l_r: f64, beta_w: f64, beta_r: f64) -> LossBreakdown {
    LossBreakdown::new(l_n, l_w, l_r, beta_w, beta_r)
}

/// Records the weighted total on the tape. `l_w` / `l_r` may be absent when
/// their weight is zero.
pub fn total_on_tape(
    tape: &mut Tape,
    l_n: Var,
    l_w: Option<Var>,
    l_r: Option<Var>,
    beta_w: f64,
    beta_r: f64,
) -> Result<Var> {
    let mut total = l_n;
    if let Some(w) = l_w {
        let w = tape.scale(w, beta_w);
        total = tape.add(total, w)?;
    }
    if let Some(r) = l_r {
        let r = tape.scale(r, beta_r);
        total = tape.add(total, r)?;
    }
    Ok(total)
}

/// Both sides of `‖(y1+y2)/2 − x‖² = ½‖y1−x‖² + ½‖y2−x‖² − ¼‖y1−y2‖²`.
pub fn factorization_identity(y1: &[f64], y2: &[f64], x: &[f64]) -> Result<(f64, f64)> {
    if y1.len() != y2.len() || y1.len() != x.len() {
        return Err(Error::Shape(format!(
            "identity operands have lengths {}, {}, {}",
            y1.len(),
            y2.len(),
            x.len()
        )));
    }
    let (mut lhs, mut a, mut b, mut c) = (0.0, 0.0, 0.0, 0.0);
    for ((&p, &q), &t) in y1.iter().zip(y2).zip(x) {
        lhs += (0.5 * (p + q) - t).powi(2);
        a += (p - t).powi(2);
        b += (q - t).powi(2);
        c += (p - q).powi(2);
    }
    Ok((lhs, 0.5 * a + 0.5 * b - 0.25 * c))
}
