//! Central finite-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::numerics::Rng;

use super::tape::{Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Step is `h_rel * max(1, |value|)` per coordinate.
    pub h_rel: f64,
    /// Checks every coordinate when `None`, otherwise this many random
    /// coordinates per input tensor.
    pub coords_per_input: Option<usize>,
    /// Skip coordinates whose `+h`/`-h` evaluations change a ReLU gate or
    /// max-pool winner; the function is not differentiable across those.
    pub skip_kinks: bool,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h_rel: 1e-6,
            coords_per_input: None,
            skip_kinks: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|fd - analytic| / max(1, |analytic|)` over checked coordinates.
    pub max_rel_error: f64,
    /// (input index, coordinate) where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

fn evaluate<F>(build: &F, point: &[Tensor]) -> Result<(f64, Vec<u64>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.constant(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    if !tape.value(loss).is_scalar() {
        return Err(Error::Shape("grad_check builder must return a scalar".into()));
    }
    Ok((tape.scalar_value(loss), tape.branch_pattern()))
}

/// Compares reverse-mode gradients of `build` at `point` with central
/// differences `(f(p+h) - f(p-h)) / 2h`.
pub fn grad_check<F>(build: F, point: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(point)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();
    let base_pattern = tape.branch_pattern();
    drop(tape);

    let mut rng = Rng::new(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut probe = point.to_vec();
    for (input, tensor) in point.iter().enumerate() {
        let coords: Vec<usize> = match opts.coords_per_input {
            Some(k) if k < tensor.len() => (0..k).map(|_| rng.below(tensor.len())).collect(),
            _ => (0..tensor.len()).collect(),
        };
        for c in coords {
            let x0 = tensor.values()[c];
            let h = opts.h_rel * x0.abs().max(1.0);
            probe[input].values_mut()[c] = x0 + h;
            let (fp, pat_p) = evaluate(&build, &probe)?;
            probe[input].values_mut()[c] = x0 - h;
            let (fm, pat_m) = evaluate(&build, &probe)?;
            probe[input].values_mut()[c] = x0;
            if opts.skip_kinks && (pat_p != base_pattern || pat_m != base_pattern) {
                report.skipped_kinks += 1;
                continue;
            }
            let fd = (fp - fm) / (2.0 * h);
            let an = analytic[input][c];
            let err = (fd - an).abs() / an.abs().max(1.0);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((input, c));
                }
            }
        }
    }
    Ok(report)
}
