//! Empirical checks of why noisy targets recover the clean-target solution.
//!
//! In the scalar-gain model `f(u; θ) = θ·u` both least-squares problems are
//! closed-form:
//!
//! * `θ_c = Σ (x+n1)ᵀx / Σ ‖x+n1‖²` (clean targets)
//! * `θ_n = Σ (x+n1)ᵀ(x+n2) / Σ ‖x+n1‖²` (noisy targets)
//!
//! Their gap is `Σ (x+n1)ᵀn2 / Σ ‖x+n1‖²`, an average of zero-mean terms
//! that shrinks like `N^{-1/2}`. For networks the argmin is not analytic, so
//! only the vanishing of `E{2 n2ᵀ f(x+n1)}` is probed.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Closed-form fits of the scalar-gain model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub theta_c: f64,
    pub theta_n: f64,
    pub samples: usize,
    pub sigma: f64,
    pub x_dist: String,
}

/// Fits both objectives on flattened samples (every pixel of every image).
pub fn fit_linear(x: &[f64], n1: &[f64], n2: &[f64]) -> Result<LinearFit> {
    if x.len() != n1.len() || x.len() != n2.len() {
        return Err(Error::Shape(format!(
            "fit_linear operands have lengths {}, {}, {}",
            x.len(),
            n1.len(),
            n2.len()
        )));
    }
    let (mut den, mut num_c, mut num_n) = (0.0, 0.0, 0.0);
    for ((&xi, &a), &b) in x.iter().zip(n1).zip(n2) {
        let u = xi + a;
        den += u * u;
        num_c += u * xi;
        num_n += u * (xi + b);
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::Numeric(format!("degenerate denominator Σ‖x+n1‖² = {den}")));
    }
    Ok(LinearFit {
        theta_c: num_c / den,
        theta_n: num_n / den,
        samples: x.len(),
        sigma: f64::NAN,
        x_dist: "given".into(),
    })
}

/// Distribution of the clean scalars `x_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XDist {
    Constant(f64),
    Uniform(f64, f64),
}

impl XDist {
    pub fn label(&self) -> String {
        match self {
            XDist::Constant(c) => format!("constant({c})"),
            XDist::Uniform(a, b) => format!("uniform({a},{b})"),
        }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            XDist::Constant(c) => c,
            XDist::Uniform(a, b) => a + (b - a) * rng.uniform(),
        }
    }
}

/// One trial of the convergence experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub trial: usize,
    pub theta_c: f64,
    pub theta_n: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `(N, median gap)` per sample size.
    pub medians: Vec<(usize, f64)>,
    /// Least-squares slope of ln(median gap) against ln(N).
    pub slope: f64,
    pub sigma: f64,
}

impl ConvergenceTable {
    pub fn median_theta_c(&self, n: usize) -> f64 {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.n == n).map(|r| r.theta_c).collect();
        median(v)
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Median `|θ_n − θ_c|` over independent trials for each sample size, with
/// `n1, n2 ~ N(0, σ²)`. Trial `t` at size index `k` draws from stream
/// `k·trials + t` of `rng`.
pub fn convergence_experiment(
    sizes: &[usize],
    trials: usize,
    sigma: f64,
    x_dist: XDist,
    rng: &Rng,
) -> Result<ConvergenceTable> {
    if trials == 0 || sizes.is_empty() {
        return Err(Error::InvalidArgument("convergence experiment needs sizes and trials".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma {sigma}")));
    }
    let mut rows = Vec::with_capacity(sizes.len() * trials);
    let mut medians = Vec::with_capacity(sizes.len());
    for (k, &n) in sizes.iter().enumerate() {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("sample size {n} < 2")));
        }
        let mut gaps = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut r = rng.derive((k * trials + t) as u64);
            let (mut den, mut num_c, mut num_n) = (0.0, 0.0, 0.0);
            for _ in 0..n {
                let x = x_dist.sample(&mut r);
                let u = x + sigma * r.standard_normal();
                let target = x + sigma * r.standard_normal();
                den += u * u;
                num_c += u * x;
                num_n += u * target;
            }
            if !(den > 0.0) {
                return Err(Error::Numeric(format!("degenerate denominator at N={n}, trial {t}")));
            }
            let (theta_c, theta_n) = (num_c / den, num_n / den);
            let gap = (theta_n - theta_c).abs();
            gaps.push(gap);
            rows.push(ConvergenceRow {
                n,
                trial: t,
                theta_c,
                theta_n,
                gap,
            });
        }
        medians.push((n, median(gaps)));
    }
    let slope = if medians.len() >= 2 && medians.iter().all(|&(_, g)| g > 0.0) {
        let lx: Vec<f64> = medians.iter().map(|&(n, _)| (n as f64).ln()).collect();
        let ly: Vec<f64> = medians.iter().map(|&(_, g)| g.ln()).collect();
        ols_slope(&lx, &ly)
    } else {
        f64::NAN
    };
    Ok(ConvergenceTable {
        rows,
        medians,
        slope,
        sigma,
    })
}

/// CSV with columns `N, trial, theta_c, theta_n, gap`.
pub fn write_convergence_csv(path: &Path, table: &ConvergenceTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["N", "trial", "theta_c", "theta_n", "gap"])?;
    for r in &table.rows {
        w.write_record([
            r.n.to_string(),
            r.trial.to_string(),
            format!("{:e}", r.theta_c),
            format!("{:e}", r.theta_n),
            format!("{:e}", r.gap),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Monte-Carlo estimate of `E{2 n2ᵀ y}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTermProbe {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl CrossTermProbe {
    /// `|estimate| / stderr`; infinite when the spread is zero but the mean is not.
    pub fn z_score(&self) -> f64 {
        if self.stderr > 0.0 {
            self.estimate.abs() / self.stderr
        } else if self.estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Two-sided test at `k` standard errors.
    pub fn is_significant(&self, k: f64) -> bool {
        self.z_score() > k
    }
}

/// Averages `2 n2ᵀ y` over `m` draws; `draw(j)` returns `(n2, y)` for draw `j`,
/// with `y` the frozen network's output on `x + n1`.
pub fn cross_term_probe(
    m: usize,
    mut draw: impl FnMut(usize) -> Result<(Vec<f64>, Vec<f64>)>,
) -> Result<CrossTermProbe> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("cross-term probe needs M >= 2, got {m}")));
    }
    // Welford accumulation
    let (mut mean, mut m2) = (0.0, 0.0);
    for j in 0..m {
        let (n2, y) = draw(j)?;
        if n2.len() != y.len() {
            return Err(Error::Shape(format!("n2 has {} samples, y has {}", n2.len(), y.len())));
        }
        let s = 2.0 * n2.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("cross term at draw {j}")));
        }
        let delta = s - mean;
        mean += delta / (j + 1) as f64;
        m2 += delta * (s - mean);
    }
    let var = m2 / (m - 1) as f64;
    Ok(CrossTermProbe {
        estimate: mean,
        stderr: (var / m as f64).sqrt(),
        samples: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_fit_is_identity() {
        let x = [0.5, -1.0, 2.0];
        let f = fit_linear(&x, &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!((f.theta_c, f.theta_n), (1.0, 1.0));
    }

    #[test]
    fn single_sample_substitution() {
        let f = fit_linear(&[1.0], &[1.0], &[-1.0]).unwrap();
        assert_eq!(f.theta_c, 0.5);
        assert_eq!(f.theta_n, 0.0);
    }

    #[test]
    fn degenerate_denominator_is_an_error() {
        assert!(matches!(fit_linear(&[1.0], &[-1.0], &[0.0]), Err(Error::Numeric(_))));
        assert!(fit_linear(&[1.0], &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn fits_satisfy_first_order_conditions() {
        let mut rng = Rng::new(1);
        let n = 1000;
        let x: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let n1: Vec<f64> = (0..n).map(|_| 0.5 * rng.standard_normal()).collect();
        let n2: Vec<f64> = (0..n).map(|_| 0.5 * rng.standard_normal()).collect();
        let f = fit_linear(&x, &n1, &n2).unwrap();
        // d/dθ Σ (θu − t)² = 2 Σ (θu − t) u
        let grad = |theta: f64, target: &dyn Fn(usize) -> f64| -> f64 {
            (0..n).map(|i| 2.0 * (theta * (x[i] + n1[i]) - target(i)) * (x[i] + n1[i])).sum()
        };
        let scale: f64 = (0..n).map(|i| (x[i] + n1[i]).powi(2)).sum();
        assert!(grad(f.theta_c, &|i| x[i]).abs() < 1e-12 * scale);
        assert!(grad(f.theta_n, &|i| x[i] + n2[i]).abs() < 1e-12 * scale);
    }

    #[test]
    fn large_sample_limit_is_signal_to_total_power() {
        // x ≡ 1, σ = 1: E[x(x+n)] / E[(x+n)²] = 1 / (1 + σ²)
        let t = convergence_experiment(&[1_000_000], 1, 1.0, XDist::Constant(1.0), &Rng::new(2)).unwrap();
        let r = t.rows[0];
        assert!((r.theta_c - 0.5).abs() < 0.01, "{}", r.theta_c);
        assert!((r.theta_n - 0.5).abs() < 0.01, "{}", r.theta_n);
    }

    #[test]
    fn zero_noise_gives_zero_gaps() {
        let t = convergence_experiment(&[10, 100], 5, 0.0, XDist::Uniform(0.5, 1.5), &Rng::new(3)).unwrap();
        assert!(t.rows.iter().all(|r| r.gap == 0.0 && r.theta_c == 1.0));
        assert!(t.slope.is_nan());
    }

    #[test]
    fn gap_shrinks_at_the_root_n_rate() {
        let t = convergence_experiment(&[100, 1000, 10_000], 50, 1.0, XDist::Constant(1.0), &Rng::new(4)).unwrap();
        assert!((-0.65..=-0.35).contains(&t.slope), "slope {}", t.slope);
    }

    #[test]
    fn gap_scales_with_sigma_at_fixed_n() {
        // small σ: gap ≈ Σ x n2 / Σ x² is linear in σ
        let a = convergence_experiment(&[20_000], 30, 0.05, XDist::Constant(1.0), &Rng::new(5)).unwrap();
        let b = convergence_experiment(&[20_000], 30, 0.1, XDist::Constant(1.0), &Rng::new(5)).unwrap();
        let ratio = b.medians[0].1 / a.medians[0].1;
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn csv_has_documented_columns() {
        let t = convergence_experiment(&[10], 2, 1.0, XDist::Constant(1.0), &Rng::new(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("conv.csv");
        write_convergence_csv(&path, &t).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["N", "trial", "theta_c", "theta_n", "gap"]);
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        let gap: f64 = rows[1][4].parse().unwrap();
        assert_eq!(gap, t.rows[1].gap);
    }

    #[test]
    fn probe_of_zero_noise_is_exactly_zero() {
        let p = cross_term_probe(10, |_| Ok((vec![0.0; 4], vec![1.0, 2.0, 3.0, 4.0]))).unwrap();
        assert_eq!(p.estimate, 0.0);
        assert_eq!(p.stderr, 0.0);
        assert!(!p.is_significant(4.0));
        assert!(cross_term_probe(1, |_| Ok((vec![0.0], vec![0.0]))).is_err());
    }

    #[test]
    fn probe_detects_a_biased_generator() {
        let master = Rng::new(7);
        let make = |shift: f64| {
            cross_term_probe(2000, |j| {
                let mut r = master.derive(j as u64);
                let n1: Vec<f64> = (0..16).map(|_| r.standard_normal()).collect();
                let n2: Vec<f64> = (0..16).map(|_| r.standard_normal() + shift).collect();
                let y: Vec<f64> = n1.iter().map(|v| 1.0 + 0.5 * v).collect();
                Ok((n2, y))
            })
            .unwrap()
        };
        let unbiased = make(0.0);
        assert!(!unbiased.is_significant(4.0), "{unbiased:?}");
        let biased = make(0.3);
        assert!(biased.is_significant(4.0), "{biased:?}");
        // E = 2·16·0.3·1
        assert!((biased.estimate - 9.6).abs() < 5.0 * biased.stderr);
    }
}
