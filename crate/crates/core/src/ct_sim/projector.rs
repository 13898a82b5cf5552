//! Parallel-beam geometry in pixel units. Pixel (r, c) of an N×N image has
//! center `X = c − (N−1)/2`, `Y = (N−1)/2 − r`; detector `j` of `D` sits at
//! offset `s = j − (D−1)/2` along `(cos θ, sin θ)`, with unit spacing.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::numerics::{Grid2D, Rng, Unit};

/// Ray marching step, in pixels.
const RAY_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub views: usize,
    pub detectors: usize,
    pub angles: Vec<f64>,
    /// View-major line integrals, `views × detectors`.
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn new(angles: Vec<f64>, detectors: usize, data: Vec<f64>) -> Result<Self> {
        if angles.is_empty() || detectors == 0 {
            return Err(Error::InvalidArgument("sinogram needs at least one view and detector".into()));
        }
        if data.len() != angles.len() * detectors {
            return Err(Error::Shape(format!(
                "sinogram data has {} samples, expected {}",
                data.len(),
                angles.len() * detectors
            )));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("sinogram angles must increase strictly".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sinogram sample {i} is {}", data[i])));
        }
        Ok(Self {
            views: angles.len(),
            detectors,
            angles,
            data,
        })
    }

    pub fn zeros(views: usize, detectors: usize) -> Result<Self> {
        Self::new(uniform_angles(views), detectors, vec![0.0; views * detectors])
    }

    pub fn view(&self, v: usize) -> &[f64] {
        &self.data[v * self.detectors..(v + 1) * self.detectors]
    }

    /// `a·self + b·other` over identical geometry.
    pub fn combine(&self, a: f64, other: &Sinogram, b: f64) -> Result<Sinogram> {
        if self.angles != other.angles || self.detectors != other.detectors {
            return Err(Error::Shape("combining sinograms of different geometry".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Sinogram::new(self.angles.clone(), self.detectors, data)
    }
}

/// `views` angles `π·v/views`.
pub fn uniform_angles(views: usize) -> Vec<f64> {
    (0..views)
        .map(|v| std::f64::consts::PI * v as f64 / views as f64)
        .collect()
}

/// Fewest detectors whose span covers every pixel center of an N×N image.
pub fn min_detectors(n: usize) -> usize {
    ((n.saturating_sub(1)) as f64 * std::f64::consts::SQRT_2).ceil() as usize + 1
}

/// Odd detector count covering the image diagonal with a margin.
pub fn default_detectors(n: usize) -> usize {
    2 * ((n as f64 / std::f64::consts::SQRT_2) + 1.0).ceil() as usize + 1
}

fn check_square(img: &Grid2D) -> Result<usize> {
    if img.height() != img.width() {
        return Err(Error::Shape(format!(
            "projector needs a square image, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(img.height())
}

/// Ray samples `t_k`, symmetric about 0, covering the image diagonal.
fn ray_samples(n: usize) -> Vec<f64> {
    let half = 0.5 * std::f64::consts::SQRT_2 * n as f64 + 1.0;
    let count = (2.0 * half / RAY_STEP).ceil() as usize;
    (0..count)
        .map(|k| (k as f64 - (count - 1) as f64 / 2.0) * RAY_STEP)
        .collect()
}

/// Walks every ray and hands each bilinear footprint `(index, weight)` to `visit`
/// together with the ray's sinogram slot.
fn march(n: usize, angles: &[f64], detectors: usize, mut visit: impl FnMut(usize, usize, f64)) {
    let ts = ray_samples(n);
    let half = (n as f64 - 1.0) / 2.0;
    let dhalf = (detectors as f64 - 1.0) / 2.0;
    for (v, &theta) in angles.iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        for j in 0..detectors {
            let slot = v * detectors + j;
            let s = j as f64 - dhalf;
            for &t in &ts {
                let x = s * cos - t * sin;
                let y = s * sin + t * cos;
                let fc = x + half;
                let fr = half - y;
                if fc <= -1.0 || fr <= -1.0 || fc >= n as f64 || fr >= n as f64 {
                    continue;
                }
                let c0 = fc.floor();
                let r0 = fr.floor();
                let (wc, wr) = (fc - c0, fr - r0);
                let (c0, r0) = (c0 as isize, r0 as isize);
                for (dr, wy) in [(0, 1.0 - wr), (1, wr)] {
                    let r = r0 + dr;
                    if r < 0 || r >= n as isize {
                        continue;
                    }
                    for (dc, wx) in [(0, 1.0 - wc), (1, wc)] {
                        let c = c0 + dc;
                        if c < 0 || c >= n as isize {
                            continue;
                        }
                        let w = wx * wy * RAY_STEP;
                        if w != 0.0 {
                            visit(slot, r as usize * n + c as usize, w);
                        }
                    }
                }
            }
        }
    }
}

/// Line integrals of `img` (per pixel length) over `views` uniform angles in
/// [0, π), sampled bilinearly every half pixel along each ray.
pub fn radon(img: &Grid2D, views: usize, detectors: usize) -> Result<Sinogram> {
    if views < 1 || detectors < 1 {
        return Err(Error::InvalidArgument(format!(
            "radon needs views and detectors >= 1, got {views} and {detectors}"
        )));
    }
    radon_at(img, &uniform_angles(views), detectors)
}

/// [`radon`] at explicit angles.
pub fn radon_at(img: &Grid2D, angles: &[f64], detectors: usize) -> Result<Sinogram> {
    let n = check_square(img)?;
    let src = img.data();
    let mut data = vec![0.0; angles.len() * detectors];
    march(n, angles, detectors, |slot, pix, w| data[slot] += w * src[pix]);
    Sinogram::new(angles.to_vec(), detectors, data)
}

/// Exact adjoint of [`radon_at`]: `⟨radon(x), y⟩ = ⟨x, backproject(y)⟩`.
pub fn backproject(sino: &Sinogram, n: usize) -> Grid2D {
    let mut img = vec![0.0; n * n];
    march(n, &sino.angles, sino.detectors, |slot, pix, w| img[pix] += w * sino.data[slot]);
    Grid2D::new(n, n, img, Unit::Dimensionless).expect("adjoint of finite data is finite")
}

/// Frequency response of the band-limited ramp (spatial kernel `h[0] = 1/4`,
/// `h[odd k] = −1/(πk)²`) times the Hann window `0.5(1 + cos(π f / f_N))`,
/// on a padded axis of `len` bins.
pub fn ramp_hann_response(len: usize) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let mut kernel = vec![Complex64::new(0.0, 0.0); len];
    kernel[0].re = 0.25;
    for k in 1..=len / 2 {
        if k % 2 == 1 {
            let v = -1.0 / (std::f64::consts::PI * k as f64).powi(2);
            kernel[k].re = v;
            kernel[len - k].re = v;
        }
    }
    fft.process(&mut kernel);
    (0..len)
        .map(|k| {
            let f = k.min(len - k) as f64 / len as f64;
            let hann = 0.5 * (1.0 + (std::f64::consts::PI * f / 0.5).cos());
            kernel[k].re * hann
        })
        .collect()
}

/// Ramp×Hann filtering of every view, zero-padded to avoid wrap-around.
pub fn filter_views(sino: &Sinogram) -> Vec<f64> {
    let d = sino.detectors;
    let len = (2 * d).next_power_of_two();
    let response = ramp_hann_response(len);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut out = vec![0.0; sino.data.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for v in 0..sino.views {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (b, &p) in buf.iter_mut().zip(sino.view(v)) {
            b.re = p;
        }
        fwd.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&response) {
            *b *= h;
        }
        inv.process(&mut buf);
        let norm = 1.0 / len as f64;
        for (o, b) in out[v * d..(v + 1) * d].iter_mut().zip(&buf) {
            *o = b.re * norm;
        }
    }
    out
}

/// Filtered backprojection with the Hann-apodized ramp and angular weight
/// `π / views`, onto an N×N grid.
pub fn fbp_hann(sino: &Sinogram, n: usize) -> Result<Grid2D> {
    if n == 0 {
        return Err(Error::InvalidArgument("fbp onto an empty grid".into()));
    }
    if sino.detectors < min_detectors(n) {
        return Err(Error::InvalidArgument(format!(
            "{} detectors cannot cover the diagonal of a {n}x{n} grid (need {})",
            sino.detectors,
            min_detectors(n)
        )));
    }
    let q = filter_views(sino);
    let d = sino.detectors;
    let half = (n as f64 - 1.0) / 2.0;
    let dhalf = (d as f64 - 1.0) / 2.0;
    let weight = std::f64::consts::PI / sino.views as f64;
    let mut img = vec![0.0; n * n];
    for (v, &theta) in sino.angles.iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        let qv = &q[v * d..(v + 1) * d];
        for r in 0..n {
            let y = half - r as f64;
            let row = &mut img[r * n..(r + 1) * n];
            for (c, px) in row.iter_mut().enumerate() {
                let x = c as f64 - half;
                let u = x * cos + y * sin + dhalf;
                let i = u.floor();
                let f = u - i;
                let i = i as isize;
                let at = |k: isize| if k >= 0 && (k as usize) < d { qv[k as usize] } else { 0.0 };
                *px += (1.0 - f) * at(i) + f * at(i + 1);
            }
        }
    }
    for px in &mut img {
        *px *= weight;
    }
    Grid2D::new(n, n, img, Unit::Dimensionless)
}

/// Incident photons per ray and dose fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseModel {
    pub i0: f64,
    pub dose: f64,
}

impl DoseModel {
    pub fn new(i0: f64, dose: f64) -> Result<Self> {
        if !(dose > 0.0 && dose <= 1.0) || !i0.is_finite() || i0 * dose < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "dose model needs 0 < d <= 1 and I0*d >= 1, got I0={i0}, d={dose}"
            )));
        }
        Ok(Self { i0, dose })
    }

    /// Expected unattenuated counts `d·I0`.
    pub fn blank_counts(&self) -> f64 {
        self.i0 * self.dose
    }
}

/// Transmission Poisson noise: `k ~ Poisson(d·I0·e^{−p})`, `k ≥ 1`,
/// `p' = −ln(k / (d·I0))`.
pub fn insert_noise(sino: &Sinogram, dose: &DoseModel, rng: &mut Rng) -> Result<Sinogram> {
    let blank = dose.blank_counts();
    let mut data = Vec::with_capacity(sino.data.len());
    for &p in &sino.data {
        let lambda = blank * (-p).exp();
        let k = if lambda > 0.0 { rng.poisson(lambda)?.max(1.0) } else { 1.0 };
        data.push(-(k / blank).ln());
    }
    Sinogram::new(sino.angles.clone(), sino.detectors, data)
}

/// Interleaved view subsets: views 0, 2, 4, … and views 1, 3, 5, ….
pub fn split_odd_even(sino: &Sinogram) -> Result<(Sinogram, Sinogram)> {
    if !sino.views.is_multiple_of(2) || sino.views == 0 {
        return Err(Error::InvalidArgument(format!(
            "odd/even split needs an even view count, got {}",
            sino.views
        )));
    }
    let pick = |parity: usize| -> Result<Sinogram> {
        let mut angles = Vec::with_capacity(sino.views / 2);
        let mut data = Vec::with_capacity(sino.data.len() / 2);
        for v in (parity..sino.views).step_by(2) {
            angles.push(sino.angles[v]);
            data.extend_from_slice(sino.view(v));
        }
        Sinogram::new(angles, sino.detectors, data)
    };
    Ok((pick(0)?, pick(1)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct_sim::phantom::{rasterize, Ellipse, Phantom};

    fn disc(n: usize, radius_frac: f64) -> Grid2D {
        let p = Phantom::new(vec![Ellipse::new(0.0, 0.0, radius_frac, radius_frac, 0.0, 1.0)], 0.0, n).unwrap();
        rasterize(&p, n, n)
    }

    #[test]
    fn zero_image_gives_zero_sinogram() {
        let s = radon(&Grid2D::zeros(16, 16, Unit::Dimensionless), 8, 25).unwrap();
        assert!(s.data.iter().all(|&v| v == 0.0));
        assert!(radon(&Grid2D::zeros(16, 16, Unit::Dimensionless), 0, 25).is_err());
        assert!(radon(&Grid2D::zeros(16, 16, Unit::Dimensionless), 4, 0).is_err());
        assert!(radon(&Grid2D::zeros(16, 12, Unit::Dimensionless), 4, 25).is_err());
    }

    #[test]
    fn disc_projection_matches_chord_length() {
        let n = 128;
        let img = disc(n, 0.5);
        let r = 0.5 * n as f64 / 2.0;
        let d = default_detectors(n);
        let sino = radon(&img, 12, d).unwrap();
        let peak = 2.0 * r;
        for v in 0..12 {
            for j in 0..d {
                let s = j as f64 - (d as f64 - 1.0) / 2.0;
                if (s.abs() - r).abs() < 2.0 {
                    // pixelated rim
                    continue;
                }
                let chord = if s.abs() < r { 2.0 * (r * r - s * s).sqrt() } else { 0.0 };
                let err = (sino.view(v)[j] - chord).abs();
                assert!(err < 0.02 * peak, "view {v} det {j}: {} vs {chord}", sino.view(v)[j]);
            }
        }
    }

    #[test]
    fn centered_disc_is_invariant_under_grid_symmetries() {
        // 0 ↔ π/2 and π/4 ↔ 3π/4 map the pixel lattice onto itself
        let img = disc(48, 0.6);
        let d = default_detectors(48);
        let sino = radon(&img, 8, d).unwrap();
        for (a, b) in [(0, 4), (2, 6), (1, 3), (5, 7), (1, 7)] {
            for j in 0..d {
                let (x, y) = (sino.view(a)[j], sino.view(b)[j]);
                assert!((x - y).abs() < 1e-10, "views {a},{b} det {j}: {x} {y}");
            }
        }
    }

    #[test]
    fn adjoint_consistency() {
        let mut rng = Rng::new(3);
        let n = 24;
        let x = Grid2D::from_fn(n, n, Unit::Dimensionless, |_, _| rng.standard_normal());
        let d = default_detectors(n);
        let views = 10;
        let y: Vec<f64> = (0..views * d).map(|_| rng.standard_normal()).collect();
        let ys = Sinogram::new(uniform_angles(views), d, y).unwrap();
        let rx = radon(&x, views, d).unwrap();
        let lhs: f64 = rx.data.iter().zip(&ys.data).map(|(a, b)| a * b).sum();
        let bp = backproject(&ys, n);
        let rhs: f64 = x.data().iter().zip(bp.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()), "{lhs} {rhs}");
    }

    #[test]
    fn filter_response_is_ramp_times_hann() {
        let len = 64;
        let h = ramp_hann_response(len);
        // the truncated kernel leaves a DC term of order 1/(π² len)
        assert!(h[0].abs() < 1.0 / len as f64, "dc {}", h[0]);
        assert!(h[len / 2].abs() < 1e-12, "nyquist {}", h[len / 2]);
        for k in 1..len / 2 {
            let f = k as f64 / len as f64;
            let hann = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * f).cos());
            assert!((h[k] - f * hann).abs() < 0.02 * f.max(0.05), "bin {k}: {} vs {}", h[k], f * hann);
            assert!((h[k] - h[len - k]).abs() < 1e-15);
        }
    }

    #[test]
    fn fbp_is_linear_and_zero_preserving() {
        let mut rng = Rng::new(5);
        let n = 20;
        let d = default_detectors(n);
        let views = 16;
        let mk = |rng: &mut Rng| {
            Sinogram::new(uniform_angles(views), d, (0..views * d).map(|_| rng.standard_normal()).collect())
                .unwrap()
        };
        let (s1, s2) = (mk(&mut rng), mk(&mut rng));
        let (a, b) = (0.7, -2.3);
        let lhs = fbp_hann(&s1.combine(a, &s2, b).unwrap(), n).unwrap();
        let f1 = fbp_hann(&s1, n).unwrap();
        let f2 = fbp_hann(&s2, n).unwrap();
        let scale = lhs.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n * n {
            let rhs = a * f1.data()[i] + b * f2.data()[i];
            assert!((lhs.data()[i] - rhs).abs() <= 1e-10 * scale.max(1.0));
        }
        let z = fbp_hann(&Sinogram::zeros(views, d).unwrap(), n).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(fbp_hann(&Sinogram::zeros(views, 5).unwrap(), n).is_err());
    }

    #[test]
    fn fbp_reconstructs_a_smooth_disc() {
        let n = 64;
        let img = disc(n, 0.5);
        let sino = radon(&img, 128, default_detectors(n)).unwrap();
        let rec = fbp_hann(&sino, n).unwrap();
        // interior plateau
        for (r, c) in [(32, 32), (28, 36), (24, 24)] {
            assert!((rec.get(r, c) - 1.0).abs() < 0.03, "({r},{c}) {}", rec.get(r, c));
        }
        assert!(rec.get(2, 2).abs() < 0.03);
    }

    #[test]
    fn fbp_reconstructs_a_smooth_blob() {
        let n = 64;
        let sigma = 8.0;
        let img = Grid2D::from_fn(n, n, Unit::Dimensionless, |r, c| {
            let (x, y) = (c as f64 - 31.5, 31.5 - r as f64);
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        });
        let sino = radon(&img, 180, default_detectors(n)).unwrap();
        let rec = fbp_hann(&sino, n).unwrap();
        let num: f64 = rec.data().iter().zip(img.data()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = img.data().iter().map(|b| b * b).sum();
        assert!((num / den).sqrt() < 0.02, "{}", (num / den).sqrt());
    }

    #[test]
    fn vanishing_noise_limit() {
        let p: Vec<f64> = (0..40).map(|i| 0.1 * i as f64).collect();
        let s = Sinogram::new(uniform_angles(4), 10, p.clone()).unwrap();
        let noisy = insert_noise(&s, &DoseModel::new(1e12, 1.0).unwrap(), &mut Rng::new(1)).unwrap();
        for (a, b) in noisy.data.iter().zip(&p) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!(DoseModel::new(1e5, 0.0).is_err());
        assert!(DoseModel::new(2.0, 0.25).is_err());
        assert!(DoseModel::new(1e5, 1.5).is_err());
    }

    #[test]
    fn transmission_is_unbiased_and_dose_scales_variance() {
        let p = 2.0;
        let s = Sinogram::new(vec![0.0], 1, vec![p]).unwrap();
        let trials = 10_000;
        let stats = |dose: f64, seed: u64| {
            let dm = DoseModel::new(1e3, dose).unwrap();
            let mut rng = Rng::new(seed);
            let t: Vec<f64> = (0..trials)
                .map(|_| (-insert_noise(&s, &dm, &mut rng).unwrap().data[0]).exp())
                .collect();
            let mean = t.iter().sum::<f64>() / trials as f64;
            let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
            (mean, var)
        };
        let (m1, v1) = stats(1.0, 2);
        let (mq, vq) = stats(0.25, 3);
        let truth = (-p).exp();
        assert!((m1 - truth).abs() < 4.0 * (v1 / trials as f64).sqrt(), "{m1} {truth}");
        assert!((mq - truth).abs() < 4.0 * (vq / trials as f64).sqrt(), "{mq} {truth}");
        // Var[k/(dI0)] = e^{-p}/(dI0): quarter dose has 4x the variance
        let ratio = vq / v1;
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn odd_even_split_partitions_views() {
        let s = Sinogram::new(uniform_angles(4), 2, (0..8).map(f64::from).collect()).unwrap();
        let (a, b) = split_odd_even(&s).unwrap();
        assert_eq!(a.angles, vec![s.angles[0], s.angles[2]]);
        assert_eq!(b.angles, vec![s.angles[1], s.angles[3]]);
        assert_eq!(a.data, vec![0.0, 1.0, 4.0, 5.0]);
        assert_eq!(b.data, vec![2.0, 3.0, 6.0, 7.0]);
        let mut all: Vec<f64> = a.angles.iter().chain(&b.angles).cloned().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, s.angles);
        assert!(split_odd_even(&Sinogram::zeros(3, 2).unwrap()).is_err());
    }

    #[test]
    fn split_halves_have_uncorrelated_noise() {
        let (views, d) = (400, 50);
        let clean = Sinogram::new(uniform_angles(views), d, vec![1.5; views * d]).unwrap();
        let noisy = insert_noise(&clean, &DoseModel::new(1e4, 0.25).unwrap(), &mut Rng::new(4)).unwrap();
        let (a, b) = split_odd_even(&noisy).unwrap();
        let na: Vec<f64> = a.data.iter().map(|v| v - 1.5).collect();
        let nb: Vec<f64> = b.data.iter().map(|v| v - 1.5).collect();
        assert_eq!(na.len(), 10_000);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&na), mean(&nb));
        let cov: f64 = na.iter().zip(&nb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = na.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = nb.iter().map(|y| (y - mb).powi(2)).sum();
        let rho = cov / (va * vb).sqrt();
        assert!(rho.abs() < 0.02, "{rho}");
    }
}
