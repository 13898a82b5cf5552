//! Synthetic single-coil MR: complex phantom → k-space → Cartesian
//! undersampling of phase-encode lines (rows) with a fully kept center
//! block → disjoint split of the random lines → amplified zero-filling.
//!
//! Masks are indexed by centered line position: line `c` holds the k-space
//! row whose frequency index is `uncentered_index(c, lines)`.

use num_complex::Complex64;

use crate::ct_sim::{pixel_center, Ellipse, Phantom};
use crate::error::{Error, Result};
use crate::numerics::{fft2, ifft2, ComplexGrid2D, Rng};
use crate::numerics::fft::uncentered_index;
use crate::pair::{power_of_two_scale, Image, Modality, SplitPair};

/// Phase-encode sampling pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    pub lines: Vec<bool>,
    pub center_keep: usize,
    /// Sampling probability of a line outside the center block.
    pub p: f64,
}

impl SamplingMask {
    pub fn center_range(&self) -> std::ops::Range<usize> {
        let start = (self.lines.len() - self.center_keep) / 2;
        start..start + self.center_keep
    }

    pub fn is_center(&self, line: usize) -> bool {
        self.center_range().contains(&line)
    }

    pub fn sampled(&self) -> usize {
        self.lines.iter().filter(|&&b| b).count()
    }

    /// Sampled lines outside the center block.
    pub fn random_lines(&self) -> Vec<usize> {
        (0..self.lines.len())
            .filter(|&i| self.lines[i] && !self.is_center(i))
            .collect()
    }
}

/// Center block of `center_keep` lines plus i.i.d. random lines with the
/// probability that makes the expected count `lines / accel`. `accel = 1`
/// samples everything and the kept block grows to all lines.
pub fn make_mask(lines: usize, accel: f64, center_keep: usize, rng: &mut Rng) -> Result<SamplingMask> {
    if lines == 0 {
        return Err(Error::InvalidArgument("mask over zero lines".into()));
    }
    if !(accel >= 1.0 && accel.is_finite()) {
        return Err(Error::InvalidArgument(format!("acceleration {accel} must be >= 1")));
    }
    if accel == 1.0 {
        return Ok(SamplingMask {
            lines: vec![true; lines],
            center_keep: lines,
            p: 1.0,
        });
    }
    if center_keep >= lines {
        return Err(Error::InvalidArgument(format!(
            "center block of {center_keep} lines leaves no random region in {lines}"
        )));
    }
    let target = lines as f64 / accel;
    let p = (target - center_keep as f64) / (lines - center_keep) as f64;
    if p <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{center_keep} center lines already exceed {target} sampled lines at {accel}x"
        )));
    }
    let mut mask = SamplingMask {
        lines: vec![false; lines],
        center_keep,
        p,
    };
    let center = mask.center_range();
    for i in 0..lines {
        mask.lines[i] = center.contains(&i) || rng.bernoulli(p);
    }
    Ok(mask)
}

/// Partitions the random lines into two halves whose sizes differ by at most
/// one (the extra line goes to either side with equal probability); the
/// center block stays in both.
pub fn split_mask(mask: &SamplingMask, rng: &mut Rng) -> (SamplingMask, SamplingMask) {
    let mut random = mask.random_lines();
    rng.shuffle(&mut random);
    let mut first = random.len() / 2;
    if random.len() % 2 == 1 && rng.bernoulli(0.5) {
        first += 1;
    }
    let mut a = mask.clone();
    let mut b = mask.clone();
    for (i, &line) in random.iter().enumerate() {
        if i < first {
            b.lines[line] = false;
        } else {
            a.lines[line] = false;
        }
    }
    a.p = mask.p / 2.0;
    b.p = mask.p / 2.0;
    (a, b)
}

/// Keeps the sampled rows of `k` (uncentered, DC at row 0), scales the
/// random-region rows by `amplify`, and inverse transforms.
pub fn zero_fill_recon(k: &ComplexGrid2D, mask: &SamplingMask, amplify: f64) -> Result<ComplexGrid2D> {
    if !(amplify > 0.0 && amplify.is_finite()) {
        return Err(Error::InvalidArgument(format!("amplification {amplify} must be positive")));
    }
    let (h, w) = (k.height(), k.width());
    if mask.lines.len() != h {
        return Err(Error::Shape(format!("mask has {} lines, k-space {h} rows", mask.lines.len())));
    }
    let mut masked = ComplexGrid2D::zeros(h, w);
    for line in 0..h {
        if !mask.lines[line] {
            continue;
        }
        let factor = if mask.is_center(line) { 1.0 } else { amplify };
        let row = uncentered_index(line, h);
        let src = &k.data()[row * w..(row + 1) * w];
        let dst = &mut masked.data_mut()[row * w..(row + 1) * w];
        for (d, s) in dst.iter_mut().zip(src) {
            *d = s * factor;
        }
    }
    Ok(ifft2(&masked))
}

/// Gain of the random-region lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplifyMode {
    /// `1/p` for each mask, which makes every reconstruction unbiased.
    InverseP,
    /// Fixed gain for the split halves; the full mask uses half of it.
    Fixed(f64),
}

impl AmplifyMode {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "inverse" {
            return Ok(AmplifyMode::InverseP);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(AmplifyMode::Fixed(v)),
            _ => Err(Error::Config(format!("amplify_mode {s:?}: expected \"inverse\" or a positive number"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            AmplifyMode::InverseP => "inverse".into(),
            AmplifyMode::Fixed(v) => format!("{v}"),
        }
    }

    fn gain(&self, mask: &SamplingMask, half: bool) -> f64 {
        if mask.p <= 0.0 {
            return 1.0;
        }
        match *self {
            AmplifyMode::InverseP => 1.0 / mask.p,
            AmplifyMode::Fixed(v) if half => v,
            AmplifyMode::Fixed(v) => v / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrConfig {
    pub grid: usize,
    pub accel: f64,
    pub center_keep: usize,
    pub amplify: AmplifyMode,
}

impl MrConfig {
    /// 4× with an eighth of the lines kept at the center.
    pub fn desk(grid: usize) -> Self {
        Self {
            grid,
            accel: 4.0,
            center_keep: grid / 8,
            amplify: AmplifyMode::InverseP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 {
            return Err(Error::Config(format!("mr grid {} too small", self.grid)));
        }
        if self.accel != 1.0 {
            let dummy = make_mask(self.grid, self.accel, self.center_keep, &mut Rng::new(0));
            dummy.map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Magnitude phantom and smooth phase `Σ c_ij x^i y^j` (i + j ≤ 2), in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct MrPhantom {
    pub magnitude: Phantom,
    /// Coefficients of 1, x, y, xy, x², y².
    pub phase: [f64; 6],
}

impl MrPhantom {
    pub fn image(&self, n: usize) -> ComplexGrid2D {
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (x, y) = pixel_center(r, c, n, n);
                let m = self.magnitude.value_at(x, y);
                let p = &self.phase;
                let phi = p[0] + p[1] * x + p[2] * y + p[3] * x * y + p[4] * x * x + p[5] * y * y;
                data.push(Complex64::from_polar(m, phi));
            }
        }
        ComplexGrid2D::new(n, n, data).expect("phantom samples are finite")
    }
}

fn between(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// Random head-like magnitude (bright rim, tissue compartments, small
/// lesions) with a random low-order phase.
pub fn random_mr_phantom(size: usize, rng: &mut Rng) -> MrPhantom {
    let mut e = Vec::new();
    let (a, b) = (between(rng, 0.7, 0.85), between(rng, 0.8, 0.92));
    let tilt = between(rng, -0.1, 0.1);
    e.push(Ellipse::new(0.0, 0.0, a, b, tilt, 0.9));
    e.push(Ellipse::new(0.0, -0.02, a * 0.92, b * 0.93, tilt, -0.45));
    for _ in 0..3 + rng.below(4) {
        let r = between(rng, 0.0, 0.55);
        let phi = between(rng, 0.0, std::f64::consts::TAU);
        e.push(Ellipse::new(
            r * a * phi.cos(),
            r * b * phi.sin(),
            between(rng, 0.08, 0.25),
            between(rng, 0.05, 0.2),
            between(rng, 0.0, std::f64::consts::PI),
            between(rng, -0.25, 0.35),
        ));
    }
    for _ in 0..2 + rng.below(3) {
        let rad = between(rng, 0.02, 0.05);
        e.push(Ellipse::new(
            between(rng, -0.4, 0.4),
            between(rng, -0.5, 0.5),
            rad,
            rad,
            0.0,
            between(rng, 0.15, 0.3),
        ));
    }
    let mut phase = [0.0; 6];
    phase[0] = between(rng, -std::f64::consts::PI, std::f64::consts::PI);
    for c in phase.iter_mut().skip(1) {
        *c = between(rng, -1.2, 1.2);
    }
    MrPhantom {
        magnitude: Phantom {
            ellipses: e,
            background: 0.0,
            size,
        },
        phase,
    }
}

/// One slice with cached k-space; each draw samples fresh masks.
#[derive(Debug, Clone)]
pub struct MrAcquisition {
    pub config: MrConfig,
    pub clean: ComplexGrid2D,
    pub kspace: ComplexGrid2D,
}

/// Unnormalized reconstructions of one mask draw.
#[derive(Debug, Clone)]
pub struct MrDraw {
    pub r1: ComplexGrid2D,
    pub r2: ComplexGrid2D,
    pub est: ComplexGrid2D,
    pub mask: SamplingMask,
    pub halves: (SamplingMask, SamplingMask),
}

impl MrAcquisition {
    pub fn new(phantom: &MrPhantom, config: MrConfig) -> Result<Self> {
        config.validate()?;
        let clean = phantom.image(config.grid);
        let kspace = fft2(&clean);
        Ok(Self { config, clean, kspace })
    }

    pub fn draw(&self, rng: &mut Rng) -> Result<MrDraw> {
        let c = &self.config;
        let mask = make_mask(c.grid, c.accel, c.center_keep, rng)?;
        let (m1, m2) = split_mask(&mask, rng);
        let r1 = zero_fill_recon(&self.kspace, &m1, c.amplify.gain(&m1, true))?;
        let r2 = zero_fill_recon(&self.kspace, &m2, c.amplify.gain(&m2, true))?;
        let est = zero_fill_recon(&self.kspace, &mask, c.amplify.gain(&mask, false))?;
        Ok(MrDraw {
            r1,
            r2,
            est,
            mask,
            halves: (m1, m2),
        })
    }

    /// Draw normalized by the power of two just above the largest real or
    /// imaginary magnitude of the estimate.
    pub fn draw_pair(&self, rng: &mut Rng) -> Result<SplitPair> {
        let d = self.draw(rng)?;
        let peak = d
            .est
            .data()
            .iter()
            .map(|z| z.re.abs().max(z.im.abs()))
            .fold(0.0, f64::max);
        let scale = power_of_two_scale(peak);
        let norm = |g: &ComplexGrid2D| Image::Complex(g.scale(1.0 / scale));
        SplitPair::new(
            Modality::Mr,
            norm(&d.r1),
            norm(&d.r2),
            norm(&d.est),
            Some(norm(&self.clean)),
            scale,
        )
    }
}

/// r1, r2 from the two halves of a split 4× mask, est from the full mask,
/// clean = phantom image; normalized into [−1, 1] by the estimate's peak.
pub fn make_mr_splitpair(phantom: &MrPhantom, config: MrConfig, rng: &mut Rng) -> Result<SplitPair> {
    MrAcquisition::new(phantom, config)?.draw_pair(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_k(n: usize, seed: u64) -> ComplexGrid2D {
        let mut rng = Rng::new(seed);
        let data = (0..n * n)
            .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
            .collect();
        ComplexGrid2D::new(n, n, data).unwrap()
    }

    fn max_diff(a: &ComplexGrid2D, b: &ComplexGrid2D) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn full_acceleration_is_all_true() {
        let m = make_mask(32, 1.0, 4, &mut Rng::new(1)).unwrap();
        assert!(m.lines.iter().all(|&b| b));
        assert!(m.random_lines().is_empty());
    }

    #[test]
    fn center_block_position() {
        let m = make_mask(64, 4.0, 8, &mut Rng::new(2)).unwrap();
        assert_eq!(m.center_range(), 28..36);
        assert!((28..36).all(|i| m.lines[i]));
        assert!((m.p - (16.0 - 8.0) / 56.0).abs() < 1e-15);
    }

    #[test]
    fn infeasible_masks_are_rejected() {
        assert!(make_mask(64, 4.0, 20, &mut Rng::new(3)).is_err());
        assert!(make_mask(64, 4.0, 64, &mut Rng::new(3)).is_err());
        assert!(make_mask(64, 0.5, 8, &mut Rng::new(3)).is_err());
    }

    #[test]
    fn sampled_fraction_matches_acceleration() {
        let master = Rng::new(4);
        let total: usize = (0..1000)
            .map(|i| make_mask(128, 4.0, 16, &mut master.derive(i)).unwrap().sampled())
            .sum();
        let frac = total as f64 / (1000.0 * 128.0);
        assert!((frac - 0.25).abs() < 0.02 * 0.25, "{frac}");
    }

    #[test]
    fn split_partitions_random_lines() {
        let mut m = SamplingMask {
            lines: vec![false; 64],
            center_keep: 8,
            p: 0.1,
        };
        for i in m.center_range() {
            m.lines[i] = true;
        }
        for i in [10, 20, 40] {
            m.lines[i] = true;
        }
        let (a, b) = split_mask(&m, &mut Rng::new(5));
        for i in 0..64 {
            assert_eq!(a.lines[i] || b.lines[i], m.lines[i], "union at {i}");
            assert_eq!(a.lines[i] && b.lines[i], m.is_center(i), "intersection at {i}");
        }
        let (na, nb) = (a.random_lines().len(), b.random_lines().len());
        assert_eq!(na + nb, 3);
        assert!(na.abs_diff(nb) <= 1);
        assert_eq!(split_mask(&m, &mut Rng::new(5)), (a, b));
    }

    #[test]
    fn split_balance_over_many_masks() {
        let master = Rng::new(6);
        for i in 0..200 {
            let mut rng = master.derive(i);
            let m = make_mask(96, 4.0, 12, &mut rng).unwrap();
            let (a, b) = split_mask(&m, &mut rng);
            assert!(a.random_lines().len().abs_diff(b.random_lines().len()) <= 1);
        }
    }

    #[test]
    fn full_mask_is_plain_inverse_fft() {
        let k = random_k(16, 7);
        let m = make_mask(16, 1.0, 0, &mut Rng::new(0)).unwrap();
        let rec = zero_fill_recon(&k, &m, 1.0).unwrap();
        assert!(max_diff(&rec, &ifft2(&k)) < 1e-15);
        assert!(zero_fill_recon(&k, &m, 0.0).is_err());
    }

    #[test]
    fn empty_random_region_ignores_amplify() {
        let k = random_k(16, 8);
        let mut m = make_mask(16, 4.0, 2, &mut Rng::new(9)).unwrap();
        for i in 0..16 {
            m.lines[i] = m.is_center(i);
        }
        let a = zero_fill_recon(&k, &m, 1.0).unwrap();
        let b = zero_fill_recon(&k, &m, 17.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_fill_is_linear() {
        let (k1, k2) = (random_k(12, 10), random_k(12, 11));
        let m = make_mask(12, 2.0, 2, &mut Rng::new(12)).unwrap();
        let (a, b) = (1.5, -0.25);
        let combo = ComplexGrid2D::new(
            12,
            12,
            k1.data().iter().zip(k2.data()).map(|(x, y)| x * a + y * b).collect(),
        )
        .unwrap();
        let lhs = zero_fill_recon(&combo, &m, 3.0).unwrap();
        let f1 = zero_fill_recon(&k1, &m, 3.0).unwrap();
        let f2 = zero_fill_recon(&k2, &m, 3.0).unwrap();
        for i in 0..144 {
            assert!((lhs.data()[i] - (f1.data()[i] * a + f2.data()[i] * b)).norm() < 1e-12);
        }
    }

    #[test]
    fn fully_sampled_pair_is_exact() {
        let ph = random_mr_phantom(32, &mut Rng::new(13));
        let cfg = MrConfig {
            accel: 1.0,
            ..MrConfig::desk(32)
        };
        let pair = make_mr_splitpair(&ph, cfg, &mut Rng::new(14)).unwrap();
        let clean = pair.clean.clone().unwrap().to_planes();
        for img in [&pair.r1, &pair.r2, &pair.est] {
            let diff = img.to_planes().iter().zip(&clean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "{diff}");
        }
    }

    #[test]
    fn pair_is_normalized_and_two_channel() {
        let ph = random_mr_phantom(32, &mut Rng::new(15));
        let pair = make_mr_splitpair(&ph, MrConfig::desk(32), &mut Rng::new(16)).unwrap();
        assert_eq!(pair.r1.channels(), 2);
        assert!(pair.est.to_planes().iter().all(|v| v.abs() <= 1.0));
        let planes = pair.clean.as_ref().unwrap().to_planes();
        let (re, im) = planes.split_at(32 * 32);
        assert!(re.iter().any(|v| v.abs() > 0.05) && im.iter().any(|v| v.abs() > 0.05));
        let scale_log = pair.scale.log2();
        assert_eq!(scale_log, scale_log.round());
    }

    #[test]
    fn inverse_probability_gain_is_unbiased_small_probe() {
        let n = 16;
        let k = random_k(n, 17);
        let full = ifft2(&k);
        let trials = 400;
        let master = Rng::new(18);
        let mut sum = vec![Complex64::new(0.0, 0.0); n * n];
        let mut sq = vec![(0.0, 0.0); n * n];
        for t in 0..trials {
            let m = make_mask(n, 4.0, 2, &mut master.derive(t)).unwrap();
            let rec = zero_fill_recon(&k, &m, 1.0 / m.p).unwrap();
            for i in 0..n * n {
                let d = rec.data()[i] - full.data()[i];
                sum[i] += d;
                sq[i].0 += d.re * d.re;
                sq[i].1 += d.im * d.im;
            }
        }
        let tm = trials as f64;
        for i in 0..n * n {
            let m = sum[i] / tm;
            let se_re = ((sq[i].0 / tm - m.re * m.re) / (tm - 1.0)).sqrt();
            let se_im = ((sq[i].1 / tm - m.im * m.im) / (tm - 1.0)).sqrt();
            assert!(m.re.abs() < 5.0 * se_re && m.im.abs() < 5.0 * se_im, "pixel {i}: {m}");
        }
    }
}
