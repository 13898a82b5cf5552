//! Synthetic CT: phantom → parallel-beam sinogram → transmission Poisson
//! noise → odd/even view split → Hann-filtered backprojection.
//!
//! Phantoms are in HU/1000 (water 0, air −1). Projection works on linear
//! attenuation per pixel, `μ = μ_water · pixel_mm · (1 + x)`, and
//! reconstructions are mapped back with the inverse affine map.

mod phantom;
mod projector;

pub use phantom::{modified_shepp_logan, pixel_center, random_abdomen, rasterize, shepp_logan, Ellipse, Phantom};
pub use projector::{
    backproject, default_detectors, fbp_hann, filter_views, insert_noise, min_detectors, radon, radon_at,
    ramp_hann_response, split_odd_even, uniform_angles, DoseModel, Sinogram,
};

use crate::error::{Error, Result};
use crate::numerics::{Grid2D, Rng, Unit};
use crate::pair::{Image, Modality, SplitPair};

/// Linear attenuation of water, 1/mm (about 70 keV).
pub const MU_WATER_PER_MM: f64 = 0.0193;

/// Default field of view across the grid, mm.
pub const DEFAULT_FOV_MM: f64 = 320.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtConfig {
    pub grid: usize,
    pub views: usize,
    pub detectors: usize,
    pub dose: DoseModel,
    pub fov_mm: f64,
}

impl CtConfig {
    /// Desk geometry for an N×N grid: 2N views, diagonal-covering detector row,
    /// I0 = 1e5 at quarter dose.
    pub fn desk(grid: usize) -> Self {
        Self {
            grid,
            views: 2 * grid,
            detectors: default_detectors(grid),
            dose: DoseModel { i0: 1e5, dose: 0.25 },
            fov_mm: DEFAULT_FOV_MM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 {
            return Err(Error::Config(format!("ct grid {} too small", self.grid)));
        }
        if self.views < 2 || !self.views.is_multiple_of(2) {
            return Err(Error::Config(format!("ct views must be even and >= 2, got {}", self.views)));
        }
        if self.detectors < min_detectors(self.grid) {
            return Err(Error::Config(format!(
                "{} detectors cannot cover a {} grid (need {})",
                self.detectors,
                self.grid,
                min_detectors(self.grid)
            )));
        }
        DoseModel::new(self.dose.i0, self.dose.dose).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.fov_mm > 0.0 && self.fov_mm.is_finite()) {
            return Err(Error::Config(format!("field of view {} mm", self.fov_mm)));
        }
        Ok(())
    }

    /// Attenuation of water per pixel length.
    pub fn mu_pixel(&self) -> f64 {
        MU_WATER_PER_MM * self.fov_mm / self.grid as f64
    }
}

/// One slice's acquisition, with the noiseless projections cached so that
/// repeated noise draws only pay for noise insertion and reconstruction.
#[derive(Debug, Clone)]
pub struct CtAcquisition {
    pub config: CtConfig,
    /// Rasterized phantom, HU/1000.
    pub truth: Grid2D,
    /// Noiseless line integrals over all views.
    pub projections: Sinogram,
    /// FBP of the noiseless projections, HU/1000.
    pub clean: Grid2D,
}

impl CtAcquisition {
    pub fn new(phantom: &Phantom, config: CtConfig) -> Result<Self> {
        config.validate()?;
        let n = config.grid;
        let truth = rasterize(phantom, n, n);
        let mu = config.mu_pixel();
        let attenuation = truth.map(|x| mu * (1.0 + x).max(0.0));
        let projections = radon(&attenuation, config.views, config.detectors)?;
        let clean = Self::to_hu(&config, fbp_hann(&projections, n)?);
        Ok(Self {
            config,
            truth,
            projections,
            clean,
        })
    }

    fn to_hu(config: &CtConfig, mu_img: Grid2D) -> Grid2D {
        let mu = config.mu_pixel();
        mu_img.map(|v| v / mu - 1.0).with_unit(Unit::HuPerThousand)
    }

    /// FBP of a sinogram, in HU/1000.
    pub fn reconstruct(&self, sino: &Sinogram) -> Result<Grid2D> {
        Ok(Self::to_hu(&self.config, fbp_hann(sino, self.config.grid)?))
    }

    /// Noiseless reconstructions from the two view subsets.
    pub fn noiseless_split(&self) -> Result<(Grid2D, Grid2D)> {
        let (a, b) = split_odd_even(&self.projections)?;
        Ok((self.reconstruct(&a)?, self.reconstruct(&b)?))
    }

    /// Fresh noise: reconstructions from the odd and even views and from all views.
    pub fn draw(&self, rng: &mut Rng) -> Result<(Grid2D, Grid2D, Grid2D)> {
        let noisy = insert_noise(&self.projections, &self.config.dose, rng)?;
        let (a, b) = split_odd_even(&noisy)?;
        Ok((self.reconstruct(&a)?, self.reconstruct(&b)?, self.reconstruct(&noisy)?))
    }

    pub fn draw_pair(&self, rng: &mut Rng) -> Result<SplitPair> {
        let (r1, r2, est) = self.draw(rng)?;
        SplitPair::new(
            Modality::Ct,
            Image::Real(r1),
            Image::Real(r2),
            Image::Real(est),
            Some(Image::Real(self.clean.clone())),
            1.0,
        )
    }
}

/// r1 = FBP(odd views), r2 = FBP(even views), est = FBP(all noisy views),
/// clean = FBP(noiseless views); all in HU/1000.
pub fn make_ct_splitpair(phantom: &Phantom, config: CtConfig, rng: &mut Rng) -> Result<SplitPair> {
    CtAcquisition::new(phantom, config)?.draw_pair(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(n: usize) -> CtConfig {
        CtConfig {
            views: 4 * n,
            ..CtConfig::desk(n)
        }
    }

    #[test]
    fn config_validation() {
        assert!(CtConfig::desk(64).validate().is_ok());
        assert!(CtConfig { views: 7, ..CtConfig::desk(64) }.validate().is_err());
        assert!(CtConfig { detectors: 10, ..CtConfig::desk(64) }.validate().is_err());
        let bad_dose = DoseModel { i0: 1.0, dose: 0.25 };
        assert!(CtConfig { dose: bad_dose, ..CtConfig::desk(64) }.validate().is_err());
    }

    #[test]
    fn noiseless_limit_reconstructions_agree() {
        let n = 32;
        let phantom = random_abdomen(n, &mut Rng::new(1));
        let cfg = CtConfig {
            dose: DoseModel::new(1e14, 1.0).unwrap(),
            ..small_config(n)
        };
        let pair = make_ct_splitpair(&phantom, cfg, &mut Rng::new(2)).unwrap();
        let clean = pair.clean.as_ref().unwrap().to_planes();
        let (r1, r2) = (pair.r1.to_planes(), pair.r2.to_planes());
        let acq = CtAcquisition::new(&phantom, cfg).unwrap();
        let (h1, h2) = acq.noiseless_split().unwrap();
        // the only remaining difference is the half-view discretization
        let half_view = h1
            .data()
            .iter()
            .zip(h2.data())
            .zip(&clean)
            .map(|((a, b), c)| (a - c).abs().max((b - c).abs()))
            .fold(0.0, f64::max);
        for i in 0..clean.len() {
            assert!((r1[i] - clean[i]).abs() <= half_view + 1e-3, "pixel {i}");
            assert!((r2[i] - clean[i]).abs() <= half_view + 1e-3, "pixel {i}");
        }
        assert!(half_view < 0.5, "{half_view}");
    }

    #[test]
    fn reconstruction_tracks_the_phantom() {
        let n = 48;
        let phantom = random_abdomen(n, &mut Rng::new(3));
        let acq = CtAcquisition::new(&phantom, small_config(n)).unwrap();
        // mean absolute error over the body interior
        let mut err = 0.0;
        let mut count = 0;
        for r in 0..n {
            for c in 0..n {
                let t = acq.truth.get(r, c);
                if t > -0.5 {
                    err += (acq.clean.get(r, c) - t).abs();
                    count += 1;
                }
            }
        }
        assert!(count > 500);
        assert!(err / (count as f64) < 0.15, "{}", err / count as f64);
        assert_eq!(acq.clean.unit(), Unit::HuPerThousand);
    }

    #[test]
    fn split_noise_is_zero_mean_small_probe() {
        let n = 24;
        let phantom = random_abdomen(n, &mut Rng::new(4));
        let acq = CtAcquisition::new(&phantom, small_config(n)).unwrap();
        let (h1, _) = acq.noiseless_split().unwrap();
        let trials = 300;
        let mut sum = vec![0.0; n * n];
        let mut sq = vec![0.0; n * n];
        let master = Rng::new(5);
        for t in 0..trials {
            let (r1, _, _) = acq.draw(&mut master.derive(t)).unwrap();
            for (i, (&a, &b)) in r1.data().iter().zip(h1.data()).enumerate() {
                sum[i] += a - b;
                sq[i] += (a - b) * (a - b);
            }
        }
        let tm = trials as f64;
        for i in 0..n * n {
            let mean = sum[i] / tm;
            let var = (sq[i] / tm - mean * mean) * tm / (tm - 1.0);
            let se = (var / tm).sqrt();
            assert!(mean.abs() < 5.0 * se, "pixel {i}: {mean} vs se {se}");
        }
    }

    #[test]
    fn same_seed_same_pair() {
        let n = 16;
        let phantom = shepp_logan(n);
        let a = make_ct_splitpair(&phantom, small_config(n), &mut Rng::new(6)).unwrap();
        let b = make_ct_splitpair(&phantom, small_config(n), &mut Rng::new(6)).unwrap();
        assert_eq!(a, b);
    }
}
