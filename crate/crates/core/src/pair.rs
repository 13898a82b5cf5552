//! Split noisy realizations shared by the simulators, trainer and evaluator.

use crate::error::{Error, Result};
use crate::numerics::{ComplexGrid2D, Grid2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Ct,
    Mr,
}

impl Modality {
    pub fn label(self) -> &'static str {
        match self {
            Modality::Ct => "ct",
            Modality::Mr => "mr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ct" => Ok(Modality::Ct),
            "mr" => Ok(Modality::Mr),
            other => Err(Error::Config(format!("unknown modality {other:?} (expected ct or mr)"))),
        }
    }

    /// Network input channels: one for CT, real and imaginary planes for MR.
    pub fn channels(self) -> usize {
        match self {
            Modality::Ct => 1,
            Modality::Mr => 2,
        }
    }
}

/// A real (CT) or complex (MR) slice.
#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Real(Grid2D),
    Complex(ComplexGrid2D),
}

impl Image {
    pub fn height(&self) -> usize {
        match self {
            Image::Real(g) => g.height(),
            Image::Complex(g) => g.height(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Image::Real(g) => g.width(),
            Image::Complex(g) => g.width(),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Image::Real(_) => 1,
            Image::Complex(_) => 2,
        }
    }

    /// Channel-major planes `[C, H, W]`.
    pub fn to_planes(&self) -> Vec<f64> {
        match self {
            Image::Real(g) => g.data().to_vec(),
            Image::Complex(g) => g.to_planes(),
        }
    }

    /// Rebuilds an image of the same kind as `self` from `[C, H, W]` planes.
    pub fn like(&self, planes: &[f64]) -> Result<Image> {
        let (h, w) = (self.height(), self.width());
        match self {
            Image::Real(g) => Ok(Image::Real(Grid2D::new(h, w, planes.to_vec(), g.unit())?)),
            Image::Complex(_) => Ok(Image::Complex(ComplexGrid2D::from_planes(h, w, planes)?)),
        }
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.channels() == other.channels() && self.height() == other.height() && self.width() == other.width()
    }

    pub fn crop(&self, top: usize, left: usize, size_h: usize, size_w: usize) -> Image {
        match self {
            Image::Real(g) => Image::Real(g.crop(top, left, size_h, size_w)),
            Image::Complex(g) => Image::Complex(g.crop(top, left, size_h, size_w)),
        }
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> Image {
        match self {
            Image::Real(g) => Image::Real(g.map(|v| v * factor)),
            Image::Complex(g) => Image::Complex(g.scale(factor)),
        }
    }

    /// Elementwise `(a + b) / 2`.
    pub fn average(a: &Image, b: &Image) -> Result<Image> {
        if !a.same_shape(b) {
            return Err(Error::Shape("averaging images of different shape".into()));
        }
        let pa = a.to_planes();
        let pb = b.to_planes();
        let mean: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| 0.5 * (x + y)).collect();
        a.like(&mean)
    }

    pub fn as_real(&self) -> Option<&Grid2D> {
        match self {
            Image::Real(g) => Some(g),
            Image::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&ComplexGrid2D> {
        match self {
            Image::Complex(g) => Some(g),
            Image::Real(_) => None,
        }
    }
}

/// Two independently reconstructed noisy realizations of one slice, the
/// consistency estimate, and the clean reference when it is known.
///
/// `scale` maps stored (normalized) values back to the acquisition scale:
/// original = stored · scale. It is a power of two so the round trip is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub modality: Modality,
    pub r1: Image,
    pub r2: Image,
    pub est: Image,
    pub clean: Option<Image>,
    pub scale: f64,
}

impl SplitPair {
    pub fn new(
        modality: Modality,
        r1: Image,
        r2: Image,
        est: Image,
        clean: Option<Image>,
        scale: f64,
    ) -> Result<Self> {
        let shapes_ok = r1.same_shape(&r2)
            && r1.same_shape(&est)
            && clean.as_ref().is_none_or(|c| r1.same_shape(c));
        if !shapes_ok {
            return Err(Error::Shape("split pair images differ in shape".into()));
        }
        if r1.channels() != modality.channels() {
            return Err(Error::Shape(format!(
                "{} slice with {} channels",
                modality.label(),
                r1.channels()
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!("normalization scale {scale}")));
        }
        Ok(Self {
            modality,
            r1,
            r2,
            est,
            clean,
            scale,
        })
    }

    pub fn height(&self) -> usize {
        self.r1.height()
    }

    pub fn width(&self) -> usize {
        self.r1.width()
    }

    /// Maps a stored image back to the acquisition scale.
    pub fn denormalize(&self, img: &Image) -> Image {
        img.scaled(self.scale)
    }
}

/// Smallest power of two `s` with `peak / s ≤ 1`; 1 for an all-zero image.
pub fn power_of_two_scale(peak: f64) -> f64 {
    if peak <= 0.0 || !peak.is_finite() {
        return 1.0;
    }
    let mut s = 2f64.powi(peak.log2().ceil() as i32);
    while peak / s > 1.0 {
        s *= 2.0;
    }
    while peak / (s / 2.0) <= 1.0 {
        s /= 2.0;
    }
    s
}
