use crate::error::{Error, Result};
use crate::numerics::{Grid2D, Rng, Unit};

/// Ellipse in normalized coordinates: the grid spans [-1, 1] on both axes,
/// `y` pointing up. `angle` rotates the `a` axis counter-clockwise from `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub angle: f64,
    pub value: f64,
}

impl Ellipse {
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, angle: f64, value: f64) -> Self {
        Self {
            cx,
            cy,
            a,
            b,
            angle,
            value,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }
}

/// Sum of ellipses over a constant background, values in HU/1000 for CT.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub ellipses: Vec<Ellipse>,
    pub background: f64,
    pub size: usize,
}

impl Phantom {
    pub fn new(ellipses: Vec<Ellipse>, background: f64, size: usize) -> Result<Self> {
        for e in &ellipses {
            let ok = [e.cx, e.cy, e.angle, e.value].iter().all(|v| v.is_finite())
                && e.a > 0.0
                && e.b > 0.0
                && e.a.is_finite()
                && e.b.is_finite();
            if !ok {
                return Err(Error::InvalidArgument(format!("bad ellipse {e:?}")));
            }
        }
        if !background.is_finite() {
            return Err(Error::InvalidArgument("non-finite phantom background".into()));
        }
        Ok(Self {
            ellipses,
            background,
            size,
        })
    }

    /// Value at a normalized point.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.background
            + self
                .ellipses
                .iter()
                .filter(|e| e.contains(x, y))
                .map(|e| e.value)
                .sum::<f64>()
    }
}

/// Normalized coordinates of the center of pixel (row, col).
pub fn pixel_center(row: usize, col: usize, h: usize, w: usize) -> (f64, f64) {
    let x = (2 * col + 1) as f64 / w as f64 - 1.0;
    let y = 1.0 - (2 * row + 1) as f64 / h as f64;
    (x, y)
}

/// Samples the phantom at pixel centers.
pub fn rasterize(phantom: &Phantom, h: usize, w: usize) -> Grid2D {
    Grid2D::from_fn(h, w, Unit::HuPerThousand, |r, c| {
        let (x, y) = pixel_center(r, c, h, w);
        phantom.value_at(x, y)
    })
}

const SHEPP_LOGAN_GEOMETRY: [(f64, f64, f64, f64, f64); 10] = [
    (0.0, 0.0, 0.69, 0.92, 0.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0),
    (0.22, 0.0, 0.11, 0.31, -18.0),
    (-0.22, 0.0, 0.16, 0.41, 18.0),
    (0.0, 0.35, 0.21, 0.25, 0.0),
    (0.0, 0.1, 0.046, 0.046, 0.0),
    (0.0, -0.1, 0.046, 0.046, 0.0),
    (-0.08, -0.605, 0.046, 0.023, 0.0),
    (0.0, -0.606, 0.023, 0.023, 0.0),
    (0.06, -0.605, 0.023, 0.046, 0.0),
];

fn shepp_logan_with(values: [f64; 10], size: usize) -> Phantom {
    let deg = std::f64::consts::PI / 180.0;
    let ellipses = SHEPP_LOGAN_GEOMETRY
        .iter()
        .zip(values)
        .map(|(&(cx, cy, a, b, ang), v)| Ellipse::new(cx, cy, a, b, ang * deg, v))
        .collect();
    Phantom {
        ellipses,
        background: 0.0,
        size,
    }
}

/// Shepp–Logan head phantom with its original intensities (skull 2, brain 1.02).
pub fn shepp_logan(size: usize) -> Phantom {
    shepp_logan_with([2.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01], size)
}

/// Higher-contrast variant (skull 1, brain 0.2).
pub fn modified_shepp_logan(size: usize) -> Phantom {
    shepp_logan_with([1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1], size)
}

fn between(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// Random abdomen-like slice in HU/1000: air background, a fat-rimmed body,
/// liver with lesions, spleen, kidneys, aorta, vertebra and bowel gas.
pub fn random_abdomen(size: usize, rng: &mut Rng) -> Phantom {
    let mut e = Vec::new();
    let bx = between(rng, 0.78, 0.88);
    let by = between(rng, 0.58, 0.70);
    let tilt = between(rng, -0.05, 0.05);
    let (ox, oy) = (between(rng, -0.03, 0.03), between(rng, -0.03, 0.03));
    // body as fat (-90 HU) then muscle/soft tissue (+40 HU) inside
    e.push(Ellipse::new(ox, oy, bx, by, tilt, 0.91));
    let rim = between(rng, 0.86, 0.92);
    e.push(Ellipse::new(ox, oy, bx * rim, by * rim, tilt, 0.13));

    // liver on the image left (patient right)
    let (lx, ly) = (ox - between(rng, 0.25, 0.35), oy + between(rng, 0.0, 0.15));
    let (la, lb) = (between(rng, 0.28, 0.38), between(rng, 0.22, 0.30));
    let lang = between(rng, -0.5, 0.5);
    e.push(Ellipse::new(lx, ly, la, lb, lang, 0.02));
    for _ in 0..1 + rng.below(3) {
        let r = between(rng, 0.0, 0.6);
        let phi = between(rng, 0.0, std::f64::consts::TAU);
        let rad = between(rng, 0.02, 0.06);
        let contrast = if rng.bernoulli(0.5) { -0.04 } else { 0.035 };
        e.push(Ellipse::new(
            lx + r * la * phi.cos() * 0.8,
            ly + r * lb * phi.sin() * 0.8,
            rad,
            rad * between(rng, 0.7, 1.0),
            between(rng, 0.0, 3.0),
            contrast,
        ));
    }

    // spleen
    e.push(Ellipse::new(
        ox + between(rng, 0.4, 0.5),
        oy + between(rng, 0.1, 0.2),
        between(rng, 0.1, 0.14),
        between(rng, 0.07, 0.1),
        between(rng, -0.6, 0.6),
        0.01,
    ));

    // kidneys
    for side in [-1.0, 1.0] {
        e.push(Ellipse::new(
            ox + side * between(rng, 0.22, 0.3),
            oy - between(rng, 0.25, 0.32),
            between(rng, 0.06, 0.08),
            between(rng, 0.09, 0.12),
            side * between(rng, 0.2, 0.5),
            0.12,
        ));
    }

    // aorta and vertebra
    e.push(Ellipse::new(ox + 0.06, oy - 0.3, 0.045, 0.045, 0.0, 0.16));
    let (vx, vy) = (ox + between(rng, -0.02, 0.02), oy - between(rng, 0.45, 0.5));
    let vr = between(rng, 0.08, 0.1);
    e.push(Ellipse::new(vx, vy, vr, vr * 0.9, 0.0, 0.7));
    e.push(Ellipse::new(vx, vy, vr * 0.75, vr * 0.65, 0.0, -0.45));

    // bowel gas pockets, kept away from the liver
    for _ in 0..rng.below(3) {
        let rad = between(rng, 0.02, 0.05);
        e.push(Ellipse::new(
            ox + between(rng, 0.05, 0.35),
            oy + between(rng, -0.1, 0.35),
            rad,
            rad,
            0.0,
            -0.9,
        ));
    }

    Phantom {
        ellipses: e,
        background: -1.0,
        size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_phantom_rasterizes_to_background() {
        let g = rasterize(&Phantom::new(vec![], 0.0, 8).unwrap(), 8, 8);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_grid_ellipse_covers_interior() {
        let p = Phantom::new(vec![Ellipse::new(0.0, 0.0, 1.0, 1.0, 0.0, 1.0)], 0.0, 16).unwrap();
        let g = rasterize(&p, 16, 16);
        for r in 4..12 {
            for c in 4..12 {
                assert_eq!(g.get(r, c), 1.0);
            }
        }
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn overlapping_ellipses_add() {
        let a = Ellipse::new(-0.1, 0.0, 0.5, 0.5, 0.0, 0.3);
        let b = Ellipse::new(0.1, 0.0, 0.5, 0.5, 0.0, 0.4);
        let both = rasterize(&Phantom::new(vec![a, b], 0.0, 32).unwrap(), 32, 32);
        let ga = rasterize(&Phantom::new(vec![a], 0.0, 32).unwrap(), 32, 32);
        let gb = rasterize(&Phantom::new(vec![b], 0.0, 32).unwrap(), 32, 32);
        for i in 0..both.data().len() {
            assert_eq!(both.data()[i], ga.data()[i] + gb.data()[i]);
        }
        assert!((both.get(16, 16) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rotated_ellipse_orientation() {
        let e = Ellipse::new(0.0, 0.0, 0.8, 0.1, std::f64::consts::FRAC_PI_2, 1.0);
        assert!(e.contains(0.0, 0.7));
        assert!(!e.contains(0.7, 0.0));
    }

    #[test]
    fn pixel_centers_are_symmetric() {
        assert_eq!(pixel_center(0, 0, 4, 4), (-0.75, 0.75));
        assert_eq!(pixel_center(3, 3, 4, 4), (0.75, -0.75));
    }

    #[test]
    fn random_abdomen_is_reproducible_and_plausible() {
        let a = random_abdomen(64, &mut Rng::new(9));
        let b = random_abdomen(64, &mut Rng::new(9));
        assert_eq!(a, b);
        let g = rasterize(&a, 64, 64);
        assert_eq!(g.get(0, 0), -1.0);
        let lo = g.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = g.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= -1.0 - 1e-12 && hi < 1.5, "{lo} {hi}");
        assert!(g.get(32, 32).abs() < 0.3);
    }

    #[test]
    fn shepp_logan_reference_values() {
        let n = 128;
        let g = rasterize(&shepp_logan(n), n, n);
        // brain matter just off center, outside the small inner discs
        assert!((g.get(80, 64) - 1.02).abs() < 1e-12, "{}", g.get(80, 64));
        // skull rim on the vertical axis
        assert!((g.get(5, 64) - 2.0).abs() < 1e-12, "{}", g.get(5, 64));
        let m = rasterize(&modified_shepp_logan(n), n, n);
        assert!((m.get(80, 64) - 0.2).abs() < 1e-12);
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn rejects_degenerate_ellipses() {
        assert!(Phantom::new(vec![Ellipse::new(0.0, 0.0, 0.0, 1.0, 0.0, 1.0)], 0.0, 4).is_err());
        assert!(Phantom::new(vec![], f64::NAN, 4).is_err());
    }
}
