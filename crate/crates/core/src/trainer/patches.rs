use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::pair::SplitPair;

/// One spatial window cut identically from every image of a slice, stored
/// as `[C, p, p]` planes.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTuple {
    pub top: usize,
    pub left: usize,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub est: Vec<f64>,
    pub clean: Option<Vec<f64>>,
}

/// `count` windows of side `patch` at uniform in-bounds positions.
pub fn extract_patches(pair: &SplitPair, patch: usize, count: usize, rng: &mut Rng) -> Result<Vec<PatchTuple>> {
    let (h, w) = (pair.height(), pair.width());
    if patch == 0 || patch > h || patch > w {
        return Err(Error::Config(format!("patch {patch} does not fit a {h}x{w} slice")));
    }
    let (r1, r2, est) = (pair.r1.to_planes(), pair.r2.to_planes(), pair.est.to_planes());
    let clean = pair.clean.as_ref().map(|c| c.to_planes());
    let channels = pair.r1.channels();
    let cut = |src: &[f64], top: usize, left: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(channels * patch * patch);
        for c in 0..channels {
            for r in top..top + patch {
                let start = (c * h + r) * w + left;
                out.extend_from_slice(&src[start..start + patch]);
            }
        }
        out
    };
    Ok((0..count)
        .map(|_| {
            let top = rng.below(h - patch + 1);
            let left = rng.below(w - patch + 1);
            PatchTuple {
                top,
                left,
                r1: cut(&r1, top, left),
                r2: cut(&r2, top, left),
                est: cut(&est, top, left),
                clean: clean.as_ref().map(|c| cut(c, top, left)),
            }
        })
        .collect())
}

/// Stacks one field of several tuples into an NCHW tensor.
pub fn stack(items: &[&PatchTuple], channels: usize, patch: usize, field: impl Fn(&PatchTuple) -> &[f64]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(items.len() * channels * patch * patch);
    for t in items {
        data.extend_from_slice(field(t));
    }
    Tensor::new(vec![items.len(), channels, patch, patch], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Grid2D, Unit};
    use crate::pair::{Image, Modality};

    fn ramp_pair(h: usize, w: usize) -> SplitPair {
        let g = |k: f64| Image::Real(Grid2D::from_fn(h, w, Unit::HuPerThousand, |r, c| k * (r * w + c) as f64));
        SplitPair::new(Modality::Ct, g(1.0), g(2.0), g(3.0), Some(g(4.0)), 1.0).unwrap()
    }

    #[test]
    fn full_slice_patch_is_the_slice() {
        let pair = ramp_pair(8, 8);
        let p = extract_patches(&pair, 8, 3, &mut Rng::new(1)).unwrap();
        for t in &p {
            assert_eq!((t.top, t.left), (0, 0));
            assert_eq!(t.r1, pair.r1.to_planes());
            assert_eq!(t.clean.as_ref().unwrap(), &pair.clean.as_ref().unwrap().to_planes());
        }
    }

    #[test]
    fn windows_are_in_bounds_and_aligned() {
        let (h, w, p) = (20, 13, 4);
        let pair = ramp_pair(h, w);
        let tuples = extract_patches(&pair, p, 10_000, &mut Rng::new(2)).unwrap();
        let mut seen_corner = (false, false);
        for t in &tuples {
            assert!(t.top + p <= h && t.left + p <= w);
            seen_corner.0 |= t.top == 0 && t.left == 0;
            seen_corner.1 |= t.top == h - p && t.left == w - p;
            // every field comes from the same window
            let expected = (t.top * w + t.left) as f64;
            assert_eq!(t.r1[0], expected);
            assert_eq!(t.r2[0], 2.0 * expected);
            assert_eq!(t.est[p * p - 1], 3.0 * ((t.top + p - 1) * w + t.left + p - 1) as f64);
            assert_eq!(t.clean.as_ref().unwrap()[1], 4.0 * (expected + 1.0));
        }
        assert!(seen_corner.0 && seen_corner.1);
    }

    #[test]
    fn same_seed_same_windows() {
        let pair = ramp_pair(16, 16);
        let a = extract_patches(&pair, 4, 50, &mut Rng::new(3)).unwrap();
        let b = extract_patches(&pair, 4, 50, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_patch_is_rejected() {
        assert!(matches!(extract_patches(&ramp_pair(8, 8), 16, 1, &mut Rng::new(4)), Err(Error::Config(_))));
    }
}
