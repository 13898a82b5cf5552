use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{ModelParams, UnetConfig};
use crate::pair::Image;

/// Conservative bound on how far (in pixels) an output pixel can see into
/// its input: two 3x3 convolutions per level on both paths plus the
/// bottleneck, and one level-sized step for each pooling and upsampling.
pub fn receptive_radius(config: &UnetConfig) -> usize {
    let d = config.depth;
    6 * ((1 << d) - 1) + (2 << d)
}

fn image_tensor(img: &Image) -> Result<Tensor> {
    Tensor::new(vec![1, img.channels(), img.height(), img.width()], img.to_planes())
}

/// Copies a `[C, h, w]` block out of `[C, H, W]` planes.
fn crop_planes(src: &[f64], c: usize, h: usize, w: usize, top: usize, left: usize, ch: usize, cw: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(c * ch * cw);
    for k in 0..c {
        for r in top..top + ch {
            let s = (k * h + r) * w + left;
            out.extend_from_slice(&src[s..s + cw]);
        }
    }
    out
}

/// Replicates the last row / column so both sides become multiples of `m`.
fn pad_planes(src: &[f64], c: usize, h: usize, w: usize, m: usize) -> (Vec<f64>, usize, usize) {
    let ph = h.div_ceil(m) * m;
    let pw = w.div_ceil(m) * m;
    let mut out = Vec::with_capacity(c * ph * pw);
    for k in 0..c {
        for r in 0..ph {
            let rr = r.min(h - 1);
            for col in 0..pw {
                out.push(src[(k * h + rr) * w + col.min(w - 1)]);
            }
        }
    }
    (out, ph, pw)
}

/// `f(img; Θ)` over the whole image. Sizes that are not multiples of
/// 2^depth are edge-padded and cropped back.
pub fn apply_whole(params: &ModelParams, img: &Image) -> Result<Image> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let m = params.config.spatial_multiple();
    if h % m == 0 && w % m == 0 {
        let y = params.apply(&image_tensor(img)?)?;
        return img.like(y.values());
    }
    let (padded, ph, pw) = pad_planes(&img.to_planes(), c, h, w, m);
    let y = params.apply(&Tensor::new(vec![1, c, ph, pw], padded)?)?;
    img.like(&crop_planes(y.values(), c, ph, pw, 0, 0, h, w))
}

/// `f(img; Θ)` evaluated tile by tile. Tile origins and halos are multiples
/// of 2^depth so every window pools on the same grid as the whole image.
pub fn apply_tiled(params: &ModelParams, img: &Image, tile: usize, halo: usize) -> Result<Image> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let m = params.config.spatial_multiple();
    if tile == 0 || !tile.is_multiple_of(m) || !halo.is_multiple_of(m) {
        return Err(Error::InvalidArgument(format!(
            "tile {tile} and halo {halo} must be multiples of {m}"
        )));
    }
    if h % m != 0 || w % m != 0 {
        return Err(Error::Shape(format!("tiled inference needs {h}x{w} divisible by {m}")));
    }
    let planes = img.to_planes();
    let mut out = vec![0.0; planes.len()];
    for top in (0..h).step_by(tile) {
        for left in (0..w).step_by(tile) {
            let (t0, l0) = (top.saturating_sub(halo), left.saturating_sub(halo));
            let (t1, l1) = ((top + tile + halo).min(h), (left + tile + halo).min(w));
            let window = crop_planes(&planes, c, h, w, t0, l0, t1 - t0, l1 - l0);
            let y = params.apply(&Tensor::new(vec![1, c, t1 - t0, l1 - l0], window)?)?;
            let (wh, ww) = (t1 - t0, l1 - l0);
            for k in 0..c {
                for r in top..(top + tile).min(h) {
                    for col in left..(left + tile).min(w) {
                        out[(k * h + r) * w + col] = y.values()[(k * wh + r - t0) * ww + col - l0];
                    }
                }
            }
        }
    }
    img.like(&out)
}

/// Denoised slice: `(f(r1; Θ1) + f(r2; Θ2)) / 2` for a network pair,
/// `f(r1; Θ1)` for a single network.
pub fn denoise_with(theta1: &ModelParams, theta2: Option<&ModelParams>, r1: &Image, r2: &Image) -> Result<Image> {
    let y1 = apply_whole(theta1, r1)?;
    match theta2 {
        Some(t2) => Image::average(&y1, &apply_whole(t2, r2)?),
        None => Ok(y1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_unet, init_he};
    use crate::numerics::{Grid2D, Rng, Unit};

    fn noise_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = Rng::new(seed);
        Image::Real(Grid2D::from_fn(h, w, Unit::HuPerThousand, |_, _| rng.standard_normal()))
    }

    fn random_net(depth: usize, base: usize, seed: u64) -> ModelParams {
        let mut p = build_unet(UnetConfig::new(depth, base, 1)).unwrap();
        init_he(&mut p, &mut Rng::new(seed));
        p
    }

    #[test]
    fn receptive_radius_values() {
        assert_eq!(receptive_radius(&UnetConfig::new(1, 1, 1)), 10);
        assert_eq!(receptive_radius(&UnetConfig::new(3, 1, 1)), 58);
    }

    #[test]
    fn zero_parameters_average_the_inputs() {
        let p = build_unet(UnetConfig::new(2, 2, 1)).unwrap();
        let (r1, r2) = (noise_image(8, 8, 1), noise_image(8, 8, 2));
        let z = denoise_with(&p, Some(&p), &r1, &r2).unwrap();
        assert_eq!(z, Image::average(&r1, &r2).unwrap());
        assert_eq!(denoise_with(&p, None, &r1, &r2).unwrap(), r1);
    }

    #[test]
    fn output_shape_equals_input_even_when_padding() {
        let p = random_net(2, 2, 3);
        let img = noise_image(10, 13, 4);
        let y = apply_whole(&p, &img).unwrap();
        assert_eq!((y.height(), y.width()), (10, 13));
    }

    #[test]
    fn tiled_matches_whole_image() {
        let p = random_net(2, 4, 5);
        let img = noise_image(96, 64, 6);
        let halo = receptive_radius(&p.config).div_ceil(4) * 4;
        let whole = apply_whole(&p, &img).unwrap().to_planes();
        let tiled = apply_tiled(&p, &img, 16, halo).unwrap().to_planes();
        let worst = whole.iter().zip(&tiled).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        // a halo far below the receptive field really does change the result
        let cut = apply_tiled(&p, &img, 16, 0).unwrap().to_planes();
        let worst_cut = whole.iter().zip(&cut).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst_cut > 1e-3, "{worst_cut}");
    }

    #[test]
    fn tiling_rejects_misaligned_tiles() {
        let p = random_net(2, 2, 7);
        assert!(apply_tiled(&p, &noise_image(16, 16, 8), 6, 4).is_err());
    }
}
