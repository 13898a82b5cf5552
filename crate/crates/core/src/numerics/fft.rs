//! Two-dimensional DFT with the convention used everywhere in the crate:
//! unnormalized forward transform, `1/(H*W)` on the inverse, DC at (0, 0).

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::grid::ComplexGrid2D;

fn transform(g: &ComplexGrid2D, direction: FftDirection) -> ComplexGrid2D {
    let (h, w) = (g.height(), g.width());
    assert!(h >= 1 && w >= 1, "fft2 needs a non-empty grid");
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(w, direction);
    let col_fft = planner.plan_fft(h, direction);

    let mut data = g.data().to_vec();
    let mut scratch = vec![Complex64::new(0.0, 0.0); row_fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(w) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let mut column = vec![Complex64::new(0.0, 0.0); h];
    let mut scratch = vec![Complex64::new(0.0, 0.0); col_fft.get_inplace_scratch_len()];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }
    if direction == FftDirection::Inverse {
        let norm = 1.0 / (h * w) as f64;
        for v in &mut data {
            *v *= norm;
        }
    }
    ComplexGrid2D::new(h, w, data).expect("fft of finite input is finite")
}

pub fn fft2(g: &ComplexGrid2D) -> ComplexGrid2D {
    transform(g, FftDirection::Forward)
}

pub fn ifft2(g: &ComplexGrid2D) -> ComplexGrid2D {
    transform(g, FftDirection::Inverse)
}

/// Index of frequency bin `k` after a centered shift of a length-`n` axis.
pub fn centered_index(k: usize, n: usize) -> usize {
    (k + n / 2) % n
}

/// Inverse of [`centered_index`].
pub fn uncentered_index(c: usize, n: usize) -> usize {
    (c + n - n / 2) % n
}

/// Moves the DC bin from (0, 0) to (H/2, W/2).
pub fn fftshift(g: &ComplexGrid2D) -> ComplexGrid2D {
    let (h, w) = (g.height(), g.width());
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        for c in 0..w {
            out[centered_index(r, h) * w + centered_index(c, w)] = g.get(r, c);
        }
    }
    ComplexGrid2D::new(h, w, out).expect("shift preserves finiteness")
}

pub fn ifftshift(g: &ComplexGrid2D) -> ComplexGrid2D {
    let (h, w) = (g.height(), g.width());
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        for c in 0..w {
            out[uncentered_index(r, h) * w + uncentered_index(c, w)] = g.get(r, c);
        }
    }
    ComplexGrid2D::new(h, w, out).expect("shift preserves finiteness")
}
