//! Raw NCHW kernels used by the tape. Everything here works on plain
//! slices; shape checking happens in the tape layer.

use matrixmultiply::dgemm;

/// `c[m x n] = alpha * a[m x k] * b[k x n] + beta * c`, with explicit strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    rsc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass slices whose extents cover every strided access
    // for the given m, k, n (asserted below on the contiguous layouts used).
    debug_assert!(c.len() >= m * n);
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            1,
        );
    }
}

/// Unfolds one `[C, H, W]` image into `[C*k*k, H*W]` columns with zero
/// padding of `(k-1)/2`.
pub(crate) fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out_row = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    out_row[..x0.min(w)].fill(0.0);
                    if x1 > x0 {
                        let s0 = (x0 as isize + dx) as usize;
                        out_row[x0..x1].copy_from_slice(&src_row[s0..s0 + (x1 - x0)]);
                    }
                    out_row[x1.max(x0).min(w)..].fill(0.0);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into an image gradient.
pub(crate) fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, dx: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dxo = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dxo).max(0) as usize;
                    let x1 = (w as isize - dxo).min(w as isize).max(0) as usize;
                    if x1 <= x0 {
                        continue;
                    }
                    let s0 = (x0 as isize + dxo) as usize;
                    let dst_row = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x1 - x0)];
                    for (d, s) in dst_row.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvShape {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

pub(crate) fn conv_forward(s: &ConvShape, x: &[f64], wt: &[f64], b: &[f64], out: &mut [f64]) {
    let hw = s.h * s.w;
    let ckk = s.cin * s.k * s.k;
    let mut cols = if s.k == 1 { Vec::new() } else { vec![0.0; ckk * hw] };
    for ni in 0..s.n {
        let xs = &x[ni * s.cin * hw..(ni + 1) * s.cin * hw];
        let os = &mut out[ni * s.cout * hw..(ni + 1) * s.cout * hw];
        for (co, plane) in os.chunks_exact_mut(hw).enumerate() {
            plane.fill(b[co]);
        }
        let src: &[f64] = if s.k == 1 {
            xs
        } else {
            im2col(xs, s.cin, s.h, s.w, s.k, &mut cols);
            &cols
        };
        gemm(
            s.cout,
            ckk,
            hw,
            wt,
            (ckk as isize, 1),
            src,
            (hw as isize, 1),
            1.0,
            os,
            hw as isize,
        );
    }
}

/// Accumulates gradients of a convolution. `dx`, `dw`, `db` are optional so
/// constant inputs cost nothing.
pub(crate) fn conv_backward(
    s: &ConvShape,
    x: &[f64],
    wt: &[f64],
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let hw = s.h * s.w;
    let ckk = s.cin * s.k * s.k;
    let need_cols = s.k != 1 && dw.is_some();
    let mut cols = if need_cols { vec![0.0; ckk * hw] } else { Vec::new() };
    let mut dcols = if s.k != 1 && dx.is_some() {
        vec![0.0; ckk * hw]
    } else {
        Vec::new()
    };
    for ni in 0..s.n {
        let xs = &x[ni * s.cin * hw..(ni + 1) * s.cin * hw];
        let ds = &dout[ni * s.cout * hw..(ni + 1) * s.cout * hw];
        if let Some(db) = db.as_deref_mut() {
            for (co, plane) in ds.chunks_exact(hw).enumerate() {
                db[co] += plane.iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            let src: &[f64] = if s.k == 1 {
                xs
            } else {
                im2col(xs, s.cin, s.h, s.w, s.k, &mut cols);
                &cols
            };
            // dW[cout x ckk] += dOut[cout x hw] * cols^T[hw x ckk]
            gemm(
                s.cout,
                hw,
                ckk,
                ds,
                (hw as isize, 1),
                src,
                (1, hw as isize),
                1.0,
                dw,
                ckk as isize,
            );
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxs = &mut dx[ni * s.cin * hw..(ni + 1) * s.cin * hw];
            if s.k == 1 {
                // dX[cin x hw] += W^T[cin x cout] * dOut[cout x hw]
                gemm(
                    s.cin,
                    s.cout,
                    hw,
                    wt,
                    (1, ckk as isize),
                    ds,
                    (hw as isize, 1),
                    1.0,
                    dxs,
                    hw as isize,
                );
            } else {
                gemm(
                    ckk,
                    s.cout,
                    hw,
                    wt,
                    (1, ckk as isize),
                    ds,
                    (hw as isize, 1),
                    0.0,
                    &mut dcols,
                    hw as isize,
                );
                col2im(&dcols, s.cin, s.h, s.w, s.k, dxs);
            }
        }
    }
}

/// 2x2 average pooling over `planes` independent `[h, w]` planes.
pub(crate) fn avg_pool(x: &[f64], planes: usize, h: usize, w: usize, out: &mut [f64]) {
    let (ho, wo) = (h / 2, w / 2);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for y in 0..ho {
            for xo in 0..wo {
                let i = 2 * y * w + 2 * xo;
                dst[y * wo + xo] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
            }
        }
    }
}

pub(crate) fn avg_pool_backward(dout: &[f64], planes: usize, h: usize, w: usize, dx: &mut [f64]) {
    let (ho, wo) = (h / 2, w / 2);
    for p in 0..planes {
        let src = &dout[p * ho * wo..(p + 1) * ho * wo];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..ho {
            for xo in 0..wo {
                let g = 0.25 * src[y * wo + xo];
                let i = 2 * y * w + 2 * xo;
                dst[i] += g;
                dst[i + 1] += g;
                dst[i + w] += g;
                dst[i + w + 1] += g;
            }
        }
    }
}

/// 2x2 max pooling; returns the flat input index chosen for each output.
/// Ties resolve to the first element in row-major block order.
pub(crate) fn max_pool(x: &[f64], planes: usize, h: usize, w: usize, out: &mut [f64]) -> Vec<u32> {
    let (ho, wo) = (h / 2, w / 2);
    let mut arg = vec![0u32; planes * ho * wo];
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..ho {
            for xo in 0..wo {
                let i = base + 2 * y * w + 2 * xo;
                let mut best = i;
                for j in [i + 1, i + w, i + w + 1] {
                    if x[j] > x[best] {
                        best = j;
                    }
                }
                let o = p * ho * wo + y * wo + xo;
                out[o] = x[best];
                arg[o] = best as u32;
            }
        }
    }
    arg
}

pub(crate) fn upsample_nearest(x: &[f64], planes: usize, h: usize, w: usize, out: &mut [f64]) {
    let (ho, wo) = (2 * h, 2 * w);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for y in 0..ho {
            for xo in 0..wo {
                dst[y * wo + xo] = src[(y / 2) * w + xo / 2];
            }
        }
    }
}

pub(crate) fn upsample_backward(dout: &[f64], planes: usize, h: usize, w: usize, dx: &mut [f64]) {
    let (ho, wo) = (2 * h, 2 * w);
    for p in 0..planes {
        let src = &dout[p * ho * wo..(p + 1) * ho * wo];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for xo in 0..w {
                let i = 2 * y * wo + 2 * xo;
                dst[y * w + xo] += src[i] + src[i + 1] + src[i + wo] + src[i + wo + 1];
            }
        }
    }
}
