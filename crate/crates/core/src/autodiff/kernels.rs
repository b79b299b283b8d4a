//! Slice-level kernels shared by the forward and backward passes.

/// `c = alpha * a * b + beta * c` for row-major operands with explicit strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    /// 1x1, stride 1, no padding: the input already is its own column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

pub(crate) fn im2col(input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let n = g.out_plane();
    let mut col = vec![0.0; g.col_rows() * n];
    for ci in 0..g.cin {
        let plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut col[row * n..(row + 1) * n];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let out = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            *o = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

pub(crate) fn col2im(col: &[f64], g: &ConvGeom) -> Vec<f64> {
    let n = g.out_plane();
    let mut out = vec![0.0; g.cin * g.h * g.w];
    for ci in 0..g.cin {
        let plane = &mut out[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &col[row * n..(row + 1) * n];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv2d_forward(input: &[f64], weight: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let n = g.out_plane();
    let kk = g.col_rows();
    let mut out = vec![0.0; g.cout * n];
    if let Some(b) = bias {
        for (co, row) in out.chunks_exact_mut(n).enumerate() {
            row.fill(b[co]);
        }
    }
    let owned;
    let col: &[f64] = if g.is_pointwise() {
        input
    } else {
        owned = im2col(input, g);
        &owned
    };
    gemm(g.cout, kk, n, weight, (kk, 1), col, (n, 1), 1.0, &mut out);
    out
}

/// Returns `(d_input, d_weight, d_bias)` for the requested parts.
pub(crate) fn conv2d_backward(
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    g: &ConvGeom,
    need: (bool, bool, bool),
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>) {
    let n = g.out_plane();
    let kk = g.col_rows();
    let d_bias = need
        .2
        .then(|| grad_out.chunks_exact(n).map(|r| r.iter().sum()).collect());
    let d_weight = need.1.then(|| {
        let owned;
        let col: &[f64] = if g.is_pointwise() {
            input
        } else {
            owned = im2col(input, g);
            &owned
        };
        let mut dw = vec![0.0; g.cout * kk];
        // dW = dOut * col^T
        gemm(g.cout, n, kk, grad_out, (n, 1), col, (1, n), 0.0, &mut dw);
        dw
    });
    let d_input = need.0.then(|| {
        let mut dcol = vec![0.0; kk * n];
        // dcol = W^T * dOut
        gemm(kk, g.cout, n, weight, (1, kk), grad_out, (n, 1), 0.0, &mut dcol);
        if g.is_pointwise() {
            dcol
        } else {
            col2im(&dcol, g)
        }
    });
    (d_input, d_weight, d_bias)
}

/// Normalized 1-D Gaussian window centred on `taps / 2`.
pub(crate) fn gaussian_window(sigma: f64, taps: usize) -> Vec<f64> {
    let centre = (taps / 2) as f64;
    let raw: Vec<f64> = (0..taps)
        .map(|i| {
            let d = i as f64 - centre;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" correlation of every channel with `window` along both axes.
pub(crate) fn blur_valid(input: &[f64], c: usize, h: usize, w: usize, window: &[f64]) -> Vec<f64> {
    let t = window.len();
    let (ho, wo) = (h + 1 - t, w + 1 - t);
    let mut horiz = vec![0.0; c * h * wo];
    for ch in 0..c {
        for y in 0..h {
            let src = &input[(ch * h + y) * w..(ch * h + y + 1) * w];
            let dst = &mut horiz[(ch * h + y) * wo..(ch * h + y + 1) * wo];
            for (x, d) in dst.iter_mut().enumerate() {
                *d = window.iter().zip(&src[x..x + t]).map(|(a, b)| a * b).sum();
            }
        }
    }
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        for y in 0..ho {
            let dst = &mut out[(ch * ho + y) * wo..(ch * ho + y + 1) * wo];
            for (k, &wk) in window.iter().enumerate() {
                let src = &horiz[(ch * h + y + k) * wo..(ch * h + y + k + 1) * wo];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += wk * s);
            }
        }
    }
    out
}

/// Adjoint of [`blur_valid`].
pub(crate) fn blur_valid_adjoint(grad: &[f64], c: usize, h: usize, w: usize, window: &[f64]) -> Vec<f64> {
    let t = window.len();
    let (ho, wo) = (h + 1 - t, w + 1 - t);
    let mut horiz = vec![0.0; c * h * wo];
    for ch in 0..c {
        for y in 0..ho {
            let src = &grad[(ch * ho + y) * wo..(ch * ho + y + 1) * wo];
            for (k, &wk) in window.iter().enumerate() {
                let dst = &mut horiz[(ch * h + y + k) * wo..(ch * h + y + k + 1) * wo];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += wk * s);
            }
        }
    }
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let src = &horiz[(ch * h + y) * wo..(ch * h + y + 1) * wo];
            let dst = &mut out[(ch * h + y) * w..(ch * h + y + 1) * w];
            for (x, &s) in src.iter().enumerate() {
                for (k, &wk) in window.iter().enumerate() {
                    dst[x + k] += wk * s;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(input: &[f64], weight: &[f64], g: &ConvGeom) -> Vec<f64> {
        let mut out = vec![0.0; g.cout * g.ho * g.wo];
        for co in 0..g.cout {
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let mut acc = 0.0;
                    for ci in 0..g.cin {
                        for ky in 0..g.k {
                            for kx in 0..g.k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                    acc += input[(ci * g.h + iy as usize) * g.w + ix as usize]
                                        * weight[((co * g.cin + ci) * g.k + ky) * g.k + kx];
                                }
                            }
                        }
                    }
                    out[(co * g.ho + oy) * g.wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn gemm_conv_matches_direct_loops() {
        for &(stride, k, pad) in &[(1, 3, 1), (2, 3, 1), (1, 1, 0), (2, 1, 0)] {
            let (cin, h, w, cout) = (3, 7, 6, 4);
            let ho = (h + 2 * pad - k) / stride + 1;
            let wo = (w + 2 * pad - k) / stride + 1;
            let g = ConvGeom { cin, h, w, cout, k, stride, pad, ho, wo };
            let input: Vec<f64> = (0..cin * h * w).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
            let weight: Vec<f64> = (0..cout * cin * k * k).map(|i| ((i * 13) % 7) as f64 * 0.1).collect();
            let fast = conv2d_forward(&input, &weight, None, &g);
            let slow = naive_conv(&input, &weight, &g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "stride {stride} k {k}");
            }
        }
    }

    #[test]
    fn blur_adjoint_identity() {
        // <blur(x), y> == <x, blur^T(y)>
        let (c, h, w) = (2, 15, 13);
        let win = gaussian_window(1.5, 5);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let bx = blur_valid(&x, c, h, w, &win);
        let y: Vec<f64> = (0..bx.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let bty = blur_valid_adjoint(&y, c, h, w, &win);
        let lhs: f64 = bx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&bty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn gaussian_window_is_normalized_and_symmetric() {
        let win = gaussian_window(1.5, 11);
        assert!((win.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..11 {
            assert_eq!(win[i], win[10 - i]);
        }
    }
}
