//! Differentiable primitives.
//!
//! Images are `(C, H, W)` tensors; there is no batch axis. Subgradients at
//! non-differentiable points: `abs'(0) = 0`, clamp passes the gradient on the
//! closed interval `[lo, hi]`, and max-pool routes to the first maximum in
//! row-major order.

use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::{Tensor, Var};
use crate::error::{Error, Result};

fn finite_param(op: &'static str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: op,
            detail: format!("{name} = {v}"),
        })
    }
}

fn same_shape(op: &'static str, a: &Var<'_>, b: &Var<'_>) -> Result<()> {
    a.same_tape(b)?;
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn dims3(op: &'static str, v: &Var<'_>) -> Result<(usize, usize, usize)> {
    match v.shape() {
        &[c, h, w] => Ok((c, h, w)),
        s => Err(Error::shape(op, format!("expected (C, H, W), got {s:?}"))),
    }
}

fn tensor(shape: Vec<usize>, data: Vec<f64>) -> Rc<Tensor> {
    Rc::new(Tensor::new(shape, data).expect("kernel output shape"))
}

/// Concatenates `(C_i, H, W)` variables along the channel axis.
pub fn concat_channels<'t>(parts: &[&Var<'t>]) -> Result<Var<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat_channels", "no inputs"))?;
    let (_, h, w) = dims3("concat_channels", first)?;
    let mut sizes = Vec::with_capacity(parts.len());
    for p in parts {
        first.same_tape(p)?;
        let (c, ph, pw) = dims3("concat_channels", p)?;
        if (ph, pw) != (h, w) {
            return Err(Error::shape(
                "concat_channels",
                format!("spatial extent {:?} vs {:?}", (ph, pw), (h, w)),
            ));
        }
        sizes.push(c * h * w);
    }
    let total_c: usize = parts.iter().map(|p| p.shape()[0]).sum();
    let mut data = Vec::with_capacity(total_c * h * w);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let out = tensor(vec![total_c, h, w], data);
    let back = Box::new(move |g: &[f64], mask: &[bool]| {
        let mut offset = 0;
        sizes
            .iter()
            .zip(mask)
            .map(|(&n, &m)| {
                let slice = m.then(|| g[offset..offset + n].to_vec());
                offset += n;
                slice
            })
            .collect()
    });
    Ok(first.tape.record(out, parts, back))
}

impl<'t> Var<'t> {
    fn unary(
        &self,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var<'t> {
        let out = tensor(
            self.shape().to_vec(),
            self.data().iter().map(|&x| f(x)).collect(),
        );
        let x = Rc::clone(&self.value);
        let y = Rc::clone(&out);
        let back = Box::new(move |g: &[f64], _: &[bool]| {
            let dx = g
                .iter()
                .zip(x.data().iter().zip(y.data()))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(dx)]
        });
        self.tape.record(out, &[self], back)
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        same_shape("add", self, other)?;
        let out = tensor(
            self.shape().to_vec(),
            self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect(),
        );
        let back = Box::new(|g: &[f64], mask: &[bool]| {
            mask.iter().map(|&m| m.then(|| g.to_vec())).collect()
        });
        Ok(self.tape.record(out, &[self, other], back))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        same_shape("sub", self, other)?;
        let out = tensor(
            self.shape().to_vec(),
            self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect(),
        );
        let back = Box::new(|g: &[f64], mask: &[bool]| {
            vec![
                mask[0].then(|| g.to_vec()),
                mask[1].then(|| g.iter().map(|v| -v).collect()),
            ]
        });
        Ok(self.tape.record(out, &[self, other], back))
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        same_shape("mul", self, other)?;
        let out = tensor(
            self.shape().to_vec(),
            self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect(),
        );
        let (a, b) = (Rc::clone(&self.value), Rc::clone(&other.value));
        let back = Box::new(move |g: &[f64], mask: &[bool]| {
            vec![
                mask[0].then(|| g.iter().zip(b.data()).map(|(g, b)| g * b).collect()),
                mask[1].then(|| g.iter().zip(a.data()).map(|(g, a)| g * a).collect()),
            ]
        });
        Ok(self.tape.record(out, &[self, other], back))
    }

    pub fn div(&self, other: &Var<'t>) -> Result<Var<'t>> {
        same_shape("div", self, other)?;
        let out = tensor(
            self.shape().to_vec(),
            self.data().iter().zip(other.data()).map(|(a, b)| a / b).collect(),
        );
        let (b, y) = (Rc::clone(&other.value), Rc::clone(&out));
        let back = Box::new(move |g: &[f64], mask: &[bool]| {
            vec![
                mask[0].then(|| g.iter().zip(b.data()).map(|(g, b)| g / b).collect()),
                mask[1].then(|| {
                    g.iter()
                        .zip(b.data().iter().zip(y.data()))
                        .map(|(g, (b, y))| -g * y / b)
                        .collect()
                }),
            ]
        });
        Ok(self.tape.record(out, &[self, other], back))
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var<'t>> {
        finite_param("add_scalar", "c", c)?;
        Ok(self.unary(move |x| x + c, |_, _| 1.0))
    }

    pub fn mul_scalar(&self, c: f64) -> Result<Var<'t>> {
        finite_param("mul_scalar", "c", c)?;
        Ok(self.unary(move |x| x * c, move |_, _| c))
    }

    /// `x^p`; intended for positive `x`.
    pub fn pow_scalar(&self, p: f64) -> Result<Var<'t>> {
        finite_param("pow_scalar", "p", p)?;
        Ok(self.unary(move |x| x.powf(p), move |x, _| p * x.powf(p - 1.0)))
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn abs(&self) -> Var<'t> {
        self.unary(f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn square(&self) -> Var<'t> {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    /// Clamp to `[lo, hi]`; either bound may be infinite.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Var<'t>> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invalid("clamp", format!("bounds [{lo}, {hi}]")));
        }
        Ok(self.unary(
            move |x| x.clamp(lo, hi),
            move |x, _| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 },
        ))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(|x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y))
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Var<'t>> {
        finite_param("leaky_relu", "slope", slope)?;
        Ok(self.unary(
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        ))
    }

    pub fn sum(&self) -> Var<'t> {
        let n = self.numel();
        let out = Rc::new(Tensor::scalar(self.data().iter().sum()));
        let back = Box::new(move |g: &[f64], _: &[bool]| vec![Some(vec![g[0]; n])]);
        self.tape.record(out, &[self], back)
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.numel();
        let out = Rc::new(Tensor::scalar(self.data().iter().sum::<f64>() / n as f64));
        let back = Box::new(move |g: &[f64], _: &[bool]| vec![Some(vec![g[0] / n as f64; n])]);
        self.tape.record(out, &[self], back)
    }

    /// Sums out one axis.
    pub fn sum_axis(&self, axis: usize) -> Result<Var<'t>> {
        self.reduce_axis(axis, 1.0)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t>> {
        let len = *self
            .shape()
            .get(axis)
            .ok_or_else(|| Error::shape("mean_axis", format!("axis {axis} of {:?}", self.shape())))?;
        self.reduce_axis(axis, 1.0 / len as f64)
    }

    fn reduce_axis(&self, axis: usize, scale: f64) -> Result<Var<'t>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::shape("reduce_axis", format!("axis {axis} of {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &self.data()[(o * len + a) * inner..(o * len + a + 1) * inner];
                let dst = &mut data[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
        }
        data.iter_mut().for_each(|v| *v *= scale);
        let out = tensor(out_shape, data);
        let back = Box::new(move |g: &[f64], _: &[bool]| {
            let mut dx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for a in 0..len {
                    let dst = &mut dx[(o * len + a) * inner..(o * len + a + 1) * inner];
                    dst.iter_mut()
                        .zip(&g[o * inner..(o + 1) * inner])
                        .for_each(|(d, g)| *d = g * scale);
                }
            }
            vec![Some(dx)]
        });
        Ok(self.tape.record(out, &[self], back))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.value().clone().reshape(shape.to_vec())?;
        let back = Box::new(|g: &[f64], _: &[bool]| vec![Some(g.to_vec())]);
        Ok(self.tape.record(Rc::new(value), &[self], back))
    }

    /// Repeats a one-element variable over `shape`.
    pub fn expand(&self, shape: &[usize]) -> Result<Var<'t>> {
        let v = self
            .value
            .item()
            .ok_or_else(|| Error::shape("expand", format!("source {:?} is not a scalar", self.shape())))?;
        let out = Rc::new(Tensor::full(shape.to_vec(), v));
        let back = Box::new(|g: &[f64], _: &[bool]| vec![Some(vec![g.iter().sum()])]);
        Ok(self.tape.record(out, &[self], back))
    }

    /// Per-channel softmax over the flattened `H x W` extent.
    pub fn softmax_spatial(&self) -> Result<Var<'t>> {
        let (c, h, w) = dims3("softmax_spatial", self)?;
        let n = h * w;
        let mut data = vec![0.0; c * n];
        for ch in 0..c {
            let src = &self.data()[ch * n..(ch + 1) * n];
            let dst = &mut data[ch * n..(ch + 1) * n];
            let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = (s - max).exp();
                total += *d;
            }
            dst.iter_mut().for_each(|d| *d /= total);
        }
        let out = tensor(vec![c, h, w], data);
        let y = Rc::clone(&out);
        let back = Box::new(move |g: &[f64], _: &[bool]| {
            let mut dx = vec![0.0; c * n];
            for ch in 0..c {
                let ys = &y.data()[ch * n..(ch + 1) * n];
                let gs = &g[ch * n..(ch + 1) * n];
                let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                for ((d, &yv), &gv) in dx[ch * n..(ch + 1) * n].iter_mut().zip(ys).zip(gs) {
                    *d = yv * (gv - dot);
                }
            }
            vec![Some(dx)]
        });
        Ok(self.tape.record(out, &[self], back))
    }

    /// 2-D convolution (cross-correlation) with zero padding.
    ///
    /// `weight` is `(C_out, C_in, k, k)`, `bias` is `(C_out)`.
    pub fn conv2d(
        &self,
        weight: &Var<'t>,
        bias: Option<&Var<'t>>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t>> {
        let (cin, h, w) = dims3("conv2d", self)?;
        self.same_tape(weight)?;
        let &[cout, wcin, k, k2] = weight.shape() else {
            return Err(Error::shape("conv2d", format!("weight {:?} is not rank 4", weight.shape())));
        };
        if wcin != cin || k != k2 {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?} vs weight {:?}", self.shape(), weight.shape()),
            ));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::invalid("conv2d", format!("stride {stride} (supported: 1, 2)")));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?} smaller than kernel {k} with padding {pad}", self.shape()),
            ));
        }
        if let Some(b) = bias {
            self.same_tape(b)?;
            if b.shape() != [cout] {
                return Err(Error::shape("conv2d", format!("bias {:?} vs C_out {cout}", b.shape())));
            }
        }
        let geom = ConvGeom {
            cin,
            h,
            w,
            cout,
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
        };
        let data = kernels::conv2d_forward(self.data(), weight.data(), bias.map(|b| b.data()), &geom);
        let out = tensor(vec![cout, geom.ho, geom.wo], data);
        let x = Rc::clone(&self.value);
        let wt = Rc::clone(&weight.value);
        let has_bias = bias.is_some();
        let back = Box::new(move |g: &[f64], mask: &[bool]| {
            let need_b = has_bias && mask[2];
            let (dx, dw, db) =
                kernels::conv2d_backward(x.data(), wt.data(), g, &geom, (mask[0], mask[1], need_b));
            let mut grads = vec![dx, dw];
            if has_bias {
                grads.push(db);
            }
            grads
        });
        let parents: Vec<&Var<'t>> = match bias {
            Some(b) => vec![self, weight, b],
            None => vec![self, weight],
        };
        Ok(self.tape.record(out, &parents, back))
    }

    /// `weight @ x + bias` with `weight` of shape `(out, in)`; `x` is flattened.
    pub fn linear(&self, weight: &Var<'t>, bias: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(weight)?;
        self.same_tape(bias)?;
        let &[n_out, n_in] = weight.shape() else {
            return Err(Error::shape("linear", format!("weight {:?} is not rank 2", weight.shape())));
        };
        if self.numel() != n_in || bias.shape() != [n_out] {
            return Err(Error::shape(
                "linear",
                format!(
                    "input {:?}, weight {:?}, bias {:?}",
                    self.shape(),
                    weight.shape(),
                    bias.shape()
                ),
            ));
        }
        let mut data = bias.data().to_vec();
        kernels::gemm(n_out, n_in, 1, weight.data(), (n_in, 1), self.data(), (1, 1), 1.0, &mut data);
        let out = tensor(vec![n_out], data);
        let x = Rc::clone(&self.value);
        let wt = Rc::clone(&weight.value);
        let back = Box::new(move |g: &[f64], mask: &[bool]| {
            let dx = mask[0].then(|| {
                let mut dx = vec![0.0; n_in];
                kernels::gemm(n_in, n_out, 1, wt.data(), (1, n_in), g, (1, 1), 0.0, &mut dx);
                dx
            });
            let dw = mask[1].then(|| {
                let mut dw = Vec::with_capacity(n_out * n_in);
                for &go in g {
                    dw.extend(x.data().iter().map(|xi| go * xi));
                }
                dw
            });
            vec![dx, dw, mask[2].then(|| g.to_vec())]
        });
        Ok(self.tape.record(out, &[self, weight, bias], back))
    }

    pub fn max_pool_2x2(&self) -> Result<Var<'t>> {
        let (c, h, w) = dims3("max_pool_2x2", self)?;
        let (ho, wo) = (h / 2, w / 2);
        if ho == 0 || wo == 0 {
            return Err(Error::shape("max_pool_2x2", format!("input {:?} too small", self.shape())));
        }
        let x = self.data();
        let mut data = vec![0.0; c * ho * wo];
        let mut argmax = vec![0usize; c * ho * wo];
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = usize::MAX;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if best == usize::MAX || x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    let o = (ch * ho + oy) * wo + ox;
                    data[o] = x[best];
                    argmax[o] = best;
                }
            }
        }
        let n_in = c * h * w;
        let out = tensor(vec![c, ho, wo], data);
        let back = Box::new(move |g: &[f64], _: &[bool]| {
            let mut dx = vec![0.0; n_in];
            for (&src, &gv) in argmax.iter().zip(g) {
                dx[src] += gv;
            }
            vec![Some(dx)]
        });
        Ok(self.tape.record(out, &[self], back))
    }

    /// 2x2 box average; odd trailing rows/columns are dropped.
    pub fn avg_downsample_2x(&self) -> Result<Var<'t>> {
        let (c, h, w) = dims3("avg_downsample_2x", self)?;
        let (ho, wo) = (h / 2, w / 2);
        if ho == 0 || wo == 0 {
            return Err(Error::shape("avg_downsample_2x", format!("input {:?} too small", self.shape())));
        }
        let x = self.data();
        let mut data = vec![0.0; c * ho * wo];
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let r0 = (ch * h + 2 * oy) * w + 2 * ox;
                    let r1 = r0 + w;
                    data[(ch * ho + oy) * wo + ox] = 0.25 * (x[r0] + x[r0 + 1] + x[r1] + x[r1 + 1]);
                }
            }
        }
        let out = tensor(vec![c, ho, wo], data);
        let back = Box::new(move |g: &[f64], _: &[bool]| {
            let mut dx = vec![0.0; c * h * w];
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let gv = 0.25 * g[(ch * ho + oy) * wo + ox];
                        let r0 = (ch * h + 2 * oy) * w + 2 * ox;
                        let r1 = r0 + w;
                        dx[r0] += gv;
                        dx[r0 + 1] += gv;
                        dx[r1] += gv;
                        dx[r1 + 1] += gv;
                    }
                }
            }
            vec![Some(dx)]
        });
        Ok(self.tape.record(out, &[self], back))
    }

    pub fn nearest_upsample_2x(&self) -> Result<Var<'t>> {
        let (c, h, w) = dims3("nearest_upsample_2x", self)?;
        let (ho, wo) = (2 * h, 2 * w);
        let x = self.data();
        let mut data = vec![0.0; c * ho * wo];
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    data[(ch * ho + oy) * wo + ox] = x[(ch * h + oy / 2) * w + ox / 2];
                }
            }
        }
        let out = tensor(vec![c, ho, wo], data);
        let back = Box::new(move |g: &[f64], _: &[bool]| {
            let mut dx = vec![0.0; c * h * w];
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        dx[(ch * h + oy / 2) * w + ox / 2] += g[(ch * ho + oy) * wo + ox];
                    }
                }
            }
            vec![Some(dx)]
        });
        Ok(self.tape.record(out, &[self], back))
    }

    /// `(C * r^2, H, W) -> (C, r H, r W)`, with `out[c, r y + i, r x + j] = in[c r^2 + i r + j, y, x]`.
    pub fn pixel_shuffle(&self, factor: usize) -> Result<Var<'t>> {
        let (cin, h, w) = dims3("pixel_shuffle", self)?;
        let r2 = factor * factor;
        if factor == 0 || cin % r2 != 0 {
            return Err(Error::shape(
                "pixel_shuffle",
                format!("{cin} channels not divisible by factor^2 = {r2}"),
            ));
        }
        let c = cin / r2;
        let index = shuffle_index(c, h, w, factor);
        let x = self.data();
        let data: Vec<f64> = index.iter().map(|&src| x[src]).collect();
        let out = tensor(vec![c, h * factor, w * factor], data);
        let back = Box::new(move |g: &[f64], _: &[bool]| {
            let mut dx = vec![0.0; g.len()];
            for (&src, &gv) in index.iter().zip(g) {
                dx[src] = gv;
            }
            vec![Some(dx)]
        });
        Ok(self.tape.record(out, &[self], back))
    }

    /// Separable Gaussian blur without padding: output extent shrinks by `taps - 1`.
    pub fn gaussian_blur(&self, sigma: f64, taps: usize) -> Result<Var<'t>> {
        finite_param("gaussian_blur", "sigma", sigma)?;
        if sigma <= 0.0 || taps == 0 {
            return Err(Error::invalid("gaussian_blur", format!("sigma {sigma}, taps {taps}")));
        }
        let (c, h, w) = dims3("gaussian_blur", self)?;
        if h < taps || w < taps {
            return Err(Error::shape(
                "gaussian_blur",
                format!("input {:?} smaller than {taps}-tap window", self.shape()),
            ));
        }
        let window = kernels::gaussian_window(sigma, taps);
        let data = kernels::blur_valid(self.data(), c, h, w, &window);
        let out = tensor(vec![c, h + 1 - taps, w + 1 - taps], data);
        let back = Box::new(move |g: &[f64], _: &[bool]| {
            vec![Some(kernels::blur_valid_adjoint(g, c, h, w, &window))]
        });
        Ok(self.tape.record(out, &[self], back))
    }
}

/// Source element for every pixel-shuffle output element.
pub fn shuffle_index(c: usize, h: usize, w: usize, factor: usize) -> Vec<usize> {
    let (ho, wo) = (h * factor, w * factor);
    let mut index = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let sub = (oy % factor) * factor + ox % factor;
                let src_c = ch * factor * factor + sub;
                index.push((src_c * h + oy / factor) * w + ox / factor);
            }
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::super::Tape;
    use super::*;

    #[test]
    fn identity_kernel_conv_is_identity() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn([3, 5, 4], |i| (i as f64 * 0.7).sin()));
        let mut k = vec![0.0; 9];
        for c in 0..3 {
            k[c * 3 + c] = 1.0;
        }
        let w = tape.constant(Tensor::new([3, 3, 1, 1], k).unwrap());
        let b = tape.constant(Tensor::zeros([3]));
        let y = x.conv2d(&w, Some(&b), 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn softmax_of_constant_is_uniform() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::full([1, 4, 6], 3.3));
        let y = x.softmax_spatial().unwrap();
        for &v in y.data() {
            assert!((v - 1.0 / 24.0).abs() < 1e-15);
        }
    }

    #[test]
    fn leaky_relu_definition() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new([2], vec![-1.0, 2.0]).unwrap());
        let y = x.leaky_relu(0.2).unwrap();
        assert_eq!(y.data(), &[-0.2, 2.0]);
    }

    #[test]
    fn sum_gives_all_ones_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_fn([2, 3, 2], |i| i as f64));
        let loss = x.sum();
        let g = tape.backward(&loss).unwrap();
        assert!(g.wrt(&x).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mean_square_gradient_closed_form() {
        let tape = Tape::new();
        let x = tape.param(Tensor::new([2], vec![1.0, -1.0]).unwrap());
        let loss = x.square().mean();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.wrt(&x).data(), &[1.0, -1.0]);
    }

    #[test]
    fn non_participating_leaf_gets_zero() {
        let tape = Tape::new();
        let x = tape.param(Tensor::full([3], 2.0));
        let unused = tape.param(Tensor::full([2], 1.0));
        let loss = x.sum();
        let g = tape.backward(&loss).unwrap();
        assert!(!g.touched(&unused));
        assert_eq!(g.wrt(&unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_foreign_loss() {
        let tape = Tape::new();
        let x = tape.param(Tensor::full([3], 2.0));
        assert!(matches!(tape.backward(&x), Err(Error::Tape(_))));
        let other = Tape::new();
        let y = other.param(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(&y), Err(Error::Tape(_))));
    }

    #[test]
    fn shape_mismatch_names_the_op() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros([2, 2]));
        let b = tape.constant(Tensor::zeros([4]));
        let err = a.add(&b).err().unwrap();
        assert!(err.to_string().contains("add"));
        assert!(err.to_string().contains("[2, 2]"));
    }

    #[test]
    fn non_finite_parameter_rejected() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros([2]));
        assert!(matches!(a.mul_scalar(f64::NAN), Err(Error::NonFinite { .. })));
        assert!(matches!(a.leaky_relu(f64::INFINITY), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn subgradient_conventions() {
        let tape = Tape::new();
        let x = tape.param(Tensor::new([3], vec![0.0, 1.0, -1.0]).unwrap());
        let g = tape.backward(&x.abs().sum()).unwrap();
        assert_eq!(g.wrt(&x).data(), &[0.0, 1.0, -1.0]);

        let tape = Tape::new();
        let x = tape.param(Tensor::new([3], vec![0.0, 1.0, 1.5]).unwrap());
        let g = tape.backward(&x.clamp(0.0, 1.0).unwrap().sum()).unwrap();
        assert_eq!(g.wrt(&x).data(), &[1.0, 1.0, 0.0]);

        let tape = Tape::new();
        let x = tape.param(Tensor::full([1, 2, 2], 5.0));
        let g = tape.backward(&x.max_pool_2x2().unwrap().sum()).unwrap();
        assert_eq!(g.wrt(&x).data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pixel_shuffle_layout() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn([4, 1, 1], |i| i as f64));
        let y = x.pixel_shuffle(2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[0.0, 1.0, 2.0, 3.0]);
    }
}
