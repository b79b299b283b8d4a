//! Finite-difference check of every differentiable primitive and loss.
//!
//! Each case draws random instances away from kinks (no `|x|` near 0, no
//! clamp input near a bound, distinct pooling maxima) and compares backward
//! gradients to central differences. Operations with tensor outputs are
//! reduced to a scalar through a fixed random projection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat_channels, grad_check, grad_check_at, Tensor, Var};
use crate::bpn::{aoi_weight_map, loss_bp};
use crate::error::Result;
use crate::esn::{loss_es, loss_mae, loss_ssim, ms_ssim};
use crate::rawproc::GrayImage;

/// Maximum relative error accepted for ordinary cases.
pub const TOLERANCE: f64 = 1e-4;
/// Five-scale SSIM is checked on a 176x176 image at sampled coordinates.
pub const MS_SSIM_TOLERANCE: f64 = 1e-3;
pub const INSTANCES: usize = 20;
const STEP: f64 = 1e-3;
const MS_SSIM_EXTENT: usize = 176;
const MS_SSIM_COORDS: usize = 8;

/// Worst error over all instances of one case.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

pub const CASES: &[&str] = &[
    "add/lhs",
    "add/rhs",
    "sub/lhs",
    "sub/rhs",
    "mul/lhs",
    "mul/rhs",
    "div/lhs",
    "div/rhs",
    "add_scalar",
    "mul_scalar",
    "pow_scalar",
    "exp",
    "abs",
    "square",
    "clamp",
    "sigmoid",
    "leaky_relu",
    "sum",
    "mean",
    "sum_axis",
    "mean_axis",
    "reshape",
    "expand",
    "softmax_spatial",
    "conv2d/input",
    "conv2d/weight",
    "conv2d/bias",
    "linear/input",
    "linear/weight",
    "linear/bias",
    "max_pool_2x2",
    "avg_downsample_2x",
    "nearest_upsample_2x",
    "pixel_shuffle",
    "gaussian_blur",
    "concat_channels",
    "loss_mae",
    "loss_ssim",
    "loss_es",
    "loss_bp",
    "ms_ssim",
];

fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Magnitudes in `[gap, hi)` with random sign.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize], gap: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.random_range(gap..hi);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// `sum(y * r)` with `r_i = cos(1.7 i + salt)`.
fn project<'t>(y: Var<'t>, salt: f64) -> Result<Var<'t>> {
    let r = Tensor::from_fn(y.shape().to_vec(), |i| (1.7 * i as f64 + salt).cos());
    Ok(y.mul(&y.tape().constant(r))?.sum())
}

fn conv_instance(rng: &mut impl Rng) -> (Tensor, Tensor, Tensor, usize) {
    let stride = if rng.random::<bool>() { 1 } else { 2 };
    (
        uniform(rng, &[2, 6, 6], -1.0, 1.0),
        uniform(rng, &[3, 2, 3, 3], -1.0, 1.0),
        uniform(rng, &[3], -1.0, 1.0),
        stride,
    )
}

fn image_pair(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> (Tensor, Tensor) {
    let est = uniform(rng, &[c, h, w], 0.25, 0.75);
    let d = away_from_zero(rng, &[c, h, w], 0.02, 0.2);
    let gt = Tensor::from_fn([c, h, w], |i| est.data()[i] + d.data()[i]);
    (est, gt)
}

/// One random instance of case `name`; returns its maximum relative error.
pub fn check_instance(name: &str, rng: &mut impl Rng) -> Result<f64> {
    let salt: f64 = rng.random_range(0.0..6.0);
    let shape = [2, 4, 4];
    let x = uniform(rng, &shape, -1.0, 1.0);
    let c = uniform(rng, &shape, -1.0, 1.0);
    let positive = uniform(rng, &shape, 0.5, 2.0);
    macro_rules! unary {
        ($point:expr, |$v:ident| $body:expr) => {
            grad_check(|_t, $v| project($body, salt), &$point, STEP)
        };
    }
    match name {
        "add/lhs" => unary!(x, |v| v.add(&v.tape().constant(c.clone()))?),
        "add/rhs" => unary!(x, |v| v.tape().constant(c.clone()).add(v)?),
        "sub/lhs" => unary!(x, |v| v.sub(&v.tape().constant(c.clone()))?),
        "sub/rhs" => unary!(x, |v| v.tape().constant(c.clone()).sub(v)?),
        "mul/lhs" => unary!(x, |v| v.mul(&v.tape().constant(c.clone()))?),
        "mul/rhs" => unary!(x, |v| v.tape().constant(c.clone()).mul(v)?),
        "div/lhs" => unary!(x, |v| v.div(&v.tape().constant(positive.clone()))?),
        "div/rhs" => unary!(positive, |v| v.tape().constant(c.clone()).div(v)?),
        "add_scalar" => unary!(x, |v| v.add_scalar(salt)?),
        "mul_scalar" => unary!(x, |v| v.mul_scalar(salt - 3.0)?),
        "pow_scalar" => {
            let p = rng.random_range(-2.0..3.0);
            unary!(positive, |v| v.pow_scalar(p)?)
        }
        "exp" => unary!(x, |v| v.exp()),
        "abs" => unary!(away_from_zero(rng, &shape, 0.05, 1.0), |v| v.abs()),
        "square" => unary!(x, |v| v.square()),
        "clamp" => {
            let p = Tensor::from_fn(shape.to_vec(), |_| loop {
                let v: f64 = rng.random_range(-1.0..1.0);
                if (v.abs() - 0.5).abs() > 0.02 {
                    break v;
                }
            });
            unary!(p, |v| v.clamp(-0.5, 0.5)?)
        }
        "sigmoid" => unary!(uniform(rng, &shape, -4.0, 4.0), |v| v.sigmoid()),
        "leaky_relu" => unary!(away_from_zero(rng, &shape, 0.05, 1.0), |v| v.leaky_relu(0.2)?),
        "sum" => unary!(x, |v| v.sum()),
        "mean" => unary!(x, |v| v.mean()),
        "sum_axis" => {
            let axis = rng.random_range(0..3);
            unary!(x, |v| v.sum_axis(axis)?)
        }
        "mean_axis" => {
            let axis = rng.random_range(0..3);
            unary!(x, |v| v.mean_axis(axis)?)
        }
        "reshape" => unary!(x, |v| v.reshape(&[4, 8])?),
        "expand" => unary!(uniform(rng, &[], -1.0, 1.0), |v| v.expand(&[2, 3, 3])?),
        "softmax_spatial" => unary!(uniform(rng, &shape, -2.0, 2.0), |v| v.softmax_spatial()?),
        "conv2d/input" => {
            let (p, w, b, s) = conv_instance(rng);
            unary!(p, |v| {
                let t = v.tape();
                v.conv2d(&t.constant(w.clone()), Some(&t.constant(b.clone())), s, 1)?
            })
        }
        "conv2d/weight" => {
            let (p, w, b, s) = conv_instance(rng);
            unary!(w, |v| {
                let t = v.tape();
                t.constant(p.clone()).conv2d(v, Some(&t.constant(b.clone())), s, 1)?
            })
        }
        "conv2d/bias" => {
            let (p, w, b, s) = conv_instance(rng);
            unary!(b, |v| {
                let t = v.tape();
                t.constant(p.clone()).conv2d(&t.constant(w.clone()), Some(v), s, 1)?
            })
        }
        "linear/input" | "linear/weight" | "linear/bias" => {
            let xin = uniform(rng, &[6], -1.0, 1.0);
            let w = uniform(rng, &[3, 6], -1.0, 1.0);
            let b = uniform(rng, &[3], -1.0, 1.0);
            match name {
                "linear/input" => unary!(xin, |v| {
                    let t = v.tape();
                    v.linear(&t.constant(w.clone()), &t.constant(b.clone()))?
                }),
                "linear/weight" => unary!(w, |v| {
                    let t = v.tape();
                    t.constant(xin.clone()).linear(v, &t.constant(b.clone()))?
                }),
                _ => unary!(b, |v| {
                    let t = v.tape();
                    t.constant(xin.clone()).linear(&t.constant(w.clone()), v)?
                }),
            }
        }
        "max_pool_2x2" => {
            let mut levels: Vec<f64> = (0..32).map(|i| i as f64 * 0.05 - 0.8).collect();
            levels.shuffle(rng);
            let p = Tensor::new(shape.to_vec(), levels)?;
            unary!(p, |v| v.max_pool_2x2()?)
        }
        "avg_downsample_2x" => unary!(uniform(rng, &[2, 5, 4], -1.0, 1.0), |v| v.avg_downsample_2x()?),
        "nearest_upsample_2x" => unary!(x, |v| v.nearest_upsample_2x()?),
        "pixel_shuffle" => unary!(uniform(rng, &[8, 2, 3], -1.0, 1.0), |v| v.pixel_shuffle(2)?),
        "gaussian_blur" => unary!(uniform(rng, &[2, 7, 8], -1.0, 1.0), |v| v.gaussian_blur(1.5, 5)?),
        "concat_channels" => unary!(x, |v| {
            let k = v.tape().constant(c.clone());
            concat_channels(&[&k, v, &k])?
        }),
        "loss_mae" => {
            let (est, gt) = image_pair(rng, 3, 16, 16);
            grad_check(|t, v| loss_mae(v, &t.constant(gt.clone())), &est, STEP)
        }
        "loss_ssim" => {
            let (est, gt) = image_pair(rng, 3, 16, 16);
            grad_check(|t, v| loss_ssim(v, &t.constant(gt.clone())), &est, STEP)
        }
        "loss_es" => {
            let (est, gt) = image_pair(rng, 3, 16, 16);
            let alpha = rng.random_range(0.05..0.95);
            grad_check(|t, v| loss_es(v, &t.constant(gt.clone()), alpha), &est, STEP)
        }
        "loss_bp" => {
            let est = uniform(rng, &[1, 8, 8], 0.3, 0.7);
            let reference = GrayImage::new(uniform(rng, &[1, 8, 8], 0.3, 0.7))?;
            let w = aoi_weight_map(&reference, 0.5, 0.01)?;
            grad_check(|_t, v| loss_bp(v, &w, 0.5, 0.04), &est, STEP)
        }
        "ms_ssim" => {
            let n = MS_SSIM_EXTENT;
            let est = uniform(rng, &[3, n, n], 0.2, 0.8);
            let noise = uniform(rng, &[3, n, n], -0.05, 0.05);
            let gt = Tensor::from_fn([3, n, n], |i| est.data()[i] + noise.data()[i]);
            let coords: Vec<usize> = (0..MS_SSIM_COORDS).map(|_| rng.random_range(0..est.numel())).collect();
            grad_check_at(|t, v| ms_ssim(v, &t.constant(gt.clone())), &est, STEP, &coords)
        }
        other => Err(crate::error::Error::invalid("grad_check", format!("unknown case {other:?}"))),
    }
}

fn tolerance(name: &str) -> f64 {
    if name == "ms_ssim" {
        MS_SSIM_TOLERANCE
    } else {
        TOLERANCE
    }
}

/// Runs `instances` draws of every case in [`CASES`].
pub fn run_grad_suite(seed: u64, instances: usize) -> Result<Vec<CaseReport>> {
    let mut out = Vec::with_capacity(CASES.len());
    for (k, &name) in CASES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            worst = worst.max(check_instance(name, &mut rng)?);
        }
        out.push(CaseReport { name, instances, worst, tolerance: tolerance(name) });
    }
    Ok(out)
}
