//! Training objective of the exposure-shifting network: channel-averaged MAE
//! mixed with multi-scale SSIM.

use crate::autodiff::Var;
use crate::error::{Error, Result};

/// Per-scale exponents of the five-level multi-scale SSIM, finest first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Stability constants on unit dynamic range.
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const WINDOW_TAPS: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
/// Per-scale similarities are floored here before exponentiation.
const SIMILARITY_FLOOR: f64 = 1e-6;

/// Mean over channels of the per-channel mean absolute difference.
pub fn loss_mae<'t>(est: &Var<'t>, gt: &Var<'t>) -> Result<Var<'t>> {
    if est.shape() != gt.shape() || est.shape().len() != 3 {
        return Err(Error::shape("loss_mae", format!("{:?} vs {:?}", est.shape(), gt.shape())));
    }
    est.sub(gt)?.abs().mean_axis(2)?.mean_axis(1)?.mean_axis(0)
}

/// Multi-scale SSIM with a configurable number of scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsSsim {
    levels: usize,
}

impl MsSsim {
    /// The standard five-scale construction.
    pub const STANDARD: MsSsim = MsSsim { levels: 5 };

    pub fn new(levels: usize) -> Result<Self> {
        if !(1..=MS_SSIM_WEIGHTS.len()).contains(&levels) {
            return Err(Error::invalid("ms_ssim", format!("{levels} levels (1..=5)")));
        }
        Ok(MsSsim { levels })
    }

    /// Most scales (up to five) an `h x w` image supports.
    pub fn fitting(h: usize, w: usize) -> Result<Self> {
        let mut levels = 0;
        while levels < MS_SSIM_WEIGHTS.len() && Self::min_extent(levels + 1) <= h.min(w) {
            levels += 1;
        }
        if levels == 0 {
            return Err(Error::shape(
                "ms_ssim",
                format!("{h}x{w} is smaller than the {WINDOW_TAPS}-pixel window"),
            ));
        }
        Self::new(levels)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Smallest side length that keeps the window inside the coarsest scale.
    pub fn min_extent(levels: usize) -> usize {
        (1 << (levels - 1)) * WINDOW_TAPS
    }

    /// Scale exponents; a truncated set is renormalized to sum to one.
    pub fn weights(&self) -> Vec<f64> {
        let w = &MS_SSIM_WEIGHTS[..self.levels];
        if self.levels == MS_SSIM_WEIGHTS.len() {
            w.to_vec()
        } else {
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        }
    }

    pub fn eval<'t>(&self, est: &Var<'t>, gt: &Var<'t>) -> Result<Var<'t>> {
        let &[_, h, w] = est.shape() else {
            return Err(Error::shape("ms_ssim", format!("expected (C, H, W), got {:?}", est.shape())));
        };
        if est.shape() != gt.shape() {
            return Err(Error::shape("ms_ssim", format!("{:?} vs {:?}", est.shape(), gt.shape())));
        }
        let need = Self::min_extent(self.levels);
        if h.min(w) < need {
            return Err(Error::shape(
                "ms_ssim",
                format!("{h}x{w} too small for {} levels; minimum extent is {need}", self.levels),
            ));
        }
        let weights = self.weights();
        let (mut x, mut y) = (est.clone(), gt.clone());
        let mut product: Option<Var<'t>> = None;
        for (level, &weight) in weights.iter().enumerate() {
            let last = level + 1 == self.levels;
            let (luminance, contrast_structure) = ssim_maps(&x, &y)?;
            let map = if last {
                luminance.mul(&contrast_structure)?
            } else {
                contrast_structure
            };
            let per_channel = map
                .mean_axis(2)?
                .mean_axis(1)?
                .clamp(SIMILARITY_FLOOR, f64::INFINITY)?
                .pow_scalar(weight)?;
            product = Some(match product {
                Some(p) => p.mul(&per_channel)?,
                None => per_channel,
            });
            if !last {
                x = x.avg_downsample_2x()?;
                y = y.avg_downsample_2x()?;
            }
        }
        Ok(product.expect("at least one level").mean())
    }
}

/// Luminance and contrast-structure maps under the Gaussian window.
fn ssim_maps<'t>(x: &Var<'t>, y: &Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let blur = |v: &Var<'t>| v.gaussian_blur(WINDOW_SIGMA, WINDOW_TAPS);
    let mu_x = blur(x)?;
    let mu_y = blur(y)?;
    let mu_xx = mu_x.square();
    let mu_yy = mu_y.square();
    let mu_xy = mu_x.mul(&mu_y)?;
    let var_x = blur(&x.square())?.sub(&mu_xx)?;
    let var_y = blur(&y.square())?.sub(&mu_yy)?;
    let cov = blur(&x.mul(y)?)?.sub(&mu_xy)?;

    let luminance = mu_xy
        .mul_scalar(2.0)?
        .add_scalar(SSIM_C1)?
        .div(&mu_xx.add(&mu_yy)?.add_scalar(SSIM_C1)?)?;
    let contrast_structure = cov
        .mul_scalar(2.0)?
        .add_scalar(SSIM_C2)?
        .div(&var_x.add(&var_y)?.add_scalar(SSIM_C2)?)?;
    Ok((luminance, contrast_structure))
}

/// Five-scale SSIM, channel-averaged.
pub fn ms_ssim<'t>(est: &Var<'t>, gt: &Var<'t>) -> Result<Var<'t>> {
    MsSsim::STANDARD.eval(est, gt)
}

/// `1 - ms_ssim`, using as many scales (up to five) as the extent supports.
pub fn loss_ssim<'t>(est: &Var<'t>, gt: &Var<'t>) -> Result<Var<'t>> {
    let &[_, h, w] = est.shape() else {
        return Err(Error::shape("loss_ssim", format!("expected (C, H, W), got {:?}", est.shape())));
    };
    MsSsim::fitting(h, w)?
        .eval(est, gt)?
        .mul_scalar(-1.0)?
        .add_scalar(1.0)
}

/// `(1 - alpha) * MAE + alpha * (1 - MS-SSIM)` for `0 <= alpha < 1`.
pub fn loss_es<'t>(est: &Var<'t>, gt: &Var<'t>, alpha: f64) -> Result<Var<'t>> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid("loss_es", format!("alpha {alpha} outside [0, 1)")));
    }
    let mae = loss_mae(est, gt)?;
    if alpha == 0.0 {
        return Ok(mae);
    }
    mae.mul_scalar(1.0 - alpha)?
        .add(&loss_ssim(est, gt)?.mul_scalar(alpha)?)
}
