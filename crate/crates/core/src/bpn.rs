//! Brightness-prediction network and its training signal.
//!
//! The network regresses a guideline exposure time from a resized packed frame
//! and its partial conditioning vector. It is never shown a target time; it
//! learns through the frozen exposure-shifting network by rewarding renderings
//! whose mid-tone pixels sit near 0.5.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat_channels, ParamCursor, ParamSet, Tensor, Var};
use crate::conditioning::{PACKED_CHANNELS, PIEV_LEN};
use crate::error::{Error, Result};
use crate::nn;
use crate::rawproc::{GrayImage, Image, PackedRaw};

/// Bounds on the pre-activation, i.e. on `ln t1` in seconds.
pub const LOG_T1_MIN: f64 = -7.0;
pub const LOG_T1_MAX: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BpnConfig {
    /// Output channels of each stride-2 convolution stage.
    pub conv_channels: Vec<usize>,
    /// Hidden widths of the fully connected tail; a final width-1 layer follows.
    pub fc_widths: Vec<usize>,
    /// Side length the packed frame is resized to.
    pub input_extent: usize,
    pub leaky_slope: f64,
    pub mu_w: f64,
    pub sigma_w_sq: f64,
    pub sigma_v_sq: f64,
}

impl Default for BpnConfig {
    fn default() -> Self {
        BpnConfig {
            conv_channels: vec![16, 32, 64, 64],
            fc_widths: vec![32],
            input_extent: 64,
            leaky_slope: 0.2,
            mu_w: 0.5,
            sigma_w_sq: 0.01,
            sigma_v_sq: 0.04,
        }
    }
}

impl BpnConfig {
    pub fn validate(&self) -> Result<()> {
        let stages = self.conv_channels.len();
        let ok = stages >= 1
            && self.conv_channels.iter().all(|&c| c > 0)
            && self.fc_widths.iter().all(|&c| c > 0)
            && self.input_extent > 0
            && self.input_extent % (1 << stages) == 0
            && self.leaky_slope.is_finite()
            && self.leaky_slope >= 0.0
            && self.mu_w.is_finite()
            && self.sigma_w_sq > 0.0
            && self.sigma_v_sq > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "BPN input extent must be divisible by 2^stages and variances positive, got {self:?}"
            )))
        }
    }

    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut cin = PACKED_CHANNELS + PIEV_LEN;
        for (i, &c) in self.conv_channels.iter().enumerate() {
            nn::conv_layout(&mut out, &format!("stage{i}"), cin, c, 3);
            cin = c;
        }
        for (i, &width) in self.fc_widths.iter().enumerate() {
            nn::linear_layout(&mut out, &format!("fc{i}"), cin, width);
            cin = width;
        }
        nn::linear_layout(&mut out, "out", cin, 1);
        out
    }
}

/// Kaiming weights and zero biases, except the output layer: its weight starts
/// at zero and its bias at `initial_log_t1`, so the untrained network proposes
/// one typical exposure for every frame.
pub fn bpn_init(config: &BpnConfig, seed: u64, initial_log_t1: f64) -> Result<ParamSet> {
    config.validate()?;
    if !(LOG_T1_MIN..=LOG_T1_MAX).contains(&initial_log_t1) {
        return Err(Error::invalid(
            "bpn_init",
            format!("initial ln t1 {initial_log_t1} outside [{LOG_T1_MIN}, {LOG_T1_MAX}]"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = nn::init_layout(&config.param_layout(), &mut rng);
    params.get_mut("out.weight").expect("output weight").data_mut().fill(0.0);
    params.get_mut("out.bias").expect("output bias").data_mut()[0] = initial_log_t1;
    Ok(params)
}

/// Predicted `ln t1` as a scalar variable, clamped to
/// [`LOG_T1_MIN`]`..=`[`LOG_T1_MAX`]; `t1 = exp` of it is always positive.
///
/// `packed` is the normalized `(4, E, E)` frame at the configured extent and
/// `piev_planes` its `(6, E, E)` conditioning planes.
pub fn bpn_forward<'t>(
    config: &BpnConfig,
    packed: &Var<'t>,
    piev_planes: &Var<'t>,
    params: &ParamSet,
    vars: &[Var<'t>],
) -> Result<Var<'t>> {
    config.validate()?;
    let e = config.input_extent;
    if packed.shape() != [PACKED_CHANNELS, e, e] || piev_planes.shape() != [PIEV_LEN, e, e] {
        return Err(Error::shape(
            "bpn_forward",
            format!(
                "expected packed [4, {e}, {e}] and planes [6, {e}, {e}], got {:?} and {:?}; resize the frame first",
                packed.shape(),
                piev_planes.shape()
            ),
        ));
    }
    let slope = config.leaky_slope;
    let mut p = ParamCursor::new(params, vars)?;
    let mut x = concat_channels(&[packed, piev_planes])?;
    for i in 0..config.conv_channels.len() {
        x = nn::conv(&x, &mut p, &format!("stage{i}"), 2, 1)?.leaky_relu(slope)?;
    }
    x = x.mean_axis(2)?.mean_axis(1)?;
    for i in 0..config.fc_widths.len() {
        x = nn::linear(&x, &mut p, &format!("fc{i}"))?.leaky_relu(slope)?;
    }
    let z = nn::linear(&x, &mut p, "out")?;
    p.finish()?;
    z.reshape(&[])?.clamp(LOG_T1_MIN, LOG_T1_MAX)
}

/// Nearest-neighbour resize of a packed frame to `extent x extent`.
pub fn resize_nearest(packed: &PackedRaw, extent: usize) -> Result<PackedRaw> {
    if extent == 0 {
        return Err(Error::invalid("resize_nearest", "extent 0"));
    }
    let (c, h, w) = packed.tensor().dims3()?;
    let src = packed.tensor().data();
    let mut data = Vec::with_capacity(c * extent * extent);
    for ch in 0..c {
        for i in 0..extent {
            let si = i * h / extent;
            for j in 0..extent {
                data.push(src[(ch * h + si) * w + j * w / extent]);
            }
        }
    }
    PackedRaw::new(Tensor::new([c, extent, extent], data)?)
}

/// Non-negative single-channel weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct AoiWeightMap(Tensor);

impl AoiWeightMap {
    pub fn new(tensor: Tensor) -> Result<Self> {
        let (c, h, w) = tensor.dims3()?;
        let sum: f64 = tensor.data().iter().sum();
        if c != 1 || h * w == 0 || tensor.data().iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "weight map {:?} must be (1, H, W), non-negative and sum to 1 (sum {sum})",
                tensor.shape()
            )));
        }
        Ok(AoiWeightMap(tensor))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Softmax over all pixels of `-(Y - mu_w)^2 / (2 sigma_w^2)`: weight
/// concentrates on mid-tones, the pixels most sensitive to exposure changes.
pub fn aoi_weight_map(gray: &GrayImage, mu_w: f64, sigma_w_sq: f64) -> Result<AoiWeightMap> {
    if !(sigma_w_sq > 0.0) || !mu_w.is_finite() {
        return Err(Error::invalid("aoi_weight_map", format!("mu {mu_w}, variance {sigma_w_sq}")));
    }
    let t = gray.tensor();
    let logits: Vec<f64> = t
        .data()
        .iter()
        .map(|&y| -(y - mu_w).powi(2) / (2.0 * sigma_w_sq))
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    AoiWeightMap::new(Tensor::new(t.shape().to_vec(), exps.iter().map(|e| e / total).collect())?)
}

/// `-(1/mn) * sum W * exp(-(Y_hat - mu_w)^2 / (2 sigma_v^2))` over an
/// estimated `(1, m, n)` gray image.
///
/// Bounded in `[-1/(mn), 0)`; note the magnitude depends on resolution.
pub fn loss_bp<'t>(est_gray: &Var<'t>, weights: &AoiWeightMap, mu_w: f64, sigma_v_sq: f64) -> Result<Var<'t>> {
    if est_gray.shape() != weights.tensor().shape() {
        return Err(Error::shape(
            "loss_bp",
            format!("estimate {:?} vs weights {:?}", est_gray.shape(), weights.tensor().shape()),
        ));
    }
    if !(sigma_v_sq > 0.0) || !mu_w.is_finite() {
        return Err(Error::invalid("loss_bp", format!("mu {mu_w}, variance {sigma_v_sq}")));
    }
    let mn = est_gray.numel() as f64;
    let w = est_gray.tape().constant(weights.tensor().clone());
    est_gray
        .add_scalar(-mu_w)?
        .square()
        .mul_scalar(-1.0 / (2.0 * sigma_v_sq))?
        .exp()
        .mul(&w)?
        .sum()
        .mul_scalar(-1.0 / mn)
}

/// Channel-mean gray image of a `(3, H, W)` variable, as `(1, H, W)`.
pub fn gray_var<'t>(rgb: &Var<'t>) -> Result<Var<'t>> {
    let &[3, h, w] = rgb.shape() else {
        return Err(Error::shape("gray_var", format!("expected (3, H, W), got {:?}", rgb.shape())));
    };
    rgb.mean_axis(0)?.reshape(&[1, h, w])
}
