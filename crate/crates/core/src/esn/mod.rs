//! Exposure-shifting network: a U-Net mapping a packed raw frame plus its
//! conditioning planes to an RGB rendering at the requested exposure time.

mod loss;

pub use loss::{loss_es, loss_mae, loss_ssim, ms_ssim, MsSsim, MS_SSIM_WEIGHTS, SSIM_C1, SSIM_C2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat_channels, ParamCursor, ParamSet, Var};
use crate::conditioning::{IEV_LEN, PACKED_CHANNELS};
use crate::error::{Error, Result};
use crate::nn;

/// Channels entering the first convolution: packed planes plus conditioning planes.
pub const INPUT_CHANNELS: usize = PACKED_CHANNELS + IEV_LEN;
/// Output head width before the factor-2 pixel shuffle.
pub const HEAD_CHANNELS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct EsnConfig {
    /// Number of 2x downsampling levels.
    pub depth: usize,
    /// Channels at full packed resolution; doubled at each level.
    pub base_channels: usize,
    pub leaky_slope: f64,
}

impl Default for EsnConfig {
    fn default() -> Self {
        EsnConfig {
            depth: 3,
            base_channels: 16,
            leaky_slope: 0.2,
        }
    }
}

impl EsnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 || self.base_channels < 4 || !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Config(format!(
                "ESN needs depth >= 2 and base_channels >= 4, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Required divisor of the packed input extent.
    pub fn extent_multiple(&self) -> usize {
        1 << self.depth
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Parameter names and shapes, in forward-pass order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut cin = INPUT_CHANNELS;
        for level in 0..self.depth {
            let c = self.channels(level);
            nn::conv_layout(&mut out, &format!("enc{level}.conv0"), cin, c, 3);
            nn::conv_layout(&mut out, &format!("enc{level}.conv1"), c, c, 3);
            cin = c;
        }
        let c = self.channels(self.depth);
        nn::conv_layout(&mut out, "mid.conv0", cin, c, 3);
        nn::conv_layout(&mut out, "mid.conv1", c, c, 3);
        for level in (0..self.depth).rev() {
            let c = self.channels(level);
            nn::conv_layout(&mut out, &format!("dec{level}.up"), self.channels(level + 1), c, 3);
            nn::conv_layout(&mut out, &format!("dec{level}.conv0"), 2 * c, c, 3);
            nn::conv_layout(&mut out, &format!("dec{level}.conv1"), c, c, 3);
        }
        nn::conv_layout(&mut out, "head", self.channels(0), HEAD_CHANNELS, 1);
        out
    }
}

/// Fan-in scaled normal kernels, zero biases; deterministic per seed.
pub fn esn_init(config: &EsnConfig, seed: u64) -> Result<ParamSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(nn::init_layout(&config.param_layout(), &mut rng))
}

/// Renders `(3, 2h, 2w)` RGB in `(0, 1)` from a normalized `(4, h, w)` packed
/// frame and `(7, h, w)` conditioning planes.
pub fn esn_forward<'t>(
    config: &EsnConfig,
    packed: &Var<'t>,
    iev_planes: &Var<'t>,
    params: &ParamSet,
    vars: &[Var<'t>],
) -> Result<Var<'t>> {
    config.validate()?;
    let (&[pc, h, w], &[ic, ih, iw]) = (packed.shape(), iev_planes.shape()) else {
        return Err(Error::shape(
            "esn_forward",
            format!("packed {:?}, planes {:?}", packed.shape(), iev_planes.shape()),
        ));
    };
    if pc != PACKED_CHANNELS || ic != IEV_LEN || (ih, iw) != (h, w) {
        return Err(Error::shape(
            "esn_forward",
            format!("packed {:?} with conditioning planes {:?}", packed.shape(), iev_planes.shape()),
        ));
    }
    let m = config.extent_multiple();
    if h % m != 0 || w % m != 0 || h == 0 || w == 0 {
        let pad = |v: usize| v.div_ceil(m) * m - v;
        return Err(Error::shape(
            "esn_forward",
            format!(
                "packed extent {h}x{w} is not a multiple of {m}; pad by {} rows and {} columns",
                pad(h),
                pad(w)
            ),
        ));
    }
    let slope = config.leaky_slope;
    let mut p = ParamCursor::new(params, vars)?;
    let block = |x: &Var<'t>, p: &mut ParamCursor<'_, 't>, name: &str| -> Result<Var<'t>> {
        nn::conv(x, p, name, 1, 1)?.leaky_relu(slope)
    };

    let mut x = concat_channels(&[packed, iev_planes])?;
    let mut skips = Vec::with_capacity(config.depth);
    for level in 0..config.depth {
        x = block(&x, &mut p, &format!("enc{level}.conv0"))?;
        x = block(&x, &mut p, &format!("enc{level}.conv1"))?;
        skips.push(x.clone());
        x = x.max_pool_2x2()?;
    }
    x = block(&x, &mut p, "mid.conv0")?;
    x = block(&x, &mut p, "mid.conv1")?;
    for level in (0..config.depth).rev() {
        let up = block(&x.nearest_upsample_2x()?, &mut p, &format!("dec{level}.up"))?;
        x = concat_channels(&[&up, &skips[level]])?;
        x = block(&x, &mut p, &format!("dec{level}.conv0"))?;
        x = block(&x, &mut p, &format!("dec{level}.conv1"))?;
    }
    let head = nn::conv(&x, &mut p, "head", 1, 0)?;
    p.finish()?;
    Ok(head.pixel_shuffle(2)?.sigmoid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};
    use rand::Rng;

    fn inputs<'t>(tape: &'t Tape, h: usize, w: usize, seed: u64) -> (Var<'t>, Var<'t>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let packed = tape.constant(Tensor::from_fn([4, h, w], |_| rng.random::<f64>() * 2.0 - 1.0));
        let planes = tape.constant(Tensor::from_fn([7, h, w], |i| ((i / (h * w)) as f64 * 0.3) - 1.0));
        (packed, planes)
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = EsnConfig::default();
        let a = esn_init(&cfg, 7).unwrap();
        let b = esn_init(&cfg, 7).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), esn_init(&cfg, 8).unwrap().digest());
        for (name, t) in a.iter() {
            if name.ends_with(".bias") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn kernel_variance_matches_fan_in() {
        let cfg = EsnConfig::default();
        let params = esn_init(&cfg, 1).unwrap();
        for (name, t) in params.iter().filter(|(n, t)| n.ends_with(".weight") && t.numel() >= 256) {
            let fan_in: usize = t.shape()[1..].iter().product();
            let mean = t.mean();
            let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t.numel() - 1) as f64;
            let target = 2.0 / fan_in as f64;
            assert!((var / target - 1.0).abs() < 0.2, "{name}: {var} vs {target}");
        }
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(esn_init(&EsnConfig { depth: 1, ..Default::default() }, 0).is_err());
        assert!(esn_init(&EsnConfig { base_channels: 2, ..Default::default() }, 0).is_err());
    }

    #[test]
    fn output_shape_and_range() {
        let cfg = EsnConfig { depth: 2, base_channels: 4, leaky_slope: 0.2 };
        let params = esn_init(&cfg, 3).unwrap();
        for &(h, w) in &[(8, 8), (16, 8)] {
            let tape = Tape::new();
            let vars = params.register(&tape, false);
            let (packed, planes) = inputs(&tape, h, w, 1);
            let out = esn_forward(&cfg, &packed, &planes, &params, &vars).unwrap();
            assert_eq!(out.shape(), &[3, 2 * h, 2 * w]);
            assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn indivisible_extent_gets_padding_hint() {
        let cfg = EsnConfig { depth: 2, base_channels: 4, leaky_slope: 0.2 };
        let params = esn_init(&cfg, 3).unwrap();
        let tape = Tape::new();
        let vars = params.register(&tape, false);
        let (packed, planes) = inputs(&tape, 10, 8, 1);
        let err = esn_forward(&cfg, &packed, &planes, &params, &vars).unwrap_err();
        assert!(err.to_string().contains("pad by 2 rows"), "{err}");
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let cfg = EsnConfig { depth: 2, base_channels: 4, leaky_slope: 0.2 };
        let params = esn_init(&cfg, 5).unwrap();
        let tape = Tape::new();
        let vars = params.register(&tape, true);
        let (packed, planes) = inputs(&tape, 8, 8, 2);
        let out = esn_forward(&cfg, &packed, &planes, &params, &vars).unwrap();
        let grads = tape.backward(&out.mean()).unwrap();
        for (v, name) in vars.iter().zip(params.names()) {
            let g = grads.wrt(v);
            assert!(g.data().iter().any(|&x| x != 0.0), "{name} has zero gradient");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = EsnConfig { depth: 2, base_channels: 4, leaky_slope: 0.2 };
        let params = esn_init(&cfg, 5).unwrap();
        let run = || {
            let tape = Tape::new();
            let vars = params.register(&tape, false);
            let (packed, planes) = inputs(&tape, 8, 8, 2);
            esn_forward(&cfg, &packed, &planes, &params, &vars).unwrap().value().clone()
        };
        assert_eq!(run(), run());
    }
}
