//! Metadata conditioning: the enhancing vector `(w_r, w_g, w_b, w_g2, iso, t0, t1)`,
//! its partial form without `t1`, frozen normalization statistics, and the
//! constant input planes the networks consume.
//!
//! Exposure times enter the statistics and the planes as natural logarithms.

use std::borrow::Borrow;

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::rawproc::{ExifMeta, Image, PackedRaw};

/// Layout revision of the conditioning vector, stored in checkpoints.
pub const LAYOUT_VERSION: u16 = 1;
pub const IEV_LEN: usize = 7;
pub const PIEV_LEN: usize = 6;
pub const PACKED_CHANNELS: usize = 4;
/// Index of `t0` in both vectors and of `t1` in the full one.
pub const T0_INDEX: usize = 5;
pub const T1_INDEX: usize = 6;
/// Floor applied to degenerate standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

/// Full enhancing vector, times in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Iev(pub [f64; IEV_LEN]);

/// Partial enhancing vector (no target time).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PIev(pub [f64; PIEV_LEN]);

pub fn build_piev(meta: &ExifMeta) -> Result<PIev> {
    meta.validate()?;
    let g = meta.wb_gains.map(f64::from);
    Ok(PIev([
        g[0],
        g[1],
        g[2],
        g[3],
        f64::from(meta.iso),
        f64::from(meta.exposure_time),
    ]))
}

pub fn build_iev(meta: &ExifMeta, t1: f64) -> Result<Iev> {
    if !(t1 > 0.0 && t1.is_finite()) {
        return Err(Error::invalid("build_iev", format!("target time t1 = {t1} must be positive")));
    }
    let p = build_piev(meta)?;
    Ok(p.with_t1(t1))
}

impl PIev {
    pub fn with_t1(&self, t1: f64) -> Iev {
        let mut v = [0.0; IEV_LEN];
        v[..PIEV_LEN].copy_from_slice(&self.0);
        v[T1_INDEX] = t1;
        Iev(v)
    }

    pub fn t0(&self) -> f64 {
        self.0[T0_INDEX]
    }
}

impl Iev {
    pub fn partial(&self) -> PIev {
        let mut v = [0.0; PIEV_LEN];
        v.copy_from_slice(&self.0[..PIEV_LEN]);
        PIev(v)
    }

    pub fn t0(&self) -> f64 {
        self.0[T0_INDEX]
    }

    pub fn t1(&self) -> f64 {
        self.0[T1_INDEX]
    }
}

/// Either conditioning vector, viewed as a slice of raw entries.
pub trait Conditioning {
    fn entries(&self) -> &[f64];
}

impl Conditioning for Iev {
    fn entries(&self) -> &[f64] {
        &self.0
    }
}

impl Conditioning for PIev {
    fn entries(&self) -> &[f64] {
        &self.0
    }
}

fn is_time(i: usize) -> bool {
    i == T0_INDEX || i == T1_INDEX
}

/// Value of entry `i` in the domain the statistics are fitted in.
fn feature(i: usize, v: f64) -> f64 {
    if is_time(i) {
        v.ln()
    } else {
        v
    }
}

/// Frozen per-channel and per-entry normalization constants.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub channel_mean: [f64; PACKED_CHANNELS],
    pub channel_std: [f64; PACKED_CHANNELS],
    pub iev_mean: [f64; IEV_LEN],
    pub iev_std: [f64; IEV_LEN],
}

impl NormStats {
    /// Zero means and unit deviations.
    pub fn identity() -> Self {
        NormStats {
            channel_mean: [0.0; PACKED_CHANNELS],
            channel_std: [1.0; PACKED_CHANNELS],
            iev_mean: [0.0; IEV_LEN],
            iev_std: [1.0; IEV_LEN],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .channel_mean
            .iter()
            .chain(&self.channel_std)
            .chain(&self.iev_mean)
            .chain(&self.iev_std);
        let positive = self.channel_std.iter().chain(&self.iev_std).all(|&s| s > 0.0);
        if all.clone().all(|v| v.is_finite()) && positive {
            Ok(())
        } else {
            Err(Error::Validation(format!("normalization statistics {self:?}")))
        }
    }

    /// Normalized entries of a conditioning vector.
    pub fn normalize(&self, vector: &impl Conditioning) -> Result<Vec<f64>> {
        let e = vector.entries();
        if e.len() != IEV_LEN && e.len() != PIEV_LEN {
            return Err(Error::shape(
                "normalize",
                format!("{} entries, expected {IEV_LEN} or {PIEV_LEN}", e.len()),
            ));
        }
        Ok(e.iter()
            .enumerate()
            .map(|(i, &v)| (feature(i, v) - self.iev_mean[i]) / self.iev_std[i])
            .collect())
    }

    /// Inverse of [`normalize`](Self::normalize), returning raw entries.
    pub fn denormalize(&self, normalized: &[f64]) -> Result<Vec<f64>> {
        if normalized.len() > IEV_LEN {
            return Err(Error::shape("denormalize", format!("{} entries", normalized.len())));
        }
        Ok(normalized
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let f = z * self.iev_std[i] + self.iev_mean[i];
                if is_time(i) {
                    f.exp()
                } else {
                    f
                }
            })
            .collect())
    }

    /// Per-channel standardized copy of a packed frame.
    pub fn normalize_packed(&self, packed: &PackedRaw) -> Tensor {
        let t = packed.tensor();
        let plane = t.numel() / PACKED_CHANNELS;
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i / plane;
                (v - self.channel_mean[c]) / self.channel_std[c]
            })
            .collect();
        Tensor::new(t.shape().to_vec(), data).expect("same shape")
    }

    /// Normalized `ln t1` as a differentiable `(1, h, w)` plane.
    pub fn t1_plane<'t>(&self, log_t1: &Var<'t>, h: usize, w: usize) -> Result<Var<'t>> {
        log_t1
            .add_scalar(-self.iev_mean[T1_INDEX])?
            .mul_scalar(1.0 / self.iev_std[T1_INDEX])?
            .expand(&[1, h, w])
    }
}

/// Streaming mean/variance (Welford).
#[derive(Clone, Copy, Default)]
struct Running {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        (self.m2 / self.n).sqrt().max(STD_FLOOR)
    }
}

/// Fits statistics over training pairs: each packed input with its full vector.
///
/// Channel statistics pool every pixel of every sample; vector statistics are
/// taken across samples. Deviations are population estimates, floored at
/// [`STD_FLOOR`].
pub fn fit_norm_stats<P, V>(samples: impl IntoIterator<Item = (P, V)>) -> Result<NormStats>
where
    P: Borrow<PackedRaw>,
    V: Borrow<Iev>,
{
    let mut channels = [Running::default(); PACKED_CHANNELS];
    let mut entries = [Running::default(); IEV_LEN];
    let mut count = 0usize;
    for (packed, iev) in samples {
        let (packed, iev) = (packed.borrow(), iev.borrow());
        let t = packed.tensor();
        for (c, acc) in channels.iter_mut().enumerate() {
            t.channel(c).iter().for_each(|&v| acc.push(v));
        }
        for (i, acc) in entries.iter_mut().enumerate() {
            acc.push(feature(i, iev.0[i]));
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Dataset("cannot fit normalization statistics on an empty set".into()));
    }
    if count < 2 {
        return Err(Error::Dataset(format!(
            "normalization statistics need at least 2 samples, got {count}"
        )));
    }
    let stats = NormStats {
        channel_mean: channels.map(|r| r.mean),
        channel_std: channels.map(|r| r.std()),
        iev_mean: entries.map(|r| r.mean),
        iev_std: entries.map(|r| r.std()),
    };
    stats.validate()?;
    Ok(stats)
}

/// Each entry becomes a constant `h x w` plane of its normalized value.
pub fn normalize_and_broadcast(vector: &impl Conditioning, stats: &NormStats, h: usize, w: usize) -> Result<Tensor> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("normalize_and_broadcast", format!("extent {h}x{w}")));
    }
    let normalized = stats.normalize(vector)?;
    let k = normalized.len();
    let mut data = Vec::with_capacity(k * h * w);
    for v in normalized {
        data.extend(std::iter::repeat_n(v, h * w));
    }
    Tensor::new([k, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta() -> ExifMeta {
        ExifMeta {
            iso: 800.0,
            exposure_time: 0.01,
            wb_gains: [2.0, 1.0, 1.5, 1.0],
            aperture: 0.0,
        }
    }

    #[test]
    fn iev_order_and_prefix() {
        let iev = build_iev(&meta(), 0.1).unwrap();
        let t0 = f64::from(0.01f32);
        assert_eq!(iev.0, [2.0, 1.0, 1.5, 1.0, 800.0, t0, 0.1]);
        assert_eq!(build_piev(&meta()).unwrap(), iev.partial());
        assert!(build_iev(&meta(), 0.0).is_err());
        assert!(build_iev(&meta(), -1.0).is_err());
    }

    fn packed(rng: &mut ChaCha8Rng, level: f64) -> PackedRaw {
        PackedRaw::new(Tensor::from_fn([4, 3, 3], |_| (level + 0.05 * rng.random::<f64>()).min(1.0))).unwrap()
    }

    #[test]
    fn two_point_channel_mean() {
        let a = PackedRaw::new(Tensor::full([4, 2, 2], 0.2)).unwrap();
        let b = PackedRaw::new(Tensor::full([4, 2, 2], 0.4)).unwrap();
        let iev = build_iev(&meta(), 0.1).unwrap();
        let stats = fit_norm_stats([(&a, &iev), (&b, &iev)]).unwrap();
        for c in 0..4 {
            assert!((stats.channel_mean[c] - 0.3).abs() < 1e-15);
        }
        // constant ISO: floored deviation, normalizes to zero
        assert_eq!(stats.iev_std[4], STD_FLOOR);
        let z = stats.normalize(&iev).unwrap();
        assert!(z[4].abs() < 1e-6);
    }

    #[test]
    fn empty_or_single_sample_rejected() {
        let none: Vec<(&PackedRaw, &Iev)> = Vec::new();
        assert!(fit_norm_stats(none).is_err());
        let a = PackedRaw::new(Tensor::full([4, 2, 2], 0.2)).unwrap();
        let iev = build_iev(&meta(), 0.1).unwrap();
        assert!(fit_norm_stats([(&a, &iev)]).is_err());
    }

    #[test]
    fn stats_match_two_pass_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<(PackedRaw, Iev)> = (0..12)
            .map(|i| {
                let m = ExifMeta {
                    iso: [400.0, 800.0, 1600.0][i % 3],
                    exposure_time: rng.random_range(0.001..0.5),
                    wb_gains: [rng.random_range(1.5..2.5), 1.0, rng.random_range(1.2..2.0), 1.0],
                    aperture: 0.0,
                };
                let level = rng.random::<f64>() * 0.8;
                (packed(&mut rng, level), build_iev(&m, rng.random_range(0.01..1.0)).unwrap())
            })
            .collect();
        let stats = fit_norm_stats(samples.iter().map(|(p, v)| (p, v))).unwrap();

        for c in 0..4 {
            let vals: Vec<f64> = samples.iter().flat_map(|(p, _)| p.tensor().channel(c).to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((stats.channel_mean[c] - mean).abs() < 1e-12);
            assert!((stats.channel_std[c] - var.sqrt()).abs() < 1e-12);
        }
        for i in 0..IEV_LEN {
            let vals: Vec<f64> = samples
                .iter()
                .map(|(_, v)| if i >= 5 { v.0[i].ln() } else { v.0[i] })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((stats.iev_mean[i] - mean).abs() < 1e-9 * mean.abs().max(1.0));
            assert!((stats.iev_std[i] - var.sqrt().max(STD_FLOOR)).abs() < 1e-9 * var.sqrt().max(1.0));
        }
    }

    #[test]
    fn broadcast_planes() {
        let mut stats = NormStats::identity();
        let iev = build_iev(&meta(), 0.1).unwrap();
        for i in 0..IEV_LEN {
            stats.iev_mean[i] = feature(i, iev.0[i]);
        }
        let planes = normalize_and_broadcast(&iev, &stats, 3, 5).unwrap();
        assert_eq!(planes.shape(), &[7, 3, 5]);
        assert!(planes.data().iter().all(|&v| v == 0.0));

        let stats = NormStats::identity();
        let single = normalize_and_broadcast(&iev.partial(), &stats, 1, 1).unwrap();
        assert_eq!(single.shape(), &[6, 1, 1]);
        assert_eq!(single.data()[4], 800.0);

        let planes = normalize_and_broadcast(&iev, &stats, 4, 4).unwrap();
        for k in 0..7 {
            let p = planes.channel(k);
            let m = p.iter().sum::<f64>() / 16.0;
            assert_eq!(p.iter().map(|v| (v - m).powi(2)).sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn normalization_inverts() {
        let stats = NormStats {
            channel_mean: [0.1; 4],
            channel_std: [0.2; 4],
            iev_mean: [1.8, 1.0, 1.5, 1.0, 900.0, -3.0, -2.0],
            iev_std: [0.3, 1e-6, 0.2, 1e-6, 500.0, 1.1, 0.9],
        };
        let iev = build_iev(&meta(), 0.37).unwrap();
        let back = stats.denormalize(&stats.normalize(&iev).unwrap()).unwrap();
        for (a, b) in back.iter().zip(iev.0) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn normalization_inverts_for_any_stats(
            values in proptest::array::uniform7(0.01f64..100.0),
            means in proptest::array::uniform7(-5.0f64..5.0),
            stds in proptest::array::uniform7(0.01f64..10.0),
        ) {
            let stats = NormStats { iev_mean: means, iev_std: stds, ..NormStats::identity() };
            let iev = Iev(values);
            let back = stats.denormalize(&stats.normalize(&iev).unwrap()).unwrap();
            for (a, b) in back.iter().zip(values) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{} vs {}", a, b);
            }
        }

        #[test]
        fn broadcast_planes_are_constant_for_any_extent(h in 1usize..6, w in 1usize..6, t1 in 1e-4f64..10.0) {
            let iev = build_iev(&meta(), t1).unwrap();
            let planes = normalize_and_broadcast(&iev, &NormStats::identity(), h, w).unwrap();
            prop_assert_eq!(planes.shape(), &[IEV_LEN, h, w]);
            for c in 0..IEV_LEN {
                let plane = planes.channel(c);
                prop_assert!(plane.iter().all(|&v| v == plane[0]));
            }
        }
    }
}
