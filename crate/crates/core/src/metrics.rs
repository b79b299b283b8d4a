//! No-reference evaluation: group brightness consistency, Laplacian noise
//! estimate, histogram entropy, and smoothing of guideline-time traces.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rawproc::{brightness, GrayImage, Image};

/// Mean and coefficient of variation of a group's image brightnesses.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupStats {
    pub group_id: usize,
    pub mu: f64,
    pub cv: f64,
}

pub fn group_brightness_stats<I: Image>(group_id: usize, images: &[I]) -> Result<GroupStats> {
    let b: Vec<f64> = images.iter().map(brightness).collect();
    stats_from_brightness(group_id, &b)
}

/// [`group_brightness_stats`] from precomputed brightnesses; the deviation is
/// the population one and `cv` is 0 when the mean is 0.
pub fn stats_from_brightness(group_id: usize, values: &[f64]) -> Result<GroupStats> {
    if values.len() < 2 {
        return Err(Error::invalid(
            "group_brightness_stats",
            format!("{} image(s); at least 2 needed", values.len()),
        ));
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
    let cv = if mu == 0.0 { 0.0 } else { sd / mu };
    Ok(GroupStats { group_id, mu, cv })
}

/// Laplacian-difference noise estimate (Immerkaer):
/// `sqrt(pi/2) / (6 (W-2)(H-2)) * sum |I * M|` over interior pixels, with
/// `M = [[1,-2,1],[-2,4,-2],[1,-2,1]]`.
pub fn noise_variance(image: &GrayImage) -> Result<f64> {
    let (h, w) = (image.height(), image.width());
    if h < 3 || w < 3 {
        return Err(Error::invalid("noise_variance", format!("{h}x{w} image; need at least 3x3")));
    }
    const MASK: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];
    let px = image.tensor().data();
    let mut total = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut r = 0.0;
            for (dy, row) in MASK.iter().enumerate() {
                for (dx, m) in row.iter().enumerate() {
                    r += m * px[(y + dy - 1) * w + x + dx - 1];
                }
            }
            total += r.abs();
        }
    }
    Ok((std::f64::consts::FRAC_PI_2).sqrt() * total / (6.0 * (w - 2) as f64 * (h - 2) as f64))
}

/// Shannon entropy in bits of the 256-bin histogram of channel-mean gray values.
pub fn entropy(image: &impl Image) -> f64 {
    let t = image.tensor();
    let (c, h, w) = t.dims3().expect("images are rank 3");
    let n = h * w;
    let mut hist = [0usize; 256];
    for i in 0..n {
        let g = (0..c).map(|ch| t.data()[ch * n + i]).sum::<f64>() / c as f64;
        hist[((g * 256.0) as usize).min(255)] += 1;
    }
    hist.iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n as f64;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Smoothing applied to a sequence of guideline times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMode {
    Identity,
    /// Exponential moving average of `ln t1`.
    Ema,
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(FilterMode::Identity),
            "ema" => Ok(FilterMode::Ema),
            other => Err(Error::invalid("t1_filter", format!("unknown mode {other:?} (identity|ema)"))),
        }
    }
}

impl std::fmt::Display for FilterMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterMode::Identity => "identity",
            FilterMode::Ema => "ema",
        })
    }
}

/// `y_0 = t_0`, `ln y_k = beta ln y_{k-1} + (1 - beta) ln t_k` in EMA mode.
pub fn t1_filter(sequence: &[f64], mode: FilterMode, beta: f64) -> Result<Vec<f64>> {
    if let Some(t) = sequence.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::invalid("t1_filter", format!("time {t} is not positive")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid("t1_filter", format!("beta {beta} outside [0, 1]")));
    }
    // beta = 0 reproduces the input bit for bit rather than through exp(ln t)
    if mode == FilterMode::Identity || beta == 0.0 {
        return Ok(sequence.to_vec());
    }
    let mut out = Vec::with_capacity(sequence.len());
    let mut state: Option<f64> = None;
    for &t in sequence {
        let y = match state {
            None => t.ln(),
            Some(prev) => beta * prev + (1.0 - beta) * t.ln(),
        };
        state = Some(y);
        out.push(y.exp());
    }
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("spearman", format!("lengths {} and {}", a.len(), b.len())));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::rawproc::RgbImage;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gray(h: usize, w: usize, f: impl FnMut(usize) -> f64) -> GrayImage {
        GrayImage::new(Tensor::from_fn([1, h, w], f)).unwrap()
    }

    #[test]
    fn group_stats_closed_forms() {
        let s = stats_from_brightness(3, &[0.2, 0.4]).unwrap();
        assert!((s.mu - 0.3).abs() < 1e-15);
        assert!((s.cv - 0.1 / 0.3).abs() < 1e-12);
        let same = vec![gray(2, 2, |_| 0.3); 3];
        assert_eq!(group_brightness_stats(0, &same).unwrap().cv, 0.0);
        assert_eq!(stats_from_brightness(0, &[0.0, 0.0]).unwrap().cv, 0.0);
        assert!(stats_from_brightness(0, &[0.5]).is_err());
    }

    #[test]
    fn group_stats_match_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..9).map(|_| rng.random()).collect();
        let mean = v.iter().sum::<f64>() / 9.0;
        let mut ss = 0.0;
        for x in &v {
            ss += (x - mean) * (x - mean);
        }
        let s = stats_from_brightness(0, &v).unwrap();
        assert!((s.cv - (ss / 9.0).sqrt() / mean).abs() < 1e-12);
    }

    #[test]
    fn nv_annihilates_constants_and_ramps() {
        assert_eq!(noise_variance(&gray(8, 9, |_| 0.4)).unwrap(), 0.0);
        let ramp = gray(8, 9, |i| 0.01 * (i / 9) as f64 + 0.02 * (i % 9) as f64);
        assert!(noise_variance(&ramp).unwrap() < 1e-15);
        assert!(noise_variance(&gray(2, 9, |_| 0.0)).is_err());
    }

    #[test]
    fn nv_recovers_gaussian_sigma() {
        let normal = Normal::new(0.5, 0.05).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = gray(256, 256, |_| f64::clamp(normal.sample(&mut rng), 0.0, 1.0));
            let s = noise_variance(&img).unwrap();
            assert!((s - 0.05).abs() < 0.01, "seed {seed}: {s}");
        }
    }

    #[test]
    fn entropy_extremes() {
        assert_eq!(entropy(&gray(16, 16, |_| 0.7)), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = gray(512, 512, |_| rng.random_range(0..256) as f64 / 255.0);
        assert!((entropy(&noise) - 8.0).abs() < 0.05);
        // two equally populated levels
        assert!((entropy(&gray(2, 2, |i| (i % 2) as f64)) - 1.0).abs() < 1e-15);
        let rgb = RgbImage::new(Tensor::from_fn([3, 2, 2], |i| if i < 4 { 0.0 } else { 0.5 })).unwrap();
        assert_eq!(entropy(&rgb), 0.0);
    }

    #[test]
    fn filter_examples() {
        let seq = [0.1, 0.4, 0.2];
        assert_eq!(t1_filter(&seq, FilterMode::Identity, 0.7).unwrap(), seq);
        assert_eq!(t1_filter(&seq, FilterMode::Ema, 0.0).unwrap(), seq);
        let out = t1_filter(&[1.0, 2.0], FilterMode::Ema, 0.5).unwrap();
        assert!((out[1] - 2f64.sqrt()).abs() < 1e-12);
        assert!(t1_filter(&[1.0, 0.0], FilterMode::Ema, 0.5).is_err());
        assert!(t1_filter(&[1.0], FilterMode::Ema, 1.5).is_err());
        assert!("median".parse::<FilterMode>().is_err());
        assert_eq!("ema".parse::<FilterMode>().unwrap(), FilterMode::Ema);
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    proptest! {
        #[test]
        fn ema_stays_within_input_range(seq in prop::collection::vec(1e-3f64..50.0, 1..30), beta in 0.0f64..=1.0) {
            let out = t1_filter(&seq, FilterMode::Ema, beta).unwrap();
            let lo = seq.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = seq.iter().cloned().fold(0.0, f64::max);
            for y in out {
                prop_assert!(y >= lo * (1.0 - 1e-12) && y <= hi * (1.0 + 1e-12));
            }
        }

        #[test]
        fn entropy_is_permutation_invariant(v in prop::collection::vec(0.0f64..=1.0, 16), seed in any::<u64>()) {
            let mut p = v.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..p.len()).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            let a = gray(4, 4, |i| v[i]);
            let b = gray(4, 4, |i| p[i]);
            prop_assert_eq!(entropy(&a), entropy(&b));
        }

        #[test]
        fn nv_ignores_affine_offsets(v in prop::collection::vec(0.2f64..0.6, 36), c in -0.1f64..0.1, gy in -0.01f64..0.01, gx in -0.01f64..0.01) {
            let base = noise_variance(&gray(6, 6, |i| v[i])).unwrap();
            let shifted = noise_variance(&gray(6, 6, |i| v[i] + c + gy * (i / 6) as f64 + gx * (i % 6) as f64)).unwrap();
            prop_assert!((base - shifted).abs() < 1e-12);
        }
    }
}
