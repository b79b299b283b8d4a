//! Synthetic multi-exposure raw captures.
//!
//! Procedural irradiance scenes are exposed through a logistic response curve
//! with signal-dependent Gaussian noise, then assembled into 8-frame groups
//! with a rule-selected ground-truth frame.

mod group;
mod io;

pub use group::{
    crop_at, default_sweep, make_group, make_group_with, random_crop, pair_at, sample_pair, synth_burst, synth_dataset,
    DatasetSpec, GroupRule, ImageGroup, Pair, GROUP_SIZE, SWEEP_RATIO,
};
pub use io::{read_dataset, read_group, write_dataset, write_group, MANIFEST};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rawproc::{ExifMeta, RawFrame};

/// Relative sensitivities of the R, G, B sites; white balance undoes them.
const PLANE_SENSITIVITY: [f64; 3] = [0.5, 1.0, 0.65];
/// Irradiance multipliers of the bright light disc and the dark patch.
const LIGHT_GAIN: f64 = 400.0;
const SHADOW_GAIN: f64 = 0.002;

/// Per-site irradiance of a static scene in three colour planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    irradiance: Tensor,
    seed: u64,
}

impl Scene {
    pub fn new(irradiance: Tensor, seed: u64) -> Result<Self> {
        let (c, h, w) = irradiance.dims3()?;
        if c != 3 || h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
            return Err(Error::shape("scene", format!("irradiance {:?}", irradiance.shape())));
        }
        if irradiance.data().iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Validation("scene irradiance must be finite and non-negative".into()));
        }
        Ok(Scene { irradiance, seed })
    }

    pub fn irradiance(&self) -> &Tensor {
        &self.irradiance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn height(&self) -> usize {
        self.irradiance.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.irradiance.shape()[2]
    }

    /// Median of the green plane, the scene's typical illumination.
    pub fn median_irradiance(&self) -> f64 {
        let mut g = self.irradiance.channel(1).to_vec();
        g.sort_by(f64::total_cmp);
        g[g.len() / 2]
    }

    pub fn max_irradiance(&self) -> f64 {
        self.irradiance.data().iter().cloned().fold(0.0, f64::max)
    }

    /// The same scene under illumination scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Scene> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid("scene_scaled", format!("factor {factor}")));
        }
        Scene::new(self.irradiance.map(|v| v * factor), self.seed)
    }
}

/// Random rectangle inside an `h x w` frame with sides in `[lo, hi]` of the extent.
fn random_rect(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> (usize, usize, usize, usize) {
    let rh = ((h as f64) * rng.random_range(lo..hi)).max(2.0) as usize;
    let rw = ((w as f64) * rng.random_range(lo..hi)).max(2.0) as usize;
    let y = rng.random_range(0..=h - rh.min(h));
    let x = rng.random_range(0..=w - rw.min(w));
    (y, x, rh.min(h), rw.min(w))
}

/// Procedural scene: smooth log-irradiance field, textured rectangles and
/// discs, one saturating light disc and one near-black patch.
///
/// Illumination is log-uniform over two decades, drawn from the seed.
pub fn synth_scene(seed: u64, height: usize, width: usize) -> Result<Scene> {
    if height < 32 || width < 32 || height % 2 != 0 || width % 2 != 0 {
        return Err(Error::invalid(
            "synth_scene",
            format!("extent {height}x{width}; need even sides of at least 32"),
        ));
    }
    let (h, w) = (height, width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let illumination = rng.random_range(0.2f64.ln()..20.0f64.ln()).exp();

    // log-reflectance and per-plane tint
    let mut log_r = vec![0.0; h * w];
    let mut tint = vec![[1.0f64; 3]; h * w];
    for _ in 0..4 {
        let fy = rng.random_range(-2.0..2.0) / h as f64;
        let fx = rng.random_range(-2.0..2.0) / w as f64;
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = rng.random_range(0.1..0.4);
        for y in 0..h {
            for x in 0..w {
                let a = std::f64::consts::TAU * (fy * y as f64 + fx * x as f64) + phase;
                log_r[y * w + x] += amp * a.cos();
            }
        }
    }
    let mut paint = |rng: &mut ChaCha8Rng, inside: &dyn Fn(usize, usize) -> bool, rect: (usize, usize, usize, usize)| {
        let level = rng.random_range(0.15f64.ln()..4.0f64.ln());
        let color = [rng.random_range(0.7..1.3), 1.0, rng.random_range(0.7..1.3)];
        let period = rng.random_range(3..12) as f64;
        let striped = rng.random_bool(0.5);
        let vertical = rng.random_bool(0.5);
        let (y0, x0, rh, rw) = rect;
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                if !inside(y, x) {
                    continue;
                }
                let mut v = level;
                if striped {
                    let u = if vertical { x } else { y } as f64;
                    v += 0.5 * (std::f64::consts::TAU * u / period).sin();
                }
                log_r[y * w + x] = v;
                tint[y * w + x] = color;
            }
        }
    };
    for _ in 0..6 {
        let rect = random_rect(&mut rng, h, w, 0.1, 0.45);
        paint(&mut rng, &|_, _| true, rect);
    }
    for _ in 0..4 {
        let rect = random_rect(&mut rng, h, w, 0.08, 0.3);
        let (y0, x0, rh, rw) = rect;
        let (cy, cx, r) = (y0 as f64 + rh as f64 / 2.0, x0 as f64 + rw as f64 / 2.0, rh.min(rw) as f64 / 2.0);
        let disc = move |y: usize, x: usize| (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r;
        paint(&mut rng, &disc, rect);
    }

    let mut gain = vec![1.0; h * w];
    let (y0, x0, rh, rw) = random_rect(&mut rng, h, w, 0.12, 0.22);
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            gain[y * w + x] = SHADOW_GAIN;
        }
    }
    let radius = rng.random_range(0.03..0.05) * h.min(w) as f64;
    let cy = rng.random_range(radius..h as f64 - radius);
    let cx = rng.random_range(radius..w as f64 - radius);
    for y in 0..h {
        for x in 0..w {
            if (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= radius * radius {
                gain[y * w + x] = LIGHT_GAIN;
                tint[y * w + x] = [1.0; 3];
            }
        }
    }

    let mut data = vec![0.0; 3 * h * w];
    for c in 0..3 {
        for i in 0..h * w {
            data[c * h * w + i] = illumination * PLANE_SENSITIVITY[c] * tint[i][c] * gain[i] * log_r[i].exp();
        }
    }
    let scene = Scene::new(Tensor::new([3, h, w], data)?, seed)?;
    let positive_min = scene.irradiance.data().iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    if (scene.max_irradiance() / positive_min).log10() < 3.0 {
        return Err(Error::Dataset(format!("scene {seed} spans less than 3 decades of irradiance")));
    }
    Ok(scene)
}

/// Logistic response in log exposure plus Gaussian read and shot noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorModel {
    pub crf_a: f64,
    pub crf_b: f64,
    /// Read-noise standard deviation in counts at ISO [`BASE_ISO`](Self::BASE_ISO).
    pub read_noise_sd: f64,
    /// Shot-noise variance per count of signal at the base ISO.
    pub shot_noise_gain: f64,
    pub black_level: u16,
    pub white_level: u16,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            crf_a: 1.4,
            crf_b: 0.0,
            read_noise_sd: 4.0,
            shot_noise_gain: 2.0,
            black_level: 512,
            white_level: 16383,
        }
    }
}

impl SensorModel {
    /// ISO at which the noise parameters apply unscaled.
    pub const BASE_ISO: f64 = 800.0;

    pub fn validate(&self) -> Result<()> {
        let ok = self.crf_a > 0.0
            && self.crf_b.is_finite()
            && self.read_noise_sd >= 0.0
            && self.shot_noise_gain >= 0.0
            && self.black_level < self.white_level;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("sensor model {self:?}")))
        }
    }

    /// The same sensor with noise switched off.
    pub fn noiseless(&self) -> Self {
        SensorModel {
            read_noise_sd: 0.0,
            shot_noise_gain: 0.0,
            ..self.clone()
        }
    }

    /// Site exposure `R * t`.
    pub fn exposure(irradiance: f64, t: f64) -> f64 {
        irradiance * t
    }

    /// Mean normalized response `1 / (1 + exp(-a (ln E - b)))`; zero at `E = 0`.
    pub fn response(&self, exposure: f64) -> f64 {
        if exposure <= 0.0 {
            return 0.0;
        }
        1.0 / (1.0 + (-self.crf_a * (exposure.ln() - self.crf_b)).exp())
    }

    /// Exposure giving mean response `br` in `(0, 1)`.
    pub fn inverse_response(&self, br: f64) -> f64 {
        (self.crf_b + (br / (1.0 - br)).ln() / self.crf_a).exp()
    }

    fn range(&self) -> f64 {
        f64::from(self.white_level - self.black_level)
    }

    /// Mean count and noise standard deviation at normalized response `br`.
    pub fn count_moments(&self, br: f64, iso: f64) -> (f64, f64) {
        let k = iso / Self::BASE_ISO;
        let read = self.read_noise_sd * k;
        let var = read * read + self.shot_noise_gain * k * br * self.range();
        (f64::from(self.black_level) + br * self.range(), var.sqrt())
    }
}

/// Site colour plane of the RGGB mosaic: 0 = R, 1 = G, 2 = B.
fn site_plane(row: usize, col: usize) -> usize {
    match (row % 2, col % 2) {
        (0, 0) => 0,
        (1, 1) => 2,
        _ => 1,
    }
}

/// Renders a mosaicked frame of `scene` at exposure `t` seconds.
///
/// `meta` supplies ISO (which scales noise) and white-balance gains; its
/// exposure time is replaced by `t`.
pub fn expose(scene: &Scene, t: f64, model: &SensorModel, meta: &ExifMeta, noise_seed: u64) -> Result<RawFrame> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("expose", format!("exposure time {t}")));
    }
    model.validate()?;
    let (h, w) = (scene.height(), scene.width());
    let iso = f64::from(meta.iso);
    let r = scene.irradiance.data();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut counts = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let e = SensorModel::exposure(r[(site_plane(row, col) * h + row) * w + col], t);
            let (mean, sd) = model.count_moments(model.response(e), iso);
            let z: f64 = StandardNormal.sample(&mut rng);
            counts.push((mean + sd * z).round().clamp(0.0, 65535.0) as u16);
        }
    }
    let meta = meta.with_exposure(t as f32);
    RawFrame::new(w, h, model.black_level, model.white_level, counts, meta)
}
