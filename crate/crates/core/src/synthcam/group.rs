use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{expose, synth_scene, Scene, SensorModel};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rawproc::{brightness, raw_to_rgb_reference, ExifMeta, Image, PackedRaw, RawFrame, RgbImage, GAMMA};

/// Frames per group.
pub const GROUP_SIZE: usize = 8;
/// Longest over shortest exposure time of a default sweep.
pub const SWEEP_RATIO: f64 = 125.0;

/// Thresholds of the ground-truth and invalid-frame rules.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupRule {
    /// Ground truth is the frame with reference brightness nearest this.
    pub target_brightness: f64,
    /// Frames with a larger fraction of saturated pixels cannot be ground truth.
    pub max_saturated_fraction: f64,
    /// A pixel is saturated when its largest channel reaches this level.
    pub saturation_level: f64,
    /// Frames darker than this are tagged invalid.
    pub invalid_below: f64,
}

impl Default for GroupRule {
    fn default() -> Self {
        GroupRule {
            target_brightness: 0.40,
            max_saturated_fraction: 0.02,
            saturation_level: 0.98,
            invalid_below: 0.02,
        }
    }
}

/// Eight captures of one scene at descending exposure times.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGroup {
    frames: Vec<RawFrame>,
    gt_index: usize,
    invalid: BTreeSet<usize>,
}

impl ImageGroup {
    pub fn new(frames: Vec<RawFrame>, gt_index: usize, invalid: BTreeSet<usize>) -> Result<Self> {
        if frames.len() != GROUP_SIZE {
            return Err(Error::Dataset(format!("group has {} frames, expected {GROUP_SIZE}", frames.len())));
        }
        if frames.windows(2).any(|p| p[0].meta().exposure_time <= p[1].meta().exposure_time) {
            return Err(Error::Dataset("group exposure times must strictly descend".into()));
        }
        let first = frames[0].meta();
        let shared = frames.iter().all(|f| {
            f.meta().iso == first.iso
                && f.meta().wb_gains == first.wb_gains
                && (f.width(), f.height()) == (frames[0].width(), frames[0].height())
        });
        if !shared {
            return Err(Error::Dataset("group frames must share extent, ISO and gains".into()));
        }
        if gt_index >= GROUP_SIZE || invalid.contains(&gt_index) || invalid.iter().any(|&i| i >= GROUP_SIZE) {
            return Err(Error::Dataset(format!(
                "ground truth {gt_index} with invalid set {invalid:?}"
            )));
        }
        Ok(ImageGroup { frames, gt_index, invalid })
    }

    pub fn frames(&self) -> &[RawFrame] {
        &self.frames
    }

    pub fn gt_index(&self) -> usize {
        self.gt_index
    }

    pub fn invalid(&self) -> &BTreeSet<usize> {
        &self.invalid
    }

    pub fn gt_frame(&self) -> &RawFrame {
        &self.frames[self.gt_index]
    }

    /// Exposure time of the ground-truth frame.
    pub fn t_g(&self) -> f64 {
        f64::from(self.gt_frame().meta().exposure_time)
    }

    /// Valid frames shorter than the ground truth: the training inputs.
    pub fn eligible_inputs(&self) -> Vec<usize> {
        (self.gt_index + 1..GROUP_SIZE).filter(|i| !self.invalid.contains(i)).collect()
    }
}

/// Renders a group and applies the default [`GroupRule`].
pub fn make_group(
    scene: &Scene,
    model: &SensorModel,
    meta: &ExifMeta,
    times: &[f64],
    noise_seed: u64,
) -> Result<ImageGroup> {
    make_group_with(scene, model, meta, times, noise_seed, &GroupRule::default())
}

pub fn make_group_with(
    scene: &Scene,
    model: &SensorModel,
    meta: &ExifMeta,
    times: &[f64],
    noise_seed: u64,
    rule: &GroupRule,
) -> Result<ImageGroup> {
    if times.len() != GROUP_SIZE || times.iter().any(|&t| !(t > 0.0)) || times.windows(2).any(|p| p[0] <= p[1]) {
        return Err(Error::invalid(
            "make_group",
            format!("need {GROUP_SIZE} strictly descending positive times, got {times:?}"),
        ));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut frames = Vec::with_capacity(GROUP_SIZE);
    let mut diag = Vec::with_capacity(GROUP_SIZE);
    for &t in times {
        let frame = expose(scene, t, model, meta, seeds.random())?;
        let rgb = raw_to_rgb_reference(&frame);
        diag.push((brightness(&rgb), saturated_fraction(&rgb, rule.saturation_level)));
        frames.push(frame);
    }
    let invalid: BTreeSet<usize> = (0..GROUP_SIZE).filter(|&i| diag[i].0 < rule.invalid_below).collect();
    let gt = (0..GROUP_SIZE)
        .filter(|&i| diag[i].1 < rule.max_saturated_fraction && !invalid.contains(&i))
        .min_by(|&a, &b| {
            let da = (diag[a].0 - rule.target_brightness).abs();
            let db = (diag[b].0 - rule.target_brightness).abs();
            da.total_cmp(&db)
        });
    let Some(gt_index) = gt else {
        let detail: Vec<String> = diag
            .iter()
            .zip(times)
            .map(|((b, s), t)| format!("t={t:.4}s brightness={b:.3} saturated={s:.3}"))
            .collect();
        return Err(Error::Dataset(format!(
            "scene {} has no ground-truth candidate: {}",
            scene.seed(),
            detail.join("; ")
        )));
    };
    ImageGroup::new(frames, gt_index, invalid)
}

fn saturated_fraction(rgb: &RgbImage, level: f64) -> f64 {
    let t = rgb.tensor();
    let n = rgb.height() * rgb.width();
    let (r, g, b) = (t.channel(0), t.channel(1), t.channel(2));
    let count = (0..n).filter(|&i| r[i].max(g[i]).max(b[i]) >= level).count();
    count as f64 / n as f64
}

/// Geometric sweep over [`SWEEP_RATIO`] whose longest time is about four times
/// the exposure that renders the median pixel at the target brightness, with
/// a random phase of up to half a stop either way.
pub fn default_sweep(scene: &Scene, model: &SensorModel, rule: &GroupRule, rng: &mut impl Rng) -> [f64; GROUP_SIZE] {
    let target_exposure = model.inverse_response(rule.target_brightness.powf(GAMMA));
    let t_star = target_exposure / scene.median_irradiance();
    let t_max = t_star * 2f64.powf(2.0 + rng.random_range(-0.5..0.5));
    std::array::from_fn(|k| t_max * SWEEP_RATIO.powf(-(k as f64) / (GROUP_SIZE - 1) as f64))
}

/// Training input, target, and their exposure times.
#[derive(Clone, Copy, Debug)]
pub struct Pair<'a> {
    pub input: &'a RawFrame,
    pub target: &'a RawFrame,
    pub input_index: usize,
    pub t0: f64,
    pub t_g: f64,
}

/// Ground truth plus a uniformly drawn valid frame shorter than it.
pub fn sample_pair<'a>(group: &'a ImageGroup, rng: &mut impl Rng) -> Result<Pair<'a>> {
    let eligible = group.eligible_inputs();
    if eligible.is_empty() {
        return Err(Error::Dataset(format!(
            "no input frame after ground truth {} (invalid {:?})",
            group.gt_index(),
            group.invalid()
        )));
    }
    pair_at(group, eligible[rng.random_range(0..eligible.len())])
}

/// Ground truth with input frame `i`, which must be eligible.
pub fn pair_at(group: &ImageGroup, i: usize) -> Result<Pair<'_>> {
    if !group.eligible_inputs().contains(&i) {
        return Err(Error::Dataset(format!(
            "frame {i} is not a training input (ground truth {}, invalid {:?})",
            group.gt_index(),
            group.invalid()
        )));
    }
    let input = &group.frames()[i];
    Ok(Pair {
        input,
        target: group.gt_frame(),
        input_index: i,
        t0: f64::from(input.meta().exposure_time),
        t_g: group.t_g(),
    })
}

/// Aligned crop: `size x size` of the packed frame at `(oy, ox)` and
/// `2size x 2size` of the RGB target at `(2oy, 2ox)`.
pub fn crop_at(x: &PackedRaw, y: &RgbImage, size: usize, oy: usize, ox: usize) -> Result<(PackedRaw, RgbImage)> {
    let (h, w) = (x.height(), x.width());
    if (y.height(), y.width()) != (2 * h, 2 * w) {
        return Err(Error::shape(
            "crop",
            format!("target {}x{} is not twice the packed {h}x{w}", y.height(), y.width()),
        ));
    }
    if size == 0 || size % 2 != 0 || oy + size > h || ox + size > w {
        return Err(Error::invalid(
            "crop",
            format!("even size {size} at ({oy}, {ox}) does not fit {h}x{w}"),
        ));
    }
    let cut = |t: &Tensor, size: usize, oy: usize, ox: usize| -> Result<Tensor> {
        let (c, h, w) = t.dims3()?;
        let mut data = Vec::with_capacity(c * size * size);
        for ch in 0..c {
            for i in 0..size {
                let start = (ch * h + oy + i) * w + ox;
                data.extend_from_slice(&t.data()[start..start + size]);
            }
        }
        Tensor::new([c, size, size], data)
    };
    Ok((
        PackedRaw::new(cut(x.tensor(), size, oy, ox)?)?,
        RgbImage::new(cut(y.tensor(), 2 * size, 2 * oy, 2 * ox)?)?,
    ))
}

/// [`crop_at`] with a uniformly random offset, which is returned.
pub fn random_crop(
    x: &PackedRaw,
    y: &RgbImage,
    size: usize,
    rng: &mut impl Rng,
) -> Result<(PackedRaw, RgbImage, (usize, usize))> {
    let (h, w) = (x.height(), x.width());
    if size > h || size > w {
        return Err(Error::invalid("crop", format!("size {size} exceeds packed {h}x{w}")));
    }
    let oy = rng.random_range(0..=h - size);
    let ox = rng.random_range(0..=w - size);
    let (a, b) = crop_at(x, y, size, oy, ox)?;
    Ok((a, b, (oy, ox)))
}

/// Size and seeds of a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub groups: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub model: SensorModel,
    pub rule: GroupRule,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            groups: 64,
            height: 320,
            width: 320,
            seed: 0,
            model: SensorModel::default(),
            rule: GroupRule::default(),
        }
    }
}

const ISO_CHOICES: [f32; 4] = [400.0, 800.0, 1600.0, 3200.0];
/// Scenes rejected by the ground-truth rule are redrawn this many times.
const SCENE_ATTEMPTS: u64 = 16;

/// Capture settings of group `index`: ISO, gains, scene and noise seeds.
fn group_draws(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Generates `spec.groups` groups, each fully determined by `(spec.seed, index)`.
pub fn synth_dataset(spec: &DatasetSpec) -> Result<Vec<ImageGroup>> {
    (0..spec.groups).map(|g| synth_group(spec, g)).collect()
}

fn synth_group(spec: &DatasetSpec, index: usize) -> Result<ImageGroup> {
    let mut rng = group_draws(spec.seed, index);
    let meta = ExifMeta {
        iso: ISO_CHOICES[rng.random_range(0..ISO_CHOICES.len())],
        exposure_time: 1.0,
        wb_gains: [
            (2.0 * rng.random_range(0.9..1.1)) as f32,
            1.0,
            (1.0 / 0.65 * rng.random_range(0.9..1.1)) as f32,
            1.0,
        ],
        aperture: 0.0,
    };
    let mut last = None;
    for _ in 0..SCENE_ATTEMPTS {
        let scene = synth_scene(rng.random(), spec.height, spec.width)?;
        let times = default_sweep(&scene, &spec.model, &spec.rule, &mut rng);
        match make_group_with(&scene, &spec.model, &meta, &times, rng.random(), &spec.rule) {
            Ok(g) if !g.eligible_inputs().is_empty() => return Ok(g),
            Ok(_) => last = Some(Error::Dataset("ground truth has no shorter valid frame".into())),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Dataset(format!(
        "group {index}: no usable scene in {SCENE_ATTEMPTS} attempts; last error: {}",
        last.expect("at least one attempt")
    )))
}

/// Frames of one scene at a fixed exposure time under illumination scaled by
/// each factor in turn, as in a burst with changing light.
pub fn synth_burst(
    scene: &Scene,
    model: &SensorModel,
    meta: &ExifMeta,
    t: f64,
    factors: &[f64],
    noise_seed: u64,
) -> Result<Vec<RawFrame>> {
    let mut seeds = ChaCha8Rng::seed_from_u64(noise_seed);
    factors
        .iter()
        .map(|&f| expose(&scene.scaled(f)?, t, model, meta, seeds.random()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rawproc::pack_bayer;

    fn small_spec(groups: usize) -> DatasetSpec {
        DatasetSpec {
            groups,
            height: 64,
            width: 64,
            seed: 5,
            ..Default::default()
        }
    }

    fn meta() -> ExifMeta {
        ExifMeta {
            iso: 800.0,
            exposure_time: 1.0,
            wb_gains: [2.0, 1.0, 1.5, 1.0],
            aperture: 0.0,
        }
    }

    #[test]
    fn generated_groups_satisfy_invariants() {
        let groups = synth_dataset(&small_spec(6)).unwrap();
        for g in &groups {
            assert_eq!(g.frames().len(), GROUP_SIZE);
            assert!(!g.invalid().contains(&g.gt_index()));
            assert!(!g.eligible_inputs().is_empty());
        }
        assert_eq!(groups, synth_dataset(&small_spec(6)).unwrap());
    }

    #[test]
    fn mid_illumination_sweep_puts_ground_truth_in_bright_half() {
        let scene = synth_scene(21, 64, 64).unwrap();
        // normalize so that 1/2 s .. 1/250 s brackets a mid exposure
        let scene = scene.scaled(0.5 / scene.median_irradiance()).unwrap();
        let times: Vec<f64> = (0..8).map(|k| 0.5 * (0.008f64).powf(k as f64 / 7.0)).collect();
        let g = make_group(&scene, &SensorModel::default(), &meta(), &times, 3).unwrap();
        assert!(g.gt_index() < 4, "{}", g.gt_index());
    }

    #[test]
    fn very_dark_frames_are_invalid() {
        let scene = synth_scene(4, 64, 64).unwrap();
        let scene = scene.scaled(1.0 / scene.median_irradiance()).unwrap();
        let times: Vec<f64> = (0..8).map(|k| 2.0 * (1e-5f64).powf(k as f64 / 7.0)).collect();
        let g = make_group(&scene, &SensorModel::default().noiseless(), &meta(), &times, 3).unwrap();
        assert!(g.invalid().contains(&7));
        assert!(!g.invalid().contains(&g.gt_index()));
    }

    #[test]
    fn bad_times_rejected() {
        let scene = synth_scene(4, 32, 32).unwrap();
        let m = SensorModel::default();
        assert!(make_group(&scene, &m, &meta(), &[1.0; 8], 0).is_err());
        assert!(make_group(&scene, &m, &meta(), &[1.0, 0.5], 0).is_err());
    }

    #[test]
    fn pairs_come_from_eligible_frames() {
        let groups = synth_dataset(&small_spec(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for g in &groups {
            for _ in 0..50 {
                let p = sample_pair(g, &mut rng).unwrap();
                assert!(p.t0 < p.t_g);
                assert!(g.eligible_inputs().contains(&p.input_index));
                assert_eq!(p.target, g.gt_frame());
            }
        }
    }

    #[test]
    fn crop_alignment() {
        let groups = synth_dataset(&small_spec(1)).unwrap();
        let g = &groups[0];
        let x = pack_bayer(&g.frames()[7]);
        let y = raw_to_rgb_reference(g.gt_frame());
        let (cx, cy) = crop_at(&x, &y, 8, 0, 0).unwrap();
        assert_eq!(cx.tensor().data()[..8], x.tensor().data()[..8]);
        assert_eq!(cy.tensor().data()[..16], y.tensor().data()[..16]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (cx, cy, (oy, ox)) = random_crop(&x, &y, 10, &mut rng).unwrap();
        let (h, w) = (x.height(), x.width());
        for c in 0..4 {
            for i in 0..10 {
                for j in 0..10 {
                    assert_eq!(cx.tensor().data()[(c * 10 + i) * 10 + j], x.tensor().data()[(c * h + i + oy) * w + j + ox]);
                }
            }
        }
        for c in 0..3 {
            for i in 0..20 {
                for j in 0..20 {
                    let full = y.tensor().data()[(c * 2 * h + i + 2 * oy) * 2 * w + j + 2 * ox];
                    assert_eq!(cy.tensor().data()[(c * 20 + i) * 20 + j], full);
                }
            }
        }
        assert!(random_crop(&x, &y, 40, &mut rng).is_err());
        assert!(crop_at(&x, &y, 7, 0, 0).is_err());
    }

    #[test]
    fn burst_follows_illumination() {
        let scene = synth_scene(8, 32, 32).unwrap();
        let frames = synth_burst(&scene, &SensorModel::default().noiseless(), &meta(), 0.05, &[0.5, 1.0, 2.0], 0).unwrap();
        let b: Vec<f64> = frames.iter().map(|f| brightness(&raw_to_rgb_reference(f))).collect();
        assert!(b[0] <= b[1] && b[1] <= b[2]);
    }

    proptest! {
        #[test]
        fn crops_stay_aligned(h in 2usize..10, w in 2usize..10, size in 1usize..5, fy in 0.0f64..1.0, fx in 0.0f64..1.0) {
            let size = 2 * size;
            prop_assume!(size <= h && size <= w);
            let oy = (fy * (h - size) as f64) as usize;
            let ox = (fx * (w - size) as f64) as usize;
            let x = PackedRaw::new(Tensor::from_fn([4, h, w], |i| i as f64 / (4 * h * w) as f64)).unwrap();
            let y = RgbImage::new(Tensor::from_fn([3, 2 * h, 2 * w], |i| i as f64 / (12 * h * w) as f64)).unwrap();
            let (cx, cy) = crop_at(&x, &y, size, oy, ox).unwrap();
            for c in 0..4 {
                for i in 0..size {
                    for j in 0..size {
                        let got = cx.tensor().data()[(c * size + i) * size + j];
                        prop_assert_eq!(got, ((c * h + oy + i) * w + ox + j) as f64 / (4 * h * w) as f64);
                    }
                }
            }
            let s2 = 2 * size;
            for c in 0..3 {
                for i in 0..s2 {
                    for j in 0..s2 {
                        let got = cy.tensor().data()[(c * s2 + i) * s2 + j];
                        prop_assert_eq!(got, ((c * 2 * h + 2 * oy + i) * 2 * w + 2 * ox + j) as f64 / (12 * h * w) as f64);
                    }
                }
            }
        }
    }
}
