//! Inference with a checkpoint: single frames, sequences, and held-out groups.

use super::checkpoint::Checkpoint;
use super::train::{bpn_predict, esn_inputs};
use crate::autodiff::Tape;
use crate::conditioning::{build_iev, build_piev};
use crate::error::{Error, Result};
use crate::esn::esn_forward;
use crate::metrics::{spearman, stats_from_brightness, t1_filter, FilterMode, GroupStats};
use crate::rawproc::{brightness, pack_bayer, raw_to_rgb_reference, RawFrame, RgbImage};
use crate::synthcam::ImageGroup;

/// Runs a checkpoint's networks on raw frames.
#[derive(Clone, Copy, Debug)]
pub struct Enhancer<'a> {
    ckpt: &'a Checkpoint,
}

impl<'a> Enhancer<'a> {
    pub fn new(ckpt: &'a Checkpoint) -> Self {
        Enhancer { ckpt }
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        self.ckpt
    }

    /// Guideline time chosen by the brightness network.
    pub fn predict_t1(&self, frame: &RawFrame) -> Result<f64> {
        let Some((cfg, params)) = &self.ckpt.bpn else {
            return Err(Error::Validation(
                "checkpoint has no brightness network; run in ESN-only mode with an explicit t1 \
                 (`enhance --t1 <seconds>`)"
                    .into(),
            ));
        };
        let tape = Tape::new();
        let vars = params.register(&tape, false);
        let piev = build_piev(frame.meta())?;
        let log_t1 = bpn_predict(&tape, cfg, &self.ckpt.stats, &pack_bayer(frame), &piev, params, &vars)?;
        Ok(log_t1.item()?.exp())
    }

    /// ESN-only rendering of `frame` at exposure time `t1`.
    pub fn render(&self, frame: &RawFrame, t1: f64) -> Result<RgbImage> {
        let tape = Tape::new();
        let vars = self.ckpt.esn_params.register(&tape, false);
        let iev = build_iev(frame.meta(), t1)?;
        let (x, planes) = esn_inputs(&tape, &self.ckpt.stats, &pack_bayer(frame), &iev)?;
        let out = esn_forward(&self.ckpt.esn_config, &x, &planes, &self.ckpt.esn_params, &vars)?;
        RgbImage::new(out.value().clone())
    }

    /// Predicts `t1`, then renders at it.
    pub fn evaluate(&self, frame: &RawFrame) -> Result<(RgbImage, f64)> {
        let t1 = self.predict_t1(frame)?;
        Ok((self.render(frame, t1)?, t1))
    }
}

/// Output of [`enhance_sequence`].
#[derive(Clone, Debug)]
pub struct SequenceOutput {
    pub frames: Vec<RgbImage>,
    /// Times predicted frame by frame.
    pub raw_t1: Vec<f64>,
    /// Times after filtering; these rendered `frames`.
    pub filtered_t1: Vec<f64>,
}

/// Evaluates each frame, filters the time trace, and re-renders with the
/// filtered times unless the filter is the identity.
pub fn enhance_sequence(
    enhancer: &Enhancer<'_>,
    frames: &[RawFrame],
    mode: FilterMode,
    beta: f64,
) -> Result<SequenceOutput> {
    if frames.is_empty() {
        return Err(Error::invalid("enhance_sequence", "no frames"));
    }
    let at = |k: usize| move |e: Error| Error::Validation(format!("frame {k}: {e}"));
    let mut images = Vec::with_capacity(frames.len());
    let mut raw_t1 = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        let (img, t1) = enhancer.evaluate(frame).map_err(at(k))?;
        images.push(img);
        raw_t1.push(t1);
    }
    let filtered_t1 = t1_filter(&raw_t1, mode, beta)?;
    if mode != FilterMode::Identity {
        for (k, (frame, &t1)) in frames.iter().zip(&filtered_t1).enumerate() {
            images[k] = enhancer.render(frame, t1).map_err(at(k))?;
        }
    }
    Ok(SequenceOutput { frames: images, raw_t1, filtered_t1 })
}

/// Consistency of one group before and after enhancement.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupEval {
    pub pre: GroupStats,
    pub post: GroupStats,
    /// `(t0, t1)` for each evaluated frame.
    pub times: Vec<(f64, f64)>,
}

/// Frames a group is judged on: the ground truth and every valid shorter
/// exposure. Over-exposed frames are left out; the networks are never asked
/// to darken.
pub fn evaluation_frames(group: &ImageGroup) -> Vec<usize> {
    std::iter::once(group.gt_index()).chain(group.eligible_inputs()).collect()
}

/// Brightness statistics of the reference rendering versus the enhanced one.
pub fn evaluate_group(enhancer: &Enhancer<'_>, group_id: usize, group: &ImageGroup) -> Result<GroupEval> {
    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut times = Vec::new();
    for i in evaluation_frames(group) {
        let frame = &group.frames()[i];
        let (img, t1) = enhancer.evaluate(frame)?;
        pre.push(brightness(&raw_to_rgb_reference(frame)));
        post.push(brightness(&img));
        times.push((f64::from(frame.meta().exposure_time), t1));
    }
    Ok(GroupEval {
        pre: stats_from_brightness(group_id, &pre)?,
        post: stats_from_brightness(group_id, &post)?,
        times,
    })
}

/// Aggregate over held-out groups.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub groups: Vec<GroupEval>,
    /// Share of groups whose CV dropped.
    pub improved_fraction: f64,
    pub mean_pre_cv: f64,
    pub mean_post_cv: f64,
    pub median_post_cv: f64,
    /// Rank correlation of input time and predicted time over all evaluated frames.
    pub spearman_t0_t1: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn benchmark(enhancer: &Enhancer<'_>, groups: &[ImageGroup]) -> Result<Benchmark> {
    if groups.is_empty() {
        return Err(Error::Dataset("benchmark needs at least one group".into()));
    }
    let evals = groups
        .iter()
        .enumerate()
        .map(|(id, g)| evaluate_group(enhancer, id, g))
        .collect::<Result<Vec<_>>>()?;
    let n = evals.len() as f64;
    let post: Vec<f64> = evals.iter().map(|e| e.post.cv).collect();
    let (t0, t1): (Vec<f64>, Vec<f64>) = evals.iter().flat_map(|e| e.times.iter().copied()).unzip();
    Ok(Benchmark {
        improved_fraction: evals.iter().filter(|e| e.post.cv < e.pre.cv).count() as f64 / n,
        mean_pre_cv: evals.iter().map(|e| e.pre.cv).sum::<f64>() / n,
        mean_post_cv: post.iter().sum::<f64>() / n,
        median_post_cv: median(&post),
        spearman_t0_t1: spearman(&t0, &t1)?,
        groups: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpn::{bpn_init, BpnConfig};
    use crate::conditioning::NormStats;
    use crate::esn::{esn_init, EsnConfig};
    use crate::harness::checkpoint::Provenance;
    use crate::rawproc::Image;
    use crate::synthcam::{synth_dataset, DatasetSpec};

    fn checkpoint(with_bpn: bool) -> Checkpoint {
        let esn_config = EsnConfig { depth: 2, base_channels: 4, leaky_slope: 0.2 };
        let bpn_config = BpnConfig { conv_channels: vec![4, 4], fc_widths: vec![4], input_extent: 8, ..Default::default() };
        Checkpoint {
            esn_params: esn_init(&esn_config, 1).unwrap(),
            esn_config,
            bpn: with_bpn.then(|| (bpn_config.clone(), bpn_init(&bpn_config, 2, -3.0).unwrap())),
            stats: NormStats::identity(),
            provenance: Provenance::default(),
        }
    }

    fn group() -> ImageGroup {
        let spec = DatasetSpec { groups: 1, height: 32, width: 32, seed: 3, ..Default::default() };
        synth_dataset(&spec).unwrap().remove(0)
    }

    #[test]
    fn missing_bpn_points_to_esn_only_mode() {
        let c = checkpoint(false);
        let g = group();
        let err = Enhancer::new(&c).evaluate(&g.frames()[0]).unwrap_err();
        assert!(err.to_string().contains("explicit t1"), "{err}");
        let img = Enhancer::new(&c).render(&g.frames()[0], 0.05).unwrap();
        assert_eq!(img.tensor().shape(), &[3, 32, 32]);
    }

    #[test]
    fn evaluate_is_deterministic_and_single_frame_sequence_matches() {
        let c = checkpoint(true);
        let e = Enhancer::new(&c);
        let g = group();
        let f = &g.frames()[3];
        let (a, ta) = e.evaluate(f).unwrap();
        let (b, tb) = e.evaluate(f).unwrap();
        assert_eq!((a.clone(), ta), (b, tb));
        assert!((ta - (-3.0f64).exp()).abs() < 1e-15);
        let seq = enhance_sequence(&e, std::slice::from_ref(f), FilterMode::Identity, 0.5).unwrap();
        assert_eq!(seq.frames, vec![a]);
        assert_eq!(seq.raw_t1, vec![ta]);
    }

    #[test]
    fn group_evaluation_shapes() {
        let c = checkpoint(true);
        let g = group();
        let ev = evaluate_group(&Enhancer::new(&c), 7, &g).unwrap();
        assert_eq!(ev.pre.group_id, 7);
        assert_eq!(ev.times.len(), evaluation_frames(&g).len());
        assert!(ev.times.len() >= 2);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
