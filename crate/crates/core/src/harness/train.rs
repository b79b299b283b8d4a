//! The two training phases and the direct-regression ablation.
//!
//! Every random draw comes from a ChaCha8 stream derived from the config seed,
//! and steps run strictly in sequence, so a seed and a dataset fix the result
//! bit for bit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, Provenance};
use super::config::TrainConfig;
use crate::autodiff::{adam_step, AdamState, ParamSet, Tape, Tensor, Var};
use crate::bpn::{aoi_weight_map, bpn_forward, bpn_init, gray_var, loss_bp, resize_nearest, BpnConfig};
use crate::conditioning::{
    build_iev, build_piev, fit_norm_stats, normalize_and_broadcast, Iev, NormStats, PIev,
};
use crate::error::{Error, Result};
use crate::esn::{esn_forward, esn_init, loss_es, EsnConfig};
use crate::rawproc::{pack_bayer, raw_to_rgb_reference, rgb_to_gray, Image, PackedRaw, RgbImage};
use crate::synthcam::{pair_at, random_crop, sample_pair, ImageGroup, Pair};

const STREAM_SPLIT: u64 = 1;
const STREAM_ESN: u64 = 2;
const STREAM_BPN: u64 = 3;
const STREAM_VALIDATION: u64 = 4;
const STREAM_DIRECT: u64 = 5;
/// Mixed into the config seed for the brightness network's initial weights.
const BPN_INIT_SALT: u64 = 0x6270_6e5f_696e_6974;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Group indices for training and validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Holds out `round(count * fraction)` whole groups, chosen by a seeded shuffle.
pub fn split_groups(count: usize, fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid("split_groups", format!("fraction {fraction}")));
    }
    let held = ((count as f64 * fraction).round() as usize).min(count.saturating_sub(1));
    if count == 0 {
        return Err(Error::Dataset("cannot split an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut stream(seed, STREAM_SPLIT));
    let mut validation = order[..held].to_vec();
    let mut train = order[held..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, validation })
}

/// Statistics over every training pair: each eligible input, packed, with its
/// vector at `t1 = t_g`.
pub fn fit_stats(groups: &[ImageGroup], train: &[usize]) -> Result<NormStats> {
    let mut samples = Vec::new();
    for &g in train {
        let group = groups
            .get(g)
            .ok_or_else(|| Error::Dataset(format!("group index {g} out of range")))?;
        for i in group.eligible_inputs() {
            let frame = &group.frames()[i];
            samples.push((pack_bayer(frame), build_iev(frame.meta(), group.t_g())?));
        }
    }
    fit_norm_stats(samples)
}

/// One exposure-shifting training example, already cropped.
#[derive(Clone, Debug)]
pub struct EsnSample {
    pub packed: PackedRaw,
    pub iev: Iev,
    pub target: RgbImage,
    /// Where it came from, for error messages.
    pub origin: String,
}

/// One brightness-phase example: a crop, its partial vector, the target crop
/// that defines the weight map, and the ground-truth time for the ablation.
#[derive(Clone, Debug)]
pub struct BpnSample {
    pub packed: PackedRaw,
    pub piev: PIev,
    pub target: RgbImage,
    pub t_g: f64,
    pub origin: String,
}

fn group_at(groups: &[ImageGroup], g: usize) -> Result<&ImageGroup> {
    groups
        .get(g)
        .ok_or_else(|| Error::Dataset(format!("group index {g} out of range ({} groups)", groups.len())))
}

/// Draws a pair from group `g` and crops it to `size` packed pixels.
pub fn draw_esn_sample(groups: &[ImageGroup], g: usize, size: usize, rng: &mut impl Rng) -> Result<EsnSample> {
    esn_sample(g, sample_pair(group_at(groups, g)?, rng)?, size, rng)
}

fn esn_sample(g: usize, pair: Pair<'_>, size: usize, rng: &mut impl Rng) -> Result<EsnSample> {
    let (packed, target, (oy, ox)) =
        random_crop(&pack_bayer(pair.input), &raw_to_rgb_reference(pair.target), size, rng)?;
    Ok(EsnSample {
        packed,
        iev: build_iev(pair.input.meta(), pair.t_g)?,
        target,
        origin: format!("group {g}, frame {}, crop at ({oy}, {ox})", pair.input_index),
    })
}

/// Largest crop no bigger than `want` that fits the packed frame and the ESN.
fn fitting_crop(want: usize, packed: &PackedRaw, multiple: usize) -> Result<usize> {
    let side = want.min(packed.height()).min(packed.width()) / multiple * multiple;
    if side == 0 {
        return Err(Error::Dataset(format!(
            "packed frame {}x{} is smaller than the ESN's extent multiple {multiple}",
            packed.height(),
            packed.width()
        )));
    }
    Ok(side)
}

/// Draws a pair from group `g` and crops `2 * patch_size` packed pixels, or
/// the largest ESN-compatible square that fits.
pub fn draw_bpn_sample(
    groups: &[ImageGroup],
    g: usize,
    patch_size: usize,
    esn: &EsnConfig,
    rng: &mut impl Rng,
) -> Result<BpnSample> {
    bpn_sample(g, sample_pair(group_at(groups, g)?, rng)?, patch_size, esn, rng)
}

fn bpn_sample(g: usize, pair: Pair<'_>, patch_size: usize, esn: &EsnConfig, rng: &mut impl Rng) -> Result<BpnSample> {
    let full = pack_bayer(pair.input);
    let size = fitting_crop(2 * patch_size, &full, esn.extent_multiple())?;
    let (packed, target, (oy, ox)) = random_crop(&full, &raw_to_rgb_reference(pair.target), size, rng)?;
    Ok(BpnSample {
        packed,
        piev: build_piev(pair.input.meta())?,
        target,
        t_g: pair.t_g,
        origin: format!("group {g}, frame {}, crop at ({oy}, {ox})", pair.input_index),
    })
}

/// Normalized packed frame and conditioning planes as tape constants.
pub(crate) fn esn_inputs<'t>(
    tape: &'t Tape,
    stats: &NormStats,
    packed: &PackedRaw,
    iev: &Iev,
) -> Result<(Var<'t>, Var<'t>)> {
    let x = tape.constant(stats.normalize_packed(packed));
    let planes = normalize_and_broadcast(iev, stats, packed.height(), packed.width())?;
    Ok((x, tape.constant(planes)))
}

/// Predicted `ln t1` for a packed frame of any size.
pub(crate) fn bpn_predict<'t>(
    tape: &'t Tape,
    cfg: &BpnConfig,
    stats: &NormStats,
    packed: &PackedRaw,
    piev: &PIev,
    params: &ParamSet,
    vars: &[Var<'t>],
) -> Result<Var<'t>> {
    let e = cfg.input_extent;
    let small = if (packed.height(), packed.width()) == (e, e) {
        packed.clone()
    } else {
        resize_nearest(packed, e)?
    };
    let x = tape.constant(stats.normalize_packed(&small));
    let planes = tape.constant(normalize_and_broadcast(piev, stats, e, e)?);
    bpn_forward(cfg, &x, &planes, params, vars)
}

/// Adds the epoch to a non-finite loss report.
fn with_epoch(phase: &str, epoch: usize) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::NonFinite { detail, .. } => Error::Training(format!("{phase}, epoch {epoch}: {detail}; aborting")),
        other => other,
    }
}

/// Adam over the exposure-shifting network, one example per step.
#[derive(Clone, Debug)]
pub struct EsnTrainer {
    config: EsnConfig,
    stats: NormStats,
    alpha: f64,
    params: ParamSet,
    adam: AdamState,
}

impl EsnTrainer {
    pub fn new(config: EsnConfig, stats: NormStats, alpha: f64, params: ParamSet) -> Result<Self> {
        params.check_layout(&config.param_layout())?;
        stats.validate()?;
        Ok(EsnTrainer {
            adam: AdamState::new(params.tensors()),
            config,
            stats,
            alpha,
            params,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    fn forward<'t>(&self, tape: &'t Tape, sample: &EsnSample, vars: &[Var<'t>]) -> Result<Var<'t>> {
        let (x, planes) = esn_inputs(tape, &self.stats, &sample.packed, &sample.iev)?;
        let est = esn_forward(&self.config, &x, &planes, &self.params, vars)?;
        let gt = tape.constant(sample.target.tensor().clone());
        loss_es(&est, &gt, self.alpha)
    }

    /// Loss without updating anything.
    pub fn loss(&self, sample: &EsnSample) -> Result<f64> {
        let tape = Tape::new();
        let vars = self.params.register(&tape, false);
        self.forward(&tape, sample, &vars)?.item()
    }

    /// One Adam step; returns the loss before the update.
    pub fn step(&mut self, sample: &EsnSample, learning_rate: f64) -> Result<f64> {
        let tape = Tape::new();
        let vars = self.params.register(&tape, true);
        let loss = self.forward(&tape, sample, &vars)?;
        let value = loss.item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite { context: "train_esn", detail: format!("loss {value} on {}", sample.origin) });
        }
        let grads = tape.backward(&loss)?;
        let g: Vec<Tensor> = vars.iter().map(|v| grads.wrt(v)).collect();
        adam_step(self.params.tensors_mut(), &g, &mut self.adam, learning_rate)?;
        Ok(value)
    }
}

/// What a brightness-phase step minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BpnObjective {
    /// The area-of-interest loss through the frozen exposure-shifting network.
    Brightness,
    /// Squared error between predicted and ground-truth `ln t` (ablation only).
    DirectRegression,
}

/// Adam over the brightness network. The exposure-shifting parameters are
/// borrowed immutably and recorded as tape constants, so no step can touch them.
pub struct BpnTrainer<'a> {
    esn_config: &'a EsnConfig,
    esn_params: &'a ParamSet,
    config: BpnConfig,
    stats: NormStats,
    objective: BpnObjective,
    params: ParamSet,
    adam: AdamState,
}

/// Loss and prediction of one brightness-phase evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpnOutcome {
    pub loss: f64,
    pub log_t1: f64,
}

impl<'a> BpnTrainer<'a> {
    pub fn new(
        esn_config: &'a EsnConfig,
        esn_params: &'a ParamSet,
        config: BpnConfig,
        stats: NormStats,
        objective: BpnObjective,
        params: ParamSet,
    ) -> Result<Self> {
        esn_params.check_layout(&esn_config.param_layout())?;
        params.check_layout(&config.param_layout())?;
        stats.validate()?;
        Ok(BpnTrainer {
            adam: AdamState::new(params.tensors()),
            esn_config,
            esn_params,
            config,
            stats,
            objective,
            params,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    fn forward<'t>(&self, tape: &'t Tape, sample: &BpnSample, vars: &[Var<'t>]) -> Result<(Var<'t>, Var<'t>)> {
        let log_t1 = bpn_predict(tape, &self.config, &self.stats, &sample.packed, &sample.piev, &self.params, vars)?;
        let loss = match self.objective {
            BpnObjective::DirectRegression => log_t1.add_scalar(-sample.t_g.ln())?.square(),
            BpnObjective::Brightness => {
                let (h, w) = (sample.packed.height(), sample.packed.width());
                let x = tape.constant(self.stats.normalize_packed(&sample.packed));
                let partial = tape.constant(normalize_and_broadcast(&sample.piev, &self.stats, h, w)?);
                let planes = crate::autodiff::concat_channels(&[&partial, &self.stats.t1_plane(&log_t1, h, w)?])?;
                let esn_vars = self.esn_params.register(tape, false);
                let est = esn_forward(self.esn_config, &x, &planes, self.esn_params, &esn_vars)?;
                let weights = aoi_weight_map(&rgb_to_gray(&sample.target), self.config.mu_w, self.config.sigma_w_sq)?;
                loss_bp(&gray_var(&est)?, &weights, self.config.mu_w, self.config.sigma_v_sq)?
            }
        };
        Ok((loss, log_t1))
    }

    pub fn evaluate(&self, sample: &BpnSample) -> Result<BpnOutcome> {
        let tape = Tape::new();
        let vars = self.params.register(&tape, false);
        let (loss, log_t1) = self.forward(&tape, sample, &vars)?;
        Ok(BpnOutcome { loss: loss.item()?, log_t1: log_t1.item()? })
    }

    pub fn step(&mut self, sample: &BpnSample, learning_rate: f64) -> Result<BpnOutcome> {
        let tape = Tape::new();
        let vars = self.params.register(&tape, true);
        let (loss, log_t1) = self.forward(&tape, sample, &vars)?;
        let outcome = BpnOutcome { loss: loss.item()?, log_t1: log_t1.item()? };
        if !outcome.loss.is_finite() {
            return Err(Error::NonFinite {
                context: "train_bpn",
                detail: format!("loss {} on {}", outcome.loss, sample.origin),
            });
        }
        let grads = tape.backward(&loss)?;
        let g: Vec<Tensor> = vars.iter().map(|v| grads.wrt(v)).collect();
        adam_step(self.params.tensors_mut(), &g, &mut self.adam, learning_rate)?;
        Ok(outcome)
    }
}

/// Summary of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// Zero-based.
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    /// Population standard deviation of the per-step losses.
    pub train_loss_std: f64,
    /// Mean loss on the fixed validation samples, if any.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    pub fn final_train_loss(&self) -> f64 {
        self.last().map_or(f64::NAN, |e| e.train_loss)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_split(groups: &[ImageGroup], split: &Split) -> Result<()> {
    if split.train.is_empty() {
        return Err(Error::Dataset("training needs at least one group".into()));
    }
    if let Some(g) = split.train.iter().chain(&split.validation).find(|&&g| g >= groups.len()) {
        return Err(Error::Dataset(format!("group index {g} out of range ({} groups)", groups.len())));
    }
    Ok(())
}

fn validation_rng(cfg: &TrainConfig) -> ChaCha8Rng {
    stream(cfg.seed, STREAM_VALIDATION)
}

/// Fixed validation crops: `val_crops_per_pair` for every input frame of
/// every held-out group.
fn validation_set<T>(
    groups: &[ImageGroup],
    split: &Split,
    cfg: &TrainConfig,
    mut sample: impl FnMut(usize, Pair<'_>, &mut ChaCha8Rng) -> Result<T>,
) -> Result<Vec<T>> {
    let mut rng = validation_rng(cfg);
    let mut out = Vec::new();
    for &g in &split.validation {
        let group = group_at(groups, g)?;
        for i in group.eligible_inputs() {
            for _ in 0..cfg.val_crops_per_pair {
                out.push(sample(g, pair_at(group, i)?, &mut rng)?);
            }
        }
    }
    Ok(out)
}

pub fn esn_validation_set(groups: &[ImageGroup], split: &Split, cfg: &TrainConfig) -> Result<Vec<EsnSample>> {
    validation_set(groups, split, cfg, |g, pair, rng| esn_sample(g, pair, cfg.patch_size, rng))
}

pub fn bpn_validation_set(groups: &[ImageGroup], split: &Split, cfg: &TrainConfig) -> Result<Vec<BpnSample>> {
    validation_set(groups, split, cfg, |g, pair, rng| bpn_sample(g, pair, cfg.patch_size, &cfg.esn, rng))
}

fn mean_of(values: impl Iterator<Item = Result<f64>>) -> Result<Option<f64>> {
    let v = values.collect::<Result<Vec<f64>>>()?;
    Ok((!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64))
}

/// Trains the exposure-shifting network from a fresh initialization with
/// `t1 = t_g`, calling `on_epoch` after each epoch.
pub fn train_esn(
    groups: &[ImageGroup],
    split: &Split,
    stats: &NormStats,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ParamSet, TrainLog)> {
    cfg.validate()?;
    check_split(groups, split)?;
    let validation = esn_validation_set(groups, split, cfg)?;
    let mut trainer = EsnTrainer::new(cfg.esn.clone(), stats.clone(), cfg.alpha, esn_init(&cfg.esn, cfg.seed)?)?;
    let mut rng = stream(cfg.seed, STREAM_ESN);
    let mut log = TrainLog::default();
    let mut order = split.train.clone();
    for epoch in 0..cfg.esn_epochs {
        let lr = cfg.learning_rate(epoch, cfg.esn_epochs);
        order.shuffle(&mut rng);
        let mut losses = Vec::with_capacity(order.len() * cfg.pairs_per_group);
        for &g in &order {
            for _ in 0..cfg.pairs_per_group {
                let sample = draw_esn_sample(groups, g, cfg.patch_size, &mut rng)?;
                let loss = trainer.step(&sample, lr).map_err(with_epoch("train_esn", epoch))?;
                losses.push(loss);
            }
        }
        let (train_loss, train_loss_std) = mean_std(&losses);
        let val_loss = mean_of(validation.iter().map(|s| trainer.loss(s)))?;
        let entry = EpochLog { epoch, learning_rate: lr, train_loss, train_loss_std, val_loss };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok((trainer.into_params(), log))
}

/// Mean `ln t_g` over the training groups: the untrained network's output.
pub fn mean_log_tg(groups: &[ImageGroup], train: &[usize]) -> Result<f64> {
    let logs = train
        .iter()
        .map(|&g| group_at(groups, g).map(|grp| grp.t_g().ln()))
        .collect::<Result<Vec<_>>>()?;
    if logs.is_empty() {
        return Err(Error::Dataset("no training groups".into()));
    }
    Ok(logs.iter().sum::<f64>() / logs.len() as f64)
}

fn run_bpn_phase(
    groups: &[ImageGroup],
    split: &Split,
    esn_config: &EsnConfig,
    esn_params: &ParamSet,
    stats: &NormStats,
    cfg: &TrainConfig,
    objective: BpnObjective,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<(ParamSet, TrainLog)> {
    cfg.validate()?;
    check_split(groups, split)?;
    let phase = match objective {
        BpnObjective::Brightness => "train_bpn",
        BpnObjective::DirectRegression => "ablate_direct_bpn",
    };
    let init = bpn_init(&cfg.bpn, cfg.seed ^ BPN_INIT_SALT, mean_log_tg(groups, &split.train)?)?;
    let mut trainer = BpnTrainer::new(esn_config, esn_params, cfg.bpn.clone(), stats.clone(), objective, init)?;
    let validation = bpn_validation_set(groups, split, cfg)?;
    let mut rng = stream(cfg.seed, if objective == BpnObjective::Brightness { STREAM_BPN } else { STREAM_DIRECT });
    let mut log = TrainLog::default();
    let mut order = split.train.clone();
    for epoch in 0..cfg.bpn_epochs {
        let lr = cfg.learning_rate(epoch, cfg.bpn_epochs);
        order.shuffle(&mut rng);
        let mut losses = Vec::with_capacity(order.len() * cfg.pairs_per_group);
        for &g in &order {
            for _ in 0..cfg.pairs_per_group {
                let sample = draw_bpn_sample(groups, g, cfg.patch_size, esn_config, &mut rng)?;
                let outcome = trainer.step(&sample, lr).map_err(with_epoch(phase, epoch))?;
                losses.push(outcome.loss);
            }
        }
        let (train_loss, train_loss_std) = mean_std(&losses);
        let val_loss = mean_of(validation.iter().map(|s| trainer.evaluate(s).map(|o| o.loss)))?;
        let entry = EpochLog { epoch, learning_rate: lr, train_loss, train_loss_std, val_loss };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok((trainer.into_params(), log))
}

/// Trains the brightness network through the frozen exposure-shifting
/// network. The frozen parameters' digest is compared before and after; any
/// change is an internal invariant failure.
pub fn train_bpn(
    groups: &[ImageGroup],
    split: &Split,
    esn_config: &EsnConfig,
    esn_params: &ParamSet,
    stats: &NormStats,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ParamSet, TrainLog)> {
    let before = esn_params.digest();
    let out = run_bpn_phase(
        groups,
        split,
        esn_config,
        esn_params,
        stats,
        cfg,
        BpnObjective::Brightness,
        &mut on_epoch,
    )?;
    if esn_params.digest() != before {
        return Err(Error::Training(
            "internal invariant violated: frozen exposure-shifting parameters changed".into(),
        ));
    }
    Ok(out)
}

/// Ablation: the brightness network regressed directly onto `ln t_g`.
///
/// The exposure-shifting network is only needed afterwards, to measure the
/// group consistency the predicted times produce.
pub fn train_bpn_direct(
    groups: &[ImageGroup],
    split: &Split,
    esn_config: &EsnConfig,
    esn_params: &ParamSet,
    stats: &NormStats,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ParamSet, TrainLog)> {
    run_bpn_phase(
        groups,
        split,
        esn_config,
        esn_params,
        stats,
        cfg,
        BpnObjective::DirectRegression,
        &mut on_epoch,
    )
}

/// Which training phase an [`EpochLog`] comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    ExposureShifting,
    Brightness,
}

/// Output of [`train_pipeline`].
#[derive(Clone, Debug)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub split: Split,
    pub esn_log: TrainLog,
    pub bpn_log: TrainLog,
}

/// Split, statistics, the exposure-shifting phase, then the brightness phase
/// through the frozen result. The provenance's data seed is left at 0 for the
/// caller to fill in.
pub fn train_pipeline(
    groups: &[ImageGroup],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(Phase, &EpochLog),
) -> Result<Trained> {
    let split = split_groups(groups.len(), cfg.validation_fraction, cfg.seed)?;
    let stats = fit_stats(groups, &split.train)?;
    let (esn_params, esn_log) = train_esn(groups, &split, &stats, cfg, |e| on_epoch(Phase::ExposureShifting, e))?;
    let (bpn_params, bpn_log) =
        train_bpn(groups, &split, &cfg.esn, &esn_params, &stats, cfg, |e| on_epoch(Phase::Brightness, e))?;
    let checkpoint = Checkpoint {
        esn_config: cfg.esn.clone(),
        esn_params,
        bpn: Some((cfg.bpn.clone(), bpn_params)),
        stats,
        provenance: Provenance {
            data_seed: 0,
            train_seed: cfg.seed,
            esn_epochs: cfg.esn_epochs as u32,
            bpn_epochs: cfg.bpn_epochs as u32,
            esn_final_loss: esn_log.final_train_loss(),
            bpn_final_loss: bpn_log.final_train_loss(),
        },
    };
    Ok(Trained { checkpoint, split, esn_log, bpn_log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthcam::{synth_dataset, DatasetSpec};

    fn tiny() -> (Vec<ImageGroup>, TrainConfig) {
        let spec = DatasetSpec { groups: 3, height: 64, width: 64, seed: 11, ..Default::default() };
        let cfg = TrainConfig {
            esn: EsnConfig { depth: 2, base_channels: 4, leaky_slope: 0.2 },
            bpn: BpnConfig { conv_channels: vec![4, 4], fc_widths: vec![4], input_extent: 8, ..Default::default() },
            esn_epochs: 2,
            bpn_epochs: 2,
            patch_size: 16,
            validation_fraction: 0.34,
            ..Default::default()
        };
        (synth_dataset(&spec).unwrap(), cfg)
    }

    #[test]
    fn split_is_by_group_and_seeded() {
        let s = split_groups(48, 0.2, 0).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (38, 10));
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..48).collect::<Vec<_>>());
        assert_eq!(s, split_groups(48, 0.2, 0).unwrap());
        assert_ne!(s, split_groups(48, 0.2, 1).unwrap());
        assert_eq!(split_groups(1, 0.5, 0).unwrap().train, vec![0]);
        assert!(split_groups(4, 1.0, 0).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let (groups, cfg) = tiny();
        let split = split_groups(groups.len(), cfg.validation_fraction, 0).unwrap();
        let stats = fit_stats(&groups, &split.train).unwrap();
        let init = esn_init(&cfg.esn, 4).unwrap();
        let mut esn = EsnTrainer::new(cfg.esn.clone(), stats.clone(), cfg.alpha, init.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sample = draw_esn_sample(&groups, split.train[0], 16, &mut rng).unwrap();
        esn.step(&sample, 0.0).unwrap();
        assert_eq!(esn.params(), &init);
        esn.step(&sample, 1e-3).unwrap();
        assert_ne!(esn.params(), &init);

        let bpn0 = bpn_init(&cfg.bpn, 1, -2.0).unwrap();
        let mut bpn =
            BpnTrainer::new(&cfg.esn, &init, cfg.bpn.clone(), stats, BpnObjective::Brightness, bpn0.clone()).unwrap();
        let bs = draw_bpn_sample(&groups, split.train[0], 16, &cfg.esn, &mut rng).unwrap();
        bpn.step(&bs, 0.0).unwrap();
        assert_eq!(bpn.params(), &bpn0);
    }

    #[test]
    fn training_is_deterministic_and_freezes_esn() {
        let (groups, cfg) = tiny();
        let split = split_groups(groups.len(), cfg.validation_fraction, cfg.seed).unwrap();
        let stats = fit_stats(&groups, &split.train).unwrap();
        let (a, log_a) = train_esn(&groups, &split, &stats, &cfg, |_| {}).unwrap();
        let (b, log_b) = train_esn(&groups, &split, &stats, &cfg, |_| {}).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(log_a, log_b);
        assert_eq!(log_a.epochs.len(), 2);
        assert!(log_a.epochs.iter().all(|e| e.val_loss.is_some()));
        let digest = a.digest();
        let (p, log) = train_bpn(&groups, &split, &cfg.esn, &a, &stats, &cfg, |_| {}).unwrap();
        assert_eq!(a.digest(), digest);
        assert!(p.all_finite());
        assert!(log.final_train_loss() < 0.0);
        let (_, direct) = train_bpn_direct(&groups, &split, &cfg.esn, &a, &stats, &cfg, |_| {}).unwrap();
        assert!(direct.final_train_loss() >= 0.0);
    }
}
