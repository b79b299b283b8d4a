//! End-to-end behavior of a small trained pipeline: sequence mode, ESN-only
//! rendering, group consistency, determinism and the command line.

use std::process::Command;
use std::sync::OnceLock;

use lowlight::autodiff::Tape;
use lowlight::esn::loss_es;
use lowlight::harness::{
    enhance_sequence, evaluate_group, train_pipeline, Enhancer, TrainConfig, Trained,
};
use lowlight::metrics::{spearman, FilterMode};
use lowlight::rawproc::{raw_to_rgb_reference, ExifMeta, Image, RawFrame};
use lowlight::synthcam::{pair_at, synth_burst, synth_dataset, synth_scene, DatasetSpec, ImageGroup, SensorModel};

const SMALL: &str = "
esn.depth = 2
esn.base_channels = 8
patch_size = 32
esn_epochs = 8
bpn.conv_channels = 8,8
bpn.fc_widths = 8
bpn.input_extent = 16
bpn_epochs = 3
";

fn small_config() -> TrainConfig {
    let mut cfg = TrainConfig::desk();
    cfg.apply_text(SMALL).unwrap();
    cfg
}

fn trained() -> &'static (Vec<ImageGroup>, Trained) {
    static RUN: OnceLock<(Vec<ImageGroup>, Trained)> = OnceLock::new();
    RUN.get_or_init(|| {
        let spec = DatasetSpec { groups: 8, height: 128, width: 128, seed: 1, ..Default::default() };
        let groups = synth_dataset(&spec).unwrap();
        let run = train_pipeline(&groups, &small_config(), |_, _| {}).unwrap();
        (groups, run)
    })
}

fn burst(light: &[f64], noise_seed: u64) -> Vec<RawFrame> {
    let scene = synth_scene(5, 128, 128).unwrap();
    let meta = ExifMeta { iso: 1600.0, exposure_time: 1.0, wb_gains: [2.0, 1.0, 1.5, 1.0], aperture: 0.0 };
    let t = 0.1 * scene.median_irradiance().recip();
    synth_burst(&scene, &SensorModel::default(), &meta, t, light, noise_seed).unwrap()
}

fn range(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::MIN, f64::max) / v.iter().copied().fold(f64::MAX, f64::min)
}

#[test]
fn single_frame_sequence_matches_evaluate() {
    let (groups, run) = trained();
    let enhancer = Enhancer::new(&run.checkpoint);
    let frame = &groups[0].frames()[2];
    let (img, t1) = enhancer.evaluate(frame).unwrap();
    let seq = enhance_sequence(&enhancer, std::slice::from_ref(frame), FilterMode::Identity, 0.5).unwrap();
    assert_eq!(seq.raw_t1, vec![t1]);
    assert_eq!(seq.filtered_t1, vec![t1]);
    assert_eq!(seq.frames[0], img);
}

#[test]
fn smoothing_contracts_a_constant_scene_trace() {
    let (_, run) = trained();
    let enhancer = Enhancer::new(&run.checkpoint);
    let frames = burst(&[1.0; 12], 7);
    let plain = enhance_sequence(&enhancer, &frames, FilterMode::Identity, 0.7).unwrap();
    let smooth = enhance_sequence(&enhancer, &frames, FilterMode::Ema, 0.7).unwrap();
    assert_eq!(plain.raw_t1, smooth.raw_t1);
    assert!(range(&smooth.filtered_t1) <= range(&plain.filtered_t1));
}

#[test]
fn illumination_ramp_moves_the_time_trace() {
    let (_, run) = trained();
    let enhancer = Enhancer::new(&run.checkpoint);
    let light: Vec<f64> = (0..21).map(|k| 0.5 * 4f64.powf(k as f64 / 20.0)).collect();
    let seq = enhance_sequence(&enhancer, &burst(&light, 3), FilterMode::Identity, 0.5).unwrap();
    let rho = spearman(&light, &seq.raw_t1).unwrap();
    assert!(rho.abs() > 0.7, "Spearman {rho}");
}

#[test]
fn esn_only_rendering_at_guideline_time_fits_the_training_log() {
    let (groups, run) = trained();
    let last = run.esn_log.last().unwrap();
    let bound = last.train_loss + 3.0 * last.train_loss_std;
    let enhancer = Enhancer::new(&run.checkpoint);
    let g = &groups[run.split.train[0]];
    let pair = pair_at(g, g.eligible_inputs()[0]).unwrap();
    let est = enhancer.render(pair.input, pair.t_g).unwrap();
    let gt = raw_to_rgb_reference(pair.target);
    let tape = Tape::new();
    let loss = loss_es(&tape.constant(est.tensor().clone()), &tape.constant(gt.tensor().clone()), 0.15)
        .unwrap()
        .item()
        .unwrap();
    assert!(loss < bound, "L_ES {loss} vs bound {bound}");
}

#[test]
fn enhancement_lowers_group_brightness_spread() {
    let (groups, run) = trained();
    let enhancer = Enhancer::new(&run.checkpoint);
    for &g in &run.split.validation {
        let eval = evaluate_group(&enhancer, g, &groups[g]).unwrap();
        assert!(eval.post.cv < eval.pre.cv, "group {g}: {} -> {}", eval.pre.cv, eval.post.cv);
    }
}

#[test]
fn pipeline_is_deterministic() {
    let spec = DatasetSpec { groups: 3, height: 64, width: 64, seed: 4, ..Default::default() };
    let groups = synth_dataset(&spec).unwrap();
    let mut cfg = TrainConfig::desk();
    cfg.apply_text(
        "esn.depth=2\nesn.base_channels=4\nbpn.conv_channels=4,4\nbpn.fc_widths=4\nbpn.input_extent=8\n\
         patch_size=16\nesn_epochs=2\nbpn_epochs=2\nvalidation_fraction=0.34\nseed=9\n",
    )
    .unwrap();
    let a = train_pipeline(&groups, &cfg, |_, _| {}).unwrap();
    let b = train_pipeline(&groups, &cfg, |_, _| {}).unwrap();
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    assert_eq!(a.esn_log, b.esn_log);
    assert_eq!(a.bpn_log, b.bpn_log);
}

#[test]
fn every_subcommand_documents_its_flags() {
    let subcommands = [
        "gen-data",
        "fit-stats",
        "train-esn",
        "train-bpn",
        "enhance",
        "enhance-seq",
        "eval-metrics",
        "grad-check",
        "ablate-direct-bpn",
    ];
    for sub in subcommands {
        let out = Command::new(env!("CARGO_BIN_EXE_lowlight")).args([sub, "--help"]).output().unwrap();
        assert!(out.status.success(), "{sub} --help failed");
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in ["--config", "--seed", "--out"] {
            assert!(text.contains(flag), "{sub} --help lacks {flag}:\n{text}");
        }
    }
}
