//! A 21-frame burst under slowly changing light, enhanced frame by frame and
//! with the exponential moving average on ln t1.

use lowlight::harness::{enhance_sequence, train_pipeline, Enhancer, TrainConfig};
use lowlight::metrics::{spearman, FilterMode};
use lowlight::rawproc::ExifMeta;
use lowlight::synthcam::{synth_burst, synth_dataset, synth_scene, DatasetSpec, SensorModel};

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

fn range(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::MIN, f64::max) / v.iter().copied().fold(f64::MAX, f64::min)
}

pub fn run() -> lowlight::Result<()> {
    let mut cfg = TrainConfig::desk();
    cfg.apply_text(SMALL)?;
    let groups = synth_dataset(&DatasetSpec { groups: 8, height: 128, width: 128, seed: 1, ..Default::default() })?;
    let ckpt = train_pipeline(&groups, &cfg, |_, _| {})?.checkpoint;

    // light rises fourfold over the burst; the exposure time stays fixed
    let scene = synth_scene(5, 128, 128)?;
    let meta = ExifMeta { iso: 1600.0, exposure_time: 1.0, wb_gains: [2.0, 1.0, 1.5, 1.0], aperture: 0.0 };
    let t = 0.1 * scene.median_irradiance().recip();
    let light: Vec<f64> = (0..21).map(|k| 0.5 * 4f64.powf(k as f64 / 20.0)).collect();
    let frames = synth_burst(&scene, &SensorModel::default(), &meta, t, &light, 3)?;

    let enhancer = Enhancer::new(&ckpt);
    let plain = enhance_sequence(&enhancer, &frames, FilterMode::Identity, 0.5)?;
    let smooth = enhance_sequence(&enhancer, &frames, FilterMode::Ema, 0.7)?;
    for k in 0..frames.len() {
        println!("frame {k:>2}: light x{:.2}  t1 {:.5}  filtered {:.5}", light[k], plain.raw_t1[k], smooth.filtered_t1[k]);
    }
    println!(
        "t1 range {:.3} unfiltered, {:.3} filtered; Spearman(light, t1) {:.3}",
        range(&plain.raw_t1),
        range(&smooth.filtered_t1),
        spearman(&light, &plain.raw_t1)?
    );
    Ok(())
}

fn main() {
    run().unwrap();
}
