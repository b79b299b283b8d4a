//! Single-frame inference: the brightness network picks t1, the
//! exposure-shifting network renders at it. Also shows ESN-only rendering
//! at chosen times and what a checkpoint without a brightness network says.
//!
//! Usage: `enhance_frame [checkpoint]`. Without a checkpoint a small one is
//! trained first.

use lowlight::harness::output::write_ppm;
use lowlight::harness::{train_pipeline, Checkpoint, Enhancer, TrainConfig};
use lowlight::rawproc::{brightness, raw_to_rgb_reference};
use lowlight::synthcam::{synth_dataset, DatasetSpec};

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

pub fn run(checkpoint: Option<String>) -> lowlight::Result<()> {
    let ckpt = match checkpoint {
        Some(path) => Checkpoint::load(path)?,
        None => {
            let mut cfg = TrainConfig::desk();
            cfg.apply_text(SMALL)?;
            let groups = synth_dataset(&DatasetSpec { groups: 8, height: 128, width: 128, seed: 1, ..Default::default() })?;
            train_pipeline(&groups, &cfg, |_, _| {})?.checkpoint
        }
    };
    let size = if ckpt.esn_config.depth > 2 { 320 } else { 128 };
    let group = synth_dataset(&DatasetSpec { groups: 1, height: size, width: size, seed: 77, ..Default::default() })?.remove(0);
    let frame = &group.frames()[group.eligible_inputs()[1]];
    let enhancer = Enhancer::new(&ckpt);

    let (image, t1) = enhancer.evaluate(frame)?;
    println!(
        "t0 = {:.5} s, predicted t1 = {t1:.5} s, brightness {:.3} -> {:.3}",
        frame.meta().exposure_time,
        brightness(&raw_to_rgb_reference(frame)),
        brightness(&image)
    );
    let again = enhancer.evaluate(frame)?;
    assert_eq!(again, (image.clone(), t1));
    let out = std::env::temp_dir().join("lowlight-enhanced.ppm");
    write_ppm(&out, &image)?;
    println!("written to {}", out.display());

    for scale in [0.25, 1.0, 4.0] {
        let t = t1 * scale;
        println!("ESN-only at t1 = {t:.5} s: brightness {:.3}", brightness(&enhancer.render(frame, t)?));
    }

    let esn_only = Checkpoint { bpn: None, ..ckpt.clone() };
    match Enhancer::new(&esn_only).evaluate(frame) {
        Err(e) => println!("without a brightness network: {e}"),
        Ok(_) => unreachable!("an ESN-only checkpoint cannot predict t1"),
    }
    Ok(())
}

fn main() {
    run(std::env::args().nth(1)).unwrap();
}
