//! Ablation: the brightness network trained by regressing ln t_g directly,
//! against the same network trained with the area-of-interest loss.

use lowlight::harness::{benchmark, train_bpn_direct, train_pipeline, Checkpoint, Enhancer, TrainConfig};
use lowlight::synthcam::{synth_dataset, DatasetSpec};

const SMALL: &str = "
esn.depth = 2
esn.base_channels = 8
patch_size = 32
esn_epochs = 8
bpn.conv_channels = 8,8
bpn.fc_widths = 8
bpn.input_extent = 16
bpn_epochs = 4
";

pub fn run() -> lowlight::Result<()> {
    let mut cfg = TrainConfig::desk();
    cfg.apply_text(SMALL)?;
    let data = |groups, seed| synth_dataset(&DatasetSpec { groups, height: 128, width: 128, seed, ..Default::default() });
    let (train, test) = (data(10, 1)?, data(4, 2)?);
    let trained = train_pipeline(&train, &cfg, |_, _| {})?;
    let ckpt = &trained.checkpoint;
    let (direct_params, log) = train_bpn_direct(
        &train,
        &trained.split,
        &ckpt.esn_config,
        &ckpt.esn_params,
        &ckpt.stats,
        &cfg,
        |_| {},
    )?;
    println!("direct regression: final squared ln-time error {:.4}", log.final_train_loss());
    let direct = Checkpoint { bpn: Some((cfg.bpn.clone(), direct_params)), ..ckpt.clone() };

    println!("model              improved  mean CV  median CV");
    for (name, c) in [("brightness loss", ckpt), ("direct regression", &direct)] {
        let b = benchmark(&Enhancer::new(c), &test)?;
        println!("{name:<18} {:>7.0}%  {:>7.3}  {:>9.3}", 100.0 * b.improved_fraction, b.mean_post_cv, b.median_post_cv);
    }
    Ok(())
}

fn main() {
    run().unwrap();
}
