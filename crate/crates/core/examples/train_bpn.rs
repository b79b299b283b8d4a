//! Both training phases on a small synthetic set, then the group brightness
//! benchmark on independently generated groups.

use lowlight::harness::{
    benchmark, fit_stats, split_groups, train_bpn, train_esn, Checkpoint, Enhancer, Provenance, TrainConfig,
};
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
    let split = split_groups(train.len(), cfg.validation_fraction, cfg.seed)?;
    let stats = fit_stats(&train, &split.train)?;
    let (esn_params, _) = train_esn(&train, &split, &stats, &cfg, |_| {})?;

    let before = esn_params.digest();
    let (bpn_params, log) = train_bpn(&train, &split, &cfg.esn, &esn_params, &stats, &cfg, |e| {
        println!("bpn epoch {}  L_BP train {:.3e}  val {:.3e}", e.epoch + 1, e.train_loss, e.val_loss.unwrap_or(f64::NAN))
    })?;
    assert_eq!(before, esn_params.digest(), "the exposure-shifting network must stay frozen");
    println!("{} epochs; exposure-shifting digest unchanged", log.epochs.len());

    let ckpt = Checkpoint {
        esn_config: cfg.esn.clone(),
        esn_params,
        bpn: Some((cfg.bpn.clone(), bpn_params)),
        stats,
        provenance: Provenance::default(),
    };
    let bench = benchmark(&Enhancer::new(&ckpt), &test)?;
    for g in &bench.groups {
        let times: Vec<String> = g.times.iter().map(|(t0, t1)| format!("{t0:.4}->{t1:.4}")).collect();
        println!("group {}: CV {:.3} -> {:.3}  [{}]", g.pre.group_id, g.pre.cv, g.post.cv, times.join(" "));
    }
    println!(
        "improved {:.0}% of groups, median post CV {:.3}, Spearman(t0, t1) {:.3}",
        100.0 * bench.improved_fraction,
        bench.median_post_cv,
        bench.spearman_t0_t1
    );
    Ok(())
}

fn main() {
    run().unwrap();
}
