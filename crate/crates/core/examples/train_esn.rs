//! Trains a small exposure-shifting network and renders a held-out input at
//! its group's ground-truth time.
//!
//! Pass `--desk` for the full desk-scale setting (48 groups of 320x320,
//! depth 3, 40 epochs); it takes several minutes.

use lowlight::harness::{fit_stats, split_groups, train_esn, Checkpoint, Enhancer, Provenance, TrainConfig};
use lowlight::rawproc::{brightness, raw_to_rgb_reference};
use lowlight::synthcam::{synth_dataset, DatasetSpec};

const SMALL: &str = "
esn.depth = 2
esn.base_channels = 8
patch_size = 32
esn_epochs = 8
";

pub fn run(desk: bool) -> lowlight::Result<()> {
    let mut cfg = TrainConfig::desk();
    let spec = if desk {
        DatasetSpec { groups: 48, seed: 1, ..Default::default() }
    } else {
        cfg.apply_text(SMALL)?;
        DatasetSpec { groups: 10, height: 128, width: 128, seed: 1, ..Default::default() }
    };
    let groups = synth_dataset(&spec)?;
    let split = split_groups(groups.len(), cfg.validation_fraction, cfg.seed)?;
    let stats = fit_stats(&groups, &split.train)?;
    let (params, log) = train_esn(&groups, &split, &stats, &cfg, |e| {
        println!(
            "epoch {:>2}  lr {:.2e}  train {:.4} (sd {:.4})  val {:.4}",
            e.epoch + 1,
            e.learning_rate,
            e.train_loss,
            e.train_loss_std,
            e.val_loss.unwrap_or(f64::NAN)
        )
    })?;
    let first = log.epochs[0].val_loss.unwrap_or(f64::NAN);
    let last = log.last().and_then(|e| e.val_loss).unwrap_or(f64::NAN);
    println!("held-out loss {first:.4} -> {last:.4} ({:.0}%)", 100.0 * last / first);

    let ckpt = Checkpoint { esn_config: cfg.esn.clone(), esn_params: params, bpn: None, stats, provenance: Provenance::default() };
    let group = &groups[split.validation[0]];
    let enhancer = Enhancer::new(&ckpt);
    for k in group.eligible_inputs() {
        let frame = &group.frames()[k];
        let out = enhancer.render(frame, group.t_g())?;
        println!(
            "frame {k}: input brightness {:.3} -> {:.3} at t_g (ground truth {:.3})",
            brightness(&raw_to_rgb_reference(frame)),
            brightness(&out),
            brightness(&raw_to_rgb_reference(group.gt_frame()))
        );
    }
    Ok(())
}

fn main() {
    run(std::env::args().any(|a| a == "--desk")).unwrap();
}
