//! Generates a few multi-exposure groups, prints each sweep with its
//! ground-truth pick, and round-trips the set through the on-disk layout.

use lowlight::rawproc::{brightness, raw_to_rgb_reference};
use lowlight::synthcam::{read_dataset, synth_dataset, write_dataset, DatasetSpec};

pub fn run() -> lowlight::Result<()> {
    let spec = DatasetSpec { groups: 3, height: 96, width: 96, seed: 11, ..Default::default() };
    let groups = synth_dataset(&spec)?;
    for (id, g) in groups.iter().enumerate() {
        println!("group {id}: ISO {}, ground truth frame {}", g.frames()[0].meta().iso, g.gt_index());
        for (k, f) in g.frames().iter().enumerate() {
            let tag = if k == g.gt_index() {
                "gt"
            } else if g.invalid().contains(&k) {
                "invalid"
            } else if g.eligible_inputs().contains(&k) {
                "input"
            } else {
                ""
            };
            println!(
                "  frame {k}: t = {:.5} s  brightness {:.3}  {tag}",
                f.meta().exposure_time,
                brightness(&raw_to_rgb_reference(f))
            );
        }
    }

    let dir = std::env::temp_dir().join(format!("lowlight-groups-{}", std::process::id()));
    write_dataset(&dir, &groups)?;
    let back = read_dataset(&dir)?;
    assert_eq!(back, groups);
    println!("wrote and re-read {} groups under {}", back.len(), dir.display());
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

fn main() {
    run().unwrap();
}
