//! No-reference metrics on one synthetic group: brightness consistency,
//! Laplacian noise estimate and histogram entropy per frame.

use lowlight::metrics::{entropy, group_brightness_stats, noise_variance, t1_filter, FilterMode};
use lowlight::rawproc::{brightness, raw_to_rgb_reference, rgb_to_gray, RgbImage};
use lowlight::synthcam::{synth_dataset, DatasetSpec};

pub fn run() -> lowlight::Result<()> {
    let group = synth_dataset(&DatasetSpec { groups: 1, height: 128, width: 128, seed: 3, ..Default::default() })?.remove(0);
    let renders: Vec<RgbImage> = group.frames().iter().map(raw_to_rgb_reference).collect();
    println!("frame  t (s)     brightness  noise sd  entropy (bits)");
    for (k, (f, img)) in group.frames().iter().zip(&renders).enumerate() {
        println!(
            "{k:>5}  {:.5}  {:>10.3}  {:>8.4}  {:>6.3}",
            f.meta().exposure_time,
            brightness(img),
            noise_variance(&rgb_to_gray(img))?,
            entropy(img)
        );
    }
    let stats = group_brightness_stats(0, &renders)?;
    println!("whole sweep: mean brightness {:.3}, CV {:.3}", stats.mu, stats.cv);

    let times = [0.010, 0.040, 0.012, 0.035, 0.011];
    println!("ema over {times:?}: {:?}", t1_filter(&times, FilterMode::Ema, 0.5)?);
    Ok(())
}

fn main() {
    run().unwrap();
}
