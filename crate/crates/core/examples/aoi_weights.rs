//! The area-of-interest weight map and the brightness loss on a horizontal
//! ramp: weight concentrates where the reference is near mid-gray, and the
//! loss is lowest when the rendering puts those pixels at 0.5.

use lowlight::autodiff::{Tape, Tensor};
use lowlight::bpn::{aoi_weight_map, loss_bp};
use lowlight::rawproc::{GrayImage, Image};

pub fn run() -> lowlight::Result<()> {
    let (h, w) = (4, 11);
    let ramp = GrayImage::new(Tensor::from_fn([1, h, w], |i| (i % w) as f64 / (w - 1) as f64))?;
    let map = aoi_weight_map(&ramp, 0.5, 0.01)?;
    let column: Vec<String> = (0..w).map(|x| format!("{:.4}", map.tensor().data()[x] * h as f64)).collect();
    println!("column weights: {}", column.join(" "));

    let tape = Tape::new();
    for gain in [0.5, 0.8, 1.0, 1.25, 2.0] {
        let est = tape.constant(ramp.tensor().map(|v| (v * gain).min(1.0)));
        let l = loss_bp(&est, &map, 0.5, 0.04)?.item()?;
        println!("rendering at gain {gain:<4}: L_BP = {l:.6}");
    }
    println!("lower bound -1/(mn) = {:.6}", -1.0 / ramp.tensor().numel() as f64);
    Ok(())
}

fn main() {
    run().unwrap();
}
