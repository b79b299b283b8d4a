//! One synthetic capture through the raw container, Bayer packing and the
//! reference rendering, saved as a PPM.

use lowlight::harness::output::write_ppm;
use lowlight::rawproc::{
    brightness, pack_bayer, raw_to_rgb_reference, read_cidraw, write_cidraw, ExifMeta, Image, HEADER_LEN,
};
use lowlight::synthcam::{expose, synth_scene, SensorModel};

pub fn run() -> lowlight::Result<()> {
    let scene = synth_scene(4, 64, 96)?;
    let meta = ExifMeta { iso: 800.0, exposure_time: 1.0, wb_gains: [2.0, 1.0, 1.5, 1.0], aperture: 2.8 };
    let frame = expose(&scene, 0.05, &SensorModel::default(), &meta, 1)?;

    let bytes = write_cidraw(&frame);
    assert_eq!(bytes.len(), HEADER_LEN + 2 * frame.width() * frame.height());
    let back = read_cidraw(&bytes)?;
    assert_eq!(back, frame);
    println!("{}x{} frame, {} bytes on disk, metadata {:?}", frame.width(), frame.height(), bytes.len(), back.meta());

    let packed = pack_bayer(&frame);
    let means: Vec<f64> = (0..4).map(|c| {
        let plane = packed.tensor().channel(c);
        plane.iter().sum::<f64>() / plane.len() as f64
    }).collect();
    println!("packed {:?}, channel means R {:.4} G {:.4} B {:.4} G2 {:.4}", packed.tensor().shape(), means[0], means[1], means[2], means[3]);

    let rgb = raw_to_rgb_reference(&frame);
    let out = std::env::temp_dir().join("lowlight-raw-container.ppm");
    write_ppm(&out, &rgb)?;
    println!("reference rendering: brightness {:.3}, written to {}", brightness(&rgb), out.display());
    Ok(())
}

fn main() {
    run().unwrap();
}
