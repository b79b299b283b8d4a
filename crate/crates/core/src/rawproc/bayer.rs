use super::{GrayImage, Image, PackedRaw, RawFrame, RgbImage};
use crate::autodiff::Tensor;

/// Display gamma of the reference conversion.
pub const GAMMA: f64 = 2.2;

/// Colour plane recorded at a sensor site: 0 = R, 1 = G, 2 = B.
fn site_color(row: usize, col: usize) -> usize {
    match (row % 2, col % 2) {
        (0, 0) => 0,
        (1, 1) => 2,
        _ => 1,
    }
}

/// Splits an RGGB mosaic into R, G, B, G2 planes normalized to `[0, 1]`.
///
/// White balance is not applied; it reaches the networks through the
/// conditioning vector instead.
pub fn pack_bayer(frame: &RawFrame) -> PackedRaw {
    let (h, w) = (frame.height() / 2, frame.width() / 2);
    // (row, col) offsets of R, G, B, G2 inside each 2x2 cell
    const SITES: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 1), (1, 0)];
    let mut data = Vec::with_capacity(4 * h * w);
    for (dy, dx) in SITES {
        for i in 0..h {
            for j in 0..w {
                data.push(frame.normalized_at(2 * i + dy, 2 * j + dx));
            }
        }
    }
    PackedRaw::new(Tensor::new([4, h, w], data).expect("packed shape")).expect("packed range")
}

/// Reference RGB rendering used for training targets.
///
/// Normalizes counts, multiplies each site by its white-balance gain,
/// bilinearly demosaics (mean of same-colour sites in the 3x3 neighbourhood,
/// clipped at the borders), clamps to `[0, 1]` and applies gamma 1/2.2.
pub fn raw_to_rgb_reference(frame: &RawFrame) -> RgbImage {
    let linear = balanced_demosaic(frame);
    let data = linear
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0).powf(1.0 / GAMMA))
        .collect();
    RgbImage::new(Tensor::new([3, frame.height(), frame.width()], data).expect("rgb shape"))
        .expect("rgb range")
}

/// White-balanced, demosaiced linear planes before clamping and gamma.
pub(crate) fn balanced_demosaic(frame: &RawFrame) -> Vec<f64> {
    let (h, w) = (frame.height(), frame.width());
    let gains = frame.meta().wb_gains;
    let mut balanced = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            let gain = match (row % 2, col % 2) {
                (0, 0) => gains[0],
                (0, 1) => gains[1],
                (1, 1) => gains[2],
                _ => gains[3],
            };
            balanced[row * w + col] = frame.normalized_at(row, col) * f64::from(gain);
        }
    }
    let mut out = vec![0.0; 3 * h * w];
    for row in 0..h {
        for col in 0..w {
            let mut sum = [0.0; 3];
            let mut n = [0u32; 3];
            for r in row.saturating_sub(1)..(row + 2).min(h) {
                for c in col.saturating_sub(1)..(col + 2).min(w) {
                    let k = site_color(r, c);
                    sum[k] += balanced[r * w + c];
                    n[k] += 1;
                }
            }
            let own = site_color(row, col);
            for k in 0..3 {
                out[(k * h + row) * w + col] = if k == own {
                    balanced[row * w + col]
                } else {
                    sum[k] / f64::from(n[k])
                };
            }
        }
    }
    out
}

/// Per-pixel mean of the three colour channels.
pub fn rgb_to_gray(image: &RgbImage) -> GrayImage {
    let t = image.tensor();
    let (_, h, w) = t.dims3().expect("rgb dims");
    let (r, g, b) = (t.channel(0), t.channel(1), t.channel(2));
    let data = (0..h * w).map(|i| (r[i] + g[i] + b[i]) / 3.0).collect();
    GrayImage::new(Tensor::new([1, h, w], data).expect("gray shape")).expect("gray range")
}

/// Mean over every channel and pixel.
pub fn brightness(image: &impl Image) -> f64 {
    image.tensor().mean()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rawproc::ExifMeta;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta(gains: [f32; 4]) -> ExifMeta {
        ExifMeta {
            iso: 100.0,
            exposure_time: 0.1,
            wb_gains: gains,
            aperture: 2.8,
        }
    }

    fn frame(w: usize, h: usize, counts: Vec<u16>, gains: [f32; 4]) -> RawFrame {
        RawFrame::new(w, h, 100, 4100, counts, meta(gains)).unwrap()
    }

    fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize, gains: [f32; 4]) -> RawFrame {
        let counts = (0..w * h).map(|_| rng.random_range(0..4500)).collect();
        frame(w, h, counts, gains)
    }

    #[test]
    fn pack_zero_and_scale_points() {
        let black = pack_bayer(&frame(4, 4, vec![100; 16], [1.0; 4]));
        assert!(black.tensor().data().iter().all(|&v| v == 0.0));
        let white = pack_bayer(&frame(4, 4, vec![4100; 16], [1.0; 4]));
        assert!(white.tensor().data().iter().all(|&v| v == 1.0));
        let over = pack_bayer(&frame(4, 4, vec![60000; 16], [1.0; 4]));
        assert!(over.tensor().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pack_matches_site_extractor() {
        let counts: Vec<u16> = (0..16).collect();
        let f = RawFrame::new(4, 4, 0, 15, counts, meta([1.0; 4])).unwrap();
        let packed = pack_bayer(&f);
        let t = packed.tensor();
        assert_eq!(t.shape(), &[4, 2, 2]);
        let offsets = [(0, 0), (0, 1), (1, 1), (1, 0)];
        for (c, (dy, dx)) in offsets.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    let expect = ((2 * i + dy) * 4 + 2 * j + dx) as f64 / 15.0;
                    assert_eq!(t.data()[(c * 2 + i) * 2 + j], expect);
                }
            }
        }
    }

    #[test]
    fn constant_frame_renders_constant() {
        let f = frame(8, 6, vec![2100; 48], [1.0; 4]);
        let rgb = raw_to_rgb_reference(&f);
        let expect = 0.5f64.powf(1.0 / GAMMA);
        for &v in rgb.tensor().data() {
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn red_gain_scales_linear_red_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counts: Vec<u16> = (0..64).map(|_| rng.random_range(100..1500)).collect();
        let a = balanced_demosaic(&frame(8, 8, counts.clone(), [1.0, 1.0, 1.0, 1.0]));
        let b = balanced_demosaic(&frame(8, 8, counts, [2.0, 1.0, 1.0, 1.0]));
        for i in 0..64 {
            assert!((b[i] - 2.0 * a[i]).abs() < 1e-12);
            assert_eq!(a[64 + i], b[64 + i]);
        }
    }

    /// Explicit per-site neighbour lists, written independently of the window-mean form.
    fn naive_rgb(f: &RawFrame) -> Vec<f64> {
        let (h, w) = (f.height() as isize, f.width() as isize);
        let g = f.meta().wb_gains;
        let lin = |r: isize, c: isize| -> Option<f64> {
            if r < 0 || c < 0 || r >= h || c >= w {
                return None;
            }
            let gain = match (r % 2, c % 2) {
                (0, 0) => g[0],
                (0, 1) => g[1],
                (1, 1) => g[2],
                _ => g[3],
            };
            Some(f.normalized_at(r as usize, c as usize) * f64::from(gain))
        };
        let avg = |pts: &[(isize, isize)]| {
            let vals: Vec<f64> = pts.iter().filter_map(|&(r, c)| lin(r, c)).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let mut out = vec![0.0; 3 * (h * w) as usize];
        for r in 0..h {
            for c in 0..w {
                let cross = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)];
                let diag = [(r - 1, c - 1), (r - 1, c + 1), (r + 1, c - 1), (r + 1, c + 1)];
                let horiz = [(r, c - 1), (r, c + 1)];
                let vert = [(r - 1, c), (r + 1, c)];
                let own = lin(r, c).unwrap();
                let (red, green, blue) = match (r % 2, c % 2) {
                    (0, 0) => (own, avg(&cross), avg(&diag)),
                    (1, 1) => (avg(&diag), avg(&cross), own),
                    (0, 1) => (avg(&horiz), own, avg(&vert)),
                    _ => (avg(&vert), own, avg(&horiz)),
                };
                let i = (r * w + c) as usize;
                let n = (h * w) as usize;
                for (k, v) in [red, green, blue].into_iter().enumerate() {
                    out[k * n + i] = v.clamp(0.0, 1.0).powf(1.0 / GAMMA);
                }
            }
        }
        out
    }

    #[test]
    fn demosaic_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let f = random_frame(&mut rng, 8, 8, [1.9, 1.0, 1.4, 1.0]);
            let fast = raw_to_rgb_reference(&f);
            let slow = naive_rgb(&f);
            for (a, b) in fast.tensor().data().iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gray_is_channel_mean() {
        let t = Tensor::new([3, 1, 1], vec![0.2, 0.4, 0.6]).unwrap();
        let g = rgb_to_gray(&RgbImage::new(t).unwrap());
        assert!((g.tensor().data()[0] - 0.4).abs() < 1e-15);

        let gray = Tensor::from_fn([1, 3, 3], |i| i as f64 / 9.0);
        let triple: Vec<f64> = gray.data().repeat(3);
        let rgb = RgbImage::new(Tensor::new([3, 3, 3], triple).unwrap()).unwrap();
        for (a, b) in rgb_to_gray(&rgb).tensor().data().iter().zip(gray.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn brightness_examples() {
        let half = RgbImage::new(Tensor::full([3, 2, 2], 0.5)).unwrap();
        assert_eq!(brightness(&half), 0.5);
        let split = GrayImage::new(Tensor::new([1, 1, 2], vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(brightness(&split), 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Tensor::from_fn([3, 7, 5], |_| rng.random::<f64>());
        let mut acc = 0.0;
        for &v in t.data() {
            acc += v;
        }
        let img = RgbImage::new(t).unwrap();
        assert!((brightness(&img) - acc / 105.0).abs() < 1e-14);
        assert!((brightness(&rgb_to_gray(&img)) - brightness(&img)).abs() < 1e-12);
    }
}
