//! Sensor frames, the CIDRAW container, Bayer packing and the reference RGB path.

mod bayer;
mod cidraw;

pub use bayer::{brightness, pack_bayer, raw_to_rgb_reference, rgb_to_gray, GAMMA};
pub use cidraw::{read_cidraw, read_cidraw_file, write_cidraw, write_cidraw_file, HEADER_LEN, MAGIC};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Capture metadata carried with every frame.
///
/// Values are `f32`, the container's precision, so frames survive a round
/// trip through [`write_cidraw`]/[`read_cidraw`] unchanged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExifMeta {
    pub iso: f32,
    /// Seconds.
    pub exposure_time: f32,
    /// White-balance gains in R, G, B, G2 order.
    pub wb_gains: [f32; 4],
    /// F-number; 0 when unknown.
    pub aperture: f32,
}

impl ExifMeta {
    pub fn validate(&self) -> Result<()> {
        let ok = self.iso.is_finite()
            && self.iso > 0.0
            && self.exposure_time.is_finite()
            && self.exposure_time > 0.0
            && self.wb_gains.iter().all(|g| g.is_finite() && *g > 0.0)
            && self.aperture.is_finite()
            && self.aperture >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid capture metadata {self:?}")))
        }
    }

    pub fn with_exposure(self, exposure_time: f32) -> Self {
        ExifMeta {
            exposure_time,
            ..self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cfa {
    Rggb,
}

/// One mosaicked capture: 16-bit counts in row-major order plus metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrame {
    width: usize,
    height: usize,
    cfa: Cfa,
    black_level: u16,
    white_level: u16,
    counts: Vec<u16>,
    meta: ExifMeta,
}

impl RawFrame {
    pub fn new(
        width: usize,
        height: usize,
        black_level: u16,
        white_level: u16,
        counts: Vec<u16>,
        meta: ExifMeta,
    ) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(Error::Validation(format!(
                "frame extent {width}x{height} must be even and positive"
            )));
        }
        if black_level >= white_level {
            return Err(Error::Validation(format!(
                "black level {black_level} must be below white level {white_level}"
            )));
        }
        if counts.len() != width * height {
            return Err(Error::Validation(format!(
                "{} counts for a {width}x{height} frame",
                counts.len()
            )));
        }
        meta.validate()?;
        Ok(RawFrame {
            width,
            height,
            cfa: Cfa::Rggb,
            black_level,
            white_level,
            counts,
            meta,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cfa(&self) -> Cfa {
        self.cfa
    }

    pub fn black_level(&self) -> u16 {
        self.black_level
    }

    pub fn white_level(&self) -> u16 {
        self.white_level
    }

    pub fn counts(&self) -> &[u16] {
        &self.counts
    }

    pub fn meta(&self) -> &ExifMeta {
        &self.meta
    }

    pub fn count_at(&self, row: usize, col: usize) -> u16 {
        self.counts[row * self.width + col]
    }

    /// Count normalized to `[0, 1]` between black and white level.
    pub fn normalized_at(&self, row: usize, col: usize) -> f64 {
        let range = f64::from(self.white_level - self.black_level);
        ((f64::from(self.count_at(row, col)) - f64::from(self.black_level)) / range).clamp(0.0, 1.0)
    }
}

/// Image types backed by a `(C, H, W)` tensor with values in `[0, 1]`.
pub trait Image {
    fn tensor(&self) -> &Tensor;

    fn height(&self) -> usize {
        self.tensor().shape()[1]
    }

    fn width(&self) -> usize {
        self.tensor().shape()[2]
    }
}

fn checked_image(tensor: Tensor, channels: usize, what: &str) -> Result<Tensor> {
    let (c, h, w) = tensor.dims3()?;
    if c != channels || h == 0 || w == 0 {
        return Err(Error::Validation(format!(
            "{what} needs {channels} channel(s), got shape {:?}",
            tensor.shape()
        )));
    }
    if let Some(v) = tensor.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Validation(format!("{what} value {v} outside [0, 1]")));
    }
    Ok(tensor)
}

macro_rules! image_type {
    ($(#[$doc:meta])* $name:ident, $channels:expr) => {
        $(#[$doc])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(Tensor);

        impl $name {
            pub const CHANNELS: usize = $channels;

            pub fn new(tensor: Tensor) -> Result<Self> {
                checked_image(tensor, $channels, stringify!($name)).map($name)
            }

            pub fn into_tensor(self) -> Tensor {
                self.0
            }
        }

        impl Image for $name {
            fn tensor(&self) -> &Tensor {
                &self.0
            }
        }
    };
}

image_type!(
    /// Half-resolution 4-channel Bayer planes in R, G, B, G2 order.
    PackedRaw,
    4
);
image_type!(RgbImage, 3);
image_type!(GrayImage, 1);
