//! CIDRAW: a little-endian container for one mosaicked frame.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CIDR"
//!      4     2  version (u16) = 1
//!      6     4  width (u32)
//!     10     4  height (u32)
//!     14     1  cfa (u8), 0 = RGGB
//!     15     1  reserved (u8) = 0
//!     16     2  black level (u16)
//!     18     2  white level (u16)
//!     20     4  iso (f32)
//!     24     4  exposure time, seconds (f32)
//!     28    16  white-balance gains r, g, b, g2 (4 x f32)
//!     44     4  aperture (f32)
//!     48        width * height u16 counts, row-major
//! ```

use std::path::Path;

use super::{ExifMeta, RawFrame};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CIDR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 48;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos,
                detail: format!(
                    "truncated {what}: expected {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_cidraw(bytes: &[u8]) -> Result<RawFrame> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: "bad magic, expected \"CIDR\"".into(),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            detail: format!("unsupported version {version}"),
        });
    }
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let cfa = r.u8("cfa")?;
    if cfa != 0 {
        return Err(Error::Format {
            offset: 14,
            detail: format!("unsupported CFA tag {cfa}, only RGGB (0)"),
        });
    }
    let reserved = r.u8("reserved")?;
    if reserved != 0 {
        return Err(Error::Format {
            offset: 15,
            detail: format!("reserved byte is {reserved}, expected 0"),
        });
    }
    let black_level = r.u16("black level")?;
    let white_level = r.u16("white level")?;
    let iso = r.f32("iso")?;
    let exposure_time = r.f32("exposure time")?;
    let mut wb_gains = [0f32; 4];
    for g in &mut wb_gains {
        *g = r.f32("white-balance gain")?;
    }
    let aperture = r.f32("aperture")?;
    debug_assert_eq!(r.pos, HEADER_LEN);

    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(2))
        .ok_or_else(|| Error::Format {
            offset: 6,
            detail: format!("extent {width}x{height} overflows"),
        })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format {
            offset: HEADER_LEN,
            detail: format!(
                "payload length mismatch: expected {expected} bytes, found {}",
                payload.len()
            ),
        });
    }
    let counts = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let meta = ExifMeta {
        iso,
        exposure_time,
        wb_gains,
        aperture,
    };
    RawFrame::new(width, height, black_level, white_level, counts, meta)
}

pub fn write_cidraw(frame: &RawFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * frame.counts.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(frame.width as u32).to_le_bytes());
    out.extend_from_slice(&(frame.height as u32).to_le_bytes());
    out.push(0);
    out.push(0);
    out.extend_from_slice(&frame.black_level.to_le_bytes());
    out.extend_from_slice(&frame.white_level.to_le_bytes());
    let m = &frame.meta;
    out.extend_from_slice(&m.iso.to_le_bytes());
    out.extend_from_slice(&m.exposure_time.to_le_bytes());
    for g in m.wb_gains {
        out.extend_from_slice(&g.to_le_bytes());
    }
    out.extend_from_slice(&m.aperture.to_le_bytes());
    for c in &frame.counts {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn read_cidraw_file(path: impl AsRef<Path>) -> Result<RawFrame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_cidraw(&bytes)
}

pub fn write_cidraw_file(path: impl AsRef<Path>, frame: &RawFrame) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_cidraw(frame)).map_err(|e| Error::io(path, e))
}
