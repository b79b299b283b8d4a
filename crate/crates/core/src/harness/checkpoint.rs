//! Binary checkpoint, little-endian throughout:
//!
//! ```text
//! magic "ESBP" | version u16
//! config text: u32 length + UTF-8 key=value lines (esn.*, optional bpn.*)
//! NormStats: 22 x f64 (channel mean, channel std, vector mean, vector std)
//! provenance: data seed u64, train seed u64, ESN epochs u32, BPN epochs u32,
//!             final ESN loss f64, final BPN loss f64
//! parameter count u32, then per parameter:
//!     name length u16, name, rank u8, dims u32 x rank, data f32 x numel
//! ```
//!
//! ESN parameters come first, then BPN parameters when present. Every field has
//! one encoding, so loading and re-saving reproduces the file byte for byte.

use std::path::Path;

use super::config::{bpn_apply, bpn_text, esn_apply, esn_text, KeyValues};
use crate::autodiff::{ParamSet, Tensor};
use crate::bpn::BpnConfig;
use crate::conditioning::{NormStats, IEV_LEN, PACKED_CHANNELS};
use crate::error::{Error, Result};
use crate::esn::EsnConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ESBP";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Where a checkpoint came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub data_seed: u64,
    pub train_seed: u64,
    pub esn_epochs: u32,
    pub bpn_epochs: u32,
    pub esn_final_loss: f64,
    pub bpn_final_loss: f64,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            data_seed: 0,
            train_seed: 0,
            esn_epochs: 0,
            bpn_epochs: 0,
            esn_final_loss: f64::NAN,
            bpn_final_loss: f64::NAN,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub esn_config: EsnConfig,
    pub esn_params: ParamSet,
    pub bpn: Option<(BpnConfig, ParamSet)>,
    pub stats: NormStats,
    pub provenance: Provenance,
}

impl Checkpoint {
    /// Checks parameter layouts and statistics.
    pub fn validate(&self) -> Result<()> {
        self.esn_params.check_layout(&self.esn_config.param_layout())?;
        if let Some((cfg, params)) = &self.bpn {
            params.check_layout(&cfg.param_layout())?;
        }
        self.stats.validate()
    }

    /// Parameters as stored: every value rounded to single precision.
    pub fn rounded(&self) -> Checkpoint {
        let round = |p: &ParamSet| {
            let mut out = ParamSet::new();
            for (name, t) in p.iter() {
                out.push(name, t.map(|v| f64::from(v as f32)));
            }
            out
        };
        Checkpoint {
            esn_params: round(&self.esn_params),
            bpn: self.bpn.as_ref().map(|(c, p)| (c.clone(), round(p))),
            ..self.clone()
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let mut text = esn_text(&self.esn_config);
        if let Some((cfg, _)) = &self.bpn {
            text.push_str(&bpn_text(cfg));
        }
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let s = &self.stats;
        for v in s.channel_mean.iter().chain(&s.channel_std).chain(&s.iev_mean).chain(&s.iev_std) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let p = &self.provenance;
        out.extend_from_slice(&p.data_seed.to_le_bytes());
        out.extend_from_slice(&p.train_seed.to_le_bytes());
        out.extend_from_slice(&p.esn_epochs.to_le_bytes());
        out.extend_from_slice(&p.bpn_epochs.to_le_bytes());
        out.extend_from_slice(&p.esn_final_loss.to_le_bytes());
        out.extend_from_slice(&p.bpn_final_loss.to_le_bytes());
        let sets: Vec<&ParamSet> = std::iter::once(&self.esn_params)
            .chain(self.bpn.as_ref().map(|(_, p)| p))
            .collect();
        let count: usize = sets.iter().map(|p| p.len()).sum();
        out.extend_from_slice(&(count as u32).to_le_bytes());
        for (name, t) in sets.iter().flat_map(|p| p.iter()) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format { offset: 0, detail: "bad checkpoint magic".into() });
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 4,
                detail: format!("checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"),
            });
        }
        let len = r.u32()? as usize;
        let at = r.pos;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format { offset: at, detail: "config text is not UTF-8".into() })?;
        let mut kv = KeyValues::parse(text)?;
        let has_bpn = text.lines().any(|l| l.starts_with("bpn."));
        let mut esn_config = EsnConfig::default();
        esn_apply(&mut kv, &mut esn_config)?;
        let mut bpn_config = BpnConfig::default();
        bpn_apply(&mut kv, &mut bpn_config)?;
        kv.finish()?;
        esn_config.validate()?;
        if has_bpn {
            bpn_config.validate()?;
        }

        let mut stats = NormStats::identity();
        for v in stats.channel_mean.iter_mut().chain(stats.channel_std.iter_mut()) {
            *v = r.f64()?;
        }
        for v in stats.iev_mean.iter_mut().chain(stats.iev_std.iter_mut()) {
            *v = r.f64()?;
        }
        debug_assert_eq!(stats.channel_mean.len() + stats.iev_mean.len(), PACKED_CHANNELS + IEV_LEN);
        let provenance = Provenance {
            data_seed: r.u64()?,
            train_seed: r.u64()?,
            esn_epochs: r.u32()?,
            bpn_epochs: r.u32()?,
            esn_final_loss: r.f64()?,
            bpn_final_loss: r.f64()?,
        };

        let mut layout = esn_config.param_layout();
        let esn_count = layout.len();
        if has_bpn {
            layout.extend(bpn_config.param_layout());
        }
        let count_at = r.pos;
        let count = r.u32()? as usize;
        if count != layout.len() {
            return Err(Error::Validation(format!(
                "checkpoint holds {count} parameters (byte {count_at}); configuration expects {}",
                layout.len()
            )));
        }
        let mut esn_params = ParamSet::new();
        let mut bpn_params = ParamSet::new();
        for (i, (want_name, want_shape)) in layout.iter().enumerate() {
            let name_len = r.u16()? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format { offset: at, detail: "parameter name is not UTF-8".into() })?
                .to_string();
            let dims_at = r.pos;
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if &name != want_name || &dims != want_shape {
                return Err(Error::Validation(format!(
                    "parameter {name} {dims:?} at byte {dims_at} does not match layout entry {want_name} {want_shape:?}"
                )));
            }
            let numel: usize = dims.iter().product();
            let raw = r.take(4 * numel)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect();
            let tensor = Tensor::new(dims, data)?;
            if i < esn_count {
                esn_params.push(name, tensor);
            } else {
                bpn_params.push(name, tensor);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos,
                detail: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        let ckpt = Checkpoint {
            esn_config,
            esn_params,
            bpn: has_bpn.then_some((bpn_config, bpn_params)),
            stats,
            provenance,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        Checkpoint::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            offset: self.pos,
            detail: format!(
                "truncated checkpoint: expected {n} more bytes, found {}",
                self.bytes.len() - self.pos
            ),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }
}
