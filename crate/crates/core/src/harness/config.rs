//! Run configuration and its `key=value` text form.
//!
//! One entry per line, `#` starts a comment. Network keys carry an `esn.` or
//! `bpn.` prefix; list values are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::bpn::BpnConfig;
use crate::error::{Error, Result};
use crate::esn::EsnConfig;

/// Parsed `key=value` pairs; keys are consumed as they are applied so that
/// leftovers can be reported as unknown.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)));
            };
            if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {}", n + 1, k.trim())));
            }
        }
        Ok(KeyValues(map))
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub(crate) fn remove(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.0.remove(key) {
            *slot = v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))?;
        }
        Ok(())
    }

    fn take_list(&mut self, key: &str, slot: &mut Vec<usize>) -> Result<()> {
        match self.0.remove(key) {
            // an empty value is an empty list, as written for a bare FC tail
            Some(v) if v.trim().is_empty() => slot.clear(),
            Some(v) => {
                *slot = v
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse list {v:?}")))?;
            }
            None => {}
        }
        Ok(())
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.0.into_keys().collect();
            Err(Error::Config(format!("unknown keys: {}", keys.join(", "))))
        }
    }
}

pub(crate) fn esn_apply(kv: &mut KeyValues, cfg: &mut EsnConfig) -> Result<()> {
    kv.take("esn.depth", &mut cfg.depth)?;
    kv.take("esn.base_channels", &mut cfg.base_channels)?;
    kv.take("esn.leaky_slope", &mut cfg.leaky_slope)
}

pub(crate) fn bpn_apply(kv: &mut KeyValues, cfg: &mut BpnConfig) -> Result<()> {
    kv.take_list("bpn.conv_channels", &mut cfg.conv_channels)?;
    kv.take_list("bpn.fc_widths", &mut cfg.fc_widths)?;
    kv.take("bpn.input_extent", &mut cfg.input_extent)?;
    kv.take("bpn.leaky_slope", &mut cfg.leaky_slope)?;
    kv.take("bpn.mu_w", &mut cfg.mu_w)?;
    kv.take("bpn.sigma_w_sq", &mut cfg.sigma_w_sq)?;
    kv.take("bpn.sigma_v_sq", &mut cfg.sigma_v_sq)
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Canonical text of a network configuration; floats use the shortest
/// representation that parses back to the same value.
pub(crate) fn esn_text(cfg: &EsnConfig) -> String {
    format!(
        "esn.depth={}\nesn.base_channels={}\nesn.leaky_slope={:?}\n",
        cfg.depth, cfg.base_channels, cfg.leaky_slope
    )
}

pub(crate) fn bpn_text(cfg: &BpnConfig) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "bpn.conv_channels={}\nbpn.fc_widths={}\nbpn.input_extent={}\nbpn.leaky_slope={:?}\n\
         bpn.mu_w={:?}\nbpn.sigma_w_sq={:?}\nbpn.sigma_v_sq={:?}\n",
        join(&cfg.conv_channels),
        join(&cfg.fc_widths),
        cfg.input_extent,
        cfg.leaky_slope,
        cfg.mu_w,
        cfg.sigma_w_sq,
        cfg.sigma_v_sq
    );
    s
}

/// Everything the two training phases need.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub esn: EsnConfig,
    pub bpn: BpnConfig,
    /// Weight of the SSIM term in the exposure-shifting loss.
    pub alpha: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub esn_epochs: usize,
    pub bpn_epochs: usize,
    /// Pairs drawn from every training group per epoch.
    pub pairs_per_group: usize,
    /// Fixed validation crops per input frame of each held-out group.
    pub val_crops_per_pair: usize,
    /// Packed side length of exposure-shifting patches; brightness patches are twice this.
    pub patch_size: usize,
    /// Share of groups held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            esn: EsnConfig::default(),
            bpn: BpnConfig::default(),
            alpha: 0.15,
            lr_start: 2e-4,
            lr_end: 1e-5,
            esn_epochs: 40,
            bpn_epochs: 15,
            pairs_per_group: 1,
            val_crops_per_pair: 1,
            patch_size: 64,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale defaults.
    pub fn desk() -> Self {
        Self::default()
    }

    /// Published full-scale settings: 512-pixel patches and inputs, 300/100 epochs.
    pub fn paper_scale() -> Self {
        TrainConfig {
            esn_epochs: 300,
            bpn_epochs: 100,
            patch_size: 512,
            bpn: BpnConfig {
                input_extent: 512,
                ..BpnConfig::default()
            },
            ..Self::default()
        }
    }

    /// Overrides fields from `text`; unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut kv = KeyValues::parse(text)?;
        self.apply(&mut kv)?;
        kv.finish()?;
        self.validate()
    }

    /// Consumes the keys this config understands.
    pub fn apply(&mut self, kv: &mut KeyValues) -> Result<()> {
        esn_apply(kv, &mut self.esn)?;
        bpn_apply(kv, &mut self.bpn)?;
        kv.take("alpha", &mut self.alpha)?;
        kv.take("lr_start", &mut self.lr_start)?;
        kv.take("lr_end", &mut self.lr_end)?;
        kv.take("esn_epochs", &mut self.esn_epochs)?;
        kv.take("bpn_epochs", &mut self.bpn_epochs)?;
        kv.take("pairs_per_group", &mut self.pairs_per_group)?;
        kv.take("val_crops_per_pair", &mut self.val_crops_per_pair)?;
        kv.take("patch_size", &mut self.patch_size)?;
        kv.take("validation_fraction", &mut self.validation_fraction)?;
        kv.take("seed", &mut self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.esn.validate()?;
        self.bpn.validate()?;
        let m = self.esn.extent_multiple();
        let problems = [
            (!(0.0..1.0).contains(&self.alpha), "alpha must lie in [0, 1)"),
            (!(self.lr_end > 0.0 && self.lr_start >= self.lr_end), "need lr_start >= lr_end > 0"),
            (self.esn_epochs == 0 || self.bpn_epochs == 0, "epochs must be at least 1"),
            (self.pairs_per_group == 0, "pairs_per_group must be at least 1"),
            (self.patch_size == 0 || self.patch_size % m != 0, "patch_size must be a positive multiple of 2^esn.depth"),
            (!(0.0..1.0).contains(&self.validation_fraction), "validation_fraction must lie in [0, 1)"),
        ];
        match problems.iter().find(|(bad, _)| *bad) {
            Some((_, msg)) => Err(Error::Config(format!("{msg}: {self:?}"))),
            None => Ok(()),
        }
    }

    /// Log-linear decay from `lr_start` at the first epoch to `lr_end` at the last.
    pub fn learning_rate(&self, epoch: usize, epochs: usize) -> f64 {
        if epoch == 0 || epochs <= 1 {
            return self.lr_start;
        }
        if epoch + 1 >= epochs {
            return self.lr_end;
        }
        let f = epoch as f64 / (epochs - 1) as f64;
        (self.lr_start.ln() + f * (self.lr_end.ln() - self.lr_start.ln())).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_apply() {
        let mut cfg = TrainConfig::default();
        cfg.apply_text("# desk run\nalpha = 0.3\nesn.depth=2\nbpn.conv_channels=8,8\nbpn.input_extent=16\n")
            .unwrap();
        assert_eq!(cfg.alpha, 0.3);
        assert_eq!(cfg.esn.depth, 2);
        assert_eq!(cfg.bpn.conv_channels, vec![8, 8]);
        assert!(TrainConfig::default().apply_text("nonsense=1").is_err());
        assert!(TrainConfig::default().apply_text("alpha=1.0").is_err());
        assert!(TrainConfig::default().apply_text("alpha=0.1\nalpha=0.2").is_err());
        assert!(TrainConfig::default().apply_text("alpha").is_err());
    }

    #[test]
    fn schedule_endpoints_are_exact() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate(0, 40), 2e-4);
        assert_eq!(cfg.learning_rate(39, 40), 1e-5);
        assert_eq!(cfg.learning_rate(0, 1), 2e-4);
        let mid = cfg.learning_rate(20, 41);
        assert!((mid - (2e-4f64 * 1e-5).sqrt()).abs() < 1e-18);
        let lrs: Vec<f64> = (0..40).map(|e| cfg.learning_rate(e, 40)).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn canonical_text_round_trips() {
        let bpn = BpnConfig { sigma_v_sq: 0.1 + 0.2, ..Default::default() };
        let mut kv = KeyValues::parse(&bpn_text(&bpn)).unwrap();
        let mut back = BpnConfig { conv_channels: vec![], ..Default::default() };
        bpn_apply(&mut kv, &mut back).unwrap();
        kv.finish().unwrap();
        assert_eq!(back, bpn);
        assert_eq!(bpn_text(&back), bpn_text(&bpn));
    }

    #[test]
    fn presets() {
        TrainConfig::desk().validate().unwrap();
        let p = TrainConfig::paper_scale();
        p.validate().unwrap();
        assert_eq!((p.patch_size, p.esn_epochs, p.bpn_epochs, p.bpn.input_extent), (512, 300, 100, 512));
    }

    fn float() -> impl Strategy<Value = f64> {
        (1e-6f64..10.0).prop_map(|x| x / 3.0)
    }

    proptest! {
        #[test]
        fn network_text_round_trips(
            depth in 1usize..5,
            base in 1usize..64,
            conv in proptest::collection::vec(1usize..64, 1..5),
            fc in proptest::collection::vec(1usize..64, 0..3),
            extent in 1usize..64,
            slopes in (float(), float()),
            aoi in (float(), float(), float()),
        ) {
            let esn = EsnConfig { depth, base_channels: base, leaky_slope: slopes.0 };
            let bpn = BpnConfig {
                conv_channels: conv,
                fc_widths: fc,
                input_extent: extent,
                leaky_slope: slopes.1,
                mu_w: aoi.0,
                sigma_w_sq: aoi.1,
                sigma_v_sq: aoi.2,
            };
            let mut kv = KeyValues::parse(&format!("{}{}", esn_text(&esn), bpn_text(&bpn))).unwrap();
            let mut esn_back = EsnConfig::default();
            let mut bpn_back = BpnConfig::default();
            esn_apply(&mut kv, &mut esn_back).unwrap();
            bpn_apply(&mut kv, &mut bpn_back).unwrap();
            kv.finish().unwrap();
            prop_assert_eq!(esn_back, esn);
            prop_assert_eq!(bpn_back, bpn);
        }

        #[test]
        fn schedule_is_monotone_within_bounds(epochs in 2usize..400, start in 1e-5f64..1e-2, ratio in 1.0f64..100.0) {
            let cfg = TrainConfig { lr_start: start, lr_end: start / ratio, ..TrainConfig::default() };
            let lrs: Vec<f64> = (0..epochs).map(|e| cfg.learning_rate(e, epochs)).collect();
            prop_assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(lrs.iter().all(|&lr| lr <= cfg.lr_start && lr >= cfg.lr_end));
        }
    }
}
