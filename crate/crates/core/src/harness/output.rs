//! Files the harness writes: binary PPM images, CSV tables, and the
//! normalization statistics as `key=value` text.

use std::fmt::Write as _;
use std::path::Path;

use super::config::KeyValues;
use super::eval::{Benchmark, GroupEval};
use super::train::TrainLog;
use crate::conditioning::NormStats;
use crate::error::{Error, Result};
use crate::rawproc::{Image, RgbImage};

/// Binary P6 with maxval 255; values are rounded after clamping to `[0, 1]`.
pub fn ppm_bytes(image: &RgbImage) -> Vec<u8> {
    let t = image.tensor();
    let (h, w) = (image.height(), image.width());
    let plane = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            out.push((t.data()[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

pub fn write_ppm(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ppm_bytes(image)).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn train_log_csv(log: &TrainLog) -> String {
    let mut s = String::from("epoch,learning_rate,train_loss,train_loss_std,val_loss\n");
    for e in &log.epochs {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            e.epoch + 1,
            e.learning_rate,
            e.train_loss,
            e.train_loss_std,
            opt(e.val_loss)
        );
    }
    s
}

/// `frame,t1_raw,t1_filtered`.
pub fn t1_trace_csv(raw: &[f64], filtered: &[f64]) -> String {
    let mut s = String::from("frame,t1_raw,t1_filtered\n");
    for (k, (r, f)) in raw.iter().zip(filtered).enumerate() {
        let _ = writeln!(s, "{k},{r},{f}");
    }
    s
}

/// One row per group: pre/post mean and CV.
pub fn group_table_csv(groups: &[GroupEval]) -> String {
    let mut s = String::from("group_id,frames,mu_pre,cv_pre,mu_post,cv_post\n");
    for g in groups {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            g.pre.group_id,
            g.times.len(),
            g.pre.mu,
            g.pre.cv,
            g.post.mu,
            g.post.cv
        );
    }
    s
}

/// One row per evaluated image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRow {
    pub group_id: usize,
    pub frame: usize,
    pub t0: f64,
    pub t1: f64,
    pub brightness_pre: f64,
    pub brightness_post: f64,
    pub noise_pre: f64,
    pub noise_post: f64,
    pub entropy_pre: f64,
    pub entropy_post: f64,
}

pub fn image_table_csv(rows: &[ImageRow]) -> String {
    let mut s = String::from(
        "group_id,frame,t0,t1,brightness_pre,brightness_post,nv_pre,nv_post,entropy_pre,entropy_post\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.group_id,
            r.frame,
            r.t0,
            r.t1,
            r.brightness_pre,
            r.brightness_post,
            r.noise_pre,
            r.noise_post,
            r.entropy_pre,
            r.entropy_post
        );
    }
    s
}

/// Single-row summary; `label` distinguishes e.g. the ablation from the main model.
pub fn summary_csv(rows: &[(&str, &Benchmark)]) -> String {
    let mut s = String::from("model,groups,improved_fraction,mean_cv_pre,mean_cv_post,median_cv_post,spearman_t0_t1\n");
    for (label, b) in rows {
        let _ = writeln!(
            s,
            "{label},{},{},{},{},{},{}",
            b.groups.len(),
            b.improved_fraction,
            b.mean_pre_cv,
            b.mean_post_cv,
            b.median_post_cv,
            b.spearman_t0_t1
        );
    }
    s
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

/// Statistics as four comma-separated lines; values print in shortest
/// round-trip form, so parsing restores them exactly.
pub fn stats_text(stats: &NormStats) -> String {
    format!(
        "channel_mean={}\nchannel_std={}\nvector_mean={}\nvector_std={}\n",
        join(&stats.channel_mean),
        join(&stats.channel_std),
        join(&stats.iev_mean),
        join(&stats.iev_std)
    )
}

pub fn parse_stats(text: &str) -> Result<NormStats> {
    let mut kv = KeyValues::parse(text)?;
    let mut stats = NormStats::identity();
    fill(&mut kv, "channel_mean", &mut stats.channel_mean)?;
    fill(&mut kv, "channel_std", &mut stats.channel_std)?;
    fill(&mut kv, "vector_mean", &mut stats.iev_mean)?;
    fill(&mut kv, "vector_std", &mut stats.iev_std)?;
    kv.finish()?;
    stats.validate()?;
    Ok(stats)
}

fn fill(kv: &mut KeyValues, key: &str, slot: &mut [f64]) -> Result<()> {
    let Some(v) = kv.remove(key) else {
        return Err(Error::Config(format!("statistics file lacks {key}")));
    };
    let values = v
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))?;
    if values.len() != slot.len() {
        return Err(Error::Config(format!("{key}: {} values, expected {}", values.len(), slot.len())));
    }
    slot.copy_from_slice(&values);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::autodiff::Tensor;

    #[test]
    fn ppm_layout() {
        let img = RgbImage::new(Tensor::from_fn([3, 1, 2], |i| [0.0, 1.0, 0.5, 0.2, 1.0, 0.0][i])).unwrap();
        let b = ppm_bytes(&img);
        assert!(b.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(&b[11..], &[0, 128, 255, 255, 51, 0]);
    }

    #[test]
    fn stats_round_trip() {
        let mut s = NormStats::identity();
        s.channel_mean = [0.1, 0.2 + 0.1, 1e-9, 0.4];
        s.iev_mean[6] = -3.2;
        s.iev_std[6] = 1.0 / 3.0;
        assert_eq!(parse_stats(&stats_text(&s)).unwrap(), s);
        assert!(parse_stats("channel_mean=1,2,3,4\n").is_err());
        assert!(parse_stats(&stats_text(&s).replace("0.4", "0.4,0.5")).is_err());
    }

    #[test]
    fn csv_headers() {
        assert_eq!(t1_trace_csv(&[1.0], &[2.0]), "frame,t1_raw,t1_filtered\n0,1,2\n");
        assert!(train_log_csv(&TrainLog::default()).starts_with("epoch,"));
    }

    proptest! {
        #[test]
        fn any_valid_stats_round_trip(
            channel_mean in proptest::array::uniform4(-1e3f64..1e3),
            channel_std in proptest::array::uniform4(1e-9f64..1e3),
            iev_mean in proptest::array::uniform7(-1e4f64..1e4),
            iev_std in proptest::array::uniform7(1e-9f64..1e4),
        ) {
            let s = NormStats { channel_mean, channel_std, iev_mean, iev_std };
            let text = stats_text(&s);
            prop_assert_eq!(parse_stats(&text).unwrap(), s);
        }
    }
}
