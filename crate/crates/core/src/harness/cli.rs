//! Command-line front end. The `lowlight` binary only forwards to [`run`].

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::checkpoint::{Checkpoint, Provenance};
use super::config::{KeyValues, TrainConfig};
use super::eval::{benchmark, enhance_sequence, evaluation_frames, Benchmark, Enhancer};
use super::gradsuite::{run_grad_suite, INSTANCES};
use super::output::{
    group_table_csv, image_table_csv, parse_stats, stats_text, summary_csv, t1_trace_csv, train_log_csv,
    write_ppm, write_text, ImageRow,
};
use super::train::{fit_stats, split_groups, train_bpn, train_bpn_direct, train_esn, EpochLog};
use crate::error::{Error, Result};
use crate::metrics::{entropy, noise_variance, FilterMode};
use crate::rawproc::{brightness, raw_to_rgb_reference, read_cidraw_file, rgb_to_gray, RawFrame};
use crate::synthcam::{read_dataset, synth_dataset, write_dataset, DatasetSpec, ImageGroup};

/// Written by `gen-data` next to the groups so later stages know the data seed.
pub const DATASET_INFO: &str = "dataset.txt";

#[derive(Parser, Debug)]
#[command(name = "lowlight", version, about = "Adaptive low-light raw enhancement: data, training, inference, metrics")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// key=value file overriding training settings
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for data synthesis, splitting, initialization and sampling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the subcommand
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Start from the full-scale preset (512-pixel patches, 300/100 epochs)
    #[arg(long, global = true)]
    pub paper_scale: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize multi-exposure groups into a directory (--out)
    GenData {
        /// Number of groups
        #[arg(long, default_value_t = 64)]
        groups: usize,
        /// Frame side length in sensor pixels
        #[arg(long, default_value_t = 320)]
        size: usize,
    },
    /// Fit normalization statistics on the training split; writes key=value text (--out)
    FitStats {
        /// Dataset directory
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the exposure-shifting network; writes a checkpoint (--out) and a .log.csv beside it
    TrainEsn {
        #[arg(long)]
        data: PathBuf,
        /// Statistics file from fit-stats
        #[arg(long)]
        stats: PathBuf,
    },
    /// Train the brightness network through the frozen exposure-shifting network
    TrainBpn {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint from train-esn
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Enhance one CIDRAW file into a PPM image (--out)
    Enhance {
        file: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Explicit exposure time in seconds; skips the brightness network
        #[arg(long)]
        t1: Option<f64>,
    },
    /// Enhance every .cidraw file of a directory in name order; writes frames and t1_trace.csv (--out)
    EnhanceSeq {
        dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// identity or ema
        #[arg(long, default_value = "identity")]
        filter: FilterMode,
        /// EMA weight of the previous time, in [0, 1]
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
    },
    /// Evaluate a dataset directory; writes groups.csv, images.csv and summary.csv (--out)
    EvalMetrics {
        dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the finite-difference gradient suite; nonzero exit on failure
    GradCheck {
        /// Random instances per case
        #[arg(long, default_value_t = INSTANCES)]
        instances: usize,
    },
    /// Ablation: train the brightness network by direct regression on ln t_g and compare (--out CSV)
    AblateDirectBpn {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint supplying the exposure-shifting network (and optionally the trained brightness network)
        #[arg(long)]
        checkpoint: PathBuf,
        /// Held-out dataset to evaluate on; defaults to the validation split of --data
        #[arg(long)]
        test: Option<PathBuf>,
    },
}

fn train_config(common: &Common) -> Result<TrainConfig> {
    let mut cfg = if common.paper_scale { TrainConfig::paper_scale() } else { TrainConfig::desk() };
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(common: &Common, what: &str) -> Result<PathBuf> {
    common
        .out
        .clone()
        .ok_or_else(|| Error::Config(format!("{what} needs --out")))
}

fn data_seed(dir: &Path) -> Result<u64> {
    let path = dir.join(DATASET_INFO);
    match fs::read_to_string(&path) {
        Ok(text) => {
            let mut kv = KeyValues::parse(&text)?;
            let seed = kv.remove("seed").unwrap_or_default();
            seed.parse()
                .map_err(|_| Error::Dataset(format!("{}: bad seed {seed:?}", path.display())))
        }
        Err(_) => Ok(0),
    }
}

fn progress(phase: &'static str) -> impl FnMut(&EpochLog) {
    move |e| {
        let val = e.val_loss.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        eprintln!(
            "{phase} epoch {:>3}  lr {:.3e}  train {:.6}  val {val}",
            e.epoch + 1,
            e.learning_rate,
            e.train_loss
        );
    }
}

fn log_path(out: &Path) -> PathBuf {
    out.with_extension("log.csv")
}

fn read_frames(dir: &Path) -> Result<Vec<RawFrame>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cidraw"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no .cidraw files in {}", dir.display())));
    }
    files.iter().map(read_cidraw_file).collect()
}

fn image_rows(enhancer: &Enhancer<'_>, groups: &[ImageGroup], bench: &Benchmark) -> Result<Vec<ImageRow>> {
    let mut rows = Vec::new();
    for (id, (group, eval)) in groups.iter().zip(&bench.groups).enumerate() {
        for (&k, &(t0, t1)) in evaluation_frames(group).iter().zip(&eval.times) {
            let frame = &group.frames()[k];
            let pre = raw_to_rgb_reference(frame);
            let post = enhancer.render(frame, t1)?;
            rows.push(ImageRow {
                group_id: id,
                frame: k,
                t0,
                t1,
                brightness_pre: brightness(&pre),
                brightness_post: brightness(&post),
                noise_pre: noise_variance(&rgb_to_gray(&pre))?,
                noise_post: noise_variance(&rgb_to_gray(&post))?,
                entropy_pre: entropy(&pre),
                entropy_post: entropy(&post),
            });
        }
    }
    Ok(rows)
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        // --help and --version are successful requests, printed to stdout
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Config(e.to_string())),
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    match &cli.command {
        Command::GenData { groups, size } => {
            let out = out_path(common, "gen-data")?;
            let spec = DatasetSpec {
                groups: *groups,
                height: *size,
                width: *size,
                seed: common.seed.unwrap_or(0),
                ..Default::default()
            };
            write_dataset(&out, &synth_dataset(&spec)?)?;
            write_text(
                out.join(DATASET_INFO),
                &format!("seed={}\ngroups={}\nheight={}\nwidth={}\n", spec.seed, spec.groups, spec.height, spec.width),
            )?;
            println!("wrote {} groups to {}", spec.groups, out.display());
        }
        Command::FitStats { data } => {
            let cfg = train_config(common)?;
            let groups = read_dataset(data)?;
            let split = split_groups(groups.len(), cfg.validation_fraction, cfg.seed)?;
            let stats = fit_stats(&groups, &split.train)?;
            let out = out_path(common, "fit-stats")?;
            write_text(&out, &stats_text(&stats))?;
            println!("statistics from {} training groups written to {}", split.train.len(), out.display());
        }
        Command::TrainEsn { data, stats } => {
            let cfg = train_config(common)?;
            let out = out_path(common, "train-esn")?;
            let groups = read_dataset(data)?;
            let stats = parse_stats(&fs::read_to_string(stats).map_err(|e| Error::io(stats, e))?)?;
            let split = split_groups(groups.len(), cfg.validation_fraction, cfg.seed)?;
            let (params, log) = train_esn(&groups, &split, &stats, &cfg, progress("esn"))?;
            let ckpt = Checkpoint {
                esn_config: cfg.esn.clone(),
                esn_params: params,
                bpn: None,
                stats,
                provenance: Provenance {
                    data_seed: data_seed(data)?,
                    train_seed: cfg.seed,
                    esn_epochs: cfg.esn_epochs as u32,
                    esn_final_loss: log.final_train_loss(),
                    ..Default::default()
                },
            };
            ckpt.save(&out)?;
            write_text(log_path(&out), &train_log_csv(&log))?;
            println!("checkpoint written to {}", out.display());
        }
        Command::TrainBpn { data, checkpoint } => {
            let mut cfg = train_config(common)?;
            let out = out_path(common, "train-bpn")?;
            let mut ckpt = Checkpoint::load(checkpoint)?;
            cfg.esn = ckpt.esn_config.clone();
            let groups = read_dataset(data)?;
            let split = split_groups(groups.len(), cfg.validation_fraction, cfg.seed)?;
            let (params, log) =
                train_bpn(&groups, &split, &ckpt.esn_config, &ckpt.esn_params, &ckpt.stats, &cfg, progress("bpn"))?;
            ckpt.bpn = Some((cfg.bpn.clone(), params));
            ckpt.provenance.bpn_epochs = cfg.bpn_epochs as u32;
            ckpt.provenance.bpn_final_loss = log.final_train_loss();
            ckpt.save(&out)?;
            write_text(log_path(&out), &train_log_csv(&log))?;
            println!("checkpoint written to {}", out.display());
        }
        Command::Enhance { file, checkpoint, t1 } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let enhancer = Enhancer::new(&ckpt);
            let frame = read_cidraw_file(file)?;
            let (image, t1) = match t1 {
                Some(t1) => (enhancer.render(&frame, *t1)?, *t1),
                None => enhancer.evaluate(&frame)?,
            };
            let out = out_path(common, "enhance")?;
            write_ppm(&out, &image)?;
            println!("t1={t1}");
        }
        Command::EnhanceSeq { dir, checkpoint, filter, beta } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let frames = read_frames(dir)?;
            let seq = enhance_sequence(&Enhancer::new(&ckpt), &frames, *filter, *beta)?;
            let out = out_path(common, "enhance-seq")?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for (k, img) in seq.frames.iter().enumerate() {
                write_ppm(out.join(format!("frame_{k:04}.ppm")), img)?;
            }
            write_text(out.join("t1_trace.csv"), &t1_trace_csv(&seq.raw_t1, &seq.filtered_t1))?;
            println!("{} frames written to {}", seq.frames.len(), out.display());
        }
        Command::EvalMetrics { dir, checkpoint } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let enhancer = Enhancer::new(&ckpt);
            let groups = read_dataset(dir)?;
            let bench = benchmark(&enhancer, &groups)?;
            let out = out_path(common, "eval-metrics")?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_text(out.join("groups.csv"), &group_table_csv(&bench.groups))?;
            write_text(out.join("images.csv"), &image_table_csv(&image_rows(&enhancer, &groups, &bench)?))?;
            let summary = summary_csv(&[("synthetic", &bench)]);
            write_text(out.join("summary.csv"), &summary)?;
            print!("{summary}");
        }
        Command::GradCheck { instances } => {
            let seed = common.seed.unwrap_or(0);
            let reports = run_grad_suite(seed, *instances)?;
            let mut csv = String::from("case,instances,max_relative_error,tolerance,passed\n");
            for r in &reports {
                println!("{:<22} {:>3}  {:.3e}  < {:.0e}  {}", r.name, r.instances, r.worst, r.tolerance, if r.passed() { "ok" } else { "FAIL" });
                csv.push_str(&format!("{},{},{},{},{}\n", r.name, r.instances, r.worst, r.tolerance, r.passed()));
            }
            if let Some(out) = &common.out {
                write_text(out, &csv)?;
            }
            let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
            if !failed.is_empty() {
                return Err(Error::Validation(format!("gradient check failed for {}", failed.join(", "))));
            }
        }
        Command::AblateDirectBpn { data, checkpoint, test } => {
            let mut cfg = train_config(common)?;
            let out = out_path(common, "ablate-direct-bpn")?;
            let ckpt = Checkpoint::load(checkpoint)?;
            cfg.esn = ckpt.esn_config.clone();
            let groups = read_dataset(data)?;
            let split = split_groups(groups.len(), cfg.validation_fraction, cfg.seed)?;
            let (params, _) = train_bpn_direct(
                &groups,
                &split,
                &ckpt.esn_config,
                &ckpt.esn_params,
                &ckpt.stats,
                &cfg,
                progress("direct"),
            )?;
            let held_out = match test {
                Some(dir) => read_dataset(dir)?,
                None => split.validation.iter().map(|&g| groups[g].clone()).collect(),
            };
            let direct = Checkpoint { bpn: Some((cfg.bpn.clone(), params)), ..ckpt.clone() };
            let direct_bench = benchmark(&Enhancer::new(&direct), &held_out)?;
            let mut rows = vec![("direct_regression", &direct_bench)];
            let trained = match &ckpt.bpn {
                Some(_) => Some(benchmark(&Enhancer::new(&ckpt), &held_out)?),
                None => None,
            };
            if let Some(b) = &trained {
                rows.push(("brightness_loss", b));
            }
            let mut csv = summary_csv(&rows);
            csv.push_str(&format!("\nmodel,mean_abs_log_t1_error\n{}\n", log_error_row(&direct, &held_out)?));
            write_text(&out, &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}

/// Mean `|ln t1 - ln t_g|` over each held-out group's evaluation frames.
fn log_error_row(ckpt: &Checkpoint, groups: &[ImageGroup]) -> Result<String> {
    let enhancer = Enhancer::new(ckpt);
    let mut total = 0.0;
    let mut n = 0usize;
    for g in groups {
        for k in evaluation_frames(g) {
            total += (enhancer.predict_t1(&g.frames()[k])?.ln() - g.t_g().ln()).abs();
            n += 1;
        }
    }
    Ok(format!("direct_regression,{}", total / n as f64))
}
