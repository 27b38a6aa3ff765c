//! Command-line front end shared by the `sraseg` binary and the examples.
//!
//! Every subcommand resolves one [`RunConfig`] (defaults, then `--config`,
//! then `--set key=value`, then `--seed`), writes its outputs under `--out`
//! together with `config.toml`, and draws all randomness from the seed.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data_io::{
    load_image, load_pair, make_splits, save_image_u8, save_mask, DatasetManifest, ManifestEntry, RunConfig,
    SplitManifest,
};
use crate::error::{Error, Result};
use crate::eval::{domain_gap_report, predict_labels, GapStatistic, MetricsRecord};
use crate::model::{reference_net, Mode, SegmentationModel};
use crate::pseudo_label::{argmax_labels, one_hot, pseudo_label_from_logits};
use crate::rng::{stream, substream};
use crate::soft_mix::{build_blend_mask, make_complementary_mixtures, sample_blend_region};
use crate::tensor::{HardLabelMap, ImageSlice};
use crate::toy::make_toy_data;
use crate::trainer::{load_student, load_teacher, run_training, TrainOptions, CONFIG_FILE};

#[derive(Debug, Parser)]
#[command(name = "sraseg", version, about = "Semi-supervised segmentation with synthetic unlabeled data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalPool {
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Statistic {
    AreaFraction,
    MeanProbability,
    MeanIntensity,
}

impl From<Statistic> for GapStatistic {
    fn from(s: Statistic) -> Self {
        match s {
            Statistic::AreaFraction => GapStatistic::AreaFraction,
            Statistic::MeanProbability => GapStatistic::MeanProbability,
            Statistic::MeanIntensity => GapStatistic::MeanIntensity,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split the dataset under `data_root` into labeled / unlabeled / val / test.
    Split {
        #[command(flatten)]
        common: Common,
    },
    /// Warm-up then self-training; writes log, evaluation table and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Existing split file; by default the split is made from `data_root`.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Continue from `last.ckpt` in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Write teacher pseudo-labels for the unlabeled pool as PNG masks.
    PseudoLabel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Write soft-mixed image and label pairs for inspection.
    AugmentPreview {
        #[command(flatten)]
        common: Common,
        /// Teacher checkpoint for pseudo-labels; a fresh network otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Number of pairs.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Dice, Jaccard, 95HD and ASD of the student on a held-out pool.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        pool: EvalPool,
    },
    /// Kernel density curves of a per-image statistic on labeled vs unlabeled images.
    DiagnoseKde {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Class whose statistic is estimated.
        #[arg(long, default_value_t = 1)]
        class: usize,
        #[arg(long, value_enum, default_value = "area-fraction")]
        statistic: Statistic,
    },
    /// Generate the procedural toy benchmark.
    MakeToyData {
        #[command(flatten)]
        common: Common,
        /// Real training images (as many synthetic ones are made).
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Intensity shift and blur of the synthetic pool.
        #[arg(long, default_value_t = 0.3)]
        shift: f64,
    },
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        match &self.config {
            Some(p) => RunConfig::load(p, &overrides),
            None => RunConfig::resolve(None, &overrides),
        }
    }

    fn prepare(&self) -> Result<RunConfig> {
        let cfg = self.resolve()?;
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let p = self.out.join(CONFIG_FILE);
        fs::write(&p, cfg.to_toml()).map_err(|e| Error::io(&p, e))?;
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_split(cfg: &RunConfig, split: Option<&Path>) -> Result<SplitManifest> {
    match split {
        Some(p) => SplitManifest::load(p),
        None => {
            let manifest = DatasetManifest::discover(&cfg.data_root)?;
            make_splits(&manifest, cfg.labeled_fraction, cfg.seed)
        }
    }
}

fn load_images(entries: &[ManifestEntry]) -> Result<Vec<ImageSlice>> {
    entries.iter().map(|e| load_image(&e.image_path)).collect()
}

fn load_labeled(entries: &[ManifestEntry], classes: usize) -> Result<(Vec<ImageSlice>, Vec<HardLabelMap>)> {
    let mut imgs = Vec::with_capacity(entries.len());
    let mut masks = Vec::with_capacity(entries.len());
    for e in entries {
        let m = e
            .mask_path
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{} has no mask", e.image_path.display())))?;
        let (i, l) = load_pair(&e.image_path, m, classes)?;
        imgs.push(i);
        masks.push(l);
    }
    Ok((imgs, masks))
}

fn file_name(e: &ManifestEntry) -> String {
    e.image_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image.png".into())
}

fn cmd_split(common: &Common) -> Result<()> {
    let cfg = common.prepare()?;
    let split = load_split(&cfg, None)?;
    write(&common.out.join("split.tsv"), &split.to_tsv())?;
    println!(
        "labeled {} unlabeled {} val {} test {}",
        split.labeled.len(),
        split.unlabeled.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

fn cmd_train(common: &Common, split: Option<&Path>, resume: bool) -> Result<()> {
    let cfg = common.prepare()?;
    let split = load_split(&cfg, split)?;
    write(&common.out.join("split.tsv"), &split.to_tsv())?;
    let outcome = run_training(&cfg, &split, &common.out, TrainOptions { resume, stop_after: None })?;
    println!(
        "iterations {} best val dice {:.4} checkpoint {}",
        outcome.iterations,
        outcome.best_score,
        outcome.best_checkpoint.display()
    );
    Ok(())
}

fn cmd_pseudo_label(common: &Common, checkpoint: &Path, split: Option<&Path>) -> Result<()> {
    let cfg = common.prepare()?;
    let split = load_split(&cfg, split)?;
    let teacher = load_teacher(checkpoint)?;
    let dir = common.out.join("pseudo_labels");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for e in &split.unlabeled {
        let img = load_image(&e.image_path)?;
        let logits = teacher.infer(std::slice::from_ref(&img))?;
        let (hard, _) = pseudo_label_from_logits(&logits[0], cfg.connectivity)?;
        save_mask(&dir.join(file_name(e)), &hard)?;
    }
    println!("wrote {} pseudo-labels to {}", split.unlabeled.len(), dir.display());
    Ok(())
}

fn cmd_augment_preview(common: &Common, checkpoint: Option<&Path>, split: Option<&Path>, count: usize) -> Result<()> {
    let cfg = common.prepare()?;
    let split = load_split(&cfg, split)?;
    let teacher: Box<dyn SegmentationModel> = match checkpoint {
        Some(p) => load_teacher(p)?,
        None => {
            let mut net = reference_net(cfg.net_spec(), cfg.seed)?;
            net.set_mode(Mode::Inference);
            Box::new(net)
        }
    };
    let n = count.min(split.labeled.len()).min(split.unlabeled.len());
    let (lab_imgs, lab_masks) = load_labeled(&split.labeled[..n], cfg.num_classes)?;
    let syn_imgs = load_images(&split.unlabeled[..n])?;
    let mut rng = substream(cfg.seed, stream::MASK);
    for i in 0..n {
        let (h, w) = (lab_imgs[i].height, lab_imgs[i].width);
        let logits = teacher.infer(std::slice::from_ref(&syn_imgs[i]))?;
        let (_, pseudo) = pseudo_label_from_logits(&logits[0], cfg.connectivity)?;
        let gt = one_hot(&lab_masks[i], cfg.num_classes)?;
        let rect = sample_blend_region(h, w, cfg.patch_fraction, &mut rng)?;
        let mask = build_blend_mask(h, w, rect, cfg.smooth_kernel)?;
        let coeff = ImageSlice::from_vec(1, h, w, mask.smooth.clone())?;
        let mix = make_complementary_mixtures((&lab_imgs[i], &gt), (&syn_imgs[i], &pseudo), mask)?;
        let dir = &common.out;
        save_image_u8(&dir.join(format!("pair{i}_v1.png")), &mix.v1)?;
        save_image_u8(&dir.join(format!("pair{i}_v2.png")), &mix.v2)?;
        save_mask(&dir.join(format!("pair{i}_l1.png")), &argmax_labels(&mix.l1))?;
        save_mask(&dir.join(format!("pair{i}_l2.png")), &argmax_labels(&mix.l2))?;
        save_image_u8(&dir.join(format!("pair{i}_mask.png")), &coeff)?;
    }
    println!("wrote {n} preview pairs to {}", common.out.display());
    Ok(())
}

fn cmd_evaluate(common: &Common, checkpoint: &Path, split: Option<&Path>, pool: EvalPool) -> Result<()> {
    let cfg = common.prepare()?;
    let split = load_split(&cfg, split)?;
    let entries = match pool {
        EvalPool::Val => &split.val,
        EvalPool::Test => &split.test,
    };
    let (imgs, masks) = load_labeled(entries, cfg.num_classes)?;
    let model = load_student(checkpoint)?;
    let preds = predict_labels(model.as_ref(), &imgs, 8)?;
    let record = MetricsRecord::compute(&preds, &masks, model.num_classes(), true)?;
    write(&common.out.join("metrics.csv"), &record.to_csv())?;
    write(&common.out.join("metrics.json"), &record.to_json())?;
    println!(
        "dice {:.2} jaccard {:.2} hd95 {} asd {}",
        record.mean_dice,
        record.mean_jaccard,
        record.mean_hd95.map_or("na".into(), |v| format!("{v:.2}")),
        record.mean_asd.map_or("na".into(), |v| format!("{v:.2}"))
    );
    Ok(())
}

fn cmd_diagnose_kde(
    common: &Common,
    checkpoint: &Path,
    split: Option<&Path>,
    class: usize,
    statistic: Statistic,
) -> Result<()> {
    let cfg = common.prepare()?;
    let split = load_split(&cfg, split)?;
    let labeled = load_images(&split.labeled)?;
    let unlabeled = load_images(&split.unlabeled)?;
    let model = load_student(checkpoint)?;
    let report = domain_gap_report(model.as_ref(), &labeled, &unlabeled, class, statistic.into())?;
    write(&common.out.join("kde.csv"), &report.to_csv())?;
    write(
        &common.out.join("kde.svg"),
        &report.to_svg(&format!("class {class} {:?}", GapStatistic::from(statistic))),
    )?;
    let summary = serde_json::json!({
        "class": class,
        "statistic": GapStatistic::from(statistic),
        "gap": report.gap,
        "labeled_bandwidth": report.labeled.bandwidth,
        "unlabeled_bandwidth": report.unlabeled.bandwidth,
        "labeled_values": report.labeled_values,
        "unlabeled_values": report.unlabeled_values,
    });
    write(
        &common.out.join("gap.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    println!("gap {:.4}", report.gap);
    Ok(())
}

fn cmd_make_toy_data(common: &Common, n: usize, shift: f64) -> Result<()> {
    let cfg = common.prepare()?;
    let ds = make_toy_data(&common.out, n, shift, cfg.seed)?;
    println!("wrote {} images to {}", ds.records.len(), ds.root.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Split { common } => cmd_split(common),
        Command::Train { common, split, resume } => cmd_train(common, split.as_deref(), *resume),
        Command::PseudoLabel {
            common,
            checkpoint,
            split,
        } => cmd_pseudo_label(common, checkpoint, split.as_deref()),
        Command::AugmentPreview {
            common,
            checkpoint,
            split,
            count,
        } => cmd_augment_preview(common, checkpoint.as_deref(), split.as_deref(), *count),
        Command::Evaluate {
            common,
            checkpoint,
            split,
            pool,
        } => cmd_evaluate(common, checkpoint, split.as_deref(), *pool),
        Command::DiagnoseKde {
            common,
            checkpoint,
            split,
            class,
            statistic,
        } => cmd_diagnose_kde(common, checkpoint, split.as_deref(), *class, *statistic),
        Command::MakeToyData { common, n, shift } => cmd_make_toy_data(common, *n, *shift),
    }
}

/// Parse `argv` (including the program name) and run; returns the exit code.
///
/// 0 on success, 1 on a domain error, 2 on a usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
