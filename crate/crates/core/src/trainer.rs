//! Joint optimisation loop: warm-up, pseudo-labelling, soft-mix, losses,
//! SGD with momentum, EMA teacher, evaluation and checkpointing.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use crate::data_io::{load_image, load_pair, LrSchedule, ManifestEntry, RunConfig, SplitManifest};
use crate::error::{Error, Result};
use crate::eval::evaluate_model;
use crate::losses::{sa_loss, soft_segmentation_loss, softmax_backward, total_loss};
use crate::model::{
    reference_net, sa_input, sa_input_backward, stub_extractor, Checkpoint, FeatureExtractor, Mode, SaInputMode,
    SegmentationModel,
};
use crate::pseudo_label::{argmax_labels, ema_update, one_hot, pseudo_label_from_logits, softmax_probs, EmaState};
use crate::rng::{stream, substream, Rng, RngState};
use crate::soft_mix::{build_blend_mask, make_complementary_mixtures, sample_blend_region};
use crate::tensor::{ClassMap, HardLabelMap, ImageSlice, ParameterVector, SoftLabelMap};

/// SGD-with-momentum state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: ParameterVector,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(len: usize, lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(lr >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0) {
            return Err(Error::invalid("lr, momentum and weight decay must be >= 0"));
        }
        Ok(Self {
            velocity: ParameterVector::zeros(len),
            lr,
            momentum,
            weight_decay,
        })
    }
}

/// `v ← m·v + g + wd·p`, `p ← p − lr·v`.
pub fn sgd_step(params: &mut ParameterVector, grads: &ParameterVector, state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::shape(format!(
            "sgd: {} params, {} grads, {} velocity",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} is {}", grads[i])));
    }
    for ((p, v), g) in params.iter_mut().zip(state.velocity.iter_mut()).zip(grads.iter()) {
        *v = state.momentum * *v + g + state.weight_decay * *p;
        *p -= state.lr * *v;
    }
    Ok(())
}

/// Learning rate at zero-based iteration `t`.
pub fn learning_rate(cfg: &RunConfig, t: usize) -> f64 {
    match cfg.lr_schedule {
        LrSchedule::Constant => cfg.lr,
        LrSchedule::Poly => cfg.lr * (1.0 - t as f64 / cfg.iterations.max(1) as f64).max(0.0).powf(0.9),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    SelfTraining,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::SelfTraining => "self_training",
        }
    }
}

/// One optimisation step as written to the log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: u64,
    pub phase: Phase,
    pub l_soft: f64,
    pub l_sa: f64,
    pub total: f64,
    /// Mean synthetic-to-real nearest-neighbour distance; absent in warm-up.
    pub mean_nn_distance: Option<f64>,
    pub lr: f64,
}

impl fmt::Display for TrainRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iteration={}\tphase={}\tl_soft={}\tl_sa={}\ttotal={}\tmean_nn_distance=",
            self.iteration,
            self.phase.as_str(),
            self.l_soft,
            self.l_sa,
            self.total
        )?;
        match self.mean_nn_distance {
            Some(d) => write!(f, "{d}")?,
            None => f.write_str("na")?,
        }
        write!(f, "\tlr={}", self.lr)
    }
}

impl TrainRecord {
    /// Parse a line written by the `Display` impl.
    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad log line '{line}'"));
        let fields: Vec<(&str, &str)> = line
            .split('\t')
            .map(|kv| kv.split_once('=').ok_or_else(bad))
            .collect::<Result<_>>()?;
        let keys = ["iteration", "phase", "l_soft", "l_sa", "total", "mean_nn_distance", "lr"];
        if fields.len() != keys.len() || fields.iter().zip(keys).any(|((k, _), want)| *k != want) {
            return Err(bad());
        }
        let num = |i: usize| fields[i].1.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            iteration: fields[0].1.parse().map_err(|_| bad())?,
            phase: match fields[1].1 {
                "warmup" => Phase::Warmup,
                "self_training" => Phase::SelfTraining,
                _ => return Err(bad()),
            },
            l_soft: num(2)?,
            l_sa: num(3)?,
            total: num(4)?,
            mean_nn_distance: if fields[5].1 == "na" { None } else { Some(num(5)?) },
            lr: num(6)?,
        })
    }

    fn check_finite(&self) -> Result<()> {
        let all = [self.l_soft, self.l_sa, self.total, self.mean_nn_distance.unwrap_or(0.0)];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("loss at iteration {}: {self}", self.iteration)))
        }
    }
}

/// Labeled images with one-hot ground truth.
#[derive(Debug, Clone, Default)]
pub struct LabeledBatch {
    pub images: Vec<ImageSlice>,
    pub labels: Vec<SoftLabelMap>,
}

impl LabeledBatch {
    pub fn from_masks(images: Vec<ImageSlice>, masks: &[HardLabelMap], classes: usize) -> Result<Self> {
        if images.len() != masks.len() {
            return Err(Error::shape("image and mask counts differ"));
        }
        let labels = masks.iter().map(|m| one_hot(m, classes)).collect::<Result<_>>()?;
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Value and parameter gradient of the joint loss.
#[derive(Debug, Clone)]
pub struct JointObjective {
    pub l_soft: f64,
    pub l_sa: f64,
    pub total: f64,
    pub grads: ParameterVector,
}

/// Student, EMA teacher, optimizer and frozen extractor of one run.
pub struct Learner {
    pub cfg: RunConfig,
    pub student: Box<dyn SegmentationModel>,
    teacher_net: Box<dyn SegmentationModel>,
    pub ema: EmaState,
    pub opt: OptimizerState,
    pub extractor: Box<dyn FeatureExtractor>,
    /// Number of steps taken so far.
    pub iteration: u64,
}

fn harden(t: &SoftLabelMap) -> Result<SoftLabelMap> {
    one_hot(&argmax_labels(t), t.classes)
}

fn add_scaled(dst: &mut [ClassMap], src: &[ClassMap], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        for (x, y) in d.data.iter_mut().zip(&s.data) {
            *x += a * y;
        }
    }
}

impl Learner {
    /// Fresh learner: reference network and stub extractor seeded from `cfg.seed`.
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let student = reference_net(cfg.net_spec(), cfg.seed)?;
        let teacher = reference_net(cfg.net_spec(), cfg.seed)?;
        let extractor = stub_extractor(cfg.seed, cfg.embed_dim)?;
        Self::with_parts(cfg, Box::new(student), Box::new(teacher), Box::new(extractor))
    }

    /// Learner over arbitrary parts; the teacher starts as a copy of the student.
    pub fn with_parts(
        cfg: &RunConfig,
        mut student: Box<dyn SegmentationModel>,
        mut teacher_net: Box<dyn SegmentationModel>,
        extractor: Box<dyn FeatureExtractor>,
    ) -> Result<Self> {
        let params = student.params();
        teacher_net.set_params(&params)?;
        teacher_net.set_mode(Mode::Inference);
        student.set_mode(Mode::Train);
        Ok(Self {
            cfg: cfg.clone(),
            ema: EmaState::new(params.clone(), cfg.ema_decay)?,
            opt: OptimizerState::new(params.len(), cfg.lr, cfg.momentum, cfg.weight_decay)?,
            student,
            teacher_net,
            extractor,
            iteration: 0,
        })
    }

    pub fn teacher_params(&self) -> &ParameterVector {
        &self.ema.teacher
    }

    /// Overwrite the teacher with the current student.
    pub fn copy_student_to_teacher(&mut self) -> Result<()> {
        self.ema.teacher = self.student.params();
        self.teacher_net.set_params(&self.ema.teacher)
    }

    /// Teacher network holding the current EMA parameters.
    pub fn teacher(&self) -> &dyn SegmentationModel {
        self.teacher_net.as_ref()
    }

    fn sgd(&mut self, grads: &ParameterVector) -> Result<()> {
        let mut params = self.student.params();
        self.opt.lr = learning_rate(&self.cfg, self.iteration as usize);
        sgd_step(&mut params, grads, &mut self.opt)?;
        self.student.set_params(&params)
    }

    /// Supervised step on labeled images only.
    pub fn warmup_step(&mut self, batch: &LabeledBatch) -> Result<TrainRecord> {
        if batch.is_empty() {
            return Err(Error::invalid("empty labeled batch"));
        }
        let logits = self.student.forward(&batch.images)?;
        let probs: Vec<SoftLabelMap> = logits.iter().map(softmax_probs).collect::<Result<_>>()?;
        let loss = soft_segmentation_loss(&probs, &batch.labels, &self.cfg.loss_config())?;
        let lr = learning_rate(&self.cfg, self.iteration as usize);
        let record = TrainRecord {
            iteration: self.iteration,
            phase: Phase::Warmup,
            l_soft: loss.value,
            l_sa: 0.0,
            total: loss.value,
            mean_nn_distance: None,
            lr,
        };
        record.check_finite()?;
        let grad_logits: Vec<ClassMap> = probs
            .iter()
            .zip(&loss.grad)
            .map(|(p, g)| softmax_backward(p, g))
            .collect::<Result<_>>()?;
        let grads = self.student.backward(&grad_logits)?;
        self.sgd(&grads)?;
        self.iteration += 1;
        Ok(record)
    }

    /// Joint loss on `2B` mixed images (first half Ṽ₁, second half Ṽ₂) and
    /// its parameter gradient through the student.
    ///
    /// `L_soft` averages the two halves; `L_SA` compares embeddings of the
    /// mixed images with those of the labeled batch.
    pub fn objective(
        &mut self,
        mixed: &[ImageSlice],
        targets: &[SoftLabelMap],
        labeled: &LabeledBatch,
    ) -> Result<JointObjective> {
        let cfg = &self.cfg;
        if mixed.len() != targets.len() || mixed.len() % 2 != 0 || mixed.is_empty() {
            return Err(Error::shape(format!(
                "{} mixed images with {} targets; need an even, matching count",
                mixed.len(),
                targets.len()
            )));
        }
        let b = mixed.len() / 2;
        let logits = self.student.forward(mixed)?;
        let probs: Vec<SoftLabelMap> = logits.iter().map(softmax_probs).collect::<Result<_>>()?;
        let lc = cfg.loss_config();
        let first = soft_segmentation_loss(&probs[..b], &targets[..b], &lc)?;
        let second = soft_segmentation_loss(&probs[b..], &targets[b..], &lc)?;
        let l_soft = 0.5 * (first.value + second.value);
        let mut grad_probs: Vec<ClassMap> = first.grad.into_iter().chain(second.grad).collect();
        for g in grad_probs.iter_mut() {
            g.data.iter_mut().for_each(|x| *x *= 0.5);
        }

        let channels = self.extractor.input_spec().channels;
        let mode = cfg.sa_input_mode;
        let syn_in: Vec<ImageSlice> = mixed
            .iter()
            .zip(&probs)
            .map(|(im, p)| sa_input(im, p, mode, channels))
            .collect::<Result<_>>()?;
        let real_in: Vec<ImageSlice> = labeled
            .images
            .iter()
            .zip(&labeled.labels)
            .map(|(im, l)| sa_input(im, l, mode, channels))
            .collect::<Result<_>>()?;
        let syn_emb = self.extractor.embed(&syn_in)?;
        let real_emb = self.extractor.embed(&real_in)?;
        let (sa, _) = sa_loss(&syn_emb, &real_emb)?;

        if cfg.lambda_sa > 0.0 && mode != SaInputMode::RawImage {
            let grad_in = self.extractor.embed_vjp(&syn_in, &sa.grad)?.ok_or_else(|| {
                Error::invalid("extractor has no input gradient; use sa_input_mode = \"raw_image\"")
            })?;
            for (j, gi) in grad_in.iter().enumerate() {
                let gp = sa_input_backward(&mixed[j], &probs[j], mode, gi)?;
                add_scaled(&mut grad_probs[j..=j], std::slice::from_ref(&gp), cfg.lambda_sa);
            }
        }

        let grad_logits: Vec<ClassMap> = probs
            .iter()
            .zip(&grad_probs)
            .map(|(p, g)| softmax_backward(p, g))
            .collect::<Result<_>>()?;
        let grads = self.student.backward(&grad_logits)?;
        Ok(JointObjective {
            l_soft,
            l_sa: sa.value,
            total: total_loss(l_soft, sa.value, cfg.lambda_sa),
            grads,
        })
    }

    /// Pseudo-labels of the current teacher for `images`.
    pub fn pseudo_labels(&self, images: &[ImageSlice]) -> Result<Vec<SoftLabelMap>> {
        self.teacher_net
            .infer(images)?
            .iter()
            .map(|l| pseudo_label_from_logits(l, self.cfg.connectivity).map(|(_, soft)| soft))
            .collect()
    }

    /// One self-training step on paired labeled and synthetic images.
    pub fn train_step(&mut self, labeled: &LabeledBatch, synthetic: &[ImageSlice], rng: &mut Rng) -> Result<TrainRecord> {
        let b = labeled.len();
        if b == 0 || synthetic.len() != b {
            return Err(Error::invalid(format!(
                "batches must be non-empty and paired: {b} labeled, {} synthetic",
                synthetic.len()
            )));
        }
        let cfg = self.cfg.clone();
        let pseudo = self.pseudo_labels(synthetic)?;

        let (images, targets) = mix_batch(&cfg, labeled, synthetic, &pseudo, rng)?;
        let obj = self.objective(&images, &targets, labeled)?;
        let record = TrainRecord {
            iteration: self.iteration,
            phase: Phase::SelfTraining,
            l_soft: obj.l_soft,
            l_sa: obj.l_sa,
            total: obj.total,
            mean_nn_distance: Some(obj.l_sa),
            lr: learning_rate(&cfg, self.iteration as usize),
        };
        record.check_finite()?;
        self.sgd(&obj.grads)?;
        ema_update(&mut self.ema, &self.student.params())?;
        self.teacher_net.set_params(&self.ema.teacher)?;
        self.iteration += 1;
        Ok(record)
    }
}

/// Soft-mix every labeled/synthetic pair with its own mask. Returns the
/// `2B` images (all Ṽ₁ then all Ṽ₂) and their targets.
pub fn mix_batch(
    cfg: &RunConfig,
    labeled: &LabeledBatch,
    synthetic: &[ImageSlice],
    pseudo: &[SoftLabelMap],
    rng: &mut Rng,
) -> Result<(Vec<ImageSlice>, Vec<SoftLabelMap>)> {
    let b = labeled.len();
    if b == 0 || synthetic.len() != b || pseudo.len() != b {
        return Err(Error::invalid("mixing needs equally many labeled, synthetic and pseudo-labeled items"));
    }
    let (h, w) = (labeled.images[0].height, labeled.images[0].width);
    let mut images = vec![ImageSlice::zeros(0, 0, 0); 2 * b];
    let mut targets = vec![ClassMap::zeros(0, 0, 0); 2 * b];
    for i in 0..b {
        let rect = sample_blend_region(h, w, cfg.patch_fraction, rng)?;
        let mask = build_blend_mask(h, w, rect, cfg.smooth_kernel)?;
        let mix = make_complementary_mixtures(
            (&labeled.images[i], &labeled.labels[i]),
            (&synthetic[i], &pseudo[i]),
            mask,
        )?;
        images[i] = mix.v1;
        images[b + i] = mix.v2;
        targets[i] = mix.l1;
        targets[b + i] = mix.l2;
    }
    if !cfg.soft_targets {
        targets = targets.iter().map(harden).collect::<Result<_>>()?;
    }
    Ok((images, targets))
}

/// Images of a split loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub labeled: LabeledBatch,
    pub labeled_masks: Vec<HardLabelMap>,
    pub unlabeled: Vec<ImageSlice>,
    pub val_images: Vec<ImageSlice>,
    pub val_masks: Vec<HardLabelMap>,
}

impl LoadedSplit {
    pub fn load(split: &SplitManifest, classes: usize) -> Result<Self> {
        let pairs = |entries: &[ManifestEntry]| -> Result<(Vec<ImageSlice>, Vec<HardLabelMap>)> {
            let mut imgs = Vec::new();
            let mut masks = Vec::new();
            for e in entries {
                let mask = e
                    .mask_path
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("{} has no mask", e.image_path.display())))?;
                let (i, m) = load_pair(&e.image_path, mask, classes)?;
                imgs.push(i);
                masks.push(m);
            }
            Ok((imgs, masks))
        };
        let (li, lm) = pairs(&split.labeled)?;
        let (val_images, val_masks) = pairs(&split.val)?;
        let unlabeled = split
            .unlabeled
            .iter()
            .map(|e| load_image(&e.image_path))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            labeled: LabeledBatch::from_masks(li, &lm, classes)?,
            labeled_masks: lm,
            unlabeled,
            val_images,
            val_masks,
        })
    }

    fn check(&self, cfg: &RunConfig) -> Result<()> {
        if self.labeled.is_empty() {
            return Err(Error::invalid("split has no labeled images"));
        }
        if cfg.semi_supervised && self.unlabeled.is_empty() {
            return Err(Error::invalid("split has no unlabeled images"));
        }
        if self.val_images.is_empty() {
            return Err(Error::invalid("split has no validation images"));
        }
        let first = &self.labeled.images[0];
        let div = cfg.net_spec().divisor();
        let all = self
            .labeled
            .images
            .iter()
            .chain(&self.unlabeled)
            .chain(&self.val_images);
        for im in all {
            if im.height != first.height || im.width != first.width || im.channels != cfg.in_channels {
                return Err(Error::shape(format!(
                    "all images must be {}x{}x{}; found {}x{}x{}",
                    cfg.in_channels, first.height, first.width, im.channels, im.height, im.width
                )));
            }
        }
        if first.height % div != 0 || first.width % div != 0 {
            return Err(Error::shape(format!("image size must be divisible by {div}")));
        }
        Ok(())
    }
}

/// Options of [`run_training`] outside the run config.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Continue from `last.ckpt` in the output directory when present.
    pub resume: bool,
    /// Stop (as if interrupted) once this many iterations have run.
    pub stop_after: Option<usize>,
}

/// Files and scores produced by [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub log: PathBuf,
    /// Best validation mean foreground Dice as a fraction.
    pub best_score: f64,
    /// Iteration reached.
    pub iterations: u64,
    pub records: Vec<TrainRecord>,
}

pub const LOG_FILE: &str = "train.log";
pub const EVAL_FILE: &str = "eval.tsv";
pub const BEST_CKPT: &str = "best.ckpt";
pub const LAST_CKPT: &str = "last.ckpt";
pub const CONFIG_FILE: &str = "config.toml";

fn sample_indices(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|_| rng.gen_range(0..n)).collect()
}

fn keep_lines_before(path: &Path, iteration: u64) -> Result<String> {
    if !path.exists() {
        return Ok(String::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let it: u64 = line
            .split('\t')
            .next()
            .and_then(|f| f.rsplit('=').next())
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad line in {}: '{line}'", path.display())))?;
        if it < iteration {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    Ok(kept)
}

fn write_file(path: &Path, data: &str) -> Result<()> {
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Train on a loaded split, writing config, log, evaluation table and
/// checkpoints under `out_dir`.
pub fn train_loaded(cfg: &RunConfig, data: &LoadedSplit, out_dir: &Path, opts: TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.check(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join(CONFIG_FILE), &cfg.to_toml())?;

    let log_path = out_dir.join(LOG_FILE);
    let eval_path = out_dir.join(EVAL_FILE);
    let best_path = out_dir.join(BEST_CKPT);
    let last_path = out_dir.join(LAST_CKPT);

    let mut learner = Learner::new(cfg)?;
    let mut mask_rng = substream(cfg.seed, stream::MASK);
    let mut shuffle_rng = substream(cfg.seed, stream::SHUFFLE);
    let mut best_score = f64::NEG_INFINITY;

    let mut log_text = String::new();
    let mut eval_text = String::new();
    if opts.resume && last_path.exists() {
        let ck = Checkpoint::load(&last_path)?;
        if ck.spec != cfg.net_spec() || ck.rngs.len() != 2 {
            return Err(Error::Config("checkpoint does not match the configured network".into()));
        }
        learner.student.set_params(&ck.student)?;
        learner.ema.teacher = ck.teacher.clone();
        learner.teacher_net.set_params(&ck.teacher)?;
        learner.opt.velocity = ck.velocity.clone();
        learner.iteration = ck.iteration;
        mask_rng = ck.rngs[0].restore();
        shuffle_rng = ck.rngs[1].restore();
        best_score = ck.best_score;
        log_text = keep_lines_before(&log_path, ck.iteration)?;
        eval_text = keep_lines_before(&eval_path, ck.iteration + 1)?;
    }
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    log.write_all(log_text.as_bytes()).map_err(|e| Error::io(&log_path, e))?;

    let checkpoint = |l: &Learner, best: f64, m: &Rng, s: &Rng| Checkpoint {
        iteration: l.iteration,
        best_score: best,
        spec: cfg.net_spec(),
        student: l.student.params(),
        teacher: l.ema.teacher.clone(),
        velocity: l.opt.velocity.clone(),
        rngs: vec![RngState::capture(m), RngState::capture(s)],
    };

    let warmup = if cfg.semi_supervised { cfg.warmup() } else { cfg.iterations };
    let total = cfg.iterations as u64;
    let stop = opts.stop_after.map_or(total, |s| (s as u64).min(total));
    let b = cfg.batch_labeled;
    let mut records = Vec::new();
    if learner.iteration == 0 && warmup == 0 {
        learner.copy_student_to_teacher()?;
    }
    while learner.iteration < stop {
        let t = learner.iteration;
        let li = sample_indices(&mut shuffle_rng, data.labeled.len(), b);
        let batch = LabeledBatch {
            images: li.iter().map(|&i| data.labeled.images[i].clone()).collect(),
            labels: li.iter().map(|&i| data.labeled.labels[i].clone()).collect(),
        };
        let record = if (t as usize) < warmup {
            let r = learner.warmup_step(&batch)?;
            if learner.iteration as usize == warmup {
                learner.copy_student_to_teacher()?;
            }
            r
        } else {
            let ui = sample_indices(&mut shuffle_rng, data.unlabeled.len(), b);
            let syn: Vec<ImageSlice> = ui.iter().map(|&i| data.unlabeled[i].clone()).collect();
            learner.train_step(&batch, &syn, &mut mask_rng)?
        };
        writeln!(log, "{record}").map_err(|e| Error::io(&log_path, e))?;
        records.push(record);

        let done = learner.iteration;
        if done % cfg.eval_every as u64 == 0 || done == total {
            learner.student.set_mode(Mode::Inference);
            let m = evaluate_model(learner.student.as_ref(), &data.val_images, &data.val_masks, false)?;
            learner.student.set_mode(Mode::Train);
            let score = m.mean_dice / 100.0;
            eval_text.push_str(&format!("iteration={done}\tmean_dice={score}\n"));
            write_file(&eval_path, &eval_text)?;
            if score > best_score {
                best_score = score;
                checkpoint(&learner, best_score, &mask_rng, &shuffle_rng).save(&best_path)?;
            }
            checkpoint(&learner, best_score, &mask_rng, &shuffle_rng).save(&last_path)?;
        }
    }
    checkpoint(&learner, best_score, &mask_rng, &shuffle_rng).save(&last_path)?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    Ok(TrainOutcome {
        best_checkpoint: best_path,
        last_checkpoint: last_path,
        log: log_path,
        best_score,
        iterations: learner.iteration,
        records,
    })
}

/// Load the split's images and train.
pub fn run_training(cfg: &RunConfig, split: &SplitManifest, out_dir: &Path, opts: TrainOptions) -> Result<TrainOutcome> {
    let data = LoadedSplit::load(split, cfg.num_classes)?;
    train_loaded(cfg, &data, out_dir, opts)
}

/// Student network restored from a checkpoint.
pub fn load_student(path: &Path) -> Result<Box<dyn SegmentationModel>> {
    let ck = Checkpoint::load(path)?;
    let mut net = reference_net(ck.spec.clone(), 0)?;
    net.set_params(&ck.student)?;
    net.set_mode(Mode::Inference);
    Ok(Box::new(net))
}

/// Teacher network restored from a checkpoint.
pub fn load_teacher(path: &Path) -> Result<Box<dyn SegmentationModel>> {
    let ck = Checkpoint::load(path)?;
    let mut net = reference_net(ck.spec.clone(), 0)?;
    net.set_params(&ck.teacher)?;
    net.set_mode(Mode::Inference);
    Ok(Box::new(net))
}
