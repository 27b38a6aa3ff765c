//! Run configuration: TOML key-value file, defaults, `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{DiceMode, LossConfig, Reduction};
use crate::model::{ReferenceNetSpec, SaInputMode};
use crate::pseudo_label::Connectivity;

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr · (1 − t/T)^0.9`.
    Poly,
}

/// Every tunable of a run. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub labeled_fraction: f64,
    /// Side fraction of the blend rectangle.
    pub patch_fraction: f64,
    /// Odd mean-filter size used to smooth the blend mask.
    pub smooth_kernel: usize,
    /// Weight of the similarity-alignment loss.
    pub lambda_sa: f64,
    pub ema_decay: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    pub iterations: usize,
    /// Supervised warm-up length; unset means 10% of `iterations`.
    pub warmup_iterations: Option<usize>,
    pub eval_every: usize,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub seed: u64,
    pub num_classes: usize,
    pub in_channels: usize,
    pub widths: Vec<usize>,
    pub sa_input_mode: SaInputMode,
    pub embed_dim: usize,
    pub connectivity: Connectivity,
    pub dice_epsilon: f64,
    pub prob_clamp: f64,
    pub ce_reduction: Reduction,
    pub dice_mode: DiceMode,
    /// Train on the blended soft targets; `false` hardens them by argmax.
    pub soft_targets: bool,
    /// `false` trains on labeled data only for every iteration.
    pub semi_supervised: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            labeled_fraction: 0.1,
            patch_fraction: 2.0 / 3.0,
            smooth_kernel: 3,
            lambda_sa: 0.1,
            ema_decay: 0.99,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_schedule: LrSchedule::Constant,
            iterations: 2000,
            warmup_iterations: None,
            eval_every: 100,
            batch_labeled: 8,
            batch_unlabeled: 8,
            seed: 0,
            num_classes: 3,
            in_channels: 1,
            widths: vec![16, 32, 64],
            sa_input_mode: SaInputMode::ProbWeightedImage,
            embed_dim: 64,
            connectivity: Connectivity::Eight,
            dice_epsilon: 1e-5,
            prob_clamp: 1e-7,
            ce_reduction: Reduction::MeanOverPixels,
            dice_mode: DiceMode::BatchGlobal,
            soft_targets: true,
            semi_supervised: true,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Layer `overrides` (`key=value`) over `file` (TOML text) over defaults.
    pub fn resolve(file: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(text) => toml::from_str::<toml::Table>(text).map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::resolve(Some(&text), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.patch_fraction > 0.0 && self.patch_fraction <= 1.0) {
            return fail(format!("patch_fraction {} outside (0, 1]", self.patch_fraction));
        }
        if self.smooth_kernel == 0 || self.smooth_kernel % 2 == 0 {
            return fail(format!("smooth_kernel {} must be odd and >= 1", self.smooth_kernel));
        }
        if !(self.lambda_sa >= 0.0) {
            return fail("lambda_sa must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return fail(format!("ema_decay {} outside [0, 1)", self.ema_decay));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction < 1.0) {
            return fail(format!("labeled_fraction {} outside (0, 1)", self.labeled_fraction));
        }
        if !(self.lr > 0.0) || !(self.momentum >= 0.0) || !(self.weight_decay >= 0.0) {
            return fail("lr must be > 0, momentum and weight_decay >= 0".into());
        }
        if self.num_classes < 2 {
            return fail("num_classes must be >= 2".into());
        }
        if self.batch_labeled == 0 || self.batch_unlabeled == 0 {
            return fail("batch sizes must be >= 1".into());
        }
        if self.batch_labeled != self.batch_unlabeled {
            return fail("batch_labeled and batch_unlabeled must match (images are mixed pairwise)".into());
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return fail("widths must be non-empty and positive".into());
        }
        if self.embed_dim == 0 || self.in_channels == 0 || self.eval_every == 0 {
            return fail("embed_dim, in_channels and eval_every must be >= 1".into());
        }
        if self.warmup_iterations.is_some_and(|w| w > self.iterations) {
            return fail("warmup_iterations exceeds iterations".into());
        }
        self.loss_config().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn warmup(&self) -> usize {
        self.warmup_iterations.unwrap_or(self.iterations / 10)
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda_sa,
            epsilon: self.dice_epsilon,
            prob_clamp: self.prob_clamp,
            ce_reduction: self.ce_reduction,
            dice_mode: self.dice_mode,
        }
    }

    pub fn net_spec(&self) -> ReferenceNetSpec {
        ReferenceNetSpec {
            in_channels: self.in_channels,
            num_classes: self.num_classes,
            widths: self.widths.clone(),
        }
    }

    /// Fully resolved config as TOML, with the warm-up length made explicit.
    pub fn to_toml(&self) -> String {
        let mut c = self.clone();
        c.warmup_iterations = Some(self.warmup());
        toml::to_string(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.patch_fraction, 2.0 / 3.0);
        assert_eq!(c.smooth_kernel, 3);
        assert_eq!(c.lambda_sa, 0.1);
        c.validate().unwrap();
    }

    #[test]
    fn three_layer_precedence() {
        let file = "lambda_sa = 0.5\nseed = 3\nlr = 0.02\n";
        let c = RunConfig::resolve(Some(file), &["seed=9".into()]).unwrap();
        assert_eq!(c.seed, 9); // override beats file
        assert_eq!(c.lambda_sa, 0.5); // file beats default
        assert_eq!(c.lr, 0.02);
        assert_eq!(c.momentum, 0.9); // default
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::resolve(Some("lamda_sa = 0.1"), &[]).is_err());
        assert!(RunConfig::resolve(None, &["nope=1".into()]).is_err());
        assert!(RunConfig::resolve(None, &["seed".into()]).is_err());
    }

    #[test]
    fn invariants_checked() {
        assert!(RunConfig::resolve(None, &["smooth_kernel=4".into()]).is_err());
        assert!(RunConfig::resolve(None, &["ema_decay=1.0".into()]).is_err());
        assert!(RunConfig::resolve(None, &["patch_fraction=0".into()]).is_err());
        assert!(RunConfig::resolve(None, &["lambda_sa=-1".into()]).is_err());
    }

    #[test]
    fn enum_and_list_overrides() {
        assert!(RunConfig::resolve(None, &["connectivity=6".into()]).is_err());
        let c = RunConfig::resolve(
            None,
            &[
                "sa_input_mode=raw_image".into(),
                "widths=[4, 8]".into(),
                "connectivity=4".into(),
                "data_root=/tmp/x".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.sa_input_mode, SaInputMode::RawImage);
        assert_eq!(c.widths, vec![4, 8]);
        assert_eq!(c.connectivity, Connectivity::Four);
        assert_eq!(c.data_root, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn resolved_toml_round_trips() {
        let c = RunConfig::default();
        let back = RunConfig::resolve(Some(&c.to_toml()), &[]).unwrap();
        assert_eq!(back.warmup(), c.warmup());
        assert_eq!(back.lambda_sa, c.lambda_sa);
    }
}
