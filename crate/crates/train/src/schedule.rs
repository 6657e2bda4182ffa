//! Training configuration and learning-rate schedule.

use flownet_core::augment::AugmentRanges;
use flownet_core::kvconfig::{ConfigFields, KvConfig};

use crate::list::List;
use crate::loss::DEFAULT_LOSS_WEIGHTS;
use crate::{Result, TrainError};

/// Fraction of the reference dataset held out for validation (640 of
/// 22,872).
pub const REFERENCE_VAL_FRACTION: f64 = 640.0 / 22_872.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    /// Iteration of the first learning-rate step (before dividing by `scale`).
    pub step_start: f64,
    pub step_every: f64,
    pub step_factor: f64,
    pub warmup: bool,
    pub warmup_start_lr: f64,
    pub warmup_end_lr: f64,
    pub warmup_span: f64,
    pub total_iters: usize,
    /// Divides every iteration threshold of the schedule.
    pub scale: f64,
    pub finetune_lr: f64,
    pub seed: u64,
    pub val_fraction: f64,
    /// Validation interval in iterations (before dividing by `scale`).
    pub val_every: f64,
    /// Checkpoint interval in iterations (before dividing by `scale`).
    pub checkpoint_every: f64,
    pub loss_weights: List<f64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub augment: bool,
    /// Geometric and photometric ranges; configured under `ranges.`.
    pub ranges: AugmentRanges,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            base_lr: 1e-4,
            step_start: 300_000.0,
            step_every: 100_000.0,
            step_factor: 0.5,
            warmup: false,
            warmup_start_lr: 1e-6,
            warmup_end_lr: 1e-4,
            warmup_span: 10_000.0,
            total_iters: 2_000,
            scale: 1.0,
            finetune_lr: 1e-6,
            seed: 0,
            val_fraction: REFERENCE_VAL_FRACTION,
            val_every: 500.0,
            checkpoint_every: 2_000.0,
            loss_weights: List(DEFAULT_LOSS_WEIGHTS.to_vec()),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            augment: true,
            ranges: AugmentRanges::default(),
        }
    }
}

/// Flat fields; the ranges are handled as a section in [`TrainConfig::from_kv`].
#[derive(Default)]
struct Flat {
    c: TrainConfig,
}

flownet_core::kv_fields!(Flat {
    "batch_size" => c.batch_size,
    "base_lr" => c.base_lr,
    "step_start" => c.step_start,
    "step_every" => c.step_every,
    "step_factor" => c.step_factor,
    "warmup.enabled" => c.warmup,
    "warmup.start_lr" => c.warmup_start_lr,
    "warmup.end_lr" => c.warmup_end_lr,
    "warmup.span" => c.warmup_span,
    "total_iters" => c.total_iters,
    "scale" => c.scale,
    "finetune_lr" => c.finetune_lr,
    "seed" => c.seed,
    "val_fraction" => c.val_fraction,
    "val_every" => c.val_every,
    "checkpoint_every" => c.checkpoint_every,
    "loss_weights" => c.loss_weights,
    "adam.beta1" => c.adam_beta1,
    "adam.beta2" => c.adam_beta2,
    "adam.eps" => c.adam_eps,
    "augment.enabled" => c.augment,
});

const RANGES_SECTION: &str = "ranges";

impl TrainConfig {
    /// Defaults overridden by `kv`; range keys live under `ranges.`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut flat = Flat::from_kv(&kv.without_sections(&[RANGES_SECTION]))?;
        flat.c.ranges = AugmentRanges::from_kv(&kv.section(RANGES_SECTION))?;
        flat.c.validate()?;
        Ok(flat.c)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = Flat { c: self.clone() }.to_kv();
        kv.extend_section(RANGES_SECTION, &self.ranges.to_kv());
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let lrs = [self.base_lr, self.warmup_start_lr, self.warmup_end_lr, self.finetune_lr];
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if lrs.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return fail("learning rates must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return fail("scale must be positive");
        }
        if !(self.step_every > 0.0 && self.step_start >= 0.0 && self.step_factor > 0.0) {
            return fail("step schedule must have positive interval and factor");
        }
        if self.warmup && !(self.warmup_span > 0.0 && self.warmup_span / self.scale < self.total_iters as f64) {
            return fail("warmup span must be positive and shorter than total_iters");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return fail("val_fraction must be in [0, 1)");
        }
        if !(self.val_every > 0.0 && self.checkpoint_every > 0.0) {
            return fail("validation and checkpoint intervals must be positive");
        }
        if self.loss_weights.0.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return fail("loss weights must be non-negative");
        }
        self.ranges.validate()?;
        Ok(())
    }

    /// Scaled interval in iterations, at least 1.
    fn interval(&self, every: f64) -> usize {
        ((every / self.scale).round() as usize).max(1)
    }

    pub fn val_interval(&self) -> usize {
        self.interval(self.val_every)
    }

    pub fn checkpoint_interval(&self) -> usize {
        self.interval(self.checkpoint_every)
    }
}

/// Learning rate at `iter`: linear warmup (if enabled), then `base_lr`
/// until `step_start`, then multiplied by `step_factor` at `step_start` and
/// every `step_every` after it. Thresholds are divided by `scale`.
pub fn lr_schedule(iter: usize, c: &TrainConfig) -> f64 {
    let it = iter as f64;
    let span = c.warmup_span / c.scale;
    if c.warmup && it < span {
        return c.warmup_start_lr + (it / span) * (c.warmup_end_lr - c.warmup_start_lr);
    }
    let start = c.step_start / c.scale;
    if it < start {
        return c.base_lr;
    }
    let steps = ((it - start) / (c.step_every / c.scale)).floor() + 1.0;
    c.base_lr * c.step_factor.powi(steps as i32)
}
