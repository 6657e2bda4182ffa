//! Training loop, fine-tuning and checkpoint helpers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use flownet_core::augment::{apply_augmentation, sample_augmentation};
use flownet_core::kvconfig::{ConfigFields, KvConfig};
use flownet_core::rng::substream;
use flownet_core::scenegen::Sample;
use flownet_tensornet::{Adam, Checkpoint, Graph, ParamSet, TensorError};
use rand::seq::SliceRandom;

use crate::batch::make_batch;
use crate::evaluate::{evaluate, Predictor};
use crate::loss::multiscale_epe_loss;
use crate::model::{Model, ModelConfig};
use crate::schedule::{lr_schedule, TrainConfig};
use crate::split::SplitSpec;
use crate::{Result, TrainError};

/// Header of the metrics log.
pub const LOG_HEADER: &str = "iter\tlr\ttrain_loss\tval_epe";
pub const LOG_FILE: &str = "metrics.tsv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
/// Tag of fine-tuned checkpoints.
pub const FINETUNE_TAG: &str = "+ft";

const EPOCH_TAG: u64 = 0xE90C;
const AUGMENT_TAG: u64 = 0xA06;

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// Iterations completed.
    pub iter: usize,
    /// Learning rate of the last iteration.
    pub lr: f64,
    /// Mean training loss since the previous row.
    pub train_loss: f64,
    pub val_epe: Option<f64>,
}

impl LogRow {
    pub fn to_tsv(&self) -> String {
        let val = self.val_epe.map_or("-".to_string(), |v| format!("{v:.6}"));
        format!("{}\t{:e}\t{:.6}\t{val}", self.iter, self.lr, self.train_loss)
    }
}

/// Checkpoint file name for an iteration count.
pub fn checkpoint_name(iter: usize) -> String {
    format!("ckpt-{iter:07}.ckpt")
}

/// Writes parameters with the model config (under `model.`), the
/// iteration count and a tag such as `+ft`.
pub fn save_checkpoint(path: &Path, model: &Model, params: &ParamSet<f32>, iter: usize, tag: &str) -> Result<()> {
    let mut meta: Vec<(String, String)> = model
        .config()
        .to_kv()
        .iter()
        .map(|(k, v)| (format!("model.{k}"), v.to_string()))
        .collect();
    meta.push(("iter".into(), iter.to_string()));
    meta.push(("tag".into(), tag.to_string()));
    Checkpoint::new(meta, params).save(path)?;
    Ok(())
}

/// A loaded checkpoint: the rebuilt model, its parameters and tag.
pub struct LoadedModel {
    pub model: Model,
    pub params: ParamSet<f32>,
    pub tag: String,
    pub iter: usize,
}

impl LoadedModel {
    /// Display name such as `FlowNetS+ft`.
    pub fn name(&self) -> String {
        format!("{}{}", self.model.name(), self.tag)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedModel> {
    let ck = Checkpoint::load(path)?;
    let mut kv = KvConfig::new();
    for (k, v) in &ck.meta {
        if let Some(key) = k.strip_prefix("model.") {
            kv.set(key, v.clone());
        }
    }
    let model = Model::new(ModelConfig::from_kv(&kv)?)?;
    model.check_params(&ck.params)?;
    let iter = ck.meta_value("iter").and_then(|v| v.parse().ok()).unwrap_or(0);
    let tag = ck.meta_value("tag").unwrap_or("").to_string();
    Ok(LoadedModel {
        model,
        params: ck.params,
        tag,
        iter,
    })
}

/// Per-run settings beyond [`TrainConfig`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Where checkpoints and the metrics log go.
    pub out_dir: Option<PathBuf>,
    /// Overrides the schedule with a constant rate.
    pub constant_lr: Option<f64>,
    /// Also measures validation EPE before the first iteration.
    pub validate_initial: bool,
    /// Iteration count overriding `total_iters`.
    pub iterations: Option<usize>,
    /// Stored in every checkpoint.
    pub tag: String,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: ParamSet<f32>,
    pub log: Vec<LogRow>,
    /// `(iterations done, val EPE)` at every validation point.
    pub val_curve: Vec<(usize, f64)>,
}

/// Sequential batch order: one seeded permutation per epoch.
struct Sampler<'a> {
    indices: &'a [usize],
    seed: u64,
    epoch: usize,
    order: Vec<usize>,
}

impl<'a> Sampler<'a> {
    fn new(indices: &'a [usize], seed: u64) -> Self {
        let mut s = Self {
            indices,
            seed,
            epoch: usize::MAX,
            order: Vec::new(),
        };
        s.load_epoch(0);
        s
    }

    fn load_epoch(&mut self, epoch: usize) {
        if self.epoch != epoch {
            self.order = self.indices.to_vec();
            self.order.shuffle(&mut substream(self.seed, &[EPOCH_TAG, epoch as u64]));
            self.epoch = epoch;
        }
    }

    /// `(dataset index, epoch, position in epoch)` for global position `p`.
    fn at(&mut self, p: usize) -> (usize, usize, usize) {
        let n = self.indices.len();
        self.load_epoch(p / n);
        (self.order[p % n], p / n, p % n)
    }
}

fn write_log(dir: &Path, log: &[LogRow]) -> Result<()> {
    let mut f = fs::File::create(dir.join(LOG_FILE))?;
    let mut text = format!("{LOG_HEADER}\n");
    for r in log {
        text.push_str(&r.to_tsv());
        text.push('\n');
    }
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Trains `init` on `samples[train]` with Adam and the configured schedule,
/// validating on `samples[val]` every `val_every / scale` iterations.
/// Aborts with [`TrainError::NonFinite`] on the first non-finite value in
/// the forward or backward pass.
pub fn train(
    model: &Model,
    init: &ParamSet<f32>,
    samples: &[Sample],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<TrainResult> {
    cfg.validate()?;
    model.check_params(init)?;
    if train_idx.is_empty() || samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(&bad) = train_idx.iter().chain(val_idx).find(|&&i| i >= samples.len()) {
        return Err(TrainError::Config(format!("sample index {bad} out of range")));
    }
    let total = opts.iterations.unwrap_or(cfg.total_iters);
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        save_checkpoint(&dir.join(checkpoint_name(0)), model, init, 0, &opts.tag)?;
    }
    let mut params = init.clone();
    let mut adam = Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut sampler = Sampler::new(train_idx, cfg.seed);
    let mut log = Vec::new();
    let mut val_curve = Vec::new();
    let validate = |params: &ParamSet<f32>| -> Result<Option<f64>> {
        if val_idx.is_empty() {
            return Ok(None);
        }
        let p = Predictor::Network {
            model,
            params,
            test_scale: 1.0,
        };
        Ok(Some(evaluate(&p, samples, val_idx, None)?.base.epe))
    };
    if opts.validate_initial {
        if let Some(v) = validate(&params)? {
            val_curve.push((0, v));
        }
    }
    let (val_every, ckpt_every) = (cfg.val_interval(), cfg.checkpoint_interval());
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    for iter in 0..total {
        let lr = opts.constant_lr.unwrap_or_else(|| lr_schedule(iter, cfg));
        let mut batch_ids = Vec::with_capacity(cfg.batch_size);
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for j in 0..cfg.batch_size {
            let (i, epoch, pos) = sampler.at(iter * cfg.batch_size + j);
            batch_ids.push(i);
            let s = &samples[i];
            batch.push(if cfg.augment {
                let mut rng = substream(cfg.seed, &[AUGMENT_TAG, epoch as u64, pos as u64]);
                let spec = sample_augmentation(&mut rng, &cfg.ranges, s.width(), s.height());
                apply_augmentation(s, &spec)?
            } else {
                s.clone()
            });
        }
        let b = make_batch::<f32>(&batch.iter().collect::<Vec<_>>())?;
        let non_finite = |e: TensorError| match e {
            TensorError::NonFinite { op, node } => TrainError::NonFinite {
                iter,
                lr,
                batch: batch_ids.clone(),
                detail: format!("{op} (node {node})"),
            },
            e => e.into(),
        };
        let mut g = Graph::<f32>::new().with_finite_check(true);
        let i1 = g.input(b.img1);
        let i2 = g.input(b.img2);
        let out = match model.forward(&mut g, &params, i1, i2) {
            Ok(o) => o,
            Err(TrainError::Tensor(e)) => return Err(non_finite(e)),
            Err(e) => return Err(e),
        };
        let loss = match multiscale_epe_loss(&mut g, &out, &b.flow, &b.weight, &cfg.loss_weights.0) {
            Ok(l) => l,
            Err(TrainError::Tensor(e)) => return Err(non_finite(e)),
            Err(e) => return Err(e),
        };
        g.backward(loss).map_err(non_finite)?;
        let value = g.value(loss).data()[0] as f64;
        let grads: Vec<_> = out.params.iter().map(|&v| g.grad(v)).collect();
        adam.step(params.tensors_mut(), &grads, lr)?;
        loss_sum += value;
        loss_n += 1;

        let done = iter + 1;
        if done % val_every == 0 || done == total {
            let val_epe = validate(&params)?;
            if let Some(v) = val_epe {
                val_curve.push((done, v));
            }
            log.push(LogRow {
                iter: done,
                lr,
                train_loss: loss_sum / loss_n as f64,
                val_epe,
            });
            (loss_sum, loss_n) = (0.0, 0);
            if let Some(dir) = &opts.out_dir {
                write_log(dir, &log)?;
            }
        }
        if let Some(dir) = &opts.out_dir {
            if done % ckpt_every == 0 {
                save_checkpoint(&dir.join(checkpoint_name(done)), model, &params, done, &opts.tag)?;
            }
        }
    }
    if let Some(dir) = &opts.out_dir {
        if total > 0 {
            save_checkpoint(&dir.join(FINAL_CHECKPOINT), model, &params, total, &opts.tag)?;
        }
        write_log(dir, &log)?;
    }
    Ok(TrainResult { params, log, val_curve })
}

/// Iteration of the first minimum of a validation curve.
pub fn argmin_iteration(curve: &[(usize, f64)]) -> Option<usize> {
    curve
        .iter()
        .fold(None, |best: Option<(usize, f64)>, &(it, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((it, v)),
        })
        .map(|(it, _)| it)
}

#[derive(Clone, Debug)]
pub struct FinetuneResult {
    pub params: ParamSet<f32>,
    /// Iterations chosen on the validation split and rerun on the full set.
    pub best_iter: usize,
    pub val_curve: Vec<(usize, f64)>,
    pub log: Vec<LogRow>,
}

/// Fine-tunes at the constant `finetune_lr`: a first pass on the train split
/// records validation EPE, then training restarts from `init` on train and
/// validation together for the argmin number of iterations. Checkpoints
/// written to `out_dir` are tagged `+ft`.
pub fn finetune(
    model: &Model,
    init: &ParamSet<f32>,
    samples: &[Sample],
    split: &SplitSpec,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<FinetuneResult> {
    model.check_params(init)?;
    let probe = train(
        model,
        init,
        samples,
        &split.train,
        &split.val,
        cfg,
        &RunOptions {
            constant_lr: Some(cfg.finetune_lr),
            validate_initial: true,
            tag: FINETUNE_TAG.into(),
            ..RunOptions::default()
        },
    )?;
    let best_iter = argmin_iteration(&probe.val_curve).unwrap_or(cfg.total_iters);
    let full = train(
        model,
        init,
        samples,
        &split.all(),
        &[],
        cfg,
        &RunOptions {
            out_dir: out_dir.map(Path::to_path_buf),
            constant_lr: Some(cfg.finetune_lr),
            iterations: Some(best_iter),
            tag: FINETUNE_TAG.into(),
            ..RunOptions::default()
        },
    )?;
    Ok(FinetuneResult {
        params: full.params,
        best_iter,
        val_curve: probe.val_curve,
        log: full.log,
    })
}
