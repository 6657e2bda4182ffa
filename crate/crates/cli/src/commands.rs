//! Subcommand implementations. Every command that writes artifacts also
//! writes `resolved.cfg`, from which the run can be repeated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use flownet_core::flow::{flow_to_color, read_flo_file, write_flo_file};
use flownet_core::image::Image;
use flownet_core::kvconfig::{ConfigFields, KvConfig};
use flownet_core::scenegen::{generate_dataset, Dataset, GeneratorConfig, Sample};
use flownet_core::varrefine::{refine, VarParams};
use flownet_tensornet::gradcheck::{run_suite, GradcheckOptions};
use flownet_train::train::{load_checkpoint, LoadedModel};
use flownet_train::{evaluate, predict_pair, Model, ModelConfig, Predictor, Report, RunOptions, SplitSpec, TrainConfig};

use crate::{EvalArgs, FinetuneArgs, GenerateArgs, GradcheckArgs, InferArgs, TrainArgs, VizArgs};

pub const SNAPSHOT_FILE: &str = "resolved.cfg";
const MODEL_PREFIX: &str = "model.";

fn load_kv(path: Option<&Path>) -> Result<KvConfig> {
    match path {
        Some(p) => KvConfig::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(KvConfig::new()),
    }
}

/// Splits overrides into those with `prefix` (stripped) and the rest.
fn partition_overrides(overrides: &[String], prefix: &str) -> (Vec<String>, Vec<String>) {
    let (a, b): (Vec<&String>, Vec<&String>) = overrides.iter().partition(|o| o.starts_with(prefix));
    (
        a.into_iter().map(|o| o[prefix.len()..].to_string()).collect(),
        b.into_iter().cloned().collect(),
    )
}

struct Snapshot {
    kv: KvConfig,
}

impl Snapshot {
    fn new(command: &str) -> Self {
        let mut kv = KvConfig::new();
        kv.set("command", command);
        Self { kv }
    }

    fn arg(mut self, key: &str, value: impl ToString) -> Self {
        self.kv.set(format!("args.{key}"), value.to_string());
        self
    }

    fn path(self, key: &str, p: &Path) -> Self {
        self.arg(key, p.display())
    }

    fn section(mut self, prefix: &str, kv: &KvConfig) -> Self {
        self.kv.extend_section(prefix, kv);
        self
    }

    fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(SNAPSHOT_FILE), self.kv.to_text())?;
        Ok(())
    }
}

fn load_dataset(dir: &Path) -> Result<(Dataset, Vec<Sample>)> {
    let ds = Dataset::open(dir).with_context(|| format!("opening dataset {}", dir.display()))?;
    let samples = ds.load_all().with_context(|| format!("loading dataset {}", dir.display()))?;
    Ok((ds, samples))
}

fn dataset_hash(ds: &Dataset) -> String {
    ds.manifest().map_or_else(|| "-".to_string(), |m| m.config_hash.clone())
}

fn var_params(config: Option<&Path>, overrides: &[String]) -> Result<VarParams> {
    let mut kv = load_kv(config)?;
    kv.apply_overrides(overrides)?;
    let p = VarParams::from_kv(&kv)?;
    p.validate()?;
    Ok(p)
}

fn open_checkpoint(path: &Path) -> Result<LoadedModel> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let mut kv = load_kv(a.config.as_deref())?;
    if let Some(w) = a.width {
        kv.set("width", w.to_string());
    }
    if let Some(h) = a.height {
        kv.set("height", h.to_string());
    }
    kv.apply_overrides(&a.overrides)?;
    let cfg = GeneratorConfig::from_kv(&kv)?;
    cfg.validate()?;
    let manifest = generate_dataset(&cfg, &cfg.assets(), a.seed, a.count, &a.out)?;
    Snapshot::new("generate")
        .arg("seed", a.seed)
        .arg("count", a.count)
        .section("generator", &cfg.to_kv())
        .write(&a.out)?;
    println!(
        "generated {} samples of {}x{} in {} (config {})",
        manifest.entries.len(),
        manifest.width,
        manifest.height,
        a.out.display(),
        manifest.config_hash
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let (model_over, train_over) = partition_overrides(&a.overrides, MODEL_PREFIX);
    let mut mkv = load_kv(Some(&a.model))?;
    mkv.apply_overrides(&model_over)?;
    let model = Model::new(ModelConfig::from_kv(&mkv)?)?;
    let mut tkv = load_kv(a.config.as_deref())?;
    tkv.apply_overrides(&train_over)?;
    let cfg = TrainConfig::from_kv(&tkv)?;
    let (ds, samples) = load_dataset(&a.data)?;
    let split = SplitSpec::with_fraction(samples.len(), cfg.val_fraction, cfg.seed)?;
    if split.train.is_empty() {
        bail!("no training samples after the validation split");
    }
    Snapshot::new("train")
        .path("data", &a.data)
        .arg("data_config_hash", dataset_hash(&ds))
        .arg("train_count", split.train.len())
        .arg("val_count", split.val.len())
        .section("model", &model.config().to_kv())
        .section("train", &cfg.to_kv())
        .write(&a.out)?;
    let start = Instant::now();
    let r = flownet_train::train(
        &model,
        &model.init_params(cfg.seed),
        &samples,
        &split.train,
        &split.val,
        &cfg,
        &RunOptions {
            out_dir: Some(a.out.clone()),
            ..RunOptions::default()
        },
    )?;
    let last = r.val_curve.last().map_or("-".to_string(), |(_, v)| format!("{v:.4}"));
    println!(
        "trained {} for {} iterations in {:.1}s; final val EPE {last}",
        model.name(),
        cfg.total_iters,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn finetune(a: &FinetuneArgs) -> Result<()> {
    let loaded = open_checkpoint(&a.checkpoint)?;
    let mut tkv = load_kv(a.config.as_deref())?;
    tkv.apply_overrides(&a.overrides)?;
    let cfg = TrainConfig::from_kv(&tkv)?;
    let (ds, samples) = load_dataset(&a.data)?;
    let split = SplitSpec::with_fraction(samples.len(), cfg.val_fraction, cfg.seed)?;
    if split.train.is_empty() || split.val.is_empty() {
        bail!("fine-tuning needs nonempty train and validation splits");
    }
    Snapshot::new("finetune")
        .path("checkpoint", &a.checkpoint)
        .path("data", &a.data)
        .arg("data_config_hash", dataset_hash(&ds))
        .section("train", &cfg.to_kv())
        .write(&a.out)?;
    let r = flownet_train::finetune(&loaded.model, &loaded.params, &samples, &split, &cfg, Some(&a.out))?;
    let mut curve = String::from("iter\tval_epe\n");
    for (it, v) in &r.val_curve {
        let _ = writeln!(curve, "{it}\t{v:.6}");
    }
    std::fs::write(a.out.join("finetune_val.tsv"), curve)?;
    println!("fine-tuned {} for {} iterations", loaded.name(), r.best_iter);
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let var = a
        .variational
        .then(|| var_params(a.var_config.as_deref(), &a.overrides))
        .transpose()?;
    if !a.variational && (a.var_config.is_some() || !a.overrides.is_empty()) {
        bail!("refinement settings given without --variational");
    }
    let loaded = a.checkpoint.as_deref().map(open_checkpoint).transpose()?;
    let (ds, samples) = load_dataset(&a.data)?;
    let (predictor, name, scale) = match &loaded {
        Some(l) => {
            let scale = a.test_scale.unwrap_or(l.model.config().variant.default_test_scale());
            (
                Predictor::Network {
                    model: &l.model,
                    params: &l.params,
                    test_scale: scale,
                },
                l.name(),
                scale,
            )
        }
        None => (Predictor::Zero, "zero".to_string(), 1.0),
    };
    let mut snap = Snapshot::new("eval")
        .path("data", &a.data)
        .arg("data_config_hash", dataset_hash(&ds))
        .arg("test_scale", scale)
        .arg("variational", a.variational);
    if let Some(c) = &a.checkpoint {
        snap = snap.path("checkpoint", c);
    }
    if let Some(p) = &var {
        snap = snap.section("var", &p.to_kv());
    }
    snap.write(&a.out)?;
    let indices: Vec<usize> = (0..samples.len()).collect();
    let e = evaluate(&predictor, &samples, &indices, var.as_ref())?;
    let mut report = Report::default();
    report.add(&name, &e);
    let text = report.to_text();
    std::fs::write(a.out.join("report.tsv"), &text)?;
    std::fs::write(a.out.join("per_sample.tsv"), e.per_sample_text())?;
    print!("{text}");
    Ok(())
}

pub fn infer(a: &InferArgs) -> Result<()> {
    let var = a
        .variational
        .then(|| var_params(a.var_config.as_deref(), &a.overrides))
        .transpose()?;
    let l = open_checkpoint(&a.checkpoint)?;
    let img1 = Image::load(&a.img1).with_context(|| format!("reading {}", a.img1.display()))?;
    let img2 = Image::load(&a.img2).with_context(|| format!("reading {}", a.img2.display()))?;
    let scale = a.test_scale.unwrap_or(l.model.config().variant.default_test_scale());
    let mut snap = Snapshot::new("infer")
        .path("checkpoint", &a.checkpoint)
        .path("img1", &a.img1)
        .path("img2", &a.img2)
        .arg("test_scale", scale)
        .arg("variational", a.variational);
    if let Some(p) = &var {
        snap = snap.section("var", &p.to_kv());
    }
    snap.write(&a.out)?;
    let p = predict_pair(&l.model, &l.params, &img1, &img2, scale)?;
    let flow = match &var {
        Some(vp) => {
            if l.model.config().finest_factor() != 4 {
                bail!("variational refinement needs a model whose finest head is at 1/4 resolution");
            }
            refine(&p.coarse, &img1, &img2, vp)?
        }
        None => p.full,
    };
    write_flo_file(a.out.join("flow.flo"), &flow)?;
    Image::from_rgb8(&flow_to_color(&flow, None)).save_png(a.out.join("flow.png"))?;
    println!("wrote {}", a.out.join("flow.flo").display());
    Ok(())
}

pub fn viz(a: &VizArgs) -> Result<()> {
    let flow = read_flo_file(&a.flow).with_context(|| format!("reading {}", a.flow.display()))?;
    if let Some(m) = a.max_magnitude {
        if !(m.is_finite() && m > 0.0) {
            bail!("max magnitude {m} must be positive");
        }
    }
    let out: PathBuf = a.out.clone().unwrap_or_else(|| a.flow.with_extension("png"));
    Image::from_rgb8(&flow_to_color(&flow, a.max_magnitude)).save_png(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let opts = GradcheckOptions {
        eps: a.eps,
        ..GradcheckOptions::default()
    };
    let start = Instant::now();
    let cases = run_suite(a.seed, &opts)?;
    println!("{:<14} {:<40} {:>6} {:>12}  result", "op", "config", "probes", "max_rel_err");
    let mut failed = 0;
    for c in &cases {
        let ok = c.max_rel_error < a.tolerance;
        failed += usize::from(!ok);
        println!(
            "{:<14} {:<40} {:>6} {:>12.3e}  {}",
            c.op,
            c.config,
            c.probes,
            c.max_rel_error,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{} cases, {failed} failed, {:.1}s",
        cases.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        bail!("{failed} of {} gradient checks exceed {:e}", cases.len(), a.tolerance);
    }
    Ok(())
}
