//! Metrics over a dataset, with optional variational refinement.

use std::fmt::Write as _;

use flownet_core::flow::{compute_metrics, MetricsAccumulator, MetricsReport};
use flownet_core::scenegen::Sample;
use flownet_core::varrefine::{refine, VarParams};
use flownet_core::FlowField;
use flownet_tensornet::ParamSet;

use crate::model::Model;
use crate::predict::predict_pair;
use crate::{Result, TrainError};

/// Resolution ratio of the flow handed to the variational refinement.
const REFINE_FACTOR: usize = 4;

#[derive(Clone, Copy, Debug)]
pub enum Predictor<'a> {
    /// Predicts zero motion everywhere.
    Zero,
    Network {
        model: &'a Model,
        params: &'a ParamSet<f32>,
        test_scale: f64,
    },
}

impl Predictor<'_> {
    /// Full-resolution flow and the quarter-resolution flow for refinement.
    fn run(&self, s: &Sample, need_coarse: bool) -> Result<(FlowField, Option<FlowField>)> {
        let (w, h) = (s.width(), s.height());
        match *self {
            Predictor::Zero => Ok((
                FlowField::zeros(w, h),
                need_coarse.then(|| FlowField::zeros(w.div_ceil(REFINE_FACTOR), h.div_ceil(REFINE_FACTOR))),
            )),
            Predictor::Network { model, params, test_scale } => {
                if need_coarse && model.config().finest_factor() != REFINE_FACTOR {
                    return Err(TrainError::Config(format!(
                        "variational refinement needs a 1/{REFINE_FACTOR} head, the model ends at 1/{}",
                        model.config().finest_factor()
                    )));
                }
                let p = predict_pair(model, params, &s.img1, &s.img2, test_scale)?;
                Ok((p.full, need_coarse.then_some(p.coarse)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub index: usize,
    pub epe: f64,
    pub epe_refined: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Metrics pooled over all valid pixels of all samples.
    pub base: MetricsReport,
    /// The same after variational refinement, if requested.
    pub refined: Option<MetricsReport>,
    pub per_sample: Vec<SampleRow>,
}

impl Evaluation {
    pub fn per_sample_text(&self) -> String {
        let mut out = String::from("index\tepe\tepe_v\n");
        for r in &self.per_sample {
            let v = r.epe_refined.map_or("-".to_string(), |e| format!("{e:.6}"));
            let _ = writeln!(out, "{}\t{:.6}\t{v}", r.index, r.epe);
        }
        out
    }
}

/// Evaluates `predictor` on `samples[i]` for every `i` in `indices`.
pub fn evaluate(
    predictor: &Predictor,
    samples: &[Sample],
    indices: &[usize],
    variational: Option<&VarParams>,
) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut base = MetricsAccumulator::new();
    let mut refined = MetricsAccumulator::new();
    let mut per_sample = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = samples.get(i).ok_or_else(|| TrainError::Config(format!("sample index {i} out of range")))?;
        let (full, coarse) = predictor.run(s, variational.is_some())?;
        base.add(&full, &s.flow)?;
        let epe = compute_metrics(&full, &s.flow)?.epe;
        let epe_refined = match (variational, coarse) {
            (Some(p), Some(c)) => {
                let r = refine(&c, &s.img1, &s.img2, p)?;
                refined.add(&r, &s.flow)?;
                Some(compute_metrics(&r, &s.flow)?.epe)
            }
            _ => None,
        };
        per_sample.push(SampleRow { index: i, epe, epe_refined });
    }
    Ok(Evaluation {
        base: base.report()?,
        refined: variational.map(|_| refined.report()).transpose()?,
        per_sample,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub metrics: MetricsReport,
}

/// Text table with one row per (model, refinement) combination.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    /// Adds `name` and, when refined metrics exist, `name+v`.
    pub fn add(&mut self, name: &str, e: &Evaluation) {
        self.rows.push(ReportRow {
            name: name.to_string(),
            metrics: e.base.clone(),
        });
        if let Some(r) = &e.refined {
            self.rows.push(ReportRow {
                name: format!("{name}+v"),
                metrics: r.clone(),
            });
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("method\tepe\taae\ts40+\tpixels\n");
        for r in &self.rows {
            let s40 = r.metrics.epe_s40plus.map_or("-".to_string(), |e| format!("{e:.4}"));
            let _ = writeln!(
                out,
                "{}\t{:.4}\t{:.4}\t{s40}\t{}",
                r.name, r.metrics.epe, r.metrics.aae, r.metrics.n_evaluated
            );
        }
        out
    }
}
