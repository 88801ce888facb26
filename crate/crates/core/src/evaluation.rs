//! Piecewise metrics versus time-to-event.
//!
//! Positives are bucketed by time-to-event into bins `(k·w, (k+1)·w]` over
//! `(0, d]`. Negatives carry no time-to-event, so every bin shares the whole
//! negative pool: a bin's accuracy is computed over its own positives plus
//! all negatives, and FPR is the same in every bin.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::datapipe::{Example, TIME_EPS};
use crate::error::{Error, Result};
use crate::network::{predict, ModelParameters};
use crate::numeric::Matrix;

/// Argmax; ties go to the lowest class index.
pub fn classify(probs: &Matrix) -> usize {
    classify_slice(probs.as_slice())
}

pub fn classify_slice(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// One evaluated example: true label, time-to-event and predicted class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub time_to_event: Option<f64>,
    pub predicted: usize,
}

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn add(&mut self, label: usize, predicted: usize) {
        self.counts[label][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    fn row_total(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    fn correct(&self) -> usize {
        (0..self.counts.len()).map(|c| self.counts[c][c]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.correct(), self.total())
    }

    /// Recall of class `c`, absent if the class has no examples.
    pub fn class_tpr(&self, c: usize) -> Option<f64> {
        ratio(self.counts[c][c], self.row_total(c))
    }

    /// Mean recall over the positive classes that occur.
    pub fn tpr(&self) -> Option<f64> {
        let rates: Vec<f64> = (1..self.counts.len()).filter_map(|c| self.class_tpr(c)).collect();
        if rates.is_empty() {
            None
        } else {
            Some(rates.iter().sum::<f64>() / rates.len() as f64)
        }
    }

    /// Share of negatives predicted as any positive class.
    pub fn fpr(&self) -> Option<f64> {
        let neg = self.row_total(0);
        ratio(neg - self.counts[0][0], neg)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinMetrics {
    pub start_s: f64,
    pub end_s: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub accuracy: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    /// This bin's positives plus the shared negatives.
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub n_pos: usize,
    pub n_neg: usize,
    pub accuracy: Option<f64>,
    /// Indexed by class; entry 0 is the negative class's recall.
    pub per_class_tpr: Vec<Option<f64>>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseMetrics {
    pub horizon_s: f64,
    pub bin_width_s: f64,
    pub bins: Vec<BinMetrics>,
    pub aggregate: AggregateMetrics,
}

impl PiecewiseMetrics {
    /// Mean bin accuracy over bins starting at or after `start_s`, skipping
    /// bins without a defined accuracy.
    pub fn mean_accuracy_from(&self, start_s: f64) -> Option<f64> {
        let accs: Vec<f64> = self
            .bins
            .iter()
            .filter(|b| b.start_s >= start_s - TIME_EPS)
            .filter_map(|b| b.accuracy)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Bin whose range `(start, end]` holds `time_to_event`.
    pub fn bin_at(&self, time_to_event: f64) -> Option<&BinMetrics> {
        bin_index(time_to_event, self.bin_width_s, self.bins.len()).map(|i| &self.bins[i])
    }
}

fn bin_count(horizon_s: f64, bin_width_s: f64) -> Result<usize> {
    if !(horizon_s > 0.0 && bin_width_s > 0.0 && horizon_s.is_finite() && bin_width_s.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "horizon and bin width must be > 0, got {horizon_s} and {bin_width_s}"
        )));
    }
    let n = (horizon_s / bin_width_s).round();
    if n < 1.0 || (n * bin_width_s - horizon_s).abs() > TIME_EPS {
        return Err(Error::InvalidConfig(format!(
            "bin width {bin_width_s} does not divide the horizon {horizon_s}"
        )));
    }
    Ok(n as usize)
}

fn bin_index(tte: f64, width: f64, n: usize) -> Option<usize> {
    if !(tte > TIME_EPS) {
        return None;
    }
    let k = (tte / width - TIME_EPS).ceil() as usize;
    (1..=n).contains(&k).then(|| k - 1)
}

/// Piecewise metrics from precomputed predictions.
pub fn piecewise_from_predictions(
    preds: &[Prediction],
    num_classes: usize,
    horizon_s: f64,
    bin_width_s: f64,
) -> Result<PiecewiseMetrics> {
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_bins = bin_count(horizon_s, bin_width_s)?;
    let mut negatives = Confusion::new(num_classes);
    let mut per_bin: Vec<Confusion> = vec![Confusion::new(num_classes); n_bins];
    let mut aggregate = Confusion::new(num_classes);
    for p in preds {
        if p.label >= num_classes || p.predicted >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: p.label.max(p.predicted),
                num_classes,
            });
        }
        aggregate.add(p.label, p.predicted);
        if p.label == 0 {
            negatives.add(0, p.predicted);
            continue;
        }
        let tte = p
            .time_to_event
            .ok_or_else(|| Error::Validation("positive example without time-to-event".into()))?;
        let k = bin_index(tte, bin_width_s, n_bins).ok_or_else(|| {
            Error::Validation(format!("time-to-event {tte} outside (0, {horizon_s}]"))
        })?;
        per_bin[k].add(p.label, p.predicted);
    }

    let n_neg = negatives.total();
    let bins = per_bin
        .into_iter()
        .enumerate()
        .map(|(k, mut conf)| {
            let n_pos = conf.total();
            let tpr = conf.tpr();
            conf.counts[0].clone_from(&negatives.counts[0]);
            BinMetrics {
                start_s: k as f64 * bin_width_s,
                end_s: (k + 1) as f64 * bin_width_s,
                n_pos,
                n_neg,
                accuracy: conf.accuracy(),
                tpr,
                fpr: negatives.fpr(),
                confusion: conf,
            }
        })
        .collect();

    Ok(PiecewiseMetrics {
        horizon_s,
        bin_width_s,
        bins,
        aggregate: AggregateMetrics {
            n_pos: aggregate.total() - n_neg,
            n_neg,
            accuracy: aggregate.accuracy(),
            per_class_tpr: (0..num_classes).map(|c| aggregate.class_tpr(c)).collect(),
            tpr: aggregate.tpr(),
            fpr: aggregate.fpr(),
            confusion: aggregate,
        },
    })
}

/// Runs `model` on every example and bins the outcome.
pub fn piecewise_eval(
    model: &ModelParameters,
    examples: &[Example],
    horizon_s: f64,
    bin_width_s: f64,
) -> Result<PiecewiseMetrics> {
    let preds = predict_examples(model, examples)?;
    piecewise_from_predictions(&preds, model.config.num_classes, horizon_s, bin_width_s)
}

pub fn predict_examples(model: &ModelParameters, examples: &[Example]) -> Result<Vec<Prediction>> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    examples
        .iter()
        .map(|ex| {
            let probs = predict(model, &ex.window)?;
            Ok(Prediction {
                label: ex.label,
                time_to_event: ex.time_to_event,
                predicted: classify(&probs),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinDelta {
    pub start_s: f64,
    pub end_s: f64,
    pub accuracy_a: Option<f64>,
    pub accuracy_b: Option<f64>,
    /// `a - b`; absent if either side is.
    pub accuracy_delta: Option<f64>,
    pub tpr_delta: Option<f64>,
    pub fpr_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveComparison {
    pub margin: f64,
    pub deltas: Vec<BinDelta>,
    /// Bin farthest from the event where `a` beats `b` by more than `margin`.
    pub earliest_advantage: Option<(f64, f64)>,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

pub fn compare_curves(a: &PiecewiseMetrics, b: &PiecewiseMetrics, margin: f64) -> Result<CurveComparison> {
    let same = a.bins.len() == b.bins.len()
        && a.bins
            .iter()
            .zip(&b.bins)
            .all(|(x, y)| (x.start_s - y.start_s).abs() <= TIME_EPS && (x.end_s - y.end_s).abs() <= TIME_EPS);
    if !same {
        return Err(Error::BinningMismatch(format!(
            "{} bins of {} s vs {} bins of {} s",
            a.bins.len(),
            a.bin_width_s,
            b.bins.len(),
            b.bin_width_s
        )));
    }
    let deltas: Vec<BinDelta> = a
        .bins
        .iter()
        .zip(&b.bins)
        .map(|(x, y)| BinDelta {
            start_s: x.start_s,
            end_s: x.end_s,
            accuracy_a: x.accuracy,
            accuracy_b: y.accuracy,
            accuracy_delta: diff(x.accuracy, y.accuracy),
            tpr_delta: diff(x.tpr, y.tpr),
            fpr_delta: diff(x.fpr, y.fpr),
        })
        .collect();
    let earliest_advantage = deltas
        .iter()
        .rev()
        .find(|d| d.accuracy_delta.map_or(false, |v| v > margin))
        .map(|d| (d.start_s, d.end_s));
    Ok(CurveComparison {
        margin,
        deltas,
        earliest_advantage,
    })
}

pub const METRICS_CSV_HEADER: [&str; 7] = ["bin_start_s", "bin_end_s", "n_pos", "n_neg", "accuracy", "tpr", "fpr"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// One row per bin, then an `all` row with the aggregate figures. Absent
/// rates are empty fields.
pub fn write_metrics_csv<W: Write>(metrics: &PiecewiseMetrics, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_CSV_HEADER)?;
    for b in &metrics.bins {
        w.write_record([
            format!("{:.6}", b.start_s),
            format!("{:.6}", b.end_s),
            b.n_pos.to_string(),
            b.n_neg.to_string(),
            fmt_opt(b.accuracy),
            fmt_opt(b.tpr),
            fmt_opt(b.fpr),
        ])?;
    }
    let a = &metrics.aggregate;
    w.write_record([
        "all".to_string(),
        "all".to_string(),
        a.n_pos.to_string(),
        a.n_neg.to_string(),
        fmt_opt(a.accuracy),
        fmt_opt(a.tpr),
        fmt_opt(a.fpr),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn save_metrics_csv(metrics: &PiecewiseMetrics, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_metrics_csv(metrics, std::io::BufWriter::new(file))
}

pub fn write_comparison_csv<W: Write>(cmp: &CurveComparison, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "bin_start_s",
        "bin_end_s",
        "accuracy_a",
        "accuracy_b",
        "accuracy_delta",
        "tpr_delta",
        "fpr_delta",
    ])?;
    for d in &cmp.deltas {
        w.write_record([
            format!("{:.6}", d.start_s),
            format!("{:.6}", d.end_s),
            fmt_opt(d.accuracy_a),
            fmt_opt(d.accuracy_b),
            fmt_opt(d.accuracy_delta),
            fmt_opt(d.tpr_delta),
            fmt_opt(d.fpr_delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}
