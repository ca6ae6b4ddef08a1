//! Pixel-level segmentation metrics and image-level false positive/negative
//! counts.
//!
//! Set-level numbers are micro-aggregated: confusion counts are pooled over
//! every pixel of every image before any ratio is taken. A ratio whose
//! denominator is zero is defined as 1.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use rayon::prelude::*;

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Pixel confusion counts for the crack class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts seen from the background class.
    pub fn background(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

fn check_dims(pred: &BinaryMask, gt: &BinaryMask) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            left: pred.dims(),
            right: gt.dims(),
        });
    }
    Ok(())
}

fn check_lengths<A, B>(preds: &[A], gts: &[B]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: gts.len(),
        });
    }
    Ok(())
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    check_dims(pred, gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_metrics(c: &ConfusionCounts) -> ClassMetrics {
    ClassMetrics {
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub crack_iou: f64,
    pub background_iou: f64,
    pub mean_iou: f64,
    pub crack_precision: f64,
    pub crack_recall: f64,
    pub crack_f1: f64,
    pub background_f1: f64,
    pub mean_f1: f64,
    pub image_fp: usize,
    pub image_fn: usize,
    pub n_images: usize,
    /// Mean of per-image crack IoU. Reported for comparison only.
    pub macro_crack_iou: f64,
    pub counts: ConfusionCounts,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts, image_fp: usize, image_fn: usize, n_images: usize) -> Self {
        let crack = class_metrics(&counts);
        let background = class_metrics(&counts.background());
        let mut report = Self::from_class_values(crack, background.iou, background.f1);
        report.image_fp = image_fp;
        report.image_fn = image_fn;
        report.n_images = n_images;
        report.macro_crack_iou = crack.iou;
        report.counts = counts;
        report
    }

    /// Builds a report from already-known class values; the two-class means
    /// are derived.
    pub fn from_class_values(crack: ClassMetrics, background_iou: f64, background_f1: f64) -> Self {
        MetricsReport {
            crack_iou: crack.iou,
            background_iou,
            mean_iou: (crack.iou + background_iou) / 2.0,
            crack_precision: crack.precision,
            crack_recall: crack.recall,
            crack_f1: crack.f1,
            background_f1,
            mean_f1: (crack.f1 + background_f1) / 2.0,
            image_fp: 0,
            image_fn: 0,
            n_images: 0,
            macro_crack_iou: crack.iou,
            counts: ConfusionCounts::default(),
        }
    }
}

/// Counts images predicted as cracked although the ground truth is empty
/// (`.0`) and images predicted empty although the ground truth has a crack
/// (`.1`).
pub fn image_level_fp_fn(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<(usize, usize)> {
    check_lengths(preds, gts)?;
    let mut fp = 0;
    let mut fn_ = 0;
    for (p, g) in preds.iter().zip(gts) {
        match (p.has_crack(), g.has_crack()) {
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok((fp, fn_))
}

/// Micro-aggregated report over aligned prediction / ground-truth lists.
pub fn evaluate_set(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<MetricsReport> {
    check_lengths(preds, gts)?;
    let per_image: Vec<ConfusionCounts> = preds
        .par_iter()
        .zip(gts.par_iter())
        .map(|(p, g)| confusion(p, g))
        .collect::<Result<_>>()?;
    let (image_fp, image_fn) = image_level_fp_fn(preds, gts)?;
    let mut report = MetricsReport::from_counts(per_image.iter().copied().sum(), image_fp, image_fn, preds.len());
    if !per_image.is_empty() {
        report.macro_crack_iou = per_image.iter().map(|c| class_metrics(c).iou).sum::<f64>() / per_image.len() as f64;
    }
    Ok(report)
}

/// One report per source dataset over the test entries of `manifest`.
pub fn per_dataset_report(
    manifest: &DatasetManifest,
    preds: &HashMap<String, BinaryMask>,
    gts: &HashMap<String, BinaryMask>,
) -> Result<Vec<(String, MetricsReport)>> {
    per_dataset_report_in(manifest, Some(Split::Test), preds, gts)
}

/// Like [`per_dataset_report`] but over `split` (or every entry when `None`).
/// Rows are ordered by dataset name.
pub fn per_dataset_report_in(
    manifest: &DatasetManifest,
    split: Option<Split>,
    preds: &HashMap<String, BinaryMask>,
    gts: &HashMap<String, BinaryMask>,
) -> Result<Vec<(String, MetricsReport)>> {
    let mut groups: BTreeMap<&str, (Vec<BinaryMask>, Vec<BinaryMask>)> = BTreeMap::new();
    for e in manifest.entries().iter().filter(|e| split.is_none_or(|s| e.split == s)) {
        let pred = preds.get(&e.id).ok_or_else(|| Error::MissingPrediction(e.id.clone()))?;
        let gt = gts.get(&e.id).ok_or_else(|| Error::Manifest {
            id: e.id.clone(),
            reason: "no ground-truth mask".into(),
        })?;
        let group = groups.entry(e.source_dataset.as_str()).or_default();
        group.0.push(pred.clone());
        group.1.push(gt.clone());
    }
    groups
        .into_iter()
        .map(|(name, (p, g))| Ok((name.to_string(), evaluate_set(&p, &g)?)))
        .collect()
}

/// Formats `x` with `decimals` places, rounding ties to even.
pub fn round_report(x: f64, decimals: usize) -> String {
    // std formatting rounds the exact binary value, ties to even
    format!("{x:.decimals$}")
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "mIoU", "mF1", "FN", "FP", "C_IoU", "B_IoU", "C_P", "C_R", "C_F1", "B_F1",
];

fn report_fields(r: &MetricsReport) -> [String; 10] {
    [
        round_report(r.mean_iou, 2),
        round_report(r.mean_f1, 2),
        r.image_fn.to_string(),
        r.image_fp.to_string(),
        round_report(r.crack_iou, 3),
        round_report(r.background_iou, 2),
        round_report(r.crack_precision, 2),
        round_report(r.crack_recall, 2),
        round_report(r.crack_f1, 3),
        round_report(r.background_f1, 2),
    ]
}

/// CSV with a leading label column named `label_header`, the metric columns
/// in table order, and optionally the macro-averaged crack IoU.
pub fn report_csv(label_header: &str, rows: &[(String, MetricsReport)], with_macro: bool) -> String {
    let mut out = String::new();
    out.push_str(label_header);
    for col in REPORT_COLUMNS {
        out.push(',');
        out.push_str(col);
    }
    if with_macro {
        out.push_str(",macro_C_IoU");
    }
    out.push('\n');
    for (label, r) in rows {
        out.push_str(&csv_field(label));
        for f in report_fields(r) {
            out.push(',');
            out.push_str(&f);
        }
        if with_macro {
            let _ = write!(out, ",{}", round_report(r.macro_crack_iou, 3));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
