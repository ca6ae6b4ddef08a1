//! Component-preserving probability threshold calibration.
//!
//! For each validation prediction the search raises the threshold bin by bin
//! over a 10-bin partition of the image's probability range until the
//! thresholded prediction splits into more connected components than the
//! initial prediction. The triggering bin is then cut into 10 sub-bins and
//! the threshold is lowered from the top sub-edge until the component count
//! matches the initial count again. The per-image thresholds are finally
//! binned once more and the midpoint of the most populated bin becomes the
//! global threshold applied to test predictions.

use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::components::{count, Connectivity};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_set, MetricsReport};
use crate::raster::{BinaryMask, ProbabilityMap};

/// Decision boundary of the two-class argmax.
pub const ARGMAX_CUTOFF: f64 = 0.5;
pub const SWEEP_LO: f64 = 0.90;
pub const SWEEP_HI: f64 = 0.98;
pub const SWEEP_STEP: f64 = 0.01;

/// Ten equal-width bins over `[lo, hi]`. A zero-width range is allowed and
/// yields eleven equal edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinPartition {
    edges: [f64; BinPartition::EDGES],
}

impl BinPartition {
    pub const BINS: usize = 10;
    pub const EDGES: usize = Self::BINS + 1;

    /// Panics unless `lo <= hi` and both are finite.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(
            lo.is_finite() && hi.is_finite() && lo <= hi,
            "invalid range [{lo}, {hi}]"
        );
        let width = (hi - lo) / Self::BINS as f64;
        let mut edges = [0.0; Self::EDGES];
        for (i, e) in edges.iter_mut().enumerate() {
            *e = lo + i as f64 * width;
        }
        edges[Self::BINS] = hi;
        Self { edges }
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[Self::BINS]
    }

    pub fn edges(&self) -> &[f64; Self::EDGES] {
        &self.edges
    }

    pub fn bin(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (self.edges[i] + self.edges[i + 1]) / 2.0
    }

    /// Bin holding `x`: bins are half-open except the last, which also takes
    /// `hi`. A zero-width partition puts everything in the last bin.
    pub fn bin_index(&self, x: f64) -> Option<usize> {
        let (lo, hi) = (self.lo(), self.hi());
        if !(lo..=hi).contains(&x) {
            return None;
        }
        if hi == lo {
            return Some(Self::BINS - 1);
        }
        let mut i = (((x - lo) / (hi - lo)) * Self::BINS as f64) as usize;
        i = i.min(Self::BINS - 1);
        // the division can land one bin off the edges computed above
        while i > 0 && x < self.edges[i] {
            i -= 1;
        }
        while i < Self::BINS - 1 && x >= self.edges[i + 1] {
            i += 1;
        }
        Some(i)
    }

    pub fn histogram(&self, values: impl IntoIterator<Item = f64>) -> [usize; Self::BINS] {
        let mut counts = [0; Self::BINS];
        for v in values {
            if let Some(i) = self.bin_index(v) {
                counts[i] += 1;
            }
        }
        counts
    }
}

/// How a per-image search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    /// A sub-bin edge restored the initial component count.
    EqualityFound,
    /// No bin edge ever increased the component count.
    ExhaustedBins,
    /// No sub-bin edge restored the initial component count.
    ExhaustedSubbins,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::EqualityFound => "equality_found",
            Termination::ExhaustedBins => "exhausted_bins",
            Termination::ExhaustedSubbins => "exhausted_subbins",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Termination {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "equality_found" => Ok(Termination::EqualityFound),
            "exhausted_bins" => Ok(Termination::ExhaustedBins),
            "exhausted_subbins" => Ok(Termination::ExhaustedSubbins),
            other => Err(format!("unknown termination {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerImageThreshold {
    pub image_id: String,
    pub threshold: f64,
    /// Components in the initial (argmax) prediction.
    pub n_initial: usize,
    /// 1 when only the top-level bins were scanned, 2 when sub-bins were.
    pub levels_used: u8,
    pub terminated_by: Termination,
}

impl PerImageThreshold {
    pub fn with_image_id(mut self, id: impl Into<String>) -> Self {
        self.image_id = id.into();
        self
    }
}

/// Argmax labels of a two-class prediction: crack iff `p >= 0.5`.
pub fn initial_prediction(map: &ProbabilityMap) -> BinaryMask {
    map.mask_at_least(ARGMAX_CUTOFF)
}

/// Crack iff `p >= t`.
pub fn apply_threshold(map: &ProbabilityMap, t: f64) -> BinaryMask {
    debug_assert!((0.0..=1.0).contains(&t), "threshold {t} outside [0, 1]");
    map.mask_at_least(t)
}

/// The initial prediction with pixels below `t` removed. Equal to
/// [`apply_threshold`] for `t >= 0.5`; below that it is the initial
/// prediction itself.
pub fn refine(map: &ProbabilityMap, t: f64) -> BinaryMask {
    map.mask_at_least(t.max(ARGMAX_CUTOFF))
}

/// Runs the two-level search on one probability map.
///
/// Candidate thresholds are always applied to the initial prediction (see
/// [`refine`]), so a threshold can only remove pixels from it. Fails with
/// [`Error::EmptyPrediction`] when the initial prediction has no crack.
pub fn per_image_threshold(map: &ProbabilityMap, conn: Connectivity) -> Result<PerImageThreshold> {
    let initial = initial_prediction(map);
    if !initial.has_crack() {
        return Err(Error::EmptyPrediction);
    }
    let n_initial = count(&initial, conn);
    let components_at = |t: f64| count(&refine(map, t), conn);
    let result = |threshold, levels_used, terminated_by| PerImageThreshold {
        image_id: String::new(),
        threshold,
        n_initial,
        levels_used,
        terminated_by,
    };

    let (lo, hi) = map.min_max();
    let bins = BinPartition::new(f64::from(lo), f64::from(hi));
    let trigger = (0..BinPartition::BINS).find(|&idx| components_at(bins.edges()[idx + 1]) > n_initial);
    let Some(idx) = trigger else {
        return Ok(result(bins.hi(), 1, Termination::ExhaustedBins));
    };

    let (sub_lo, sub_hi) = bins.bin(idx);
    let sub = BinPartition::new(sub_lo, sub_hi);
    for j in (1..BinPartition::EDGES).rev() {
        let t = sub.edges()[j];
        if components_at(t) == n_initial {
            return Ok(result(t, 2, Termination::EqualityFound));
        }
    }
    Ok(result(sub.edges()[1], 2, Termination::ExhaustedSubbins))
}

/// Per-image thresholds aggregated into one global threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCalibration {
    pub per_image: Vec<PerImageThreshold>,
    pub final_bins: BinPartition,
    pub bin_counts: [usize; BinPartition::BINS],
    pub modal_bin_index: usize,
    pub global_threshold: f64,
}

impl ThresholdCalibration {
    /// The global threshold as printed in reports (two decimals).
    pub fn reported_threshold(&self) -> String {
        crate::metrics::round_report(self.global_threshold, 2)
    }
}

/// Bins the per-image thresholds over their own `[min, max]` range and takes
/// the midpoint of the fullest bin, preferring the higher bin on ties.
pub fn aggregate_thresholds(per_image: &[PerImageThreshold]) -> Result<ThresholdCalibration> {
    if per_image.is_empty() {
        return Err(Error::EmptyInput);
    }
    let values = || per_image.iter().map(|p| p.threshold);
    let lo = values().fold(f64::INFINITY, f64::min);
    let hi = values().fold(f64::NEG_INFINITY, f64::max);
    let final_bins = BinPartition::new(lo, hi);
    let bin_counts = final_bins.histogram(values());
    // max_by_key keeps the last maximum, so ties go to the higher bin
    let modal_bin_index = (0..BinPartition::BINS)
        .max_by_key(|&i| bin_counts[i])
        .expect("ten bins");
    Ok(ThresholdCalibration {
        per_image: per_image.to_vec(),
        final_bins,
        bin_counts,
        modal_bin_index,
        global_threshold: final_bins.midpoint(modal_bin_index),
    })
}

/// Result of calibrating a set of maps: the aggregate plus the ids skipped
/// because their initial prediction was empty.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub calibration: ThresholdCalibration,
    pub connectivity: Connectivity,
    pub skipped: Vec<String>,
}

/// Calibrates every `(id, map)` pair in parallel, skipping maps whose
/// initial prediction is empty.
pub fn calibrate<'a, I>(maps: I, conn: Connectivity) -> Result<CalibrationRun>
where
    I: IntoParallelIterator<Item = (&'a str, &'a ProbabilityMap)>,
{
    let outcomes: Vec<(String, Result<PerImageThreshold>)> = maps
        .into_par_iter()
        .map(|(id, map)| (id.to_string(), per_image_threshold(map, conn)))
        .collect();
    let mut per_image = Vec::new();
    let mut skipped = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(t) => per_image.push(t.with_image_id(id)),
            Err(Error::EmptyPrediction) => skipped.push(id),
            Err(e) => return Err(e),
        }
    }
    Ok(CalibrationRun {
        calibration: aggregate_thresholds(&per_image)?,
        connectivity: conn,
        skipped,
    })
}

impl CalibrationRun {
    /// Key-value text form; floats are written with full precision so the
    /// file parses back to the same values.
    pub fn to_text(&self) -> String {
        let cal = &self.calibration;
        let (lo, hi) = cal.final_bins.bin(cal.modal_bin_index);
        let mut out = String::new();
        let _ = writeln!(out, "# threshold calibration");
        let _ = writeln!(out, "connectivity={}", self.connectivity);
        let _ = writeln!(out, "images={}", cal.per_image.len());
        let _ = writeln!(out, "skipped={}", self.skipped.len());
        let _ = writeln!(out, "global_threshold={:?}", cal.global_threshold);
        let _ = writeln!(out, "reported_threshold={}", cal.reported_threshold());
        let _ = writeln!(out, "modal_bin_index={}", cal.modal_bin_index);
        let _ = writeln!(out, "modal_bin_lo={lo:?}");
        let _ = writeln!(out, "modal_bin_hi={hi:?}");
        let _ = writeln!(out, "range_lo={:?}", cal.final_bins.lo());
        let _ = writeln!(out, "range_hi={:?}", cal.final_bins.hi());
        let counts: Vec<String> = cal.bin_counts.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "bin_counts={}", counts.join(","));
        let _ = writeln!(out, "# image=id,threshold,n_initial,levels_used,terminated_by");
        for p in &cal.per_image {
            let _ = writeln!(
                out,
                "image={},{:?},{},{},{}",
                p.image_id, p.threshold, p.n_initial, p.levels_used, p.terminated_by
            );
        }
        for id in &self.skipped {
            let _ = writeln!(out, "skipped_image={id}");
        }
        out
    }

    /// Parses [`CalibrationRun::to_text`] output. The aggregate is rebuilt
    /// from the per-image rows and must agree with the stored threshold.
    pub fn parse(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut connectivity = Connectivity::default();
        let mut stored_global = None;
        let mut per_image = Vec::new();
        let mut skipped = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or((n, format!("expected key=value: {line:?}")))?;
            match key {
                "connectivity" => connectivity = value.parse().map_err(|e| (n, e))?,
                "global_threshold" => stored_global = Some(value.parse::<f64>().map_err(|e| (n, e.to_string()))?),
                "image" => {
                    // ids may contain commas, so split from the right
                    let mut fields = value.rsplitn(5, ',');
                    let mut next = || fields.next().ok_or((n, "short image row".to_string()));
                    let terminated_by = next()?.parse().map_err(|e| (n, e))?;
                    let levels_used = next()?.parse().map_err(|_| (n, "bad levels_used".to_string()))?;
                    let n_initial = next()?.parse().map_err(|_| (n, "bad n_initial".to_string()))?;
                    let threshold = next()?.parse().map_err(|_| (n, "bad threshold".to_string()))?;
                    let image_id = next()?.to_string();
                    per_image.push(PerImageThreshold {
                        image_id,
                        threshold,
                        n_initial,
                        levels_used,
                        terminated_by,
                    });
                }
                "skipped_image" => skipped.push(value.to_string()),
                _ => {}
            }
        }
        let calibration = aggregate_thresholds(&per_image).map_err(|e| (0, e.to_string()))?;
        if let Some(g) = stored_global {
            if g != calibration.global_threshold {
                return Err((
                    0,
                    format!(
                        "global_threshold {g} disagrees with per-image rows ({})",
                        calibration.global_threshold
                    ),
                ));
            }
        }
        Ok(CalibrationRun {
            calibration,
            connectivity,
            skipped,
        })
    }
}

/// CSV (`bin_lo,bin_hi,count`) of the threshold distribution: ten rows for
/// the full range followed by ten rows splitting the modal bin.
pub fn threshold_histogram_csv(cal: &ThresholdCalibration) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    let bins = &cal.final_bins;
    for i in 0..BinPartition::BINS {
        let (lo, hi) = bins.bin(i);
        let _ = writeln!(out, "{lo:?},{hi:?},{}", cal.bin_counts[i]);
    }
    let (mlo, mhi) = bins.bin(cal.modal_bin_index);
    let zoom = BinPartition::new(mlo, mhi);
    let in_modal = cal
        .per_image
        .iter()
        .map(|p| p.threshold)
        .filter(|&t| bins.bin_index(t) == Some(cal.modal_bin_index));
    let zoom_counts = zoom.histogram(in_modal);
    for (i, n) in zoom_counts.iter().enumerate() {
        let (lo, hi) = zoom.bin(i);
        let _ = writeln!(out, "{lo:?},{hi:?},{n}");
    }
    out
}

/// `lo, lo + step, ..., hi`, each value rounded to 1e-9 so grid points
/// compare equal to their decimal spelling.
pub fn sweep_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    // written positively so NaN inputs fail too
    let valid = step > 0.0 && lo <= hi && lo >= 0.0 && hi <= 1.0;
    if !valid {
        return Err(Error::InvalidConfig(format!(
            "sweep needs 0 <= lo <= hi <= 1 and step > 0, got lo={lo} hi={hi} step={step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Evaluates every threshold of the sweep grid on aligned maps and masks.
pub fn sweep_thresholds(
    maps: &[ProbabilityMap],
    gts: &[BinaryMask],
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<Vec<(f64, MetricsReport)>> {
    if maps.len() != gts.len() {
        return Err(Error::LengthMismatch {
            left: maps.len(),
            right: gts.len(),
        });
    }
    let grid = sweep_grid(lo, hi, step)?;
    if maps.is_empty() {
        return Ok(Vec::new());
    }
    grid.into_iter()
        .map(|t| {
            let preds: Vec<BinaryMask> = maps.par_iter().map(|m| apply_threshold(m, t)).collect();
            let report = evaluate_set(&preds, gts)?;
            Ok((t, report))
        })
        .collect()
}
