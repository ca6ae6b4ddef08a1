//! Post-processing toolkit for crack segmentation.
//!
//! * [`morphology`]: square-kernel dilation and the stochastic-width (SW)
//!   ground-truth chain (3x3, then 5x5, then 8x8).
//! * [`components`]: connected-component labelling and counting.
//! * [`calibration`]: component-preserving probability threshold search,
//!   aggregation into a global threshold, and threshold sweeps.
//! * [`metrics`]: IoU / precision / recall / F1 and image-level FP/FN.
//! * [`dataset`]: manifests, source attribution and the validation split.
//! * [`raster`]: mask and probability-map types and file formats.
//! * [`synth`]: synthetic cracks and probability maps for testing.

pub mod calibration;
pub mod components;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod morphology;
pub mod raster;
pub mod synth;

pub use calibration::{
    aggregate_thresholds, apply_threshold, calibrate, initial_prediction, per_image_threshold, sweep_thresholds,
    threshold_histogram_csv, BinPartition, CalibrationRun, PerImageThreshold, Termination, ThresholdCalibration,
};
pub use components::{count, label, Connectivity, LabelImage};
pub use dataset::{DatasetManifest, ManifestEntry, PrefixMap, Split};
pub use error::{Error, Result};
pub use metrics::{
    class_metrics, confusion, evaluate_set, image_level_fp_fn, ClassMetrics, ConfusionCounts, MetricsReport,
};
pub use morphology::{augment_dataset, dilate, sw_chain, KernelSize, SwChain};
pub use raster::{load_mask, load_probmap, save_mask, save_probmap, BinaryMask, ProbFormat, ProbabilityMap};
pub use synth::SynthConfig;
