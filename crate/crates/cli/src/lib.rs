//! Command layer of the `crackseg` binary: split, augment, calibrate, apply
//! and evaluate, plus dataset discovery, threshold sweeps and synthetic data.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crackseg::calibration::{sweep_thresholds, SWEEP_HI, SWEEP_LO, SWEEP_STEP};
use crackseg::dataset::{
    discover, read_manifest, split_train_entries, write_manifest, DEFAULT_SPLIT_SEED, DEFAULT_VAL_FRACTION,
};
use crackseg::metrics::{per_dataset_report_in, report_csv};
use crackseg::morphology::augment_dataset_with_cutoff;
use crackseg::raster::DEFAULT_BINARIZE_CUTOFF;
use crackseg::synth::synth_pair;
use crackseg::{
    apply_threshold, calibrate, evaluate_set, load_mask, load_probmap, save_mask, save_probmap,
    threshold_histogram_csv, BinaryMask, CalibrationRun, Connectivity, DatasetManifest, Error, ManifestEntry,
    PrefixMap, ProbFormat, ProbabilityMap, Result, Split, SynthConfig,
};

#[derive(Debug, Parser)]
#[command(name = "crackseg", version, about = "Crack segmentation post-processing")]
pub struct Cli {
    /// Worker threads for per-image work (default: logical CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a manifest from an images/ + masks/ directory tree.
    Discover(DiscoverArgs),
    /// Move a per-source fraction of the training entries to validation.
    Split(SplitArgs),
    /// Write the dilated ground-truth variants of every training entry.
    Augment(AugmentArgs),
    /// Derive a global threshold from validation probability maps.
    Calibrate(CalibrateArgs),
    /// Threshold probability maps into masks.
    Apply(ApplyArgs),
    /// Score predicted masks against the ground truth.
    Evaluate(EvaluateArgs),
    /// Score a grid of thresholds.
    Sweep(SweepArgs),
    /// Generate a synthetic dataset with probability maps.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub root: PathBuf,
    /// `prefix=source` rules; defaults to the bundled map.
    #[arg(long)]
    pub prefix_map: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Warn about images whose side differs from this.
    #[arg(long)]
    pub expected_side: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VAL_FRACTION)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_SPLIT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Receives images/, masks/ and manifest.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINARIZE_CUTOFF)]
    pub binarize_cutoff: u8,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "val")]
    pub split: Split,
    #[arg(long, default_value = "eight")]
    pub connectivity: Connectivity,
    /// Calibration report (key=value text).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of the per-image threshold distribution.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, required_unless_present = "calibration", conflicts_with = "calibration")]
    pub threshold: Option<f64>,
    /// Report written by `calibrate`; its global threshold is used.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Holds `<id>.png` or a single `<id>_SW<NN>.png` per entry.
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one row per source dataset to this CSV.
    #[arg(long)]
    pub per_dataset: Option<PathBuf>,
    /// Append a macro-averaged crack IoU column.
    #[arg(long = "macro")]
    pub with_macro: bool,
    /// Row label of the overall report.
    #[arg(long, default_value = "overall")]
    pub label: String,
    #[arg(long, default_value_t = DEFAULT_BINARIZE_CUTOFF)]
    pub binarize_cutoff: u8,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "val")]
    pub split: Split,
    #[arg(long, default_value_t = SWEEP_LO)]
    pub lo: f64,
    #[arg(long, default_value_t = SWEEP_HI)]
    pub hi: f64,
    #[arg(long, default_value_t = SWEEP_STEP)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINARIZE_CUTOFF)]
    pub binarize_cutoff: u8,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with generator settings; missing keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Overrides the config seed. Image i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Outcome of one invocation. A nonzero code always comes with a message on
/// stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    /// 0 success, 1 domain error, 2 usage error.
    pub exit_code: i32,
    pub report_paths: Vec<PathBuf>,
}

/// Parses `args` (program name first) and runs the command, printing any
/// error to stderr.
pub fn main_with_args<I, T>(args: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return CommandResult {
                exit_code: if e.use_stderr() { 2 } else { 0 },
                report_paths: Vec::new(),
            };
        }
    };
    match run(&cli) {
        Ok(report_paths) => CommandResult {
            exit_code: 0,
            report_paths,
        },
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            CommandResult {
                exit_code: 1,
                report_paths: Vec::new(),
            }
        }
    }
}

/// Runs a parsed command and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Discover(a) => cmd_discover(a),
        Command::Split(a) => cmd_split(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Apply(a) => cmd_apply(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

pub fn cmd_discover(a: &DiscoverArgs) -> Result<Vec<PathBuf>> {
    let prefixes = match &a.prefix_map {
        Some(p) => PrefixMap::load(p)?,
        None => PrefixMap::kaggle_default(),
    };
    let found = discover(&a.root, &prefixes)?;
    for name in &found.unmatched {
        log::warn!("no prefix rule for {name}");
    }
    if let Some(side) = a.expected_side {
        found.manifest.check_dimensions(Some((side, side)))?;
    }
    write_manifest(&found.manifest, &a.out)?;
    log::info!("{} entries -> {}", found.manifest.len(), a.out.display());
    Ok(vec![a.out.clone()])
}

pub fn cmd_split(a: &SplitArgs) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(&a.manifest)?;
    let split = split_train_entries(&manifest, a.val_fraction, a.seed)?;
    write_manifest(&split, &a.out)?;
    log::info!(
        "{} train, {} val, {} test",
        split.in_split(Split::Train).count(),
        split.in_split(Split::Val).count(),
        split.in_split(Split::Test).count()
    );
    Ok(vec![a.out.clone()])
}

pub fn cmd_augment(a: &AugmentArgs) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(&a.manifest)?;
    let augmented = augment_dataset_with_cutoff(&manifest, &a.out_dir, a.binarize_cutoff)?;
    let out = a.out_dir.join("manifest.csv");
    write_manifest(&augmented, &out)?;
    Ok(vec![out])
}

fn probmap_path(manifest: &DatasetManifest, e: &ManifestEntry) -> Result<PathBuf> {
    e.probmap_path
        .as_ref()
        .map(|p| manifest.resolve(p))
        .ok_or_else(|| Error::Manifest {
            id: e.id.clone(),
            reason: "no probability map".into(),
        })
}

fn load_probmaps(manifest: &DatasetManifest, split: Split) -> Result<Vec<(String, ProbabilityMap)>> {
    let entries: Vec<&ManifestEntry> = manifest.in_split(split).collect();
    entries
        .par_iter()
        .map(|e| Ok((e.id.clone(), load_probmap(probmap_path(manifest, e)?)?)))
        .collect()
}

fn load_masks(manifest: &DatasetManifest, split: Split, cutoff: u8) -> Result<HashMap<String, BinaryMask>> {
    let entries: Vec<&ManifestEntry> = manifest.in_split(split).collect();
    entries
        .par_iter()
        .map(|e| Ok((e.id.clone(), load_mask(manifest.resolve(&e.mask_path), cutoff)?)))
        .collect()
}

pub fn cmd_calibrate(a: &CalibrateArgs) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(&a.manifest)?;
    let maps = load_probmaps(&manifest, a.split)?;
    let run = calibrate(
        maps.iter().map(|(id, m)| (id.as_str(), m)).collect::<Vec<_>>(),
        a.connectivity,
    )?;
    for id in &run.skipped {
        log::warn!("{id}: empty initial prediction, skipped");
    }
    write_text(&a.out, &run.to_text())?;
    let mut written = vec![a.out.clone()];
    if let Some(h) = &a.histogram {
        write_text(h, &threshold_histogram_csv(&run.calibration))?;
        written.push(h.clone());
    }
    log::info!(
        "global threshold {} over {} images",
        run.calibration.reported_threshold(),
        run.calibration.per_image.len()
    );
    Ok(written)
}

/// Reads the global threshold from a `calibrate` report.
pub fn read_calibration(path: &Path) -> Result<CalibrationRun> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => io_error(path, e),
    })?;
    CalibrationRun::parse(&text).map_err(|(line, reason)| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        reason,
    })
}

/// File suffix naming a threshold as a percentage, `0.95 -> "_SW95"`.
pub fn threshold_suffix(t: f64) -> String {
    format!("_SW{}", (t * 100.0).round() as i64)
}

pub fn cmd_apply(a: &ApplyArgs) -> Result<Vec<PathBuf>> {
    let threshold = match (a.threshold, &a.calibration) {
        (Some(t), _) => t,
        (None, Some(path)) => read_calibration(path)?.calibration.global_threshold,
        (None, None) => unreachable!("clap requires one of --threshold and --calibration"),
    };
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidConfig(format!("threshold {threshold} outside [0, 1]")));
    }
    let manifest = read_manifest(&a.manifest)?;
    let maps = load_probmaps(&manifest, a.split)?;
    create_dir(&a.out_dir)?;
    let suffix = threshold_suffix(threshold);
    maps.par_iter()
        .map(|(id, map)| {
            let path = a.out_dir.join(format!("{id}{suffix}.png"));
            save_mask(&apply_threshold(map, threshold), &path)?;
            Ok(path)
        })
        .collect()
}

/// Finds the prediction for `id`: `<id>.png`, else the only `<id>_SW*.png`.
fn find_prediction(dir: &Path, id: &str) -> Result<PathBuf> {
    let exact = dir.join(format!("{id}.png"));
    if exact.is_file() {
        return Ok(exact);
    }
    let prefix = format!("{id}_SW");
    let mut hits = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let digits = name.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".png"));
        if digits.is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())) {
            hits.push(path);
        }
    }
    match hits.len() {
        0 => Err(Error::MissingPrediction(id.to_string())),
        1 => Ok(hits.pop().unwrap()),
        _ => {
            hits.sort();
            Err(Error::Manifest {
                id: id.to_string(),
                reason: format!("{} candidate predictions in {}", hits.len(), dir.display()),
            })
        }
    }
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(&a.manifest)?;
    let gts = load_masks(&manifest, a.split, a.binarize_cutoff)?;
    let entries: Vec<&ManifestEntry> = manifest.in_split(a.split).collect();
    let preds: HashMap<String, BinaryMask> = entries
        .par_iter()
        .map(|e| {
            Ok((
                e.id.clone(),
                load_mask(find_prediction(&a.pred_dir, &e.id)?, a.binarize_cutoff)?,
            ))
        })
        .collect::<Result<_>>()?;

    let ids: Vec<&str> = entries.iter().map(|e| e.id.as_str()).collect();
    let p: Vec<BinaryMask> = ids.iter().map(|id| preds[*id].clone()).collect();
    let g: Vec<BinaryMask> = ids.iter().map(|id| gts[*id].clone()).collect();
    let overall = evaluate_set(&p, &g)?;
    write_text(
        &a.out,
        &report_csv("model", &[(a.label.clone(), overall)], a.with_macro),
    )?;
    let mut written = vec![a.out.clone()];
    if let Some(path) = &a.per_dataset {
        let rows = per_dataset_report_in(&manifest, Some(a.split), &preds, &gts)?;
        write_text(path, &report_csv("dataset", &rows, a.with_macro))?;
        written.push(path.clone());
    }
    Ok(written)
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(&a.manifest)?;
    let maps = load_probmaps(&manifest, a.split)?;
    let gts = load_masks(&manifest, a.split, a.binarize_cutoff)?;
    let (ids, maps): (Vec<String>, Vec<ProbabilityMap>) = maps.into_iter().unzip();
    let masks: Vec<BinaryMask> = ids.iter().map(|id| gts[id].clone()).collect();
    let rows: Vec<(String, _)> = sweep_thresholds(&maps, &masks, a.lo, a.hi, a.step)?
        .into_iter()
        .map(|(t, r)| (format!("{t:.2}"), r))
        .collect();
    write_text(&a.out, &report_csv("threshold", &rows, false))?;
    Ok(vec![a.out.clone()])
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => io_error(path, e),
    })?;
    let cfg: SynthConfig = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e
            .span()
            .map(|s| text[..s.start].lines().count().max(1) as u64)
            .unwrap_or(0),
        reason: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// A stand-in photograph: light pavement with the crack drawn dark.
fn save_rendered_image(gt: &BinaryMask, path: &Path) -> Result<()> {
    let mut img = gt.to_gray_image();
    for px in img.pixels_mut() {
        px.0[0] = if px.0[0] > 0 { 60 } else { 190 };
    }
    img.save(path).map_err(|e| io_error(path, std::io::Error::other(e)))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = match &a.config {
        Some(p) => load_synth_config(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if a.count == 0 {
        return Err(Error::InvalidConfig("count must be positive".into()));
    }
    for sub in ["images", "masks", "probmaps"] {
        create_dir(&a.out_dir.join(sub))?;
    }
    let width = a.count.saturating_sub(1).to_string().len().max(3);
    let entries: Vec<ManifestEntry> = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let id = format!("synth_{i:0width$}");
            let (gt, map) = synth_pair(&cfg.with_seed(cfg.seed.wrapping_add(i as u64)))?;
            let image_rel = PathBuf::from(format!("images/{id}.png"));
            let mask_rel = PathBuf::from(format!("masks/{id}.png"));
            let prob_rel = PathBuf::from(format!("probmaps/{id}.pmap"));
            let image_path = a.out_dir.join(&image_rel);
            save_rendered_image(&gt, &image_path)?;
            save_mask(&gt, a.out_dir.join(&mask_rel))?;
            save_probmap(&map, a.out_dir.join(&prob_rel), ProbFormat::Raw)?;
            Ok(ManifestEntry {
                // first half calibrates, second half is held out
                split: if i < a.count.div_ceil(2) {
                    Split::Val
                } else {
                    Split::Test
                },
                id,
                image_path: image_rel,
                mask_path: mask_rel,
                probmap_path: Some(prob_rel),
                source_dataset: "synth".into(),
            })
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest::new(&a.out_dir, entries)?;
    let out = a.out_dir.join("manifest.csv");
    write_manifest(&manifest, &out)?;
    Ok(vec![out])
}
