//! Dataset manifests: discovery from a directory tree, source attribution by
//! filename prefix, the per-source validation split, and the CSV format.
//!
//! Manifest CSV columns: `id,image_path,mask_path,probmap_path,source_dataset,split`.
//! Relative paths are resolved against the directory holding the manifest.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{write_io, Error, Result};

pub const MANIFEST_HEADER: [&str; 6] = [
    "id",
    "image_path",
    "mask_path",
    "probmap_path",
    "source_dataset",
    "split",
];

/// Side length of the pre-resized images in the merged crack dataset.
pub const EXPECTED_SIDE: usize = 448;
pub const DEFAULT_VAL_FRACTION: f64 = 0.2;
pub const DEFAULT_SPLIT_SEED: u64 = 42;
/// Source name given to files no prefix rule matches.
pub const UNKNOWN_SOURCE: &str = "unknown";

const DEFAULT_PREFIX_MAP: &str = include_str!("../config/prefix_map.txt");
const IMAGE_EXTENSIONS: [&str; 7] = ["png", "jpg", "jpeg", "bmp", "tif", "tiff", "gif"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("invalid split {other:?} (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub probmap_path: Option<PathBuf>,
    pub source_dataset: String,
    pub split: Split,
}

/// An ordered list of entries with unique ids, anchored at `root`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest {
                    id: e.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    pub fn empty(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            entries: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ManifestEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Resolves a manifest path against the root; absolute paths pass through.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.root.join(path)
    }

    /// Loads image headers and checks that each entry's image and mask agree
    /// in size. Sizes other than `expected` only produce warnings.
    pub fn check_dimensions(&self, expected: Option<(usize, usize)>) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        for e in &self.entries {
            let dims = |p: &Path| -> Result<(usize, usize)> {
                let path = self.resolve(p);
                image::image_dimensions(&path)
                    .map(|(w, h)| (w as usize, h as usize))
                    .map_err(|err| Error::Manifest {
                        id: e.id.clone(),
                        reason: format!("{}: {err}", path.display()),
                    })
            };
            let image = dims(&e.image_path)?;
            let mask = dims(&e.mask_path)?;
            if image != mask {
                return Err(Error::Manifest {
                    id: e.id.clone(),
                    reason: format!("image is {image:?} but mask is {mask:?}"),
                });
            }
            if let Some(exp) = expected {
                if image != exp {
                    warnings.push(format!("{}: size {:?}, expected {:?}", e.id, image, exp));
                }
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }
}

/// Filename-prefix rules mapping files to their source dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrefixMap {
    rules: Vec<(String, String)>,
}

impl PrefixMap {
    pub fn new(rules: Vec<(String, String)>) -> Self {
        Self { rules }
    }

    /// Rules for the filename prefixes of the merged Kaggle crack dataset.
    pub fn kaggle_default() -> Self {
        Self::parse(DEFAULT_PREFIX_MAP, Path::new("<builtin prefix map>")).expect("builtin prefix map parses")
    }

    /// Parses `prefix=source` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((prefix, source)) if !prefix.is_empty() && !source.trim().is_empty() => {
                    rules.push((prefix.to_string(), source.trim().to_string()));
                }
                _ => {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: i as u64 + 1,
                        reason: format!("expected prefix=source, found {line:?}"),
                    })
                }
            }
        }
        Ok(Self { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::read_io(path, e))?;
        Self::parse(&text, path)
    }

    /// Source of the longest rule prefixing `file_name`.
    pub fn source_for(&self, file_name: &str) -> Option<&str> {
        self.rules
            .iter()
            .filter(|(prefix, _)| file_name.starts_with(prefix.as_str()))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(_, source)| source.as_str())
    }
}

/// Result of [`discover`]: the manifest plus files no prefix rule matched.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub manifest: DatasetManifest,
    pub unmatched: Vec<String>,
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::read_io(dir, e))? {
        let path = entry.map_err(|e| Error::read_io(dir, e))?.path();
        if is_image_file(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn find_mask(mask_dir: &Path, image: &Path) -> Option<PathBuf> {
    let same = mask_dir.join(image.file_name()?);
    if same.is_file() {
        return Some(same);
    }
    let stem = image.file_stem()?.to_str()?;
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| mask_dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

fn find_probmap(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["pmap", "png"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Scans `root` for `images/` + `masks/` pairs.
///
/// With `train/`, `val/` or `test/` subdirectories each one is scanned and
/// its entries take that split; otherwise `root/images` is scanned as a flat
/// training layout. An optional `probmaps/` sibling directory supplies
/// `<stem>.pmap` or `<stem>.png` probability maps.
pub fn discover(root: impl AsRef<Path>, prefix_map: &PrefixMap) -> Result<Discovery> {
    let root = root.as_ref();
    let split_dirs: Vec<(PathBuf, Split)> = [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .map(|s| (root.join(s.as_str()), s))
        .filter(|(dir, _)| dir.join("images").is_dir())
        .collect();
    let layout = if split_dirs.is_empty() && root.join("images").is_dir() {
        vec![(root.to_path_buf(), Split::Train)]
    } else {
        split_dirs
    };

    let mut entries = Vec::new();
    let mut unmatched = Vec::new();
    for (dir, split) in layout {
        let mask_dir = dir.join("masks");
        let prob_dir = dir.join("probmaps");
        for image in sorted_files(&dir.join("images"))? {
            let mask = find_mask(&mask_dir, &image).ok_or_else(|| Error::MissingMask(image.clone()))?;
            let file_name = image.file_name().unwrap().to_string_lossy().into_owned();
            let stem = image.file_stem().unwrap().to_string_lossy().into_owned();
            let source = match prefix_map.source_for(&file_name) {
                Some(s) => s.to_string(),
                None => {
                    unmatched.push(file_name.clone());
                    UNKNOWN_SOURCE.to_string()
                }
            };
            let rel = |p: &Path| p.strip_prefix(root).unwrap_or(p).to_path_buf();
            entries.push(ManifestEntry {
                id: stem.clone(),
                image_path: rel(&image),
                mask_path: rel(&mask),
                probmap_path: find_probmap(&prob_dir, &stem).map(|p| rel(&p)),
                source_dataset: source,
                split,
            });
        }
    }
    for name in &unmatched {
        log::warn!("no prefix rule matches {name}");
    }
    Ok(Discovery {
        manifest: DatasetManifest::new(root, entries)?,
        unmatched,
    })
}

/// Number of validation entries drawn from a source with `n` entries:
/// `floor(fraction * n)`, but at least one for a non-empty source.
pub fn val_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    // the epsilon absorbs products like 0.2 * 15 = 3.0000000000000004 landing just below
    let k = (fraction * n as f64 + 1e-9).floor() as usize;
    k.clamp(1, n)
}

/// Moves `val_count(n, val_fraction)` entries of every source dataset into
/// the validation split, chosen by a shuffle seeded with `seed`.
///
/// Every entry must currently be in the train split. The result keeps the
/// input order; only `split` fields change.
pub fn stratified_split(manifest: &DatasetManifest, val_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(Error::InvalidConfig(format!(
            "validation fraction {val_fraction} outside [0, 1]"
        )));
    }
    if let Some(e) = manifest.entries.iter().find(|e| e.split != Split::Train) {
        return Err(Error::NonTrainEntries(e.id.clone()));
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        groups.entry(e.source_dataset.as_str()).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = manifest.entries.clone();
    for indices in groups.values_mut() {
        indices.sort_by(|&a, &b| manifest.entries[a].id.cmp(&manifest.entries[b].id));
        indices.shuffle(&mut rng);
        let k = if val_fraction == 0.0 {
            0
        } else {
            val_count(indices.len(), val_fraction)
        };
        for &i in &indices[..k] {
            entries[i].split = Split::Val;
        }
    }
    DatasetManifest::new(manifest.root.clone(), entries)
}

/// Applies [`stratified_split`] to the train entries only, leaving test
/// entries where they are.
pub fn split_train_entries(manifest: &DatasetManifest, val_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if let Some(e) = manifest.in_split(Split::Val).next() {
        return Err(Error::NonTrainEntries(e.id.clone()));
    }
    let train: Vec<ManifestEntry> = manifest.in_split(Split::Train).cloned().collect();
    let split = stratified_split(&DatasetManifest::new(manifest.root.clone(), train)?, val_fraction, seed)?;
    let mut by_id: BTreeMap<String, Split> = split.entries.into_iter().map(|e| (e.id, e.split)).collect();
    let entries = manifest
        .entries
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if let Some(s) = by_id.remove(&e.id) {
                e.split = s;
            }
            e
        })
        .collect();
    DatasetManifest::new(manifest.root.clone(), entries)
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Rewrites `path` (relative to `from_root`) so that it is valid relative to
/// `to_dir`, falling back to an absolute path.
fn rebase(path: &Path, from_root: &Path, to_dir: &Path) -> PathBuf {
    let joined = from_root.join(path);
    if path.is_relative() && from_root == to_dir {
        return path.to_path_buf();
    }
    let abs = std::path::absolute(&joined).unwrap_or(joined);
    let base = std::path::absolute(to_dir).unwrap_or_else(|_| to_dir.to_path_buf());
    match abs.strip_prefix(&base) {
        Ok(rel) => rel.to_path_buf(),
        Err(_) => abs,
    }
}

/// Serializes a manifest as CSV text with paths relative to `dir`.
pub fn manifest_to_csv(manifest: &DatasetManifest, dir: &Path) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER).expect("in-memory write");
    for e in &manifest.entries {
        let re = |p: &Path| path_string(&rebase(p, &manifest.root, dir));
        w.write_record([
            e.id.clone(),
            re(&e.image_path),
            re(&e.mask_path),
            e.probmap_path.as_deref().map(re).unwrap_or_default(),
            e.source_dataset.clone(),
            e.split.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::write(path, manifest_to_csv(manifest, &dir)).map_err(|e| write_io(path, e))
}

/// Parses manifest CSV text; `origin` is used for error messages and `root`
/// anchors the relative paths.
pub fn parse_manifest(text: &str, origin: &Path, root: &Path) -> Result<DatasetManifest> {
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(parse_err(1, format!("expected header {}", MANIFEST_HEADER.join(","))));
    }

    let mut entries = Vec::new();
    let mut ids = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        if field(0).is_empty() {
            return Err(parse_err(line, "empty id".into()));
        }
        if field(1).is_empty() || field(2).is_empty() {
            return Err(parse_err(line, "image_path and mask_path are required".into()));
        }
        let split = field(5).parse::<Split>().map_err(|r| parse_err(line, r))?;
        if !ids.insert(field(0).to_string()) {
            return Err(parse_err(line, format!("duplicate id {:?}", field(0))));
        }
        entries.push(ManifestEntry {
            id: field(0).to_string(),
            image_path: PathBuf::from(field(1)),
            mask_path: PathBuf::from(field(2)),
            probmap_path: Some(field(3)).filter(|s| !s.is_empty()).map(PathBuf::from),
            source_dataset: field(4).to_string(),
            split,
        });
    }
    DatasetManifest::new(root, entries)
}

/// Reads a manifest file; its directory becomes the manifest root.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::read_io(path, e))?;
    let root = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    parse_manifest(&text, path, &root)
}
