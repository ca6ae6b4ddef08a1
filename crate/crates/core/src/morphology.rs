//! Square-kernel binary dilation and the stochastic-width mask chain.
//!
//! A `k x k` kernel stamps offsets `-(k-1)/2 ..= k/2` around every crack
//! pixel, on both axes. Odd kernels are centred; the 8x8 kernel used by the
//! chain spreads a pixel 3 up/left and 4 down/right. Windows are clipped at
//! the image border.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{DatasetManifest, ManifestEntry, Split};
use crate::error::{write_io, Error, Result};
use crate::raster::{load_mask, save_mask, BinaryMask, DEFAULT_BINARIZE_CUTOFF};

/// Side length of a square structuring element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KernelSize(usize);

impl KernelSize {
    pub const K3: KernelSize = KernelSize(3);
    pub const K5: KernelSize = KernelSize(5);
    pub const K8: KernelSize = KernelSize(8);

    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("kernel size must be at least 1".into()));
        }
        Ok(KernelSize(k))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// How far a crack pixel spreads towards lower indices.
    pub fn reach_before(self) -> usize {
        (self.0 - 1) / 2
    }

    /// How far a crack pixel spreads towards higher indices.
    pub fn reach_after(self) -> usize {
        self.0 / 2
    }
}

/// Kernels of the stochastic-width chain, applied in order.
pub const SW_KERNELS: [KernelSize; 3] = [KernelSize::K3, KernelSize::K5, KernelSize::K8];

/// One-dimensional dilation of `len` samples read through `get`.
///
/// Output `i` is set iff some input in `i - after ..= i + before` is set,
/// which is the stamp rule seen from the output side.
fn dilate_line(
    len: usize,
    before: usize,
    after: usize,
    get: impl Fn(usize) -> bool,
    mut put: impl FnMut(usize, bool),
    prefix: &mut Vec<u32>,
) {
    prefix.clear();
    prefix.push(0);
    let mut acc = 0u32;
    for i in 0..len {
        acc += get(i) as u32;
        prefix.push(acc);
    }
    for i in 0..len {
        let lo = i.saturating_sub(after);
        let hi = (i + before).min(len - 1);
        put(i, prefix[hi + 1] > prefix[lo]);
    }
}

/// Dilates `mask` with a `k x k` square of ones.
///
/// Runs as a row pass followed by a column pass, so the cost is linear in
/// the pixel count regardless of `k`.
pub fn dilate(mask: &BinaryMask, k: KernelSize) -> BinaryMask {
    let (w, h) = mask.dims();
    let (before, after) = (k.reach_before(), k.reach_after());
    if before == 0 && after == 0 {
        return mask.clone();
    }
    let src = mask.data();
    let mut rows = vec![false; w * h];
    let mut prefix = Vec::with_capacity(w.max(h) + 1);
    for r in 0..h {
        let base = r * w;
        let out = &mut rows[base..base + w];
        dilate_line(w, before, after, |c| src[base + c], |c, v| out[c] = v, &mut prefix);
    }
    let mut data = vec![false; w * h];
    for c in 0..w {
        dilate_line(
            h,
            before,
            after,
            |r| rows[r * w + c],
            |r, v| data[r * w + c] = v,
            &mut prefix,
        );
    }
    BinaryMask::new(w, h, data).expect("dimensions preserved")
}

/// Ground truth plus its three incrementally dilated variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwChain {
    pub gt: BinaryMask,
    pub m1: BinaryMask,
    pub m2: BinaryMask,
    pub m3: BinaryMask,
}

impl SwChain {
    /// `(suffix kernel, mask)` pairs in chain order; the ground truth has kernel 0.
    pub fn labelled(&self) -> [(usize, &BinaryMask); 4] {
        [(0, &self.gt), (3, &self.m1), (5, &self.m2), (8, &self.m3)]
    }
}

/// Dilates by 3, then the result by 5, then that by 8.
pub fn sw_chain(gt: &BinaryMask) -> SwChain {
    let m1 = dilate(gt, SW_KERNELS[0]);
    let m2 = dilate(&m1, SW_KERNELS[1]);
    let m3 = dilate(&m2, SW_KERNELS[2]);
    SwChain {
        gt: gt.clone(),
        m1,
        m2,
        m3,
    }
}

fn manifest_error(id: &str, reason: impl Into<String>) -> Error {
    Error::Manifest {
        id: id.to_string(),
        reason: reason.into(),
    }
}

fn augment_entry(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    out_dir: &Path,
    cutoff: u8,
) -> Result<Vec<ManifestEntry>> {
    let image_src = manifest.resolve(&entry.image_path);
    let mask_src = manifest.resolve(&entry.mask_path);
    if !image_src.is_file() {
        return Err(manifest_error(
            &entry.id,
            format!("missing image {}", image_src.display()),
        ));
    }
    if !mask_src.is_file() {
        return Err(manifest_error(
            &entry.id,
            format!("missing mask {}", mask_src.display()),
        ));
    }
    let gt = load_mask(&mask_src, cutoff).map_err(|e| manifest_error(&entry.id, e.to_string()))?;
    let chain = sw_chain(&gt);
    let ext = image_src
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();

    let mut out = Vec::with_capacity(4);
    for (k, mask) in chain.labelled() {
        let id = format!("{}_sw{k}", entry.id);
        let image_rel = Path::new("images").join(format!("{id}{ext}"));
        let mask_rel = Path::new("masks").join(format!("{id}.png"));
        let image_dst = out_dir.join(&image_rel);
        fs::copy(&image_src, &image_dst).map_err(|e| write_io(&image_dst, e))?;
        save_mask(mask, out_dir.join(&mask_rel))?;
        out.push(ManifestEntry {
            id,
            image_path: image_rel,
            mask_path: mask_rel,
            probmap_path: None,
            source_dataset: entry.source_dataset.clone(),
            split: Split::Train,
        });
    }
    Ok(out)
}

/// [`augment_dataset_with_cutoff`] with the default mask cutoff.
pub fn augment_dataset(manifest: &DatasetManifest, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    augment_dataset_with_cutoff(manifest, out_dir, DEFAULT_BINARIZE_CUTOFF)
}

/// Expands every training entry into four entries (`_sw0`, `_sw3`, `_sw5`,
/// `_sw8`) written under `out_dir/images` and `out_dir/masks`. Other splits
/// are carried over with their paths re-anchored so they stay valid from
/// `out_dir`, which is the root of the returned manifest.
pub fn augment_dataset_with_cutoff(
    manifest: &DatasetManifest,
    out_dir: impl AsRef<Path>,
    cutoff: u8,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    for sub in ["images", "masks"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| write_io(&dir, e))?;
    }

    let expanded: Vec<Vec<ManifestEntry>> = manifest
        .entries()
        .par_iter()
        .map(|entry| {
            if entry.split == Split::Train {
                augment_entry(manifest, entry, out_dir, cutoff)
            } else {
                let anchor = |p: &Path| {
                    let full = manifest.resolve(p);
                    std::path::absolute(&full).unwrap_or(full)
                };
                let mut e = entry.clone();
                e.image_path = anchor(&entry.image_path);
                e.mask_path = anchor(&entry.mask_path);
                e.probmap_path = entry.probmap_path.as_deref().map(anchor);
                Ok(vec![e])
            }
        })
        .collect::<Result<_>>()?;

    DatasetManifest::new(out_dir, expanded.into_iter().flatten().collect())
}
