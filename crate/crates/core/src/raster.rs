//! Raster types for ground-truth masks and probability maps, plus their
//! file formats.
//!
//! Masks are stored as 8-bit grayscale PNG (crack = 255). Probability maps
//! come in two flavours: a lossless raw `PMAP` container and a 16-bit
//! grayscale PNG where `p = v / 65535`. [`load_probmap`] dispatches on the
//! file signature.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{GrayImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{write_io, Error, Result};

/// Magic bytes opening a raw probability-map file.
pub const PMAP_MAGIC: &[u8; 4] = b"PMAP";
const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";
const PMAP_HEADER_LEN: usize = 12;

/// Default gray-level cutoff for mask binarization (crack iff value > cutoff).
pub const DEFAULT_BINARIZE_CUTOFF: u8 = 127;

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage {
            width: width as u32,
            height: height as u32,
        });
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidRaster(format!(
            "{width}x{height} raster with {len} samples"
        )));
    }
    Ok(())
}

/// Per-pixel crack/background raster, row-major, `true` = crack.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.width, self.height)?;
        if self.width * self.height <= 64 * 64 {
            for row in self.data.chunks(self.width) {
                let line: String = row.iter().map(|&b| if b { '#' } else { '.' }).collect();
                writeln!(f, "  {line}")?;
            }
        }
        Ok(())
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    /// All-background mask.
    ///
    /// Panics if either dimension is zero.
    pub fn empty(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    /// All-crack mask. Panics if either dimension is zero.
    pub fn full(width: usize, height: usize) -> Self {
        Self::filled(width, height, true)
    }

    fn filled(width: usize, height: usize, value: bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a mask from a `(row, col) -> bool` function. Panics on a zero
    /// dimension.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { width, height, data }
    }

    /// Parses rows of `0`/`1` (or `.`/`#`) characters. Handy for fixtures.
    pub fn from_rows(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut data = Vec::with_capacity(width * height);
        for row in rows {
            if row.chars().count() != width {
                return Err(Error::InvalidRaster("ragged rows".into()));
            }
            for ch in row.chars() {
                data.push(match ch {
                    '1' | '#' => true,
                    '0' | '.' => false,
                    other => return Err(Error::InvalidRaster(format!("unexpected cell {other:?}"))),
                });
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<bool> {
        self.data
    }

    /// Number of crack pixels.
    pub fn crack_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn has_crack(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    /// `true` when every crack pixel of `self` is also crack in `other`.
    /// Masks of different dimensions are never subsets of each other.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn to_gray_image(&self) -> GrayImage {
        let pixels = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, pixels).expect("buffer length matches dimensions")
    }
}

/// Per-pixel crack probability, row-major, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::ValueOutOfRange { index, value });
        }
        Ok(Self { width, height, data })
    }

    /// Builds a map from a `(row, col) -> p` function; fails if any value is
    /// outside `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, data)
    }

    /// Embeds a mask as a `{0, 1}` probability field.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width,
            height: mask.height,
            data: mask.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Smallest and largest pixel probability.
    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }

    /// Mask of pixels whose probability is at least `threshold`.
    pub fn mask_at_least(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f64::from(p) >= threshold).collect(),
        }
    }
}

/// Serialization of a [`ProbabilityMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbFormat {
    /// `PMAP` header followed by little-endian `f32` samples. Lossless.
    Raw,
    /// 16-bit grayscale PNG, `v = round(p * 65535)`.
    Png16,
}

impl std::str::FromStr for ProbFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "pmap" => Ok(ProbFormat::Raw),
            "png16" | "png" => Ok(ProbFormat::Png16),
            other => Err(Error::InvalidConfig(format!("unknown probmap format {other:?}"))),
        }
    }
}

fn decode_error(path: &Path, reason: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::read_io(path, e))?;
    image::load_from_memory(&bytes).map_err(|e| decode_error(path, e))
}

/// Loads a grayscale or RGB image as a mask; a pixel is crack iff its 8-bit
/// gray (luma) value is strictly greater than `binarize_cutoff`.
pub fn load_mask(path: impl AsRef<Path>, binarize_cutoff: u8) -> Result<BinaryMask> {
    let path = path.as_ref();
    let gray = open_image(path)?.into_luma8();
    let (width, height) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(|v| v > binarize_cutoff).collect();
    BinaryMask::new(width as usize, height as usize, data)
}

/// Writes `mask` as an 8-bit grayscale PNG with crack = 255.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| write_io(path, e))?;
    let mut out = BufWriter::new(file);
    mask.to_gray_image()
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| image_write_error(path, e))?;
    out.flush().map_err(|e| write_io(path, e))
}

fn image_write_error(path: &Path, err: image::ImageError) -> Error {
    match err {
        image::ImageError::IoError(e) => write_io(path, e),
        other => write_io(path, std::io::Error::other(other)),
    }
}

/// Loads a probability map from either the raw `PMAP` format or a 16-bit
/// grayscale PNG (8-bit PNGs are widened, so `v / 255` is preserved).
pub fn load_probmap(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::read_io(path, e))?;
    if bytes.starts_with(PMAP_MAGIC) {
        decode_raw(&bytes).map_err(|e| match e {
            Error::InvalidRaster(reason) => decode_error(path, reason),
            other => other,
        })
    } else if bytes.starts_with(PNG_SIGNATURE) {
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
            .map_err(|e| decode_error(path, e))?
            .into_luma16();
        let (width, height) = img.dimensions();
        let data = img
            .into_raw()
            .into_iter()
            .map(|v| (f64::from(v) / 65535.0) as f32)
            .collect();
        ProbabilityMap::new(width as usize, height as usize, data)
    } else {
        Err(decode_error(path, "neither a PMAP nor a PNG file"))
    }
}

/// Parses an in-memory raw `PMAP` buffer.
pub fn decode_raw(bytes: &[u8]) -> Result<ProbabilityMap> {
    if bytes.len() < PMAP_HEADER_LEN || &bytes[..4] != PMAP_MAGIC {
        return Err(Error::InvalidRaster("missing PMAP header".into()));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[PMAP_HEADER_LEN..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::InvalidRaster("dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::InvalidRaster(format!(
            "expected {expected} payload bytes for {width}x{height}, found {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ProbabilityMap::new(width, height, data)
}

/// Encodes a map in the raw `PMAP` layout.
pub fn encode_raw(map: &ProbabilityMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(PMAP_HEADER_LEN + map.len() * 4);
    out.extend_from_slice(PMAP_MAGIC);
    out.extend_from_slice(&(map.width as u32).to_le_bytes());
    out.extend_from_slice(&(map.height as u32).to_le_bytes());
    for p in &map.data {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// 16-bit quantization used by the PNG format.
pub fn quantize16(p: f32) -> u16 {
    (f64::from(p) * 65535.0).round() as u16
}

pub fn save_probmap(map: &ProbabilityMap, path: impl AsRef<Path>, format: ProbFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ProbFormat::Raw => fs::write(path, encode_raw(map)).map_err(|e| write_io(path, e)),
        ProbFormat::Png16 => {
            let pixels: Vec<u16> = map.data.iter().map(|&p| quantize16(p)).collect();
            let img: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(map.width as u32, map.height as u32, pixels)
                    .expect("buffer length matches dimensions");
            let file = fs::File::create(path).map_err(|e| write_io(path, e))?;
            let mut out = BufWriter::new(file);
            img.write_to(&mut out, ImageFormat::Png)
                .map_err(|e| image_write_error(path, e))?;
            out.flush().map_err(|e| write_io(path, e))
        }
    }
}
