//! Synthetic crack masks and probability maps for exercising the pipeline
//! without a trained model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{dilate, KernelSize};
use crate::raster::{BinaryMask, ProbabilityMap};

// 8-neighbour directions, clockwise from east
const DIRECTIONS: [(isize, isize); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];
const TURN_PROBABILITY: f64 = 0.3;
const NOISE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Stamps laid down per walk.
    pub walk_steps: usize,
    pub walk_count: usize,
    /// Side of the square stamp.
    pub base_width: usize,
    pub noise_sigma: f64,
    pub blur_radius: usize,
    pub seed: u64,
    /// Dilation kernel applied to the crack before it is turned into a
    /// probability map, so the emulated model over-predicts crack width.
    /// 1 disables it.
    pub bleed_kernel: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            walk_steps: 80,
            walk_count: 2,
            base_width: 2,
            noise_sigma: 0.03,
            blur_radius: 1,
            seed: 42,
            bleed_kernel: 3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("width", self.width),
            ("height", self.height),
            ("walk_steps", self.walk_steps),
            ("walk_count", self.walk_count),
            ("base_width", self.base_width),
            ("bleed_kernel", self.bleed_kernel),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

fn stamp(mask: &mut BinaryMask, row: usize, col: usize, size: usize) {
    let before = (size - 1) / 2;
    let after = size / 2;
    let r0 = row.saturating_sub(before);
    let r1 = (row + after).min(mask.height() - 1);
    let c0 = col.saturating_sub(before);
    let c1 = (col + after).min(mask.width() - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            mask.set(r, c, true);
        }
    }
}

/// Rasterizes `walk_count` random walks. Each walk moves one pixel per step
/// in one of eight directions, keeping its heading with probability 0.7 and
/// otherwise turning by 45 degrees; it bounces off the image border.
pub fn generate_crack_mask(cfg: &SynthConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mask = BinaryMask::empty(cfg.width, cfg.height);
    let (h, w) = (cfg.height as isize, cfg.width as isize);
    for _ in 0..cfg.walk_count {
        let mut row = rng.random_range(0..cfg.height) as isize;
        let mut col = rng.random_range(0..cfg.width) as isize;
        let mut dir = rng.random_range(0..DIRECTIONS.len());
        for step in 0..cfg.walk_steps {
            stamp(&mut mask, row as usize, col as usize, cfg.base_width);
            if step + 1 == cfg.walk_steps {
                break;
            }
            if rng.random_bool(TURN_PROBABILITY) {
                dir = if rng.random_bool(0.5) {
                    (dir + 1) % 8
                } else {
                    (dir + 7) % 8
                };
            }
            let (mut dr, mut dc) = DIRECTIONS[dir];
            if !(0..h).contains(&(row + dr)) {
                dr = -dr;
            }
            if !(0..w).contains(&(col + dc)) {
                dc = -dc;
            }
            dir = DIRECTIONS.iter().position(|&d| d == (dr, dc)).unwrap();
            row = (row + dr).clamp(0, h - 1);
            col = (col + dc).clamp(0, w - 1);
        }
    }
    Ok(mask)
}

/// Mean of the `{0, 1}` field over a `(2r+1)^2` window, clipped at borders.
fn box_blur(mask: &BinaryMask, radius: usize) -> Vec<f64> {
    let (w, h) = mask.dims();
    if radius == 0 {
        return mask.data().iter().map(|&b| f64::from(u8::from(b))).collect();
    }
    // summed-area table with a zero border row and column
    let stride = w + 1;
    let mut sat = vec![0u32; stride * (h + 1)];
    for r in 0..h {
        let mut row_sum = 0;
        for c in 0..w {
            row_sum += u32::from(mask.get(r, c));
            sat[(r + 1) * stride + c + 1] = sat[r * stride + c + 1] + row_sum;
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        let (r0, r1) = (r.saturating_sub(radius), (r + radius).min(h - 1) + 1);
        for c in 0..w {
            let (c0, c1) = (c.saturating_sub(radius), (c + radius).min(w - 1) + 1);
            let sum = sat[r1 * stride + c1] + sat[r0 * stride + c0] - sat[r0 * stride + c1] - sat[r1 * stride + c0];
            let area = ((r1 - r0) * (c1 - c0)) as f64;
            out.push(f64::from(sum) / area);
        }
    }
    out
}

/// Box-blurs the mask by `blur_radius`, adds Gaussian noise of
/// `noise_sigma` and clamps to `[0, 1]`.
pub fn corrupt_to_probmap(mask: &BinaryMask, cfg: &SynthConfig) -> Result<ProbabilityMap> {
    cfg.validate()?;
    let mut field = box_blur(mask, cfg.blur_radius);
    if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ NOISE_STREAM);
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
        for v in &mut field {
            *v += normal.sample(&mut rng);
        }
    }
    let data = field.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    ProbabilityMap::new(mask.width(), mask.height(), data)
}

/// A ground-truth mask and the probability map an over-predicting model
/// might emit for it: the mask dilated by `bleed_kernel`, then corrupted.
pub fn synth_pair(cfg: &SynthConfig) -> Result<(BinaryMask, ProbabilityMap)> {
    let gt = generate_crack_mask(cfg)?;
    let bled = dilate(&gt, KernelSize::new(cfg.bleed_kernel)?);
    let map = corrupt_to_probmap(&bled, cfg)?;
    Ok((gt, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{count, Connectivity};

    #[test]
    fn one_step_is_one_stamp() {
        let cfg = SynthConfig {
            width: 20,
            height: 20,
            walk_count: 1,
            walk_steps: 1,
            base_width: 3,
            ..Default::default()
        };
        let m = generate_crack_mask(&cfg).unwrap();
        let n = m.crack_count();
        // a 3x3 stamp, possibly clipped by the border
        assert!((4..=9).contains(&n), "{n}");
        assert_eq!(count(&m, Connectivity::Four), 1);
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig::default();
        assert_eq!(generate_crack_mask(&cfg).unwrap(), generate_crack_mask(&cfg).unwrap());
        let m = generate_crack_mask(&cfg).unwrap();
        assert_eq!(
            corrupt_to_probmap(&m, &cfg).unwrap(),
            corrupt_to_probmap(&m, &cfg).unwrap()
        );
        assert_ne!(generate_crack_mask(&cfg.with_seed(7)).unwrap(), m);
    }

    #[test]
    fn walks_bound_component_count() {
        for seed in [1u64, 1000, 1_000_000] {
            let cfg = SynthConfig {
                walk_count: 3,
                seed,
                ..Default::default()
            };
            let m = generate_crack_mask(&cfg).unwrap();
            assert!(m.has_crack());
            assert!(count(&m, Connectivity::Eight) <= 3);
        }
    }

    #[test]
    fn identity_corruption() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            blur_radius: 0,
            ..Default::default()
        };
        let m = generate_crack_mask(&cfg).unwrap();
        assert_eq!(corrupt_to_probmap(&m, &cfg).unwrap(), ProbabilityMap::from_mask(&m));
    }

    #[test]
    fn blur_keeps_interior_and_softens_boundary() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            blur_radius: 1,
            ..Default::default()
        };
        let m = BinaryMask::from_fn(12, 12, |r, c| (3..9).contains(&r) && (3..9).contains(&c));
        let p = corrupt_to_probmap(&m, &cfg).unwrap();
        for r in 0..12 {
            for c in 0..12 {
                let interior = (4..8).contains(&r) && (4..8).contains(&c);
                let boundary = !interior && (2..10).contains(&r) && (2..10).contains(&c);
                let v = p.get(r, c);
                if interior {
                    assert_eq!(v, 1.0);
                } else if boundary {
                    assert!(v > 0.0 && v < 1.0, "({r},{c}) = {v}");
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SynthConfig {
            walk_count: 0,
            ..Default::default()
        };
        assert!(matches!(generate_crack_mask(&cfg), Err(Error::InvalidConfig(_))));
        let cfg = SynthConfig {
            noise_sigma: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
