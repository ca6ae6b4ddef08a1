//! Brute-force reference implementations used only by tests. None of these
//! share code paths with the library algorithms they check.

#![allow(dead_code)]

use crackseg::{BinaryMask, Connectivity, ProbabilityMap};

/// Minkowski sum of the crack set with the `k x k` offset square
/// `-(k-1)/2 ..= k/2`, by iterating every (pixel, offset) pair.
pub fn dilate_oracle(mask: &BinaryMask, k: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let lo = -(((k as isize) - 1) / 2);
    let hi = (k / 2) as isize;
    let mut out = vec![false; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            if !mask.get(r as usize, c as usize) {
                continue;
            }
            for dr in lo..=hi {
                for dc in lo..=hi {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr >= 0 && cc >= 0 && rr < h as isize && cc < w as isize {
                        out[rr as usize * w + cc as usize] = true;
                    }
                }
            }
        }
    }
    BinaryMask::new(w, h, out).unwrap()
}

fn neighbours(conn: Connectivity) -> &'static [(isize, isize)] {
    match conn {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
    }
}

/// Flood-fill labels numbered by raster order of each component's first
/// pixel, plus the component count.
pub fn flood_fill_labels(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, usize) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for &(dr, dc) in neighbours(conn) {
                let (rr, cc) = (r + dr, c + dc);
                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                    continue;
                }
                let j = rr as usize * w + cc as usize;
                if mask.data()[j] && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
    }
    (labels, next as usize)
}

pub fn flood_fill_count(mask: &BinaryMask, conn: Connectivity) -> usize {
    flood_fill_labels(mask, conn).1
}

/// Component count of `{p >= 0.5 and p >= t}` for every distinct pixel
/// probability `v >= 0.5`, found by direct pixel comparison and flood fill.
pub struct ThresholdSweep {
    /// `(v, components at v)` sorted by `v`.
    pub steps: Vec<(f64, usize)>,
    pub n_initial: usize,
}

impl ThresholdSweep {
    pub fn new(map: &ProbabilityMap, conn: Connectivity) -> Self {
        let (w, h) = map.dims();
        let mask_at = |t: f64| {
            BinaryMask::new(
                w,
                h,
                map.data()
                    .iter()
                    .map(|&p| f64::from(p) >= 0.5 && f64::from(p) >= t)
                    .collect(),
            )
            .unwrap()
        };
        let mut values: Vec<f64> = map.data().iter().map(|&p| f64::from(p)).filter(|&p| p >= 0.5).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        let steps = values
            .iter()
            .map(|&v| (v, flood_fill_count(&mask_at(v), conn)))
            .collect();
        Self {
            steps,
            n_initial: flood_fill_count(&mask_at(0.5), conn),
        }
    }

    /// Component count at an arbitrary threshold: the mask only changes at
    /// pixel values, so it equals the count at the smallest value `>= t`.
    pub fn count_at(&self, t: f64) -> usize {
        if t <= 0.5 {
            return self.n_initial;
        }
        self.steps.iter().find(|&&(v, _)| v >= t).map_or(0, |&(_, n)| n)
    }
}

/// Ten equal bins over `[lo, hi]`, last edge pinned to `hi`.
pub fn edges(lo: f64, hi: f64) -> [f64; 11] {
    let mut e = [0.0; 11];
    for (i, x) in e.iter_mut().enumerate() {
        *x = lo + i as f64 * ((hi - lo) / 10.0);
    }
    e[10] = hi;
    e
}

/// First bin whose upper edge raises the component count above the
/// initial count, per the exhaustive sweep.
pub fn oracle_trigger_bin(map: &ProbabilityMap, sweep: &ThresholdSweep) -> Option<(usize, [f64; 11])> {
    let lo = map.data().iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = map.data().iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let e = edges(lo, hi);
    (0..10)
        .find(|&i| sweep.count_at(e[i + 1]) > sweep.n_initial)
        .map(|i| (i, e))
}

/// Checks one per-image search result against the exhaustive sweep: the
/// component count at the returned threshold, the triggering bin, and the
/// termination tag. Returns a description of the first disagreement.
pub fn check_threshold_against_sweep(map: &ProbabilityMap, conn: Connectivity) -> Result<(), String> {
    use crackseg::{per_image_threshold, Termination};

    let sweep = ThresholdSweep::new(map, conn);
    let got = per_image_threshold(map, conn).map_err(|e| e.to_string())?;
    if got.n_initial != sweep.n_initial {
        return Err(format!("n_initial {} vs oracle {}", got.n_initial, sweep.n_initial));
    }
    let t = got.threshold;
    let (w, h) = map.dims();
    let kept = BinaryMask::new(
        w,
        h,
        map.data()
            .iter()
            .map(|&p| f64::from(p) >= 0.5 && f64::from(p) >= t)
            .collect(),
    )
    .unwrap();
    if crackseg::count(&kept, conn) != sweep.count_at(t) {
        return Err(format!(
            "count at {t}: {} vs oracle {}",
            crackseg::count(&kept, conn),
            sweep.count_at(t)
        ));
    }
    match oracle_trigger_bin(map, &sweep) {
        None => {
            let hi = f64::from(map.data().iter().copied().fold(0.0f32, f32::max));
            if got.terminated_by != Termination::ExhaustedBins || t != hi {
                return Err(format!("oracle sees no trigger, got {:?} at {t}", got.terminated_by));
            }
        }
        Some((i, e)) => {
            if !(e[i] <= t && t <= e[i + 1]) {
                return Err(format!("t={t} outside triggering bin [{}, {}]", e[i], e[i + 1]));
            }
            let sub = edges(e[i], e[i + 1]);
            let first_equal = (1..11).rev().find(|&j| sweep.count_at(sub[j]) == sweep.n_initial);
            let expected = match first_equal {
                Some(j) => (Termination::EqualityFound, sub[j]),
                None => (Termination::ExhaustedSubbins, sub[1]),
            };
            if (got.terminated_by, t) != expected {
                return Err(format!("got {:?} at {t}, oracle {:?}", got.terminated_by, expected));
            }
        }
    }
    Ok(())
}
