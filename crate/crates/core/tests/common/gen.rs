//! Random inputs for property tests: proptest strategies plus seeded
//! generators for fixed-count sweeps.

#![allow(dead_code)]

use crackseg::{BinaryMask, ProbabilityMap};
use proptest::prelude::*;
use rand::Rng;

pub fn mask_with(max_w: usize, max_h: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_w, 1..=max_h, 0.05f64..0.7).prop_flat_map(|(w, h, density)| {
        proptest::collection::vec(proptest::bool::weighted(density), w * h)
            .prop_map(move |data| BinaryMask::new(w, h, data).unwrap())
    })
}

/// Two masks of the same shape.
pub fn mask_pair(max_w: usize, max_h: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max_w, 1..=max_h).prop_flat_map(|(w, h)| {
        let one = proptest::collection::vec(any::<bool>(), w * h);
        (one.clone(), one)
            .prop_map(move |(a, b)| (BinaryMask::new(w, h, a).unwrap(), BinaryMask::new(w, h, b).unwrap()))
    })
}

/// Probability maps mixing background noise below 0.5 with crack-like
/// values above it, so thresholds above 0.5 actually split components.
pub fn probmap_with(max_w: usize, max_h: usize) -> impl Strategy<Value = ProbabilityMap> {
    (1..=max_w, 1..=max_h).prop_flat_map(|(w, h)| {
        proptest::collection::vec(
            prop_oneof![0.0f32..0.5, 0.5f32..=1.0, Just(0.0f32), Just(1.0f32)],
            w * h,
        )
        .prop_map(move |data| ProbabilityMap::new(w, h, data).unwrap())
    })
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::new(w, h, (0..w * h).map(|_| rng.random_bool(density)).collect()).unwrap()
}

/// A 16x16-style map: a crack skeleton of high values with a halo of
/// mid values, plus scattered background noise.
pub fn random_probmap(rng: &mut impl Rng, w: usize, h: usize) -> ProbabilityMap {
    let data = (0..w * h)
        .map(|_| match rng.random_range(0..10) {
            0..=3 => rng.random_range(0.0f32..0.5),
            4..=6 => rng.random_range(0.5f32..0.9),
            _ => rng.random_range(0.9f32..=1.0),
        })
        .collect();
    ProbabilityMap::new(w, h, data).unwrap()
}
