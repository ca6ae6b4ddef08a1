mod common;

use common::gen::{probmap_with, random_probmap};
use common::oracles::check_threshold_against_sweep;
use crackseg::calibration::{refine, sweep_grid, PerImageThreshold, SWEEP_HI, SWEEP_LO, SWEEP_STEP};
use crackseg::synth::{synth_pair, SynthConfig};
use crackseg::{
    aggregate_thresholds, apply_threshold, calibrate, count, initial_prediction, per_image_threshold, sweep_thresholds,
    BinaryMask, CalibrationRun, Connectivity, Error, ProbabilityMap, Termination,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn nonempty_initial(map: &ProbabilityMap) -> bool {
    initial_prediction(map).has_crack()
}

proptest! {
    #[test]
    fn threshold_is_anti_monotone(map in probmap_with(24, 24), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(apply_threshold(&map, t2).is_subset_of(&apply_threshold(&map, t1)));
    }

    #[test]
    fn threshold_is_idempotent(map in probmap_with(24, 24), t in 0.0f64..=1.0, t2 in 0.001f64..=1.0) {
        let once = apply_threshold(&map, t);
        let again = apply_threshold(&ProbabilityMap::from_mask(&once), t2);
        prop_assert_eq!(once, again);
    }

    #[test]
    fn search_agrees_with_exhaustive_sweep(map in probmap_with(16, 16), eight in any::<bool>()) {
        prop_assume!(nonempty_initial(&map));
        let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
        if let Err(msg) = check_threshold_against_sweep(&map, conn) {
            return Err(TestCaseError::fail(msg));
        }
    }

    #[test]
    fn equality_means_equal_count(map in probmap_with(16, 16)) {
        prop_assume!(nonempty_initial(&map));
        let r = per_image_threshold(&map, Connectivity::Eight).unwrap();
        let n = count(&refine(&map, r.threshold), Connectivity::Eight);
        match r.terminated_by {
            Termination::EqualityFound => prop_assert_eq!(n, r.n_initial),
            Termination::ExhaustedBins => prop_assert!(n <= r.n_initial),
            Termination::ExhaustedSubbins => {}
        }
        prop_assert_eq!(r.levels_used, if r.terminated_by == Termination::ExhaustedBins { 1 } else { 2 });
    }

    #[test]
    fn aggregate_counts_and_range(values in proptest::collection::vec(0.0f64..=1.0, 1..60)) {
        let per: Vec<PerImageThreshold> = values
            .iter()
            .map(|&t| PerImageThreshold {
                image_id: String::new(),
                threshold: t,
                n_initial: 1,
                levels_used: 2,
                terminated_by: Termination::EqualityFound,
            })
            .collect();
        let cal = aggregate_thresholds(&per).unwrap();
        prop_assert_eq!(cal.bin_counts.iter().sum::<usize>(), values.len());
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= cal.global_threshold && cal.global_threshold <= hi);
        let top = *cal.bin_counts.iter().max().unwrap();
        prop_assert_eq!(cal.bin_counts[cal.modal_bin_index], top);
        prop_assert!(cal.bin_counts[cal.modal_bin_index + 1..].iter().all(|&c| c < top));
    }
}

#[test]
fn seeded_maps_agree_with_exhaustive_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checked = 0;
    while checked < 100 {
        let map = random_probmap(&mut rng, 16, 16);
        if !nonempty_initial(&map) {
            continue;
        }
        for conn in [Connectivity::Eight, Connectivity::Four] {
            check_threshold_against_sweep(&map, conn).unwrap();
        }
        checked += 1;
    }
}

#[test]
fn blurred_synthetic_maps_calibrate_above_argmax() {
    for seed in 0..20u64 {
        let (_, map) = synth_pair(&SynthConfig::default().with_seed(seed)).unwrap();
        let r = per_image_threshold(&map, Connectivity::Eight).unwrap();
        assert!(r.threshold > 0.5, "seed {seed}: {r:?}");
    }
}

#[test]
fn calibrate_skips_empty_predictions_and_round_trips() {
    let empty = ProbabilityMap::new(4, 4, vec![0.1; 16]).unwrap();
    let maps: Vec<(String, ProbabilityMap)> = (0..6u64)
        .map(|s| {
            (
                format!("img{s}"),
                synth_pair(&SynthConfig::default().with_seed(s)).unwrap().1,
            )
        })
        .chain(std::iter::once(("blank".to_string(), empty)))
        .collect();
    let run = calibrate(
        maps.iter().map(|(id, m)| (id.as_str(), m)).collect::<Vec<_>>(),
        Connectivity::Eight,
    )
    .unwrap();
    assert_eq!(run.skipped, vec!["blank".to_string()]);
    assert_eq!(run.calibration.per_image.len(), 6);
    let text = run.to_text();
    assert_eq!(CalibrationRun::parse(&text).unwrap(), run);

    let blank = ProbabilityMap::new(2, 2, vec![0.0; 4]).unwrap();
    let err = calibrate(vec![("b", &blank)], Connectivity::Eight).unwrap_err();
    assert!(matches!(err, Error::EmptyInput), "{err:?}");
}

#[test]
fn sweep_peaks_where_the_ground_truth_was_cut() {
    // gt is exactly the 0.93 cut of each map, so IoU is 1 there and lower
    // at every other grid point that changes the mask
    let mut rng = ChaCha8Rng::seed_from_u64(93);
    let maps: Vec<ProbabilityMap> = (0..8)
        .map(|_| {
            let m = common::gen::random_probmap(&mut rng, 20, 20);
            // push values onto the grid so each step changes the mask
            let data = m.data().iter().map(|&p| (p * 100.0).round() / 100.0).collect();
            ProbabilityMap::new(20, 20, data).unwrap()
        })
        .collect();
    let gts: Vec<BinaryMask> = maps.iter().map(|m| apply_threshold(m, 0.925)).collect();
    let rows = sweep_thresholds(&maps, &gts, SWEEP_LO, SWEEP_HI, SWEEP_STEP).unwrap();
    assert_eq!(rows.len(), 9);
    let best = rows
        .iter()
        .max_by(|a, b| a.1.crack_iou.partial_cmp(&b.1.crack_iou).unwrap())
        .unwrap();
    assert!((best.0 - 0.93).abs() < 1e-9, "{}", best.0);
    assert_eq!(best.1.crack_iou, 1.0);
}

#[test]
fn sweep_grid_spelling() {
    let g = sweep_grid(SWEEP_LO, SWEEP_HI, SWEEP_STEP).unwrap();
    assert_eq!(g, vec![0.90, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98]);
    assert!(sweep_grid(0.5, 0.4, 0.1).is_err());
    assert!(sweep_grid(0.1, 0.2, 0.0).is_err());
}
