//! Property tests for the pipeline and grid invariants.

use proptest::prelude::*;

use wellcap_core::dataset::{self, ImputationGrouping, WellDate, WellRecord, WellType};
use wellcap_core::grid::{self, Locator6};
use wellcap_core::report;
use wellcap_core::stats;

fn locator_strategy() -> impl Strategy<Value = Locator6> {
    (0u8..18, 0u8..18, 0u8..10, 0u8..10, 0u8..24, 0u8..24).prop_map(|(a, b, c, d, e, f)| {
        let code = [
            (b'A' + a) as char,
            (b'A' + b) as char,
            (b'0' + c) as char,
            (b'0' + d) as char,
            (b'a' + e) as char,
            (b'a' + f) as char,
        ]
        .iter()
        .collect::<String>();
        code.parse().unwrap()
    })
}

proptest! {
    #[test]
    fn grid_center_encodes_back_to_same_cell(loc in locator_strategy()) {
        let (lat, lon) = grid::block_center(&loc);
        prop_assert_eq!(grid::encode_locator(lat, lon).unwrap(), loc);
    }

    #[test]
    fn grid_prefix_matches_string_head(loc in locator_strategy()) {
        let prefix = grid::prefix4(&loc);
        prop_assert_eq!(prefix.as_str(), &loc.as_str()[..4]);
    }

    #[test]
    fn standardize_centers_and_scales(
        values in prop::collection::vec(-1e6f64..1e6, 3..60),
        k in 1u8..=2,
    ) {
        prop_assume!(stats::sample_sd(&values) > 1e-9);
        let (z, s) = dataset::standardize(&values, k).unwrap();
        prop_assert!(stats::mean(&z).abs() < 1e-12);
        prop_assert!((stats::sample_sd(&z) - 1.0 / f64::from(k)).abs() < 1e-12);
        for (orig, zi) in values.iter().zip(&z) {
            let back = s.invert(*zi);
            prop_assert!((back - orig).abs() <= 1e-10 * orig.abs().max(1.0));
        }
    }

    #[test]
    fn imputation_preserves_nonzero_values(
        oils in prop::collection::vec(0f64..500.0, 4..20),
        zero_mask in prop::collection::vec(any::<bool>(), 4..20),
    ) {
        let records: Vec<WellRecord> = oils
            .iter()
            .zip(&zero_mask)
            .enumerate()
            .map(|(i, (oil, zero))| WellRecord {
                well_id: format!("w{i}"),
                date: WellDate { year: 2015, month: 1, day: 1 },
                locator: "DN87aa".parse().unwrap(),
                oil: if *zero { 0.0 } else { oil + 1.0 },
                water: 1.0,
                sand: 1.0,
                lateral: 100.0,
                well_type: WellType::Horizontal,
            })
            .collect();
        prop_assume!(records.iter().any(|r| r.oil > 0.0));
        let originals = records.clone();
        let (imputed, _) = dataset::impute_zeros(records, ImputationGrouping::Prefix4).unwrap();
        for (before, after) in originals.iter().zip(&imputed) {
            if before.oil != 0.0 {
                prop_assert_eq!(before.oil, after.oil);
            } else {
                prop_assert!(after.oil > 0.0);
            }
        }
    }

    #[test]
    fn rmsd_is_symmetric_and_zero_on_identity(
        a in prop::collection::vec(-1e3f64..1e3, 1..40),
    ) {
        let b: Vec<f64> = a.iter().map(|v| v * 0.9 + 1.0).collect();
        let ab = report::rmsd(&a, &b).unwrap();
        let ba = report::rmsd(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(report::rmsd(&a, &a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn quantile_is_monotone_in_level(
        values in prop::collection::vec(-1e3f64..1e3, 2..50),
        q1 in 0.0f64..1.0,
        q2 in 0.0f64..1.0,
    ) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(stats::quantile_of(&values, lo) <= stats::quantile_of(&values, hi) + 1e-12);
    }
}
