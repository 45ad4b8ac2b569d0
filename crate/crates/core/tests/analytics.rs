//! Cross-module checks on NDT formulas, the optimizer and the lower bound.

use cpc_core::analytics::{bar_cpc, ndt_cdc, ndt_cpc, ndt_osl_hd};
use cpc_core::bounds::{gap_ratio, lower_bound};
use cpc_core::optimizer::{brute_force_min, closed_form_min, min_for_cooperation};
use cpc_core::rational::{int, rat};
use cpc_core::sweep::{run_preset, Preset};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn optimum_bounded_by_fixed_cooperation(k in 3u64..40, r in 1u64..39) {
        prop_assume!(r < k);
        let best = brute_force_min(r, k).unwrap().best_value;
        for t in 1..=r {
            if let Some(p) = min_for_cooperation(r, k, t).unwrap() {
                prop_assert!(best <= p.value);
            }
        }
        prop_assert!(best <= bar_cpc(r, k).unwrap().value);
        prop_assert_eq!(best.clone(), closed_form_min(r, k).unwrap().best_value);
        prop_assert!(lower_bound(&int(r), k).unwrap().bound <= best);
    }

    #[test]
    fn cdc_never_beats_cpc(k in 2u64..60, r in 1u64..59) {
        prop_assume!(r < k);
        let rr = int(r);
        let cpc = brute_force_min(r, k).unwrap().best_value;
        prop_assert!(cpc <= ndt_cdc(&rr, k).unwrap().value);
        prop_assert!(ndt_cdc(&rr, k).unwrap().value <= ndt_osl_hd(&rr, k).unwrap().value);
    }
}

#[test]
fn worked_example_values() {
    assert_eq!(ndt_cpc(3, 2, 6, 3).unwrap().value, rat(1, 6));
    assert_eq!(brute_force_min(3, 6).unwrap().best_value, rat(7, 48));
    assert_eq!(lower_bound(&int(3), 6).unwrap().bound, rat(1, 10));
    assert_eq!(gap_ratio(&int(3), 6).unwrap(), rat(35, 24));
}

#[test]
fn presets_are_deterministic() {
    let a = run_preset(Preset::Fig3).unwrap();
    let b = run_preset(Preset::Fig3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 48 * 9);
}
