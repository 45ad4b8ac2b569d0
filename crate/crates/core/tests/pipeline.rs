//! Map, encode, deliver and decode over random small systems.

use std::collections::BTreeSet;

use cpc_core::codec::{encode_all, per_partition_load, scale_block_bits, segment_ivs, SchemeLayout, SegmentSource};
use cpc_core::dump::construct;
use cpc_core::model::{binom, validate_shape};
use cpc_core::placement::{build_placement, map_phase};
use cpc_core::rational::int;
use cpc_core::verify::{end_to_end_verify, Fault, VerifyOptions};
use cpc_core::{validate_config, ShuffleConfig, SystemParams};
use proptest::prelude::*;

fn valid_config(max_k: u64) -> impl Strategy<Value = (ShuffleConfig, u64)> {
    (2..=max_k, 1u64..8, 1u64..=8, 1u64..=8, 1u64..=2, 1u64..=2)
        .prop_filter("valid shape", |&(k, r, k_r, t, _, _)| {
            r < k && validate_shape(k, r, k_r, t).is_ok()
        })
        .prop_map(|(k, r, k_r, t, e1, e2)| {
            let n = e1 * binom(k, r) as u64;
            let probe = validate_config(SystemParams::new(k, n, e2 * k, r, 8).unwrap(), k_r, t).unwrap();
            let b = scale_block_bits(&probe, 8);
            (
                validate_config(SystemParams::new(k, n, e2 * k, r, b).unwrap(), k_r, t).unwrap(),
                b,
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ideal_delivery_recovers_every_iv((config, _) in valid_config(7), seed in any::<u64>()) {
        let opts = VerifyOptions { ideal: true, ..VerifyOptions::default() };
        let rep = end_to_end_verify(&config, seed, &opts).unwrap();
        prop_assert!(rep.ok, "{:?}", rep.failures.first());
        for n in &rep.nodes {
            prop_assert_eq!(n.recovered_ivs, n.required_ivs);
        }
    }

    #[test]
    fn desired_bits_match_load((config, _) in valid_config(8)) {
        let layout = SchemeLayout::new(config).unwrap();
        let p = config.params;
        let seg_bits = 8 * layout.segment_bytes() as u64;
        let load = per_partition_load(&config).unwrap();
        for part in &layout.partitions {
            let bits: BTreeSet<u64> = part
                .rx
                .iter()
                .map(|j| layout.message_groups(part.index).iter().filter(|(d, _)| d.contains(j)).count() as u64 * seg_bits)
                .collect();
            prop_assert_eq!(bits.len(), 1);
            let bits = *bits.iter().next().unwrap();
            prop_assert_eq!(int(bits), load.desired_bits_per_receiver.clone());
            prop_assert_eq!(int(bits) / (int(p.n) * int(p.q) * int(p.b)), load.per_partition.clone());
        }
    }

    #[test]
    fn every_node_agrees_on_payloads((config, _) in valid_config(6), seed in any::<u64>()) {
        let p = config.params;
        let layout = SchemeLayout::new(config).unwrap();
        let placement = build_placement(&p).unwrap();
        let store = map_phase(&placement, &p, seed).unwrap();
        let segs = segment_ivs(&layout, &placement, &store).unwrap();
        let msgs = encode_all(&layout, &segs).unwrap();
        for m in &msgs {
            prop_assert_eq!(m.payload.len(), layout.segment_bytes());
            let mut acc = vec![0u8; m.payload.len()];
            for id in m.constituents() {
                acc.iter_mut().zip(segs.segment(&id).unwrap()).for_each(|(a, b)| *a ^= b);
            }
            prop_assert_eq!(&acc, &m.payload);
        }
    }
}

#[test]
fn channel_path_on_case_a_and_c() {
    for (k, r, k_r, t) in [(6, 3, 3, 2), (8, 5, 4, 2), (7, 2, 4, 1)] {
        let n = binom(k, r) as u64;
        let probe = validate_config(SystemParams::new(k, n, k, r, 8).unwrap(), k_r, t).unwrap();
        let b = scale_block_bits(&probe, 8);
        let config = validate_config(SystemParams::new(k, n, k, r, b).unwrap(), k_r, t).unwrap();
        let rep = end_to_end_verify(&config, 9, &VerifyOptions::default()).unwrap();
        assert!(rep.ok, "({k},{r},{k_r},{t}): {:?}", rep.failures.first());
        assert_eq!(rep.path, "channel");
    }
}

#[test]
fn faults_are_caught() {
    let config = validate_config(SystemParams::new(6, 20, 6, 3, 48).unwrap(), 3, 2).unwrap();
    for fault in [Fault::Corrupt, Fault::Drop] {
        for ideal in [true, false] {
            let opts = VerifyOptions {
                ideal,
                fault: Some(fault),
                ..VerifyOptions::default()
            };
            let rep = end_to_end_verify(&config, 2, &opts).unwrap();
            assert!(!rep.ok);
            assert!(!rep.failures.is_empty());
        }
    }
}

#[test]
fn dump_matches_encoder() {
    let p = SystemParams::new(6, 20, 6, 3, 48).unwrap();
    let d = construct(p, Some(3), Some(2), 4, true).unwrap();
    let config = validate_config(p, 3, 2).unwrap();
    let layout = SchemeLayout::new(config).unwrap();
    let placement = build_placement(&p).unwrap();
    let store = map_phase(&placement, &p, 4).unwrap();
    let segs = segment_ivs(&layout, &placement, &store).unwrap();
    let msgs = encode_all(&layout, &segs).unwrap();
    let dumped: Vec<String> = d
        .partitions
        .iter()
        .flat_map(|p| p.messages.iter().map(|m| m.payload.clone().unwrap()))
        .collect();
    let encoded: Vec<String> = msgs.iter().map(|m| hex::encode(&m.payload)).collect();
    assert_eq!(dumped, encoded);
}
