//! End-to-end pipeline check: placement, Map, segmentation, encoding at the
//! transmitters, delivery, XOR decoding at the receivers and reduce-input
//! assembly, compared byte for byte against the ground-truth IVs.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{simulate_partition, DeliveryReport, Received, SimOptions};
use crate::codec::{decode_segment, encode_message, reassemble, CodedMessage, LocalView, SchemeLayout, SegmentId};
use crate::error::{Error, Result};
use crate::model::ShuffleConfig;
use crate::placement::{build_placement, intermediate_value, map_phase, required_ivs, IvStore, PlacementMap};
use crate::rational::Rational;

/// Deliberate corruption used to exercise the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Flip the low bit of the first byte of the first message.
    Corrupt,
    /// Never deliver the first message.
    Drop,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrupt" => Ok(Fault::Corrupt),
            "drop" => Ok(Fault::Drop),
            other => Err(Error::param(format!("unknown fault `{other}` (corrupt, drop)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VerifyOptions {
    /// Hand every message straight to its destinations, skipping the channel.
    pub ideal: bool,
    pub fault: Option<Fault>,
    pub sim: SimOptions,
}

/// An IV some node failed to reconstruct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Witness {
    pub node: usize,
    pub q: u64,
    pub n: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeSummary {
    pub node: usize,
    pub local_ivs: usize,
    pub required_ivs: usize,
    pub recovered_ivs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeliverySummary {
    pub partitions: usize,
    pub slots: usize,
    pub symbols_per_receiver: usize,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub measured_dof: Rational,
    pub max_condition: f64,
    pub max_residual: f64,
    pub max_symbol_error: f64,
    pub symbol_mse: Option<f64>,
    pub resamples: usize,
    pub payloads_exact: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub seed: u64,
    pub path: &'static str,
    pub messages: usize,
    pub segments: usize,
    pub nodes: Vec<NodeSummary>,
    pub failures: Vec<Witness>,
    pub delivery: Option<DeliverySummary>,
}

/// Encodes every message from the side information of its transmitter
/// group, checking that all members of the group agree.
fn encode_at_transmitters(
    layout: &SchemeLayout,
    placement: &PlacementMap,
    store: &IvStore,
) -> Result<Vec<CodedMessage>> {
    let per: Vec<Vec<CodedMessage>> = (1..=layout.partitions.len())
        .into_par_iter()
        .map(|p| {
            layout
                .message_groups(p)
                .iter()
                .map(|(d, b)| {
                    let mut first: Option<CodedMessage> = None;
                    for m in b.iter() {
                        let view = LocalView {
                            layout,
                            placement,
                            store,
                            node: m,
                        };
                        let msg = encode_message(&view, p, d, b, None)?;
                        match &first {
                            None => first = Some(msg),
                            Some(f) if f.payload != msg.payload => {
                                return Err(Error::internal(format!(
                                    "transmitters of B = {b} disagree on V^({p})_({d},{b})"
                                )))
                            }
                            Some(_) => {}
                        }
                    }
                    first.ok_or_else(|| Error::internal("empty transmitter group"))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

fn summarize(reports: &[DeliveryReport]) -> Result<DeliverySummary> {
    let slots: usize = reports.iter().map(|r| r.slots).sum();
    let symbols: usize = reports.iter().map(|r| r.symbols_per_receiver).sum();
    if let Some(r) = reports.iter().find(|r| r.measured_dof != reports[0].measured_dof) {
        return Err(Error::internal(format!(
            "partition {} measured a different DoF",
            r.partition
        )));
    }
    let noisy: Vec<f64> = reports.iter().filter_map(|r| r.symbol_mse).collect();
    Ok(DeliverySummary {
        partitions: reports.len(),
        slots,
        symbols_per_receiver: symbols,
        measured_dof: Rational::new((symbols as u64).into(), (slots as u64).into()),
        max_condition: reports.iter().map(|r| r.max_condition).fold(0.0, f64::max),
        max_residual: reports.iter().map(|r| r.max_residual).fold(0.0, f64::max),
        max_symbol_error: reports.iter().map(|r| r.max_symbol_error).fold(0.0, f64::max),
        symbol_mse: (!noisy.is_empty()).then(|| noisy.iter().sum::<f64>() / noisy.len() as f64),
        resamples: reports.iter().map(|r| r.resamples).sum(),
        payloads_exact: reports.iter().all(|r| r.payloads_exact),
    })
}

/// Runs the whole shuffle for `config` with IVs drawn from `seed`.
pub fn end_to_end_verify(config: &ShuffleConfig, seed: u64, opts: &VerifyOptions) -> Result<VerifyReport> {
    let params = &config.params;
    let layout = SchemeLayout::new(*config)?;
    let placement = build_placement(params)?;
    let store = map_phase(&placement, params, seed)?;
    let k = layout.k();

    let mut messages = encode_at_transmitters(&layout, &placement, &store)?;
    let n_messages = messages.len();
    if opts.fault == Some(Fault::Corrupt) {
        if let Some(b) = messages.first_mut().and_then(|m| m.payload.first_mut()) {
            *b ^= 1;
        }
    }

    // What each receiver ends up holding.
    let (mut received, delivery): (BTreeMap<usize, Vec<Received>>, Option<DeliverySummary>) = if opts.ideal {
        let mut out: BTreeMap<usize, Vec<Received>> = BTreeMap::new();
        for m in &messages {
            for j in m.dest.iter() {
                out.entry(j).or_default().push(Received {
                    partition: m.partition,
                    dest: m.dest.clone(),
                    coop: m.coop.clone(),
                    payload: m.payload.clone(),
                });
            }
        }
        (out, None)
    } else {
        let reports: Vec<DeliveryReport> = (1..=layout.partitions.len())
            .into_par_iter()
            .map(|p| {
                let sim = SimOptions {
                    noise_seed: seed,
                    ..opts.sim
                };
                simulate_partition(&layout, p, &messages, seed, &sim)
            })
            .collect::<Result<_>>()?;
        let summary = summarize(&reports)?;
        let mut out: BTreeMap<usize, Vec<Received>> = BTreeMap::new();
        for rep in reports {
            for (j, list) in rep.received {
                out.entry(j).or_default().extend(list);
            }
        }
        (out, Some(summary))
    };
    if let (Some(Fault::Drop), Some(first)) = (opts.fault, messages.first()) {
        for list in received.values_mut() {
            list.retain(|r| (r.partition, &r.dest, &r.coop) != (first.partition, &first.dest, &first.coop));
        }
    }

    let results: Vec<(NodeSummary, Vec<Witness>)> = (1..=k)
        .into_par_iter()
        .map(|j| -> Result<(NodeSummary, Vec<Witness>)> {
            let view = LocalView {
                layout: &layout,
                placement: &placement,
                store: &store,
                node: j,
            };
            let mut segs: BTreeMap<SegmentId, Vec<u8>> = BTreeMap::new();
            for r in received.get(&j).map(Vec::as_slice).unwrap_or(&[]) {
                let msg = CodedMessage {
                    partition: r.partition,
                    dest: r.dest.clone(),
                    coop: r.coop.clone(),
                    payload: r.payload.clone(),
                };
                let seg = decode_segment(&msg, &view, j, None)?;
                segs.insert(seg.id, seg.bytes);
            }
            let mut recovered: BTreeMap<(u64, u64), Vec<u8>> = BTreeMap::new();
            let mut failures = Vec::new();
            let iv = store.iv_bytes();
            for (dest, u) in layout.bundles().into_iter().filter(|(d, _)| *d == j) {
                let ivs = placement.bundle_ivs(dest, &u);
                match reassemble(&layout, dest, &u, &|id| segs.get(id).cloned()) {
                    Ok(bytes) => {
                        for (i, qn) in ivs.into_iter().enumerate() {
                            recovered.insert(qn, bytes[i * iv..(i + 1) * iv].to_vec());
                        }
                    }
                    Err(e) => failures.extend(ivs.into_iter().map(|(q, n)| Witness {
                        node: j,
                        q,
                        n,
                        reason: e.to_string(),
                    })),
                }
            }
            let required = required_ivs(&placement, j);
            let mut ok = 0;
            for &(q, n) in &required {
                match recovered.get(&(q, n)) {
                    Some(v) if *v == intermediate_value(seed, q, n, iv) => ok += 1,
                    Some(_) => failures.push(Witness {
                        node: j,
                        q,
                        n,
                        reason: "reconstructed bytes differ".into(),
                    }),
                    None if failures.iter().any(|w| w.q == q && w.n == n) => {}
                    None => failures.push(Witness {
                        node: j,
                        q,
                        n,
                        reason: "never reconstructed".into(),
                    }),
                }
            }
            // the local share of the reduce input must be complete as well
            let local: BTreeSet<(u64, u64)> = placement
                .outputs_of(j)
                .iter()
                .flat_map(|&q| placement.files_of(j).iter().map(move |&n| (q, n)))
                .collect();
            for &(q, n) in &local {
                if store.get(j, q, n) != Some(intermediate_value(seed, q, n, iv).as_slice()) {
                    failures.push(Witness {
                        node: j,
                        q,
                        n,
                        reason: "local IV missing".into(),
                    });
                }
            }
            Ok((
                NodeSummary {
                    node: j,
                    local_ivs: local.len(),
                    required_ivs: required.len(),
                    recovered_ivs: ok,
                },
                failures,
            ))
        })
        .collect::<Result<_>>()?;

    let mut nodes = Vec::with_capacity(k);
    let mut failures = Vec::new();
    for (s, f) in results {
        nodes.push(s);
        failures.extend(f);
    }
    failures.sort();
    Ok(VerifyReport {
        ok: failures.is_empty(),
        seed,
        path: if opts.ideal { "ideal" } else { "channel" },
        messages: n_messages,
        segments: layout.bundles().len() * layout.config.segments_per_bundle() as usize,
        nodes,
        failures,
        delivery,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_config, SystemParams};
    use crate::rational::int;

    fn config(k: u64, n: u64, q: u64, r: u64, b: u64, k_r: u64, t: u64) -> ShuffleConfig {
        validate_config(SystemParams::new(k, n, q, r, b).unwrap(), k_r, t).unwrap()
    }

    #[test]
    fn worked_example_both_paths() {
        let c = config(6, 20, 6, 3, 48, 3, 2);
        for ideal in [true, false] {
            let rep = end_to_end_verify(
                &c,
                3,
                &VerifyOptions {
                    ideal,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(rep.ok, "{:?}", rep.failures.first());
            assert_eq!(rep.messages, 180);
            assert!(rep
                .nodes
                .iter()
                .all(|n| n.recovered_ivs == n.required_ivs && n.required_ivs == 10));
        }
    }

    #[test]
    fn uncoded_pair() {
        let c = config(2, 2, 2, 1, 8, 1, 1);
        let rep = end_to_end_verify(&c, 0, &VerifyOptions::default()).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.delivery.unwrap().measured_dof, int(1));
    }

    #[test]
    fn five_of_eight() {
        let c = config(8, 56, 8, 5, 80, 4, 2);
        let rep = end_to_end_verify(&c, 9, &VerifyOptions::default()).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.delivery.unwrap().measured_dof, int(1));
    }

    #[test]
    fn time_division_pipeline() {
        let c = config(8, 28, 8, 2, 160, 5, 1);
        let rep = end_to_end_verify(&c, 2, &VerifyOptions::default()).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.delivery.unwrap().measured_dof, Rational::new(2.into(), 5.into()));
    }

    #[test]
    fn faults_name_the_damaged_iv() {
        let c = config(6, 20, 6, 3, 48, 3, 2);
        for (fault, ideal) in [
            (Fault::Corrupt, true),
            (Fault::Drop, true),
            (Fault::Corrupt, false),
            (Fault::Drop, false),
        ] {
            let rep = end_to_end_verify(
                &c,
                3,
                &VerifyOptions {
                    ideal,
                    fault: Some(fault),
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(!rep.ok);
            let w = &rep.failures[0];
            assert!((4..=6).contains(&w.node), "{w:?}");
        }
    }

    #[test]
    fn seed_invariant() {
        let c = config(6, 20, 6, 3, 48, 3, 2);
        for seed in 0..10 {
            assert!(end_to_end_verify(&c, seed, &VerifyOptions::default()).unwrap().ok);
        }
    }
}
