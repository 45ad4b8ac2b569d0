//! Serializable description of a constructed scheme: partitions, segment
//! addresses and coded messages, optionally with their payloads.

use num_traits::Zero;
use serde::Serialize;

use crate::analytics::ndt_cpc;
use crate::codec::{
    coding_complexity, coding_complexity_exact, encode_all, per_partition_load, segment_ivs, CodedMessage, SchemeLayout,
};
use crate::error::{Error, Result};
use crate::model::{validate_config, NodeSet, ShuffleConfig, SystemParams};
use crate::placement::{build_placement, map_phase};
use crate::rational::Rational;

#[derive(Debug, Clone, Serialize)]
pub struct MessageDump {
    pub dest: NodeSet,
    pub coop: NodeSet,
    pub segments: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionDump {
    pub index: usize,
    pub tx: NodeSet,
    pub rx: NodeSet,
    pub messages: Vec<MessageDump>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeDump {
    pub params: SystemParams,
    pub config: Option<ShuffleConfig>,
    pub eta1: u64,
    pub eta2: u64,
    pub segments_per_bundle: u64,
    pub segment_bytes: usize,
    pub segment_count: usize,
    pub message_count: usize,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub per_partition_load: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub ndt: Rational,
    /// XOR bit operations charged per node over all partitions.
    #[serde(serialize_with = "crate::rational::serialize")]
    pub coding_complexity: Rational,
    /// XOR bit operations one node actually performs to encode and decode.
    #[serde(serialize_with = "crate::rational::serialize")]
    pub encode_xor_bits_per_node: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub decode_xor_bits_per_node: Rational,
    pub seed: u64,
    pub partitions: Vec<PartitionDump>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<&'static str>,
}

/// Builds the scheme for `params` with the given `K_r` and `t`. With
/// `r = K` every node already holds everything and the dump is empty.
pub fn construct(
    params: SystemParams,
    k_r: Option<u64>,
    t: Option<u64>,
    seed: u64,
    with_payloads: bool,
) -> Result<SchemeDump> {
    let (eta1, eta2) = params.integral_etas()?;
    if params.r == params.k {
        return Ok(SchemeDump {
            params,
            config: None,
            eta1,
            eta2,
            segments_per_bundle: 0,
            segment_bytes: 0,
            segment_count: 0,
            message_count: 0,
            per_partition_load: Rational::zero(),
            ndt: Rational::zero(),
            coding_complexity: Rational::zero(),
            encode_xor_bits_per_node: Rational::zero(),
            decode_xor_bits_per_node: Rational::zero(),
            seed,
            partitions: Vec::new(),
            note: Some("r = K: every node maps every file, nothing to shuffle"),
        });
    }
    let (k_r, t) = match (k_r, t) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::param("K_r and t are required when r < K")),
    };
    let config = validate_config(params, k_r, t)?;
    let layout = SchemeLayout::new(config)?;
    let messages = if with_payloads {
        let placement = build_placement(&params)?;
        let store = map_phase(&placement, &params, seed)?;
        let segs = segment_ivs(&layout, &placement, &store)?;
        Some(encode_all(&layout, &segs)?)
    } else {
        None
    };
    let mut at = 0;
    let partitions = layout
        .partitions
        .iter()
        .map(|part| {
            let msgs = layout
                .message_groups(part.index)
                .into_iter()
                .map(|(dest, coop)| {
                    let payload = messages.as_ref().map(|all| {
                        let m = &all[at];
                        debug_assert!(m.dest == dest && m.coop == coop && m.partition == part.index);
                        hex::encode(&m.payload)
                    });
                    at += 1;
                    let segments = CodedMessage {
                        partition: part.index,
                        dest: dest.clone(),
                        coop: coop.clone(),
                        payload: Vec::new(),
                    }
                    .constituents()
                    .iter()
                    .map(ToString::to_string)
                    .collect();
                    MessageDump {
                        dest,
                        coop,
                        segments,
                        payload,
                    }
                })
                .collect();
            PartitionDump {
                index: part.index,
                tx: part.tx.clone(),
                rx: part.rx.clone(),
                messages: msgs,
            }
        })
        .collect::<Vec<_>>();
    let (enc, dec) = coding_complexity_exact(&config);
    Ok(SchemeDump {
        params,
        config: Some(config),
        eta1,
        eta2,
        segments_per_bundle: config.segments_per_bundle() as u64,
        segment_bytes: layout.segment_bytes(),
        segment_count: layout.bundles().len() * config.segments_per_bundle() as usize,
        message_count: at,
        per_partition_load: per_partition_load(&config)?.per_partition,
        ndt: ndt_cpc(params.r, t, params.k, k_r)?.value,
        coding_complexity: coding_complexity(&config),
        encode_xor_bits_per_node: enc,
        decode_xor_bits_per_node: dec,
        seed,
        partitions,
        note: None,
    })
}
