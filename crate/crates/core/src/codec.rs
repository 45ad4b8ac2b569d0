//! Segmentation of IV bundles, XOR encoding and decoding with side
//! information, load accounting, and straggler replanning.
//!
//! The bundle `v_{d_j,U}` collects every IV that node `j` needs and that is
//! computed exactly by the nodes in `U`. Each bundle is cut into equal
//! segments, one per admissible `(B, p)` pair, and every coded message is the
//! XOR of `s` such segments.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{binom, binom_i, enum_partitions, enum_subsets, NodeSet, Partition, ShuffleConfig};
use crate::placement::{IvStore, PlacementMap};
use crate::rational::{big, int, Rational};

/// Address of one segment `v^{(p,B)}_{d_j, U \ B}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SegmentId {
    pub dest: usize,
    pub storage: NodeSet,
    pub partition: usize,
    pub coop: NodeSet,
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "v^({},{})_(d{},{})",
            self.partition,
            self.coop,
            self.dest,
            self.storage.difference(&self.coop)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub id: SegmentId,
    pub bytes: Vec<u8>,
}

/// `V^{(p)}_{D,B}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CodedMessage {
    pub partition: usize,
    pub dest: NodeSet,
    pub coop: NodeSet,
    #[serde(skip)]
    pub payload: Vec<u8>,
}

impl CodedMessage {
    pub fn constituents(&self) -> Vec<SegmentId> {
        constituents(self.partition, &self.dest, &self.coop)
    }
}

fn constituents(partition: usize, dest: &NodeSet, coop: &NodeSet) -> Vec<SegmentId> {
    dest.iter()
        .map(|j| SegmentId {
            dest: j,
            storage: dest.without(j).union(coop),
            partition,
            coop: coop.clone(),
        })
        .collect()
}

/// Counts XORed bits.
#[derive(Debug, Default)]
pub struct XorCounter(AtomicU64);

impl XorCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    fn add_bytes(&self, n: usize) {
        self.0.fetch_add(8 * n as u64, Ordering::Relaxed);
    }
}

fn xor_into(dst: &mut [u8], src: &[u8], counter: Option<&XorCounter>) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
    if let Some(c) = counter {
        c.add_bytes(dst.len());
    }
}

/// Smallest IV size in bits, at least `requested`, for which every segment
/// is a whole number of bytes.
pub fn scale_block_bits(config: &ShuffleConfig, requested: u64) -> u64 {
    let unit = 8 * config.segments_per_bundle() as u64;
    requested.max(1).div_ceil(unit) * unit
}

/// Addressing shared by all nodes: partitions and segment positions.
#[derive(Debug, Clone)]
pub struct SchemeLayout {
    pub config: ShuffleConfig,
    pub partitions: Vec<Partition>,
    tx_index: HashMap<NodeSet, usize>,
    segment_bytes: usize,
    bundle_ivs: usize,
}

impl SchemeLayout {
    pub fn new(config: ShuffleConfig) -> Result<Self> {
        let params = config.params;
        let (eta1, eta2) = params.integral_etas()?;
        if !params.b.is_multiple_of(8) {
            return Err(Error::param(format!("B = {} is not a multiple of 8", params.b)));
        }
        let bundle_bytes = (eta1 * eta2 * params.b / 8) as u128;
        let nseg = config.segments_per_bundle();
        if !bundle_bytes.is_multiple_of(nseg) {
            return Err(Error::Infeasible(format!(
                "bundle of {bundle_bytes} bytes cannot be split into {nseg} whole-byte segments; \
                 use B = {}",
                scale_block_bits(&config, params.b)
            )));
        }
        let partitions = enum_partitions(params.k as usize, config.k_t() as usize)?;
        let tx_index = partitions.iter().map(|p| (p.tx.clone(), p.index)).collect();
        Ok(SchemeLayout {
            config,
            partitions,
            tx_index,
            segment_bytes: (bundle_bytes / nseg) as usize,
            bundle_ivs: (eta1 * eta2) as usize,
        })
    }

    pub fn k(&self) -> usize {
        self.config.params.k as usize
    }

    pub fn segment_bytes(&self) -> usize {
        self.segment_bytes
    }

    pub fn bundle_bytes(&self) -> usize {
        self.segment_bytes * self.config.segments_per_bundle() as usize
    }

    pub fn partition(&self, p: usize) -> &Partition {
        &self.partitions[p - 1]
    }

    /// The admissible `(B, p)` pairs for bundle `(j, U)`, sorted by `B`
    /// then `p`. Position in this list is the segment's position in the
    /// bundle.
    pub fn admissible(&self, dest: usize, storage: &NodeSet) -> Vec<(NodeSet, usize)> {
        let c = &self.config;
        let k = self.k();
        let outside = NodeSet::range(k).difference(&storage.with(dest));
        let extra = (c.k_t() - c.t) as usize;
        let fillers = enum_subsets(&outside, extra).unwrap_or_default();
        let mut out = Vec::with_capacity(c.segments_per_bundle() as usize);
        for coop in enum_subsets(storage, c.t as usize).unwrap_or_default() {
            let mut ps: Vec<usize> = fillers.iter().map(|x| self.tx_index[&coop.union(x)]).collect();
            ps.sort_unstable();
            out.extend(ps.into_iter().map(|p| (coop.clone(), p)));
        }
        out
    }

    /// Position of a segment within its bundle, or `None` if the address is
    /// not admissible.
    pub fn segment_position(&self, id: &SegmentId) -> Option<usize> {
        if id.storage.len() != self.config.r() as usize || id.storage.contains(id.dest) {
            return None;
        }
        self.admissible(id.dest, &id.storage)
            .iter()
            .position(|(b, p)| *b == id.coop && *p == id.partition)
    }

    /// `(D, B)` pairs of partition `p`, ordered by `B` then `D`.
    pub fn message_groups(&self, p: usize) -> Vec<(NodeSet, NodeSet)> {
        let part = self.partition(p);
        let coops = enum_subsets(&part.tx, self.config.t as usize).unwrap_or_default();
        let dests = enum_subsets(&part.rx, self.config.s as usize).unwrap_or_default();
        coops
            .iter()
            .flat_map(|b| dests.iter().map(move |d| (d.clone(), b.clone())))
            .collect()
    }

    /// All `(j, U)` bundle addresses.
    pub fn bundles(&self) -> Vec<(usize, NodeSet)> {
        let k = self.k();
        let all = NodeSet::range(k);
        (1..=k)
            .flat_map(|j| {
                enum_subsets(&all.without(j), self.config.r() as usize)
                    .unwrap_or_default()
                    .into_iter()
                    .map(move |u| (j, u))
            })
            .collect()
    }
}

/// Anything able to produce segment bytes.
pub trait SegmentSource: Sync {
    fn segment(&self, id: &SegmentId) -> Result<Vec<u8>>;
}

/// Every segment of the system, keyed by address.
#[derive(Debug, Clone, Default)]
pub struct SegmentMap(pub BTreeMap<SegmentId, Vec<u8>>);

impl SegmentMap {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: &SegmentId) -> Option<&[u8]> {
        self.0.get(id).map(Vec::as_slice)
    }
}

impl SegmentSource for SegmentMap {
    fn segment(&self, id: &SegmentId) -> Result<Vec<u8>> {
        self.0
            .get(id)
            .cloned()
            .ok_or_else(|| Error::internal(format!("segment {id} was never generated")))
    }
}

/// The segments a single node can compute from its own Map output.
pub struct LocalView<'a> {
    pub layout: &'a SchemeLayout,
    pub placement: &'a PlacementMap,
    pub store: &'a IvStore,
    pub node: usize,
}

impl SegmentSource for LocalView<'_> {
    fn segment(&self, id: &SegmentId) -> Result<Vec<u8>> {
        if !id.storage.contains(self.node) {
            return Err(Error::MissingSideInformation {
                node: self.node,
                segment: id.to_string(),
            });
        }
        let pos = self
            .layout
            .segment_position(id)
            .ok_or_else(|| Error::internal(format!("segment {id} is not admissible")))?;
        let bundle = bundle_bytes(self.layout, self.placement, self.store, self.node, id.dest, &id.storage)?;
        let len = self.layout.segment_bytes();
        Ok(bundle[pos * len..(pos + 1) * len].to_vec())
    }
}

/// Concatenated bundle `v_{d_j,U}` as computed at `node`.
pub fn bundle_bytes(
    layout: &SchemeLayout,
    placement: &PlacementMap,
    store: &IvStore,
    node: usize,
    dest: usize,
    storage: &NodeSet,
) -> Result<Vec<u8>> {
    let ivs = placement.bundle_ivs(dest, storage);
    if ivs.len() != layout.bundle_ivs {
        return Err(Error::internal(format!(
            "bundle (d{dest}, {storage}) holds {} IVs, expected {}",
            ivs.len(),
            layout.bundle_ivs
        )));
    }
    let mut out = Vec::with_capacity(layout.bundle_bytes());
    for (q, n) in ivs {
        let v = store.get(node, q, n).ok_or_else(|| Error::MissingSideInformation {
            node,
            segment: format!("v_({q},{n})"),
        })?;
        out.extend_from_slice(v);
    }
    Ok(out)
}

/// Splits every bundle into its segments.
pub fn segment_ivs(layout: &SchemeLayout, placement: &PlacementMap, store: &IvStore) -> Result<SegmentMap> {
    let len = layout.segment_bytes();
    let parts: Vec<Vec<(SegmentId, Vec<u8>)>> = layout
        .bundles()
        .into_par_iter()
        .map(|(j, u)| {
            let holder = u.members()[0];
            let bundle = bundle_bytes(layout, placement, store, holder, j, &u)?;
            Ok(layout
                .admissible(j, &u)
                .into_iter()
                .enumerate()
                .map(|(i, (coop, p))| {
                    let id = SegmentId {
                        dest: j,
                        storage: u.clone(),
                        partition: p,
                        coop,
                    };
                    (id, bundle[i * len..(i + 1) * len].to_vec())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(SegmentMap(parts.into_iter().flatten().collect()))
}

/// Reassembles a bundle from its segments in bundle order.
pub fn reassemble(
    layout: &SchemeLayout,
    dest: usize,
    storage: &NodeSet,
    segments: &dyn Fn(&SegmentId) -> Option<Vec<u8>>,
) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(layout.bundle_bytes());
    for (coop, p) in layout.admissible(dest, storage) {
        let id = SegmentId {
            dest,
            storage: storage.clone(),
            partition: p,
            coop,
        };
        let bytes = segments(&id).ok_or_else(|| Error::internal(format!("segment {id} missing")))?;
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

pub fn encode_message(
    source: &dyn SegmentSource,
    partition: usize,
    dest: &NodeSet,
    coop: &NodeSet,
    counter: Option<&XorCounter>,
) -> Result<CodedMessage> {
    let mut payload: Option<Vec<u8>> = None;
    for id in constituents(partition, dest, coop) {
        let seg = source.segment(&id)?;
        match payload.as_mut() {
            None => payload = Some(seg),
            Some(acc) => xor_into(acc, &seg, counter),
        }
    }
    Ok(CodedMessage {
        partition,
        dest: dest.clone(),
        coop: coop.clone(),
        payload: payload.unwrap_or_default(),
    })
}

/// All `C(K_t, t) C(K_r, s)` messages of partition `p`.
pub fn encode_partition(
    layout: &SchemeLayout,
    source: &dyn SegmentSource,
    p: usize,
    counter: Option<&XorCounter>,
) -> Result<Vec<CodedMessage>> {
    layout
        .message_groups(p)
        .iter()
        .map(|(d, b)| encode_message(source, p, d, b, counter))
        .collect()
}

/// Messages of every partition, in partition order.
pub fn encode_all(layout: &SchemeLayout, source: &dyn SegmentSource) -> Result<Vec<CodedMessage>> {
    let per: Vec<Vec<CodedMessage>> = (1..=layout.partitions.len())
        .into_par_iter()
        .map(|p| encode_partition(layout, source, p, None))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Recovers node `j`'s segment from a message using `j`'s side information.
pub fn decode_segment(
    message: &CodedMessage,
    local: &dyn SegmentSource,
    j: usize,
    counter: Option<&XorCounter>,
) -> Result<Segment> {
    if !message.dest.contains(j) {
        return Err(Error::NotIntended {
            node: j,
            dest: message.dest.clone(),
            coop: message.coop.clone(),
        });
    }
    let mut bytes = message.payload.clone();
    let mut wanted = None;
    for id in message.constituents() {
        if id.dest == j {
            wanted = Some(id);
            continue;
        }
        let side = local.segment(&id).map_err(|e| match e {
            Error::MissingSideInformation { .. } => e,
            other => Error::MissingSideInformation {
                node: j,
                segment: format!("{id}: {other}"),
            },
        })?;
        xor_into(&mut bytes, &side, counter);
    }
    Ok(Segment {
        id: wanted.expect("destination present in its own message"),
        bytes,
    })
}

/// Per-partition communication load and the bits each receiver wants.
#[derive(Debug, Clone, Serialize)]
pub struct LoadReport {
    #[serde(serialize_with = "crate::rational::serialize")]
    pub per_partition: Rational,
    /// Bits one receiver decodes within one partition.
    #[serde(serialize_with = "crate::rational::serialize")]
    pub desired_bits_per_receiver: Rational,
    /// `desired_bits_per_receiver` as a multiple of `B`.
    #[serde(serialize_with = "crate::rational::serialize")]
    pub desired_fraction_of_b: Rational,
}

pub fn per_partition_load(config: &ShuffleConfig) -> Result<LoadReport> {
    let p = &config.params;
    let (k, r, k_r, k_t, t, s) = (p.k, p.r, config.k_r, config.k_t(), config.t, config.s);
    let segment_bits = p.eta1() * p.eta2() * int(p.b) / big(config.segments_per_bundle());
    let desired = segment_bits * big(binom(k_r - 1, s - 1) * binom(k_t, t));
    let nqb = int(p.n) * int(p.q) * int(p.b);
    let via_bits = &desired / nqb;
    let closed = load_closed_form(k, r, k_r);
    if via_bits != closed {
        return Err(Error::internal(format!(
            "per-partition load mismatch: {via_bits} from bit count, {closed} from closed form"
        )));
    }
    Ok(LoadReport {
        per_partition: closed,
        desired_fraction_of_b: &desired / int(p.b),
        desired_bits_per_receiver: desired,
    })
}

/// `(1/K_r)(1 - r/K) / C(K, K_r)`; zero when `r = K`.
pub fn load_closed_form(k: u64, r: u64, k_r: u64) -> Rational {
    if r >= k {
        return Rational::zero();
    }
    (int(1) - Rational::new(r.into(), k.into())) / int(k_r) / big(binom(k, k_r))
}

/// Per-user XOR bit operations as stated for the scheme: every node is
/// charged encoding and decoding work in all `C(K, K_r)` partitions.
pub fn coding_complexity(config: &ShuffleConfig) -> Rational {
    let p = &config.params;
    let (k, k_r, t, s) = (p.k, config.k_r, config.t, config.s);
    let per_segment = p.eta1() * p.eta2() * int(p.b) / big(config.segments_per_bundle());
    let count = binom(k, k_r)
        * (s as u128 - 1)
        * (binom_i(k as i64 - k_r as i64 - 1, t as i64 - 1) * binom(k_r, s)
            + binom(k - k_r, t) * binom(k_r - 1, s - 1));
    big(count) * per_segment
}

/// Exact XOR bit operations `(encode, decode)` performed by one node.
///
/// A node only transmits in the partitions where it is a transmitter and
/// only decodes where it is a receiver, so these are smaller than
/// [`coding_complexity`] by factors `K_t / K` and `K_r / K` respectively.
pub fn coding_complexity_exact(config: &ShuffleConfig) -> (Rational, Rational) {
    let p = &config.params;
    let (k, k_r, k_t, t, s) = (p.k, config.k_r, config.k_t(), config.t, config.s);
    let per_segment = p.eta1() * p.eta2() * int(p.b) / big(config.segments_per_bundle());
    let enc = binom(k - 1, k_t - 1) * binom(k_t - 1, t - 1) * binom(k_r, s) * (s as u128 - 1);
    let dec = binom(k - 1, k_r - 1) * binom(k_t, t) * binom(k_r - 1, s - 1) * (s as u128 - 1);
    (big(enc) * &per_segment, big(dec) * per_segment)
}

/// One transmission round of a straggler-tolerant plan.
#[derive(Debug, Clone, Serialize)]
pub struct StragglerRound {
    /// `|B ∩ S|` shared by every group in this round.
    pub overlap: usize,
    /// `(B, B \ S)` for every cooperation group of this round.
    pub groups: Vec<(NodeSet, NodeSet)>,
    pub messages: usize,
    /// Channel slots in whole-message symbol units.
    #[serde(serialize_with = "crate::rational::serialize")]
    pub slots: Rational,
}

#[derive(Debug, Clone, Serialize)]
pub struct StragglerPlan {
    pub partition: usize,
    pub stragglers: NodeSet,
    pub rounds: Vec<StragglerRound>,
}

impl StragglerPlan {
    pub fn total_messages(&self) -> usize {
        self.rounds.iter().map(|r| r.messages).sum()
    }
}

/// Slots needed by one cooperation group of size `t_eff` to deliver its
/// `C(K_r, s)` messages, in message-symbol units.
fn group_slots(k_r: u64, s: u64, t_eff: u64) -> Rational {
    if s + t_eff > k_r {
        big(binom(k_r - 1, s - 1))
    } else {
        let sets = binom(k_r, s + t_eff - 1) * binom(s + t_eff - 2, s - 1);
        big(sets) / big(binom(k_r - s, t_eff - 1))
    }
}

pub fn straggler_replan(layout: &SchemeLayout, p: usize, stragglers: &NodeSet) -> Result<StragglerPlan> {
    let config = &layout.config;
    let part = layout.partition(p);
    if !stragglers.is_subset(&part.tx) {
        return Err(Error::param(format!(
            "stragglers {stragglers} are not all transmitters of partition {p} ({})",
            part.tx
        )));
    }
    if stragglers.len() as u64 >= config.t {
        return Err(Error::TooManyStragglers {
            stragglers: stragglers.len(),
            t: config.t as usize,
        });
    }
    let per_group = binom(config.k_r, config.s) as usize;
    let coops = enum_subsets(&part.tx, config.t as usize)?;
    let rounds = (0..=stragglers.len())
        .map(|i| {
            let groups: Vec<(NodeSet, NodeSet)> = coops
                .iter()
                .filter(|b| b.intersection(stragglers).len() == i)
                .map(|b| (b.clone(), b.difference(stragglers)))
                .collect();
            let t_eff = config.t - i as u64;
            StragglerRound {
                overlap: i,
                messages: groups.len() * per_group,
                slots: group_slots(config.k_r, config.s, t_eff) * int(groups.len() as u64),
                groups,
            }
        })
        .collect();
    Ok(StragglerPlan {
        partition: p,
        stragglers: stragglers.clone(),
        rounds,
    })
}
