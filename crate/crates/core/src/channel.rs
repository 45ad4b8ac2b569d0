//! Block-fading half-duplex channel, cofactor interference-neutralizing
//! precoders, and symbol-level delivery of coded messages.
//!
//! Each payload byte rides on one unit-power 256-PSK symbol; a message of
//! `L` bytes is delivered over `L` rounds that share the same channel and
//! precoders, so every receiver solves one linear system with `L`
//! right-hand sides.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::codec::{CodedMessage, SchemeLayout};
use crate::error::{Error, Result};
use crate::model::{binom, enum_subsets, NodeSet};
use crate::rational::{int, Rational};

pub const CONDITION_GUARD: f64 = 1e8;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Gains `h_{j,m}(d)` from transmitter `m` to receiver `j` in slot `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    k: usize,
    gains: Vec<DMatrix<Complex64>>,
}

impl ChannelRealization {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn slots(&self) -> usize {
        self.gains.len()
    }

    /// 1-based receiver `j`, transmitter `m`, 0-based slot `d`.
    pub fn h(&self, j: usize, m: usize, d: usize) -> Complex64 {
        self.gains[d][(j - 1, m - 1)]
    }
}

fn cn01(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / 2f64.sqrt()
}

pub fn draw_channel(k: usize, slots: usize, seed: u64) -> ChannelRealization {
    draw_channel_stream(k, slots, seed, 0)
}

/// Independent i.i.d. `CN(0,1)` gains from stream `stream` of `seed`.
pub fn draw_channel_stream(k: usize, slots: usize, seed: u64, stream: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let gains = (0..slots)
        .map(|_| DMatrix::from_fn(k, k, |_, _| cn01(&mut rng)))
        .collect();
    ChannelRealization { k, gains }
}

fn det(m: &DMatrix<Complex64>) -> Complex64 {
    match m.nrows() {
        0 => Complex64::new(1.0, 0.0),
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => m.clone().lu().determinant(),
    }
}

/// Cofactors of the free bottom row of the matrix whose other rows are the
/// gains from `active_tx` to `null_rx`. The result is orthogonal to every
/// nulled receiver's gain vector.
pub fn neutralizing_precoder(
    channel: &ChannelRealization,
    d: usize,
    active_tx: &NodeSet,
    null_rx: &NodeSet,
) -> Result<Vec<Complex64>> {
    let n = active_tx.len();
    if n != null_rx.len() + 1 {
        return Err(Error::param(format!(
            "{n} active transmitters cannot null {} receivers",
            null_rx.len()
        )));
    }
    if d >= channel.slots() {
        return Err(Error::param(format!("slot {d} beyond {} drawn", channel.slots())));
    }
    let rows: Vec<usize> = null_rx.iter().collect();
    let cols: Vec<usize> = active_tx.iter().collect();
    let h = DMatrix::from_fn(n - 1, n, |i, c| channel.h(rows[i], cols[c], d));
    Ok((0..n)
        .map(|m| {
            let sign = if (n - 1 + m).is_multiple_of(2) { 1.0 } else { -1.0 };
            det(&h.clone().remove_column(m)) * sign
        })
        .collect())
}

pub fn byte_to_symbol(b: u8) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * b as f64 / 256.0)
}

pub fn symbol_to_byte(x: Complex64) -> u8 {
    let k = (x.arg() * 256.0 / (2.0 * PI)).round() as i64;
    k.rem_euclid(256) as u8
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Receiver SNR in dB; `None` is noiseless.
    pub snr_db: Option<f64>,
    /// Relative interference residual allowed after neutralization.
    pub tolerance: f64,
    pub condition_guard: f64,
    /// Seed for the noise generator.
    pub noise_seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            snr_db: None,
            tolerance: DEFAULT_TOLERANCE,
            condition_guard: CONDITION_GUARD,
            noise_seed: 0,
        }
    }
}

/// A message as recovered at one receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub partition: usize,
    pub dest: NodeSet,
    pub coop: NodeSet,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeliveryReport {
    pub partition: usize,
    /// `"A"` or `"C"`.
    pub case: &'static str,
    pub slots: usize,
    /// Desired symbols recovered per receiver, identical across receivers.
    pub symbols_per_receiver: usize,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub measured_dof: Rational,
    /// Largest condition number among the receivers' linear systems.
    pub max_condition: f64,
    /// Largest interference residual relative to `|h| |w|`.
    pub max_residual: f64,
    /// Smallest desired effective gain relative to `|h| |w|`.
    pub min_desired_gain: f64,
    pub max_symbol_error: f64,
    pub symbol_mse: Option<f64>,
    pub linear_solves: usize,
    pub resamples: usize,
    /// Every byte decoded matched the transmitted payload.
    pub payloads_exact: bool,
    #[serde(skip)]
    pub received: BTreeMap<usize, Vec<Received>>,
}

/// Per receiver: `(item index, decoded bytes)`.
type Decoded = BTreeMap<usize, Vec<(usize, Vec<u8>)>>;

struct Stats {
    max_condition: f64,
    max_residual: f64,
    min_desired_gain: f64,
    max_symbol_error: f64,
    sq_error: f64,
    n_symbols: usize,
    solves: usize,
    exact: bool,
}

impl Stats {
    fn new() -> Self {
        Stats {
            max_condition: 0.0,
            max_residual: 0.0,
            min_desired_gain: f64::INFINITY,
            max_symbol_error: 0.0,
            sq_error: 0.0,
            n_symbols: 0,
            solves: 0,
            exact: true,
        }
    }
}

/// One message inside a neutralization round.
struct Item<'a> {
    dest: NodeSet,
    payload: &'a [u8],
}

/// Sends `items` (all sharing transmitter group `coop`) to `receivers` over
/// `gamma` slots starting at `offset`, with multicast size `s`. Returns, per
/// receiver, the decoded payloads in item order.
#[allow(clippy::too_many_arguments)]
fn neutralization_round(
    channel: &ChannelRealization,
    offset: usize,
    receivers: &NodeSet,
    coop: &NodeSet,
    s: usize,
    items: &[Item<'_>],
    opts: &SimOptions,
    noise: &mut Option<(ChaCha8Rng, f64)>,
    stats: &mut Stats,
) -> Result<Decoded> {
    let kr = receivers.len();
    let gamma = binom(kr as u64 - 1, s as u64 - 1) as usize;
    let active: NodeSet = coop.iter().take(kr - s + 1).collect();
    if active.len() != kr - s + 1 {
        return Err(Error::UnsupportedRegime(format!(
            "group {coop} too small to null {} receivers",
            kr - s
        )));
    }
    if offset + gamma > channel.slots() {
        return Err(Error::internal("channel realization too short"));
    }
    let len = items.iter().map(|i| i.payload.len()).max().unwrap_or(0);
    let symbols: Vec<Vec<Complex64>> = items
        .iter()
        .map(|it| {
            let mut v: Vec<Complex64> = it.payload.iter().map(|&b| byte_to_symbol(b)).collect();
            v.resize(len, byte_to_symbol(0));
            v
        })
        .collect();

    // Precoders per slot and item, plus residual checks.
    let mut precoders: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(gamma);
    for d in offset..offset + gamma {
        let mut per_item = Vec::with_capacity(items.len());
        for it in items {
            let null = receivers.difference(&it.dest);
            let w = neutralizing_precoder(channel, d, &active, &null)?;
            let wn = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            for psi in null.iter() {
                let (g, hn) = effective(channel, d, psi, &active, &w);
                let rel = g.norm() / (hn * wn);
                stats.max_residual = stats.max_residual.max(rel);
                if rel > opts.tolerance {
                    return Err(Error::internal(format!(
                        "residual {rel:e} at receiver {psi} exceeds {:e}",
                        opts.tolerance
                    )));
                }
            }
            per_item.push(w);
        }
        precoders.push(per_item);
    }

    let mut out = BTreeMap::new();
    for j in receivers.iter() {
        let wanted: Vec<usize> = (0..items.len()).filter(|&i| items[i].dest.contains(j)).collect();
        if wanted.len() != gamma {
            return Err(Error::internal(format!(
                "receiver {j} wants {} symbols over {gamma} slots",
                wanted.len()
            )));
        }
        // Received signal y[d][l] including any residual interference.
        let mut y = DMatrix::<Complex64>::zeros(gamma, len);
        let mut a = DMatrix::<Complex64>::zeros(gamma, gamma);
        for (row, d) in (offset..offset + gamma).enumerate() {
            for (i, w) in precoders[row].iter().enumerate() {
                let (g, hn) = effective(channel, d, j, &active, w);
                for l in 0..len {
                    y[(row, l)] += g * symbols[i][l];
                }
                if let Some(col) = wanted.iter().position(|&x| x == i) {
                    a[(row, col)] = g;
                    let wn = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                    stats.min_desired_gain = stats.min_desired_gain.min(g.norm() / (hn * wn));
                }
            }
            if let Some((rng, sigma)) = noise.as_mut() {
                for l in 0..len {
                    y[(row, l)] += cn01(rng) * *sigma;
                }
            }
        }
        let sv = a.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        stats.max_condition = stats.max_condition.max(cond);
        if cond.is_nan() || cond >= opts.condition_guard {
            return Err(Error::IllConditioned {
                node: j,
                condition: cond,
            });
        }
        let x = a.lu().solve(&y).ok_or(Error::IllConditioned {
            node: j,
            condition: cond,
        })?;
        stats.solves += 1;
        let mut decoded = Vec::with_capacity(gamma);
        for (col, &i) in wanted.iter().enumerate() {
            let n = items[i].payload.len();
            let mut bytes = Vec::with_capacity(n);
            for l in 0..len {
                let est = x[(col, l)];
                let err = (est - symbols[i][l]).norm();
                stats.max_symbol_error = stats.max_symbol_error.max(err);
                stats.sq_error += err * err;
                stats.n_symbols += 1;
                if l < n {
                    bytes.push(symbol_to_byte(est));
                }
            }
            if bytes != items[i].payload {
                stats.exact = false;
            }
            decoded.push((i, bytes));
        }
        out.insert(j, decoded);
    }
    Ok(out)
}

/// `sum_m h_{j,m} w_m` and `|h_{j,active}|`.
fn effective(channel: &ChannelRealization, d: usize, j: usize, active: &NodeSet, w: &[Complex64]) -> (Complex64, f64) {
    let mut g = Complex64::new(0.0, 0.0);
    let mut hn = 0.0;
    for (m, wm) in active.iter().zip(w) {
        let h = channel.h(j, m, d);
        g += h * wm;
        hn += h.norm_sqr();
    }
    (g, hn.sqrt())
}

fn noise_source(opts: &SimOptions, p: usize) -> Option<(ChaCha8Rng, f64)> {
    opts.snr_db.map(|snr| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.noise_seed);
        rng.set_stream(p as u64);
        (rng, 10f64.powf(-snr / 20.0))
    })
}

fn partition_messages(messages: &[CodedMessage], p: usize) -> BTreeMap<(NodeSet, NodeSet), &[u8]> {
    messages
        .iter()
        .filter(|m| m.partition == p)
        .map(|m| ((m.coop.clone(), m.dest.clone()), m.payload.as_slice()))
        .collect()
}

/// Channel slots a partition occupies.
pub fn slots_needed(layout: &SchemeLayout) -> Result<usize> {
    let c = &layout.config;
    let (s, t, kr, kt, r) = (c.s, c.t, c.k_r, c.k_t(), c.r());
    if s + t > kr {
        Ok((binom(kt, t) * binom(kr - 1, s - 1)) as usize)
    } else if s + t < kr {
        Ok((binom(kr, r) * binom(kt, t) * binom(r - 1, s - 1)) as usize)
    } else {
        Err(unsupported(s, t, kr))
    }
}

fn unsupported(s: u64, t: u64, kr: u64) -> Error {
    Error::UnsupportedRegime(format!(
        "s + t = K_r ({s} + {t} = {kr}) needs asymptotic alignment; only its DoF is modeled"
    ))
}

fn finish(
    p: usize,
    case: &'static str,
    slots: usize,
    symbols: usize,
    stats: Stats,
    received: BTreeMap<usize, Vec<Received>>,
    noisy: bool,
) -> DeliveryReport {
    DeliveryReport {
        partition: p,
        case,
        slots,
        symbols_per_receiver: symbols,
        measured_dof: Rational::new((symbols as u64).into(), (slots as u64).into()),
        max_condition: stats.max_condition,
        max_residual: stats.max_residual,
        min_desired_gain: stats.min_desired_gain,
        max_symbol_error: stats.max_symbol_error,
        symbol_mse: noisy.then(|| stats.sq_error / stats.n_symbols.max(1) as f64),
        linear_solves: stats.solves,
        resamples: 0,
        payloads_exact: stats.exact,
        received,
    }
}

/// Full-DoF delivery when `s + t >= K_r + 1`: each transmitter group is
/// served in turn over `C(K_r - 1, s - 1)` slots.
pub fn simulate_partition_case_a(
    layout: &SchemeLayout,
    p: usize,
    channel: &ChannelRealization,
    messages: &[CodedMessage],
    opts: &SimOptions,
) -> Result<DeliveryReport> {
    let c = &layout.config;
    if c.s + c.t <= c.k_r {
        return Err(Error::UnsupportedRegime(format!(
            "s + t = {} is not above K_r = {}",
            c.s + c.t,
            c.k_r
        )));
    }
    let part = layout.partition(p);
    let by_group = partition_messages(messages, p);
    let gamma = binom(c.k_r - 1, c.s - 1) as usize;
    let dests = enum_subsets(&part.rx, c.s as usize)?;
    let mut noise = noise_source(opts, p);
    let mut stats = Stats::new();
    let mut received: BTreeMap<usize, Vec<Received>> = BTreeMap::new();
    let mut offset = 0;
    for coop in enum_subsets(&part.tx, c.t as usize)? {
        let items = dests
            .iter()
            .map(|d| {
                by_group
                    .get(&(coop.clone(), d.clone()))
                    .map(|pl| Item {
                        dest: d.clone(),
                        payload: pl,
                    })
                    .ok_or_else(|| Error::param(format!("message for D = {d}, B = {coop} missing")))
            })
            .collect::<Result<Vec<_>>>()?;
        let out = neutralization_round(
            channel,
            offset,
            &part.rx,
            &coop,
            c.s as usize,
            &items,
            opts,
            &mut noise,
            &mut stats,
        )?;
        for (j, list) in out {
            received
                .entry(j)
                .or_default()
                .extend(list.into_iter().map(|(i, payload)| Received {
                    partition: p,
                    dest: items[i].dest.clone(),
                    coop: coop.clone(),
                    payload,
                }));
        }
        offset += gamma;
    }
    let symbols = received.values().map(Vec::len).next().unwrap_or(0);
    Ok(finish(p, "A", offset, symbols, stats, received, opts.snr_db.is_some()))
}

/// Splits `payload` into `parts` contiguous chunks whose sizes differ by at
/// most one byte.
pub fn chunk(payload: &[u8], parts: usize) -> Vec<&[u8]> {
    let (q, rem) = (payload.len() / parts, payload.len() % parts);
    let mut out = Vec::with_capacity(parts);
    let mut at = 0;
    for i in 0..parts {
        let n = q + usize::from(i < rem);
        out.push(&payload[at..at + n]);
        at += n;
    }
    out
}

/// Time-division delivery when `s + t <= K_r - 1`: every receiver subset
/// `G` of size `r` becomes a full-DoF subnetwork, and each message is cut
/// into one sub-message per `G` containing its destinations.
pub fn simulate_case_c_timedivision(
    layout: &SchemeLayout,
    p: usize,
    channel: &ChannelRealization,
    messages: &[CodedMessage],
    opts: &SimOptions,
) -> Result<DeliveryReport> {
    let c = &layout.config;
    if c.s + c.t >= c.k_r {
        return Err(Error::UnsupportedRegime(format!(
            "s + t = {} is not below K_r - 1 = {}",
            c.s + c.t,
            c.k_r - 1
        )));
    }
    let part = layout.partition(p);
    let r = c.r() as usize;
    let s = c.s as usize;
    let by_group = partition_messages(messages, p);
    let gamma = binom(r as u64 - 1, s as u64 - 1) as usize;
    let sigma = binom(c.k_r - c.s, c.t - 1) as usize;
    let groups = enum_subsets(&part.rx, r)?;
    let coops = enum_subsets(&part.tx, c.t as usize)?;
    let mut noise = noise_source(opts, p);
    let mut stats = Stats::new();
    // (receiver, B, D) -> sub-messages in G order
    let mut pieces: BTreeMap<(usize, NodeSet, NodeSet), Vec<Vec<u8>>> = BTreeMap::new();
    let mut offset = 0;
    let mut symbols = 0usize;
    for coop in &coops {
        for g in &groups {
            let dests = enum_subsets(g, s)?;
            let items = dests
                .iter()
                .map(|d| {
                    let payload = by_group
                        .get(&(coop.clone(), d.clone()))
                        .ok_or_else(|| Error::param(format!("message for D = {d}, B = {coop} missing")))?;
                    // index of G among the r-subsets of R_p containing D
                    let idx = groups
                        .iter()
                        .filter(|x| d.is_subset(x))
                        .position(|x| x == g)
                        .expect("G contains D");
                    Ok(Item {
                        dest: d.clone(),
                        payload: chunk(payload, sigma)[idx],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let out = neutralization_round(channel, offset, g, coop, s, &items, opts, &mut noise, &mut stats)?;
            for (j, list) in out {
                if j == part.rx.members()[0] {
                    symbols += list.len();
                }
                for (i, payload) in list {
                    pieces
                        .entry((j, coop.clone(), items[i].dest.clone()))
                        .or_default()
                        .push(payload);
                }
            }
            offset += gamma;
        }
    }
    let mut received: BTreeMap<usize, Vec<Received>> = BTreeMap::new();
    for ((j, coop, dest), subs) in pieces {
        if subs.len() != sigma {
            return Err(Error::internal(format!(
                "receiver {j} got {} of {sigma} sub-messages for D = {dest}, B = {coop}",
                subs.len()
            )));
        }
        received.entry(j).or_default().push(Received {
            partition: p,
            dest,
            coop,
            payload: subs.concat(),
        });
    }
    Ok(finish(p, "C", offset, symbols, stats, received, opts.snr_db.is_some()))
}

/// Draws a channel for partition `p` and delivers its messages, resampling
/// once if a receiver's system is ill-conditioned.
pub fn simulate_partition(
    layout: &SchemeLayout,
    p: usize,
    messages: &[CodedMessage],
    seed: u64,
    opts: &SimOptions,
) -> Result<DeliveryReport> {
    let c = &layout.config;
    let slots = slots_needed(layout)?;
    let run = |stream: u64| {
        let ch = draw_channel_stream(layout.k(), slots, seed, stream);
        if c.s + c.t > c.k_r {
            simulate_partition_case_a(layout, p, &ch, messages, opts)
        } else {
            simulate_case_c_timedivision(layout, p, &ch, messages, opts)
        }
    };
    match run(p as u64) {
        Err(Error::IllConditioned { .. }) => {
            let mut rep = run((1 << 32) | p as u64)?;
            rep.resamples = 1;
            Ok(rep)
        }
        other => other,
    }
}

/// Per-receiver DoF the delivery schedule attains, by slot count.
pub fn scheduled_dof(layout: &SchemeLayout) -> Result<Rational> {
    let c = &layout.config;
    if c.s + c.t > c.k_r {
        Ok(int(1))
    } else if c.s + c.t < c.k_r {
        Ok(Rational::new(c.r().into(), c.k_r.into()))
    } else {
        Err(unsupported(c.s, c.t, c.k_r))
    }
}
