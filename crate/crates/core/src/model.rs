//! Problem-instance types, subset and partition enumeration, and
//! configuration validation.

use std::fmt;

use itertools::Itertools;
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Constraint, Error, Result};
use crate::rational::{int, Rational};

/// Largest node count supported by the construction layer.
pub const MAX_NODES: u64 = 64;

/// Exact binomial coefficient. Panics on overflow, which cannot happen for
/// `n <= 64`.
pub fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128).expect("binomial coefficient overflow") / (i as u128 + 1);
    }
    acc
}

/// Binomial coefficient extended by zero outside `0 <= k <= n`.
pub fn binom_i(n: i64, k: i64) -> u128 {
    if n < 0 || k < 0 || k > n {
        0
    } else {
        binom(n as u64, k as u64)
    }
}

/// Arbitrary-precision binomial for analytics at large `K`.
pub fn binom_big(n: i64, k: i64) -> BigInt {
    if n < 0 || k < 0 || k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut acc = BigInt::from(1);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Strictly increasing set of 1-based node indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        NodeSet(members)
    }

    pub fn empty() -> Self {
        NodeSet(Vec::new())
    }

    /// `{1, ..., k}`.
    pub fn range(k: usize) -> Self {
        NodeSet((1..=k).collect())
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.0.binary_search(&x).is_ok()
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.iter().all(|&x| other.contains(x))
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        NodeSet::new(self.0.iter().chain(other.0.iter()).copied().collect())
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.iter().copied().filter(|&x| other.contains(x)).collect())
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.iter().copied().filter(|&x| !other.contains(x)).collect())
    }

    pub fn with(&self, x: usize) -> NodeSet {
        let mut v = self.0.clone();
        v.push(x);
        NodeSet::new(v)
    }

    pub fn without(&self, x: usize) -> NodeSet {
        NodeSet(self.0.iter().copied().filter(|&y| y != x).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// True when every member lies in `1..=k`.
    pub fn within(&self, k: usize) -> bool {
        self.0.iter().all(|&x| x >= 1 && x <= k)
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.iter().join(","))
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        NodeSet::new(iter.into_iter().collect())
    }
}

/// All `k`-subsets of `ground` in lexicographic order.
pub fn enum_subsets(ground: &NodeSet, k: usize) -> Result<Vec<NodeSet>> {
    if k > ground.len() {
        return Err(Error::param(format!(
            "subset size {k} exceeds ground set size {}",
            ground.len()
        )));
    }
    Ok(ground.members().iter().copied().combinations(k).map(NodeSet).collect())
}

/// One transmitter/receiver split of the nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub index: usize,
    pub tx: NodeSet,
    pub rx: NodeSet,
}

/// The `C(K, K_t)` partitions, indexed from 1 in lexicographic order of
/// the transmitter set.
pub fn enum_partitions(k: usize, k_t: usize) -> Result<Vec<Partition>> {
    if k_t == 0 || k_t >= k {
        return Err(Error::param(format!(
            "transmitter group size {k_t} must lie in [1, {}]",
            k.saturating_sub(1)
        )));
    }
    let all = NodeSet::range(k);
    Ok(enum_subsets(&all, k_t)?
        .into_iter()
        .enumerate()
        .map(|(i, tx)| Partition {
            index: i + 1,
            rx: all.difference(&tx),
            tx,
        })
        .collect())
}

/// The `(K, N, Q, r, B)` problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "Q")]
    pub q: u64,
    pub r: u64,
    #[serde(rename = "B")]
    pub b: u64,
}

impl SystemParams {
    pub fn new(k: u64, n: u64, q: u64, r: u64, b: u64) -> Result<Self> {
        if k == 0 || n == 0 || q == 0 || b == 0 {
            return Err(Error::param("K, N, Q and B must all be positive"));
        }
        if k > MAX_NODES {
            return Err(Error::param(format!(
                "K = {k} exceeds the supported maximum {MAX_NODES}"
            )));
        }
        if r == 0 || r > k {
            return Err(Error::param(format!("r = {r} must lie in [1, K = {k}]")));
        }
        Ok(SystemParams { k, n, q, r, b })
    }

    /// `N / C(K, r)`.
    pub fn eta1(&self) -> Rational {
        Rational::new(self.n.into(), binom(self.k, self.r).into())
    }

    /// `Q / K`.
    pub fn eta2(&self) -> Rational {
        Rational::new(self.q.into(), self.k.into())
    }

    /// Integer `(eta1, eta2)`, required for building the scheme.
    pub fn integral_etas(&self) -> Result<(u64, u64)> {
        let subsets = binom(self.k, self.r) as u64;
        if !self.n.is_multiple_of(subsets) {
            return Err(Error::Infeasible(format!(
                "N = {} is not a multiple of C(K, r) = {subsets}",
                self.n
            )));
        }
        if !self.q.is_multiple_of(self.k) {
            return Err(Error::Infeasible(format!(
                "Q = {} is not a multiple of K = {}",
                self.q, self.k
            )));
        }
        Ok((self.n / subsets, self.q / self.k))
    }

    pub fn r_rational(&self) -> Rational {
        int(self.r)
    }
}

/// A validated choice of receiver-group size and cooperation size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleConfig {
    pub params: SystemParams,
    #[serde(rename = "K_r")]
    pub k_r: u64,
    pub t: u64,
    pub s: u64,
}

impl ShuffleConfig {
    pub fn k(&self) -> u64 {
        self.params.k
    }

    pub fn r(&self) -> u64 {
        self.params.r
    }

    pub fn k_t(&self) -> u64 {
        self.params.k - self.k_r
    }

    /// Number of segments each IV bundle is split into.
    pub fn segments_per_bundle(&self) -> u128 {
        let (k, r) = (self.k(), self.r());
        binom(r, self.t) * binom_i(k as i64 - r as i64 - 1, self.k_r as i64 - self.s as i64)
    }

    /// Messages sent within one partition.
    pub fn messages_per_partition(&self) -> u128 {
        binom(self.k_t(), self.t) * binom(self.k_r, self.s)
    }
}

/// Checks the shape constraints for `(K, r, K_r, t)` and returns `s`.
pub fn validate_shape(k: u64, r: u64, k_r: u64, t: u64) -> Result<u64> {
    let fail = |constraint, detail: String| Err(Error::ConstraintViolation { constraint, detail });
    if t == 0 || t > r {
        return fail(Constraint::CooperationRange, format!("t = {t}, r = {r}"));
    }
    if k_r == 0 || k_r > k {
        return fail(Constraint::ReceiverRange, format!("K_r = {k_r}, K = {k}"));
    }
    let s = r + 1 - t;
    if s > k_r {
        return fail(Constraint::MulticastFitsReceivers, format!("s = {s}, K_r = {k_r}"));
    }
    if t > k - k_r {
        return fail(
            Constraint::CooperationFitsTransmitters,
            format!("t = {t}, K - K_r = {}", k - k_r),
        );
    }
    if k - k_r > k - s {
        return fail(
            Constraint::TransmittersBound,
            format!("K - K_r = {}, K - s = {}", k - k_r, k - s),
        );
    }
    Ok(s)
}

pub fn validate_config(params: SystemParams, k_r: u64, t: u64) -> Result<ShuffleConfig> {
    let s = validate_shape(params.k, params.r, k_r, t)?;
    Ok(ShuffleConfig { params, k_r, t, s })
}
