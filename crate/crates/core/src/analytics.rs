//! Closed-form normalized delivery times (NDT) of the competing schemes, the
//! per-receiver DoF of the cooperative X-multicast channel, and asymptotic
//! trend checks.

use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::Serialize;

use crate::envelope::lowc;
use crate::error::{Error, Result};
use crate::model::{binom_big, validate_shape};
use crate::optimizer::brute_force_min;
use crate::rational::{int, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Scheme {
    #[serde(rename = "UncodedTDMA")]
    UncodedTdma,
    #[serde(rename = "CDC")]
    Cdc,
    #[serde(rename = "OSL_FD")]
    OslFd,
    #[serde(rename = "OSL_HD")]
    OslHd,
    #[serde(rename = "BW_FD")]
    BwFd,
    #[serde(rename = "BW_HD")]
    BwHd,
    #[serde(rename = "CPC")]
    Cpc,
    LowerBound,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::UncodedTdma => "UncodedTDMA",
            Scheme::Cdc => "CDC",
            Scheme::OslFd => "OSL_FD",
            Scheme::OslHd => "OSL_HD",
            Scheme::BwFd => "BW_FD",
            Scheme::BwHd => "BW_HD",
            Scheme::Cpc => "CPC",
            Scheme::LowerBound => "LowerBound",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `(K_r, t, s)` attached to a CPC point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CpcParams {
    #[serde(rename = "K_r")]
    pub k_r: u64,
    pub t: u64,
    pub s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdtPoint {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub r: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub value: Rational,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<CpcParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<&'static str>,
}

impl NdtPoint {
    fn new(scheme: Scheme, k: u64, r: &Rational, value: Rational) -> Self {
        NdtPoint {
            scheme,
            k,
            r: r.clone(),
            value,
            params: None,
            note: None,
        }
    }
}

pub const HALF_DUPLEX_NOTE: &str = "comparison convention: twice the full-duplex NDT, not a constructed scheme";

fn check_load(r: &Rational, k: u64) -> Result<()> {
    if k == 0 || r < &int(1) || r > &int(k) {
        return Err(Error::domain(format!("r = {r} must lie in [1, K = {k}]")));
    }
    Ok(())
}

/// `1 - r/K`.
fn local_gain(r: &Rational, k: u64) -> Rational {
    int(1) - r / int(k)
}

pub fn ndt_uncoded(r: &Rational, k: u64) -> Result<NdtPoint> {
    check_load(r, k)?;
    Ok(NdtPoint::new(Scheme::UncodedTdma, k, r, local_gain(r, k)))
}

pub fn ndt_cdc(r: &Rational, k: u64) -> Result<NdtPoint> {
    check_load(r, k)?;
    Ok(NdtPoint::new(Scheme::Cdc, k, r, local_gain(r, k) / r))
}

pub fn ndt_osl_fd(r: &Rational, k: u64) -> Result<NdtPoint> {
    check_load(r, k)?;
    let dof = std::cmp::min(int(k), int(2) * r);
    Ok(NdtPoint::new(Scheme::OslFd, k, r, local_gain(r, k) / dof))
}

pub fn ndt_osl_hd(r: &Rational, k: u64) -> Result<NdtPoint> {
    let fd = ndt_osl_fd(r, k)?;
    let mut p = NdtPoint::new(Scheme::OslHd, k, r, fd.value * int(2));
    p.note = Some(HALF_DUPLEX_NOTE);
    Ok(p)
}

pub fn ndt_bw_fd(r: &Rational, k: u64) -> Result<NdtPoint> {
    check_load(r, k)?;
    let gain = local_gain(r, k);
    let value = if r * int(2) >= int(k) {
        gain / int(k)
    } else {
        let km1 = int(k - 1);
        let num = r * &km1 + int(k) - r - int(1);
        let den = r * &km1 * &km1 + r * int(k.saturating_sub(2));
        gain * num / den
    };
    Ok(NdtPoint::new(Scheme::BwFd, k, r, value))
}

pub fn ndt_bw_hd(r: &Rational, k: u64) -> Result<NdtPoint> {
    let fd = ndt_bw_fd(r, k)?;
    let mut p = NdtPoint::new(Scheme::BwHd, k, r, fd.value * int(2));
    p.note = Some(HALF_DUPLEX_NOTE);
    Ok(p)
}

fn big(n: BigInt) -> Rational {
    Rational::from_integer(n)
}

fn b(n: u64, k: u64) -> Rational {
    big(binom_big(n as i64, k as i64))
}

/// `max_{1<=t'<=t} 1 / (1 + (K_r - s - t' + 1) / (s (K_t - t' + 1)))`.
pub fn d_prime_simplified(s: u64, t: u64, k_t: u64, k_r: u64) -> Rational {
    (1..=t)
        .map(|tp| {
            let num = int(k_r + 1 - s - tp);
            let den = int(s * (k_t + 1 - tp));
            int(1) / (int(1) + num / den)
        })
        .max()
        .unwrap_or_else(Rational::zero)
}

/// The same quantity written as a ratio of symbol counts.
pub fn d_prime_binomial(s: u64, t: u64, k_t: u64, k_r: u64) -> Rational {
    (1..=t)
        .map(|tp| {
            let desired = b(k_r - 1, s - 1) * b(k_t, tp) * b(k_r - s, tp - 1) * int(tp);
            let aligned = b(k_r - 1, s) * b(k_r - s - 1, tp - 1) * b(k_t, tp - 1);
            &desired / (&desired + aligned)
        })
        .max()
        .unwrap_or_else(Rational::zero)
}

/// Per-receiver DoF of the `C(K_t,t) x C(K_r,s)` cooperative X-multicast
/// channel.
///
/// Below the `s + t = K_r` boundary the time-division reduction delivers
/// `(s + t - 1) / K_r`, which is what the NDT expression uses.
pub fn dof_cooperative_x(s: u64, t: u64, k_t: u64, k_r: u64) -> Result<Rational> {
    if s == 0 || t == 0 || s > k_r || t > k_t {
        return Err(Error::domain(format!(
            "need 1 <= s <= K_r and 1 <= t <= K_t (s = {s}, t = {t}, K_t = {k_t}, K_r = {k_r})"
        )));
    }
    if s + t > k_r {
        return Ok(int(1));
    }
    if s + t == k_r {
        let x = b(k_r - 1, s - 1) * b(k_t, t) * int(t);
        return Ok(&x / (&x + int(1)));
    }
    let simplified = d_prime_simplified(s, t, k_t, k_r);
    let binomial = d_prime_binomial(s, t, k_t, k_r);
    if simplified != binomial {
        return Err(Error::internal(format!(
            "d' forms disagree at s = {s}, t = {t}, K_t = {k_t}, K_r = {k_r}: {simplified} vs {binomial}"
        )));
    }
    Ok(std::cmp::max(simplified, Rational::new((s + t - 1).into(), k_r.into())))
}

/// `tau_{r,t}`.
pub fn tau(r: u64, t: u64, k: u64, k_r: u64) -> Rational {
    (1..=t)
        .map(|j| {
            let num = int(k_r + t - r - j);
            let den = int((r + 1 - t) * (k - k_r + 1 - j));
            int(1) / (int(1) + num / den)
        })
        .max()
        .unwrap_or_else(Rational::zero)
}

/// The three-case closed form alone, for an already validated
/// configuration with `r < K`.
pub fn ndt_cpc_piecewise(r: u64, t: u64, k: u64, k_r: u64) -> Rational {
    let base = local_gain(&int(r), k) / int(k_r);
    if r >= k_r {
        base
    } else if r + 1 == k_r {
        &base * (int(1) + int(1) / (b(r, t) * b(k - k_r, t) * int(t)))
    } else {
        let inv_tau = int(1) / tau(r, t, k, k_r);
        &base * std::cmp::min(inv_tau, Rational::new(k_r.into(), r.into()))
    }
}

/// Piecewise CPC NDT for one configuration, cross-checked against
/// `C(K, K_r) * R_p / d` with `R_p` counted from segment sizes.
pub fn ndt_cpc(r: u64, t: u64, k: u64, k_r: u64) -> Result<NdtPoint> {
    let rr = int(r);
    check_load(&rr, k)?;
    if r == k {
        return Ok(NdtPoint::new(Scheme::Cpc, k, &rr, Rational::zero()));
    }
    let s = validate_shape(k, r, k_r, t).map_err(|e| Error::domain(e.to_string()))?;
    let base = local_gain(&rr, k) / int(k_r);
    let piecewise = ndt_cpc_piecewise(r, t, k, k_r);

    let k_t = k - k_r;
    let d = dof_cooperative_x(s, t, k_t, k_r)?;
    let segments = b(r, t) * b(k - r - 1, k_r - s);
    // eta1 * eta2 * B / (N Q B) = 1 / (C(K, r) K)
    let per_partition = b(k_r - 1, s - 1) * b(k_t, t) / (segments * b(k, r) * int(k));
    let via_load = per_partition * b(k, k_r) / &d;
    if via_load != piecewise || &base / &d != piecewise {
        return Err(Error::internal(format!(
            "NDT routes disagree at r = {r}, t = {t}, K = {k}, K_r = {k_r}: \
             piecewise {piecewise}, load/DoF {via_load}"
        )));
    }
    let mut p = NdtPoint::new(Scheme::Cpc, k, &rr, piecewise);
    p.params = Some(CpcParams { k_r, t, s });
    Ok(p)
}

/// CPC NDT restricted to `t = 1`, minimized over `K_r`.
pub fn bar_cpc(r: u64, k: u64) -> Result<NdtPoint> {
    let rr = int(r);
    check_load(&rr, k)?;
    if r == k {
        return Ok(NdtPoint::new(Scheme::Cpc, k, &rr, Rational::zero()));
    }
    let mut best: Option<NdtPoint> = None;
    for k_r in 1..=k {
        if validate_shape(k, r, k_r, 1).is_err() {
            continue;
        }
        let p = ndt_cpc(r, 1, k, k_r)?;
        if best.as_ref().is_none_or(|b| p.value < b.value) {
            best = Some(p);
        }
    }
    best.ok_or_else(|| Error::internal(format!("no t = 1 configuration for r = {r}, K = {k}")))
}

/// Lower convex envelope of the optimized integer-load CPC points,
/// evaluated at a possibly fractional `r`.
pub fn ndt_cpc_fractional(r: &Rational, k: u64) -> Result<NdtPoint> {
    check_load(r, k)?;
    let points = (1..=k)
        .map(|rho| Ok((int(rho), brute_force_min(rho, k)?.best_value)))
        .collect::<Result<Vec<_>>>()?;
    let value = lowc(&points, r).ok_or_else(|| Error::domain(format!("r = {r} outside [1, {k}]")))?;
    Ok(NdtPoint::new(Scheme::Cpc, k, r, value))
}

/// `K >= 2 (r + 1 + sqrt(r^2 + 1))`, decided exactly.
pub fn full_duplex_crossover(r: u64, k: u64) -> bool {
    let lhs = k as i128 - 2 * r as i128 - 2;
    lhs >= 0 && lhs * lhs >= 4 * (r as i128 * r as i128 + 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticRow {
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub bar_cpc: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub cdc: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub osl_hd: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub osl_fd: Rational,
    pub crossover_applies: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsReport {
    pub r: u64,
    pub rows: Vec<AsymptoticRow>,
    /// Smallest listed `K` from which `bar_cpc` strictly decreases to the end.
    #[serde(rename = "decreasing_from_K")]
    pub decreasing_from: Option<u64>,
    /// `|cdc - 1/r|` and `|osl_hd - 1/r|` at the largest `K`.
    #[serde(serialize_with = "crate::rational::serialize")]
    pub cdc_gap_to_limit: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub osl_hd_gap_to_limit: Rational,
    /// Every row with `crossover_applies` has `bar_cpc <= osl_fd`.
    pub crossover_holds: bool,
}

pub fn asymptotics_check(r: u64, k_list: &[u64]) -> Result<AsymptoticsReport> {
    let mut ks = k_list.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::param("empty K list"));
    }
    let rr = int(r);
    let rows = ks
        .iter()
        .map(|&k| {
            Ok(AsymptoticRow {
                k,
                bar_cpc: bar_cpc(r, k)?.value,
                cdc: ndt_cdc(&rr, k)?.value,
                osl_hd: ndt_osl_hd(&rr, k)?.value,
                osl_fd: ndt_osl_fd(&rr, k)?.value,
                crossover_applies: full_duplex_crossover(r, k),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut start = rows.len() - 1;
    while start > 0 && rows[start - 1].bar_cpc > rows[start].bar_cpc {
        start -= 1;
    }
    let decreasing_from = (rows.len() > 1 && start < rows.len() - 1).then(|| rows[start].k);
    let last = rows.last().expect("non-empty");
    let limit = int(1) / &rr;
    let abs = |x: Rational| if x < Rational::zero() { -x } else { x };
    Ok(AsymptoticsReport {
        r,
        decreasing_from,
        cdc_gap_to_limit: abs(&last.cdc - &limit),
        osl_hd_gap_to_limit: abs(&last.osl_hd - &limit),
        crossover_holds: rows.iter().all(|x| !x.crossover_applies || x.bar_cpc <= x.osl_fd),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, to_f64};

    fn r(n: i64) -> Rational {
        rat(n, 1)
    }

    #[test]
    fn baseline_values() {
        assert_eq!(ndt_cdc(&r(3), 6).unwrap().value, rat(1, 6));
        assert_eq!(ndt_cdc(&r(2), 50).unwrap().value, rat(12, 25));
        assert_eq!(ndt_uncoded(&r(7), 7).unwrap().value, Rational::zero());
        assert_eq!(ndt_osl_hd(&r(2), 50).unwrap().value, rat(12, 25));
        assert_eq!(ndt_osl_fd(&r(4), 6).unwrap().value, rat(1, 18));
        // r >= K/2 branch of BW
        assert_eq!(ndt_bw_fd(&r(3), 6).unwrap().value, rat(1, 12));
        // r < K/2: (1 - 2/6)(2*5 + 3) / (2*25 + 2*4) = (2/3)(13/58)
        assert_eq!(ndt_bw_fd(&r(2), 6).unwrap().value, rat(13, 87));
        assert_eq!(ndt_bw_hd(&r(2), 6).unwrap().value, rat(26, 87));
        assert!(ndt_cdc(&r(0), 5).is_err());
        assert!(ndt_cdc(&r(6), 5).is_err());
        assert!(ndt_bw_hd(&r(2), 6).unwrap().note.is_some());
    }

    #[test]
    fn fractional_loads_are_accepted_by_baselines() {
        let v = ndt_cdc(&rat(5, 2), 10).unwrap().value;
        assert_eq!(v, rat(3, 10));
    }

    #[test]
    fn dof_examples() {
        assert_eq!(dof_cooperative_x(2, 2, 3, 3).unwrap(), int(1));
        assert_eq!(dof_cooperative_x(1, 2, 3, 3).unwrap(), rat(6, 7));
        // s = 2, t = 1, K_t = 3, K_r = 5: d' = 1/(1 + 3/6) = 2/3 beats 2/5
        assert_eq!(d_prime_simplified(2, 1, 3, 5), rat(2, 3));
        assert_eq!(dof_cooperative_x(2, 1, 3, 5).unwrap(), rat(2, 3));
        // K_t small so the time-division branch wins
        assert_eq!(d_prime_simplified(1, 2, 2, 8), rat(2, 9));
        assert_eq!(dof_cooperative_x(1, 2, 2, 8).unwrap(), rat(1, 4));
        assert!(dof_cooperative_x(0, 1, 3, 3).is_err());
        assert!(dof_cooperative_x(4, 1, 3, 3).is_err());
    }

    #[test]
    fn d_prime_forms_agree() {
        for k_r in 3..14u64 {
            for k_t in 1..12u64 {
                for s in 1..k_r {
                    for t in 1..=k_t {
                        if s + t < k_r {
                            assert_eq!(
                                d_prime_simplified(s, t, k_t, k_r),
                                d_prime_binomial(s, t, k_t, k_r),
                                "s={s} t={t} K_t={k_t} K_r={k_r}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cpc_examples() {
        assert_eq!(ndt_cpc(3, 2, 6, 3).unwrap().value, rat(1, 6));
        // tau = 1/(1 + 2/4) = 2/3, min{3/2, 2} = 3/2, (1/4)(2/3)(3/2) = 1/4
        assert_eq!(ndt_cpc(2, 1, 6, 4).unwrap().value, rat(1, 4));
        assert_eq!(tau(2, 1, 6, 4), rat(2, 3));
        assert_eq!(ndt_cpc(6, 1, 6, 3).unwrap().value, Rational::zero());
        assert!(ndt_cpc(3, 1, 6, 2).is_err());
    }

    #[test]
    fn identity_holds_everywhere_small() {
        for k in 2..=16u64 {
            for r in 1..k {
                for k_r in 1..=k {
                    for t in 1..=r {
                        if validate_shape(k, r, k_r, t).is_ok() {
                            ndt_cpc(r, t, k, k_r).unwrap();
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bar_cpc_matches_closed_t1() {
        // K = 50, r = 2: best K_r is 29
        let p = bar_cpc(2, 50).unwrap();
        assert_eq!(p.params.unwrap().k_r, 29);
        assert!((to_f64(&p.value) - 0.0544).abs() < 5e-4);
    }

    #[test]
    fn fractional_envelope() {
        let k = 6;
        let d2 = brute_force_min(2, k).unwrap().best_value;
        let d3 = brute_force_min(3, k).unwrap().best_value;
        let d5 = brute_force_min(5, k).unwrap().best_value;
        assert_eq!(ndt_cpc_fractional(&int(3), k).unwrap().value, d3);
        let chord = (&d2 + &d3) / int(2);
        assert!(ndt_cpc_fractional(&rat(5, 2), k).unwrap().value <= chord);
        assert!(ndt_cpc_fractional(&rat(11, 2), k).unwrap().value <= d5 / int(2));
        assert!(ndt_cpc_fractional(&rat(1, 2), k).is_err());
    }

    #[test]
    fn crossover_threshold() {
        // r = 1: 2(2 + sqrt 2) = 6.83
        assert!(!full_duplex_crossover(1, 6));
        assert!(full_duplex_crossover(1, 7));
        // r = 2: 2(3 + sqrt 5) = 10.47
        assert!(!full_duplex_crossover(2, 10));
        assert!(full_duplex_crossover(2, 11));
    }

    #[test]
    fn asymptotics_for_two() {
        let rep = asymptotics_check(2, &[10, 50, 100, 500]).unwrap();
        assert_eq!(rep.decreasing_from, Some(10));
        assert_eq!(rep.cdc_gap_to_limit, rat(1, 500));
        assert!(to_f64(&rep.rows[3].bar_cpc) < 0.01);
        assert!(rep.crossover_holds);
    }
}
