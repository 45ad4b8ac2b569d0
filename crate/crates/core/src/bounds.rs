//! Information-theoretic lower bound on the half-duplex NDT and the
//! multiplicative gap to the achievable scheme.

use num_traits::Zero;
use serde::Serialize;

use crate::analytics::{ndt_cpc, ndt_cpc_fractional};
use crate::envelope::lowc;
use crate::error::{Error, Result};
use crate::model::binom;
use crate::optimizer::brute_force_min;
use crate::rational::{as_u64, int, Rational};

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundModel {
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub r: Rational,
    /// Row `t - 1` holds `C_t(1), ..., C_t(K)` for `t = 1..=floor(K/2)`.
    #[serde(serialize_with = "crate::rational::serialize_table")]
    pub c_table: Vec<Vec<Rational>>,
    /// Envelope of row `t - 1` evaluated at `r`.
    #[serde(serialize_with = "crate::rational::serialize_vec")]
    pub envelope_at_r: Vec<Rational>,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub lb1: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub lb2: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub bound: Rational,
}

/// `C_t(i) = C(K-i, t-i) (K-t) / (C(K,t) t)` for `i <= t`, else zero.
pub fn c_coefficient(k: u64, t: u64, i: u64) -> Rational {
    if i == 0 || i > t {
        return Rational::zero();
    }
    let num = binom(k - i, t - i) * (k - t) as u128;
    let den = binom(k, t) * t as u128;
    Rational::new(num.into(), den.into())
}

pub fn lower_bound(r: &Rational, k: u64) -> Result<LowerBoundModel> {
    if k < 2 {
        return Err(Error::domain("lower bound needs K >= 2"));
    }
    if r < &int(1) || r > &int(k) {
        return Err(Error::domain(format!("r = {r} must lie in [1, K = {k}]")));
    }
    let gain = int(1) - r / int(k);
    let c_table: Vec<Vec<Rational>> = (1..=k / 2)
        .map(|t| (1..=k).map(|i| c_coefficient(k, t, i)).collect())
        .collect();
    let envelope_at_r: Vec<Rational> = c_table
        .iter()
        .map(|row| {
            let pts: Vec<_> = row
                .iter()
                .enumerate()
                .map(|(i, c)| (int(i as u64 + 1), c.clone()))
                .collect();
            lowc(&pts, r).expect("r lies inside [1, K]")
        })
        .collect();
    let half_up = k.div_ceil(2);
    let lb1 = if r == &int(1) {
        (int(2) - int(2) / int(k)) / int(k)
    } else if r < &int(half_up) {
        let best = envelope_at_r.iter().max().cloned().unwrap_or_else(Rational::zero);
        (&gain + best) / int(k)
    } else {
        &gain / int(k)
    };
    let lb2 = &gain / int(k - 1);
    let bound = std::cmp::max(lb1.clone(), lb2.clone());
    Ok(LowerBoundModel {
        k,
        r: r.clone(),
        c_table,
        envelope_at_r,
        lb1,
        lb2,
        bound,
    })
}

/// Optimized achievable NDT over the lower bound; defined as one at `r = K`
/// where both vanish. Fractional loads use the envelope of the integer
/// optima.
pub fn gap_ratio(r: &Rational, k: u64) -> Result<Rational> {
    let lb = lower_bound(r, k)?;
    if as_u64(r) == Some(k) {
        return Ok(int(1));
    }
    let achievable = match as_u64(r) {
        Some(ri) => brute_force_min(ri, k)?.best_value,
        None => ndt_cpc_fractional(r, k)?.value,
    };
    gap_from(&achievable, &lb)
}

/// `achievable / bound` for an already computed bound, one at `r = K`.
pub fn gap_from(achievable: &Rational, lb: &LowerBoundModel) -> Result<Rational> {
    if lb.r == int(lb.k) {
        return Ok(int(1));
    }
    if lb.bound.is_zero() {
        return Err(Error::internal(format!(
            "zero lower bound at r = {}, K = {}",
            lb.r, lb.k
        )));
    }
    Ok(achievable / &lb.bound)
}

/// NDT of one fixed configuration over the lower bound.
pub fn config_gap_ratio(r: u64, t: u64, k: u64, k_r: u64) -> Result<Rational> {
    let lb = lower_bound(&int(r), k)?;
    if r == k {
        return Ok(int(1));
    }
    Ok(ndt_cpc(r, t, k, k_r)?.value / lb.bound)
}
