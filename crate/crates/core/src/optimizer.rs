//! Minimizing the CPC NDT over `(K_r, t)`: exhaustive search, the closed
//! form, the `t = 1` regime test, and their cross-validation.

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{ndt_cpc, ndt_cpc_piecewise, NdtPoint};
use crate::error::{Error, Result};
use crate::model::{binom, validate_shape};
use crate::rational::{big, floor_sub_sqrt_div, floor_u64, int, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    #[serde(rename = "NDT1")]
    Ndt1,
    #[serde(rename = "NDT2")]
    Ndt2,
    #[serde(rename = "tie")]
    Tie,
    /// `r = K`: nothing to shuffle; `K_r = t = s = 0`.
    #[serde(rename = "no_shuffle")]
    NoShuffle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumParams {
    pub r: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub best_value: Rational,
    #[serde(rename = "K_r_star")]
    pub k_r_star: u64,
    pub t_star: u64,
    pub s_star: u64,
    pub branch: Branch,
    /// Closed form only: `NDT1` and `NDT2` where defined.
    #[serde(
        serialize_with = "crate::rational::serialize_opt",
        skip_serializing_if = "Option::is_none"
    )]
    pub ndt1: Option<Rational>,
    #[serde(
        serialize_with = "crate::rational::serialize_opt",
        skip_serializing_if = "Option::is_none"
    )]
    pub ndt2: Option<Rational>,
}

impl OptimumParams {
    fn no_shuffle(r: u64, k: u64) -> Self {
        OptimumParams {
            r,
            k,
            best_value: Rational::zero(),
            k_r_star: 0,
            t_star: 0,
            s_star: 0,
            branch: Branch::NoShuffle,
            ndt1: None,
            ndt2: None,
        }
    }
}

fn check(r: u64, k: u64) -> Result<()> {
    if k == 0 || r == 0 || r > k {
        return Err(Error::domain(format!("r = {r} must lie in [1, K = {k}]")));
    }
    Ok(())
}

/// Scans every valid `(K_r, t)`; ties go to the smaller `K_r`, then the
/// smaller `t`.
pub fn brute_force_min(r: u64, k: u64) -> Result<OptimumParams> {
    check(r, k)?;
    if r == k {
        return Ok(OptimumParams::no_shuffle(r, k));
    }
    let mut best: Option<(Rational, u64, u64, u64)> = None;
    for k_r in 1..=k {
        for t in 1..=r {
            let Ok(s) = validate_shape(k, r, k_r, t) else { continue };
            let v = ndt_cpc_piecewise(r, t, k, k_r);
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, k_r, t, s));
            }
        }
    }
    let (best_value, k_r, t, s) =
        best.ok_or_else(|| Error::Infeasible(format!("no valid configuration for r = {r}, K = {k}")))?;
    // the winner goes through the cross-checked evaluation
    ndt_cpc(r, t, k, k_r)?;
    let branch = if k_r == r + 1 { Branch::Ndt1 } else { Branch::Ndt2 };
    Ok(OptimumParams {
        r,
        k,
        best_value,
        k_r_star: k_r,
        t_star: t,
        s_star: s,
        branch,
        ndt1: None,
        ndt2: None,
    })
}

/// Smallest CPC NDT with the cooperation size held at `t`, or `None` when
/// no receiver-group size admits it.
pub fn min_for_cooperation(r: u64, k: u64, t: u64) -> Result<Option<NdtPoint>> {
    check(r, k)?;
    let mut best: Option<(Rational, u64)> = None;
    for k_r in 1..=k {
        if validate_shape(k, r, k_r, t).is_err() {
            continue;
        }
        let v = ndt_cpc_piecewise(r, t, k, k_r);
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, k_r));
        }
    }
    best.map(|(_, k_r)| ndt_cpc(r, t, k, k_r)).transpose()
}

/// `floor(1 + (-r^2 + rK - r) / K)`.
pub fn t_star(r: u64, k: u64) -> u64 {
    let num = (r * k) as i128 - (r * r) as i128 - r as i128;
    floor_u64(&(int(1) + Rational::new(num.into(), k.into())))
}

/// Optimal receiver-group size for `t = 1`.
pub fn k_r_star(r: u64, k: u64) -> u64 {
    if r == 1 {
        return k.div_ceil(2);
    }
    let (r, k) = (r as i128, k as i128);
    let a = 2 * r * (k - 1) + r - 1;
    let m = (4 * r * (k - 1) * (k - r) + (r - 1) * (r - 1)) as u128;
    floor_sub_sqrt_div(a, m, 2 * (r - 1)).max(0) as u64
}

pub fn ndt1(r: u64, k: u64, t: u64) -> Option<Rational> {
    if r + 1 >= k {
        return None;
    }
    let x = binom(r, t) * binom(k - r - 1, t) * t as u128;
    if x == 0 {
        return None;
    }
    let gain = int(1) - Rational::new(r.into(), k.into());
    Some(gain / int(r + 1) * (int(1) + int(1) / big(x)))
}

pub fn ndt2(r: u64, k: u64, k_r: u64) -> Option<Rational> {
    if k_r == 0 || k_r >= k {
        return None;
    }
    let gain = int(1) - Rational::new(r.into(), k.into());
    let num = int((k - k_r) * r + k_r) - int(r);
    Some(gain / int(r) * num / int((k - k_r) * k_r))
}

pub fn closed_form_min(r: u64, k: u64) -> Result<OptimumParams> {
    check(r, k)?;
    if r == k {
        return Ok(OptimumParams::no_shuffle(r, k));
    }
    let ts = t_star(r, k);
    let kr = k_r_star(r, k);
    let n1 = ndt1(r, k, ts);
    let n2 = ndt2(r, k, kr);
    let (branch, best_value) = match (&n1, &n2) {
        (Some(a), Some(b)) if a < b => (Branch::Ndt1, a.clone()),
        (Some(a), Some(b)) if a > b => (Branch::Ndt2, b.clone()),
        (Some(a), Some(_)) => (Branch::Tie, a.clone()),
        (Some(a), None) => (Branch::Ndt1, a.clone()),
        (None, Some(b)) => (Branch::Ndt2, b.clone()),
        (None, None) => {
            return Err(Error::internal(format!(
                "neither closed form defined at r = {r}, K = {k}"
            )))
        }
    };
    let (k_r, t) = match branch {
        Branch::Ndt1 => (r + 1, ts),
        Branch::Tie if r + 1 < kr => (r + 1, ts),
        _ => (kr, 1),
    };
    Ok(OptimumParams {
        r,
        k,
        best_value,
        k_r_star: k_r,
        t_star: t,
        s_star: r + 1 - t,
        branch,
        ndt1: n1,
        ndt2: n2,
    })
}

/// Whether the `t = 1` optimality condition holds. For `r = 1` the only
/// choice is `t = 1`, so the answer is always true.
pub fn single_cooperation_regime(r: u64, k: u64) -> bool {
    if r <= 1 || k <= 5 {
        return true;
    }
    let (r, k) = (r as i128, k as i128);
    // K >= r + 4 + 4/(r-1)
    let first = (k - r - 4) * (r - 1) >= 4;
    // K >= (r + 4 + sqrt(r^2 + 16r)) / 2
    let lhs = 2 * k - r - 4;
    let second = lhs >= 0 && lhs * lhs >= r * r + 16 * r;
    first && second
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeCheck {
    pub r: u64,
    #[serde(rename = "K")]
    pub k: u64,
    pub regime: bool,
    pub t_star: u64,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub brute: Rational,
    #[serde(serialize_with = "crate::rational::serialize_opt")]
    pub t1_closed_form: Option<Rational>,
    /// When in the regime: `t_star = 1` and the value matches the `t = 1`
    /// closed form.
    pub holds: bool,
}

pub fn single_cooperation_check(r: u64, k: u64) -> Result<RegimeCheck> {
    let opt = brute_force_min(r, k)?;
    let regime = single_cooperation_regime(r, k);
    let closed = (r < k).then(|| ndt2(r, k, k_r_star(r, k))).flatten();
    let holds = !regime || r == k || (opt.t_star == 1 && closed.as_ref() == Some(&opt.best_value));
    Ok(RegimeCheck {
        r,
        k,
        regime,
        t_star: opt.t_star,
        brute: opt.best_value,
        t1_closed_form: closed,
        holds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCell {
    pub r: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub brute: Rational,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub closed: Rational,
    #[serde(rename = "K_r_star")]
    pub k_r_star: u64,
    pub t_star: u64,
    pub branch: Branch,
    pub agree: bool,
    /// The closed-form `(K_r*, t*)` is a valid configuration attaining the
    /// closed-form value.
    pub params_attain: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossReport {
    #[serde(rename = "K_max")]
    pub k_max: u64,
    pub cells: Vec<CrossCell>,
    pub discrepancies: usize,
}

impl CrossReport {
    /// Fails with the first disagreeing cell as witness.
    pub fn ensure_agreement(&self) -> Result<()> {
        match self.cells.iter().find(|c| !c.agree) {
            None => Ok(()),
            Some(c) => Err(Error::Discrepancy {
                r: c.r,
                k: c.k,
                detail: format!("brute force {} vs closed form {}", c.brute, c.closed),
            }),
        }
    }
}

fn cross_cell(r: u64, k: u64) -> Result<CrossCell> {
    let brute = brute_force_min(r, k)?;
    let closed = closed_form_min(r, k)?;
    let params_attain = validate_shape(k, r, closed.k_r_star, closed.t_star).is_ok()
        && ndt_cpc(r, closed.t_star, k, closed.k_r_star)?.value == closed.best_value;
    Ok(CrossCell {
        r,
        k,
        agree: brute.best_value == closed.best_value,
        brute: brute.best_value,
        closed: closed.best_value,
        k_r_star: closed.k_r_star,
        t_star: closed.t_star,
        branch: closed.branch,
        params_attain,
    })
}

/// Compares both minimizers on every `2 <= K <= K_max`, `1 <= r <= K-1`.
pub fn cross_validate(k_max: u64) -> Result<CrossReport> {
    if k_max > 64 {
        return Err(Error::param(format!("K_max = {k_max} exceeds 64")));
    }
    let grid: Vec<(u64, u64)> = (2..=k_max).flat_map(|k| (1..k).map(move |r| (r, k))).collect();
    let cells: Vec<CrossCell> = grid
        .into_par_iter()
        .map(|(r, k)| cross_cell(r, k))
        .collect::<Result<_>>()?;
    let discrepancies = cells.iter().filter(|c| !c.agree).count();
    Ok(CrossReport {
        k_max,
        cells,
        discrepancies,
    })
}
