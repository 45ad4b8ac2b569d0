//! NDT tables over parameter grids, including the presets behind the
//! comparison figures.

use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{
    ndt_bw_fd, ndt_bw_hd, ndt_cdc, ndt_cpc_fractional, ndt_osl_fd, ndt_osl_hd, ndt_uncoded, NdtPoint, Scheme,
};
use crate::bounds::{gap_from, lower_bound};
use crate::error::{Error, Result};
use crate::optimizer::{brute_force_min, min_for_cooperation};
use crate::rational::{as_u64, int, to_f64, Rational};

/// One CSV row: `scheme,K,r,K_r,t,value`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: &'static str,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(serialize_with = "crate::rational::serialize")]
    pub r: Rational,
    #[serde(rename = "K_r")]
    pub k_r: Option<u64>,
    pub t: Option<u64>,
    pub value: f64,
    #[serde(skip)]
    pub exact: Rational,
}

impl SweepRow {
    fn from_point(p: &NdtPoint) -> Self {
        SweepRow {
            scheme: p.scheme.label(),
            k: p.k,
            r: p.r.clone(),
            k_r: p.params.map(|c| c.k_r),
            t: p.params.map(|c| c.t),
            value: to_f64(&p.value),
            exact: p.value.clone(),
        }
    }

    fn plain(scheme: &'static str, k: u64, r: &Rational, value: Rational) -> Self {
        SweepRow {
            scheme,
            k,
            r: r.clone(),
            k_r: None,
            t: None,
            value: to_f64(&value),
            exact: value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `K = 50`, `r = 1..=50`, every scheme plus bound and gap.
    Fig2,
    /// `r = 2`, `K = 3..=50`, every scheme plus bound and gap.
    Fig3,
    /// Optimized CPC for `r = 1..=5`, `K = r+1..=60`.
    Fig4,
    /// CPC with `t` pinned to 1, 2, 3 for `r = 4..=10`, `K = 25..=50`.
    Fig5,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "fig5" => Ok(Preset::Fig5),
            other => Err(Error::param(format!(
                "unknown preset `{other}` (fig2, fig3, fig4, fig5)"
            ))),
        }
    }
}

/// Labels emitted by [`all_schemes`], in row order.
pub const ALL_LABELS: [&str; 9] = [
    "UncodedTDMA",
    "CDC",
    "OSL_FD",
    "OSL_HD",
    "BW_FD",
    "BW_HD",
    "CPC",
    "LowerBound",
    "Gap",
];

/// Every scheme at one `(r, K)`, the lower bound and the gap. A fractional
/// `r` uses the envelope of the optimized integer-load CPC points.
pub fn all_schemes_at(r: &Rational, k: u64) -> Result<Vec<SweepRow>> {
    let mut rows: Vec<SweepRow> = [ndt_uncoded, ndt_cdc, ndt_osl_fd, ndt_osl_hd, ndt_bw_fd, ndt_bw_hd]
        .iter()
        .map(|f| f(r, k).map(|p| SweepRow::from_point(&p)))
        .collect::<Result<_>>()?;
    let cpc = match as_u64(r) {
        Some(ri) => optimized_cpc(ri, k)?.remove(0),
        None => SweepRow::from_point(&ndt_cpc_fractional(r, k)?),
    };
    let lb = lower_bound(r, k)?;
    let gap = gap_from(&cpc.exact, &lb)?;
    rows.push(cpc);
    rows.push(SweepRow::plain(Scheme::LowerBound.label(), k, r, lb.bound));
    rows.push(SweepRow::plain("Gap", k, r, gap));
    Ok(rows)
}

pub fn all_schemes(r: u64, k: u64) -> Result<Vec<SweepRow>> {
    all_schemes_at(&int(r), k)
}

fn optimized_cpc(r: u64, k: u64) -> Result<Vec<SweepRow>> {
    let opt = brute_force_min(r, k)?;
    let mut row = SweepRow::plain(Scheme::Cpc.label(), k, &int(r), opt.best_value);
    if opt.k_r_star > 0 {
        row.k_r = Some(opt.k_r_star);
        row.t = Some(opt.t_star);
    }
    Ok(vec![row])
}

fn pinned_cooperation(r: u64, k: u64) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for t in 1..=3u64.min(r) {
        if let Some(p) = min_for_cooperation(r, k, t)? {
            rows.push(SweepRow::from_point(&p));
        }
    }
    Ok(rows)
}

/// Evaluates `cell` over `grid` in parallel; rows come back in grid order.
pub fn sweep_grid<F>(grid: &[(u64, u64)], cell: F) -> Result<Vec<SweepRow>>
where
    F: Fn(u64, u64) -> Result<Vec<SweepRow>> + Sync,
{
    let per: Vec<Vec<SweepRow>> = grid.par_iter().map(|&(r, k)| cell(r, k)).collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// `(r, K)` pairs of a preset, in output order.
pub fn preset_grid(preset: Preset) -> Vec<(u64, u64)> {
    match preset {
        Preset::Fig2 => (1..=50).map(|r| (r, 50)).collect(),
        Preset::Fig3 => (3..=50).map(|k| (2, k)).collect(),
        Preset::Fig4 => (1..=5u64).flat_map(|r| (r + 1..=60).map(move |k| (r, k))).collect(),
        Preset::Fig5 => (4..=10u64).flat_map(|r| (25..=50).map(move |k| (r, k))).collect(),
    }
}

pub fn run_preset(preset: Preset) -> Result<Vec<SweepRow>> {
    let grid = preset_grid(preset);
    match preset {
        Preset::Fig2 | Preset::Fig3 => sweep_grid(&grid, all_schemes),
        Preset::Fig4 => sweep_grid(&grid, optimized_cpc),
        Preset::Fig5 => sweep_grid(&grid, pinned_cooperation),
    }
}

/// All schemes over every `r` in `rs` and `K` in `ks` with `r <= K`.
pub fn run_custom(rs: &[u64], ks: &[u64]) -> Result<Vec<SweepRow>> {
    let grid: Vec<(u64, u64)> = ks
        .iter()
        .flat_map(|&k| rs.iter().filter(move |&&r| r <= k).map(move |&r| (r, k)))
        .collect();
    if grid.is_empty() {
        return Err(Error::param("empty sweep grid"));
    }
    sweep_grid(&grid, all_schemes)
}
