//! `cpc`: construct, verify and simulate coded shuffles, and tabulate
//! delivery-time analytics.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid input,
//! 3 internal invariant breach.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use cpc_core::analytics::{dof_cooperative_x, ndt_cpc, NdtPoint};
use cpc_core::bounds::{gap_ratio, lower_bound, LowerBoundModel};
use cpc_core::channel::{scheduled_dof, simulate_partition, DeliveryReport, SimOptions, DEFAULT_TOLERANCE};
use cpc_core::codec::{load_closed_form, scale_block_bits, SchemeLayout};
use cpc_core::dump::construct;
use cpc_core::optimizer::{
    brute_force_min, closed_form_min, cross_validate, single_cooperation_check, OptimumParams, RegimeCheck,
};
use cpc_core::rational::{int, parse, Rational};
use cpc_core::sweep::{all_schemes_at, run_custom, run_preset, Preset, SweepRow};
use cpc_core::verify::{end_to_end_verify, Fault, VerifyOptions};
use cpc_core::{validate_config, Error, ShuffleConfig, SystemParams};

#[derive(Parser)]
#[command(name = "cpc", version, about = "Coded parallel computing shuffle toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Instance {
    #[arg(long = "K")]
    k: u64,
    #[arg(long = "N")]
    n: u64,
    #[arg(long = "Q")]
    q: u64,
    #[arg(long = "r")]
    r: u64,
    /// Bits per intermediate value; defaults to the smallest size the
    /// segmentation accepts.
    #[arg(long = "B")]
    b: Option<u64>,
    #[arg(long = "Kr")]
    k_r: Option<u64>,
    #[arg(long = "t")]
    t: Option<u64>,
}

#[derive(Args, Clone)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Channel {
    /// Receiver SNR in dB; noiseless when absent.
    #[arg(long)]
    snr: Option<f64>,
    /// Relative interference residual tolerated after neutralization.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the scheme and dump partitions, segments and messages.
    Construct {
        #[command(flatten)]
        inst: Instance,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Include hex message payloads computed from seeded IVs.
        #[arg(long)]
        with_payloads: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full shuffle and check every reconstructed IV.
    Verify {
        #[command(flatten)]
        inst: Instance,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Deliver messages directly instead of over the simulated channel.
        #[arg(long)]
        ideal: bool,
        /// Inject a fault: `corrupt` or `drop`.
        #[arg(long)]
        fault: Option<String>,
        #[command(flatten)]
        chan: Channel,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deliver coded messages over the simulated channel and report DoF.
    Simulate {
        #[command(flatten)]
        inst: Instance,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only this partition (1-based).
        #[arg(long)]
        partition: Option<usize>,
        #[command(flatten)]
        chan: Channel,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// NDT of one configuration, or of every scheme at a (possibly
    /// fractional) load.
    Ndt {
        #[arg(long = "r")]
        r: String,
        #[arg(long = "K")]
        k: u64,
        #[arg(long = "Kr")]
        k_r: Option<u64>,
        #[arg(long = "t")]
        t: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Tabulate every scheme over a grid or a figure preset.
    Sweep {
        #[arg(long)]
        preset: Option<String>,
        /// Loads, e.g. `2`, `1..5` or `1,3,5`.
        #[arg(long = "r")]
        r: Option<String>,
        /// Node counts in the same syntax.
        #[arg(long = "K")]
        k: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize the NDT for (r, K), or cross-validate up to `--K-max`.
    Optimize {
        #[arg(long = "r")]
        r: Option<u64>,
        #[arg(long = "K")]
        k: Option<u64>,
        #[arg(long = "K-max")]
        k_max: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower bound and gap at (r, K), or the gap over `K <= --K-max`.
    Bounds {
        #[arg(long = "r")]
        r: Option<String>,
        #[arg(long = "K")]
        k: Option<u64>,
        #[arg(long = "K-max")]
        k_max: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write every figure preset as CSV into a directory.
    Figures {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Verification ran but some node failed.
#[derive(Debug)]
struct VerificationFailed;

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("verification failed")
    }
}

impl std::error::Error for VerificationFailed {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    Error::Parameter(msg.into()).into()
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn csv_rows(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["scheme", "K", "r", "K_r", "t", "value"])?;
    }
    Ok(w.into_inner()?)
}

fn rows_out(rows: &[SweepRow], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => csv_rows(rows),
        Format::Json => json(&rows),
    }
}

/// `a`, `a..b` (inclusive) or `a,b,c`.
fn parse_list(s: &str) -> Result<Vec<u64>> {
    let num = |x: &str| {
        x.trim()
            .parse::<u64>()
            .map_err(|_| bad(format!("`{x}` is not a non-negative integer")))
    };
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad(format!("empty range {s}")));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(num).collect()
}

fn parse_load(s: &str) -> Result<Rational> {
    parse(s).ok_or_else(|| bad(format!("`{s}` is not a rational load")))
}

fn params_of(inst: &Instance) -> Result<SystemParams> {
    Ok(SystemParams::new(inst.k, inst.n, inst.q, inst.r, inst.b.unwrap_or(8))?)
}

/// Validates the instance, filling in the smallest workable `B` when none
/// was given.
fn config_of(inst: &Instance) -> Result<ShuffleConfig> {
    let (k_r, t) = match (inst.k_r, inst.t) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(bad("--Kr and --t are required")),
    };
    let mut params = params_of(inst)?;
    params.integral_etas()?;
    if inst.b.is_none() {
        let probe = validate_config(params, k_r, t)?;
        params.b = scale_block_bits(&probe, 8);
    }
    Ok(validate_config(params, k_r, t)?)
}

#[derive(Serialize)]
struct ConfigNdt {
    point: NdtPoint,
    #[serde(serialize_with = "ser")]
    dof: Rational,
    #[serde(serialize_with = "ser")]
    per_partition_load: Rational,
}

fn ser<S: serde::Serializer>(x: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

#[derive(Serialize)]
struct SimulateReport {
    config: ShuffleConfig,
    seed: u64,
    #[serde(serialize_with = "ser")]
    expected_dof: Rational,
    all_exact: bool,
    partitions: Vec<DeliveryReport>,
}

#[derive(Serialize)]
struct OptimizeReport {
    brute_force: OptimumParams,
    closed_form: OptimumParams,
    agree: bool,
    regime: Option<RegimeCheck>,
}

#[derive(Serialize)]
struct BoundsReport {
    model: LowerBoundModel,
    #[serde(serialize_with = "ser")]
    achievable: Rational,
    #[serde(serialize_with = "ser")]
    gap: Rational,
    note: &'static str,
}

#[derive(Serialize)]
struct GapCell {
    r: u64,
    #[serde(rename = "K")]
    k: u64,
    #[serde(serialize_with = "ser")]
    bound: Rational,
    #[serde(serialize_with = "ser")]
    gap: Rational,
}

#[derive(Serialize)]
struct GapGrid {
    #[serde(rename = "K_max")]
    k_max: u64,
    max_gap: f64,
    all_below_three: bool,
    sandwich_holds: bool,
    cells: Vec<GapCell>,
}

const GAP_NOTE: &str = "gap is defined as 1 at r = K, where both quantities vanish";

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Construct {
            inst,
            seed,
            with_payloads,
            out,
        } => {
            let params = params_of(&inst)?;
            let dump = if params.r == params.k {
                construct(params, None, None, seed, with_payloads)?
            } else {
                let cfg = config_of(&inst)?;
                construct(cfg.params, Some(cfg.k_r), Some(cfg.t), seed, with_payloads)?
            };
            emit(out.as_deref(), &json(&dump)?)
        }
        Cmd::Verify {
            inst,
            seed,
            ideal,
            fault,
            chan,
            out,
        } => {
            let cfg = config_of(&inst)?;
            let fault = fault.map(|f| f.parse::<Fault>()).transpose()?;
            let opts = VerifyOptions {
                ideal,
                fault,
                sim: SimOptions {
                    snr_db: chan.snr,
                    tolerance: chan.tolerance,
                    ..SimOptions::default()
                },
            };
            let rep = end_to_end_verify(&cfg, seed, &opts)?;
            emit(out.as_deref(), &json(&rep)?)?;
            if !rep.ok {
                if let Some(w) = rep.failures.first() {
                    eprintln!(
                        "node {} failed to reconstruct v_({},{}): {}",
                        w.node, w.q, w.n, w.reason
                    );
                }
                return Err(VerificationFailed.into());
            }
            Ok(())
        }
        Cmd::Simulate {
            inst,
            seed,
            partition,
            chan,
            out,
        } => {
            let cfg = config_of(&inst)?;
            let layout = SchemeLayout::new(cfg)?;
            let expected_dof = scheduled_dof(&layout)?;
            let params = cfg.params;
            let placement = cpc_core::placement::build_placement(&params)?;
            let store = cpc_core::placement::map_phase(&placement, &params, seed)?;
            let segs = cpc_core::codec::segment_ivs(&layout, &placement, &store)?;
            let msgs = cpc_core::codec::encode_all(&layout, &segs)?;
            let ps: Vec<usize> = match partition {
                Some(p) if p == 0 || p > layout.partitions.len() => {
                    return Err(bad(format!("partition {p} outside 1..={}", layout.partitions.len())))
                }
                Some(p) => vec![p],
                None => (1..=layout.partitions.len()).collect(),
            };
            let sim = SimOptions {
                snr_db: chan.snr,
                tolerance: chan.tolerance,
                noise_seed: seed,
                ..SimOptions::default()
            };
            let reports: Vec<DeliveryReport> = ps
                .par_iter()
                .map(|&p| simulate_partition(&layout, p, &msgs, seed, &sim))
                .collect::<cpc_core::Result<_>>()?;
            let rep = SimulateReport {
                config: cfg,
                seed,
                expected_dof,
                all_exact: reports.iter().all(|r| r.payloads_exact),
                partitions: reports,
            };
            emit(out.as_deref(), &json(&rep)?)
        }
        Cmd::Ndt { r, k, k_r, t, output } => {
            let rr = parse_load(&r)?;
            match (k_r, t) {
                (Some(k_r), Some(t)) => {
                    let ri = cpc_core::rational::as_u64(&rr)
                        .ok_or_else(|| bad("a fixed configuration needs an integer r"))?;
                    let point = ndt_cpc(ri, t, k, k_r)?;
                    match output.format {
                        Format::Csv => {
                            let row = SweepRow {
                                scheme: point.scheme.label(),
                                k,
                                r: int(ri),
                                k_r: Some(k_r),
                                t: Some(t),
                                value: cpc_core::rational::to_f64(&point.value),
                                exact: point.value.clone(),
                            };
                            emit(output.out.as_deref(), &csv_rows(&[row])?)
                        }
                        Format::Json => {
                            if ri == k {
                                return emit(output.out.as_deref(), &json(&point)?);
                            }
                            let s = ri + 1 - t;
                            let rep = ConfigNdt {
                                dof: dof_cooperative_x(s, t, k - k_r, k_r)?,
                                per_partition_load: load_closed_form(k, ri, k_r),
                                point,
                            };
                            emit(output.out.as_deref(), &json(&rep)?)
                        }
                    }
                }
                (None, None) => emit(
                    output.out.as_deref(),
                    &rows_out(&all_schemes_at(&rr, k)?, output.format)?,
                ),
                _ => Err(bad("--Kr and --t go together")),
            }
        }
        Cmd::Sweep {
            preset,
            r,
            k,
            format,
            out,
        } => {
            let rows = match (preset, r, k) {
                (Some(p), None, None) => run_preset(p.parse::<Preset>()?)?,
                (None, Some(r), Some(k)) => run_custom(&parse_list(&r)?, &parse_list(&k)?)?,
                _ => return Err(bad("give either --preset or both --r and --K")),
            };
            emit(out.as_deref(), &rows_out(&rows, format)?)
        }
        Cmd::Optimize { r, k, k_max, out } => match (r, k, k_max) {
            (Some(r), Some(k), None) => {
                let brute = brute_force_min(r, k)?;
                let closed = closed_form_min(r, k)?;
                let rep = OptimizeReport {
                    agree: brute.best_value == closed.best_value,
                    regime: (r < k).then(|| single_cooperation_check(r, k)).transpose()?,
                    brute_force: brute,
                    closed_form: closed,
                };
                emit(out.as_deref(), &json(&rep)?)?;
                if !rep.agree {
                    return Err(Error::Discrepancy {
                        r,
                        k,
                        detail: "closed form disagrees with brute force".into(),
                    }
                    .into());
                }
                Ok(())
            }
            (None, None, Some(k_max)) => {
                let rep = cross_validate(k_max)?;
                emit(out.as_deref(), &json(&rep)?)?;
                rep.ensure_agreement()?;
                Ok(())
            }
            _ => Err(bad("give either --r and --K, or --K-max")),
        },
        Cmd::Bounds { r, k, k_max, out } => match (r, k, k_max) {
            (Some(r), Some(k), None) => {
                let rr = parse_load(&r)?;
                let model = lower_bound(&rr, k)?;
                let gap = gap_ratio(&rr, k)?;
                let rep = BoundsReport {
                    achievable: &gap * &model.bound,
                    gap,
                    model,
                    note: GAP_NOTE,
                };
                emit(out.as_deref(), &json(&rep)?)
            }
            (None, None, Some(k_max)) => {
                if !(2..=40).contains(&k_max) {
                    return Err(bad("--K-max must lie in 2..=40"));
                }
                let grid: Vec<(u64, u64)> = (2..=k_max).flat_map(|k| (1..=k).map(move |r| (r, k))).collect();
                let cells: Vec<(GapCell, bool)> = grid
                    .par_iter()
                    .map(|&(r, k)| {
                        let bound = lower_bound(&int(r), k)?.bound;
                        let opt = brute_force_min(r, k)?.best_value;
                        let gap = gap_ratio(&int(r), k)?;
                        Ok((
                            GapCell {
                                r,
                                k,
                                bound: bound.clone(),
                                gap,
                            },
                            bound <= opt,
                        ))
                    })
                    .collect::<cpc_core::Result<_>>()?;
                let three = int(3);
                let rep = GapGrid {
                    k_max,
                    max_gap: cells
                        .iter()
                        .map(|(c, _)| cpc_core::rational::to_f64(&c.gap))
                        .fold(0.0, f64::max),
                    all_below_three: cells.iter().all(|(c, _)| c.gap < three),
                    sandwich_holds: cells.iter().all(|(_, s)| *s),
                    cells: cells.into_iter().map(|(c, _)| c).collect(),
                };
                emit(out.as_deref(), &json(&rep)?)?;
                if !(rep.all_below_three && rep.sandwich_holds) {
                    return Err(Error::Internal("gap grid violates the sandwich or the factor-3 gap".into()).into());
                }
                Ok(())
            }
            _ => Err(bad("give either --r and --K, or --K-max")),
        },
        Cmd::Figures { out } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, preset) in [
                ("fig2", Preset::Fig2),
                ("fig3", Preset::Fig3),
                ("fig4", Preset::Fig4),
                ("fig5", Preset::Fig5),
            ] {
                let rows = run_preset(preset)?;
                let path = out.join(format!("{name}.csv"));
                emit(Some(&path), &csv_rows(&rows)?)?;
                eprintln!("wrote {} rows to {}", rows.len(), path.display());
            }
            Ok(())
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<VerificationFailed>().is_some() {
        return 1;
    }
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_invalid_input() => 2,
        Some(_) => 3,
        None => 3,
    }
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var("CPC_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: CPC_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<VerificationFailed>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
