//! Monte-Carlo experiment plans: parameter sweeps with baselines,
//! feasibility probabilities, convergence traces and multistart gaps.
//!
//! Every realization is an independent work item. Items run in parallel and
//! are collected in `(grid value, realization)` order, so the emitted CSV
//! bytes depend only on the plan, the settings and the master seed.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{NetworkConfig, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{generate_channels, ChannelGains, ChannelMode, ChannelRealization};
use crate::objective::SpectrumPoint;
use crate::solver::{
    default_init, feasible_point, multistart_inits, multistart_spectrum, solve_spectrum, Scheme,
    Solution, SpectrumSolution,
};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PlanKind {
    SweepPmax,
    SweepRtMin,
    FeasibilityVsPmax,
    FeasibilityVsRtMin,
    Convergence,
    MultistartCompare,
}

impl PlanKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SweepPmax => "sweep_pmax",
            Self::SweepRtMin => "sweep_rt_min",
            Self::FeasibilityVsPmax => "feasibility_pmax",
            Self::FeasibilityVsRtMin => "feasibility_rt_min",
            Self::Convergence => "convergence",
            Self::MultistartCompare => "multistart",
        }
    }

    /// Name of the swept quantity.
    pub fn sweep_param(self) -> &'static str {
        match self {
            Self::SweepPmax | Self::FeasibilityVsPmax | Self::Convergence => "p_max",
            Self::SweepRtMin | Self::FeasibilityVsRtMin => "rt_min",
            Self::MultistartCompare => "snr",
        }
    }

    pub fn is_feasibility(self) -> bool {
        matches!(self, Self::FeasibilityVsPmax | Self::FeasibilityVsRtMin)
    }

    /// Settings at one grid value. SNR is `p1_max / sigma2`, applied by
    /// scaling all four noise variances.
    pub fn apply(self, base: &NetworkConfig, value: f64) -> Result<NetworkConfig> {
        let mut cfg = base.clone();
        match self {
            Self::SweepPmax | Self::FeasibilityVsPmax | Self::Convergence => {
                cfg.set_power_caps(value)
            }
            Self::SweepRtMin | Self::FeasibilityVsRtMin => cfg.rt_min = value,
            Self::MultistartCompare => {
                if !(value > 0.0) {
                    return Err(Error::Config(format!("snr must be > 0, got {value}")));
                }
                cfg.set_noise(cfg.p1_max / value);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Baseline {
    Proposed,
    NoEh,
    NoRelayPrecoding,
    /// Best of `multistart_k` proposed-scheme starts.
    Multistart,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::NoEh => "no_eh",
            Self::NoRelayPrecoding => "no_relay_precoding",
            Self::Multistart => "multistart",
        }
    }

    fn scheme(self) -> Scheme {
        match self {
            Self::Proposed | Self::Multistart => Scheme::Proposed,
            Self::NoEh => Scheme::NoEnergyHarvesting,
            Self::NoRelayPrecoding => Scheme::NoRelayPrecoding,
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Self::Proposed),
            "no_eh" => Ok(Self::NoEh),
            "no_relay_precoding" => Ok(Self::NoRelayPrecoding),
            "multistart" => Ok(Self::Multistart),
            _ => Err(Error::Config(format!("unknown baseline {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub kind: PlanKind,
    pub grid: Vec<f64>,
    /// Channel realizations per grid value; number of starts for convergence plans.
    pub n_realizations: usize,
    pub master_seed: u64,
    pub baselines: Vec<Baseline>,
    pub channel_mode: ChannelMode,
    /// Starts per realization for [`Baseline::Multistart`].
    pub multistart_k: usize,
}

impl ExperimentPlan {
    /// Plan with the usual baselines for `kind` and 100 realizations.
    pub fn new(kind: PlanKind, grid: Vec<f64>) -> Self {
        let (baselines, n_realizations) = match kind {
            PlanKind::SweepPmax | PlanKind::SweepRtMin => (
                vec![
                    Baseline::Proposed,
                    Baseline::NoEh,
                    Baseline::NoRelayPrecoding,
                ],
                100,
            ),
            PlanKind::FeasibilityVsPmax | PlanKind::FeasibilityVsRtMin => {
                (vec![Baseline::Proposed], 100)
            }
            PlanKind::Convergence => (vec![Baseline::Proposed], 10),
            PlanKind::MultistartCompare => (vec![Baseline::Proposed, Baseline::Multistart], 100),
        };
        Self {
            kind,
            grid,
            n_realizations,
            master_seed: 0,
            baselines,
            channel_mode: ChannelMode::SharedLeftUnitary,
            multistart_k: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("plan grid is empty".into()));
        }
        if let Some(v) = self.grid.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("plan grid value {v} is not finite")));
        }
        if self.n_realizations == 0 {
            return Err(Error::Config("n_realizations must be >= 1".into()));
        }
        if self.baselines.is_empty() {
            return Err(Error::Config("plan has no baselines".into()));
        }
        if self.baselines.contains(&Baseline::Multistart) {
            if self.kind.is_feasibility() || self.kind == PlanKind::Convergence {
                return Err(Error::Config(format!(
                    "baseline multistart is not available for {} plans",
                    self.kind
                )));
            }
            if self.multistart_k == 0 {
                return Err(Error::Config("multistart_k must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Channel seeds, one per realization, drawn from the master seed.
    pub fn realization_seeds(&self) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        (0..self.n_realizations).map(|_| rng.next_u64()).collect()
    }
}

/// Outcome of one baseline on one realization at one grid value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub plan_kind: PlanKind,
    pub sweep_value: f64,
    /// Channel seed; the start index for convergence plans.
    pub seed: u64,
    pub baseline: Baseline,
    pub feasible: bool,
    /// bits/Hz/J; `None` when infeasible or when only feasibility was checked.
    pub ee: Option<f64>,
    pub rate1: Option<f64>,
    pub rate2: Option<f64>,
    pub alpha: Option<f64>,
    pub outer_iters: usize,
    pub dinkelbach_iters_total: usize,
}

impl ExperimentRecord {
    fn infeasible(kind: PlanKind, value: f64, seed: u64, baseline: Baseline) -> Self {
        Self {
            plan_kind: kind,
            sweep_value: value,
            seed,
            baseline,
            feasible: false,
            ee: None,
            rate1: None,
            rate2: None,
            alpha: None,
            outer_iters: 0,
            dinkelbach_iters_total: 0,
        }
    }

    fn solved(
        kind: PlanKind,
        value: f64,
        seed: u64,
        baseline: Baseline,
        sol: &SpectrumSolution,
    ) -> Self {
        Self {
            plan_kind: kind,
            sweep_value: value,
            seed,
            baseline,
            feasible: true,
            ee: Some(sol.ee),
            rate1: Some(sol.rates.0),
            rate2: Some(sol.rates.1),
            alpha: Some(sol.point.alpha),
            outer_iters: sol.outer_iterations(),
            dinkelbach_iters_total: sol.trace.dinkelbach_total(),
        }
    }
}

/// Per grid value and baseline summary. EE statistics use feasible runs only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub sweep_value: f64,
    pub baseline: Baseline,
    pub n_feasible: usize,
    pub n_total: usize,
    pub mean_ee: Option<f64>,
    /// Half-width of the normal 95% interval of the mean (0 for one sample).
    pub ci95_ee: Option<f64>,
    pub mean_outer_iters: Option<f64>,
}

impl Aggregate {
    pub fn feasible_fraction(&self) -> f64 {
        self.n_feasible as f64 / self.n_total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityRow {
    pub sweep_value: f64,
    pub baseline: Baseline,
    pub n_feasible: usize,
    pub n_total: usize,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Fewer than half of the realizations admit a feasible point.
    pub ergodically_infeasible: bool,
}

/// EE trace of one start in a convergence plan; `ee[0]` is the value at the
/// phase-I point, then one entry per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub sweep_value: f64,
    pub start: usize,
    pub ee: Vec<f64>,
    /// Splitting factor after each outer iteration (`None` at the start).
    pub alpha: Vec<Option<f64>>,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.ee
            .windows(2)
            .all(|w| w[1] >= w[0] - slack * w[0].abs().max(1.0))
    }

    pub fn final_ee(&self) -> Option<f64> {
        self.ee.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanOutput {
    pub plan: ExperimentPlan,
    pub records: Vec<ExperimentRecord>,
    pub aggregates: Vec<Aggregate>,
    /// Filled for feasibility plans.
    pub feasibility: Vec<FeasibilityRow>,
    /// Filled for convergence plans.
    pub traces: Vec<ConvergenceTrace>,
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// No-harvesting baseline from the default start.
pub fn run_baseline_no_eh(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
) -> Result<Solution> {
    let gains = ch.gains();
    let sol = solve_spectrum(
        Scheme::NoEnergyHarvesting,
        &gains,
        cfg,
        opts,
        &default_init(&gains, cfg),
    )?;
    Ok(Solution::from_spectrum(sol, ch))
}

/// Fixed-relay baseline from the default start.
pub fn run_baseline_no_relay_precoding(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
) -> Result<Solution> {
    let gains = ch.gains();
    let sol = solve_spectrum(
        Scheme::NoRelayPrecoding,
        &gains,
        cfg,
        opts,
        &default_init(&gains, cfg),
    )?;
    Ok(Solution::from_spectrum(sol, ch))
}

fn solve_or_infeasible(
    scheme: Scheme,
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    init: &SpectrumPoint,
) -> Result<Option<SpectrumSolution>> {
    match solve_spectrum(scheme, gains, cfg, opts, init) {
        Ok(sol) => Ok(Some(sol)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn better(a: Option<SpectrumSolution>, b: Option<SpectrumSolution>) -> Option<SpectrumSolution> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.ee > a.ee { b } else { a }),
        (a, b) => a.or(b),
    }
}

/// Solves the requested baselines on one realization.
///
/// The schemes are nested relaxations: the fixed-relay design is a
/// restriction of the proposed one, which in turn is a restriction of the
/// no-harvesting design (a larger splitting factor only raises TR1's rate).
/// The local solver is therefore restarted from the restricted scheme's
/// solution whenever that one is better, so the per-realization ordering
/// holds whenever both are feasible.
pub fn solve_baselines(
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    baselines: &[Baseline],
    multistart_k: usize,
) -> Result<Vec<(Baseline, Option<SpectrumSolution>)>> {
    let init = default_init(gains, cfg);
    let wants = |b: Baseline| baselines.contains(&b);
    let needs_proposed =
        wants(Baseline::Proposed) || wants(Baseline::NoEh) || wants(Baseline::Multistart);

    let nrp = if wants(Baseline::NoRelayPrecoding) {
        solve_or_infeasible(Scheme::NoRelayPrecoding, gains, cfg, opts, &init)?
    } else {
        None
    };
    let mut proposed = if needs_proposed {
        solve_or_infeasible(Scheme::Proposed, gains, cfg, opts, &init)?
    } else {
        None
    };
    if let Some(r) = &nrp {
        if proposed.as_ref().is_none_or(|p| p.ee < r.ee) {
            let warm = solve_or_infeasible(Scheme::Proposed, gains, cfg, opts, &r.point)?;
            proposed = better(proposed, warm);
        }
    }
    let no_eh = if wants(Baseline::NoEh) {
        let cold = solve_or_infeasible(Scheme::NoEnergyHarvesting, gains, cfg, opts, &init)?;
        match &proposed {
            Some(p) if cold.as_ref().is_none_or(|c| c.ee < p.ee) => {
                let warm =
                    solve_or_infeasible(Scheme::NoEnergyHarvesting, gains, cfg, opts, &p.point)?;
                better(cold, warm)
            }
            _ => cold,
        }
    } else {
        None
    };
    let multi = if wants(Baseline::Multistart) {
        let best = match multistart_spectrum(Scheme::Proposed, gains, cfg, opts, multistart_k) {
            Ok(sol) => Some(sol),
            Err(Error::Infeasible(_)) => None,
            Err(e) => return Err(e),
        };
        better(best, proposed.clone())
    } else {
        None
    };

    Ok(baselines
        .iter()
        .map(|&b| {
            let sol = match b {
                Baseline::Proposed => proposed.clone(),
                Baseline::NoEh => no_eh.clone(),
                Baseline::NoRelayPrecoding => nrp.clone(),
                Baseline::Multistart => multi.clone(),
            };
            (b, sol)
        })
        .collect())
}

/// Whether phase-I finds a feasible point for each baseline's scheme.
fn feasibility_flags(
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    baselines: &[Baseline],
) -> Result<Vec<(Baseline, bool)>> {
    let init = default_init(gains, cfg);
    baselines
        .iter()
        .map(
            |&b| match feasible_point(b.scheme(), gains, cfg, opts, &init) {
                Ok(_) => Ok((b, true)),
                Err(Error::Infeasible(_)) => Ok((b, false)),
                Err(e) => Err(e),
            },
        )
        .collect()
}

fn channel(plan: &ExperimentPlan, cfg: &NetworkConfig, seed: u64) -> Result<ChannelGains> {
    Ok(generate_channels(cfg, seed, plan.channel_mode)?.gains())
}

fn grid_configs(plan: &ExperimentPlan, base: &NetworkConfig) -> Result<Vec<NetworkConfig>> {
    plan.grid
        .iter()
        .map(|&v| plan.kind.apply(base, v))
        .collect()
}

/// Feasibility fraction per grid value and baseline, with Wilson intervals.
pub fn feasibility_probability(
    plan: &ExperimentPlan,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
) -> Result<Vec<FeasibilityRow>> {
    if !plan.kind.is_feasibility() {
        return Err(Error::Config(format!(
            "{} is not a feasibility plan",
            plan.kind
        )));
    }
    let records = run_records(plan, cfg, opts)?;
    Ok(feasibility_rows(plan, &records))
}

fn feasibility_rows(plan: &ExperimentPlan, records: &[ExperimentRecord]) -> Vec<FeasibilityRow> {
    let mut rows = Vec::new();
    for &value in &plan.grid {
        for &b in &plan.baselines {
            let subset = records
                .iter()
                .filter(|r| r.sweep_value == value && r.baseline == b);
            let (n_total, n_feasible) =
                subset.fold((0, 0), |(n, k), r| (n + 1, k + usize::from(r.feasible)));
            let (lo, hi) = wilson_interval(n_feasible, n_total);
            let fraction = n_feasible as f64 / n_total.max(1) as f64;
            rows.push(FeasibilityRow {
                sweep_value: value,
                baseline: b,
                n_feasible,
                n_total,
                fraction,
                wilson_low: lo,
                wilson_high: hi,
                ergodically_infeasible: fraction < 0.5,
            });
        }
    }
    rows
}

/// Consecutive grid pairs (per baseline) where the fraction moves against
/// `nondecreasing` by more than the earlier point's Wilson interval allows.
pub fn trend_violations(rows: &[FeasibilityRow], nondecreasing: bool) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut baselines: Vec<Baseline> = Vec::new();
    for r in rows {
        if !baselines.contains(&r.baseline) {
            baselines.push(r.baseline);
        }
    }
    for b in baselines {
        let mut series: Vec<&FeasibilityRow> = rows.iter().filter(|r| r.baseline == b).collect();
        series.sort_by(|x, y| x.sweep_value.total_cmp(&y.sweep_value));
        for w in series.windows(2) {
            let (a, c) = (w[0], w[1]);
            let wrong_way = if nondecreasing {
                c.fraction < a.wilson_low
            } else {
                c.fraction > a.wilson_high
            };
            if wrong_way {
                out.push((a.sweep_value, c.sweep_value));
            }
        }
    }
    out
}

fn run_records(
    plan: &ExperimentPlan,
    base: &NetworkConfig,
    opts: &SolverOptions,
) -> Result<Vec<ExperimentRecord>> {
    plan.validate()?;
    let configs = grid_configs(plan, base)?;
    let seeds = plan.realization_seeds();
    let items: Vec<(usize, u64)> = (0..plan.grid.len())
        .flat_map(|g| seeds.iter().map(move |&s| (g, s)))
        .collect();
    let kind = plan.kind;
    let per_item: Vec<Result<Vec<ExperimentRecord>>> = items
        .par_iter()
        .map(|&(g, seed)| {
            let cfg = &configs[g];
            let value = plan.grid[g];
            let gains = channel(plan, cfg, seed)?;
            if kind.is_feasibility() {
                let flags = feasibility_flags(&gains, cfg, opts, &plan.baselines)?;
                Ok(flags
                    .into_iter()
                    .map(|(b, ok)| ExperimentRecord {
                        feasible: ok,
                        ..ExperimentRecord::infeasible(kind, value, seed, b)
                    })
                    .collect())
            } else {
                let sols = solve_baselines(&gains, cfg, opts, &plan.baselines, plan.multistart_k)?;
                Ok(sols
                    .into_iter()
                    .map(|(b, sol)| match sol {
                        Some(s) => ExperimentRecord::solved(kind, value, seed, b, &s),
                        None => ExperimentRecord::infeasible(kind, value, seed, b),
                    })
                    .collect())
            }
        })
        .collect();
    let mut records = Vec::with_capacity(items.len() * plan.baselines.len());
    for r in per_item {
        records.extend(r?);
    }
    Ok(records)
}

/// Aggregates per grid value and baseline, in grid then baseline order.
pub fn aggregate(plan: &ExperimentPlan, records: &[ExperimentRecord]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &value in &plan.grid {
        for &b in &plan.baselines {
            let subset: Vec<&ExperimentRecord> = records
                .iter()
                .filter(|r| r.sweep_value == value && r.baseline == b)
                .collect();
            let ees: Vec<f64> = subset.iter().filter_map(|r| r.ee).collect();
            let n = ees.len();
            let (mean_ee, ci95_ee) = if n == 0 {
                (None, None)
            } else {
                let mean = ees.iter().sum::<f64>() / n as f64;
                let ci = if n > 1 {
                    let var = ees.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    Z95 * (var / n as f64).sqrt()
                } else {
                    0.0
                };
                (Some(mean), Some(ci))
            };
            let iters: Vec<f64> = subset
                .iter()
                .filter(|r| r.ee.is_some())
                .map(|r| r.outer_iters as f64)
                .collect();
            out.push(Aggregate {
                sweep_value: value,
                baseline: b,
                n_feasible: subset.iter().filter(|r| r.feasible).count(),
                n_total: subset.len(),
                mean_ee,
                ci95_ee,
                mean_outer_iters: (!iters.is_empty())
                    .then(|| iters.iter().sum::<f64>() / iters.len() as f64),
            });
        }
    }
    out
}

fn run_convergence(
    plan: &ExperimentPlan,
    base: &NetworkConfig,
    opts: &SolverOptions,
) -> Result<(Vec<ExperimentRecord>, Vec<ConvergenceTrace>)> {
    plan.validate()?;
    let configs = grid_configs(plan, base)?;
    let scheme = plan.baselines[0].scheme();
    let items: Vec<(usize, usize)> = (0..plan.grid.len())
        .flat_map(|g| (0..plan.n_realizations).map(move |i| (g, i)))
        .collect();
    let results: Vec<Result<(ExperimentRecord, Option<ConvergenceTrace>)>> = items
        .par_iter()
        .map(|&(g, start)| {
            let cfg = &configs[g];
            let value = plan.grid[g];
            let gains = channel(plan, cfg, plan.master_seed)?;
            let init =
                multistart_inits(&gains, cfg, plan.master_seed, start + 1).swap_remove(start);
            let baseline = plan.baselines[0];
            match solve_or_infeasible(scheme, &gains, cfg, opts, &init)? {
                Some(sol) => {
                    let ee = sol.trace.ee_sequence();
                    let mut alpha = vec![None];
                    alpha.extend(sol.trace.records.iter().map(|r| Some(r.alpha)));
                    let trace = ConvergenceTrace {
                        sweep_value: value,
                        start,
                        ee,
                        alpha,
                        converged: sol.converged,
                    };
                    Ok((
                        ExperimentRecord::solved(plan.kind, value, start as u64, baseline, &sol),
                        Some(trace),
                    ))
                }
                None => Ok((
                    ExperimentRecord::infeasible(plan.kind, value, start as u64, baseline),
                    None,
                )),
            }
        })
        .collect();
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for r in results {
        let (rec, trace) = r?;
        records.push(rec);
        traces.extend(trace);
    }
    Ok((records, traces))
}

/// Runs a plan. Output is a pure function of `(plan, cfg, opts)`.
pub fn run_plan(
    plan: &ExperimentPlan,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
) -> Result<PlanOutput> {
    cfg.validate()?;
    opts.validate()?;
    let (records, traces) = if plan.kind == PlanKind::Convergence {
        run_convergence(plan, cfg, opts)?
    } else {
        (run_records(plan, cfg, opts)?, Vec::new())
    };
    let feasibility = if plan.kind.is_feasibility() {
        feasibility_rows(plan, &records)
    } else {
        Vec::new()
    };
    Ok(PlanOutput {
        plan: plan.clone(),
        aggregates: aggregate(plan, &records),
        records,
        feasibility,
        traces,
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

impl PlanOutput {
    pub fn write_records_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record([
            "plan_kind",
            "sweep_param",
            "sweep_value",
            "seed",
            "baseline",
            "feasible",
            "ee_bits_per_hz_joule",
            "rate1",
            "rate2",
            "alpha",
            "outer_iters",
            "dinkelbach_iters_total",
        ])?;
        for r in &self.records {
            w.write_record([
                r.plan_kind.name().to_string(),
                r.plan_kind.sweep_param().to_string(),
                num(r.sweep_value),
                r.seed.to_string(),
                r.baseline.name().to_string(),
                r.feasible.to_string(),
                opt(r.ee),
                opt(r.rate1),
                opt(r.rate2),
                opt(r.alpha),
                r.outer_iters.to_string(),
                r.dinkelbach_iters_total.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_aggregates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record([
            "sweep_value",
            "baseline",
            "n_feasible",
            "n_total",
            "mean_ee",
            "ci95_ee",
        ])?;
        for a in &self.aggregates {
            w.write_record([
                num(a.sweep_value),
                a.baseline.name().to_string(),
                a.n_feasible.to_string(),
                a.n_total.to_string(),
                opt(a.mean_ee),
                opt(a.ci95_ee),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_feasibility_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record([
            "sweep_value",
            "baseline",
            "n_feasible",
            "n_total",
            "fraction",
            "wilson_low",
            "wilson_high",
            "ergodically_infeasible",
        ])?;
        for r in &self.feasibility {
            w.write_record([
                num(r.sweep_value),
                r.baseline.name().to_string(),
                r.n_feasible.to_string(),
                r.n_total.to_string(),
                num(r.fraction),
                num(r.wilson_low),
                num(r.wilson_high),
                r.ergodically_infeasible.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_traces_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["sweep_value", "start", "iteration", "ee", "alpha"])?;
        for t in &self.traces {
            for (k, (ee, alpha)) in t.ee.iter().zip(&t.alpha).enumerate() {
                w.write_record([
                    num(t.sweep_value),
                    t.start.to_string(),
                    k.to_string(),
                    num(*ee),
                    opt(*alpha),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `records.csv`, `aggregates.csv` and, when present,
    /// `feasibility.csv` and `traces.csv` into `dir`. Returns the paths written.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        let mut emit = |name: &str, f: &dyn Fn(File) -> Result<()>| -> Result<()> {
            let path = dir.join(name);
            let file = File::create(&path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            f(file)?;
            written.push(path);
            Ok(())
        };
        emit("records.csv", &|f| self.write_records_csv(f))?;
        emit("aggregates.csv", &|f| self.write_aggregates_csv(f))?;
        if !self.feasibility.is_empty() {
            emit("feasibility.csv", &|f| self.write_feasibility_csv(f))?;
        }
        if !self.traces.is_empty() {
            emit("traces.csv", &|f| self.write_traces_csv(f))?;
        }
        Ok(written)
    }
}
