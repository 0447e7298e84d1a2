//! Block-coordinate ascent: relay eigenvalues, then transceiver
//! eigenvalues, then a joint local step over everything, then the
//! closed-form power-splitting factor, until EE stalls.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::config::{NetworkConfig, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{ChannelGains, ChannelRealization};
use crate::objective::{self, ConstraintReport, PrecoderSet, SpectrumPoint, ALPHA_MIN};

use super::blocks::{BlockProblem, Numerator, Var};
use super::dinkelbach::{self, FractionalProgram};
use super::feasibility;
use super::joint::JointProblem;
use super::{assemble_precoders, optimal_alpha, unclamped_alpha};

/// Which variant of the problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Scheme {
    /// Full design with harvesting at TR1.
    Proposed,
    /// TR1 is externally powered: all received power goes to decoding.
    NoEnergyHarvesting,
    /// Relay eigenvalues fixed at `pr_max / nr`.
    NoRelayPrecoding,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::NoEnergyHarvesting => "no_eh",
            Self::NoRelayPrecoding => "no_relay_precoding",
        }
    }

    pub(crate) fn flags(self) -> Flags {
        match self {
            Self::Proposed => Flags {
                relay_free: true,
                alpha_free: true,
                eh: true,
            },
            Self::NoEnergyHarvesting => Flags {
                relay_free: true,
                alpha_free: false,
                eh: false,
            },
            Self::NoRelayPrecoding => Flags {
                relay_free: false,
                alpha_free: true,
                eh: true,
            },
        }
    }

    /// Applies the scheme's fixed quantities to a start point.
    pub fn prepare(self, cfg: &NetworkConfig, pt: &SpectrumPoint) -> SpectrumPoint {
        let mut p = pt.clone();
        p.alpha = p.alpha.clamp(ALPHA_MIN, 1.0 - ALPHA_MIN);
        match self {
            Self::Proposed => {}
            Self::NoEnergyHarvesting => p.alpha = 1.0 - ALPHA_MIN,
            Self::NoRelayPrecoding => p.lambda_qr = vec![cfg.pr_max / cfg.nr as f64; cfg.nr],
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Flags {
    pub relay_free: bool,
    pub alpha_free: bool,
    pub eh: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub ee: f64,
    pub alpha: f64,
    /// Slacks in the order p1, p2, relay, rate1, rate2, eh.
    pub slacks: [f64; 6],
    pub dinkelbach_relay: usize,
    pub dinkelbach_transceiver: usize,
    /// Final ratio of the relay and transceiver subproblems (NaN when skipped).
    pub mu_relay: f64,
    pub mu_transceiver: f64,
    pub mu_history_relay: Vec<f64>,
    pub mu_history_transceiver: Vec<f64>,
    /// Dinkelbach iterations of the joint refinement step.
    pub dinkelbach_joint: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverTrace {
    /// EE of the starting point, before any step.
    pub initial_ee: f64,
    pub records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn ee_sequence(&self) -> Vec<f64> {
        std::iter::once(self.initial_ee)
            .chain(self.records.iter().map(|r| r.ee))
            .collect()
    }

    pub fn dinkelbach_total(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.dinkelbach_relay + r.dinkelbach_transceiver + r.dinkelbach_joint)
            .sum()
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.ee_sequence().windows(2).all(|w| w[1] >= w[0] - slack)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "ee",
            "alpha",
            "mu1",
            "mu2",
            "slack_p1",
            "slack_p2",
            "slack_pr",
            "slack_rate1",
            "slack_rate2",
            "slack_eh",
            "dinkelbach_iters1",
            "dinkelbach_iters2",
        ])?;
        for r in &self.records {
            let mut row = vec![
                r.iteration.to_string(),
                r.ee.to_string(),
                r.alpha.to_string(),
                r.mu_relay.to_string(),
                r.mu_transceiver.to_string(),
            ];
            row.extend(r.slacks.iter().map(|s| s.to_string()));
            row.push(r.dinkelbach_relay.to_string());
            row.push(r.dinkelbach_transceiver.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file)
    }
}

/// Result of the scalar (eigenvalue-domain) solve.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSolution {
    pub scheme: Scheme,
    pub point: SpectrumPoint,
    pub ee: f64,
    pub rates: (f64, f64),
    pub report: ConstraintReport,
    pub trace: SolverTrace,
    pub converged: bool,
}

impl SpectrumSolution {
    pub fn outer_iterations(&self) -> usize {
        self.trace.records.len()
    }

    /// Whether the power-splitting factor sits strictly inside its clamp range.
    pub fn alpha_unclamped(&self, gains: &ChannelGains, cfg: &NetworkConfig) -> bool {
        match unclamped_alpha(
            &self.point.lambda_q1,
            &self.point.lambda_q2,
            &self.point.lambda_qr,
            gains,
            cfg,
        ) {
            Some(raw) => raw > ALPHA_MIN && raw < 1.0 - ALPHA_MIN,
            None => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub scheme: Scheme,
    pub point: SpectrumPoint,
    pub precoders: PrecoderSet,
    pub ee: f64,
    pub rates: (f64, f64),
    pub report: ConstraintReport,
    pub trace: SolverTrace,
    pub converged: bool,
}

impl Solution {
    pub fn from_spectrum(sol: SpectrumSolution, ch: &ChannelRealization) -> Self {
        let precoders = assemble_precoders(&sol.point, ch);
        Self {
            scheme: sol.scheme,
            point: sol.point,
            precoders,
            ee: sol.ee,
            rates: sol.rates,
            report: sol.report,
            trace: sol.trace,
            converged: sol.converged,
        }
    }

    pub fn outer_iterations(&self) -> usize {
        self.trace.records.len()
    }
}

/// Half-power uniform start with the splitting factor from the closed form
/// (0.5 when that form has no admissible value).
pub fn default_init(gains: &ChannelGains, cfg: &NetworkConfig) -> SpectrumPoint {
    let lambda_q1 = vec![cfg.p1_max / (2.0 * cfg.n1 as f64); cfg.n1];
    let lambda_q2 = vec![cfg.p2_max / (2.0 * cfg.n2 as f64); cfg.n2];
    let mut pt = SpectrumPoint::new(0.5, lambda_q1, lambda_q2, vec![1.0; cfg.nr]);
    scale_relay_to(&mut pt, gains, cfg, 0.5 * cfg.pr_max);
    pt.alpha =
        optimal_alpha(&pt.lambda_q1, &pt.lambda_q2, &pt.lambda_qr, gains, cfg).unwrap_or(0.5);
    pt
}

/// Random start: random power fractions and random directions within each
/// node's budget.
pub fn random_init<R: Rng + ?Sized>(
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    rng: &mut R,
) -> SpectrumPoint {
    let mut split = |n: usize, budget: f64| -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        let level = budget * rng.random_range(0.05..0.95);
        w.into_iter().map(|v| level * v / total).collect()
    };
    let lambda_q1 = split(cfg.n1, cfg.p1_max);
    let lambda_q2 = split(cfg.n2, cfg.p2_max);
    let relay_shape = split(cfg.nr, 1.0);
    let mut pt = SpectrumPoint::new(0.5, lambda_q1, lambda_q2, relay_shape);
    let target = cfg.pr_max * rng.random_range(0.05..0.95);
    scale_relay_to(&mut pt, gains, cfg, target);
    pt.alpha =
        optimal_alpha(&pt.lambda_q1, &pt.lambda_q2, &pt.lambda_qr, gains, cfg).unwrap_or(0.5);
    pt
}

fn scale_relay_to(pt: &mut SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig, target: f64) {
    let current = objective::relay_power(pt, gains, cfg);
    if current > 0.0 {
        let k = target / current;
        pt.lambda_qr.iter_mut().for_each(|r| *r *= k);
    }
}

fn surrogate_ee(pt: &SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig) -> f64 {
    let mut block = BlockProblem::new(gains, cfg, pt.clone(), Vec::new(), false);
    block.numerator = Numerator::HighSnr;
    let x = nalgebra::DVector::zeros(0);
    block.ratio(&x)
}

pub(crate) struct Engine<'a> {
    pub gains: &'a ChannelGains,
    pub cfg: &'a NetworkConfig,
    pub opts: &'a SolverOptions,
    pub flags: Flags,
    pub numerator: Numerator,
    /// Adds a joint local step over all free variables to every outer iteration.
    pub refine: bool,
}

struct StepOutcome {
    iterations: usize,
    ratio: f64,
    mu_history: Vec<f64>,
    kkt: f64,
}

impl StepOutcome {
    fn skipped() -> Self {
        Self {
            iterations: 0,
            ratio: f64::NAN,
            mu_history: Vec::new(),
            kkt: 0.0,
        }
    }
}

impl Engine<'_> {
    fn value(&self, pt: &SpectrumPoint) -> f64 {
        match self.numerator {
            Numerator::Exact => objective::energy_efficiency(pt, self.gains, self.cfg),
            Numerator::HighSnr => surrogate_ee(pt, self.gains, self.cfg),
        }
    }

    fn feasible(&self, pt: &SpectrumPoint) -> bool {
        feasibility::is_feasible(pt, self.gains, self.cfg, &self.flags)
    }

    /// Solves one block and moves `pt` when the result is feasible and no worse.
    fn block_step(
        &self,
        pt: &mut SpectrumPoint,
        value: &mut f64,
        vars: Vec<Var>,
    ) -> Result<StepOutcome> {
        if vars.is_empty() {
            return Ok(StepOutcome::skipped());
        }
        let mut block = BlockProblem::new(self.gains, self.cfg, pt.clone(), vars, self.flags.eh);
        block.numerator = self.numerator;
        let out = match dinkelbach::dinkelbach(&block, &block.start(pt), self.opts) {
            Ok(out) => out,
            // no interior for this block: keep the current values
            Err(Error::Infeasible(_)) => return Ok(StepOutcome::skipped()),
            Err(e) => return Err(e),
        };
        let cand = block.point(&out.x);
        let v = self.value(&cand);
        if self.feasible(&cand) && v >= *value {
            *pt = cand;
            *value = v;
        }
        Ok(StepOutcome {
            iterations: out.iterations,
            ratio: out.ratio,
            mu_history: out.mu_history,
            kkt: out.kkt_residual,
        })
    }

    fn alpha_step(&self, pt: &mut SpectrumPoint, value: &mut f64) {
        if !self.flags.alpha_free {
            return;
        }
        if let Ok(alpha) = optimal_alpha(
            &pt.lambda_q1,
            &pt.lambda_q2,
            &pt.lambda_qr,
            self.gains,
            self.cfg,
        ) {
            let mut cand = pt.clone();
            cand.alpha = alpha;
            let v = self.value(&cand);
            if self.feasible(&cand) && v >= *value {
                *pt = cand;
                *value = v;
            }
        }
    }

    fn joint_step(&self, pt: &mut SpectrumPoint, value: &mut f64) -> Result<StepOutcome> {
        if !self.refine {
            return Ok(StepOutcome::skipped());
        }
        let prob = JointProblem::new(
            self.gains,
            self.cfg,
            pt.clone(),
            self.flags.relay_free,
            self.flags.alpha_free,
            self.flags.eh,
        );
        let out = match dinkelbach::dinkelbach(&prob, &prob.start(pt), self.opts) {
            Ok(out) => out,
            Err(Error::Infeasible(_) | Error::LineSearch) => return Ok(StepOutcome::skipped()),
            Err(e) => return Err(e),
        };
        let cand = prob.point(&out.x);
        let v = self.value(&cand);
        if self.feasible(&cand) && v >= *value {
            *pt = cand;
            *value = v;
        }
        Ok(StepOutcome {
            iterations: out.iterations,
            ratio: out.ratio,
            mu_history: out.mu_history,
            kkt: out.kkt_residual,
        })
    }

    pub fn run(&self, init: &SpectrumPoint) -> Result<(SpectrumPoint, SolverTrace, bool)> {
        init.check_shape(self.cfg)?;
        let mut pt =
            feasibility::find_feasible(self.gains, self.cfg, self.opts, &self.flags, init)?;
        let mut value = self.value(&pt);
        let mut trace = SolverTrace {
            initial_ee: value,
            records: Vec::new(),
        };
        let mut converged = false;
        for iteration in 1..=self.opts.max_outer_iters {
            let before = value;
            let relay_vars = if self.flags.relay_free {
                BlockProblem::relay_vars(self.cfg)
            } else {
                Vec::new()
            };
            let s1 = self.block_step(&mut pt, &mut value, relay_vars)?;
            let s2 = self.block_step(
                &mut pt,
                &mut value,
                BlockProblem::transceiver_vars(self.cfg),
            )?;
            let s4 = self.joint_step(&mut pt, &mut value)?;
            self.alpha_step(&mut pt, &mut value);
            let report = objective::check_feasibility(&pt, self.gains, self.cfg);
            trace.records.push(TraceRecord {
                iteration,
                ee: value,
                alpha: pt.alpha,
                slacks: report.slacks(),
                dinkelbach_relay: s1.iterations,
                dinkelbach_transceiver: s2.iterations,
                mu_relay: s1.ratio,
                mu_transceiver: s2.ratio,
                mu_history_relay: s1.mu_history,
                mu_history_transceiver: s2.mu_history,
                dinkelbach_joint: s4.iterations,
                kkt_residual: s1.kkt.max(s2.kkt).max(s4.kkt),
            });
            if (value - before).abs() <= self.opts.alt_tol * before.abs().max(1e-12) {
                converged = true;
                break;
            }
        }
        Ok((pt, trace, converged))
    }
}

/// Alternation in the eigenvalue domain for any scheme.
pub fn solve_spectrum(
    scheme: Scheme,
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    init: &SpectrumPoint,
) -> Result<SpectrumSolution> {
    let engine = Engine {
        gains,
        cfg,
        opts,
        flags: scheme.flags(),
        numerator: Numerator::Exact,
        refine: true,
    };
    let (point, trace, converged) = engine.run(&scheme.prepare(cfg, init))?;
    Ok(SpectrumSolution {
        scheme,
        ee: objective::energy_efficiency(&point, gains, cfg),
        rates: (
            objective::rate_tr1(&point, gains, cfg),
            objective::rate_tr2(&point, gains, cfg),
        ),
        report: objective::check_feasibility(&point, gains, cfg),
        point,
        trace,
        converged,
    })
}

/// Phase-I only: a point meeting every constraint of `scheme`, searched from `init`.
pub fn feasible_point(
    scheme: Scheme,
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    init: &SpectrumPoint,
) -> Result<SpectrumPoint> {
    feasibility::find_feasible(
        gains,
        cfg,
        opts,
        &scheme.flags(),
        &scheme.prepare(cfg, init),
    )
}

/// Full proposed design from `init`.
pub fn alternate(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    init: &SpectrumPoint,
) -> Result<Solution> {
    let sol = solve_spectrum(Scheme::Proposed, &ch.gains(), cfg, opts, init)?;
    Ok(Solution::from_spectrum(sol, ch))
}
