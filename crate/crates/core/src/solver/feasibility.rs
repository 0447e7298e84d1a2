//! Finding a feasible starting point when the given one is not.
//!
//! Works on normalized slacks (caps divided by the cap, rate floors by the
//! floor, harvesting by the requirement) and raises the smallest of them by
//! block ascent: the power-splitting factor by bisection, then each
//! eigenvalue block through a max-min phase-I program.

use nalgebra::{DMatrix, DVector};

use crate::config::{NetworkConfig, SolverOptions};
use crate::error::{Error, Result};
use crate::model::ChannelGains;
use crate::objective::{self, SpectrumPoint, ALPHA_MIN, FEASIBILITY_TOL};

use super::alternate::Flags;
use super::barrier::{self, BarrierSettings, ConcaveProgram, Eval};
use super::blocks::{BlockProblem, Var};

/// Smallest normalized slack over the constraints active under `flags`.
pub(crate) fn min_normalized_slack(
    pt: &SpectrumPoint,
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    flags: &Flags,
) -> f64 {
    let r = objective::check_feasibility(pt, gains, cfg);
    let floor = 0.5 * cfg.rt_min;
    let mut worst = f64::INFINITY;
    let mut push = |slack: f64, scale: f64| worst = worst.min(slack / scale.max(1e-12));
    push(r.power_tr1.slack, cfg.p1_max);
    push(r.power_tr2.slack, cfg.p2_max);
    push(r.power_relay.slack, cfg.pr_max);
    if floor > 0.0 {
        push(r.rate_tr1.slack, floor);
        push(r.rate_tr2.slack, floor);
    }
    if flags.eh {
        push(r.eh_balance(), r.energy_harvesting.bound.max(1e-3));
    }
    worst
}

pub(crate) fn is_feasible(
    pt: &SpectrumPoint,
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    flags: &Flags,
) -> bool {
    let r = objective::check_feasibility(pt, gains, cfg);
    if flags.eh {
        r.feasible
    } else {
        r.feasible_without_eh()
    }
}

/// Max-min phase-I over one block: maximize `s` subject to `x >= 0` and
/// `c_j(x) / scale_j >= s`, with `s <= 1`.
struct MaxMin<'a> {
    block: &'a BlockProblem<'a>,
}

impl ConcaveProgram for MaxMin<'_> {
    fn dim(&self) -> usize {
        self.block.vars.len() + 1
    }

    fn objective(&self, z: &DVector<f64>) -> Eval {
        let n = z.len();
        let mut g = DVector::zeros(n);
        g[n - 1] = 1.0;
        Eval::affine(z[n - 1], g)
    }

    fn constraints(&self, z: &DVector<f64>) -> Vec<Eval> {
        let n = z.len();
        let s = z[n - 1];
        let x = z.rows(0, n - 1).into_owned();
        let mut out: Vec<Eval> = self
            .block
            .scaled_constraints(&x)
            .into_iter()
            .map(|(c, scale)| {
                let mut grad = DVector::zeros(n);
                let mut hess = DMatrix::zeros(n, n);
                match scale {
                    None => {
                        grad.rows_mut(0, n - 1).copy_from(&c.grad);
                        Eval::affine(c.value, grad)
                    }
                    Some(k) => {
                        grad.rows_mut(0, n - 1).copy_from(&(c.grad / k));
                        grad[n - 1] = -1.0;
                        hess.view_mut((0, 0), (n - 1, n - 1))
                            .copy_from(&(c.hess / k));
                        Eval::new(c.value / k - s, grad, hess)
                    }
                }
            })
            .collect();
        let mut cap = DVector::zeros(n);
        cap[n - 1] = -1.0;
        out.push(Eval::affine(1.0 - s, cap));
        out
    }
}

fn raise_block(
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    pt: &SpectrumPoint,
    vars: Vec<Var>,
    eh: bool,
) -> Option<SpectrumPoint> {
    if vars.is_empty() {
        return None;
    }
    let block = BlockProblem::new(gains, cfg, pt.clone(), vars, eh);
    let mut x = block.start(pt);
    // the bounds must hold strictly
    for (k, v) in block.vars.iter().enumerate() {
        let floor = match v {
            Var::Q1(_) => 1e-6 * cfg.p1_max,
            Var::Q2(_) => 1e-6 * cfg.p2_max,
            Var::R(_) => 1e-6,
        };
        x[k] = x[k].max(floor);
    }
    let soft_min = block
        .scaled_constraints(&x)
        .iter()
        .filter_map(|(c, scale)| scale.map(|k| c.value / k))
        .fold(f64::INFINITY, f64::min);
    if !soft_min.is_finite() {
        return None;
    }
    let n = x.len();
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(&x);
    z[n] = soft_min.min(1.0) - 1.0;
    let settings = BarrierSettings {
        gap_tol: 1e-6,
        stop_above: Some(0.25),
        ..BarrierSettings::from_options(opts)
    };
    let out = barrier::maximize(&MaxMin { block: &block }, &z, &settings).ok()?;
    Some(block.point(&out.x.rows(0, n).into_owned()))
}

/// Power-splitting factor balancing the TR1 rate floor against harvesting.
fn balance_alpha(
    pt: &SpectrumPoint,
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    flags: &Flags,
) -> f64 {
    let floor = 0.5 * cfg.rt_min;
    let diff = |a: f64| {
        let mut p = pt.clone();
        p.alpha = a;
        let rate = if floor > 0.0 {
            (objective::rate_tr1(&p, gains, cfg) - floor) / floor
        } else {
            f64::INFINITY
        };
        let eh = if flags.eh {
            let need = objective::eh_requirement(&p, cfg);
            (objective::harvested_power(&p, gains, cfg) - need) / need.max(1e-3)
        } else {
            f64::INFINITY
        };
        (rate, eh)
    };
    let (lo, hi) = (ALPHA_MIN, 1.0 - ALPHA_MIN);
    let (r_lo, e_lo) = diff(lo);
    if r_lo >= e_lo {
        return lo;
    }
    let (r_hi, e_hi) = diff(hi);
    if r_hi <= e_hi {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        let (r, e) = diff(m);
        if r < e {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Returns `start` if it is feasible, otherwise searches for a feasible
/// point nearby. Fails with [`Error::Infeasible`] naming the constraint that
/// stayed violated.
pub(crate) fn find_feasible(
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    flags: &Flags,
    start: &SpectrumPoint,
) -> Result<SpectrumPoint> {
    let mut pt = start.clone();
    if is_feasible(&pt, gains, cfg, flags) {
        return Ok(pt);
    }
    let mut best = min_normalized_slack(&pt, gains, cfg, flags);
    for _ in 0..40 {
        let before = best;
        if flags.alpha_free {
            let mut cand = pt.clone();
            cand.alpha = balance_alpha(&pt, gains, cfg, flags);
            let s = min_normalized_slack(&cand, gains, cfg, flags);
            if s >= best {
                pt = cand;
                best = s;
            }
        }
        let mut blocks = vec![BlockProblem::transceiver_vars(cfg)];
        if flags.relay_free {
            blocks.insert(0, BlockProblem::relay_vars(cfg));
        }
        for vars in blocks {
            if is_feasible(&pt, gains, cfg, flags) {
                return Ok(pt);
            }
            if let Some(cand) = raise_block(gains, cfg, opts, &pt, vars, flags.eh) {
                let s = min_normalized_slack(&cand, gains, cfg, flags);
                if s >= best {
                    pt = cand;
                    best = s;
                }
            }
        }
        if is_feasible(&pt, gains, cfg, flags) {
            return Ok(pt);
        }
        if best - before < 1e-9 {
            break;
        }
    }
    let report = objective::check_feasibility(&pt, gains, cfg);
    let name = report
        .slacks()
        .iter()
        .zip([
            "power_tr1",
            "power_tr2",
            "power_relay",
            "rate_tr1",
            "rate_tr2",
            "energy_harvesting",
        ])
        .filter(|(_, n)| flags.eh || *n != "energy_harvesting")
        .filter(|(s, _)| **s < -FEASIBILITY_TOL)
        .min_by(|a, b| a.0.total_cmp(b.0))
        .map(|(_, n)| n)
        .unwrap_or("unknown");
    Err(Error::Infeasible(format!(
        "no feasible point found; {name} constraint violated"
    )))
}
