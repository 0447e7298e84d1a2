//! Numerical check of the fixed-point view of the alternation.
//!
//! For a fixed splitting factor `a`, the eigenvalues are optimized with the
//! high-SNR numerator (the `1 +` dropped inside every logarithm) and the
//! closed-form splitting factor of the result is `M(a)`. Convergence of the
//! iteration `a <- M(a)` to the global optimum follows when `M` is positive,
//! monotone and scalable; this module reports how often each property fails.

use serde::Serialize;

use crate::config::{NetworkConfig, SolverOptions};
use crate::model::ChannelRealization;
use crate::objective::ALPHA_MIN;

use super::alternate::{default_init, Engine, Flags};
use super::blocks::Numerator;
use super::optimal_alpha;

const PROPERTY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct MappingReport {
    pub alphas: Vec<f64>,
    pub beta: f64,
    /// `M(a)`, `None` where the fixed-`a` problem is infeasible.
    pub values: Vec<Option<f64>>,
    /// `M(beta a)`, `None` where `beta a` leaves `(0, 1)` or is infeasible.
    pub scaled_values: Vec<Option<f64>>,
    pub positivity_violations: usize,
    /// `(a, a', M(a) - M(a'))` for consecutive `a < a'` with `M(a') < M(a)`.
    pub monotonicity_violations: Vec<(f64, f64, f64)>,
    /// `beta M(a) - M(beta a)` per grid point.
    pub scalability_gaps: Vec<Option<f64>>,
    pub scalability_violations: usize,
}

impl MappingReport {
    pub fn feasible_points(&self) -> usize {
        self.values.iter().flatten().count()
    }
}

fn mapping(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    alpha: f64,
) -> Option<f64> {
    let gains = ch.gains();
    let engine = Engine {
        gains: &gains,
        cfg,
        opts,
        flags: Flags {
            relay_free: true,
            alpha_free: false,
            eh: true,
        },
        numerator: Numerator::HighSnr,
        refine: false,
    };
    let mut init = default_init(&gains, cfg);
    init.alpha = alpha;
    let (pt, _, _) = engine.run(&init).ok()?;
    optimal_alpha(&pt.lambda_q1, &pt.lambda_q2, &pt.lambda_qr, &gains, cfg).ok()
}

/// Evaluates `M` on `alphas` and at `beta * alphas`. Informational only:
/// the properties are guaranteed only in the high-SNR regime.
pub fn mapping_diagnostics(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    alphas: &[f64],
    beta: f64,
) -> MappingReport {
    let admissible = |a: f64| a >= ALPHA_MIN && a <= 1.0 - ALPHA_MIN;
    let values: Vec<Option<f64>> = alphas
        .iter()
        .map(|&a| {
            if admissible(a) {
                mapping(ch, cfg, opts, a)
            } else {
                None
            }
        })
        .collect();
    let scaled_values: Vec<Option<f64>> = alphas
        .iter()
        .zip(&values)
        .map(|(&a, &m)| {
            let b = beta * a;
            if b == a {
                m
            } else if admissible(b) {
                mapping(ch, cfg, opts, b)
            } else {
                None
            }
        })
        .collect();

    let positivity_violations = values.iter().flatten().filter(|&&m| m < 0.0).count();

    let mut order: Vec<usize> = (0..alphas.len()).filter(|&k| values[k].is_some()).collect();
    order.sort_by(|&i, &j| alphas[i].total_cmp(&alphas[j]));
    let monotonicity_violations = order
        .windows(2)
        .filter_map(|w| {
            let (m0, m1) = (values[w[0]]?, values[w[1]]?);
            (m1 < m0 - PROPERTY_TOL).then_some((alphas[w[0]], alphas[w[1]], m0 - m1))
        })
        .collect();

    let scalability_gaps: Vec<Option<f64>> = values
        .iter()
        .zip(&scaled_values)
        .map(|(m, s)| Some(beta * (*m)? - (*s)?))
        .collect();
    let scalability_violations = scalability_gaps
        .iter()
        .flatten()
        .filter(|&&g| g < -PROPERTY_TOL)
        .count();

    MappingReport {
        alphas: alphas.to_vec(),
        beta,
        values,
        scaled_values,
        positivity_violations,
        monotonicity_violations,
        scalability_gaps,
        scalability_violations,
    }
}
