//! Rates, powers, harvested energy and energy efficiency.
//!
//! Everything here is evaluated per relay mode `i = 0..nr`. Transceiver
//! eigenvalue vectors shorter than `nr` are zero-padded; entries beyond `nr`
//! only consume power. Rates carry the 1/2 pre-log of the two-slot
//! exchange and are in bits/s/Hz; EE is `(R1 + R2) / P_total` in bits/Hz/J.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::model::{ChannelGains, ChannelRealization};

/// Smallest admissible power-splitting factor; `1 - ALPHA_MIN` is the largest.
pub const ALPHA_MIN: f64 = 1e-6;

/// Constraint slacks at or above `-FEASIBILITY_TOL` count as satisfied.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumPoint {
    pub alpha: f64,
    pub lambda_q1: Vec<f64>,
    pub lambda_q2: Vec<f64>,
    pub lambda_qr: Vec<f64>,
}

impl SpectrumPoint {
    pub fn new(alpha: f64, lambda_q1: Vec<f64>, lambda_q2: Vec<f64>, lambda_qr: Vec<f64>) -> Self {
        Self {
            alpha,
            lambda_q1,
            lambda_q2,
            lambda_qr,
        }
    }

    /// All-zero spectra sized for `config`.
    pub fn zeros(config: &NetworkConfig, alpha: f64) -> Self {
        Self::new(
            alpha,
            vec![0.0; config.n1],
            vec![0.0; config.n2],
            vec![0.0; config.nr],
        )
    }

    pub fn check_shape(&self, config: &NetworkConfig) -> Result<()> {
        if self.lambda_q1.len() != config.n1
            || self.lambda_q2.len() != config.n2
            || self.lambda_qr.len() != config.nr
        {
            return Err(Error::Dimension(format!(
                "spectrum lengths ({}, {}, {}) do not match antennas ({}, {}, {})",
                self.lambda_q1.len(),
                self.lambda_q2.len(),
                self.lambda_qr.len(),
                config.n1,
                config.n2,
                config.nr
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Dimension(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        let all = self
            .lambda_q1
            .iter()
            .chain(&self.lambda_q2)
            .chain(&self.lambda_qr);
        if all.clone().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Dimension(
                "eigenvalues must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn power_tr1(&self) -> f64 {
        self.lambda_q1.iter().sum()
    }

    pub fn power_tr2(&self) -> f64 {
        self.lambda_q2.iter().sum()
    }

    pub(crate) fn q1_mode(&self, i: usize) -> f64 {
        self.lambda_q1.get(i).copied().unwrap_or(0.0)
    }

    pub(crate) fn q2_mode(&self, i: usize) -> f64 {
        self.lambda_q2.get(i).copied().unwrap_or(0.0)
    }
}

/// `ln(1 + num/den)` with `0/0 = 0`.
pub(crate) fn ln1p_ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        (num / den).ln_1p()
    }
}

/// TR2 -> TR1 rate (decoded after the power splitter).
pub fn rate_tr1(pt: &SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig) -> f64 {
    let a = pt.alpha;
    let base = cfg.sigma2_d + a * cfg.sigma2_1;
    let nats: f64 = (0..gains.modes())
        .map(|i| {
            let (h1, h2, r) = (gains.h1[i], gains.h2[i], pt.lambda_qr[i]);
            ln1p_ratio(
                a * r * pt.q2_mode(i) * h1 * h2,
                base + a * cfg.sigma2_r * r * h1,
            )
        })
        .sum();
    0.5 * nats / LN_2
}

/// TR1 -> TR2 rate.
pub fn rate_tr2(pt: &SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig) -> f64 {
    let nats: f64 = (0..gains.modes())
        .map(|i| {
            let (h1, h2, r) = (gains.h1[i], gains.h2[i], pt.lambda_qr[i]);
            ln1p_ratio(
                r * pt.q1_mode(i) * h1 * h2,
                cfg.sigma2_2 + cfg.sigma2_r * r * h2,
            )
        })
        .sum();
    0.5 * nats / LN_2
}

pub fn sum_rate(pt: &SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig) -> f64 {
    rate_tr1(pt, gains, cfg) + rate_tr2(pt, gains, cfg)
}

/// Relay transmit power `sum r_i (q2_i h2_i + q1_i h1_i + sigma_R^2)`.
pub fn relay_power(pt: &SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig) -> f64 {
    (0..gains.modes())
        .map(|i| {
            pt.lambda_qr[i]
                * (pt.q2_mode(i) * gains.h2[i] + pt.q1_mode(i) * gains.h1[i] + cfg.sigma2_r)
        })
        .sum()
}

/// Total consumed power: amplifier-scaled transmit powers plus circuit power.
pub fn consumed_power(pt: &SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig) -> f64 {
    pt.power_tr1() / cfg.xi_1
        + relay_power(pt, gains, cfg) / cfg.xi_r
        + pt.power_tr2() / cfg.xi_2
        + cfg.pc_total
}

/// Power reaching TR1's receive antennas (before splitting).
pub fn received_power_tr1(pt: &SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig) -> f64 {
    let signal: f64 = (0..gains.modes())
        .map(|i| {
            gains.h1[i]
                * pt.lambda_qr[i]
                * (pt.q2_mode(i) * gains.h2[i] + pt.q1_mode(i) * gains.h1[i] + cfg.sigma2_r)
        })
        .sum();
    signal + cfg.sigma2_1
}

/// Harvested power at TR1: `eta (1 - alpha) (sum h1 r (q2 h2 + q1 h1 + sigma_R^2) + sigma_1^2)`.
///
/// The antenna noise term sits inside the `(1 - alpha)` factor, which is the
/// form the closed-form splitting factor in [`crate::solver::optimal_alpha`]
/// makes active.
pub fn harvested_power(pt: &SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig) -> f64 {
    cfg.eh_efficiency * (1.0 - pt.alpha) * received_power_tr1(pt, gains, cfg)
}

/// What TR1 must cover from harvesting: transmit power plus its circuits.
pub fn eh_requirement(pt: &SpectrumPoint, cfg: &NetworkConfig) -> f64 {
    pt.power_tr1() + cfg.tr1_circuit_power()
}

pub fn energy_efficiency(pt: &SpectrumPoint, gains: &ChannelGains, cfg: &NetworkConfig) -> f64 {
    sum_rate(pt, gains, cfg) / consumed_power(pt, gains, cfg)
}

/// Second derivative (nats) of the TR1 -> TR2 per-mode term
/// `ln(1 + r q1 h1 h2 / (sigma_2^2 + sigma_R^2 r h2))` with respect to `r`,
/// in closed form. Never positive for nonnegative arguments.
pub fn relay_mode_curvature(r: f64, q1: f64, h1: f64, h2: f64, cfg: &NetworkConfig) -> f64 {
    let s = cfg.sigma2_2;
    let a = q1 * h1 * h2;
    let b = cfg.sigma2_r * h2;
    let num = (s * a) * (-s * a - 2.0 * s * b - 2.0 * b * b * r - 2.0 * a * b * r);
    let den = s * s + s * (a + 2.0 * b) * r + b * (a + b) * r * r;
    if den <= 0.0 {
        return 0.0;
    }
    num / (den * den)
}

#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub q1: CMatrix,
    pub q2: CMatrix,
    pub qr: CMatrix,
    pub f1: CMatrix,
    pub f2: CMatrix,
    /// False when the directions came from channels without a shared left
    /// unitary, so the closed form is only approximately optimal.
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatrixEvaluation {
    pub rate1: f64,
    pub rate2: f64,
    pub relay_power: f64,
    pub consumed_power: f64,
    pub ee: f64,
}

/// EE computed from the full precoder and channel matrices through
/// log-determinants and traces, without any eigenvalue shortcut.
pub fn ee_matrix_form(
    alpha: f64,
    prec: &PrecoderSet,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
) -> Result<MatrixEvaluation> {
    let (nr, n1) = ch.h1.shape();
    let n2 = ch.h2.ncols();
    if prec.q1.shape() != (n1, n1) || prec.q2.shape() != (n2, n2) || prec.qr.shape() != (nr, nr) {
        return Err(Error::Dimension(
            "precoders are not conformable with the channels".into(),
        ));
    }
    let eye = |n: usize, s: f64| CMatrix::identity(n, n).scale(s);
    let h1h = ch.h1.adjoint();
    let h2h = ch.h2.adjoint();
    let qrh = prec.qr.adjoint();
    let m1 = &ch.h1 * &prec.q1 * &h1h;
    let m2 = &ch.h2 * &prec.q2 * &h2h;
    let a = eye(nr, cfg.sigma2_r) + &m2;
    let b = eye(nr, cfg.sigma2_r) + &m1;
    let qr_qrh = &prec.qr * &qrh;

    let c1 = cfg.sigma2_d + alpha * cfg.sigma2_1;
    let sig1 = eye(n1, c1) + (&h1h * &prec.qr * &a * &qrh * &ch.h1).scale(alpha);
    let noise1 = eye(n1, c1) + (&h1h * &qr_qrh * &ch.h1).scale(alpha * cfg.sigma2_r);
    let sig2 = eye(n2, cfg.sigma2_2) + &h2h * &prec.qr * &b * &qrh * &ch.h2;
    let noise2 = eye(n2, cfg.sigma2_2) + (&h2h * &qr_qrh * &ch.h2).scale(cfg.sigma2_r);

    let rate1 = 0.5 * (linalg::ln_det_hpd(&sig1)? - linalg::ln_det_hpd(&noise1)?) / LN_2;
    let rate2 = 0.5 * (linalg::ln_det_hpd(&sig2)? - linalg::ln_det_hpd(&noise2)?) / LN_2;

    let relay = linalg::trace_re(&(&prec.qr * (&m1 + &a) * &qrh));
    let consumed = linalg::trace_re(&prec.q1) / cfg.xi_1
        + relay / cfg.xi_r
        + linalg::trace_re(&prec.q2) / cfg.xi_2
        + cfg.pc_total;
    Ok(MatrixEvaluation {
        rate1,
        rate2,
        relay_power: relay,
        consumed_power: consumed,
        ee: (rate1 + rate2) / consumed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Usage {
    pub value: f64,
    pub bound: f64,
    /// Positive when satisfied: `bound - value` for caps, `value - bound` for floors.
    pub slack: f64,
}

impl Usage {
    fn cap(value: f64, bound: f64) -> Self {
        Self {
            value,
            bound,
            slack: bound - value,
        }
    }

    fn floor(value: f64, bound: f64) -> Self {
        Self {
            value,
            bound,
            slack: value - bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub power_tr1: Usage,
    pub power_tr2: Usage,
    pub power_relay: Usage,
    pub rate_tr1: Usage,
    pub rate_tr2: Usage,
    /// `value` is harvested power, `bound` is TR1's requirement.
    pub energy_harvesting: Usage,
    pub feasible: bool,
}

impl ConstraintReport {
    pub fn eh_balance(&self) -> f64 {
        self.energy_harvesting.slack
    }

    /// Feasibility ignoring the harvesting constraint.
    pub fn feasible_without_eh(&self) -> bool {
        self.slacks()[..5].iter().all(|&s| s >= -FEASIBILITY_TOL)
    }

    /// Slacks in the order p1, p2, relay, rate1, rate2, eh.
    pub fn slacks(&self) -> [f64; 6] {
        [
            self.power_tr1.slack,
            self.power_tr2.slack,
            self.power_relay.slack,
            self.rate_tr1.slack,
            self.rate_tr2.slack,
            self.energy_harvesting.slack,
        ]
    }

    /// Name of the most violated constraint, if any.
    pub fn worst_violation(&self) -> Option<&'static str> {
        const NAMES: [&str; 6] = [
            "power_tr1",
            "power_tr2",
            "power_relay",
            "rate_tr1",
            "rate_tr2",
            "energy_harvesting",
        ];
        self.slacks()
            .iter()
            .zip(NAMES)
            .filter(|(s, _)| **s < -FEASIBILITY_TOL)
            .min_by(|a, b| a.0.total_cmp(b.0))
            .map(|(_, n)| n)
    }
}

pub fn check_feasibility(
    pt: &SpectrumPoint,
    gains: &ChannelGains,
    cfg: &NetworkConfig,
) -> ConstraintReport {
    let floor = 0.5 * cfg.rt_min;
    let mut report = ConstraintReport {
        power_tr1: Usage::cap(pt.power_tr1(), cfg.p1_max),
        power_tr2: Usage::cap(pt.power_tr2(), cfg.p2_max),
        power_relay: Usage::cap(relay_power(pt, gains, cfg), cfg.pr_max),
        rate_tr1: Usage::floor(rate_tr1(pt, gains, cfg), floor),
        rate_tr2: Usage::floor(rate_tr2(pt, gains, cfg), floor),
        energy_harvesting: Usage::floor(harvested_power(pt, gains, cfg), eh_requirement(pt, cfg)),
        feasible: false,
    };
    report.feasible = report.slacks().iter().all(|&s| s >= -FEASIBILITY_TOL);
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NetworkConfig {
        NetworkConfig::default()
    }

    fn ones() -> (SpectrumPoint, ChannelGains) {
        (
            SpectrumPoint::new(1.0 - 1e-15, vec![1.0; 2], vec![1.0; 2], vec![1.0; 2]),
            ChannelGains::new(vec![1.0; 2], vec![1.0; 2]).unwrap(),
        )
    }

    #[test]
    fn rate1_zero_cases() {
        let g = ChannelGains::new(vec![2.0, 1.0], vec![1.5, 0.5]).unwrap();
        let pt = SpectrumPoint::new(0.5, vec![1.0, 1.0], vec![0.0, 0.0], vec![2.0, 2.0]);
        assert_eq!(rate_tr1(&pt, &g, &cfg()), 0.0);
        let pt = SpectrumPoint::new(1e-300, vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]);
        assert!(rate_tr1(&pt, &g, &cfg()) < 1e-290);
    }

    #[test]
    fn rate1_hand_value() {
        let (mut pt, g) = ones();
        pt.alpha = 1.0;
        let c = NetworkConfig {
            sigma2_d: 0.0,
            ..cfg()
        };
        assert!((rate_tr1(&pt, &g, &c) - 3.5f64.log2()).abs() < 1e-12);
        assert!((3.5f64.log2() - 1.8074).abs() < 1e-4);
    }

    #[test]
    fn rate2_cases() {
        let (mut pt, g) = ones();
        assert!((rate_tr2(&pt, &g, &cfg()) - 3.5f64.log2()).abs() < 1e-12);
        pt.lambda_q1 = vec![0.0, 0.0];
        assert_eq!(rate_tr2(&pt, &g, &cfg()), 0.0);
        // relay saturation on a single mode
        let g1 = ChannelGains::new(vec![1.7], vec![0.9]).unwrap();
        let pt = SpectrumPoint::new(0.5, vec![2.0], vec![1.0], vec![1e9]);
        let limit = 0.5 * (1.0 + 2.0 * 1.7 / 0.2f64).log2();
        assert!((rate_tr2(&pt, &g1, &cfg()) - limit).abs() < 1e-6);
    }

    #[test]
    fn consumed_power_cases() {
        let g = ChannelGains::new(vec![1.0; 2], vec![1.0; 2]).unwrap();
        let zero = SpectrumPoint::zeros(&cfg(), 0.5);
        assert_eq!(consumed_power(&zero, &g, &cfg()), 3.0);
        let relay_off = SpectrumPoint::new(0.5, vec![1.0; 2], vec![1.0; 2], vec![0.0; 2]);
        assert!((consumed_power(&relay_off, &g, &cfg()) - 7.0).abs() < 1e-12);
        let (pt, g) = ones();
        assert!((consumed_power(&pt, &g, &cfg()) - 11.4).abs() < 1e-12);
    }

    #[test]
    fn harvested_power_cases() {
        let (mut pt, g) = ones();
        pt.alpha = 1.0;
        assert_eq!(harvested_power(&pt, &g, &cfg()), 0.0);
        pt.alpha = 0.0;
        assert!((harvested_power(&pt, &g, &cfg()) - 4.6).abs() < 1e-12);
        pt.lambda_qr = vec![0.0; 2];
        assert!((harvested_power(&pt, &g, &cfg()) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ee_cases() {
        let g = ChannelGains::new(vec![1.0; 2], vec![1.0; 2]).unwrap();
        assert_eq!(
            energy_efficiency(&SpectrumPoint::zeros(&cfg(), 0.5), &g, &cfg()),
            0.0
        );
        let (mut pt, g) = ones();
        pt.alpha = 1.0;
        let c = NetworkConfig {
            sigma2_d: 0.0,
            ..cfg()
        };
        let ee = energy_efficiency(&pt, &g, &c);
        assert!((ee - 2.0 * 3.5f64.log2() / 11.4).abs() < 1e-12);
        assert!((ee - 0.3171).abs() < 1e-4);
        let scaled = NetworkConfig {
            time_interval: 7.5,
            ..c.clone()
        };
        assert_eq!(energy_efficiency(&pt, &g, &scaled), ee);
    }

    #[test]
    fn feasibility_cases() {
        let g = ChannelGains::new(vec![1.0; 2], vec![1.0; 2]).unwrap();
        let zero = SpectrumPoint::zeros(&cfg(), 0.5);
        let r = check_feasibility(&zero, &g, &cfg());
        assert!(!r.feasible);
        assert!(r.rate_tr1.slack < 0.0);

        let relaxed = NetworkConfig {
            rt_min: 0.0,
            p1_ct: 0.0,
            p1_cr: 0.0,
            ..cfg()
        };
        let r = check_feasibility(&zero, &g, &relaxed);
        assert!(r.feasible, "{r:?}");
        assert!((r.eh_balance() - 0.1).abs() < 1e-12);

        let mut over = SpectrumPoint::new(0.5, vec![4.0, 4.1], vec![1.0, 1.0], vec![1.0, 1.0]);
        let r = check_feasibility(&over, &g, &relaxed);
        assert!(!r.feasible);
        assert!((r.power_tr1.slack + 0.1).abs() < 1e-12);
        over.lambda_q1 = vec![1.0, 1.0];
        assert!(check_feasibility(&over, &g, &relaxed).power_tr1.slack > 0.0);
    }

    #[test]
    fn worst_violation_names_rate() {
        let g = ChannelGains::new(vec![1.0; 2], vec![1.0; 2]).unwrap();
        let pt = SpectrumPoint::new(0.5, vec![0.1; 2], vec![0.1; 2], vec![0.1; 2]);
        let c = NetworkConfig {
            rt_min: 100.0,
            ..cfg()
        };
        let name = check_feasibility(&pt, &g, &c).worst_violation().unwrap();
        assert!(name.starts_with("rate_tr"), "{name}");
    }

    #[test]
    fn curvature_matches_finite_difference() {
        let c = cfg();
        let term = |r: f64| ln1p_ratio(r * 1.3 * 2.0 * 0.7, c.sigma2_2 + c.sigma2_r * r * 0.7);
        for &r in &[0.0, 0.3, 1.0, 5.0, 20.0] {
            let h = 1e-4 * (1.0 + r);
            let fd = (term(r + h) - 2.0 * term(r) + term((r - h).max(0.0))) / (h * h);
            let fd = if r == 0.0 {
                (term(2.0 * h) - 2.0 * term(h) + term(0.0)) / (h * h)
            } else {
                fd
            };
            let exact = relay_mode_curvature(if r == 0.0 { h } else { r }, 1.3, 2.0, 0.7, &c);
            assert!(exact <= 0.0);
            assert!(
                (fd - exact).abs() < 1e-4 * (1.0 + exact.abs()),
                "r={r} fd={fd} exact={exact}"
            );
        }
    }

    #[test]
    fn non_square_padding() {
        let c = NetworkConfig {
            n1: 3,
            n2: 1,
            nr: 2,
            ..cfg()
        };
        let g = ChannelGains::new(vec![2.0, 1.0], vec![1.0, 0.0]).unwrap();
        let pt = SpectrumPoint::new(0.5, vec![1.0, 1.0, 5.0], vec![2.0], vec![1.0, 1.0]);
        pt.check_shape(&c).unwrap();
        // third q1 entry has no mode: it only costs transmit power
        let mut cheaper = pt.clone();
        cheaper.lambda_q1[2] = 0.0;
        assert_eq!(sum_rate(&pt, &g, &c), sum_rate(&cheaper, &g, &c));
        assert!(
            (consumed_power(&pt, &g, &c) - consumed_power(&cheaper, &g, &c) - 5.0).abs() < 1e-12
        );
    }
}
