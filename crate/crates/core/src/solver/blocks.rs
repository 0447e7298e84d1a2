//! The EE subproblems solved by the alternation: one block of eigenvalues
//! is free, everything else is held at `base`.
//!
//! With the relay block free every rate term is concave in `r_i` and the
//! power and harvesting expressions are linear; with the transceiver block
//! free the same holds in `(q1, q2)`. Derivatives are analytic and assembled
//! per relay mode.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use crate::config::NetworkConfig;
use crate::model::ChannelGains;
use crate::objective::{self, SpectrumPoint};

use super::barrier::Eval;
use super::dinkelbach::FractionalProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Var {
    Q1(usize),
    Q2(usize),
    R(usize),
}

/// Which numerator the block maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Numerator {
    /// The actual sum rate.
    Exact,
    /// Sum rate with the `1 +` inside each logarithm dropped.
    HighSnr,
}

/// Bits per nat times the two-slot pre-log.
const BITS: f64 = 0.5 / LN_2;

#[derive(Debug, Clone)]
pub(crate) struct BlockProblem<'a> {
    pub gains: &'a ChannelGains,
    pub cfg: &'a NetworkConfig,
    pub base: SpectrumPoint,
    pub vars: Vec<Var>,
    pub eh: bool,
    pub numerator: Numerator,
}

/// One logarithmic rate term `ln(1 + b r q / (c + a r))` and its
/// derivatives in `(r, q)`.
#[derive(Debug, Default, Clone, Copy)]
struct Term {
    v: f64,
    g_r: f64,
    g_q: f64,
    h_rr: f64,
    h_qq: f64,
    h_rq: f64,
}

fn exact_term(c: f64, a: f64, b: f64, r: f64, q: f64) -> Term {
    let da = c + r * (a + b * q);
    let db = c + a * r;
    let v = objective::ln1p_ratio(b * r * q, db);
    if !(da > 0.0 && db > 0.0) {
        return Term {
            v,
            ..Term::default()
        };
    }
    let (da_r, da_q, db_r) = (a + b * q, b * r, a);
    Term {
        v,
        g_r: da_r / da - db_r / db,
        g_q: da_q / da,
        h_rr: -(da_r * da_r) / (da * da) + (db_r * db_r) / (db * db),
        h_qq: -(da_q * da_q) / (da * da),
        h_rq: b / da - da_r * da_q / (da * da),
    }
}

/// `ln(b r q / (c + a r))`.
fn high_snr_term(c: f64, a: f64, b: f64, r: f64, q: f64) -> Term {
    let db = c + a * r;
    if !(r > 0.0 && q > 0.0 && db > 0.0) {
        return Term {
            v: f64::NEG_INFINITY,
            ..Term::default()
        };
    }
    Term {
        v: b.ln() + r.ln() + q.ln() - db.ln(),
        g_r: 1.0 / r - a / db,
        g_q: 1.0 / q,
        h_rr: -1.0 / (r * r) + (a * a) / (db * db),
        h_qq: -1.0 / (q * q),
        h_rq: 0.0,
    }
}

/// Gradient/Hessian accumulator over the block's variables.
struct Acc {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Acc {
    fn new(n: usize) -> Self {
        Self {
            value: 0.0,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    /// Adds `scale * term` where `ir`/`iq` are block indices of `r` and `q`.
    fn add_term(&mut self, t: &Term, ir: Option<usize>, iq: Option<usize>, scale: f64) {
        self.value += scale * t.v;
        if let Some(i) = ir {
            self.grad[i] += scale * t.g_r;
            self.hess[(i, i)] += scale * t.h_rr;
        }
        if let Some(j) = iq {
            self.grad[j] += scale * t.g_q;
            self.hess[(j, j)] += scale * t.h_qq;
        }
        if let (Some(i), Some(j)) = (ir, iq) {
            self.hess[(i, j)] += scale * t.h_rq;
            self.hess[(j, i)] += scale * t.h_rq;
        }
    }

    fn into_eval(self) -> Eval {
        Eval::new(self.value, self.grad, self.hess)
    }
}

/// Block indices of each mode's variables.
struct Index {
    r: Vec<Option<usize>>,
    q1: Vec<Option<usize>>,
    q2: Vec<Option<usize>>,
}

impl<'a> BlockProblem<'a> {
    pub fn new(
        gains: &'a ChannelGains,
        cfg: &'a NetworkConfig,
        base: SpectrumPoint,
        vars: Vec<Var>,
        eh: bool,
    ) -> Self {
        Self {
            gains,
            cfg,
            base,
            vars,
            eh,
            numerator: Numerator::Exact,
        }
    }

    /// Free relay eigenvalues (none when the relay cannot transmit).
    pub fn relay_vars(cfg: &NetworkConfig) -> Vec<Var> {
        if cfg.pr_max > 0.0 {
            (0..cfg.nr).map(Var::R).collect()
        } else {
            Vec::new()
        }
    }

    /// Free transceiver eigenvalues (none for a node with a zero cap).
    pub fn transceiver_vars(cfg: &NetworkConfig) -> Vec<Var> {
        let mut v = Vec::new();
        if cfg.p1_max > 0.0 {
            v.extend((0..cfg.n1).map(Var::Q1));
        }
        if cfg.p2_max > 0.0 {
            v.extend((0..cfg.n2).map(Var::Q2));
        }
        v
    }

    pub fn point(&self, x: &DVector<f64>) -> SpectrumPoint {
        let mut pt = self.base.clone();
        for (k, var) in self.vars.iter().enumerate() {
            match *var {
                Var::Q1(i) => pt.lambda_q1[i] = x[k],
                Var::Q2(i) => pt.lambda_q2[i] = x[k],
                Var::R(i) => pt.lambda_qr[i] = x[k],
            }
        }
        pt
    }

    pub fn start(&self, pt: &SpectrumPoint) -> DVector<f64> {
        DVector::from_iterator(
            self.vars.len(),
            self.vars.iter().map(|v| match *v {
                Var::Q1(i) => pt.lambda_q1[i],
                Var::Q2(i) => pt.lambda_q2[i],
                Var::R(i) => pt.lambda_qr[i],
            }),
        )
    }

    fn index(&self) -> Index {
        let nr = self.gains.modes();
        let mut idx = Index {
            r: vec![None; nr],
            q1: vec![None; nr],
            q2: vec![None; nr],
        };
        for (k, var) in self.vars.iter().enumerate() {
            match *var {
                Var::R(i) => idx.r[i] = Some(k),
                Var::Q1(i) if i < nr => idx.q1[i] = Some(k),
                Var::Q2(i) if i < nr => idx.q2[i] = Some(k),
                _ => {}
            }
        }
        idx
    }

    fn has(&self, f: impl Fn(&Var) -> bool) -> bool {
        self.vars.iter().any(f)
    }

    /// Rate terms of each direction, in bits, as functions of the block.
    fn rates(&self, pt: &SpectrumPoint, idx: &Index, form: Numerator) -> (Acc, Acc) {
        let n = self.vars.len();
        let cfg = self.cfg;
        let a = pt.alpha;
        let mut r1 = Acc::new(n);
        let mut r2 = Acc::new(n);
        for i in 0..self.gains.modes() {
            let (h1, h2, r) = (self.gains.h1[i], self.gains.h2[i], pt.lambda_qr[i]);
            let c1 = cfg.sigma2_d + a * cfg.sigma2_1;
            let (a1, b1) = (a * cfg.sigma2_r * h1, a * h1 * h2);
            let (a2, b2) = (cfg.sigma2_r * h2, h1 * h2);
            match form {
                Numerator::Exact => {
                    r1.add_term(
                        &exact_term(c1, a1, b1, r, pt.q2_mode(i)),
                        idx.r[i],
                        idx.q2[i],
                        BITS,
                    );
                    r2.add_term(
                        &exact_term(cfg.sigma2_2, a2, b2, r, pt.q1_mode(i)),
                        idx.r[i],
                        idx.q1[i],
                        BITS,
                    );
                }
                Numerator::HighSnr => {
                    // modes without a transmit stream or a channel carry no term
                    if b1 > 0.0 && i < pt.lambda_q2.len() {
                        r1.add_term(
                            &high_snr_term(c1, a1, b1, r, pt.q2_mode(i)),
                            idx.r[i],
                            idx.q2[i],
                            BITS,
                        );
                    }
                    if b2 > 0.0 && i < pt.lambda_q1.len() {
                        r2.add_term(
                            &high_snr_term(cfg.sigma2_2, a2, b2, r, pt.q1_mode(i)),
                            idx.r[i],
                            idx.q1[i],
                            BITS,
                        );
                    }
                }
            }
        }
        (r1, r2)
    }

    /// Relay power and the received signal power at TR1, both linear in the block.
    fn relay_terms(&self, pt: &SpectrumPoint) -> (Eval, Eval) {
        let n = self.vars.len();
        let cfg = self.cfg;
        let mut g_relay = DVector::zeros(n);
        let mut g_recv = DVector::zeros(n);
        for (k, var) in self.vars.iter().enumerate() {
            let (dr, dh) = match *var {
                Var::R(i) => {
                    let w = pt.q2_mode(i) * self.gains.h2[i]
                        + pt.q1_mode(i) * self.gains.h1[i]
                        + cfg.sigma2_r;
                    (w, self.gains.h1[i] * w)
                }
                Var::Q1(i) if i < self.gains.modes() => {
                    let d = pt.lambda_qr[i] * self.gains.h1[i];
                    (d, self.gains.h1[i] * d)
                }
                Var::Q2(i) if i < self.gains.modes() => {
                    let d = pt.lambda_qr[i] * self.gains.h2[i];
                    (d, self.gains.h1[i] * d)
                }
                _ => (0.0, 0.0),
            };
            g_relay[k] = dr;
            g_recv[k] = dh;
        }
        (
            Eval::affine(objective::relay_power(pt, self.gains, cfg), g_relay),
            Eval::affine(objective::received_power_tr1(pt, self.gains, cfg), g_recv),
        )
    }

    fn q1_sum_grad(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.vars.len(),
            self.vars.iter().map(|v| f64::from(matches!(v, Var::Q1(_)))),
        )
    }

    fn q2_sum_grad(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.vars.len(),
            self.vars.iter().map(|v| f64::from(matches!(v, Var::Q2(_)))),
        )
    }

    /// Constraint list paired with a normalizing scale; `None` marks the
    /// nonnegativity bounds, which phase-I keeps as hard constraints.
    pub fn scaled_constraints(&self, x: &DVector<f64>) -> Vec<(Eval, Option<f64>)> {
        let cfg = self.cfg;
        let pt = self.point(x);
        let idx = self.index();
        let nr = self.gains.modes();
        let mut out: Vec<(Eval, Option<f64>)> = (0..x.len())
            .map(|k| (Eval::coordinate(x, k), None))
            .collect();

        let any_q1 = self.has(|v| matches!(v, Var::Q1(_)));
        let any_q2 = self.has(|v| matches!(v, Var::Q2(_)));
        let any_r = self.has(|v| matches!(v, Var::R(_)));
        let q1_modes = self.has(|v| matches!(v, Var::Q1(i) if *i < nr));
        let q2_modes = self.has(|v| matches!(v, Var::Q2(i) if *i < nr));

        if any_q1 {
            out.push((
                Eval::affine(cfg.p1_max - pt.power_tr1(), -self.q1_sum_grad()),
                Some(cfg.p1_max),
            ));
        }
        if any_q2 {
            out.push((
                Eval::affine(cfg.p2_max - pt.power_tr2(), -self.q2_sum_grad()),
                Some(cfg.p2_max),
            ));
        }
        let (relay, recv) = self.relay_terms(&pt);
        if any_r || q1_modes || q2_modes {
            out.push((
                Eval::affine(cfg.pr_max - relay.value, -relay.grad.clone()),
                Some(cfg.pr_max.max(1e-12)),
            ));
        }
        let floor = 0.5 * cfg.rt_min;
        if floor > 0.0 {
            let (r1, r2) = self.rates(&pt, &idx, Numerator::Exact);
            if any_r || q2_modes {
                let e = r1.into_eval();
                out.push((Eval::new(e.value - floor, e.grad, e.hess), Some(floor)));
            }
            if any_r || q1_modes {
                let e = r2.into_eval();
                out.push((Eval::new(e.value - floor, e.grad, e.hess), Some(floor)));
            }
        }
        if self.eh && (any_r || any_q1 || q2_modes) {
            let k = cfg.eh_efficiency * (1.0 - pt.alpha);
            let requirement = objective::eh_requirement(&pt, cfg);
            let grad = recv.grad.scale(k) - self.q1_sum_grad();
            out.push((
                Eval::affine(k * recv.value - requirement, grad),
                Some(requirement.max(1e-3)),
            ));
        }
        out
    }
}

impl FractionalProgram for BlockProblem<'_> {
    fn dim(&self) -> usize {
        self.vars.len()
    }

    fn numerator(&self, x: &DVector<f64>) -> Eval {
        let pt = self.point(x);
        let (mut r1, r2) = self.rates(&pt, &self.index(), self.numerator);
        r1.value += r2.value;
        r1.grad += r2.grad;
        r1.hess += r2.hess;
        r1.into_eval()
    }

    fn denominator(&self, x: &DVector<f64>) -> Eval {
        let cfg = self.cfg;
        let pt = self.point(x);
        let (relay, _) = self.relay_terms(&pt);
        let grad = relay.grad.scale(1.0 / cfg.xi_r)
            + self.q1_sum_grad().scale(1.0 / cfg.xi_1)
            + self.q2_sum_grad().scale(1.0 / cfg.xi_2);
        Eval::affine(objective::consumed_power(&pt, self.gains, cfg), grad)
    }

    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval> {
        self.scaled_constraints(x)
            .into_iter()
            .map(|(e, _)| e)
            .collect()
    }

    fn numerator_value(&self, x: &DVector<f64>) -> f64 {
        let pt = self.point(x);
        match self.numerator {
            Numerator::Exact => objective::sum_rate(&pt, self.gains, self.cfg),
            Numerator::HighSnr => self.numerator(x).value,
        }
    }

    fn denominator_value(&self, x: &DVector<f64>) -> f64 {
        objective::consumed_power(&self.point(x), self.gains, self.cfg)
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        let cfg = self.cfg;
        let pt = self.point(x);
        let nr = self.gains.modes();
        let mut out: Vec<f64> = x.iter().copied().collect();
        let any_q1 = self.has(|v| matches!(v, Var::Q1(_)));
        let any_q2 = self.has(|v| matches!(v, Var::Q2(_)));
        let any_r = self.has(|v| matches!(v, Var::R(_)));
        let q1_modes = self.has(|v| matches!(v, Var::Q1(i) if *i < nr));
        let q2_modes = self.has(|v| matches!(v, Var::Q2(i) if *i < nr));
        if any_q1 {
            out.push(cfg.p1_max - pt.power_tr1());
        }
        if any_q2 {
            out.push(cfg.p2_max - pt.power_tr2());
        }
        if any_r || q1_modes || q2_modes {
            out.push(cfg.pr_max - objective::relay_power(&pt, self.gains, cfg));
        }
        let floor = 0.5 * cfg.rt_min;
        if floor > 0.0 {
            if any_r || q2_modes {
                out.push(objective::rate_tr1(&pt, self.gains, cfg) - floor);
            }
            if any_r || q1_modes {
                out.push(objective::rate_tr2(&pt, self.gains, cfg) - floor);
            }
        }
        if self.eh && (any_r || any_q1 || q2_modes) {
            out.push(
                objective::harvested_power(&pt, self.gains, cfg)
                    - objective::eh_requirement(&pt, cfg),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SolverOptions;
    use crate::solver::dinkelbach::dinkelbach;

    fn setup() -> (ChannelGains, NetworkConfig, SpectrumPoint) {
        let gains = ChannelGains::new(vec![2.3, 0.6], vec![1.4, 0.3]).unwrap();
        let cfg = NetworkConfig::default();
        let pt = SpectrumPoint::new(0.7, vec![1.1, 0.4], vec![0.8, 1.9], vec![0.9, 1.3]);
        (gains, cfg, pt)
    }

    fn fd_check(prob: &BlockProblem<'_>, f: impl Fn(&DVector<f64>) -> Eval) {
        let x = prob.start(&prob.base);
        let e = f(&x);
        let h = 1e-6;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let (ep, em) = (f(&xp), f(&xm));
            let g = (ep.value - em.value) / (2.0 * h);
            assert!(
                (g - e.grad[k]).abs() < 1e-6 * (1.0 + g.abs()),
                "grad {k}: fd {g} vs {}",
                e.grad[k]
            );
            for j in 0..x.len() {
                let hj = (ep.grad[j] - em.grad[j]) / (2.0 * h);
                assert!(
                    (hj - e.hess[(k, j)]).abs() < 1e-5 * (1.0 + hj.abs()),
                    "hess {k},{j}: fd {hj} vs {}",
                    e.hess[(k, j)]
                );
            }
        }
    }

    #[test]
    fn numerator_derivatives_match_finite_differences() {
        let (gains, cfg, pt) = setup();
        for vars in [
            BlockProblem::relay_vars(&cfg),
            BlockProblem::transceiver_vars(&cfg),
        ] {
            for form in [Numerator::Exact, Numerator::HighSnr] {
                let mut prob = BlockProblem::new(&gains, &cfg, pt.clone(), vars.clone(), true);
                prob.numerator = form;
                fd_check(&prob, |x| prob.numerator(x));
                fd_check(&prob, |x| prob.denominator(x));
            }
        }
    }

    #[test]
    fn constraint_derivatives_match_finite_differences() {
        let (gains, cfg, pt) = setup();
        for vars in [
            BlockProblem::relay_vars(&cfg),
            BlockProblem::transceiver_vars(&cfg),
        ] {
            let prob = BlockProblem::new(&gains, &cfg, pt.clone(), vars, true);
            let x = prob.start(&pt);
            let m = prob.constraints(&x).len();
            for j in 0..m {
                fd_check(&prob, |x| prob.constraints(x).swap_remove(j));
            }
        }
    }

    #[test]
    fn values_agree_with_objective_module() {
        let (gains, cfg, pt) = setup();
        let prob = BlockProblem::new(
            &gains,
            &cfg,
            pt.clone(),
            BlockProblem::relay_vars(&cfg),
            true,
        );
        let x = prob.start(&pt);
        assert!((prob.numerator(&x).value - objective::sum_rate(&pt, &gains, &cfg)).abs() < 1e-12);
        assert!(
            (prob.denominator(&x).value - objective::consumed_power(&pt, &gains, &cfg)).abs()
                < 1e-12
        );
        let report = objective::check_feasibility(&pt, &gains, &cfg);
        let cons: Vec<f64> = prob
            .constraints(&x)
            .iter()
            .skip(2)
            .map(|c| c.value)
            .collect();
        // relay cap, rate1, rate2, eh
        assert!((cons[0] - report.power_relay.slack).abs() < 1e-12);
        assert!((cons[1] - report.rate_tr1.slack).abs() < 1e-12);
        assert!((cons[2] - report.rate_tr2.slack).abs() < 1e-12);
        assert!((cons[3] - report.energy_harvesting.slack).abs() < 1e-12);
    }

    #[test]
    fn value_paths_match_full_evaluation() {
        let (gains, cfg, pt) = setup();
        let mut mixed = BlockProblem::transceiver_vars(&cfg);
        mixed.push(Var::R(1));
        for vars in [
            BlockProblem::relay_vars(&cfg),
            BlockProblem::transceiver_vars(&cfg),
            mixed,
        ] {
            let prob = BlockProblem::new(&gains, &cfg, pt.clone(), vars, true);
            let x = prob.start(&pt);
            let full: Vec<f64> = prob.constraints(&x).iter().map(|c| c.value).collect();
            let fast = prob.constraint_values(&x);
            assert_eq!(full.len(), fast.len());
            assert!(full.iter().zip(&fast).all(|(a, b)| (a - b).abs() < 1e-12));
            assert!((prob.numerator(&x).value - prob.numerator_value(&x)).abs() < 1e-12);
            assert!((prob.denominator(&x).value - prob.denominator_value(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn relay_block_matches_lattice_search() {
        let (gains, cfg, pt) = setup();
        let prob = BlockProblem::new(
            &gains,
            &cfg,
            pt.clone(),
            BlockProblem::relay_vars(&cfg),
            true,
        );
        let out = dinkelbach(&prob, &prob.start(&pt), &SolverOptions::default()).unwrap();
        let sol = prob.point(&out.x);
        assert!(
            objective::check_feasibility(&sol, &gains, &cfg)
                .power_relay
                .slack
                >= -1e-8
        );

        let h = 1e-3;
        let coef =
            |i: usize| pt.q2_mode(i) * gains.h2[i] + pt.q1_mode(i) * gains.h1[i] + cfg.sigma2_r;
        let (n0, n1) = (
            (cfg.pr_max / coef(0) / h) as usize,
            (cfg.pr_max / coef(1) / h) as usize,
        );
        let mut best = 0.0f64;
        let mut grid = pt.clone();
        for i in 0..=n0 {
            for j in 0..=n1 {
                grid.lambda_qr = vec![i as f64 * h, j as f64 * h];
                if objective::check_feasibility(&grid, &gains, &cfg).feasible {
                    best = best.max(objective::energy_efficiency(&grid, &gains, &cfg));
                }
            }
        }
        assert!(best > 0.0);
        assert!(
            out.ratio >= best * (1.0 - 1e-6),
            "{} < lattice {best}",
            out.ratio
        );
        assert!(
            out.ratio <= best * (1.0 + 1e-3),
            "{} vs lattice {best}",
            out.ratio
        );
    }

    /// Without harvesting, rate floors or binding caps the transceiver block
    /// separates per eigenvalue, so the lattice optimum of the ratio is the
    /// root of `mu -> sum_k max_x (f_k(x) - mu d_k x) - mu d_0`, found with
    /// one 1-D scan per variable.
    #[test]
    fn transceiver_block_matches_separable_lattice() {
        let (gains, _, pt) = setup();
        let cfg = NetworkConfig {
            rt_min: 0.0,
            p1_max: 1e3,
            p2_max: 1e3,
            pr_max: 1e4,
            ..NetworkConfig::default()
        };
        let prob = BlockProblem::new(
            &gains,
            &cfg,
            pt.clone(),
            BlockProblem::transceiver_vars(&cfg),
            false,
        );
        let out = dinkelbach(&prob, &prob.start(&pt), &SolverOptions::default()).unwrap();

        let (a, r) = (pt.alpha, &pt.lambda_qr);
        let c = &cfg;
        let mut terms: Vec<(Box<dyn Fn(f64) -> f64>, f64)> = Vec::new();
        for i in 0..2 {
            let (h1, h2, ri) = (gains.h1[i], gains.h2[i], r[i]);
            terms.push((
                Box::new(move |q| {
                    0.5 * (1.0 + ri * q * h1 * h2 / (c.sigma2_2 + c.sigma2_r * ri * h2)).log2()
                }),
                1.0 / c.xi_1 + ri * h1 / c.xi_r,
            ));
            terms.push((
                Box::new(move |q| {
                    0.5 * (1.0
                        + a * ri * q * h1 * h2
                            / (c.sigma2_d + a * c.sigma2_1 + a * c.sigma2_r * ri * h1))
                        .log2()
                }),
                1.0 / c.xi_2 + ri * h2 / c.xi_r,
            ));
        }
        let fixed = r.iter().map(|ri| ri * c.sigma2_r).sum::<f64>() / c.xi_r + c.pc_total;
        let (h, top) = (1e-4, 200_000);
        let excess = |mu: f64| {
            terms
                .iter()
                .map(|(f, d)| {
                    (0..=top)
                        .map(|k| f(k as f64 * h) - mu * d * k as f64 * h)
                        .fold(f64::MIN, f64::max)
                })
                .sum::<f64>()
                - mu * fixed
        };
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = prob.point(&out.x);
        assert!(
            x.lambda_q1
                .iter()
                .chain(&x.lambda_q2)
                .all(|&q| q < 0.5 * top as f64 * h),
            "{x:?}"
        );
        assert!(
            out.ratio >= lo * (1.0 - 1e-6),
            "{} < lattice {lo}",
            out.ratio
        );
        assert!(
            out.ratio <= lo * (1.0 + 1e-3),
            "{} vs lattice {lo}",
            out.ratio
        );
    }

    #[test]
    fn zero_caps_remove_variables() {
        let cfg = NetworkConfig {
            p1_max: 0.0,
            ..NetworkConfig::default()
        };
        let vars = BlockProblem::transceiver_vars(&cfg);
        assert!(vars.iter().all(|v| matches!(v, Var::Q2(_))));
    }
}
