//! Joint local refinement over every free variable, including the
//! splitting factor.
//!
//! Block ascent stops improving wherever the harvesting constraint is
//! active: raising TR1's power needs a smaller splitting factor at the same
//! time, which no single block can do. Here all variables move together.
//! The problem is not concave (the relay power and harvested power are
//! bilinear), so the inner barrier solves only reach a local optimum.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::config::NetworkConfig;
use crate::model::ChannelGains;
use crate::objective::{self, SpectrumPoint, ALPHA_MIN};

use super::barrier::Eval;
use super::dinkelbach::FractionalProgram;

/// Value with gradient and Hessian in at most three local variables,
/// propagated through sums, products and logs.
#[derive(Debug, Clone, Copy)]
struct Jet {
    v: f64,
    g: Vector3<f64>,
    h: Matrix3<f64>,
}

impl Jet {
    fn constant(v: f64) -> Self {
        Self {
            v,
            g: Vector3::zeros(),
            h: Matrix3::zeros(),
        }
    }

    fn variable(v: f64, k: usize) -> Self {
        let mut j = Self::constant(v);
        j.g[k] = 1.0;
        j
    }

    fn add(&self, o: &Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            g: self.g + o.g,
            h: self.h + o.h,
        }
    }

    fn add_const(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }

    fn scale(&self, c: f64) -> Jet {
        Jet {
            v: c * self.v,
            g: self.g * c,
            h: self.h * c,
        }
    }

    fn mul(&self, o: &Jet) -> Jet {
        let cross = self.g * o.g.transpose();
        Jet {
            v: self.v * o.v,
            g: self.g * o.v + o.g * self.v,
            h: self.h * o.v + o.h * self.v + cross + cross.transpose(),
        }
    }

    fn ln(&self) -> Jet {
        let inv = 1.0 / self.v;
        Jet {
            v: self.v.ln(),
            g: self.g * inv,
            h: self.h * inv - self.g * self.g.transpose() * (inv * inv),
        }
    }
}

/// Global positions of a jet's local variables (`None` for held values).
type Slots = [Option<usize>; 3];

/// Dense accumulator in the global variables.
struct Acc {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Acc {
    fn new(value: f64, n: usize) -> Self {
        Self {
            value,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    fn add(&mut self, j: &Jet, slots: &Slots, scale: f64) {
        self.value += scale * j.v;
        for (a, sa) in slots.iter().enumerate() {
            let Some(ga) = *sa else { continue };
            self.grad[ga] += scale * j.g[a];
            for (b, sb) in slots.iter().enumerate() {
                if let Some(gb) = *sb {
                    self.hess[(ga, gb)] += scale * j.h[(a, b)];
                }
            }
        }
    }

    fn add_linear(&mut self, k: Option<usize>, c: f64) {
        if let Some(k) = k {
            self.grad[k] += c;
        }
    }

    fn into_eval(self) -> Eval {
        Eval::new(self.value, self.grad, self.hess)
    }
}

/// Global index of each variable, `None` where it is held fixed.
struct Layout {
    alpha: Option<usize>,
    q1: Vec<Option<usize>>,
    q2: Vec<Option<usize>>,
    r: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub(crate) struct JointProblem<'a> {
    gains: &'a ChannelGains,
    cfg: &'a NetworkConfig,
    base: SpectrumPoint,
    relay_free: bool,
    alpha_free: bool,
    eh: bool,
}

impl<'a> JointProblem<'a> {
    pub fn new(
        gains: &'a ChannelGains,
        cfg: &'a NetworkConfig,
        base: SpectrumPoint,
        relay_free: bool,
        alpha_free: bool,
        eh: bool,
    ) -> Self {
        Self {
            gains,
            cfg,
            base,
            relay_free,
            alpha_free,
            eh,
        }
    }

    fn q1_free(&self) -> bool {
        self.cfg.p1_max > 0.0
    }

    fn q2_free(&self) -> bool {
        self.cfg.p2_max > 0.0
    }

    fn r_free(&self) -> bool {
        self.relay_free && self.cfg.pr_max > 0.0
    }

    pub fn dim(&self) -> usize {
        let c = self.cfg;
        usize::from(self.alpha_free)
            + if self.q1_free() { c.n1 } else { 0 }
            + if self.q2_free() { c.n2 } else { 0 }
            + if self.r_free() { c.nr } else { 0 }
    }

    /// Layout: alpha, q1, q2, r (free parts only).
    pub fn start(&self, pt: &SpectrumPoint) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.dim());
        if self.alpha_free {
            v.push(pt.alpha);
        }
        if self.q1_free() {
            v.extend(&pt.lambda_q1);
        }
        if self.q2_free() {
            v.extend(&pt.lambda_q2);
        }
        if self.r_free() {
            v.extend(&pt.lambda_qr);
        }
        DVector::from_vec(v)
    }

    pub fn point(&self, x: &DVector<f64>) -> SpectrumPoint {
        let mut pt = self.base.clone();
        let mut k = 0;
        let mut take = |dst: &mut [f64]| {
            for d in dst.iter_mut() {
                *d = x[k];
                k += 1;
            }
        };
        if self.alpha_free {
            take(std::slice::from_mut(&mut pt.alpha));
        }
        if self.q1_free() {
            take(&mut pt.lambda_q1);
        }
        if self.q2_free() {
            take(&mut pt.lambda_q2);
        }
        if self.r_free() {
            take(&mut pt.lambda_qr);
        }
        pt
    }

    fn layout(&self) -> Layout {
        let c = self.cfg;
        let mut k = 0;
        let mut slots = |len: usize, free: bool| -> Vec<Option<usize>> {
            (0..len)
                .map(|_| {
                    free.then(|| {
                        k += 1;
                        k - 1
                    })
                })
                .collect()
        };
        let alpha = slots(1, self.alpha_free)[0];
        let q1 = slots(c.n1, self.q1_free());
        let q2 = slots(c.n2, self.q2_free());
        let r = slots(c.nr, self.r_free());
        Layout { alpha, q1, q2, r }
    }

    /// Rates of both directions in bits.
    fn rates(&self, pt: &SpectrumPoint, lay: &Layout, n: usize) -> (Acc, Acc) {
        let c = self.cfg;
        let bits = 0.5 / LN_2;
        let mut r1 = Acc::new(0.0, n);
        let mut r2 = Acc::new(0.0, n);
        for i in 0..self.gains.modes() {
            let (h1, h2) = (self.gains.h1[i], self.gains.h2[i]);
            let r = Jet::variable(pt.lambda_qr[i], 0);
            let r_slot = lay.r[i];
            // TR2 -> TR1 in (r, alpha, q2): c_D + alpha (sigma_1^2 + r h1 (sigma_R^2 + h2 q2))
            let alpha = Jet::variable(pt.alpha, 1);
            let q2 = Jet::variable(pt.q2_mode(i), 2);
            let inner_a = r
                .mul(&q2.scale(h1 * h2).add_const(c.sigma2_r * h1))
                .add_const(c.sigma2_1);
            let inner_b = r.scale(c.sigma2_r * h1).add_const(c.sigma2_1);
            let da = alpha.mul(&inner_a).add_const(c.sigma2_d);
            let db = alpha.mul(&inner_b).add_const(c.sigma2_d);
            if da.v > 0.0 && db.v > 0.0 {
                let slots = [r_slot, lay.alpha, lay.q2.get(i).copied().flatten()];
                r1.add(&da.ln().add(&db.ln().scale(-1.0)), &slots, bits);
            }
            // TR1 -> TR2 in (r, q1): sigma_2^2 + r h2 (sigma_R^2 + h1 q1)
            let q1 = Jet::variable(pt.q1_mode(i), 1);
            let ea = r
                .mul(&q1.scale(h1 * h2).add_const(c.sigma2_r * h2))
                .add_const(c.sigma2_2);
            let eb = r.scale(c.sigma2_r * h2).add_const(c.sigma2_2);
            if ea.v > 0.0 && eb.v > 0.0 {
                let slots = [r_slot, lay.q1.get(i).copied().flatten(), None];
                r2.add(&ea.ln().add(&eb.ln().scale(-1.0)), &slots, bits);
            }
        }
        (r1, r2)
    }

    /// Relay power and TR1's received power (signal plus antenna noise).
    fn powers(&self, pt: &SpectrumPoint, lay: &Layout, n: usize) -> (Acc, Acc) {
        let c = self.cfg;
        let mut relay = Acc::new(0.0, n);
        let mut recv = Acc::new(c.sigma2_1, n);
        for i in 0..self.gains.modes() {
            let (h1, h2) = (self.gains.h1[i], self.gains.h2[i]);
            let r = Jet::variable(pt.lambda_qr[i], 0);
            let q1 = Jet::variable(pt.q1_mode(i), 1);
            let q2 = Jet::variable(pt.q2_mode(i), 2);
            let p = r.mul(&q2.scale(h2).add(&q1.scale(h1)).add_const(c.sigma2_r));
            let slots = [
                lay.r[i],
                lay.q1.get(i).copied().flatten(),
                lay.q2.get(i).copied().flatten(),
            ];
            relay.add(&p, &slots, 1.0);
            recv.add(&p, &slots, h1);
        }
        (relay, recv)
    }

    /// `value - sum` of the given slots.
    fn budget(value: f64, used: f64, slots: &[Option<usize>], n: usize) -> Eval {
        let mut acc = Acc::new(value - used, n);
        for &k in slots {
            acc.add_linear(k, -1.0);
        }
        acc.into_eval()
    }
}

impl FractionalProgram for JointProblem<'_> {
    fn dim(&self) -> usize {
        JointProblem::dim(self)
    }

    fn numerator(&self, x: &DVector<f64>) -> Eval {
        let (mut r1, r2) = self.rates(&self.point(x), &self.layout(), x.len());
        r1.value += r2.value;
        r1.grad += r2.grad;
        r1.hess += r2.hess;
        r1.into_eval()
    }

    fn denominator(&self, x: &DVector<f64>) -> Eval {
        let c = self.cfg;
        let pt = self.point(x);
        let lay = self.layout();
        let (relay, _) = self.powers(&pt, &lay, x.len());
        let mut g = relay.grad / c.xi_r;
        for &k in lay.q1.iter().flatten() {
            g[k] += 1.0 / c.xi_1;
        }
        for &k in lay.q2.iter().flatten() {
            g[k] += 1.0 / c.xi_2;
        }
        let value =
            pt.power_tr1() / c.xi_1 + pt.power_tr2() / c.xi_2 + relay.value / c.xi_r + c.pc_total;
        Eval::new(value, g, relay.hess / c.xi_r)
    }

    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval> {
        let c = self.cfg;
        let n = x.len();
        let pt = self.point(x);
        let lay = self.layout();
        let mut out = Vec::new();
        let first_eig = usize::from(self.alpha_free);
        for k in first_eig..n {
            out.push(Eval::coordinate(x, k));
        }
        if let Some(a) = lay.alpha {
            out.push(Eval::new(
                pt.alpha - ALPHA_MIN,
                Eval::coordinate(x, a).grad,
                DMatrix::zeros(n, n),
            ));
            out.push(Self::budget(1.0 - ALPHA_MIN, pt.alpha, &[lay.alpha], n));
        }
        if self.q1_free() {
            out.push(Self::budget(c.p1_max, pt.power_tr1(), &lay.q1, n));
        }
        if self.q2_free() {
            out.push(Self::budget(c.p2_max, pt.power_tr2(), &lay.q2, n));
        }
        let (relay, recv) = self.powers(&pt, &lay, n);
        out.push(Eval::new(c.pr_max - relay.value, -relay.grad, -relay.hess));
        let floor = 0.5 * c.rt_min;
        if floor > 0.0 {
            let (r1, r2) = self.rates(&pt, &lay, n);
            out.push(Eval::new(r1.value - floor, r1.grad, r1.hess));
            out.push(Eval::new(r2.value - floor, r2.grad, r2.hess));
        }
        if self.eh {
            // eta (1 - alpha) recv - (sum q1 + circuits)
            let k = c.eh_efficiency * (1.0 - pt.alpha);
            let need = Self::budget(0.0, pt.power_tr1() + c.tr1_circuit_power(), &lay.q1, n);
            let mut grad = recv.grad.scale(k) + need.grad;
            let mut hess = recv.hess.scale(k);
            if let Some(a) = lay.alpha {
                grad[a] -= c.eh_efficiency * recv.value;
                for j in 0..n {
                    hess[(a, j)] -= c.eh_efficiency * recv.grad[j];
                    hess[(j, a)] -= c.eh_efficiency * recv.grad[j];
                }
            }
            out.push(Eval::new(k * recv.value + need.value, grad, hess));
        }
        out
    }

    fn numerator_value(&self, x: &DVector<f64>) -> f64 {
        objective::sum_rate(&self.point(x), self.gains, self.cfg)
    }

    fn denominator_value(&self, x: &DVector<f64>) -> f64 {
        objective::consumed_power(&self.point(x), self.gains, self.cfg)
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        let c = self.cfg;
        let pt = self.point(x);
        let first_eig = usize::from(self.alpha_free);
        let mut out: Vec<f64> = x.iter().skip(first_eig).copied().collect();
        if self.alpha_free {
            out.push(pt.alpha - ALPHA_MIN);
            out.push(1.0 - ALPHA_MIN - pt.alpha);
        }
        if self.q1_free() {
            out.push(c.p1_max - pt.power_tr1());
        }
        if self.q2_free() {
            out.push(c.p2_max - pt.power_tr2());
        }
        out.push(c.pr_max - objective::relay_power(&pt, self.gains, c));
        let floor = 0.5 * c.rt_min;
        if floor > 0.0 {
            out.push(objective::rate_tr1(&pt, self.gains, c) - floor);
            out.push(objective::rate_tr2(&pt, self.gains, c) - floor);
        }
        if self.eh {
            out.push(
                objective::harvested_power(&pt, self.gains, c) - objective::eh_requirement(&pt, c),
            );
        }
        out
    }
}
