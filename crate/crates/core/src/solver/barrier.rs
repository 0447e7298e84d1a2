//! Log-barrier interior-point method for small smooth concave programs
//!
//! ```text
//! maximize   f0(x)
//! subject to c_j(x) >= 0,  j = 1..m      (f0, c_j concave)
//! ```
//!
//! Each stage maximizes `t f0(x) + sum_j ln c_j(x)` by damped Newton steps
//! with a feasibility-preserving backtracking line search, then grows `t`.
//! The duality gap after centering is `m / t`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Value, gradient and Hessian of a scalar function.
#[derive(Debug, Clone)]
pub struct Eval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Eval {
    pub fn new(value: f64, grad: DVector<f64>, hess: DMatrix<f64>) -> Self {
        Self { value, grad, hess }
    }

    /// Affine function: zero Hessian.
    pub fn affine(value: f64, grad: DVector<f64>) -> Self {
        let n = grad.len();
        Self {
            value,
            grad,
            hess: DMatrix::zeros(n, n),
        }
    }

    /// `x_k >= 0` written as a constraint.
    pub fn coordinate(x: &DVector<f64>, k: usize) -> Self {
        let mut grad = DVector::zeros(x.len());
        grad[k] = 1.0;
        Self::affine(x[k], grad)
    }
}

pub trait ConcaveProgram {
    fn dim(&self) -> usize;

    /// Concave objective.
    fn objective(&self, x: &DVector<f64>) -> Eval;

    /// Concave constraint functions, each required to be `>= 0`.
    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval>;

    fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective(x).value
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        self.constraints(x).into_iter().map(|c| c.value).collect()
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSettings {
    pub t0: f64,
    /// Factor applied to `t` after each centering stage (> 1).
    pub growth: f64,
    /// Target duality gap `m / t`.
    pub gap_tol: f64,
    pub max_newton_per_stage: usize,
    /// Return as soon as the objective exceeds this value.
    pub stop_above: Option<f64>,
}

impl BarrierSettings {
    pub fn from_options(opts: &crate::config::SolverOptions) -> Self {
        Self {
            t0: 1.0 / opts.barrier_mu0,
            growth: 1.0 / opts.barrier_shrink,
            gap_tol: opts.inner_tol,
            max_newton_per_stage: 100,
            stop_above: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierOutcome {
    pub x: DVector<f64>,
    pub objective: f64,
    pub newton_steps: usize,
    /// Norm of the Lagrangian gradient `grad f0 + sum_j (1 / (t c_j)) grad c_j`.
    pub kkt_residual: f64,
    /// Final `m / t`.
    pub gap: f64,
}

fn strictly_feasible(values: &[f64]) -> bool {
    values.iter().all(|&c| c > 0.0 && c.is_finite())
}

fn barrier_value<P: ConcaveProgram + ?Sized>(prog: &P, x: &DVector<f64>, t: f64) -> Option<f64> {
    let cons = prog.constraint_values(x);
    if !strictly_feasible(&cons) {
        return None;
    }
    let f = prog.objective_value(x);
    if !f.is_finite() {
        return None;
    }
    Some(t * f + cons.iter().map(|c| c.ln()).sum::<f64>())
}

/// Gradient and Hessian of the barrier-augmented objective.
fn barrier_derivatives<P: ConcaveProgram + ?Sized>(
    prog: &P,
    x: &DVector<f64>,
    t: f64,
) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let obj = prog.objective(x);
    let mut grad = obj.grad.scale(t);
    let mut hess = obj.hess.scale(t);
    for c in prog.constraints(x) {
        let inv = 1.0 / c.value;
        grad.axpy(inv, &c.grad, 1.0);
        hess += c.hess.scale(inv);
        hess.ger(-inv * inv, &c.grad, &c.grad, 1.0);
    }
    (grad, hess, obj.grad)
}

/// Solves `(-H) d = g` for a concave `H`, regularizing if `-H` is not PD.
fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let neg = -hess;
    let scale = neg
        .diagonal()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let mut shift = 0.0;
    for _ in 0..30 {
        let mut m = neg.clone();
        if shift > 0.0 {
            for i in 0..n {
                m[(i, i)] += shift;
            }
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(grad);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        shift = if shift == 0.0 {
            1e-12 * scale
        } else {
            shift * 10.0
        };
    }
    None
}

/// Maximizes `prog` from a strictly feasible `x0`.
pub fn maximize<P: ConcaveProgram + ?Sized>(
    prog: &P,
    x0: &DVector<f64>,
    settings: &BarrierSettings,
) -> Result<BarrierOutcome> {
    let mut x = x0.clone();
    if !strictly_feasible(&prog.constraint_values(&x)) {
        return Err(Error::Infeasible(
            "barrier start is not strictly feasible".into(),
        ));
    }
    let m = prog.constraint_values(&x).len().max(1) as f64;
    let mut t = settings.t0;
    let mut newton_steps = 0;

    loop {
        for _ in 0..settings.max_newton_per_stage {
            let (grad, hess, _) = barrier_derivatives(prog, &x, t);
            let Some(d) = newton_direction(&grad, &hess) else {
                return Err(Error::LineSearch);
            };
            let decrement2 = grad.dot(&d);
            if !(decrement2 > 1e-20) {
                break;
            }
            let phi0 = barrier_value(prog, &x, t).ok_or(Error::LineSearch)?;
            let quadratic = decrement2 < 0.0625;
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-14 {
                let trial = &x + d.scale(step);
                if let Some(phi) = barrier_value(prog, &trial, t) {
                    // inside the quadratic-convergence region the barrier
                    // value is too flat to test against rounding noise
                    if quadratic || phi >= phi0 + 0.25 * step * decrement2 {
                        x = trial;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                // rounding noise dominates the remaining progress
                break;
            }
            newton_steps += 1;
            if let Some(limit) = settings.stop_above {
                if prog.objective_value(&x) > limit {
                    return Ok(finish(prog, x, t, m, newton_steps));
                }
            }
        }
        if m / t < settings.gap_tol {
            break;
        }
        t *= settings.growth;
    }
    Ok(finish(prog, x, t, m, newton_steps))
}

fn finish<P: ConcaveProgram + ?Sized>(
    prog: &P,
    x: DVector<f64>,
    t: f64,
    m: f64,
    newton_steps: usize,
) -> BarrierOutcome {
    let obj = prog.objective(&x);
    let kkt_residual = kkt_residual(&obj.grad, &prog.constraints(&x), t);
    BarrierOutcome {
        objective: obj.value,
        kkt_residual,
        gap: m / t,
        x,
        newton_steps,
    }
}

/// Stationarity residual of the Lagrangian. Near-active constraints get
/// least-squares multipliers (their barrier estimates `1 / (t c_j)` are
/// dominated by rounding in `c_j`); a negative fitted multiplier counts
/// towards the residual.
fn kkt_residual(grad: &DVector<f64>, cons: &[Eval], t: f64) -> f64 {
    const ACTIVE: f64 = 1e-6;
    let mut r = grad.clone();
    let active: Vec<&Eval> = cons.iter().filter(|c| c.value < ACTIVE).collect();
    for c in cons.iter().filter(|c| c.value >= ACTIVE) {
        r.axpy(1.0 / (t * c.value), &c.grad, 1.0);
    }
    if active.is_empty() {
        return r.norm();
    }
    let g = DMatrix::from_columns(&active.iter().map(|c| c.grad.clone()).collect::<Vec<_>>());
    let svd = g.clone().svd(true, true);
    let Ok(lambda) = svd.solve(&(-&r), 1e-12) else {
        return r.norm();
    };
    let dual_violation: f64 = lambda.iter().map(|l| (-l).max(0.0)).sum();
    (r + g * lambda).norm() + dual_violation
}

/// Phase-I program: maximize `s` subject to `c_j(x) - s >= 0` and `s <= 1`.
struct PhaseOne<'a, P: ?Sized> {
    inner: &'a P,
}

impl<P: ConcaveProgram + ?Sized> ConcaveProgram for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn objective(&self, x: &DVector<f64>) -> Eval {
        let n = x.len();
        let mut grad = DVector::zeros(n);
        grad[n - 1] = 1.0;
        Eval::affine(x[n - 1], grad)
    }

    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval> {
        let n = x.len();
        let s = x[n - 1];
        let inner_x = x.rows(0, n - 1).into_owned();
        let mut out: Vec<Eval> = self
            .inner
            .constraints(&inner_x)
            .into_iter()
            .map(|c| {
                let mut grad = DVector::zeros(n);
                grad.rows_mut(0, n - 1).copy_from(&c.grad);
                grad[n - 1] = -1.0;
                let mut hess = DMatrix::zeros(n, n);
                hess.view_mut((0, 0), (n - 1, n - 1)).copy_from(&c.hess);
                Eval::new(c.value - s, grad, hess)
            })
            .collect();
        let mut cap = DVector::zeros(n);
        cap[n - 1] = -1.0;
        out.push(Eval::affine(1.0 - s, cap));
        out
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        let n = x.len();
        let s = x[n - 1];
        let inner_x = x.rows(0, n - 1).into_owned();
        let mut v: Vec<f64> = self
            .inner
            .constraint_values(&inner_x)
            .into_iter()
            .map(|c| c - s)
            .collect();
        v.push(1.0 - s);
        v
    }
}

/// Finds a strictly feasible point for `prog`'s constraints, starting from
/// any `x0`. Returns `x0` unchanged when it is already strictly feasible.
pub fn find_interior<P: ConcaveProgram + ?Sized>(
    prog: &P,
    x0: &DVector<f64>,
    settings: &BarrierSettings,
) -> Result<DVector<f64>> {
    let values = prog.constraint_values(x0);
    if strictly_feasible(&values) {
        return Ok(x0.clone());
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Infeasible(
            "constraints are not finite at the start point".into(),
        ));
    }
    let n = x0.len();
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(x0);
    // small margin below the worst slack, with a barrier weight that keeps
    // the first centering from pulling s far down
    let margin = 1e-3 * min.abs().max(1.0);
    z[n] = min.min(1.0) - margin;
    let phase = PhaseOne { inner: prog };
    let local = BarrierSettings {
        t0: (values.len() + 1) as f64 / margin,
        stop_above: Some(0.0),
        gap_tol: settings.gap_tol.max(1e-10),
        ..settings.clone()
    };
    let out = maximize(&phase, &z, &local)?;
    let x = out.x.rows(0, n).into_owned();
    if out.objective > 0.0 && strictly_feasible(&prog.constraint_values(&x)) {
        Ok(x)
    } else {
        Err(Error::Infeasible(format!(
            "no strictly feasible point (best min-slack {:e})",
            out.objective
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// maximize -(x - 2)^2 - (y - 2)^2  s.t.  x, y >= 0,  1 - x - y >= 0
    struct Projection;

    impl ConcaveProgram for Projection {
        fn dim(&self) -> usize {
            2
        }

        fn objective(&self, x: &DVector<f64>) -> Eval {
            let v = -(x[0] - 2.0).powi(2) - (x[1] - 2.0).powi(2);
            let g = DVector::from_vec(vec![-2.0 * (x[0] - 2.0), -2.0 * (x[1] - 2.0)]);
            Eval::new(v, g, DMatrix::from_diagonal_element(2, 2, -2.0))
        }

        fn constraints(&self, x: &DVector<f64>) -> Vec<Eval> {
            vec![
                Eval::coordinate(x, 0),
                Eval::coordinate(x, 1),
                Eval::affine(1.0 - x[0] - x[1], DVector::from_vec(vec![-1.0, -1.0])),
            ]
        }
    }

    fn settings() -> BarrierSettings {
        BarrierSettings {
            t0: 1.0,
            growth: 5.0,
            gap_tol: 1e-9,
            max_newton_per_stage: 100,
            stop_above: None,
        }
    }

    #[test]
    fn projection_onto_simplex_corner() {
        let out = maximize(&Projection, &DVector::from_vec(vec![0.1, 0.1]), &settings()).unwrap();
        assert!(
            (out.x[0] - 0.5).abs() < 1e-6 && (out.x[1] - 0.5).abs() < 1e-6,
            "{:?}",
            out.x
        );
        assert!(out.gap < 1e-9);
        assert!(out.kkt_residual < 1e-6, "{}", out.kkt_residual);
    }

    #[test]
    fn rejects_infeasible_start() {
        assert!(maximize(&Projection, &DVector::from_vec(vec![2.0, 2.0]), &settings()).is_err());
    }

    #[test]
    fn phase_one_recovers_interior() {
        let x = find_interior(
            &Projection,
            &DVector::from_vec(vec![3.0, -1.0]),
            &settings(),
        )
        .unwrap();
        assert!(Projection.constraint_values(&x).iter().all(|&c| c > 0.0));
    }

    struct Empty;

    impl ConcaveProgram for Empty {
        fn dim(&self) -> usize {
            1
        }

        fn objective(&self, x: &DVector<f64>) -> Eval {
            Eval::affine(x[0], DVector::from_vec(vec![1.0]))
        }

        // x >= 1 and x <= 0
        fn constraints(&self, x: &DVector<f64>) -> Vec<Eval> {
            vec![
                Eval::affine(x[0] - 1.0, DVector::from_vec(vec![1.0])),
                Eval::affine(-x[0], DVector::from_vec(vec![-1.0])),
            ]
        }
    }

    #[test]
    fn phase_one_reports_empty_interior() {
        assert!(matches!(
            find_interior(&Empty, &DVector::from_vec(vec![0.5]), &settings()),
            Err(Error::Infeasible(_))
        ));
    }
}
