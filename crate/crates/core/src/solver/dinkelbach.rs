//! Dinkelbach's method for concave-over-affine fractional programs.
//!
//! `max f(x) / g(x)` over a convex set is solved through the parametric
//! problems `F(mu) = max f(x) - mu g(x)`, updating `mu` to the ratio at the
//! maximizer until `F(mu) <= tol`.

use nalgebra::DVector;

use crate::config::SolverOptions;
use crate::error::{Error, Result};

use super::barrier::{self, BarrierSettings, ConcaveProgram, Eval};

/// `f` concave, `g` affine and positive on the feasible set, every
/// constraint concave and required `>= 0`.
pub trait FractionalProgram {
    fn dim(&self) -> usize;
    fn numerator(&self, x: &DVector<f64>) -> Eval;
    fn denominator(&self, x: &DVector<f64>) -> Eval;
    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval>;

    fn numerator_value(&self, x: &DVector<f64>) -> f64 {
        self.numerator(x).value
    }

    fn denominator_value(&self, x: &DVector<f64>) -> f64 {
        self.denominator(x).value
    }

    /// Constraint values only, in the order of [`Self::constraints`].
    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        self.constraints(x).into_iter().map(|c| c.value).collect()
    }

    fn ratio(&self, x: &DVector<f64>) -> f64 {
        self.numerator_value(x) / self.denominator_value(x)
    }
}

#[derive(Debug, Clone, Copy)]
enum Goal {
    /// `f - mu g`
    Gap(f64),
    /// `-g`: least denominator, used to break ties at zero numerator.
    LeastDenominator,
}

struct Parametric<'a, P: ?Sized> {
    prob: &'a P,
    goal: Goal,
}

impl<P: FractionalProgram + ?Sized> ConcaveProgram for Parametric<'_, P> {
    fn dim(&self) -> usize {
        self.prob.dim()
    }

    fn objective(&self, x: &DVector<f64>) -> Eval {
        let g = self.prob.denominator(x);
        match self.goal {
            Goal::Gap(mu) => {
                let f = self.prob.numerator(x);
                Eval::new(
                    f.value - mu * g.value,
                    f.grad - g.grad.scale(mu),
                    f.hess - g.hess.scale(mu),
                )
            }
            Goal::LeastDenominator => Eval::new(-g.value, -g.grad, -g.hess),
        }
    }

    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval> {
        self.prob.constraints(x)
    }

    fn objective_value(&self, x: &DVector<f64>) -> f64 {
        let g = self.prob.denominator_value(x);
        match self.goal {
            Goal::Gap(mu) => self.prob.numerator_value(x) - mu * g,
            Goal::LeastDenominator => -g,
        }
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        self.prob.constraint_values(x)
    }
}

/// Feasible-set view for phase-I.
struct Constraints<'a, P: ?Sized>(&'a P);

impl<P: FractionalProgram + ?Sized> ConcaveProgram for Constraints<'_, P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn objective(&self, x: &DVector<f64>) -> Eval {
        Eval::affine(0.0, DVector::zeros(x.len()))
    }

    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval> {
        self.0.constraints(x)
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        self.0.constraint_values(x)
    }
}

#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub x: DVector<f64>,
    /// `f(x) - mu g(x)`.
    pub value: f64,
    pub newton_steps: usize,
    pub kkt_residual: f64,
    /// Final barrier duality gap `m / t`.
    pub gap: f64,
}

/// Maximizes `f - mu g` over the feasible set, starting from any point
/// (phase-I runs first when `x0` is not strictly feasible).
pub fn solve_inner<P: FractionalProgram + ?Sized>(
    mu: f64,
    prob: &P,
    x0: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<InnerSolution> {
    let settings = BarrierSettings::from_options(opts);
    let start = barrier::find_interior(&Constraints(prob), x0, &settings)?;
    inner_from(prob, Goal::Gap(mu), &start, &settings)
}

fn inner_from<P: FractionalProgram + ?Sized>(
    prob: &P,
    goal: Goal,
    start: &DVector<f64>,
    settings: &BarrierSettings,
) -> Result<InnerSolution> {
    let program = Parametric { prob, goal };
    let out = barrier::maximize(&program, start, settings)?;
    Ok(InnerSolution {
        value: out.objective,
        x: out.x,
        newton_steps: out.newton_steps,
        kkt_residual: out.kkt_residual,
        gap: out.gap,
    })
}

#[derive(Debug, Clone)]
pub struct DinkelbachOutcome {
    pub x: DVector<f64>,
    /// Optimal ratio `f(x) / g(x)`.
    pub ratio: f64,
    pub iterations: usize,
    /// `mu` used by each inner solve.
    pub mu_history: Vec<f64>,
    /// `F(mu)` after each inner solve.
    pub gap_history: Vec<f64>,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Runs Dinkelbach's iteration from `x0`. `mu` starts at zero, or at the
/// ratio of the strictly feasible start when that ratio is negative.
///
/// Returns [`Error::Infeasible`] when no strictly feasible point exists.
/// Hitting the iteration cap is reported through `converged = false` with
/// the best iterate.
pub fn dinkelbach<P: FractionalProgram + ?Sized>(
    prob: &P,
    x0: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<DinkelbachOutcome> {
    let settings = BarrierSettings::from_options(opts);
    let mut x = barrier::find_interior(&Constraints(prob), x0, &settings)?;
    let start_ratio = prob.ratio(&x);
    let mut mu = if start_ratio.is_finite() {
        start_ratio.min(0.0)
    } else {
        0.0
    };
    let mut mu_history = Vec::new();
    let mut gap_history = Vec::new();
    let mut kkt_residual = f64::INFINITY;
    let mut converged = false;

    for _ in 0..opts.max_dinkelbach_iters {
        let inner = inner_from(prob, Goal::Gap(mu), &x, &settings)?;
        mu_history.push(mu);
        gap_history.push(inner.value);
        x = inner.x;
        kkt_residual = inner.kkt_residual;
        if inner.value <= opts.dinkelbach_tol {
            converged = true;
            break;
        }
        let next = prob.ratio(&x);
        if !(next > mu) {
            // numerical floor: F is positive only through rounding
            converged = true;
            break;
        }
        mu = next;
    }

    // every feasible point is optimal when the best numerator is zero
    if converged
        && mu_history.len() == 1
        && mu == 0.0
        && prob.numerator_value(&x) <= opts.dinkelbach_tol
    {
        let tie = inner_from(prob, Goal::LeastDenominator, &x, &settings)?;
        x = tie.x;
    }

    Ok(DinkelbachOutcome {
        ratio: prob.ratio(&x),
        iterations: mu_history.len(),
        x,
        mu_history,
        gap_history,
        kkt_residual,
        converged,
    })
}

/// Same as [`dinkelbach`] but treats the iteration cap as an error.
pub fn dinkelbach_strict<P: FractionalProgram + ?Sized>(
    prob: &P,
    x0: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<DinkelbachOutcome> {
    let out = dinkelbach(prob, x0, opts)?;
    if out.converged {
        Ok(out)
    } else {
        Err(Error::NotConverged {
            iterations: out.iterations,
        })
    }
}
