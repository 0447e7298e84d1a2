use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use twr_ee::objective;
use twr_ee::solver::barrier::Eval;
use twr_ee::solver::{
    alternate, default_init, dinkelbach, mapping_diagnostics, multistart, multistart_spectrum,
    solve_inner, solve_spectrum, FractionalProgram, Scheme,
};
use twr_ee::{
    generate_channels, ChannelMode, ChannelRealization, NetworkConfig, SolverOptions, ALPHA_MIN,
};

fn channel(cfg: &NetworkConfig, seed: u64) -> ChannelRealization {
    generate_channels(cfg, seed, ChannelMode::SharedLeftUnitary).unwrap()
}

/// `sum ln(1 + g_i x_i)` under `sum x_i <= p`, denominator 1.
struct WaterFilling {
    gains: Vec<f64>,
    budget: f64,
}

impl FractionalProgram for WaterFilling {
    fn dim(&self) -> usize {
        self.gains.len()
    }
    fn numerator(&self, x: &DVector<f64>) -> Eval {
        let n = self.dim();
        let mut hess = DMatrix::zeros(n, n);
        let mut grad = DVector::zeros(n);
        let mut value = 0.0;
        for (i, &g) in self.gains.iter().enumerate() {
            let s = 1.0 + g * x[i];
            value += s.ln();
            grad[i] = g / s;
            hess[(i, i)] = -g * g / (s * s);
        }
        Eval::new(value, grad, hess)
    }
    fn denominator(&self, x: &DVector<f64>) -> Eval {
        Eval::affine(1.0, DVector::zeros(x.len()))
    }
    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval> {
        let n = x.len();
        let mut out: Vec<Eval> = (0..n).map(|k| Eval::coordinate(x, k)).collect();
        out.push(Eval::affine(
            self.budget - x.sum(),
            DVector::from_element(n, -1.0),
        ));
        out
    }
}

/// Water level by bisection on `sum max(0, nu - 1/g_i) = p`.
fn water_level(gains: &[f64], p: f64) -> Vec<f64> {
    let fill = |nu: f64| {
        gains
            .iter()
            .map(|g| (nu - 1.0 / g).max(0.0))
            .collect::<Vec<_>>()
    };
    let (mut lo, mut hi) = (0.0, p + gains.iter().map(|g| 1.0 / g).fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fill(mid).iter().sum::<f64>() > p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    fill(0.5 * (lo + hi))
}

#[test]
fn inner_solver_reproduces_water_filling() {
    let opts = SolverOptions::default();
    for (gains, budget) in [
        (vec![2.0, 0.5], 1.0),
        (vec![3.0, 0.2], 0.5),
        (vec![1.0, 1.0], 2.0),
    ] {
        let wf = WaterFilling {
            gains: gains.clone(),
            budget,
        };
        let expect = water_level(&gains, budget);
        let inner = solve_inner(0.0, &wf, &DVector::from_element(2, 0.1), &opts).unwrap();
        for (x, e) in inner.x.iter().zip(&expect) {
            assert!(
                (x - e).abs() < 1e-6,
                "{gains:?}: {:?} vs {expect:?}",
                inner.x
            );
        }
        // denominator 1: one inner solve gives the maximum numerator
        let d = dinkelbach(&wf, &DVector::from_element(2, 0.1), &opts).unwrap();
        let best: f64 = gains
            .iter()
            .zip(&expect)
            .map(|(g, x)| (1.0 + g * x).ln())
            .sum();
        assert_relative_eq!(d.ratio, best, max_relative = 1e-7);
    }
}

/// Separable sum of concave logs under a shared budget and per-variable
/// caps: its lattice maximum is exact by dynamic programming over the budget.
#[test]
fn inner_solver_matches_lattice_dynamic_program() {
    let wf = WaterFilling {
        gains: vec![2.7, 1.3, 0.6, 0.25],
        budget: 1.5,
    };
    let inner = solve_inner(
        0.0,
        &wf,
        &DVector::from_element(4, 0.1),
        &SolverOptions::default(),
    )
    .unwrap();
    let h = 1e-3;
    let steps = (wf.budget / h).round() as usize;
    // best[k]: best value using at most k budget steps over the variables so far
    let mut best = vec![0.0f64; steps + 1];
    for &g in &wf.gains {
        let mut next = vec![f64::NEG_INFINITY; steps + 1];
        for k in 0..=steps {
            for j in 0..=k {
                next[k] = next[k].max(best[k - j] + (1.0 + g * j as f64 * h).ln());
            }
        }
        best = next;
    }
    let lattice = best[steps];
    assert!(inner.value >= lattice - 1e-9, "{} < {lattice}", inner.value);
    assert!(inner.value - lattice < 1e-3, "{} vs {lattice}", inner.value);
}

#[test]
fn restart_from_solution_is_a_fixed_point() {
    let cfg = NetworkConfig::default();
    let opts = SolverOptions::default();
    for seed in [3, 17] {
        let g = channel(&cfg, seed).gains();
        let first =
            solve_spectrum(Scheme::Proposed, &g, &cfg, &opts, &default_init(&g, &cfg)).unwrap();
        let again = solve_spectrum(Scheme::Proposed, &g, &cfg, &opts, &first.point).unwrap();
        assert!(again.converged);
        assert_eq!(again.outer_iterations(), 1);
        assert_relative_eq!(again.ee, first.ee, max_relative = 1e-9);
    }
}

#[test]
fn solution_respects_every_constraint() {
    let cfg = NetworkConfig::default();
    let opts = SolverOptions::default();
    let ch = channel(&cfg, 7);
    let sol = alternate(&ch, &cfg, &opts, &default_init(&ch.gains(), &cfg)).unwrap();
    assert!(sol.converged);
    assert!(sol.report.feasible);
    assert!(
        sol.report.slacks().iter().all(|&s| s >= -1e-8),
        "{:?}",
        sol.report.slacks()
    );
    assert!(sol.point.alpha >= ALPHA_MIN && sol.point.alpha <= 1.0 - ALPHA_MIN);
    assert!(sol.trace.is_monotone(1e-9));
    assert!(sol.precoders.exact);
    assert_relative_eq!(
        sol.ee,
        objective::energy_efficiency(&sol.point, &ch.gains(), &cfg),
        max_relative = 1e-12
    );
}

#[test]
fn silent_transmitter_forces_its_rate_to_zero() {
    let cfg = NetworkConfig {
        p1_max: 0.0,
        rt_min: 0.0,
        ..NetworkConfig::default()
    };
    let g = channel(&cfg, 4).gains();
    let sol = solve_spectrum(
        Scheme::Proposed,
        &g,
        &cfg,
        &SolverOptions::default(),
        &default_init(&g, &cfg),
    )
    .unwrap();
    assert!(sol.point.lambda_q1.iter().all(|&q| q == 0.0));
    assert_eq!(sol.rates.1, 0.0);
    assert!(sol.rates.0 > 0.0);
    // with a positive rate floor the TR1 -> TR2 direction cannot be served
    let strict = NetworkConfig { rt_min: 1.0, ..cfg };
    assert!(solve_spectrum(
        Scheme::Proposed,
        &g,
        &strict,
        &SolverOptions::default(),
        &default_init(&g, &strict)
    )
    .is_err());
}

#[test]
fn single_start_multistart_equals_alternate() {
    let cfg = NetworkConfig::default();
    let opts = SolverOptions::default();
    let ch = channel(&cfg, 12);
    let one = multistart(&ch, &cfg, &opts, 1).unwrap();
    let direct = alternate(&ch, &cfg, &opts, &default_init(&ch.gains(), &cfg)).unwrap();
    assert_eq!(one.ee, direct.ee);
    assert_eq!(one.point, direct.point);
}

#[test]
fn best_of_k_is_nondecreasing_in_k() {
    let cfg = NetworkConfig::default();
    let opts = SolverOptions {
        rng_seed: 5,
        ..SolverOptions::default()
    };
    let g = channel(&cfg, 21).gains();
    let ees: Vec<f64> = [1, 2, 4, 8]
        .iter()
        .map(|&k| {
            multistart_spectrum(Scheme::Proposed, &g, &cfg, &opts, k)
                .unwrap()
                .ee
        })
        .collect();
    assert!(ees.windows(2).all(|w| w[1] >= w[0]), "{ees:?}");
}

#[test]
fn mapping_properties_report() {
    let cfg = NetworkConfig::default();
    let opts = SolverOptions::default();
    let ch = channel(&cfg, 2);
    let alphas = [0.2, 0.4, 0.6, 0.8];
    let unit = mapping_diagnostics(&ch, &cfg, &opts, &alphas, 1.0);
    assert!(unit.feasible_points() > 0);
    assert_eq!(unit.positivity_violations, 0);
    assert!(unit.values.iter().flatten().all(|&m| m > 0.0 && m < 1.0));
    for gap in unit.scalability_gaps.iter().flatten() {
        assert_eq!(*gap, 0.0);
    }
    let scaled = mapping_diagnostics(&ch, &cfg, &opts, &alphas, 1.2);
    assert_eq!(scaled.values, unit.values);
    assert!(scaled.monotonicity_violations.len() < alphas.len());
}
