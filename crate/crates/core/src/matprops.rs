//! Executable eigenvalue bounds for traces and determinants of Hermitian
//! matrix pairs.
//!
//! Pairing convention: `lambda` is always sorted descending; "same order"
//! pairs it with `gamma` descending, "opposite order" with `gamma`
//! ascending.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

const HERMITIAN_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const PD_MIN_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct HermitianPair {
    pub a: CMatrix,
    pub b: CMatrix,
    /// Eigenvalues of `a`, descending.
    pub eig_a: Vec<f64>,
    /// Eigenvalues of `b`, descending.
    pub eig_b: Vec<f64>,
}

impl HermitianPair {
    pub fn new(a: CMatrix, b: CMatrix) -> Result<Self> {
        if !a.is_square() || a.shape() != b.shape() {
            return Err(Error::Dimension(format!(
                "expected two equal square matrices, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b)] {
            let skew = (m - m.adjoint()).norm();
            if skew >= HERMITIAN_TOL * m.norm().max(1.0) {
                return Err(Error::Dimension(format!(
                    "{name} is not Hermitian (|M - M^H| = {skew:e})"
                )));
            }
        }
        let (eig_a, _) = linalg::hermitian_eigen_desc(&linalg::hermitian_part(&a));
        let (eig_b, _) = linalg::hermitian_eigen_desc(&linalg::hermitian_part(&b));
        Ok(Self { a, b, eig_a, eig_b })
    }

    fn dim(&self) -> usize {
        self.eig_a.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTriple {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl BoundTriple {
    /// `lower <= value <= upper` up to `abs_slack + rel_slack * |value|`.
    pub fn holds(&self, abs_slack: f64, rel_slack: f64) -> bool {
        let slack = abs_slack + rel_slack * self.value.abs();
        self.lower <= self.value + slack && self.value <= self.upper + slack
    }
}

fn clamp_psd(eig: &[f64]) -> Result<Vec<f64>> {
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    Ok(eig.iter().map(|&v| v.max(0.0)).collect())
}

/// `sum lambda_i(desc) gamma_i(asc) <= tr(AB) <= sum lambda_i(desc) gamma_i(desc)`.
pub fn trace_product_bounds(p: &HermitianPair) -> BoundTriple {
    let n = p.dim();
    let lower = (0..n).map(|i| p.eig_a[i] * p.eig_b[n - 1 - i]).sum();
    let upper = (0..n).map(|i| p.eig_a[i] * p.eig_b[i]).sum();
    let value = linalg::trace_re(&(&p.a * &p.b));
    BoundTriple {
        lower,
        value,
        upper,
    }
}

/// For PSD `A`, `B`:
/// `prod(lambda_i(desc) + gamma_i(desc)) <= det(A + B) <= prod(lambda_i(desc) + gamma_i(asc))`.
pub fn det_sum_bounds(p: &HermitianPair) -> Result<BoundTriple> {
    let la = clamp_psd(&p.eig_a)?;
    let gb = clamp_psd(&p.eig_b)?;
    let n = la.len();
    let lower = (0..n).map(|i| la[i] + gb[i]).product();
    let upper = (0..n).map(|i| la[i] + gb[n - 1 - i]).product();
    let value = (&p.a + &p.b).determinant().re;
    Ok(BoundTriple {
        lower,
        value,
        upper,
    })
}

/// For PD `A` and PSD `B`:
/// `prod(1 + gamma_i(desc)/lambda_i(desc)) <= det(I + A^-1 B) <= prod(1 + gamma_i(asc)/lambda_i(desc))`.
pub fn det_identity_inverse_bounds(p: &HermitianPair) -> Result<BoundTriple> {
    let min_a = p.eig_a.iter().copied().fold(f64::INFINITY, f64::min);
    if min_a < PD_MIN_EIGENVALUE {
        return Err(Error::Singular {
            min_eigenvalue: min_a,
        });
    }
    let gb = clamp_psd(&p.eig_b)?;
    let la = &p.eig_a;
    let n = la.len();
    let lower = (0..n).map(|i| 1.0 + gb[i] / la[i]).product();
    let upper = (0..n).map(|i| 1.0 + gb[n - 1 - i] / la[i]).product();
    let a_inv = p.a.clone().try_inverse().ok_or(Error::Singular {
        min_eigenvalue: min_a,
    })?;
    let value = (CMatrix::identity(n, n) + a_inv * &p.b).determinant().re;
    Ok(BoundTriple {
        lower,
        value,
        upper,
    })
}

/// Random Hermitian matrix with entries of order one.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = linalg::complex_gaussian(n, n, rng);
    linalg::hermitian_part(&g)
}

/// Random PSD matrix with rank `rank` (full rank when `rank >= n`).
pub fn random_psd<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> CMatrix {
    let g = linalg::complex_gaussian(n, rank.min(n).max(1), rng);
    linalg::hermitian_part(&(&g * g.adjoint()))
}

/// Random positive-definite matrix with eigenvalues in `[0.1, 5.1]`.
pub fn random_pd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let u = linalg::haar_unitary(n, rng);
    let dist = Uniform::new(0.1, 5.1).expect("valid range");
    let d: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    linalg::hermitian_part(&linalg::unitary_sandwich(&u, &d))
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub instances: usize,
    pub violations: usize,
    /// Largest bound violation observed (0 when none).
    pub worst_excess: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Runs the three randomized bound suites on `instances` random `dim x dim`
/// pairs each. Slack is `1e-9` absolute for the trace bound and `1e-9`
/// relative for the determinant bounds.
pub fn run_property_suites(instances: usize, dim: usize, seed: u64) -> Result<Vec<SuiteReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(3);

    let excess =
        |t: &BoundTriple, slack: f64| (t.lower - t.value).max(t.value - t.upper).max(0.0) - slack;

    let mut trace = SuiteReport {
        name: "trace_product_bounds",
        instances,
        violations: 0,
        worst_excess: 0.0,
    };
    for _ in 0..instances {
        let pair = HermitianPair::new(
            random_hermitian(dim, &mut rng),
            random_hermitian(dim, &mut rng),
        )?;
        let t = trace_product_bounds(&pair);
        if !t.holds(1e-9, 0.0) {
            trace.violations += 1;
            trace.worst_excess = trace.worst_excess.max(excess(&t, 1e-9));
        }
    }
    reports.push(trace);

    let mut det_sum = SuiteReport {
        name: "det_sum_bounds",
        instances,
        violations: 0,
        worst_excess: 0.0,
    };
    for _ in 0..instances {
        let rank_a = rng.random_range(1..=dim);
        let rank_b = rng.random_range(1..=dim);
        let pair = HermitianPair::new(
            random_psd(dim, rank_a, &mut rng),
            random_psd(dim, rank_b, &mut rng),
        )?;
        let t = det_sum_bounds(&pair)?;
        if !t.holds(1e-12, 1e-9) {
            det_sum.violations += 1;
            det_sum.worst_excess = det_sum.worst_excess.max(excess(&t, 1e-9 * t.value.abs()));
        }
    }
    reports.push(det_sum);

    let mut det_inv = SuiteReport {
        name: "det_identity_inverse_bounds",
        instances,
        violations: 0,
        worst_excess: 0.0,
    };
    for _ in 0..instances {
        let rank_b = rng.random_range(1..=dim);
        let pair = HermitianPair::new(random_pd(dim, &mut rng), random_psd(dim, rank_b, &mut rng))?;
        let t = det_identity_inverse_bounds(&pair)?;
        if !t.holds(1e-12, 1e-9) {
            det_inv.violations += 1;
            det_inv.worst_excess = det_inv.worst_excess.max(excess(&t, 1e-9 * t.value.abs()));
        }
    }
    reports.push(det_inv);

    Ok(reports)
}
