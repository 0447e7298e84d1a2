//! Channel realizations and their joint decomposition.
//!
//! Both channels are written as `H_i = U_H diag(lambda_hi)^{1/2} V_hi^H`
//! with one left unitary shared by the two links. In
//! [`ChannelMode::SharedLeftUnitary`] the realization is drawn directly in
//! that form, so the closed-form precoder directions are exactly optimal.
//! [`ChannelMode::IidGaussian`] draws ordinary Rayleigh channels and only
//! approximates the shared structure.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ChannelMode {
    #[default]
    SharedLeftUnitary,
    IidGaussian,
}

impl FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" | "shared-left-unitary" => Ok(Self::SharedLeftUnitary),
            "iid" | "iid-gaussian" => Ok(Self::IidGaussian),
            _ => Err(Error::Config(format!(
                "unknown channel mode {s:?} (expected shared|iid)"
            ))),
        }
    }
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SharedLeftUnitary => "shared",
            Self::IidGaussian => "iid",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// TR1 -> relay, `nr x n1`.
    pub h1: CMatrix,
    /// TR2 -> relay, `nr x n2`.
    pub h2: CMatrix,
    pub u_h: CMatrix,
    /// Channel eigenvalues (squared singular values), descending, zero-padded to `nr`.
    pub lambda_h1: Vec<f64>,
    pub lambda_h2: Vec<f64>,
    pub v_h1: CMatrix,
    pub v_h2: CMatrix,
    pub mode: ChannelMode,
    /// True when `u_h` is exactly the left unitary of both channels.
    pub shared_exact: bool,
}

/// Per-mode channel gains, the only channel data the scalar objective needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

impl ChannelGains {
    pub fn new(h1: Vec<f64>, h2: Vec<f64>) -> Result<Self> {
        if h1.len() != h2.len() {
            return Err(Error::Dimension(format!(
                "gain vectors have lengths {} and {}",
                h1.len(),
                h2.len()
            )));
        }
        if h1.iter().chain(&h2).any(|&g| !(g >= 0.0)) {
            return Err(Error::Dimension("channel gains must be >= 0".into()));
        }
        Ok(Self { h1, h2 })
    }

    /// Number of relay modes.
    pub fn modes(&self) -> usize {
        self.h1.len()
    }
}

/// Borrowed view of a realization's decomposition.
#[derive(Debug, Clone, Copy)]
pub struct Spectra<'a> {
    pub lambda_h1: &'a [f64],
    pub lambda_h2: &'a [f64],
    pub u_h: &'a CMatrix,
    pub v_h1: &'a CMatrix,
    pub v_h2: &'a CMatrix,
}

impl ChannelRealization {
    pub fn gains(&self) -> ChannelGains {
        ChannelGains {
            h1: self.lambda_h1.clone(),
            h2: self.lambda_h2.clone(),
        }
    }

    /// Relative Frobenius residual of `h_i` against its stored decomposition.
    pub fn reconstruction_residual(&self) -> (f64, f64) {
        let nr = self.u_h.nrows();
        let res = |h: &CMatrix, lambda: &[f64], v: &CMatrix| {
            let roots: Vec<f64> = lambda.iter().map(|l| l.max(0.0).sqrt()).collect();
            let rebuilt = &self.u_h * linalg::rect_diag(nr, v.nrows(), &roots) * v.adjoint();
            let scale = h.norm();
            let diff = (rebuilt - h).norm();
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        };
        (
            res(&self.h1, &self.lambda_h1, &self.v_h1),
            res(&self.h2, &self.lambda_h2, &self.v_h2),
        )
    }
}

/// Returns the stored decomposition without recomputing anything.
pub fn channel_spectra(ch: &ChannelRealization) -> Spectra<'_> {
    Spectra {
        lambda_h1: &ch.lambda_h1,
        lambda_h2: &ch.lambda_h2,
        u_h: &ch.u_h,
        v_h1: &ch.v_h1,
        v_h2: &ch.v_h2,
    }
}

/// Draws one channel realization. Pure function of `(config, seed, mode)`.
pub fn generate_channels(
    config: &NetworkConfig,
    seed: u64,
    mode: ChannelMode,
) -> Result<ChannelRealization> {
    let (n1, n2, nr) = (config.n1, config.n2, config.nr);
    if n1 == 0 || n2 == 0 || nr == 0 {
        return Err(Error::Config(format!(
            "antenna counts must be positive (n1={n1}, n2={n2}, nr={nr})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        ChannelMode::SharedLeftUnitary => {
            let u_h = linalg::haar_unitary(nr, &mut rng);
            let v_h1 = linalg::haar_unitary(n1, &mut rng);
            let v_h2 = linalg::haar_unitary(n2, &mut rng);
            let lambda_h1 = gaussian_spectrum(nr, n1, &mut rng);
            let lambda_h2 = gaussian_spectrum(nr, n2, &mut rng);
            let compose = |lambda: &[f64], v: &CMatrix| {
                let roots: Vec<f64> = lambda.iter().map(|l| l.sqrt()).collect();
                &u_h * linalg::rect_diag(nr, v.nrows(), &roots) * v.adjoint()
            };
            let h1 = compose(&lambda_h1, &v_h1);
            let h2 = compose(&lambda_h2, &v_h2);
            Ok(ChannelRealization {
                h1,
                h2,
                u_h,
                lambda_h1,
                lambda_h2,
                v_h1,
                v_h2,
                mode,
                shared_exact: true,
            })
        }
        ChannelMode::IidGaussian => {
            let h1 = linalg::complex_gaussian(nr, n1, &mut rng);
            let h2 = linalg::complex_gaussian(nr, n2, &mut rng);
            let (u_h, lambda_h1, v_h1) = svd_desc(&h1);
            let (_, lambda_h2, v_h2) = svd_desc(&h2);
            Ok(ChannelRealization {
                h1,
                h2,
                u_h,
                lambda_h1,
                lambda_h2,
                v_h1,
                v_h2,
                mode,
                shared_exact: false,
            })
        }
    }
}

/// Squared singular values of an i.i.d. CN(0,1) `rows x cols` matrix,
/// descending and zero-padded to `rows`.
fn gaussian_spectrum(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let g = linalg::complex_gaussian(rows, cols, rng);
    let gram = &g * g.adjoint();
    let (values, _) = linalg::hermitian_eigen_desc(&gram);
    let mut lambda: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
    for v in lambda.iter_mut().skip(rows.min(cols)) {
        *v = 0.0;
    }
    lambda
}

/// Full SVD `h = U diag(lambda)^{1/2} V^H` with descending eigenvalues,
/// `U` square `nr x nr` and `V` square `n x n`.
fn svd_desc(h: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let (nr, n) = h.shape();
    let (v_values, v) = linalg::hermitian_eigen_desc(&(h.adjoint() * h));
    let (_, mut u) = linalg::hermitian_eigen_desc(&(h * h.adjoint()));
    let k = nr.min(n);
    let mut lambda = vec![0.0; nr];
    for j in 0..k {
        lambda[j] = v_values[j].max(0.0);
        // rotate u_j so that u_j^H h v_j is real and positive
        let coupling = (u.column(j).adjoint() * h * v.column(j))[(0, 0)];
        let norm = coupling.norm();
        if norm > 0.0 {
            let phase = coupling / norm;
            for i in 0..nr {
                u[(i, j)] *= phase;
            }
        }
    }
    (u, lambda, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n1: usize, n2: usize, nr: usize) -> NetworkConfig {
        NetworkConfig {
            n1,
            n2,
            nr,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn shared_mode_reconstructs_exactly() {
        let ch = generate_channels(&cfg(2, 2, 2), 7, ChannelMode::SharedLeftUnitary).unwrap();
        let (r1, r2) = ch.reconstruction_residual();
        assert!(r1 < 1e-10 && r2 < 1e-10, "{r1} {r2}");
        for u in [&ch.u_h, &ch.v_h1, &ch.v_h2] {
            assert!(linalg::unitarity_residual(u) < 1e-10);
        }
        assert!(ch.shared_exact);
    }

    #[test]
    fn generation_is_deterministic() {
        for mode in [ChannelMode::SharedLeftUnitary, ChannelMode::IidGaussian] {
            let a = generate_channels(&cfg(2, 2, 2), 7, mode).unwrap();
            let b = generate_channels(&cfg(2, 2, 2), 7, mode).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn eigenvalues_descending_nonnegative() {
        for seed in 0..20 {
            for mode in [ChannelMode::SharedLeftUnitary, ChannelMode::IidGaussian] {
                let ch = generate_channels(&cfg(3, 2, 3), seed, mode).unwrap();
                for l in [&ch.lambda_h1, &ch.lambda_h2] {
                    assert_eq!(l.len(), 3);
                    assert!(l.iter().all(|&v| v >= 0.0));
                    assert!(l.windows(2).all(|w| w[0] >= w[1]));
                }
                // n2 = 2 < nr = 3: last entry is padding
                assert_eq!(ch.lambda_h2[2], 0.0);
            }
        }
    }

    #[test]
    fn iid_mode_decomposes_first_channel_exactly() {
        let ch = generate_channels(&cfg(2, 2, 2), 21, ChannelMode::IidGaussian).unwrap();
        let (r1, _) = ch.reconstruction_residual();
        assert!(r1 < 1e-10, "{r1}");
        assert!(!ch.shared_exact);
    }

    #[test]
    fn non_square_shapes() {
        let ch = generate_channels(&cfg(3, 1, 2), 4, ChannelMode::SharedLeftUnitary).unwrap();
        assert_eq!(ch.h1.shape(), (2, 3));
        assert_eq!(ch.h2.shape(), (2, 1));
        assert_eq!(ch.v_h1.shape(), (3, 3));
        let (r1, r2) = ch.reconstruction_residual();
        assert!(r1 < 1e-10 && r2 < 1e-10);
    }

    #[test]
    fn rejects_zero_antennas() {
        assert!(generate_channels(&cfg(0, 2, 2), 1, ChannelMode::SharedLeftUnitary).is_err());
    }

    #[test]
    fn spectra_accessor_returns_stored_values() {
        let mut ch = generate_channels(&cfg(2, 2, 2), 1, ChannelMode::SharedLeftUnitary).unwrap();
        ch.lambda_h1 = vec![4.0, 1.0];
        assert_eq!(channel_spectra(&ch).lambda_h1, &[4.0, 1.0]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "shared".parse::<ChannelMode>().unwrap(),
            ChannelMode::SharedLeftUnitary
        );
        assert_eq!(
            "iid".parse::<ChannelMode>().unwrap(),
            ChannelMode::IidGaussian
        );
        assert!("x".parse::<ChannelMode>().is_err());
    }
}
