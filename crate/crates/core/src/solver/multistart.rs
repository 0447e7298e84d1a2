use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{NetworkConfig, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{ChannelGains, ChannelRealization};
use crate::objective::SpectrumPoint;

use super::alternate::{
    default_init, random_init, solve_spectrum, Scheme, Solution, SpectrumSolution,
};

/// Start points for a best-of-`k` run: the default start followed by
/// `k - 1` random ones. Start `i` depends only on `(rng_seed, i)`, so the
/// sets are nested in `k`.
pub fn multistart_inits(
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    seed: u64,
    k: usize,
) -> Vec<SpectrumPoint> {
    let mut inits = Vec::with_capacity(k);
    if k > 0 {
        inits.push(default_init(gains, cfg));
    }
    for i in 1..k {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        inits.push(random_init(gains, cfg, &mut rng));
    }
    inits
}

/// Best of `k` alternations in the eigenvalue domain. Ties keep the earliest start.
pub fn multistart_spectrum(
    scheme: Scheme,
    gains: &ChannelGains,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    k: usize,
) -> Result<SpectrumSolution> {
    if k == 0 {
        return Err(Error::Config("multistart needs k >= 1".into()));
    }
    let mut best: Option<SpectrumSolution> = None;
    let mut last_err = None;
    for init in multistart_inits(gains, cfg, opts.rng_seed, k) {
        match solve_spectrum(scheme, gains, cfg, opts, &init) {
            Ok(sol) => {
                if best.as_ref().is_none_or(|b| sol.ee > b.ee) {
                    best = Some(sol);
                }
            }
            Err(e @ Error::Infeasible(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Infeasible("all starts infeasible".into()))
    })
}

/// Best of `k` proposed-scheme alternations with precoders assembled.
pub fn multistart(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
    k: usize,
) -> Result<Solution> {
    let sol = multistart_spectrum(Scheme::Proposed, &ch.gains(), cfg, opts, k)?;
    Ok(Solution::from_spectrum(sol, ch))
}
