//! EE maximization: closed-form precoder directions and splitting factor,
//! Dinkelbach's method over a barrier inner solver, and the alternation.

mod alternate;
pub mod barrier;
mod blocks;
mod diagnostics;
pub mod dinkelbach;
mod feasibility;
mod joint;
mod multistart;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::model::{ChannelGains, ChannelMode, ChannelRealization};
use crate::objective::{self, PrecoderSet, SpectrumPoint, ALPHA_MIN};

pub use alternate::{
    alternate, default_init, feasible_point, random_init, solve_spectrum, Scheme, Solution,
    SolverTrace, SpectrumSolution, TraceRecord,
};
pub use diagnostics::{mapping_diagnostics, MappingReport};
pub use dinkelbach::{
    dinkelbach, solve_inner, DinkelbachOutcome, FractionalProgram, InnerSolution,
};
pub use multistart::{multistart, multistart_inits, multistart_spectrum};

/// Builds the precoding matrices from their eigenvalues using the channel
/// singular vectors. `exact` is false for realizations whose channels do not
/// share a left unitary, where these directions are only approximately optimal.
pub fn assemble_precoders(pt: &SpectrumPoint, ch: &ChannelRealization) -> PrecoderSet {
    let sqrt = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x.max(0.0).sqrt()).collect() };
    let q1 = linalg::unitary_sandwich(&ch.v_h1, &pt.lambda_q1);
    let q2 = linalg::unitary_sandwich(&ch.v_h2, &pt.lambda_q2);
    let qr: CMatrix = linalg::unitary_sandwich(&ch.u_h, &sqrt(&pt.lambda_qr));
    let f1 = linalg::unitary_sandwich(&ch.v_h1, &sqrt(&pt.lambda_q1));
    let f2 = linalg::unitary_sandwich(&ch.v_h2, &sqrt(&pt.lambda_q2));
    PrecoderSet {
        q1,
        q2,
        qr,
        f1,
        f2,
        exact: ch.mode == ChannelMode::SharedLeftUnitary && ch.shared_exact,
    }
}

/// Splitting factor that makes the harvesting constraint hold with
/// equality, before clamping. `None` when nothing reaches TR1.
pub fn unclamped_alpha(
    lambda_q1: &[f64],
    lambda_q2: &[f64],
    lambda_qr: &[f64],
    gains: &ChannelGains,
    cfg: &NetworkConfig,
) -> Option<f64> {
    let pt = SpectrumPoint::new(
        0.5,
        lambda_q1.to_vec(),
        lambda_q2.to_vec(),
        lambda_qr.to_vec(),
    );
    let available = cfg.eh_efficiency * objective::received_power_tr1(&pt, gains, cfg);
    if !(available > 0.0) {
        return None;
    }
    Some(1.0 - objective::eh_requirement(&pt, cfg) / available)
}

/// Closed-form splitting factor clamped to `[ALPHA_MIN, 1 - ALPHA_MIN]`.
///
/// Fails with [`Error::Infeasible`] when the harvestable power cannot cover
/// TR1's consumption at these spectra.
pub fn optimal_alpha(
    lambda_q1: &[f64],
    lambda_q2: &[f64],
    lambda_qr: &[f64],
    gains: &ChannelGains,
    cfg: &NetworkConfig,
) -> Result<f64> {
    match unclamped_alpha(lambda_q1, lambda_q2, lambda_qr, gains, cfg) {
        Some(raw) if raw > 0.0 => Ok(raw.clamp(ALPHA_MIN, 1.0 - ALPHA_MIN)),
        _ => Err(Error::Infeasible(
            "harvestable power cannot cover TR1 consumption".into(),
        )),
    }
}
