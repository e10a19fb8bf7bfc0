use super::HyperParams;
use crate::error::{Error, Result};

/// Step sizes prescribed by the convergence analysis for a horizon of `T` iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoreticalSchedule {
    pub eta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub tau: usize,
    pub total_iterations: usize,
}

impl TheoreticalSchedule {
    /// Full hyperparameters; the round count is `⌈T/τ⌉`.
    pub fn hyper_params(&self, m: usize, batch: usize) -> HyperParams {
        HyperParams {
            eta: self.eta,
            gamma: self.gamma,
            mu: self.mu,
            tau: self.tau,
            m,
            batch,
            rounds: self.total_iterations.div_ceil(self.tau),
        }
    }
}

/// `τ = ⌈T^{1/4}/√m⌉`, `η = 1/(4L√T)`, `γ = T^{-5/8}`, `μ = 2L√(N/m)`.
pub fn theoretical_hyperparams(
    total_iterations: usize,
    m: usize,
    n_total: usize,
    smoothness: f64,
) -> Result<TheoreticalSchedule> {
    if total_iterations == 0 || m == 0 || n_total == 0 || !(smoothness > 0.0) || !smoothness.is_finite() {
        return Err(Error::param("T, m, N and L must all be positive"));
    }
    let t = total_iterations as f64;
    let m_f = m as f64;
    // guard against 4.000000001 rounding up to 5
    let raw = t.powf(0.25) / m_f.sqrt();
    let tau = ((raw - 1e-9 * raw).ceil() as usize).max(1);
    Ok(TheoreticalSchedule {
        eta: 1.0 / (4.0 * smoothness * t.sqrt()),
        gamma: t.powf(-0.625),
        mu: 2.0 * smoothness * (n_total as f64 / m_f).sqrt(),
        tau,
        total_iterations,
    })
}
