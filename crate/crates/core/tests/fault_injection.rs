use fedrobust_core::fedcore::{DriftRule, StandardDrift};
use fedrobust_core::harness::reduction_checks;

/// `d = g − h + μ(w̄ − w)`: the pull toward w̄ points the wrong way.
#[derive(Clone)]
struct FlippedMu;

impl DriftRule for FlippedMu {
    fn correct(&self, grad: &mut [f64], memory: &[f64], w_bar: &[f64], w: &[f64], mu: f64) {
        for k in 0..grad.len() {
            grad[k] += -memory[k] + mu * (w_bar[k] - w[k]);
        }
    }
}

/// Ignores the gradient memory.
#[derive(Clone)]
struct NoMemory;

impl DriftRule for NoMemory {
    fn correct(&self, grad: &mut [f64], _memory: &[f64], w_bar: &[f64], w: &[f64], mu: f64) {
        for k in 0..grad.len() {
            grad[k] -= mu * (w_bar[k] - w[k]);
        }
    }
}

/// Correct rule plus a tiny constant bias.
#[derive(Clone)]
struct Biased;

impl DriftRule for Biased {
    fn correct(&self, grad: &mut [f64], memory: &[f64], w_bar: &[f64], w: &[f64], mu: f64) {
        StandardDrift.correct(grad, memory, w_bar, w, mu);
        grad.iter_mut().for_each(|g| *g += 1e-6);
    }
}

fn failures<D: DriftRule + Clone>(drift: D) -> Vec<String> {
    reduction_checks(drift)
        .into_iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect()
}

#[test]
fn standard_rule_passes() {
    assert!(failures(StandardDrift).is_empty());
}

#[test]
fn flipped_mu_is_caught() {
    assert!(failures(FlippedMu).contains(&"drift_step_closed_form".to_string()));
}

#[test]
fn dropped_memory_is_caught() {
    assert!(failures(NoMemory).contains(&"drift_step_closed_form".to_string()));
}

#[test]
fn biased_rule_breaks_the_mu_zero_reduction() {
    let failed = failures(Biased);
    assert!(failed.contains(&"drdm_without_mu_equals_drfa".to_string()), "{failed:?}");
}
