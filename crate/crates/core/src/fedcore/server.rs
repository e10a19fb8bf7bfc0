use super::CorrectionUpdate;
use crate::error::{check_len, Error, Result};
use crate::geometry::{project_simplex, SimplexPoint};
use crate::numerics::DenseVector;

/// Returns `memory − mu·(w_final − w_bar)`.
pub fn update_gradient_memory(memory: &[f64], w_final: &[f64], w_bar: &[f64], mu: f64) -> Result<DenseVector> {
    check_len(memory.len(), w_final.len())?;
    check_len(memory.len(), w_bar.len())?;
    Ok(memory
        .iter()
        .zip(w_final)
        .zip(w_bar)
        .map(|((h, wf), wb)| h - mu * (wf - wb))
        .collect())
}

fn check_uploads(uploads: &[&[f64]], dim: usize) -> Result<()> {
    if uploads.is_empty() {
        return Err(Error::param("at least one upload is required"));
    }
    for u in uploads {
        check_len(dim, u.len())?;
    }
    Ok(())
}

/// New correction state from the uploaded models.
///
/// With [`CorrectionUpdate::PerRoundWBar`] this is `c − (μ/N)(Σ_i w_i − w̄)`;
/// with [`CorrectionUpdate::PerClientWBar`] it is `c − (μ/N)Σ_i (w_i − w̄)`.
pub fn server_update_c(
    c: &[f64],
    uploads: &[&[f64]],
    w_bar: &[f64],
    mu: f64,
    n_total: usize,
    rule: CorrectionUpdate,
) -> Result<DenseVector> {
    check_uploads(uploads, c.len())?;
    check_len(c.len(), w_bar.len())?;
    if n_total == 0 {
        return Err(Error::param("client count must be positive"));
    }
    let copies = match rule {
        CorrectionUpdate::PerRoundWBar => 1.0,
        CorrectionUpdate::PerClientWBar => uploads.len() as f64,
    };
    let scale = mu / n_total as f64;
    Ok((0..c.len())
        .map(|k| {
            let sum: f64 = uploads.iter().map(|u| u[k]).sum();
            c[k] - scale * (sum - copies * w_bar[k])
        })
        .collect())
}

pub fn mean_model(uploads: &[&[f64]]) -> Result<DenseVector> {
    let dim = uploads.first().map_or(0, |u| u.len());
    check_uploads(uploads, dim)?;
    let inv = 1.0 / uploads.len() as f64;
    Ok((0..dim).map(|k| uploads.iter().map(|u| u[k]).sum::<f64>() * inv).collect())
}

/// `mean(uploads) − c_new/μ`, or the plain mean when `mu == 0`.
pub fn server_aggregate(uploads: &[&[f64]], c_new: &[f64], mu: f64) -> Result<DenseVector> {
    let mut mean = mean_model(uploads)?;
    check_len(mean.len(), c_new.len())?;
    if mu > 0.0 {
        mean.add_scaled(-1.0 / mu, c_new)?;
    }
    Ok(mean)
}

/// `v_i = (N/m)·loss_i` for each reported client, zero elsewhere.
pub fn dual_gradient_vector(losses: &[(usize, f64)], n_total: usize) -> Result<DenseVector> {
    if losses.is_empty() {
        return Err(Error::param("dual evaluation set is empty"));
    }
    let scale = n_total as f64 / losses.len() as f64;
    let mut v = DenseVector::zeros(n_total);
    for &(i, loss) in losses {
        if i >= n_total {
            return Err(Error::param(format!("client {i} outside fleet of {n_total}")));
        }
        v[i] += scale * loss;
    }
    Ok(v)
}

/// `Π_Λ(λ + τγv)`.
pub fn dual_variable_update(lambda: &SimplexPoint, v: &[f64], tau: usize, gamma: f64) -> Result<SimplexPoint> {
    check_len(lambda.len(), v.len())?;
    if gamma == 0.0 {
        return Ok(lambda.clone());
    }
    let step = tau as f64 * gamma;
    let moved: Vec<f64> = lambda.weights().iter().zip(v).map(|(l, v)| l + step * v).collect();
    project_simplex(&moved)
}
