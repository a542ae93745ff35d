use crate::nn::Float;
use crate::{Error, Result};

/// Donsker-Varadhan lower bound from discriminator scores:
/// `mean(joint) - ln(mean(exp(marginal)))`, with a max-shifted log-sum-exp.
pub fn dv_bound<T: Float>(joint: &[T], marginal: &[T]) -> Result<T> {
    Ok(dv_bound_with_grad(joint, marginal)?.0)
}

/// DV bound and its derivatives with respect to each score.
pub fn dv_bound_with_grad<T: Float>(joint: &[T], marginal: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
    if joint.is_empty() || marginal.is_empty() {
        return Err(Error::contract("DV bound needs non-empty score batches"));
    }
    if joint.iter().chain(marginal).any(|v| !v.is_finite()) {
        return Err(Error::contract("DV bound needs finite scores"));
    }
    let nj = T::from_f64(joint.len() as f64);
    let nm = T::from_f64(marginal.len() as f64);
    let mean_joint = joint.iter().copied().sum::<T>() / nj;
    let shift = marginal.iter().copied().fold(T::neg_infinity(), T::max);
    let weights: Vec<T> = marginal.iter().map(|&s| (s - shift).exp()).collect();
    let total: T = weights.iter().copied().sum();
    let log_mean_exp = shift + total.ln() - nm.ln();
    let d_joint = vec![T::one() / nj; joint.len()];
    let d_marginal = weights.iter().map(|&w| -w / total).collect();
    Ok((mean_joint - log_mean_exp, d_joint, d_marginal))
}

/// Average of per-location DV bounds. Scores are laid out sample-major
/// (`n * regions + location`); each location gets its own bound over the
/// batch, then the bounds are averaged over locations.
pub fn local_dv_with_grad<T: Float>(
    joint: &[T],
    marginal: &[T],
    regions: usize,
) -> Result<(T, Vec<T>, Vec<T>)> {
    if regions == 0 || joint.len() % regions != 0 || joint.len() != marginal.len() {
        return Err(Error::shape("local scores do not tile the region grid"));
    }
    let n = joint.len() / regions;
    let inv_regions = T::from_f64(1.0 / regions as f64);
    let mut value = T::zero();
    let mut dj = vec![T::zero(); joint.len()];
    let mut dm = vec![T::zero(); marginal.len()];
    let mut col_j = vec![T::zero(); n];
    let mut col_m = vec![T::zero(); n];
    for l in 0..regions {
        for b in 0..n {
            col_j[b] = joint[b * regions + l];
            col_m[b] = marginal[b * regions + l];
        }
        let (v, gj, gm) = dv_bound_with_grad(&col_j, &col_m)?;
        value += v * inv_regions;
        for b in 0..n {
            dj[b * regions + l] = gj[b] * inv_regions;
            dm[b * regions + l] = gm[b] * inv_regions;
        }
    }
    Ok((value, dj, dm))
}
