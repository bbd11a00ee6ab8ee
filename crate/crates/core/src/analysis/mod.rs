//! Analytical error predictors for the binary symmetric test.
//!
//! Conditioned on `H_0` and the sign attack, the GLRT decision statistic is a
//! sum of independent per-coordinate cost differences
//! `C[i] = g_ε(2μ_i + e_i + N_i)² − g_ε(e_i + N_i)²`. A central-limit
//! approximation of that sum gives `P_e ≈ Q(Σ m_i / √Σ ρ_i²)`.
//!
//! Two sources for the per-coordinate moments are provided: exact moments of
//! `C[i]` by quadrature, and closed-form moments of the pointwise lower bound
//! `Y = 1{N ≥ −t}(t + N)² − N²`, `t = 2(|μ| − ε)`, valid at full budget.

mod quadrature;

use std::collections::HashMap;

use crate::error::{check_dims, Error, Result};
use crate::math::{q_function, soft_threshold, std_normal_pdf};

/// Absolute tolerance of the cost-moment quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Relative floor so large moments are not held to sub-roundoff accuracy.
const QUADRATURE_REL_TOL: f64 = 1e-14;
/// Integration range in units of σ.
const QUADRATURE_RANGE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateMoments {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundVariableParams {
    /// `2(|μ| − ε)`; negative for coordinates the minimax rule drops.
    pub t: f64,
    pub sigma: f64,
}

impl BoundVariableParams {
    pub fn new(abs_mu: f64, eps: f64, sigma: f64) -> Self {
        Self {
            t: 2.0 * (abs_mu.abs() - eps),
            sigma,
        }
    }
}

/// Closed-form mean and variance of the bound variable `Y`.
pub fn y_moments(t: f64, sigma: f64) -> CoordinateMoments {
    let s = t / sigma;
    let q = q_function(-s);
    let dens = sigma * t * std_normal_pdf(s);
    let (t2, s2) = (t * t, sigma * sigma);
    let mean = q * (t2 + s2) - s2 + dens;
    let second =
        3.0 * s2 * s2 + q * (t2 * t2 + 4.0 * t2 * s2 - 3.0 * s2 * s2) + dens * (t2 + 3.0 * s2);
    CoordinateMoments {
        mean,
        variance: (second - mean * mean).max(0.0),
    }
}

/// Per-coordinate cost difference `C` for a signed mean `mu`, perturbation
/// `e` and noise sample `n` under `H_0`.
#[inline]
pub fn cost_difference(mu: f64, e: f64, eps: f64, n: f64) -> f64 {
    let far = soft_threshold(2.0 * mu + e + n, eps);
    let near = soft_threshold(e + n, eps);
    far * far - near * near
}

/// Exact moments of `C` for a coordinate with mean `mu` and perturbation `e`
/// under `H_0`, by quadrature against the Gaussian density.
pub fn cost_difference_moments(mu: f64, e: f64, eps: f64, sigma: f64) -> Result<CoordinateMoments> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(
            "sigma",
            format!("must be positive, got {sigma}"),
        ));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid(
            "eps_des",
            format!("must be non-negative, got {eps}"),
        ));
    }
    // Kinks where either residual enters or leaves the dead zone, in units of σ.
    let mut breaks = vec![-QUADRATURE_RANGE, QUADRATURE_RANGE];
    for k in [-2.0 * mu - e - eps, -2.0 * mu - e + eps, -e - eps, -e + eps] {
        let z = k / sigma;
        if z > -QUADRATURE_RANGE && z < QUADRATURE_RANGE {
            breaks.push(z);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let c = |z: f64| cost_difference(mu, e, eps, sigma * z);
    let mean = quadrature::integrate(
        |z| c(z) * std_normal_pdf(z),
        &breaks,
        QUADRATURE_TOL,
        QUADRATURE_REL_TOL,
    )?
    .value;
    let variance = quadrature::integrate(
        |z| {
            let dev = c(z) - mean;
            dev * dev * std_normal_pdf(z)
        },
        &breaks,
        QUADRATURE_TOL,
        QUADRATURE_REL_TOL,
    )?
    .value;
    Ok(CoordinateMoments {
        mean,
        variance: variance.max(0.0),
    })
}

/// Moments of `C = g_εdes(2|μ| + N − ε_act)² − g_εdes(N − ε_act)²`, the cost
/// difference of one coordinate under the sign attack of strength `ε_act`.
pub fn coordinate_cost_moments(
    abs_mu: f64,
    eps_des: f64,
    eps_act: f64,
    sigma: f64,
) -> Result<CoordinateMoments> {
    if !(eps_act >= 0.0 && eps_act.is_finite()) {
        return Err(Error::invalid(
            "eps_act",
            format!("must be non-negative, got {eps_act}"),
        ));
    }
    cost_difference_moments(abs_mu.abs(), -eps_act, eps_des, sigma)
}

/// Signed CLT estimate `Q(Σm / √Σρ²)`. With zero total variance the limit
/// is taken: 0 for a positive drift, 1 for a negative one, ½ for none.
pub fn clt_error_probability(moments: &[CoordinateMoments]) -> f64 {
    let mean: f64 = moments.iter().map(|m| m.mean).sum();
    let var: f64 = moments.iter().map(|m| m.variance).sum();
    if var > 0.0 {
        q_function(mean / var.sqrt())
    } else if mean > 0.0 {
        0.0
    } else if mean < 0.0 {
        1.0
    } else {
        0.5
    }
}

/// CLT estimate built from the lower-bound variables; approximates an upper
/// bound on the GLRT error under the full-budget sign attack.
pub fn clt_error_upper_bound(params: &[BoundVariableParams]) -> f64 {
    let moments: Vec<CoordinateMoments> = params.iter().map(|p| y_moments(p.t, p.sigma)).collect();
    clt_error_probability(&moments)
}

/// `(a − k)²·d·p·(ε_des/σ)²`: effective SNR of the minimax rule on the
/// two-level template under the sign attack `ε_act = k·ε_des`.
pub fn snr_minimax(d: usize, p: f64, a: f64, k: f64, eps_des: f64, sigma: f64) -> f64 {
    let r = eps_des / sigma;
    (a - k).powi(2) * d as f64 * p * r * r
}

/// `d(p·m_a + (1−p)·m_b)² / (p·ρ_a² + (1−p)·ρ_b²)`.
pub fn snr_glrt(
    d: usize,
    p: f64,
    moments_a: CoordinateMoments,
    moments_b: CoordinateMoments,
) -> Result<f64> {
    let (mean, var) = two_level_mix(p, moments_a, moments_b);
    if var.is_nan() || var <= 0.0 {
        return Err(Error::invalid("moments", "mixed variance must be positive"));
    }
    Ok(d as f64 * mean * mean / var)
}

/// Signed two-level GLRT prediction `Q(√d · m̄ / ρ̄)`; equals `Q(√SNR_GLRT)`
/// whenever the mixed mean is positive.
pub fn glrt_two_level_error(
    d: usize,
    p: f64,
    moments_a: CoordinateMoments,
    moments_b: CoordinateMoments,
) -> f64 {
    let (mean, var) = two_level_mix(p, moments_a, moments_b);
    let n = d as f64;
    clt_error_probability(&[CoordinateMoments {
        mean: n * mean,
        variance: n * var,
    }])
}

fn two_level_mix(p: f64, a: CoordinateMoments, b: CoordinateMoments) -> (f64, f64) {
    (
        p * a.mean + (1.0 - p) * b.mean,
        p * a.variance + (1.0 - p) * b.variance,
    )
}

/// `Q(√SNR)`.
pub fn error_from_snr(snr: f64) -> f64 {
    q_function(snr.max(0.0).sqrt())
}

/// Matched filter `w = μ` under the sign attack:
/// `Q((||μ||² − ε||μ||₁) / (σ||μ||))`.
pub fn clean_error_closed_form(mu: &[f64], eps_act: f64, sigma: f64) -> Result<f64> {
    let l2sq: f64 = mu.iter().map(|v| v * v).sum();
    if l2sq == 0.0 {
        return Err(Error::invalid("mu", "template must be nonzero"));
    }
    let l1: f64 = mu.iter().map(|v| v.abs()).sum();
    Ok(q_function((l2sq - eps_act * l1) / (sigma * l2sq.sqrt())))
}

/// Exact error of the linear rule `w` on the symmetric binary test when the
/// adversary adds `e0` under `H_0` and `e1` under `H_1`. Boundary hits go to
/// `H_0`, so all-zero weights give ½.
pub fn linear_error_closed_form(
    w: &[f64],
    mu: &[f64],
    e0: &[f64],
    e1: &[f64],
    sigma: f64,
) -> Result<f64> {
    let d = mu.len();
    check_dims(d, w.len())?;
    check_dims(d, e0.len())?;
    check_dims(d, e1.len())?;
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(0.5);
    }
    let sd = sigma * norm;
    let drift0: f64 = w
        .iter()
        .zip(mu)
        .zip(e0)
        .map(|((w, m), e)| w * (m + e))
        .sum();
    let drift1: f64 = w
        .iter()
        .zip(mu)
        .zip(e1)
        .map(|((w, m), e)| w * (-m + e))
        .sum();
    // error under H_1 is P(wᵀX ≥ 0); the boundary has probability zero here
    Ok(0.5 * (q_function(drift0 / sd) + q_function(-drift1 / sd)))
}

/// Memoizes quadrature moments keyed on the exact `(μ, e, ε, σ)` bits, so
/// repeated template coordinates integrate once.
#[derive(Debug, Default)]
pub struct MomentCache {
    entries: HashMap<[u64; 4], CoordinateMoments>,
}

impl MomentCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, mu: f64, e: f64, eps: f64, sigma: f64) -> Result<CoordinateMoments> {
        let key = [mu.to_bits(), e.to_bits(), eps.to_bits(), sigma.to_bits()];
        if let Some(m) = self.entries.get(&key) {
            return Ok(*m);
        }
        let m = cost_difference_moments(mu, e, eps, sigma)?;
        self.entries.insert(key, m);
        Ok(m)
    }
}

/// CLT prediction of the GLRT error on the symmetric binary test with
/// perturbation `e0` under `H_0` and `e1` under `H_1`, averaged over equal
/// priors. Negating the observation maps `H_1` with `e1` onto `H_0` with
/// `−e1`.
pub fn glrt_clt_error(
    mu: &[f64],
    e0: &[f64],
    e1: &[f64],
    eps_des: f64,
    sigma: f64,
    cache: &mut MomentCache,
) -> Result<f64> {
    check_dims(mu.len(), e0.len())?;
    check_dims(mu.len(), e1.len())?;
    let mut conditional = |flip: f64, e: &[f64]| -> Result<f64> {
        let moments = mu
            .iter()
            .zip(e)
            .map(|(&m, &a)| cache.get(m, flip * a, eps_des, sigma))
            .collect::<Result<Vec<_>>>()?;
        Ok(clt_error_probability(&moments))
    };
    let p0 = conditional(1.0, e0)?;
    if e1.iter().zip(e0).all(|(a, b)| *a == -*b) {
        return Ok(p0);
    }
    Ok(0.5 * (p0 + conditional(-1.0, e1)?))
}

/// Lower-bound CLT prediction for the GLRT under the full-budget sign attack.
pub fn glrt_bound_error(mu: &[f64], eps: f64, sigma: f64) -> f64 {
    let params: Vec<BoundVariableParams> = mu
        .iter()
        .map(|&m| BoundVariableParams::new(m, eps, sigma))
        .collect();
    clt_error_upper_bound(&params)
}
