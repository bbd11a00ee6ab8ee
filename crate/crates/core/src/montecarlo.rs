//! Reproducible Monte Carlo trial engine.
//!
//! Trial `i` draws everything it needs (hypothesis label, then noise) from the
//! stream `(master_seed, i)`. Trials are sharded over the ambient rayon pool
//! and only integer counts are reduced, so estimates are bit-identical for any
//! number of workers.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::cost_difference;
use crate::attacks::{realize_into, AttackSpec};
use crate::detectors::Detector;
use crate::error::{check_dims, Error, Result};
use crate::math::{fill_gaussian, RandomStream};
use crate::model::ProblemInstance;

/// Trials per parallel work item.
const CHUNK: u64 = 4096;
/// Draws per stream when sampling coordinate costs.
const COST_BLOCK: u64 = 1 << 16;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Empirical error probability with a 95% normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub errors: u64,
    pub ties: u64,
    pub seed: u64,
}

impl ErrorEstimate {
    pub fn from_counts(errors: u64, ties: u64, trials: u64, seed: u64) -> Self {
        let n = trials as f64;
        let p_hat = errors as f64 / n;
        let hw = Z95 * (p_hat * (1.0 - p_hat) / n).sqrt();
        Self {
            p_hat,
            ci_low: (p_hat - hw).max(0.0),
            ci_high: (p_hat + hw).min(1.0),
            trials,
            errors,
            ties,
            seed,
        }
    }

    /// Unclipped half-width `1.96·√(p̂(1−p̂)/n)`.
    pub fn half_width(&self) -> f64 {
        Z95 * (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
enum Labeling {
    Uniform,
    Fixed(usize),
}

fn check_run(instance: &ProblemInstance, detector: &dyn Detector, n_trials: u64) -> Result<()> {
    if n_trials == 0 {
        return Err(Error::invalid("n_trials", "need at least one trial"));
    }
    check_dims(instance.dim(), detector.dim())?;
    if detector.num_hypotheses() != instance.num_hypotheses() {
        return Err(Error::invalid(
            "detector",
            format!(
                "detector decides among {} hypotheses, instance has {}",
                detector.num_hypotheses(),
                instance.num_hypotheses()
            ),
        ));
    }
    Ok(())
}

fn simulate(
    instance: &ProblemInstance,
    attack: &AttackSpec,
    detector: &dyn Detector,
    n_trials: u64,
    master_seed: u64,
    labeling: Labeling,
) -> Result<ErrorEstimate> {
    check_run(instance, detector, n_trials)?;
    let perturbations = attack.resolve(instance)?;
    let k = instance.num_hypotheses();
    let d = instance.dim();
    let sigma = instance.sigma();

    let chunks = n_trials.div_ceil(CHUNK);
    let (errors, ties) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut noise = vec![0.0; d];
            let mut x = vec![0.0; d];
            let (mut errors, mut ties) = (0u64, 0u64);
            for trial in c * CHUNK..((c + 1) * CHUNK).min(n_trials) {
                let mut rng = RandomStream::new(master_seed, trial).rng();
                let truth = match labeling {
                    Labeling::Uniform => rng.random_range(0..k),
                    Labeling::Fixed(h) => h,
                };
                fill_gaussian(&mut rng, sigma, &mut noise);
                realize_into(instance.mean(truth), &perturbations[truth], &noise, &mut x);
                let (chosen, tie) = detector.classify(&x);
                errors += u64::from(chosen != truth);
                ties += u64::from(tie);
            }
            (errors, ties)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    Ok(ErrorEstimate::from_counts(
        errors,
        ties,
        n_trials,
        master_seed,
    ))
}

/// Estimates `P(Ĥ ≠ H)` with the true hypothesis drawn uniformly per trial
/// and the hypothesis-aware attack applied after the draw.
pub fn run_trials(
    instance: &ProblemInstance,
    attack: &AttackSpec,
    detector: &dyn Detector,
    n_trials: u64,
    master_seed: u64,
) -> Result<ErrorEstimate> {
    simulate(
        instance,
        attack,
        detector,
        n_trials,
        master_seed,
        Labeling::Uniform,
    )
}

/// Estimates `P(Ĥ ≠ h | H = h)`.
pub fn run_conditional_trials(
    instance: &ProblemInstance,
    hypothesis: usize,
    attack: &AttackSpec,
    detector: &dyn Detector,
    n_trials: u64,
    master_seed: u64,
) -> Result<ErrorEstimate> {
    if hypothesis >= instance.num_hypotheses() {
        return Err(Error::invalid(
            "hypothesis",
            format!("index {hypothesis} out of range"),
        ));
    }
    simulate(
        instance,
        attack,
        detector,
        n_trials,
        master_seed,
        Labeling::Fixed(hypothesis),
    )
}

/// One shared-noise draw of the coordinate cost difference `C` and the bound
/// variable `Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSample {
    pub noise: f64,
    pub c: f64,
    pub y: f64,
}

/// Relative slack for `C ≥ Y`. Both sides coincide on whole noise intervals,
/// where they are computed along different rounding paths.
pub const BOUND_TOLERANCE: f64 = 1e-12;

impl CostSample {
    /// `C < Y` beyond rounding.
    pub fn violates_bound(&self) -> bool {
        self.c < self.y - BOUND_TOLERANCE * (1.0 + self.c.abs().max(self.y.abs()))
    }
}

/// Parameters of one coordinate under the sign attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateSetup {
    pub abs_mu: f64,
    pub eps_des: f64,
    pub eps_act: f64,
    pub sigma: f64,
}

impl CoordinateSetup {
    pub fn new(abs_mu: f64, eps_des: f64, eps_act: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("must be positive, got {sigma}"),
            ));
        }
        if !(eps_des >= 0.0 && eps_act >= 0.0) {
            return Err(Error::invalid("eps", "budgets must be non-negative"));
        }
        Ok(Self {
            abs_mu: abs_mu.abs(),
            eps_des,
            eps_act,
            sigma,
        })
    }

    /// `t = 2(|μ| − ε_des)`.
    pub fn margin(&self) -> f64 {
        2.0 * (self.abs_mu - self.eps_des)
    }

    pub fn sample(&self, noise: f64) -> CostSample {
        let t = self.margin();
        let c = cost_difference(self.abs_mu, -self.eps_act, self.eps_des, noise);
        let kept = if noise >= -t {
            (t + noise) * (t + noise)
        } else {
            0.0
        };
        CostSample {
            noise,
            c,
            y: kept - noise * noise,
        }
    }
}

fn cost_block(
    setup: CoordinateSetup,
    seed: u64,
    block: u64,
    n: u64,
) -> impl Iterator<Item = CostSample> {
    let start = block * COST_BLOCK;
    let len = COST_BLOCK.min(n - start) as usize;
    let mut rng = RandomStream::new(seed, block).rng();
    let mut buf = vec![0.0; len];
    fill_gaussian(&mut rng, setup.sigma, &mut buf);
    buf.into_iter().map(move |z| setup.sample(z))
}

/// Lazily yields `n` shared-noise `(C, Y)` draws. Draw `j` comes from stream
/// `(seed, j / 65536)`.
pub fn sample_coordinate_costs(
    setup: CoordinateSetup,
    n: u64,
    seed: u64,
) -> Result<impl Iterator<Item = CostSample>> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one draw"));
    }
    Ok((0..n.div_ceil(COST_BLOCK)).flat_map(move |b| cost_block(setup, seed, b, n)))
}

/// Running mean and central moments up to order four, mergeable across
/// shards.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleMoments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl SampleMoments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, other: &SampleMoments) -> SampleMoments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        SampleMoments {
            n: self.n + other.n,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + d2 * na * nb / n,
            m3: self.m3
                + other.m3
                + d2 * delta * na * nb * (na - nb) / (n * n)
                + 3.0 * delta * (na * other.m2 - nb * self.m2) / n,
            m4: self.m4
                + other.m4
                + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
                + 4.0 * delta * (na * other.m3 - nb * self.m3) / n,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2 / (self.n - 1) as f64
    }

    pub fn mean_std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Large-sample standard error of the variance, `√((μ₄ − σ⁴)/n)`.
    pub fn variance_std_error(&self) -> f64 {
        let n = self.n as f64;
        let mu2 = self.m2 / n;
        let mu4 = self.m4 / n;
        ((mu4 - mu2 * mu2).max(0.0) / n).sqrt()
    }
}

impl FromIterator<f64> for SampleMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = SampleMoments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Empirical moments of `C` and `Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSummary {
    pub c: SampleMoments,
    pub y: SampleMoments,
    /// Draws with `C < Y` beyond [`BOUND_TOLERANCE`].
    pub bound_violations: u64,
}

/// Moments of `n` shared-noise draws, computed block-parallel and merged in
/// block order so the floating-point result does not depend on the pool.
pub fn summarize_coordinate_costs(
    setup: CoordinateSetup,
    n: u64,
    seed: u64,
) -> Result<CostSummary> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one draw"));
    }
    let parts: Vec<CostSummary> = (0..n.div_ceil(COST_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut s = CostSummary {
                c: SampleMoments::default(),
                y: SampleMoments::default(),
                bound_violations: 0,
            };
            for draw in cost_block(setup, seed, b, n) {
                s.c.push(draw.c);
                s.y.push(draw.y);
                s.bound_violations += u64::from(draw.violates_bound());
            }
            s
        })
        .collect();
    Ok(parts.iter().skip(1).fold(parts[0], |acc, p| CostSummary {
        c: acc.c.merge(&p.c),
        y: acc.y.merge(&p.y),
        bound_violations: acc.bound_violations + p.bound_violations,
    }))
}
