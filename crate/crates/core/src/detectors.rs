//! Decision rules: the clean matched filter, the minimax linear rule and the
//! GLRT rule, plus the maximum-likelihood perturbation estimate the GLRT
//! plugs into its costs.
//!
//! The GLRT cost of hypothesis `k` is the residual after removing the best
//! feasible perturbation, `C_k = ||X − μ_k − ê_k||²` with
//! `ê_k = f_ε(X − μ_k)`. Since the ℓ∞ ball is a box the projection is
//! separable and the cost collapses to `||g_ε(X − μ_k)||²`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::math::{clamp_complement, soft_threshold};
use crate::model::ProblemInstance;

/// Two costs closer than this count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Statistic {
    /// Per-hypothesis GLRT costs.
    Costs(Vec<f64>),
    /// `wᵀx` of a linear rule.
    Linear(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub chosen: usize,
    pub statistic: Statistic,
    pub tie: bool,
}

pub trait Detector: Send + Sync {
    fn num_hypotheses(&self) -> usize;

    fn dim(&self) -> usize;

    fn decide(&self, x: &[f64]) -> Decision;

    /// `(chosen, tie)` without materializing the statistic.
    fn classify(&self, x: &[f64]) -> (usize, bool) {
        let d = self.decide(x);
        (d.chosen, d.tie)
    }
}

/// `wᵀx ≷ 0`, declaring `H_0` when positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDetector {
    weights: Vec<f64>,
}

impl LinearDetector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weights", "dimension must be at least 1"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights", "entries must be finite"));
        }
        Ok(Self { weights })
    }

    /// Matched filter `w = μ`.
    pub fn clean(mu: &[f64]) -> Result<Self> {
        Self::new(mu.to_vec())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// All weights zero: every observation lands on the boundary.
    pub fn is_degenerate(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    fn statistic(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }
}

impl Detector for LinearDetector {
    fn num_hypotheses(&self) -> usize {
        2
    }

    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn decide(&self, x: &[f64]) -> Decision {
        let s = self.statistic(x);
        Decision {
            chosen: usize::from(s < 0.0),
            statistic: Statistic::Linear(s),
            tie: s == 0.0,
        }
    }

    fn classify(&self, x: &[f64]) -> (usize, bool) {
        let s = self.statistic(x);
        (usize::from(s < 0.0), s == 0.0)
    }
}

/// Minimax weights `g_ε(μ)`: coordinates the budget can flip are dropped,
/// the rest shrink by ε.
pub fn minimax_weights(mu: &[f64], eps: f64) -> Result<LinearDetector> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::invalid(
            "eps",
            format!("must be non-negative, got {eps}"),
        ));
    }
    LinearDetector::new(mu.iter().map(|&m| soft_threshold(m, eps)).collect())
}

pub fn linear_decide(x: &[f64], w: &LinearDetector) -> Result<Decision> {
    check_dims(w.dim(), x.len())?;
    Ok(w.decide(x))
}

pub fn clean_decide(x: &[f64], mu: &[f64]) -> Result<Decision> {
    linear_decide(x, &LinearDetector::clean(mu)?)
}

/// Maximum-likelihood perturbation under hypothesis `k`: `f_ε(x − μ_k)`.
pub fn estimate_perturbation(x: &[f64], mu_k: &[f64], eps: f64) -> Result<Vec<f64>> {
    check_dims(mu_k.len(), x.len())?;
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::invalid(
            "eps",
            format!("must be non-negative, got {eps}"),
        ));
    }
    Ok(x.iter()
        .zip(mu_k)
        .map(|(a, m)| clamp_complement(a - m, eps))
        .collect())
}

#[inline]
fn glrt_cost(x: &[f64], mu_k: &[f64], eps: f64) -> f64 {
    x.iter()
        .zip(mu_k)
        .map(|(a, m)| {
            let r = soft_threshold(a - m, eps);
            r * r
        })
        .sum()
}

/// `C_k = ||g_ε(x − μ_k)||²` for every hypothesis.
pub fn glrt_costs(x: &[f64], means: &[Vec<f64>], eps: f64) -> Result<Vec<f64>> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::invalid(
            "eps",
            format!("must be non-negative, got {eps}"),
        ));
    }
    for m in means {
        check_dims(m.len(), x.len())?;
    }
    Ok(means.iter().map(|m| glrt_cost(x, m, eps)).collect())
}

/// Lowest index among the minimal costs, and whether another cost ties it.
fn argmin_with_tie(costs: impl Iterator<Item = f64> + Clone) -> (usize, bool) {
    let min = costs.clone().fold(f64::INFINITY, f64::min);
    let mut chosen = None;
    let mut tie = false;
    for (k, c) in costs.enumerate() {
        if c - min <= TIE_TOLERANCE {
            if chosen.is_none() {
                chosen = Some(k);
            } else {
                tie = true;
            }
        }
    }
    (chosen.unwrap_or(0), tie)
}

pub fn glrt_decide(x: &[f64], means: &[Vec<f64>], eps: f64) -> Result<Decision> {
    if means.len() < 2 {
        return Err(Error::invalid("means", "need at least two hypotheses"));
    }
    let costs = glrt_costs(x, means, eps)?;
    let (chosen, tie) = argmin_with_tie(costs.iter().copied());
    Ok(Decision {
        chosen,
        statistic: Statistic::Costs(costs),
        tie,
    })
}

/// GLRT rule for a fixed set of means and budget.
#[derive(Debug, Clone, PartialEq)]
pub struct GlrtDetector {
    means: Vec<Vec<f64>>,
    eps: f64,
}

impl GlrtDetector {
    pub fn new(means: Vec<Vec<f64>>, eps: f64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::invalid("means", "need at least two hypotheses"));
        }
        let d = means[0].len();
        for m in &means[1..] {
            check_dims(d, m.len())?;
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::invalid(
                "eps",
                format!("must be non-negative, got {eps}"),
            ));
        }
        Ok(Self { means, eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

impl Detector for GlrtDetector {
    fn num_hypotheses(&self) -> usize {
        self.means.len()
    }

    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn decide(&self, x: &[f64]) -> Decision {
        let costs: Vec<f64> = self
            .means
            .iter()
            .map(|m| glrt_cost(x, m, self.eps))
            .collect();
        let (chosen, tie) = argmin_with_tie(costs.iter().copied());
        Decision {
            chosen,
            statistic: Statistic::Costs(costs),
            tie,
        }
    }

    fn classify(&self, x: &[f64]) -> (usize, bool) {
        if self.means.len() == 2 {
            let c0 = glrt_cost(x, &self.means[0], self.eps);
            let c1 = glrt_cost(x, &self.means[1], self.eps);
            return argmin_with_tie([c0, c1].into_iter());
        }
        argmin_with_tie(self.means.iter().map(|m| glrt_cost(x, m, self.eps)))
    }
}

/// Which rule to build for an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Clean,
    Minimax,
    Glrt,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [
        DetectorKind::Clean,
        DetectorKind::Minimax,
        DetectorKind::Glrt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::Clean => "clean",
            DetectorKind::Minimax => "minimax",
            DetectorKind::Glrt => "glrt",
        }
    }

    /// Builds the rule designed for `instance.eps_des()`.
    ///
    /// On a symmetric binary instance the clean rule is the matched filter
    /// `w = μ`; otherwise it is the minimum-distance rule (GLRT with ε = 0).
    /// The minimax rule exists only for the symmetric binary case.
    pub fn build(&self, instance: &ProblemInstance) -> Result<Box<dyn Detector>> {
        let sym = instance.symmetric_template();
        match (self, sym) {
            (DetectorKind::Clean, Some(mu)) => Ok(Box::new(LinearDetector::clean(mu)?)),
            (DetectorKind::Clean, None) => {
                Ok(Box::new(GlrtDetector::new(instance.means().to_vec(), 0.0)?))
            }
            (DetectorKind::Minimax, Some(mu)) => {
                Ok(Box::new(minimax_weights(mu, instance.eps_des())?))
            }
            (DetectorKind::Minimax, None) => Err(Error::invalid(
                "detector",
                "minimax rule is only defined for the symmetric binary test",
            )),
            (DetectorKind::Glrt, _) => Ok(Box::new(GlrtDetector::new(
                instance.means().to_vec(),
                instance.eps_des(),
            )?)),
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(DetectorKind::Clean),
            "minimax" => Ok(DetectorKind::Minimax),
            "glrt" => Ok(DetectorKind::Glrt),
            other => Err(Error::invalid(
                "detector",
                format!("unknown detector `{other}`"),
            )),
        }
    }
}
