//! Problem definitions: hypothesis means, noise level and design budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "sigma",
            format!("must be positive and finite, got {sigma}"),
        ))
    }
}

fn check_budget(name: &'static str, eps: f64) -> Result<()> {
    if eps >= 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be non-negative and finite, got {eps}"),
        ))
    }
}

/// K-ary Gaussian test `H_k: X = μ_k + e + N`, `N ~ N(0, σ²I_d)`, uniform priors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    means: Vec<Vec<f64>>,
    sigma: f64,
    eps_des: f64,
}

impl ProblemInstance {
    pub fn new(means: Vec<Vec<f64>>, sigma: f64, eps_des: f64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::invalid("means", "need at least two hypotheses"));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::invalid("means", "dimension must be at least 1"));
        }
        for m in &means[1..] {
            crate::error::check_dims(d, m.len())?;
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("means", "entries must be finite"));
        }
        check_sigma(sigma)?;
        check_budget("eps_des", eps_des)?;
        Ok(Self {
            means,
            sigma,
            eps_des,
        })
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k]
    }

    pub fn num_hypotheses(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eps_des(&self) -> f64 {
        self.eps_des
    }

    /// Returns `μ` when the instance is the symmetric binary test `{+μ, −μ}`.
    pub fn symmetric_template(&self) -> Option<&[f64]> {
        if self.means.len() != 2 {
            return None;
        }
        let (a, b) = (&self.means[0], &self.means[1]);
        a.iter()
            .zip(b)
            .all(|(x, y)| *x == -*y)
            .then_some(a.as_slice())
    }
}

/// Symmetric binary test `H_0: X = μ + e + N`, `H_1: X = −μ + e + N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryInstance {
    mu: Vec<f64>,
    sigma: f64,
    eps_des: f64,
}

impl BinaryInstance {
    pub fn new(mu: Vec<f64>, sigma: f64, eps_des: f64) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::invalid("mu", "dimension must be at least 1"));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mu", "entries must be finite"));
        }
        check_sigma(sigma)?;
        check_budget("eps_des", eps_des)?;
        Ok(Self { mu, sigma, eps_des })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eps_des(&self) -> f64 {
        self.eps_des
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.mu.clone(), sigma, self.eps_des)
    }

    pub fn to_problem(&self) -> ProblemInstance {
        let neg = self.mu.iter().map(|v| -v).collect();
        ProblemInstance {
            means: vec![self.mu.clone(), neg],
            sigma: self.sigma,
            eps_des: self.eps_des,
        }
    }
}

/// Two-level template: a fraction `p` of the `d` coordinates equal `a·ε_des`,
/// the rest `b·ε_des`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelTemplate {
    pub d: usize,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub eps_des: f64,
}

impl TwoLevelTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid(
                "p",
                format!("must lie in [0, 1], got {}", self.p),
            ));
        }
        if !(self.a > 1.0 && self.a.is_finite()) {
            return Err(Error::invalid(
                "a",
                format!("must exceed 1, got {}", self.a),
            ));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(
                "b",
                format!("must lie in [0, 1], got {}", self.b),
            ));
        }
        if !(self.eps_des > 0.0 && self.eps_des.is_finite()) {
            return Err(Error::invalid(
                "eps_des",
                format!("must be positive, got {}", self.eps_des),
            ));
        }
        Ok(())
    }

    /// Number of `a`-level coordinates: `p·d` rounded half-up.
    pub fn high_count(&self) -> usize {
        ((self.p * self.d as f64 + 0.5).floor() as usize).min(self.d)
    }
}

/// Mean vector of the template, `a`-block first then `b`-block.
pub fn build_two_level_template(t: &TwoLevelTemplate) -> Result<Vec<f64>> {
    t.validate()?;
    let high = t.high_count();
    let mut mu = vec![t.a * t.eps_des; high];
    mu.resize(t.d, t.b * t.eps_des);
    Ok(mu)
}

/// Budget above which the undefended matched filter errs at least half the
/// time under the sign attack: `||μ||₂² / ||μ||₁`.
pub fn vulnerability_threshold(mu: &[f64]) -> Result<f64> {
    let l1: f64 = mu.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 {
        return Err(Error::invalid("mu", "template must be nonzero"));
    }
    let l2sq: f64 = mu.iter().map(|v| v * v).sum();
    Ok(l2sq / l1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmpl(d: usize, p: f64, a: f64, b: f64) -> TwoLevelTemplate {
        TwoLevelTemplate {
            d,
            p,
            a,
            b,
            eps_des: 1.0,
        }
    }

    #[test]
    fn template_examples() {
        let mu = build_two_level_template(&tmpl(20, 0.1, 1.1, 0.9)).unwrap();
        assert_eq!(mu.iter().filter(|&&v| v == 1.1).count(), 2);
        assert_eq!(mu.iter().filter(|&&v| v == 0.9).count(), 18);
        assert_eq!(&mu[..2], &[1.1, 1.1]);

        let mu = build_two_level_template(&tmpl(20, 0.3, 1.1, 0.9)).unwrap();
        assert_eq!(mu.iter().filter(|&&v| v == 1.1).count(), 6);
        assert_eq!(mu.iter().filter(|&&v| v == 0.9).count(), 14);

        let mu = build_two_level_template(&tmpl(4, 0.0, 2.0, 0.5)).unwrap();
        assert_eq!(mu, vec![0.5; 4]);

        let mu = build_two_level_template(&tmpl(4, 1.0, 2.0, 0.5)).unwrap();
        assert_eq!(mu, vec![2.0; 4]);
    }

    #[test]
    fn template_rounds_half_up() {
        assert_eq!(tmpl(5, 0.5, 2.0, 0.5).high_count(), 3);
        assert_eq!(tmpl(5, 0.3, 2.0, 0.5).high_count(), 2);
        assert_eq!(tmpl(3, 0.1, 2.0, 0.5).high_count(), 0);
    }

    #[test]
    fn template_validation() {
        assert!(build_two_level_template(&tmpl(0, 0.1, 1.1, 0.9)).is_err());
        assert!(build_two_level_template(&tmpl(5, 1.1, 1.1, 0.9)).is_err());
        assert!(build_two_level_template(&tmpl(5, 0.1, 1.0, 0.9)).is_err());
        assert!(build_two_level_template(&tmpl(5, 0.1, 1.1, 1.2)).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(vulnerability_threshold(&[1.0; 7]).unwrap(), 1.0);
        assert_eq!(vulnerability_threshold(&[3.0, 1.0]).unwrap(), 2.5);
        assert_eq!(vulnerability_threshold(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!(vulnerability_threshold(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn instance_validation() {
        assert!(ProblemInstance::new(vec![vec![1.0]], 1.0, 0.0).is_err());
        assert!(ProblemInstance::new(vec![vec![1.0], vec![1.0, 2.0]], 1.0, 0.0).is_err());
        assert!(ProblemInstance::new(vec![vec![1.0], vec![2.0]], 0.0, 0.0).is_err());
        assert!(ProblemInstance::new(vec![vec![1.0], vec![2.0]], 1.0, -0.1).is_err());
        assert!(BinaryInstance::new(vec![], 1.0, 0.0).is_err());

        let bin = BinaryInstance::new(vec![1.0, -2.0], 1.0, 0.5).unwrap();
        let prob = bin.to_problem();
        assert_eq!(prob.mean(1), &[-1.0, 2.0]);
        assert_eq!(prob.symmetric_template(), Some(&[1.0, -2.0][..]));
        let asym = ProblemInstance::new(vec![vec![1.0], vec![0.5]], 1.0, 0.0).unwrap();
        assert_eq!(asym.symmetric_template(), None);
    }

    #[test]
    fn template_has_expected_count_above_budget() {
        for d in 1..40 {
            for &p in &[0.0, 0.1, 0.25, 0.3, 0.5, 0.77, 1.0] {
                let t = tmpl(d, p, 1.3, 0.6);
                let mu = build_two_level_template(&t).unwrap();
                let above = mu.iter().filter(|&&v| v > t.eps_des).count();
                assert_eq!(above, t.high_count());
                assert!(mu.iter().all(|&v| v > 0.0));
            }
        }
    }

    proptest! {
        #[test]
        fn threshold_is_scale_linear(
            mu in proptest::collection::vec(-10.0f64..10.0, 1..30),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(mu.iter().any(|v| v.abs() > 1e-6));
            let base = vulnerability_threshold(&mu).unwrap();
            let scaled: Vec<f64> = mu.iter().map(|v| c * v).collect();
            let s = vulnerability_threshold(&scaled).unwrap();
            prop_assert!((s - c * base).abs() <= 1e-9 * (1.0 + c * base));
        }

        #[test]
        fn sparse_template_maximizes_threshold(
            mu in proptest::collection::vec(-10.0f64..10.0, 2..30),
        ) {
            let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-6);
            let mut sparse = vec![0.0; mu.len()];
            sparse[0] = norm;
            let sparse_t = vulnerability_threshold(&sparse).unwrap();
            let dense_t = vulnerability_threshold(&mu).unwrap();
            prop_assert!(sparse_t >= dense_t * (1.0 - 1e-12));
        }
    }
}
