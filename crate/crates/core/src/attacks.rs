//! ℓ∞-bounded adversarial perturbations.
//!
//! The adversary knows the true hypothesis, so an attack resolves to one
//! perturbation vector per hypothesis before any noise is drawn.

use std::path::Path;

use crate::error::{check_dims, Error, Result};
use crate::math::sign;
use crate::model::ProblemInstance;

/// Absolute slack allowed when checking `||e||∞ ≤ ε`.
pub const BUDGET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum AttackKind {
    None,
    /// `∓ε_act·sign(μ)` against the symmetric binary test.
    WorstCase {
        eps_act: f64,
    },
    /// A fixed perturbation added under every hypothesis.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Permit attacks stronger than the instance's design budget.
    pub allow_over_budget: bool,
}

impl AttackSpec {
    pub fn none() -> Self {
        Self {
            kind: AttackKind::None,
            allow_over_budget: false,
        }
    }

    pub fn worst_case(eps_act: f64) -> Self {
        Self {
            kind: AttackKind::WorstCase { eps_act },
            allow_over_budget: false,
        }
    }

    pub fn explicit(e: Vec<f64>) -> Self {
        Self {
            kind: AttackKind::Explicit(e),
            allow_over_budget: false,
        }
    }

    pub fn over_budget(mut self) -> Self {
        self.allow_over_budget = true;
        self
    }

    /// ℓ∞ strength of the attack.
    pub fn strength(&self) -> f64 {
        match &self.kind {
            AttackKind::None => 0.0,
            AttackKind::WorstCase { eps_act } => *eps_act,
            AttackKind::Explicit(e) => linf_norm(e),
        }
    }

    pub fn exceeds(&self, eps_des: f64) -> bool {
        self.strength() > eps_des + BUDGET_SLACK
    }

    /// Perturbation applied under each hypothesis of `instance`.
    pub fn resolve(&self, instance: &ProblemInstance) -> Result<Vec<Vec<f64>>> {
        let d = instance.dim();
        let k = instance.num_hypotheses();
        let per_hyp = match &self.kind {
            AttackKind::None => vec![vec![0.0; d]; k],
            AttackKind::WorstCase { eps_act } => {
                let mu = instance.symmetric_template().ok_or_else(|| {
                    Error::invalid(
                        "attack",
                        "worst-case attack needs a symmetric binary instance",
                    )
                })?;
                vec![
                    worst_case_attack(mu, *eps_act, 0)?,
                    worst_case_attack(mu, *eps_act, 1)?,
                ]
            }
            AttackKind::Explicit(e) => {
                check_dims(d, e.len())?;
                if e.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("attack", "entries must be finite"));
                }
                vec![e.clone(); k]
            }
        };
        if !self.allow_over_budget && self.exceeds(instance.eps_des()) {
            return Err(Error::AttackOverBudget {
                norm: self.strength(),
                budget: instance.eps_des(),
            });
        }
        Ok(per_hyp)
    }
}

pub fn linf_norm(e: &[f64]) -> f64 {
    e.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Sign attack: `−ε·sign(μ)` under `H_0`, `+ε·sign(μ)` under `H_1`.
pub fn worst_case_attack(mu: &[f64], eps_act: f64, hypothesis: usize) -> Result<Vec<f64>> {
    if !(eps_act >= 0.0 && eps_act.is_finite()) {
        return Err(Error::invalid(
            "eps_act",
            format!("must be non-negative, got {eps_act}"),
        ));
    }
    let dir = match hypothesis {
        0 => -1.0,
        1 => 1.0,
        _ => {
            return Err(Error::invalid(
                "hypothesis",
                "binary test has hypotheses 0 and 1",
            ))
        }
    };
    Ok(mu.iter().map(|&m| dir * eps_act * sign(m)).collect())
}

/// `||e||∞ ≤ ε` up to [`BUDGET_SLACK`].
pub fn validate_attack(e: &[f64], eps: f64) -> bool {
    e.iter().all(|v| v.abs() <= eps + BUDGET_SLACK)
}

/// `X = μ_k + e + N`.
pub fn realize_observation(
    instance: &ProblemInstance,
    hypothesis: usize,
    e: &[f64],
    noise: &[f64],
) -> Result<Vec<f64>> {
    if hypothesis >= instance.num_hypotheses() {
        return Err(Error::invalid(
            "hypothesis",
            format!("index {hypothesis} out of range"),
        ));
    }
    let d = instance.dim();
    check_dims(d, e.len())?;
    check_dims(d, noise.len())?;
    let mut x = vec![0.0; d];
    realize_into(instance.mean(hypothesis), e, noise, &mut x);
    Ok(x)
}

#[inline]
pub(crate) fn realize_into(mean: &[f64], e: &[f64], noise: &[f64], out: &mut [f64]) {
    for (((o, m), a), n) in out.iter_mut().zip(mean).zip(e).zip(noise) {
        *o = m + a + n;
    }
}

/// Reads a perturbation vector stored one value per line. Blank lines and
/// lines starting with `#` are skipped.
pub fn load_attack_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Config {
            path: path.display().to_string(),
            line: Some(i + 1),
            message: format!("expected a real number, found `{line}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::Config {
                path: path.display().to_string(),
                line: Some(i + 1),
                message: "attack entries must be finite".into(),
            });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Config {
            path: path.display().to_string(),
            line: None,
            message: "attack file holds no values".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BinaryInstance;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn worst_case_examples() {
        assert_eq!(
            worst_case_attack(&[1.0, -2.0], 0.5, 0).unwrap(),
            vec![-0.5, 0.5]
        );
        assert_eq!(
            worst_case_attack(&[1.0, -2.0], 0.5, 1).unwrap(),
            vec![0.5, -0.5]
        );
        assert!(worst_case_attack(&[1.0, -2.0, 3.0], 0.0, 0)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(
            worst_case_attack(&[0.0, 1.0], 0.5, 0).unwrap(),
            vec![0.0, -0.5]
        );
        assert!(worst_case_attack(&[1.0], -0.1, 0).is_err());
        assert!(worst_case_attack(&[1.0], 0.1, 2).is_err());
    }

    #[test]
    fn validate_examples() {
        assert!(validate_attack(&[0.5, -1.0], 1.0));
        assert!(!validate_attack(&[1.0 + 1e-6, 0.0], 1.0));
        assert!(validate_attack(&[0.0, 0.0], 0.0));
    }

    #[test]
    fn realize_examples() {
        let inst = BinaryInstance::new(vec![1.0, 1.0], 1.0, 1.0)
            .unwrap()
            .to_problem();
        assert_eq!(
            realize_observation(&inst, 0, &[0.0, 0.0], &[0.0, 0.0]).unwrap(),
            vec![1.0, 1.0]
        );
        assert_eq!(
            realize_observation(&inst, 0, &[-1.0, -1.0], &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(realize_observation(&inst, 0, &[0.0], &[0.0, 0.0]).is_err());
        assert!(realize_observation(&inst, 2, &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn resolve_enforces_budget() {
        let inst = BinaryInstance::new(vec![1.0, 2.0], 1.0, 1.0)
            .unwrap()
            .to_problem();
        assert!(matches!(
            AttackSpec::worst_case(1.5).resolve(&inst),
            Err(Error::AttackOverBudget { .. })
        ));
        assert!(AttackSpec::worst_case(1.5)
            .over_budget()
            .resolve(&inst)
            .is_ok());
        assert!(AttackSpec::explicit(vec![0.5, -1.0]).resolve(&inst).is_ok());
        assert!(AttackSpec::explicit(vec![0.5, -1.1])
            .resolve(&inst)
            .is_err());
        assert!(AttackSpec::explicit(vec![0.5]).resolve(&inst).is_err());

        let per = AttackSpec::worst_case(0.25).resolve(&inst).unwrap();
        assert_eq!(per, vec![vec![-0.25, -0.25], vec![0.25, 0.25]]);

        let asym = ProblemInstance::new(vec![vec![1.0], vec![0.0]], 1.0, 1.0).unwrap();
        assert!(AttackSpec::worst_case(0.5).resolve(&asym).is_err());
    }

    #[test]
    fn sign_attack_shifts_clean_statistic_by_l1_norm() {
        let mu = [1.5, -0.3, 2.0, 0.0];
        let eps = 0.4;
        let e = worst_case_attack(&mu, eps, 0).unwrap();
        // E[μᵀX | H_0] with X = μ + e + N
        let shifted: f64 = mu.iter().zip(&e).map(|(m, a)| m * (m + a)).sum();
        let clean: f64 = mu.iter().map(|m| m * m).sum();
        let l1: f64 = mu.iter().map(|m: &f64| m.abs()).sum();
        assert!((shifted - clean + eps * l1).abs() < 1e-12);
    }

    #[test]
    fn attack_file_parsing() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# perturbation\n0.5\n\n-0.25\n1e-3").unwrap();
        assert_eq!(
            load_attack_vector(f.path()).unwrap(),
            vec![0.5, -0.25, 1e-3]
        );

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "0.5\nabc").unwrap();
        match load_attack_vector(bad.path()) {
            Err(Error::Config { line, .. }) => assert_eq!(line, Some(2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn worst_case_is_feasible_and_antisymmetric(
            mu in proptest::collection::vec(-5.0f64..5.0, 1..25),
            eps in 0.0f64..3.0,
        ) {
            let h0 = worst_case_attack(&mu, eps, 0).unwrap();
            let h1 = worst_case_attack(&mu, eps, 1).unwrap();
            prop_assert!(validate_attack(&h0, eps));
            prop_assert!(h0.iter().zip(&h1).all(|(a, b)| *a == -*b));
        }

        #[test]
        fn realization_is_additive(
            data in proptest::collection::vec((-5.0f64..5.0, -1.0f64..1.0, -3.0f64..3.0), 1..20),
        ) {
            let mu: Vec<f64> = data.iter().map(|t| t.0).collect();
            let e: Vec<f64> = data.iter().map(|t| t.1).collect();
            let n: Vec<f64> = data.iter().map(|t| t.2).collect();
            let inst = BinaryInstance::new(mu, 1.0, 1.0).unwrap().to_problem();
            let attacked = realize_observation(&inst, 0, &e, &n).unwrap();
            let clean = realize_observation(&inst, 0, &vec![0.0; e.len()], &n).unwrap();
            for ((a, c), ei) in attacked.iter().zip(&clean).zip(&e) {
                prop_assert!((a - c - ei).abs() < 1e-12);
            }
        }
    }
}
