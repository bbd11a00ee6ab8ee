//! Experiment configuration files.
//!
//! A config is a flat TOML document; every key sits at the top level:
//!
//! ```toml
//! experiment_id = "fig2"
//! kind = "sweep"                 # sweep | moments
//! d = 20                         # two-level template ...
//! p = 0.1
//! a = 1.1
//! b = 0.9
//! # mu = [3.0, 1.0]              # ... or an explicit template
//! eps_des = 1.0
//! sigma_grid = [1.0]             # or design_snr_grid = (eps_des/sigma)^2 values
//! attack = "worst_case"          # none | worst_case | explicit
//! k_grid = [0.0, 0.5, 1.0]       # or eps_act_grid in signal units
//! # attack_file = "e.csv"        # explicit attacks, one value per line
//! detectors = ["clean", "minimax", "glrt"]
//! n_trials = 1000000
//! master_seed = 20210611
//! output = "fig2.csv"
//! stress_over_budget = false
//! ```
//!
//! `kind = "moments"` experiments replace the template and attack keys with
//! `t_grid`, the per-coordinate margins `2(|μ| − ε_des)` to tabulate.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{load_attack_vector, AttackSpec, BUDGET_SLACK};
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::model::{build_two_level_template, vulnerability_threshold, TwoLevelTemplate};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Sweep,
    Moments,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    None,
    #[default]
    WorstCase,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    #[serde(default)]
    pub kind: ExperimentKind,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    pub eps_des: f64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_snr_grid: Option<Vec<f64>>,

    #[serde(default)]
    pub attack: AttackMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_act_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_file: Option<String>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,

    #[serde(default)]
    pub detectors: Vec<DetectorKind>,
    pub n_trials: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub stress_over_budget: bool,
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            path: self.experiment_id.clone(),
            line: None,
            message: e.to_string(),
        })
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> Result<String> {
        let bytes = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(bytes.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
    }
}

/// A parsed config together with its source text, used to point errors at
/// the offending line.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    text: String,
}

/// Canned figure replications, shipped as config files.
pub const CANNED: [(&str, &str); 3] = [
    ("fig1", include_str!("../configs/fig1.toml")),
    ("fig2", include_str!("../configs/fig2.toml")),
    ("fig3", include_str!("../configs/fig3.toml")),
];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        Ok(Self {
            config,
            path: path.to_path_buf(),
            text: text.to_string(),
        })
    }

    pub fn canned(name: &str) -> Option<Self> {
        CANNED.iter().find(|(n, _)| *n == name).map(|(n, text)| {
            Self::parse(text, Path::new(&format!("configs/{n}.toml")))
                .expect("canned configs parse")
        })
    }

    fn line_of_key(&self, key: &str) -> Option<usize> {
        self.text
            .lines()
            .position(|l| {
                let l = l.trim_start();
                l.strip_prefix(key)
                    .is_some_and(|rest| rest.trim_start().starts_with('='))
            })
            .map(|i| i + 1)
    }

    fn error(&self, key: &str, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.display().to_string(),
            line: self.line_of_key(key),
            message: format!("`{key}`: {}", message.into()),
        }
    }

    /// Checks the config and expands grids into concrete parameter values.
    pub fn resolve(&self) -> Result<Experiment> {
        let c = &self.config;
        if c.experiment_id.trim().is_empty() {
            return Err(self.error("experiment_id", "must not be empty"));
        }
        if c.n_trials == 0 {
            return Err(self.error("n_trials", "must be at least 1"));
        }
        let seed = c.master_seed.ok_or_else(|| {
            self.error(
                "master_seed",
                "missing; set it in the config or pass --seed",
            )
        })?;
        if seed > i64::MAX as u64 {
            return Err(self.error("master_seed", "must fit in a signed 64-bit integer"));
        }
        if !(c.eps_des >= 0.0 && c.eps_des.is_finite()) {
            return Err(self.error("eps_des", "must be non-negative and finite"));
        }
        let sigmas = self.resolve_sigmas()?;

        let (mu, template, attacks, t_grid) = match c.kind {
            ExperimentKind::Sweep => {
                let (mu, template) = self.resolve_template()?;
                let attacks = self.resolve_attacks(mu.len())?;
                if c.t_grid.is_some() {
                    return Err(self.error("t_grid", "only used by moments experiments"));
                }
                if c.detectors.is_empty() {
                    return Err(
                        self.error("detectors", "list at least one of clean, minimax, glrt")
                    );
                }
                for (i, det) in c.detectors.iter().enumerate() {
                    if c.detectors[..i].contains(det) {
                        return Err(self.error("detectors", format!("`{det}` listed twice")));
                    }
                }
                (mu, template, attacks, Vec::new())
            }
            ExperimentKind::Moments => {
                for key in [
                    "d",
                    "p",
                    "a",
                    "b",
                    "mu",
                    "eps_act_grid",
                    "k_grid",
                    "attack_file",
                ] {
                    if self.line_of_key(key).is_some() {
                        return Err(
                            self.error(key, "moments experiments take only t_grid and sigma grids")
                        );
                    }
                }
                if c.attack != AttackMode::WorstCase {
                    return Err(self.error(
                        "attack",
                        "moments experiments use the full-budget sign attack",
                    ));
                }
                let t_grid = self.grid("t_grid", c.t_grid.as_deref())?;
                if let Some(t) = t_grid.iter().find(|&&t| t < -2.0 * c.eps_des) {
                    return Err(self.error(
                        "t_grid",
                        format!("t = {t} is below -2·eps_des, which would need |mu| < 0"),
                    ));
                }
                (
                    Vec::new(),
                    None,
                    vec![AttackSpec::worst_case(c.eps_des)],
                    t_grid,
                )
            }
        };

        Ok(Experiment {
            config: c.clone(),
            id: c.experiment_id.clone(),
            kind: c.kind,
            mu,
            template,
            eps_des: c.eps_des,
            sigmas,
            attacks,
            t_grid,
            detectors: c.detectors.clone(),
            n_trials: c.n_trials,
            seed,
        })
    }

    fn grid(&self, key: &str, values: Option<&[f64]>) -> Result<Vec<f64>> {
        let values = values.ok_or_else(|| self.error(key, "missing"))?;
        if values.is_empty() {
            return Err(self.error(key, "grid must not be empty"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(self.error(key, format!("non-finite value {v}")));
        }
        Ok(values.to_vec())
    }

    fn resolve_sigmas(&self) -> Result<Vec<f64>> {
        let c = &self.config;
        let sigmas = match (&c.sigma_grid, &c.design_snr_grid) {
            (Some(_), Some(_)) => {
                return Err(self.error(
                    "design_snr_grid",
                    "give either sigma_grid or design_snr_grid, not both",
                ))
            }
            (None, None) => {
                return Err(self.error("sigma_grid", "missing (or give design_snr_grid)"))
            }
            (Some(s), None) => {
                let s = self.grid("sigma_grid", Some(s))?;
                if s.iter().any(|&v| v <= 0.0) {
                    return Err(self.error("sigma_grid", "noise levels must be positive"));
                }
                s
            }
            (None, Some(r)) => {
                let r = self.grid("design_snr_grid", Some(r))?;
                if r.iter().any(|&v| v <= 0.0) {
                    return Err(self.error("design_snr_grid", "values must be positive"));
                }
                if c.eps_des <= 0.0 {
                    return Err(self.error("design_snr_grid", "needs eps_des > 0"));
                }
                r.iter().map(|v| c.eps_des / v.sqrt()).collect()
            }
        };
        Ok(sigmas)
    }

    fn resolve_template(&self) -> Result<(Vec<f64>, Option<TwoLevelTemplate>)> {
        let c = &self.config;
        let any_level = c.d.is_some() || c.p.is_some() || c.a.is_some() || c.b.is_some();
        match (&c.mu, any_level) {
            (Some(_), true) => {
                Err(self.error("mu", "give either mu or the d/p/a/b template, not both"))
            }
            (Some(mu), false) => {
                if mu.is_empty() || mu.iter().any(|v| !v.is_finite()) {
                    return Err(self.error("mu", "must be a non-empty list of finite values"));
                }
                if mu.iter().all(|&v| v == 0.0) {
                    return Err(self.error("mu", "template must be nonzero"));
                }
                Ok((mu.clone(), None))
            }
            (None, false) => Err(self.error("mu", "missing template: give mu or d/p/a/b")),
            (None, true) => {
                let t = TwoLevelTemplate {
                    d: c.d.ok_or_else(|| self.error("d", "missing"))?,
                    p: c.p.ok_or_else(|| self.error("p", "missing"))?,
                    a: c.a.ok_or_else(|| self.error("a", "missing"))?,
                    b: c.b.ok_or_else(|| self.error("b", "missing"))?,
                    eps_des: c.eps_des,
                };
                let mu = build_two_level_template(&t).map_err(|e| match e {
                    Error::InvalidParameter { name, reason } => self.error(name, reason),
                    other => other,
                })?;
                Ok((mu, Some(t)))
            }
        }
    }

    fn resolve_attacks(&self, d: usize) -> Result<Vec<AttackSpec>> {
        let c = &self.config;
        let stress = |spec: AttackSpec| {
            if c.stress_over_budget {
                spec.over_budget()
            } else {
                spec
            }
        };
        match c.attack {
            AttackMode::None => {
                for key in ["eps_act_grid", "k_grid", "attack_file"] {
                    if self.line_of_key(key).is_some() {
                        return Err(self.error(key, "not used with attack = \"none\""));
                    }
                }
                Ok(vec![AttackSpec::none()])
            }
            AttackMode::WorstCase => {
                if c.attack_file.is_some() {
                    return Err(self.error("attack_file", "only used with attack = \"explicit\""));
                }
                let (key, values) = match (&c.eps_act_grid, &c.k_grid) {
                    (Some(_), Some(_)) => {
                        return Err(
                            self.error("k_grid", "give either eps_act_grid or k_grid, not both")
                        )
                    }
                    (None, None) => {
                        return Err(self.error("k_grid", "missing (or give eps_act_grid)"))
                    }
                    (Some(e), None) => ("eps_act_grid", self.grid("eps_act_grid", Some(e))?),
                    (None, Some(k)) => (
                        "k_grid",
                        self.grid("k_grid", Some(k))?
                            .iter()
                            .map(|k| k * c.eps_des)
                            .collect(),
                    ),
                };
                let mut out = Vec::with_capacity(values.len());
                for eps_act in values {
                    if eps_act < 0.0 {
                        return Err(
                            self.error(key, format!("attack strength {eps_act} is negative"))
                        );
                    }
                    if eps_act > c.eps_des + BUDGET_SLACK && !c.stress_over_budget {
                        return Err(self.error(
                            key,
                            format!(
                                "attack strength {eps_act} exceeds eps_des = {}; set stress_over_budget = true to allow it",
                                c.eps_des
                            ),
                        ));
                    }
                    out.push(stress(AttackSpec::worst_case(eps_act)));
                }
                Ok(out)
            }
            AttackMode::Explicit => {
                if c.eps_act_grid.is_some() || c.k_grid.is_some() {
                    return Err(self.error(
                        "attack",
                        "explicit attacks take attack_file, not a strength grid",
                    ));
                }
                let file = c
                    .attack_file
                    .as_ref()
                    .ok_or_else(|| self.error("attack_file", "missing"))?;
                let base = self.path.parent().unwrap_or(Path::new("."));
                let e = load_attack_vector(&base.join(file))?;
                if e.len() != d {
                    return Err(self.error(
                        "attack_file",
                        format!("holds {} values but the template has d = {d}", e.len()),
                    ));
                }
                let spec = AttackSpec::explicit(e);
                if spec.exceeds(c.eps_des) && !c.stress_over_budget {
                    return Err(self.error(
                        "attack_file",
                        format!(
                            "||e||inf = {} exceeds eps_des = {}; set stress_over_budget = true to allow it",
                            spec.strength(),
                            c.eps_des
                        ),
                    ));
                }
                Ok(vec![stress(spec)])
            }
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// A validated config with its grids expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    /// The config as resolved, including command-line overrides.
    pub config: ExperimentConfig,
    pub id: String,
    pub kind: ExperimentKind,
    /// Template `μ` (`H_0` mean); empty for moments experiments.
    pub mu: Vec<f64>,
    pub template: Option<TwoLevelTemplate>,
    pub eps_des: f64,
    pub sigmas: Vec<f64>,
    pub attacks: Vec<AttackSpec>,
    pub t_grid: Vec<f64>,
    pub detectors: Vec<DetectorKind>,
    pub n_trials: u64,
    pub seed: u64,
}

impl Experiment {
    /// Human-readable echo of the resolved parameters.
    pub fn report(&self) -> String {
        let mut s = String::from("ok\n");
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(s, "experiment_id: {}", self.id);
        let _ = writeln!(
            s,
            "kind: {}",
            match self.kind {
                ExperimentKind::Sweep => "sweep",
                ExperimentKind::Moments => "moments",
            }
        );
        if let Some(t) = &self.template {
            let _ = writeln!(
                s,
                "template: d={} p={} a={} b={} eps_des={} ({} coordinates at a*eps_des; p*d rounded half-up)",
                t.d,
                t.p,
                t.a,
                t.b,
                t.eps_des,
                t.high_count()
            );
        }
        if !self.mu.is_empty() {
            let _ = writeln!(s, "mu: [{}]", list(&self.mu));
            if let Ok(th) = vulnerability_threshold(&self.mu) {
                let _ = writeln!(s, "vulnerability_threshold: {th}");
            }
        }
        let _ = writeln!(s, "eps_des: {}", self.eps_des);
        let _ = writeln!(s, "sigma: [{}]", list(&self.sigmas));
        match self.kind {
            ExperimentKind::Sweep => {
                let strengths: Vec<f64> = self.attacks.iter().map(|a| a.strength()).collect();
                let attack = match self.config.attack {
                    AttackMode::None => "none",
                    AttackMode::WorstCase => "worst_case",
                    AttackMode::Explicit => "explicit",
                };
                let _ = writeln!(s, "attack: {attack}");
                let _ = writeln!(s, "eps_act: [{}]", list(&strengths));
                let dets: Vec<&str> = self.detectors.iter().map(|d| d.as_str()).collect();
                let _ = writeln!(s, "detectors: {}", dets.join(", "));
            }
            ExperimentKind::Moments => {
                let _ = writeln!(s, "t: [{}]", list(&self.t_grid));
            }
        }
        let _ = writeln!(s, "n_trials: {}", self.n_trials);
        let _ = writeln!(s, "master_seed: {}", self.seed);
        if self.attacks.iter().any(|a| a.exceeds(self.eps_des)) {
            let _ = writeln!(s, "stress_over_budget: attacks above eps_des are enabled");
        }
        if let Some(out) = &self.config.output {
            let _ = writeln!(s, "output: {out}");
        }
        s
    }
}
