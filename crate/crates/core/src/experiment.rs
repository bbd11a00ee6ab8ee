//! Experiment runner and CSV output.
//!
//! A sweep visits every `(σ, ε_act, detector)` combination in that nesting
//! order and records the Monte Carlo estimate next to the analytical
//! predictions. All grid points reuse the master seed, so neighbouring
//! points are evaluated on common random numbers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    cost_difference_moments, glrt_bound_error, glrt_clt_error, linear_error_closed_form, y_moments,
    MomentCache,
};
use crate::attacks::{AttackKind, BUDGET_SLACK};
use crate::config::{Experiment, ExperimentKind};
use crate::detectors::{minimax_weights, DetectorKind, LinearDetector};
use crate::error::Result;
use crate::model::BinaryInstance;
use crate::montecarlo::{run_trials, summarize_coordinate_costs, CoordinateSetup};

pub const SWEEP_SCHEMA: &str = "sweep-v1";
pub const MOMENTS_SCHEMA: &str = "moments-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub experiment_id: String,
    pub detector: DetectorKind,
    pub d: usize,
    pub p: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub eps_des: f64,
    pub eps_act: f64,
    pub sigma: f64,
    pub pe_mc: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub pe_clt: Option<f64>,
    pub pe_bound: Option<f64>,
    pub pe_closed_form: Option<f64>,
    pub trials: Option<u64>,
    pub ties: Option<u64>,
    pub seed: u64,
    /// `;`-separated markers: `over_budget`, `degenerate_weights`.
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub experiment_id: String,
    pub t: f64,
    pub abs_mu: f64,
    pub eps: f64,
    pub sigma: f64,
    pub c_mean_quad: f64,
    pub c_var_quad: f64,
    pub y_mean: f64,
    pub y_var: f64,
    pub c_mean_mc: Option<f64>,
    pub c_mean_se: Option<f64>,
    pub c_var_mc: Option<f64>,
    pub c_var_se: Option<f64>,
    pub y_mean_mc: Option<f64>,
    pub y_mean_se: Option<f64>,
    pub y_var_mc: Option<f64>,
    pub y_var_se: Option<f64>,
    pub bound_violations: Option<u64>,
    pub samples: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Monte Carlo plus analytical columns.
    Run,
    /// Analytical columns only.
    Predict,
}

impl Mode {
    fn as_str(&self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Predict => "predict",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Sweep(Vec<SweepRow>),
    Moments(Vec<MomentRow>),
}

impl Report {
    pub fn len(&self) -> usize {
        match self {
            Report::Sweep(r) => r.len(),
            Report::Moments(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sweep_rows(&self) -> Option<&[SweepRow]> {
        match self {
            Report::Sweep(r) => Some(r),
            Report::Moments(_) => None,
        }
    }

    pub fn moment_rows(&self) -> Option<&[MomentRow]> {
        match self {
            Report::Moments(r) => Some(r),
            Report::Sweep(_) => None,
        }
    }
}

pub fn run_experiment(exp: &Experiment) -> Result<Report> {
    evaluate(exp, Mode::Run)
}

pub fn predict(exp: &Experiment) -> Result<Report> {
    evaluate(exp, Mode::Predict)
}

pub fn evaluate(exp: &Experiment, mode: Mode) -> Result<Report> {
    match exp.kind {
        ExperimentKind::Sweep => sweep(exp, mode).map(Report::Sweep),
        ExperimentKind::Moments => moments(exp, mode).map(Report::Moments),
    }
}

fn sweep(exp: &Experiment, mode: Mode) -> Result<Vec<SweepRow>> {
    let mut cache = MomentCache::new();
    let mut rows = Vec::new();
    for &sigma in &exp.sigmas {
        let instance = BinaryInstance::new(exp.mu.clone(), sigma, exp.eps_des)?.to_problem();
        for attack in &exp.attacks {
            let per_hyp = attack.resolve(&instance)?;
            let (e0, e1) = (&per_hyp[0], &per_hyp[1]);
            let eps_act = attack.strength();
            let full_budget_sign = matches!(attack.kind, AttackKind::WorstCase { .. })
                && (eps_act - exp.eps_des).abs() <= BUDGET_SLACK;

            for &kind in &exp.detectors {
                let mut flags = Vec::new();
                if attack.exceeds(exp.eps_des) {
                    flags.push("over_budget");
                }
                let (mut pe_clt, mut pe_bound, mut pe_closed_form) = (None, None, None);
                match kind {
                    DetectorKind::Clean | DetectorKind::Minimax => {
                        let w = if kind == DetectorKind::Clean {
                            LinearDetector::clean(&exp.mu)?
                        } else {
                            minimax_weights(&exp.mu, exp.eps_des)?
                        };
                        if w.is_degenerate() {
                            flags.push("degenerate_weights");
                        }
                        pe_closed_form = Some(linear_error_closed_form(
                            w.weights(),
                            &exp.mu,
                            e0,
                            e1,
                            sigma,
                        )?);
                    }
                    DetectorKind::Glrt => {
                        pe_clt = Some(glrt_clt_error(
                            &exp.mu,
                            e0,
                            e1,
                            exp.eps_des,
                            sigma,
                            &mut cache,
                        )?);
                        if full_budget_sign {
                            pe_bound = Some(glrt_bound_error(&exp.mu, exp.eps_des, sigma));
                        }
                    }
                }

                let mc = match mode {
                    Mode::Run => {
                        let detector = kind.build(&instance)?;
                        Some(run_trials(
                            &instance,
                            attack,
                            detector.as_ref(),
                            exp.n_trials,
                            exp.seed,
                        )?)
                    }
                    Mode::Predict => None,
                };

                rows.push(SweepRow {
                    experiment_id: exp.id.clone(),
                    detector: kind,
                    d: exp.mu.len(),
                    p: exp.template.map(|t| t.p),
                    a: exp.template.map(|t| t.a),
                    b: exp.template.map(|t| t.b),
                    eps_des: exp.eps_des,
                    eps_act,
                    sigma,
                    pe_mc: mc.map(|m| m.p_hat),
                    ci_low: mc.map(|m| m.ci_low),
                    ci_high: mc.map(|m| m.ci_high),
                    pe_clt,
                    pe_bound,
                    pe_closed_form,
                    trials: mc.map(|m| m.trials),
                    ties: mc.map(|m| m.ties),
                    seed: exp.seed,
                    flags: flags.join(";"),
                });
            }
        }
    }
    Ok(rows)
}

fn moments(exp: &Experiment, mode: Mode) -> Result<Vec<MomentRow>> {
    let eps = exp.eps_des;
    let mut rows = Vec::new();
    for &sigma in &exp.sigmas {
        for &t in &exp.t_grid {
            let abs_mu = eps + t / 2.0;
            let quad = cost_difference_moments(abs_mu, -eps, eps, sigma)?;
            let y = y_moments(t, sigma);
            let mc = match mode {
                Mode::Run => {
                    let setup = CoordinateSetup::new(abs_mu, eps, eps, sigma)?;
                    Some(summarize_coordinate_costs(setup, exp.n_trials, exp.seed)?)
                }
                Mode::Predict => None,
            };
            rows.push(MomentRow {
                experiment_id: exp.id.clone(),
                t,
                abs_mu,
                eps,
                sigma,
                c_mean_quad: quad.mean,
                c_var_quad: quad.variance,
                y_mean: y.mean,
                y_var: y.variance,
                c_mean_mc: mc.map(|s| s.c.mean()),
                c_mean_se: mc.map(|s| s.c.mean_std_error()),
                c_var_mc: mc.map(|s| s.c.variance()),
                c_var_se: mc.map(|s| s.c.variance_std_error()),
                y_mean_mc: mc.map(|s| s.y.mean()),
                y_mean_se: mc.map(|s| s.y.mean_std_error()),
                y_var_mc: mc.map(|s| s.y.variance()),
                y_var_se: mc.map(|s| s.y.variance_std_error()),
                bound_violations: mc.map(|s| s.bound_violations),
                samples: mc.map(|s| s.c.count()),
                seed: exp.seed,
            });
        }
    }
    Ok(rows)
}

/// Writes `# key: value` metadata lines followed by the CSV table.
pub fn write_csv<W: Write>(
    exp: &Experiment,
    mode: Mode,
    report: &Report,
    mut out: W,
) -> Result<()> {
    let schema = match report {
        Report::Sweep(_) => SWEEP_SCHEMA,
        Report::Moments(_) => MOMENTS_SCHEMA,
    };
    writeln!(out, "# schema: {schema}")?;
    writeln!(out, "# tool: robust-detect {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# mode: {}", mode.as_str())?;
    writeln!(out, "# experiment_id: {}", exp.id)?;
    writeln!(out, "# config_sha256: {}", exp.config.digest()?)?;
    writeln!(out, "# master_seed: {}", exp.seed)?;
    writeln!(
        out,
        "# ci: 95% normal approximation p +- 1.96*sqrt(p(1-p)/n), clipped to [0,1]"
    )?;
    writeln!(
        out,
        "# template: round(p*d) uses round-half-up; a-level coordinates come first"
    )?;
    writeln!(
        out,
        "# note: pe_clt and pe_bound are central-limit approximations, not exact probabilities"
    )?;
    let mut w = csv::Writer::from_writer(out);
    match report {
        Report::Sweep(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
        Report::Moments(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(exp: &Experiment, mode: Mode, report: &Report, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path)?;
    write_csv(exp, mode, report, std::io::BufWriter::new(file))
}

fn reader<R: std::io::Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input)
}

pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    Ok(reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()?)
}

pub fn read_moments_csv<R: std::io::Read>(input: R) -> Result<Vec<MomentRow>> {
    Ok(reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;

    fn small(text: &str) -> Experiment {
        ConfigFile::parse(text, Path::new("t.toml"))
            .unwrap()
            .resolve()
            .unwrap()
    }

    const SWEEP: &str = r#"
experiment_id = "small"
d = 10
p = 0.2
a = 1.5
b = 0.5
eps_des = 1.0
sigma_grid = [0.5, 1.0]
k_grid = [0.0, 1.0]
detectors = ["clean", "minimax", "glrt"]
n_trials = 2000
master_seed = 3
"#;

    #[test]
    fn sweep_row_order_and_columns() {
        let exp = small(SWEEP);
        let rows = run_experiment(&exp).unwrap().sweep_rows().unwrap().to_vec();
        assert_eq!(rows.len(), 12);
        let order: Vec<(f64, f64, DetectorKind)> = rows
            .iter()
            .map(|r| (r.sigma, r.eps_act, r.detector))
            .collect();
        assert_eq!(order[0], (0.5, 0.0, DetectorKind::Clean));
        assert_eq!(order[2], (0.5, 0.0, DetectorKind::Glrt));
        assert_eq!(order[3], (0.5, 1.0, DetectorKind::Clean));
        assert_eq!(order[6], (1.0, 0.0, DetectorKind::Clean));
        for r in &rows {
            assert_eq!(r.trials, Some(2000));
            assert!(r.pe_mc.is_some());
            match r.detector {
                DetectorKind::Glrt => {
                    assert!(r.pe_clt.is_some() && r.pe_closed_form.is_none());
                    assert_eq!(r.pe_bound.is_some(), r.eps_act == 1.0);
                }
                _ => assert!(r.pe_closed_form.is_some() && r.pe_clt.is_none()),
            }
        }
    }

    #[test]
    fn predict_matches_run_analytics() {
        let exp = small(SWEEP);
        let run = run_experiment(&exp).unwrap();
        let pred = predict(&exp).unwrap();
        for (r, p) in run
            .sweep_rows()
            .unwrap()
            .iter()
            .zip(pred.sweep_rows().unwrap())
        {
            assert_eq!(
                (r.pe_clt, r.pe_bound, r.pe_closed_form),
                (p.pe_clt, p.pe_bound, p.pe_closed_form)
            );
            assert!(p.pe_mc.is_none() && p.trials.is_none());
        }
    }

    #[test]
    fn csv_round_trips() {
        let exp = small(SWEEP);
        let report = run_experiment(&exp).unwrap();
        let mut buf = Vec::new();
        write_csv(&exp, Mode::Run, &report, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema: sweep-v1\n"));
        assert!(text.contains("\nexperiment_id,detector,d,p,a,b,eps_des,eps_act,sigma,pe_mc,"));
        let back = read_sweep_csv(buf.as_slice()).unwrap();
        assert_eq!(back, report.sweep_rows().unwrap());
    }

    #[test]
    fn degenerate_minimax_is_flagged() {
        let exp = small(
            &SWEEP
                .replace("a = 1.5", "a = 1.01")
                .replace("p = 0.2", "p = 0.0")
                .replace(
                    "detectors = [\"clean\", \"minimax\", \"glrt\"]",
                    "detectors = [\"minimax\"]",
                ),
        );
        let rows = predict(&exp).unwrap().sweep_rows().unwrap().to_vec();
        assert!(rows
            .iter()
            .all(|r| r.flags == "degenerate_weights" && r.pe_closed_form == Some(0.5)));
    }

    #[test]
    fn moments_rows() {
        let exp = small(
            r#"
experiment_id = "m"
kind = "moments"
eps_des = 1.0
sigma_grid = [1.0]
t_grid = [-2.0, 0.0, 2.0]
n_trials = 100000
master_seed = 9
"#,
        );
        let report = run_experiment(&exp).unwrap();
        let rows = report.moment_rows().unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].abs_mu, 0.0);
        for r in rows {
            assert_eq!(r.bound_violations, Some(0));
            let se = r.c_mean_se.unwrap();
            assert!((r.c_mean_mc.unwrap() - r.c_mean_quad).abs() <= 5.0 * se + 1e-9);
            assert!(r.c_mean_quad >= r.y_mean - 1e-9);
        }
        let mut buf = Vec::new();
        write_csv(&exp, Mode::Run, &report, &mut buf).unwrap();
        assert_eq!(read_moments_csv(buf.as_slice()).unwrap(), rows);
    }
}
