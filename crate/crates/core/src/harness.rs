//! ε-sweeps, log-log fits and report emission.
//!
//! A sweep runs one transition measurement per ε (in parallel, one rayon
//! task per row), keeps failed rows with their reason, and fits
//! `log τ = slope · log ε + intercept` by ordinary least squares over the
//! successful rows.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::first_order::{detect_breakdown, FoConfig};
use crate::fixtures;
use crate::kernels::{MorseParams, VisionParams};
use crate::one_d::{predicted_exponents, transition_measure_1d, OneDConfig, OneDField, OneDRun, OneDSpec};
use crate::polar::{Model, SyntheticField};
use crate::relax::{interval_milestones, r_excursion, transition_time, BreakdownData, EpsRun, Milestone, Mode, RelaxConfig};
use crate::roots::RootConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    #[default]
    SyntheticRp,
    SyntheticRn,
    ParticleFixture,
    OneD,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SyntheticRp => "synthetic-rp",
            Scenario::SyntheticRn => "synthetic-rn",
            Scenario::ParticleFixture => "particle-fixture",
            Scenario::OneD => "one-d",
        }
    }
}

/// `{1e-2, 1e-2.5, 1e-3, 1e-3.5, 1e-4}`.
pub fn default_eps_list() -> Vec<f64> {
    (0..5).map(|k| 10f64.powf(-2.0 - 0.5 * k as f64)).collect()
}

/// Default ε list of a scenario. The particle fixture moves at speeds near
/// `2.5e-3`, so its relaxation layer only separates from the slow motion
/// about three decades further down than the synthetic fields.
pub fn scenario_eps_list(scenario: Scenario) -> Vec<f64> {
    match scenario {
        Scenario::ParticleFixture => (0..5).map(|k| 10f64.powf(-5.0 - 0.5 * k as f64)).collect(),
        _ => default_eps_list(),
    }
}

/// Smallest ε the one-dimensional sweep extends to.
pub const EPS_FLOOR_1D: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub eps_list: Vec<f64>,
    pub scenario: Scenario,
    pub mode: Mode,
    /// `(a₁, a₂, a₃)`; the one-dimensional model uses the first two.
    pub perturb: [f64; 3],
    pub seed: u64,
    /// Keep adding smaller ε (one-dimensional only) until the slope settles.
    pub auto_extend: bool,
    /// Replaces the preset field of the synthetic scenarios.
    pub synthetic: Option<SyntheticField>,
    pub one_d: OneDSpec,
    pub morse: MorseParams,
    pub vision: VisionParams,
    pub relax: RelaxConfig,
    pub one_d_steps: OneDConfig,
    pub roots: RootConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            eps_list: default_eps_list(),
            scenario: Scenario::SyntheticRp,
            mode: Mode::SingleMoving,
            perturb: [1.0, 1.0, 1.0],
            seed: 0,
            auto_extend: false,
            synthetic: None,
            one_d: OneDSpec::default(),
            morse: MorseParams::default(),
            vision: VisionParams::run_defaults(),
            relax: RelaxConfig::default(),
            one_d_steps: OneDConfig::default(),
            roots: RootConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(Error::param("sweep.eps_list", "must not be empty"));
        }
        for (i, e) in self.eps_list.iter().enumerate() {
            if !(*e > 0.0 && e.is_finite()) {
                return Err(Error::param(&format!("sweep.eps_list[{i}]"), "must be positive"));
            }
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::param("sweep.eps_list", "must be strictly decreasing"));
        }
        if self.perturb.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::param("sweep.perturb", "scales must be non-negative"));
        }
        self.relax.validate()?;
        self.roots.validate()?;
        Ok(())
    }

    /// Predicted slope of `log τ` against `log ε`.
    pub fn predicted_slope(&self) -> f64 {
        match self.scenario {
            Scenario::OneD => predicted_exponents(self.one_d.k, self.one_d.l).0,
            _ => 2.0 / 3.0,
        }
    }
}

/// Outcome of one ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub tau: Option<f64>,
    pub final_dist: Option<f64>,
    pub r_excursion: Option<f64>,
    pub milestones: Option<[Milestone; 4]>,
    pub steps: Option<u64>,
    pub failure: Option<String>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }

    fn failed(epsilon: f64, e: &Error) -> Self {
        SweepRow {
            epsilon,
            tau: None,
            final_dist: None,
            r_excursion: None,
            milestones: None,
            steps: None,
            failure: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Where the τ clock starts and how precisely that time is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockOrigin {
    pub origin: String,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub rows: Vec<SweepRow>,
    pub fit: std::result::Result<Fit, String>,
    pub clock: ClockOrigin,
}

impl ScalingResult {
    pub fn slope(&self) -> Option<f64> {
        self.fit.as_ref().ok().map(|f| f.slope)
    }
}

/// OLS fit of `log y` on `log x`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<Fit> {
    if points.len() < 3 {
        return Err(Error::FitUnavailable(format!("{} points, need at least 3", points.len())));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::Domain(format!("log-log fit needs positive finite values, got ({x}, {y})")));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 1e-24 * (1.0 + mx * mx) * n) {
        return Err(Error::Domain("degenerate design: all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(Fit { slope, intercept, r_squared, n_points: points.len() })
}

/// Breakdown data of the particle fixture, obtained by running the
/// first-order model from the fixture state.
pub fn fixture_breakdown(morse: &MorseParams, vision: &VisionParams, roots: &RootConfig) -> Result<(Model, BreakdownData)> {
    let model = Model::Particles { morse: *morse, vision: *vision };
    let start = fixtures::run1_like_state(&model, roots)?;
    let cfg = FoConfig { dt: 1e-3, horizon: fixtures::RUN1_HORIZON, ..Default::default() };
    let (ev, _) = detect_breakdown(&model, &start, roots, &cfg)?;
    let ev = ev.ok_or_else(|| Error::Precondition("the fixture did not break down within its horizon".into()))?;
    Ok((model, BreakdownData::from_event(&ev)?))
}

enum Prepared {
    Plane { model: Model, init: BreakdownData },
    Line(OneDField),
}

fn prepare(spec: &SweepSpec) -> Result<(Prepared, ClockOrigin)> {
    let synthetic = |preset: fn() -> SyntheticField| {
        let f = spec.synthetic.clone().unwrap_or_else(preset);
        let init = BreakdownData::from_synthetic(&f);
        (
            Prepared::Plane { model: Model::Synthetic(f), init },
            ClockOrigin { origin: "constructed crossing".into(), tolerance: 0.0 },
        )
    };
    Ok(match spec.scenario {
        Scenario::SyntheticRp => synthetic(SyntheticField::rp_default),
        Scenario::SyntheticRn => synthetic(SyntheticField::rn_default),
        Scenario::ParticleFixture => {
            let (model, init) = fixture_breakdown(&spec.morse, &spec.vision, &spec.roots)?;
            let tol = init.t_star_tol;
            (Prepared::Plane { model, init }, ClockOrigin { origin: "bisected root loss".into(), tolerance: tol })
        }
        Scenario::OneD => (
            Prepared::Line(OneDField::new(spec.one_d)?),
            ClockOrigin { origin: "constructed crossing".into(), tolerance: 0.0 },
        ),
    })
}

fn run_row(p: &Prepared, spec: &SweepSpec, eps: f64) -> SweepRow {
    match p {
        Prepared::Plane { model, init } => {
            let run = EpsRun { epsilon: eps, mode: spec.mode, perturb: spec.perturb, seed: spec.seed };
            match transition_time(model, init, &run, &spec.relax) {
                Ok(tr) => {
                    let ms = interval_milestones(&tr, &spec.relax);
                    SweepRow {
                        epsilon: eps,
                        tau: Some(tr.tau),
                        final_dist: Some(tr.final_dist),
                        r_excursion: Some(r_excursion(&tr.trajectory, tr.r_star)),
                        milestones: Some(ms.all()),
                        steps: Some(tr.steps),
                        failure: None,
                    }
                }
                Err(e) => SweepRow::failed(eps, &e),
            }
        }
        Prepared::Line(field) => {
            let (_, nu) = predicted_exponents(field.spec().k, field.spec().l);
            let run = OneDRun { epsilon: eps, perturb: [spec.perturb[0], spec.perturb[1]], seed: spec.seed, nu };
            match transition_measure_1d(field, &run, &spec.one_d_steps) {
                Ok(tr) => SweepRow {
                    epsilon: eps,
                    tau: Some(tr.tau),
                    final_dist: Some(tr.final_dist),
                    r_excursion: None,
                    milestones: None,
                    steps: Some(tr.steps),
                    failure: None,
                },
                Err(e) => SweepRow::failed(eps, &e),
            }
        }
    }
}

fn fit_rows(rows: &[SweepRow]) -> std::result::Result<Fit, String> {
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.tau.map(|t| (r.epsilon, t))).collect();
    fit_loglog(&pts).map_err(|e| e.to_string())
}

/// Run every ε of the sweep on `jobs` worker threads (0 lets rayon choose).
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<ScalingResult> {
    spec.validate()?;
    let (prepared, clock) = prepare(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    let run_all = |eps: &[f64]| -> Vec<SweepRow> {
        pool.install(|| eps.par_iter().map(|&e| run_row(&prepared, spec, e)).collect())
    };
    let mut rows = run_all(&spec.eps_list);
    let mut fit = fit_rows(&rows);

    if spec.auto_extend && spec.scenario == Scenario::OneD {
        // Add half-decades below the list until consecutive slopes agree.
        let mut eps = *spec.eps_list.last().expect("validated non-empty");
        while let Ok(prev) = fit.clone() {
            eps /= 10f64.sqrt();
            if eps < EPS_FLOOR_1D * (1.0 - 1e-9) {
                break;
            }
            rows.extend(run_all(&[eps]));
            let next = fit_rows(&rows);
            let settled = matches!(&next, Ok(f) if (f.slope - prev.slope).abs() < 0.005);
            fit = next;
            if settled {
                break;
            }
        }
    }
    for r in &rows {
        if let Some(f) = &r.failure {
            log::warn!("epsilon = {:e} failed: {f}", r.epsilon);
        }
    }
    Ok(ScalingResult { rows, fit, clock })
}

/// Flat CSV record of a sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub epsilon: f64,
    pub status: String,
    pub tau: Option<f64>,
    pub final_dist: Option<f64>,
    pub r_excursion: Option<f64>,
    pub t_bottleneck: String,
    pub t_escape_start: String,
    pub t_escape_end: String,
    pub t_converged: String,
    pub steps: Option<u64>,
    pub failure: String,
}

fn milestone_cell(m: Option<Milestone>) -> String {
    match m {
        Some(Milestone::Reached(t)) => t.to_string(),
        Some(Milestone::NotReached) => "not-reached".into(),
        Some(Milestone::AbsentByGeometry) => "absent-by-geometry".into(),
        None => String::new(),
    }
}

impl From<&SweepRow> for CsvRow {
    fn from(r: &SweepRow) -> Self {
        let m = |k: usize| milestone_cell(r.milestones.map(|a| a[k]));
        CsvRow {
            epsilon: r.epsilon,
            status: if r.ok() { "ok".into() } else { "failed".into() },
            tau: r.tau,
            final_dist: r.final_dist,
            r_excursion: r.r_excursion,
            t_bottleneck: m(0),
            t_escape_start: m(1),
            t_escape_end: m(2),
            t_converged: m(3),
            steps: r.steps,
            failure: r.failure.clone().unwrap_or_default(),
        }
    }
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in rows {
        wr.serialize(CsvRow::from(r))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(r: R) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub swarm_relax: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRow {
    pub epsilon: f64,
    pub reason: String,
}

/// Contents of `fit.json`. Field order is the key order on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub n_points: usize,
    pub predicted_slope: f64,
    pub fit_error: Option<String>,
    pub clock_origin: String,
    pub clock_tolerance: f64,
    pub failed_rows: Vec<FailedRow>,
    pub spec: SweepSpec,
    pub versions: Versions,
    pub seed: u64,
}

impl FitReport {
    pub fn new(result: &ScalingResult, spec: &SweepSpec) -> Self {
        let (slope, intercept, r_squared, n_points, fit_error) = match &result.fit {
            Ok(f) => (Some(f.slope), Some(f.intercept), Some(f.r_squared), f.n_points, None),
            Err(e) => (None, None, None, result.rows.iter().filter(|r| r.ok()).count(), Some(e.clone())),
        };
        FitReport {
            slope,
            intercept,
            r_squared,
            n_points,
            predicted_slope: spec.predicted_slope(),
            fit_error,
            clock_origin: result.clock.origin.clone(),
            clock_tolerance: result.clock.tolerance,
            failed_rows: result
                .rows
                .iter()
                .filter_map(|r| r.failure.clone().map(|reason| FailedRow { epsilon: r.epsilon, reason }))
                .collect(),
            spec: spec.clone(),
            versions: Versions { swarm_relax: env!("CARGO_PKG_VERSION").to_string() },
            seed: spec.seed,
        }
    }
}

/// gnuplot script: log-log scatter of the rows and the fitted line.
pub fn plot_script(result: &ScalingResult, spec: &SweepSpec) -> String {
    let mut s = String::new();
    s.push_str("# log-log scatter of tau against epsilon with the least-squares line\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set logscale xy\n");
    s.push_str("set xlabel 'epsilon'\n");
    s.push_str("set ylabel 'tau'\n");
    s.push_str(&format!("set title '{} sweep'\n", spec.scenario.name()));
    s.push_str("set key top left\n");
    match &result.fit {
        Ok(f) => {
            s.push_str(&format!("slope = {}\n", f.slope));
            s.push_str(&format!("intercept = {}\n", f.intercept));
            s.push_str("fit_line(x) = exp(intercept) * x**slope\n");
            s.push_str(
                "plot 'rows.csv' using 1:3 every ::1 with points pt 7 title 'tau', \\\n     fit_line(x) with lines title sprintf('slope %.3f', slope)\n",
            );
        }
        Err(e) => {
            s.push_str(&format!("# fit unavailable: {e}\n"));
            s.push_str("plot 'rows.csv' using 1:3 every ::1 with points pt 7 title 'tau'\n");
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub rows: PathBuf,
    pub fit: PathBuf,
    pub plot: PathBuf,
}

/// Write `rows.csv`, `fit.json` and `plot.txt` under `dir`.
pub fn emit_report(result: &ScalingResult, spec: &SweepSpec, dir: &Path) -> Result<ReportPaths> {
    fs::create_dir_all(dir)?;
    let paths = ReportPaths { rows: dir.join("rows.csv"), fit: dir.join("fit.json"), plot: dir.join("plot.txt") };
    let mut buf = Vec::new();
    write_rows_csv(&result.rows, &mut buf)?;
    fs::write(&paths.rows, buf)?;
    let mut json = serde_json::to_string_pretty(&FitReport::new(result, spec))?;
    json.push('\n');
    fs::write(&paths.fit, json)?;
    fs::write(&paths.plot, plot_script(result, spec))?;
    Ok(paths)
}

/// JSON schema of `fit.json`.
pub const FIT_SCHEMA: &str = include_str!("../schemas/fit.schema.json");

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn power_law(c: f64, p: f64) -> Vec<(f64, f64)> {
        default_eps_list().into_iter().map(|e| (e, c * e.powf(p))).collect()
    }

    #[test]
    fn exact_power_law() {
        let f = fit_loglog(&power_law(5.0, 2.0 / 3.0)).unwrap();
        assert!((f.slope - 2.0 / 3.0).abs() < 1e-12);
        assert!((f.intercept - 5f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_point_is_degenerate() {
        let p = vec![(1e-3, 0.1); 4];
        assert!(matches!(fit_loglog(&p), Err(Error::Domain(_))));
        assert!(matches!(fit_loglog(&p[..2]), Err(Error::FitUnavailable(_))));
        assert!(matches!(fit_loglog(&[(1e-3, 0.1), (1e-2, -1.0), (1e-1, 1.0)]), Err(Error::Domain(_))));
    }

    #[test]
    fn noisy_power_law_matches_closed_form_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let pts: Vec<(f64, f64)> = power_law(5.0, 2.0 / 3.0)
            .into_iter()
            .map(|(e, t)| (e, t * (1.0 + rng.gen_range(-0.02..0.02))))
            .collect();
        let f = fit_loglog(&pts).unwrap();
        // Closed form: slope = (nΣxy - ΣxΣy)/(nΣx² - (Σx)²).
        let n = pts.len() as f64;
        let (mut sx, mut sy, mut sxy, mut sxx) = (0.0, 0.0, 0.0, 0.0);
        for (e, t) in &pts {
            let (x, y) = (e.ln(), t.ln());
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((f.slope - slope).abs() < 1e-10);
        assert!((f.slope - 2.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn scaling_tau_shifts_only_the_intercept() {
        let pts = power_law(3.0, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<(f64, f64)> = pts.into_iter().map(|(e, t)| (e, t * rng.gen_range(0.9..1.1))).collect();
        let a = fit_loglog(&pts).unwrap();
        let c = 7.5;
        let b = fit_loglog(&pts.iter().map(|(e, t)| (*e, t * c)).collect::<Vec<_>>()).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-12);
        assert!((b.intercept - a.intercept - c.ln()).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let s = SweepSpec { eps_list: vec![1e-3, 1e-2], ..Default::default() };
        assert!(s.validate().is_err());
        let s = SweepSpec { eps_list: vec![1e-2, 0.0], ..Default::default() };
        assert!(s.validate().is_err());
        assert!(SweepSpec::default().validate().is_ok());
    }

    #[test]
    fn single_eps_sweep_has_no_fit() {
        let s = SweepSpec { eps_list: vec![1e-2], ..Default::default() };
        let r = run_sweep(&s, 1).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.fit.is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = SweepSpec { eps_list: vec![1e-2, 10f64.powf(-2.5), 1e-3], ..Default::default() };
        let r = run_sweep(&s, 1).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&r.rows, &mut buf).unwrap();
        let back = read_rows_csv(buf.as_slice()).unwrap();
        let expect: Vec<CsvRow> = r.rows.iter().map(CsvRow::from).collect();
        assert_eq!(back, expect);
        for (a, b) in back.iter().zip(&r.rows) {
            assert_eq!(a.tau.unwrap().to_bits(), b.tau.unwrap().to_bits());
        }
        assert!(!buf.contains(&b'\r'));
    }

    #[test]
    fn failed_rows_are_kept_out_of_the_fit() {
        let mut s = SweepSpec::default();
        s.relax.step_budget = 600;
        let r = run_sweep(&s, 1).unwrap();
        assert_eq!(r.rows.len(), 5);
        let failed = r.rows.iter().filter(|r| !r.ok()).count();
        assert!(failed > 0 && failed < 5);
        match &r.fit {
            Ok(f) => assert_eq!(f.n_points, 5 - failed),
            Err(_) => assert!(5 - failed < 3),
        }
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = SweepSpec { eps_list: vec![1e-2, 10f64.powf(-2.5), 1e-3], ..Default::default() };
        let r = run_sweep(&s, 1).unwrap();
        let p = emit_report(&r, &s, dir.path()).unwrap();
        let text = fs::read_to_string(&p.fit).unwrap();
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("slope") < pos("intercept") && pos("intercept") < pos("r_squared"));
        assert!(pos("r_squared") < pos("spec") && pos("spec") < pos("versions"));
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["seed"], 0);
        let plot = fs::read_to_string(&p.plot).unwrap();
        assert!(plot.contains("set logscale xy"));
        let back: FitReport = serde_json::from_value(json).unwrap();
        assert_eq!(back.spec, s);
    }

    fn schema_errors(report: &serde_json::Value) -> Vec<String> {
        let schema: serde_json::Value = serde_json::from_str(FIT_SCHEMA).unwrap();
        let v = jsonschema::validator_for(&schema).unwrap();
        v.iter_errors(report).map(|e| e.to_string()).collect()
    }

    #[test]
    fn reports_validate_against_the_schema() {
        let dir = tempfile::tempdir().unwrap();
        let ok = SweepSpec { eps_list: vec![1e-2, 10f64.powf(-2.5), 1e-3], ..Default::default() };
        let one = SweepSpec { eps_list: vec![1e-3], scenario: Scenario::OneD, ..Default::default() };
        for s in [ok, one] {
            let r = run_sweep(&s, 1).unwrap();
            let p = emit_report(&r, &s, dir.path()).unwrap();
            let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p.fit).unwrap()).unwrap();
            assert_eq!(schema_errors(&json), Vec::<String>::new());
        }
        let mut broken = serde_json::to_value(FitReport::new(
            &run_sweep(&SweepSpec { eps_list: vec![1e-3], ..Default::default() }, 1).unwrap(),
            &SweepSpec::default(),
        ))
        .unwrap();
        broken["clock_origin"] = "wall clock".into();
        assert!(!schema_errors(&broken).is_empty());
    }
}
