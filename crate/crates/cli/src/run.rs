//! Subcommand bodies and the mapping from library errors to exit codes.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use swarm_relax::first_order::{detect_breakdown, run_with_jumps, FoConfig, FoRow};
use swarm_relax::fixtures::run1_like_state;
use swarm_relax::harness::{emit_report, fixture_breakdown, run_sweep, Scenario, ScalingResult};
use swarm_relax::polar::{Model, SyntheticField};
use swarm_relax::relax::{interval_milestones, r_excursion, transition_time, BreakdownData, EpsRun, Transition};
use swarm_relax::roots::scan_roots;
use swarm_relax::Error;

use crate::config::Resolved;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    ShowConfig,
    Roots,
    SimulateFo,
    SimulateRelax,
    Scaling1d,
    Scaling2d,
    Run1Demo,
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Measurement = 1,
    Config = 2,
    Unsupported = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::Unsupported(_) | Error::NoTarget { .. } => Exit::Unsupported,
            Error::InvalidParam { .. } => Exit::Config,
            _ => Exit::Measurement,
        };
        Failure { exit, msg: e.to_string() }
    }
}

fn config_failure(msg: impl Into<String>) -> Failure {
    Failure { exit: Exit::Config, msg: msg.into() }
}

fn print_json(v: &impl Serialize) -> Result<(), Failure> {
    use std::io::Write;
    let s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    match writeln!(std::io::stdout().lock(), "{s}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::from(e).into()),
        _ => Ok(()),
    }
}

fn planar(cfg: &Resolved, what: &str) -> Result<Scenario, Failure> {
    match cfg.raw.scenario {
        Scenario::OneD => Err(config_failure(format!("{what} needs a planar scenario, not one-d"))),
        s => Ok(s),
    }
}

fn particle_model(cfg: &Resolved) -> Model {
    Model::Particles { morse: cfg.raw.morse, vision: cfg.vision }
}

/// Model and breakdown data for the planar scenarios.
fn breakdown(cfg: &Resolved, scenario: Scenario) -> Result<(Model, BreakdownData), Failure> {
    Ok(match scenario {
        Scenario::ParticleFixture => fixture_breakdown(&cfg.raw.morse, &cfg.vision, &cfg.raw.roots)?,
        s => {
            let f: SyntheticField = cfg.synthetic_field(s);
            let init = BreakdownData::from_synthetic(&f);
            (Model::Synthetic(f), init)
        }
    })
}

#[derive(Serialize)]
struct FoCsv {
    t: f64,
    particle: usize,
    x: f64,
    y: f64,
    theta: f64,
    r: f64,
}

fn write_fo_csv(rows: &[FoRow], path: &Path) -> Result<(), Failure> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(Error::from)?;
    for row in rows {
        for (i, (p, b)) in row.positions.iter().zip(&row.branch).enumerate() {
            w.serialize(FoCsv { t: row.t, particle: i, x: p.x, y: p.y, theta: b.theta, r: b.r })
                .map_err(Error::from)?;
        }
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn write_trajectory(tr: &Transition, path: &Path) -> Result<(), Failure> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(Error::from)?;
    for row in &tr.trajectory {
        w.serialize(row).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn out_dir(cfg: &Resolved) -> Result<&Path, Failure> {
    let d = cfg.raw.output.dir.as_path();
    fs::create_dir_all(d).map_err(Error::from)?;
    Ok(d)
}

fn transition_summary(tr: &Transition, cfg: &Resolved) -> Value {
    let ms = interval_milestones(tr, &cfg.raw.relax);
    json!({
        "epsilon": tr.epsilon,
        "dt": tr.dt,
        "steps": tr.steps,
        "tau": tr.tau,
        "final_dist": tr.final_dist,
        "threshold": tr.threshold,
        "theta_star": tr.theta_star,
        "theta_tilde": tr.theta_tilde,
        "r_star": tr.r_star,
        "r_excursion": r_excursion(&tr.trajectory, tr.r_star),
        "milestones": ms,
    })
}

fn roots(cfg: &Resolved) -> Result<(), Failure> {
    match planar(cfg, "roots")? {
        Scenario::ParticleFixture => {
            let model = particle_model(cfg);
            let s = run1_like_state(&model, &cfg.raw.roots)?;
            let mut out = Vec::new();
            for (i, x) in s.positions.iter().enumerate() {
                let f = model.field(&s.positions, i)?;
                let set = scan_roots(&f, *x, &cfg.raw.roots)?;
                out.push(json!({ "particle": i, "x": x, "branch": s.branch[i], "roots": set }));
            }
            print_json(&out)
        }
        sc => {
            let f = cfg.synthetic_field(sc);
            let set = scan_roots(&f, f.x_star(), &cfg.raw.roots)?;
            print_json(&json!({ "x": f.x_star(), "theta_star": f.theta_star(), "theta_tilde": f.theta_tilde(), "roots": set }))
        }
    }
}

fn simulate_fo(cfg: &Resolved) -> Result<(), Failure> {
    if cfg.raw.scenario != Scenario::ParticleFixture {
        return Err(config_failure("simulate-fo runs the particle-fixture scenario"));
    }
    let model = particle_model(cfg);
    let init = run1_like_state(&model, &cfg.raw.roots)?;
    let run = run_with_jumps(&model, &init, &cfg.raw.roots, &cfg.raw.fo, cfg.raw.run.max_jumps)?;
    let dir = out_dir(cfg)?;
    write_fo_csv(&run.rows, &dir.join("fo.csv"))?;
    let events: Vec<Value> = run.events.iter().map(event_summary).collect();
    print_json(&json!({ "t_end": run.final_state.t, "events": events, "rows": dir.join("fo.csv") }))
}

fn event_summary(ev: &swarm_relax::first_order::BreakdownEvent) -> Value {
    json!({
        "t_star": ev.t_star,
        "tol_time": ev.tol_time,
        "particle": ev.particle,
        "x_star": ev.x_star,
        "theta_star": ev.theta_star,
        "r_star": ev.r_star,
        "A_star": ev.a_star,
        "target": ev.target,
        "also_degenerate": ev.also_degenerate,
    })
}

fn eps_run(cfg: &Resolved) -> EpsRun {
    EpsRun { epsilon: cfg.raw.run.epsilon, mode: cfg.raw.sweep.mode, perturb: cfg.raw.sweep.perturb, seed: cfg.raw.seed }
}

fn simulate_relax(cfg: &Resolved) -> Result<(), Failure> {
    let scenario = planar(cfg, "simulate-relax")?;
    let (model, init) = breakdown(cfg, scenario)?;
    let tr = transition_time(&model, &init, &eps_run(cfg), &cfg.raw.relax)?;
    let dir = out_dir(cfg)?;
    write_trajectory(&tr, &dir.join("relax.csv"))?;
    print_json(&transition_summary(&tr, cfg))
}

fn report(result: &ScalingResult, spec: &swarm_relax::harness::SweepSpec, cfg: &Resolved) -> Result<(), Failure> {
    let dir = out_dir(cfg)?;
    let paths = emit_report(result, spec, dir)?;
    let failed = result.rows.iter().filter(|r| !r.ok()).count();
    print_json(&json!({
        "fit": result.fit.as_ref().ok(),
        "fit_error": result.fit.as_ref().err(),
        "predicted_slope": spec.predicted_slope(),
        "rows": result.rows.len(),
        "failed_rows": failed,
        "files": [paths.rows, paths.fit, paths.plot],
    }))?;
    match &result.fit {
        Ok(_) => Ok(()),
        Err(e) => Err(Failure { exit: Exit::Measurement, msg: e.clone() }),
    }
}

fn scaling(cfg: &Resolved, scenario: Scenario) -> Result<(), Failure> {
    let spec = cfg.sweep_spec(scenario);
    let result = run_sweep(&spec, cfg.raw.jobs)?;
    report(&result, &spec, cfg)
}

fn run1_demo(cfg: &Resolved) -> Result<(), Failure> {
    let model = particle_model(cfg);
    let roots = &cfg.raw.roots;
    let start = run1_like_state(&model, roots)?;
    let fo = FoConfig { horizon: swarm_relax::fixtures::RUN1_HORIZON, ..cfg.raw.fo };
    let (ev, _) = detect_breakdown(&model, &start, roots, &fo)?;
    let ev = ev.ok_or_else(|| Failure { exit: Exit::Measurement, msg: "the fixture did not break down".into() })?;
    let run = run_with_jumps(&model, &start, roots, &cfg.raw.fo, cfg.raw.run.max_jumps.max(1))?;
    let init = BreakdownData::from_event(&ev)?;
    let tr = transition_time(&model, &init, &eps_run(cfg), &cfg.raw.relax)?;
    let dir = out_dir(cfg)?;
    write_fo_csv(&run.rows, &dir.join("fo.csv"))?;
    write_trajectory(&tr, &dir.join("relax.csv"))?;
    let after = run.rows.iter().find(|r| r.t > ev.t_star).map(|r| r.branch[ev.particle]);
    print_json(&json!({
        "breakdown": event_summary(&ev),
        "relaxation": transition_summary(&tr, cfg),
        "heading_after_jump": after.map(|b| b.theta),
        "speed_after_jump": after.map(|b| b.r),
        "final_positions": run.final_state.positions,
        "t_end": run.final_state.t,
    }))
}

pub fn dispatch(cmd: Command, cfg: &Resolved) -> Result<(), Failure> {
    match cmd {
        Command::ShowConfig => print_json(&cfg.echo()),
        Command::Roots => roots(cfg),
        Command::SimulateFo => simulate_fo(cfg),
        Command::SimulateRelax => simulate_relax(cfg),
        Command::Scaling1d => scaling(cfg, Scenario::OneD),
        Command::Scaling2d => scaling(cfg, planar(cfg, "scaling-2d")?),
        Command::Run1Demo => run1_demo(cfg),
    }
}
