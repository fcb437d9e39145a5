//! First-order model integrated by continuation of the selected root branch.
//!
//! Each particle carries a heading `θ_i` with `H_i(θ_i) = 0` and speed
//! `r_i = R_i(θ_i)`. Positions advance with classical RK4; every stage
//! velocity comes from a Newton solve seeded with the previous stage's
//! heading. When the tracked root degenerates the integrator stops, brackets
//! the loss time by bisection and picks the heading the particle jumps to.

use serde::{Deserialize, Serialize};

use crate::polar::{Field, FieldEval, Model};
use crate::roots::{critical_point, refine_theta, scan_roots, select_jump_target, RootConfig};
use crate::{angle_diff, wrap_angle, Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Width of the final time bracket around a breakdown.
    pub tol_time: f64,
    /// Largest heading change accepted within one step before `dt` is halved.
    pub max_root_motion: f64,
    pub max_halvings: u32,
}

impl Default for FoConfig {
    fn default() -> Self {
        FoConfig { dt: 1e-3, horizon: 10.0, tol_time: 1e-10, max_root_motion: 0.2, max_halvings: 20 }
    }
}

impl FoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("fo.dt", "must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("fo.horizon", "must be positive"));
        }
        if !(self.tol_time > 0.0) {
            return Err(Error::param("fo.tol_time", "must be positive"));
        }
        if !(self.max_root_motion > 0.0 && self.max_root_motion < 1.0) {
            return Err(Error::param("fo.max_root_motion", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub theta: f64,
    pub r: f64,
}

impl Branch {
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.theta) * self.r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoState {
    pub t: f64,
    pub positions: Vec<Vec2>,
    pub branch: Vec<Branch>,
}

/// Grid used to estimate the scale of `∂θH` for the degeneracy threshold.
const DBL_SCALE_GRID: usize = 256;

/// `δ_dbl` for the field of one particle: a fixed fraction of `max|∂θH|`.
pub fn degeneracy_threshold<F: Field + ?Sized>(field: &F, x: Vec2, roots: &RootConfig) -> f64 {
    let m = (0..DBL_SCALE_GRID)
        .map(|k| {
            let t = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / DBL_SCALE_GRID as f64;
            field.dh_dtheta(x, t).abs()
        })
        .fold(0.0, f64::max);
    roots.delta_dbl_rel * m
}

/// Refine every particle's heading from `guesses`, rejecting inadmissible
/// branches.
pub fn init_branch(model: &Model, positions: &[Vec2], guesses: &[f64], roots: &RootConfig) -> Result<FoState> {
    if guesses.len() != positions.len() {
        return Err(Error::Precondition(format!(
            "{} guesses for {} particles",
            guesses.len(),
            positions.len()
        )));
    }
    let mut branch = Vec::with_capacity(positions.len());
    for (i, &g) in guesses.iter().enumerate() {
        let field = model.field(positions, i)?;
        let x = positions[i];
        field.check_point(x)?;
        let theta = refine_theta(&field, x, g, roots).map_err(|e| Error::Init { particle: i, reason: e.to_string() })?;
        let r = field.r(x, theta);
        if r < 0.0 {
            return Err(Error::Init {
                particle: i,
                reason: format!("R = {r} < 0 at theta = {theta}: root is inadmissible"),
            });
        }
        branch.push(Branch { theta, r });
    }
    Ok(FoState { t: 0.0, positions: positions.to_vec(), branch })
}

enum StageError {
    Guard,
    Fail(Error),
}

impl From<Error> for StageError {
    fn from(e: Error) -> Self {
        StageError::Fail(e)
    }
}

fn stage(
    model: &Model,
    positions: &[Vec2],
    seeds: &[f64],
    roots: &RootConfig,
    cfg: &FoConfig,
) -> std::result::Result<Vec<Branch>, StageError> {
    let mut out = Vec::with_capacity(positions.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let field = model.field(positions, i)?;
        field.check_point(positions[i])?;
        let theta = refine_theta(&field, positions[i], seed, roots)?;
        if angle_diff(theta, seed).abs() > cfg.max_root_motion {
            return Err(StageError::Guard);
        }
        out.push(Branch { theta, r: field.r(positions[i], theta) });
    }
    Ok(out)
}

fn axpy(base: &[Vec2], h: f64, v: &[Branch]) -> Vec<Vec2> {
    base.iter().zip(v).map(|(p, b)| *p + b.velocity() * h).collect()
}

fn rk4_once(
    model: &Model,
    s: &FoState,
    dt: f64,
    roots: &RootConfig,
    cfg: &FoConfig,
) -> std::result::Result<FoState, StageError> {
    let seeds: Vec<f64> = s.branch.iter().map(|b| b.theta).collect();
    let k1 = &s.branch;
    let p2 = axpy(&s.positions, 0.5 * dt, k1);
    let k2 = stage(model, &p2, &seeds, roots, cfg)?;
    let seeds2: Vec<f64> = k2.iter().map(|b| b.theta).collect();
    let p3 = axpy(&s.positions, 0.5 * dt, &k2);
    let k3 = stage(model, &p3, &seeds2, roots, cfg)?;
    let seeds3: Vec<f64> = k3.iter().map(|b| b.theta).collect();
    let p4 = axpy(&s.positions, dt, &k3);
    let k4 = stage(model, &p4, &seeds3, roots, cfg)?;
    let positions: Vec<Vec2> = (0..s.positions.len())
        .map(|i| {
            let v = k1[i].velocity() + k2[i].velocity() * 2.0 + k3[i].velocity() * 2.0 + k4[i].velocity();
            s.positions[i] + v * (dt / 6.0)
        })
        .collect();
    let seeds4: Vec<f64> = k4.iter().map(|b| b.theta).collect();
    let branch = stage(model, &positions, &seeds4, roots, cfg)?;
    Ok(FoState { t: s.t + dt, positions, branch })
}

fn step_guarded(
    model: &Model,
    s: &FoState,
    dt: f64,
    roots: &RootConfig,
    cfg: &FoConfig,
    depth: u32,
) -> Result<FoState> {
    match rk4_once(model, s, dt, roots, cfg) {
        Ok(next) => Ok(next),
        Err(StageError::Fail(e)) => Err(e),
        Err(StageError::Guard) if depth < cfg.max_halvings => {
            let mid = step_guarded(model, s, 0.5 * dt, roots, cfg, depth + 1)?;
            step_guarded(model, &mid, 0.5 * dt, roots, cfg, depth + 1)
        }
        Err(StageError::Guard) => Err(Error::RootLost { theta: s.branch[0].theta }),
    }
}

/// One RK4 step of the positions, halving internally when a heading moves
/// by more than `cfg.max_root_motion`.
pub fn step_fo(model: &Model, state: &FoState, dt: f64, roots: &RootConfig, cfg: &FoConfig) -> Result<FoState> {
    if !(dt > 0.0) {
        return Err(Error::Precondition("dt must be positive".into()));
    }
    step_guarded(model, state, dt, roots, cfg, 0)
}

/// Status of the jump target found at a breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum JumpTarget {
    Supported { theta_tilde: f64, r_tilde: f64 },
    Unsupported { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownEvent {
    pub t_star: f64,
    pub particle: usize,
    pub x_star: Vec2,
    pub theta_star: f64,
    pub r_star: f64,
    /// `∇ₓ(H/r)·v*` at the breakdown point.
    #[serde(rename = "A_star")]
    pub a_star: f64,
    /// `|∂θH(x*, θ*)|` and the threshold it was compared with.
    pub dh_star: f64,
    pub delta_dbl: f64,
    pub target: JumpTarget,
    /// Width of the time bracket around `t_star`.
    pub tol_time: f64,
    /// Other particles that were degenerate at the same time.
    pub also_degenerate: Vec<usize>,
    /// State at `t_star` (the last time at which every branch existed).
    pub state: FoState,
}

impl BreakdownEvent {
    pub fn theta_tilde(&self) -> Option<f64> {
        match self.target {
            JumpTarget::Supported { theta_tilde, .. } => Some(theta_tilde),
            JumpTarget::Unsupported { .. } => None,
        }
    }

    pub fn is_supported(&self) -> bool {
        matches!(self.target, JumpTarget::Supported { .. })
    }
}

/// Particles whose branch derivative has fallen below their `δ_dbl`.
fn degenerate_particles(model: &Model, s: &FoState, roots: &RootConfig) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..s.positions.len() {
        let field = model.field(&s.positions, i)?;
        let x = s.positions[i];
        let d = field.dh_dtheta(x, s.branch[i].theta).abs();
        if d < degeneracy_threshold(&field, x, roots) {
            out.push(i);
        }
    }
    Ok(out)
}

enum Probe {
    Healthy(FoState),
    Degenerate(FoState),
    Lost,
}

fn probe(model: &Model, s: &FoState, dt: f64, roots: &RootConfig, cfg: &FoConfig) -> Result<Probe> {
    match step_fo(model, s, dt, roots, cfg) {
        Ok(next) => {
            if degenerate_particles(model, &next, roots)?.is_empty() {
                Ok(Probe::Healthy(next))
            } else {
                Ok(Probe::Degenerate(next))
            }
        }
        Err(Error::RootLost { .. }) => Ok(Probe::Lost),
        Err(e) => Err(e),
    }
}

/// Advance until a branch degenerates or disappears, or until `horizon`.
///
/// Returns the bracketed event, or `None` with the final state when the
/// horizon is reached first.
pub fn detect_breakdown(
    model: &Model,
    state: &FoState,
    roots: &RootConfig,
    cfg: &FoConfig,
) -> Result<(Option<BreakdownEvent>, FoState)> {
    detect_breakdown_with(model, state, roots, cfg, |_| {})
}

/// [`detect_breakdown`] calling `on_step` with every accepted state.
pub fn detect_breakdown_with(
    model: &Model,
    state: &FoState,
    roots: &RootConfig,
    cfg: &FoConfig,
    mut on_step: impl FnMut(&FoState),
) -> Result<(Option<BreakdownEvent>, FoState)> {
    cfg.validate()?;
    let t_end = state.t + cfg.horizon;
    let mut cur = state.clone();
    if !degenerate_particles(model, &cur, roots)?.is_empty() {
        return Ok((Some(build_event(model, &cur, roots, cfg)?), cur));
    }
    loop {
        let remaining = t_end - cur.t;
        if remaining <= 1e-14 * t_end.abs().max(1.0) {
            return Ok((None, cur));
        }
        let dt = cfg.dt.min(remaining);
        match probe(model, &cur, dt, roots, cfg)? {
            Probe::Healthy(next) => {
                on_step(&next);
                cur = next;
            }
            _ => {
                let good = bracket(model, &cur, dt, roots, cfg, false)?;
                // The derivative test fires shortly before the root disappears;
                // follow the branch until it is actually lost.
                let good = match probe(model, &good, cfg.tol_time, roots, cfg)? {
                    Probe::Lost => good,
                    _ => chase_loss(model, &good, dt, roots, cfg)?,
                };
                on_step(&good);
                return Ok((Some(build_event(model, &good, roots, cfg)?), good));
            }
        }
    }
}

/// Bisect `[s.t, s.t + dt]` for the first time the probe stops being
/// healthy (or, with `loss_only`, stops existing). Returns the last good
/// state, within `tol_time` of the transition.
fn bracket(model: &Model, s: &FoState, dt: f64, roots: &RootConfig, cfg: &FoConfig, loss_only: bool) -> Result<FoState> {
    let (mut lo, mut hi) = (0.0, dt);
    let mut good = s.clone();
    while hi - lo > cfg.tol_time {
        let mid = 0.5 * (lo + hi);
        let ok = match probe(model, s, mid, roots, cfg)? {
            Probe::Healthy(n) => Some(n),
            Probe::Degenerate(n) if loss_only => Some(n),
            _ => None,
        };
        match ok {
            Some(n) => {
                lo = mid;
                good = n;
            }
            None => hi = mid,
        }
    }
    Ok(good)
}

fn chase_loss(model: &Model, s: &FoState, dt: f64, roots: &RootConfig, cfg: &FoConfig) -> Result<FoState> {
    let mut cur = s.clone();
    let mut h = cfg.tol_time;
    let budget = 10_000;
    for _ in 0..budget {
        match probe(model, &cur, h, roots, cfg)? {
            Probe::Lost => return bracket(model, &cur, h, roots, cfg, true),
            Probe::Healthy(n) | Probe::Degenerate(n) => {
                cur = n;
                h = (2.0 * h).min(dt);
            }
        }
    }
    Err(Error::StepBudget { budget: budget as u64, t: cur.t })
}

fn build_event(model: &Model, s: &FoState, roots: &RootConfig, cfg: &FoConfig) -> Result<BreakdownEvent> {
    let degenerate = degenerate_particles(model, s, roots)?;
    // Pick the particle whose branch is closest to degenerate relative to its threshold.
    let mut best = (0usize, f64::INFINITY);
    for i in 0..s.positions.len() {
        let field = model.field(&s.positions, i)?;
        let x = s.positions[i];
        let thr = degeneracy_threshold(&field, x, roots);
        let score = field.dh_dtheta(x, s.branch[i].theta).abs() / thr.max(f64::MIN_POSITIVE);
        if score < best.1 {
            best = (i, score);
        }
    }
    let particle = best.0;
    let field = model.field(&s.positions, particle)?;
    let x_star = s.positions[particle];
    let cell = 2.0 * std::f64::consts::PI / roots.grid_n as f64;
    let theta_star = critical_point(&field, x_star, s.branch[particle].theta, cell, roots)
        .map(wrap_angle)
        .unwrap_or(s.branch[particle].theta);
    let r_star = field.r(x_star, theta_star);
    let grad = field.grad_x_h(x_star, theta_star);
    let a_star = if r_star != 0.0 {
        grad.dot(Vec2::from_angle(theta_star) * r_star) / r_star
    } else {
        f64::NAN
    };
    let delta_dbl = degeneracy_threshold(&field, x_star, roots);
    let target = if !(a_star > 0.0) {
        JumpTarget::Unsupported { reason: format!("A* = {a_star} is not positive") }
    } else if !(r_star > 0.0) {
        JumpTarget::Unsupported { reason: format!("r* = {r_star} is not positive") }
    } else {
        let set = scan_roots(&field, x_star, roots)?;
        match select_jump_target(&field, x_star, &set, theta_star, 1.0) {
            Ok(root) => JumpTarget::Supported { theta_tilde: root.theta, r_tilde: root.r },
            Err(e) => JumpTarget::Unsupported { reason: e.to_string() },
        }
    };
    Ok(BreakdownEvent {
        t_star: s.t,
        particle,
        x_star,
        theta_star,
        r_star,
        a_star,
        dh_star: field.dh_dtheta(x_star, theta_star).abs(),
        delta_dbl,
        target,
        tol_time: cfg.tol_time,
        also_degenerate: degenerate.into_iter().filter(|&i| i != particle).collect(),
        state: s.clone(),
    })
}

/// Reset the jumping particle's branch to the target heading.
pub fn continue_through_jump(model: &Model, state: &FoState, event: &BreakdownEvent, roots: &RootConfig) -> Result<FoState> {
    let JumpTarget::Supported { theta_tilde, .. } = event.target else {
        let JumpTarget::Unsupported { reason } = &event.target else { unreachable!() };
        return Err(Error::Unsupported(reason.clone()));
    };
    let i = event.particle;
    let field: FieldEval = model.field(&state.positions, i)?;
    let x = state.positions[i];
    let theta = refine_theta(&field, x, theta_tilde, roots)?;
    let mut next = state.clone();
    next.branch[i] = Branch { theta, r: field.r(x, theta) };
    Ok(next)
}

/// One row of a first-order trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoRow {
    pub t: f64,
    pub positions: Vec<Vec2>,
    pub branch: Vec<Branch>,
}

impl From<&FoState> for FoRow {
    fn from(s: &FoState) -> Self {
        FoRow { t: s.t, positions: s.positions.clone(), branch: s.branch.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoRun {
    pub rows: Vec<FoRow>,
    pub events: Vec<BreakdownEvent>,
    pub final_state: FoState,
}

/// Integrate up to `cfg.horizon`, jumping through at most `max_jumps`
/// supported breakdowns. An unsupported breakdown ends the run.
pub fn run_with_jumps(
    model: &Model,
    init: &FoState,
    roots: &RootConfig,
    cfg: &FoConfig,
    max_jumps: usize,
) -> Result<FoRun> {
    let t_end = init.t + cfg.horizon;
    let mut rows = vec![FoRow::from(init)];
    let mut events = Vec::new();
    let mut cur = init.clone();
    loop {
        let left = FoConfig { horizon: t_end - cur.t, ..*cfg };
        if left.horizon <= 0.0 {
            break;
        }
        let (event, last) = detect_breakdown_with(model, &cur, roots, &left, |s| rows.push(FoRow::from(s)))?;
        cur = last;
        let Some(ev) = event else { break };
        let supported = ev.is_supported();
        events.push(ev);
        if !supported || events.len() > max_jumps {
            break;
        }
        cur = continue_through_jump(model, &cur, events.last().expect("just pushed"), roots)?;
        rows.push(FoRow::from(&cur));
    }
    Ok(FoRun { rows, events, final_state: cur })
}
