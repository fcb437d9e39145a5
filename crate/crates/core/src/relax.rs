//! The ε-relaxation system in polar form and transition-layer measurements.
//!
//! Each moving particle evolves by
//!
//! ```text
//! dx/dt = r u(θ),    ε dθ/dt = H(x, θ)/r,    ε dr/dt = -r + R(x, θ)
//! ```
//!
//! integrated with classical RK4 at `dt = min(dt_max, ε/κ)`. Runs start at a
//! breakdown (the clock origin is the root-loss time) and stop once `θ` is
//! within `ε^{2/3}` of the jump target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::first_order::{BreakdownEvent, FoConfig, FoState};
use crate::polar::{Field, FieldEval, Model, SyntheticField};
use crate::roots::RootConfig;
use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxConfig {
    /// Steps per relaxation time: `dt = min(dt_max, ε/κ)`.
    pub kappa: f64,
    pub dt_max: f64,
    pub r_floor: f64,
    pub step_budget: u64,
    /// Stop once `|θ - θ̃| ≤ ε^stop_exponent`.
    pub stop_exponent: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub c_diag: f64,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig {
            kappa: 20.0,
            dt_max: 1e-3,
            r_floor: 1e-12,
            step_budget: 1_000_000_000,
            stop_exponent: 2.0 / 3.0,
            alpha: 0.25,
            beta: 0.1,
            lambda: 0.1,
            c_diag: 1.0,
        }
    }
}

impl RelaxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 20.0 && self.kappa.is_finite()) {
            return Err(Error::param("relax.kappa", "must be at least 20"));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::param("relax.dt_max", "must be positive"));
        }
        if !(self.r_floor > 0.0) {
            return Err(Error::param("relax.r_floor", "must be positive"));
        }
        if self.step_budget == 0 {
            return Err(Error::param("relax.step_budget", "must be positive"));
        }
        if !(self.stop_exponent > 0.0) {
            return Err(Error::param("relax.stop_exponent", "must be positive"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::param("relax.alpha", "must be positive"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param("relax.beta", "must lie in (0, 1)"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0 / 3.0) {
            return Err(Error::param("relax.lambda", "must lie in (0, 1/3]"));
        }
        if !(self.c_diag > 0.0) {
            return Err(Error::param("relax.c_diag", "must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self, epsilon: f64) -> f64 {
        self.dt_max.min(epsilon / self.kappa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Only the jumping particle moves; the others stay at their breakdown positions.
    #[default]
    SingleMoving,
    /// Every particle follows the relaxation system.
    AllMoving,
}

/// Breakdown data a relaxation run starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownData {
    pub particle: usize,
    pub x_star: Vec2,
    pub theta_star: f64,
    pub r_star: f64,
    pub theta_tilde: f64,
    #[serde(rename = "A_star")]
    pub a_star: f64,
    /// Time of the breakdown on the first-order clock.
    pub t_star: f64,
    /// Bracketing tolerance of `t_star` (zero when constructed exactly).
    pub t_star_tol: f64,
    pub positions: Vec<Vec2>,
    pub thetas: Vec<f64>,
    pub rs: Vec<f64>,
}

impl BreakdownData {
    pub fn from_event(ev: &BreakdownEvent) -> Result<Self> {
        let theta_tilde = ev
            .theta_tilde()
            .ok_or_else(|| Error::Unsupported(format!("breakdown of particle {} has no supported target", ev.particle)))?;
        let mut thetas: Vec<f64> = ev.state.branch.iter().map(|b| b.theta).collect();
        let mut rs: Vec<f64> = ev.state.branch.iter().map(|b| b.r).collect();
        thetas[ev.particle] = ev.theta_star;
        rs[ev.particle] = ev.r_star;
        Ok(BreakdownData {
            particle: ev.particle,
            x_star: ev.x_star,
            theta_star: ev.theta_star,
            r_star: ev.r_star,
            theta_tilde,
            a_star: ev.a_star,
            t_star: ev.t_star,
            t_star_tol: ev.tol_time,
            positions: ev.state.positions.clone(),
            thetas,
            rs,
        })
    }

    /// The breakdown of a synthetic field is known exactly: `x = x*`, `θ = θ*`.
    pub fn from_synthetic(f: &SyntheticField) -> Self {
        BreakdownData {
            particle: 0,
            x_star: f.x_star(),
            theta_star: f.theta_star(),
            r_star: f.r_star(),
            theta_tilde: f.theta_tilde(),
            a_star: f.a_star(),
            t_star: 0.0,
            t_star_tol: 0.0,
            positions: vec![f.x_star()],
            thetas: vec![f.theta_star()],
            rs: vec![f.r_star()],
        }
    }

    /// `θ̃` lifted to lie above `θ*` by less than one turn.
    pub fn theta_tilde_lifted(&self) -> f64 {
        self.theta_star + (self.theta_tilde - self.theta_star).rem_euclid(2.0 * std::f64::consts::PI)
    }
}

/// One ε-run: initial data sits within `(a₁ε, a₂ε, a₃ε)` of the breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsRun {
    pub epsilon: f64,
    pub mode: Mode,
    pub perturb: [f64; 3],
    pub seed: u64,
}

impl EpsRun {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        if self.perturb.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::param("perturb", "scales must be non-negative"));
        }
        Ok(())
    }

    /// Offsets `(δx, δθ, δr)` drawn from a generator keyed by the seed and ε,
    /// so rows do not depend on execution order.
    pub fn offsets(&self) -> (Vec2, f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.epsilon.to_bits());
        let e = self.epsilon;
        let dir: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let mag: f64 = rng.gen_range(0.0..=1.0);
        let dth: f64 = rng.gen_range(-1.0..=1.0);
        let dr: f64 = rng.gen_range(-1.0..=1.0);
        (
            Vec2::from_angle(dir) * (self.perturb[0] * e * mag),
            self.perturb[1] * e * dth,
            self.perturb[2] * e * dr,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxState {
    pub t: f64,
    pub positions: Vec<Vec2>,
    /// Headings are not wrapped so that crossings can be read off directly.
    pub thetas: Vec<f64>,
    pub rs: Vec<f64>,
}

/// Time derivative of `(x, θ, r)` for one particle.
#[derive(Debug, Clone, Copy)]
struct Rate {
    dx: Vec2,
    dth: f64,
    dr: f64,
}

fn rate<F: Field + ?Sized>(f: &F, x: Vec2, th: f64, r: f64, eps: f64) -> Rate {
    Rate {
        dx: Vec2::from_angle(th) * r,
        dth: f.h(x, th) / (eps * r),
        dr: (f.r(x, th) - r) / eps,
    }
}

fn check_speed(particle: usize, r: f64, t: f64, floor: f64) -> Result<()> {
    if r > floor && r.is_finite() {
        Ok(())
    } else {
        Err(Error::SpeedCollapse { particle, r, t })
    }
}

/// One RK4 step of a single particle in a fixed field.
pub fn step_relax_single<F: Field + ?Sized>(
    field: &F,
    particle: usize,
    s: (Vec2, f64, f64),
    t: f64,
    eps: f64,
    dt: f64,
    r_floor: f64,
) -> Result<(Vec2, f64, f64)> {
    let (x, th, r) = s;
    check_speed(particle, r, t, r_floor)?;
    let k1 = rate(field, x, th, r, eps);
    let r2 = r + 0.5 * dt * k1.dr;
    check_speed(particle, r2, t + 0.5 * dt, r_floor)?;
    let k2 = rate(field, x + k1.dx * (0.5 * dt), th + 0.5 * dt * k1.dth, r2, eps);
    let r3 = r + 0.5 * dt * k2.dr;
    check_speed(particle, r3, t + 0.5 * dt, r_floor)?;
    let k3 = rate(field, x + k2.dx * (0.5 * dt), th + 0.5 * dt * k2.dth, r3, eps);
    let r4 = r + dt * k3.dr;
    check_speed(particle, r4, t + dt, r_floor)?;
    let k4 = rate(field, x + k3.dx * dt, th + dt * k3.dth, r4, eps);
    let w = dt / 6.0;
    let out = (
        x + (k1.dx + k2.dx * 2.0 + k3.dx * 2.0 + k4.dx) * w,
        th + w * (k1.dth + 2.0 * k2.dth + 2.0 * k3.dth + k4.dth),
        r + w * (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr),
    );
    check_speed(particle, out.2, t + dt, r_floor)?;
    Ok(out)
}

fn rates_all(model: &Model, s: &RelaxState, active: &[bool], eps: f64, r_floor: f64) -> Result<Vec<Rate>> {
    let mut out = Vec::with_capacity(active.len());
    for (i, &on) in active.iter().enumerate() {
        if !on {
            out.push(Rate { dx: Vec2::ZERO, dth: 0.0, dr: 0.0 });
            continue;
        }
        check_speed(i, s.rs[i], s.t, r_floor)?;
        let f = model.field(&s.positions, i)?;
        f.check_point(s.positions[i])?;
        out.push(rate(&f, s.positions[i], s.thetas[i], s.rs[i], eps));
    }
    Ok(out)
}

fn advance(s: &RelaxState, k: &[Rate], h: f64) -> RelaxState {
    RelaxState {
        t: s.t + h,
        positions: s.positions.iter().zip(k).map(|(p, k)| *p + k.dx * h).collect(),
        thetas: s.thetas.iter().zip(k).map(|(t, k)| t + h * k.dth).collect(),
        rs: s.rs.iter().zip(k).map(|(r, k)| r + h * k.dr).collect(),
    }
}

/// One RK4 step of the coupled system. Particles with `active[i] == false`
/// keep their state; fields are rebuilt from every stage's positions.
pub fn step_relax(model: &Model, s: &RelaxState, active: &[bool], eps: f64, dt: f64, r_floor: f64) -> Result<RelaxState> {
    if active.len() != s.positions.len() {
        return Err(Error::Precondition("activity mask does not match particle count".into()));
    }
    let k1 = rates_all(model, s, active, eps, r_floor)?;
    let s2 = advance(s, &k1, 0.5 * dt);
    let k2 = rates_all(model, &s2, active, eps, r_floor)?;
    let s3 = advance(s, &k2, 0.5 * dt);
    let k3 = rates_all(model, &s3, active, eps, r_floor)?;
    let s4 = advance(s, &k3, dt);
    let k4 = rates_all(model, &s4, active, eps, r_floor)?;
    let combined: Vec<Rate> = (0..k1.len())
        .map(|i| Rate {
            dx: (k1[i].dx + k2[i].dx * 2.0 + k3[i].dx * 2.0 + k4[i].dx) * (1.0 / 6.0),
            dth: (k1[i].dth + 2.0 * k2[i].dth + 2.0 * k3[i].dth + k4[i].dth) / 6.0,
            dr: (k1[i].dr + 2.0 * k2[i].dr + 2.0 * k3[i].dr + k4[i].dr) / 6.0,
        })
        .collect();
    let out = advance(s, &combined, dt);
    for (i, &on) in active.iter().enumerate() {
        if on {
            check_speed(i, out.rs[i], out.t, r_floor)?;
        }
    }
    Ok(out)
}

/// Stored sample of the moving particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub r: f64,
    pub eta: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "R")]
    pub r_force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub epsilon: f64,
    pub dt: f64,
    pub steps: u64,
    /// Time from root loss until `|θ - θ̃| ≤ ε^p` first holds.
    pub tau: f64,
    /// `|θ(τ) - θ̃|` from the same interpolation as `tau`.
    pub final_dist: f64,
    pub threshold: f64,
    pub theta_star: f64,
    /// Target lifted above `θ*`.
    pub theta_tilde: f64,
    pub r_star: f64,
    pub trajectory: Vec<TrajRow>,
}

/// Initial state of a run: breakdown data plus the seeded offsets on the
/// jumping particle.
pub fn initial_state(init: &BreakdownData, run: &EpsRun) -> RelaxState {
    let (dx, dth, dr) = run.offsets();
    let mut s = RelaxState {
        t: 0.0,
        positions: init.positions.clone(),
        thetas: init.thetas.clone(),
        rs: init.rs.clone(),
    };
    let i = init.particle;
    s.positions[i] = init.x_star + dx;
    s.thetas[i] = init.theta_star + dth;
    s.rs[i] = init.r_star + dr;
    s
}

/// Integrate from the (perturbed) breakdown state until the jumping
/// particle's heading is within `ε^p` of the target.
pub fn transition_time(model: &Model, init: &BreakdownData, run: &EpsRun, cfg: &RelaxConfig) -> Result<Transition> {
    cfg.validate()?;
    run.validate()?;
    if !(init.a_star > 0.0) {
        return Err(Error::Unsupported(format!("A* = {} is not positive", init.a_star)));
    }
    let i = init.particle;
    let at_star: FieldEval = model.field(&init.positions, i)?;
    if !(at_star.r(init.x_star, init.theta_tilde) > 0.0) {
        return Err(Error::Unsupported("R(x*, theta_tilde) is not positive".into()));
    }

    let eps = run.epsilon;
    let dt = cfg.dt(eps);
    let threshold = eps.powf(cfg.stop_exponent);
    let target = init.theta_tilde_lifted();
    let mut s = initial_state(init, run);
    let row = |s: &RelaxState, f: &FieldEval| -> TrajRow {
        let (x, th, r) = (s.positions[i], s.thetas[i], s.rs[i]);
        let h = f.h(x, th);
        TrajRow {
            t: s.t,
            x: x.x,
            y: x.y,
            theta: th,
            r,
            eta: (h - at_star.h(init.x_star, th)) / r,
            h,
            r_force: f.r(x, th),
        }
    };

    let active: Vec<bool> = match run.mode {
        Mode::SingleMoving => (0..s.positions.len()).map(|j| j == i).collect(),
        Mode::AllMoving => vec![true; s.positions.len()],
    };
    let mut traj = vec![row(&s, &at_star)];
    let gap = |th: f64| (target - th).abs() - threshold;
    let mut steps: u64 = 0;
    while gap(s.thetas[i]) > 0.0 {
        if steps >= cfg.step_budget {
            return Err(Error::StepBudget { budget: cfg.step_budget, t: s.t });
        }
        s = match run.mode {
            Mode::SingleMoving => {
                let (x, th, r) =
                    step_relax_single(&at_star, i, (s.positions[i], s.thetas[i], s.rs[i]), s.t, eps, dt, cfg.r_floor)?;
                let mut n = s.clone();
                n.t += dt;
                n.positions[i] = x;
                n.thetas[i] = th;
                n.rs[i] = r;
                n
            }
            Mode::AllMoving => step_relax(model, &s, &active, eps, dt, cfg.r_floor)?,
        };
        steps += 1;
        let f = match run.mode {
            Mode::SingleMoving => at_star.clone(),
            Mode::AllMoving => model.field(&s.positions, i)?,
        };
        traj.push(row(&s, &f));
    }
    let (tau, final_dist) = if traj.len() == 1 {
        (0.0, (target - traj[0].theta).abs())
    } else {
        let a = traj[traj.len() - 2];
        let b = traj[traj.len() - 1];
        let (ga, gb) = (gap(a.theta), gap(b.theta));
        let w = ga / (ga - gb);
        let th = a.theta + w * (b.theta - a.theta);
        (a.t + w * (b.t - a.t), (target - th).abs())
    };
    Ok(Transition {
        epsilon: eps,
        dt,
        steps,
        tau,
        final_dist,
        threshold,
        theta_star: init.theta_star,
        theta_tilde: target,
        r_star: init.r_star,
        trajectory: traj,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "t", rename_all = "kebab-case")]
pub enum Milestone {
    Reached(f64),
    NotReached,
    /// The threshold does not exceed the previous one for this ε.
    AbsentByGeometry,
}

impl Milestone {
    pub fn time(self) -> Option<f64> {
        match self {
            Milestone::Reached(t) => Some(t),
            _ => None,
        }
    }
}

/// First-crossing times of the four stage thresholds of the transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Milestones {
    /// `θ - θ* ≥ ε^{1/3}`.
    pub bottleneck: Milestone,
    /// `θ - θ* ≥ α ε^{1/6}`.
    pub escape_start: Milestone,
    /// `θ - θ* ≥ β (θ̃ - θ*)`.
    pub escape_end: Milestone,
    /// `θ̃ - θ ≤ c ε^{2/3}`.
    pub converged: Milestone,
    /// `(t₄ - t₃)/ε^{1-λ}` when both are reached.
    pub last_interval_ratio: Option<f64>,
}

impl Milestones {
    pub fn all(&self) -> [Milestone; 4] {
        [self.bottleneck, self.escape_start, self.escape_end, self.converged]
    }
}

/// Scan a stored trajectory for the milestone crossings.
pub fn interval_milestones(tr: &Transition, cfg: &RelaxConfig) -> Milestones {
    let eps = tr.epsilon;
    let (ts, tt) = (tr.theta_star, tr.theta_tilde);
    let levels = [
        eps.powf(1.0 / 3.0),
        cfg.alpha * eps.powf(1.0 / 6.0),
        cfg.beta * (tt - ts),
        (tt - ts) - cfg.c_diag * eps.powf(2.0 / 3.0),
    ];
    let mut out = [Milestone::NotReached; 4];
    let mut last = f64::NEG_INFINITY;
    for (k, &lv) in levels.iter().enumerate() {
        if lv <= last {
            out[k] = Milestone::AbsentByGeometry;
            continue;
        }
        last = lv;
        out[k] = first_crossing(&tr.trajectory, ts + lv).map_or(Milestone::NotReached, Milestone::Reached);
    }
    let ratio = match (out[2], out[3]) {
        (Milestone::Reached(a), Milestone::Reached(b)) => Some((b - a) / eps.powf(1.0 - cfg.lambda)),
        _ => None,
    };
    Milestones {
        bottleneck: out[0],
        escape_start: out[1],
        escape_end: out[2],
        converged: out[3],
        last_interval_ratio: ratio,
    }
}

fn first_crossing(rows: &[TrajRow], level: f64) -> Option<f64> {
    if rows.first()?.theta >= level {
        return Some(rows[0].t);
    }
    rows.windows(2).find(|w| w[1].theta >= level).map(|w| {
        let s = (level - w[0].theta) / (w[1].theta - w[0].theta);
        w[0].t + s * (w[1].t - w[0].t)
    })
}

/// `sup_t |r(t) - r*|` along a trajectory.
pub fn r_excursion(rows: &[TrajRow], r_star: f64) -> f64 {
    rows.iter().map(|r| (r.r - r_star).abs()).fold(0.0, f64::max)
}

/// Largest gap in position and velocity between the first-order run and the
/// all-moving relaxation run started on the same branch, sampled at every
/// first-order step over `[0, window]`.
pub fn tikhonov_gap(
    model: &Model,
    start: &FoState,
    epsilon: f64,
    window: f64,
    fo_steps: usize,
    roots: &RootConfig,
    relax: &RelaxConfig,
) -> Result<f64> {
    let dt_fo = window / fo_steps as f64;
    let sub = (dt_fo / relax.dt(epsilon)).ceil().max(1.0) as usize;
    let dt_r = dt_fo / sub as f64;
    let fo_cfg = FoConfig { dt: dt_fo, ..Default::default() };
    let n = start.positions.len();
    let active = vec![true; n];
    let mut fo = start.clone();
    let mut rs = RelaxState {
        t: start.t,
        positions: start.positions.clone(),
        thetas: start.branch.iter().map(|b| b.theta).collect(),
        rs: start.branch.iter().map(|b| b.r).collect(),
    };
    let mut worst: f64 = 0.0;
    for _ in 0..fo_steps {
        fo = crate::first_order::step_fo(model, &fo, dt_fo, roots, &fo_cfg)?;
        for _ in 0..sub {
            rs = step_relax(model, &rs, &active, epsilon, dt_r, relax.r_floor)?;
        }
        for j in 0..n {
            let dx = (fo.positions[j] - rs.positions[j]).norm();
            let dv = (fo.branch[j].velocity() - Vec2::from_angle(rs.thetas[j]) * rs.rs[j]).norm();
            worst = worst.max(dx).max(dv);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::{RProfile, SyntheticSpec};

    fn rp() -> (Model, BreakdownData) {
        let f = SyntheticField::rp_default();
        (Model::Synthetic(f.clone()), BreakdownData::from_synthetic(&f))
    }

    fn run(eps: f64) -> EpsRun {
        EpsRun { epsilon: eps, mode: Mode::SingleMoving, perturb: [0.0; 3], seed: 1 }
    }

    #[test]
    fn equilibrium_is_fixed() {
        let mut spec = SyntheticField::rp_default().spec().clone();
        spec.coupling = Vec2::ZERO;
        let f = SyntheticField::new(spec).unwrap();
        let m = Model::Synthetic(f.clone());
        let s = RelaxState { t: 0.0, positions: vec![f.x_star()], thetas: vec![0.22], rs: vec![1.0] };
        let mut cur = s.clone();
        for _ in 0..100 {
            let next = step_relax(&m, &cur, &[true], 1e-3, 1e-4, 1e-12).unwrap();
            assert!((next.thetas[0] - cur.thetas[0]).abs() < 1e-12);
            assert!((next.rs[0] - cur.rs[0]).abs() < 1e-12);
            cur = next;
        }
    }

    #[test]
    fn speed_relaxes_exponentially_with_frozen_heading() {
        // Zero coupling and H ≡ 0 along θ̃ keep x-dependence out; θ stays put.
        let mut spec = SyntheticField::rp_default().spec().clone();
        spec.coupling = Vec2::ZERO;
        spec.r_profile = RProfile::Constant { r_c: 0.8 };
        let f = SyntheticField::new(spec).unwrap();
        let eps = 1e-2;
        let dt = eps / 200.0;
        let r0 = 2.0;
        let mut s = (f.x_star(), 0.22, r0);
        let mut rows = vec![];
        for k in 1..=400 {
            s = step_relax_single(&f, 0, s, 0.0, eps, dt, 1e-12).unwrap();
            let t = k as f64 * dt;
            let exact = 0.8 + (r0 - 0.8) * (-t / eps).exp();
            assert!((s.2 - exact).abs() < 1e-8, "t {t}: {} vs {exact}", s.2);
            assert!((s.1 - 0.22).abs() < 1e-14);
            rows.push(TrajRow { t, x: 0.0, y: 0.0, theta: s.1, r: s.2, eta: 0.0, h: 0.0, r_force: 0.8 });
        }
        rows.insert(0, TrajRow { t: 0.0, x: 0.0, y: 0.0, theta: 0.22, r: r0, eta: 0.0, h: 0.0, r_force: 0.8 });
        assert_eq!(r_excursion(&rows, 0.8), (r0 - 0.8f64).abs());
    }

    #[test]
    fn rk4_self_convergence() {
        let (m, init) = rp();
        let eps = 1e-2;
        let s0 = initial_state(&init, &run(eps));
        let t_end = 0.05;
        let go = |dt: f64| {
            let mut s = s0.clone();
            let n = (t_end / dt).round() as usize;
            for _ in 0..n {
                s = step_relax(&m, &s, &[true], eps, dt, 1e-12).unwrap();
            }
            s
        };
        let dt = eps / 20.0;
        let reference = go(dt / 64.0);
        let err = |s: &RelaxState| {
            (s.thetas[0] - reference.thetas[0])
                .abs()
                .max((s.rs[0] - reference.rs[0]).abs())
                .max((s.positions[0] - reference.positions[0]).norm())
        };
        let ratio = err(&go(dt)) / err(&go(dt / 2.0));
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn transition_reaches_the_target_band() {
        let (m, init) = rp();
        let cfg = RelaxConfig::default();
        let tr = transition_time(&m, &init, &run(1e-3), &cfg).unwrap();
        assert!((tr.final_dist - tr.threshold).abs() < 1e-12);
        let c = tr.tau / 1e-3f64.powf(2.0 / 3.0);
        assert!(c > 0.5 && c < 10.0, "{c}");
        // dt/4 oracle
        let fine = RelaxConfig { kappa: 80.0, ..cfg };
        let tr4 = transition_time(&m, &init, &run(1e-3), &fine).unwrap();
        assert!(((tr.tau - tr4.tau) / tr4.tau).abs() < 0.01);
    }

    #[test]
    fn modes_agree_without_other_particles() {
        let (m, init) = rp();
        let cfg = RelaxConfig::default();
        let single = transition_time(&m, &init, &EpsRun { perturb: [1.0; 3], ..run(1e-3) }, &cfg).unwrap();
        let all = EpsRun { mode: Mode::AllMoving, perturb: [1.0; 3], ..run(1e-3) };
        let all = transition_time(&m, &init, &all, &cfg).unwrap();
        assert_eq!(single.trajectory.len(), all.trajectory.len());
        for (a, b) in single.trajectory.iter().zip(&all.trajectory) {
            let d = (a.x - b.x).abs().max((a.y - b.y).abs()).max((a.theta - b.theta).abs()).max((a.r - b.r).abs());
            assert!(d < 1e-10, "{d} at t = {}", a.t);
        }
        assert!((single.tau - all.tau).abs() < 1e-10);
    }

    #[test]
    fn perturbation_does_not_change_the_layer_scale() {
        let (m, init) = rp();
        let cfg = RelaxConfig::default();
        let a = transition_time(&m, &init, &run(1e-3), &cfg).unwrap();
        let b = transition_time(&m, &init, &EpsRun { perturb: [1.0; 3], ..run(1e-3) }, &cfg).unwrap();
        assert!(((a.tau - b.tau) / a.tau).abs() < 0.1, "{} vs {}", a.tau, b.tau);
    }

    #[test]
    fn perturbation_offsets_respect_scales() {
        let r = EpsRun { perturb: [1.0, 2.0, 3.0], ..run(1e-3) };
        for seed in 0..50 {
            let (dx, dth, dr) = EpsRun { seed, ..r }.offsets();
            assert!(dx.norm() <= 1e-3 + 1e-18);
            assert!(dth.abs() <= 2e-3 && dr.abs() <= 3e-3);
        }
        assert_eq!(r.offsets(), r.offsets());
    }

    #[test]
    fn milestones_are_ordered() {
        let (m, init) = rp();
        let cfg = RelaxConfig::default();
        let tr = transition_time(&m, &init, &run(1e-4), &cfg).unwrap();
        let ms = interval_milestones(&tr, &cfg);
        let times: Vec<f64> = ms.all().iter().map(|m| m.time().expect("reached")).collect();
        for w in times.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert!(ms.last_interval_ratio.is_some());
    }

    #[test]
    fn degenerate_thresholds_are_absent_by_geometry() {
        let mut spec: SyntheticSpec = SyntheticField::rp_default().spec().clone();
        spec.theta_tilde = spec.theta_star + 0.3;
        let f = SyntheticField::new(spec).unwrap();
        let m = Model::Synthetic(f.clone());
        let init = BreakdownData::from_synthetic(&f);
        let cfg = RelaxConfig::default();
        // β·0.3 = 0.03 is below α ε^{1/6} at ε = 1e-3.
        let tr = transition_time(&m, &init, &run(1e-3), &cfg).unwrap();
        let ms = interval_milestones(&tr, &cfg);
        assert_eq!(ms.escape_end, Milestone::AbsentByGeometry);
        assert!(ms.converged.time().is_some());
    }

    #[test]
    fn heading_increases_through_escape() {
        let (m, init) = rp();
        let cfg = RelaxConfig::default();
        let eps = 1e-4;
        let tr = transition_time(&m, &init, &run(eps), &cfg).unwrap();
        let start = tr
            .trajectory
            .iter()
            .position(|r| r.theta - tr.theta_star >= eps.powf(1.0 / 3.0))
            .unwrap();
        for w in tr.trajectory[start..].windows(2) {
            assert!(w[1].theta >= w[0].theta);
        }
    }

    #[test]
    fn speed_stays_below_its_forcing_bound() {
        for f in [SyntheticField::rp_default(), SyntheticField::bump_default(), SyntheticField::rn_default()] {
            let m = Model::Synthetic(f.clone());
            let init = BreakdownData::from_synthetic(&f);
            let tr = transition_time(&m, &init, &run(1e-3), &RelaxConfig::default()).unwrap();
            let r_bar = tr.trajectory.iter().map(|r| r.r_force.abs()).fold(0.0, f64::max);
            let r0 = tr.trajectory[0].r;
            for row in &tr.trajectory {
                assert!(row.r <= r0.max(r_bar + 1e-9));
            }
        }
    }

    #[test]
    fn rn_run_keeps_positive_speed() {
        let f = SyntheticField::rn_default();
        let m = Model::Synthetic(f.clone());
        let init = BreakdownData::from_synthetic(&f);
        for eps in [1e-2, 1e-3, 1e-4] {
            let tr = transition_time(&m, &init, &run(eps), &RelaxConfig::default()).unwrap();
            assert!(tr.trajectory.iter().all(|r| r.r > 0.0));
        }
    }

    #[test]
    fn negative_a_star_is_unsupported() {
        let (m, mut init) = rp();
        init.a_star = -1.0;
        assert!(matches!(
            transition_time(&m, &init, &run(1e-3), &RelaxConfig::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn eta_starts_at_zero_on_exact_data() {
        let (m, init) = rp();
        let tr = transition_time(&m, &init, &run(1e-3), &RelaxConfig::default()).unwrap();
        assert_eq!(tr.trajectory[0].eta, 0.0);
        // η = μ·(x - x*)/r for the linear coupling
        let f = SyntheticField::rp_default();
        for row in tr.trajectory.iter().step_by(50) {
            let expect = f.coupling().dot(Vec2::new(row.x, row.y) - f.x_star()) / row.r;
            assert!((row.eta - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn config_validation() {
        assert!(RelaxConfig { kappa: 5.0, ..Default::default() }.validate().is_err());
        assert!(RelaxConfig { beta: 1.0, ..Default::default() }.validate().is_err());
        assert!(RelaxConfig { lambda: 0.5, ..Default::default() }.validate().is_err());
        assert!(EpsRun { epsilon: 0.0, ..run(1.0) }.validate().is_err());
    }
}
