//! Scalar model `ε v' = F(x, v)`, `x' = v` with
//! `F(x, v) = -h(v) (v - v*)^{2k} (v - ṽ)^{2ℓ-1} + μ (x - x*)`.
//!
//! `v*` is a root of multiplicity `2k` that disappears once `μ (x - x*)`
//! turns positive; `v` then travels to the root `ṽ` of multiplicity `2ℓ-1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Positive prefactor `h(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HFn {
    Constant { h0: f64 },
    /// `h0 + h1 (v - v*)`.
    Affine { h0: f64, h1: f64 },
}

impl HFn {
    fn eval(&self, v: f64, v_star: f64) -> f64 {
        match *self {
            HFn::Constant { h0 } => h0,
            HFn::Affine { h0, h1 } => h0 + h1 * (v - v_star),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneDSpec {
    pub k: u32,
    pub l: u32,
    pub h: HFn,
    pub v_star: f64,
    pub v_tilde: f64,
    pub mu: f64,
    #[serde(default)]
    pub x_star: f64,
}

impl Default for OneDSpec {
    fn default() -> Self {
        OneDSpec { k: 1, l: 1, h: HFn::Constant { h0: 1.0 }, v_star: 0.5, v_tilde: 1.5, mu: 1.0, x_star: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OneDSpec", into = "OneDSpec")]
pub struct OneDField {
    spec: OneDSpec,
}

impl OneDField {
    /// Validates the factored form: double-type root at `v*`, positive `F`
    /// between the roots, non-increasing through `ṽ`, and `μ v* > 0`.
    pub fn new(spec: OneDSpec) -> Result<Self> {
        if spec.k == 0 {
            return Err(Error::param("one_d.k", "must be at least 1"));
        }
        if spec.l == 0 {
            return Err(Error::param("one_d.l", "must be at least 1"));
        }
        if !(spec.v_star > 0.0 && spec.v_tilde > spec.v_star && spec.v_tilde.is_finite()) {
            return Err(Error::param("one_d.v_tilde", "must satisfy 0 < v_star < v_tilde"));
        }
        if !(spec.mu * spec.v_star > 0.0 && spec.mu.is_finite()) {
            return Err(Error::param("one_d.mu", "mu * v_star must be positive"));
        }
        let f = OneDField { spec };
        let n = 1000;
        for j in 0..=n {
            let v = spec.v_star + (spec.v_tilde - spec.v_star) * j as f64 / n as f64;
            if !(spec.h.eval(v, spec.v_star) > 0.0) {
                return Err(Error::param("one_d.h", "must be positive on [v_star, v_tilde]"));
            }
            if j > 0 && j < n && !(f.profile(v) > 0.0) {
                return Err(Error::param("one_d", "F(x*, ·) must be positive between the roots"));
            }
        }
        let d = 1e-5 * (spec.v_tilde - spec.v_star);
        let slope_star = (f.profile(spec.v_star + d) - f.profile(spec.v_star - d)) / (2.0 * d);
        if slope_star.abs() > 1e-6 {
            return Err(Error::param("one_d", "F(x*, ·) must be flat at v_star"));
        }
        if f.profile(spec.v_tilde + d) > 0.0 {
            return Err(Error::param("one_d", "F(x*, ·) must not increase through v_tilde"));
        }
        Ok(f)
    }

    pub fn spec(&self) -> &OneDSpec {
        &self.spec
    }

    /// `F(x*, v)`.
    pub fn profile(&self, v: f64) -> f64 {
        let s = &self.spec;
        -s.h.eval(v, s.v_star) * (v - s.v_star).powi(2 * s.k as i32) * (v - s.v_tilde).powi(2 * s.l as i32 - 1)
    }

    pub fn eta(&self, x: f64) -> f64 {
        self.spec.mu * (x - self.spec.x_star)
    }
}

impl TryFrom<OneDSpec> for OneDField {
    type Error = Error;
    fn try_from(s: OneDSpec) -> Result<Self> {
        OneDField::new(s)
    }
}

impl From<OneDField> for OneDSpec {
    fn from(f: OneDField) -> Self {
        f.spec
    }
}

pub fn eval_f1d(field: &OneDField, x: f64, v: f64) -> f64 {
    field.profile(v) + field.eta(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneDState {
    pub t: f64,
    pub x: f64,
    pub v: f64,
}

/// One RK4 step of `x' = v`, `ε v' = F(x, v)`.
pub fn step_1d(field: &OneDField, s: OneDState, eps: f64, dt: f64) -> OneDState {
    let f = |x: f64, v: f64| (v, eval_f1d(field, x, v) / eps);
    let (a1, b1) = f(s.x, s.v);
    let (a2, b2) = f(s.x + 0.5 * dt * a1, s.v + 0.5 * dt * b1);
    let (a3, b3) = f(s.x + 0.5 * dt * a2, s.v + 0.5 * dt * b2);
    let (a4, b4) = f(s.x + dt * a3, s.v + dt * b3);
    OneDState {
        t: s.t + dt,
        x: s.x + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        v: s.v + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    }
}

/// `(time exponent, final-distance exponent ν)` for multiplicities `(k, ℓ)`.
pub fn predicted_exponents(k: u32, l: u32) -> (f64, f64) {
    let (k, l) = (k as f64, l as f64);
    let time = 2.0 * k / (4.0 * k - 1.0);
    let nu = if l == 1.0 { time } else { (2.0 * k - 1.0) / ((4.0 * k - 1.0) * (2.0 * l - 1.0)) };
    (time, nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneDConfig {
    /// `dt = ε / steps_per_eps`.
    pub steps_per_eps: f64,
    pub step_budget: u64,
}

impl Default for OneDConfig {
    fn default() -> Self {
        OneDConfig { steps_per_eps: 40.0, step_budget: 1_000_000_000 }
    }
}

/// Initial data within `(a₁ε, a₂ε)` of `(x*, v*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneDRun {
    pub epsilon: f64,
    pub perturb: [f64; 2],
    pub seed: u64,
    /// Stop once `|v - ṽ| ≤ ε^nu`.
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneDTransition {
    pub epsilon: f64,
    pub dt: f64,
    pub steps: u64,
    pub tau: f64,
    pub final_dist: f64,
    pub threshold: f64,
    /// `|dv/dt|` at the last step, bounding the interpolation error per `dt`.
    pub last_rate: f64,
}

pub fn initial_1d(field: &OneDField, run: &OneDRun) -> OneDState {
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed ^ run.epsilon.to_bits());
    let dx: f64 = rng.gen_range(-1.0..=1.0);
    let dv: f64 = rng.gen_range(-1.0..=1.0);
    let s = field.spec();
    OneDState {
        t: 0.0,
        x: s.x_star + run.perturb[0] * run.epsilon * dx,
        v: s.v_star + run.perturb[1] * run.epsilon * dv,
    }
}

/// Integrate until `|v - ṽ| ≤ ε^ν`, returning the interpolated crossing time.
pub fn transition_measure_1d(field: &OneDField, run: &OneDRun, cfg: &OneDConfig) -> Result<OneDTransition> {
    transition_measure_1d_with(field, run, cfg, |_| {})
}

/// [`transition_measure_1d`] calling `on_step` with every state.
pub fn transition_measure_1d_with(
    field: &OneDField,
    run: &OneDRun,
    cfg: &OneDConfig,
    mut on_step: impl FnMut(&OneDState),
) -> Result<OneDTransition> {
    let eps = run.epsilon;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    if !(run.nu > 0.0) {
        return Err(Error::param("nu", "must be positive"));
    }
    if !(cfg.steps_per_eps > 0.0) {
        return Err(Error::param("one_d_steps.steps_per_eps", "must be positive"));
    }
    let dt = eps / cfg.steps_per_eps;
    let threshold = eps.powf(run.nu);
    let v_tilde = field.spec().v_tilde;
    let gap = |v: f64| (v - v_tilde).abs() - threshold;
    let mut prev = initial_1d(field, run);
    on_step(&prev);
    if gap(prev.v) <= 0.0 {
        return Ok(OneDTransition { epsilon: eps, dt, steps: 0, tau: 0.0, final_dist: (prev.v - v_tilde).abs(), threshold, last_rate: 0.0 });
    }
    let mut steps = 0u64;
    loop {
        if steps >= cfg.step_budget {
            return Err(Error::StepBudget { budget: cfg.step_budget, t: prev.t });
        }
        let next = step_1d(field, prev, eps, dt);
        steps += 1;
        if !next.v.is_finite() {
            return Err(Error::Domain(format!("v is not finite at t = {}", next.t)));
        }
        on_step(&next);
        let (ga, gb) = (gap(prev.v), gap(next.v));
        if gb <= 0.0 {
            let w = ga / (ga - gb);
            let v = prev.v + w * (next.v - prev.v);
            return Ok(OneDTransition {
                epsilon: eps,
                dt,
                steps,
                tau: prev.t + w * dt,
                final_dist: (v - v_tilde).abs(),
                threshold,
                last_rate: ((next.v - prev.v) / dt).abs(),
            });
        }
        prev = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> OneDField {
        OneDField::new(OneDSpec::default()).unwrap()
    }

    fn still(spec: OneDSpec) -> OneDField {
        // μ = 0 decouples x, which `new` rejects on purpose.
        OneDField { spec: OneDSpec { mu: 0.0, ..spec } }
    }

    #[test]
    fn roots_of_the_profile() {
        let f = toy();
        assert_eq!(eval_f1d(&f, 0.0, 0.5), 0.0);
        assert_eq!(eval_f1d(&f, 0.0, 1.5), 0.0);
    }

    #[test]
    fn hand_evaluated_value() {
        let spec = OneDSpec { h: HFn::Constant { h0: 2.0 }, v_star: 0.0, v_tilde: 1.0, ..Default::default() };
        // v* = 0 fails μ v* > 0, so build directly.
        let f = OneDField { spec };
        assert!((eval_f1d(&f, 0.3, 0.5) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn exponents() {
        assert_eq!(predicted_exponents(1, 1), (2.0 / 3.0, 2.0 / 3.0));
        assert_eq!(predicted_exponents(2, 1), (4.0 / 7.0, 4.0 / 7.0));
        assert_eq!(predicted_exponents(1, 2), (2.0 / 3.0, 1.0 / 9.0));
    }

    #[test]
    fn validation() {
        assert!(OneDField::new(OneDSpec { k: 0, ..Default::default() }).is_err());
        assert!(OneDField::new(OneDSpec { mu: -1.0, ..Default::default() }).is_err());
        assert!(OneDField::new(OneDSpec { v_tilde: 0.4, ..Default::default() }).is_err());
        assert!(OneDField::new(OneDSpec { h: HFn::Affine { h0: 1.0, h1: -2.0 }, ..Default::default() }).is_err());
        assert!(OneDField::new(OneDSpec { k: 2, l: 3, h: HFn::Affine { h0: 1.0, h1: 0.5 }, ..Default::default() }).is_ok());
    }

    #[test]
    fn target_is_stationary_without_coupling() {
        let f = still(OneDSpec::default());
        let mut s = OneDState { t: 0.0, x: 0.0, v: 1.5 };
        for _ in 0..1000 {
            s = step_1d(&f, s, 1e-3, 1e-3 / 40.0);
        }
        assert_eq!(s.v, 1.5);
    }

    #[test]
    fn linear_decay_near_target() {
        let spec = OneDSpec::default();
        let f = still(spec);
        let eps = 1e-2;
        let dt = eps / 40.0;
        let d0 = 1e-4;
        let rate = 1.0 * (spec.v_tilde - spec.v_star).powi(2);
        let mut s = OneDState { t: 0.0, x: 0.0, v: spec.v_tilde - d0 };
        for _ in 0..40 {
            s = step_1d(&f, s, eps, dt);
        }
        let observed = ((spec.v_tilde - s.v) / d0).ln() / -s.t * eps;
        assert!(((observed - rate) / rate).abs() < 0.05, "{observed} vs {rate}");
    }

    #[test]
    fn rk4_self_convergence() {
        let f = toy();
        let eps = 1e-2;
        let s0 = OneDState { t: 0.0, x: 0.01, v: 0.5 };
        let go = |dt: f64| {
            let n = (0.2 / dt).round() as usize;
            (0..n).fold(s0, |s, _| step_1d(&f, s, eps, dt))
        };
        let dt = eps / 10.0;
        let r = go(dt / 64.0);
        let e = |s: OneDState| (s.v - r.v).abs().max((s.x - r.x).abs());
        let ratio = e(go(dt)) / e(go(dt / 2.0));
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn eta_tracks_velocity() {
        let f = toy();
        let eps = 1e-3;
        let dt = eps / 40.0;
        let mut s = OneDState { t: 0.0, x: 0.0, v: 0.5 };
        for _ in 0..200 {
            let n = step_1d(&f, s, eps, dt);
            let deta = (f.eta(n.x) - f.eta(s.x)) / dt;
            let mean_v = 0.5 * (s.v + n.v);
            assert!((deta - f.spec().mu * mean_v).abs() < 1e-3 * mean_v.abs().max(1.0));
            s = n;
        }
    }

    #[test]
    fn toy_velocity_is_monotone_and_stops_at_threshold() {
        let f = toy();
        let run = OneDRun { epsilon: 1e-3, perturb: [0.0, 0.0], seed: 0, nu: 2.0 / 3.0 };
        let mut vs = vec![];
        let tr = transition_measure_1d_with(&f, &run, &OneDConfig::default(), |s| vs.push(s.v)).unwrap();
        for w in vs.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!((tr.final_dist - tr.threshold).abs() <= tr.dt * tr.last_rate);
    }

    #[test]
    fn flat_target_reaches_its_threshold() {
        let f = OneDField::new(OneDSpec { l: 2, ..Default::default() }).unwrap();
        for eps in [1e-3, 1e-4] {
            let run = OneDRun { epsilon: eps, perturb: [1.0, 1.0], seed: 3, nu: predicted_exponents(1, 2).1 };
            let tr = transition_measure_1d(&f, &run, &OneDConfig::default()).unwrap();
            assert!(tr.final_dist <= tr.threshold + 1e-12);
        }
    }

    #[test]
    fn step_budget_is_reported() {
        let f = toy();
        let run = OneDRun { epsilon: 1e-3, perturb: [0.0, 0.0], seed: 0, nu: 2.0 / 3.0 };
        let cfg = OneDConfig { step_budget: 10, ..Default::default() };
        assert!(matches!(transition_measure_1d(&f, &run, &cfg), Err(Error::StepBudget { .. })));
    }
}
