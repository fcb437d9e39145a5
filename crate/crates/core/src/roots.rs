//! Roots of `θ ↦ H(x, θ)` on the circle.
//!
//! Sign changes on a uniform grid are bracketed and polished. Tangential
//! (double) roots produce no sign change, so grid minima of `|H|` are also
//! examined by solving `∂θH = 0` nearby.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::polar::Field;
use crate::{angle_diff, wrap_angle, Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RootConfig {
    /// Number of grid intervals on `[-π, π)`.
    pub grid_n: usize,
    /// `|H|` at an accepted root must be below this.
    pub tol_root: f64,
    /// A root is double when `|∂θH| < delta_dbl_rel · max|∂θH|`.
    pub delta_dbl_rel: f64,
    pub max_newton: usize,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig { grid_n: 2048, tol_root: 1e-12, delta_dbl_rel: 1e-5, max_newton: 50 }
    }
}

impl RootConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 64 {
            return Err(Error::param("roots.grid_n", "must be at least 64"));
        }
        if !(self.tol_root > 0.0 && self.tol_root < 1e-3) {
            return Err(Error::param("roots.tol_root", "must lie in (0, 1e-3)"));
        }
        if !(self.delta_dbl_rel > 0.0 && self.delta_dbl_rel < 1.0) {
            return Err(Error::param("roots.delta_dbl_rel", "must lie in (0, 1)"));
        }
        if self.max_newton == 0 {
            return Err(Error::param("roots.max_newton", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootKind {
    /// `∂θH < 0`.
    SimpleDescending,
    /// `∂θH > 0`.
    SimpleAscending,
    /// `|∂θH| < δ_dbl`.
    NearDegenerate,
}

impl RootKind {
    pub fn is_simple(self) -> bool {
        self != RootKind::NearDegenerate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    /// In `[-π, π)`.
    pub theta: f64,
    #[serde(rename = "dH")]
    pub dh: f64,
    pub kind: RootKind,
    /// `R(x, θ) ≥ 0`.
    pub admissible: bool,
    #[serde(rename = "R")]
    pub r: f64,
}

impl Root {
    fn at<F: Field + ?Sized>(field: &F, x: Vec2, theta: f64, delta_dbl: f64) -> Root {
        let theta = wrap_angle(theta);
        let dh = field.dh_dtheta(x, theta);
        let r = field.r(x, theta);
        let kind = if dh.abs() < delta_dbl {
            RootKind::NearDegenerate
        } else if dh < 0.0 {
            RootKind::SimpleDescending
        } else {
            RootKind::SimpleAscending
        };
        Root { theta, dh, kind, admissible: r >= 0.0, r }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    /// Sorted by angle.
    pub roots: Vec<Root>,
    /// `H(x, ·)` vanishes to tolerance on the whole circle; `roots` is empty.
    pub whole_line_zero: bool,
    /// Absolute threshold on `|∂θH|` used for the double-root label.
    pub delta_dbl: f64,
}

impl RootSet {
    pub fn simple(&self) -> impl Iterator<Item = &Root> {
        self.roots.iter().filter(|r| r.kind.is_simple())
    }

    /// Root closest to `theta` on the circle.
    pub fn nearest(&self, theta: f64) -> Option<&Root> {
        self.roots.iter().min_by(|a, b| {
            angle_diff(a.theta, theta)
                .abs()
                .total_cmp(&angle_diff(b.theta, theta).abs())
        })
    }
}

/// All roots of `H(x, ·)` on `[-π, π)`.
pub fn scan_roots<F: Field + ?Sized>(field: &F, x: Vec2, cfg: &RootConfig) -> Result<RootSet> {
    cfg.validate()?;
    field.check_point(x)?;
    let n = cfg.grid_n;
    let grid: Vec<f64> = (0..=n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect();
    let hv: Vec<f64> = grid.iter().map(|&t| field.h(x, t)).collect();
    let dv: Vec<f64> = grid.iter().map(|&t| field.dh_dtheta(x, t)).collect();
    if hv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("H is not finite on the search grid".into()));
    }
    let h_max = hv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let delta_dbl = cfg.delta_dbl_rel * dv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if h_max < cfg.tol_root {
        return Ok(RootSet { roots: Vec::new(), whole_line_zero: true, delta_dbl });
    }

    // (angle, tangency) pairs
    let mut found: Vec<(f64, bool)> = Vec::new();
    for k in 0..n {
        let (a, b) = (hv[k], hv[k + 1]);
        if a == 0.0 {
            found.push((grid[k], false));
        } else if a * b < 0.0 {
            if let Some(t) = bracketed(field, x, grid[k], grid[k + 1], a, cfg) {
                found.push((t, false));
            }
        }
    }

    // Tangencies: interior minima of |H| without a sign change on either side.
    let accept = cfg.tol_root.sqrt();
    for k in 0..n {
        let prev = if k == 0 { n - 1 } else { k - 1 };
        let next = k + 1;
        let (hp, hk, hn) = (hv[prev], hv[k], hv[next]);
        if hk == 0.0 || hp * hk <= 0.0 || hk * hn <= 0.0 {
            continue;
        }
        if hk.abs() > hp.abs() || hk.abs() > hn.abs() {
            continue;
        }
        if let Some(t) = critical_point(field, x, grid[k], 2.0 * PI / n as f64, cfg) {
            if field.h(x, t).abs() < accept {
                found.push((t, true));
            }
        }
    }

    let mut roots: Vec<Root> = found
        .into_iter()
        .map(|(t, tangent)| {
            let mut root = Root::at(field, x, t, delta_dbl);
            if tangent {
                root.kind = RootKind::NearDegenerate;
            }
            root
        })
        .collect();
    roots.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    let mut merged: Vec<Root> = Vec::with_capacity(roots.len());
    for r in roots {
        match merged.last_mut() {
            Some(last) if angle_diff(r.theta, last.theta).abs() < 1e-9 => {
                if r.kind == RootKind::NearDegenerate {
                    last.kind = RootKind::NearDegenerate;
                }
            }
            _ => merged.push(r),
        }
    }
    if merged.len() > 1 {
        let (first, last) = (merged[0], merged[merged.len() - 1]);
        if angle_diff(first.theta, last.theta).abs() < 1e-9 {
            merged.pop();
        }
    }
    Ok(RootSet { roots: merged, whole_line_zero: false, delta_dbl })
}

/// Safeguarded Newton inside a sign-change bracket. Returns `None` when the
/// limit point does not satisfy `|H| < tol_root`, which happens at jumps.
fn bracketed<F: Field + ?Sized>(field: &F, x: Vec2, a: f64, b: f64, ha: f64, cfg: &RootConfig) -> Option<f64> {
    let (mut lo, mut hi) = (a, b);
    let lo_sign = ha.signum();
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let h = field.h(x, t);
        if h == 0.0 {
            break;
        }
        if h.signum() == lo_sign {
            lo = t;
        } else {
            hi = t;
        }
        let d = field.dh_dtheta(x, t);
        let newton = t - h / d;
        t = if d != 0.0 && newton > lo.min(hi) && newton < lo.max(hi) {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() < 4.0 * f64::EPSILON * t.abs().max(1.0) {
            break;
        }
        if field.h(x, t).abs() < 1e-3 * cfg.tol_root {
            break;
        }
    }
    (field.h(x, t).abs() < cfg.tol_root).then_some(t)
}

/// Zero of `∂θH` near `guess`, by Newton with a finite-difference second
/// derivative, kept within one grid cell.
pub(crate) fn critical_point<F: Field + ?Sized>(field: &F, x: Vec2, guess: f64, cell: f64, cfg: &RootConfig) -> Option<f64> {
    let mut t = guess;
    let step = 1e-6;
    for _ in 0..cfg.max_newton {
        let d = field.dh_dtheta(x, t);
        let dd = (field.dh_dtheta(x, t + step) - field.dh_dtheta(x, t - step)) / (2.0 * step);
        if dd == 0.0 || !dd.is_finite() {
            return None;
        }
        let delta = d / dd;
        t -= delta;
        if (t - guess).abs() > 1.5 * cell {
            return None;
        }
        if delta.abs() < 1e-14 {
            break;
        }
    }
    Some(t)
}

/// Newton polish of a single root starting from `guess`, classified with
/// the absolute threshold `delta_dbl`.
pub fn refine_root<F: Field + ?Sized>(
    field: &F,
    x: Vec2,
    guess: f64,
    cfg: &RootConfig,
    delta_dbl: f64,
) -> Result<Root> {
    refine_theta(field, x, guess, cfg).map(|t| Root::at(field, x, t, delta_dbl))
}

/// Newton iterates further than this from the guess are abandoned.
pub const MAX_NEWTON_DRIFT: f64 = 0.5;

/// Newton polish of a root angle starting from `guess`.
///
/// Falls back to bisection when a sign change exists within 0.05 rad of the
/// guess, and reports [`Error::RootLost`] otherwise.
pub fn refine_theta<F: Field + ?Sized>(field: &F, x: Vec2, guess: f64, cfg: &RootConfig) -> Result<f64> {
    field.check_point(x)?;
    let mut t = guess;
    for _ in 0..cfg.max_newton {
        let h = field.h(x, t);
        if h.abs() < 1e-3 * cfg.tol_root {
            break;
        }
        let d = field.dh_dtheta(x, t);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let step = (h / d).clamp(-0.1, 0.1);
        t -= step;
        if (t - guess).abs() > MAX_NEWTON_DRIFT {
            break;
        }
        if step.abs() < 1e-15 * t.abs().max(1.0) {
            break;
        }
    }
    if field.h(x, t).abs() < cfg.tol_root && (t - guess).abs() <= MAX_NEWTON_DRIFT {
        return Ok(wrap_angle(t));
    }
    bisection_fallback(field, x, guess, cfg).ok_or(Error::RootLost { theta: guess })
}

fn bisection_fallback<F: Field + ?Sized>(field: &F, x: Vec2, guess: f64, cfg: &RootConfig) -> Option<f64> {
    let width = 0.05;
    let m = 64;
    // Scan outward so the bracket closest to the guess wins.
    for k in 0..m {
        for side in [1.0, -1.0] {
            let a = guess + side * width * k as f64 / m as f64;
            let b = guess + side * width * (k + 1) as f64 / m as f64;
            let (ha, hb) = (field.h(x, a), field.h(x, b));
            if ha == 0.0 {
                return Some(wrap_angle(a));
            }
            if ha * hb < 0.0 {
                return bracketed(field, x, a, b, ha, cfg).map(wrap_angle);
            }
        }
    }
    None
}

/// Number of interior points at which the escape sign of `H` is checked.
pub const ESCAPE_SAMPLES: usize = 256;

/// Roots closer than this to `θ*` are treated as the vanished root itself.
pub const CLUSTER_TOL: f64 = 1e-3;

/// The first simple root reached from `θ*` when `θ` moves in `direction`
/// (`+1` or `-1`), with `H` keeping the escape sign on the way and
/// `R(x*, θ̃) > 0`.
pub fn select_jump_target<F: Field + ?Sized>(
    field: &F,
    x_star: Vec2,
    roots: &RootSet,
    theta_star: f64,
    direction: f64,
) -> Result<Root> {
    let no_target = |reason: String| Error::NoTarget { theta_star, reason };
    if direction != 1.0 && direction != -1.0 {
        return Err(Error::Precondition("direction must be +1 or -1".into()));
    }
    if roots.whole_line_zero {
        return Err(no_target("H vanishes identically".into()));
    }
    let arc_of = |t: f64| (direction * (t - theta_star)).rem_euclid(2.0 * PI);
    let candidate = roots
        .roots
        .iter()
        .filter(|r| {
            let a = arc_of(r.theta);
            a > CLUSTER_TOL && a < 2.0 * PI - CLUSTER_TOL
        })
        .min_by(|a, b| arc_of(a.theta).total_cmp(&arc_of(b.theta)))
        .copied()
        .ok_or_else(|| no_target("no other root on the circle".into()))?;
    if !candidate.kind.is_simple() {
        return Err(no_target(format!("next root at {} is degenerate", candidate.theta)));
    }
    let arc = arc_of(candidate.theta);
    for k in 1..=ESCAPE_SAMPLES {
        let s = CLUSTER_TOL + (arc - 2.0 * CLUSTER_TOL) * k as f64 / (ESCAPE_SAMPLES + 1) as f64;
        let h = field.h(x_star, theta_star + direction * s);
        if direction * h <= 0.0 {
            return Err(no_target(format!(
                "H loses the escape sign at {}",
                wrap_angle(theta_star + direction * s)
            )));
        }
    }
    if !(candidate.r > 0.0) {
        return Err(no_target(format!("R(x*, {}) = {} is not positive", candidate.theta, candidate.r)));
    }
    Ok(candidate)
}
