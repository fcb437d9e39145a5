//! Heading/speed decomposition of the implicit velocity equation.
//!
//! Writing `v_i = r (cos θ, sin θ)` and projecting the fixed-point equation
//! on `n(θ) = (-sin θ, cos θ)` and `u(θ) = (cos θ, sin θ)` gives the scalar
//! heading equation `H(x, θ) = 0` and the explicit speed `r = R(x, θ)`.
//!
//! Two kinds of field are provided:
//! - [`ParticleField`]: `H`, `R` derived from the Morse/vision sum over the
//!   other particles of a frozen snapshot.
//! - [`SyntheticField`]: a closed-form field with a prescribed double root
//!   `θ*`, simple root `θ̃` and linear coupling in `x`, used where exact
//!   geometry matters more than physical realism.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::kernels::{MorseParams, VisionParams};
use crate::{wrap_angle, Error, Result, Vec2};

/// Positions must be further apart than this.
pub const MIN_SEPARATION: f64 = 1e-12;

/// Positions of `N ≥ 1` particles in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct SpatialConfig {
    positions: Vec<Vec2>,
}

impl SpatialConfig {
    pub fn new(positions: Vec<Vec2>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Precondition("a configuration needs at least one particle".into()));
        }
        if let Some(p) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::Domain(format!("position of particle {p} is not finite")));
        }
        if let Some((i, j)) = closest_pair_below(&positions, MIN_SEPARATION) {
            return Err(Error::DegenerateConfig(i, j));
        }
        Ok(SpatialConfig { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<Vec2> {
        self.positions
    }

    /// Rigid rotation about the origin.
    pub fn rotated(&self, rho: f64) -> Self {
        SpatialConfig {
            positions: self.positions.iter().map(|p| p.rotate(rho)).collect(),
        }
    }
}

impl TryFrom<Vec<Vec2>> for SpatialConfig {
    type Error = Error;
    fn try_from(v: Vec<Vec2>) -> Result<Self> {
        SpatialConfig::new(v)
    }
}

impl From<SpatialConfig> for Vec<Vec2> {
    fn from(c: SpatialConfig) -> Self {
        c.positions
    }
}

fn closest_pair_below(positions: &[Vec2], tol: f64) -> Option<(usize, usize)> {
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            if (positions[i] - positions[j]).norm() <= tol {
                return Some((i, j));
            }
        }
    }
    None
}

/// Velocity in polar form, `v = r (cos θ, sin θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarVelocity {
    pub r: f64,
    pub theta: f64,
}

impl PolarVelocity {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("speed must be non-negative, got {r}")));
        }
        Ok(PolarVelocity { r, theta: wrap_angle(theta) })
    }

    pub fn to_vec(self) -> Vec2 {
        Vec2::from_angle(self.theta) * self.r
    }
}

/// A heading/speed field seen by one moving particle at position `x`.
pub trait Field {
    fn h(&self, x: Vec2, theta: f64) -> f64;

    fn r(&self, x: Vec2, theta: f64) -> f64;

    fn dh_dtheta(&self, x: Vec2, theta: f64) -> f64;

    /// Step used for finite differences in `x`.
    fn fd_step(&self) -> f64 {
        1e-6
    }

    /// `∇ₓH` by central differences.
    fn grad_x_h(&self, x: Vec2, theta: f64) -> Vec2 {
        let d = self.fd_step();
        let ex = Vec2::new(d, 0.0);
        let ey = Vec2::new(0.0, d);
        Vec2::new(
            (self.h(x + ex, theta) - self.h(x - ex, theta)) / (2.0 * d),
            (self.h(x + ey, theta) - self.h(x - ey, theta)) / (2.0 * d),
        )
    }

    /// Reject points at which the field is undefined.
    fn check_point(&self, _x: Vec2) -> Result<()> {
        Ok(())
    }
}

impl<F: Field + ?Sized> Field for &F {
    fn h(&self, x: Vec2, theta: f64) -> f64 {
        (**self).h(x, theta)
    }
    fn r(&self, x: Vec2, theta: f64) -> f64 {
        (**self).r(x, theta)
    }
    fn dh_dtheta(&self, x: Vec2, theta: f64) -> f64 {
        (**self).dh_dtheta(x, theta)
    }
    fn fd_step(&self) -> f64 {
        (**self).fd_step()
    }
    fn grad_x_h(&self, x: Vec2, theta: f64) -> Vec2 {
        (**self).grad_x_h(x, theta)
    }
    fn check_point(&self, x: Vec2) -> Result<()> {
        (**self).check_point(x)
    }
}

/// Field of particle `index` in a frozen snapshot. The particle's own
/// position is replaced by the evaluation point `x`.
#[derive(Debug, Clone)]
pub struct ParticleField {
    positions: Vec<Vec2>,
    index: usize,
    morse: MorseParams,
    vision: VisionParams,
    fd_step: f64,
}

impl ParticleField {
    pub fn new(config: &SpatialConfig, index: usize, morse: MorseParams, vision: VisionParams) -> Result<Self> {
        Self::from_positions(config.positions(), index, morse, vision)
    }

    pub(crate) fn from_positions(
        positions: &[Vec2],
        index: usize,
        morse: MorseParams,
        vision: VisionParams,
    ) -> Result<Self> {
        if index >= positions.len() {
            return Err(Error::Precondition(format!(
                "particle index {index} out of range for {} particles",
                positions.len()
            )));
        }
        let mut extent: f64 = 0.0;
        for a in positions {
            for b in positions {
                extent = extent.max((*a - *b).norm());
            }
        }
        Ok(ParticleField {
            positions: positions.to_vec(),
            index,
            morse,
            vision,
            fd_step: 1e-6 * extent.max(1.0),
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn own_position(&self) -> Vec2 {
        self.positions[self.index]
    }

    fn others(&self) -> impl Iterator<Item = (usize, Vec2)> + '_ {
        self.positions
            .iter()
            .copied()
            .enumerate()
            .filter(move |(j, _)| *j != self.index)
    }

    /// `(H, R)` from a single pass over the neighbours.
    pub fn h_and_r(&self, x: Vec2, theta: f64) -> (f64, f64) {
        let f = self.force(x, theta);
        let u = Vec2::from_angle(theta);
        let n = Vec2::new(-u.y, u.x);
        (f.dot(n), f.dot(u))
    }

    /// The weighted interaction `-(1/N) Σ_j ∇K(|x - x_j|) g(e_j · u(θ))`.
    pub fn force(&self, x: Vec2, theta: f64) -> Vec2 {
        let inv_n = 1.0 / self.positions.len() as f64;
        let u = Vec2::from_angle(theta);
        let mut f = Vec2::ZERO;
        for (_, xj) in self.others() {
            let d = x - xj;
            let dist = d.norm();
            let e = d * (1.0 / dist);
            let kp = self.morse.grad_mag_unchecked(dist);
            f += e * (-inv_n * kp * self.vision.g(e.dot(u)));
        }
        f
    }
}

impl Field for ParticleField {
    fn h(&self, x: Vec2, theta: f64) -> f64 {
        self.h_and_r(x, theta).0
    }

    fn r(&self, x: Vec2, theta: f64) -> f64 {
        self.h_and_r(x, theta).1
    }

    fn dh_dtheta(&self, x: Vec2, theta: f64) -> f64 {
        let inv_n = 1.0 / self.positions.len() as f64;
        let u = Vec2::from_angle(theta);
        let n = Vec2::new(-u.y, u.x);
        let mut acc = 0.0;
        for (_, xj) in self.others() {
            let d = x - xj;
            let dist = d.norm();
            let e = d * (1.0 / dist);
            let kp = self.morse.grad_mag_unchecked(dist);
            let (eu, en) = (e.dot(u), e.dot(n));
            // d/dθ [ (e·n) g(e·u) ] = -(e·u) g + (e·n)^2 g'
            acc += -inv_n * kp * (-eu * self.vision.g(eu) + en * en * self.vision.g_prime(eu));
        }
        acc
    }

    fn fd_step(&self) -> f64 {
        self.fd_step
    }

    fn check_point(&self, x: Vec2) -> Result<()> {
        for (j, xj) in self.others() {
            if (x - xj).norm() <= MIN_SEPARATION {
                return Err(Error::DegenerateConfig(self.index, j));
            }
        }
        Ok(())
    }
}

/// `s - sin(2πs)/(2π)` on `[0, 1]`: a C² ramp from 0 to 1.
fn ramp(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s - (2.0 * PI * s).sin() / (2.0 * PI)
}

fn ramp_prime(s: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    1.0 - (2.0 * PI * s).cos()
}

/// Solve `ramp(s) = q` for `q ∈ (0, 1)`.
fn ramp_inverse(q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ramp(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// C² bump `((1 + cos πs)/2)^2` supported on `|s| < 1`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let c = 0.5 * (1.0 + (PI * s).cos());
    c * c
}

/// Speed profile `R(x*, ·)` of a synthetic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum RProfile {
    Constant {
        r_c: f64,
    },
    /// `base + amplitude · bump((θ - center)/width)`.
    PositiveBump {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    RnDip(RnDip),
}

/// Smooth profile equal to `base` away from `[φ*, φ̃]`, `-depth` on its
/// core, with C² ramps placed so that the zeros sit exactly at `φ*` and `φ̃`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RnDipSpec", into = "RnDipSpec")]
pub struct RnDip {
    spec: RnDipSpec,
    rise_start: f64,
    fall_start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnDipSpec {
    pub base: f64,
    pub depth: f64,
    pub phi_star: f64,
    pub phi_tilde: f64,
    pub ramp: f64,
}

impl RnDip {
    pub fn new(spec: RnDipSpec) -> Result<Self> {
        let RnDipSpec { base, depth, phi_star, phi_tilde, ramp: w } = spec;
        if !(base > 0.0) {
            return Err(Error::param("r_profile.params.base", "must be positive"));
        }
        if !(depth > 0.0) {
            return Err(Error::param("r_profile.params.depth", "must be positive"));
        }
        if !(w > 0.0) {
            return Err(Error::param("r_profile.params.ramp", "must be positive"));
        }
        if !(phi_tilde > phi_star) {
            return Err(Error::param("r_profile.params.phi_tilde", "must exceed phi_star"));
        }
        let s0 = ramp_inverse(base / (base + depth));
        let rise_start = phi_star - s0 * w;
        let fall_start = phi_tilde - (1.0 - s0) * w;
        if rise_start + w > fall_start {
            return Err(Error::param(
                "r_profile.params.ramp",
                "ramps overlap; widen [phi_star, phi_tilde] or shorten the ramp",
            ));
        }
        Ok(RnDip { spec, rise_start, fall_start })
    }

    pub fn spec(&self) -> &RnDipSpec {
        &self.spec
    }

    fn blend(&self, phi: f64) -> (f64, f64) {
        let w = self.spec.ramp;
        let a = (phi - self.rise_start) / w;
        let b = (phi - self.fall_start) / w;
        let up = ramp(a);
        let down = 1.0 - ramp(b);
        let d = (ramp_prime(a) * down - up * ramp_prime(b)) / w;
        (up * down, d)
    }

    fn eval(&self, phi: f64) -> f64 {
        let RnDipSpec { base, depth, .. } = self.spec;
        base - (base + depth) * self.blend(phi).0
    }
}

impl TryFrom<RnDipSpec> for RnDip {
    type Error = Error;
    fn try_from(s: RnDipSpec) -> Result<Self> {
        RnDip::new(s)
    }
}

impl From<RnDip> for RnDipSpec {
    fn from(d: RnDip) -> Self {
        d.spec
    }
}

impl RProfile {
    pub fn eval(&self, phi: f64) -> f64 {
        match self {
            RProfile::Constant { r_c } => *r_c,
            RProfile::PositiveBump { base, amplitude, center, width } => {
                base + amplitude * bump((phi - center) / width)
            }
            RProfile::RnDip(d) => d.eval(phi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RProfile::Constant { r_c } => {
                if !r_c.is_finite() {
                    return Err(Error::param("r_profile.params.r_c", "must be finite"));
                }
            }
            RProfile::PositiveBump { base, amplitude, width, .. } => {
                if !(*base > 0.0) {
                    return Err(Error::param("r_profile.params.base", "must be positive"));
                }
                if !(base + amplitude > 0.0) {
                    return Err(Error::param("r_profile.params.amplitude", "base + amplitude must be positive"));
                }
                if !(*width > 0.0) {
                    return Err(Error::param("r_profile.params.width", "must be positive"));
                }
            }
            RProfile::RnDip(_) => {}
        }
        Ok(())
    }
}

/// Closed-form field with
/// `H(x, θ) = -h (θ - θ*)² (θ - θ̃) + μ·(x - x*)` and `R(x, θ) = profile(θ)`.
///
/// Angles are reduced to the window of width 2π centred on `(θ* + θ̃)/2`
/// before the cubic is evaluated, so the field is 2π-periodic with a jump
/// diametrically opposite the interval of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SyntheticSpec", into = "SyntheticSpec")]
pub struct SyntheticField {
    spec: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub theta_star: f64,
    pub theta_tilde: f64,
    pub h_coeff: f64,
    pub coupling: Vec2,
    #[serde(default)]
    pub x_star: Vec2,
    pub r_profile: RProfile,
}

impl SyntheticField {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        if !(spec.theta_star.is_finite() && spec.theta_tilde.is_finite()) {
            return Err(Error::param("synthetic.theta_star", "angles must be finite"));
        }
        if !(spec.theta_tilde > spec.theta_star && spec.theta_tilde - spec.theta_star < 2.0 * PI) {
            return Err(Error::param(
                "synthetic.theta_tilde",
                "must satisfy theta_star < theta_tilde < theta_star + 2π",
            ));
        }
        if !(spec.h_coeff > 0.0 && spec.h_coeff.is_finite()) {
            return Err(Error::param("synthetic.h_coeff", "must be positive"));
        }
        if !spec.coupling.is_finite() {
            return Err(Error::param("synthetic.coupling", "must be finite"));
        }
        spec.r_profile.validate()?;
        let f = SyntheticField { spec };
        if !(f.spec.r_profile.eval(f.spec.theta_star) > 0.0) {
            return Err(Error::param("synthetic.r_profile", "R(x*, theta_star) must be positive"));
        }
        if !(f.spec.r_profile.eval(f.spec.theta_tilde) > 0.0) {
            return Err(Error::param("synthetic.r_profile", "R(x*, theta_tilde) must be positive"));
        }
        if let RProfile::RnDip(d) = &f.spec.r_profile {
            let s = d.spec();
            if !(s.phi_star > f.spec.theta_star && s.phi_tilde < f.spec.theta_tilde) {
                return Err(Error::param(
                    "synthetic.r_profile.params",
                    "zeros must lie strictly inside (theta_star, theta_tilde)",
                ));
            }
        }
        Ok(f)
    }

    /// `θ* = -0.57`, `θ̃ = 0.22`, `h = 1`, `μ = u(θ*)`, constant `R = 1`.
    pub fn rp_default() -> Self {
        let theta_star = -0.57;
        SyntheticField::new(SyntheticSpec {
            theta_star,
            theta_tilde: 0.22,
            h_coeff: 1.0,
            coupling: Vec2::from_angle(theta_star),
            x_star: Vec2::ZERO,
            r_profile: RProfile::Constant { r_c: 1.0 },
        })
        .expect("valid preset")
    }

    /// Same `H` as [`rp_default`](Self::rp_default) with a speed profile that
    /// rises from 1 at `θ*` to 1.5 at `θ̃`.
    pub fn bump_default() -> Self {
        let theta_star = -0.57;
        let theta_tilde = 0.22;
        SyntheticField::new(SyntheticSpec {
            theta_star,
            theta_tilde,
            h_coeff: 1.0,
            coupling: Vec2::from_angle(theta_star),
            x_star: Vec2::ZERO,
            r_profile: RProfile::PositiveBump {
                base: 1.0,
                amplitude: 0.5,
                center: theta_tilde,
                width: 0.5,
            },
        })
        .expect("valid preset")
    }

    /// `θ* = 1.30`, `θ̃ = 3.71` with `R(x*, ·) < 0` on `(2.0, 3.0)`.
    pub fn rn_default() -> Self {
        let theta_star = 1.30;
        SyntheticField::new(SyntheticSpec {
            theta_star,
            theta_tilde: 3.71,
            h_coeff: 1.0,
            coupling: Vec2::from_angle(theta_star),
            x_star: Vec2::ZERO,
            r_profile: RProfile::RnDip(
                RnDip::new(RnDipSpec {
                    base: 1.0,
                    depth: 0.5,
                    phi_star: 2.0,
                    phi_tilde: 3.0,
                    ramp: 0.2,
                })
                .expect("valid preset"),
            ),
        })
        .expect("valid preset")
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn theta_star(&self) -> f64 {
        self.spec.theta_star
    }

    pub fn theta_tilde(&self) -> f64 {
        self.spec.theta_tilde
    }

    pub fn x_star(&self) -> Vec2 {
        self.spec.x_star
    }

    pub fn coupling(&self) -> Vec2 {
        self.spec.coupling
    }

    pub fn r_star(&self) -> f64 {
        self.spec.r_profile.eval(self.spec.theta_star)
    }

    /// `A* = ∇ₓ(H/r)·v* = μ·v*/r*`.
    pub fn a_star(&self) -> f64 {
        let r_star = self.r_star();
        self.spec.coupling.dot(Vec2::from_angle(self.spec.theta_star) * r_star) / r_star
    }

    /// Reduce `θ` to the evaluation window around the interval of interest.
    pub fn local_angle(&self, theta: f64) -> f64 {
        let c = 0.5 * (self.spec.theta_star + self.spec.theta_tilde);
        c + wrap_angle(theta - c)
    }

    /// `H(x*, φ)` on the unreduced polynomial.
    pub fn h_star_poly(&self, phi: f64) -> f64 {
        let s = &self.spec;
        -s.h_coeff * (phi - s.theta_star).powi(2) * (phi - s.theta_tilde)
    }
}

impl TryFrom<SyntheticSpec> for SyntheticField {
    type Error = Error;
    fn try_from(s: SyntheticSpec) -> Result<Self> {
        SyntheticField::new(s)
    }
}

impl From<SyntheticField> for SyntheticSpec {
    fn from(f: SyntheticField) -> Self {
        f.spec
    }
}

impl Field for SyntheticField {
    fn h(&self, x: Vec2, theta: f64) -> f64 {
        let phi = self.local_angle(theta);
        self.h_star_poly(phi) + self.spec.coupling.dot(x - self.spec.x_star)
    }

    fn r(&self, _x: Vec2, theta: f64) -> f64 {
        self.spec.r_profile.eval(self.local_angle(theta))
    }

    fn dh_dtheta(&self, _x: Vec2, theta: f64) -> f64 {
        let s = &self.spec;
        let phi = self.local_angle(theta);
        let a = phi - s.theta_star;
        -s.h_coeff * (2.0 * a * (phi - s.theta_tilde) + a * a)
    }

    fn grad_x_h(&self, _x: Vec2, _theta: f64) -> Vec2 {
        self.spec.coupling
    }
}

/// Either kind of field, for code paths that pick one at run time.
#[derive(Debug, Clone)]
pub enum FieldEval {
    Particle(ParticleField),
    Synthetic(SyntheticField),
}

impl Field for FieldEval {
    fn h(&self, x: Vec2, theta: f64) -> f64 {
        match self {
            FieldEval::Particle(f) => f.h(x, theta),
            FieldEval::Synthetic(f) => f.h(x, theta),
        }
    }
    fn r(&self, x: Vec2, theta: f64) -> f64 {
        match self {
            FieldEval::Particle(f) => f.r(x, theta),
            FieldEval::Synthetic(f) => f.r(x, theta),
        }
    }
    fn dh_dtheta(&self, x: Vec2, theta: f64) -> f64 {
        match self {
            FieldEval::Particle(f) => f.dh_dtheta(x, theta),
            FieldEval::Synthetic(f) => f.dh_dtheta(x, theta),
        }
    }
    fn fd_step(&self) -> f64 {
        match self {
            FieldEval::Particle(f) => f.fd_step(),
            FieldEval::Synthetic(f) => f.fd_step(),
        }
    }
    fn grad_x_h(&self, x: Vec2, theta: f64) -> Vec2 {
        match self {
            FieldEval::Particle(f) => f.grad_x_h(x, theta),
            FieldEval::Synthetic(f) => f.grad_x_h(x, theta),
        }
    }
    fn check_point(&self, x: Vec2) -> Result<()> {
        match self {
            FieldEval::Particle(f) => f.check_point(x),
            FieldEval::Synthetic(f) => f.check_point(x),
        }
    }
}

/// Source of per-particle fields for the dynamics: the field of particle
/// `i` is rebuilt from whatever position snapshot the integrator holds.
#[derive(Debug, Clone)]
pub enum Model {
    Particles { morse: MorseParams, vision: VisionParams },
    /// A single moving particle in a prescribed field.
    Synthetic(SyntheticField),
}

impl Model {
    pub fn field(&self, positions: &[Vec2], i: usize) -> Result<FieldEval> {
        match self {
            Model::Particles { morse, vision } => Ok(FieldEval::Particle(ParticleField::from_positions(
                positions, i, *morse, *vision,
            )?)),
            Model::Synthetic(f) => {
                if positions.len() != 1 || i != 0 {
                    return Err(Error::Precondition("a synthetic model has exactly one particle".into()));
                }
                Ok(FieldEval::Synthetic(f.clone()))
            }
        }
    }
}

pub fn eval_h<F: Field + ?Sized>(field: &F, x: Vec2, theta: f64) -> Result<f64> {
    field.check_point(x)?;
    Ok(field.h(x, theta))
}

pub fn eval_r<F: Field + ?Sized>(field: &F, x: Vec2, theta: f64) -> Result<f64> {
    field.check_point(x)?;
    Ok(field.r(x, theta))
}

pub fn eval_dh_dtheta<F: Field + ?Sized>(field: &F, x: Vec2, theta: f64) -> Result<f64> {
    field.check_point(x)?;
    Ok(field.dh_dtheta(x, theta))
}

/// `v + (1/N) Σ_{j≠i} ∇K g(·)`: zero exactly when `v` solves the implicit
/// velocity equation for particle `i`.
pub fn fixed_point_residual(
    config: &SpatialConfig,
    i: usize,
    morse: &MorseParams,
    vision: &VisionParams,
    v: PolarVelocity,
) -> Result<Vec2> {
    if !(v.r > 0.0) {
        return Err(Error::UndefinedDirection);
    }
    let field = ParticleField::new(config, i, *morse, *vision)?;
    let x = field.own_position();
    Ok(v.to_vec() - field.force(x, v.theta))
}

/// Bottleneck increment `η = (H(x, θ) - H(x*, θ))/r`.
pub fn eval_eta<F: Field + ?Sized>(field: &F, x: Vec2, x_star: Vec2, theta: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::UndefinedDirection);
    }
    field.check_point(x)?;
    field.check_point(x_star)?;
    Ok((field.h(x, theta) - field.h(x_star, theta)) / r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RCase {
    /// `R(x*, ·) > 0` on `[θ*, θ̃]`.
    #[serde(rename = "RP")]
    Positive,
    /// `R(x*, ·)` vanishes somewhere in `[θ*, θ̃]`.
    #[serde(rename = "RN")]
    Negative,
}

/// First/last zero of `R(x*, ·)` on `[θ*, θ̃]` and the midpoints used to
/// bound `r` away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroCrossings {
    pub phi_star: f64,
    pub phi_tilde: f64,
    pub omega_star: f64,
    pub omega_tilde: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RCaseAnalysis {
    pub case: RCase,
    pub r0: f64,
    pub crossings: Option<ZeroCrossings>,
}

/// Relative threshold below which `min R` counts as touching zero.
pub const R_ZERO_TOL: f64 = 1e-9;

/// Decide between the positive and sign-changing speed cases on `[θ*, θ̃]`.
pub fn classify_r_case<F: Field + ?Sized>(
    field: &F,
    x_star: Vec2,
    theta_star: f64,
    theta_tilde: f64,
    grid_n: usize,
) -> Result<RCaseAnalysis> {
    if !(theta_tilde > theta_star) {
        return Err(Error::Precondition("theta_tilde must exceed theta_star".into()));
    }
    if grid_n < 2 {
        return Err(Error::Precondition("grid_n must be at least 2".into()));
    }
    let r = |phi: f64| field.r(x_star, phi);
    if !(r(theta_star) > 0.0) || !(r(theta_tilde) > 0.0) {
        return Err(Error::Precondition(
            "R(x*, theta_star) and R(x*, theta_tilde) must both be positive".into(),
        ));
    }
    let grid: Vec<f64> = (0..=grid_n)
        .map(|k| theta_star + (theta_tilde - theta_star) * k as f64 / grid_n as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&p| r(p)).collect();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = R_ZERO_TOL * scale.max(f64::MIN_POSITIVE);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);

    if min > tol {
        return Ok(RCaseAnalysis { case: RCase::Positive, r0: 0.5 * min, crossings: None });
    }

    let first = vals.iter().position(|&v| v <= tol).expect("min is below tol");
    let last = vals.iter().rposition(|&v| v <= tol).expect("min is below tol");
    let phi_star = locate_zero(&r, grid[first - 1], grid[first]);
    let phi_tilde = locate_zero(&r, grid[last + 1], grid[last]);
    let omega_star = 0.5 * (theta_star + phi_star);
    let omega_tilde = 0.5 * (phi_tilde + theta_tilde);

    let sub = grid_n.max(64);
    let min_on = |a: f64, b: f64| {
        (0..=sub)
            .map(|k| r(a + (b - a) * k as f64 / sub as f64))
            .fold(f64::INFINITY, f64::min)
    };
    let r0 = 0.5 * min_on(theta_star, omega_star).min(min_on(omega_tilde, theta_tilde));
    Ok(RCaseAnalysis {
        case: RCase::Negative,
        r0,
        crossings: Some(ZeroCrossings { phi_star, phi_tilde, omega_star, omega_tilde }),
    })
}

/// Bisect between `pos` (R > 0) and `other` (R ≤ tol). Without a sign
/// change the grid point is returned.
fn locate_zero(r: &impl Fn(f64) -> f64, pos: f64, other: f64) -> f64 {
    if r(other) > 0.0 {
        return other;
    }
    let (mut a, mut b) = (pos, other);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if r(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if (a - b).abs() < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}
