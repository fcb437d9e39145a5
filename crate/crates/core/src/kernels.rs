//! Pairwise interaction physics: the Morse potential and the anisotropic
//! vision weight.
//!
//! The weight is exposed in the dot-product convention: `s = e_ij · v/|v|`
//! where `e_ij = (x_i - x_j)/|x_i - x_j|`. A neighbour straight ahead gives
//! `s = -1` (so `s = -cos φ` with `φ` the angle between `x_j - x_i` and the
//! heading).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack allowed on `|s| ≤ 1` for dot products of unit vectors.
pub const DOT_CLAMP_TOL: f64 = 1e-9;

/// Morse potential `K(r) = C_r e^{-r/l_r} - C_a e^{-r/l_a}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseParams {
    #[serde(rename = "C_a")]
    pub c_a: f64,
    pub l_a: f64,
    #[serde(rename = "C_r")]
    pub c_r: f64,
    pub l_r: f64,
}

impl Default for MorseParams {
    fn default() -> Self {
        Self::biological_defaults()
    }
}

impl MorseParams {
    /// Short-range repulsion, long-range attraction. Stand-in values: the
    /// reference runs used a parameter set that is not reproduced here.
    pub const fn biological_defaults() -> Self {
        MorseParams {
            c_a: 0.5,
            l_a: 2.0,
            c_r: 1.0,
            l_r: 0.5,
        }
    }

    /// All four parameters strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("C_a", self.c_a),
            ("l_a", self.l_a),
            ("C_r", self.c_r),
            ("l_r", self.l_r),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `l_r < l_a` and `C_r/l_r > C_a/l_a`: repulsion wins at contact and
    /// `K'` changes sign exactly once.
    pub fn is_biological(&self) -> bool {
        self.l_r < self.l_a && self.c_r / self.l_r > self.c_a / self.l_a
    }

    /// Zero of `K'` in closed form, when the parameters are biological.
    pub fn equilibrium_distance(&self) -> Option<f64> {
        if !self.is_biological() || self.c_a <= 0.0 {
            return None;
        }
        let r = (self.c_r * self.l_a / (self.c_a * self.l_r)).ln() / (1.0 / self.l_r - 1.0 / self.l_a);
        (r > 0.0).then_some(r)
    }

    pub fn potential(&self, r: f64) -> f64 {
        self.c_r * (-r / self.l_r).exp() - self.c_a * (-r / self.l_a).exp()
    }

    /// `K'(r)` without the domain check.
    #[inline]
    pub fn grad_mag_unchecked(&self, r: f64) -> f64 {
        -(self.c_r / self.l_r) * (-r / self.l_r).exp() + (self.c_a / self.l_a) * (-r / self.l_a).exp()
    }
}

/// Radial derivative `K'(dist)`. The force of `j` on `i` enters as
/// `K'(|x_i - x_j|) (x_i - x_j)/|x_i - x_j|`.
pub fn morse_grad_mag(dist: f64, p: &MorseParams) -> Result<f64> {
    if !(dist > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {dist}")));
    }
    Ok(p.grad_mag_unchecked(dist))
}

/// Vision weight parameters. `c_norm` is derived so that `g(-1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisionParams {
    a: f64,
    b: f64,
    c_norm: f64,
}

impl VisionParams {
    /// `a ≥ 0` (steepness; `a = 0` gives the isotropic weight `g ≡ 1`) and
    /// `0 < b < 2π`.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::param("a", format!("must be non-negative, got {a}")));
        }
        if !(b > 0.0 && b < 2.0 * std::f64::consts::PI) {
            return Err(Error::param("b", format!("must lie in (0, 2π), got {b}")));
        }
        let c_norm = one_plus_tanh(a * (2.0 - b / std::f64::consts::PI));
        Ok(VisionParams { a, b, c_norm })
    }

    /// Parameters used for the four-particle runs: `a = 5`, `b = π`.
    pub fn run_defaults() -> Self {
        Self::new(5.0, std::f64::consts::PI).expect("valid defaults")
    }

    /// `g ≡ 1`.
    pub fn isotropic() -> Self {
        Self::new(0.0, std::f64::consts::PI).expect("valid isotropic parameters")
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c_norm(&self) -> f64 {
        self.c_norm
    }

    /// `g(s)` without the domain check; the formula is smooth on all of ℝ.
    #[inline]
    pub fn g(&self, s: f64) -> f64 {
        one_plus_tanh(self.a * (1.0 - s - self.b / std::f64::consts::PI)) / self.c_norm
    }

    #[inline]
    pub fn g_prime(&self, s: f64) -> f64 {
        if self.a == 0.0 {
            return 0.0;
        }
        let z = self.a * (1.0 - s - self.b / std::f64::consts::PI);
        // d/ds tanh(z) = -a sech^2(z); sech^2 = (1+tanh)(1-tanh)
        let sech2 = one_plus_tanh(z) * one_plus_tanh(-z);
        -self.a * sech2 / self.c_norm
    }
}

impl Default for VisionParams {
    fn default() -> Self {
        Self::run_defaults()
    }
}

impl<'de> Deserialize<'de> for VisionParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            a: f64,
            b: f64,
            // accepted so that serialized values read back; must agree with the derived value
            #[serde(default)]
            c_norm: Option<f64>,
        }
        let raw = Raw::deserialize(d)?;
        let p = VisionParams::new(raw.a, raw.b).map_err(serde::de::Error::custom)?;
        match raw.c_norm {
            Some(c) if (c - p.c_norm).abs() > 1e-12 * p.c_norm => Err(serde::de::Error::custom(format!(
                "c_norm is derived from a and b ({}), got {c}",
                p.c_norm
            ))),
            _ => Ok(p),
        }
    }
}

/// `1 + tanh(z)` without cancellation for large negative `z`.
#[inline]
fn one_plus_tanh(z: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * z).exp())
}

fn check_dot(s: f64) -> Result<()> {
    if !(s.abs() <= 1.0 + DOT_CLAMP_TOL) {
        return Err(Error::Domain(format!("weight argument must lie in [-1, 1], got {s}")));
    }
    Ok(())
}

/// `g(s) = [tanh(a(1 - s - b/π)) + 1] / c_norm`, valued in `(0, 1]`.
pub fn weight_g(s: f64, p: &VisionParams) -> Result<f64> {
    check_dot(s)?;
    Ok(p.g(s.clamp(-1.0, 1.0)))
}

pub fn weight_g_prime(s: f64, p: &VisionParams) -> Result<f64> {
    check_dot(s)?;
    Ok(p.g_prime(s.clamp(-1.0, 1.0)))
}
