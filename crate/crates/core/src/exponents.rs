//! Exponent algebra for the negative-power Alt-Phillips potential.
//!
//! Everything here is a closed-form function of the exponent `gamma`: the
//! homogeneity `alpha = 2/(2+gamma)` of the one-dimensional solution
//! `u0(t) = c_alpha (t^+)^alpha`, the degeneracy `s = 2(alpha-1)` of the
//! linearized problem, the rescaling constant of the potential, the radial
//! comparison functions and the hodograph transform `w = c_alpha^(-1/alpha) u^(1/alpha)`.
//!
//! Powers go through `exp`/`ln` of strictly positive arguments only.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Relative tolerance between the two closed forms of `c_alpha`.
const C_ALPHA_AGREEMENT: f64 = 1e-12;

/// `x^p` for `x >= 0`, `p > 0`, computed as `exp(p ln x)`.
#[inline]
pub(crate) fn pow_pos(x: f64, p: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (p * x.ln()).exp()
    }
}

/// `x^p` for `x > 0` and any real `p`.
#[inline]
pub(crate) fn pow_any(x: f64, p: f64) -> f64 {
    debug_assert!(x > 0.0);
    (p * x.ln()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub gamma: f64,
    pub alpha: f64,
    pub c_alpha: f64,
    pub s: f64,
    pub c_gamma: f64,
}

impl GammaParams {
    /// Derive every exponent constant from `gamma` in the open interval (0, 2).
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 2.0) {
            return domain(format!("gamma = {gamma} must lie in the open interval (0, 2)"));
        }
        let alpha = 2.0 / (2.0 + gamma);
        let c_alpha = pow_any(alpha, -alpha);
        let c_check = pow_any((gamma + 2.0) / 2.0, 2.0 / (gamma + 2.0));
        if ((c_alpha - c_check) / c_check).abs() > C_ALPHA_AGREEMENT {
            return Err(Error::Domain(format!(
                "c_alpha closed forms disagree at gamma = {gamma}: {c_alpha} vs {c_check}"
            )));
        }
        Ok(Self { gamma, alpha, c_alpha, s: 2.0 * (alpha - 1.0), c_gamma: (2.0 - gamma) * (2.0 - gamma) / 16.0 })
    }

    /// Value of `u0(t)`.
    pub fn u0(&self, t: f64) -> f64 {
        self.c_alpha * pow_pos(t, self.alpha)
    }

    /// `u0` or one of its first two derivatives.
    ///
    /// At `t = 0` the derivatives are reported as signed infinities
    /// (`+inf` for the slope, `-inf` for the second derivative). For
    /// `t < 0` every order is zero. A non-finite result at `t > 0` is an
    /// [`Error::Overflow`].
    pub fn profile(&self, t: f64, order: u8) -> Result<f64> {
        if t.is_nan() {
            return domain("profile evaluated at NaN");
        }
        let (a, c) = (self.alpha, self.c_alpha);
        let value = match order {
            0 => return Ok(self.u0(t)),
            _ if t < 0.0 => return Ok(0.0),
            1 if t == 0.0 => return Ok(f64::INFINITY),
            2 if t == 0.0 => return Ok(f64::NEG_INFINITY),
            1 => c * a * pow_any(t, a - 1.0),
            2 => c * a * (a - 1.0) * pow_any(t, a - 2.0),
            _ => return domain(format!("profile order {order} not in {{0, 1, 2}}")),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Overflow(format!("u0 derivative of order {order} at t = {t:e}")))
        }
    }

    /// The `t >= 0` with `u0(t) = u_val`.
    pub fn profile_inverse(&self, u_val: f64) -> Result<f64> {
        if !(u_val >= 0.0) {
            return domain(format!("profile_inverse needs u >= 0, got {u_val}"));
        }
        Ok(pow_pos(u_val / self.c_alpha, 1.0 / self.alpha))
    }

    /// Radial comparison function `c_alpha d^alpha + mu d^(2-alpha)` for the u-problem.
    pub fn comparison_psi_u(&self, d: f64, mu: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return domain(format!("comparison distance must be >= 0, got {d}"));
        }
        Ok(self.c_alpha * pow_pos(d, self.alpha) + mu * pow_pos(d, 2.0 - self.alpha))
    }

    /// Comparison function `d + mu d^(1-s)` for the hodograph variable.
    pub fn comparison_psi_w(&self, d: f64, mu: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return domain(format!("comparison distance must be >= 0, got {d}"));
        }
        Ok(d + mu * pow_pos(d, 1.0 - self.s))
    }

    /// Hodograph transform between `u` and `w = c_alpha^(-1/alpha) u^(1/alpha)`.
    pub fn hodograph(&self, val: f64, direction: Hodograph) -> Result<f64> {
        if !(val >= 0.0) {
            return domain(format!("hodograph needs a value >= 0, got {val}"));
        }
        Ok(match direction {
            Hodograph::Forward => pow_pos(val / self.c_alpha, 1.0 / self.alpha),
            Hodograph::Backward => self.c_alpha * pow_pos(val, self.alpha),
        })
    }

    /// Sub-grid value of the profile half a cell away from the free boundary.
    pub fn dead_threshold(&self, h: f64) -> f64 {
        self.u0(0.5 * h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hodograph {
    /// `u -> w`
    Forward,
    /// `w -> u`
    Backward,
}
