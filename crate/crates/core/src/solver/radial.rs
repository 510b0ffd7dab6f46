//! Radial exterior solutions by shooting inward from the free boundary.
//!
//! With `t = R - r` the distance to the free boundary `r = R`, the radial
//! equation reads `u_tt - (n-1)/(R-t) u_t = -(gamma/2) u^(-gamma-1)`. It is
//! integrated with classical RK4 in `sigma = ln t`, which resolves the
//! `t^alpha` cusp uniformly, from a seed `c_alpha t0^alpha + b t0^(alpha+1)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exponents::{pow_any, GammaParams};

/// RK4 steps in `ln t` per shot.
const STEPS: usize = 20_000;
/// Seed offset relative to the shooting distance.
const SEED_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialSolution {
    pub params: GammaParams,
    pub n: usize,
    /// Free boundary at `r = 1 + mu`.
    pub mu: f64,
    /// Sample radii, increasing, ending next to `1 + mu`.
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    /// `du/dr` at the samples.
    pub du: Vec<f64>,
}

struct Shot {
    t: Vec<f64>,
    u: Vec<f64>,
    ut: Vec<f64>,
}

fn seed_coefficient(params: &GammaParams, n: usize, big_r: f64) -> f64 {
    let (a, c) = (params.alpha, params.c_alpha);
    (n as f64 - 1.0) * c * a / (2.0 * big_r * (2.0 * a - 1.0))
}

/// Integrate from `t0` to `t_end`; `record` keeps every step.
fn shoot(params: &GammaParams, n: usize, big_r: f64, t0: f64, t_end: f64, record: bool) -> Result<Shot> {
    let (a, c, g) = (params.alpha, params.c_alpha, params.gamma);
    let b = seed_coefficient(params, n, big_r);
    let mut y =
        [c * pow_any(t0, a) + b * pow_any(t0, a + 1.0), c * a * pow_any(t0, a - 1.0) + b * (a + 1.0) * pow_any(t0, a)];
    let nm1 = n as f64 - 1.0;
    let rhs = |sigma: f64, y: [f64; 2]| -> [f64; 2] {
        let t = sigma.exp();
        let u = y[0].max(f64::MIN_POSITIVE);
        [t * y[1], t * (nm1 / (big_r - t) * y[1] - 0.5 * g * pow_any(u, -g - 1.0))]
    };
    let (s0, s1) = (t0.ln(), t_end.ln());
    let ds = (s1 - s0) / STEPS as f64;
    let mut shot = Shot { t: vec![t0], u: vec![y[0]], ut: vec![y[1]] };
    for k in 0..STEPS {
        let s = s0 + k as f64 * ds;
        let k1 = rhs(s, y);
        let k2 = rhs(s + 0.5 * ds, [y[0] + 0.5 * ds * k1[0], y[1] + 0.5 * ds * k1[1]]);
        let k3 = rhs(s + 0.5 * ds, [y[0] + 0.5 * ds * k2[0], y[1] + 0.5 * ds * k2[1]]);
        let k4 = rhs(s + ds, [y[0] + ds * k3[0], y[1] + ds * k3[1]]);
        for i in 0..2 {
            y[i] += ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !(y[0].is_finite() && y[1].is_finite()) || y[0] <= 0.0 {
            return Err(Error::Overflow(format!("radial shot left the positive range at t = {:e}", (s + ds).exp())));
        }
        if record {
            shot.t.push((s + ds).exp());
            shot.u.push(y[0]);
            shot.ut.push(y[1]);
        }
    }
    if !record {
        shot.t.push(t_end);
        shot.u.push(y[0]);
        shot.ut.push(y[1]);
    }
    Ok(shot)
}

/// `u(r = 1) - 1` for a free boundary at `1 + mu`.
fn residual(params: &GammaParams, n: usize, mu: f64, frac: f64) -> Result<f64> {
    let shot = shoot(params, n, 1.0 + mu, frac * mu, mu, false)?;
    Ok(shot.u.last().copied().unwrap_or(f64::NAN) - 1.0)
}

fn solve_mu(params: &GammaParams, n: usize, shoot_tol: f64, frac: f64) -> Result<f64> {
    let (scan_lo, scan_hi) = (1e-5, 1e3);
    let mut lo = scan_lo;
    let mut f_lo = residual(params, n, lo, frac)?;
    if f_lo >= 0.0 {
        return Err(Error::Bracket { lo: scan_lo, hi: scan_lo });
    }
    let mut hi = lo;
    loop {
        hi *= 2.0;
        if hi > scan_hi {
            return Err(Error::Bracket { lo: scan_lo, hi: scan_hi });
        }
        let f_hi = residual(params, n, hi, frac)?;
        if f_hi >= 0.0 {
            break;
        }
        lo = hi;
        f_lo = f_hi;
    }
    let _ = f_lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = residual(params, n, mid, frac)?;
        if f.abs() <= shoot_tol || hi - lo <= 1e-15 * hi {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exterior radial solution with `u = 1` on the unit sphere, profile on `[1, 1 + mu]`.
pub fn radial_exterior(params: &GammaParams, n: usize, shoot_tol: f64) -> Result<RadialSolution> {
    radial_exterior_to(params, n, shoot_tol, 1.0)
}

/// As [`radial_exterior`], with the profile continued inward down to `r_min`.
pub fn radial_exterior_to(params: &GammaParams, n: usize, shoot_tol: f64, r_min: f64) -> Result<RadialSolution> {
    if n == 0 {
        return domain("dimension n must be at least 1");
    }
    if !(shoot_tol > 0.0) {
        return domain(format!("shoot_tol = {shoot_tol} must be positive"));
    }
    if !(r_min > 0.0 && r_min <= 1.0) {
        return domain(format!("r_min = {r_min} must lie in (0, 1]"));
    }
    let m1 = solve_mu(params, n, shoot_tol, SEED_FRACTION)?;
    let m2 = solve_mu(params, n, shoot_tol, 0.5 * SEED_FRACTION)?;
    let mu = (4.0 * m2 - m1) / 3.0;
    let big_r = 1.0 + mu;
    let shot = shoot(params, n, big_r, SEED_FRACTION * mu, big_r - r_min, true)?;
    let len = shot.t.len();
    let mut sol = RadialSolution {
        params: *params,
        n,
        mu,
        r: Vec::with_capacity(len),
        u: Vec::with_capacity(len),
        du: Vec::with_capacity(len),
    };
    for k in (0..len).rev() {
        sol.r.push(big_r - shot.t[k]);
        sol.u.push(shot.u[k]);
        sol.du.push(-shot.ut[k]);
    }
    if sol.u.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Consistency("radial profile is not strictly decreasing".into()));
    }
    Ok(sol)
}

impl RadialSolution {
    pub fn free_boundary_radius(&self) -> f64 {
        1.0 + self.mu
    }

    /// `u(r)`; zero outside the free boundary.
    pub fn value(&self, r: f64) -> Result<f64> {
        let big_r = self.free_boundary_radius();
        if r >= big_r {
            return Ok(0.0);
        }
        let r_min = self.r[0];
        if r < r_min - 1e-12 {
            return domain(format!("radius {r} below the computed range [{r_min}, {big_r}]"));
        }
        let last = self.r.len() - 1;
        if r >= self.r[last] {
            let t = big_r - r;
            let (a, c) = (self.params.alpha, self.params.c_alpha);
            let b = seed_coefficient(&self.params, self.n, big_r);
            return Ok(c * pow_any(t, a) + b * pow_any(t, a + 1.0));
        }
        let k = self.r.partition_point(|&x| x <= r).clamp(1, last) - 1;
        let (r0, r1) = (self.r[k], self.r[k + 1]);
        let hk = r1 - r0;
        let s = ((r - r0) / hk).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        Ok(h00 * self.u[k] + h10 * hk * self.du[k] + h01 * self.u[k + 1] + h11 * hk * self.du[k + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_offset_is_alpha() {
        for g in [0.25, 0.5, 1.0, 1.5, 1.9] {
            let q = GammaParams::new(g).unwrap();
            let sol = radial_exterior(&q, 1, 1e-13).unwrap();
            assert!((sol.mu - q.alpha).abs() < 1e-6, "gamma {g}: {}", sol.mu);
        }
    }

    #[test]
    fn planar_offsets_shrink_towards_two() {
        let mu = |g: f64| radial_exterior(&GammaParams::new(g).unwrap(), 2, 1e-12).unwrap().mu;
        let (a, b, c) = (mu(1.5), mu(1.9), mu(1.99));
        assert!(b < a && c < b, "{a} {b} {c}");
        assert!((mu(1.0) - 0.425).abs() < 5e-3);
    }

    #[test]
    fn profile_shape() {
        let q = GammaParams::new(1.0).unwrap();
        let sol = radial_exterior_to(&q, 2, 1e-12, 0.5).unwrap();
        assert!((sol.value(1.0).unwrap() - 1.0).abs() < 1e-8);
        assert_eq!(sol.value(sol.free_boundary_radius() + 0.1).unwrap(), 0.0);
        assert!(sol.value(0.4).is_err());
        let t = 1e-9;
        let near = sol.value(sol.free_boundary_radius() - t).unwrap();
        assert!((near / q.u0(t) - 1.0).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let r = 0.5 + k as f64 * (sol.free_boundary_radius() - 0.5) / 200.0;
            let v = sol.value(r).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }
}
