//! Unregularized discrete energies.
//!
//! The Dirichlet part is the P1 energy (3-point in 1D, 5-point edge form
//! in 2D). The singular potential is integrated exactly over the
//! interpolant that is linear in the hodograph variable `w`, on which the
//! one-dimensional profile is exact; a cell touching the zero set thereby
//! picks up the closed-form layer integral instead of a divergent
//! midpoint value.

use serde::{Deserialize, Serialize};

use crate::contour::indicator_perimeter;
use crate::error::{Error, Result};
use crate::exponents::{pow_any, pow_pos, GammaParams};
use crate::field::{Grid, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dirichlet: f64,
    pub potential: f64,
    pub perimeter: f64,
    pub total: f64,
}

impl EnergyReport {
    pub fn new(dirichlet: f64, potential: f64, perimeter: f64) -> Self {
        Self { dirichlet, potential, perimeter, total: dirichlet + potential + perimeter }
    }
}

pub(crate) fn check_nonneg(field: &ScalarField) -> Result<()> {
    if let Some(k) = field.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Precondition(format!("field is negative ({}) at node {k}", field.values()[k])));
    }
    Ok(())
}

/// P1 Dirichlet energy of nodal values.
pub(crate) fn dirichlet(grid: &Grid, u: &[f64]) -> f64 {
    let h = grid.h();
    if grid.dim() == 1 {
        return u.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / h;
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut acc = 0.0;
    for j in 0..ny {
        let wy = if j == 0 || j + 1 == ny { 0.5 } else { 1.0 };
        for i in 0..nx - 1 {
            let d = u[grid.index(i + 1, j)] - u[grid.index(i, j)];
            acc += wy * d * d;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let wx = if i == 0 || i + 1 == nx { 0.5 } else { 1.0 };
            let d = u[grid.index(i, j + 1)] - u[grid.index(i, j)];
            acc += wx * d * d;
        }
    }
    acc
}

/// Adds the gradient of [`dirichlet`] into `g`.
pub(crate) fn dirichlet_grad(grid: &Grid, u: &[f64], g: &mut [f64]) {
    let h = grid.h();
    if grid.dim() == 1 {
        for i in 0..u.len() - 1 {
            let d = 2.0 * (u[i + 1] - u[i]) / h;
            g[i] -= d;
            g[i + 1] += d;
        }
        return;
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    for j in 0..ny {
        let wy = if j == 0 || j + 1 == ny { 1.0 } else { 2.0 };
        for i in 0..nx - 1 {
            let (a, b) = (grid.index(i, j), grid.index(i + 1, j));
            let d = wy * (u[b] - u[a]);
            g[a] -= d;
            g[b] += d;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let wx = if i == 0 || i + 1 == nx { 1.0 } else { 2.0 };
            let (a, b) = (grid.index(i, j), grid.index(i, j + 1));
            let d = wx * (u[b] - u[a]);
            g[a] -= d;
            g[b] += d;
        }
    }
}

const GAUSS3: [(f64, f64); 3] =
    [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// Mean of `f^q` over a segment on which `f` is linear from `a` to `b`.
pub(crate) fn segment_mean_power(a: f64, b: f64, q: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if hi <= 0.0 {
        return 0.0;
    }
    if hi - lo <= 1e-2 * hi {
        let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        return 0.5 * GAUSS3.iter().map(|(x, w)| w * pow_any(m + x * r, q)).sum::<f64>();
    }
    let p = 1.0 + q;
    (pow_pos(hi, p) - pow_pos(lo, p)) / (p * (hi - lo))
}

/// Mean of `f^q` over a triangle on which `f` is linear with vertex values
/// `v`, for `q` in (-1, 0).
pub(crate) fn triangle_mean_power(v: [f64; 3], q: f64) -> f64 {
    let mut v = v;
    v.sort_by(f64::total_cmp);
    let [a, b, c] = v;
    if c <= 0.0 {
        return 0.0;
    }
    if c - a <= 1e-2 * c {
        let mids = [0.5 * (a + b), 0.5 * (b + c), 0.5 * (a + c)];
        return mids.iter().map(|&m| pow_any(m, q)).sum::<f64>() / 3.0;
    }
    // mean = 2 G[a,b,c] with G'' = f^q
    let k = 1.0 / ((q + 1.0) * (q + 2.0));
    let g = |x: f64| k * pow_pos(x, q + 2.0);
    let dg = |x: f64| pow_pos(x, q + 1.0) / (q + 1.0);
    let tol = 1e-4 * c;
    let second = if b - a <= tol {
        let m = 0.5 * (a + b);
        let gmc = (g(c) - g(m)) / (c - m);
        (gmc - dg(m)) / (c - m)
    } else if c - b <= tol {
        let m = 0.5 * (b + c);
        let gam = (g(m) - g(a)) / (m - a);
        (dg(m) - gam) / (m - a)
    } else {
        g(a) / ((a - b) * (a - c)) + g(b) / ((b - a) * (b - c)) + g(c) / ((c - a) * (c - b))
    };
    2.0 * second
}

/// Hodograph values with non-positive entries mapped to zero.
fn hodograph_values(params: &GammaParams, u: &[f64]) -> Vec<f64> {
    let inv_a = 1.0 / params.alpha;
    u.iter().map(|&x| pow_pos(x / params.c_alpha, inv_a)).collect()
}

/// `∫ u^(-gamma) χ{u>0}` over the grid box.
pub(crate) fn singular_potential(grid: &Grid, params: &GammaParams, u: &[f64]) -> f64 {
    let w = hodograph_values(params, u);
    let q = -params.alpha * params.gamma;
    let scale = pow_any(params.c_alpha, -params.gamma);
    let h = grid.h();
    if grid.dim() == 1 {
        return scale * h * w.windows(2).map(|p| segment_mean_power(p[0], p[1], q)).sum::<f64>();
    }
    let mut acc = 0.0;
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() - 1 {
            let c =
                [w[grid.index(i, j)], w[grid.index(i + 1, j)], w[grid.index(i + 1, j + 1)], w[grid.index(i, j + 1)]];
            acc += triangle_mean_power([c[0], c[1], c[2]], q)
                + triangle_mean_power([c[0], c[2], c[3]], q)
                + triangle_mean_power([c[0], c[1], c[3]], q)
                + triangle_mean_power([c[1], c[2], c[3]], q);
        }
    }
    scale * acc * h * h * 0.25
}

/// Area fraction of a triangle where a linear function exceeds `tau`.
fn triangle_fraction_above(v: [f64; 3], tau: f64) -> f64 {
    let mut v = v;
    v.sort_by(f64::total_cmp);
    let [a, b, c] = v;
    if tau < a {
        1.0
    } else if tau >= c {
        0.0
    } else if tau >= b {
        (c - tau).powi(2) / ((c - a) * (c - b))
    } else {
        1.0 - (tau - a).powi(2) / ((b - a) * (c - a))
    }
}

/// Measure of `{u > tau}` under the piecewise-linear interpolant.
pub(crate) fn positivity_measure(grid: &Grid, u: &[f64], tau: f64) -> f64 {
    let h = grid.h();
    if grid.dim() == 1 {
        return h * u
            .windows(2)
            .map(|p| {
                let (lo, hi) = if p[0] <= p[1] { (p[0], p[1]) } else { (p[1], p[0]) };
                if tau < lo {
                    1.0
                } else if tau >= hi {
                    0.0
                } else {
                    (hi - tau) / (hi - lo)
                }
            })
            .sum::<f64>();
    }
    let mut acc = 0.0;
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() - 1 {
            let c =
                [u[grid.index(i, j)], u[grid.index(i + 1, j)], u[grid.index(i + 1, j + 1)], u[grid.index(i, j + 1)]];
            acc += triangle_fraction_above([c[0], c[1], c[2]], tau)
                + triangle_fraction_above([c[0], c[2], c[3]], tau)
                + triangle_fraction_above([c[0], c[1], c[3]], tau)
                + triangle_fraction_above([c[1], c[2], c[3]], tau);
        }
    }
    acc * h * h * 0.25
}

/// Dirichlet energy plus `∫ u^(-gamma) χ{u>0}`, the latter scaled by
/// `c_gamma` when `rescaled`.
pub fn energy_ap(field: &ScalarField, params: &GammaParams, rescaled: bool) -> Result<EnergyReport> {
    check_nonneg(field)?;
    let d = dirichlet(field.grid(), field.values());
    let mut p = singular_potential(field.grid(), params, field.values());
    if rescaled {
        p *= params.c_gamma;
    }
    Ok(EnergyReport::new(d, p, 0.0))
}

/// Dirichlet energy plus the measure of `{u > tau}`.
pub fn energy_ac(field: &ScalarField, tau: f64) -> Result<EnergyReport> {
    check_nonneg(field)?;
    let d = dirichlet(field.grid(), field.values());
    Ok(EnergyReport::new(d, positivity_measure(field.grid(), field.values(), tau), 0.0))
}

/// Dirichlet energy plus the relative perimeter of the set marked by `zero_set`.
pub fn energy_f(field: &ScalarField, zero_set: &[bool], tau: f64) -> Result<EnergyReport> {
    check_nonneg(field)?;
    let grid = field.grid();
    if zero_set.len() != grid.len() {
        return Err(Error::Domain(format!("indicator has {} entries for {} nodes", zero_set.len(), grid.len())));
    }
    if let Some(k) = (0..grid.len()).find(|&k| zero_set[k] && field.values()[k] > tau) {
        return Err(Error::Consistency(format!(
            "field is {} > tau = {tau} at node {k} of the zero set",
            field.values()[k]
        )));
    }
    let perimeter = if grid.dim() == 1 {
        zero_set.windows(2).filter(|p| p[0] != p[1]).count() as f64
    } else {
        indicator_perimeter(grid, zero_set)
    };
    Ok(EnergyReport::new(dirichlet(grid, field.values()), 0.0, perimeter))
}
