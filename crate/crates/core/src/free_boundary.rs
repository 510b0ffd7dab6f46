//! Interface extraction, flatness certificates and viscosity touching tests.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contour::{chain_edges, edge_point, level_edges};
use crate::error::{domain, Error, Result};
use crate::exponents::GammaParams;
use crate::field::{Grid, ScalarField};
use crate::solver::check_nonneg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<[f64; 2]>,
    pub closed: bool,
}

/// Discrete free boundary `{u = tau}` of a nonnegative field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundary {
    pub grid: Grid,
    pub tau: f64,
    /// Cells crossed by the interface, sorted.
    pub cells: Vec<usize>,
    /// Ordered chains in 2D; one single-vertex chain per crossing in 1D.
    pub polylines: Vec<Polyline>,
}

/// Interface of `{u > tau}` with linear interpolation along grid edges.
///
/// An empty positive or zero set yields an interface without polylines.
pub fn extract_interface(field: &ScalarField, tau: f64) -> Result<FreeBoundary> {
    check_nonneg(field)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return domain(format!("threshold tau = {tau} must be finite and >= 0"));
    }
    let grid = field.grid().clone();
    let u = field.values();
    let mut cells = Vec::new();
    let mut polylines = Vec::new();
    if grid.dim() == 1 {
        for i in 0..grid.len() - 1 {
            if (u[i] > tau) != (u[i + 1] > tau) {
                cells.push(i);
                polylines.push(Polyline { vertices: vec![edge_point(&grid, u, tau, 2 * i)], closed: false });
            }
        }
    } else {
        let pairs = level_edges(&grid, u, tau);
        cells = pairs.iter().map(|p| p.0).collect();
        cells.dedup();
        for (edges, closed) in chain_edges(&pairs) {
            polylines
                .push(Polyline { vertices: edges.iter().map(|&e| edge_point(&grid, u, tau, e)).collect(), closed });
        }
    }
    Ok(FreeBoundary { grid, tau, cells, polylines })
}

fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

impl FreeBoundary {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.polylines.iter().flat_map(|p| p.vertices.iter().copied())
    }

    /// Segments of all chains, including the closing segment of loops.
    pub fn segments(&self) -> Vec<[[f64; 2]; 2]> {
        let mut out = Vec::new();
        for p in &self.polylines {
            let v = &p.vertices;
            out.extend(v.windows(2).map(|w| [w[0], w[1]]));
            if p.closed && v.len() > 2 {
                out.push([v[v.len() - 1], v[0]]);
            }
        }
        out
    }

    pub fn length(&self) -> f64 {
        self.segments().iter().map(crate::contour::segment_length).sum()
    }

    /// Euclidean distance from `p` to the interface; `None` when empty.
    pub fn distance(&self, p: [f64; 2]) -> Option<f64> {
        let mut best: Option<f64> = None;
        let mut take = |d: f64| best = Some(best.map_or(d, |b: f64| b.min(d)));
        for v in self.vertices() {
            take((p[0] - v[0]).hypot(p[1] - v[1]));
        }
        for [a, b] in self.segments() {
            take(dist_to_segment(p, a, b));
        }
        best
    }

    /// `component,index,x,y` rows in chain order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "component,index,x,y,closed")?;
        for (c, p) in self.polylines.iter().enumerate() {
            for (k, v) in p.vertices.iter().enumerate() {
                writeln!(out, "{c},{k},{:.16e},{:.16e},{}", v[0], v[1], u8::from(p.closed))?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlatnessMode {
    /// Compare `u` with the one-dimensional profile through its inverse.
    UProfile,
    /// Compare the hodograph variable `w` with the linear function.
    WLinear,
}

impl FlatnessMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::UProfile => "u-profile",
            Self::WLinear => "w-linear",
        }
    }
}

/// Measured flatness of a field in one ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessCertificate {
    pub center: [f64; 2],
    pub radius: f64,
    pub nu: [f64; 2],
    pub epsilon: f64,
    pub mode: FlatnessMode,
    /// Grid nodes inspected in the ball.
    pub samples: usize,
    /// Directions evaluated by the search.
    pub directions: usize,
}

/// Coarse angular grid of the direction search.
const COARSE_DIRECTIONS: usize = 32;
/// Angular width at which golden-section refinement stops.
const ANGLE_TOL: f64 = 1e-7;

/// Ball samples: offset from the centre and the profile coordinate of
/// positive values (`None` on the zero set).
struct Samples {
    pts: Vec<([f64; 2], Option<f64>)>,
    radius: f64,
}

impl Samples {
    fn collect(
        field: &ScalarField,
        center: [f64; 2],
        radius: f64,
        params: &GammaParams,
        mode: FlatnessMode,
    ) -> Result<Self> {
        let g = field.grid();
        let mut pts = Vec::new();
        for k in g.nodes_in_ball(center, radius) {
            let p = g.point(k);
            let u = field.values()[k];
            let val = if u > 0.0 {
                Some(match mode {
                    FlatnessMode::UProfile => params.profile_inverse(u)?,
                    FlatnessMode::WLinear => u,
                })
            } else {
                None
            };
            pts.push(([p[0] - center[0], p[1] - center[1]], val));
        }
        Ok(Self { pts, radius })
    }

    fn epsilon(&self, nu: [f64; 2]) -> f64 {
        let mut worst = 0.0f64;
        for &(x, val) in &self.pts {
            let xn = x[0] * nu[0] + x[1] * nu[1];
            let v = match val {
                Some(t) => (t - xn).abs(),
                None => xn.max(0.0),
            };
            worst = worst.max(v);
        }
        worst / self.radius
    }
}

fn unit(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

fn check_ball(field: &ScalarField, center: [f64; 2], radius: f64) -> Result<()> {
    let g = field.grid();
    if !(radius > 0.0 && radius.is_finite()) {
        return domain(format!("ball radius {radius} must be positive"));
    }
    if !g.contains_ball(center, radius) {
        return domain(format!("ball B_{radius}({center:?}) leaves the grid"));
    }
    Ok(())
}

/// Unit normal of the interface near `p`, pointing into the positive set,
/// from the principal axes of nearby vertices.
fn interface_normal(field: &ScalarField, fb: &FreeBoundary, p: [f64; 2], r: f64) -> Option<[f64; 2]> {
    let g = field.grid();
    let nu = if g.dim() == 1 {
        [1.0, 0.0]
    } else {
        let pts: Vec<[f64; 2]> = fb.vertices().filter(|v| (v[0] - p[0]).hypot(v[1] - p[1]) <= r).collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let m = pts.iter().fold([0.0, 0.0], |a, v| [a[0] + v[0] / n, a[1] + v[1] / n]);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for v in &pts {
            let d = [v[0] - m[0], v[1] - m[1]];
            sxx += d[0] * d[0];
            sxy += d[0] * d[1];
            syy += d[1] * d[1];
        }
        // tangent is the major axis; normal is perpendicular
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        [-theta.sin(), theta.cos()]
    };
    let mut side = 0.0;
    for k in g.nodes_in_ball(p, r) {
        let q = g.point(k);
        side += field.values()[k] * ((q[0] - p[0]) * nu[0] + (q[1] - p[1]) * nu[1]);
    }
    if side == 0.0 {
        return None;
    }
    Some(if side > 0.0 { nu } else { [-nu[0], -nu[1]] })
}

fn require_near_interface(field: &ScalarField, fb: &FreeBoundary, p: [f64; 2]) -> Result<()> {
    let h = field.grid().h();
    match fb.distance(p) {
        Some(d) if d <= h * (1.0 + 1e-9) => Ok(()),
        Some(d) => Err(Error::Precondition(format!("point {p:?} is {d:e} from the interface, more than h = {h:e}"))),
        None => Err(Error::Precondition("field has no interface".into())),
    }
}

/// Flatness of `field` in `B_radius(center)`, minimized over directions.
pub fn flatness_certificate(
    field: &ScalarField,
    center: [f64; 2],
    radius: f64,
    params: &GammaParams,
    mode: FlatnessMode,
) -> Result<FlatnessCertificate> {
    flatness_certificate_with(field, center, radius, params, mode, &[])
}

/// As [`flatness_certificate`], additionally evaluating `extra` directions
/// (normalized). The result never exceeds the one without extras.
pub fn flatness_certificate_with(
    field: &ScalarField,
    center: [f64; 2],
    radius: f64,
    params: &GammaParams,
    mode: FlatnessMode,
    extra: &[[f64; 2]],
) -> Result<FlatnessCertificate> {
    check_nonneg(field)?;
    check_ball(field, center, radius)?;
    let fb = extract_interface(field, 0.0)?;
    require_near_interface(field, &fb, center)?;
    let samples = Samples::collect(field, center, radius, params, mode)?;
    let mut best = ([1.0, 0.0], f64::INFINITY);
    let mut count = 0usize;
    let mut eval = |nu: [f64; 2], best: &mut ([f64; 2], f64)| {
        count += 1;
        let e = samples.epsilon(nu);
        if e < best.1 {
            *best = (nu, e);
        }
        e
    };
    if field.grid().dim() == 1 {
        eval([1.0, 0.0], &mut best);
        eval([-1.0, 0.0], &mut best);
    } else {
        let step = std::f64::consts::TAU / COARSE_DIRECTIONS as f64;
        let mut seed = (0.0, f64::INFINITY);
        for k in 0..COARSE_DIRECTIONS {
            let th = k as f64 * step;
            let e = eval(unit(th), &mut best);
            if e < seed.1 {
                seed = (th, e);
            }
        }
        if let Some(n) =
            interface_normal(field, &fb, center, radius.min(8.0 * field.grid().h()).max(3.0 * field.grid().h()))
        {
            let th = n[1].atan2(n[0]);
            let e = eval(n, &mut best);
            if e < seed.1 {
                seed = (th, e);
            }
        }
        // golden section on [seed - step, seed + step]
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (seed.0 - step, seed.0 + step);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut fc = eval(unit(c), &mut best);
        let mut fd = eval(unit(d), &mut best);
        while b - a > ANGLE_TOL {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = eval(unit(c), &mut best);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = eval(unit(d), &mut best);
            }
        }
    }
    for &v in extra {
        let n = v[0].hypot(v[1]);
        if n > 0.0 && n.is_finite() {
            eval([v[0] / n, v[1] / n], &mut best);
        }
    }
    Ok(FlatnessCertificate {
        center,
        radius,
        nu: best.0,
        epsilon: best.1,
        mode,
        samples: samples.pts.len(),
        directions: count,
    })
}

impl FlatnessCertificate {
    /// Largest violation of the sandwich
    /// `P(x.nu - eps t) <= u(y + x) <= P(x.nu + eps t)` over the ball samples,
    /// with `eps` inflated by `slack` (`P` is the profile or the identity).
    pub fn max_violation(&self, field: &ScalarField, params: &GammaParams, slack: f64) -> Result<f64> {
        check_ball(field, self.center, self.radius)?;
        let g = field.grid();
        let et = (self.epsilon + slack) * self.radius;
        let prof = |t: f64| -> Result<f64> {
            match self.mode {
                FlatnessMode::UProfile => params.profile(t, 0),
                FlatnessMode::WLinear => Ok(t.max(0.0)),
            }
        };
        let mut worst = 0.0f64;
        for k in g.nodes_in_ball(self.center, self.radius) {
            let p = g.point(k);
            let xn = (p[0] - self.center[0]) * self.nu[0] + (p[1] - self.center[1]) * self.nu[1];
            let u = field.values()[k];
            worst = worst.max(prof(xn - et)? - u).max(u - prof(xn + et)?);
        }
        Ok(worst)
    }
}

/// Certificates at the same centre for each radius, largest first.
pub fn dyadic_flatness_trace(
    field: &ScalarField,
    center: [f64; 2],
    radii: &[f64],
    params: &GammaParams,
    mode: FlatnessMode,
) -> Result<Vec<FlatnessCertificate>> {
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return domain("radii must be strictly decreasing");
    }
    for &r in radii {
        check_ball(field, center, r)?;
    }
    radii.iter().map(|&r| flatness_certificate(field, center, r, params, mode)).collect()
}

pub fn write_flatness_csv<W: Write>(certs: &[FlatnessCertificate], mut out: W) -> std::io::Result<()> {
    writeln!(out, "center_x,center_y,radius,nu_x,nu_y,epsilon,mode")?;
    for c in certs {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            c.center[0],
            c.center[1],
            c.radius,
            c.nu[0],
            c.nu[1],
            c.epsilon,
            c.mode.as_str()
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Ball inside the positive set, comparison from above (`mu > 0`).
    Above,
    /// Ball inside the zero set, comparison from below (`mu < 0`).
    Below,
}

/// Comparison configuration realizing a discrete touch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchWitness {
    pub ball_center: [f64; 2],
    pub ball_radius: f64,
    pub tilt_deg: f64,
    /// `min (u - psi)` (above) or `max (u - psi)` (below) over the neighbourhood.
    pub extreme_gap: f64,
    /// Interpolated `u` at the touch point.
    pub touch_value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "lowercase")]
pub enum TouchOutcome {
    Pass {
        configurations: usize,
        /// Gap of the configuration closest to touching, signed so that
        /// nonnegative values would have been a touch.
        closest_margin: f64,
        /// Bound on `u(fb_point)` for a touch.
        tolerance: f64,
    },
    Fail(TouchWitness),
}

impl TouchOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, Self::Pass { .. })
    }
}

/// Radii of the comparison balls, in units of `ball_radius`.
const TOUCH_INFLATIONS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
/// Relative round-off allowed in the ordering `u >= psi` (`u <= psi`).
const ORDER_ROUNDOFF: f64 = 1e-9;
/// Tilts of the comparison ball normal, degrees.
const TOUCH_TILTS: [f64; 9] = [-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0];

/// Discrete test of whether `field` touches the radial comparison function
/// `c_alpha d^alpha + mu d^(2-alpha)` at `fb_point`.
///
/// Comparison balls of radius `ball_radius * {1, 2, 4, 8}`, tangent at
/// `fb_point` with normals tilted up to 4 degrees, are placed on the
/// positive side (`Above`) or the zero side (`Below`). A configuration
/// touches when the ordering holds on `B_ball_radius(fb_point)` up to
/// round-off and `u(fb_point) <= 2 h^alpha`. The grid tolerance applies to
/// the touch point only: applied to the ordering it would exceed the
/// `mu d^(2-alpha)` separation at every resolvable distance.
pub fn viscosity_touch_test(
    field: &ScalarField,
    params: &GammaParams,
    fb_point: [f64; 2],
    mu: f64,
    ball_radius: f64,
    side: Side,
) -> Result<TouchOutcome> {
    check_nonneg(field)?;
    match side {
        Side::Above if !(mu > 0.0) => return domain(format!("touching from above needs mu > 0, got {mu}")),
        Side::Below if !(mu < 0.0) => return domain(format!("touching from below needs mu < 0, got {mu}")),
        _ => {}
    }
    check_ball(field, fb_point, ball_radius)?;
    let g = field.grid();
    let fb = extract_interface(field, 0.0)?;
    require_near_interface(field, &fb, fb_point)?;
    let h = g.h();
    let normal = interface_normal(field, &fb, fb_point, 4.0 * h)
        .ok_or_else(|| Error::Precondition(format!("no interface normal at {fb_point:?}")))?;
    let tol = 2.0 * h.powf(params.alpha);
    let touch_value = field.sample(fb_point)?;
    let nodes = g.nodes_in_ball(fb_point, ball_radius);
    let scale = nodes.iter().map(|&k| field.values()[k]).fold(1.0, f64::max);
    let slack = ORDER_ROUNDOFF * scale;
    let tilts: &[f64] = if g.dim() == 1 { &[0.0] } else { &TOUCH_TILTS };
    let mut configurations = 0;
    let mut closest = f64::NEG_INFINITY;
    for &k in &TOUCH_INFLATIONS {
        let r = k * ball_radius;
        for &tilt in tilts {
            configurations += 1;
            let (s, c) = tilt.to_radians().sin_cos();
            let n = [c * normal[0] - s * normal[1], s * normal[0] + c * normal[1]];
            let sign = if side == Side::Above { 1.0 } else { -1.0 };
            let z = [fb_point[0] + sign * r * n[0], fb_point[1] + sign * r * n[1]];
            // above: min(u - psi); below: min(psi - u)
            let mut margin = f64::INFINITY;
            for &node in &nodes {
                let p = g.point(node);
                let dz = (p[0] - z[0]).hypot(p[1] - z[1]);
                let d = match side {
                    Side::Above => (r - dz).max(0.0),
                    Side::Below => (dz - r).max(0.0),
                };
                let psi = params.comparison_psi_u(d, mu)?;
                let gap = field.values()[node] - psi;
                margin = margin.min(sign * gap);
            }
            if margin >= -slack && touch_value <= tol {
                return Ok(TouchOutcome::Fail(TouchWitness {
                    ball_center: z,
                    ball_radius: r,
                    tilt_deg: tilt,
                    extreme_gap: sign * margin,
                    touch_value,
                    tolerance: tol,
                }));
            }
            closest = closest.max(margin);
        }
    }
    Ok(TouchOutcome::Pass { configurations, closest_margin: closest, tolerance: tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::radial_exterior_to;

    fn params(g: f64) -> GammaParams {
        GammaParams::new(g).unwrap()
    }

    fn profile_field(grid: Grid, q: &GammaParams, nu: [f64; 2], shift: f64) -> ScalarField {
        ScalarField::from_fn(grid, |p| q.u0(p[0] * nu[0] + p[1] * nu[1] + shift)).unwrap()
    }

    #[test]
    fn one_dimensional_kink() {
        let g = Grid::new_1d(-1.0, 1.0, 64).unwrap();
        let f = ScalarField::from_fn(g, |p| p[0].max(0.0)).unwrap();
        let fb = extract_interface(&f, 1e-12).unwrap();
        let pts: Vec<_> = fb.vertices().collect();
        assert_eq!(pts.len(), 1);
        assert!(pts[0][0].abs() <= f.grid().h());
        let one = ScalarField::from_fn(f.grid().clone(), |_| 1.0).unwrap();
        assert!(extract_interface(&one, 1e-12).unwrap().is_empty());
    }

    #[test]
    fn constant_has_no_interface() {
        let g = Grid::square([0.0, 0.0], 1.0, 1.0 / 16.0).unwrap();
        let f = ScalarField::from_fn(g, |_| 1.0).unwrap();
        let fb = extract_interface(&f, 1e-12).unwrap();
        assert!(fb.is_empty() && fb.cells.is_empty());
        assert_eq!(fb.distance([0.0, 0.0]), None);
    }

    #[test]
    fn radial_solution_interface_is_a_circle() {
        let q = params(1.0);
        let sol = radial_exterior_to(&q, 2, 1e-12, 0.5).unwrap();
        let big_r = sol.free_boundary_radius();
        let h = 1.0 / 64.0;
        let g = Grid::square([0.0, 0.0], 2.0, h).unwrap();
        let f = ScalarField::from_fn(g, |p| sol.value(p[0].hypot(p[1]).max(0.5)).unwrap()).unwrap();
        let fb = extract_interface(&f, 1e-12).unwrap();
        assert_eq!(fb.polylines.len(), 1);
        assert!(fb.polylines[0].closed);
        let dev = fb.vertices().map(|v| (v[0].hypot(v[1]) - big_r).abs()).fold(0.0, f64::max);
        assert!(dev < 2.0 * h, "{dev}");
        for v in fb.vertices() {
            let (i, j) = ((v[0] + 2.0) / h, (v[1] + 2.0) / h);
            assert!(
                i.fract().abs() < 1e-9
                    || j.fract().abs() < 1e-9
                    || (1.0 - i.fract()) < 1e-9
                    || (1.0 - j.fract()) < 1e-9
            );
        }
    }

    #[test]
    fn scaling_preserves_the_threshold_set() {
        let q = params(1.0);
        let g = Grid::square([0.0, 0.0], 1.0, 1.0 / 32.0).unwrap();
        let f = ScalarField::from_fn(g, |p| {
            let t = p[1] - 0.2 * p[0] * p[0] + 0.013;
            if t > 0.0 {
                q.u0(t)
            } else {
                0.0
            }
        })
        .unwrap();
        let tau = 1e-12;
        let a = extract_interface(&f, tau).unwrap();
        let b = extract_interface(&f.map(|v| 2.0 * v).unwrap(), tau).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.polylines.len(), b.polylines.len());
        for (pa, pb) in a.vertices().zip(b.vertices()) {
            assert!((pa[0] - pb[0]).hypot(pa[1] - pb[1]) < 1e-9 * f.grid().h());
        }
    }

    #[test]
    fn tilted_profile_is_flat_in_its_frame() {
        let q = params(1.0);
        let h = 1.0 / 128.0;
        let nu0 = [10f64.to_radians().sin(), 10f64.to_radians().cos()];
        let f = profile_field(Grid::square([0.0, 0.0], 1.0, h).unwrap(), &q, nu0, 0.0);
        for t in [0.25, 0.5] {
            let c = flatness_certificate(&f, [0.0, 0.0], t, &q, FlatnessMode::UProfile).unwrap();
            let ang = (c.nu[0] * nu0[1] - c.nu[1] * nu0[0]).atan2(c.nu[0] * nu0[0] + c.nu[1] * nu0[1]);
            assert!(ang.abs().to_degrees() < 0.5, "{}", ang.to_degrees());
            assert!(c.epsilon < 2.0 * h / t, "{}", c.epsilon);
            assert!((c.nu[0].hypot(c.nu[1]) - 1.0).abs() < 1e-12);
        }
        let straight = profile_field(Grid::square([0.0, 0.0], 1.0, h).unwrap(), &q, [0.0, 1.0], 0.0);
        let c = flatness_certificate(&straight, [0.0, 0.0], 0.5, &q, FlatnessMode::UProfile).unwrap();
        assert!((c.nu[1] - 1.0).abs() < 1e-6 && c.epsilon < 4.0 * h);
    }

    #[test]
    fn flatness_preconditions() {
        let q = params(1.0);
        let f = profile_field(Grid::square([0.0, 0.0], 1.0, 1.0 / 32.0).unwrap(), &q, [0.0, 1.0], 0.0);
        assert!(flatness_certificate(&f, [0.0, 0.0], 1.5, &q, FlatnessMode::UProfile).is_err());
        assert!(matches!(
            flatness_certificate(&f, [0.0, 0.3], 0.5, &q, FlatnessMode::UProfile),
            Err(Error::Precondition(_))
        ));
    }

    fn bumped(h: f64) -> (GammaParams, ScalarField) {
        let q = params(1.0);
        let g = Grid::square([0.0, 0.0], 1.0, h).unwrap();
        let f = ScalarField::from_fn(g, |p| {
            let r2 = (p[0] - 0.2).powi(2) + (p[1] - 0.2).powi(2);
            let bump = if r2 < 0.04 { (1.0 - r2 / 0.04).powi(3) } else { 0.0 };
            q.u0(p[1]) + 0.01 * bump
        })
        .unwrap();
        (q, f)
    }

    fn brute_force(f: &ScalarField, q: &GammaParams, c: [f64; 2], t: f64) -> f64 {
        let s = Samples::collect(f, c, t, q, FlatnessMode::UProfile).unwrap();
        (0..720).map(|k| s.epsilon(unit(k as f64 * std::f64::consts::PI / 360.0))).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn bump_matches_brute_force_directions() {
        let (q, f) = bumped(1.0 / 128.0);
        let c = flatness_certificate(&f, [0.0, 0.0], 0.5, &q, FlatnessMode::UProfile).unwrap();
        let brute = brute_force(&f, &q, [0.0, 0.0], 0.5);
        assert!(c.epsilon > 0.0);
        assert!((c.epsilon / brute - 1.0).abs() < 0.1, "{} vs {brute}", c.epsilon);
        assert!(c.epsilon <= brute * (1.0 + 1e-12));
    }

    #[test]
    fn extra_directions_never_increase_epsilon() {
        let (q, f) = bumped(1.0 / 64.0);
        let base = flatness_certificate(&f, [0.0, 0.0], 0.5, &q, FlatnessMode::UProfile).unwrap();
        let extra: Vec<[f64; 2]> = (0..50).map(|k| unit(0.1 * k as f64)).collect();
        let more = flatness_certificate_with(&f, [0.0, 0.0], 0.5, &q, FlatnessMode::UProfile, &extra).unwrap();
        assert!(more.epsilon <= base.epsilon);
        assert!(more.directions == base.directions + extra.len());
    }

    #[test]
    fn certificates_satisfy_their_sandwich() {
        let (q, f) = bumped(1.0 / 64.0);
        for t in [0.5, 0.25, 0.1] {
            let c = flatness_certificate(&f, [0.0, 0.0], t, &q, FlatnessMode::UProfile).unwrap();
            assert!(c.max_violation(&f, &q, 1e-9).unwrap() <= 0.0);
            let w = f.map(|v| q.hodograph(v, crate::Hodograph::Forward).unwrap()).unwrap();
            let cw = flatness_certificate(&w, [0.0, 0.0], t, &q, FlatnessMode::WLinear).unwrap();
            assert!(cw.max_violation(&w, &q, 1e-9).unwrap() <= 0.0);
        }
    }

    #[test]
    fn quarter_turns_rotate_the_direction() {
        let (q, f) = bumped(1.0 / 64.0);
        let c0 = flatness_certificate(&f, [0.0, 0.0], 0.5, &q, FlatnessMode::UProfile).unwrap();
        let g = f.grid().clone();
        let n = g.nx();
        // (x, y) -> (-y, x)
        let vals: Vec<f64> = (0..g.len())
            .map(|k| {
                let (i, j) = g.ij(k);
                f.values()[g.index(j, n - 1 - i)]
            })
            .collect();
        let r = ScalarField::new(g, vals).unwrap();
        let c1 = flatness_certificate(&r, [0.0, 0.0], 0.5, &q, FlatnessMode::UProfile).unwrap();
        assert!((c1.epsilon - c0.epsilon).abs() < 1e-10, "{} {}", c0.epsilon, c1.epsilon);
        let rot = [-c0.nu[1], c0.nu[0]];
        assert!((rot[0] - c1.nu[0]).abs() < 1e-5 && (rot[1] - c1.nu[1]).abs() < 1e-5, "{rot:?} {:?}", c1.nu);
    }

    #[test]
    fn one_dimensional_flatness() {
        let q = params(0.5);
        let g = Grid::new_1d(-1.0, 1.0, 128).unwrap();
        let f = ScalarField::from_fn(g, |p| q.u0(-p[0])).unwrap();
        let c = flatness_certificate(&f, [0.0, 0.0], 0.5, &q, FlatnessMode::UProfile).unwrap();
        assert_eq!(c.nu, [-1.0, 0.0]);
        assert!(c.epsilon < 1e-12);
    }

    #[test]
    fn exact_profile_trace_sits_at_the_floor() {
        let q = params(1.0);
        let h = 1.0 / 128.0;
        let f = profile_field(Grid::square([0.0, 0.0], 1.0, h).unwrap(), &q, [0.0, 1.0], 0.0);
        let radii = [0.8, 0.4, 0.2, 0.1];
        let trace = dyadic_flatness_trace(&f, [0.0, 0.0], &radii, &q, FlatnessMode::UProfile).unwrap();
        for c in &trace {
            assert!(c.epsilon < 2.0 * h / c.radius, "{c:?}");
        }
        assert!(dyadic_flatness_trace(&f, [0.0, 0.0], &[0.1, 0.2], &q, FlatnessMode::UProfile).is_err());
    }

    #[test]
    fn curved_boundary_looks_flatter_at_small_scales() {
        let q = params(1.0);
        let sol = radial_exterior_to(&q, 2, 1e-12, 0.5).unwrap();
        let big_r = sol.free_boundary_radius();
        let h = 1.0 / 256.0;
        let g = Grid::square([big_r, 0.0], 0.5, h).unwrap();
        let f = ScalarField::from_fn(g, |p| sol.value(p[0].hypot(p[1])).unwrap()).unwrap();
        let trace = dyadic_flatness_trace(&f, [big_r, 0.0], &[0.4, 0.1], &q, FlatnessMode::UProfile).unwrap();
        assert!(trace[1].epsilon < trace[0].epsilon, "{trace:?}");
        // chord deviation of the circle over the ball, relative to the radius
        let chord = |t: f64| (big_r - (big_r * big_r - t * t).sqrt()) / t;
        assert!(trace[0].epsilon >= 0.5 * chord(0.4), "{} {}", trace[0].epsilon, chord(0.4));
    }

    #[test]
    fn perturbed_trace_is_nonincreasing() {
        let q = params(1.0);
        let h = 1.0 / 256.0;
        let nu0 = [20f64.to_radians().sin(), 20f64.to_radians().cos()];
        let g = Grid::square([0.0, 0.0], 1.0, h).unwrap();
        let f = ScalarField::from_fn(g, |p| {
            let tang = p[0] * nu0[1] - p[1] * nu0[0];
            q.u0(p[0] * nu0[0] + p[1] * nu0[1] + 0.3 * tang * tang)
        })
        .unwrap();
        let radii = [0.8, 0.4, 0.2, 0.1, 0.05];
        let trace = dyadic_flatness_trace(&f, [0.0, 0.0], &radii, &q, FlatnessMode::UProfile).unwrap();
        for w in trace[1..].windows(2) {
            assert!(w[1].epsilon <= 1.1 * w[0].epsilon, "{trace:?}");
        }
        for c in &trace {
            let brute = brute_force(&f, &q, c.center, c.radius);
            assert!(c.epsilon <= brute * (1.0 + 1e-6), "{} {brute} {c:?}", c.epsilon);
        }
    }

    #[test]
    fn profile_is_not_touched_from_above() {
        let q = params(1.0);
        let h = 1.0 / 256.0;
        let f = profile_field(Grid::square([0.0, 0.0], 1.0, h).unwrap(), &q, [0.0, 1.0], 0.0);
        let out = viscosity_touch_test(&f, &q, [0.0, 0.0], 0.5, 0.3, Side::Above).unwrap();
        assert!(out.passed(), "{out:?}");
        let out = viscosity_touch_test(&f, &q, [0.0, 0.0], -0.5, 0.3, Side::Below).unwrap();
        assert!(out.passed(), "{out:?}");
    }

    #[test]
    fn comparison_function_touches_itself() {
        let q = params(1.0);
        let h = 1.0 / 128.0;
        let r0 = 0.5;
        let f = ScalarField::from_fn(Grid::square([0.0, 0.0], 1.0, h).unwrap(), |p| {
            q.comparison_psi_u((r0 - p[0].hypot(p[1])).max(0.0), 0.5).unwrap()
        })
        .unwrap();
        match viscosity_touch_test(&f, &q, [0.0, -r0], 0.5, 0.125, Side::Above).unwrap() {
            TouchOutcome::Fail(w) => {
                assert!(w.extreme_gap >= -1e-9 && w.touch_value <= w.tolerance);
            }
            other => panic!("expected a touch, got {other:?}"),
        }
    }

    #[test]
    fn touch_preconditions() {
        let q = params(1.0);
        let f = profile_field(Grid::square([0.0, 0.0], 1.0, 1.0 / 64.0).unwrap(), &q, [0.0, 1.0], 0.0);
        assert!(viscosity_touch_test(&f, &q, [0.0, 0.0], -0.5, 0.3, Side::Above).is_err());
        assert!(viscosity_touch_test(&f, &q, [0.0, 0.0], 0.5, 0.3, Side::Below).is_err());
        assert!(viscosity_touch_test(&f, &q, [0.0, 0.2], 0.5, 0.3, Side::Above).is_err());
        assert!(viscosity_touch_test(&f, &q, [0.0, 0.0], 0.5, 1.5, Side::Above).is_err());
    }

    #[test]
    fn csv_outputs() {
        let q = params(1.0);
        let f = profile_field(Grid::square([0.0, 0.0], 1.0, 1.0 / 16.0).unwrap(), &q, [0.0, 1.0], 0.0);
        let fb = extract_interface(&f, 0.0).unwrap();
        let mut buf = Vec::new();
        fb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + fb.vertices().count());
        let c = flatness_certificate(&f, [0.0, 0.0], 0.5, &q, FlatnessMode::WLinear).unwrap();
        let mut buf = Vec::new();
        write_flatness_csv(&[c], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().trim_end().ends_with("w-linear"));
    }
}
