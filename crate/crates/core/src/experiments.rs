//! Experiments: monotonicity traces, compactness sweeps in `gamma`,
//! flatness decay, Harnack dichotomy and profile trapping.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{clipped_length, level_segments, smooth_indicator};
use crate::error::{domain, Error, Result};
use crate::exponents::{GammaParams, Hodograph};
use crate::field::{BoundarySpec, Grid, ScalarField};
use crate::free_boundary::{extract_interface, flatness_certificate, FlatnessCertificate, FlatnessMode};
use crate::solver::{energy_ac, energy_ap, minimize, radial_exterior, EnergyReport, Objective, SolverConfig};

/// Subsamples per cell axis for the area of a cell inside a ball.
const AREA_SUBSAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityTrace {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    pub phi: Vec<f64>,
    pub dirichlet: Vec<f64>,
    pub perimeter: Vec<f64>,
    pub boundary_term: Vec<f64>,
    pub description: String,
}

impl MonotonicityTrace {
    /// Largest drop `Phi(r_k) - Phi(r_{k+1})` relative to `|Phi(r_k)|`.
    pub fn worst_relative_drop(&self) -> f64 {
        self.phi.windows(2).map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_nondecreasing(&self, rel_tol: f64) -> bool {
        self.phi.windows(2).all(|w| w[1] >= w[0] - rel_tol * w[0].abs())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# {}", self.description)?;
        writeln!(out, "# center = ({:.16e}, {:.16e})", self.center[0], self.center[1])?;
        writeln!(out, "# phi = r^(1-n) (dirichlet + perimeter) - r^(-n)/2 * boundary_term")?;
        writeln!(out, "r,phi,dirichlet,perimeter,boundary_term")?;
        for k in 0..self.radii.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.radii[k], self.phi[k], self.dirichlet[k], self.perimeter[k], self.boundary_term[k]
            )?;
        }
        Ok(())
    }
}

/// Fraction of cell `(i, j)` inside the closed disk, by midpoint subsampling.
fn cell_fraction(g: &Grid, i: usize, j: usize, c: [f64; 2], r: f64) -> f64 {
    let h = g.h();
    let (x0, y0) = (g.x(i), g.y(j));
    let corners_in = [(0.0, 0.0), (h, 0.0), (0.0, h), (h, h)]
        .iter()
        .filter(|(dx, dy)| (x0 + dx - c[0]).hypot(y0 + dy - c[1]) <= r)
        .count();
    let far = (x0 + 0.5 * h - c[0]).hypot(y0 + 0.5 * h - c[1]);
    if corners_in == 4 {
        return 1.0;
    }
    if corners_in == 0 && far > r + h {
        return 0.0;
    }
    let m = AREA_SUBSAMPLES;
    let mut inside = 0;
    for a in 0..m {
        for b in 0..m {
            let x = x0 + (a as f64 + 0.5) * h / m as f64;
            let y = y0 + (b as f64 + 0.5) * h / m as f64;
            if (x - c[0]).hypot(y - c[1]) <= r {
                inside += 1;
            }
        }
    }
    inside as f64 / (m * m) as f64
}

/// `int_{B_r} |grad u|^2` with the edge-averaged P1 cell energy.
fn dirichlet_in_ball(field: &ScalarField, c: [f64; 2], r: f64) -> f64 {
    let g = field.grid();
    let mut e = 0.0;
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() - 1 {
            let f = cell_fraction(g, i, j, c, r);
            if f == 0.0 {
                continue;
            }
            let (a, b, cc, d) = (field.at(i, j), field.at(i + 1, j), field.at(i + 1, j + 1), field.at(i, j + 1));
            let cell = 0.5 * ((b - a).powi(2) + (cc - d).powi(2) + (d - a).powi(2) + (cc - b).powi(2));
            e += f * cell;
        }
    }
    e
}

/// `int_{partial B_r} u^2` by equally spaced arc samples.
fn boundary_square_integral(field: &ScalarField, c: [f64; 2], r: f64) -> Result<f64> {
    let h = field.grid().h();
    let m = ((8.0 * std::f64::consts::TAU * r / h).ceil() as usize).max(256);
    let mut s = 0.0;
    for k in 0..m {
        let th = std::f64::consts::TAU * k as f64 / m as f64;
        let v = field.sample([c[0] + r * th.cos(), c[1] + r * th.sin()])?;
        s += v * v;
    }
    Ok(s * std::f64::consts::TAU * r / m as f64)
}

/// The monotonicity quantity
/// `Phi(r) = r^(1-n) (int_{B_r} |grad u|^2 + P(E; B_r)) - r^(-n)/2 int_{dB_r} u^2`
/// for a 2D field and zero set `E` (`zero_set[k]` marks nodes of `E`).
pub fn monotonicity_trace(
    field: &ScalarField,
    zero_set: &[bool],
    center: [f64; 2],
    radii: &[f64],
) -> Result<MonotonicityTrace> {
    let g = field.grid();
    if g.dim() != 2 {
        return domain("monotonicity traces need a 2D field");
    }
    if zero_set.len() != g.len() {
        return domain("zero set and field sizes differ");
    }
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return domain("radii must be positive and strictly increasing");
    }
    for &r in radii {
        if !g.contains_ball(center, r) {
            return domain(format!("ball of radius {r} leaves the grid"));
        }
    }
    if let Some(k) = (0..g.len()).find(|&k| zero_set[k] && field.values()[k] != 0.0) {
        return Err(Error::Consistency(format!("field is nonzero at zero-set node {k}")));
    }
    let segs = level_segments(g, &smooth_indicator(g, zero_set), 0.5);
    let n = 2.0;
    let mut t = MonotonicityTrace {
        center,
        radii: radii.to_vec(),
        phi: Vec::new(),
        dirichlet: Vec::new(),
        perimeter: Vec::new(),
        boundary_term: Vec::new(),
        description: String::new(),
    };
    for &r in radii {
        let d = dirichlet_in_ball(field, center, r);
        let p: f64 = segs.iter().map(|s| clipped_length(s, center, r)).sum();
        let b = boundary_square_integral(field, center, r)?;
        t.phi.push(r.powf(1.0 - n) * (d + p) - 0.5 * r.powf(-n) * b);
        t.dirichlet.push(d);
        t.perimeter.push(p);
        t.boundary_term.push(b);
    }
    Ok(t)
}

/// Reduced geometries with semi-analytic references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepGeometry {
    /// `[0, 1]` with `u(0) = left`, `u(1) = right`.
    OneD { left: f64, right: f64, cells: usize },
    /// Exterior radial problem, `u = 1` on the unit sphere in dimension `n`.
    Radial { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub gamma: f64,
    pub energy: Option<EnergyReport>,
    /// `|E_gamma - reference|`.
    pub gap: f64,
    pub l2_distance: Option<f64>,
    /// Hausdorff distance between computed and reference interfaces.
    pub hausdorff: Option<f64>,
    pub free_boundary_radius: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub t: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: String,
    pub geometry: SweepGeometry,
    pub gammas: Vec<f64>,
    pub entries: Vec<SweepEntry>,
    pub reference_value: f64,
    pub reference_provenance: String,
    /// Energies of truncations `(u_ref - t)^+` (gamma -> 0 only).
    pub truncation: Vec<TruncationRow>,
    /// Energy of the reference in the limit functional.
    pub truncation_target: Option<f64>,
    /// Named informational series aligned with `entries`.
    pub extra: BTreeMap<String, Vec<f64>>,
    /// First failure, if the sweep stopped early.
    pub failure: Option<String>,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl SweepReport {
    pub fn gaps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.gap).collect()
    }

    pub fn gaps_decreasing(&self) -> bool {
        self.failure.is_none() && strictly_decreasing(&self.gaps())
    }

    pub fn l2_decreasing(&self) -> bool {
        let l2: Option<Vec<f64>> = self.entries.iter().map(|e| e.l2_distance).collect();
        self.failure.is_none() && l2.is_some_and(|v| strictly_decreasing(&v))
    }

    pub fn write_energies_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# {} sweep; reference {} ({})", self.kind, self.reference_value, self.reference_provenance)?;
        writeln!(out, "# empty cells: quantity not defined for this geometry")?;
        writeln!(out, "gamma,dirichlet,potential,total,gap,l2_distance,hausdorff,free_boundary_radius,iterations")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        for e in &self.entries {
            writeln!(
                out,
                "{:.16e},{},{},{},{:.16e},{},{},{},{}",
                e.gamma,
                opt(e.energy.map(|r| r.dirichlet)),
                opt(e.energy.map(|r| r.potential)),
                opt(e.energy.map(|r| r.total)),
                e.gap,
                opt(e.l2_distance),
                opt(e.hausdorff),
                opt(e.free_boundary_radius),
                e.iterations
            )?;
        }
        Ok(())
    }
}

/// Hausdorff distance between the vertex sets of two interfaces.
fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> Option<f64> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Some(0.0),
        (true, false) | (false, true) => return None,
        _ => {}
    }
    let one_sided = |p: &[[f64; 2]], q: &[[f64; 2]]| {
        p.iter()
            .map(|x| q.iter().map(|y| (x[0] - y[0]).hypot(x[1] - y[1])).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Some(one_sided(a, b).max(one_sided(b, a)))
}

fn interface_points(field: &ScalarField, tau: f64) -> Result<Vec<[f64; 2]>> {
    Ok(extract_interface(field, tau)?.vertices().collect())
}

fn one_d(geometry: SweepGeometry) -> Result<(f64, f64, Grid)> {
    match geometry {
        SweepGeometry::OneD { left, right, cells } => {
            if !(left >= 0.0 && right >= 0.0 && left.is_finite() && right.is_finite()) {
                return domain("boundary data must be finite and nonnegative");
            }
            Ok((left, right, Grid::new_1d(0.0, 1.0, cells)?))
        }
        SweepGeometry::Radial { .. } => domain("this sweep needs the 1D geometry"),
    }
}

/// Per-gamma solver settings: `config` when given, else grid defaults.
fn solver_config(config: Option<&SolverConfig>, params: &GammaParams, h: f64) -> SolverConfig {
    config.cloned().unwrap_or_else(|| SolverConfig::for_ap(params, h))
}

/// Keep entries up to the first failure, in gamma order.
fn collect_entries(results: Vec<Result<SweepEntry>>) -> (Vec<SweepEntry>, Option<String>) {
    let mut entries = Vec::new();
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => return (entries, Some(e.to_string())),
        }
    }
    (entries, None)
}

/// Rescaled energies as `gamma -> 2` against the Dirichlet-perimeter limit.
///
/// 1D: the limit minimizer with these data is the linear interpolant with an
/// empty zero set, of energy `(right - left)^2`. Radial: the free boundary
/// radius `1 + mu(gamma)` against the limit radius 1.
pub fn gamma_to_2_sweep(geometry: SweepGeometry, gammas: &[f64], config: Option<&SolverConfig>) -> Result<SweepReport> {
    if gammas.is_empty() || gammas.iter().any(|&g| !(g > 1.0 && g < 2.0)) || gammas.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("gammas must be increasing inside (1, 2)");
    }
    let mut report = SweepReport {
        kind: "gamma_to_2".into(),
        geometry,
        gammas: gammas.to_vec(),
        entries: Vec::new(),
        reference_value: 0.0,
        reference_provenance: String::new(),
        truncation: Vec::new(),
        truncation_target: None,
        extra: BTreeMap::new(),
        failure: None,
    };
    match geometry {
        SweepGeometry::Radial { n } => {
            report.reference_value = 1.0;
            report.reference_provenance = "limit free boundary radius: mu -> 0 as gamma -> 2".into();
            let results: Vec<Result<SweepEntry>> = gammas
                .par_iter()
                .map(|&g| {
                    let sol = radial_exterior(&GammaParams::new(g)?, n, 1e-12)?;
                    Ok(SweepEntry {
                        gamma: g,
                        energy: None,
                        gap: sol.mu,
                        l2_distance: None,
                        hausdorff: None,
                        free_boundary_radius: Some(sol.free_boundary_radius()),
                        iterations: 0,
                    })
                })
                .collect();
            (report.entries, report.failure) = collect_entries(results);
        }
        SweepGeometry::OneD { .. } => {
            let (left, right, grid) = one_d(geometry)?;
            let f_ref = (right - left).powi(2);
            report.reference_value = f_ref;
            report.reference_provenance =
                "1D Dirichlet-perimeter minimizer: linear interpolant, empty zero set, energy (right-left)^2".into();
            let reference = ScalarField::from_fn(grid.clone(), |p| left + (right - left) * p[0])?;
            let boundary = BoundarySpec::interval(left, right);
            let results: Vec<Result<SweepEntry>> = gammas
                .par_iter()
                .map(|&g| {
                    let params = GammaParams::new(g)?;
                    let cfg = solver_config(config, &params, grid.h());
                    let out = minimize(&grid, &boundary, Objective::Ap { params, rescaled: true }, &cfg)?;
                    Ok(SweepEntry {
                        gamma: g,
                        energy: Some(out.energy),
                        gap: (out.energy.total - f_ref).abs(),
                        l2_distance: Some(out.field.l2_diff(&reference)),
                        hausdorff: hausdorff(
                            &interface_points(&out.field, cfg.tau)?,
                            &interface_points(&reference, cfg.tau)?,
                        ),
                        free_boundary_radius: None,
                        iterations: out.iterations,
                    })
                })
                .collect();
            (report.entries, report.failure) = collect_entries(results);
            // a zero endpoint value next to a positive phase keeps a boundary
            // layer whose rescaled cost tends to one unit of perimeter
            let layers = [(left, right), (right, left)].iter().filter(|(a, b)| *a == 0.0 && *b > 0.0).count() as f64;
            let layer_value = f_ref + layers;
            report.extra.insert("boundary_layer_value".into(), vec![layer_value; report.entries.len()]);
            report.extra.insert(
                "gap_to_boundary_layer_value".into(),
                report.entries.iter().map(|e| (e.energy.map_or(f64::NAN, |r| r.total) - layer_value).abs()).collect(),
            );
        }
    }
    Ok(report)
}

/// Analytic minimizer of `int |u'|^2 + |{u > 0}|` on `[0, 1]`: energy and
/// profile. Ramps of slope 1 reach zero when both data fit, else linear.
pub fn e0_reference_1d(left: f64, right: f64) -> (f64, Arc<dyn Fn(f64) -> f64 + Send + Sync>) {
    if left == 0.0 && right == 0.0 {
        return (0.0, Arc::new(|_| 0.0));
    }
    let linear_energy = (right - left).powi(2) + 1.0;
    let linear: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(move |x| left + (right - left) * x);
    // one-sided ramp when the other end is zero
    if right == 0.0 || left == 0.0 {
        let (l, flip) = if right == 0.0 { (left, false) } else { (right, true) };
        let a = l.min(1.0);
        let e = l * l / a + a;
        let ramp = move |x: f64| {
            let y = if flip { 1.0 - x } else { x };
            (l * (1.0 - y / a)).max(0.0)
        };
        return (e, Arc::new(ramp));
    }
    if left + right <= 1.0 {
        let e = 2.0 * (left + right);
        if e < linear_energy {
            return (e, Arc::new(move |x| (left - x).max(0.0) + (right - (1.0 - x)).max(0.0)));
        }
    }
    (linear_energy, linear)
}

/// Unrescaled energies as `gamma -> 0` against the characteristic potential.
pub fn gamma_to_0_sweep(geometry: SweepGeometry, gammas: &[f64], config: Option<&SolverConfig>) -> Result<SweepReport> {
    if gammas.is_empty() || gammas.iter().any(|&g| !(g > 0.0 && g < 0.5)) || gammas.windows(2).any(|w| !(w[1] < w[0])) {
        return domain("gammas must be decreasing inside (0, 0.5)");
    }
    let (left, right, grid) = one_d(geometry)?;
    let (e0, profile) = e0_reference_1d(left, right);
    let reference = ScalarField::from_fn(grid.clone(), |p| profile(p[0]))?;
    let boundary = BoundarySpec::interval(left, right);
    let ac_cfg = SolverConfig::for_ac(grid.h());
    let ac = minimize(&grid, &boundary, Objective::Ac, &ac_cfg)?;
    let mut report = SweepReport {
        kind: "gamma_to_0".into(),
        geometry,
        gammas: gammas.to_vec(),
        entries: Vec::new(),
        reference_value: e0,
        reference_provenance: "1D minimizer of int |u'|^2 + |{u > 0}|: slope-one ramps or the linear interpolant"
            .into(),
        truncation: Vec::new(),
        truncation_target: None,
        extra: BTreeMap::new(),
        failure: None,
    };
    let results: Vec<Result<SweepEntry>> = gammas
        .par_iter()
        .map(|&g| {
            let params = GammaParams::new(g)?;
            let cfg = solver_config(config, &params, grid.h());
            let out = minimize(&grid, &boundary, Objective::Ap { params, rescaled: false }, &cfg)?;
            Ok(SweepEntry {
                gamma: g,
                energy: Some(out.energy),
                gap: (out.energy.total - e0).abs(),
                l2_distance: Some(out.field.l2_diff(&reference)),
                hausdorff: hausdorff(&interface_points(&out.field, cfg.tau)?, &interface_points(&reference, cfg.tau)?),
                free_boundary_radius: None,
                iterations: out.iterations,
            })
        })
        .collect();
    (report.entries, report.failure) = collect_entries(results);
    report.extra.insert("ac_minimizer_energy".into(), vec![ac.energy.total; report.entries.len()]);
    report
        .extra
        .insert("ac_minimizer_l2_to_reference".into(), vec![ac.field.l2_diff(&reference); report.entries.len()]);
    // truncations of the reference at the smallest gamma
    let params = GammaParams::new(*gammas.last().unwrap_or(&gammas[0]))?;
    report.truncation_target = Some(energy_ac(&reference, ac_cfg.tau)?.total);
    for t in [0.1, 0.05, 0.02, 0.01] {
        let cut = reference.map(|v| (v - t).max(0.0))?;
        report.truncation.push(TruncationRow { t, energy: energy_ap(&cut, &params, false)?.total });
    }
    Ok(report)
}

/// Flatness above which the decay run is out of its regime.
pub const DECAY_REGIME: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub radius_prev: f64,
    pub radius_next: f64,
    pub eps_prev: f64,
    pub eps_next: f64,
    /// `eps_next / eps_prev`; zero when `eps_prev` vanishes.
    pub ratio: f64,
    /// `4 h / (eps_prev radius_next)`, the discretization allowance.
    pub slack: f64,
    /// Both flatness values below the resolution `2 h / radius`.
    pub floor_dominated: bool,
    /// `ratio > 0.5 + slack`.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecayOutcome {
    NotInRegime { base: FlatnessCertificate },
    Measured { certificates: Vec<FlatnessCertificate>, rows: Vec<DecayRow> },
}

impl DecayOutcome {
    /// Every ratio within `0.5 + slack` (false out of regime).
    pub fn all_within(&self) -> bool {
        match self {
            Self::NotInRegime { .. } => false,
            Self::Measured { rows, .. } => rows.iter().all(|r| !r.flagged),
        }
    }

    /// Certificates computed, base radius first.
    pub fn certificates(&self) -> &[FlatnessCertificate] {
        match self {
            Self::NotInRegime { base } => std::slice::from_ref(base),
            Self::Measured { certificates, .. } => certificates,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# ratio = eps_next / eps_prev; flagged when ratio > 0.5 + slack, slack = 4 h / (eps_prev radius_next)"
        )?;
        writeln!(out, "radius_prev,radius_next,eps_prev,eps_next,ratio,slack,floor_dominated,flagged")?;
        if let Self::Measured { rows, .. } = self {
            for r in rows {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                    r.radius_prev,
                    r.radius_next,
                    r.eps_prev,
                    r.eps_next,
                    r.ratio,
                    r.slack,
                    u8::from(r.floor_dominated),
                    u8::from(r.flagged)
                )?;
            }
        }
        Ok(())
    }
}

/// Flatness at `base_radius * rho^k`, `k = 0..=levels`, with successive
/// contraction ratios.
pub fn flatness_decay_run(
    field: &ScalarField,
    params: &GammaParams,
    center: [f64; 2],
    base_radius: f64,
    rho: f64,
    levels: usize,
) -> Result<DecayOutcome> {
    if !(rho > 0.0 && rho < 1.0) || levels == 0 {
        return domain("rho must lie in (0, 1) with at least one level");
    }
    let h = field.grid().h();
    let base = flatness_certificate(field, center, base_radius, params, FlatnessMode::UProfile)?;
    if base.epsilon > DECAY_REGIME {
        return Ok(DecayOutcome::NotInRegime { base });
    }
    let mut certs = vec![base];
    let mut rows = Vec::new();
    for k in 1..=levels {
        let r = base_radius * rho.powi(k as i32);
        let next = flatness_certificate(field, center, r, params, FlatnessMode::UProfile)?;
        let prev = &certs[k - 1];
        let (ep, en) = (prev.epsilon, next.epsilon);
        let ratio = if ep > 0.0 { en / ep } else { 0.0 };
        let slack = if ep > 0.0 { 4.0 * h / (ep * r) } else { f64::INFINITY };
        let floor_dominated = ep <= 2.0 * h / prev.radius && en <= 2.0 * h / r;
        rows.push(DecayRow {
            radius_prev: prev.radius,
            radius_next: r,
            eps_prev: ep,
            eps_next: en,
            ratio,
            slack,
            floor_dominated,
            flagged: ratio > 0.5 + slack,
        });
        certs.push(next);
    }
    Ok(DecayOutcome::Measured { certificates: certs, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub x0: [f64; 2],
    pub r: f64,
    pub a: f64,
    /// Precondition `x_n^+ <= w <= (x_n + a)^+` on `B_r(x0)`.
    pub trapped: bool,
    /// Largest violation of the trap (0 when trapped).
    pub trap_violation: f64,
    /// Largest `c` with `(x_n + c a)^+ <= w` on `B_{r/2}(x0)`.
    pub c_plus: f64,
    /// Largest `c` with `w <= (x_n + (1 - c) a)^+` on `B_{r/2}(x0)`.
    pub c_minus: f64,
    pub best: f64,
}

/// Improvement constants of a `w` trapped in the slab of width `a`;
/// `x_n = (x - x0)_last`, the last coordinate relative to `x0`.
pub fn harnack_dichotomy_check(w: &ScalarField, x0: [f64; 2], r: f64, a: f64) -> Result<HarnackReport> {
    let g = w.grid();
    if !(a > 0.0 && r > 0.0) {
        return domain("strip width and radius must be positive");
    }
    if !g.contains_ball(x0, r) {
        return domain(format!("ball of radius {r} leaves the grid"));
    }
    let axis = g.dim() - 1;
    let xn = |k: usize| g.point(k)[axis] - x0[axis];
    let scale = w.max_abs().max(a);
    let mut violation = 0.0f64;
    for k in g.nodes_in_ball(x0, r) {
        let v = w.values()[k];
        let t = xn(k);
        violation = violation.max(t.max(0.0) - v).max(v - (t + a).max(0.0));
    }
    let trapped = violation <= 1e-12 * scale;
    let (mut c_plus, mut c_minus) = (1.0f64, 1.0f64);
    for k in g.nodes_in_ball(x0, 0.5 * r) {
        let (v, t) = (w.values()[k], xn(k));
        c_plus = c_plus.min((v - t) / a);
        if v > 0.0 {
            c_minus = c_minus.min(1.0 - (v - t) / a);
        }
    }
    let (c_plus, c_minus) = (c_plus.clamp(0.0, 1.0), c_minus.clamp(0.0, 1.0));
    Ok(HarnackReport {
        x0,
        r,
        a,
        trapped,
        trap_violation: violation.max(0.0),
        c_plus,
        c_minus,
        best: c_plus.max(c_minus),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTrap {
    /// `(1 - min u/u0(d))^+`.
    pub c_lower: f64,
    /// `(max u/u0(d) - 1)^+`.
    pub c_upper: f64,
    pub eps_flat: f64,
    /// `max(c_lower, c_upper) / eps_flat`.
    pub c: f64,
    pub samples: usize,
}

/// Two-sided trap `(1 - C eps) u0(d) <= u <= (1 + C eps) u0(d)` on
/// `{u > tau, d > 2h}`, `d` the distance to the extracted interface.
/// Only nodes whose nearest interface point is at least `2h` from the grid
/// boundary are used, so truncated interfaces do not distort `d`.
pub fn profile_trap_check(u: &ScalarField, params: &GammaParams, eps_flat: f64, tau: f64) -> Result<ProfileTrap> {
    if !(eps_flat > 0.0) {
        return domain("eps_flat must be positive");
    }
    let fb = extract_interface(u, tau)?;
    if fb.is_empty() {
        return domain("field has no interface");
    }
    let g = u.grid();
    let h = g.h();
    let segs = fb.segments();
    let verts: Vec<[f64; 2]> = fb.vertices().collect();
    let interior =
        |p: [f64; 2]| (0..g.dim()).all(|a| p[a] > g.extents()[a][0] + 2.0 * h && p[a] < g.extents()[a][1] - 2.0 * h);
    let ratios: Vec<Option<f64>> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            let v = u.values()[k];
            if v <= tau {
                return None;
            }
            let p = g.point(k);
            let mut best = (f64::INFINITY, p);
            for q in &verts {
                let d = (p[0] - q[0]).hypot(p[1] - q[1]);
                if d < best.0 {
                    best = (d, *q);
                }
            }
            for s in &segs {
                let (d, q) = closest_on_segment(p, s[0], s[1]);
                if d < best.0 {
                    best = (d, q);
                }
            }
            (best.0 > 2.0 * h && interior(best.1)).then(|| v / params.u0(best.0))
        })
        .collect();
    let ratios: Vec<f64> = ratios.into_iter().flatten().collect();
    if ratios.is_empty() {
        return domain("no nodes farther than 2h from the interface");
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (c_lower, c_upper) = ((1.0 - lo).max(0.0), (hi - 1.0).max(0.0));
    Ok(ProfileTrap { c_lower, c_upper, eps_flat, c: c_lower.max(c_upper) / eps_flat, samples: ratios.len() })
}

fn closest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, [f64; 2]) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    ((p[0] - q[0]).hypot(p[1] - q[1]), q)
}

/// Embed `u(x) = lambda^alpha u_rad(|x - z| / lambda)` on `grid`; inside
/// the computed range the innermost value is continued.
pub fn embed_radial(
    grid: Grid,
    sol: &crate::solver::RadialSolution,
    center: [f64; 2],
    lambda: f64,
) -> Result<ScalarField> {
    let k = lambda.powf(sol.params.alpha);
    let r_min = sol.r[0];
    let values = (0..grid.len())
        .map(|i| {
            let p = grid.point(i);
            let r = ((p[0] - center[0]).hypot(p[1] - center[1]) / lambda).max(r_min);
            sol.value(r).map(|v| k * v)
        })
        .collect::<Result<Vec<f64>>>()?;
    ScalarField::new(grid, values)
}

/// Hodograph variable of a nonnegative field.
pub fn hodograph_field(u: &ScalarField, params: &GammaParams) -> Result<ScalarField> {
    let values = u.values().iter().map(|&v| params.hodograph(v, Hodograph::Forward)).collect::<Result<Vec<f64>>>()?;
    ScalarField::new(u.grid().clone(), values)
}

/// Smallest slab around `w` on `B_r(center)`: shifts `center` along the last
/// axis by `delta = max (x_n - w)^+` so `x_n^+ <= w`, then takes
/// `a = max (w - x_n)` over `{w > 0}`. Returns the shifted center and `a`.
pub fn fit_harnack_strip(w: &ScalarField, center: [f64; 2], r: f64) -> Result<([f64; 2], f64)> {
    let g = w.grid();
    if !g.contains_ball(center, r) {
        return domain(format!("ball of radius {r} leaves the grid"));
    }
    let axis = g.dim() - 1;
    let nodes = g.nodes_in_ball(center, r);
    let delta = nodes.iter().map(|&k| (g.point(k)[axis] - center[axis] - w.values()[k]).max(0.0)).fold(0.0, f64::max);
    let mut x0 = center;
    x0[axis] += delta;
    let a = nodes
        .iter()
        .filter(|&&k| w.values()[k] > 0.0)
        .map(|&k| w.values()[k] - (g.point(k)[axis] - x0[axis]))
        .fold(0.0, f64::max);
    Ok((x0, a))
}

/// A minimizer near a curved free boundary: the radial solution blown up
/// by `lambda` (times `c_gamma^(alpha/2)` when `rescaled`, which maps
/// unrescaled to rescaled minimizers), used as Dirichlet data and initial
/// guess on the square of half width `half` centred at the free boundary
/// point `(lambda (1 + mu), 0)`, then relaxed by the descent. Returns the
/// field and the point of its computed interface nearest to that point.
pub fn radial_minimizer_pair(
    params: &GammaParams,
    lambda: f64,
    half: f64,
    h: f64,
    rescaled: bool,
    config: Option<&SolverConfig>,
) -> Result<(ScalarField, [f64; 2])> {
    let fb = radial_fb_radius(params, lambda)?;
    let r_min = ((fb - 2.0 * half) / lambda).clamp(1e-3, 1.0);
    let sol = crate::solver::radial_exterior_to(params, 2, 1e-10, r_min)?;
    let center = [lambda * sol.free_boundary_radius(), 0.0];
    let k = if rescaled { params.c_gamma.powf(0.5 * params.alpha) } else { 1.0 };
    let embedded = embed_radial(Grid::square(center, half, h)?, &sol, [0.0, 0.0], lambda)?.map(|v| k * v)?;
    let data = embedded.clone();
    let trace: crate::field::Trace = Arc::new(move |p| data.sample(p).unwrap_or(0.0));
    let boundary = BoundarySpec::dirichlet_all(2, trace);
    let cfg = solver_config(config, params, h);
    let out = crate::solver::minimize_from(&embedded, &boundary, Objective::Ap { params: *params, rescaled }, &cfg)?;
    let fb_point = extract_interface(&out.field, 0.0)?
        .vertices()
        .min_by(|a, b| {
            let d = |p: &[f64; 2]| (p[0] - center[0]).hypot(p[1] - center[1]);
            d(a).total_cmp(&d(b))
        })
        .ok_or_else(|| Error::Consistency("relaxed field has no interface".into()))?;
    Ok((out.field, fb_point))
}

fn radial_fb_radius(params: &GammaParams, lambda: f64) -> Result<f64> {
    Ok(lambda * radial_exterior(params, 2, 1e-10)?.free_boundary_radius())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::radial_exterior_to;

    fn square(h: f64) -> Grid {
        Grid::square([0.0, 0.0], 1.0, h).unwrap()
    }

    fn profile_field(params: &GammaParams, h: f64, scale: f64) -> ScalarField {
        ScalarField::from_fn(square(h), |p| scale * params.u0(p[1].max(0.0))).unwrap()
    }

    #[test]
    fn half_plane_cone_has_constant_phi() {
        let g = square(1.0 / 128.0);
        let u = ScalarField::zeros(g.clone());
        let zero: Vec<bool> = (0..g.len()).map(|k| g.point(k)[1] <= 0.0).collect();
        let radii = [0.2, 0.4, 0.6, 0.8];
        let t = monotonicity_trace(&u, &zero, [0.0, 0.0], &radii).unwrap();
        for phi in &t.phi {
            assert!((phi / 2.0 - 1.0).abs() < 0.02, "{phi}");
        }
    }

    #[test]
    fn constant_field_phi_matches_closed_form() {
        let g = square(1.0 / 128.0);
        let c = 0.7;
        let u = ScalarField::from_fn(g.clone(), |_| c).unwrap();
        let radii = [0.2, 0.4, 0.6, 0.8];
        let t = monotonicity_trace(&u, &vec![false; g.len()], [0.0, 0.0], &radii).unwrap();
        for (r, phi) in radii.iter().zip(&t.phi) {
            let exact = -std::f64::consts::PI * c * c / r;
            assert!((phi / exact - 1.0).abs() < 0.02);
        }
        assert!(t.is_nondecreasing(0.0));
        assert!(t.worst_relative_drop() < 0.0);
    }

    #[test]
    fn monotonicity_rejects_bad_input() {
        let g = square(1.0 / 16.0);
        let u = ScalarField::from_fn(g.clone(), |_| 1.0).unwrap();
        let none = vec![false; g.len()];
        assert!(monotonicity_trace(&u, &none, [0.0, 0.0], &[0.5, 1.5]).is_err());
        assert!(monotonicity_trace(&u, &none, [0.0, 0.0], &[0.5, 0.4]).is_err());
        assert!(monotonicity_trace(&u, &vec![true; g.len()], [0.0, 0.0], &[0.5]).is_err());
    }

    #[test]
    fn e0_reference_values() {
        let (e, f) = e0_reference_1d(2.0, 0.0);
        assert!((e - 5.0).abs() < 1e-12);
        assert!((f(0.25) - 1.5).abs() < 1e-12);
        let (e, _) = e0_reference_1d(0.0, 0.0);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn sweeps_validate_gammas() {
        let geo = SweepGeometry::OneD { left: 1.0, right: 0.0, cells: 16 };
        assert!(gamma_to_2_sweep(geo, &[1.8, 1.5], None).is_err());
        assert!(gamma_to_2_sweep(geo, &[0.5], None).is_err());
        assert!(gamma_to_0_sweep(geo, &[0.1, 0.2], None).is_err());
        assert!(gamma_to_0_sweep(geo, &[0.6], None).is_err());
    }

    #[test]
    fn zero_data_sweep_is_exact() {
        let geo = SweepGeometry::OneD { left: 0.0, right: 0.0, cells: 32 };
        let rep = gamma_to_0_sweep(geo, &[0.4, 0.2], None).unwrap();
        assert!(rep.failure.is_none());
        for e in &rep.entries {
            assert_eq!(e.l2_distance, Some(0.0));
            assert_eq!(e.gap, 0.0);
        }
    }

    #[test]
    fn exact_profile_decay_is_floor_dominated() {
        let q = GammaParams::new(1.0).unwrap();
        let u = profile_field(&q, 1.0 / 128.0, 1.0);
        let out = flatness_decay_run(&u, &q, [0.0, 0.0], 0.8, 0.25, 2).unwrap();
        let DecayOutcome::Measured { rows, .. } = &out else { panic!("{out:?}") };
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.floor_dominated && !r.flagged));
        let mut csv = Vec::new();
        out.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn tilted_field_is_not_in_regime() {
        let q = GammaParams::new(1.0).unwrap();
        let u =
            ScalarField::from_fn(square(1.0 / 64.0), |p| q.u0(p[1].max(0.0)) * (1.0 + 0.8 * p[0]).max(0.0)).unwrap();
        let out = flatness_decay_run(&u, &q, [0.0, 0.0], 0.8, 0.25, 2).unwrap();
        assert!(matches!(out, DecayOutcome::NotInRegime { .. }), "{out:?}");
        assert!(!out.all_within());
    }

    #[test]
    fn radial_decay_ratios_track_zoom_factor() {
        let q = GammaParams::new(0.5).unwrap();
        let sol = radial_exterior_to(&q, 2, 1e-10, 0.5).unwrap();
        let lambda = 8.0;
        let big_r = lambda * sol.free_boundary_radius();
        let grid = Grid::square([big_r, 0.0], 0.45, 1.0 / 256.0).unwrap();
        let u = embed_radial(grid, &sol, [0.0, 0.0], lambda).unwrap();
        let out = flatness_decay_run(&u, &q, [big_r, 0.0], 0.4, 0.25, 2).unwrap();
        assert!(out.all_within(), "{out:?}");
        let DecayOutcome::Measured { rows, .. } = &out else { unreachable!() };
        assert!(rows[0].ratio < 0.5 && !rows[0].floor_dominated);
    }

    fn slab(a_frac: f64, h: f64) -> (ScalarField, f64) {
        let a = 0.2;
        let w = ScalarField::from_fn(square(h), |p| (p[1] + a_frac * a).max(0.0)).unwrap();
        (w, a)
    }

    #[test]
    fn harnack_trivial_branches() {
        let (w, a) = slab(0.5, 1.0 / 64.0);
        let rep = harnack_dichotomy_check(&w, [0.0, 0.0], 0.8, a).unwrap();
        assert!(rep.trapped);
        assert!((rep.c_plus - 0.5).abs() < 1e-12 && (rep.c_minus - 0.5).abs() < 1e-12);
        let (w, a) = slab(0.0, 1.0 / 64.0);
        let rep = harnack_dichotomy_check(&w, [0.0, 0.0], 0.8, a).unwrap();
        assert_eq!(rep.c_minus, 1.0);
        assert_eq!(rep.best, 1.0);
        let (w, a) = slab(2.0, 1.0 / 64.0);
        let rep = harnack_dichotomy_check(&w, [0.0, 0.0], 0.8, a).unwrap();
        assert!(!rep.trapped && rep.trap_violation > 0.1);
    }

    #[test]
    fn radial_hodograph_strip_has_positive_constant() {
        let q = GammaParams::new(1.5).unwrap();
        let sol = radial_exterior_to(&q, 2, 1e-10, 0.5).unwrap();
        let lambda = 8.0;
        let big_r = lambda * sol.free_boundary_radius();
        let grid = Grid::square([0.0, 0.0], 0.3, 1.0 / 256.0).unwrap();
        let u = embed_radial(grid, &sol, [0.0, big_r], lambda).unwrap();
        let w = hodograph_field(&u, &q).unwrap();
        let (x0, a) = fit_harnack_strip(&w, [0.0, 0.0], 0.2).unwrap();
        assert!(a < 0.1);
        let rep = harnack_dichotomy_check(&w, x0, 0.2, a).unwrap();
        assert!(rep.trapped);
        assert!(rep.best >= 0.05, "{rep:?}");
    }

    #[test]
    fn profile_trap_on_exact_and_scaled_profiles() {
        let q = GammaParams::new(1.2).unwrap();
        let h = 1.0 / 64.0;
        let exact = profile_trap_check(&profile_field(&q, h, 1.0), &q, 0.05, 0.0).unwrap();
        assert!(exact.c < 1e-10, "{exact:?}");
        let scaled = profile_trap_check(&profile_field(&q, h, 1.1), &q, 0.05, 0.0).unwrap();
        assert!((scaled.c_upper - 0.1).abs() < 1e-12);
        assert!((scaled.c - 2.0).abs() < 1e-10);
        assert_eq!(scaled.c_lower, 0.0);
        let empty = ScalarField::from_fn(square(h), |_| 1.0).unwrap();
        assert!(profile_trap_check(&empty, &q, 0.05, 0.0).is_err());
    }
}
