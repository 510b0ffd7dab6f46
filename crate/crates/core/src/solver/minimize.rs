//! Projected descent on the regularized energies with continuation in the
//! regularization width.

use serde::{Deserialize, Serialize};

use super::energy::{dirichlet, dirichlet_grad, energy_ac, energy_ap, EnergyReport};
use super::wform::WEnergy;
use crate::error::{Error, Result};
use crate::exponents::{pow_any, pow_pos, GammaParams};
use crate::field::{BoundarySpec, Grid, ScalarField};
use crate::linalg::pcg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Negative-power potential, optionally scaled by `c_gamma`.
    Ap { params: GammaParams, rescaled: bool },
    /// Characteristic-function potential.
    Ac,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Fixed step in the lumped-mass metric.
    Fixed(f64),
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Final (smallest) regularization width, in units of `u`.
    pub delta: f64,
    /// Dead-core threshold applied after the last stage.
    pub tau: f64,
    /// Iteration cap per continuation stage.
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Relative energy decrease over [`STALL_WINDOW`] iterations that ends a stage.
    pub energy_tol: f64,
    /// Regularization widths, strictly decreasing, ending at `delta`.
    pub ladder: Vec<f64>,
}

/// Iterations over which the energy decrease is measured for the stopping test.
pub const STALL_WINDOW: usize = 50;

impl SolverConfig {
    /// Defaults tied to the grid: `delta_min = c_alpha h^alpha`, four
    /// halvings from `8 delta_min`, `tau = c_alpha (h/2)^alpha`.
    pub fn for_ap(params: &GammaParams, h: f64) -> Self {
        let dmin = params.u0(h);
        Self::with_ladder(dmin, params.dead_threshold(h))
    }

    /// Defaults for the characteristic potential: `delta_min = h`, `tau = h/2`.
    pub fn for_ac(h: f64) -> Self {
        Self::with_ladder(h, 0.5 * h)
    }

    fn with_ladder(dmin: f64, tau: f64) -> Self {
        Self {
            delta: dmin,
            tau,
            max_iters: 200_000,
            step_rule: StepRule::Backtracking,
            energy_tol: 1e-10,
            ladder: [8.0, 4.0, 2.0, 1.0].iter().map(|k| k * dmin).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.delta > 0.0 && self.tau > 0.0) {
            return bad(format!("delta = {} and tau = {} must be positive", self.delta, self.tau));
        }
        if self.ladder.is_empty() || self.ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return bad(format!("continuation ladder {:?} must be non-empty and strictly decreasing", self.ladder));
        }
        if self.ladder.last() != Some(&self.delta) {
            return bad("continuation ladder must end at delta".into());
        }
        if self.max_iters == 0 || !(self.energy_tol >= 0.0) {
            return bad("max_iters must be positive and energy_tol non-negative".into());
        }
        if let StepRule::Fixed(t) = self.step_rule {
            if !(t > 0.0) {
                return bad(format!("fixed step {t} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub stage: usize,
    pub delta: f64,
    pub dirichlet: f64,
    pub potential: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct Minimized {
    pub field: ScalarField,
    /// Regularized energy after every accepted step.
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    /// Unregularized energy of the thresholded result.
    pub energy: EnergyReport,
}

/// Carried by [`Error::NotConverged`].
#[derive(Debug, Clone)]
pub struct SolverFailure {
    pub iterations: usize,
    pub last_energy: f64,
    pub last_iterate: ScalarField,
    pub trace: Vec<TraceRow>,
}

/// Smoothstep: 0 at 0, 1 from 1 on, C^2.
#[inline]
fn ramp(r: f64) -> (f64, f64) {
    if r <= 0.0 {
        (0.0, 0.0)
    } else if r >= 1.0 {
        (1.0, 0.0)
    } else {
        let r2 = r * r;
        (r2 * r * (10.0 - 15.0 * r + 6.0 * r2), 30.0 * r2 * (1.0 - r) * (1.0 - r))
    }
}

/// A smooth objective on nodal values with a diagonal metric.
trait Stage {
    /// (gradient-type part, potential part); fills gradient and metric when given.
    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>, metric: Option<&mut [f64]>) -> (f64, f64);
}

/// Characteristic potential in `u`, lumped, with `ramp(u/delta)`.
struct AcStage<'a> {
    grid: &'a Grid,
    mass: &'a [f64],
    delta: f64,
}

impl Stage for AcStage<'_> {
    fn eval(&self, u: &[f64], grad: Option<&mut [f64]>, metric: Option<&mut [f64]>) -> (f64, f64) {
        let d = dirichlet(self.grid, u);
        let p: f64 = u.iter().zip(self.mass).map(|(&x, m)| m * ramp(x / self.delta).0).sum();
        if let Some(g) = grad {
            g.iter_mut().for_each(|x| *x = 0.0);
            dirichlet_grad(self.grid, u, g);
            for k in 0..u.len() {
                g[k] += self.mass[k] * ramp(u[k] / self.delta).1 / self.delta;
            }
        }
        if let Some(m) = metric {
            for (k, slot) in m.iter_mut().enumerate() {
                *slot = dirichlet_diag(self.grid, k);
            }
        }
        (d, p)
    }
}

/// Negative-power potential in the hodograph variable.
struct ApStage<'a> {
    energy: WEnergy<'a>,
    delta_w: f64,
}

impl Stage for ApStage<'_> {
    fn eval(&self, w: &[f64], grad: Option<&mut [f64]>, metric: Option<&mut [f64]>) -> (f64, f64) {
        self.energy.eval(self.delta_w, w, grad, metric)
    }
}

fn lumped_mass(grid: &Grid) -> Vec<f64> {
    let h = grid.h();
    (0..grid.len())
        .map(|k| {
            let (i, j) = grid.ij(k);
            let mut m = h;
            if i == 0 || i + 1 == grid.nx() {
                m *= 0.5;
            }
            if grid.dim() == 2 {
                m *= h;
                if j == 0 || j + 1 == grid.ny() {
                    m *= 0.5;
                }
            }
            m
        })
        .collect()
}

/// Pinned mask and Dirichlet values, checked non-negative.
fn pinned_data(grid: &Grid, boundary: &BoundarySpec) -> Result<(Vec<bool>, Vec<f64>)> {
    if boundary.dim() != grid.dim() {
        return Err(Error::Domain(format!("boundary spec of dimension {} on a {}D grid", boundary.dim(), grid.dim())));
    }
    let mut pinned = vec![false; grid.len()];
    let mut vals = vec![0.0; grid.len()];
    for k in 0..grid.len() {
        if let Some(v) = boundary.pinned_value(grid, k) {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Precondition(format!(
                    "Dirichlet datum {v} at {:?} must be finite and non-negative",
                    grid.point(k)
                )));
            }
            pinned[k] = true;
            vals[k] = v;
        }
    }
    Ok((pinned, vals))
}

/// Diagonal entry of the Dirichlet Hessian at node `k`.
fn dirichlet_diag(grid: &Grid, k: usize) -> f64 {
    let (i, j) = grid.ij(k);
    let (nx, ny) = (grid.nx(), grid.ny());
    let hdeg = (usize::from(i > 0) + usize::from(i + 1 < nx)) as f64;
    if grid.dim() == 1 {
        return 2.0 * hdeg / grid.h();
    }
    let wy = if j == 0 || j + 1 == ny { 1.0 } else { 2.0 };
    let wx = if i == 0 || i + 1 == nx { 1.0 } else { 2.0 };
    let vdeg = (usize::from(j > 0) + usize::from(j + 1 < ny)) as f64;
    wy * hdeg + wx * vdeg
}

/// Discrete harmonic extension of the Dirichlet data (natural condition on free facets).
pub fn harmonic_extension(grid: &Grid, boundary: &BoundarySpec) -> Result<ScalarField> {
    let (pinned, data) = pinned_data(grid, boundary)?;
    if !pinned.iter().any(|&p| p) {
        return Ok(ScalarField::zeros(grid.clone()));
    }
    let n = grid.len();
    let apply = |x: &[f64], y: &mut [f64]| {
        let masked: Vec<f64> = (0..n).map(|k| if pinned[k] { 0.0 } else { x[k] }).collect();
        y.iter_mut().for_each(|v| *v = 0.0);
        dirichlet_grad(grid, &masked, y);
        for k in 0..n {
            if pinned[k] {
                y[k] = x[k];
            }
        }
    };
    let diag: Vec<f64> = (0..n).map(|k| if pinned[k] { 1.0 } else { dirichlet_diag(grid, k) }).collect();
    let lifted: Vec<f64> = (0..n).map(|k| if pinned[k] { data[k] } else { 0.0 }).collect();
    let mut rhs = vec![0.0; n];
    dirichlet_grad(grid, &lifted, &mut rhs);
    for k in 0..n {
        rhs[k] = if pinned[k] { data[k] } else { -rhs[k] };
    }
    let mut x = lifted.clone();
    pcg(apply, &diag, &rhs, &mut x, 1e-12, 100 * n)?;
    for k in 0..n {
        x[k] = if pinned[k] { data[k] } else { x[k].max(0.0) };
    }
    ScalarField::new(grid.clone(), x)
}

/// Minimize from the harmonic extension of the boundary data.
pub fn minimize(
    grid: &Grid,
    boundary: &BoundarySpec,
    objective: Objective,
    config: &SolverConfig,
) -> Result<Minimized> {
    let start = harmonic_extension(grid, boundary)?;
    minimize_from(&start, boundary, objective, config)
}

struct Descent<'a> {
    pinned: &'a [bool],
    config: &'a SolverConfig,
    trace: Vec<TraceRow>,
    total_iters: usize,
}

/// Map from descent variables back to `u`.
type ToU = Box<dyn Fn(&[f64]) -> Vec<f64>>;

impl Descent<'_> {
    /// Jacobi-scaled projected gradient with momentum, backtracking and
    /// function-value restarts, until the energy stalls.
    fn run(&mut self, stage_fn: &dyn Stage, x: &mut [f64], stage: usize, delta: f64) -> std::result::Result<(), f64> {
        let n = x.len();
        let cfg = self.config;
        let backtrack = matches!(cfg.step_rule, StepRule::Backtracking);
        let mut t = match cfg.step_rule {
            StepRule::Fixed(t) => t,
            StepRule::Backtracking => 0.5,
        };
        let (d0, p0) = stage_fn.eval(x, None, None);
        let mut ex = d0 + p0;
        let mut history = vec![ex];
        let mut x_prev = x.to_vec();
        let mut y = x.to_vec();
        let mut momentum_k = 1usize;
        let mut gy = vec![0.0; n];
        let mut metric = vec![0.0; n];
        let mut cand = vec![0.0; n];
        let mut it = 0;
        loop {
            if it >= cfg.max_iters {
                return Err(ex);
            }
            let (dy, py) = stage_fn.eval(&y, Some(&mut gy), Some(&mut metric));
            let ey = dy + py;
            let floor = metric.iter().cloned().fold(0.0, f64::max) * 1e-12 + f64::MIN_POSITIVE;
            for k in 0..n {
                if self.pinned[k] {
                    gy[k] = 0.0;
                }
                metric[k] = metric[k].max(floor);
            }
            let (dc, pc) = loop {
                for k in 0..n {
                    cand[k] = if self.pinned[k] { y[k] } else { (y[k] - t * gy[k] / metric[k]).max(0.0) };
                }
                let (dc, pc) = stage_fn.eval(&cand, None, None);
                if !backtrack {
                    break (dc, pc);
                }
                let mut lin = 0.0;
                let mut quad = 0.0;
                for k in 0..n {
                    let s = cand[k] - y[k];
                    lin += gy[k] * s;
                    quad += metric[k] * s * s;
                }
                if dc + pc <= ey + lin + quad / (2.0 * t) + 1e-15 * ey.abs().max(1.0) || t < 1e-30 {
                    break (dc, pc);
                }
                t *= 0.5;
            };
            let ec = dc + pc;
            if ec > ex && momentum_k > 1 {
                // function-value restart from the current iterate
                momentum_k = 1;
                y.copy_from_slice(x);
                continue;
            }
            it += 1;
            self.total_iters += 1;
            let moved = cand.iter().zip(x.iter()).any(|(a, b)| a != b);
            x_prev.copy_from_slice(x);
            x.copy_from_slice(&cand);
            ex = ec;
            self.trace.push(TraceRow { iter: self.total_iters, stage, delta, dirichlet: dc, potential: pc, total: ec });
            history.push(ec);
            let beta = (momentum_k as f64 - 1.0) / (momentum_k as f64 + 2.0);
            momentum_k += 1;
            for k in 0..n {
                y[k] = if self.pinned[k] { x[k] } else { (x[k] + beta * (x[k] - x_prev[k])).max(0.0) };
            }
            if backtrack {
                t = (t * 1.2).min(1e3);
            }
            let stalled = history.len() > STALL_WINDOW && {
                let old = history[history.len() - 1 - STALL_WINDOW];
                old - ec <= cfg.energy_tol * ec.abs().max(1.0)
            };
            if !moved || stalled {
                return Ok(());
            }
        }
    }
}

/// Run the continuation ladder from `initial`, then threshold the dead core.
///
/// The characteristic potential is descended in `u`; the negative-power
/// potential in the hodograph variable `w`, where widths `delta` (given in
/// `u` units) become `(delta/c_alpha)^(1/alpha)`.
pub fn minimize_from(
    initial: &ScalarField,
    boundary: &BoundarySpec,
    objective: Objective,
    config: &SolverConfig,
) -> Result<Minimized> {
    config.validate()?;
    let grid = initial.grid();
    let (pinned, data) = pinned_data(grid, boundary)?;
    let n = grid.len();
    let u0: Vec<f64> = (0..n).map(|k| if pinned[k] { data[k] } else { initial.values()[k].max(0.0) }).collect();
    let mut desc = Descent { pinned: &pinned, config, trace: Vec::new(), total_iters: 0 };
    let mass = lumped_mass(grid);
    let to_u: ToU;
    let mut x;
    let mut failed = None;
    match objective {
        Objective::Ac => {
            x = u0;
            to_u = Box::new(|v: &[f64]| v.to_vec());
            for (stage, &delta) in config.ladder.iter().enumerate() {
                let st = AcStage { grid, mass: &mass, delta };
                if let Err(e) = desc.run(&st, &mut x, stage, delta) {
                    failed = Some(e);
                    break;
                }
            }
        }
        Objective::Ap { params, rescaled } => {
            let fwd = move |v: f64| pow_pos(v / params.c_alpha, 1.0 / params.alpha);
            x = u0.iter().map(|&v| fwd(v)).collect();
            to_u = Box::new(move |v: &[f64]| v.iter().map(|&w| params.c_alpha * pow_pos(w, params.alpha)).collect());
            for (stage, &delta) in config.ladder.iter().enumerate() {
                let st = ApStage {
                    energy: WEnergy {
                        grid,
                        scale: pow_any(params.c_alpha, -params.gamma),
                        k: if rescaled { params.c_gamma } else { 1.0 },
                        q: -params.alpha * params.gamma,
                    },
                    delta_w: fwd(delta),
                };
                if let Err(e) = desc.run(&st, &mut x, stage, delta) {
                    failed = Some(e);
                    break;
                }
            }
        }
    }
    let mut u = to_u(&x);
    for k in 0..n {
        if pinned[k] {
            u[k] = data[k];
        }
    }
    if let Some(last_energy) = failed {
        return Err(Error::NotConverged(Box::new(SolverFailure {
            iterations: desc.total_iters,
            last_energy,
            last_iterate: ScalarField::new(grid.clone(), u)?,
            trace: desc.trace,
        })));
    }
    for k in 0..n {
        if !pinned[k] && u[k] < config.tau {
            u[k] = 0.0;
        }
    }
    let field = ScalarField::new(grid.clone(), u)?;
    let energy = match objective {
        Objective::Ap { params, rescaled } => energy_ap(&field, &params, rescaled)?,
        Objective::Ac => energy_ac(&field, 0.0)?,
    };
    Ok(Minimized { field, trace: desc.trace, iterations: desc.total_iters, energy })
}
