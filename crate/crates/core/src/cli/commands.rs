//! Defaults, validation and execution of each subcommand.

use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};

use super::{
    write_dat, write_file, write_json, write_plot_stub, Command, ConfigError, ObjectiveKind, Outcome, RunConfig,
    Sources,
};
use crate::degenerate_linear::{c1alpha_fit, solve_weighted, HalfGrid, Weight, WeightedProblem};
use crate::error::Result;
use crate::experiments::{
    embed_radial, flatness_decay_run, gamma_to_0_sweep, gamma_to_2_sweep, monotonicity_trace, radial_minimizer_pair,
    SweepGeometry, SweepReport,
};
use crate::exponents::GammaParams;
use crate::field::{BoundarySpec, Grid, ScalarField, Trace};
use crate::free_boundary::{extract_interface, write_flatness_csv};
use crate::solver::{minimize, radial_exterior, radial_exterior_to, Objective, SolverConfig};

type Check = std::result::Result<(), ConfigError>;

const COMMON_KEYS: [&str; 4] = ["command", "out", "seed", "jobs"];

fn allowed_keys(command: Command) -> &'static [&'static str] {
    match command {
        Command::Solve => &[
            "gamma",
            "dim",
            "cells",
            "left",
            "right",
            "angle_deg",
            "half_width",
            "objective",
            "rescaled",
            "max_iters",
            "energy_tol",
        ],
        Command::Radial => &["gamma", "dim", "shoot_tol"],
        Command::Linearized => &["s", "h", "tangential_dims", "exact_test", "solve_tol"],
        Command::Flatness => &["gamma", "lambda", "h", "half_width", "radius", "rho", "levels"],
        Command::Monotonicity => &["gamma", "lambda", "h", "half_width", "radii", "max_iters"],
        Command::SweepGamma2 | Command::SweepGamma0 => &["gammas", "left", "right", "cells", "radial", "dim"],
        Command::Validate => &[],
    }
}

fn check(ok: bool, sources: &Sources, key: &str, msg: impl std::fmt::Display) -> Check {
    if ok {
        Ok(())
    } else {
        Err(sources.error(key, msg))
    }
}

fn check_gamma(g: f64, sources: &Sources, key: &str) -> Check {
    check(g > 0.0 && g < 2.0, sources, key, format!("gamma = {g} must lie in (0, 2)"))
}

fn check_positive(v: f64, sources: &Sources, key: &str) -> Check {
    check(v > 0.0 && v.is_finite(), sources, key, format!("{v} must be positive and finite"))
}

/// Whether `1/h` cells of width `h` tile the unit length.
fn divides_unit(h: f64) -> bool {
    let n = (1.0 / h).round();
    n >= 1.0 && ((1.0 / h) - n).abs() < 1e-9 * n
}

/// Fill defaults for `command` and validate every key before any compute.
pub(crate) fn resolve(command: Command, cfg: &mut RunConfig, sources: &Sources) -> Check {
    let set = serde_json::to_value(&*cfg).unwrap_or(Value::Null);
    if let Value::Object(map) = &set {
        let allowed = allowed_keys(command);
        for key in map.keys() {
            if !COMMON_KEYS.contains(&key.as_str()) && !allowed.contains(&key.as_str()) {
                return Err(sources.error(key, format!("not used by `{}`", command.name())));
            }
        }
    }
    if let Some(j) = cfg.jobs {
        check(j <= 4096, sources, "jobs", "at most 4096 worker threads")?;
    }
    match command {
        Command::Solve => resolve_solve(cfg, sources),
        Command::Radial => {
            let g = *cfg.gamma.get_or_insert(1.0);
            check_gamma(g, sources, "gamma")?;
            let n = *cfg.dim.get_or_insert(2);
            check((1..=64).contains(&n), sources, "dim", format!("radial dimension {n} must be in 1..=64"))?;
            let t = *cfg.shoot_tol.get_or_insert(1e-10);
            check(t > 0.0 && t < 1e-2, sources, "shoot_tol", format!("{t} must lie in (0, 1e-2)"))
        }
        Command::Linearized => {
            let s = *cfg.s.get_or_insert(-0.5);
            check(s > -1.0 && s <= 0.0, sources, "s", format!("s = {s} must lie in (-1, 0]"))?;
            let h = *cfg.h.get_or_insert(1.0 / 32.0);
            check(h > 0.0 && h <= 0.25 && divides_unit(h), sources, "h", format!("h = {h} must be 1/N with N >= 4"))?;
            let m = *cfg.tangential_dims.get_or_insert(1);
            check(m == 1 || m == 2, sources, "tangential_dims", format!("{m} must be 1 or 2"))?;
            cfg.exact_test.get_or_insert(false);
            let t = *cfg.solve_tol.get_or_insert(1e-12);
            check(t > 0.0 && t < 1e-2, sources, "solve_tol", format!("{t} must lie in (0, 1e-2)"))
        }
        Command::Flatness => {
            check_gamma(*cfg.gamma.get_or_insert(0.5), sources, "gamma")?;
            check_positive(*cfg.lambda.get_or_insert(8.0), sources, "lambda")?;
            let h = *cfg.h.get_or_insert(1.0 / 256.0);
            check(h > 0.0 && h <= 0.1, sources, "h", format!("h = {h} must lie in (0, 0.1]"))?;
            let half = *cfg.half_width.get_or_insert(0.45);
            check_positive(half, sources, "half_width")?;
            let r = *cfg.radius.get_or_insert(0.4);
            check(r > 0.0 && r <= half, sources, "radius", format!("{r} must lie in (0, half_width]"))?;
            let rho = *cfg.rho.get_or_insert(0.25);
            check(rho > 0.0 && rho < 1.0, sources, "rho", format!("{rho} must lie in (0, 1)"))?;
            let l = *cfg.levels.get_or_insert(2);
            check((1..=16).contains(&l), sources, "levels", format!("{l} must be in 1..=16"))
        }
        Command::Monotonicity => {
            let g = *cfg.gamma.get_or_insert(1.8);
            check_gamma(g, sources, "gamma")?;
            check_positive(*cfg.lambda.get_or_insert(8.0), sources, "lambda")?;
            let h = *cfg.h.get_or_insert(1.0 / 256.0);
            check(h > 0.0 && h <= 0.1, sources, "h", format!("h = {h} must lie in (0, 0.1]"))?;
            let half = *cfg.half_width.get_or_insert(0.2);
            check_positive(half, sources, "half_width")?;
            let radii = cfg.radii.get_or_insert_with(|| (1..=8).map(|k| 0.02 * k as f64).collect());
            check(
                !radii.is_empty()
                    && radii[0] > 0.0
                    && radii.windows(2).all(|w| w[1] > w[0])
                    && radii[radii.len() - 1] < half,
                sources,
                "radii",
                "radii must be positive, strictly increasing and below half_width",
            )?;
            let params = GammaParams::new(g).map_err(|e| sources.error("gamma", e))?;
            let iters = *cfg.max_iters.get_or_insert(SolverConfig::for_ap(&params, h).max_iters);
            check(iters > 0, sources, "max_iters", "must be positive")
        }
        Command::SweepGamma2 | Command::SweepGamma0 => resolve_sweep(command, cfg, sources),
        Command::Validate => Ok(()),
    }
}

fn resolve_solve(cfg: &mut RunConfig, sources: &Sources) -> Check {
    if *cfg.objective.get_or_insert(ObjectiveKind::Ap) == ObjectiveKind::Ap {
        check_gamma(*cfg.gamma.get_or_insert(1.0), sources, "gamma")?;
        cfg.rescaled.get_or_insert(false);
    } else {
        for key in ["gamma", "rescaled"] {
            let set = if key == "gamma" { cfg.gamma.is_some() } else { cfg.rescaled.is_some() };
            check(!set, sources, key, "not used with the ac objective")?;
        }
    }
    let dim = *cfg.dim.get_or_insert(1);
    check(dim == 1 || dim == 2, sources, "dim", format!("grid dimension {dim} must be 1 or 2"))?;
    let cells = *cfg.cells.get_or_insert(if dim == 1 { 256 } else { 64 });
    let max_cells = if dim == 1 { 1 << 16 } else { 2048 };
    check((4..=max_cells).contains(&cells), sources, "cells", format!("{cells} must be in 4..={max_cells}"))?;
    let h = if dim == 1 {
        let l = *cfg.left.get_or_insert(1.0);
        let r = *cfg.right.get_or_insert(0.0);
        check(l >= 0.0 && l.is_finite(), sources, "left", format!("{l} must be finite and nonnegative"))?;
        check(r >= 0.0 && r.is_finite(), sources, "right", format!("{r} must be finite and nonnegative"))?;
        1.0 / cells as f64
    } else {
        let a = *cfg.angle_deg.get_or_insert(0.0);
        check(a.is_finite(), sources, "angle_deg", "must be finite")?;
        let half = *cfg.half_width.get_or_insert(0.5);
        check_positive(half, sources, "half_width")?;
        2.0 * half / cells as f64
    };
    let defaults = solver_defaults(cfg, h).map_err(|e| sources.error("gamma", e))?;
    let iters = *cfg.max_iters.get_or_insert(defaults.max_iters);
    check(iters > 0, sources, "max_iters", "must be positive")?;
    let tol = *cfg.energy_tol.get_or_insert(defaults.energy_tol);
    check(tol > 0.0 && tol < 1.0, sources, "energy_tol", format!("{tol} must lie in (0, 1)"))
}

fn resolve_sweep(command: Command, cfg: &mut RunConfig, sources: &Sources) -> Check {
    let to2 = command == Command::SweepGamma2;
    let radial = *cfg.radial.get_or_insert(false);
    let gammas = cfg.gammas.get_or_insert_with(|| if to2 { vec![1.5, 1.8, 1.95] } else { vec![0.4, 0.2, 0.1, 0.05] });
    let ok = !gammas.is_empty()
        && if to2 {
            gammas.iter().all(|&g| g > 1.0 && g < 2.0) && gammas.windows(2).all(|w| w[1] > w[0])
        } else {
            gammas.iter().all(|&g| g > 0.0 && g < 0.5) && gammas.windows(2).all(|w| w[1] < w[0])
        };
    let want = if to2 { "increasing inside (1, 2)" } else { "decreasing inside (0, 0.5)" };
    check(ok, sources, "gammas", format!("gammas must be {want}"))?;
    if radial {
        check(to2, sources, "radial", "the radial geometry is only defined for sweep-gamma2")?;
        let n = *cfg.dim.get_or_insert(2);
        check((1..=64).contains(&n), sources, "dim", format!("radial dimension {n} must be in 1..=64"))
    } else {
        let l = *cfg.left.get_or_insert(if to2 { 1.0 } else { 2.0 });
        let r = *cfg.right.get_or_insert(0.0);
        check(l >= 0.0 && l.is_finite(), sources, "left", format!("{l} must be finite and nonnegative"))?;
        check(r >= 0.0 && r.is_finite(), sources, "right", format!("{r} must be finite and nonnegative"))?;
        let c = *cfg.cells.get_or_insert(512);
        check((4..=1 << 16).contains(&c), sources, "cells", format!("{c} must be in 4..=65536"))
    }
}

fn solver_defaults(cfg: &RunConfig, h: f64) -> Result<SolverConfig> {
    Ok(match cfg.objective {
        Some(ObjectiveKind::Ac) => SolverConfig::for_ac(h),
        _ => SolverConfig::for_ap(&GammaParams::new(cfg.gamma.unwrap_or(1.0))?, h),
    })
}

/// Run a resolved command, writing artifacts into `dir`.
pub(crate) fn execute(command: Command, cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    match command {
        Command::Solve => solve(cfg, dir),
        Command::Radial => radial(cfg, dir),
        Command::Linearized => linearized(cfg, dir),
        Command::Flatness => flatness(cfg, dir),
        Command::Monotonicity => monotonicity(cfg, dir),
        Command::SweepGamma2 | Command::SweepGamma0 => sweep(command, cfg, dir),
        Command::Validate => super::oracles::validate(dir),
    }
}

fn ok(summary: Value, stdout: Vec<String>) -> Result<Outcome> {
    Ok(Outcome { summary, stdout, failed_check: None })
}

fn field_dat(field: &ScalarField, path: &Path) -> Result<()> {
    let g = field.grid();
    let header: &[&str] = if g.dim() == 1 { &["x", "u"] } else { &["x", "y", "u"] };
    write_dat(
        path,
        header,
        (0..g.len()).map(|k| {
            let p = g.point(k);
            let v = field.values()[k];
            if g.dim() == 1 {
                vec![p[0], v]
            } else {
                vec![p[0], p[1], v]
            }
        }),
    )
}

fn solve(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let cells = cfg.cells.unwrap_or(256);
    let (grid, boundary) = if cfg.dim == Some(2) {
        let half = cfg.half_width.unwrap_or(0.5);
        let th = cfg.angle_deg.unwrap_or(0.0).to_radians();
        let nu = [th.sin(), th.cos()];
        // planar one-dimensional minimizer of the chosen objective
        let trace: Trace = match cfg.objective {
            Some(ObjectiveKind::Ac) => Arc::new(move |p| (p[0] * nu[0] + p[1] * nu[1]).max(0.0)),
            _ => {
                let params = GammaParams::new(cfg.gamma.unwrap_or(1.0))?;
                Arc::new(move |p| params.u0((p[0] * nu[0] + p[1] * nu[1]).max(0.0)))
            }
        };
        (Grid::new_2d([-half, half], [-half, half], cells, cells)?, BoundarySpec::dirichlet_all(2, trace))
    } else {
        (Grid::new_1d(0.0, 1.0, cells)?, BoundarySpec::interval(cfg.left.unwrap_or(1.0), cfg.right.unwrap_or(0.0)))
    };
    let h = grid.h();
    let mut config = solver_defaults(cfg, h)?;
    config.max_iters = cfg.max_iters.unwrap_or(config.max_iters);
    config.energy_tol = cfg.energy_tol.unwrap_or(config.energy_tol);
    let objective = match cfg.objective {
        Some(ObjectiveKind::Ac) => Objective::Ac,
        _ => Objective::Ap {
            params: GammaParams::new(cfg.gamma.unwrap_or(1.0))?,
            rescaled: cfg.rescaled.unwrap_or(false),
        },
    };
    let out = minimize(&grid, &boundary, objective, &config)?;
    out.field.save_csv(&dir.join("field.csv"))?;
    field_dat(&out.field, &dir.join("field.dat"))?;
    let fb = extract_interface(&out.field, config.tau)?;
    fb.save_csv(&dir.join("interface.csv"))?;
    write_file(&dir.join("energy_trace.csv"), |w| {
        writeln!(w, "# regularized energy after every accepted step; stage indexes the continuation ladder")?;
        writeln!(w, "iter,stage,delta,dirichlet,potential,total")?;
        for r in &out.trace {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.iter, r.stage, r.delta, r.dirichlet, r.potential, r.total
            )?;
        }
        Ok(())
    })?;
    write_plot_stub(dir, "field.dat", "x", "u")?;
    let summary = json!({
        "energy": out.energy,
        "iterations": out.iterations,
        "tau": config.tau,
        "interface_vertices": fb.vertices().count(),
        "interface_length": fb.length(),
    });
    ok(
        summary,
        vec![
            format!(
                "energy={:.10} (dirichlet={:.10}, potential={:.10})",
                out.energy.total, out.energy.dirichlet, out.energy.potential
            ),
            format!("iterations={}", out.iterations),
        ],
    )
}

fn radial(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let params = GammaParams::new(cfg.gamma.unwrap_or(1.0))?;
    let sol = radial_exterior(&params, cfg.dim.unwrap_or(2), cfg.shoot_tol.unwrap_or(1e-10))?;
    write_file(&dir.join("profile.csv"), |w| {
        writeln!(w, "# radial profile, u = 1 at r = 1, free boundary at r = 1 + mu")?;
        writeln!(w, "r,u,du")?;
        for k in 0..sol.r.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", sol.r[k], sol.u[k], sol.du[k])?;
        }
        Ok(())
    })?;
    write_dat(
        &dir.join("profile.dat"),
        &["r", "u", "du"],
        (0..sol.r.len()).map(|k| vec![sol.r[k], sol.u[k], sol.du[k]]),
    )?;
    write_plot_stub(dir, "profile.dat", "r", "u")?;
    ok(
        json!({ "mu": sol.mu, "free_boundary_radius": sol.free_boundary_radius(), "samples": sol.r.len() }),
        vec![format!("mu={:.6}", sol.mu)],
    )
}

/// Documented error bound of the exact test: `5 h^2 / (1 + s)`.
pub fn linearized_bound(s: f64, h: f64) -> f64 {
    5.0 * h * h / (1.0 + s)
}

fn linearized(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let s = cfg.s.unwrap_or(-0.5);
    let h = cfg.h.unwrap_or(1.0 / 32.0);
    let m = cfg.tangential_dims.unwrap_or(1);
    let tol = cfg.solve_tol.unwrap_or(1e-12);
    let grid = HalfGrid::new(m, 1.0, 1.0, h)?;
    let weight = if s == 0.0 { Weight::Power(0.0) } else { Weight::Power(s) };
    let exact = cfg.exact_test == Some(true);
    let data: Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync> = if exact {
        Arc::new(move |x, xn| x[0] * x[0] - xn * xn / (1.0 + s))
    } else {
        Arc::new(|x, xn| (1.3 * x[0]).sin() * (1.0 + xn) + xn * xn)
    };
    let problem = WeightedProblem::new(weight, grid, data.clone())?;
    let v = solve_weighted(&problem, tol)?;
    write_file(&dir.join("field.csv"), |w| {
        writeln!(w, "# weighted solution, rows ordered by height")?;
        writeln!(w, "{}", if m == 1 { "x1,xn,v" } else { "x1,x2,xn,v" })?;
        for i in 0..v.len() {
            let (x, xn) = v.point(i);
            if m == 1 {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", x[0], xn, v.values[i])?;
            } else {
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", x[0], x[1], xn, v.values[i])?;
            }
        }
        Ok(())
    })?;
    if exact {
        let err = (0..v.len())
            .map(|i| {
                let (x, xn) = v.point(i);
                (v.values[i] - data(x, xn)).abs()
            })
            .fold(0.0, f64::max);
        let bound = linearized_bound(s, h);
        let summary = json!({ "max_error": err, "bound": bound });
        let line = format!("max_error={err:.6e} bound={bound:.6e}");
        let failed = (err > bound).then(|| format!("max error {err:e} exceeds the bound {bound:e}"));
        return Ok(Outcome { summary, stdout: vec![line], failed_check: failed });
    }
    let fit = c1alpha_fit(&v, 0.5)?;
    let line = format!("alpha_fit={:.6} c_fit={:.6e} a_prime={:?}", fit.alpha_fit, fit.c_fit, fit.a_prime);
    ok(json!({ "fit": fit }), vec![line])
}

fn flatness(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let params = GammaParams::new(cfg.gamma.unwrap_or(0.5))?;
    let lambda = cfg.lambda.unwrap_or(8.0);
    let half = cfg.half_width.unwrap_or(0.45);
    let h = cfg.h.unwrap_or(1.0 / 256.0);
    let r_min = radial_r_min(&params, lambda, half)?;
    let sol = radial_exterior_to(&params, 2, 1e-10, r_min)?;
    let center = [lambda * sol.free_boundary_radius(), 0.0];
    let u = embed_radial(Grid::square(center, half, h)?, &sol, [0.0, 0.0], lambda)?;
    let out = flatness_decay_run(
        &u,
        &params,
        center,
        cfg.radius.unwrap_or(0.4),
        cfg.rho.unwrap_or(0.25),
        cfg.levels.unwrap_or(2),
    )?;
    write_file(&dir.join("flatness_ratios.csv"), |w| out.write_csv(w))?;
    let certs = out.certificates();
    write_file(&dir.join("certificates.csv"), |w| write_flatness_csv(certs, w))?;
    write_dat(&dir.join("flatness.dat"), &["radius", "epsilon"], certs.iter().map(|c| vec![c.radius, c.epsilon]))?;
    write_plot_stub(dir, "flatness.dat", "radius", "epsilon")?;
    let mut lines: Vec<String> =
        certs.iter().map(|c| format!("radius={:.6} epsilon={:.6e}", c.radius, c.epsilon)).collect();
    lines.push(format!("all_within={}", out.all_within()));
    ok(json!({ "decay": out }), lines)
}

/// Smallest scaled radius the embedding of a half width `half` box needs.
fn radial_r_min(params: &GammaParams, lambda: f64, half: f64) -> Result<f64> {
    let big_r = lambda * radial_exterior(params, 2, 1e-10)?.free_boundary_radius();
    Ok(((big_r - 2.0 * half) / lambda).clamp(1e-3, 1.0))
}

fn monotonicity(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let params = GammaParams::new(cfg.gamma.unwrap_or(1.8))?;
    let h = cfg.h.unwrap_or(1.0 / 256.0);
    let mut config = SolverConfig::for_ap(&params, h);
    config.max_iters = cfg.max_iters.unwrap_or(config.max_iters);
    let (u, center) = radial_minimizer_pair(
        &params,
        cfg.lambda.unwrap_or(8.0),
        cfg.half_width.unwrap_or(0.2),
        h,
        true,
        Some(&config),
    )?;
    let zero: Vec<bool> = u.values().iter().map(|&v| v == 0.0).collect();
    let radii = cfg.radii.clone().unwrap_or_default();
    let mut trace = monotonicity_trace(&u, &zero, center, &radii)?;
    trace.description = format!("relaxed radial minimizer, gamma = {}, zero set = {{u = 0}}", params.gamma);
    write_file(&dir.join("phi_trace.csv"), |w| trace.write_csv(w))?;
    write_dat(
        &dir.join("phi_trace.dat"),
        &["r", "phi"],
        trace.radii.iter().zip(&trace.phi).map(|(r, p)| vec![*r, *p]),
    )?;
    write_plot_stub(dir, "phi_trace.dat", "r", "phi")?;
    let drop = trace.worst_relative_drop();
    ok(
        json!({ "trace": trace, "worst_relative_drop": drop }),
        vec![
            format!("worst_relative_drop={drop:.6e}"),
            format!("nondecreasing_within_5pct={}", trace.is_nondecreasing(0.05)),
        ],
    )
}

fn sweep(command: Command, cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let gammas = cfg.gammas.clone().unwrap_or_default();
    let geometry = if cfg.radial == Some(true) {
        SweepGeometry::Radial { n: cfg.dim.unwrap_or(2) }
    } else {
        SweepGeometry::OneD {
            left: cfg.left.unwrap_or(1.0),
            right: cfg.right.unwrap_or(0.0),
            cells: cfg.cells.unwrap_or(512),
        }
    };
    let report: SweepReport = if command == Command::SweepGamma2 {
        gamma_to_2_sweep(geometry, &gammas, None)?
    } else {
        gamma_to_0_sweep(geometry, &gammas, None)?
    };
    write_json(&dir.join("sweep_report.json"), &report)?;
    write_file(&dir.join("sweep_energies.csv"), |w| report.write_energies_csv(w))?;
    write_dat(&dir.join("sweep_energies.dat"), &["gamma", "gap"], report.entries.iter().map(|e| vec![e.gamma, e.gap]))?;
    write_plot_stub(dir, "sweep_energies.dat", "gamma", "gap")?;
    let mut lines: Vec<String> = report
        .entries
        .iter()
        .map(|e| {
            format!(
                "gamma={:.4} gap={:.6e} l2={}",
                e.gamma,
                e.gap,
                e.l2_distance.map_or("-".into(), |v| format!("{v:.6e}"))
            )
        })
        .collect();
    lines.push(format!("gaps_decreasing={}", report.gaps_decreasing()));
    let failed = report.failure.clone();
    Ok(Outcome {
        summary: json!({ "reference_value": report.reference_value, "gaps_decreasing": report.gaps_decreasing(), "l2_decreasing": report.l2_decreasing() }),
        stdout: lines,
        failed_check: failed,
    })
}
