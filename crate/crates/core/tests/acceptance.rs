//! Acceptance criteria 1 to 9: one PASS/FAIL line each, with runtime
//! against its budget. Exits nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fblab::degenerate_linear::{
    barrier_residual, limit_pair_sup, solve_limit, solve_weighted, Barrier, HalfField, HalfGrid, Weight,
    WeightedProblem,
};
use fblab::experiments::{
    embed_radial, flatness_decay_run, gamma_to_0_sweep, gamma_to_2_sweep, monotonicity_trace, radial_minimizer_pair,
    DecayOutcome, SweepGeometry,
};
use fblab::free_boundary::{extract_interface, flatness_certificate, viscosity_touch_test, FlatnessMode, Side};
use fblab::solver::{energy_ap, radial_exterior, radial_exterior_to};
use fblab::{GammaParams, Grid, Hodograph, Result, ScalarField};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn exponents() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for k in 0..50 {
        let g = 0.01 + 1.98 * (k as f64 + 0.5) / 50.0;
        let p = GammaParams::new(g)?;
        worst = worst
            .max(rel(p.alpha, 2.0 / (2.0 + g)))
            .max(rel(p.c_alpha, p.alpha.powf(-p.alpha)))
            .max(rel(p.c_alpha.powf(g + 2.0) * p.alpha * (1.0 - p.alpha), g / 2.0))
            .max(rel(p.s, 2.0 * (p.alpha - 1.0)))
            .max(rel(p.c_gamma, (2.0 - g).powi(2) / 16.0));
        for t in [1e-3, 0.1, 0.5, 1.0, 3.0] {
            let u = p.u0(t);
            let du = p.profile(t, 1)?;
            worst = worst.max(rel(du * du, u.powf(-g)));
            worst = worst.max(rel(p.hodograph(u, Hodograph::Forward)?, t));
        }
    }
    Ok(verdict(worst <= 1e-12, format!("worst relative error {worst:.2e} (<= 1e-12)")))
}

fn profile_energy() -> Result<Verdict> {
    let p = GammaParams::new(1.0)?;
    let f = ScalarField::from_fn(Grid::new_1d(0.0, 1.0, 4096)?, |x| p.u0(x[0]))?;
    let exact = 8.0 / 3.0 * 1.5f64.powf(4.0 / 3.0);
    let e = energy_ap(&f, &p, false)?.total;
    let r = rel(e, exact);
    Ok(verdict(r <= 0.02, format!("energy {e:.6} vs {exact:.6}, relative error {r:.2e} (<= 2e-2)")))
}

fn radial() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for g in [0.25, 0.5, 1.0, 1.5, 1.9] {
        let p = GammaParams::new(g)?;
        worst = worst.max((radial_exterior(&p, 1, 1e-12)?.mu - p.alpha).abs());
    }
    let mus = [1.5, 1.8, 1.9, 1.95]
        .iter()
        .map(|&g| Ok(radial_exterior(&GammaParams::new(g)?, 2, 1e-10)?.mu))
        .collect::<Result<Vec<f64>>>()?;
    Ok(verdict(
        worst <= 1e-5 && decreasing(&mus),
        format!("n=1 worst |mu - alpha| {worst:.2e} (<= 1e-5); n=2 mu {mus:.5?} strictly decreasing"),
    ))
}

type Data = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

fn weighted(weight: Weight, h: f64, data: &Data) -> Result<WeightedProblem> {
    WeightedProblem::new(weight, HalfGrid::new(1, 1.0, 1.0, h)?, data.clone())
}

fn max_err(v: &HalfField, f: &Data) -> f64 {
    (0..v.len())
        .map(|i| {
            let (x, xn) = v.point(i);
            (v.values[i] - f(x, xn)).abs()
        })
        .fold(0.0, f64::max)
}

fn degenerate() -> Result<Verdict> {
    let mut ratios = Vec::new();
    for s in [-0.5, -0.9] {
        let exact: Data = Arc::new(move |x, xn| x[0] * x[0] - xn * xn / (1.0 + s));
        let e = [1.0 / 16.0, 1.0 / 32.0]
            .iter()
            .map(|&h| Ok(max_err(&solve_weighted(&weighted(Weight::Power(s), h, &exact)?, 1e-13)?, &exact)))
            .collect::<Result<Vec<f64>>>()?;
        ratios.push(e[0] / e[1]);
    }
    let tol = 1e-10;
    let s = -0.5;
    let bad: Data = Arc::new(move |_, xn| xn.powf(1.0 - s));
    let control = max_err(&solve_weighted(&weighted(Weight::Power(s), 1.0 / 32.0, &bad)?, tol)?, &bad);
    let smooth: Data = Arc::new(|x, xn| (1.3 * x[0]).sin() * (1.0 + xn) + xn * xn);
    let h = 1.0 / 32.0;
    let lim = solve_limit(&weighted(Weight::Limit, h, &smooth)?, 1e-12)?;
    let dist = [-0.9, -0.99, -0.999]
        .iter()
        .map(|&s| solve_weighted(&weighted(Weight::Power(s), h, &smooth)?, 1e-12)?.max_diff_from(&lim))
        .collect::<Result<Vec<f64>>>()?;
    let pass = ratios.iter().all(|&r| r >= 3.5) && control > 10.0 * tol && decreasing(&dist);
    Ok(verdict(
        pass,
        format!(
            "refinement ratios {ratios:.2?} (>= 3.5); control discrepancy {control:.2e} (> {:.0e}); limit distances {}",
            10.0 * tol,
            sci(&dist)
        ),
    ))
}

fn barriers() -> Result<Verdict> {
    // 40 x 25 lattice: x' in [-1/2, 1/2), x_n in (0, 1/10)
    let pts: Vec<(Vec<f64>, f64)> =
        (0..1000).map(|k| (vec![-0.5 + (k % 40) as f64 / 40.0], 0.1 * ((k / 40) as f64 + 0.5) / 25.0)).collect();
    let mut worst = f64::INFINITY;
    for s in [-0.5, -0.9, -0.99] {
        for b in [Barrier::Q1 { c0: 0.1, big_c0: 10.0 }, Barrier::Q2 { c0: 0.1, big_c0: 10.0 }] {
            let t = barrier_residual(s, b, 1, &pts)?;
            if !t.all_nonnegative() {
                return Ok(verdict(false, format!("{b:?} at s = {s}: min residual {:.3e}", t.min_value)));
            }
            worst = worst.min(t.min_value);
        }
    }
    let sups = [-0.9, -0.99, -0.999].iter().map(|&s| limit_pair_sup(s, 10_000)).collect::<Result<Vec<f64>>>()?;
    Ok(verdict(
        decreasing(&sups),
        format!("min residual {worst:.3e} (>= 0) over 6000 samples; limit sup-differences {}", sci(&sups)),
    ))
}

fn monotonicity() -> Result<Verdict> {
    let g = Grid::square([0.0, 0.0], 1.0, 1.0 / 128.0)?;
    let radii = [0.2, 0.4, 0.6, 0.8];
    let half_plane: Vec<bool> = (0..g.len()).map(|k| g.point(k)[1] <= 0.0).collect();
    let cone = monotonicity_trace(&ScalarField::zeros(g.clone()), &half_plane, [0.0, 0.0], &radii)?;
    let cone_err = cone.phi.iter().map(|p| rel(*p, 2.0)).fold(0.0, f64::max);
    let c = 0.7;
    let constant =
        monotonicity_trace(&ScalarField::from_fn(g.clone(), |_| c)?, &vec![false; g.len()], [0.0, 0.0], &radii)?;
    let const_err =
        radii.iter().zip(&constant.phi).map(|(r, p)| rel(*p, -std::f64::consts::PI * c * c / r)).fold(0.0, f64::max);
    let p = GammaParams::new(1.8)?;
    let (u, center) = radial_minimizer_pair(&p, 8.0, 0.2, 1.0 / 256.0, true, None)?;
    let zero: Vec<bool> = u.values().iter().map(|&v| v == 0.0).collect();
    let radii: Vec<f64> = (1..=8).map(|k| 0.02 * k as f64).collect();
    let trace = monotonicity_trace(&u, &zero, center, &radii)?;
    let pass = cone_err <= 0.02 && const_err <= 0.02 && trace.is_nondecreasing(0.05);
    Ok(verdict(
        pass,
        format!(
            "cone error {cone_err:.2e}, constant-field error {const_err:.2e} (<= 2e-2); gamma 1.8 pair worst relative drop {:.2e} (<= 5e-2)",
            trace.worst_relative_drop()
        ),
    ))
}

fn sweeps() -> Result<Verdict> {
    let two = gamma_to_2_sweep(SweepGeometry::OneD { left: 1.0, right: 0.0, cells: 512 }, &[1.5, 1.8, 1.95], None)?;
    let zero =
        gamma_to_0_sweep(SweepGeometry::OneD { left: 2.0, right: 0.0, cells: 512 }, &[0.4, 0.2, 0.1, 0.05], None)?;
    let l2: Vec<f64> = zero.entries.iter().map(|e| e.l2_distance.unwrap_or(f64::NAN)).collect();
    let layer = two.extra.get("gap_to_boundary_layer_value").cloned().unwrap_or_default();
    let layer_value = two.extra.get("boundary_layer_value").and_then(|v| v.first().copied()).unwrap_or(f64::NAN);
    Ok(verdict(
        two.gaps_decreasing() && zero.l2_decreasing(),
        format!(
            "gamma->2 gaps to {} {:.4?} strictly decreasing: {}; gamma->0 L2 {} strictly decreasing: {} \
             [info: gamma->2 gaps to boundary-layer value {layer_value} {layer:.4?}]",
            two.reference_value,
            two.gaps(),
            two.gaps_decreasing(),
            sci(&l2),
            zero.l2_decreasing()
        ),
    ))
}

fn flatness() -> Result<Verdict> {
    let p = GammaParams::new(1.0)?;
    let h = 1.0 / 128.0;
    let th = 17f64.to_radians();
    let nu = [th.sin(), th.cos()];
    let tilted = ScalarField::from_fn(Grid::square([0.0, 0.0], 1.0, h)?, |x| p.u0(x[0] * nu[0] + x[1] * nu[1]))?;
    let t = 0.5;
    let cert = flatness_certificate(&tilted, [0.0, 0.0], t, &p, FlatnessMode::UProfile)?;
    let angle = (cert.nu[0] * nu[0] + cert.nu[1] * nu[1]).clamp(-1.0, 1.0).acos().to_degrees();
    let tilted_ok = angle <= 0.5 && cert.epsilon < 2.0 * h / t;

    let q = GammaParams::new(0.5)?;
    let sol = radial_exterior_to(&q, 2, 1e-10, 0.5)?;
    let lambda = 8.0;
    let big_r = lambda * sol.free_boundary_radius();
    let u = embed_radial(Grid::square([big_r, 0.0], 0.45, 1.0 / 256.0)?, &sol, [0.0, 0.0], lambda)?;
    let decay = flatness_decay_run(&u, &q, [big_r, 0.0], 0.4, 0.25, 2)?;
    let ratios: Vec<f64> = match &decay {
        DecayOutcome::Measured { rows, .. } => rows.iter().map(|r| r.ratio).collect(),
        DecayOutcome::NotInRegime { .. } => Vec::new(),
    };

    let mut touch_fail = Vec::new();
    let mut tested = 0;
    for g in [0.5, 1.0, 1.5] {
        let q = GammaParams::new(g)?;
        let (u, _) = radial_minimizer_pair(&q, 8.0, 0.2, 1.0 / 256.0, false, None)?;
        let fb = extract_interface(&u, 0.0)?;
        let v: Vec<[f64; 2]> = fb.vertices().filter(|x| x[1].abs() <= 0.1).collect();
        if v.len() < 8 {
            touch_fail.push(format!("gamma {g}: only {} interface points", v.len()));
            continue;
        }
        for k in 0..8 {
            let x = v[k * (v.len() - 1) / 7];
            tested += 1;
            for (mu, side) in [(0.25, Side::Above), (-0.25, Side::Below)] {
                if !viscosity_touch_test(&u, &q, x, mu, 0.05, side)?.passed() {
                    touch_fail.push(format!("gamma {g} at {x:.4?} mu {mu}"));
                }
            }
        }
    }
    Ok(verdict(
        tilted_ok && decay.all_within() && touch_fail.is_empty(),
        format!(
            "tilted: angle {angle:.3} deg (<= 0.5), eps {:.2e} (< {:.2e}); radial decay ratios {ratios:.3?} within 0.5 + slack: {}; \
             touch test: {tested} points x 2 sides, failures {touch_fail:?}",
            cert.epsilon,
            2.0 * h / t,
            decay.all_within()
        ),
    ))
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).expect("output directory exists").flatten() {
        let path = e.path();
        if path.is_dir() {
            for (k, v) in read_tree(&path) {
                out.insert(format!("{}/{k}", e.file_name().to_string_lossy()), v);
            }
        } else {
            out.insert(e.file_name().to_string_lossy().into_owned(), fs::read(&path).expect("readable artifact"));
        }
    }
    out
}

fn determinism() -> Result<Verdict> {
    let run = || -> std::io::Result<(i32, BTreeMap<String, Vec<u8>>)> {
        let dir = tempfile::tempdir()?;
        let status = Command::new(env!("CARGO_BIN_EXE_fblab")).arg("validate").env("FBLAB_OUT", dir.path()).output()?;
        Ok((status.status.code().unwrap_or(-1), read_tree(dir.path())))
    };
    let (ca, a) = run().map_err(|e| fblab::Error::Consistency(e.to_string()))?;
    let (cb, b) = run().map_err(|e| fblab::Error::Consistency(e.to_string()))?;
    let same = a == b;
    Ok(verdict(
        same && ca == 0 && cb == 0 && !a.is_empty(),
        format!(
            "exit codes {ca}, {cb}; {} artifacts {:?} byte-identical: {same}",
            a.len(),
            a.keys().collect::<Vec<_>>()
        ),
    ))
}

type Criterion = (u32, &'static str, Duration, fn() -> Result<Verdict>);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "exponent identities", Duration::from_secs(1), exponents),
        (2, "1D profile energy", Duration::from_secs(5), profile_energy),
        (3, "radial oracle", Duration::from_secs(30), radial),
        (4, "degenerate solver", Duration::from_secs(120), degenerate),
        (5, "barrier suite", Duration::from_secs(10), barriers),
        (6, "monotonicity", Duration::from_secs(60), monotonicity),
        (7, "gamma sweeps", Duration::from_secs(300), sweeps),
        (8, "flatness machinery", Duration::from_secs(120), flatness),
        (9, "determinism", Duration::MAX, determinism),
    ];
    let mut failed = Vec::new();
    for (n, name, budget, f) in criteria {
        let start = Instant::now();
        let v = f().unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = v.pass && in_time;
        let limit = if budget == Duration::MAX { String::new() } else { format!(" (budget {}s)", budget.as_secs()) };
        println!(
            "{} criterion {n} {name}: {}; {:.2}s{limit}",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
