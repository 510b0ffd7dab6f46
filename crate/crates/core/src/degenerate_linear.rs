//! The degenerate linearized equation `div(x_n^s grad v) = 0` on a half-box
//! `{|x'_i| <= L, 0 <= x_n <= H}` with zero weighted flux on `{x_n = 0}`,
//! its `s = -1` limit, barrier checks and `C^{1,alpha}` fits.
//!
//! Weighted scheme (`-1 < s <= 0`): unknown rows sit at `x_n = (k + 1/2) h`,
//! so no stencil touches `x_n = 0`. Row `k` covers the slab `[k h, (k+1) h]`
//! and couples tangentially with the slab average of `x_n^s`; rows `k`,
//! `k + 1` couple through the face weight `((k+1) h)^s`; the bottom face has
//! weight zero and the top row reaches the data at `x_n = H` across a half
//! cell (weight doubled).
//!
//! Limit scheme (`s = -1`): the trace on `{x_n = 0}` is first solved as a
//! discrete harmonic function in `x'`; the interior then uses nodal rows
//! `x_n = k h` with that trace as Dirichlet data, face weights
//! `((k + 1/2) h)^-1` and slab averages of `x_n^-1` over `[(k-1/2) h, (k+1/2) h]`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::field::{Grid, ScalarField};
use crate::linalg::pcg;

/// Iteration cap of the linear solves.
pub const MAX_CG_ITERATIONS: usize = 100_000;

/// Boundary data `g(x', x_n)`; `x'[1]` is zero with one tangential dimension.
pub type HalfData = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Uniform half-box grid with one or two tangential dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfGrid {
    tangential_dims: usize,
    half_width: f64,
    height: f64,
    h: f64,
    /// Cells across each tangential axis.
    nt: usize,
    /// Cells in `x_n`.
    nk: usize,
}

impl HalfGrid {
    pub fn new(tangential_dims: usize, half_width: f64, height: f64, h: f64) -> Result<Self> {
        if !(1..=2).contains(&tangential_dims) {
            return domain(format!("tangential dimensions {tangential_dims} not in {{1, 2}}"));
        }
        if !(half_width > 0.0 && height > 0.0 && h > 0.0) || !(half_width.is_finite() && height.is_finite()) {
            return domain("half-grid extents and spacing must be positive and finite");
        }
        let cells = |len: f64, what: &str| -> Result<usize> {
            let n = (len / h).round();
            if ((n * h - len) / len).abs() > 1e-9 || n < 4.0 {
                return domain(format!("{what} {len} is not a multiple of h = {h} with at least 4 cells"));
            }
            Ok(n as usize)
        };
        Ok(Self {
            tangential_dims,
            half_width,
            height,
            h,
            nt: cells(2.0 * half_width, "tangential width")?,
            nk: cells(height, "height")?,
        })
    }

    pub fn tangential_dims(&self) -> usize {
        self.tangential_dims
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Tangential nodes per row.
    fn row_len(&self) -> usize {
        (self.nt + 1).pow(self.tangential_dims as u32)
    }

    fn tangential_point(&self, t: usize) -> [f64; 2] {
        let n = self.nt + 1;
        let x = |i: usize| -self.half_width + i as f64 * self.h;
        if self.tangential_dims == 1 {
            [x(t), 0.0]
        } else {
            [x(t % n), x(t / n)]
        }
    }

    fn on_lateral_boundary(&self, t: usize) -> bool {
        let n = self.nt + 1;
        let edge = |i: usize| i == 0 || i == self.nt;
        edge(t % n) || (self.tangential_dims == 2 && edge(t / n))
    }

    /// Tangential neighbours of row position `t`.
    fn tangential_neighbours(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.nt + 1;
        let (i, j) = (t % n, t / n);
        let m = self.tangential_dims;
        [
            (i > 0).then(|| t - 1),
            (i < self.nt).then(|| t + 1),
            (m == 2 && j > 0).then(|| t - n),
            (m == 2 && j < self.nt).then(|| t + n),
        ]
        .into_iter()
        .flatten()
    }
}

/// Placement of the rows of a [`HalfField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowLayout {
    /// Rows at `(k + 1/2) h`, `k = 0..K`.
    Staggered,
    /// Rows at `k h`, `k = 0..=K`.
    Nodal,
}

/// Nodal values on a half-grid, row-major in `x_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfField {
    pub grid: HalfGrid,
    pub layout: RowLayout,
    pub values: Vec<f64>,
}

impl HalfField {
    pub fn rows(&self) -> usize {
        match self.layout {
            RowLayout::Staggered => self.grid.nk,
            RowLayout::Nodal => self.grid.nk + 1,
        }
    }

    pub fn height_of_row(&self, k: usize) -> f64 {
        match self.layout {
            RowLayout::Staggered => (k as f64 + 0.5) * self.grid.h,
            RowLayout::Nodal => k as f64 * self.grid.h,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(x', x_n)` of node `idx`.
    pub fn point(&self, idx: usize) -> ([f64; 2], f64) {
        let rl = self.grid.row_len();
        (self.grid.tangential_point(idx % rl), self.height_of_row(idx / rl))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Multilinear interpolation; `x_n` must lie within the row range.
    pub fn sample(&self, x: [f64; 2], xn: f64) -> Result<f64> {
        let g = &self.grid;
        let (y0, y1) = (self.height_of_row(0), self.height_of_row(self.rows() - 1));
        let slack = 1e-12 * g.h;
        if !(xn >= y0 - slack && xn <= y1 + slack) {
            return domain(format!("x_n = {xn} outside the rows [{y0}, {y1}]"));
        }
        let locate = |v: f64, lo: f64, cells: usize| -> Result<(usize, f64)> {
            let f = (v - lo) / g.h;
            if !(f >= -1e-9 && f <= cells as f64 + 1e-9) {
                return domain(format!("coordinate {v} outside the half-grid"));
            }
            let i = (f.floor().max(0.0) as usize).min(cells - 1);
            Ok((i, (f - i as f64).clamp(0.0, 1.0)))
        };
        let (k, fk) = locate(xn, y0, self.rows() - 1)?;
        let (i, fi) = locate(x[0], -g.half_width, g.nt)?;
        let (j, fj) = if g.tangential_dims == 2 { locate(x[1], -g.half_width, g.nt)? } else { (0, 0.0) };
        let n = g.nt + 1;
        let rl = g.row_len();
        let at = |di: usize, dj: usize, dk: usize| self.values[(k + dk) * rl + (j + dj) * n + i + di];
        let lerp = |a: f64, b: f64, f: f64| if f == 1.0 { b } else { a + f * (b - a) };
        let plane = |dk: usize| {
            let lo = lerp(at(0, 0, dk), at(1, 0, dk), fi);
            if g.tangential_dims == 2 {
                lerp(lo, lerp(at(0, 1, dk), at(1, 1, dk), fi), fj)
            } else {
                lo
            }
        };
        Ok(lerp(plane(0), plane(1), fk))
    }

    /// `max |self - other|` over the nodes of `self` inside the rows of `other`.
    pub fn max_diff_from(&self, other: &HalfField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Consistency("half-fields live on different grids".into()));
        }
        let (lo, hi) = (other.height_of_row(0), other.height_of_row(other.rows() - 1));
        let mut m = 0.0f64;
        for idx in 0..self.len() {
            let (x, xn) = self.point(idx);
            if xn >= lo && xn <= hi {
                m = m.max((self.values[idx] - other.sample(x, xn)?).abs());
            }
        }
        Ok(m)
    }

    /// The field as a 2D grid field (one tangential dimension only).
    pub fn to_scalar_field(&self) -> Result<ScalarField> {
        let g = &self.grid;
        if g.tangential_dims != 1 {
            return domain("only one tangential dimension maps to a 2D field");
        }
        let grid = Grid::new_2d(
            [-g.half_width, g.half_width],
            [self.height_of_row(0), self.height_of_row(self.rows() - 1)],
            g.nt,
            self.rows() - 1,
        )?;
        ScalarField::new(grid, self.values.clone())
    }
}

/// The exponent of the weight `x_n^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weight {
    Power(f64),
    /// The `s = -1` limit problem.
    Limit,
}

#[derive(Clone)]
pub struct WeightedProblem {
    pub weight: Weight,
    pub grid: HalfGrid,
    pub data: HalfData,
}

impl fmt::Debug for WeightedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightedProblem")
            .field("weight", &self.weight)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

impl WeightedProblem {
    pub fn new(weight: Weight, grid: HalfGrid, data: HalfData) -> Result<Self> {
        if let Weight::Power(s) = weight {
            if !(s > -1.0 && s <= 0.0) {
                return domain(format!("s = {s} must lie in (-1, 0]"));
            }
        }
        Ok(Self { weight, grid, data })
    }
}

/// Conductances of a row-structured scheme.
struct Scheme<'a> {
    grid: &'a HalfGrid,
    layout: RowLayout,
    rows: usize,
    /// Tangential conductance per row.
    ct: Vec<f64>,
    /// Conductance between rows `k` and `k + 1`.
    cv: Vec<f64>,
    /// Conductance from the last row to the data at `x_n = H`.
    ctop: f64,
    /// Rows held fixed.
    fixed_rows: Vec<bool>,
}

impl Scheme<'_> {
    fn weighted(grid: &HalfGrid, s: f64) -> Scheme<'_> {
        let h = grid.h;
        let k_cells = grid.nk;
        let ct = (0..k_cells)
            .map(|k| {
                if s == 0.0 {
                    1.0
                } else {
                    let (a, b) = (k as f64, k as f64 + 1.0);
                    h.powf(s) * (b.powf(1.0 + s) - a.powf(1.0 + s)) / (1.0 + s)
                }
            })
            .collect();
        let cv = (1..k_cells).map(|k| (k as f64 * h).powf(s)).collect();
        Scheme {
            grid,
            layout: RowLayout::Staggered,
            rows: k_cells,
            ct,
            cv,
            ctop: 2.0 * grid.height.powf(s),
            fixed_rows: vec![false; k_cells],
        }
    }

    fn limit(grid: &HalfGrid) -> Scheme<'_> {
        let h = grid.h;
        let rows = grid.nk + 1;
        let ct = (0..rows)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    let k = k as f64;
                    ((2.0 * k + 1.0) / (2.0 * k - 1.0)).ln() / h
                }
            })
            .collect();
        let cv = (0..rows - 1).map(|k| 1.0 / ((k as f64 + 0.5) * h)).collect();
        let mut fixed_rows = vec![false; rows];
        fixed_rows[0] = true;
        fixed_rows[rows - 1] = true;
        Scheme { grid, layout: RowLayout::Nodal, rows, ct, cv, ctop: 0.0, fixed_rows }
    }

    fn fixed(&self, idx: usize) -> bool {
        let rl = self.grid.row_len();
        self.fixed_rows[idx / rl] || self.grid.on_lateral_boundary(idx % rl)
    }

    /// `y = A v` on free nodes (with `top` as the value beyond the last row);
    /// fixed nodes are left untouched.
    fn apply(&self, v: &[f64], top: Option<&[f64]>, y: &mut [f64]) {
        let rl = self.grid.row_len();
        for idx in 0..v.len() {
            if self.fixed(idx) {
                continue;
            }
            let (k, t) = (idx / rl, idx % rl);
            let vp = v[idx];
            let mut acc = 0.0;
            for q in self.grid.tangential_neighbours(t) {
                acc += self.ct[k] * (vp - v[k * rl + q]);
            }
            if k > 0 {
                acc += self.cv[k - 1] * (vp - v[idx - rl]);
            }
            if k + 1 < self.rows {
                acc += self.cv[k] * (vp - v[idx + rl]);
            } else if self.ctop > 0.0 {
                acc += self.ctop * (vp - top.map_or(0.0, |g| g[t]));
            }
            y[idx] = acc;
        }
    }

    fn diag(&self, idx: usize) -> f64 {
        let rl = self.grid.row_len();
        let (k, t) = (idx / rl, idx % rl);
        let mut d = self.ct[k] * self.grid.tangential_neighbours(t).count() as f64;
        if k > 0 {
            d += self.cv[k - 1];
        }
        d += if k + 1 < self.rows { self.cv[k] } else { self.ctop };
        d
    }

    /// Solve with the fixed nodes of `start` as Dirichlet values.
    fn solve(&self, start: Vec<f64>, top: Option<&[f64]>, tol: f64) -> Result<HalfField> {
        let n = start.len();
        let fixed: Vec<bool> = (0..n).map(|i| self.fixed(i)).collect();
        let lifted: Vec<f64> = (0..n).map(|i| if fixed[i] { start[i] } else { 0.0 }).collect();
        let mut rhs = vec![0.0; n];
        self.apply(&lifted, top, &mut rhs);
        for i in 0..n {
            rhs[i] = if fixed[i] { start[i] } else { -rhs[i] };
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            let masked: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { x[i] }).collect();
            self.apply(&masked, None, y);
            for i in 0..n {
                if fixed[i] {
                    y[i] = x[i];
                }
            }
        };
        let diag: Vec<f64> = (0..n).map(|i| if fixed[i] { 1.0 } else { self.diag(i) }).collect();
        let mut x = start;
        pcg(apply, &diag, &rhs, &mut x, tol, MAX_CG_ITERATIONS)?;
        Ok(HalfField { grid: self.grid.clone(), layout: self.layout, values: x })
    }

    /// Discrete `sum c (dv)^2` over all couplings.
    fn energy(&self, v: &[f64], top: Option<&[f64]>) -> f64 {
        let rl = self.grid.row_len();
        let mut e = 0.0;
        for idx in 0..v.len() {
            let (k, t) = (idx / rl, idx % rl);
            for q in self.grid.tangential_neighbours(t).filter(|&q| q > t) {
                e += self.ct[k] * (v[idx] - v[k * rl + q]).powi(2);
            }
            if k + 1 < self.rows {
                e += self.cv[k] * (v[idx] - v[idx + rl]).powi(2);
            } else if self.ctop > 0.0 {
                e += self.ctop * (v[idx] - top.map_or(0.0, |g| g[t])).powi(2);
            }
        }
        e
    }
}

fn require_power(problem: &WeightedProblem) -> Result<f64> {
    match problem.weight {
        Weight::Power(s) if s > -1.0 && s <= 0.0 => Ok(s),
        Weight::Power(s) => domain(format!("s = {s} must lie in (-1, 0]")),
        Weight::Limit => domain("the limit problem is solved by solve_limit"),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol < 1.0) {
        return domain(format!("solve tolerance {tol} must lie in (0, 1)"));
    }
    Ok(())
}

/// Initial vector: data on fixed nodes of `scheme`, zero elsewhere.
fn initial(scheme: &Scheme<'_>, data: &HalfData, height: impl Fn(usize) -> f64) -> Vec<f64> {
    let g = scheme.grid;
    let rl = g.row_len();
    (0..scheme.rows * rl)
        .map(|idx| if scheme.fixed(idx) { data(g.tangential_point(idx % rl), height(idx / rl)) } else { 0.0 })
        .collect()
}

fn top_data(grid: &HalfGrid, data: &HalfData) -> Vec<f64> {
    (0..grid.row_len()).map(|t| data(grid.tangential_point(t), grid.height)).collect()
}

/// Solve the weighted problem for `-1 < s <= 0` on staggered rows.
pub fn solve_weighted(problem: &WeightedProblem, solve_tol: f64) -> Result<HalfField> {
    let s = require_power(problem)?;
    check_tol(solve_tol)?;
    let g = &problem.grid;
    let scheme = Scheme::weighted(g, s);
    let start = initial(&scheme, &problem.data, |k| (k as f64 + 0.5) * g.h);
    let top = top_data(g, &problem.data);
    scheme.solve(start, Some(&top), solve_tol)
}

/// Solve the `s = -1` limit: harmonic trace first, then the interior.
pub fn solve_limit(problem: &WeightedProblem, solve_tol: f64) -> Result<HalfField> {
    if problem.weight != Weight::Limit {
        return domain("solve_limit needs the limit weight");
    }
    check_tol(solve_tol)?;
    let g = &problem.grid;
    let rl = g.row_len();
    let trace_scheme = Scheme {
        grid: g,
        layout: RowLayout::Nodal,
        rows: 1,
        ct: vec![1.0],
        cv: Vec::new(),
        ctop: 0.0,
        fixed_rows: vec![false],
    };
    let trace = trace_scheme.solve(initial(&trace_scheme, &problem.data, |_| 0.0), None, solve_tol)?;
    let scheme = Scheme::limit(g);
    let mut start = initial(&scheme, &problem.data, |k| k as f64 * g.h);
    start[..rl].copy_from_slice(&trace.values);
    scheme.solve(start, None, solve_tol)
}

/// Discrete weighted Dirichlet energy `~ int |grad v|^2 x_n^s` of `field`
/// under the scheme of `problem` (boundary data included).
pub fn weighted_energy(problem: &WeightedProblem, field: &HalfField) -> Result<f64> {
    if field.grid != problem.grid {
        return Err(Error::Consistency("field and problem grids differ".into()));
    }
    match problem.weight {
        Weight::Power(s) => {
            let scheme = Scheme::weighted(&problem.grid, s);
            Ok(scheme.energy(&field.values, Some(&top_data(&problem.grid, &problem.data))))
        }
        Weight::Limit => Ok(Scheme::limit(&problem.grid).energy(&field.values, None)),
    }
}

/// Barriers used for the Hölder estimate of the weighted problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Barrier {
    /// `c0/2 + C0 (-|x'|^2 + x_n^2/(1+s) + x_n^(1-s))`.
    Q1 { c0: f64, big_c0: f64 },
    /// `c0 + C0 (-|x'|^2 + (x_n^2 - x_n^(1-s))/(1+s))`.
    Q2 { c0: f64, big_c0: f64 },
    /// `(x_n^2 - x_n^(1-s))/(1+s)` against its limit `x_n^2 log x_n`.
    LimitPair,
}

/// `coef * x_n^(a + b s)`; exponents kept symbolic so that
/// `p (p - 1 + s)` vanishes exactly when it should.
#[derive(Clone, Copy)]
struct Monomial {
    coef: f64,
    a: f64,
    b: f64,
}

impl Monomial {
    fn exponent(&self, s: f64) -> f64 {
        self.a + self.b * s
    }

    /// `(d^2/dx^2 + (s/x) d/dx) x^p = p (p - 1 + s) x^(p-2)`.
    fn operator(&self, s: f64, xn: f64) -> f64 {
        let p = self.exponent(s);
        let q = (self.a - 1.0) + (self.b + 1.0) * s;
        if p == 0.0 || q == 0.0 {
            return 0.0;
        }
        self.coef * p * q * xn.powf(p - 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierRow {
    pub x_tangential: Vec<f64>,
    pub xn: f64,
    /// `Delta q + s q_n / x_n` (barriers) or the pointwise gap (limit pair).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierTable {
    pub barrier: Barrier,
    pub s: f64,
    pub tangential_dims: usize,
    pub rows: Vec<BarrierRow>,
    /// Conormal derivative `lim_{x_n -> 0} (q(x', x_n) - q(x', 0)) / x_n^(1-s)`;
    /// `None` for the limit pair.
    pub conormal: Option<f64>,
    pub min_value: f64,
    pub max_value: f64,
}

impl BarrierTable {
    /// Every residual is `>= 0` (subsolution of the interior equation).
    pub fn all_nonnegative(&self) -> bool {
        self.rows.iter().all(|r| r.value >= 0.0)
    }
}

/// Closed-form residual table of a barrier at sample points `(x', x_n)`,
/// `x_n > 0`.
pub fn barrier_residual(
    s: f64,
    barrier: Barrier,
    tangential_dims: usize,
    points: &[(Vec<f64>, f64)],
) -> Result<BarrierTable> {
    if !(s > -1.0 && s < 0.0) {
        return domain(format!("s = {s} must lie in (-1, 0)"));
    }
    if !(1..=2).contains(&tangential_dims) {
        return domain(format!("tangential dimensions {tangential_dims} not in {{1, 2}}"));
    }
    let e = 1.0 + s;
    // (x_n monomials, coefficient of -|x'|^2, conormal derivative)
    let (monos, tang, conormal) = match barrier {
        Barrier::Q1 { big_c0, .. } => (
            vec![Monomial { coef: big_c0 / e, a: 2.0, b: 0.0 }, Monomial { coef: big_c0, a: 1.0, b: -1.0 }],
            big_c0,
            Some(big_c0),
        ),
        Barrier::Q2 { big_c0, .. } => (
            vec![Monomial { coef: big_c0 / e, a: 2.0, b: 0.0 }, Monomial { coef: -big_c0 / e, a: 1.0, b: -1.0 }],
            big_c0,
            Some(-big_c0 / e),
        ),
        Barrier::LimitPair => (Vec::new(), 0.0, None),
    };
    let mut rows = Vec::with_capacity(points.len());
    for (x, xn) in points {
        if x.len() != tangential_dims || !(*xn > 0.0) || !(*xn <= 1.0) && barrier == Barrier::LimitPair {
            return domain(format!("sample point ({x:?}, {xn}) does not fit the barrier"));
        }
        let value = match barrier {
            Barrier::LimitPair => (limit_pair_lhs(s, *xn) - xn * xn * xn.ln()).abs(),
            _ => -2.0 * tangential_dims as f64 * tang + monos.iter().map(|m| m.operator(s, *xn)).sum::<f64>(),
        };
        rows.push(BarrierRow { x_tangential: x.clone(), xn: *xn, value });
    }
    let min_value = rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let max_value = rows.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    Ok(BarrierTable { barrier, s, tangential_dims, rows, conormal, min_value, max_value })
}

/// `(x^2 - x^(1-s)) / (1+s)` written as `x^2 (1 - x^-(1+s)) / (1+s)`.
fn limit_pair_lhs(s: f64, x: f64) -> f64 {
    let e = 1.0 + s;
    -x * x * (-e * x.ln()).exp_m1() / e
}

/// `sup_{[0,1]} |(x^2 - x^(1-s))/(1+s) - x^2 log x|` over `n` uniform points.
pub fn limit_pair_sup(s: f64, n: usize) -> Result<f64> {
    let pts: Vec<(Vec<f64>, f64)> = (1..=n).map(|k| (vec![0.0], k as f64 / n as f64)).collect();
    Ok(barrier_residual(s, Barrier::LimitPair, 1, &pts)?.max_value)
}

/// Fit of `|v - v(0) - a'.x'| <= C |x|^(1+alpha)` around the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1AlphaFit {
    pub a_prime: Vec<f64>,
    pub v0: f64,
    pub alpha_fit: f64,
    pub c_fit: f64,
    /// RMS residual of the affine fit on the bottom row.
    pub fit_residual: f64,
    pub samples: usize,
}

/// Residuals below this fraction of the field scale count as zero.
const FIT_FLOOR: f64 = 1e-11;

/// Least-squares `v0 + a'.x'` on the lowest row within `radius / 2`, then the
/// Hölder exponent from dyadic shells of the half-ball of `radius` and the
/// smallest constant realizing the bound there.
pub fn c1alpha_fit(field: &HalfField, radius: f64) -> Result<C1AlphaFit> {
    let g = &field.grid;
    let m = g.tangential_dims;
    if !(radius > 0.0 && radius <= g.half_width.min(g.height)) {
        return domain(format!("fit radius {radius} must lie in (0, min(L, H)]"));
    }
    let rl = g.row_len();
    // normal equations for (v0, a')
    let bottom: Vec<([f64; 2], f64)> = (0..rl)
        .map(|t| (g.tangential_point(t), field.values[t]))
        .filter(|(x, _)| x[0].hypot(x[1]) <= 0.5 * radius)
        .collect();
    if bottom.len() < 2 * (m + 1) {
        return domain(format!("{} bottom-row nodes are too few for the fit", bottom.len()));
    }
    let dim = m + 1;
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (x, v) in &bottom {
        let row = [1.0, x[0], x[1]];
        for a in 0..dim {
            atb[a] += row[a] * v;
            for b in 0..dim {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let coef = solve_small(&ata, &atb, dim)?;
    let (v0, a_prime) = (coef[0], coef[1..dim].to_vec());
    let affine = |x: [f64; 2]| v0 + a_prime[0] * x[0] + if m == 2 { a_prime[1] * x[1] } else { 0.0 };
    let fit_residual = (bottom.iter().map(|(x, v)| (v - affine(*x)).powi(2)).sum::<f64>() / bottom.len() as f64).sqrt();
    let mut pts = Vec::new();
    for idx in 0..field.len() {
        let (x, xn) = field.point(idx);
        let r = (x[0] * x[0] + x[1] * x[1] + xn * xn).sqrt();
        if r > 0.0 && r <= radius {
            pts.push((r, (field.values[idx] - affine(x)).abs()));
        }
    }
    if pts.len() < 8 {
        return domain("too few nodes in the half-ball");
    }
    let scale = field.max_abs().max(1.0);
    // worst residual per dyadic shell
    let mut shells: Vec<(f64, f64)> = Vec::new();
    let mut outer = radius;
    while outer > 2.0 * g.h {
        let inner = 0.5 * outer;
        let worst = pts.iter().filter(|(r, _)| *r > inner && *r <= outer).map(|p| p.1).fold(0.0, f64::max);
        if worst > FIT_FLOOR * scale {
            shells.push((outer.ln(), worst.ln()));
        }
        outer = inner;
    }
    let alpha_fit = if shells.len() >= 2 {
        let n = shells.len() as f64;
        let mx = shells.iter().map(|p| p.0).sum::<f64>() / n;
        let my = shells.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = shells.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = shells.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxy / sxx - 1.0).clamp(1e-3, 1.0)
    } else {
        1.0
    };
    let c_fit = pts.iter().map(|(r, e)| e / r.powf(1.0 + alpha_fit)).fold(0.0, f64::max);
    Ok(C1AlphaFit { a_prime, v0, alpha_fit, c_fit, fit_residual, samples: pts.len() })
}

/// Gaussian elimination with partial pivoting on the leading `n x n` block.
fn solve_small(a: &[[f64; 3]; 3], b: &[f64; 3], n: usize) -> Result<Vec<f64>> {
    let mut m = *a;
    let mut r = *b;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap_or(c);
        if m[p][c].abs() < 1e-300 {
            return Err(Error::Consistency("singular fit system".into()));
        }
        m.swap(c, p);
        r.swap(c, p);
        for i in c + 1..n {
            let f = m[i][c] / m[c][c];
            let pivot = m[c];
            for (mij, pj) in m[i][c..n].iter_mut().zip(&pivot[c..n]) {
                *mij -= f * pj;
            }
            r[i] -= f * r[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    Ok(x)
}
