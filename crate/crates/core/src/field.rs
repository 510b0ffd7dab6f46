//! Node-centred uniform grids in one and two dimensions, scalar fields on
//! them, the standard difference stencils and the CSV dump format.
//!
//! Nodes are stored row-major with `x` varying fastest: index `j * nx + i`.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: [[f64; 2]; 2],
    n_cells: [usize; 2],
    h: f64,
}

impl Grid {
    pub fn new_1d(min: f64, max: f64, n_cells: usize) -> Result<Self> {
        Self::build(1, [[min, max], [0.0, 0.0]], [n_cells, 0])
    }

    /// A rectangle; both axes must share the same spacing.
    pub fn new_2d(x: [f64; 2], y: [f64; 2], nx_cells: usize, ny_cells: usize) -> Result<Self> {
        Self::build(2, [x, y], [nx_cells, ny_cells])
    }

    /// Square `[-half, half]^2`-style box centred at `center`, spacing `h`.
    pub fn square(center: [f64; 2], half: f64, h: f64) -> Result<Self> {
        let n = (2.0 * half / h).round() as usize;
        let half = 0.5 * n as f64 * h;
        Self::new_2d([center[0] - half, center[0] + half], [center[1] - half, center[1] + half], n, n)
    }

    fn build(dim: usize, extents: [[f64; 2]; 2], n_cells: [usize; 2]) -> Result<Self> {
        let mut h = f64::NAN;
        for axis in 0..dim {
            let [lo, hi] = extents[axis];
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return domain(format!("axis {axis}: extents [{lo}, {hi}] must be finite and increasing"));
            }
            if n_cells[axis] < MIN_CELLS {
                return domain(format!("axis {axis}: {} cells, need at least {MIN_CELLS}", n_cells[axis]));
            }
            let ha = (hi - lo) / n_cells[axis] as f64;
            if axis == 0 {
                h = ha;
            } else if ((ha - h) / h).abs() > 1e-12 {
                return domain(format!("unequal spacing per axis: {h} vs {ha}"));
            }
        }
        Ok(Self { dim, extents, n_cells, h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn extents(&self) -> &[[f64; 2]] {
        &self.extents[..self.dim]
    }

    pub fn n_cells(&self) -> &[usize] {
        &self.n_cells[..self.dim]
    }

    /// Nodes along x.
    pub fn nx(&self) -> usize {
        self.n_cells[0] + 1
    }

    /// Nodes along y (1 for a 1D grid).
    pub fn ny(&self) -> usize {
        if self.dim == 2 {
            self.n_cells[1] + 1
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx(), idx / self.nx())
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.extents[0][0] + i as f64 * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        if self.dim == 2 {
            self.extents[1][0] + j as f64 * self.h
        } else {
            0.0
        }
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.ij(idx);
        [self.x(i), self.y(j)]
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j) = self.ij(idx);
        i == 0 || i + 1 == self.nx() || (self.dim == 2 && (j == 0 || j + 1 == self.ny()))
    }

    /// Facets the node lies on.
    pub fn facets_of(&self, idx: usize) -> impl Iterator<Item = Facet> + '_ {
        let (i, j) = self.ij(idx);
        Facet::all(self.dim).iter().copied().filter(move |f| match f {
            Facet::Left => i == 0,
            Facet::Right => i + 1 == self.nx(),
            Facet::Bottom => j == 0,
            Facet::Top => j + 1 == self.ny(),
        })
    }

    /// Whether `p` lies in the closed box, with a rounding allowance.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let slack = 1e-12 * self.h;
        (0..self.dim).all(|a| p[a] >= self.extents[a][0] - slack && p[a] <= self.extents[a][1] + slack)
    }

    /// Whether the closed ball `B_r(c)` fits in the box.
    pub fn contains_ball(&self, c: [f64; 2], r: f64) -> bool {
        let slack = 1e-9 * self.h;
        (0..self.dim).all(|a| c[a] - r >= self.extents[a][0] - slack && c[a] + r <= self.extents[a][1] + slack)
    }

    /// Node indices whose position lies in the closed ball `B_r(c)`.
    pub fn nodes_in_ball(&self, c: [f64; 2], r: f64) -> Vec<usize> {
        let h = self.h;
        let lo_i = (((c[0] - r - self.extents[0][0]) / h).floor().max(0.0)) as usize;
        let hi_i = ((((c[0] + r - self.extents[0][0]) / h).ceil()) as usize).min(self.nx() - 1);
        let (lo_j, hi_j) = if self.dim == 2 {
            (
                (((c[1] - r - self.extents[1][0]) / h).floor().max(0.0)) as usize,
                ((((c[1] + r - self.extents[1][0]) / h).ceil()) as usize).min(self.ny() - 1),
            )
        } else {
            (0, 0)
        };
        let r2 = r * r * (1.0 + 1e-12);
        let mut out = Vec::new();
        for j in lo_j..=hi_j {
            for i in lo_i..=hi_i {
                let dx = self.x(i) - c[0];
                let dy = self.y(j) - c[1];
                if dx * dx + dy * dy <= r2 {
                    out.push(self.index(i, j));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Facet {
    Left,
    Right,
    Bottom,
    Top,
}

impl Facet {
    pub fn all(dim: usize) -> &'static [Facet] {
        const ALL: [Facet; 4] = [Facet::Left, Facet::Right, Facet::Bottom, Facet::Top];
        &ALL[..2 * dim]
    }
}

pub type Trace = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FacetCondition {
    Dirichlet(Trace),
    /// Natural (zero-flux) condition; nodes stay free.
    Free,
}

impl fmt::Debug for FacetCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dirichlet(_) => f.write_str("Dirichlet(..)"),
            Self::Free => f.write_str("Free"),
        }
    }
}

/// One condition per outer facet, indexed like [`Facet::all`].
#[derive(Debug, Clone)]
pub struct BoundarySpec {
    conditions: Vec<FacetCondition>,
}

impl BoundarySpec {
    pub fn new(dim: usize, conditions: Vec<(Facet, FacetCondition)>) -> Result<Self> {
        let facets = Facet::all(dim);
        let mut slots: Vec<Option<FacetCondition>> = vec![None; facets.len()];
        for (facet, cond) in conditions {
            let Some(k) = facets.iter().position(|f| *f == facet) else {
                return domain(format!("facet {facet:?} does not exist in dimension {dim}"));
            };
            if slots[k].replace(cond).is_some() {
                return domain(format!("facet {facet:?} assigned twice"));
            }
        }
        let conditions = slots
            .into_iter()
            .zip(facets)
            .map(|(c, f)| c.ok_or_else(|| Error::Domain(format!("facet {f:?} has no condition"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { conditions })
    }

    /// Same Dirichlet trace on every facet.
    pub fn dirichlet_all(dim: usize, trace: Trace) -> Self {
        Self { conditions: vec![FacetCondition::Dirichlet(trace); 2 * dim] }
    }

    /// 1D endpoint values.
    pub fn interval(left: f64, right: f64) -> Self {
        Self {
            conditions: vec![
                FacetCondition::Dirichlet(Arc::new(move |_| left)),
                FacetCondition::Dirichlet(Arc::new(move |_| right)),
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.conditions.len() / 2
    }

    pub fn condition(&self, facet: Facet) -> &FacetCondition {
        let k = Facet::all(self.dim()).iter().position(|f| *f == facet).expect("facet in range");
        &self.conditions[k]
    }

    /// Dirichlet value of a node, if any facet pins it.
    pub fn pinned_value(&self, grid: &Grid, idx: usize) -> Option<f64> {
        grid.facets_of(idx).find_map(|f| match self.condition(f) {
            FacetCondition::Dirichlet(g) => Some(g(grid.point(idx))),
            FacetCondition::Free => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    nonneg: bool,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return domain(format!("{} values for a grid of {} nodes", values.len(), grid.len()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("non-finite value {} at node {k}", values[k]));
        }
        let nonneg = values.iter().all(|&v| v >= 0.0);
        Ok(Self { grid, values, nonneg })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(grid.point(k))).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n], nonneg: true }
    }

    /// Derived field whose boundary entries are NaN markers.
    fn with_markers(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values, nonneg: false }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Max of |v| over entries that are not NaN markers.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().filter(|v| !v.is_nan()).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max |self - other| over entries where both are defined.
    pub fn max_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| !a.is_nan() && !b.is_nan())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Quadrature-weighted L2 norm of `self - other` (trapezoid weights).
    pub fn l2_diff(&self, other: &ScalarField) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for k in 0..g.len() {
            let (i, j) = g.ij(k);
            let mut w = g.h().powi(g.dim() as i32);
            if i == 0 || i + 1 == g.nx() {
                w *= 0.5;
            }
            if g.dim() == 2 && (j == 0 || j + 1 == g.ny()) {
                w *= 0.5;
            }
            let d = self.values[k] - other.values[k];
            acc += w * d * d;
        }
        acc.sqrt()
    }

    /// Second-order centred Laplacian at interior nodes; boundary nodes are NaN.
    pub fn laplacian(&self) -> ScalarField {
        let g = &self.grid;
        let inv_h2 = 1.0 / (g.h() * g.h());
        let mut out = vec![f64::NAN; g.len()];
        for (k, slot) in out.iter_mut().enumerate() {
            if g.is_boundary(k) {
                continue;
            }
            let (i, j) = g.ij(k);
            let c = self.values[k];
            let mut lap = self.at(i + 1, j) - 2.0 * c + self.at(i - 1, j);
            if g.dim() == 2 {
                lap += self.at(i, j + 1) - 2.0 * c + self.at(i, j - 1);
            }
            *slot = lap * inv_h2;
        }
        Self::with_markers(g.clone(), out)
    }

    /// Centred-difference gradient components at interior nodes.
    pub fn gradient(&self) -> Vec<ScalarField> {
        let g = &self.grid;
        let inv_2h = 0.5 / g.h();
        (0..g.dim())
            .map(|axis| {
                let mut out = vec![f64::NAN; g.len()];
                for (k, slot) in out.iter_mut().enumerate() {
                    if g.is_boundary(k) {
                        continue;
                    }
                    let (i, j) = g.ij(k);
                    *slot = if axis == 0 {
                        (self.at(i + 1, j) - self.at(i - 1, j)) * inv_2h
                    } else {
                        (self.at(i, j + 1) - self.at(i, j - 1)) * inv_2h
                    };
                }
                Self::with_markers(g.clone(), out)
            })
            .collect()
    }

    /// Multilinear interpolation at a point inside the grid box.
    pub fn sample(&self, p: [f64; 2]) -> Result<f64> {
        let g = &self.grid;
        if !g.contains(p) {
            return domain(format!("sample point {p:?} outside grid extents {:?}", g.extents()));
        }
        let locate = |axis: usize, n_nodes: usize| {
            let t = ((p[axis] - g.extents[axis][0]) / g.h()).clamp(0.0, (n_nodes - 1) as f64);
            let i = (t.floor() as usize).min(n_nodes - 2);
            (i, t - i as f64)
        };
        let lerp = |a: f64, b: f64, f: f64| if f == 1.0 { b } else { a + (b - a) * f };
        let (i, fx) = locate(0, g.nx());
        if g.dim() == 1 {
            return Ok(lerp(self.at(i, 0), self.at(i + 1, 0), fx));
        }
        let (j, fy) = locate(1, g.ny());
        let lo = lerp(self.at(i, j), self.at(i + 1, j), fx);
        let hi = lerp(self.at(i, j + 1), self.at(i + 1, j + 1), fx);
        Ok(lerp(lo, hi, fy))
    }

    /// Write the CSV dump: `# dim,h,extents...` then `x[,y],value` per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let g = &self.grid;
        write!(out, "# {},{:.16e}", g.dim(), g.h())?;
        for [lo, hi] in g.extents() {
            write!(out, ",{lo:.16e},{hi:.16e}")?;
        }
        writeln!(out)?;
        for (k, v) in self.values.iter().enumerate() {
            let p = g.point(k);
            if g.dim() == 1 {
                writeln!(out, "{:.16e},{v:.16e}", p[0])?;
            } else {
                writeln!(out, "{:.16e},{:.16e},{v:.16e}", p[0], p[1])?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Parse a CSV dump. NaN markers are accepted and preserved.
    pub fn read_csv<R: Read>(input: R, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut lines = BufReader::new(input).lines();
        let header = lines.next().ok_or_else(|| perr(1, "empty file".into()))??;
        let header = header.strip_prefix('#').ok_or_else(|| perr(1, "header must start with '#'".into()))?;
        let nums: Vec<f64> = header
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(1, format!("bad header number: {e}")))?;
        if nums.len() < 2 {
            return Err(perr(1, "header needs dim and h".into()));
        }
        let dim = nums[0] as usize;
        if !(dim == 1 || dim == 2) || nums.len() != 2 + 2 * dim {
            return Err(perr(1, format!("header has {} entries for dim {dim}", nums.len())));
        }
        let h = nums[1];
        let cells = |a: usize| ((nums[3 + 2 * a] - nums[2 + 2 * a]) / h).round() as usize;
        let grid = if dim == 1 {
            Grid::new_1d(nums[2], nums[3], cells(0))
        } else {
            Grid::new_2d([nums[2], nums[3]], [nums[4], nums[5]], cells(0), cells(1))
        }
        .map_err(|e| perr(1, e.to_string()))?;
        let mut values = Vec::with_capacity(grid.len());
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let last = line.rsplit(',').next().unwrap_or("");
            let v: f64 = last.trim().parse().map_err(|e| perr(k + 2, format!("bad value: {e}")))?;
            values.push(v);
        }
        if values.len() != grid.len() {
            return Err(perr(0, format!("{} rows for a grid of {} nodes", values.len(), grid.len())));
        }
        let nonneg = values.iter().all(|&v| v >= 0.0);
        Ok(Self { grid, values, nonneg })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, path)
    }
}
