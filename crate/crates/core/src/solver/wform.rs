//! The negative-power energy written in the hodograph variable.
//!
//! With `u = c_alpha w^alpha` the integrand becomes
//! `c_alpha^(-gamma) w^q (|∇w|^2 + k)` with `q = -alpha gamma`, so on the
//! one-dimensional profile `w` is linear. The discrete energy takes `w`
//! piecewise linear (segments in 1D; both diagonal triangulations,
//! averaged, in 2D) and integrates the weight `rho(w)` exactly through
//! divided differences of a second antiderivative `G`, `G'' = rho`.
//!
//! The regularized weight is `rho_delta(w) = w^q ramp(w/delta)`. It
//! vanishes at `w = 0`, and for every `delta` the linear profile still
//! solves the Euler-Lagrange equation, so the continuation introduces no
//! drift of planar free boundaries.

use rayon::prelude::*;

use crate::exponents::pow_any;
use crate::field::Grid;

/// Highest derivative order stored per node (`G^(m)/m!`, `m = 0..=7`).
const ORDERS: usize = 8;
/// Relative spread below which divided differences switch to Taylor sums.
const CLUSTER: f64 = 1e-2;
const TAYLOR_TERMS: usize = 5;

/// `ramp(r) = 10 r^3 - 15 r^4 + 6 r^5` on `[0, 1]`.
const RAMP: [(f64, i32); 3] = [(10.0, 3), (-15.0, 4), (6.0, 5)];

#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    q: f64,
    delta: f64,
    /// `G(delta)`, `G'(delta)` of the inner piece.
    g_d: f64,
    dg_d: f64,
}

/// Falling factorial `e (e-1) ... (e-m+1)`.
fn falling(e: f64, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, i| acc * (e - i as f64))
}

const FACT: [f64; ORDERS] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0];

impl Kernel {
    pub(crate) fn new(q: f64, delta: f64) -> Self {
        assert!(delta > 0.0 && q > -1.0 && q < 0.0);
        let mut k = Self { q, delta, g_d: 0.0, dg_d: 0.0 };
        let c = k.inner(delta);
        k.g_d = c[0];
        k.dg_d = c[1];
        k
    }

    /// `G^(m)(x)/m!` for the piece `x <= delta`.
    fn inner(&self, x: f64) -> [f64; ORDERS] {
        let mut out = [0.0; ORDERS];
        if x <= 0.0 {
            return out;
        }
        let xq = pow_any(x, self.q);
        for &(a, k) in &RAMP {
            let e = self.q + k as f64 + 2.0;
            let coef = a * self.delta.powi(-k) / ((self.q + k as f64 + 1.0) * e);
            for (m, slot) in out.iter_mut().enumerate() {
                let pw = xq * x.powi(k + 2 - m as i32);
                *slot += coef * falling(e, m) * pw / FACT[m];
            }
        }
        out
    }

    /// Taylor coefficients `G^(m)(x)/m!`, `m = 0..=7`.
    pub(crate) fn coeffs(&self, x: f64) -> [f64; ORDERS] {
        if x <= self.delta {
            return self.inner(x);
        }
        let q = self.q;
        let xq = pow_any(x, q);
        let dq = pow_any(self.delta, q);
        let mut out = [0.0; ORDERS];
        let k = 1.0 / ((q + 1.0) * (q + 2.0));
        out[0] = self.g_d + self.dg_d * (x - self.delta) + k * (xq * x * x - dq * self.delta * self.delta)
            - dq * self.delta / (q + 1.0) * (x - self.delta);
        out[1] = self.dg_d + (xq * x - dq * self.delta) / (q + 1.0);
        for m in 2..ORDERS {
            // G^(m) = rho^(m-2) = (q)_(m-2) x^(q-m+2)
            out[m] = falling(q, m - 2) * xq * x.powi(2 - m as i32) / FACT[m];
        }
        out
    }
}

/// Divided difference of `F = G^(shift)` on sorted nodes with per-node
/// Taylor data of `G`.
fn dd(xs: &[f64], cs: &[&[f64; ORDERS]], shift: usize) -> f64 {
    let n = xs.len() - 1;
    let (lo, hi) = (xs[0], xs[n]);
    let coef = |c: &[f64; ORDERS], m: usize| c[m + shift] * FACT[m + shift] / FACT[m];
    if hi - lo <= CLUSTER * hi.abs() || hi == lo {
        if hi == lo {
            return coef(cs[0], n);
        }
        // complete homogeneous sums h_j of the offsets from the first node
        let mut hj = [0.0; TAYLOR_TERMS];
        hj[0] = 1.0;
        for &x in &xs[1..] {
            let y = x - lo;
            for j in 1..TAYLOR_TERMS {
                hj[j] += y * hj[j - 1];
            }
        }
        return (0..TAYLOR_TERMS).take_while(|j| n + j + shift < ORDERS).map(|j| coef(cs[0], n + j) * hj[j]).sum();
    }
    (dd(&xs[1..], &cs[1..], shift) - dd(&xs[..n], &cs[..n], shift)) / (hi - lo)
}

/// Sort `(value, coeffs)` pairs by value.
fn sorted<const N: usize>(mut v: [(f64, &[f64; ORDERS]); N]) -> ([f64; N], [&[f64; ORDERS]; N]) {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    (v.map(|p| p.0), v.map(|p| p.1))
}

/// Mean of `rho` over a segment and its partials in the two endpoints.
fn segment(a: (f64, &[f64; ORDERS]), b: (f64, &[f64; ORDERS])) -> (f64, [f64; 2]) {
    let (xs, cs) = sorted([a, b]);
    let mean = dd(&xs, &cs, 1);
    let da = {
        let (xs, cs) = sorted([a, a, b]);
        dd(&xs, &cs, 1)
    };
    let db = {
        let (xs, cs) = sorted([a, b, b]);
        dd(&xs, &cs, 1)
    };
    (mean, [da, db])
}

/// Mean of `rho` over a triangle and its partials in the three vertices.
fn triangle(v: [(f64, &[f64; ORDERS]); 3]) -> (f64, [f64; 3]) {
    let (xs, cs) = sorted(v);
    let mean = 2.0 * dd(&xs, &cs, 0);
    let mut grad = [0.0; 3];
    for i in 0..3 {
        let (xs, cs) = sorted([v[i], v[0], v[1], v[2]]);
        grad[i] = 2.0 * dd(&xs, &cs, 0);
    }
    (mean, grad)
}

/// Discrete energy in `w` on a grid.
pub(crate) struct WEnergy<'a> {
    pub grid: &'a Grid,
    /// `c_alpha^(-gamma)`
    pub scale: f64,
    /// Potential weight `k` (1, or `c_gamma` when rescaled).
    pub k: f64,
    pub q: f64,
}

/// Triangles of a cell, each as corner offsets; each carries area `h^2/4`.
/// Gradient: `gx = w[gx.0] - w[gx.1]`, `gy = w[gy.0] - w[gy.1]` (over h), corner
/// order `[00, 10, 11, 01]`.
struct Tri {
    verts: [usize; 3],
    gx: (usize, usize),
    gy: (usize, usize),
}

const TRIS: [Tri; 4] = [
    Tri { verts: [0, 1, 2], gx: (1, 0), gy: (2, 1) },
    Tri { verts: [0, 2, 3], gx: (2, 3), gy: (3, 0) },
    Tri { verts: [0, 1, 3], gx: (1, 0), gy: (3, 0) },
    Tri { verts: [1, 2, 3], gx: (2, 3), gy: (2, 1) },
];

impl WEnergy<'_> {
    /// Returns (gradient part, potential part); accumulates the gradient
    /// and the diagonal metric when requested.
    pub(crate) fn eval(
        &self,
        delta: f64,
        w: &[f64],
        grad: Option<&mut [f64]>,
        metric: Option<&mut [f64]>,
    ) -> (f64, f64) {
        let kern = Kernel::new(self.q, delta);
        let coeffs: Vec<[f64; ORDERS]> = w.par_iter().map(|&x| kern.coeffs(x)).collect();
        let g = self.grid;
        let h = g.h();
        let want = grad.is_some() || metric.is_some();
        if g.dim() == 1 {
            let mut d_acc = 0.0;
            let mut p_acc = 0.0;
            let mut gv = vec![0.0; if want { w.len() } else { 0 }];
            let mut mv = vec![0.0; gv.len()];
            for i in 0..w.len() - 1 {
                let (a, b) = (w[i], w[i + 1]);
                if a <= 0.0 && b <= 0.0 {
                    continue;
                }
                let slope = (b - a) / h;
                let (mean, dm) = segment((a, &coeffs[i]), (b, &coeffs[i + 1]));
                let area = self.scale * h;
                d_acc += area * slope * slope * mean;
                p_acc += area * self.k * mean;
                if want {
                    let s = slope * slope + self.k;
                    let ds = 2.0 * slope / h;
                    gv[i] += area * (-ds * mean + s * dm[0]);
                    gv[i + 1] += area * (ds * mean + s * dm[1]);
                    let curv = area * mean * 2.0 / (h * h);
                    mv[i] += curv;
                    mv[i + 1] += curv;
                }
            }
            if let Some(gr) = grad {
                gr.copy_from_slice(&gv);
            }
            if let Some(m) = metric {
                m.copy_from_slice(&mv);
            }
            return (d_acc, p_acc);
        }

        let (nx, ny) = (g.nx(), g.ny());
        let area = self.scale * h * h * 0.25;
        // per cell row: (d, p, gradient/metric contributions on the two node rows)
        let rows: Vec<(f64, f64, Vec<f64>, Vec<f64>)> = (0..ny - 1)
            .into_par_iter()
            .map(|j| {
                let mut d_acc = 0.0;
                let mut p_acc = 0.0;
                let len = if want { 2 * nx } else { 0 };
                let mut gv = vec![0.0; len];
                let mut mv = vec![0.0; len];
                for i in 0..nx - 1 {
                    let idx = [g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1), g.index(i, j + 1)];
                    let loc = [i, i + 1, nx + i + 1, nx + i];
                    let vals = idx.map(|k| w[k]);
                    if vals.iter().all(|&v| v <= 0.0) {
                        continue;
                    }
                    for t in &TRIS {
                        let gx = (vals[t.gx.0] - vals[t.gx.1]) / h;
                        let gy = (vals[t.gy.0] - vals[t.gy.1]) / h;
                        let v3 = t.verts.map(|c| (vals[c], &coeffs[idx[c]]));
                        if v3.iter().all(|p| p.0 <= 0.0) {
                            continue;
                        }
                        let (mean, dm) = triangle(v3);
                        let sq = gx * gx + gy * gy;
                        d_acc += area * sq * mean;
                        p_acc += area * self.k * mean;
                        if want {
                            let s = sq + self.k;
                            for (slot, &c) in t.verts.iter().enumerate() {
                                gv[loc[c]] += area * s * dm[slot];
                            }
                            let (f, b) = (2.0 * gx / h * area * mean, 2.0 * gy / h * area * mean);
                            gv[loc[t.gx.0]] += f;
                            gv[loc[t.gx.1]] -= f;
                            gv[loc[t.gy.0]] += b;
                            gv[loc[t.gy.1]] -= b;
                            let curv = area * mean * 2.0 / (h * h);
                            for c in [t.gx.0, t.gx.1, t.gy.0, t.gy.1] {
                                mv[loc[c]] += curv;
                            }
                        }
                    }
                }
                (d_acc, p_acc, gv, mv)
            })
            .collect();
        let mut d_acc = 0.0;
        let mut p_acc = 0.0;
        let mut grad = grad;
        let mut metric = metric;
        if let Some(gr) = grad.as_deref_mut() {
            gr.iter_mut().for_each(|x| *x = 0.0);
        }
        if let Some(m) = metric.as_deref_mut() {
            m.iter_mut().for_each(|x| *x = 0.0);
        }
        for (j, (d, p, gv, mv)) in rows.into_iter().enumerate() {
            d_acc += d;
            p_acc += p;
            if let Some(gr) = grad.as_deref_mut() {
                gr[j * nx..(j + 2) * nx].iter_mut().zip(&gv).for_each(|(a, b)| *a += b);
            }
            if let Some(m) = metric.as_deref_mut() {
                m[j * nx..(j + 2) * nx].iter_mut().zip(&mv).for_each(|(a, b)| *a += b);
            }
        }
        (d_acc, p_acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::pow_pos;

    fn rho(q: f64, delta: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let r = (x / delta).min(1.0);
        pow_pos(x, q) * r * r * r * (10.0 - 15.0 * r + 6.0 * r * r)
    }

    /// Composite Simpson mean of rho along a segment.
    fn seg_oracle(q: f64, delta: f64, a: f64, b: f64) -> f64 {
        let n = 20000;
        let f = |t: f64| rho(q, delta, a + (b - a) * t);
        let mut s = f(0.0) + f(1.0);
        for k in 1..n {
            s += f(k as f64 / n as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s / (3.0 * n as f64)
    }

    #[test]
    fn segment_means_match_quadrature() {
        let (q, delta) = (-0.6, 0.3);
        let k = Kernel::new(q, delta);
        for (a, b) in [(0.0, 0.2), (0.0, 1.0), (0.1, 0.9), (0.5, 0.5001), (0.29, 0.31), (1.0, 2.0), (0.0, 0.0)] {
            let (mean, _) = segment((a, &k.coeffs(a)), (b, &k.coeffs(b)));
            let ex = seg_oracle(q, delta, a, b);
            assert!((mean - ex).abs() < 1e-8 * ex.max(1e-3), "[{a},{b}]: {mean} vs {ex}");
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let (q, delta) = (-0.5, 0.25);
        let k = Kernel::new(q, delta);
        let tri = |v: [f64; 3]| {
            let c = v.map(|x| k.coeffs(x));
            triangle([(v[0], &c[0]), (v[1], &c[1]), (v[2], &c[2])])
        };
        for v in [[0.0, 0.1, 0.6], [0.3, 0.31, 0.9], [0.5, 0.5, 0.5], [0.2, 0.4, 0.4], [1.0, 1.2, 1.5], [0.0, 0.0, 0.4]]
        {
            let (_, g) = tri(v);
            for i in 0..3 {
                if v[i] == 0.0 {
                    continue;
                }
                let e = 1e-6;
                let (mut p, mut m) = (v, v);
                p[i] += e;
                m[i] -= e;
                let fd = (tri(p).0 - tri(m).0) / (2.0 * e);
                assert!((fd - g[i]).abs() < 1e-5 * fd.abs().max(1.0), "{v:?} {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn triangle_constant_and_linear_limits() {
        let (q, delta) = (-0.4, 0.1);
        let k = Kernel::new(q, delta);
        let x = 0.7;
        let c = k.coeffs(x);
        let (mean, _) = triangle([(x, &c), (x, &c), (x, &c)]);
        assert!((mean - pow_any(x, q)).abs() < 1e-13);
        // a triangle whose values vary in one direction only reduces to 1D
        let (a, b) = (0.05, 0.8);
        let ca = k.coeffs(a);
        let cb = k.coeffs(b);
        let (t, _) = triangle([(a, &ca), (b, &cb), (b, &cb)]);
        // mean over triangle = 2 ∫_0^1 rho(a + (b-a) s) s ds
        let n = 20000;
        let mut acc = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64;
            acc += 2.0 * rho(q, delta, a + (b - a) * s) * s / n as f64;
        }
        assert!((t - acc).abs() < 1e-6, "{t} vs {acc}");
    }
}
