//! Marching-squares level sets on 2D grids.

use crate::field::Grid;

pub type Segment = [[f64; 2]; 2];

/// Grid edge: `2 * node` for the edge to the right neighbour,
/// `2 * node + 1` for the edge to the upper neighbour.
pub type EdgeId = usize;

/// Position of the level crossing on an edge, interpolated linearly from
/// the lower-index node so both adjacent cells agree bit for bit.
pub fn edge_point(grid: &Grid, f: &[f64], level: f64, e: EdgeId) -> [f64; 2] {
    let a = e / 2;
    let b = if e.is_multiple_of(2) { a + 1 } else { a + grid.nx() };
    let (pa, pb) = (grid.point(a), grid.point(b));
    let t = ((level - f[a]) / (f[b] - f[a])).clamp(0.0, 1.0);
    [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
}

/// Marching-squares segments of `{f = level}` as pairs of crossed edges,
/// with the index of the cell (`j * (nx-1) + i`) that produced them.
///
/// Nodes with `f > level` are inside. Saddle cells are resolved by the
/// cell-centre average.
pub fn level_edges(grid: &Grid, f: &[f64], level: f64) -> Vec<(usize, EdgeId, EdgeId)> {
    assert_eq!(grid.dim(), 2);
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let idx = [grid.index(i, j), grid.index(i + 1, j), grid.index(i + 1, j + 1), grid.index(i, j + 1)];
            let v = idx.map(|k| f[k]);
            let case = (0..4).fold(0u8, |c, k| c | (u8::from(v[k] > level) << k));
            if case == 0 || case == 15 {
                continue;
            }
            // cell edges: 0 bottom, 1 right, 2 top, 3 left
            let edges = [2 * idx[0], 2 * idx[1] + 1, 2 * idx[3], 2 * idx[0] + 1];
            let centre_inside = v.iter().sum::<f64>() * 0.25 > level;
            let pairs: &[(usize, usize)] = match case {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(2, 3)],
                5 if centre_inside => &[(0, 1), (2, 3)],
                5 => &[(3, 0), (1, 2)],
                10 if centre_inside => &[(3, 0), (1, 2)],
                10 => &[(0, 1), (2, 3)],
                _ => unreachable!(),
            };
            let cell = j * (nx - 1) + i;
            for &(a, b) in pairs {
                out.push((cell, edges[a], edges[b]));
            }
        }
    }
    out
}

/// Segments of `{f = level}` with linear interpolation along cell edges.
pub fn level_segments(grid: &Grid, f: &[f64], level: f64) -> Vec<Segment> {
    level_edges(grid, f, level)
        .into_iter()
        .map(|(_, a, b)| [edge_point(grid, f, level, a), edge_point(grid, f, level, b)])
        .collect()
}

/// Join edge pairs into ordered chains; returns `(edges, closed)` per chain.
pub fn chain_edges(pairs: &[(usize, EdgeId, EdgeId)]) -> Vec<(Vec<EdgeId>, bool)> {
    use std::collections::BTreeMap;
    let mut adj: BTreeMap<EdgeId, Vec<usize>> = BTreeMap::new();
    for (k, &(_, a, b)) in pairs.iter().enumerate() {
        adj.entry(a).or_default().push(k);
        adj.entry(b).or_default().push(k);
    }
    let mut used = vec![false; pairs.len()];
    let mut chains = Vec::new();
    let walk = |start: EdgeId, used: &mut Vec<bool>| {
        let mut chain = vec![start];
        let mut cur = start;
        while let Some(&k) = adj[&cur].iter().find(|&&k| !used[k]) {
            used[k] = true;
            let (_, a, b) = pairs[k];
            cur = if a == cur { b } else { a };
            chain.push(cur);
        }
        chain
    };
    // open chains start at edges used once
    let ends: Vec<EdgeId> = adj.iter().filter(|(_, v)| v.len() == 1).map(|(&e, _)| e).collect();
    for e in ends {
        if adj[&e].iter().all(|&k| used[k]) {
            continue;
        }
        chains.push((walk(e, &mut used), false));
    }
    for k in 0..pairs.len() {
        if !used[k] {
            let mut c = walk(pairs[k].1, &mut used);
            let closed = c.len() > 2 && c.first() == c.last();
            if closed {
                c.pop();
            }
            chains.push((c, closed));
        }
    }
    chains
}

/// 3x3 box average of a 0/1 indicator, replicating edge values.
pub fn smooth_indicator(grid: &Grid, ind: &[bool]) -> Vec<f64> {
    let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
    let at = |i: isize, j: isize| {
        let i = i.clamp(0, nx - 1) as usize;
        let j = j.clamp(0, ny - 1) as usize;
        f64::from(u8::from(ind[grid.index(i, j)]))
    };
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let mut s = 0.0;
            for dj in -1..=1 {
                for di in -1..=1 {
                    s += at(i + di, j + dj);
                }
            }
            out[grid.index(i as usize, j as usize)] = s / 9.0;
        }
    }
    out
}

pub fn segment_length(s: &Segment) -> f64 {
    ((s[1][0] - s[0][0]).powi(2) + (s[1][1] - s[0][1]).powi(2)).sqrt()
}

/// Length of the part of `s` inside the closed disk `B_r(c)`.
pub fn clipped_length(s: &Segment, c: [f64; 2], r: f64) -> f64 {
    let d = [s[1][0] - s[0][0], s[1][1] - s[0][1]];
    let m = [s[0][0] - c[0], s[0][1] - c[1]];
    let a = d[0] * d[0] + d[1] * d[1];
    if a == 0.0 {
        return 0.0;
    }
    let b = 2.0 * (m[0] * d[0] + m[1] * d[1]);
    let cc = m[0] * m[0] + m[1] * m[1] - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc <= 0.0 {
        return 0.0;
    }
    let sq = disc.sqrt();
    let t0 = ((-b - sq) / (2.0 * a)).max(0.0);
    let t1 = ((-b + sq) / (2.0 * a)).min(1.0);
    if t1 <= t0 {
        0.0
    } else {
        (t1 - t0) * a.sqrt()
    }
}

/// Interface length of the 0/1 indicator: level 1/2 of its 3x3 box average.
pub fn indicator_perimeter(grid: &Grid, ind: &[bool]) -> f64 {
    let smooth = smooth_indicator(grid, ind);
    level_segments(grid, &smooth, 0.5).iter().map(segment_length).sum()
}
