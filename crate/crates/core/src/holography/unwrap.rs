//! Quality-guided 2D phase unwrapping by sorted reliability of edges.
//!
//! Pixels are scored by the inverse of their second-difference magnitude; edges
//! between neighbours are processed from most to least reliable and merge
//! pixel groups, shifting the smaller group by the multiple of 2π that makes
//! the edge continuous. Ties are broken by edge index, so the result is
//! deterministic.

use std::f64::consts::PI;

use ndarray::Array2;

const TAU: f64 = 2.0 * PI;

/// Wraps into `(-π, π]`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    x - TAU * ((x - PI) / TAU).ceil()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnwrapResult {
    pub phase: Array2<f64>,
    /// Number of 2×2 loops whose wrapped differences do not sum to zero.
    pub residues: usize,
}

impl UnwrapResult {
    pub fn has_residues(&self) -> bool {
        self.residues > 0
    }
}

pub fn count_residues(wrapped: &Array2<f64>) -> usize {
    let (nx, ny) = wrapped.dim();
    let mut count = 0;
    for i in 0..nx.saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            let a = wrapped[[i, j]];
            let b = wrapped[[i + 1, j]];
            let c = wrapped[[i + 1, j + 1]];
            let d = wrapped[[i, j + 1]];
            let s = wrap(b - a) + wrap(c - b) + wrap(d - c) + wrap(a - d);
            if s.abs() > PI {
                count += 1;
            }
        }
    }
    count
}

fn reliability(wrapped: &Array2<f64>) -> Array2<f64> {
    let (nx, ny) = wrapped.dim();
    let mut r = Array2::zeros((nx, ny));
    if nx < 3 || ny < 3 {
        return r;
    }
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            let c = wrapped[[i, j]];
            let d = |a: f64, b: f64| wrap(a - c) - wrap(c - b);
            let h = d(wrapped[[i - 1, j]], wrapped[[i + 1, j]]);
            let v = d(wrapped[[i, j - 1]], wrapped[[i, j + 1]]);
            let d1 = d(wrapped[[i - 1, j - 1]], wrapped[[i + 1, j + 1]]);
            let d2 = d(wrapped[[i - 1, j + 1]], wrapped[[i + 1, j - 1]]);
            let dd = (h * h + v * v + d1 * d1 + d2 * d2).sqrt();
            r[[i, j]] = 1.0 / (dd + 1e-12);
        }
    }
    r
}

/// Unwraps a phase map with values in `(-π, π]`.
///
/// The output equals the input plus a per-pixel multiple of 2π. For surfaces
/// whose neighbour differences stay below π, it differs from the true surface
/// by a single global multiple of 2π.
pub fn unwrap_phase(wrapped: &Array2<f64>) -> UnwrapResult {
    let (nx, ny) = wrapped.dim();
    let n = nx * ny;
    let rel = reliability(wrapped);
    let flat = |i: usize, j: usize| i * ny + j;

    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(2 * n);
    for i in 0..nx {
        for j in 0..ny {
            if i + 1 < nx {
                edges.push((rel[[i, j]] + rel[[i + 1, j]], flat(i, j), flat(i + 1, j)));
            }
            if j + 1 < ny {
                edges.push((rel[[i, j]] + rel[[i, j + 1]], flat(i, j), flat(i, j + 1)));
            }
        }
    }
    // descending reliability, stable on construction order
    edges.sort_by(|a, b| b.0.total_cmp(&a.0));

    let values: Vec<f64> = wrapped.iter().copied().collect();
    let mut turns = vec![0i64; n];
    let mut group: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|p| vec![p]).collect();

    for &(_, a, b) in &edges {
        let (ga, gb) = (group[a], group[b]);
        if ga == gb {
            continue;
        }
        let ua = values[a] + TAU * turns[a] as f64;
        let ub = values[b] + TAU * turns[b] as f64;
        let shift = ((ua - ub) / TAU).round() as i64;
        // move the smaller group into the larger one
        let (keep, moved, delta) = if members[ga].len() >= members[gb].len() {
            (ga, gb, shift)
        } else {
            (gb, ga, -shift)
        };
        let moving = std::mem::take(&mut members[moved]);
        for &p in &moving {
            turns[p] += delta;
            group[p] = keep;
        }
        members[keep].extend(moving);
    }

    let phase = Array2::from_shape_fn((nx, ny), |(i, j)| {
        let p = flat(i, j);
        values[p] + TAU * turns[p] as f64
    });
    UnwrapResult { phase, residues: count_residues(wrapped) }
}
