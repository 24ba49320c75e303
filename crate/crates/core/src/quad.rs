// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Composite Simpson rules on uniform grids, with halving refinement.

use gauss_quad::GaussHermite;
use std::num::NonZeroUsize;

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};

/// Composite Simpson rule with `intervals` (rounded up to even) subintervals.
pub fn simpson(f: impl Fn(f64) -> C64, a: f64, b: f64, intervals: usize) -> C64 {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(a + k as f64 * h) * w;
    }
    acc * (h / 3.0)
}

/// Repeatedly halve the Simpson step until successive results differ by less than `tol`.
pub fn simpson_refined(
    f: impl Fn(f64) -> C64,
    a: f64,
    b: f64,
    start_intervals: usize,
    tol: f64,
    max_halvings: usize,
    what: &str,
) -> Result<C64> {
    let mut n = start_intervals.max(2);
    let mut prev = simpson(&f, a, b, n);
    let mut change = f64::INFINITY;
    for _ in 0..max_halvings {
        n *= 2;
        let next = simpson(&f, a, b, n);
        change = (next - prev).norm();
        prev = next;
        if change < tol {
            return Ok(prev);
        }
    }
    Err(Error::NonConvergence {
        what: what.to_string(),
        residual: change,
    })
}

/// Values of `∫_a^{t_k} g` at the nodes `t_k = a + k h`, one Simpson panel per interval
/// (the midpoint is sampled), so every node carries a fourth-order cumulative integral.
pub fn cumulative_simpson(g: impl Fn(f64) -> C64, a: f64, h: f64, nodes: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(nodes);
    let mut acc = ZERO;
    let mut left = g(a);
    out.push(acc);
    for k in 1..nodes {
        let t0 = a + (k - 1) as f64 * h;
        let right = g(t0 + h);
        acc += (left + g(t0 + 0.5 * h) * 4.0 + right) * (h / 6.0);
        out.push(acc);
        left = right;
    }
    out
}

/// Nodes and weights for averaging over the density `e^{-x²/s²}/√(π s²)`.
/// The weights are renormalized to sum to one; `s = 0` collapses to the single node `x = 0`.
pub fn gaussian_average_rule(nodes: usize, s: f64) -> Result<Vec<(f64, f64)>> {
    let n = NonZeroUsize::new(nodes)
        .ok_or_else(|| Error::InvalidInput("quadrature needs at least one node".into()))?;
    if s == 0.0 {
        return Ok(vec![(0.0, 1.0)]);
    }
    let rule = GaussHermite::new(n);
    let pairs = rule.as_node_weight_pairs();
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(pairs.iter().map(|&(x, w)| (s * x, w / total)).collect())
}
