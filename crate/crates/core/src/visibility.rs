//! Natural visibility graphs of univariate time series.
//!
//! Sample `t` sits at `(t, series[t])`. Samples `m < n` are linked when every
//! sample strictly between them lies strictly below the chord joining them;
//! a point exactly on the chord blocks visibility, so a constant series
//! yields a path.
//!
//! The chord test is decided exactly (error-free products and expansion
//! sums), so the naive and divide-and-conquer builders always agree.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph on the sample indices of a series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityGraph {
    node_count: usize,
    /// Sorted `(m, n)` pairs with `m < n`.
    edges: Vec<(u32, u32)>,
}

impl VisibilityGraph {
    /// Builds a graph from an arbitrary edge list (sorted and deduplicated).
    pub fn from_edges(node_count: usize, mut edges: Vec<(u32, u32)>) -> Result<Self> {
        for e in &mut edges {
            if e.0 == e.1 || e.0.max(e.1) as usize >= node_count {
                return Err(Error::Input(format!("invalid edge {e:?} for {node_count} nodes")));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self { node_count, edges })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &(a, b) in &self.edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        deg
    }

    /// Edge list text, one sorted `m n` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(self.edges.len() * 8);
        for (a, b) in &self.edges {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn write_edge_list<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(self.to_edge_list().as_bytes())?;
        Ok(())
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Sign of a sum of doubles, computed exactly by growing a nonoverlapping
/// expansion.
fn exact_sum_sign(terms: &[f64]) -> std::cmp::Ordering {
    let mut expansion: Vec<f64> = Vec::with_capacity(terms.len());
    for &t in terms {
        let mut q = t;
        for h in expansion.iter_mut() {
            let (s, e) = two_sum(q, *h);
            *h = e;
            q = s;
        }
        expansion.push(q);
    }
    expansion
        .iter()
        .rev()
        .find(|v| **v != 0.0)
        .map_or(std::cmp::Ordering::Equal, |v| v.partial_cmp(&0.0).expect("finite"))
}

/// True when sample `p` lies strictly below the chord from `m` to `n`
/// (`m < p < n`), i.e. `b_p (n-m) < b_m (n-p) + b_n (p-m)`.
#[inline]
pub(crate) fn below_chord(series: &[f64], m: usize, p: usize, n: usize) -> bool {
    let (bm, bp, bn) = (series[m], series[p], series[n]);
    let (wm, wn, wp) = ((n - p) as f64, (p - m) as f64, (n - m) as f64);
    let approx = bm * wm + bn * wn - bp * wp;
    let magnitude = bm.abs() * wm + bn.abs() * wn + bp.abs() * wp;
    // Plain evaluation is trusted when it clears its rounding error bound.
    if approx.abs() > 8.0 * f64::EPSILON * magnitude {
        return approx > 0.0;
    }
    let (a0, a1) = two_product(bm, wm);
    let (b0, b1) = two_product(bn, wn);
    let (c0, c1) = two_product(-bp, wp);
    exact_sum_sign(&[a1, b1, c1, a0, b0, c0]) == std::cmp::Ordering::Greater
}

fn validate(series: &[f64]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::Input(format!(
            "visibility graph needs at least 2 samples, got {}",
            series.len()
        )));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("sample {i} is not finite ({})", series[i])));
    }
    if series.len() > u32::MAX as usize {
        return Err(Error::Capability("series longer than u32::MAX".into()));
    }
    Ok(())
}

/// Reference builder: tests every pair against every intermediate sample.
/// Cubic in the worst case; kept as the oracle for [`build_visibility_fast`].
pub fn build_visibility(series: &[f64]) -> Result<VisibilityGraph> {
    validate(series)?;
    let n = series.len();
    let mut edges = Vec::new();
    for m in 0..n - 1 {
        for k in m + 1..n {
            if (m + 1..k).all(|p| below_chord(series, m, p, k)) {
                edges.push((m as u32, k as u32));
            }
        }
    }
    Ok(VisibilityGraph { node_count: n, edges })
}

/// Divide and conquer on the maximum: no chord can pass over the highest
/// sample of a range, so the maximum only links inside its range and the
/// two sides are independent. Each side is scanned from the maximum while
/// tracking the sample that currently bounds the view.
pub fn build_visibility_fast(series: &[f64]) -> Result<VisibilityGraph> {
    validate(series)?;
    let n = series.len();
    let mut edges = Vec::with_capacity(4 * n);
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if lo >= hi {
            continue;
        }
        let top = (lo..=hi).fold(lo, |best, i| if series[i] > series[best] { i } else { best });

        // Right of the maximum.
        let mut horizon = None;
        for j in top + 1..=hi {
            let visible = horizon.is_none_or(|h| below_chord(series, top, h, j));
            if visible {
                edges.push((top as u32, j as u32));
                horizon = Some(j);
            }
        }
        // Left of the maximum.
        let mut horizon = None;
        for i in (lo..top).rev() {
            let visible = horizon.is_none_or(|h| below_chord(series, i, h, top));
            if visible {
                edges.push((i as u32, top as u32));
                horizon = Some(i);
            }
        }

        if top > lo {
            stack.push((lo, top - 1));
        }
        stack.push((top + 1, hi));
    }
    edges.sort_unstable();
    Ok(VisibilityGraph { node_count: n, edges })
}
