//! Monte-Carlo bond percolation on a graph: percolation strength,
//! susceptibility and the percolation threshold.
//!
//! The bond occupation probability is `p = e / E`: `e` of the `E` edges are
//! kept, the other `E - e` are removed uniformly at random. For every
//! `e = 0..=E` the giant cluster size `S` (node count of the largest
//! connected component) is sampled over `T` independent trials. Each trial
//! draws one uniformly random edge order from its own RNG stream and
//! occupies edges in that order, so a single union-find pass yields `S` for
//! every `e`; the occupied set at each `e` is a uniform `e`-subset.
//!
//! At `p = 0` every node is its own cluster; at `p = 1` the graph is intact.
//! The threshold is the occupation probability of maximal susceptibility,
//! so a graph that stays connected under heavier edge loss has a smaller
//! threshold.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::error::{Error, Result};
use crate::visibility::{build_visibility_fast, VisibilityGraph};

pub const DEFAULT_TRIALS: usize = 1000;

/// How the cluster-size moments are normalized into strength and
/// susceptibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `P = <S>/N`, `chi = (<S^2>/N^2 - P^2) / P` with `<.>` the trial mean.
    #[default]
    TrialMean,
    /// Trial sums scaled by `1/(N E)` and `1/(N^2 E)` instead of trial
    /// means. Coincides with `TrialMean` when `T == E`.
    EdgeScaled,
}

/// Sampled percolation curve of one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercolationCurve {
    pub node_count: usize,
    pub edge_count: usize,
    /// Occupied-edge fraction `e / E`, `e = 0..=E`.
    pub p_grid: Vec<f64>,
    pub strength: Vec<f64>,
    pub susceptibility: Vec<f64>,
    /// Trial sum of `S` per grid point.
    pub size_sum: Vec<u64>,
    /// Trial sum of `S^2` per grid point.
    pub size_sq_sum: Vec<u128>,
    pub threshold: f64,
    pub trials: usize,
    pub seed: u64,
    pub normalization: Normalization,
}

impl PercolationCurve {
    /// Trial mean of the giant cluster size per grid point.
    pub fn mean_size(&self) -> Vec<f64> {
        self.size_sum
            .iter()
            .map(|&s| s as f64 / self.trials as f64)
            .collect()
    }

    /// Curve CSV: `e,p,strength,susceptibility` rows and a
    /// `threshold,<value>` trailer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("e,p,strength,susceptibility\n");
        for (e, ((p, s), x)) in self
            .p_grid
            .iter()
            .zip(&self.strength)
            .zip(&self.susceptibility)
            .enumerate()
        {
            out.push_str(&format!("{e},{p},{s},{x}\n"));
        }
        out.push_str(&format!("threshold,{}\n", self.threshold));
        out
    }
}

/// Strength and susceptibility from cluster-size trial sums. Returns `None`
/// for the susceptibility where the strength is zero.
pub fn strength_and_susceptibility(
    size_sum: f64,
    size_sq_sum: f64,
    nodes: usize,
    edges: usize,
    trials: usize,
    normalization: Normalization,
) -> (f64, Option<f64>) {
    let n = nodes as f64;
    let scale = match normalization {
        Normalization::TrialMean => trials as f64,
        Normalization::EdgeScaled => edges as f64,
    };
    let strength = size_sum / (n * scale);
    let second = size_sq_sum / (n * n * scale);
    if strength > 0.0 {
        (strength, Some((second - strength * strength) / strength))
    } else {
        (strength, None)
    }
}

/// Splitmix-style mixing of the curve seed and a trial index into an
/// independent stream seed.
pub(crate) fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Moments {
    sum: Vec<u64>,
    sq_sum: Vec<u128>,
}

impl Moments {
    fn zero(points: usize) -> Self {
        Self {
            sum: vec![0; points],
            sq_sum: vec![0; points],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sq_sum.iter_mut().zip(other.sq_sum) {
            *a += b;
        }
        self
    }
}

/// Runs one trial, adding `S(e)` and `S(e)^2` for every `e` into `acc`.
fn run_trial(graph: &VisibilityGraph, seed: u64, trial: u64, order: &mut Vec<u32>, dsu: &mut DisjointSet, acc: &mut Moments) {
    let edges = graph.edges();
    let total = edges.len();
    order.clear();
    order.extend(0..total as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, trial));
    order.shuffle(&mut rng);

    // order[..e] are the occupied edges at occupation count e.
    dsu.reset(graph.node_count());
    let mut record = |e: usize, s: u32| {
        acc.sum[e] += s as u64;
        acc.sq_sum[e] += (s as u128) * (s as u128);
    };
    record(0, dsu.largest());
    for (e, &edge) in order.iter().enumerate() {
        let (a, b) = edges[edge as usize];
        dsu.union(a, b);
        record(e + 1, dsu.largest());
    }
}

/// Samples the percolation curve with the default trial-mean normalization.
pub fn percolation_curve(graph: &VisibilityGraph, trials: usize, seed: u64) -> Result<PercolationCurve> {
    percolation_curve_with(graph, trials, seed, Normalization::TrialMean)
}

pub fn percolation_curve_with(
    graph: &VisibilityGraph,
    trials: usize,
    seed: u64,
    normalization: Normalization,
) -> Result<PercolationCurve> {
    if graph.node_count() < 2 || graph.edge_count() == 0 {
        return Err(Error::Input(format!(
            "percolation needs at least 2 nodes and 1 edge (got {} nodes, {} edges)",
            graph.node_count(),
            graph.edge_count()
        )));
    }
    if trials == 0 {
        return Err(Error::Config("percolation needs at least one trial".into()));
    }
    let total = graph.edge_count();
    let points = total + 1;

    // Integer sums make the reduction order irrelevant.
    let moments = (0..trials as u64)
        .into_par_iter()
        .fold(
            || (Moments::zero(points), Vec::new(), DisjointSet::new(0)),
            |(mut acc, mut order, mut dsu), t| {
                run_trial(graph, seed, t, &mut order, &mut dsu, &mut acc);
                (acc, order, dsu)
            },
        )
        .map(|(acc, _, _)| acc)
        .reduce(|| Moments::zero(points), Moments::merge);

    let mut strength = Vec::with_capacity(points);
    let mut susceptibility = Vec::with_capacity(points);
    let mut defined = Vec::with_capacity(points);
    for e in 0..points {
        let (p, chi) = strength_and_susceptibility(
            moments.sum[e] as f64,
            moments.sq_sum[e] as f64,
            graph.node_count(),
            total,
            trials,
            normalization,
        );
        strength.push(p);
        susceptibility.push(chi.unwrap_or(0.0));
        defined.push(chi.is_some());
    }
    let p_grid: Vec<f64> = (0..points).map(|e| e as f64 / total as f64).collect();
    let threshold = argmax_threshold(&p_grid, &susceptibility, &defined)?;
    Ok(PercolationCurve {
        node_count: graph.node_count(),
        edge_count: total,
        p_grid,
        strength,
        susceptibility,
        size_sum: moments.sum,
        size_sq_sum: moments.sq_sum,
        threshold,
        trials,
        seed,
        normalization,
    })
}

fn argmax_threshold(p_grid: &[f64], chi: &[f64], defined: &[bool]) -> Result<f64> {
    let mut best: Option<usize> = None;
    for i in 0..chi.len() {
        if defined[i] && best.is_none_or(|b| chi[i] > chi[b]) {
            best = Some(i);
        }
    }
    best.map(|i| p_grid[i])
        .ok_or_else(|| Error::Degenerate("susceptibility undefined at every grid point".into()))
}

/// Grid point of maximal susceptibility; ties go to the smallest `p`, points
/// with zero strength are skipped.
pub fn percolation_threshold(curve: &PercolationCurve) -> Result<f64> {
    let defined: Vec<bool> = curve.strength.iter().map(|s| *s > 0.0).collect();
    argmax_threshold(&curve.p_grid, &curve.susceptibility, &defined)
}

/// Visibility graph, percolation curve and threshold of a series.
pub fn resilience_of_series(series: &[f64], trials: usize, seed: u64) -> Result<f64> {
    Ok(resilience_curve(series, trials, seed)?.threshold)
}

pub fn resilience_curve(series: &[f64], trials: usize, seed: u64) -> Result<PercolationCurve> {
    if series.len() < 3 {
        return Err(Error::Input(format!(
            "resilience needs at least 3 samples, got {}",
            series.len()
        )));
    }
    percolation_curve(&build_visibility_fast(series)?, trials, seed)
}
