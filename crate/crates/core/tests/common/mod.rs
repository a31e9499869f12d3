//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use gridshare::fleet::{DailyEnergy, TariffSchedule};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// ---------------------------------------------------------------- billing

/// Prices `(lambda_h, lambda_l, mu_h, mu_l)`.
pub type Prices = (f64, f64, f64, f64);

pub fn prices(t: &TariffSchedule) -> Prices {
    (t.peak_buy(), t.offpeak_buy(), t.peak_sell(), t.offpeak_sell())
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Daily net-metering cost of aggregate quantities, written out term by term.
pub fn bill(hh: f64, hl: f64, gh: f64, gl: f64, b: f64, (lh, ll, mh, ml): Prices) -> f64 {
    lh * pos(hh - b - gh) - mh * pos(b + gh - hh) + ll * pos(hl + b - gl) - ml * pos(gl - hl - b)
}

pub fn bill_of(ds: &[&DailyEnergy], p: Prices) -> f64 {
    let sum = |f: fn(&DailyEnergy) -> f64| ds.iter().map(|d| f(d)).sum::<f64>();
    bill(
        sum(|d| d.peak_consumption),
        sum(|d| d.offpeak_consumption),
        sum(|d| d.peak_generation),
        sum(|d| d.offpeak_generation),
        sum(|d| d.storage),
        p,
    )
}

/// Per-house allocation by the four closed-form branches, selected from the
/// aggregate position with ties on the import side.
pub fn allocation(ds: &[DailyEnergy], (lh, ll, mh, ml): Prices) -> (char, Vec<f64>) {
    let hh: f64 = ds.iter().map(|d| d.peak_consumption).sum();
    let hl: f64 = ds.iter().map(|d| d.offpeak_consumption).sum();
    let gh: f64 = ds.iter().map(|d| d.peak_generation).sum();
    let gl: f64 = ds.iter().map(|d| d.offpeak_generation).sum();
    let b: f64 = ds.iter().map(|d| d.storage).sum();
    let peak_in = hh >= b + gh;
    let off_in = hl + b >= gl;
    let (branch, rh, rl) = match (peak_in, off_in) {
        (true, true) => ('K', lh, ll),
        (false, true) => ('L', mh, ll),
        (true, false) => ('M', lh, ml),
        (false, false) => ('N', mh, ml),
    };
    let xi = ds
        .iter()
        .map(|d| {
            rh * (d.peak_consumption - d.storage - d.peak_generation)
                + rl * (d.offpeak_consumption + d.storage - d.offpeak_generation)
        })
        .collect();
    (branch, xi)
}

/// Tariff with `lambda_h >= mu_h >= lambda_l >= mu_l`, prices in [0, 1).
pub fn random_tariff(rng: &mut ChaCha8Rng) -> TariffSchedule {
    let mut p: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
    p.sort_by(|a, b| b.partial_cmp(a).unwrap());
    TariffSchedule::new(p[0], p[2], p[1], p[3], 8, 20).unwrap()
}

/// One random house-day with every quantity in [0, 100] kWh; a tenth of the
/// draws have no generation.
pub fn random_day(rng: &mut ChaCha8Rng, id: usize) -> DailyEnergy {
    let mut v: [f64; 5] = std::array::from_fn(|_| rng.random_range(0.0..=100.0));
    if rng.random_bool(0.1) {
        v[2] = 0.0;
        v[3] = 0.0;
    }
    DailyEnergy::new(format!("h{id}"), 0, v[0], v[1], v[2], v[3], v[4])
}

pub fn random_coalition(rng: &mut ChaCha8Rng, n: usize) -> Vec<DailyEnergy> {
    (0..n).map(|i| random_day(rng, i)).collect()
}

// ------------------------------------------------------------- visibility

/// Brute-force natural visibility: `(m, n)` is an edge iff every point
/// strictly between lies strictly below the chord. Division-free form.
pub fn visibility_edges(series: &[f64]) -> Vec<(u32, u32)> {
    let mut edges = Vec::new();
    for m in 0..series.len() {
        for n in m + 1..series.len() {
            let visible = (m + 1..n).all(|p| {
                (series[p] - series[n]) * ((n - m) as f64) < (series[m] - series[n]) * ((n - p) as f64)
            });
            if visible {
                edges.push((m as u32, n as u32));
            }
        }
    }
    edges
}

// ------------------------------------------------------------ percolation

/// Exact cluster-size moments at every occupation level.
#[derive(Debug, Clone)]
pub struct ExactMoments {
    pub nodes: usize,
    /// `E[S]` for `e = 0..=E` occupied edges.
    pub mean: Vec<f64>,
    /// `E[S^2]` for `e = 0..=E`.
    pub mean_sq: Vec<f64>,
}

impl ExactMoments {
    pub fn edges(&self) -> usize {
        self.mean.len() - 1
    }

    pub fn strength(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m / self.nodes as f64).collect()
    }

    /// Trial-mean susceptibility `(E[S^2]/N^2 - P^2) / P`.
    pub fn susceptibility(&self) -> Vec<f64> {
        let n = self.nodes as f64;
        self.mean
            .iter()
            .zip(&self.mean_sq)
            .map(|(m, m2)| {
                let p = m / n;
                (m2 / (n * n) - p * p) / p
            })
            .collect()
    }

    /// Standard deviation of `S` at each level.
    pub fn size_sd(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.mean_sq)
            .map(|(m, m2)| (m2 - m * m).max(0.0).sqrt())
            .collect()
    }

    /// Occupation fraction maximizing the exact susceptibility; ties toward
    /// the smaller fraction.
    pub fn threshold(&self) -> f64 {
        let chi = self.susceptibility();
        let mut best = 0;
        for (i, c) in chi.iter().enumerate() {
            if *c > chi[best] + 1e-12 {
                best = i;
            }
        }
        best as f64 / self.edges() as f64
    }
}

fn largest_component(nodes: usize, edges: &[(u32, u32)], mask: u64) -> usize {
    let mut adj = vec![0u64; nodes];
    for (i, &(a, b)) in edges.iter().enumerate() {
        if mask >> i & 1 == 1 {
            adj[a as usize] |= 1 << b;
            adj[b as usize] |= 1 << a;
        }
    }
    let mut seen = 0u64;
    let mut largest = 0;
    for start in 0..nodes {
        if seen >> start & 1 == 1 {
            continue;
        }
        let mut comp = 1u64 << start;
        let mut frontier = comp;
        while frontier != 0 {
            let v = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let new = adj[v] & !comp;
            comp |= new;
            frontier |= new;
        }
        seen |= comp;
        largest = largest.max(comp.count_ones() as usize);
    }
    largest
}

/// Averages over every subset of occupied edges, level by level.
pub fn exhaustive_moments(nodes: usize, edges: &[(u32, u32)]) -> ExactMoments {
    assert!(edges.len() <= 20 && nodes <= 64);
    let e = edges.len();
    let mut sum = vec![0u128; e + 1];
    let mut sq = vec![0u128; e + 1];
    let mut count = vec![0u128; e + 1];
    for mask in 0..1u64 << e {
        let k = mask.count_ones() as usize;
        let s = largest_component(nodes, edges, mask) as u128;
        sum[k] += s;
        sq[k] += s * s;
        count[k] += 1;
    }
    ExactMoments {
        nodes,
        mean: sum.iter().zip(&count).map(|(s, c)| *s as f64 / *c as f64).collect(),
        mean_sq: sq.iter().zip(&count).map(|(s, c)| *s as f64 / *c as f64).collect(),
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact moments for the complete graph by counting labeled graphs with a
/// given number of edges and bounded component size.
pub fn complete_graph_moments(n: usize) -> ExactMoments {
    let pairs = |k: usize| k * (k.saturating_sub(1)) / 2;
    let total_edges = pairs(n);
    // connected[k][j]: connected labeled graphs on k vertices with j edges.
    let mut connected = vec![vec![0u128; total_edges + 1]; n + 1];
    for k in 1..=n {
        for j in 0..=pairs(k) {
            let mut c = binomial(pairs(k), j);
            for s in 1..k {
                for i in 0..=j.min(pairs(s)) {
                    c -= binomial(k - 1, s - 1) * connected[s][i] * binomial(pairs(k - s), j - i);
                }
            }
            connected[k][j] = c;
        }
    }
    // bounded[m][k][j]: graphs on k vertices, j edges, components <= m.
    let bounded = |m: usize| {
        let mut a = vec![vec![0u128; total_edges + 1]; n + 1];
        a[0][0] = 1;
        for k in 1..=n {
            for j in 0..=pairs(k) {
                let mut total = 0;
                for s in 1..=m.min(k) {
                    for i in 0..=j.min(pairs(s)) {
                        total += binomial(k - 1, s - 1) * connected[s][i] * a[k - s][j - i];
                    }
                }
                a[k][j] = total;
            }
        }
        a[n].clone()
    };
    let levels: Vec<Vec<u128>> = (0..=n).map(bounded).collect();
    let mut mean = Vec::with_capacity(total_edges + 1);
    let mut mean_sq = Vec::with_capacity(total_edges + 1);
    for j in 0..=total_edges {
        let all = binomial(total_edges, j);
        let (mut s1, mut s2) = (0u128, 0u128);
        for m in 1..=n {
            let exactly = levels[m][j] - levels[m - 1][j];
            s1 += m as u128 * exactly;
            s2 += (m * m) as u128 * exactly;
        }
        mean.push(s1 as f64 / all as f64);
        mean_sq.push(s2 as f64 / all as f64);
    }
    ExactMoments { nodes: n, mean, mean_sq }
}

pub fn path_edges(n: usize) -> Vec<(u32, u32)> {
    (0..n as u32 - 1).map(|i| (i, i + 1)).collect()
}

pub fn cycle_edges(n: usize) -> Vec<(u32, u32)> {
    let mut e = path_edges(n);
    e.push((0, n as u32 - 1));
    e
}

pub fn complete_edges(n: usize) -> Vec<(u32, u32)> {
    let mut e = Vec::new();
    for a in 0..n as u32 {
        for b in a + 1..n as u32 {
            e.push((a, b));
        }
    }
    e
}

// --------------------------------------------------------------- forecast

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `x_t = phi x_{t-1} + e_t` after a burn-in.
pub fn simulate_ar1(phi: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..n + 500 {
        x = phi * x + normal(rng);
        if t >= 500 {
            out.push(x);
        }
    }
    out
}

/// Integrated MA(1): `y_t - y_{t-1} = e_t - theta e_{t-1}`.
pub fn simulate_ima1(theta: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut prev = normal(rng);
    let mut y = 0.0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let e = normal(rng);
        y += e - theta * prev;
        prev = e;
        out.push(y);
    }
    out
}

// ------------------------------------------------------------------ study

/// Feeder with two nodes joined by a line and one house on each: a single
/// microgrid.
pub const ONE_MICROGRID_FEEDER: &str = r#"{
  "nodes": ["n1", "n2"],
  "edges": [{"a": "n1", "b": "n2", "kind": "line"}],
  "houses": {"h1": "n1", "h2": "n2"}
}"#;

/// Fleet CSV of the two houses above: no solar, no storage, daily load
/// rising linearly with a little noise.
pub fn trend_fleet_csv(days: usize, seed: u64) -> String {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out =
        String::from("house_id,floor_area_m2,panel_area_m2,storage_kwh,t_index,consumption_kwh,generation_kwh\n");
    for house in ["h1", "h2"] {
        for day in 0..days {
            let daily = 20.0 + 0.1 * day as f64 + 0.05 * normal(&mut rng);
            for slot in 0..6 {
                out.push_str(&format!("{house},150,15,0,{},{},0\n", day * 6 + slot, daily / 6.0));
            }
        }
    }
    out
}
