//! Finite weighted-graph metric engine.
//!
//! All edge lengths in this crate are multiples of ½ (unit edges plus
//! half-length cone edges), so distances are kept exact as `u32`
//! half-unit counts; `INF` is the sentinel for "disconnected" and
//! serializes as the string `"inf"`. Rows of the distance matrix are
//! computed on demand with a bucket (Dial) Dijkstra over a CSR
//! adjacency; nothing quadratic in the vertex count is ever stored.
//!
//! δ-hyperbolicity is the four-point constant: over quadruples, half
//! the gap between the two largest of the three pairwise distance
//! sums. Trees are recognized structurally and report δ = 0 exactly
//! without a scan.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GglabError, Result};

/// Distance in half-units. `HLEN_INF` means unreachable.
pub type HLen = u32;
pub const HLEN_INF: HLen = u32::MAX;

/// Render a half-unit length ("3", "2.5", "inf").
pub fn fmt_hlen(h: HLen) -> String {
    if h == HLEN_INF {
        "inf".to_string()
    } else if h % 2 == 0 {
        format!("{}", h / 2)
    } else {
        format!("{}.5", h / 2)
    }
}

/// Parse a decimal dyadic length string into half-units.
pub fn parse_hlen(s: &str) -> Result<HLen> {
    let s = s.trim();
    if s == "inf" {
        return Ok(HLEN_INF);
    }
    let (whole, frac) = match s.split_once('.') {
        Some((w, f)) => (w, f),
        None => (s, ""),
    };
    let units: u32 = whole
        .parse()
        .map_err(|_| GglabError::Input(format!("bad length '{s}'")))?;
    let half = match frac {
        "" | "0" | "00" => 0,
        "5" | "50" => 1,
        _ => {
            return Err(GglabError::Input(format!(
                "length '{s}' is not a multiple of 0.5"
            )))
        }
    };
    Ok(units * 2 + half)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricGraph {
    names: Vec<String>,
    /// Undirected edges (u, v, half-unit length).
    edges: Vec<(u32, u32, HLen)>,
    #[serde(skip)]
    adj_off: Vec<u32>,
    #[serde(skip)]
    adj: Vec<(u32, HLen)>,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl MetricGraph {
    pub fn new(names: Vec<String>, edges: Vec<(u32, u32, HLen)>) -> Result<Self> {
        let n = names.len() as u32;
        for &(u, v, len) in &edges {
            if u >= n || v >= n {
                return Err(GglabError::Input(format!(
                    "edge ({u},{v}) out of range for {n} vertices"
                )));
            }
            if len == HLEN_INF {
                return Err(GglabError::Input("edge with infinite length".into()));
            }
        }
        let mut g = MetricGraph {
            names,
            edges,
            adj_off: Vec::new(),
            adj: Vec::new(),
            meta: BTreeMap::new(),
        };
        g.rebuild_adjacency();
        Ok(g)
    }

    /// Rebuilds the CSR arrays from the edge list (needed after
    /// deserialization, which skips them).
    pub fn rebuild_adjacency(&mut self) {
        let n = self.names.len();
        let mut deg = vec![0u32; n];
        for &(u, v, _) in &self.edges {
            deg[u as usize] += 1;
            if u != v {
                deg[v as usize] += 1;
            }
        }
        let mut off = vec![0u32; n + 1];
        for i in 0..n {
            off[i + 1] = off[i] + deg[i];
        }
        let mut adj = vec![(0u32, 0 as HLen); off[n] as usize];
        let mut cursor = off.clone();
        for &(u, v, len) in &self.edges {
            adj[cursor[u as usize] as usize] = (v, len);
            cursor[u as usize] += 1;
            if u != v {
                adj[cursor[v as usize] as usize] = (u, len);
                cursor[v as usize] += 1;
            }
        }
        self.adj_off = off;
        self.adj = adj;
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|s| s == name)
    }

    pub fn edges(&self) -> &[(u32, u32, HLen)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(u32, HLen)] {
        &self.adj[self.adj_off[v] as usize..self.adj_off[v + 1] as usize]
    }

    /// Single-source shortest-path row via bucket Dijkstra.
    pub fn row(&self, src: usize) -> Vec<HLen> {
        self.multi_source_row(std::iter::once(src))
    }

    /// Shortest distance to a vertex set (multi-source Dijkstra).
    pub fn multi_source_row(&self, sources: impl IntoIterator<Item = usize>) -> Vec<HLen> {
        let n = self.n();
        let mut dist = vec![HLEN_INF; n];
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new()];
        for s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                buckets[0].push(s as u32);
            }
        }
        let mut d = 0usize;
        let mut remaining: usize = buckets[0].len();
        while remaining > 0 {
            while d < buckets.len() && buckets[d].is_empty() {
                d += 1;
            }
            if d >= buckets.len() {
                break;
            }
            let v = buckets[d].pop().unwrap();
            remaining -= 1;
            let vd = dist[v as usize];
            if (vd as usize) < d {
                continue; // stale entry
            }
            for &(w, len) in self.neighbors(v as usize) {
                let nd = vd.saturating_add(len);
                if nd < dist[w as usize] {
                    dist[w as usize] = nd;
                    let slot = nd as usize;
                    if slot >= buckets.len() {
                        buckets.resize(slot + 1, Vec::new());
                    }
                    buckets[slot].push(w);
                    remaining += 1;
                }
            }
        }
        dist
    }

    /// Row with a vertex removed from the graph (used for angular metrics).
    pub fn row_avoiding(&self, src: usize, forbidden: usize) -> Vec<HLen> {
        if src == forbidden {
            let mut dist = vec![HLEN_INF; self.n()];
            dist[src] = 0;
            return dist;
        }
        let n = self.n();
        let mut dist = vec![HLEN_INF; n];
        dist[src] = 0;
        let mut buckets: Vec<Vec<u32>> = vec![vec![src as u32]];
        let mut d = 0usize;
        let mut remaining = 1usize;
        while remaining > 0 {
            while d < buckets.len() && buckets[d].is_empty() {
                d += 1;
            }
            if d >= buckets.len() {
                break;
            }
            let v = buckets[d].pop().unwrap();
            remaining -= 1;
            let vd = dist[v as usize];
            if (vd as usize) < d {
                continue;
            }
            for &(w, len) in self.neighbors(v as usize) {
                if w as usize == forbidden {
                    continue;
                }
                let nd = vd.saturating_add(len);
                if nd < dist[w as usize] {
                    dist[w as usize] = nd;
                    let slot = nd as usize;
                    if slot >= buckets.len() {
                        buckets.resize(slot + 1, Vec::new());
                    }
                    buckets[slot].push(w);
                    remaining += 1;
                }
            }
        }
        dist
    }

    pub fn dist(&self, u: usize, v: usize) -> HLen {
        self.row(u)[v]
    }

    pub fn is_connected(&self) -> bool {
        if self.n() == 0 {
            return true;
        }
        self.row(0).iter().all(|&d| d != HLEN_INF)
    }

    /// Structural tree test: connected with |E| = |V| − 1 (self-loops
    /// and parallel edges disqualify via the count).
    pub fn is_tree(&self) -> bool {
        self.n() > 0 && self.edges.len() == self.n() - 1 && self.is_connected()
    }

    /// ½(d(x,w) + d(y,w) − d(x,y)) in half-units of the *product*, i.e.
    /// returned in quarter-unit-free exact half-units doubled: to keep
    /// everything integral the value is returned in quarter units.
    pub fn gromov_product_quarters(&self, x: usize, y: usize, w: usize) -> Result<u64> {
        let rw = self.row(w);
        let rx = self.row(x);
        if rw[x] == HLEN_INF || rw[y] == HLEN_INF || rx[y] == HLEN_INF {
            return Err(GglabError::Domain(
                "gromov_product: vertices not in one component".into(),
            ));
        }
        // (d(x,w) + d(y,w) − d(x,y)) / 2 in half-units = that sum in quarter units.
        Ok(rw[x] as u64 + rw[y] as u64 - rx[y] as u64)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "vertices": self.names,
            "edges": self.edges.iter()
                .map(|&(u, v, l)| serde_json::json!([u, v, fmt_hlen(l)]))
                .collect::<Vec<_>>(),
            "meta": self.meta,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let names: Vec<String> = serde_json::from_value(
            v.get("vertices")
                .cloned()
                .ok_or_else(|| GglabError::Input("graph JSON missing 'vertices'".into()))?,
        )?;
        let raw_edges = v
            .get("edges")
            .and_then(|e| e.as_array())
            .ok_or_else(|| GglabError::Input("graph JSON missing 'edges'".into()))?;
        let mut edges = Vec::with_capacity(raw_edges.len());
        for e in raw_edges {
            let arr = e
                .as_array()
                .filter(|a| a.len() == 3)
                .ok_or_else(|| GglabError::Input("edge entry must be [i, j, \"len\"]".into()))?;
            let u = arr[0].as_u64().ok_or_else(|| GglabError::Input("bad edge index".into()))?;
            let w = arr[1].as_u64().ok_or_else(|| GglabError::Input("bad edge index".into()))?;
            let len = match &arr[2] {
                serde_json::Value::String(s) => parse_hlen(s)?,
                serde_json::Value::Number(n) => {
                    let f = n.as_f64().unwrap();
                    parse_hlen(&format!("{f}"))?
                }
                _ => return Err(GglabError::Input("bad edge length".into())),
            };
            edges.push((u as u32, w as u32, len));
        }
        let mut g = MetricGraph::new(names, edges)?;
        if let Some(m) = v.get("meta").and_then(|m| m.as_object()) {
            g.meta = m.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        }
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// Four-point hyperbolicity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DeltaMode {
    Exact,
    Sampled { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaReport {
    /// Four-point constant in quarter units (exact: the gap between the
    /// two largest half-unit distance sums is itself the quarter count).
    pub delta4_quarters: HLen,
    pub mode: DeltaMode,
    /// Worst quadruple (vertex indices).
    pub witness: [usize; 4],
    /// True when the value is only a lower bound (sampled mode on a
    /// graph larger than the sample).
    pub lower_bound_only: bool,
}

impl DeltaReport {
    pub fn delta4(&self) -> f64 {
        self.delta4_quarters as f64 / 4.0
    }

    /// Smallest half-unit count ≥ δ (for thresholds like 20δ).
    pub fn delta4_halves_ceil(&self) -> HLen {
        (self.delta4_quarters + 1) / 2
    }
}

/// Four-point gap of one quadruple given pairwise half-unit distances,
/// returned in quarter units: (L₁ − L₂)/2 with L in units equals the
/// raw half-unit sum gap in quarter units.
fn quad_gap(dxy: HLen, dzw: HLen, dxz: HLen, dyw: HLen, dxw: HLen, dyz: HLen) -> HLen {
    let s1 = dxy as u64 + dzw as u64;
    let s2 = dxz as u64 + dyw as u64;
    let s3 = dxw as u64 + dyz as u64;
    let mut s = [s1, s2, s3];
    s.sort_unstable();
    (s[2] - s[1]) as HLen
}

/// Default cap on the number of quadruples scanned in exact mode.
pub const QUAD_BUDGET: u64 = 300_000_000;

pub fn delta_hyperbolicity(g: &MetricGraph, mode: DeltaMode) -> Result<DeltaReport> {
    if !g.is_connected() {
        return Err(GglabError::Domain(
            "delta_hyperbolicity requires a connected graph".into(),
        ));
    }
    let n = g.n();
    if n == 0 {
        return Err(GglabError::Domain("empty graph".into()));
    }
    // Trees are exactly 0-hyperbolic; skip the scan.
    if g.is_tree() {
        let w = [0usize; 4];
        return Ok(DeltaReport {
            delta4_quarters: 0,
            mode,
            witness: w,
            lower_bound_only: false,
        });
    }
    let (subset, lower_bound_only) = match &mode {
        DeltaMode::Exact => {
            let quads = (n as u128).pow(4) / 24;
            if quads > QUAD_BUDGET as u128 {
                return Err(GglabError::Resource(format!(
                    "exact four-point scan needs ~{quads} quadruples (budget {QUAD_BUDGET}); use sampled mode"
                )));
            }
            ((0..n).collect::<Vec<_>>(), false)
        }
        DeltaMode::Sampled { count, seed } => {
            if *count >= n {
                ((0..n).collect(), false)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                idx.truncate(*count);
                idx.sort_unstable();
                (idx, true)
            }
        }
    };
    let rows: Vec<Vec<HLen>> = subset.par_iter().map(|&v| g.row(v)).collect();
    let m = subset.len();
    // Parallel over the leading index; each task scans its triples.
    let best = (0..m)
        .into_par_iter()
        .map(|a| {
            let mut local: (HLen, [usize; 4]) = (0, [subset[0]; 4]);
            for b in (a + 1)..m {
                let dab = rows[a][subset[b]];
                for c in (b + 1)..m {
                    let dac = rows[a][subset[c]];
                    let dbc = rows[b][subset[c]];
                    for e in (c + 1)..m {
                        let gap = quad_gap(
                            dab,
                            rows[c][subset[e]],
                            dac,
                            rows[b][subset[e]],
                            rows[a][subset[e]],
                            dbc,
                        );
                        if gap > local.0 {
                            local = (gap, [subset[a], subset[b], subset[c], subset[e]]);
                        }
                    }
                }
            }
            local
        })
        .reduce(
            || (0, [subset[0]; 4]),
            |x, y| {
                if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                    y
                } else {
                    x
                }
            },
        );
    Ok(DeltaReport {
        delta4_quarters: best.0,
        mode,
        witness: best.1,
        lower_bound_only,
    })
}

/// Re-evaluate a witness quadruple (invariant check).
pub fn evaluate_quadruple(g: &MetricGraph, q: [usize; 4]) -> HLen {
    let rx = g.row(q[0]);
    let ry = g.row(q[1]);
    let rz = g.row(q[2]);
    quad_gap(rx[q[1]], rz[q[3]], rx[q[2]], ry[q[3]], rx[q[3]], ry[q[2]])
}

// ---------------------------------------------------------------------------
// Geodesic intervals, projections, quasiconvexity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeodesicSet {
    pub endpoints: (usize, usize),
    /// Vertices w with d(u,w) + d(w,v) = d(u,v) — the union of all geodesics.
    pub interval: Vec<usize>,
}

pub fn geodesic_interval(g: &MetricGraph, u: usize, v: usize) -> Result<GeodesicSet> {
    let ru = g.row(u);
    let rv = g.row(v);
    let d = ru[v];
    if d == HLEN_INF {
        return Err(GglabError::Domain(format!(
            "geodesic_interval: '{}' and '{}' are disconnected",
            g.name(u),
            g.name(v)
        )));
    }
    let interval = (0..g.n())
        .filter(|&w| {
            ru[w] != HLEN_INF
                && rv[w] != HLEN_INF
                && ru[w] as u64 + rv[w] as u64 == d as u64
        })
        .collect();
    Ok(GeodesicSet {
        endpoints: (u, v),
        interval,
    })
}

pub fn nearest_point_projection(g: &MetricGraph, set: &[usize], x: usize) -> Result<Vec<usize>> {
    if set.is_empty() {
        return Err(GglabError::Domain(
            "nearest_point_projection: empty target set".into(),
        ));
    }
    let rx = g.row(x);
    let best = set.iter().map(|&b| rx[b]).min().unwrap();
    if best == HLEN_INF {
        return Err(GglabError::Domain(
            "nearest_point_projection: x disconnected from the set".into(),
        ));
    }
    Ok(set.iter().copied().filter(|&b| rx[b] == best).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasiconvexityReport {
    /// Max over pairs, over interval vertices, of distance to Q (half-units).
    pub c_halves: HLen,
    pub witness_pair: Option<(usize, usize)>,
    pub witness_vertex: Option<usize>,
    pub pairs_scanned: usize,
}

/// C = max over (x,y) in `pairs` of max over w in the geodesic interval
/// of d(w, Q). Quantifies over all geodesics via the interval.
pub fn quasiconvexity_constant(
    g: &MetricGraph,
    q: &[usize],
    pairs: &[(usize, usize)],
) -> Result<QuasiconvexityReport> {
    if q.is_empty() {
        return Err(GglabError::Domain("quasiconvexity_constant: empty Q".into()));
    }
    let dist_q = g.multi_source_row(q.iter().copied());
    let results: Vec<(HLen, usize, usize, usize)> = pairs
        .par_iter()
        .map(|&(x, y)| {
            let iv = geodesic_interval(g, x, y)?;
            let mut worst = (0 as HLen, x);
            for &w in &iv.interval {
                if dist_q[w] > worst.0 {
                    worst = (dist_q[w], w);
                }
            }
            Ok((worst.0, x, y, worst.1))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(HLen, usize, usize, usize)> = None;
    for r in results {
        if best.map_or(true, |b| r.0 > b.0) {
            best = Some(r);
        }
    }
    Ok(match best {
        Some((c, x, y, w)) => QuasiconvexityReport {
            c_halves: c,
            witness_pair: Some((x, y)),
            witness_vertex: Some(w),
            pairs_scanned: pairs.len(),
        },
        None => QuasiconvexityReport {
            c_halves: 0,
            witness_pair: None,
            witness_vertex: None,
            pairs_scanned: 0,
        },
    })
}

// ---------------------------------------------------------------------------
// Coarse path metrics and undistortion
// ---------------------------------------------------------------------------

/// The D-coarse path metric on Y: shortest paths in the auxiliary graph
/// joining y, y′ whenever d(y,y′) ≤ D, with edge weight d(y,y′).
/// Returned as a |Y|×|Y| matrix (half-units, `HLEN_INF` sentinel).
pub fn coarse_path_metric(g: &MetricGraph, y: &[usize], d_cap_halves: HLen) -> Vec<Vec<HLen>> {
    let k = y.len();
    let rows: Vec<Vec<HLen>> = y.par_iter().map(|&v| g.row(v)).collect();
    // Auxiliary adjacency among Y indices.
    let mut aux: Vec<Vec<(usize, HLen)>> = vec![Vec::new(); k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = rows[i][y[j]];
            if d != HLEN_INF && d <= d_cap_halves {
                aux[i].push((j, d));
                aux[j].push((i, d));
            }
        }
    }
    (0..k)
        .into_par_iter()
        .map(|s| {
            let mut dist = vec![HLEN_INF; k];
            dist[s] = 0;
            let mut heap = std::collections::BinaryHeap::new();
            heap.push(std::cmp::Reverse((0 as HLen, s)));
            while let Some(std::cmp::Reverse((dv, v))) = heap.pop() {
                if dv > dist[v] {
                    continue;
                }
                for &(w, len) in &aux[v] {
                    let nd = dv.saturating_add(len);
                    if nd < dist[w] {
                        dist[w] = nd;
                        heap.push(std::cmp::Reverse((nd, w)));
                    }
                }
            }
            dist
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UndistortionReport {
    /// λ̂ in quarter units (grid resolution 1/4); `None` when no λ ≤ λ_max works.
    pub lambda_quarters: Option<u32>,
    pub verdict: bool,
    /// Pair of Y-indices violating the bound (sentinel or out-of-grid witness).
    pub witness: Option<(usize, usize)>,
}

/// Smallest λ̂ on the quarter grid with λ̂⁻¹·d − λ̂ ≤ d_Y ≤ λ̂·d + λ̂ on Y×Y.
pub fn undistortion_check(
    g: &MetricGraph,
    y: &[usize],
    d_cap_halves: HLen,
    lambda_max_quarters: u32,
) -> UndistortionReport {
    let k = y.len();
    let coarse = coarse_path_metric(g, y, d_cap_halves);
    let rows: Vec<Vec<HLen>> = y.par_iter().map(|&v| g.row(v)).collect();
    // Any sentinel in the coarse metric (with finite ambient distance) fails.
    for i in 0..k {
        for j in (i + 1)..k {
            if coarse[i][j] == HLEN_INF && rows[i][y[j]] != HLEN_INF {
                return UndistortionReport {
                    lambda_quarters: None,
                    verdict: false,
                    witness: Some((i, j)),
                };
            }
        }
    }
    let mut q = 4u32; // λ = 1
    loop {
        let mut bad: Option<(usize, usize)> = None;
        'scan: for i in 0..k {
            for j in (i + 1)..k {
                let h = rows[i][y[j]] as u64; // ambient, half-units
                let hy = coarse[i][j] as u64; // coarse, half-units
                if hy == HLEN_INF as u64 {
                    continue;
                }
                let ql = q as u64;
                // Upper: hy ≤ (q/4)·h + q/2  ⇔  4·hy ≤ q·(h + 2)
                if 4 * hy > ql * (h + 2) {
                    bad = Some((i, j));
                    break 'scan;
                }
                // Lower: (4/q)·h/2 − q/4 ≤ hy/2  ⇔  8h − q² ≤ 2q·hy
                if 8 * h > ql * ql + 2 * ql * hy {
                    bad = Some((i, j));
                    break 'scan;
                }
            }
        }
        match bad {
            None => {
                return UndistortionReport {
                    lambda_quarters: Some(q),
                    verdict: q <= lambda_max_quarters,
                    witness: None,
                }
            }
            Some(w) => {
                if q >= lambda_max_quarters {
                    return UndistortionReport {
                        lambda_quarters: None,
                        verdict: false,
                        witness: Some(w),
                    };
                }
                q += 1;
            }
        }
    }
}

/// Seeded sample of at most `max_pairs` distinct index pairs from
/// `0..n`, without ever materializing the full pair set (which is
/// quadratic in `n`). Returns the complete enumeration when it fits.
pub fn sample_pairs(n: usize, max_pairs: usize, ordered: bool, seed: u64) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let total = if ordered { n * (n - 1) } else { n * (n - 1) / 2 };
    if total <= max_pairs {
        let mut out = Vec::with_capacity(total);
        for i in 0..n {
            let start = if ordered { 0 } else { i + 1 };
            for j in start..n {
                if i != j {
                    out.push((i, j));
                }
            }
        }
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = std::collections::BTreeSet::new();
    while set.len() < max_pairs {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        let p = if ordered { (i, j) } else { (i.min(j), i.max(j)) };
        set.insert(p);
    }
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> MetricGraph {
        let names = (0..n).map(|i| format!("v{i}")).collect();
        let edges = (0..n - 1).map(|i| (i as u32, i as u32 + 1, 2)).collect();
        MetricGraph::new(names, edges).unwrap()
    }

    fn cycle_graph(n: usize) -> MetricGraph {
        let names = (0..n).map(|i| format!("c{i}")).collect();
        let edges = (0..n)
            .map(|i| (i as u32, ((i + 1) % n) as u32, 2))
            .collect();
        MetricGraph::new(names, edges).unwrap()
    }

    #[test]
    fn dial_rows_match_hand_distances() {
        let g = path_graph(5);
        let r = g.row(0);
        assert_eq!(r, vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn disconnected_distance_is_sentinel() {
        let g = MetricGraph::new(vec!["a".into(), "b".into()], vec![]).unwrap();
        assert_eq!(g.dist(0, 1), HLEN_INF);
        assert!(!g.is_connected());
    }

    #[test]
    fn tree_delta_is_zero_exact() {
        let g = path_graph(6);
        let r = delta_hyperbolicity(&g, DeltaMode::Exact).unwrap();
        assert_eq!(r.delta4_quarters, 0);
        assert!(!r.lower_bound_only);
    }

    #[test]
    fn six_cycle_delta_is_one() {
        // Hand oracle: C6 four-point constant is 1 (antipodal quadruple).
        let g = cycle_graph(6);
        let r = delta_hyperbolicity(&g, DeltaMode::Exact).unwrap();
        assert_eq!(r.delta4_quarters, 4);
        assert_eq!(evaluate_quadruple(&g, r.witness), r.delta4_quarters);
    }

    #[test]
    fn single_vertex_delta_zero() {
        let g = MetricGraph::new(vec!["v".into()], vec![]).unwrap();
        let r = delta_hyperbolicity(&g, DeltaMode::Exact).unwrap();
        assert_eq!(r.delta4_quarters, 0);
    }

    #[test]
    fn sampled_delta_is_lower_bound() {
        let g = cycle_graph(12);
        let exact = delta_hyperbolicity(&g, DeltaMode::Exact).unwrap();
        let sampled =
            delta_hyperbolicity(&g, DeltaMode::Sampled { count: 8, seed: 7 }).unwrap();
        assert!(sampled.delta4_quarters <= exact.delta4_quarters);
        assert!(sampled.lower_bound_only);
    }

    #[test]
    fn gromov_product_on_path() {
        let g = path_graph(5);
        // x=0, y=4, w=2 lies on the geodesic: product 0.
        assert_eq!(g.gromov_product_quarters(0, 4, 2).unwrap(), 0);
        assert_eq!(g.gromov_product_quarters(1, 1, 1).unwrap(), 0);
    }

    #[test]
    fn interval_on_four_cycle_antipodal_is_everything() {
        let g = cycle_graph(4);
        let iv = geodesic_interval(&g, 0, 2).unwrap();
        assert_eq!(iv.interval, vec![0, 1, 2, 3]);
        let iv2 = geodesic_interval(&g, 2, 0).unwrap();
        assert_eq!(iv.interval, iv2.interval);
    }

    #[test]
    fn interval_degenerate() {
        let g = path_graph(3);
        assert_eq!(geodesic_interval(&g, 1, 1).unwrap().interval, vec![1]);
    }

    #[test]
    fn projection_min_realized() {
        let g = path_graph(6);
        let p = nearest_point_projection(&g, &[0, 1, 2], 5).unwrap();
        assert_eq!(p, vec![2]);
        let p2 = nearest_point_projection(&g, &[3], 3).unwrap();
        assert_eq!(p2, vec![3]);
        assert!(nearest_point_projection(&g, &[], 0).is_err());
    }

    #[test]
    fn quasiconvexity_whole_set_is_zero() {
        let g = cycle_graph(6);
        let all: Vec<usize> = (0..6).collect();
        let pairs: Vec<(usize, usize)> = vec![(0, 3), (1, 4)];
        let r = quasiconvexity_constant(&g, &all, &pairs).unwrap();
        assert_eq!(r.c_halves, 0);
    }

    #[test]
    fn quasiconvexity_detects_detour() {
        // On C6, Q = {0, 3}: geodesics pass through vertices at distance 1.
        let g = cycle_graph(6);
        let r = quasiconvexity_constant(&g, &[0, 3], &[(0, 3)]).unwrap();
        assert_eq!(r.c_halves, 2);
    }

    #[test]
    fn coarse_path_metric_on_even_points() {
        let g = path_graph(9);
        let y = vec![0, 2, 4, 6, 8];
        // D = 2 units: consecutive even points joined; metric = restriction.
        let m = coarse_path_metric(&g, &y, 4);
        assert_eq!(m[0][4], 16);
        // D = 1 unit: no pairs within reach; all sentinel.
        let m1 = coarse_path_metric(&g, &y, 2);
        assert_eq!(m1[0][1], HLEN_INF);
    }

    #[test]
    fn undistortion_of_convex_set_is_one() {
        let g = path_graph(9);
        let y = vec![0, 2, 4, 6, 8];
        let r = undistortion_check(&g, &y, 4, 8);
        assert_eq!(r.lambda_quarters, Some(4));
        assert!(r.verdict);
    }

    #[test]
    fn undistortion_fails_with_witness_on_sentinel() {
        let g = path_graph(9);
        let y = vec![0, 8];
        let r = undistortion_check(&g, &y, 2, 8);
        assert!(!r.verdict);
        assert_eq!(r.witness, Some((0, 1)));
    }

    #[test]
    fn hlen_roundtrip() {
        for (s, h) in [("0", 0), ("1", 2), ("2.5", 5), ("inf", HLEN_INF)] {
            assert_eq!(parse_hlen(s).unwrap(), h);
        }
        assert_eq!(fmt_hlen(5), "2.5");
        assert_eq!(fmt_hlen(HLEN_INF), "inf");
        assert!(parse_hlen("0.3").is_err());
    }

    #[test]
    fn graph_json_roundtrip() {
        let mut g = cycle_graph(4);
        g.meta.insert("k".into(), serde_json::json!("v"));
        let j = g.to_json();
        let g2 = MetricGraph::from_json(&j).unwrap();
        assert_eq!(g2.n(), 4);
        assert_eq!(g2.dist(0, 2), 4);
        assert_eq!(g2.meta.get("k"), Some(&serde_json::json!("v")));
    }
}
