//! Subgroup height, two ways.
//!
//! Algebraic mode works in free groups: tuples of pairwise-distinct
//! cosets, iterated Stallings pullbacks, and the certificate
//! "intersection of conjugates is infinite ⟺ pullback rank ≥ 1".
//! Enumeration runs over double-coset canonical representatives of
//! bounded length, so the exhaustiveness flag is always relative to L.
//!
//! Geometric mode works on any finite ball: i-fold intersections of
//! Δ-thickened pieces, subject to the three acceptance clauses (joint
//! thickening, diameter ≥ 10Δ, escape from the (Δ−2δ)-core), with Δ
//! ranging over a dyadic grid. Diameters are screened with a cheap
//! upper bound built from the leading piece's induced metric and only
//! confirmed by exact rows when the screen cannot reject, so the scan
//! stays local even on large balls.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GglabError, Result};
use crate::metric::{
    coarse_path_metric, fmt_hlen, geodesic_interval, undistortion_check, HLen, MetricGraph,
    HLEN_INF,
};
use crate::presentation::{Presentation, Strategy};
use crate::stallings::{conjugate, double_coset_canonical, fold, pullback, CoreGraph};
use crate::words::{Alphabet, Word};

// ---------------------------------------------------------------------------
// Algebraic height
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgebraicWitness {
    pub level: usize,
    /// (subgroup index, coset representative) per conjugate.
    pub tuple: Vec<(usize, String)>,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgebraicHeightReport {
    pub height: u32,
    pub exhaustive: bool,
    pub l: usize,
    pub n_max: usize,
    pub witnesses: Vec<AlgebraicWitness>,
    pub pullbacks: u64,
}

impl AlgebraicHeightReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": "algebraic",
            "height": self.height,
            "exhaustive": self.exhaustive,
            "L": self.l,
            "B": serde_json::Value::Null,
            "witnesses": self.witnesses.iter().map(|w| serde_json::json!({
                "level": w.level,
                "tuple": w.tuple.iter()
                    .map(|(j, g)| serde_json::json!([j, g]))
                    .collect::<Vec<_>>(),
                "rank": w.rank,
            })).collect::<Vec<_>>(),
        })
    }
}

/// All freely reduced words of length ≤ `max_len`, shortlex order.
pub fn reduced_words(alphabet: &Alphabet, max_len: usize) -> Vec<Word> {
    let mut out = vec![Word::identity()];
    let mut layer: Vec<Word> = vec![Word::identity()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for s in alphabet.symbols_ordered() {
                let c = w.push(s);
                if c.len() == w.len() + 1 {
                    next.push(c);
                }
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

const WITNESSES_PER_LEVEL: usize = 8;

struct AlgState<'a> {
    subgroups: &'a [CoreGraph],
    /// Per subgroup: shortlex-least reps of its left cosets with reps ≤ L.
    cosets: Vec<Vec<Word>>,
    /// Per subgroup: double-coset canonical reps (nontrivial).
    double_cosets: Vec<Vec<Word>>,
    budget: u64,
    pullbacks: u64,
    exhausted_budget: bool,
    witnesses: Vec<AlgebraicWitness>,
    per_level: BTreeMap<usize, usize>,
    height: u32,
    n_max: usize,
    /// Per level: intersection cores deduplicated by conjugacy signature.
    cores: BTreeMap<usize, BTreeMap<Vec<u32>, CoreGraph>>,
}

fn same_coset(
    subgroups: &[CoreGraph],
    a: (usize, &Word),
    b: (usize, &Word),
) -> bool {
    let (ja, ga) = a;
    let (jb, gb) = b;
    if ja != jb && subgroups[ja].signature() != subgroups[jb].signature() {
        return false;
    }
    // Same underlying subgroup: gH = g'H ⟺ g⁻¹g' ∈ H.
    subgroups[ja].left_coset_id(ga) == subgroups[ja].left_coset_id(gb)
}

fn extend_tuple(st: &mut AlgState, tuple: &mut Vec<(usize, Word)>, core: &CoreGraph) {
    let level = tuple.len();
    if core.rank() >= 1 {
        if level as u32 > st.height {
            st.height = level as u32;
        }
        st.cores
            .entry(level)
            .or_default()
            .entry(core.conjugacy_signature())
            .or_insert_with(|| core.clone());
        let slot = st.per_level.entry(level).or_insert(0);
        if *slot < WITNESSES_PER_LEVEL {
            *slot += 1;
            st.witnesses.push(AlgebraicWitness {
                level,
                tuple: tuple
                    .iter()
                    .map(|(j, g)| (*j, g.to_string()))
                    .collect(),
                rank: core.rank(),
            });
        }
    } else {
        // Finite intersection: no extension can revive it.
        return;
    }
    if level >= st.n_max {
        return;
    }
    // Candidate next conjugates: at depth 2 over the same subgroup we
    // may restrict to double-coset canonical representatives (the
    // whole tuple can be translated by H); deeper levels take every
    // enumerated coset.
    let nsub = st.subgroups.len();
    for j in 0..nsub {
        let candidates: Vec<Word> = if level == 1 && j == tuple[0].0 {
            st.double_cosets[j].clone()
        } else {
            st.cosets[j].clone()
        };
        for g in candidates {
            if st.pullbacks >= st.budget {
                st.exhausted_budget = true;
                return;
            }
            if tuple
                .iter()
                .any(|(jt, gt)| same_coset(st.subgroups, (*jt, gt), (j, &g)))
            {
                continue;
            }
            st.pullbacks += 1;
            let conj = conjugate(&st.subgroups[j], &g);
            let next = pullback(core, &conj);
            tuple.push((j, g));
            extend_tuple(st, tuple, &next);
            tuple.pop();
            if st.exhausted_budget {
                return;
            }
        }
    }
}

fn algebraic_height_inner(
    presentation: &Presentation,
    subgroups: &[CoreGraph],
    l: usize,
    n_max: usize,
    pullback_budget: u64,
) -> Result<(AlgebraicHeightReport, Vec<Vec<CoreGraph>>)> {
    if presentation.strategy != Strategy::FreeGroup {
        return Err(GglabError::Unsupported(
            "algebraic height needs a free presentation; use geometric mode".into(),
        ));
    }
    if subgroups.is_empty() {
        return Err(GglabError::Input("no subgroups given".into()));
    }
    let words = reduced_words(&presentation.alphabet, l);
    let mut cosets: Vec<Vec<Word>> = Vec::new();
    let mut double_cosets: Vec<Vec<Word>> = Vec::new();
    for cg in subgroups {
        let mut seen: BTreeMap<(u32, Word), Word> = BTreeMap::new();
        for w in &words {
            seen.entry(cg.left_coset_id(w)).or_insert_with(|| w.clone());
        }
        let reps: Vec<Word> = seen.into_values().collect();
        let mut dc: BTreeSet<Word> = BTreeSet::new();
        for g in &reps {
            let c = double_coset_canonical(cg, g);
            if !c.is_empty() {
                dc.insert(c);
            }
        }
        cosets.push(reps);
        double_cosets.push(dc.into_iter().collect());
    }
    let mut st = AlgState {
        subgroups,
        cosets,
        double_cosets,
        budget: pullback_budget,
        pullbacks: 0,
        exhausted_budget: false,
        witnesses: Vec::new(),
        per_level: BTreeMap::new(),
        height: 0,
        n_max,
        cores: BTreeMap::new(),
    };
    for j in 0..subgroups.len() {
        let mut tuple = vec![(j, Word::identity())];
        let core = subgroups[j].clone();
        extend_tuple(&mut st, &mut tuple, &core);
        if st.exhausted_budget {
            break;
        }
    }
    let report = AlgebraicHeightReport {
        height: st.height,
        exhaustive: !st.exhausted_budget,
        l,
        n_max,
        witnesses: st.witnesses,
        pullbacks: st.pullbacks,
    };
    let mut levels: Vec<Vec<CoreGraph>> = Vec::new();
    for i in 1..=(st.height as usize) {
        levels.push(
            st.cores
                .remove(&i)
                .map(|m| m.into_values().collect())
                .unwrap_or_default(),
        );
    }
    Ok((report, levels))
}

/// Height plus, per level i = 1..height, the intersection cores
/// H ∩ g₂Hg₂⁻¹ ∩ … deduplicated up to conjugacy.
pub fn algebraic_intersections(
    presentation: &Presentation,
    subgroups: &[CoreGraph],
    l: usize,
    n_max: usize,
    pullback_budget: u64,
) -> Result<(AlgebraicHeightReport, Vec<Vec<CoreGraph>>)> {
    algebraic_height_inner(presentation, subgroups, l, n_max, pullback_budget)
}

/// Height of a family of finitely generated subgroups of a free group,
/// certified by iterated pullbacks over coset representatives of
/// length ≤ `l`, tuples up to size `n_max`.
pub fn algebraic_height(
    presentation: &Presentation,
    subgroups: &[CoreGraph],
    l: usize,
    n_max: usize,
    pullback_budget: u64,
) -> Result<AlgebraicHeightReport> {
    algebraic_height_inner(presentation, subgroups, l, n_max, pullback_budget)
        .map(|(rep, _)| rep)
}

// ---------------------------------------------------------------------------
// Geometric intersections
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometricIntersection {
    pub level: usize,
    /// Piece indices forming the tuple.
    pub tuple: Vec<usize>,
    /// Δ in whole units.
    pub delta_big: u32,
    pub vertices: Vec<u32>,
    pub diameter: HLen,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeomEnumReport {
    pub intersections: Vec<GeometricIntersection>,
    pub truncated: bool,
    pub tuples_scanned: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeomOptions {
    pub max_results: usize,
    pub tuple_budget: u64,
    /// Intersections larger than this skip the exact-diameter pass
    /// (marking the report truncated).
    pub exact_rows_cap: usize,
    /// Pieces larger than this get no induced-metric screen.
    pub piece_metric_cap: usize,
    /// Stop as soon as an accepted intersection with diameter ≥ this
    /// bound is found (used by the height loop).
    pub stop_at_diameter: Option<HLen>,
}

impl Default for GeomOptions {
    fn default() -> Self {
        GeomOptions {
            max_results: 64,
            tuple_budget: 2_000_000,
            exact_rows_cap: 512,
            piece_metric_cap: 1024,
            stop_at_diameter: None,
        }
    }
}

/// Dyadic Δ grid {1, 2, 4, …, Δ_max} with Δ_max = max(1, safe/10).
pub fn dyadic_delta_grid(safe_radius: u32) -> Vec<u32> {
    let max = (safe_radius / 10).max(1);
    let mut grid = vec![1];
    while *grid.last().unwrap() * 2 <= max {
        let next = grid.last().unwrap() * 2;
        grid.push(next);
    }
    grid
}

/// Truncated multi-source Dijkstra: distances ≤ `cap` from the piece,
/// with the attaining source recorded (local index into `sources`).
pub(crate) fn local_neighborhood(
    g: &MetricGraph,
    sources: &[u32],
    cap: HLen,
) -> HashMap<u32, (HLen, u32)> {
    let mut dist: HashMap<u32, (HLen, u32)> = HashMap::new();
    let mut heap: BinaryHeap<std::cmp::Reverse<(HLen, u32, u32)>> = BinaryHeap::new();
    for (i, &s) in sources.iter().enumerate() {
        dist.insert(s, (0, i as u32));
        heap.push(std::cmp::Reverse((0, s, i as u32)));
    }
    while let Some(std::cmp::Reverse((d, v, src))) = heap.pop() {
        match dist.get(&v) {
            Some(&(best, _)) if best < d => continue,
            _ => {}
        }
        for &(w, len) in g.neighbors(v as usize) {
            let nd = d + len;
            if nd > cap {
                continue;
            }
            let better = match dist.get(&w) {
                Some(&(best, _)) => nd < best,
                None => true,
            };
            if better {
                dist.insert(w, (nd, src));
                heap.push(std::cmp::Reverse((nd, w, src)));
            }
        }
    }
    dist
}

/// All-pairs distances of the subgraph induced on `piece`, or None
/// when the piece exceeds the size cap.
fn induced_metric(g: &MetricGraph, piece: &[u32], cap: usize) -> Option<Vec<Vec<HLen>>> {
    if piece.len() > cap {
        return None;
    }
    let local: HashMap<u32, usize> =
        piece.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut adj: Vec<Vec<(usize, HLen)>> = vec![Vec::new(); piece.len()];
    for (i, &v) in piece.iter().enumerate() {
        for &(w, len) in g.neighbors(v as usize) {
            if let Some(&j) = local.get(&w) {
                adj[i].push((j, len));
            }
        }
    }
    let rows = (0..piece.len())
        .map(|s| {
            let mut d = vec![HLEN_INF; piece.len()];
            d[s] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(std::cmp::Reverse((0 as HLen, s)));
            while let Some(std::cmp::Reverse((dd, v))) = heap.pop() {
                if d[v] < dd {
                    continue;
                }
                for &(w, len) in &adj[v] {
                    if dd + len < d[w] {
                        d[w] = dd + len;
                        heap.push(std::cmp::Reverse((dd + len, w)));
                    }
                }
            }
            d
        })
        .collect();
    Some(rows)
}

/// A tuple-in-progress: each member of J carries its distances to the
/// tuple's pieces and its projection into the leading piece.
#[derive(Clone)]
struct JPoint {
    vertex: u32,
    dists: Vec<HLen>,
    proj: u32, // local index into the leading piece
}

/// On-demand Δ-neighborhood store with a bounded cache; holding every
/// piece's thickening at once is quadratic in memory for large
/// families, recomputing a local Dijkstra is not.
struct NbCache<'a> {
    base: &'a MetricGraph,
    pieces: &'a [Vec<u32>],
    thick: HLen,
    map: HashMap<u32, std::rc::Rc<HashMap<u32, (HLen, u32)>>>,
    order: std::collections::VecDeque<u32>,
    cap: usize,
}

impl<'a> NbCache<'a> {
    fn new(base: &'a MetricGraph, pieces: &'a [Vec<u32>], thick: HLen, cap: usize) -> Self {
        NbCache {
            base,
            pieces,
            thick,
            map: HashMap::new(),
            order: std::collections::VecDeque::new(),
            cap,
        }
    }

    fn get(&mut self, q: u32) -> std::rc::Rc<HashMap<u32, (HLen, u32)>> {
        if let Some(nb) = self.map.get(&q) {
            return nb.clone();
        }
        let nb = std::rc::Rc::new(local_neighborhood(
            self.base,
            &self.pieces[q as usize],
            self.thick,
        ));
        if self.map.len() >= self.cap {
            if let Some(old) = self.order.pop_front() {
                self.map.remove(&old);
            }
        }
        self.map.insert(q, nb.clone());
        self.order.push_back(q);
        nb
    }
}

struct GeomScan<'a, 'b> {
    base: &'a MetricGraph,
    cache: &'b mut NbCache<'a>,
    vertex_pieces: &'a HashMap<u32, Vec<u32>>,
    lead_metric: Option<Vec<Vec<HLen>>>,
    level: usize,
    delta_big: u32,
    thick: HLen,
    two_delta: HLen,
    twenty_delta: HLen,
    opts: &'a GeomOptions,
    out: Vec<GeometricIntersection>,
    scanned: u64,
    truncated: bool,
    done: bool,
}

impl GeomScan<'_, '_> {
    /// Evaluate a complete tuple's J against clauses 2 and 3.
    fn evaluate(&mut self, tuple: &[usize], j: &[JPoint]) {
        // Upper-bound screen via the leading piece's induced metric:
        // d(x,y) ≤ d(x, px) + d_lead(px, py) + d(py, y).
        let accept_floor = 2 * 10 * self.delta_big; // 10Δ in half-units
        if let Some(lm) = &self.lead_metric {
            let mut ub: HLen = 0;
            for (a, pa) in j.iter().enumerate() {
                for pb in j.iter().skip(a + 1) {
                    let mid = lm[pa.proj as usize][pb.proj as usize];
                    if mid == HLEN_INF {
                        ub = HLEN_INF;
                        break;
                    }
                    ub = ub.max(pa.dists[0] + mid + pb.dists[0]);
                }
                if ub == HLEN_INF {
                    break;
                }
            }
            if ub != HLEN_INF && ub < accept_floor {
                return; // true diameter is below 10Δ
            }
        }
        if j.len() > self.opts.exact_rows_cap {
            // Sparse certification for oversized intersections: a
            // two-sweep lower bound can still *accept* (diameter ≥ 10Δ
            // is witnessed), while rejection stays a truncation notice.
            let row0 = self.base.row(j[0].vertex as usize);
            let mut far = j[0].vertex;
            let mut dlb: HLen = 0;
            for p in j {
                let d = row0[p.vertex as usize];
                if d != HLEN_INF && d > dlb {
                    dlb = d;
                    far = p.vertex;
                }
            }
            let row1 = self.base.row(far as usize);
            for p in j {
                let d = row1[p.vertex as usize];
                if d != HLEN_INF && d > dlb {
                    dlb = d;
                }
            }
            if dlb < accept_floor {
                self.truncated = true;
                return;
            }
            let shrunk = self.thick.saturating_sub(self.two_delta);
            let jprime: Vec<&JPoint> = j
                .iter()
                .filter(|p| p.dists.iter().all(|&d| d <= shrunk))
                .collect();
            if !jprime.is_empty() {
                // Only the sweep endpoints are probed for escape.
                let escapes = [&row0, &row1].iter().any(|r| {
                    jprime
                        .iter()
                        .all(|p| r[p.vertex as usize] > self.twenty_delta)
                });
                if !escapes {
                    self.truncated = true;
                    return;
                }
            }
            self.out.push(GeometricIntersection {
                level: self.level,
                tuple: tuple.to_vec(),
                delta_big: self.delta_big,
                vertices: j.iter().map(|p| p.vertex).collect(),
                diameter: dlb,
            });
            if self.out.len() >= self.opts.max_results {
                self.done = true;
            }
            if let Some(b) = self.opts.stop_at_diameter {
                if dlb >= b {
                    self.done = true;
                }
            }
            return;
        }
        // Exact rows over J.
        let rows: Vec<Vec<HLen>> = j
            .par_iter()
            .map(|p| self.base.row(p.vertex as usize))
            .collect();
        let mut diameter: HLen = 0;
        for (a, ra) in rows.iter().enumerate() {
            for pb in j.iter().skip(a + 1) {
                diameter = diameter.max(ra[pb.vertex as usize]);
            }
        }
        if diameter < accept_floor {
            return;
        }
        // Clause 3: J escapes the 20δ-neighborhood of the shrunken
        // intersection J′ = ∩ pieces^{+(Δ − 2δ̂)}.
        let shrunk = self.thick.saturating_sub(self.two_delta);
        let jprime: Vec<usize> = j
            .iter()
            .enumerate()
            .filter(|(_, p)| p.dists.iter().all(|&d| d <= shrunk))
            .map(|(i, _)| i)
            .collect();
        if !jprime.is_empty() {
            let escapes = (0..j.len()).any(|a| {
                jprime
                    .iter()
                    .all(|&b| rows[a][j[b].vertex as usize] > self.twenty_delta)
            });
            if !escapes {
                return;
            }
        }
        self.out.push(GeometricIntersection {
            level: self.level,
            tuple: tuple.to_vec(),
            delta_big: self.delta_big,
            vertices: j.iter().map(|p| p.vertex).collect(),
            diameter,
        });
        if self.out.len() >= self.opts.max_results {
            self.done = true;
        }
        if let Some(b) = self.opts.stop_at_diameter {
            if diameter >= b {
                self.done = true;
            }
        }
    }

    fn extend(&mut self, tuple: &mut Vec<usize>, j: &[JPoint]) {
        if self.done {
            return;
        }
        if tuple.len() == self.level {
            self.evaluate(tuple, j);
            return;
        }
        // Candidate extensions: pieces co-occurring on J's vertices.
        let mut cands: BTreeSet<u32> = BTreeSet::new();
        for p in j {
            if let Some(list) = self.vertex_pieces.get(&p.vertex) {
                for &q in list {
                    if q as usize > *tuple.last().unwrap() {
                        cands.insert(q);
                    }
                }
            }
        }
        for q in cands {
            if self.scanned >= self.opts.tuple_budget {
                self.truncated = true;
                self.done = true;
                return;
            }
            self.scanned += 1;
            let nb = self.cache.get(q);
            let next: Vec<JPoint> = j
                .iter()
                .filter_map(|p| {
                    nb.get(&p.vertex).map(|&(d, _)| {
                        let mut np = p.clone();
                        np.dists.push(d);
                        np
                    })
                })
                .collect();
            if next.is_empty() {
                continue;
            }
            tuple.push(q as usize);
            self.extend(tuple, &next);
            tuple.pop();
            if self.done {
                return;
            }
        }
    }
}

/// Geometric `level`-fold intersections over the Δ grid: the tuples of
/// distinct pieces whose Δ-thickenings jointly intersect in a set of
/// diameter ≥ 10Δ escaping the shrunken core.
pub fn enumerate_geometric_intersections(
    base: &MetricGraph,
    pieces: &[Vec<u32>],
    level: usize,
    grid: &[u32],
    delta_halves: HLen,
    opts: &GeomOptions,
) -> Result<GeomEnumReport> {
    if level < 2 {
        return Err(GglabError::Input(
            "geometric intersections need level ≥ 2".into(),
        ));
    }
    if grid.iter().any(|&d| d == 0) {
        return Err(GglabError::Input("Δ grid must be positive".into()));
    }
    if level > pieces.len() {
        // No tuple of `level` distinct pieces exists: exactly empty.
        return Ok(GeomEnumReport {
            intersections: Vec::new(),
            truncated: false,
            tuples_scanned: 0,
        });
    }
    // δ-substitution: a whole step stands in for 2δ (and 20 steps for
    // 20δ) when the measured constant is below half a unit.
    let (two_delta, twenty_delta) = if delta_halves < 1 {
        (2, 40)
    } else {
        (2 * delta_halves, 20 * delta_halves)
    };
    let mut all = Vec::new();
    let mut truncated = false;
    let mut scanned = 0;
    // Diameter upper bound (twice one eccentricity): any Δ with
    // 10Δ above it can accept no intersection, so the grid step is
    // skipped exactly — clause 2 is unsatisfiable there.
    let diam_ub = if base.n() > 0 {
        let row0 = base.row(0);
        2 * row0.iter().copied().filter(|&d| d != HLEN_INF).max().unwrap_or(0)
    } else {
        0
    };
    for &delta_big in grid {
        if 20 * delta_big > diam_ub {
            continue;
        }
        let thick = 2 * delta_big; // Δ units in half-units
        // Vertex → pieces whose Δ-thickening covers it; the thickenings
        // themselves are recomputed on demand (see NbCache).
        let keysets: Vec<Vec<u32>> = pieces
            .par_iter()
            .map(|p| local_neighborhood(base, p, thick).keys().copied().collect())
            .collect();
        let mut vertex_pieces: HashMap<u32, Vec<u32>> = HashMap::new();
        for (pi, keys) in keysets.iter().enumerate() {
            for &v in keys {
                vertex_pieces.entry(v).or_default().push(pi as u32);
            }
        }
        drop(keysets);
        for list in vertex_pieces.values_mut() {
            list.sort_unstable();
        }
        let mut cache = NbCache::new(base, pieces, thick, 1024);
        for lead in 0..pieces.len() {
            // No screen for oversized leads; evaluation falls through to
            // the exact/two-sweep paths, so nothing is lost but speed.
            let lead_metric = induced_metric(base, &pieces[lead], opts.piece_metric_cap);
            let j0: Vec<JPoint> = {
                let nb = cache.get(lead as u32);
                let mut v: Vec<JPoint> = nb
                    .iter()
                    .map(|(&vertex, &(d, proj))| JPoint {
                        vertex,
                        dists: vec![d],
                        proj,
                    })
                    .collect();
                v.sort_by_key(|p| p.vertex);
                v
            };
            let mut scan = GeomScan {
                base,
                cache: &mut cache,
                vertex_pieces: &vertex_pieces,
                lead_metric,
                level,
                delta_big,
                thick,
                two_delta,
                twenty_delta,
                opts,
                out: Vec::new(),
                scanned,
                truncated,
                done: false,
            };
            let mut tuple = vec![lead];
            scan.extend(&mut tuple, &j0);
            scanned = scan.scanned;
            truncated = scan.truncated;
            let hit_stop = scan.opts.stop_at_diameter.is_some()
                && scan
                    .out
                    .iter()
                    .any(|x| x.diameter >= scan.opts.stop_at_diameter.unwrap());
            all.extend(scan.out);
            if all.len() >= opts.max_results || hit_stop {
                return Ok(GeomEnumReport {
                    intersections: all,
                    truncated,
                    tuples_scanned: scanned,
                });
            }
        }
    }
    Ok(GeomEnumReport {
        intersections: all,
        truncated,
        tuples_scanned: scanned,
    })
}

// ---------------------------------------------------------------------------
// Geometric height
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometricHeightReport {
    pub height: u32,
    /// Lower-bound certificate: witnesses persist under radius growth.
    pub truncated: bool,
    /// Boundedness threshold, half-units.
    pub b: HLen,
    pub grid: Vec<u32>,
    pub witnesses: Vec<GeometricIntersection>,
    pub max_level_cap: usize,
}

impl GeometricHeightReport {
    pub fn to_json(&self, radius: Option<u32>) -> serde_json::Value {
        serde_json::json!({
            "mode": "geometric",
            "height": self.height,
            "exhaustive": !self.truncated,
            "R": radius,
            "B": fmt_hlen(self.b),
            "witnesses": self.witnesses.iter().map(|w| serde_json::json!({
                "level": w.level,
                "tuple": w.tuple,
                "delta": w.delta_big,
                "diameter": fmt_hlen(w.diameter),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Exact diameter of a small vertex set.
fn set_diameter(base: &MetricGraph, set: &[u32], cap: usize) -> Option<HLen> {
    if set.len() > cap {
        return None;
    }
    let rows: Vec<Vec<HLen>> = set
        .par_iter()
        .map(|&v| base.row(v as usize))
        .collect();
    let mut d = 0;
    for (i, r) in rows.iter().enumerate() {
        for &w in set.iter().skip(i + 1) {
            if r[w as usize] == HLEN_INF {
                return Some(HLEN_INF);
            }
            d = d.max(r[w as usize]);
        }
    }
    Some(d)
}

/// Smallest i such that every (i+1)-fold geometric intersection found
/// on the ball has diameter < B; a lower-bound certificate for the
/// true geometric height. The level loop is capped at `max_level`.
pub fn geometric_height(
    base: &MetricGraph,
    pieces: &[Vec<u32>],
    b: HLen,
    grid: &[u32],
    delta_halves: HLen,
    max_level: usize,
    opts: &GeomOptions,
) -> Result<GeometricHeightReport> {
    if b == 0 {
        return Err(GglabError::Input("boundedness threshold B must be positive".into()));
    }
    let mut witnesses = Vec::new();
    let mut truncated = false;
    // Level 1: the pieces themselves; unbounded ⟺ diameter ≥ B.
    let mut level1_unbounded = false;
    for (pi, piece) in pieces.iter().enumerate() {
        let screen = induced_metric(base, piece, opts.piece_metric_cap)
            .map(|m| {
                let mut d = 0;
                for (i, row) in m.iter().enumerate() {
                    for &x in row.iter().skip(i + 1) {
                        if x != HLEN_INF {
                            d = d.max(x);
                        } else {
                            d = HLEN_INF;
                        }
                    }
                }
                d
            });
        let ub = screen.unwrap_or(HLEN_INF);
        if ub < b {
            continue;
        }
        let exact = set_diameter(base, piece, opts.exact_rows_cap);
        match exact {
            Some(d) if d >= b => {
                level1_unbounded = true;
                witnesses.push(GeometricIntersection {
                    level: 1,
                    tuple: vec![pi],
                    delta_big: 0,
                    vertices: piece.clone(),
                    diameter: d,
                });
                break;
            }
            Some(_) => {}
            None => {
                // Too big for exact rows: a two-sweep lower bound may
                // still certify unboundedness outright.
                let dlb = diameter_lower_bound(base, piece);
                if dlb >= b {
                    level1_unbounded = true;
                    witnesses.push(GeometricIntersection {
                        level: 1,
                        tuple: vec![pi],
                        delta_big: 0,
                        vertices: piece.clone(),
                        diameter: dlb,
                    });
                    break;
                }
                truncated = true;
            }
        }
    }
    if !level1_unbounded {
        return Ok(GeometricHeightReport {
            height: 0,
            truncated,
            b,
            grid: grid.to_vec(),
            witnesses,
            max_level_cap: max_level,
        });
    }
    let mut height = 1u32;
    for level in 2..=max_level {
        let mut o = opts.clone();
        o.stop_at_diameter = Some(b);
        let rep = enumerate_geometric_intersections(base, pieces, level, grid, delta_halves, &o)?;
        truncated |= rep.truncated;
        match rep
            .intersections
            .iter()
            .find(|x| x.diameter >= b)
            .cloned()
        {
            Some(w) => {
                height = level as u32;
                witnesses.push(w);
            }
            None => {
                return Ok(GeometricHeightReport {
                    height: height,
                    truncated,
                    b,
                    grid: grid.to_vec(),
                    witnesses,
                    max_level_cap: max_level,
                });
            }
        }
    }
    // Ran out of levels with unbounded intersections still appearing.
    Ok(GeometricHeightReport {
        height,
        truncated: true,
        b,
        grid: grid.to_vec(),
        witnesses,
        max_level_cap: max_level,
    })
}

/// Two-sweep diameter lower bound for a vertex set.
pub fn diameter_lower_bound(base: &MetricGraph, set: &[u32]) -> HLen {
    if set.is_empty() {
        return 0;
    }
    let row0 = base.row(set[0] as usize);
    let mut far = set[0];
    let mut dlb: HLen = 0;
    for &v in set {
        let d = row0[v as usize];
        if d != HLEN_INF && d > dlb {
            dlb = d;
            far = v;
        }
    }
    let row1 = base.row(far as usize);
    for &v in set {
        let d = row1[v as usize];
        if d != HLEN_INF && d > dlb {
            dlb = d;
        }
    }
    dlb
}

/// Shape signature of an intersection, heuristic for "finitely many
/// orbits": the sorted multiset of pairwise distances. Sets beyond 64
/// points are stride-sampled, keeping the signature deterministic.
pub fn shape_signature(base: &MetricGraph, vertices: &[u32]) -> Vec<HLen> {
    let sampled: Vec<u32> = if vertices.len() > 64 {
        let stride = vertices.len() / 64;
        vertices.iter().step_by(stride.max(1)).take(64).copied().collect()
    } else {
        vertices.to_vec()
    };
    let rows: Vec<Vec<HLen>> = sampled
        .par_iter()
        .map(|&v| base.row(v as usize))
        .collect();
    let mut sig = vec![vertices.len() as HLen];
    for (i, r) in rows.iter().enumerate() {
        for &w in sampled.iter().skip(i + 1) {
            sig.push(r[w as usize]);
        }
    }
    sig[1..].sort_unstable();
    sig
}

/// Minimal dyadic mesh (half-units) under which the coarse path metric
/// on `piece` is connected, up to `cap`.
pub fn coarse_connection_mesh(
    base: &MetricGraph,
    piece: &[u32],
    cap: HLen,
) -> Option<HLen> {
    let y: Vec<usize> = piece.iter().map(|&v| v as usize).collect();
    let rows: Vec<HLen> = base.multi_source_row(y.iter().copied());
    let mut mesh = 2;
    while mesh <= cap {
        let m = coarse_path_metric(base, &y, mesh);
        let connected = (0..y.len())
            .all(|i| (0..y.len()).all(|j| m[i][j] != HLEN_INF || rows[y[j]] == HLEN_INF));
        if connected {
            return Some(mesh);
        }
        mesh *= 2;
    }
    None
}

// ---------------------------------------------------------------------------
// Ball concentration (Prop 4.6 shadow)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// Center vertex, when one qualifies.
    pub x: Option<usize>,
    /// Max distance from x to a coset, half-units.
    pub radius: Option<HLen>,
    /// 2C + 10δ, half-units.
    pub threshold: HLen,
    /// False = truncation notice, not a refutation.
    pub found: bool,
}

/// Look for a vertex x on a geodesic between two far points of the
/// joint Δ-thickened intersection such that every coset meets the ball
/// of radius 2C+10δ around x.
pub fn ball_concentration_check(
    base: &MetricGraph,
    cosets: &[Vec<u32>],
    delta_big: u32,
    c_halves: HLen,
    delta_halves: HLen,
) -> Result<ConcentrationReport> {
    if cosets.is_empty() {
        return Err(GglabError::Input("no cosets given".into()));
    }
    let threshold = 2 * c_halves + 10 * delta_halves;
    if cosets.len() == 1 {
        return Ok(ConcentrationReport {
            x: Some(cosets[0][0] as usize),
            radius: Some(0),
            threshold,
            found: true,
        });
    }
    let piece_rows: Vec<Vec<HLen>> = cosets
        .par_iter()
        .map(|p| base.multi_source_row(p.iter().map(|&v| v as usize)))
        .collect();
    let thick = 2 * delta_big;
    let j: Vec<usize> = (0..base.n())
        .filter(|&v| piece_rows.iter().all(|r| r[v] <= thick))
        .collect();
    if j.len() < 2 {
        return Ok(ConcentrationReport {
            x: None,
            radius: None,
            threshold,
            found: false,
        });
    }
    // Far pair inside J (first 256 points cap the row scan).
    let sample: Vec<usize> = j.iter().copied().take(256).collect();
    let rows: Vec<Vec<HLen>> = sample
        .par_iter()
        .map(|&v| base.row(v))
        .collect();
    let mut far = (sample[0], sample[0], 0);
    for (i, r) in rows.iter().enumerate() {
        for &w in sample.iter().skip(i + 1) {
            if r[w] != HLEN_INF && r[w] > far.2 {
                far = (sample[i], w, r[w]);
            }
        }
    }
    let interval = geodesic_interval(base, far.0, far.1)?;
    let mut best: Option<(usize, HLen)> = None;
    for &x in &interval.interval {
        let r = piece_rows.iter().map(|row| row[x]).max().unwrap();
        if best.map_or(true, |(_, br)| r < br) {
            best = Some((x, r));
        }
    }
    match best {
        Some((x, r)) if r <= threshold => Ok(ConcentrationReport {
            x: Some(x),
            radius: Some(r),
            threshold,
            found: true,
        }),
        _ => Ok(ConcentrationReport {
            x: best.map(|(x, _)| x),
            radius: best.map(|(_, r)| r),
            threshold,
            found: false,
        }),
    }
}

// ---------------------------------------------------------------------------
// Uniform qi-intersection property
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelQiReport {
    pub level: usize,
    /// Minimal mesh making every piece coarsely path connected.
    pub c_path: HLen,
    /// Max λ̂ over pieces (quarter grid), None when some piece failed.
    pub lambda_quarters: Option<u32>,
    /// Every ordered pair passes the projection dichotomy.
    pub dichotomy_ok: bool,
    pub pieces: usize,
}

/// Per-level check of the uniform (geometric) qi-intersection clauses:
/// coarse path connectivity + undistortion per piece, projection
/// dichotomy per ordered pair.
pub fn qi_intersection_check(
    base: &MetricGraph,
    levels: &[Vec<Vec<u32>>],
    c_halves: HLen,
    delta_halves: HLen,
    mesh_cap: HLen,
) -> Result<Vec<LevelQiReport>> {
    let mut out = Vec::new();
    for (li, pieces) in levels.iter().enumerate() {
        let mut c_path: HLen = 0;
        let mut lambda: Option<u32> = Some(4);
        for piece in pieces {
            let y: Vec<usize> = piece.iter().map(|&v| v as usize).collect();
            let mesh = match coarse_connection_mesh(base, piece, mesh_cap) {
                Some(m) => m,
                None => {
                    lambda = None;
                    c_path = c_path.max(mesh_cap);
                    continue;
                }
            };
            c_path = c_path.max(mesh);
            let u = undistortion_check(base, &y, mesh, 64);
            lambda = match (lambda, u.lambda_quarters) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
        }
        // Projection dichotomy via the cone-off machinery.
        let dichotomy_ok = if pieces.len() < 2 {
            true
        } else {
            let cs = crate::electric::electrify(base, pieces)?;
            let diam_threshold = 4 * c_halves + 20 * delta_halves + 2;
            let thick_threshold = 3 * c_halves + 10 * delta_halves + 2;
            let rep = crate::electric::coboundedness(
                &cs,
                crate::electric::CoboundMode::Base,
                diam_threshold,
                thick_threshold,
                4096,
                1,
            );
            rep.dichotomy_violations.is_empty()
        };
        out.push(LevelQiReport {
            level: li + 1,
            c_path,
            lambda_quarters: lambda,
            dichotomy_ok,
            pieces: pieces.len(),
        });
    }
    Ok(out)
}

/// Convenience: subgroup words → core graphs with the presentation's
/// alphabet, shared by the CLI and the graded module.
pub fn fold_subgroups(presentation: &Presentation, subgroups: &[Vec<Word>]) -> Vec<CoreGraph> {
    subgroups
        .iter()
        .map(|gens| fold(&presentation.alphabet, gens))
        .collect()
}
