//! Electrification (cone-offs), angular metrics and ψ-properness,
//! mutual coboundedness, combinatorial horoballs, and the coarse
//! hyperbolic embedding report.
//!
//! The cone model: one cone vertex per piece, joined to every piece
//! vertex by a half-length edge, so any two points of a piece are at
//! electric distance ≤ 1. The angular distance between two points of a
//! piece is measured with the piece's own cone vertex deleted; it may
//! be infinite. ψ(r) is the infimum of angular distances over pairs
//! whose base distance falls in the bucket [r, r+1).
//!
//! Large families are handled with deterministic seeded budgets; every
//! budget that truncated a scan is recorded in the report meta.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GglabError, Result};
use crate::metric::{
    delta_hyperbolicity, fmt_hlen, DeltaMode, DeltaReport, HLen, MetricGraph, HLEN_INF,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConedSpace {
    pub base: MetricGraph,
    /// Pieces as base-vertex index sets.
    pub pieces: Vec<Vec<u32>>,
    /// Base plus one cone vertex per piece (index n_base + i) with
    /// half-length cone edges.
    pub graph_el: MetricGraph,
    pub n_base: usize,
}

impl ConedSpace {
    pub fn cone_vertex(&self, piece: usize) -> usize {
        self.n_base + piece
    }

    /// Electric distance row restricted to base vertices.
    pub fn el_row(&self, src: usize) -> Vec<HLen> {
        let mut r = self.graph_el.row(src);
        r.truncate(self.n_base);
        r
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.graph_el.to_json();
        v["cones"] = serde_json::Value::Array(
            self.pieces
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    serde_json::json!({
                        "piece": p,
                        "vertex": self.cone_vertex(i),
                    })
                })
                .collect(),
        );
        v
    }
}

/// Cone off the given pieces. Cone vertices are named `cone:<i>`.
pub fn electrify(base: &MetricGraph, pieces: &[Vec<u32>]) -> Result<ConedSpace> {
    let n = base.n();
    let mut names = base.names().to_vec();
    let mut edges = base.edges().to_vec();
    for (i, piece) in pieces.iter().enumerate() {
        if piece.is_empty() {
            return Err(GglabError::Input(format!("piece {i} is empty")));
        }
        let cone = (n + i) as u32;
        names.push(format!("cone:{i}"));
        for &v in piece {
            if v as usize >= n {
                return Err(GglabError::Input(format!(
                    "piece {i} contains vertex {v} outside the base"
                )));
            }
            edges.push((v, cone, 1)); // half-unit cone edge
        }
    }
    let mut graph_el = MetricGraph::new(names, edges)?;
    graph_el.meta = base.meta.clone();
    graph_el
        .meta
        .insert("cones".into(), serde_json::json!(pieces.len()));
    Ok(ConedSpace {
        base: base.clone(),
        pieces: pieces.to_vec(),
        graph_el,
        n_base: n,
    })
}

/// Angular distance within piece `i`: shortest electric path avoiding
/// the piece's own cone vertex. `HLEN_INF` when disconnected.
pub fn angular_distance(cs: &ConedSpace, piece: usize, y1: usize, y2: usize) -> Result<HLen> {
    let p = &cs.pieces[piece];
    if !p.contains(&(y1 as u32)) || !p.contains(&(y2 as u32)) {
        return Err(GglabError::Domain(format!(
            "angular_distance: vertices {y1},{y2} not both in piece {piece}"
        )));
    }
    let row = cs.graph_el.row_avoiding(y1, cs.cone_vertex(piece));
    Ok(row[y2])
}

/// Angular rows of one piece from the given sources (each with the
/// piece's own cone deleted).
fn angular_rows_from(cs: &ConedSpace, piece: usize, sources: &[u32]) -> Vec<Vec<HLen>> {
    let cone = cs.cone_vertex(piece);
    sources
        .par_iter()
        .map(|&y| cs.graph_el.row_avoiding(y as usize, cone))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiTable {
    /// Bucket r (whole units) → inf of angular distance (half-units)
    /// over pairs with base distance in [r, r+1). Raw per-bucket infs.
    pub raw: BTreeMap<u32, HLen>,
    /// Cumulative inf from above: value at r = min over buckets ≥ r.
    pub from_above: BTreeMap<u32, HLen>,
    pub pieces_scanned: usize,
    pub pieces_total: usize,
    pub seed: u64,
}

impl PsiTable {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "raw": self.raw.iter()
                .map(|(r, v)| (r.to_string(), fmt_hlen(*v)))
                .collect::<BTreeMap<_, _>>(),
            "from_above": self.from_above.iter()
                .map(|(r, v)| (r.to_string(), fmt_hlen(*v)))
                .collect::<BTreeMap<_, _>>(),
            "pieces_scanned": self.pieces_scanned,
            "pieces_total": self.pieces_total,
            "seed": self.seed,
        })
    }

    /// Strictly increasing over the observed buckets from `r_min` on.
    pub fn strictly_increasing_from(&self, r_min: u32) -> bool {
        let vals: Vec<HLen> = self
            .raw
            .iter()
            .filter(|(r, _)| **r >= r_min)
            .map(|(_, v)| *v)
            .collect();
        vals.windows(2).all(|w| w[1] > w[0] || w[0] == HLEN_INF)
    }

    pub fn last_value(&self) -> Option<HLen> {
        self.raw.values().last().copied()
    }
}

/// ψ-table over (a seeded sample of) the pieces. Pieces are sampled
/// deterministically when `max_pieces` is exceeded; piece 0 is always
/// retained so the canonical fixture piece participates.
pub fn psi_table(cs: &ConedSpace, max_pieces: usize, seed: u64) -> PsiTable {
    psi_table_sampled(cs, max_pieces, usize::MAX, seed)
}

/// ψ-table with an additional cap on scan sources per piece; large
/// pieces contribute a seeded subset of source vertices (all targets
/// still participate through the rows).
pub fn psi_table_sampled(
    cs: &ConedSpace,
    max_pieces: usize,
    max_sources: usize,
    seed: u64,
) -> PsiTable {
    let total = cs.pieces.len();
    let mut picked: Vec<usize> = (0..total).collect();
    if total > max_pieces {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rest: Vec<usize> = (1..total).collect();
        rest.shuffle(&mut rng);
        rest.truncate(max_pieces.saturating_sub(1));
        picked = std::iter::once(0).chain(rest).collect();
        picked.sort_unstable();
    }
    // Base rows for bucketing, computed per sampled source vertex.
    let mut raw: BTreeMap<u32, HLen> = BTreeMap::new();
    for &pi in &picked {
        let piece = &cs.pieces[pi];
        let sources: Vec<u32> = if piece.len() > max_sources {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(pi as u64));
            let mut idx: Vec<usize> = (1..piece.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(max_sources.saturating_sub(1));
            idx.push(0);
            idx.sort_unstable();
            idx.into_iter().map(|i| piece[i]).collect()
        } else {
            piece.clone()
        };
        let base_rows: Vec<Vec<HLen>> = sources
            .par_iter()
            .map(|&y| cs.base.row(y as usize))
            .collect();
        let ang = angular_rows_from(cs, pi, &sources);
        for (i, &y1) in sources.iter().enumerate() {
            for &y2 in piece.iter() {
                if y2 == y1 {
                    continue;
                }
                let db = base_rows[i][y2 as usize];
                if db == HLEN_INF {
                    continue;
                }
                let bucket = db / 2; // [r, r+1) in whole units
                let a = ang[i][y2 as usize];
                raw.entry(bucket)
                    .and_modify(|v| {
                        if a < *v {
                            *v = a;
                        }
                    })
                    .or_insert(a);
            }
        }
    }
    let mut from_above = raw.clone();
    let mut running = HLEN_INF;
    for (_, v) in from_above.iter_mut().rev() {
        running = running.min(*v);
        *v = running;
    }
    PsiTable {
        raw,
        from_above,
        pieces_scanned: picked.len(),
        pieces_total: total,
        seed,
    }
}

// ---------------------------------------------------------------------------
// Coboundedness and the projection dichotomy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoboundMode {
    Electric,
    Base,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoboundednessReport {
    /// Max projection diameter over scanned ordered pairs (half-units).
    pub max_diameter: HLen,
    pub witness_pair: Option<(usize, usize)>,
    /// Ordered pairs whose projection neither stays below the diameter
    /// threshold nor lands in the thickened source piece.
    pub dichotomy_violations: Vec<(usize, usize)>,
    pub pairs_scanned: usize,
    pub pairs_total: usize,
    pub mode: CoboundMode,
    pub seed: u64,
}

/// Projection of piece `j` onto piece `i` in the chosen metric, with
/// the Prop-3.7-style dichotomy: diameter ≤ `diam_threshold` or
/// containment of the projection in the `thick_threshold`-thickening
/// of piece `j`.
pub fn coboundedness(
    cs: &ConedSpace,
    mode: CoboundMode,
    diam_threshold: HLen,
    thick_threshold: HLen,
    max_pairs: usize,
    seed: u64,
) -> CoboundednessReport {
    coboundedness_sampled(cs, mode, diam_threshold, thick_threshold, max_pairs, usize::MAX, seed)
}

/// Coboundedness with an additional stride cap on source points per
/// pair (and on the projection set probed for diameter/containment),
/// for families whose pieces are too large to scan exhaustively.
pub fn coboundedness_sampled(
    cs: &ConedSpace,
    mode: CoboundMode,
    diam_threshold: HLen,
    thick_threshold: HLen,
    max_pairs: usize,
    max_sources: usize,
    seed: u64,
) -> CoboundednessReport {
    let g: &MetricGraph = match mode {
        CoboundMode::Electric => &cs.graph_el,
        CoboundMode::Base => &cs.base,
    };
    let np = cs.pieces.len();
    let pairs_total = np.saturating_mul(np.saturating_sub(1));
    let all_pairs = crate::metric::sample_pairs(np, max_pairs, true, seed);
    let results: Vec<(HLen, bool, (usize, usize))> = all_pairs
        .par_iter()
        .map(|&(i, j)| {
            let pi = &cs.pieces[i];
            let pj = &cs.pieces[j];
            // Distance from everything to piece i.
            let to_i = g.multi_source_row(pi.iter().map(|&v| v as usize));
            // Projection points of (a stride sample of) piece j on
            // piece i.
            let stride = (pj.len() / max_sources.max(1)).max(1);
            let proj_cap = 4 * max_sources.min(pj.len());
            let mut seen: std::collections::HashSet<u32> = std::collections::HashSet::new();
            let mut proj: Vec<u32> = Vec::new();
            for &x in pj.iter().step_by(stride) {
                let m = to_i[x as usize];
                if m == HLEN_INF {
                    continue;
                }
                let rx = g.row(x as usize);
                for &b in pi.iter() {
                    if rx[b as usize] == m && seen.insert(b) {
                        proj.push(b);
                    }
                }
                if proj.len() >= proj_cap {
                    break;
                }
            }
            // Diameter of the projection set.
            let mut diam = 0;
            for (k, &p) in proj.iter().enumerate() {
                let rp = g.row(p as usize);
                for &q in proj.iter().skip(k + 1) {
                    diam = diam.max(rp[q as usize]);
                }
            }
            let ok = if diam <= diam_threshold {
                true
            } else {
                // Containment branch: projection inside (piece j)^{+thick}.
                let to_j = g.multi_source_row(pj.iter().map(|&v| v as usize));
                proj.iter().all(|&p| to_j[p as usize] <= thick_threshold)
            };
            (diam, ok, (i, j))
        })
        .collect();
    let mut max_diameter = 0;
    let mut witness_pair = None;
    let mut dichotomy_violations = Vec::new();
    for (diam, ok, pair) in results {
        if diam > max_diameter {
            max_diameter = diam;
            witness_pair = Some(pair);
        }
        if !ok {
            dichotomy_violations.push(pair);
        }
    }
    CoboundednessReport {
        max_diameter,
        witness_pair,
        dichotomy_violations,
        pairs_scanned: all_pairs.len(),
        pairs_total,
        mode,
        seed,
    }
}

// ---------------------------------------------------------------------------
// Combinatorial horoballs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Horoballification {
    pub graph: MetricGraph,
    /// Per piece, per level 1..=K, the vertex indices of that level
    /// (level 1 is the piece itself inside the base).
    pub levels: Vec<Vec<Vec<u32>>>,
    pub depth: u32,
}

impl Horoballification {
    /// All vertices of one horoball (levels 1..=K).
    pub fn horoball_vertices(&self, piece: usize) -> Vec<u32> {
        self.levels[piece].iter().flatten().copied().collect()
    }

    /// Vertices at depth > `cut` of one horoball.
    pub fn deep_vertices(&self, piece: usize, cut: u32) -> Vec<u32> {
        self.levels[piece]
            .iter()
            .enumerate()
            .filter(|(k, _)| *k as u32 + 1 > cut)
            .flat_map(|(_, vs)| vs.iter().copied())
            .collect()
    }
}

/// Groves–Manning-style horoballification: over each piece Y, levels
/// 1..=K with unit vertical edges and unit horizontal edges at level k
/// between points at d_Y ≤ 2ᵏ, where d_Y is the restriction of the
/// base metric to Y.
pub fn horoballify(
    base: &MetricGraph,
    pieces: &[Vec<u32>],
    depth: u32,
    vertex_budget: usize,
) -> Result<Horoballification> {
    if depth < 1 {
        return Err(GglabError::Input("horoball depth must be ≥ 1".into()));
    }
    let added: usize = pieces.iter().map(|p| p.len() * (depth as usize - 1)).sum();
    if base.n() + added > vertex_budget {
        return Err(GglabError::Resource(format!(
            "horoballification needs {} vertices (budget {vertex_budget})",
            base.n() + added
        )));
    }
    let mut names = base.names().to_vec();
    let mut edges = base.edges().to_vec();
    let mut levels: Vec<Vec<Vec<u32>>> = Vec::with_capacity(pieces.len());
    for (pi, piece) in pieces.iter().enumerate() {
        if piece.is_empty() {
            return Err(GglabError::Input(format!("piece {pi} is empty")));
        }
        // d_Y: restriction of the base metric to the piece.
        let rows: Vec<Vec<HLen>> = piece
            .par_iter()
            .map(|&y| base.row(y as usize))
            .collect();
        let mut piece_levels: Vec<Vec<u32>> = vec![piece.clone()];
        for k in 2..=depth {
            let level: Vec<u32> = piece
                .iter()
                .map(|&y| {
                    let id = names.len() as u32;
                    names.push(format!("{}@{k}", base.name(y as usize)));
                    id
                })
                .collect();
            piece_levels.push(level);
        }
        for k in 1..=depth {
            let level = &piece_levels[k as usize - 1];
            // Vertical unit edges to the next level.
            if k < depth {
                let next = &piece_levels[k as usize];
                for (a, b) in level.iter().zip(next.iter()) {
                    edges.push((*a, *b, 2));
                }
            }
            // Horizontal unit edges at distance ≤ 2ᵏ (in whole units).
            let reach: u64 = 1u64 << k.min(32);
            for i in 0..piece.len() {
                for j in (i + 1)..piece.len() {
                    let d = rows[i][piece[j] as usize];
                    if d != HLEN_INF && (d as u64) <= 2 * reach {
                        // Skip level-1 duplicates of existing base edges
                        // of the same length is unnecessary: parallel
                        // edges are harmless for shortest paths.
                        edges.push((level[i], level[j], 2));
                    }
                }
            }
        }
        levels.push(piece_levels);
    }
    let mut graph = MetricGraph::new(names, edges)?;
    graph.meta = base.meta.clone();
    graph.meta.insert(
        "horoball_model".into(),
        serde_json::json!("groves-manning-discrete"),
    );
    graph.meta.insert("depth".into(), serde_json::json!(depth));
    Ok(Horoballification {
        graph,
        levels,
        depth,
    })
}

// ---------------------------------------------------------------------------
// Double electrification (cone-off vs horoball cone-off)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoubleElectrificationReport {
    /// Max two-sided multiplicative distortion on the quarter grid.
    pub lambda_quarters: u32,
    /// Max additive gap |d_el − d_hel| over the sampled pairs (half-units).
    pub max_additive_gap: HLen,
    pub pairs: usize,
    pub seed: u64,
    pub depth: u32,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl DoubleElectrificationReport {
    pub fn lambda(&self) -> f64 {
        self.lambda_quarters as f64 / 4.0
    }
}

/// Compare X electrified over the family with the electrified
/// horoballification (each full horoball coned). The comparison map is
/// the identity on base vertices and sends each piece's cone vertex to
/// the corresponding horoball cone vertex; horoball points at depth
/// > 2 fall into the cone image, which requires K ≥ 3.
pub fn double_electrification_check(
    base: &MetricGraph,
    pieces: &[Vec<u32>],
    depth: u32,
    n_pairs: usize,
    seed: u64,
    vertex_budget: usize,
) -> Result<DoubleElectrificationReport> {
    if !pieces.is_empty() && depth < 3 {
        return Err(GglabError::Config(
            "double electrification needs depth K ≥ 3 (depth ≤ 2 degenerates the comparison map)"
                .into(),
        ));
    }
    let cs = electrify(base, pieces)?;
    let (hel_rows_for, lambda, gap): (Vec<usize>, u32, HLen);
    // Electrified horoballification: cone each horoball in full.
    let horo;
    let hcs;
    if pieces.is_empty() {
        horo = None;
        hcs = None;
    } else {
        let h = horoballify(base, pieces, depth, vertex_budget)?;
        let horoball_pieces: Vec<Vec<u32>> = (0..pieces.len())
            .map(|i| h.horoball_vertices(i))
            .collect();
        hcs = Some(electrify(&h.graph, &horoball_pieces)?);
        horo = Some(h);
    }
    let _ = &horo;
    // Seeded sample of base vertex pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = base.n();
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let u = rand::Rng::gen_range(&mut rng, 0..n);
        let v = rand::Rng::gen_range(&mut rng, 0..n);
        pairs.push((u, v));
    }
    let mut sources: Vec<usize> = pairs.iter().map(|&(u, _)| u).collect();
    sources.sort_unstable();
    sources.dedup();
    let el_rows: BTreeMap<usize, Vec<HLen>> = sources
        .par_iter()
        .map(|&u| (u, cs.graph_el.row(u)))
        .collect();
    let hel_rows: BTreeMap<usize, Vec<HLen>> = match &hcs {
        Some(h) => sources
            .par_iter()
            .map(|&u| (u, h.graph_el.row(u)))
            .collect(),
        None => el_rows.clone(),
    };
    let mut lam = 4u32; // λ = 1
    let mut g = 0;
    for &(u, v) in &pairs {
        let d1 = el_rows[&u][v] as u64;
        let d2 = hel_rows[&u][v] as u64;
        g = g.max(d1.abs_diff(d2) as HLen);
        // Two-sided ratio with denominators clamped at one unit (2 halves).
        let r1 = (4 * d1).div_ceil(d2.max(2)) as u32;
        let r2 = (4 * d2).div_ceil(d1.max(2)) as u32;
        lam = lam.max(r1).max(r2);
    }
    (hel_rows_for, lambda, gap) = (sources, lam, g);
    let mut meta = BTreeMap::new();
    meta.insert(
        "map".into(),
        serde_json::json!("identity on base; cone vertex → horoball cone vertex; depth > 2 → cone image"),
    );
    meta.insert(
        "sources".into(),
        serde_json::json!(hel_rows_for.len()),
    );
    Ok(DoubleElectrificationReport {
        lambda_quarters: lambda,
        max_additive_gap: gap,
        pairs: pairs.len(),
        seed,
        depth,
        meta,
    })
}

// ---------------------------------------------------------------------------
// Coarse hyperbolic embedding report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedOptions {
    pub seed: u64,
    pub psi_max_pieces: usize,
    /// ψ scan sources per piece (targets stay exhaustive).
    pub psi_max_sources: usize,
    pub cobound_max_pairs: usize,
    /// Projection sources per coboundedness pair.
    pub cobound_max_sources: usize,
    pub qc_max_pieces: usize,
    /// Quasiconvexity pairs per sampled piece.
    pub qc_max_pairs: usize,
    pub delta_sample: usize,
    /// ψ must exceed this at the largest observed radius (half-units):
    /// three times the cone diameter bound of 1.
    pub proper_threshold: HLen,
    /// Pieces with base diameter ≤ this count as bounded; a family of
    /// bounded pieces is properly embedded vacuously.
    pub bounded_piece_diameter: HLen,
    /// When the whole electrified space has diameter ≤ this, every
    /// family is coarsely hyperbolically embedded in it and ψ-properness
    /// is vacuous (the bounded-space degeneration).
    pub bounded_ambient_diameter: HLen,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            seed: 1,
            psi_max_pieces: 64,
            psi_max_sources: 24,
            cobound_max_pairs: 256,
            cobound_max_sources: 64,
            qc_max_pieces: 16,
            qc_max_pairs: 64,
            delta_sample: 48,
            proper_threshold: 6,
            bounded_piece_diameter: 6,
            bounded_ambient_diameter: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub delta_el: DeltaReport,
    pub psi_table: PsiTable,
    pub proper: bool,
    /// Max base-metric projection diameter over scanned piece pairs.
    pub cobounded_max: HLen,
    /// Max quasiconvexity constant of a piece inside graph_el.
    pub piece_qc: HLen,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl EmbeddingReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "delta_el": {
                "delta4": self.delta_el.delta4(),
                "mode": match self.delta_el.mode {
                    DeltaMode::Exact => serde_json::json!("exact"),
                    DeltaMode::Sampled { count, seed } =>
                        serde_json::json!({"sampled": {"count": count, "seed": seed}}),
                },
                "witness": self.delta_el.witness,
                "lower_bound_only": self.delta_el.lower_bound_only,
            },
            "psi_table": self.psi_table.to_json(),
            "proper": self.proper,
            "cobounded_max": fmt_hlen(self.cobounded_max),
            "piece_qc": fmt_hlen(self.piece_qc),
            "meta": self.meta,
        })
    }
}

/// Assemble the coarse-hyperbolic-embedding verdict for a family of
/// pieces inside a base graph.
pub fn coarse_embedding_report(
    base: &MetricGraph,
    pieces: &[Vec<u32>],
    opts: &EmbedOptions,
) -> Result<EmbeddingReport> {
    let cs = electrify(base, pieces)?;
    let mut meta: BTreeMap<String, serde_json::Value> = BTreeMap::new();

    // δ of the electrified graph: exact when feasible, else sampled.
    let nel = cs.graph_el.n();
    let delta_el = if (nel as u128).pow(4) / 24 <= crate::metric::QUAD_BUDGET as u128 {
        delta_hyperbolicity(&cs.graph_el, DeltaMode::Exact)?
    } else {
        delta_hyperbolicity(
            &cs.graph_el,
            DeltaMode::Sampled {
                count: opts.delta_sample,
                seed: opts.seed,
            },
        )?
    };

    let psi = psi_table_sampled(&cs, opts.psi_max_pieces, opts.psi_max_sources, opts.seed);

    // Properness: strictly increasing over observed buckets r ≥ 2 with
    // the final value above the threshold — or vacuous when every
    // scanned piece is bounded.
    let max_bucket = psi.raw.keys().last().copied().unwrap_or(0);
    let bounded_family = max_bucket * 2 <= opts.bounded_piece_diameter;
    let all_el: Vec<u32> = (0..cs.graph_el.n() as u32).collect();
    let bounded_ambient = crate::height::diameter_lower_bound(&cs.graph_el, &all_el)
        <= opts.bounded_ambient_diameter;
    let proper = if bounded_family {
        meta.insert("proper_vacuous".into(), serde_json::json!(true));
        true
    } else if bounded_ambient {
        meta.insert("proper_vacuous_ambient".into(), serde_json::json!(true));
        true
    } else {
        psi.strictly_increasing_from(2)
            && psi.last_value().map_or(false, |v| v > opts.proper_threshold)
    };

    // Coboundedness in the base metric with the dichotomy thresholds
    // from the measured constants (C from piece_qc, δ̂ from delta_el):
    // computed after piece_qc below, so run piece_qc first.
    let mut qc_pieces: Vec<usize> = (0..pieces.len()).collect();
    if qc_pieces.len() > opts.qc_max_pieces {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
        let mut rest: Vec<usize> = (1..pieces.len()).collect();
        rest.shuffle(&mut rng);
        rest.truncate(opts.qc_max_pieces.saturating_sub(1));
        qc_pieces = std::iter::once(0).chain(rest).collect();
        meta.insert("qc_pieces_sampled".into(), serde_json::json!(true));
    }
    let mut piece_qc: HLen = 0;
    for &pi in &qc_pieces {
        let piece: Vec<usize> = cs.pieces[pi].iter().map(|&v| v as usize).collect();
        if piece.len() * (piece.len().saturating_sub(1)) / 2 > opts.qc_max_pairs {
            meta.insert("qc_pairs_sampled".into(), serde_json::json!(true));
        }
        let pairs: Vec<(usize, usize)> = crate::metric::sample_pairs(
            piece.len(),
            opts.qc_max_pairs,
            false,
            opts.seed.wrapping_add(3 + pi as u64),
        )
        .into_iter()
        .map(|(i, j)| (piece[i], piece[j]))
        .collect();
        let r = crate::metric::quasiconvexity_constant(&cs.graph_el, &piece, &pairs)?;
        piece_qc = piece_qc.max(r.c_halves);
    }

    let delta_halves = delta_el.delta4_halves_ceil();
    let diam_threshold = 4 * piece_qc + 20 * delta_halves + 2; // 4C + 20δ̂ + 1
    let thick_threshold = 3 * piece_qc + 10 * delta_halves + 2; // 3C + 10δ̂ + 1
    let cobound = coboundedness_sampled(
        &cs,
        CoboundMode::Base,
        diam_threshold,
        thick_threshold,
        opts.cobound_max_pairs,
        opts.cobound_max_sources,
        opts.seed.wrapping_add(2),
    );
    meta.insert(
        "cobound_pairs_scanned".into(),
        serde_json::json!(cobound.pairs_scanned),
    );
    meta.insert(
        "cobound_pairs_total".into(),
        serde_json::json!(cobound.pairs_total),
    );
    meta.insert(
        "dichotomy_violations".into(),
        serde_json::json!(cobound.dichotomy_violations.len()),
    );
    meta.insert(
        "dichotomy_thresholds".into(),
        serde_json::json!({
            "diameter": fmt_hlen(diam_threshold),
            "thickening": fmt_hlen(thick_threshold),
        }),
    );
    meta.insert("seed".into(), serde_json::json!(opts.seed));

    Ok(EmbeddingReport {
        delta_el,
        psi_table: psi,
        proper,
        cobounded_max: cobound.max_diameter,
        piece_qc,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ball::build_ball;
    use crate::presentation::Presentation;
    use crate::stallings::{coset_pieces, fold};
    use crate::words::Word;

    fn f2() -> Presentation {
        Presentation::parse("gens: a b\n").unwrap()
    }

    fn a_coset_space(radius: u32) -> ConedSpace {
        let p = f2();
        let ball = build_ball(&p, radius, 100_000).unwrap();
        let h = fold(&p.alphabet, &[Word::from_str("a", &p.alphabet).unwrap()]);
        let fam = coset_pieces(&h, &ball, None, 2).unwrap();
        electrify(&ball.metric_graph(), &fam.pieces).unwrap()
    }

    fn vtx(cs: &ConedSpace, name: &str) -> usize {
        cs.base.index_of(name).unwrap()
    }

    #[test]
    fn electric_distance_through_cone() {
        let cs = a_coset_space(5);
        let a5 = vtx(&cs, "aaaaa");
        let e = vtx(&cs, "e");
        let b = vtx(&cs, "b");
        let row = cs.el_row(a5);
        assert_eq!(row[e], 2); // two half-edges through the ⟨a⟩-cone
        assert_eq!(row[b], 4); // cone, then the edge e → b
    }

    #[test]
    fn empty_family_is_the_base() {
        let p = f2();
        let ball = build_ball(&p, 3, 100_000).unwrap();
        let g = ball.metric_graph();
        let cs = electrify(&g, &[]).unwrap();
        assert_eq!(cs.graph_el.n(), g.n());
        assert_eq!(cs.el_row(0), g.row(0));
    }

    #[test]
    fn el_distance_below_base_everywhere() {
        let cs = a_coset_space(4);
        for v in 0..cs.n_base {
            let el = cs.el_row(v);
            let b = cs.base.row(v);
            for u in 0..cs.n_base {
                assert!(el[u] <= b[u]);
            }
        }
    }

    #[test]
    fn within_piece_diameter_one() {
        let cs = a_coset_space(4);
        for (_, piece) in cs.pieces.iter().enumerate() {
            let row = cs.el_row(piece[0] as usize);
            for &v in piece {
                assert!(row[v as usize] <= 2);
            }
        }
    }

    #[test]
    fn angular_on_the_axis_is_base_distance() {
        let cs = a_coset_space(5);
        // Piece 0 is the identity coset (the a-axis).
        let piece0 = &cs.pieces[0];
        assert!(piece0.contains(&0));
        for k in 1..=5usize {
            let y1 = vtx(&cs, &"A".repeat(k));
            let y2 = vtx(&cs, &"a".repeat(k));
            let a = angular_distance(&cs, 0, y1, y2).unwrap();
            assert_eq!(a, 4 * k as HLen, "angular(a^-{k}, a^{k})");
        }
        let y = vtx(&cs, "aa");
        assert_eq!(angular_distance(&cs, 0, y, y).unwrap(), 0);
        assert!(angular_distance(&cs, 0, y, vtx(&cs, "b")).is_err());
    }

    #[test]
    fn twin_pieces_shortcut_angular() {
        // Two identical pieces: the twin cone gives angular ≤ 2.
        let p = f2();
        let ball = build_ball(&p, 3, 100_000).unwrap();
        let g = ball.metric_graph();
        let axis: Vec<u32> = (0..ball.n() as u32)
            .filter(|&v| ball.words[v as usize].syms().iter().all(|&s| s / 2 == 0))
            .collect();
        let cs = electrify(&g, &[axis.clone(), axis.clone()]).unwrap();
        let y1 = cs.base.index_of("AAA").unwrap();
        let y2 = cs.base.index_of("aaa").unwrap();
        assert_eq!(angular_distance(&cs, 0, y1, y2).unwrap(), 2);
        let psi = psi_table(&cs, 64, 1);
        assert!(psi.raw.values().all(|&v| v <= 2));
    }

    #[test]
    fn psi_linear_on_a_cosets() {
        let cs = a_coset_space(6);
        let psi = psi_table(&cs, usize::MAX, 1);
        for r in 1..=6u32 {
            assert_eq!(psi.raw.get(&r), Some(&(2 * r)), "ψ({r})");
        }
        assert!(psi.strictly_increasing_from(2));
    }

    #[test]
    fn cobounded_tree_cosets_project_to_points() {
        let cs = a_coset_space(4);
        let rep = coboundedness(&cs, CoboundMode::Base, 0, 0, usize::MAX, 1);
        assert_eq!(rep.max_diameter, 0);
        assert!(rep.dichotomy_violations.is_empty());
    }

    #[test]
    fn identical_pieces_take_containment_branch() {
        let p = f2();
        let ball = build_ball(&p, 2, 100_000).unwrap();
        let g = ball.metric_graph();
        let axis: Vec<u32> = (0..ball.n() as u32)
            .filter(|&v| ball.words[v as usize].syms().iter().all(|&s| s / 2 == 0))
            .collect();
        let cs = electrify(&g, &[axis.clone(), axis]).unwrap();
        let rep = coboundedness(&cs, CoboundMode::Base, 0, 0, usize::MAX, 1);
        // Projection of a piece onto its twin is the whole piece
        // (diameter > 0) but contained in the 0-thickening.
        assert!(rep.max_diameter > 0);
        assert!(rep.dichotomy_violations.is_empty());
    }

    #[test]
    fn horoball_over_two_points() {
        // Base: y — m — y′ with unit edges; piece {y, y′} at distance 2.
        let base = MetricGraph::new(
            vec!["y".into(), "m".into(), "y2".into()],
            vec![(0, 1, 2), (1, 2, 2)],
        )
        .unwrap();
        let h = horoballify(&base, &[vec![0, 2]], 3, 1000).unwrap();
        assert_eq!(h.graph.n(), 3 + 4); // base + 2 points × 2 new levels
        // Level-1 horizontal edge exists (d_Y = 2 ≤ 2¹): distance 1.
        assert_eq!(h.graph.dist(0, 2), 2);
        // Vertical monotonicity.
        let l2 = h.levels[0][1][0] as usize;
        assert_eq!(h.graph.dist(0, l2), 2);
    }

    #[test]
    fn horoball_depth_one_is_base_plus_level1_edges() {
        let base = MetricGraph::new(
            vec!["y".into(), "m".into(), "y2".into()],
            vec![(0, 1, 2), (1, 2, 2)],
        )
        .unwrap();
        let h = horoballify(&base, &[vec![0, 2]], 1, 1000).unwrap();
        assert_eq!(h.graph.n(), 3);
        assert_eq!(h.graph.dist(0, 2), 2);
    }

    #[test]
    fn horoball_contracts_the_axis_logarithmically() {
        let p = f2();
        let ball = build_ball(&p, 8, 200_000).unwrap();
        let g = ball.metric_graph();
        let axis: Vec<u32> = (0..ball.n() as u32)
            .filter(|&v| ball.words[v as usize].syms().iter().all(|&s| s / 2 == 0))
            .collect();
        assert_eq!(axis.len(), 17);
        let h = horoballify(&g, &[axis], 4, 300_000).unwrap();
        let e = g.index_of("e").unwrap();
        let a8 = g.index_of("aaaaaaaa").unwrap();
        let d = h.graph.dist(e, a8);
        // 2⌈log₂ 8⌉ + 3 = 9 units.
        assert!(d <= 18, "horoball distance {} too large", d);
        assert!(d < g.dist(e, a8));
    }

    #[test]
    fn double_electrification_identity_without_family() {
        let p = f2();
        let ball = build_ball(&p, 3, 100_000).unwrap();
        let g = ball.metric_graph();
        let r = double_electrification_check(&g, &[], 4, 50, 7, 100_000).unwrap();
        assert_eq!(r.lambda_quarters, 4);
        assert_eq!(r.max_additive_gap, 0);
    }

    #[test]
    fn double_electrification_small_depth_rejected() {
        let p = f2();
        let ball = build_ball(&p, 2, 100_000).unwrap();
        let g = ball.metric_graph();
        assert!(double_electrification_check(&g, &[vec![0, 1]], 2, 10, 7, 100_000).is_err());
    }

    #[test]
    fn double_electrification_bounded_gap_on_a_cosets() {
        let p = f2();
        let ball = build_ball(&p, 5, 100_000).unwrap();
        let h = fold(&p.alphabet, &[Word::from_str("a", &p.alphabet).unwrap()]);
        let fam = coset_pieces(&h, &ball, None, 2).unwrap();
        let g = ball.metric_graph();
        let r1 =
            double_electrification_check(&g, &fam.pieces, 4, 100, 7, 300_000).unwrap();
        let r2 =
            double_electrification_check(&g, &fam.pieces, 4, 100, 7, 300_000).unwrap();
        assert_eq!(r1.lambda_quarters, r2.lambda_quarters, "determinism");
        assert!(r1.lambda_quarters <= 16, "λ̂ = {}", r1.lambda());
    }

    #[test]
    fn embedding_report_positive_on_a_cosets() {
        let p = f2();
        let ball = build_ball(&p, 6, 100_000).unwrap();
        let h = fold(&p.alphabet, &[Word::from_str("a", &p.alphabet).unwrap()]);
        let fam = coset_pieces(&h, &ball, None, 2).unwrap();
        let rep = coarse_embedding_report(
            &ball.metric_graph(),
            &fam.pieces,
            &EmbedOptions::default(),
        )
        .unwrap();
        assert!(rep.proper);
        assert_eq!(rep.cobounded_max, 0);
        // Electric geodesics pass through the cone vertex, ½ off the piece.
        assert_eq!(rep.piece_qc, 1);
        let j = rep.to_json();
        for key in ["delta_el", "psi_table", "proper", "cobounded_max", "piece_qc"] {
            assert!(j.get(key).is_some(), "missing field {key}");
        }
    }

    #[test]
    fn embedding_report_flags_twin_pieces() {
        let p = f2();
        let ball = build_ball(&p, 6, 100_000).unwrap();
        let g = ball.metric_graph();
        let axis: Vec<u32> = (0..ball.n() as u32)
            .filter(|&v| ball.words[v as usize].syms().iter().all(|&s| s / 2 == 0))
            .collect();
        let rep =
            coarse_embedding_report(&g, &[axis.clone(), axis], &EmbedOptions::default())
                .unwrap();
        assert!(!rep.proper, "twin pieces must fail ψ-properness");
    }
}
