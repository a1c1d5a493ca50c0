//! Finite radius-R balls of Cayley graphs.
//!
//! Vertices are canonical normal forms: the shortlex-least geodesic
//! spelling, found by layered BFS that settles candidates in shortlex
//! order and decides equality with the presentation's word problem.
//! For free groups this is plain reduced-word identity and the ball is
//! a tree; for C'(1/6) presentations equality goes through Dehn's
//! algorithm.
//!
//! The `safe_radius` field bounds the region where geodesic
//! quantification is trustworthy: geodesics between vertices of the
//! safe ball provably stay inside the full ball. For trees that is R
//! itself; for Dehn presentations we use ⌊(R − 4δ̂)/2⌋ with δ̂ a
//! measured upper bound for the four-point constant (twice the
//! basepointed four-point constant, which dominates the true δ by the
//! standard basepoint-change inequality).

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{GglabError, Result};
use crate::metric::{HLen, MetricGraph};
use crate::presentation::{Presentation, Strategy};
use crate::words::{inverse_sym, Sym, Word};

/// Default cap on enumerated vertices; override with `GGLAB_BUDGET`.
pub const DEFAULT_VERTEX_BUDGET: usize = 200_000;

/// Vertex budget from the environment, falling back to the default.
pub fn vertex_budget_from_env() -> usize {
    std::env::var("GGLAB_BUDGET")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_VERTEX_BUDGET)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CayleyBall {
    pub presentation: Presentation,
    pub radius: u32,
    /// Canonical normal forms, in BFS-layer-then-shortlex order.
    /// Index 0 is the identity (the center).
    pub words: Vec<Word>,
    /// Labeled edges (u, v, generator read from u to v), u < v.
    pub edges: Vec<(u32, u32, Sym)>,
    /// Graph distance from the identity.
    pub depth: Vec<u32>,
    pub safe_radius: u32,
    #[serde(skip)]
    index: HashMap<Word, u32>,
}

impl CayleyBall {
    pub fn n(&self) -> usize {
        self.words.len()
    }

    pub fn word(&self, v: usize) -> &Word {
        &self.words[v]
    }

    /// Vertex of a canonical word, if inside the ball.
    pub fn vertex_of_canonical(&self, w: &Word) -> Option<u32> {
        self.index.get(w).copied()
    }

    /// Vertex of an arbitrary word: canonicalize via the word problem.
    /// Linear scan fallback only for the Dehn strategy.
    pub fn vertex_of(&self, w: &Word) -> Option<u32> {
        if let Some(&i) = self.index.get(w) {
            return Some(i);
        }
        match self.presentation.strategy {
            Strategy::FreeGroup => None,
            Strategy::DehnSmallCancellation => {
                let r = self.presentation.reduce(w);
                if let Some(&i) = self.index.get(&r) {
                    return Some(i);
                }
                (0..self.n())
                    .find(|&i| {
                        self.words[i].len() <= r.len()
                            && self.presentation.equal(&self.words[i], &r)
                    })
                    .map(|i| i as u32)
            }
        }
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
    }

    /// The ball as a unit-edge metric graph (lengths in half-units: 2).
    pub fn metric_graph(&self) -> MetricGraph {
        let names = self
            .words
            .iter()
            .map(|w| w.render(&self.presentation.alphabet))
            .map(|s| if s.is_empty() { "e".to_string() } else { s })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|&(u, v, _)| (u, v, 2 as HLen))
            .collect();
        let mut g = MetricGraph::new(names, edges).expect("ball edges are valid");
        g.meta.insert("radius".into(), serde_json::json!(self.radius));
        g.meta
            .insert("safe_radius".into(), serde_json::json!(self.safe_radius));
        g
    }

    pub fn to_json(&self) -> serde_json::Value {
        let a = &self.presentation.alphabet;
        serde_json::json!({
            "radius": self.radius,
            "vertices": self.words.iter().map(|w| w.render(a)).collect::<Vec<_>>(),
            "edges": self.edges.iter()
                .map(|&(u, v, s)| serde_json::json!([u, v, a.char_of_sym(s).to_string()]))
                .collect::<Vec<_>>(),
            "safe_radius": self.safe_radius,
        })
    }
}

/// Layered BFS ball construction. See the module docs for the
/// canonical-form discipline.
pub fn build_ball(p: &Presentation, radius: u32, budget: usize) -> Result<CayleyBall> {
    let mut words: Vec<Word> = vec![Word::identity()];
    let mut depth: Vec<u32> = vec![0];
    let mut index: HashMap<Word, u32> = HashMap::new();
    index.insert(Word::identity(), 0);
    let mut edges: Vec<(u32, u32, Sym)> = Vec::new();
    let mut edge_set: HashSet<(u32, u32, Sym)> = HashSet::new();
    // layer_starts[k] = first vertex index of depth k.
    let mut layer_starts: Vec<usize> = vec![0];

    let syms = p.alphabet.symbols_ordered();
    let push_edge =
        |edges: &mut Vec<(u32, u32, Sym)>, edge_set: &mut HashSet<(u32, u32, Sym)>, u: u32, v: u32, s: Sym| {
            let (a, b, t) = if u <= v { (u, v, s) } else { (v, u, inverse_sym(s)) };
            if edge_set.insert((a, b, t)) {
                edges.push((a, b, t));
            }
        };

    for k in 0..radius {
        let layer_end = words.len();
        // Candidates: (word, parent vertex, generator), settled shortlex.
        let mut candidates: Vec<(Word, u32, Sym)> = Vec::new();
        for v in layer_starts[k as usize]..layer_end {
            for &s in &syms {
                let c = words[v].push(s);
                if c.len() == k as usize + 1 {
                    candidates.push((c, v as u32, s));
                }
                // A cancelling letter walks back to the parent; that
                // edge was recorded when this vertex was settled.
            }
        }
        candidates.sort_by(|a, b| p.alphabet.shortlex_cmp(a.0.syms(), b.0.syms()));
        // A candidate's element sits at depth k−1, k, or k+1.
        let scan_from = layer_starts[(k as usize).saturating_sub(1)];
        layer_starts.push(layer_end);
        for (c, parent, s) in candidates {
            if let Some(&u) = index.get(&c) {
                push_edge(&mut edges, &mut edge_set, parent, u, s);
                continue;
            }
            let target = match p.strategy {
                Strategy::FreeGroup => None, // distinct reduced words are distinct
                Strategy::DehnSmallCancellation => (scan_from..words.len())
                    .find(|&u| p.equal(&words[u], &c))
                    .map(|u| u as u32),
            };
            match target {
                Some(u) => push_edge(&mut edges, &mut edge_set, parent, u, s),
                None => {
                    if words.len() >= budget {
                        return Err(GglabError::Resource(format!(
                            "vertex budget {budget} exceeded at radius {} (set GGLAB_BUDGET to raise it)",
                            k + 1
                        )));
                    }
                    let u = words.len() as u32;
                    words.push(c.clone());
                    depth.push(k + 1);
                    index.insert(c, u);
                    push_edge(&mut edges, &mut edge_set, parent, u, s);
                }
            }
        }
    }

    let mut ball = CayleyBall {
        presentation: p.clone(),
        radius,
        words,
        edges,
        depth,
        safe_radius: 0,
        index,
    };
    ball.safe_radius = compute_safe_radius(&ball);
    Ok(ball)
}

/// Triple scan bound for the basepointed δ estimate.
const TRIPLE_BUDGET: u64 = 3_000_000_000;

fn compute_safe_radius(ball: &CayleyBall) -> u32 {
    match ball.presentation.strategy {
        Strategy::FreeGroup => ball.radius,
        Strategy::DehnSmallCancellation => {
            let n = ball.n();
            if n <= 1 {
                return ball.radius;
            }
            if (n as u64).pow(3) > TRIPLE_BUDGET {
                // Too large to certify; fall back to the worst case.
                return 0;
            }
            let g = ball.metric_graph();
            use rayon::prelude::*;
            let rows: Vec<Vec<HLen>> = (0..n).into_par_iter().map(|v| g.row(v)).collect();
            let r0 = &rows[0];
            // Basepointed four-point constant at the identity, quarter units.
            let bp_quarters = (0..n)
                .into_par_iter()
                .map(|x| {
                    let mut worst = 0u64;
                    for y in (x + 1)..n {
                        let dxy = rows[x][y] as u64;
                        for z in (y + 1)..n {
                            let s1 = dxy + rows[z][0] as u64;
                            let s2 = rows[x][z] as u64 + r0[y] as u64;
                            let s3 = r0[x] as u64 + rows[y][z] as u64;
                            let mut s = [s1, s2, s3];
                            s.sort_unstable();
                            worst = worst.max(s[2] - s[1]);
                        }
                    }
                    worst
                })
                .max()
                .unwrap_or(0);
            // δ̂ = 2·δ_bp; in whole units, rounded up: quarters → units is /4.
            let delta_hat_units = ((2 * bp_quarters + 3) / 4) as u32;
            if ball.radius > 4 * delta_hat_units {
                (ball.radius - 4 * delta_hat_units) / 2
            } else {
                0
            }
        }
    }
}

/// Parse a ball artifact back; the distance data is recomputed on load.
pub fn ball_from_json(v: &serde_json::Value, p: &Presentation) -> Result<CayleyBall> {
    let radius = v
        .get("radius")
        .and_then(|r| r.as_u64())
        .ok_or_else(|| GglabError::Input("ball JSON missing 'radius'".into()))? as u32;
    let safe_radius = v
        .get("safe_radius")
        .and_then(|r| r.as_u64())
        .ok_or_else(|| GglabError::Input("ball JSON missing 'safe_radius'".into()))?
        as u32;
    let names: Vec<String> = serde_json::from_value(
        v.get("vertices")
            .cloned()
            .ok_or_else(|| GglabError::Input("ball JSON missing 'vertices'".into()))?,
    )?;
    let mut words = Vec::with_capacity(names.len());
    for s in &names {
        let s = if s == "e" { "" } else { s.as_str() };
        words.push(Word::from_str(s, &p.alphabet)?);
    }
    let raw_edges = v
        .get("edges")
        .and_then(|e| e.as_array())
        .ok_or_else(|| GglabError::Input("ball JSON missing 'edges'".into()))?;
    let mut edges = Vec::with_capacity(raw_edges.len());
    for e in raw_edges {
        let arr = e
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| GglabError::Input("ball edge must be [i, j, \"g\"]".into()))?;
        let u = arr[0].as_u64().ok_or_else(|| GglabError::Input("bad edge index".into()))? as u32;
        let w = arr[1].as_u64().ok_or_else(|| GglabError::Input("bad edge index".into()))? as u32;
        let label = arr[2]
            .as_str()
            .and_then(|s| s.chars().next())
            .ok_or_else(|| GglabError::Input("bad edge label".into()))?;
        edges.push((u, w, p.alphabet.sym_of_char(label)?));
    }
    // Depths recomputed by BFS over the edge list.
    let n = words.len();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(u, w, _) in &edges {
        adj[u as usize].push(w);
        adj[w as usize].push(u);
    }
    let mut depth = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    depth[0] = 0;
    queue.push_back(0usize);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if depth[w as usize] == u32::MAX {
                depth[w as usize] = depth[v] + 1;
                queue.push_back(w as usize);
            }
        }
    }
    let mut ball = CayleyBall {
        presentation: p.clone(),
        radius,
        words,
        edges,
        depth,
        safe_radius,
        index: HashMap::new(),
    };
    ball.rebuild_index();
    Ok(ball)
}
