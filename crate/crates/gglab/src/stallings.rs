//! Stallings core graphs for finitely generated subgroups of free
//! groups: folding, membership, pullbacks (intersections), conjugates,
//! shortlex-least double-coset representatives, and coset pieces
//! inside Cayley balls.
//!
//! A folded basepointed core graph recognizes exactly the reduced
//! words of its subgroup as basepoint loops. Left cosets of H are
//! identified through the Schreier invariant of the inverse word: read
//! g⁻¹ from the basepoint, consuming letters while transitions exist;
//! the pair (state reached, unread residue) determines Hg⁻¹, hence gH.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::ball::CayleyBall;
use crate::error::{GglabError, Result};
use crate::presentation::Strategy;
use crate::words::{inverse_sym, Alphabet, Sym, Word};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreGraph {
    pub alphabet: Alphabet,
    pub basepoint: u32,
    /// trans[state][sym] = target, or `NO_STATE`.
    trans: Vec<Vec<u32>>,
}

pub const NO_STATE: u32 = u32::MAX;

impl CoreGraph {
    pub fn states(&self) -> usize {
        self.trans.len()
    }

    pub fn walk(&self, state: u32, s: Sym) -> Option<u32> {
        let t = self.trans[state as usize][s as usize];
        (t != NO_STATE).then_some(t)
    }

    /// Number of geometric edges.
    pub fn edge_count(&self) -> usize {
        // Each geometric edge contributes two table entries.
        self.trans
            .iter()
            .flatten()
            .filter(|&&t| t != NO_STATE)
            .count()
            / 2
    }

    /// First Betti number |E| − |V| + 1 of the (connected) core.
    pub fn rank(&self) -> usize {
        self.edge_count() + 1 - self.states()
    }

    pub fn membership(&self, w: &Word) -> bool {
        let mut state = self.basepoint;
        for &s in w.syms() {
            match self.walk(state, s) {
                Some(t) => state = t,
                None => return false,
            }
        }
        state == self.basepoint
    }

    /// Longest prefix of `w` readable from the basepoint: returns the
    /// state reached and the index of the first unread letter.
    pub fn read_prefix(&self, w: &Word) -> (u32, usize) {
        let mut state = self.basepoint;
        for (i, &s) in w.syms().iter().enumerate() {
            match self.walk(state, s) {
                Some(t) => state = t,
                None => return (state, i),
            }
        }
        (state, w.len())
    }

    /// Schreier invariant of the right coset H·w: (state, residue).
    /// Two words lie in the same right coset iff their invariants match.
    pub fn right_coset_id(&self, w: &Word) -> (u32, Word) {
        let (state, i) = self.read_prefix(w);
        (state, Word::reduce(&w.syms()[i..]))
    }

    /// Invariant of the left coset g·H (via Hg⁻¹).
    pub fn left_coset_id(&self, g: &Word) -> (u32, Word) {
        self.right_coset_id(&g.inverse())
    }

    pub fn same_left_coset(&self, g1: &Word, g2: &Word) -> bool {
        self.left_coset_id(g1) == self.left_coset_id(g2)
    }

    /// All nontrivial subgroup elements of reduced length ≤ `max_len`
    /// (reduced basepoint loops), shortlex-sorted.
    pub fn enumerate_elements(&self, max_len: usize) -> Vec<Word> {
        let mut out = Vec::new();
        let mut stack: Vec<(u32, Vec<Sym>)> = vec![(self.basepoint, Vec::new())];
        while let Some((state, prefix)) = stack.pop() {
            for s in self.alphabet.symbols() {
                if prefix.last() == Some(&inverse_sym(s)) {
                    continue; // reduced paths only
                }
                if let Some(t) = self.walk(state, s) {
                    let mut w = prefix.clone();
                    w.push(s);
                    if t == self.basepoint {
                        out.push(Word::reduce(&w));
                    }
                    if w.len() < max_len {
                        stack.push((t, w));
                    }
                }
            }
        }
        out.sort_by(|a, b| self.alphabet.shortlex_cmp(a.syms(), b.syms()));
        out.dedup();
        out
    }

    /// Deterministic encoding of the basepointed graph (folded core
    /// graphs are canonical, so equality of encodings is isomorphism).
    pub fn signature(&self) -> Vec<u32> {
        encode_from(&self.trans, self.basepoint, self.alphabet.rank() * 2)
    }

    /// Conjugacy-class invariant: canonical encoding of the cyclic
    /// core (basepoint hair removed), minimized over start states.
    pub fn conjugacy_signature(&self) -> Vec<u32> {
        let mut b = Builder::from_core(self);
        b.prune(None);
        let alive: Vec<u32> = (0..b.sets.len() as u32).filter(|&v| b.alive[v as usize]).collect();
        if alive.is_empty() {
            return Vec::new();
        }
        let trans = b.resolved_tables();
        alive
            .iter()
            .map(|&v| encode_from(&trans, v, self.alphabet.rank() * 2))
            .min()
            .unwrap()
    }
}

fn encode_from(trans: &[Vec<u32>], start: u32, nsyms: usize) -> Vec<u32> {
    let mut number: HashMap<u32, u32> = HashMap::new();
    let mut order: Vec<u32> = Vec::new();
    number.insert(start, 0);
    order.push(start);
    let mut head = 0;
    let mut code = Vec::new();
    while head < order.len() {
        let v = order[head];
        head += 1;
        for s in 0..nsyms {
            let t = trans[v as usize][s];
            if t == NO_STATE {
                code.push(0);
            } else {
                let id = *number.entry(t).or_insert_with(|| {
                    order.push(t);
                    order.len() as u32 - 1
                });
                code.push(id + 1);
            }
        }
    }
    code
}

// ---------------------------------------------------------------------------
// Mutable builder: folding, merging, pruning
// ---------------------------------------------------------------------------

struct Builder {
    nsyms: usize,
    /// sets[state][sym] = possible targets (multi until folded).
    sets: Vec<Vec<BTreeSet<u32>>>,
    alive: Vec<bool>,
    redirect: Vec<u32>,
    basepoint: u32,
}

impl Builder {
    fn new(nsyms: usize) -> Self {
        let mut b = Builder {
            nsyms,
            sets: Vec::new(),
            alive: Vec::new(),
            redirect: Vec::new(),
            basepoint: 0,
        };
        b.basepoint = b.add_state();
        b
    }

    fn from_core(cg: &CoreGraph) -> Self {
        let nsyms = cg.alphabet.rank() * 2;
        let mut b = Builder::new(nsyms);
        for _ in 1..cg.states() {
            b.add_state();
        }
        for v in 0..cg.states() as u32 {
            for s in (0..nsyms as u8).step_by(2) {
                // Positive syms cover every geometric edge once.
                if let Some(t) = cg.walk(v, s) {
                    b.add_edge(v, s, t);
                }
            }
        }
        b.basepoint = cg.basepoint;
        b
    }

    fn add_state(&mut self) -> u32 {
        let id = self.sets.len() as u32;
        self.sets.push(vec![BTreeSet::new(); self.nsyms]);
        self.alive.push(true);
        self.redirect.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.redirect[x as usize] != x {
            let next = self.redirect[x as usize];
            self.redirect[x as usize] = self.redirect[next as usize];
            x = self.redirect[x as usize];
        }
        x
    }

    fn add_edge(&mut self, u: u32, s: Sym, v: u32) {
        self.sets[u as usize][s as usize].insert(v);
        self.sets[v as usize][inverse_sym(s) as usize].insert(u);
    }

    /// Spell a word as a fresh path from `from`; returns the end state.
    fn add_path(&mut self, from: u32, w: &Word) -> u32 {
        let mut cur = from;
        for &s in w.syms() {
            let next = self.add_state();
            self.add_edge(cur, s, next);
            cur = next;
        }
        cur
    }

    /// Spell a word from `from` ending exactly at `to`.
    fn add_path_to(&mut self, from: u32, w: &Word, to: u32) {
        if w.is_empty() {
            // Caller must not identify distinct states via an empty path.
            assert_eq!(from, to);
            return;
        }
        let mut cur = from;
        for (i, &s) in w.syms().iter().enumerate() {
            let next = if i + 1 == w.len() { to } else { self.add_state() };
            self.add_edge(cur, s, next);
            cur = next;
        }
    }

    fn merge(&mut self, y: u32, x: u32) {
        let (x, y) = (self.find(x), self.find(y));
        if x == y {
            return;
        }
        let (x, y) = if x < y { (x, y) } else { (y, x) };
        self.alive[y as usize] = false;
        self.redirect[y as usize] = x;
        let rows = std::mem::take(&mut self.sets[y as usize]);
        self.sets[y as usize] = vec![BTreeSet::new(); self.nsyms];
        for (s, set) in rows.into_iter().enumerate() {
            for t0 in set {
                let t = self.find(t0);
                self.sets[t as usize][inverse_sym(s as Sym) as usize].remove(&y);
                self.add_edge(x, s as Sym, t);
            }
        }
        self.basepoint = self.find(self.basepoint);
    }

    /// Canonicalize a row in place (resolve redirects, drop dead refs);
    /// returns the row's distinct live targets.
    fn resolve_row(&mut self, v: u32, s: usize) -> Vec<u32> {
        let raw: Vec<u32> = self.sets[v as usize][s].iter().copied().collect();
        let mut resolved = BTreeSet::new();
        for t in raw {
            resolved.insert(self.find(t));
        }
        self.sets[v as usize][s] = resolved.iter().copied().collect();
        resolved.into_iter().collect()
    }

    fn fold(&mut self) {
        loop {
            let mut conflict: Option<(u32, u32)> = None;
            'scan: for v in 0..self.sets.len() as u32 {
                if !self.alive[v as usize] {
                    continue;
                }
                for s in 0..self.nsyms {
                    let targets = self.resolve_row(v, s);
                    if targets.len() >= 2 {
                        conflict = Some((targets[1], targets[0]));
                        break 'scan;
                    }
                }
            }
            match conflict {
                Some((y, x)) => self.merge(y, x),
                None => break,
            }
        }
    }

    fn degree(&mut self, v: u32) -> usize {
        (0..self.nsyms).map(|s| self.resolve_row(v, s).len()).sum()
    }

    /// Remove valence-≤1 states; `protect` survives regardless.
    fn prune(&mut self, protect: Option<u32>) {
        loop {
            let mut removed = false;
            for v in 0..self.sets.len() as u32 {
                if !self.alive[v as usize] {
                    continue;
                }
                if protect.map(|p| self.find(p)) == Some(v) {
                    continue;
                }
                if self.degree(v) <= 1 {
                    // Detach from the single neighbor, if any.
                    for s in 0..self.nsyms {
                        let ts = self.resolve_row(v, s);
                        for t in ts {
                            self.sets[t as usize][inverse_sym(s as Sym) as usize].remove(&v);
                        }
                        self.sets[v as usize][s].clear();
                    }
                    self.alive[v as usize] = false;
                    removed = true;
                }
            }
            if !removed {
                break;
            }
        }
    }

    /// Resolved transition tables over the raw state space (dead rows empty).
    fn resolved_tables(&mut self) -> Vec<Vec<u32>> {
        let n = self.sets.len();
        let mut out = vec![vec![NO_STATE; self.nsyms]; n];
        for v in 0..n as u32 {
            if !self.alive[v as usize] {
                continue;
            }
            for s in 0..self.nsyms {
                let ts = self.resolve_row(v, s);
                debug_assert!(ts.len() <= 1, "resolved table requires folded graph");
                if let Some(&t) = ts.first() {
                    out[v as usize][s] = t;
                }
            }
        }
        out
    }

    /// Extract the basepoint component as a CoreGraph with
    /// deterministic BFS numbering.
    fn finalize(&mut self, alphabet: &Alphabet) -> CoreGraph {
        let bp = self.find(self.basepoint);
        let tables = self.resolved_tables();
        let mut number: HashMap<u32, u32> = HashMap::new();
        let mut order: Vec<u32> = vec![bp];
        number.insert(bp, 0);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for s in 0..self.nsyms {
                let t = tables[v as usize][s];
                if t != NO_STATE && !number.contains_key(&t) {
                    number.insert(t, order.len() as u32);
                    order.push(t);
                }
            }
        }
        let trans = order
            .iter()
            .map(|&v| {
                (0..self.nsyms)
                    .map(|s| {
                        let t = tables[v as usize][s];
                        if t == NO_STATE {
                            NO_STATE
                        } else {
                            number[&t]
                        }
                    })
                    .collect()
            })
            .collect();
        CoreGraph {
            alphabet: alphabet.clone(),
            basepoint: 0,
            trans,
        }
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Fold the flower of the given generators into a core graph.
pub fn fold(alphabet: &Alphabet, generators: &[Word]) -> CoreGraph {
    let mut b = Builder::new(alphabet.rank() * 2);
    let bp = b.basepoint;
    for g in generators {
        if !g.is_empty() {
            let end = b.add_path(bp, &Word::reduce(&g.syms()[..g.len() - 1]));
            b.add_edge(end, *g.syms().last().unwrap(), bp);
        }
    }
    b.fold();
    b.prune(Some(b.basepoint));
    b.finalize(alphabet)
}

/// Core graph of the intersection H₁ ∩ H₂ (product automaton,
/// basepoint component, cored).
pub fn pullback(cg1: &CoreGraph, cg2: &CoreGraph) -> CoreGraph {
    assert_eq!(cg1.alphabet, cg2.alphabet, "pullback needs one alphabet");
    let nsyms = cg1.alphabet.rank() * 2;
    let mut index: HashMap<(u32, u32), u32> = HashMap::new();
    let mut b = Builder::new(nsyms);
    let start = (cg1.basepoint, cg2.basepoint);
    index.insert(start, b.basepoint);
    let mut queue = vec![start];
    let mut head = 0;
    while head < queue.len() {
        let (s1, s2) = queue[head];
        head += 1;
        let from = index[&(s1, s2)];
        for s in 0..nsyms as u8 {
            if let (Some(t1), Some(t2)) = (cg1.walk(s1, s), cg2.walk(s2, s)) {
                let to = *index.entry((t1, t2)).or_insert_with(|| {
                    queue.push((t1, t2));
                    b.add_state()
                });
                if s % 2 == 0 {
                    b.add_edge(from, s, to);
                }
            }
        }
    }
    b.prune(Some(b.basepoint));
    b.finalize(&cg1.alphabet)
}

/// Core graph of gHg⁻¹.
pub fn conjugate(cg: &CoreGraph, g: &Word) -> CoreGraph {
    if g.is_empty() {
        return cg.clone();
    }
    let mut b = Builder::from_core(cg);
    let old_bp = b.basepoint;
    let new_bp = b.add_state();
    // Loops at new_bp spell g · h · g⁻¹: path g from new_bp to old_bp.
    b.add_path_to(new_bp, g, old_bp);
    b.basepoint = new_bp;
    b.fold();
    b.prune(Some(b.basepoint));
    b.finalize(&cg.alphabet)
}

/// Shortlex-least element of the double coset H·g·H.
///
/// The folded union of two copies of the core graph joined by a path
/// spelling g recognizes, between the two basepoint images, exactly
/// the reduced words of HgH; a layered shortlex search of reduced
/// paths bounded by |g| finds the least one.
pub fn double_coset_canonical(cg: &CoreGraph, g: &Word) -> Word {
    if cg.membership(g) {
        return Word::identity();
    }
    let alphabet = &cg.alphabet;
    let nsyms = alphabet.rank() * 2;
    let mut b = Builder::from_core(cg);
    let bp1 = b.basepoint;
    // Second copy of cg, offset by the current state count.
    let offset = b.sets.len() as u32;
    for _ in 0..cg.states() {
        b.add_state();
    }
    for v in 0..cg.states() as u32 {
        for s in 0..nsyms as u8 {
            if s % 2 == 0 {
                if let Some(t) = cg.walk(v, s) {
                    b.add_edge(offset + v, s, offset + t);
                }
            }
        }
    }
    let bp2 = offset + cg.basepoint;
    b.add_path_to(bp1, g, bp2);
    b.fold();
    let tables = b.resolved_tables();
    let from = b.find(bp1);
    let to = b.find(bp2);
    debug_assert_ne!(from, to, "g ∉ H was checked above");

    // Layered shortlex BFS over reduced paths.
    let mut frontier: BTreeMap<(u32, Sym), Word> = BTreeMap::new();
    let order = |alphabet: &Alphabet, a: &Word, c: &Word| alphabet.shortlex_cmp(a.syms(), c.syms());
    for s in alphabet.symbols_ordered() {
        if tables[from as usize][s as usize] != NO_STATE {
            let t = tables[from as usize][s as usize];
            let w = Word::reduce(&[s]);
            frontier
                .entry((t, s))
                .and_modify(|old| {
                    if order(alphabet, &w, old) == std::cmp::Ordering::Less {
                        *old = w.clone();
                    }
                })
                .or_insert(w);
        }
    }
    let mut best: Option<Word> = None;
    for _level in 1..=g.len() {
        for ((state, _), w) in &frontier {
            if *state == to {
                match &best {
                    Some(b0) if order(alphabet, w, b0) != std::cmp::Ordering::Less => {}
                    _ => best = Some(w.clone()),
                }
            }
        }
        if best.is_some() {
            break;
        }
        let mut next: BTreeMap<(u32, Sym), Word> = BTreeMap::new();
        for ((state, last), w) in &frontier {
            for s in alphabet.symbols_ordered() {
                if s == inverse_sym(*last) {
                    continue;
                }
                let t = tables[*state as usize][s as usize];
                if t == NO_STATE {
                    continue;
                }
                let mut syms = w.syms().to_vec();
                syms.push(s);
                let nw = Word::reduce(&syms);
                next.entry((t, s))
                    .and_modify(|old| {
                        if order(alphabet, &nw, old) == std::cmp::Ordering::Less {
                            *old = nw.clone();
                        }
                    })
                    .or_insert(nw);
            }
        }
        frontier = next;
    }
    best.expect("the spelling of g itself reaches the far basepoint within |g| steps")
}

// ---------------------------------------------------------------------------
// Coset families over balls
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CosetFamily {
    pub subgroup: CoreGraph,
    /// Left-coset representatives, pairwise in distinct cosets.
    pub representatives: Vec<Word>,
    /// Per representative: the ball vertices of rep·H ∩ ball.
    pub pieces: Vec<Vec<u32>>,
}

/// Auto-enumeration threshold: pieces need ≥ 2 ball points.
pub const MIN_PIECE_POINTS: usize = 2;

/// Pieces for explicit representatives, or (`reps = None`) for every
/// coset meeting the ball in at least `min_points` vertices.
pub fn coset_pieces(
    cg: &CoreGraph,
    ball: &CayleyBall,
    reps: Option<&[Word]>,
    min_points: usize,
) -> Result<CosetFamily> {
    if ball.presentation.strategy != Strategy::FreeGroup {
        return Err(GglabError::Unsupported(
            "exact coset pieces require a free-group presentation; non-free groups carry orbit vertex-sets only".into(),
        ));
    }
    let ids: Vec<(u32, Word)> = ball
        .words
        .iter()
        .map(|w| cg.left_coset_id(w))
        .collect();
    match reps {
        Some(reps) => {
            let mut rep_ids = Vec::new();
            for (i, r) in reps.iter().enumerate() {
                let id = cg.left_coset_id(r);
                if let Some(j) = rep_ids.iter().position(|x| *x == id) {
                    return Err(GglabError::Input(format!(
                        "representatives {} and {} lie in the same left coset",
                        reps[j].render(&ball.presentation.alphabet),
                        reps[i].render(&ball.presentation.alphabet),
                    )));
                }
                rep_ids.push(id);
            }
            let pieces = rep_ids
                .iter()
                .map(|id| {
                    (0..ball.n() as u32)
                        .filter(|&v| ids[v as usize] == *id)
                        .collect()
                })
                .collect();
            Ok(CosetFamily {
                subgroup: cg.clone(),
                representatives: reps.to_vec(),
                pieces,
            })
        }
        None => {
            let mut groups: BTreeMap<(u32, Word), Vec<u32>> = BTreeMap::new();
            for (v, id) in ids.iter().enumerate() {
                groups.entry(id.clone()).or_default().push(v as u32);
            }
            let mut entries: Vec<(Word, Vec<u32>)> = groups
                .into_values()
                .filter(|piece| piece.len() >= min_points)
                .map(|piece| {
                    // Representative: shortlex-least ball word of the piece
                    // (vertex order is layer-then-shortlex, so the first).
                    (ball.words[piece[0] as usize].clone(), piece)
                })
                .collect();
            entries.sort_by(|a, b| {
                ball.presentation
                    .alphabet
                    .shortlex_cmp(a.0.syms(), b.0.syms())
            });
            let (representatives, pieces) = entries.into_iter().unzip();
            Ok(CosetFamily {
                subgroup: cg.clone(),
                representatives,
                pieces,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ball::build_ball;
    use crate::presentation::Presentation;

    fn f2() -> Presentation {
        Presentation::parse("gens: a b\n").unwrap()
    }

    fn w(s: &str) -> Word {
        Word::from_str(s, &f2().alphabet).unwrap()
    }

    fn sub(gens: &[&str]) -> CoreGraph {
        let a = f2().alphabet;
        let words: Vec<Word> = gens.iter().map(|g| Word::from_str(g, &a).unwrap()).collect();
        fold(&a, &words)
    }

    #[test]
    fn cyclic_subgroup_is_one_loop() {
        let h = sub(&["a"]);
        assert_eq!(h.states(), 1);
        assert_eq!(h.rank(), 1);
        assert!(h.membership(&w("aaaaa")));
        assert!(!h.membership(&w("b")));
    }

    #[test]
    fn trivial_subgroup() {
        let h = sub(&[]);
        assert_eq!(h.states(), 1);
        assert_eq!(h.rank(), 0);
        assert!(h.membership(&Word::identity()));
        assert!(!h.membership(&w("a")));
    }

    /// Brute-force oracle: closure of {1} under right-multiplication by
    /// generator letters, restricted to reduced length ≤ `cap`. Every
    /// subgroup element whose products stay short appears; with `cap`
    /// comfortably above the query length the set is exact on queries.
    fn enumeration_oracle(gens: &[&str], cap: usize) -> std::collections::HashSet<Word> {
        let a = f2().alphabet;
        let mut gen_words: Vec<Word> = Vec::new();
        for g in gens {
            let gw = Word::from_str(g, &a).unwrap();
            gen_words.push(gw.inverse());
            gen_words.push(gw);
        }
        let mut set = std::collections::HashSet::new();
        set.insert(Word::identity());
        let mut frontier = vec![Word::identity()];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for u in &frontier {
                for g in &gen_words {
                    let p = u.concat(g);
                    if p.len() <= cap && set.insert(p.clone()) {
                        next.push(p);
                    }
                }
            }
            frontier = next;
        }
        set
    }

    #[test]
    fn membership_matches_enumeration_oracle() {
        // All reduced words of length ≤ 6 for ⟨a², b², aba⟩.
        let gens = ["aa", "bb", "aba"];
        let h = sub(&gens);
        let oracle = enumeration_oracle(&gens, 10);
        let p = f2();
        let ball = build_ball(&p, 6, 100_000).unwrap();
        for word in &ball.words {
            if h.membership(word) {
                assert!(
                    oracle.contains(word),
                    "false positive on {}",
                    word
                );
            } else {
                // Oracle words of length ≤ 6 must all be recognized.
                assert!(!oracle.contains(word), "false negative on {}", word);
            }
        }
    }

    #[test]
    fn pullback_of_disjoint_cyclics_is_trivial() {
        let pb = pullback(&sub(&["a"]), &sub(&["b"]));
        assert_eq!(pb.rank(), 0);
    }

    #[test]
    fn pullback_self_is_identity() {
        let h = sub(&["aa", "bb", "aba"]);
        let pb = pullback(&h, &h);
        assert_eq!(pb.signature(), h.signature());
    }

    #[test]
    fn pullback_of_conjugate_cyclic_is_trivial() {
        let h = sub(&["a"]);
        let hb = conjugate(&h, &w("b"));
        let pb = pullback(&h, &hb);
        assert_eq!(pb.rank(), 0);
        // Cross-check: short elements of the two subgroups share nothing.
        let e1 = h.enumerate_elements(10);
        let e2: std::collections::HashSet<Word> =
            hb.enumerate_elements(10).into_iter().collect();
        assert!(e1.iter().all(|x| !e2.contains(x)));
    }

    #[test]
    fn conjugate_by_identity_and_normalizer() {
        let h = sub(&["a"]);
        assert_eq!(conjugate(&h, &Word::identity()).signature(), h.signature());
        assert_eq!(conjugate(&h, &w("aaa")).signature(), h.signature());
    }

    #[test]
    fn conjugate_by_b_moves_the_loop() {
        let h = conjugate(&sub(&["a"]), &w("b"));
        assert!(h.membership(&w("baB")));
        assert!(!h.membership(&w("a")));
    }

    #[test]
    fn double_coset_absorbs_powers() {
        let h = sub(&["a"]);
        assert_eq!(double_coset_canonical(&h, &w("aaabaa")), w("b"));
        assert_eq!(double_coset_canonical(&h, &w("aaaa")), Word::identity());
    }

    #[test]
    fn double_coset_canonical_is_constant_on_cosets() {
        use rand::Rng;
        use rand::SeedableRng;
        let h = sub(&["aabb"]);
        let g = w("aab");
        let base = double_coset_canonical(&h, &g);
        assert!(base.len() <= g.len());
        let elements = h.enumerate_elements(8);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let h1 = &elements[rng.gen_range(0..elements.len())];
            let h2 = &elements[rng.gen_range(0..elements.len())];
            let g2 = h1.concat(&g).concat(h2);
            assert_eq!(double_coset_canonical(&h, &g2), base);
        }
    }

    #[test]
    fn pullback_rank_witness() {
        // rank ≥ 1 iff a nontrivial element exists within 2·states.
        let h1 = sub(&["a", "bab"]);
        let h2 = conjugate(&sub(&["a", "bab"]), &w("b"));
        let pb = pullback(&h1, &h2);
        let witness = pb.enumerate_elements(2 * pb.states());
        assert_eq!(pb.rank() >= 1, !witness.is_empty());
        if let Some(x) = witness.first() {
            assert!(h1.membership(x));
            assert!(h2.membership(x));
        }
    }

    #[test]
    fn coset_pieces_auto_matches_exhaustive_scan() {
        let p = f2();
        let ball = build_ball(&p, 3, 10_000).unwrap();
        let h = sub(&["a"]);
        let fam = coset_pieces(&h, &ball, None, 2).unwrap();
        // Exhaustive oracle: group vertices by pairwise same-coset tests.
        let mut assigned = vec![false; ball.n()];
        let mut oracle_pieces = Vec::new();
        for v in 0..ball.n() {
            if assigned[v] {
                continue;
            }
            let mut piece = Vec::new();
            for u in v..ball.n() {
                if !assigned[u]
                    && h.membership(&ball.words[v].inverse().concat(&ball.words[u]))
                {
                    assigned[u] = true;
                    piece.push(u as u32);
                }
            }
            if piece.len() >= 2 {
                oracle_pieces.push(piece);
            }
        }
        let mut got: Vec<Vec<u32>> = fam.pieces.clone();
        got.sort();
        oracle_pieces.sort();
        assert_eq!(got, oracle_pieces);
        // The identity coset contains the a-axis.
        let id_piece = &fam.pieces[0];
        let axis: Vec<u32> = (0..ball.n() as u32)
            .filter(|&v| {
                let wv = &ball.words[v as usize];
                wv.syms().iter().all(|&s| s / 2 == 0)
            })
            .collect();
        let mut sorted = id_piece.clone();
        sorted.sort();
        assert_eq!(sorted, axis);
    }

    #[test]
    fn coset_pieces_explicit_reps() {
        let p = f2();
        let ball = build_ball(&p, 3, 10_000).unwrap();
        let h = sub(&["a"]);
        let fam = coset_pieces(&h, &ball, Some(&[Word::identity(), w("b")]), 1).unwrap();
        assert_eq!(fam.pieces.len(), 2);
        assert!(fam.pieces[1]
            .iter()
            .all(|&v| ball.words[v as usize].syms().first() == Some(&2)));
        // Colliding reps are rejected.
        assert!(coset_pieces(&h, &ball, Some(&[w("a"), w("aa")]), 1).is_err());
    }

    #[test]
    fn whole_group_single_piece() {
        let p = f2();
        let ball = build_ball(&p, 2, 10_000).unwrap();
        let h = sub(&["a", "b"]);
        let fam = coset_pieces(&h, &ball, Some(&[Word::identity()]), 1).unwrap();
        assert_eq!(fam.pieces[0].len(), ball.n());
    }

    #[test]
    fn conjugacy_signature_invariant() {
        let h = sub(&["aabb"]);
        let hc = conjugate(&h, &w("bba"));
        assert_ne!(h.signature(), hc.signature());
        assert_eq!(h.conjugacy_signature(), hc.conjugacy_signature());
        assert_ne!(
            h.conjugacy_signature(),
            sub(&["a"]).conjugacy_signature()
        );
    }
}
