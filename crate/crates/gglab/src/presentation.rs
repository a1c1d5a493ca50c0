//! Group presentations and word-problem strategies.
//!
//! Two strategies are supported. `FreeGroup` solves the word problem by
//! free reduction. `DehnSmallCancellation` requires the presentation to
//! satisfy C'(1/6) (checked at load time) and solves the word problem
//! with Dehn's algorithm: any subword spanning more than half of a
//! symmetrized relator is replaced by the shorter complement.
//!
//! Text format, one declaration per line, `#` starts a comment:
//!
//! ```text
//! gens: a b
//! rel: abABcdCD
//! ```
//!
//! Uppercase letters denote inverses (`A` = a⁻¹).

use serde::{Deserialize, Serialize};

use crate::error::{GglabError, Result};
use crate::words::{Alphabet, Sym, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    FreeGroup,
    DehnSmallCancellation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Presentation {
    pub alphabet: Alphabet,
    /// Cyclically reduced relators, as written (after cyclic reduction).
    pub relators: Vec<Word>,
    pub strategy: Strategy,
    /// All distinct cyclic rotations of relators and their inverses,
    /// sorted shortlex. Empty for free groups.
    symmetrized: Vec<Word>,
}

impl Presentation {
    /// A free group on the given generators.
    pub fn free(letters: &[char]) -> Result<Self> {
        Ok(Presentation {
            alphabet: Alphabet::new(letters.to_vec())?,
            relators: Vec::new(),
            strategy: Strategy::FreeGroup,
            symmetrized: Vec::new(),
        })
    }

    pub fn new(alphabet: Alphabet, relators: Vec<Word>) -> Result<Self> {
        let relators: Vec<Word> = relators
            .into_iter()
            .map(|r| r.cyclically_reduce())
            .filter(|r| !r.is_empty())
            .collect();
        if relators.is_empty() {
            return Ok(Presentation {
                alphabet,
                relators,
                strategy: Strategy::FreeGroup,
                symmetrized: Vec::new(),
            });
        }
        let symmetrized = symmetrize(&relators);
        check_c_prime_sixth(&alphabet, &relators, &symmetrized)?;
        Ok(Presentation {
            alphabet,
            relators,
            strategy: Strategy::DehnSmallCancellation,
            symmetrized,
        })
    }

    /// Parse the presentation text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut letters: Option<Vec<char>> = None;
        let mut relator_strings: Vec<(usize, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("gens:") {
                if letters.is_some() {
                    return Err(GglabError::Input(format!(
                        "line {}: duplicate 'gens:' declaration",
                        lineno + 1
                    )));
                }
                let mut ls = Vec::new();
                for tok in rest.split_whitespace() {
                    let mut chars = tok.chars();
                    let c = chars.next().unwrap();
                    if chars.next().is_some() {
                        return Err(GglabError::Input(format!(
                            "line {}: generator '{tok}' must be a single letter",
                            lineno + 1
                        )));
                    }
                    ls.push(c);
                }
                letters = Some(ls);
            } else if let Some(rest) = line.strip_prefix("rel:") {
                relator_strings.push((lineno + 1, rest.trim().to_string()));
            } else {
                return Err(GglabError::Input(format!(
                    "line {}: expected 'gens:' or 'rel:'",
                    lineno + 1
                )));
            }
        }
        let letters = letters
            .ok_or_else(|| GglabError::Input("missing 'gens:' declaration".into()))?;
        let alphabet = Alphabet::new(letters)?;
        let mut relators = Vec::new();
        for (lineno, s) in relator_strings {
            let w = Word::from_str(&s, &alphabet).map_err(|e| {
                GglabError::Input(format!("line {lineno}: {e}"))
            })?;
            relators.push(w);
        }
        Presentation::new(alphabet, relators)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Presentation::parse(&text)
    }

    pub fn symmetrized(&self) -> &[Word] {
        &self.symmetrized
    }

    /// Word-problem normal pass: identity test is `reduce(w).is_empty()`.
    pub fn reduce(&self, w: &Word) -> Word {
        match self.strategy {
            Strategy::FreeGroup => w.clone(),
            Strategy::DehnSmallCancellation => dehn_reduce(w, self),
        }
    }

    pub fn is_identity(&self, w: &Word) -> bool {
        self.reduce(w).is_empty()
    }

    pub fn equal(&self, u: &Word, v: &Word) -> bool {
        match self.strategy {
            Strategy::FreeGroup => u == v,
            Strategy::DehnSmallCancellation => {
                self.is_identity(&u.inverse().concat(v))
            }
        }
    }
}

fn symmetrize(relators: &[Word]) -> Vec<Word> {
    let mut set = std::collections::BTreeSet::new();
    for r in relators {
        for base in [r.clone(), r.inverse()] {
            for k in 0..base.len() {
                set.insert(base.rotation(k));
            }
        }
    }
    set.into_iter().collect()
}

fn common_prefix_len(a: &[Sym], b: &[Sym]) -> usize {
    a.iter().zip(b.iter()).take_while(|(x, y)| x == y).count()
}

/// C'(1/6) piece condition over the symmetrized relator set: every
/// common prefix of two distinct rotations is shorter than 1/6 of the
/// shorter word. Proper-power relators fail (two rotations coincide).
fn check_c_prime_sixth(
    alphabet: &Alphabet,
    relators: &[Word],
    symmetrized: &[Word],
) -> Result<()> {
    for r in relators {
        for k in 1..r.len() {
            if r.rotation(k) == *r {
                return Err(GglabError::Config(format!(
                    "relator '{}' is a proper power; C'(1/6) fails",
                    r.render(alphabet)
                )));
            }
        }
    }
    for (i, u) in symmetrized.iter().enumerate() {
        for v in symmetrized.iter().skip(i + 1) {
            let p = common_prefix_len(u.syms(), v.syms());
            let min_len = u.len().min(v.len());
            if 6 * p >= min_len {
                return Err(GglabError::Config(format!(
                    "C'(1/6) violated: rotations '{}' and '{}' share a piece of length {p}",
                    u.render(alphabet),
                    v.render(alphabet)
                )));
            }
        }
    }
    Ok(())
}

/// Dehn's algorithm: repeatedly replace a subword that is more than
/// half of a symmetrized relator by the inverse of the complement, then
/// freely reduce. Deterministic: at each pass the leftmost longest
/// replaceable subword is used, ties broken by shortlex order of the
/// matched relator rotation.
pub fn dehn_reduce(w: &Word, p: &Presentation) -> Word {
    debug_assert_eq!(p.strategy, Strategy::DehnSmallCancellation);
    let mut cur = w.clone();
    'outer: loop {
        let syms = cur.syms();
        let n = syms.len();
        let mut best: Option<(usize, usize, &Word)> = None; // (start, match_len, rotation)
        for start in 0..n {
            for t in p.symmetrized() {
                let avail = n - start;
                let m = common_prefix_len(&syms[start..], t.syms());
                let m = m.min(avail);
                if 2 * m > t.len() {
                    let better = match best {
                        None => true,
                        Some((bs, bm, bt)) => {
                            m > bm
                                || (m == bm && start < bs)
                                || (m == bm
                                    && start == bs
                                    && p.alphabet.shortlex_cmp(t.syms(), bt.syms())
                                        == std::cmp::Ordering::Less)
                        }
                    };
                    if better {
                        best = Some((start, m, t));
                    }
                }
            }
        }
        match best {
            Some((start, m, t)) => {
                // t = u·v with u the matched subword; u = v⁻¹ in the group.
                let u_complement = Word::reduce(&t.syms()[m..]).inverse();
                let mut next = syms[..start].to_vec();
                next.extend_from_slice(u_complement.syms());
                next.extend_from_slice(&syms[start + m..]);
                let next = Word::reduce(&next);
                debug_assert!(next.len() < cur.len());
                cur = next;
                continue 'outer;
            }
            None => return cur,
        }
    }
}

/// Parse a subgroup file: one generator word per line, `#` comments.
pub fn parse_subgroup_words(text: &str, alphabet: &Alphabet) -> Result<Vec<Word>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let w = Word::from_str(line, alphabet)
            .map_err(|e| GglabError::Input(format!("line {}: {e}", lineno + 1)))?;
        if !w.is_empty() {
            out.push(w);
        }
    }
    Ok(out)
}

pub fn load_subgroup_words(path: &std::path::Path, alphabet: &Alphabet) -> Result<Vec<Word>> {
    let text = std::fs::read_to_string(path)?;
    parse_subgroup_words(&text, alphabet)
}
