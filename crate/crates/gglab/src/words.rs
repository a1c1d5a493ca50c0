//! Symmetric generating alphabets and freely reduced words.
//!
//! A generator is a lowercase ASCII letter; its formal inverse is the
//! corresponding uppercase letter. Symbols are encoded as `u8` values
//! `2*i` (generator `i`) and `2*i + 1` (its inverse), so `sym ^ 1` is
//! the inverse. The total order used everywhere (shortlex, tie-breaks)
//! is: generators in declaration order, then inverses in declaration
//! order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::GglabError;

/// Encoded alphabet symbol. `sym ^ 1` is the formal inverse.
pub type Sym = u8;

#[inline]
pub fn inverse_sym(s: Sym) -> Sym {
    s ^ 1
}

/// A symmetric generating alphabet with a fixed total order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    letters: Vec<char>,
}

impl Alphabet {
    pub fn new(letters: Vec<char>) -> Result<Self, GglabError> {
        let mut seen = std::collections::HashSet::new();
        for &c in &letters {
            if !c.is_ascii_lowercase() {
                return Err(GglabError::Input(format!(
                    "generator '{c}' is not a lowercase ASCII letter"
                )));
            }
            if !seen.insert(c) {
                return Err(GglabError::Input(format!("duplicate generator '{c}'")));
            }
        }
        if letters.is_empty() {
            return Err(GglabError::Input("empty generator list".into()));
        }
        Ok(Alphabet { letters })
    }

    /// Number of generators (half the symbol count).
    pub fn rank(&self) -> usize {
        self.letters.len()
    }

    /// All symbols: generators and inverses.
    pub fn symbols(&self) -> impl Iterator<Item = Sym> + '_ {
        (0..2 * self.letters.len() as u8).map(|s| s)
    }

    /// Symbols sorted by the alphabet order (generators first, then inverses).
    pub fn symbols_ordered(&self) -> Vec<Sym> {
        let n = self.letters.len() as u8;
        let mut v: Vec<Sym> = (0..n).map(|i| 2 * i).collect();
        v.extend((0..n).map(|i| 2 * i + 1));
        v
    }

    /// Position of a symbol in the alphabet order.
    #[inline]
    pub fn order_rank(&self, s: Sym) -> usize {
        let i = (s / 2) as usize;
        if s & 1 == 0 {
            i
        } else {
            self.rank() + i
        }
    }

    pub fn sym_of_char(&self, c: char) -> Result<Sym, GglabError> {
        let lower = c.to_ascii_lowercase();
        match self.letters.iter().position(|&l| l == lower) {
            Some(i) => {
                let base = 2 * i as u8;
                Ok(if c.is_ascii_uppercase() { base + 1 } else { base })
            }
            None => Err(GglabError::Input(format!("unknown symbol '{c}'"))),
        }
    }

    pub fn char_of_sym(&self, s: Sym) -> char {
        let c = self.letters[(s / 2) as usize];
        if s & 1 == 1 {
            c.to_ascii_uppercase()
        } else {
            c
        }
    }

    /// Shortlex order on symbol sequences.
    pub fn shortlex_cmp(&self, a: &[Sym], b: &[Sym]) -> std::cmp::Ordering {
        a.len()
            .cmp(&b.len())
            .then_with(|| {
                for (&x, &y) in a.iter().zip(b.iter()) {
                    let c = self.order_rank(x).cmp(&self.order_rank(y));
                    if c != std::cmp::Ordering::Equal {
                        return c;
                    }
                }
                std::cmp::Ordering::Equal
            })
    }
}

/// A freely reduced word over an alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(Vec<Sym>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    /// Free reduction of an arbitrary letter sequence.
    pub fn reduce(letters: &[Sym]) -> Self {
        let mut stack: Vec<Sym> = Vec::with_capacity(letters.len());
        for &s in letters {
            if stack.last() == Some(&inverse_sym(s)) {
                stack.pop();
            } else {
                stack.push(s);
            }
        }
        Word(stack)
    }

    pub fn from_str(text: &str, alphabet: &Alphabet) -> Result<Self, GglabError> {
        let mut syms = Vec::new();
        for c in text.chars() {
            if c.is_whitespace() {
                continue;
            }
            syms.push(alphabet.sym_of_char(c)?);
        }
        Ok(Word::reduce(&syms))
    }

    pub fn syms(&self) -> &[Sym] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|&s| inverse_sym(s)).collect())
    }

    /// Product with free reduction.
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word::reduce(&v)
    }

    pub fn push(&self, s: Sym) -> Word {
        let mut v = self.0.clone();
        v.push(s);
        Word::reduce(&v)
    }

    /// Cyclic reduction: strips matching first/last letters.
    pub fn cyclically_reduce(&self) -> Word {
        let mut v = self.0.clone();
        while v.len() >= 2 && *v.first().unwrap() == inverse_sym(*v.last().unwrap()) {
            v.pop();
            v.remove(0);
        }
        Word(v)
    }

    pub fn rotation(&self, k: usize) -> Word {
        let n = self.0.len();
        if n == 0 {
            return Word::identity();
        }
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            v.push(self.0[(i + k) % n]);
        }
        Word(v)
    }

    pub fn render(&self, alphabet: &Alphabet) -> String {
        self.0.iter().map(|&s| alphabet.char_of_sym(s)).collect()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            write!(f, "1")
        } else {
            for &s in &self.0 {
                let i = s / 2;
                let c = (b'a' + i) as char;
                if s & 1 == 1 {
                    write!(f, "{}", c.to_ascii_uppercase())?;
                } else {
                    write!(f, "{c}")?;
                }
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab() -> Alphabet {
        Alphabet::new(vec!['a', 'b']).unwrap()
    }

    fn w(s: &str) -> Word {
        Word::from_str(s, &ab()).unwrap()
    }

    #[test]
    fn reduce_cancels_adjacent_inverse() {
        assert_eq!(w("abB"), w("a"));
        assert_eq!(w("aA"), Word::identity());
        assert_eq!(w("abab"), w("abab"));
    }

    #[test]
    fn unknown_symbol_is_an_input_error() {
        assert!(Word::from_str("axz", &ab()).is_err());
    }

    #[test]
    fn inverse_is_involutive_and_cancels() {
        let u = w("aabAB");
        assert_eq!(u.inverse().inverse(), u);
        assert_eq!(u.concat(&u.inverse()), Word::identity());
    }

    #[test]
    fn shortlex_order_generators_before_inverses() {
        let a = ab();
        use std::cmp::Ordering::*;
        assert_eq!(a.shortlex_cmp(w("a").syms(), w("b").syms()), Less);
        assert_eq!(a.shortlex_cmp(w("b").syms(), w("A").syms()), Less);
        assert_eq!(a.shortlex_cmp(w("A").syms(), w("B").syms()), Less);
        assert_eq!(a.shortlex_cmp(w("B").syms(), w("aa").syms()), Less);
    }

    proptest! {
        #[test]
        fn free_reduce_idempotent_and_nonincreasing(letters in proptest::collection::vec(0u8..4, 0..40)) {
            let once = Word::reduce(&letters);
            let twice = Word::reduce(once.syms());
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.len() <= letters.len());
        }
    }
}
