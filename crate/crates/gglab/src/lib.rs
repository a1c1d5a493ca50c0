//! Coarse-geometry experiments on finite Cayley balls: electrified
//! (coned-off) metrics, combinatorial horoballs, angular properness,
//! Stallings subgroup machinery, subgroup heights, and graded
//! relative-hyperbolicity verdicts.

pub mod ball;
pub mod electric;
pub mod error;
pub mod fixtures;
pub mod graded;
pub mod height;
pub mod metric;
pub mod paths;
pub mod presentation;
pub mod stallings;
pub mod words;

pub use error::{GglabError, Result};
