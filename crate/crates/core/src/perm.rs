//! Permutation vectors of `(1, …, n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A permutation of `{1, …, n}` stored as the values it assigns to each
/// position: `entries[i]` is `π(i+1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PermutationVec {
    entries: Vec<usize>,
}

impl PermutationVec {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        let n = entries.len();
        let mut seen = vec![false; n];
        for &e in &entries {
            if e == 0 || e > n {
                return Err(Error::InvalidPermutation(format!(
                    "value {e} outside 1..={n}"
                )));
            }
            if std::mem::replace(&mut seen[e - 1], true) {
                return Err(Error::InvalidPermutation(format!("value {e} repeated")));
            }
        }
        Ok(Self { entries })
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: (1..=n).collect() }
    }

    /// Builds a permutation from 0-based ranks (`ranks[i]` in `0..n`).
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        Self::new(ranks.iter().map(|r| r + 1).collect())
    }

    pub(crate) fn from_entries_unchecked(entries: Vec<usize>) -> Self {
        debug_assert!(Self::new(entries.clone()).is_ok());
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<usize> {
        self.entries
    }

    /// `π(i)` for a 1-based position `i`.
    pub fn value_at(&self, position: usize) -> usize {
        self.entries[position - 1]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| e as f64).collect()
    }

    /// `n + 1 - π(i)`: the same ordering read backwards.
    pub fn reversed(&self) -> Self {
        let n = self.len();
        Self { entries: self.entries.iter().map(|&e| n + 1 - e).collect() }
    }

    /// Inverse permutation: `inv[π(i)] = i`.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &e) in self.entries.iter().enumerate() {
            inv[e - 1] = i + 1;
        }
        Self { entries: inv }
    }

    /// Object indices (0-based) listed in the order the permutation places them.
    pub fn order(&self) -> Vec<usize> {
        self.inverse().entries.iter().map(|&i| i - 1).collect()
    }

    pub fn satisfies_tiebreak(&self) -> bool {
        self.len() < 2 || self.entries[0] < self.entries[self.len() - 1]
    }
}

impl TryFrom<Vec<usize>> for PermutationVec {
    type Error = Error;

    fn try_from(entries: Vec<usize>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<PermutationVec> for Vec<usize> {
    fn from(p: PermutationVec) -> Self {
        p.entries
    }
}

/// Lexicographic enumeration of all permutations of `1..=n` (Heap-free,
/// next-permutation order). Only meant for brute-force checks at small `n`.
pub fn all_permutations(n: usize) -> AllPermutations {
    AllPermutations { current: Some((1..=n).collect()) }
}

pub struct AllPermutations {
    current: Option<Vec<usize>>,
}

impl Iterator for AllPermutations {
    type Item = PermutationVec;

    fn next(&mut self) -> Option<PermutationVec> {
        let cur = self.current.take()?;
        let mut next = cur.clone();
        if next_permutation(&mut next) {
            self.current = Some(next);
        }
        Some(PermutationVec { entries: cur })
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
