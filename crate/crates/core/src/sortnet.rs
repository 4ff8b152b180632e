//! Comparator sorting networks.
//!
//! Both generators build the power-of-two network first and then drop every
//! comparator that touches a virtual wire `>= n`. All comparators put the
//! minimum on the lower-indexed wire, so a virtual `+inf` input never moves
//! and those comparators are no-ops; the pruned network still sorts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A compare-exchange gate. After it fires, wire `top` holds the minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparator {
    pub top: usize,
    pub bottom: usize,
    pub stage: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Bitonic,
    OddEven,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparatorNetwork {
    n: usize,
    comparators: Vec<Comparator>,
    kind: NetworkKind,
}

impl ComparatorNetwork {
    /// Builds a network from `(top, bottom)` pairs in firing order. Stage
    /// labels are assigned greedily and the list is stably reordered by stage,
    /// which never changes what the network computes.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)], kind: NetworkKind) -> Result<Self> {
        let mut wire_stage = vec![0usize; n];
        let mut comparators = Vec::with_capacity(pairs.len());
        for &(top, bottom) in pairs {
            if top >= n {
                return Err(Error::IndexOutOfRange { index: top, n });
            }
            if bottom >= n {
                return Err(Error::IndexOutOfRange { index: bottom, n });
            }
            if top == bottom {
                return Err(Error::InvalidArgument(format!(
                    "comparator connects wire {top} to itself"
                )));
            }
            let stage = wire_stage[top].max(wire_stage[bottom]);
            wire_stage[top] = stage + 1;
            wire_stage[bottom] = stage + 1;
            comparators.push(Comparator { top, bottom, stage });
        }
        comparators.sort_by_key(|c| c.stage);
        Ok(Self { n, comparators, kind })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of comparators (`m`).
    pub fn len(&self) -> usize {
        self.comparators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparators.is_empty()
    }

    pub fn comparators(&self) -> &[Comparator] {
        &self.comparators
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn depth(&self) -> usize {
        self.comparators.last().map_or(0, |c| c.stage + 1)
    }

    /// Returns a copy with the comparator at `index` removed.
    pub fn without_comparator(&self, index: usize) -> Self {
        let mut comparators = self.comparators.clone();
        comparators.remove(index);
        Self { n: self.n, comparators, kind: NetworkKind::Custom }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let mut out = x.to_vec();
        self.apply_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn apply_in_place(&self, x: &mut [f64]) {
        for c in &self.comparators {
            let (a, b) = (x[c.top], x[c.bottom]);
            if b < a {
                x[c.top] = b;
                x[c.bottom] = a;
            }
        }
    }

    /// Exhaustive 0-1 principle check over all `2^n` binary inputs.
    pub fn verify_sorts(&self) -> Result<bool> {
        if self.n > 20 {
            return Err(Error::NetworkTooLarge(self.n));
        }
        Ok(self.first_unsorted_binary_input().is_none())
    }

    /// A binary input (bit `i` = wire `i`) the network fails to sort, if any.
    pub fn first_unsorted_binary_input(&self) -> Option<u32> {
        let n = self.n;
        if n > 20 {
            return None;
        }
        let full: u32 = if n == 0 { 0 } else { (1u32 << n) - 1 };
        for input in 0..=full {
            let mut state = input;
            for c in &self.comparators {
                let t = (state >> c.top) & 1;
                let b = (state >> c.bottom) & 1;
                if t == 1 && b == 0 {
                    state ^= (1 << c.top) | (1 << c.bottom);
                }
            }
            let ones = state.count_ones();
            let sorted = full & !((1u32 << (n as u32 - ones)) - 1);
            if state != sorted {
                return Some(input);
            }
            if input == full {
                break;
            }
        }
        None
    }

    /// Text dump: header `n m`, then one `stage top bottom` line per comparator.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n, self.len());
        for c in &self.comparators {
            let _ = writeln!(s, "{} {} {}", c.stage, c.top, c.bottom);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hl, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let nums = parse_usizes(header, hl + 1)?;
        let [n, m] = nums[..] else {
            return Err(Error::parse(hl + 1, "header must be `n m`"));
        };
        let mut pairs = Vec::with_capacity(m);
        for (ln, line) in lines {
            let nums = parse_usizes(line, ln + 1)?;
            let [_, top, bottom] = nums[..] else {
                return Err(Error::parse(ln + 1, "expected `stage top bottom`"));
            };
            pairs.push((top, bottom));
        }
        if pairs.len() != m {
            return Err(Error::parse(0, format!("header says {m} comparators, found {}", pairs.len())));
        }
        Self::from_pairs(n, &pairs, NetworkKind::Custom)
    }
}

fn parse_usizes(line: &str, ln: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::parse(ln, e.to_string())))
        .collect()
}

/// Batcher's bitonic network in its all-ascending form: each merge starts
/// with a "flip" layer comparing `i` with its mirror, followed by half-cleaners.
pub fn bitonic_network(n: usize) -> ComparatorNetwork {
    let size = n.max(1).next_power_of_two();
    let mut pairs = Vec::new();
    let mut block = 2;
    while block <= size {
        for start in (0..size).step_by(block) {
            for i in 0..block / 2 {
                pairs.push((start + i, start + block - 1 - i));
            }
        }
        let mut half = block / 4;
        while half >= 1 {
            for start in (0..size).step_by(2 * half) {
                for i in 0..half {
                    pairs.push((start + i, start + i + half));
                }
            }
            half /= 2;
        }
        block *= 2;
    }
    prune(n, pairs, NetworkKind::Bitonic)
}

/// Batcher's odd-even merge sort.
pub fn odd_even_network(n: usize) -> ComparatorNetwork {
    let size = n.max(1).next_power_of_two();
    let mut pairs = Vec::new();
    let mut p = 1;
    while p < size {
        let mut k = p;
        while k >= 1 {
            let mut j = k % p;
            while j + k < size {
                for i in 0..k.min(size - j - k) {
                    if (i + j) / (2 * p) == (i + j + k) / (2 * p) {
                        pairs.push((i + j, i + j + k));
                    }
                }
                j += 2 * k;
            }
            k /= 2;
        }
        p *= 2;
    }
    prune(n, pairs, NetworkKind::OddEven)
}

fn prune(n: usize, pairs: Vec<(usize, usize)>, kind: NetworkKind) -> ComparatorNetwork {
    let kept: Vec<_> = pairs.into_iter().filter(|&(a, b)| a < n && b < n).collect();
    ComparatorNetwork::from_pairs(n, &kept, kind).expect("generated comparators are in range")
}

pub fn network(kind: NetworkKind, n: usize) -> Result<ComparatorNetwork> {
    match kind {
        NetworkKind::Bitonic => Ok(bitonic_network(n)),
        NetworkKind::OddEven => Ok(odd_even_network(n)),
        NetworkKind::Custom => Err(Error::InvalidArgument(
            "custom networks must be built from explicit comparators".into(),
        )),
    }
}
