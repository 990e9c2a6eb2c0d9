//! Expected-frequency tables of column tuples under a candidate set.

use std::collections::BTreeMap;

use num_integer::Integer;
use rayon::prelude::*;
use serde::Serialize;

use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::perm;

/// Counts of level combinations for one column tuple. Cells are laid out in
/// mixed radix with the last column varying fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReferenceTable {
    pub columns: Vec<usize>,
    pub levels: Vec<u8>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl ReferenceTable {
    pub fn cell_index(&self, row: &[u8]) -> usize {
        cell_index(&self.columns, &self.levels, row)
    }

    /// Cells with zero expected count; they never contribute to χ².
    pub fn is_structural_zero(&self, cell: usize) -> bool {
        self.counts[cell] == 0
    }

    pub fn table_type(&self) -> TableType {
        TableType::from_counts(&self.counts)
    }
}

pub(crate) fn cell_index(columns: &[usize], levels: &[u8], row: &[u8]) -> usize {
    columns
        .iter()
        .zip(levels)
        .fold(0usize, |acc, (&c, &s)| acc * s as usize + row[c] as usize)
}

/// Frequency pattern of a table: its sorted cell counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct TableType {
    pub signature: Vec<u64>,
}

impl TableType {
    pub fn from_counts(counts: &[u64]) -> Self {
        let mut signature = counts.to_vec();
        signature.sort_unstable();
        TableType { signature }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairRelation {
    /// The shared component plays the same role in both factors.
    Synergistic,
    /// The shared component is "before" in one factor and "after" in the other.
    Antagonistic,
    /// No shared component.
    Independent,
}

/// Structural relation of two PWO columns.
pub fn pair_relation(m: usize, a: usize, b: usize) -> PairRelation {
    let pairs = perm::pwo_pairs(m);
    let (k, l) = pairs[a];
    let (u, v) = pairs[b];
    if k == u || l == v {
        PairRelation::Synergistic
    } else if l == u || k == v {
        PairRelation::Antagonistic
    } else {
        PairRelation::Independent
    }
}

pub fn pair_relation_counts(m: usize) -> BTreeMap<PairRelation, usize> {
    let mp = perm::m_prime(m);
    let mut out = BTreeMap::new();
    for a in 0..mp {
        for b in a + 1..mp {
            *out.entry(pair_relation(m, a, b)).or_default() += 1;
        }
    }
    out
}

/// Increasing `t`-subsets of `0..n` in lexicographic order.
pub fn tuples(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(t);
    fn rec(start: usize, n: usize, t: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == t {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < t - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, t, cur, out);
            cur.pop();
        }
    }
    rec(0, n, t, &mut cur, &mut out);
    out
}

/// Exact counts by enumeration over the candidate set's reference array.
pub fn reference_counts(cands: &CandidateSet, cols: &[usize]) -> Result<ReferenceTable> {
    if !(2..=3).contains(&cols.len()) {
        return Err(Error::domain(format!(
            "tuple size must be 2 or 3, got {}",
            cols.len()
        )));
    }
    let n = cands.n_columns();
    for (i, &c) in cols.iter().enumerate() {
        if c >= n || cols[..i].contains(&c) {
            return Err(Error::domain(format!(
                "invalid column tuple {cols:?} for {n} columns"
            )));
        }
    }
    let rows = cands.reference_rows();
    Ok(table_from_rows(
        cols,
        &cands.column_levels(),
        &rows,
        cands.multiplicities(),
    ))
}

fn table_from_rows(
    cols: &[usize],
    column_levels: &[u8],
    rows: &[Vec<u8>],
    weights: &[u64],
) -> ReferenceTable {
    let levels: Vec<u8> = cols.iter().map(|&c| column_levels[c]).collect();
    let size: usize = levels.iter().map(|&s| s as usize).product();
    let mut counts = vec![0u64; size];
    for (row, &w) in rows.iter().zip(weights) {
        counts[cell_index(cols, &levels, row)] += w;
    }
    ReferenceTable {
        columns: cols.to_vec(),
        levels,
        counts,
        total: weights.iter().sum(),
    }
}

pub(crate) fn all_tables(cands: &CandidateSet, t: usize) -> Vec<ReferenceTable> {
    let rows = cands.reference_rows();
    let levels = cands.column_levels();
    let weights = cands.multiplicities();
    tuples(cands.n_columns(), t)
        .par_iter()
        .map(|cols| table_from_rows(cols, &levels, &rows, weights))
        .collect()
}

/// Frequencies of pair table types over all PWO column pairs of the full
/// `m!` array.
pub fn classify_pairs(m: usize) -> Result<BTreeMap<TableType, usize>> {
    if m < 3 {
        return Err(Error::domain(format!("classify_pairs needs m >= 3, got {m}")));
    }
    let cands = CandidateSet::full(m)?;
    Ok(type_frequencies(cands.tables(2)))
}

pub fn type_frequencies(tables: &[ReferenceTable]) -> BTreeMap<TableType, usize> {
    let mut out = BTreeMap::new();
    for tab in tables {
        *out.entry(tab.table_type()).or_default() += 1;
    }
    out
}

/// Smallest N for which N·E/M is an integer in every cell of every
/// strength-`t` table. OofA-OA run sizes must be multiples of it.
pub fn admissible_min_n(cands: &CandidateSet, t: usize) -> Result<u64> {
    if !(2..=3).contains(&t) {
        return Err(Error::domain(format!("strength must be 2 or 3, got {t}")));
    }
    if cands.n_columns() < t {
        return Err(Error::domain(format!(
            "{} columns cannot carry strength {t}",
            cands.n_columns()
        )));
    }
    let total = cands.total();
    let mut n = 1u64;
    for tab in cands.tables(t) {
        for &e in tab.counts.iter().filter(|&&e| e > 0) {
            n = n.lcm(&(total / e.gcd(&total)));
        }
    }
    Ok(n)
}
