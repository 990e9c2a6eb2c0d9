//! wt-isomorphism signatures and exact d-isomorphism via canonical forms.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::perm::{self, Design, Run};
use crate::reference::{cell_index, tuples, TableType};

/// Largest m accepted by [`canonical_form`] and [`d_isomorphic`].
pub const MAX_CANONICAL_M: usize = 7;

/// Frequencies of observed table types over all PWO column pairs and triples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct WtSignature {
    pub pair_types: Vec<(TableType, usize)>,
    pub triple_types: Vec<(TableType, usize)>,
}

fn type_multiset(rows: &[Vec<u8>], n_cols: usize, t: usize) -> Vec<(TableType, usize)> {
    let levels = vec![2u8; t];
    let mut freq: BTreeMap<TableType, usize> = BTreeMap::new();
    for cols in tuples(n_cols, t) {
        let mut counts = vec![0u64; 1 << t];
        for row in rows {
            counts[cell_index(&cols, &levels, row)] += 1;
        }
        *freq.entry(TableType::from_counts(&counts)).or_default() += 1;
    }
    freq.into_iter().collect()
}

pub fn wt_signature(d: &Design) -> WtSignature {
    let p = d.expand();
    let mp = p.m_prime();
    WtSignature {
        pair_types: type_multiset(p.rows(), mp, 2),
        triple_types: type_multiset(p.rows(), mp, 3),
    }
}

impl WtSignature {
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("signature serializes");
        hex_digest(&json)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn check_sizes(a: &Design, b: &Design) -> Result<()> {
    if a.m() != b.m() || a.n() != b.n() || a.p() != b.p() {
        return Err(Error::validation(format!(
            "designs differ in size: (m={}, N={}, p={}) vs (m={}, N={}, p={})",
            a.m(),
            a.n(),
            a.p(),
            b.m(),
            b.n(),
            b.p()
        )));
    }
    Ok(())
}

pub fn wt_isomorphic(a: &Design, b: &Design) -> Result<bool> {
    check_sizes(a, b)?;
    Ok(wt_signature(a) == wt_signature(b))
}

fn sorted_runs(d: &Design, sigma: &[u8], reverse: bool) -> Vec<Run> {
    let mut runs: Vec<Run> = d
        .runs()
        .iter()
        .map(|r| {
            let mut o = r.order.relabeled(sigma);
            if reverse {
                o = o.reversed();
            }
            Run::new(o, r.levels.clone())
        })
        .collect();
    runs.sort();
    runs
}

/// Lexicographically smallest row-sorted image of `d` over all component
/// relabelings, with and without reversal of every ordering.
pub fn canonical_form(d: &Design) -> Result<Vec<Run>> {
    if d.m() > MAX_CANONICAL_M {
        return Err(Error::domain(format!(
            "canonical forms are limited to m <= {MAX_CANONICAL_M}, got {}",
            d.m()
        )));
    }
    let sigmas = perm::all_permutations(d.m());
    let best = sigmas
        .par_iter()
        .map(|s| {
            let a = sorted_runs(d, s.labels(), false);
            let b = sorted_runs(d, s.labels(), true);
            a.min(b)
        })
        .min()
        .expect("at least one relabeling");
    Ok(best)
}

pub fn canonical_digest(d: &Design) -> Result<String> {
    let form = canonical_form(d)?;
    Ok(hex_digest(&serde_json::to_vec(&form)?))
}

pub fn d_isomorphic(a: &Design, b: &Design) -> Result<bool> {
    check_sizes(a, b)?;
    if a.m() > MAX_CANONICAL_M {
        return Err(Error::domain(format!(
            "d-isomorphism is limited to m <= {MAX_CANONICAL_M}, got {}",
            a.m()
        )));
    }
    if wt_signature(a) != wt_signature(b) {
        return Ok(false);
    }
    Ok(canonical_form(a)? == canonical_form(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T2D1: [u64; 12] = [2, 3, 5, 7, 10, 12, 14, 15, 17, 20, 21, 24];
    const T2D2: [u64; 12] = [3, 4, 5, 8, 9, 10, 11, 13, 18, 19, 23, 24];

    fn design(m: usize, rows: &[u64]) -> Design {
        Design::from_reference_rows(m, rows).unwrap()
    }

    #[test]
    fn table_two_designs_differ() {
        let d1 = design(4, &T2D1);
        let d2 = design(4, &T2D2);
        assert!(!wt_isomorphic(&d1, &d2).unwrap());
        assert!(!d_isomorphic(&d1, &d2).unwrap());
        assert!(wt_isomorphic(&d1, &d1).unwrap());
        // strength two alone cannot tell them apart
        assert_eq!(wt_signature(&d1).pair_types, wt_signature(&d2).pair_types);
    }

    #[test]
    fn transformations_are_isomorphic() {
        let d = design(4, &T2D1);
        let relabeled = d.relabeled(&[2, 0, 3, 1]);
        let reversed = d.reversed();
        let mut order: Vec<usize> = (0..d.n()).collect();
        order.reverse();
        let shuffled = d.with_run_order(&order);
        for other in [&relabeled, &reversed, &shuffled] {
            assert!(d_isomorphic(&d, other).unwrap());
            assert!(wt_isomorphic(&d, other).unwrap());
        }
    }

    #[test]
    fn size_mismatch_errors() {
        let a = design(4, &T2D1);
        let b = design(4, &[1, 2]);
        assert!(wt_isomorphic(&a, &b).is_err());
        assert!(d_isomorphic(&a, &b).is_err());
    }

    #[test]
    fn digests_are_stable_hex() {
        let d = design(4, &T2D1);
        let g = wt_signature(&d).digest();
        assert_eq!(g.len(), 64);
        assert_eq!(g, wt_signature(&d.reversed()).digest());
        assert_eq!(canonical_digest(&d).unwrap(), canonical_digest(&d.relabeled(&[3, 2, 1, 0])).unwrap());
    }
}
