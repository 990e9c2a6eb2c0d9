//! Permutations of component labels, design matrices and their pair-wise
//! ordering (PWO) expansion.
//!
//! A run of an order-of-addition experiment is a permutation of the labels
//! `0..m`; position `k` holds the component added at stage `k`. Every run maps
//! to `m(m-1)/2` binary PWO factors, one per component pair `(k, l)` with
//! `k < l`, equal to 1 when `k` is added before `l`. Columns are always laid out
//! as `(0,1), (0,2), ..., (0,m-1), (1,2), ..., (m-2,m-1)`.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest `m` for which [`full_design`] enumerates all `m!` runs by default.
pub const DEFAULT_MAX_M: usize = 8;

/// Largest `m` accepted by [`unrank`] / [`rank`]; `20!` still fits in a `u64`.
pub const MAX_RANKABLE_M: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Permutation(Vec<u8>);

impl Permutation {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        let m = labels.len();
        if m < 2 {
            return Err(Error::domain(format!(
                "a permutation needs at least 2 components, got {m}"
            )));
        }
        if m > u8::MAX as usize {
            return Err(Error::domain(format!("too many components: {m}")));
        }
        let mut seen = vec![false; m];
        for &c in &labels {
            let c = c as usize;
            if c >= m || seen[c] {
                return Err(Error::validation(format!(
                    "{labels:?} is not a permutation of 0..{m}"
                )));
            }
            seen[c] = true;
        }
        Ok(Permutation(labels))
    }

    pub fn identity(m: usize) -> Self {
        Permutation((0..m as u8).collect())
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.0
    }

    /// `positions()[c]` is the stage at which component `c` is added.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.m()];
        for (stage, &c) in self.0.iter().enumerate() {
            pos[c as usize] = stage;
        }
        pos
    }

    pub fn reversed(&self) -> Self {
        Permutation(self.0.iter().rev().copied().collect())
    }

    /// Renames every component `c` to `sigma[c]`.
    pub fn relabeled(&self, sigma: &[u8]) -> Self {
        Permutation(self.0.iter().map(|&c| sigma[c as usize]).collect())
    }

    /// Drops component `c` and closes the gap in the labels, keeping the
    /// relative order of the survivors.
    pub fn without(&self, c: u8) -> Self {
        Permutation(
            self.0
                .iter()
                .filter(|&&x| x != c)
                .map(|&x| if x > c { x - 1 } else { x })
                .collect(),
        )
    }

    pub fn precedes(&self, a: u8, b: u8) -> bool {
        let pos = self.positions();
        pos[a as usize] < pos[b as usize]
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

pub fn factorial(m: usize) -> u64 {
    (1..=m as u64).product()
}

pub fn m_prime(m: usize) -> usize {
    m * (m.saturating_sub(1)) / 2
}

/// Column index of the PWO factor for components `k < l`.
pub fn pwo_index(m: usize, k: usize, l: usize) -> usize {
    debug_assert!(k < l && l < m);
    k * (2 * m - k - 1) / 2 + (l - k - 1)
}

/// Component pairs in PWO column order.
pub fn pwo_pairs(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m_prime(m));
    for k in 0..m {
        for l in k + 1..m {
            out.push((k, l));
        }
    }
    out
}

/// Name of a PWO column, e.g. `F02`.
pub fn pwo_name(m: usize, col: usize) -> String {
    let (k, l) = pwo_pairs(m)[col];
    if m <= 10 {
        format!("F{k}{l}")
    } else {
        format!("F{k}_{l}")
    }
}

/// The `index`-th (1-based) permutation of `0..m` in lexicographic order.
pub fn unrank(m: usize, index: u64) -> Result<Permutation> {
    if !(2..=MAX_RANKABLE_M).contains(&m) {
        return Err(Error::domain(format!(
            "m must be in 2..={MAX_RANKABLE_M}, got {m}"
        )));
    }
    let total = factorial(m);
    if index < 1 || index > total {
        return Err(Error::domain(format!(
            "row index {index} out of range 1..={total} for m={m}"
        )));
    }
    let mut rest = index - 1;
    let mut pool: Vec<u8> = (0..m as u8).collect();
    let mut labels = Vec::with_capacity(m);
    for i in (0..m).rev() {
        let f = factorial(i);
        let digit = (rest / f) as usize;
        rest %= f;
        labels.push(pool.remove(digit));
    }
    Ok(Permutation(labels))
}

/// 1-based lexicographic index of `p`; inverse of [`unrank`].
pub fn rank(p: &Permutation) -> u64 {
    let labels = p.labels();
    let m = labels.len();
    let mut r = 0u64;
    for i in 0..m {
        let smaller_after = labels[i + 1..].iter().filter(|&&x| x < labels[i]).count() as u64;
        r += smaller_after * factorial(m - 1 - i);
    }
    r + 1
}

/// PWO levels of one run.
pub fn pwo_row(p: &Permutation) -> Vec<u8> {
    let m = p.m();
    let pos = p.positions();
    let mut row = Vec::with_capacity(m_prime(m));
    for k in 0..m {
        for l in k + 1..m {
            row.push(u8::from(pos[k] < pos[l]));
        }
    }
    row
}

/// Recovers the permutation behind a PWO row: each component is placed by
/// the number of components it precedes. Returns `None` when the row is not
/// transitive.
pub fn permutation_from_pwo(m: usize, row: &[u8]) -> Option<Permutation> {
    if row.len() != m_prime(m) || m < 2 {
        return None;
    }
    let mut wins = vec![0usize; m];
    for (col, (k, l)) in pwo_pairs(m).into_iter().enumerate() {
        match row[col] {
            1 => wins[k] += 1,
            0 => wins[l] += 1,
            _ => return None,
        }
    }
    let mut labels = vec![u8::MAX; m];
    for (c, w) in wins.iter().enumerate() {
        let stage = m - 1 - w;
        if labels[stage] != u8::MAX {
            return None;
        }
        labels[stage] = c as u8;
    }
    let p = Permutation(labels);
    (pwo_row(&p) == row).then_some(p)
}

/// One run of a design: a component ordering plus the levels of any
/// process factors (empty when there are none).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Run {
    pub order: Permutation,
    pub levels: Vec<u8>,
}

impl Run {
    pub fn new(order: Permutation, levels: Vec<u8>) -> Self {
        Run { order, levels }
    }

    pub fn plain(order: Permutation) -> Self {
        Run { order, levels: Vec::new() }
    }

    /// PWO levels followed by the process levels.
    pub fn extended_row(&self) -> Vec<u8> {
        let mut row = pwo_row(&self.order);
        row.extend_from_slice(&self.levels);
        row
    }
}

/// An N-run order-of-addition design; row order carries no meaning for any
/// criterion but is preserved for file round-trips.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Design {
    m: usize,
    p: usize,
    runs: Vec<Run>,
}

impl Design {
    pub fn new(m: usize, orders: Vec<Permutation>) -> Result<Self> {
        Self::with_runs(m, 0, orders.into_iter().map(Run::plain).collect())
    }

    /// A design whose runs also carry `p` process-factor levels.
    pub fn with_runs(m: usize, p: usize, runs: Vec<Run>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::validation("a design needs at least one run"));
        }
        for (i, run) in runs.iter().enumerate() {
            if run.order.m() != m {
                return Err(Error::validation(format!(
                    "run {} has {} components, expected {m}",
                    i + 1,
                    run.order.m()
                )));
            }
            if run.levels.len() != p {
                return Err(Error::validation(format!(
                    "run {} has {} process levels, expected {p}",
                    i + 1,
                    run.levels.len()
                )));
            }
        }
        Ok(Design { m, p, runs })
    }

    /// Design built from 1-based rows of the lexicographic full design.
    pub fn from_reference_rows(m: usize, rows: &[u64]) -> Result<Self> {
        let orders = rows
            .iter()
            .map(|&r| unrank(m, r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(m, orders)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of process factors.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.runs.len()
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn orders(&self) -> impl Iterator<Item = &Permutation> {
        self.runs.iter().map(|r| &r.order)
    }

    /// 1-based lexicographic indices of the runs' orderings.
    pub fn reference_rows(&self) -> Vec<u64> {
        self.orders().map(rank).collect()
    }

    /// The PWO design matrix of the component orderings.
    pub fn expand(&self) -> PwoMatrix {
        PwoMatrix {
            m: self.m,
            rows: self.orders().map(pwo_row).collect(),
        }
    }

    /// PWO columns followed by process columns, one row per run.
    pub fn extended_rows(&self) -> Vec<Vec<u8>> {
        self.runs.iter().map(Run::extended_row).collect()
    }

    /// Projection that removes component `c` from every run.
    pub fn leave_one_out(&self, c: usize) -> Result<Design> {
        if c >= self.m {
            return Err(Error::domain(format!(
                "component {c} out of range 0..{}",
                self.m
            )));
        }
        if self.m < 3 {
            return Err(Error::domain("leave-one-out needs m >= 3"));
        }
        let runs = self
            .runs
            .iter()
            .map(|r| Run::new(r.order.without(c as u8), r.levels.clone()))
            .collect();
        Ok(Design { m: self.m - 1, p: self.p, runs })
    }

    pub fn relabeled(&self, sigma: &[u8]) -> Design {
        let runs = self
            .runs
            .iter()
            .map(|r| Run::new(r.order.relabeled(sigma), r.levels.clone()))
            .collect();
        Design { m: self.m, p: self.p, runs }
    }

    /// Reverses every ordering, which swaps all 0's and 1's of the PWO matrix.
    pub fn reversed(&self) -> Design {
        let runs = self
            .runs
            .iter()
            .map(|r| Run::new(r.order.reversed(), r.levels.clone()))
            .collect();
        Design { m: self.m, p: self.p, runs }
    }

    pub fn with_run_order(&self, order: &[usize]) -> Design {
        Design {
            m: self.m,
            p: self.p,
            runs: order.iter().map(|&i| self.runs[i].clone()).collect(),
        }
    }

    /// `f[k][l]`: how often component `k` is added at stage `l`.
    pub fn stage_counts(&self) -> Vec<Vec<u32>> {
        let mut f = vec![vec![0u32; self.m]; self.m];
        for order in self.orders() {
            for (stage, &c) in order.labels().iter().enumerate() {
                f[c as usize][stage] += 1;
            }
        }
        f
    }

    pub fn has_duplicate_runs(&self) -> bool {
        let mut sorted: Vec<&Run> = self.runs.iter().collect();
        sorted.sort();
        sorted.windows(2).any(|w| w[0] == w[1])
    }
}

/// N x m' matrix of PWO factor levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PwoMatrix {
    m: usize,
    rows: Vec<Vec<u8>>,
}

impl PwoMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m_prime(&self) -> usize {
        m_prime(self.m)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<u8> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        (0..self.m_prime())
            .map(|j| self.rows.iter().filter(|r| r[j] == 1).count())
            .collect()
    }
}

/// All `m!` runs in lexicographic order, for `2 <= m <= DEFAULT_MAX_M`.
pub fn full_design(m: usize) -> Result<Design> {
    full_design_limited(m, DEFAULT_MAX_M)
}

pub fn full_design_limited(m: usize, max_m: usize) -> Result<Design> {
    if m < 2 || m > max_m || m > MAX_RANKABLE_M {
        return Err(Error::domain(format!(
            "full design supports 2 <= m <= {max_m}, got {m}"
        )));
    }
    Design::new(m, all_permutations(m))
}

/// Every permutation of `0..m` in lexicographic order.
pub fn all_permutations(m: usize) -> Vec<Permutation> {
    let mut current: Vec<u8> = (0..m as u8).collect();
    let mut out = Vec::with_capacity(factorial(m) as usize);
    loop {
        out.push(Permutation(current.clone()));
        // next lexicographic permutation
        let Some(i) = (0..m.saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1]) else {
            break;
        };
        let j = (i + 1..m).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(labels: &[u8]) -> Permutation {
        Permutation::new(labels.to_vec()).unwrap()
    }

    #[test]
    fn unrank_matches_printed_rows() {
        assert_eq!(unrank(4, 1).unwrap(), perm(&[0, 1, 2, 3]));
        assert_eq!(unrank(4, 24).unwrap(), perm(&[3, 2, 1, 0]));
        assert_eq!(unrank(5, 21).unwrap(), perm(&[0, 4, 2, 1, 3]));
    }

    #[test]
    fn unrank_rejects_out_of_range() {
        let err = unrank(4, 25).unwrap_err().to_string();
        assert!(err.contains("1..=24"), "{err}");
        assert!(unrank(4, 0).is_err());
        assert!(unrank(1, 1).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&perm(&[0, 1, 2, 3])), 1);
        assert_eq!(rank(&perm(&[3, 2, 1, 0])), 24);
        assert_eq!(rank(&perm(&[0, 4, 2, 1, 3])), 21);
    }

    #[test]
    fn rank_unrank_exhaustive_up_to_six() {
        for m in 2..=6 {
            let all = all_permutations(m);
            assert_eq!(all.len() as u64, factorial(m));
            for (i, p) in all.iter().enumerate() {
                let idx = i as u64 + 1;
                assert_eq!(rank(p), idx);
                assert_eq!(&unrank(m, idx).unwrap(), p);
            }
        }
    }

    #[test]
    fn pwo_rows_from_table_one() {
        assert_eq!(pwo_row(&perm(&[0, 1, 2, 3])), vec![1, 1, 1, 1, 1, 1]);
        assert_eq!(pwo_row(&perm(&[1, 0, 3, 2])), vec![0, 1, 1, 1, 1, 0]);
        assert_eq!(pwo_row(&perm(&[3, 2, 1, 0])), vec![0; 6]);
    }

    #[test]
    fn pwo_index_matches_pair_order() {
        for m in 2..=8 {
            for (col, (k, l)) in pwo_pairs(m).into_iter().enumerate() {
                assert_eq!(pwo_index(m, k, l), col);
            }
        }
        assert_eq!(pwo_name(4, 5), "F23");
    }

    #[test]
    fn expand_full_m4_matches_table_one() {
        // a few spot rows of the printed 24 x 6 matrix
        let p = full_design(4).unwrap().expand();
        assert_eq!(p.n(), 24);
        assert_eq!(p.rows()[8], vec![0, 0, 1, 1, 1, 1]);
        assert_eq!(p.rows()[10], vec![0, 1, 0, 1, 1, 0]);
        assert_eq!(p.rows()[16], vec![1, 0, 0, 0, 0, 1]);
        assert_eq!(p.rows()[22], vec![1, 0, 0, 0, 0, 0]);
        assert_eq!(p.column_sums(), vec![12; 6]);
    }

    #[test]
    fn full_design_column_sums_are_half() {
        for m in 2..=6 {
            let p = full_design(m).unwrap().expand();
            let half = factorial(m) as usize / 2;
            assert!(p.column_sums().iter().all(|&s| s == half));
        }
    }

    #[test]
    fn single_identity_run_expands_to_ones() {
        let d = Design::new(5, vec![Permutation::identity(5)]).unwrap();
        assert_eq!(d.expand().rows(), &[vec![1u8; 10]]);
    }

    #[test]
    fn full_design_sizes_and_limits() {
        assert_eq!(full_design(4).unwrap().n(), 24);
        assert_eq!(full_design(6).unwrap().n(), 720);
        let two = full_design(2).unwrap();
        let rows: Vec<_> = two.orders().cloned().collect();
        assert_eq!(rows, vec![perm(&[0, 1]), perm(&[1, 0])]);
        assert!(full_design(9).is_err());
        assert!(full_design(1).is_err());
        assert_eq!(full_design_limited(9, 9).unwrap().n(), 362_880);
    }

    #[test]
    fn leave_one_out_relabels() {
        let d = Design::new(4, vec![perm(&[0, 1, 2, 3]), perm(&[1, 0, 3, 2])]).unwrap();
        let drop3 = d.leave_one_out(3).unwrap();
        assert_eq!(drop3.runs()[0].order, perm(&[0, 1, 2]));
        let drop0 = d.leave_one_out(0).unwrap();
        assert_eq!(drop0.runs()[1].order, perm(&[0, 2, 1]));
        assert_eq!(drop0.n(), 2);
        assert!(d.leave_one_out(4).is_err());
    }

    #[test]
    fn permutation_from_pwo_inverts_expansion() {
        for m in 2..=6 {
            for p in all_permutations(m) {
                assert_eq!(permutation_from_pwo(m, &pwo_row(&p)), Some(p));
            }
        }
        // F01=1, F12=1, F02=0 is a cycle
        assert_eq!(permutation_from_pwo(3, &[1, 0, 1]), None);
    }

    #[test]
    fn invalid_permutations_rejected() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        assert!(Permutation::new(vec![0]).is_err());
    }

    #[test]
    fn stage_counts_of_full_design_are_flat() {
        let f = full_design(4).unwrap().stage_counts();
        assert!(f.iter().flatten().all(|&x| x == 6));
    }
}
