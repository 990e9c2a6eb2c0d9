//! Candidate sets: the admissible runs of an experiment.
//!
//! A candidate set carries two run lists. The *reference* list is the full
//! admissible array (all orderings surviving the constraints, crossed with the
//! process-factor combinations) and drives every expected frequency and the
//! D-efficiency denominator. The *pool* is what a search may draw from; it
//! equals the reference unless a base design narrows the orderings.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ModelSpec};
use crate::perm::{self, Design, Permutation, Run};
use crate::reference::ReferenceTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    /// `a` is added before `b`.
    Precedes(u8, u8),
    /// The listed components are added in this relative order.
    Chain(Vec<u8>),
}

impl Constraint {
    pub fn satisfied_by(&self, p: &Permutation) -> bool {
        let pos = p.positions();
        match self {
            Constraint::Precedes(a, b) => pos[*a as usize] < pos[*b as usize],
            Constraint::Chain(cs) => cs
                .windows(2)
                .all(|w| pos[w[0] as usize] < pos[w[1] as usize]),
        }
    }

    pub fn components(&self) -> Vec<u8> {
        match self {
            Constraint::Precedes(a, b) => vec![*a, *b],
            Constraint::Chain(cs) => cs.clone(),
        }
    }

    fn check(&self, m: usize) -> Result<()> {
        let cs = self.components();
        if cs.len() < 2 {
            return Err(Error::validation("a chain constraint needs at least 2 components"));
        }
        for (i, &c) in cs.iter().enumerate() {
            if c as usize >= m {
                return Err(Error::validation(format!(
                    "constraint component {c} out of range 0..{m}"
                )));
            }
            if cs[..i].contains(&c) {
                return Err(Error::validation(format!(
                    "constraint repeats component {c}"
                )));
            }
        }
        Ok(())
    }

    /// The constraint after dropping component `c`, or `None` when nothing is
    /// left to constrain.
    fn without(&self, c: u8) -> Option<Constraint> {
        let kept: Vec<u8> = self
            .components()
            .into_iter()
            .filter(|&x| x != c)
            .map(|x| if x > c { x - 1 } else { x })
            .collect();
        match kept.len() {
            0 | 1 => None,
            2 => Some(Constraint::Precedes(kept[0], kept[1])),
            _ => Some(Constraint::Chain(kept)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessFactor {
    pub name: String,
    pub levels: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub factors: Vec<ProcessFactor>,
    /// Allowed level combinations; the full grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<Vec<Vec<u8>>>,
}

impl ProcessSpec {
    pub fn two_level(names: &[&str]) -> Self {
        ProcessSpec {
            factors: names
                .iter()
                .map(|n| ProcessFactor { name: n.to_string(), levels: 2 })
                .collect(),
            fraction: None,
        }
    }

    pub fn with_fraction(mut self, rows: Vec<Vec<u8>>) -> Self {
        self.fraction = Some(rows);
        self
    }

    pub fn p(&self) -> usize {
        self.factors.len()
    }

    pub fn levels(&self) -> Vec<u8> {
        self.factors.iter().map(|f| f.levels).collect()
    }

    /// Level combinations in lexicographic order (or the fraction as given).
    pub fn combinations(&self) -> Result<Vec<Vec<u8>>> {
        let levels = self.levels();
        for f in &self.factors {
            if f.levels < 2 {
                return Err(Error::validation(format!(
                    "process factor `{}` needs at least 2 levels",
                    f.name
                )));
            }
        }
        match &self.fraction {
            Some(rows) => {
                let mut seen = std::collections::HashSet::new();
                for row in rows {
                    if row.len() != levels.len()
                        || row.iter().zip(&levels).any(|(&x, &s)| x >= s)
                    {
                        return Err(Error::validation(format!(
                            "fraction row {row:?} does not fit levels {levels:?}"
                        )));
                    }
                    if !seen.insert(row.clone()) {
                        return Err(Error::validation(format!(
                            "fraction row {row:?} is repeated"
                        )));
                    }
                }
                if rows.is_empty() {
                    return Err(Error::validation("process fraction is empty"));
                }
                Ok(rows.clone())
            }
            None => Ok(level_grid(&levels)),
        }
    }
}

/// All level combinations of a mixed-radix grid, last factor fastest.
pub fn level_grid(levels: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for &s in levels {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..s).map(move |x| {
                    let mut row = prefix.clone();
                    row.push(x);
                    row
                })
            })
            .collect();
    }
    out
}

#[derive(Debug)]
pub struct CandidateSet {
    m: usize,
    process_levels: Vec<u8>,
    process_names: Vec<String>,
    constraints: Vec<Constraint>,
    pool: Vec<Run>,
    reference: Vec<Run>,
    multiplicity: Vec<u64>,
    lookup: HashMap<Run, usize>,
    pair_tables: OnceLock<Vec<ReferenceTable>>,
    triple_tables: OnceLock<Vec<ReferenceTable>>,
    projections: OnceLock<Vec<CandidateSet>>,
    reference_log_det: OnceLock<Option<f64>>,
}

pub struct CandidateBuilder<'a> {
    m: usize,
    constraints: Vec<Constraint>,
    process: Option<ProcessSpec>,
    base: Option<&'a Design>,
    max_m: usize,
}

impl<'a> CandidateBuilder<'a> {
    pub fn constraint(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn constraints(mut self, cs: impl IntoIterator<Item = Constraint>) -> Self {
        self.constraints.extend(cs);
        self
    }

    pub fn process(mut self, spec: ProcessSpec) -> Self {
        self.process = Some(spec);
        self
    }

    pub fn process_opt(mut self, spec: Option<ProcessSpec>) -> Self {
        self.process = spec;
        self
    }

    pub fn base(mut self, d: &'a Design) -> Self {
        self.base = Some(d);
        self
    }

    pub fn base_opt(mut self, d: Option<&'a Design>) -> Self {
        self.base = d;
        self
    }

    pub fn max_m(mut self, max_m: usize) -> Self {
        self.max_m = max_m;
        self
    }

    pub fn build(self) -> Result<CandidateSet> {
        let m = self.m;
        for c in &self.constraints {
            c.check(m)?;
        }
        let orders: Vec<Permutation> = perm::full_design_limited(m, self.max_m)?
            .orders()
            .filter(|p| self.constraints.iter().all(|c| c.satisfied_by(p)))
            .cloned()
            .collect();
        if orders.is_empty() {
            return Err(Error::validation(
                "constraints are unsatisfiable: no ordering survives",
            ));
        }
        let (combos, levels, names) = match &self.process {
            Some(spec) => (
                spec.combinations()?,
                spec.levels(),
                spec.factors.iter().map(|f| f.name.clone()).collect(),
            ),
            None => (vec![Vec::new()], Vec::new(), Vec::new()),
        };
        let cross = |orders: &[Permutation]| -> Vec<Run> {
            orders
                .iter()
                .flat_map(|o| combos.iter().map(move |l| Run::new(o.clone(), l.clone())))
                .collect()
        };
        let reference = cross(&orders);
        let pool = match self.base {
            None => reference.clone(),
            Some(base) => {
                if base.m() != m {
                    return Err(Error::validation(format!(
                        "base design has m={}, expected {m}",
                        base.m()
                    )));
                }
                let mut base_orders: Vec<Permutation> = Vec::new();
                for (i, o) in base.orders().enumerate() {
                    if let Some(c) = self.constraints.iter().find(|c| !c.satisfied_by(o)) {
                        return Err(Error::validation(format!(
                            "base design run {} {o} violates constraint {c:?}",
                            i + 1
                        )));
                    }
                    if !base_orders.contains(o) {
                        base_orders.push(o.clone());
                    }
                }
                cross(&base_orders)
            }
        };
        let multiplicity = vec![1; reference.len()];
        Ok(CandidateSet::assemble(
            m,
            levels,
            names,
            self.constraints,
            pool,
            reference,
            multiplicity,
        ))
    }
}

impl CandidateSet {
    pub fn builder<'a>(m: usize) -> CandidateBuilder<'a> {
        CandidateBuilder {
            m,
            constraints: Vec::new(),
            process: None,
            base: None,
            max_m: perm::DEFAULT_MAX_M,
        }
    }

    /// Unrestricted set of all `m!` orderings.
    pub fn full(m: usize) -> Result<CandidateSet> {
        Self::builder(m).build()
    }

    fn assemble(
        m: usize,
        process_levels: Vec<u8>,
        process_names: Vec<String>,
        constraints: Vec<Constraint>,
        pool: Vec<Run>,
        reference: Vec<Run>,
        multiplicity: Vec<u64>,
    ) -> CandidateSet {
        let lookup = reference
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        CandidateSet {
            m,
            process_levels,
            process_names,
            constraints,
            pool,
            reference,
            multiplicity,
            lookup,
            pair_tables: OnceLock::new(),
            triple_tables: OnceLock::new(),
            projections: OnceLock::new(),
            reference_log_det: OnceLock::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.process_levels.len()
    }

    pub fn process_levels(&self) -> &[u8] {
        &self.process_levels
    }

    pub fn process_names(&self) -> &[String] {
        &self.process_names
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Runs a search may draw from.
    pub fn pool(&self) -> &[Run] {
        &self.pool
    }

    /// Distinct admissible runs; expected frequencies come from these.
    pub fn reference(&self) -> &[Run] {
        &self.reference
    }

    /// How often each reference run counts; all ones unless the set is a
    /// projection of a larger one.
    pub fn multiplicities(&self) -> &[u64] {
        &self.multiplicity
    }

    /// M, the weighted size of the reference array.
    pub fn total(&self) -> u64 {
        self.multiplicity.iter().sum()
    }

    /// Number of columns of the extended design matrix.
    pub fn n_columns(&self) -> usize {
        perm::m_prime(self.m) + self.p()
    }

    /// Level counts of the extended columns: PWO columns first.
    pub fn column_levels(&self) -> Vec<u8> {
        let mut lv = vec![2u8; perm::m_prime(self.m)];
        lv.extend_from_slice(&self.process_levels);
        lv
    }

    pub fn column_name(&self, j: usize) -> String {
        let mp = perm::m_prime(self.m);
        if j < mp {
            perm::pwo_name(self.m, j)
        } else {
            self.process_names[j - mp].clone()
        }
    }

    pub fn contains(&self, run: &Run) -> bool {
        self.lookup.contains_key(run)
    }

    pub fn reference_index(&self, run: &Run) -> Option<usize> {
        self.lookup.get(run).copied()
    }

    /// Error naming the first run of `d` that is not admissible.
    pub fn check_design(&self, d: &Design) -> Result<()> {
        if d.m() != self.m || d.p() != self.p() {
            return Err(Error::validation(format!(
                "design has m={} p={}, candidate set has m={} p={}",
                d.m(),
                d.p(),
                self.m,
                self.p()
            )));
        }
        if let Some((i, run)) = d.runs().iter().enumerate().find(|(_, r)| !self.contains(r)) {
            return Err(Error::validation(format!(
                "run {} {}{} is not in the candidate set",
                i + 1,
                run.order,
                if run.levels.is_empty() {
                    String::new()
                } else {
                    format!(" {:?}", run.levels)
                }
            )));
        }
        Ok(())
    }

    /// Extended rows of the reference array, in reference order.
    pub fn reference_rows(&self) -> Vec<Vec<u8>> {
        self.reference.iter().map(Run::extended_row).collect()
    }

    /// Reference tables for every column pair (t = 2) or triple (t = 3),
    /// in lexicographic tuple order. Computed once.
    pub fn tables(&self, t: usize) -> &[ReferenceTable] {
        let cell = match t {
            2 => &self.pair_tables,
            3 => &self.triple_tables,
            _ => panic!("strength {t} not supported"),
        };
        cell.get_or_init(|| crate::reference::all_tables(self, t))
    }

    /// Reference frame of the design obtained by dropping component `c`:
    /// the multiset projection of the reference runs.
    pub fn project_out(&self, c: usize) -> Result<CandidateSet> {
        if c >= self.m {
            return Err(Error::domain(format!("component {c} out of range 0..{}", self.m)));
        }
        if self.m < 3 {
            return Err(Error::domain("leave-one-out needs m >= 3"));
        }
        let mut weights: BTreeMap<Run, u64> = BTreeMap::new();
        for (run, &w) in self.reference.iter().zip(&self.multiplicity) {
            let projected = Run::new(run.order.without(c as u8), run.levels.clone());
            *weights.entry(projected).or_default() += w;
        }
        let (reference, multiplicity): (Vec<Run>, Vec<u64>) = weights.into_iter().unzip();
        let constraints = self
            .constraints
            .iter()
            .filter_map(|k| k.without(c as u8))
            .collect();
        Ok(CandidateSet::assemble(
            self.m - 1,
            self.process_levels.clone(),
            self.process_names.clone(),
            constraints,
            reference.clone(),
            reference,
            multiplicity,
        ))
    }

    /// The `m` leave-one-out frames, built once. Empty for m < 3.
    pub fn projections(&self) -> &[CandidateSet] {
        self.projections.get_or_init(|| {
            if self.m < 3 {
                return Vec::new();
            }
            (0..self.m)
                .map(|c| self.project_out(c).expect("component in range"))
                .collect()
        })
    }

    /// log det of the per-run information matrix of the reference array,
    /// `None` if it is singular (possible under heavy constraints).
    pub fn reference_log_det(&self) -> Option<f64> {
        *self.reference_log_det.get_or_init(|| {
            let spec = ModelSpec::for_candidates(self);
            let rows: Vec<Vec<f64>> = self.reference.iter().map(|r| spec.row(r)).collect();
            linalg::log_det(&linalg::normalized_information(&rows, Some(&self.multiplicity)))
        })
    }

    /// True when every admissible ordering appears exactly once per process
    /// combination and there are no constraints.
    pub fn is_unrestricted(&self) -> bool {
        self.constraints.is_empty() && self.multiplicity.iter().all(|&w| w == 1)
    }
}

/// True iff every run is a candidate run. Vacuously true for no runs.
pub fn validate_against(runs: &[Run], cands: &CandidateSet) -> bool {
    runs.iter().all(|r| cands.contains(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::unrank;

    #[test]
    fn full_sizes() {
        for m in 2..=6 {
            let c = CandidateSet::full(m).unwrap();
            assert_eq!(c.reference().len() as u64, perm::factorial(m));
            assert_eq!(c.pool().len(), c.reference().len());
        }
    }

    #[test]
    fn precedes_halves() {
        let c = CandidateSet::builder(4)
            .constraint(Constraint::Precedes(0, 1))
            .build()
            .unwrap();
        assert_eq!(c.reference().len(), 12);
        let bad = Run::plain(Permutation::new(vec![1, 0, 2, 3]).unwrap());
        assert!(!validate_against(&[bad], &c));
        assert!(validate_against(&[], &c));
    }

    #[test]
    fn independent_constraints_keep_halving() {
        for m in 4..=6 {
            let mut expected = perm::factorial(m) as usize;
            let mut b = CandidateSet::builder(m);
            for (a, z) in [(0u8, 1u8), (2, 3)] {
                b = b.constraint(Constraint::Precedes(a, z));
                expected /= 2;
            }
            assert_eq!(b.build().unwrap().reference().len(), expected);
        }
    }

    #[test]
    fn chain_of_three_keeps_a_sixth() {
        let c = CandidateSet::builder(5)
            .constraint(Constraint::Chain(vec![0, 2, 4]))
            .build()
            .unwrap();
        assert_eq!(c.reference().len(), 20);
    }

    #[test]
    fn unsatisfiable_constraints_error() {
        let err = CandidateSet::builder(3)
            .constraint(Constraint::Precedes(0, 1))
            .constraint(Constraint::Precedes(1, 0))
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("unsatisfiable"));
    }

    #[test]
    fn base_with_process_grid() {
        let base = Design::from_reference_rows(
            5,
            &[
                6, 8, 10, 15, 18, 29, 31, 35, 37, 42, 53, 58, 61, 72, 77, 81, 83, 89, 97, 104,
                110, 112, 115, 120,
            ],
        )
        .unwrap();
        let spec = ProcessSpec::two_level(&["A", "B", "C", "D"]);
        let c = CandidateSet::builder(5)
            .process(spec.clone())
            .base(&base)
            .build()
            .unwrap();
        assert_eq!(c.pool().len(), 384);
        assert_eq!(c.reference().len(), 1920);

        let half: Vec<Vec<u8>> = level_grid(&[2, 2, 2, 2])
            .into_iter()
            .filter(|r| r.iter().map(|&x| x as u32).sum::<u32>() % 2 == 0)
            .collect();
        let c = CandidateSet::builder(5)
            .process(spec.with_fraction(half))
            .base(&base)
            .build()
            .unwrap();
        assert_eq!(c.pool().len(), 192);
    }

    #[test]
    fn base_violating_constraint_errors() {
        let base = Design::from_reference_rows(4, &[1, 24]).unwrap();
        let err = CandidateSet::builder(4)
            .constraint(Constraint::Precedes(0, 1))
            .base(&base)
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("run 2"), "{err}");
    }

    #[test]
    fn projection_of_full_is_m_copies() {
        let c = CandidateSet::full(5).unwrap().project_out(2).unwrap();
        assert_eq!(c.m(), 4);
        assert_eq!(c.reference().len(), 24);
        assert!(c.multiplicities().iter().all(|&w| w == 5));
    }

    #[test]
    fn projection_drops_constraint_on_removed_component() {
        let c = CandidateSet::builder(4)
            .constraint(Constraint::Chain(vec![0, 1, 3]))
            .build()
            .unwrap();
        let p = c.project_out(1).unwrap();
        assert_eq!(p.constraints(), &[Constraint::Precedes(0, 2)]);
        let q = c.project_out(0).unwrap().project_out(0);
        assert!(q.is_ok());
    }

    #[test]
    fn check_design_names_offending_run() {
        let c = CandidateSet::builder(4)
            .constraint(Constraint::Precedes(0, 1))
            .build()
            .unwrap();
        let d = Design::new(4, vec![unrank(4, 1).unwrap(), unrank(4, 24).unwrap()]).unwrap();
        let err = c.check_design(&d).unwrap_err().to_string();
        assert!(err.contains("run 2 (3,2,1,0)"), "{err}");
    }

    #[test]
    fn bad_fraction_rejected() {
        let spec = ProcessSpec::two_level(&["A"]).with_fraction(vec![vec![0], vec![0]]);
        assert!(CandidateSet::builder(3).process(spec).build().is_err());
        let spec = ProcessSpec::two_level(&["A"]).with_fraction(vec![vec![2]]);
        assert!(CandidateSet::builder(3).process(spec).build().is_err());
    }
}
