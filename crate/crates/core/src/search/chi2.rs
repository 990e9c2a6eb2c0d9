//! Point exchange minimizing χ²_{ave,2} with integer cell counts.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::registry::{ExchangeStrategy, PreparedExchange, StartOutcome};
use crate::candidates::CandidateSet;
use crate::criteria::Goal;
use crate::error::Result;

/// Swaps must lower the χ² sum by more than this (relative) to be taken.
pub const MIN_GAIN: f64 = 1e-12;

pub struct Chi2Exchange;

impl ExchangeStrategy for Chi2Exchange {
    fn name(&self) -> &'static str {
        "chi2"
    }

    fn aliases(&self) -> &'static [&'static str] {
        &["chi2_ave_2", "chi2-exchange"]
    }

    fn goal(&self) -> Goal {
        Goal::Minimize
    }

    fn prepare<'a>(
        &self,
        cands: &'a CandidateSet,
        n_runs: usize,
    ) -> Result<Box<dyn PreparedExchange + 'a>> {
        Ok(Box::new(Chi2Tables::new(cands, n_runs)))
    }
}

/// Pair tables flattened for the exchange: the cell every pool row falls
/// into, the expected count of every cell at `n_runs` runs, and its χ²
/// denominator.
pub struct Chi2Tables {
    n_runs: usize,
    n_tables: usize,
    /// `cell[j * n_tables + t]`: global cell id of pool row j in table t.
    cell: Vec<u32>,
    expected: Vec<f64>,
    weight: Vec<f64>,
    /// Expected counts as exact fractions `num / total`, for zero tests.
    expected_num: Vec<u64>,
    total: u64,
}

impl Chi2Tables {
    pub fn new(cands: &CandidateSet, n_runs: usize) -> Self {
        let tables = cands.tables(2);
        let mut offsets = Vec::with_capacity(tables.len());
        let mut expected = Vec::new();
        let mut expected_num = Vec::new();
        for tab in tables {
            offsets.push(expected.len());
            for &e in &tab.counts {
                expected_num.push(n_runs as u64 * e);
                expected.push(n_runs as f64 * e as f64 / tab.total as f64);
            }
        }
        let weight = expected.iter().map(|&e: &f64| e.max(1.0)).collect();
        let mut cell = Vec::with_capacity(cands.pool().len() * tables.len());
        for run in cands.pool() {
            let row = run.extended_row();
            for (tab, &off) in tables.iter().zip(&offsets) {
                cell.push((off + tab.cell_index(&row)) as u32);
            }
        }
        Chi2Tables {
            n_runs,
            n_tables: tables.len(),
            cell,
            expected,
            weight,
            expected_num,
            total: cands.total(),
        }
    }

    fn cells(&self, j: usize) -> &[u32] {
        &self.cell[j * self.n_tables..(j + 1) * self.n_tables]
    }
}

impl PreparedExchange for Chi2Tables {
    fn run(&self, rng: &mut ChaCha8Rng, max_passes: usize) -> Result<StartOutcome> {
        let pool = self.cell.len() / self.n_tables.max(1);
        let start = sample(rng, pool, self.n_runs).into_vec();
        let mut st = Chi2State::new(self, start);
        let swaps = st.optimize(max_passes);
        Ok(StartOutcome {
            objective: st.scratch_average(),
            rows: st.design,
            swaps,
        })
    }
}

/// Current design plus its observed cell counts.
pub struct Chi2State<'a> {
    tables: &'a Chi2Tables,
    pub design: Vec<usize>,
    counts: Vec<i64>,
    sum: f64,
}

impl<'a> Chi2State<'a> {
    pub fn new(tables: &'a Chi2Tables, design: Vec<usize>) -> Self {
        let mut st = Chi2State { tables, design, counts: Vec::new(), sum: 0.0 };
        st.counts = st.scratch_counts();
        st.sum = st.scratch_sum();
        st
    }

    fn scratch_counts(&self) -> Vec<i64> {
        let mut counts = vec![0i64; self.tables.expected.len()];
        for &j in &self.design {
            for &c in self.tables.cells(j) {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    fn sum_of(&self, counts: &[i64]) -> f64 {
        let t = self.tables;
        counts
            .iter()
            .enumerate()
            .filter(|&(c, &n)| n as u64 * t.total != t.expected_num[c])
            .map(|(c, &n)| {
                let dev = n as f64 - t.expected[c];
                dev * dev / t.weight[c]
            })
            .sum()
    }

    fn scratch_sum(&self) -> f64 {
        self.sum_of(&self.scratch_counts())
    }

    /// Current χ²_{ave,2} from the incrementally tracked sum.
    pub fn average(&self) -> f64 {
        self.sum / self.tables.n_tables as f64
    }

    pub fn scratch_average(&self) -> f64 {
        self.scratch_sum() / self.tables.n_tables as f64
    }

    /// Incremental counts equal a recount of the current design.
    pub fn counts_consistent(&self) -> bool {
        self.counts == self.scratch_counts()
    }

    fn delta(&self, out: usize, add: usize) -> f64 {
        let t = self.tables;
        let mut d = 0.0;
        for (&co, &cn) in t.cells(out).iter().zip(t.cells(add)) {
            if co == cn {
                continue;
            }
            let (co, cn) = (co as usize, cn as usize);
            let ro = self.counts[co] as f64 - t.expected[co];
            let rn = self.counts[cn] as f64 - t.expected[cn];
            d += (1.0 - 2.0 * ro) / t.weight[co] + (2.0 * rn + 1.0) / t.weight[cn];
        }
        d
    }

    pub fn best_swap(&self) -> Option<(usize, usize, f64)> {
        let pool = self.tables.cell.len() / self.tables.n_tables.max(1);
        let mut best: Option<(usize, usize, f64)> = None;
        for (pos, &i) in self.design.iter().enumerate() {
            for j in 0..pool {
                if j == i {
                    continue;
                }
                let d = self.delta(i, j);
                if best.is_none_or(|(_, _, b)| d < b) {
                    best = Some((pos, j, d));
                }
            }
        }
        best
    }

    pub fn apply(&mut self, pos: usize, j: usize, delta: f64) {
        let out = self.design[pos];
        for &c in self.tables.cells(out) {
            self.counts[c as usize] -= 1;
        }
        for &c in self.tables.cells(j) {
            self.counts[c as usize] += 1;
        }
        self.design[pos] = j;
        self.sum += delta;
    }

    pub fn optimize(&mut self, max_passes: usize) -> usize {
        let mut swaps = 0;
        while swaps < max_passes && self.sum > 0.0 {
            match self.best_swap() {
                Some((pos, j, d)) if d < -MIN_GAIN * self.sum.max(1.0) => {
                    self.apply(pos, j, d);
                    swaps += 1;
                }
                _ => break,
            }
        }
        // drop accumulated round-off
        self.sum = self.scratch_sum();
        swaps
    }
}
