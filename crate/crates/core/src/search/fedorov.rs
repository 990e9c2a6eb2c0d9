//! Fedorov point exchange on the D-criterion.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::registry::{ExchangeStrategy, PreparedExchange, StartOutcome};
use crate::candidates::CandidateSet;
use crate::criteria::Goal;
use crate::error::{Error, Result};
use crate::linalg::{self, ModelSpec};

/// Ridge added to a singular information matrix until the design reaches
/// full rank.
pub const RIDGE: f64 = 1e-8;
/// Random restarts tried before a start is declared degenerate.
pub const MAX_RETRIES: usize = 50;
/// Swaps whose relative determinant gain is below this stop the exchange.
pub const MIN_GAIN: f64 = 1e-12;
const REFRESH_EVERY: usize = 32;

pub struct Fedorov;

impl ExchangeStrategy for Fedorov {
    fn name(&self) -> &'static str {
        "d"
    }

    fn aliases(&self) -> &'static [&'static str] {
        &["d_opt", "d-opt", "fedorov"]
    }

    fn goal(&self) -> Goal {
        Goal::Maximize
    }

    fn prepare<'a>(
        &self,
        cands: &'a CandidateSet,
        n_runs: usize,
    ) -> Result<Box<dyn PreparedExchange + 'a>> {
        let spec = ModelSpec::for_candidates(cands);
        let rows = cands.pool().iter().map(|r| spec.row(r)).collect();
        Ok(Box::new(PreparedFedorov {
            rows,
            n_runs,
            reference_log_det: cands.reference_log_det(),
        }))
    }
}

struct PreparedFedorov {
    rows: Vec<Vec<f64>>,
    n_runs: usize,
    reference_log_det: Option<f64>,
}

impl PreparedExchange for PreparedFedorov {
    fn run(&self, rng: &mut ChaCha8Rng, max_passes: usize) -> Result<StartOutcome> {
        let pool = self.rows.len();
        for _ in 0..MAX_RETRIES {
            let start = sample(rng, pool, self.n_runs).into_vec();
            let mut st = FedorovState::new(&self.rows, start);
            let mut swaps = 0;
            if st.is_regularized() {
                swaps += st.optimize(max_passes);
                if !st.try_drop_ridge() {
                    continue;
                }
            }
            swaps += st.optimize(max_passes);
            let p = self.rows[0].len() as f64;
            let n = self.n_runs as f64;
            let per_run = st.scratch_log_det().expect("full rank") - p * n.ln();
            let objective = match self.reference_log_det {
                Some(lc) => ((per_run - lc) / p).exp(),
                None => (per_run / p).exp(),
            };
            return Ok(StartOutcome { rows: st.design, objective, swaps });
        }
        Err(Error::Degenerate(format!(
            "no nonsingular {}-run design found after {MAX_RETRIES} random starts \
             (the main-effects model has {} parameters)",
            self.n_runs,
            self.rows[0].len()
        )))
    }
}

/// Exchange state over a pool of model rows: the current design (pool
/// indices), the inverse of `XᵀX` (plus a ridge while singular) and its
/// log-determinant, both updated by rank-one formulas.
pub struct FedorovState<'a> {
    rows: &'a [Vec<f64>],
    pub design: Vec<usize>,
    inv: DMatrix<f64>,
    log_det: f64,
    ridge: f64,
    since_refresh: usize,
}

fn information(rows: &[Vec<f64>], design: &[usize], ridge: f64) -> DMatrix<f64> {
    let p = rows[0].len();
    let mut m = DMatrix::<f64>::identity(p, p) * ridge;
    for &i in design {
        let x = DVector::from_column_slice(&rows[i]);
        m.ger(1.0, &x, &x, 1.0);
    }
    m
}

impl<'a> FedorovState<'a> {
    pub fn new(rows: &'a [Vec<f64>], design: Vec<usize>) -> Self {
        let mut st = FedorovState {
            rows,
            design,
            inv: DMatrix::zeros(0, 0),
            log_det: 0.0,
            ridge: 0.0,
            since_refresh: 0,
        };
        if !st.refresh() {
            st.ridge = RIDGE;
            st.refresh();
        }
        st
    }

    /// Recomputes inverse and log det from scratch. False if singular.
    fn refresh(&mut self) -> bool {
        let m = information(self.rows, &self.design, self.ridge);
        let ld = if self.ridge > 0.0 {
            // the ridge guarantees positive definiteness
            m.clone().cholesky().map(|c| 2.0 * c.l().diagonal().map(f64::ln).sum())
        } else {
            linalg::log_det(&m)
        };
        let Some(ld) = ld else { return false };
        let Some(inv) = m.try_inverse() else { return false };
        self.inv = inv;
        self.log_det = ld;
        self.since_refresh = 0;
        true
    }

    pub fn is_regularized(&self) -> bool {
        self.ridge > 0.0
    }

    fn try_drop_ridge(&mut self) -> bool {
        self.ridge = 0.0;
        self.refresh()
    }

    /// Incrementally tracked log det of `XᵀX` (+ ridge).
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn scratch_log_det(&self) -> Option<f64> {
        let m = information(self.rows, &self.design, self.ridge);
        if self.ridge > 0.0 {
            m.cholesky().map(|c| 2.0 * c.l().diagonal().map(f64::ln).sum())
        } else {
            linalg::log_det(&m)
        }
    }

    /// Best (design position, pool index, Δ) with det gain factor `1 + Δ`.
    pub fn best_swap(&self) -> Option<(usize, usize, f64)> {
        let pool = self.rows.len();
        let p = self.rows[0].len();
        // V = A⁻¹ x_j for every pool row
        let xs = DMatrix::from_fn(p, pool, |a, j| self.rows[j][a]);
        let v = &self.inv * &xs;
        let d_pool: Vec<f64> = (0..pool).map(|j| xs.column(j).dot(&v.column(j))).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for (pos, &i) in self.design.iter().enumerate() {
            let d_i = d_pool[i];
            let xi = xs.column(i);
            for (j, &d_j) in d_pool.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d_ij = xi.dot(&v.column(j));
                let delta = d_j - d_i - (d_i * d_j - d_ij * d_ij);
                if best.is_none_or(|(_, _, b)| delta > b) {
                    best = Some((pos, j, delta));
                }
            }
        }
        best
    }

    /// Replaces the run at design position `pos` with pool row `j`.
    pub fn apply(&mut self, pos: usize, j: usize, delta: f64) {
        let out = self.design[pos];
        let add = DVector::from_column_slice(&self.rows[j]);
        let rem = DVector::from_column_slice(&self.rows[out]);
        // add first so the intermediate matrix stays nonsingular
        let u = &self.inv * &add;
        let denom = 1.0 + add.dot(&u);
        self.inv.ger(-1.0 / denom, &u, &u, 1.0);
        let w = &self.inv * &rem;
        let denom = 1.0 - rem.dot(&w);
        self.inv.ger(1.0 / denom, &w, &w, 1.0);
        self.log_det += (1.0 + delta).ln();
        self.design[pos] = j;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh();
        }
    }

    /// Best-swap iterations until no swap gains more than [`MIN_GAIN`] or
    /// `max_passes` swaps were made. Returns the number of swaps.
    pub fn optimize(&mut self, max_passes: usize) -> usize {
        let mut swaps = 0;
        while swaps < max_passes {
            match self.best_swap() {
                Some((pos, j, delta)) if delta > MIN_GAIN => {
                    self.apply(pos, j, delta);
                    swaps += 1;
                }
                _ => break,
            }
        }
        swaps
    }
}
