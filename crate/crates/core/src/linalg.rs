//! Main-effects model matrices and the small dense algebra behind the
//! efficiency criteria.

use nalgebra::{DMatrix, DVector};

use crate::candidates::CandidateSet;
use crate::perm::{self, Design, Run};

/// LU pivots below this fraction of the largest matrix entry mark a
/// singular information matrix.
pub const PIVOT_TOL: f64 = 1e-10;

/// Column layout of `X = [1 | P | process dummies]`. A process factor with
/// `s` levels contributes `s - 1` indicator columns (level 0 is baseline).
/// PWO columns fixed by ordering constraints are left out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub m: usize,
    /// PWO columns in the model, ascending.
    pub pwo: Vec<usize>,
    pub process_levels: Vec<u8>,
}

impl ModelSpec {
    /// Every PWO column plus the given process factors.
    pub fn new(m: usize, process_levels: Vec<u8>) -> Self {
        ModelSpec { m, pwo: (0..perm::m_prime(m)).collect(), process_levels }
    }

    pub fn for_candidates(c: &CandidateSet) -> Self {
        let mut spec = Self::new(c.m(), c.process_levels().to_vec());
        if !c.constraints().is_empty() {
            let rows: Vec<Vec<u8>> = c.reference().iter().map(|r| perm::pwo_row(&r.order)).collect();
            spec.pwo.retain(|&j| rows.iter().any(|r| r[j] != rows[0][j]));
        }
        spec
    }

    /// Infers process level counts from the levels observed in `d`.
    pub fn for_design(d: &Design) -> Self {
        let mut levels = vec![2u8; d.p()];
        for run in d.runs() {
            for (s, &x) in levels.iter_mut().zip(&run.levels) {
                *s = (*s).max(x + 1);
            }
        }
        Self::new(d.m(), levels)
    }

    /// Number of model parameters p.
    pub fn n_params(&self) -> usize {
        1 + self.pwo.len()
            + self
                .process_levels
                .iter()
                .map(|&s| s as usize - 1)
                .sum::<usize>()
    }

    pub fn row(&self, run: &Run) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_params());
        x.push(1.0);
        let pwo = perm::pwo_row(&run.order);
        x.extend(self.pwo.iter().map(|&j| f64::from(pwo[j])));
        for (&lvl, &s) in run.levels.iter().zip(&self.process_levels) {
            if s == 2 {
                x.push(f64::from(lvl));
            } else {
                x.extend((1..s).map(|j| f64::from(u8::from(lvl == j))));
            }
        }
        x
    }

    pub fn matrix<'a>(&self, runs: impl IntoIterator<Item = &'a Run>) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = runs.into_iter().map(|r| self.row(r)).collect();
        let p = self.n_params();
        DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j])
    }
}

/// `Σ w_i x_i x_iᵀ / Σ w_i`.
pub fn normalized_information(rows: &[Vec<f64>], weights: Option<&[u64]>) -> DMatrix<f64> {
    let p = rows.first().map_or(0, Vec::len);
    let mut info = DMatrix::<f64>::zeros(p, p);
    let mut total = 0.0;
    for (i, x) in rows.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i] as f64);
        total += w;
        for a in 0..p {
            if x[a] == 0.0 {
                continue;
            }
            let wa = w * x[a];
            for b in a..p {
                info[(a, b)] += wa * x[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    if total > 0.0 {
        info /= total;
    }
    info
}

/// Natural log of the determinant, or `None` when the matrix is singular
/// by the relative-pivot rule.
pub fn log_det(a: &DMatrix<f64>) -> Option<f64> {
    let scale = a.amax();
    if scale == 0.0 {
        return None;
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let mut sum = 0.0;
    let mut negative = lu.p().determinant::<f64>() < 0.0;
    for i in 0..a.nrows() {
        let piv = u[(i, i)];
        if piv.abs() < PIVOT_TOL * scale {
            return None;
        }
        negative ^= piv < 0.0;
        sum += piv.abs().ln();
    }
    // an information matrix is PSD; a negative determinant is round-off on a
    // singular one
    (!negative).then_some(sum)
}

pub fn inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    log_det(a)?;
    a.clone().lu().try_inverse()
}

/// Least-squares coefficients for `X β ≈ y` when `XᵀX` is nonsingular.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let xtx = x.transpose() * x;
    let inv = inverse(&xtx)?;
    let beta = &inv * (x.transpose() * y);
    Some((beta, inv))
}
