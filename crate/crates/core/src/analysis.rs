//! Least-squares fits on PWO matrices and a two-stage stepwise selection:
//! main effects first, then two-factor interactions tied to the active ones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::linalg;
use crate::perm::{self, PwoMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub y: Vec<f64>,
}

impl Response {
    pub fn new(y: Vec<f64>) -> Self {
        Response { y }
    }
}

/// A model term over PWO columns. Interactions are elementwise products of
/// the 0/1 columns, not recentred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Main(usize),
    Interaction(usize, usize),
}

impl Term {
    pub fn name(&self, m: usize) -> String {
        match *self {
            Term::Main(j) => perm::pwo_name(m, j),
            Term::Interaction(a, b) => {
                format!("{}:{}", perm::pwo_name(m, a), perm::pwo_name(m, b))
            }
        }
    }

    fn value(&self, row: &[u8]) -> f64 {
        match *self {
            Term::Main(j) => f64::from(row[j]),
            Term::Interaction(a, b) => f64::from(row[a] * row[b]),
        }
    }

    fn parents(&self) -> Vec<usize> {
        match *self {
            Term::Main(_) => Vec::new(),
            Term::Interaction(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTerm {
    pub term: Term,
    pub name: String,
    pub coefficient: f64,
    /// `None` when there are no residual degrees of freedom.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub intercept: f64,
    pub terms: Vec<FittedTerm>,
    pub residual_df: usize,
    pub rss: f64,
    pub sigma2_hat: Option<f64>,
    pub r_squared: f64,
}

impl FittedModel {
    pub fn selected(&self) -> Vec<Term> {
        self.terms.iter().map(|t| t.term).collect()
    }

    pub fn coefficient(&self, term: Term) -> Option<f64> {
        self.terms.iter().find(|t| t.term == term).map(|t| t.coefficient)
    }
}

struct LsFit {
    beta: DVector<f64>,
    inv: DMatrix<f64>,
    rss: f64,
}

fn model_matrix(p: &PwoMatrix, terms: &[Term]) -> DMatrix<f64> {
    let rows = p.rows();
    DMatrix::from_fn(rows.len(), terms.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            terms[j - 1].value(&rows[i])
        }
    })
}

fn ls(p: &PwoMatrix, y: &DVector<f64>, terms: &[Term]) -> Option<LsFit> {
    let x = model_matrix(p, terms);
    let (beta, inv) = linalg::least_squares(&x, y)?;
    let r = y - &x * &beta;
    Some(LsFit { beta, inv, rss: r.dot(&r) })
}

fn check_lengths(p: &PwoMatrix, y: &Response) -> Result<DVector<f64>> {
    if p.n() != y.y.len() {
        return Err(Error::validation(format!(
            "response has {} values but the design has {} runs",
            y.y.len(),
            p.n()
        )));
    }
    Ok(DVector::from_column_slice(&y.y))
}

/// Least-squares fit of `y` on `[1 | terms]`.
pub fn fit_terms(p: &PwoMatrix, y: &Response, terms: &[Term]) -> Result<FittedModel> {
    let yv = check_lengths(p, y)?;
    let n = p.n();
    let fit = ls(p, &yv, terms).ok_or_else(|| {
        Error::Singular(format!(
            "{} runs cannot estimate {} parameters independently",
            n,
            terms.len() + 1
        ))
    })?;
    let df = n - (terms.len() + 1);
    let sigma2 = (df > 0).then(|| fit.rss / df as f64);
    let mean = yv.mean();
    let tss: f64 = yv.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(FittedModel {
        intercept: fit.beta[0],
        terms: terms
            .iter()
            .enumerate()
            .map(|(k, &t)| FittedTerm {
                term: t,
                name: t.name(p.m()),
                coefficient: fit.beta[k + 1],
                std_error: sigma2.map(|s| (s * fit.inv[(k + 1, k + 1)]).sqrt()),
            })
            .collect(),
        residual_df: df,
        rss: fit.rss,
        sigma2_hat: sigma2,
        r_squared: if tss > 0.0 { 1.0 - fit.rss / tss } else { 1.0 },
    })
}

/// Main-effects fit on `[1 | P]`.
pub fn fit_main_effects(p: &PwoMatrix, y: &Response) -> Result<FittedModel> {
    let terms: Vec<Term> = (0..p.m_prime()).map(Term::Main).collect();
    fit_terms(p, y, &terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heredity {
    /// An interaction needs at least one active parent.
    Weak,
    /// An interaction needs both parents active.
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepwiseOptions {
    pub alpha_in: f64,
    pub alpha_out: f64,
    pub heredity: Heredity,
}

impl Default for StepwiseOptions {
    fn default() -> Self {
        StepwiseOptions { alpha_in: 0.05, alpha_out: 0.05, heredity: Heredity::Weak }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseResult {
    /// Main effects selected in the first stage.
    pub stage1: FittedModel,
    /// Final model after the interaction stage.
    pub model: FittedModel,
}

/// Sums of squares below this fraction of the total count as zero, so
/// noiseless responses do not chase round-off.
const SS_TOL: f64 = 1e-12;

/// p-value of the partial F test for one extra parameter.
fn partial_p(rss_small: f64, rss_big: f64, df_big: usize, tss: f64) -> f64 {
    let gain = (rss_small - rss_big).max(0.0);
    if gain <= SS_TOL * tss {
        return 1.0;
    }
    if rss_big <= SS_TOL * tss {
        return 0.0;
    }
    let f = gain / (rss_big / df_big as f64);
    let dist = FisherSnedecor::new(1.0, df_big as f64).expect("positive degrees of freedom");
    dist.sf(f)
}

fn heredity_ok(term: &Term, active_mains: &[usize], h: Heredity) -> bool {
    let parents = term.parents();
    if parents.is_empty() {
        return true;
    }
    let hits = parents.iter().filter(|p| active_mains.contains(p)).count();
    match h {
        Heredity::Weak => hits >= 1,
        Heredity::Strong => hits == 2,
    }
}

fn main_indices(terms: &[Term]) -> Vec<usize> {
    terms
        .iter()
        .filter_map(|t| match t {
            Term::Main(j) => Some(*j),
            _ => None,
        })
        .collect()
}

fn select(
    p: &PwoMatrix,
    y: &DVector<f64>,
    pool: &[Term],
    mut current: Vec<Term>,
    opts: &StepwiseOptions,
) -> Vec<Term> {
    let n = p.n();
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let rss_of = |terms: &[Term]| ls(p, y, terms).map(|f| f.rss);
    // alpha_out >= alpha_in rules out cycling in practice; the cap is a guard
    for _ in 0..4 * (pool.len() + 1) {
        let Some(rss_now) = rss_of(&current) else { break };
        let mut changed = false;

        let mut best: Option<(f64, Term)> = None;
        for &cand in pool.iter().filter(|t| !current.contains(t)) {
            let mut trial = current.clone();
            trial.push(cand);
            let df = n.saturating_sub(trial.len() + 1);
            if df == 0 {
                continue;
            }
            let Some(rss_new) = rss_of(&trial) else { continue };
            let pv = partial_p(rss_now, rss_new, df, tss);
            if best.is_none_or(|(b, _)| pv < b) {
                best = Some((pv, cand));
            }
        }
        if let Some((pv, cand)) = best {
            if pv < opts.alpha_in {
                current.push(cand);
                changed = true;
            }
        }

        let Some(rss_now) = rss_of(&current) else { break };
        let df_now = n.saturating_sub(current.len() + 1);
        let mut worst: Option<(f64, usize)> = None;
        for (k, term) in current.iter().enumerate() {
            let mut trial = current.clone();
            trial.remove(k);
            // keep parents of active interactions
            if let Term::Main(_) = term {
                let mains = main_indices(&trial);
                if trial.iter().any(|t| !heredity_ok(t, &mains, opts.heredity)) {
                    continue;
                }
            }
            let Some(rss_small) = rss_of(&trial) else { continue };
            let pv = if df_now == 0 { 0.0 } else { partial_p(rss_small, rss_now, df_now, tss) };
            if worst.is_none_or(|(w, _)| pv > w) {
                worst = Some((pv, k));
            }
        }
        if let Some((pv, k)) = worst {
            if pv > opts.alpha_out {
                current.remove(k);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    current.sort();
    current
}

/// Stage 1 selects main effects by F-to-enter / F-to-remove. Stage 2 starts
/// from those and may add two-factor interactions allowed by the heredity
/// rule relative to the stage-1 actives.
pub fn stepwise(p: &PwoMatrix, y: &Response, opts: &StepwiseOptions) -> Result<StepwiseResult> {
    let yv = check_lengths(p, y)?;
    if !(0.0..1.0).contains(&opts.alpha_in) || !(0.0..1.0).contains(&opts.alpha_out) {
        return Err(Error::validation("alpha levels must lie in [0, 1)"));
    }
    let mp = p.m_prime();
    let mains: Vec<Term> = (0..mp).map(Term::Main).collect();
    let stage1_terms = select(p, &yv, &mains, Vec::new(), opts);
    let stage1 = fit_terms(p, y, &stage1_terms)?;
    let active = main_indices(&stage1_terms);
    let mut pool = stage1_terms.clone();
    for a in 0..mp {
        for b in a + 1..mp {
            let t = Term::Interaction(a, b);
            if heredity_ok(&t, &active, opts.heredity) {
                pool.push(t);
            }
        }
    }
    let final_terms = if active.is_empty() {
        stage1_terms
    } else {
        select(p, &yv, &pool, stage1_terms, opts)
    };
    let model = fit_terms(p, y, &final_terms)?;
    Ok(StepwiseResult { stage1, model })
}
