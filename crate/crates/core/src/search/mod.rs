//! Multi-start exchange search for optimal N-run fractions.
//!
//! Every start draws its own ChaCha8 stream seeded with `seed ^ start`, so
//! starts run in parallel and results are merged by a deterministic sort.

pub mod catalog;
pub mod chi2;
pub mod fedorov;
pub mod registry;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::candidates::CandidateSet;
use crate::criteria::{self, CriteriaReport, Goal};
use crate::error::{Error, Result};
use crate::isomorph::{self, WtSignature};
use crate::perm::{Design, Run};

pub use catalog::{catalog_run, CatalogEntry, CatalogReport, CatalogSpec};
pub use registry::{ExchangeStrategy, PreparedExchange, StartOutcome, StrategyRegistry};

pub const RNG_NAME: &str = "ChaCha8Rng";

/// Objectives within this relative distance of the best count as optimal.
pub const OPTIMUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Keep {
    #[default]
    BestOnly,
    AllOptima,
}

#[derive(Debug, Clone)]
pub struct SearchConfig<'a> {
    pub n_runs: usize,
    /// Registered strategy name, e.g. `"d"` or `"chi2"`.
    pub criterion: String,
    pub starts: usize,
    pub seed: u64,
    pub max_passes: usize,
    pub candidate: &'a CandidateSet,
    pub keep: Keep,
}

impl<'a> SearchConfig<'a> {
    pub fn new(candidate: &'a CandidateSet, n_runs: usize, criterion: &str) -> Self {
        SearchConfig {
            n_runs,
            criterion: criterion.to_string(),
            starts: 100,
            seed: 0,
            max_passes: 500,
            candidate,
            keep: Keep::BestOnly,
        }
    }

    pub fn starts(mut self, starts: usize) -> Self {
        self.starts = starts;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn max_passes(mut self, max_passes: usize) -> Self {
        self.max_passes = max_passes;
        self
    }

    pub fn keep(mut self, keep: Keep) -> Self {
        self.keep = keep;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoundDesign {
    pub design: Design,
    /// 1-based lexicographic rows of the orderings.
    pub rows: Vec<u64>,
    pub objective: f64,
    pub report: CriteriaReport,
    pub wt_digest: String,
    /// Starts that ended in this design up to d-isomorphism.
    pub hits: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub strategy: String,
    pub rng: String,
    pub seed: u64,
    pub n_runs: usize,
    pub starts: usize,
    pub best_objective: f64,
    /// Starts whose final objective is optimal.
    pub optimum_hits: usize,
    pub designs: Vec<FoundDesign>,
    pub distinct_wt_classes: usize,
    /// Final objective of every start, in start order.
    pub trace: Vec<f64>,
}

fn is_better(goal: Goal, a: f64, b: f64) -> bool {
    match goal {
        Goal::Maximize => a > b,
        Goal::Minimize => a < b,
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= OPTIMUM_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Key identifying a design up to d-isomorphism (up to run order when m is
/// too large for canonical forms).
fn class_key(d: &Design) -> Vec<Run> {
    isomorph::canonical_form(d).unwrap_or_else(|_| {
        let mut runs = d.runs().to_vec();
        runs.sort();
        runs
    })
}

pub fn search(cfg: &SearchConfig<'_>) -> Result<SearchResult> {
    search_with(cfg, &StrategyRegistry::default())
}

pub fn search_with(cfg: &SearchConfig<'_>, registry: &StrategyRegistry) -> Result<SearchResult> {
    let strategy = registry.get(&cfg.criterion)?;
    let cands = cfg.candidate;
    let pool = cands.pool().len();
    if cfg.n_runs == 0 || cfg.n_runs > pool {
        return Err(Error::validation(format!(
            "run size {} must be in 1..={pool} (candidate pool size)",
            cfg.n_runs
        )));
    }
    if cfg.starts == 0 {
        return Err(Error::validation("at least one start is required"));
    }
    let prepared = strategy.prepare(cands, cfg.n_runs)?;
    let outcomes: Vec<StartOutcome> = (0..cfg.starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ s as u64);
            prepared.run(&mut rng, cfg.max_passes)
        })
        .collect::<Result<_>>()?;
    let goal = strategy.goal();
    let trace: Vec<f64> = outcomes.iter().map(|o| o.objective).collect();
    let best = trace
        .iter()
        .copied()
        .reduce(|a, b| if is_better(goal, b, a) { b } else { a })
        .expect("at least one start");

    let kept: Vec<&StartOutcome> = outcomes
        .iter()
        .filter(|o| near(o.objective, best))
        .collect();
    let optimum_hits = kept.len();

    // group starts by d-isomorphism class
    let keyed: Vec<(Vec<Run>, Design, f64)> = kept
        .par_iter()
        .map(|o| {
            let runs = o.rows.iter().map(|&j| cands.pool()[j].clone()).collect();
            let d = Design::with_runs(cands.m(), cands.p(), runs).expect("pool runs fit");
            (class_key(&d), d, o.objective)
        })
        .collect();
    let mut classes: Vec<(Vec<Run>, Design, f64, usize)> = Vec::new();
    let mut sorted = keyed;
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for (key, d, obj) in sorted {
        match classes.last_mut() {
            Some(last) if last.0 == key => last.3 += 1,
            _ => classes.push((key, d, obj, 1)),
        }
    }
    classes.sort_by(|a, b| {
        let ord = match goal {
            Goal::Maximize => b.2.total_cmp(&a.2),
            Goal::Minimize => a.2.total_cmp(&b.2),
        };
        ord.then_with(|| a.0.cmp(&b.0))
    });
    if cfg.keep == Keep::BestOnly {
        classes.truncate(1);
    }

    let designs: Vec<FoundDesign> = classes
        .into_par_iter()
        .map(|(_, d, objective, hits)| {
            let report = criteria::evaluate(&d, cands)?;
            let sig: WtSignature = isomorph::wt_signature(&d);
            Ok(FoundDesign {
                rows: d.reference_rows(),
                design: d,
                objective,
                report,
                wt_digest: sig.digest(),
                hits,
            })
        })
        .collect::<Result<_>>()?;
    let distinct_wt_classes = designs
        .iter()
        .map(|f| f.wt_digest.as_str())
        .collect::<BTreeSet<_>>()
        .len();
    Ok(SearchResult {
        strategy: strategy.name().to_string(),
        rng: RNG_NAME.to_string(),
        seed: cfg.seed,
        n_runs: cfg.n_runs,
        starts: cfg.starts,
        best_objective: best,
        optimum_hits,
        designs,
        distinct_wt_classes,
        trace,
    })
}

/// D-optimal search by Fedorov exchange.
pub fn fedorov_search(cfg: &SearchConfig<'_>) -> Result<SearchResult> {
    let mut cfg = cfg.clone();
    cfg.criterion = "d".into();
    search(&cfg)
}

/// Search minimizing χ²_{ave,2}; works below the model rank.
pub fn chi2_exchange_search(cfg: &SearchConfig<'_>) -> Result<SearchResult> {
    let mut cfg = cfg.clone();
    cfg.criterion = "chi2".into();
    search(&cfg)
}
