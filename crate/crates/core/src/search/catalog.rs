//! Batch searches that collect the optimal designs of several (N, m, t)
//! settings, one representative per wt-class, ranked Table-4 style.

use serde::{Deserialize, Serialize};

use super::{search, FoundDesign, Keep, SearchConfig};
use crate::candidates::CandidateSet;
use crate::criteria::{rank_designs, table4_criteria, RankingTable};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogSpec {
    pub n_runs: usize,
    pub m: usize,
    /// Balance strength the optima are expected to reach.
    pub strength: usize,
    #[serde(default = "default_criterion")]
    pub criterion: String,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_criterion() -> String {
    "d".into()
}

fn default_starts() -> usize {
    100
}

impl CatalogSpec {
    pub fn new(n_runs: usize, m: usize, strength: usize) -> Self {
        CatalogSpec {
            n_runs,
            m,
            strength,
            criterion: default_criterion(),
            starts: default_starts(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub spec: CatalogSpec,
    pub best_objective: f64,
    pub optimum_hits: usize,
    /// Optima that are OofA-OA's of the requested strength.
    pub oa_found: usize,
    /// One design per wt-class, in search order.
    pub classes: Vec<FoundDesign>,
    pub ranking: Option<RankingTable>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CatalogReport {
    pub entries: Vec<CatalogEntry>,
}

pub fn catalog_run(specs: &[CatalogSpec]) -> Result<CatalogReport> {
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let cands = CandidateSet::full(spec.m)?;
        let cfg = SearchConfig::new(&cands, spec.n_runs, &spec.criterion)
            .starts(spec.starts)
            .seed(spec.seed)
            .keep(Keep::AllOptima);
        let result = search(&cfg)?;
        let oa_found = result
            .designs
            .iter()
            .filter(|f| match spec.strength {
                3 => f.report.is_oofa_oa_3,
                _ => f.report.is_oofa_oa_2,
            })
            .count();
        let mut classes: Vec<FoundDesign> = Vec::new();
        for f in result.designs {
            if !classes.iter().any(|c| c.wt_digest == f.wt_digest) {
                classes.push(f);
            }
        }
        let ranking = if classes.is_empty() {
            None
        } else {
            let labelled: Vec<(String, _)> = classes
                .iter()
                .enumerate()
                .map(|(i, f)| ((i + 1).to_string(), f.report.clone()))
                .collect();
            Some(rank_designs(&labelled, &table4_criteria())?)
        };
        entries.push(CatalogEntry {
            spec: spec.clone(),
            best_objective: result.best_objective,
            optimum_hits: result.optimum_hits,
            oa_found,
            classes,
            ranking,
        });
    }
    Ok(CatalogReport { entries })
}
