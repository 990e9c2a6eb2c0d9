//! Balance and efficiency measures of a design relative to a candidate set.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::linalg::{self, ModelSpec};
use crate::perm::{self, Design, PwoMatrix};
use crate::reference::{self, ReferenceTable};

/// χ² contribution of one tuple table, plus whether the design matches the
/// reference proportions exactly.
///
/// Cells with zero expected count are skipped. The denominator is the
/// expected count floored at one run, which keeps sparse cells (expected
/// counts below 1 for small N) from dominating the average.
pub(crate) fn table_chi2(tab: &ReferenceTable, observed: &[u64], n: u64) -> (f64, bool) {
    let total = tab.total;
    let mut chi = 0.0;
    let mut exact = true;
    for (&e_ref, &obs) in tab.counts.iter().zip(observed) {
        if e_ref == 0 {
            continue;
        }
        if obs * total != n * e_ref {
            exact = false;
            let e = n as f64 * e_ref as f64 / total as f64;
            let dev = obs as f64 - e;
            chi += dev * dev / e.max(1.0);
        }
    }
    (chi, exact)
}

pub(crate) fn observed_counts(tab: &ReferenceTable, rows: &[Vec<u8>]) -> Vec<u64> {
    let mut obs = vec![0u64; tab.counts.len()];
    for row in rows {
        obs[tab.cell_index(row)] += 1;
    }
    obs
}

pub fn chi2_tuple(d: &Design, cands: &CandidateSet, cols: &[usize]) -> Result<f64> {
    cands.check_design(d)?;
    let tab = reference::reference_counts(cands, cols)?;
    let rows = d.extended_rows();
    Ok(table_chi2(&tab, &observed_counts(&tab, &rows), d.n() as u64).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Summary {
    pub ave: f64,
    pub max: f64,
    pub fo: f64,
    /// Every tuple matches its reference proportions exactly.
    pub exact: bool,
}

fn summary_unchecked(d: &Design, cands: &CandidateSet, t: usize) -> Option<Chi2Summary> {
    let tables = cands.tables(t);
    if tables.is_empty() {
        return None;
    }
    let rows = d.extended_rows();
    let n = d.n() as u64;
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut zeros = 0usize;
    for tab in tables {
        let (chi, exact) = table_chi2(tab, &observed_counts(tab, &rows), n);
        sum += chi;
        max = max.max(chi);
        zeros += usize::from(exact);
    }
    let k = tables.len();
    Some(Chi2Summary {
        ave: sum / k as f64,
        max,
        fo: zeros as f64 / k as f64,
        exact: zeros == k,
    })
}

/// Average, maximum and zero-fraction of χ² over all strength-`t` tuples of
/// the extended columns.
pub fn chi2_summary(d: &Design, cands: &CandidateSet, t: usize) -> Result<Chi2Summary> {
    check_strength(t)?;
    cands.check_design(d)?;
    summary_unchecked(d, cands, t).ok_or_else(|| {
        Error::domain(format!(
            "{} columns have no {t}-tuples",
            cands.n_columns()
        ))
    })
}

fn check_strength(t: usize) -> Result<()> {
    if (2..=3).contains(&t) {
        Ok(())
    } else {
        Err(Error::domain(format!("strength must be 2 or 3, got {t}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LooSummary {
    pub ave: f64,
    pub fo: f64,
}

fn loo_unchecked(d: &Design, cands: &CandidateSet, t: usize) -> Option<LooSummary> {
    let frames = cands.projections();
    if frames.is_empty() {
        return None;
    }
    let mut ave = 0.0;
    let mut fo = 0.0;
    for (c, frame) in frames.iter().enumerate() {
        let sub = d.leave_one_out(c).ok()?;
        let s = summary_unchecked(&sub, frame, t)?;
        ave += s.ave;
        fo += s.fo;
    }
    let m = frames.len() as f64;
    Some(LooSummary { ave: ave / m, fo: fo / m })
}

/// Mean of the strength-`t` summaries of the `m` leave-one-out designs, each
/// against the matching projection of the candidate set.
pub fn loo_summary(d: &Design, cands: &CandidateSet, t: usize) -> Result<LooSummary> {
    check_strength(t)?;
    cands.check_design(d)?;
    if d.m() < 3 {
        return Err(Error::domain("leave-one-out needs m >= 3"));
    }
    loo_unchecked(d, cands, t).ok_or_else(|| {
        Error::domain(format!("projected designs have no {t}-tuples"))
    })
}

fn design_log_det(d: &Design, spec: &ModelSpec) -> Option<f64> {
    let rows: Vec<Vec<f64>> = d.runs().iter().map(|r| spec.row(r)).collect();
    linalg::log_det(&linalg::normalized_information(&rows, None))
}

/// `[det(XᵀX/N) / det(X_CᵀX_C/M)]^(1/p)`; 0 when `XᵀX` is singular.
pub fn d_efficiency(d: &Design, cands: &CandidateSet) -> Result<f64> {
    cands.check_design(d)?;
    Ok(d_efficiency_unchecked(d, cands))
}

pub(crate) fn d_efficiency_unchecked(d: &Design, cands: &CandidateSet) -> f64 {
    let spec = ModelSpec::for_candidates(cands);
    let (Some(ld), Some(lc)) = (design_log_det(d, &spec), cands.reference_log_det()) else {
        return 0.0;
    };
    ((ld - lc) / spec.n_params() as f64).exp()
}

fn inverse_information(d: &Design, spec: &ModelSpec) -> Option<nalgebra::DMatrix<f64>> {
    let x = spec.matrix(d.runs());
    linalg::inverse(&(x.transpose() * x))
}

/// Mean variance-inflation factor of the PWO main effects under the
/// main-effects model; `None` when the model matrix is singular.
pub fn mean_vif(d: &Design) -> Option<f64> {
    mean_vif_with(d, &ModelSpec::for_design(d))
}

pub fn mean_vif_with(d: &Design, spec: &ModelSpec) -> Option<f64> {
    if spec.pwo.is_empty() {
        return None;
    }
    let inv = inverse_information(d, spec)?;
    let p = d.expand();
    let n = d.n() as f64;
    let mut total = 0.0;
    for (k, &j) in spec.pwo.iter().enumerate() {
        let ones = p.rows().iter().filter(|r| r[j] == 1).count() as f64;
        // Σ (x - x̄)² for a 0/1 column
        let ss = ones - ones * ones / n;
        total += inv[(k + 1, k + 1)] * ss;
    }
    Some(total / spec.pwo.len() as f64)
}

/// `N · Var(β̂_j) / σ²` for each PWO coefficient.
pub fn standardized_effect_variances(d: &Design) -> Option<Vec<f64>> {
    let spec = ModelSpec::for_design(d);
    let inv = inverse_information(d, &spec)?;
    let n = d.n() as f64;
    Some((1..=perm::m_prime(d.m())).map(|j| n * inv[(j, j)]).collect())
}

/// `Var(ŷ_i) / σ²` at each design run.
pub fn prediction_variances(d: &Design) -> Option<Vec<f64>> {
    let spec = ModelSpec::for_design(d);
    let inv = inverse_information(d, &spec)?;
    Some(
        d.runs()
            .iter()
            .map(|r| {
                let x = nalgebra::DVector::from_vec(spec.row(r));
                x.dot(&(&inv * &x))
            })
            .collect(),
    )
}

/// Power moments of row coincidences: `Sim_s = K_s^(1/s)` with
/// `K_s = N⁻² Σ_i Σ_j δ_ij^s` over all ordered run pairs, `δ_ij` being the
/// number of PWO columns on which runs i and j agree.
pub fn moments(p: &PwoMatrix, s_max: usize) -> Result<Vec<f64>> {
    if s_max < 1 {
        return Err(Error::domain("s_max must be at least 1"));
    }
    let rows = p.rows();
    let n = rows.len();
    let mut k = vec![0.0f64; s_max];
    for i in 0..n {
        for j in i..n {
            let delta = rows[i]
                .iter()
                .zip(&rows[j])
                .filter(|(a, b)| a == b)
                .count() as f64;
            let mult = if i == j { 1.0 } else { 2.0 };
            let mut pw = 1.0;
            for ks in k.iter_mut() {
                pw *= delta;
                *ks += mult * pw;
            }
        }
    }
    let nn = (n * n) as f64;
    Ok(k
        .iter()
        .enumerate()
        .map(|(s, &ks)| (ks / nn).powf(1.0 / (s + 1) as f64))
        .collect())
}

fn stage_dispersion(d: &Design) -> f64 {
    let f = d.stage_counts();
    let m = d.m() as f64;
    let mean = d.n() as f64 / m;
    f.iter()
        .flatten()
        .map(|&x| {
            let dev = x as f64 - mean;
            dev * dev
        })
        .sum::<f64>()
}

/// `[(1/m²) Σ_k Σ_l (f_kl − f̄_k)²]^(1/2)` with `f_kl` the number of runs
/// adding component k at stage l.
pub fn rmv_ord_unscaled(d: &Design) -> f64 {
    let m = d.m() as f64;
    (stage_dispersion(d) / (m * m)).sqrt()
}

/// Order-of-addition imbalance: the stage-count dispersion above with the
/// `(m+1)/(m-1)` variance factor of a row of `f`, so a single run of the
/// design carries the same weight at every m.
pub fn rmv_ord(d: &Design) -> f64 {
    let m = d.m() as f64;
    (stage_dispersion(d) * (m + 1.0) / (m * m * (m - 1.0))).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub s_max: usize,
    pub strength3: bool,
    pub loo: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { s_max: 3, strength3: true, loo: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub chi2_ave_2: Option<f64>,
    pub chi2_max_2: Option<f64>,
    pub fo_2: Option<f64>,
    pub chi2_ave_3: Option<f64>,
    pub chi2_max_3: Option<f64>,
    pub fo_3: Option<f64>,
    pub chi2_ave_2_loo: Option<f64>,
    pub fo_2_loo: Option<f64>,
    pub chi2_ave_3_loo: Option<f64>,
    pub fo_3_loo: Option<f64>,
    pub d_eff: f64,
    pub mean_vif: Option<f64>,
    pub sim: Vec<f64>,
    pub rmv_ord: f64,
    pub is_oofa_oa_2: bool,
    pub is_oofa_oa_3: bool,
    #[serde(default)]
    pub duplicate_runs: bool,
}

pub fn evaluate(d: &Design, cands: &CandidateSet) -> Result<CriteriaReport> {
    evaluate_with(d, cands, &EvalOptions::default())
}

pub fn evaluate_with(d: &Design, cands: &CandidateSet, opts: &EvalOptions) -> Result<CriteriaReport> {
    cands.check_design(d)?;
    let s2 = summary_unchecked(d, cands, 2);
    let s3 = if opts.strength3 { summary_unchecked(d, cands, 3) } else { None };
    let (l2, l3) = if opts.loo {
        (
            loo_unchecked(d, cands, 2),
            if opts.strength3 { loo_unchecked(d, cands, 3) } else { None },
        )
    } else {
        (None, None)
    };
    let spec = ModelSpec::for_candidates(cands);
    Ok(CriteriaReport {
        m: d.m(),
        n: d.n(),
        p: d.p(),
        chi2_ave_2: s2.map(|s| s.ave),
        chi2_max_2: s2.map(|s| s.max),
        fo_2: s2.map(|s| s.fo),
        chi2_ave_3: s3.map(|s| s.ave),
        chi2_max_3: s3.map(|s| s.max),
        fo_3: s3.map(|s| s.fo),
        chi2_ave_2_loo: l2.map(|s| s.ave),
        fo_2_loo: l2.map(|s| s.fo),
        chi2_ave_3_loo: l3.map(|s| s.ave),
        fo_3_loo: l3.map(|s| s.fo),
        d_eff: d_efficiency_unchecked(d, cands),
        mean_vif: mean_vif_with(d, &spec),
        sim: moments(&d.expand(), opts.s_max.max(1))?,
        rmv_ord: rmv_ord(d),
        is_oofa_oa_2: s2.is_some_and(|s| s.exact),
        is_oofa_oa_3: s3.is_some_and(|s| s.exact),
        duplicate_runs: d.has_duplicate_runs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Chi2Ave2,
    Chi2Max2,
    Fo2,
    Chi2Ave3,
    Chi2Max3,
    Fo3,
    Chi2Ave2Loo,
    Fo2Loo,
    Chi2Ave3Loo,
    Fo3Loo,
    DEff,
    MeanVif,
    Sim(usize),
    RmvOrd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    Maximize,
    Minimize,
}

impl Metric {
    pub fn value(&self, r: &CriteriaReport) -> Option<f64> {
        match *self {
            Metric::Chi2Ave2 => r.chi2_ave_2,
            Metric::Chi2Max2 => r.chi2_max_2,
            Metric::Fo2 => r.fo_2,
            Metric::Chi2Ave3 => r.chi2_ave_3,
            Metric::Chi2Max3 => r.chi2_max_3,
            Metric::Fo3 => r.fo_3,
            Metric::Chi2Ave2Loo => r.chi2_ave_2_loo,
            Metric::Fo2Loo => r.fo_2_loo,
            Metric::Chi2Ave3Loo => r.chi2_ave_3_loo,
            Metric::Fo3Loo => r.fo_3_loo,
            Metric::DEff => Some(r.d_eff),
            Metric::MeanVif => r.mean_vif,
            Metric::Sim(s) => s.checked_sub(1).and_then(|i| r.sim.get(i).copied()),
            Metric::RmvOrd => Some(r.rmv_ord),
        }
    }

    pub fn default_goal(&self) -> Goal {
        match self {
            Metric::Fo2 | Metric::Fo3 | Metric::Fo2Loo | Metric::Fo3Loo | Metric::DEff => {
                Goal::Maximize
            }
            _ => Goal::Minimize,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Metric::Chi2Ave2 => "chi2_ave_2".into(),
            Metric::Chi2Max2 => "chi2_max_2".into(),
            Metric::Fo2 => "fo_2".into(),
            Metric::Chi2Ave3 => "chi2_ave_3".into(),
            Metric::Chi2Max3 => "chi2_max_3".into(),
            Metric::Fo3 => "fo_3".into(),
            Metric::Chi2Ave2Loo => "chi2_ave_2_loo".into(),
            Metric::Fo2Loo => "fo_2_loo".into(),
            Metric::Chi2Ave3Loo => "chi2_ave_3_loo".into(),
            Metric::Fo3Loo => "fo_3_loo".into(),
            Metric::DEff => "d_eff".into(),
            Metric::MeanVif => "mean_vif".into(),
            Metric::Sim(s) => format!("sim_{s}"),
            Metric::RmvOrd => "rmv_ord".into(),
        }
    }

    fn latex(&self) -> String {
        match self {
            Metric::Chi2Ave2 => r"$\chi^2_{ave,2}$".into(),
            Metric::Chi2Max2 => r"$\chi^2_{max,2}$".into(),
            Metric::Fo2 => r"$FO_2$".into(),
            Metric::Chi2Ave3 => r"$\chi^2_{ave,3}$".into(),
            Metric::Chi2Max3 => r"$\chi^2_{max,3}$".into(),
            Metric::Fo3 => r"$FO_3$".into(),
            Metric::Chi2Ave2Loo => r"$\chi^2_{ave,2,-1}$".into(),
            Metric::Fo2Loo => r"$FO_{2,-1}$".into(),
            Metric::Chi2Ave3Loo => r"$\chi^2_{ave,3,-1}$".into(),
            Metric::Fo3Loo => r"$FO_{3,-1}$".into(),
            Metric::DEff => r"$D_{eff}$".into(),
            Metric::MeanVif => r"$\overline{VIF}$".into(),
            Metric::Sim(s) => format!("$Sim_{s}$"),
            Metric::RmvOrd => r"$RMV_{ord}$".into(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s {
            "chi2_ave_2" => Metric::Chi2Ave2,
            "chi2_max_2" => Metric::Chi2Max2,
            "fo_2" => Metric::Fo2,
            "chi2_ave_3" => Metric::Chi2Ave3,
            "chi2_max_3" => Metric::Chi2Max3,
            "fo_3" => Metric::Fo3,
            "chi2_ave_2_loo" => Metric::Chi2Ave2Loo,
            "fo_2_loo" => Metric::Fo2Loo,
            "chi2_ave_3_loo" => Metric::Chi2Ave3Loo,
            "fo_3_loo" => Metric::Fo3Loo,
            "d_eff" => Metric::DEff,
            "mean_vif" => Metric::MeanVif,
            "rmv_ord" => Metric::RmvOrd,
            other => match other.strip_prefix("sim_").and_then(|x| x.parse().ok()) {
                Some(k) if k >= 1 => Metric::Sim(k),
                _ => return Err(Error::validation(format!("unknown metric `{s}`"))),
            },
        };
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCriterion {
    pub metric: Metric,
    pub goal: Goal,
}

impl RankCriterion {
    pub fn new(metric: Metric) -> Self {
        RankCriterion { metric, goal: metric.default_goal() }
    }
}

/// The five measures used to order the 24-run five-component OofA-OA's.
pub fn table4_criteria() -> Vec<RankCriterion> {
    [
        Metric::Fo3,
        Metric::Chi2Ave3,
        Metric::Fo3Loo,
        Metric::Chi2Ave3Loo,
        Metric::Sim(3),
    ]
    .into_iter()
    .map(RankCriterion::new)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub id: String,
    pub values: Vec<Option<f64>>,
    pub ranks: Vec<usize>,
    pub average_rank: f64,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub criteria: Vec<RankCriterion>,
    /// Rows in final order.
    pub rows: Vec<RankedRow>,
}

fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

/// Ranks each criterion with ties sharing the lowest rank (1 = best),
/// averages the ranks and orders designs by average, then by id.
pub fn rank_designs(
    designs: &[(String, CriteriaReport)],
    criteria: &[RankCriterion],
) -> Result<RankingTable> {
    if designs.is_empty() {
        return Err(Error::validation("nothing to rank"));
    }
    if criteria.is_empty() {
        return Err(Error::validation("no ranking criteria given"));
    }
    // undefined values rank last
    let score = |c: &RankCriterion, r: &CriteriaReport| -> f64 {
        match (c.metric.value(r), c.goal) {
            (Some(v), Goal::Minimize) => v,
            (Some(v), Goal::Maximize) => -v,
            (None, _) => f64::INFINITY,
        }
    };
    let mut rows: Vec<RankedRow> = designs
        .iter()
        .map(|(id, r)| {
            let ranks: Vec<usize> = criteria
                .iter()
                .map(|c| {
                    let mine = score(c, r);
                    1 + designs.iter().filter(|(_, o)| score(c, o) < mine).count()
                })
                .collect();
            RankedRow {
                id: id.clone(),
                values: criteria.iter().map(|c| c.metric.value(r)).collect(),
                average_rank: ranks.iter().sum::<usize>() as f64 / ranks.len() as f64,
                ranks,
                position: 0,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.average_rank
            .total_cmp(&b.average_rank)
            .then_with(|| compare_ids(&a.id, &b.id))
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.position = i + 1;
    }
    Ok(RankingTable { criteria: criteria.to_vec(), rows })
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

impl RankingTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "ID");
        for c in &self.criteria {
            let _ = write!(out, " {:>16}", c.metric.name());
        }
        let _ = writeln!(out, " {:>6} {:>4}", "avg", "rank");
        for row in &self.rows {
            let _ = write!(out, "{:<8}", row.id);
            for (v, r) in row.values.iter().zip(&row.ranks) {
                let _ = write!(out, " {:>16}", format!("{}({r})", fmt_value(*v)));
            }
            let _ = writeln!(out, " {:>6.2} {:>4}", row.average_rank, row.position);
        }
        out
    }

    pub fn to_latex(&self) -> String {
        let mut out = String::new();
        let cols = "r".repeat(self.criteria.len() + 3);
        let _ = writeln!(out, "\\begin{{tabular}}{{{cols}}}");
        let _ = writeln!(out, "\\hline");
        let mut head = vec!["ID".to_string()];
        head.extend(self.criteria.iter().map(|c| c.metric.latex()));
        head.push(r"$\overline{\textrm{Rank}}$".into());
        head.push("Rank".into());
        let _ = writeln!(out, "{} \\\\", head.join(" & "));
        let _ = writeln!(out, "\\hline");
        for row in &self.rows {
            let mut cells = vec![row.id.clone()];
            cells.extend(
                row.values
                    .iter()
                    .zip(&row.ranks)
                    .map(|(v, r)| format!("{}({r})", fmt_value(*v))),
            );
            cells.push(format!("{:.1}", row.average_rank));
            cells.push(row.position.to_string());
            let _ = writeln!(out, "{} \\\\", cells.join(" & "));
        }
        let _ = writeln!(out, "\\hline");
        let _ = writeln!(out, "\\end{{tabular}}");
        out
    }
}
