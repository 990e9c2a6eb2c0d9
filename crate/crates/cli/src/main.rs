//! `oofa`: evaluate, search, compare, rank and analyze order-of-addition
//! designs. Every command prints a JSON envelope (rank can also print text
//! or LaTeX tables). Exit status: 0 ok, 1 bad input, 2 internal error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oofa_core::analysis::{self, Heredity, StepwiseOptions};
use oofa_core::criteria::{self, EvalOptions, Metric, RankCriterion};
use oofa_core::search::{self, Keep, SearchConfig};
use oofa_core::{io, isomorph, reference, CandidateSet, Design, Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "oofa", version, about = "Order-of-addition design toolkit")]
struct Cli {
    /// Worker threads for searches and table enumeration.
    #[arg(long, global = true, env = "OOFA_THREADS")]
    threads: Option<usize>,

    /// Write the JSON report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Balance and efficiency report of one design.
    Evaluate {
        #[command(flatten)]
        input: DesignInput,
        #[command(flatten)]
        cands: CandidateArgs,
        /// Skip strength-3 tables.
        #[arg(long)]
        no_strength3: bool,
        /// Skip leave-one-component-out projections.
        #[arg(long)]
        no_loo: bool,
    },
    /// Multi-start exchange search for an N-run design.
    Search {
        #[command(flatten)]
        cands: CandidateArgs,
        /// Number of components when no candidate spec is given.
        #[arg(long)]
        m: Option<usize>,
        /// Run size.
        #[arg(long, short)]
        n: usize,
        /// Strategy: d (Fedorov) or chi2.
        #[arg(long, default_value = "d")]
        criterion: String,
        #[arg(long, default_value_t = 100)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        max_passes: usize,
        /// Keep every optimal class rather than the best one.
        #[arg(long)]
        all_optima: bool,
        /// Directory for one CSV per wt-class plus summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// wt- and d-isomorphism of two designs, with both reports.
    Compare {
        #[command(flatten)]
        input: DesignInput,
        #[command(flatten)]
        cands: CandidateArgs,
    },
    /// Rank designs by averaged per-criterion ranks.
    Rank {
        #[command(flatten)]
        input: DesignInput,
        #[command(flatten)]
        cands: CandidateArgs,
        /// Labels for the designs, in input order.
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        /// Metrics such as fo_3,chi2_ave_3,sim_3 (default: the five
        /// strength-3 measures).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Fit PWO main effects, or run two-stage stepwise selection.
    Analyze {
        #[command(flatten)]
        input: DesignInput,
        /// Response values, one per run.
        #[arg(long)]
        response: PathBuf,
        #[arg(long)]
        stepwise: bool,
        #[arg(long, default_value_t = 0.05)]
        alpha_in: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha_out: f64,
        #[arg(long, value_enum, default_value_t = HeredityArg::Weak)]
        heredity: HeredityArg,
    },
    /// Smallest run size that can balance every t-tuple of PWO columns.
    Admissible {
        #[command(flatten)]
        cands: CandidateArgs,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 2)]
        t: usize,
    },
}

#[derive(Args)]
struct DesignInput {
    /// Design CSV or reference-row file (repeat for several designs).
    #[arg(long = "design", short = 'd')]
    designs: Vec<PathBuf>,
    /// 1-based rows of the full design, e.g. 2,18,27 (repeatable; needs --m).
    #[arg(long)]
    rows: Vec<String>,
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args)]
struct CandidateArgs {
    /// Candidate-set JSON spec (constraints, process factors, base design).
    #[arg(long)]
    candidates: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
    Latex,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeredityArg {
    Weak,
    Strong,
}

#[derive(Clone, Serialize)]
struct InputDigest {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct ReportEnvelope<T: Serialize> {
    version: &'static str,
    command: Vec<String>,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    payload: T,
}

fn envelope<T: Serialize>(inputs: &Inputs, seed: Option<u64>, payload: T) -> ReportEnvelope<T> {
    ReportEnvelope {
        version: env!("CARGO_PKG_VERSION"),
        command: std::env::args().skip(1).collect(),
        seed,
        inputs: inputs.0.clone(),
        payload,
    }
}

struct Inputs(Vec<InputDigest>);

impl Inputs {
    fn add(&mut self, name: String, bytes: &[u8]) {
        let sha256 = Sha256::digest(bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        self.0.push(InputDigest { name, sha256 });
    }

    fn file(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display())))
        })?;
        self.add(path.display().to_string(), &bytes);
        Ok(())
    }
}

impl DesignInput {
    fn load(&self, inputs: &mut Inputs) -> Result<Vec<Design>> {
        let mut out = Vec::new();
        for path in &self.designs {
            inputs.file(path)?;
            out.push(io::read_design_or_rows(path)?);
        }
        for list in &self.rows {
            let m = self
                .m
                .ok_or_else(|| Error::validation("--rows needs --m <components>"))?;
            inputs.add(format!("rows(m={m})"), list.as_bytes());
            out.push(Design::from_reference_rows(m, &io::parse_row_list(list)?)?);
        }
        if out.is_empty() {
            return Err(Error::validation("no design given: use --design FILE or --rows LIST --m M"));
        }
        Ok(out)
    }

    fn load_one(&self, inputs: &mut Inputs) -> Result<Design> {
        let mut all = self.load(inputs)?;
        if all.len() != 1 {
            return Err(Error::validation(format!("expected one design, got {}", all.len())));
        }
        Ok(all.remove(0))
    }
}

impl CandidateArgs {
    fn load(&self, m: usize, inputs: &mut Inputs) -> Result<CandidateSet> {
        match &self.candidates {
            Some(path) => {
                inputs.file(path)?;
                let c = io::read_candidate_spec(path)?;
                if c.m() != m {
                    return Err(Error::validation(format!(
                        "candidate spec has m={}, design has m={m}",
                        c.m()
                    )));
                }
                Ok(c)
            }
            None => CandidateSet::full(m),
        }
    }

    fn load_for(&self, m: Option<usize>, inputs: &mut Inputs) -> Result<CandidateSet> {
        match (&self.candidates, m) {
            (Some(path), _) => {
                inputs.file(path)?;
                let c = io::read_candidate_spec(path)?;
                if let Some(m) = m.filter(|&m| m != c.m()) {
                    return Err(Error::validation(format!(
                        "--m {m} disagrees with the candidate spec (m={})",
                        c.m()
                    )));
                }
                Ok(c)
            }
            (None, Some(m)) => CandidateSet::full(m),
            (None, None) => Err(Error::validation("give --m or --candidates")),
        }
    }
}

#[derive(Serialize)]
struct Comparison {
    wt_isomorphic: bool,
    /// `null` beyond the component count canonical forms support.
    d_isomorphic: Option<bool>,
    wt_digests: [String; 2],
    reports: [criteria::CriteriaReport; 2],
}

#[derive(Serialize)]
struct Admissible {
    m: usize,
    t: usize,
    min_n: u64,
}

#[derive(Serialize)]
struct SearchSummary<'a> {
    result: &'a search::SearchResult,
    /// CSV file of each wt-class representative, when `--out` was given.
    files: Vec<String>,
}

fn write_class_files(dir: &Path, result: &search::SearchResult) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut seen: Vec<&str> = Vec::new();
    let mut files = Vec::new();
    for f in &result.designs {
        if seen.contains(&f.wt_digest.as_str()) {
            continue;
        }
        seen.push(&f.wt_digest);
        let name = format!("class_{:02}.csv", seen.len());
        io::write_design(&dir.join(&name), &f.design)?;
        files.push(name);
    }
    Ok(files)
}

fn emit<T: Serialize>(out: &Option<PathBuf>, env: &ReportEnvelope<T>) -> Result<()> {
    let text = serde_json::to_string_pretty(env)? + "\n";
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::validation("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    let mut inputs = Inputs(Vec::new());
    macro_rules! finish {
        ($seed:expr, $payload:expr) => {
            emit(&cli.output, &envelope(&inputs, $seed, $payload))
        };
    }

    match &cli.command {
        Command::Evaluate { input, cands, no_strength3, no_loo } => {
            let d = input.load_one(&mut inputs)?;
            let c = cands.load(d.m(), &mut inputs)?;
            let opts = EvalOptions { strength3: !no_strength3, loo: !no_loo, ..Default::default() };
            let report = criteria::evaluate_with(&d, &c, &opts)?;
            finish!(None, report)
        }
        Command::Search {
            cands,
            m,
            n,
            criterion,
            starts,
            seed,
            max_passes,
            all_optima,
            out,
        } => {
            let c = cands.load_for(*m, &mut inputs)?;
            let cfg = SearchConfig::new(&c, *n, criterion)
                .starts(*starts)
                .seed(*seed)
                .max_passes(*max_passes)
                .keep(if *all_optima { Keep::AllOptima } else { Keep::BestOnly });
            let result = search::search(&cfg)?;
            let files = match out {
                Some(dir) => write_class_files(dir, &result)?,
                None => Vec::new(),
            };
            let summary = SearchSummary { result: &result, files };
            if let Some(dir) = out {
                let env = envelope(&inputs, Some(*seed), &summary);
                fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&env)? + "\n")?;
            }
            finish!(Some(*seed), summary)
        }
        Command::Compare { input, cands } => {
            let ds = input.load(&mut inputs)?;
            let [a, b] = <[Design; 2]>::try_from(ds).map_err(|ds| {
                Error::validation(format!("compare needs exactly two designs, got {}", ds.len()))
            })?;
            if a.m() != b.m() {
                return Err(Error::validation(format!(
                    "designs have m={} and m={}",
                    a.m(),
                    b.m()
                )));
            }
            let c = cands.load(a.m(), &mut inputs)?;
            let d_iso = if a.m() <= isomorph::MAX_CANONICAL_M && a.n() == b.n() {
                Some(isomorph::d_isomorphic(&a, &b)?)
            } else if a.n() != b.n() {
                Some(false)
            } else {
                None
            };
            let cmp = Comparison {
                wt_isomorphic: a.n() == b.n() && isomorph::wt_isomorphic(&a, &b)?,
                d_isomorphic: d_iso,
                wt_digests: [
                    isomorph::wt_signature(&a).digest(),
                    isomorph::wt_signature(&b).digest(),
                ],
                reports: [criteria::evaluate(&a, &c)?, criteria::evaluate(&b, &c)?],
            };
            finish!(None, cmp)
        }
        Command::Rank { input, cands, ids, criteria: names, format } => {
            let ds = input.load(&mut inputs)?;
            if !ids.is_empty() && ids.len() != ds.len() {
                return Err(Error::validation(format!(
                    "{} ids for {} designs",
                    ids.len(),
                    ds.len()
                )));
            }
            let crits: Vec<RankCriterion> = if names.is_empty() {
                criteria::table4_criteria()
            } else {
                names
                    .iter()
                    .map(|n| n.parse::<Metric>().map(RankCriterion::new))
                    .collect::<Result<_>>()?
            };
            let m = ds[0].m();
            if ds.iter().any(|d| d.m() != m) {
                return Err(Error::validation("all ranked designs need the same m"));
            }
            let c = cands.load(m, &mut inputs)?;
            let labelled = ds
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let id = ids.get(i).cloned().unwrap_or_else(|| (i + 1).to_string());
                    Ok((id, criteria::evaluate(d, &c)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let table = criteria::rank_designs(&labelled, &crits)?;
            match format {
                Format::Json => finish!(None, table),
                Format::Text | Format::Latex => {
                    let text = match format {
                        Format::Text => table.to_text(),
                        _ => table.to_latex(),
                    };
                    match &cli.output {
                        Some(p) => fs::write(p, text)?,
                        None => print!("{text}"),
                    }
                    Ok(())
                }
            }
        }
        Command::Analyze { input, response, stepwise, alpha_in, alpha_out, heredity } => {
            let d = input.load_one(&mut inputs)?;
            inputs.file(response)?;
            let y = io::read_response(response)?;
            if y.y.len() != d.n() {
                return Err(Error::validation(format!(
                    "{} responses for {} runs",
                    y.y.len(),
                    d.n()
                )));
            }
            let p = d.expand();
            if *stepwise {
                let opts = StepwiseOptions {
                    alpha_in: *alpha_in,
                    alpha_out: *alpha_out,
                    heredity: match heredity {
                        HeredityArg::Weak => Heredity::Weak,
                        HeredityArg::Strong => Heredity::Strong,
                    },
                };
                let res = analysis::stepwise(&p, &y, &opts)?;
                finish!(None, res)
            } else {
                let fit = analysis::fit_main_effects(&p, &y)?;
                finish!(None, fit)
            }
        }
        Command::Admissible { cands, m, t } => {
            let c = cands.load_for(*m, &mut inputs)?;
            let min_n = reference::admissible_min_n(&c, *t)?;
            finish!(None, Admissible { m: c.m(), t: *t, min_n })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
        Err(_) => ExitCode::from(2),
    }
}
