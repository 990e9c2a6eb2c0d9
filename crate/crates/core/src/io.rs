//! File formats.
//!
//! Design CSV: optional header `# m=<m>` (plus ` p=<p>` with process
//! factors), then one run per line: `m` component labels followed by `p`
//! process levels. Reference-row files hold 1-based lexicographic indices
//! after an `m=<m>` header. Candidate specs are JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::candidates::{CandidateSet, Constraint, ProcessFactor, ProcessSpec};
use crate::error::{Error, Result};
use crate::perm::{Design, Permutation, Run};
use crate::analysis::Response;

fn parse_header(line: &str) -> Vec<(String, String)> {
    line.trim_start_matches('#')
        .split_whitespace()
        .filter_map(|tok| {
            let (k, v) = tok.split_once('=')?;
            Some((k.trim().to_string(), v.trim().trim_end_matches(',').to_string()))
        })
        .collect()
}

fn header_value(pairs: &[(String, String)], key: &str) -> Result<Option<usize>> {
    match pairs.iter().find(|(k, _)| k == key) {
        None => Ok(None),
        Some((_, v)) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Parse(format!("header value `{key}={v}` is not an integer"))),
    }
}

pub fn parse_design(text: &str) -> Result<Design> {
    let mut m = None;
    let mut p = None;
    for line in text.lines().map(str::trim).filter(|l| l.starts_with('#')) {
        let pairs = parse_header(line);
        m = m.or(header_value(&pairs, "m")?);
        p = p.or(header_value(&pairs, "p")?);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut runs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 1, |pos| pos.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let values = record
            .iter()
            .map(|f| {
                f.parse::<u8>().map_err(|_| {
                    Error::Parse(format!("line {line}: `{f}` is not a small non-negative integer"))
                })
            })
            .collect::<Result<Vec<u8>>>()?;
        let m_here = m.unwrap_or(values.len() - p.unwrap_or(0));
        let p_here = p.unwrap_or(values.len().saturating_sub(m_here));
        if values.len() != m_here + p_here {
            return Err(Error::Parse(format!(
                "line {line}: expected {} fields (m={m_here}, p={p_here}), found {}",
                m_here + p_here,
                values.len()
            )));
        }
        m.get_or_insert(m_here);
        p.get_or_insert(p_here);
        let order = Permutation::new(values[..m_here].to_vec())
            .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        runs.push(Run::new(order, values[m_here..].to_vec()));
    }
    let m = m.ok_or_else(|| Error::Parse("design file has no runs".into()))?;
    Design::with_runs(m, p.unwrap_or(0), runs)
}

/// Canonical text: header line, then one comma-separated run per line.
pub fn format_design(d: &Design) -> String {
    let mut out = if d.p() > 0 {
        format!("# m={} p={}\n", d.m(), d.p())
    } else {
        format!("# m={}\n", d.m())
    };
    for run in d.runs() {
        let fields: Vec<String> = run
            .order
            .labels()
            .iter()
            .chain(&run.levels)
            .map(u8::to_string)
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read {}: {e}", path.display()),
        ))
    })
}

pub fn read_design(path: &Path) -> Result<Design> {
    parse_design(&read_text(path)?).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_design(path: &Path, d: &Design) -> Result<()> {
    fs::write(path, format_design(d))?;
    Ok(())
}

/// Comma- or whitespace-separated 1-based row indices.
pub fn parse_row_list(text: &str) -> Result<Vec<u64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<u64>()
                .map_err(|_| Error::Parse(format!("`{t}` is not a row index")))
        })
        .collect()
}

/// Reference-row file: `m=<m>` header (a leading `#` is allowed), then the
/// indices.
pub fn parse_reference_rows(text: &str) -> Result<(usize, Vec<u64>)> {
    let mut m = None;
    let mut body = String::new();
    for line in text.lines() {
        let t = line.trim();
        if t.contains('=') {
            m = m.or(header_value(&parse_header(t), "m")?);
        } else if !t.starts_with('#') {
            body.push_str(t);
            body.push('\n');
        }
    }
    let m = m.ok_or_else(|| Error::Parse("reference-row file needs an `m=<m>` header".into()))?;
    Ok((m, parse_row_list(&body)?))
}

pub fn format_reference_rows(m: usize, rows: &[u64]) -> String {
    let list: Vec<String> = rows.iter().map(u64::to_string).collect();
    format!("m={m}\n{}\n", list.join(","))
}

/// Reads either format: a file whose header or first data line holds an
/// `m=` entry with bare indices is a reference-row file; anything else is a
/// design CSV.
pub fn read_design_or_rows(path: &Path) -> Result<Design> {
    let text = read_text(path)?;
    if looks_like_rows(&text) {
        let (m, rows) = parse_reference_rows(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        return Design::from_reference_rows(m, &rows);
    }
    read_design(path)
}

fn looks_like_rows(text: &str) -> bool {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some(first) => {
            let head = first.trim_start_matches('#').trim();
            head.starts_with("m=") && !head.contains("p=") && !first.starts_with('#')
        }
        None => false,
    }
}

pub fn parse_response(text: &str) -> Result<Response> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut y = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let Some(field) = record.iter().next_back() else { continue };
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => y.push(v),
            // a header line such as `y`
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(Error::Parse(format!(
                    "response line {}: `{field}` is not a number",
                    i + 1
                )))
            }
        }
    }
    Ok(Response::new(y))
}

pub fn read_response(path: &Path) -> Result<Response> {
    parse_response(&read_text(path)?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    m: usize,
    #[serde(default)]
    constraints: Vec<Vec<serde_json::Value>>,
    #[serde(default)]
    process: Option<ProcessFile>,
    #[serde(default)]
    base_design: Option<PathBuf>,
    #[serde(default)]
    max_m: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessFile {
    factors: Vec<(String, u8)>,
    #[serde(default)]
    fraction: Option<Vec<Vec<u8>>>,
}

fn parse_constraint(raw: &[serde_json::Value]) -> Result<Constraint> {
    let kind = raw.first().and_then(|v| v.as_str()).unwrap_or("");
    let labels = raw[1.min(raw.len())..]
        .iter()
        .map(|v| {
            v.as_u64()
                .filter(|&x| x < 256)
                .map(|x| x as u8)
                .ok_or_else(|| Error::Parse(format!("constraint label {v} is not a component")))
        })
        .collect::<Result<Vec<u8>>>()?;
    match (kind, labels.as_slice()) {
        ("precedes", [a, b]) => Ok(Constraint::Precedes(*a, *b)),
        ("chain", ls) if ls.len() >= 2 => Ok(Constraint::Chain(ls.to_vec())),
        _ => Err(Error::Parse(format!(
            "constraint {raw:?}: expected [\"precedes\", a, b] or [\"chain\", a, b, ...]"
        ))),
    }
}

/// Builds a candidate set from a JSON spec; `base_design` paths resolve
/// against `dir`.
pub fn parse_candidate_spec(text: &str, dir: &Path) -> Result<CandidateSet> {
    let spec: SpecFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("candidate spec: {e}")))?;
    let constraints = spec
        .constraints
        .iter()
        .map(|c| parse_constraint(c))
        .collect::<Result<Vec<_>>>()?;
    let process = spec.process.map(|p| ProcessSpec {
        factors: p
            .factors
            .into_iter()
            .map(|(name, levels)| ProcessFactor { name, levels })
            .collect(),
        fraction: p.fraction,
    });
    let base = match &spec.base_design {
        Some(path) => Some(read_design_or_rows(&dir.join(path))?),
        None => None,
    };
    let mut b = CandidateSet::builder(spec.m)
        .constraints(constraints)
        .process_opt(process)
        .base_opt(base.as_ref());
    if let Some(max_m) = spec.max_m {
        b = b.max_m(max_m);
    }
    b.build()
}

pub fn read_candidate_spec(path: &Path) -> Result<CandidateSet> {
    let text = read_text(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_candidate_spec(&text, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_round_trip_is_byte_identical() {
        let text = "# m=4\n0,1,2,3\n1,0,3,2\n3,2,1,0\n";
        let d = parse_design(text).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(format_design(&d), text);
        let with_levels = "# m=3 p=2\n0,1,2,1,0\n2,1,0,0,1\n";
        let d = parse_design(with_levels).unwrap();
        assert_eq!(d.p(), 2);
        assert_eq!(format_design(&d), with_levels);
    }

    #[test]
    fn headerless_design_infers_m() {
        let d = parse_design("0, 2, 1\n\n2,1,0\n").unwrap();
        assert_eq!((d.m(), d.n(), d.p()), (3, 2, 0));
    }

    #[test]
    fn malformed_design_names_line() {
        let err = parse_design("# m=3\n0,1,2\n0,0,2\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse_design("# m=3\n0,1\n").unwrap_err().to_string();
        assert!(err.contains("expected 3 fields"), "{err}");
        let err = parse_design("# m=3\n0,x,2\n").unwrap_err().to_string();
        assert!(err.contains("`x`"), "{err}");
        assert!(parse_design("# m=3\n").is_err());
    }

    #[test]
    fn reference_rows_round_trip() {
        let text = format_reference_rows(5, &[2, 18, 27]);
        assert_eq!(text, "m=5\n2,18,27\n");
        assert_eq!(parse_reference_rows(&text).unwrap(), (5, vec![2, 18, 27]));
        assert_eq!(parse_reference_rows("# m=4\n1 2\n3,\n4\n").unwrap(), (4, vec![1, 2, 3, 4]));
        assert!(parse_reference_rows("1,2\n").is_err());
    }

    #[test]
    fn spec_parsing() {
        let c = parse_candidate_spec(
            r#"{"m": 4, "constraints": [["precedes", 0, 1], ["chain", 1, 2, 3]]}"#,
            Path::new("."),
        )
        .unwrap();
        assert_eq!(c.reference().len(), 1);
        let c = parse_candidate_spec(
            r#"{"m": 3, "process": {"factors": [["A", 2], ["B", 3]]}}"#,
            Path::new("."),
        )
        .unwrap();
        assert_eq!(c.reference().len(), 36);
        let err = parse_candidate_spec(r#"{"m": 3, "constraints": [["before", 0, 1]]}"#, Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("precedes"), "{err}");
        assert!(parse_candidate_spec(r#"{"m": 3, "extra": 1}"#, Path::new(".")).is_err());
    }

    #[test]
    fn response_parsing() {
        assert_eq!(parse_response("y\n1.5\n2\n").unwrap().y, vec![1.5, 2.0]);
        assert_eq!(parse_response("1,3.0\n2,4.0\n").unwrap().y, vec![3.0, 4.0]);
        assert!(parse_response("1\nabc\n").is_err());
    }
}
