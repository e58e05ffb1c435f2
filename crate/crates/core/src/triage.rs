//! Severity, mitigability and risk triage of recurring supervision issues.
//!
//! The catalog is curated CSV. Severity is recomputed from the prevalence and
//! consequence bands, and risk labels are checked against the dimension rubric.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The catalog shipped with the crate.
pub const SHIPPED_CATALOG: &str = include_str!("../data/catalog.csv");

pub const CSV_HEADER: [&str; 11] = [
    "id",
    "title",
    "stakeholders",
    "p",
    "c",
    "s",
    "mitigation",
    "risk",
    "dimensions",
    "risk_rationale",
    "refs",
];

#[derive(Debug, Error, PartialEq)]
pub enum TriageError {
    #[error("prevalence fraction {0} is outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("band {0} is outside 1..=3")]
    BandOutOfDomain(u8),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stakeholder {
    Candidate,
    Supervisor,
    #[serde(rename = "GRS")]
    Grs,
}

impl FromStr for Stakeholder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            // older catalogs say "Student"
            "Candidate" | "Student" => Ok(Self::Candidate),
            "Supervisor" => Ok(Self::Supervisor),
            "GRS" => Ok(Self::Grs),
            other => Err(format!("unknown stakeholder `{other}`")),
        }
    }
}

impl fmt::Display for Stakeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Candidate => "Candidate",
            Self::Supervisor => "Supervisor",
            Self::Grs => "GRS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskLabel {
    L,
    M,
    H,
}

impl FromStr for RiskLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "L" => Ok(Self::L),
            "M" => Ok(Self::M),
            "H" => Ok(Self::H),
            other => Err(format!("unknown risk label `{other}`")),
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskDimension {
    PrivacySurveillance,
    AgencyPowerShift,
    IntegrityPolicyDrift,
    GamingMetricFixation,
    BiasDisparateImpact,
}

impl RiskDimension {
    pub fn key(self) -> &'static str {
        match self {
            Self::PrivacySurveillance => "privacy",
            Self::AgencyPowerShift => "agency",
            Self::IntegrityPolicyDrift => "integrity",
            Self::GamingMetricFixation => "gaming",
            Self::BiasDisparateImpact => "bias",
        }
    }

    fn from_key(k: &str) -> Option<Self> {
        [
            Self::PrivacySurveillance,
            Self::AgencyPowerShift,
            Self::IntegrityPolicyDrift,
            Self::GamingMetricFixation,
            Self::BiasDisparateImpact,
        ]
        .into_iter()
        .find(|d| d.key() == k)
    }
}

/// A flagged dimension; `sensitive` marks credible exposure in a sensitive
/// domain and is written with a trailing `!`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionFlag {
    pub dimension: RiskDimension,
    pub sensitive: bool,
}

impl fmt::Display for DimensionFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.dimension.key(), if self.sensitive { "!" } else { "" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub dimensions: Vec<DimensionFlag>,
    pub label: RiskLabel,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub id: String,
    pub title: String,
    pub stakeholders: Vec<Stakeholder>,
    pub prevalence: u8,
    pub consequence: u8,
    pub severity: u8,
    pub mitigation: u8,
    pub risk: RiskAssessment,
    pub refs: Vec<String>,
}

/// Bands a prevalence fraction; both 0.20 and 0.40 fall in the middle band.
pub fn band_prevalence(fraction: f64) -> Result<u8, TriageError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(TriageError::FractionOutOfRange(fraction));
    }
    Ok(if fraction < 0.20 {
        1
    } else if fraction <= 0.40 {
        2
    } else {
        3
    })
}

/// `round((p + c) / 2)` with halves rounded up.
pub fn severity(p: u8, c: u8) -> Result<u8, TriageError> {
    for b in [p, c] {
        if !(1..=3).contains(&b) {
            return Err(TriageError::BandOutOfDomain(b));
        }
    }
    Ok((p + c).div_ceil(2))
}

pub fn rubric(dimensions: &[DimensionFlag]) -> RiskLabel {
    if dimensions.iter().any(|d| d.sensitive) {
        RiskLabel::H
    } else if dimensions.is_empty() {
        RiskLabel::L
    } else {
        RiskLabel::M
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').map(str::trim).filter(|x| !x.is_empty())
}

fn parse_dimensions(s: &str) -> Result<Vec<DimensionFlag>, String> {
    split_list(s)
        .map(|tok| {
            let (key, sensitive) = match tok.strip_suffix('!') {
                Some(k) => (k, true),
                None => (tok, false),
            };
            RiskDimension::from_key(key)
                .map(|dimension| DimensionFlag { dimension, sensitive })
                .ok_or_else(|| format!("unknown risk dimension `{key}`"))
        })
        .collect()
}

fn parse_u8(field: &str, value: &str) -> Result<u8, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("{field} `{value}` is not a small non-negative integer"))
}

/// Parses a catalog. Errors carry the 1-based file line.
pub fn load_catalog(reader: impl Read) -> Result<Vec<IssueRecord>, TriageError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| TriageError::Csv(e.to_string()))?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(TriageError::Malformed {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| match e.position() {
            Some(p) => TriageError::Malformed {
                line: p.line(),
                message: e.to_string(),
            },
            None => TriageError::Csv(e.to_string()),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| TriageError::Malformed { line, message };
        let f = |i: usize| row.get(i).unwrap_or("");
        let id = f(0).trim().to_owned();
        if id.is_empty() {
            return Err(bad("empty id".into()));
        }
        let mut stakeholders = Vec::new();
        for s in split_list(f(2)) {
            let s: Stakeholder = s.parse().map_err(bad)?;
            if !stakeholders.contains(&s) {
                stakeholders.push(s);
            }
        }
        out.push(IssueRecord {
            id,
            title: f(1).trim().to_owned(),
            stakeholders,
            prevalence: parse_u8("p", f(3)).map_err(bad)?,
            consequence: parse_u8("c", f(4)).map_err(bad)?,
            severity: parse_u8("s", f(5)).map_err(bad)?,
            mitigation: parse_u8("mitigation", f(6)).map_err(bad)?,
            risk: RiskAssessment {
                label: f(7).parse().map_err(bad)?,
                dimensions: parse_dimensions(f(8)).map_err(bad)?,
                rationale: f(9).trim().to_owned(),
            },
            refs: split_list(f(10)).map(str::to_owned).collect(),
        });
    }
    Ok(out)
}

pub fn load_shipped() -> Vec<IssueRecord> {
    load_catalog(SHIPPED_CATALOG.as_bytes()).expect("shipped catalog parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    DuplicateId { row: usize, id: String },
    BandOutOfDomain { row: usize, id: String, field: String, value: u8 },
    SeverityMismatch { row: usize, id: String, expected: u8, found: u8 },
    MitigationOutOfScale { row: usize, id: String, value: u8 },
    RiskRubricMismatch { row: usize, id: String, label: RiskLabel, rubric: RiskLabel },
    MissingRationale { row: usize, id: String },
}

impl Violation {
    /// 1-based data row.
    pub fn row(&self) -> usize {
        match self {
            Self::DuplicateId { row, .. }
            | Self::BandOutOfDomain { row, .. }
            | Self::SeverityMismatch { row, .. }
            | Self::MitigationOutOfScale { row, .. }
            | Self::RiskRubricMismatch { row, .. }
            | Self::MissingRationale { row, .. } => *row,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateId { row, id } => write!(f, "row {row} `{id}`: duplicate id"),
            Self::BandOutOfDomain { row, id, field, value } => {
                write!(f, "row {row} `{id}`: {field}={value} outside 1..=3")
            }
            Self::SeverityMismatch { row, id, expected, found } => {
                write!(f, "row {row} `{id}`: severity {found} but round-half-up((P+C)/2) = {expected}")
            }
            Self::MitigationOutOfScale { row, id, value } => {
                write!(f, "row {row} `{id}`: mitigation {value} outside 0..=3")
            }
            Self::RiskRubricMismatch { row, id, label, rubric } => {
                write!(f, "row {row} `{id}`: risk {label} but flagged dimensions justify {rubric}")
            }
            Self::MissingRationale { row, id } => write!(f, "row {row} `{id}`: risk label has no rationale"),
        }
    }
}

pub fn validate_catalog(records: &[IssueRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, r) in records.iter().enumerate() {
        let row = i + 1;
        let id = || r.id.clone();
        if !seen.insert(r.id.as_str()) {
            out.push(Violation::DuplicateId { row, id: id() });
        }
        let mut bands_ok = true;
        for (field, value) in [("P", r.prevalence), ("C", r.consequence), ("S", r.severity)] {
            if !(1..=3).contains(&value) {
                bands_ok = false;
                out.push(Violation::BandOutOfDomain {
                    row,
                    id: id(),
                    field: field.into(),
                    value,
                });
            }
        }
        if let (true, Ok(expected)) = (bands_ok, severity(r.prevalence, r.consequence)) {
            if expected != r.severity {
                out.push(Violation::SeverityMismatch {
                    row,
                    id: id(),
                    expected,
                    found: r.severity,
                });
            }
        }
        if r.mitigation > 3 {
            out.push(Violation::MitigationOutOfScale {
                row,
                id: id(),
                value: r.mitigation,
            });
        }
        let expected = rubric(&r.risk.dimensions);
        if expected != r.risk.label {
            out.push(Violation::RiskRubricMismatch {
                row,
                id: id(),
                label: r.risk.label,
                rubric: expected,
            });
        }
        if r.risk.rationale.trim().is_empty() {
            out.push(Violation::MissingRationale { row, id: id() });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Table,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format `{other}` (table|csv)")),
        }
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

fn write_csv(records: &[IssueRecord], out: impl Write) -> Result<(), TriageError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let err = |e: csv::Error| TriageError::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.title.clone(),
            join(&r.stakeholders),
            r.prevalence.to_string(),
            r.consequence.to_string(),
            r.severity.to_string(),
            r.mitigation.to_string(),
            r.risk.label.to_string(),
            join(&r.risk.dimensions),
            r.risk.rationale.clone(),
            r.refs.join(";"),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| TriageError::Csv(e.to_string()))
}

fn render_table(records: &[IssueRecord]) -> String {
    let header = ["ID", "Issue", "P", "C", "S", "Stakeholders", "Mitigation", "Risk"];
    let rows: Vec<[String; 8]> = records
        .iter()
        .map(|r| {
            [
                r.id.clone(),
                r.title.clone(),
                r.prevalence.to_string(),
                r.consequence.to_string(),
                r.severity.to_string(),
                r.stakeholders.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
                r.mitigation.to_string(),
                r.risk.label.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("{}\n", padded.join("  ").trim_end())
    };
    let mut out = line(&header.map(String::from));
    out.push_str(&line(&widths.map(|w| "-".repeat(w))));
    for row in &rows {
        out.push_str(&line(row));
    }
    out
}

/// Deterministic, in catalog order. The CSV form re-parses to equal records.
pub fn render_report(records: &[IssueRecord], format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(records),
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            write_csv(records, &mut buf).expect("writing to memory");
            String::from_utf8(buf).expect("csv output is utf-8")
        }
    }
}
