//! Scenario document ingestion.
//!
//! The format is a plain-text, section-structured file chosen for
//! diffability in test fixtures:
//!
//! ```text
//! # comment
//! [atoms]
//! up = 0.5              # ordered atom labels with baseline probabilities
//! down = 0.5
//!
//! [position X]
//! values = -10, 20
//!
//! [measure linP]
//! kind = linear         # worstcase | linear | entropic | robust
//! base = 0.5, 0.5
//!
//! [measure rob]
//! kind = robust
//! scenario = 0.6, 0.4 @ 0.25    # weights @ penalty, repeatable
//!
//! [envelope e09_10]
//! low = 0.9, 0.9
//! high = 1.0, 1.0
//!
//! [discount d09]
//! values = 0.9, 0.9
//!
//! [bond b09]
//! price = 0.9
//! ```
//!
//! Atom labels are `[A-Za-z0-9_]+` so they can be embedded in CSV headers.
//! Baseline probabilities must sum to one within `1e-9`; every vector must
//! match the atom count. Errors carry the offending line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use subcash_core::cash_additive::RiskMeasureSpec;
use subcash_core::spot_forward::{BondQuote, DiscountFactor};
use subcash_core::subadditive::DiscountEnvelope;
use subcash_core::{Position, ProbabilityWeights, ScenarioSpace};

/// Probability sum tolerance of the document format.
pub const DOC_PROB_TOL: f64 = 1e-9;

#[derive(Debug)]
pub enum DocError {
    /// Malformed document (grammar, numbers, unknown keys). Exit code 2.
    Parse { line: usize, msg: String },
    /// Well-formed but invalid content (sums, lengths, domains). Exit code 3.
    Validation { line: usize, msg: String },
}

impl fmt::Display for DocError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DocError::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            DocError::Validation { line, msg } => {
                write!(f, "validation error at line {line}: {msg}")
            }
        }
    }
}

impl std::error::Error for DocError {}

/// Parsed and validated scenario document.
#[derive(Debug)]
pub struct ScenarioDocument {
    pub space: ScenarioSpace,
    pub baseline: ProbabilityWeights,
    pub positions: BTreeMap<String, Position>,
    pub measures: BTreeMap<String, RiskMeasureSpec>,
    pub envelopes: BTreeMap<String, DiscountEnvelope>,
    pub discounts: BTreeMap<String, DiscountFactor>,
    pub bonds: BTreeMap<String, BondQuote>,
    /// Raw file bytes, hashed into the report digest.
    pub raw: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
enum SectionKind {
    Atoms,
    Position(String),
    Measure(String),
    Envelope(String),
    Discount(String),
    Bond(String),
}

struct RawSection {
    kind: SectionKind,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> DocError {
    DocError::Parse { line, msg: msg.into() }
}

fn valid_err(line: usize, msg: impl Into<String>) -> DocError {
    DocError::Validation { line, msg: msg.into() }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_header(body: &str, line: usize) -> Result<SectionKind, DocError> {
    let mut parts = body.split_whitespace();
    let kind = parts.next().ok_or_else(|| parse_err(line, "empty section header"))?;
    let name = parts.next();
    if parts.next().is_some() {
        return Err(parse_err(line, "section header has too many fields"));
    }
    let named = |name: Option<&str>| -> Result<String, DocError> {
        let n = name.ok_or_else(|| parse_err(line, format!("section '{kind}' needs a name")))?;
        if !valid_name(n) {
            return Err(parse_err(line, format!("invalid name '{n}' (use [A-Za-z0-9_]+)")));
        }
        Ok(n.to_string())
    };
    match kind {
        "atoms" => {
            if name.is_some() {
                return Err(parse_err(line, "the atoms section takes no name"));
            }
            Ok(SectionKind::Atoms)
        }
        "position" => Ok(SectionKind::Position(named(name)?)),
        "measure" => Ok(SectionKind::Measure(named(name)?)),
        "envelope" => Ok(SectionKind::Envelope(named(name)?)),
        "discount" => Ok(SectionKind::Discount(named(name)?)),
        "bond" => Ok(SectionKind::Bond(named(name)?)),
        other => Err(parse_err(line, format!("unknown section kind '{other}'"))),
    }
}

fn parse_number(s: &str, line: usize) -> Result<f64, DocError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("'{}' is not a number", s.trim())))
}

fn parse_vector(s: &str, line: usize) -> Result<Vec<f64>, DocError> {
    let vals: Result<Vec<f64>, DocError> =
        s.split(',').map(|tok| parse_number(tok, line)).collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(parse_err(line, "empty vector"));
    }
    Ok(vals)
}

fn split_sections(text: &str) -> Result<Vec<RawSection>, DocError> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let stripped = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let body = rest
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line_no, "unterminated section header"))?;
            let kind = parse_header(body, line_no)?;
            sections.push(RawSection { kind, line: line_no, entries: Vec::new() });
        } else {
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, "expected 'key = value'"))?;
            let section = sections
                .last_mut()
                .ok_or_else(|| parse_err(line_no, "entry before any section header"))?;
            section
                .entries
                .push((key.trim().to_string(), value.trim().to_string(), line_no));
        }
    }
    Ok(sections)
}

fn single_value<'a>(
    section: &'a RawSection,
    key: &str,
) -> Result<(&'a str, usize), DocError> {
    let mut found = None;
    for (k, v, line) in &section.entries {
        if k == key {
            if found.is_some() {
                return Err(parse_err(*line, format!("duplicate key '{key}'")));
            }
            found = Some((v.as_str(), *line));
        }
    }
    found.ok_or_else(|| parse_err(section.line, format!("missing key '{key}'")))
}

fn reject_unknown_keys(section: &RawSection, allowed: &[&str]) -> Result<(), DocError> {
    for (k, _, line) in &section.entries {
        if !allowed.contains(&k.as_str()) {
            return Err(parse_err(*line, format!("unknown key '{k}' in this section")));
        }
    }
    Ok(())
}

fn check_len(vals: &[f64], n: usize, line: usize, what: &str) -> Result<(), DocError> {
    if vals.len() != n {
        return Err(valid_err(
            line,
            format!("{what} has {} entries, expected {n} (one per atom)", vals.len()),
        ));
    }
    Ok(())
}

fn build_measure(section: &RawSection, n: usize) -> Result<RiskMeasureSpec, DocError> {
    reject_unknown_keys(section, &["kind", "base", "temperature", "scenario"])?;
    let (kind, kind_line) = single_value(section, "kind")?;
    match kind {
        "worstcase" => Ok(RiskMeasureSpec::WorstCase),
        "linear" => {
            let (base, line) = single_value(section, "base")?;
            let vals = parse_vector(base, line)?;
            check_len(&vals, n, line, "base")?;
            let q = ProbabilityWeights::normalized(vals, DOC_PROB_TOL)
                .map_err(|e| valid_err(line, e.to_string()))?;
            Ok(RiskMeasureSpec::linear(q))
        }
        "entropic" => {
            let (base, line) = single_value(section, "base")?;
            let vals = parse_vector(base, line)?;
            check_len(&vals, n, line, "base")?;
            let q = ProbabilityWeights::normalized(vals, DOC_PROB_TOL)
                .map_err(|e| valid_err(line, e.to_string()))?;
            let (temp, tline) = single_value(section, "temperature")?;
            let gamma = parse_number(temp, tline)?;
            RiskMeasureSpec::entropic(q, gamma).map_err(|e| valid_err(tline, e.to_string()))
        }
        "robust" => {
            let mut family = Vec::new();
            for (k, v, line) in &section.entries {
                if k != "scenario" {
                    continue;
                }
                let (weights, penalty) = v
                    .split_once('@')
                    .ok_or_else(|| parse_err(*line, "expected 'weights @ penalty'"))?;
                let vals = parse_vector(weights, *line)?;
                check_len(&vals, n, *line, "scenario weights")?;
                let q = ProbabilityWeights::normalized(vals, DOC_PROB_TOL)
                    .map_err(|e| valid_err(*line, e.to_string()))?;
                let pen = parse_number(penalty, *line)?;
                if pen < 0.0 || pen.is_nan() {
                    return Err(valid_err(*line, "scenario penalty must be nonnegative"));
                }
                family.push((q, pen));
            }
            RiskMeasureSpec::robust(family).map_err(|e| valid_err(section.line, e.to_string()))
        }
        other => Err(parse_err(kind_line, format!("unknown measure kind '{other}'"))),
    }
}

/// Parses and validates a scenario document from a file.
pub fn ingest(path: &Path) -> Result<ScenarioDocument, DocError> {
    let raw = std::fs::read(path)
        .map_err(|e| parse_err(0, format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(raw.clone())
        .map_err(|_| parse_err(0, "document is not valid UTF-8".to_string()))?;
    let mut doc = parse_document(&text)?;
    doc.raw = raw;
    Ok(doc)
}

/// Parses and validates a scenario document from text.
pub fn parse_document(text: &str) -> Result<ScenarioDocument, DocError> {
    let sections = split_sections(text)?;

    // the atoms section pins the dimension for everything else
    let atoms = sections
        .iter()
        .find(|s| s.kind == SectionKind::Atoms)
        .ok_or_else(|| valid_err(0, "missing [atoms] section"))?;
    if sections.iter().filter(|s| s.kind == SectionKind::Atoms).count() > 1 {
        return Err(parse_err(atoms.line, "duplicate [atoms] section"));
    }
    let mut labels = Vec::new();
    let mut probs = Vec::new();
    for (label, value, line) in &atoms.entries {
        if !valid_name(label) {
            return Err(parse_err(*line, format!("invalid atom label '{label}'")));
        }
        labels.push(label.clone());
        let p = parse_number(value, *line)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(valid_err(*line, format!("atom probability {p} outside [0, 1]")));
        }
        probs.push(p);
    }
    let space = ScenarioSpace::new(labels).map_err(|e| valid_err(atoms.line, e.to_string()))?;
    let n = space.size();
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > DOC_PROB_TOL {
        return Err(valid_err(
            atoms.line,
            format!("atom probabilities sum to {sum}, expected 1 within {DOC_PROB_TOL}"),
        ));
    }
    let baseline = ProbabilityWeights::normalized(probs, DOC_PROB_TOL)
        .map_err(|e| valid_err(atoms.line, e.to_string()))?;

    let mut doc = ScenarioDocument {
        space,
        baseline,
        positions: BTreeMap::new(),
        measures: BTreeMap::new(),
        envelopes: BTreeMap::new(),
        discounts: BTreeMap::new(),
        bonds: BTreeMap::new(),
        raw: Vec::new(),
    };

    let insert_unique = |taken: &mut Vec<String>, name: &str, line: usize| {
        if taken.iter().any(|t| t == name) {
            return Err(parse_err(line, format!("duplicate section name '{name}'")));
        }
        taken.push(name.to_string());
        Ok(())
    };
    let mut pos_names = Vec::new();
    let mut measure_names = Vec::new();
    let mut env_names = Vec::new();
    let mut disc_names = Vec::new();
    let mut bond_names = Vec::new();

    for section in &sections {
        match &section.kind {
            SectionKind::Atoms => {}
            SectionKind::Position(name) => {
                insert_unique(&mut pos_names, name, section.line)?;
                reject_unknown_keys(section, &["values"])?;
                let (v, line) = single_value(section, "values")?;
                let vals = parse_vector(v, line)?;
                check_len(&vals, n, line, "position")?;
                let p = Position::new(vals).map_err(|e| valid_err(line, e.to_string()))?;
                doc.positions.insert(name.clone(), p);
            }
            SectionKind::Measure(name) => {
                insert_unique(&mut measure_names, name, section.line)?;
                let m = build_measure(section, n)?;
                doc.measures.insert(name.clone(), m);
            }
            SectionKind::Envelope(name) => {
                insert_unique(&mut env_names, name, section.line)?;
                reject_unknown_keys(section, &["low", "high"])?;
                let (lo, lo_line) = single_value(section, "low")?;
                let (hi, hi_line) = single_value(section, "high")?;
                let lo_vals = parse_vector(lo, lo_line)?;
                let hi_vals = parse_vector(hi, hi_line)?;
                check_len(&lo_vals, n, lo_line, "low")?;
                check_len(&hi_vals, n, hi_line, "high")?;
                let low = DiscountFactor::new(lo_vals)
                    .map_err(|e| valid_err(lo_line, e.to_string()))?;
                let high = DiscountFactor::new(hi_vals)
                    .map_err(|e| valid_err(hi_line, e.to_string()))?;
                let env = DiscountEnvelope::new(low, high)
                    .map_err(|e| valid_err(section.line, e.to_string()))?;
                doc.envelopes.insert(name.clone(), env);
            }
            SectionKind::Discount(name) => {
                insert_unique(&mut disc_names, name, section.line)?;
                reject_unknown_keys(section, &["values"])?;
                let (v, line) = single_value(section, "values")?;
                let vals = parse_vector(v, line)?;
                check_len(&vals, n, line, "discount")?;
                let d = DiscountFactor::new(vals).map_err(|e| valid_err(line, e.to_string()))?;
                doc.discounts.insert(name.clone(), d);
            }
            SectionKind::Bond(name) => {
                insert_unique(&mut bond_names, name, section.line)?;
                reject_unknown_keys(section, &["price"])?;
                let (v, line) = single_value(section, "price")?;
                let price = parse_number(v, line)?;
                let b = BondQuote::new(price).map_err(|e| valid_err(line, e.to_string()))?;
                doc.bonds.insert(name.clone(), b);
            }
        }
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# demo
[atoms]
up = 0.5
down = 0.5

[position X]
values = -10, 20

[measure linP]
kind = linear
base = 0.5, 0.5

[measure rob]
kind = robust
scenario = 0.5, 0.5 @ 0.0
scenario = 0.9, 0.1 @ 0.25

[envelope e09_10]
low = 0.9, 0.9
high = 1.0, 1.0

[discount d09]
values = 0.9, 0.9

[bond b09]
price = 0.9
";

    #[test]
    fn parses_a_full_document() {
        let doc = parse_document(GOOD).unwrap();
        assert_eq!(doc.space.size(), 2);
        assert_eq!(doc.space.labels(), &["up".to_string(), "down".to_string()]);
        assert!(doc.positions.contains_key("X"));
        assert!(doc.measures.contains_key("linP"));
        assert!(doc.measures.contains_key("rob"));
        assert!(doc.envelopes.contains_key("e09_10"));
        assert!(doc.discounts.contains_key("d09"));
        assert!(doc.bonds.contains_key("b09"));
    }

    #[test]
    fn bad_probability_sum_is_a_validation_error() {
        let text = "[atoms]\nup = 0.5\ndown = 0.6\n";
        match parse_document(text) {
            Err(DocError::Validation { .. }) => {}
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_a_parse_error() {
        let text = "[atoms]\nup 0.5\n";
        match parse_document(text) {
            Err(DocError::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error at line 2, got {other:?}"),
        }
    }

    #[test]
    fn wrong_vector_length_is_anchored() {
        let text = "[atoms]\nup = 0.5\ndown = 0.5\n\n[position X]\nvalues = 1, 2, 3\n";
        match parse_document(text) {
            Err(DocError::Validation { line: 6, .. }) => {}
            other => panic!("expected validation error at line 6, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let text = "[atoms]\nup = 1.0\n\n[bond b]\nprice = 0.9\nyield = 0.1\n";
        match parse_document(text) {
            Err(DocError::Parse { line: 6, .. }) => {}
            other => panic!("expected parse error at line 6, got {other:?}"),
        }
    }
}
