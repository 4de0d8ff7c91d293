//! Pairwise clustering quality.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QualityReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Story size to number of predicted stories of that size.
    pub story_sizes: BTreeMap<usize, usize>,
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pairwise precision, recall and F of `assignment` against `truth`, over
/// the snippets in `truth`. With no predicted pairs precision is 1; with no
/// true pairs recall is 1.
pub fn evaluate(
    assignment: &BTreeMap<String, String>,
    truth: &BTreeMap<String, String>,
) -> Result<QualityReport> {
    let missing: Vec<String> = truth
        .keys()
        .filter(|id| !assignment.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAssignment(missing));
    }
    let mut predicted: HashMap<&str, u64> = HashMap::new();
    let mut actual: HashMap<&str, u64> = HashMap::new();
    let mut cells: HashMap<(&str, &str), u64> = HashMap::new();
    for (id, t) in truth {
        let a = assignment[id].as_str();
        *predicted.entry(a).or_default() += 1;
        *actual.entry(t.as_str()).or_default() += 1;
        *cells.entry((a, t.as_str())).or_default() += 1;
    }
    let pred_pairs: u64 = predicted.values().map(|n| pairs(*n)).sum();
    let true_pairs: u64 = actual.values().map(|n| pairs(*n)).sum();
    let both: u64 = cells.values().map(|n| pairs(*n)).sum();
    let precision = if pred_pairs == 0 {
        1.0
    } else {
        both as f64 / pred_pairs as f64
    };
    let recall = if true_pairs == 0 {
        1.0
    } else {
        both as f64 / true_pairs as f64
    };
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let mut story_sizes = BTreeMap::new();
    for n in predicted.values() {
        *story_sizes.entry(*n as usize).or_default() += 1;
    }
    Ok(QualityReport {
        precision,
        recall,
        f_measure,
        story_sizes,
    })
}

/// Reads a two-or-more column CSV with a header; `key_col` and `label_col`
/// select the columns by name.
pub fn read_labels<R: Read>(
    input: R,
    key_col: &str,
    label_cols: &[&str],
) -> Result<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let key =
        col(key_col).ok_or_else(|| Error::Validation(format!("missing column '{key_col}'")))?;
    let labels: Vec<usize> = label_cols
        .iter()
        .map(|c| col(c).ok_or_else(|| Error::Validation(format!("missing column '{c}'"))))
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        let label: Vec<&str> = labels.iter().map(|c| rec.get(*c).unwrap_or("")).collect();
        out.insert(rec.get(key).unwrap_or("").to_string(), label.join("/"));
    }
    Ok(out)
}

/// Ground truth as written by the generator (`snippet_id,story`).
pub fn read_truth<R: Read>(input: R) -> Result<BTreeMap<String, String>> {
    read_labels(input, "snippet_id", &["story"])
}

/// Snippet assignments from a stories dump: the aligned story when the
/// column is present, otherwise the per-source cluster.
pub fn read_story_assignment<R: Read>(input: R) -> Result<BTreeMap<String, String>> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let header = text.lines().next().unwrap_or("");
    if header.split(',').any(|h| h.trim() == "aligned_story_id") {
        read_labels(text.as_bytes(), "snippet_id", &["aligned_story_id"])
    } else {
        read_labels(text.as_bytes(), "snippet_id", &["source", "cluster_id"])
    }
}
