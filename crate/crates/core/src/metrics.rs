//! Answer-set precision, recall and F1, their macro averages, and answer
//! match.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no questions to evaluate")]
    EmptyDataset,
}

/// Canonical form used for comparison: numbers compare by value, every
/// other string as is.
pub fn normalize_answer(a: &str) -> String {
    if let Ok(i) = a.parse::<i64>() {
        return i.to_string();
    }
    match a.parse::<f64>() {
        Ok(x) if x.is_finite() && !a.chars().any(|c| c.is_alphabetic()) => {
            if x == libm::trunc(x) && libm::fabs(x) < 9.0e15 {
                format!("{}", x as i64)
            } else {
                format!("{x}")
            }
        }
        _ => a.to_string(),
    }
}

pub fn answer_set<S: AsRef<str>>(answers: &[S]) -> BTreeSet<String> {
    answers.iter().map(|a| normalize_answer(a.as_ref())).collect()
}

/// Set precision, recall and F1. Both sets empty scores 1 everywhere; an
/// empty prediction against a nonempty gold scores P = 0 here (see
/// [`macro_metrics`] for the QALD convention).
pub fn prf1(gold: &BTreeSet<String>, predicted: &BTreeSet<String>) -> (f64, f64, f64) {
    if gold.is_empty() && predicted.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let hit = gold.intersection(predicted).count() as f64;
    let p = if predicted.is_empty() { 0.0 } else { hit / predicted.len() as f64 };
    let r = if gold.is_empty() { 0.0 } else { hit / gold.len() as f64 };
    (p, r, wholeset_f1(p, r))
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn wholeset_f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn answer_match(gold: &BTreeSet<String>, predicted: &BTreeSet<String>) -> bool {
    gold == predicted
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: String,
    pub gold: BTreeSet<String>,
    pub predicted: BTreeSet<String>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub answer_match: bool,
}

impl QuestionResult {
    pub fn new(id: impl Into<String>, gold: BTreeSet<String>, predicted: BTreeSet<String>) -> Self {
        let (precision, recall, f1) = prf1(&gold, &predicted);
        QuestionResult {
            id: id.into(),
            answer_match: answer_match(&gold, &predicted),
            gold,
            predicted,
            precision,
            recall,
            f1,
        }
    }

    fn empty_prediction(&self) -> bool {
        self.predicted.is_empty() && !self.gold.is_empty()
    }
}

/// Per-question averages `(P, R, F1)`. In QALD mode an empty prediction
/// against a nonempty gold counts as P = 1; its F1 stays 0 because R = 0.
pub fn macro_metrics(results: &[QuestionResult], qald_mode: bool) -> Result<(f64, f64, f64), MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let n = results.len() as f64;
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for q in results {
        p += if qald_mode && q.empty_prediction() { 1.0 } else { q.precision };
        r += q.recall;
        f += q.f1;
    }
    Ok((p / n, r / n, f / n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub results: Vec<QuestionResult>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Harmonic mean of QALD-mode macro precision and macro recall.
    pub macro_f1_qald: f64,
    pub wholeset_f1: f64,
    pub answer_match_rate: f64,
    pub n_questions: usize,
    pub n_empty_predictions: usize,
}

impl EvalReport {
    /// Aggregates in the order given.
    pub fn from_results(results: Vec<QuestionResult>) -> Result<Self, MetricsError> {
        let (p, r, f) = macro_metrics(&results, false)?;
        let (pq, rq, _) = macro_metrics(&results, true)?;
        let n = results.len();
        Ok(EvalReport {
            macro_precision: p,
            macro_recall: r,
            macro_f1: f,
            macro_f1_qald: wholeset_f1(pq, rq),
            wholeset_f1: wholeset_f1(p, r),
            answer_match_rate: results.iter().filter(|q| q.answer_match).count() as f64 / n as f64,
            n_questions: n,
            n_empty_predictions: results.iter().filter(|q| q.empty_prediction()).count(),
            results,
        })
    }

    /// One header row and one value row, percentages with two decimals.
    pub fn table(&self, label: &str) -> String {
        let cols = ["AM", "Prec.", "Recall", "F1", "Macro F1", "Macro F1 QALD"];
        let vals = [
            self.answer_match_rate,
            self.macro_precision,
            self.macro_recall,
            self.wholeset_f1,
            self.macro_f1,
            self.macro_f1_qald,
        ];
        let first = label.len().max(8);
        let mut head = format!("{:<first$}", "");
        let mut row = format!("{label:<first$}");
        for (c, v) in cols.iter().zip(vals) {
            let w = c.len().max(6);
            head.push_str(&format!("  {c:>w$}"));
            row.push_str(&format!("  {:>w$.2}", 100.0 * v));
        }
        format!("{head}\n{row}\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        answer_set(xs)
    }

    #[test]
    fn boundary_cases() {
        assert_eq!(prf1(&set(&[]), &set(&[])), (1.0, 1.0, 1.0));
        assert_eq!(prf1(&set(&[]), &set(&["a"])), (0.0, 0.0, 0.0));
        assert_eq!(prf1(&set(&["a"]), &set(&[])), (0.0, 0.0, 0.0));
        assert_eq!(prf1(&set(&["a", "b"]), &set(&["a", "b"])), (1.0, 1.0, 1.0));
        let (p, r, f) = prf1(&set(&["a", "b", "c", "d"]), &set(&["a", "b", "e"]));
        assert!((p - 2.0 / 3.0).abs() < 1e-15 && (r - 0.5).abs() < 1e-15 && (f - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn numbers_compare_by_value() {
        assert_eq!(set(&["03", "3.0"]), set(&["3"]));
        assert_eq!(normalize_answer("dbr:A"), "dbr:A");
        assert_eq!(normalize_answer("2.5"), "2.5");
    }

    #[test]
    fn qald_mode_raises_only_precision() {
        let results = [
            QuestionResult::new("1", set(&["a"]), set(&["a"])),
            QuestionResult::new("2", set(&["b"]), set(&["b"])),
            QuestionResult::new("3", set(&["c"]), set(&[])),
        ];
        let (p, r, f) = macro_metrics(&results, true).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        let (p0, r0, f0) = macro_metrics(&results, false).unwrap();
        assert!((p0 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((r, f), (r0, f0));
        assert_eq!(macro_metrics(&[], true), Err(MetricsError::EmptyDataset));
    }

    #[test]
    fn wholeset() {
        assert_eq!(wholeset_f1(1.0, 1.0), 1.0);
        assert_eq!(wholeset_f1(0.5, 0.5), 0.5);
        assert_eq!(wholeset_f1(0.0, 0.0), 0.0);
        assert!((wholeset_f1(0.8311, 0.8304) - 0.83075).abs() < 5e-6);
    }

    #[test]
    fn table_has_all_columns() {
        let r = EvalReport::from_results(vec![QuestionResult::new("1", set(&["a"]), set(&["a"]))]).unwrap();
        let t = r.table("A");
        assert!(t.contains("AM") && t.contains("Recall") && t.contains("100.00"));
    }
}
