//! Evaluation: exact-match accuracy and micro-averaged labeled-bracket F1
//! over trees, plus binary classification accuracy.
//!
//! Both tree metrics normalize their inputs first — binarization artifacts
//! are undone and collapsed chains expanded — so they can be fed either
//! original-form or chart-form trees.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::treebank::{debinarize, expand_unary, labeled_spans, Label, ParseTree};

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub exact_match: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_utterances: usize,
    pub gold_spans: usize,
    pub pred_spans: usize,
    pub matched_spans: usize,
    /// 0-based indices of utterances with no usable prediction.
    pub failures: Vec<usize>,
}

impl EvalReport {
    /// Machine-readable one-line-per-field block.
    pub fn key_values(&self) -> String {
        format!(
            "exact_match={}\nprecision={}\nrecall={}\nf1={}\nutterances={}\ngold_spans={}\npred_spans={}\nmatched_spans={}\nfailures={}\n",
            self.exact_match,
            self.precision,
            self.recall,
            self.f1,
            self.n_utterances,
            self.gold_spans,
            self.pred_spans,
            self.matched_spans,
            self.failures.len()
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "utterances      {:>8}", self.n_utterances)?;
        writeln!(f, "exact match     {:>8.4}", self.exact_match)?;
        writeln!(f, "precision       {:>8.4}", self.precision)?;
        writeln!(f, "recall          {:>8.4}", self.recall)?;
        writeln!(f, "labeled F1      {:>8.4}", self.f1)?;
        writeln!(
            f,
            "spans           {:>8} gold / {} predicted / {} matched",
            self.gold_spans, self.pred_spans, self.matched_spans
        )?;
        write!(f, "parse failures  {:>8}", self.failures.len())
    }
}

fn has_dummy(t: &ParseTree) -> bool {
    t.label == Label::Dummy || t.children.iter().any(has_dummy)
}

/// Undoes binarization (when present) and expands collapsed chains.
fn normalize(t: &ParseTree) -> Result<ParseTree> {
    let t = if has_dummy(t) { debinarize(t)? } else { t.clone() };
    Ok(expand_unary(&t))
}

/// Fraction of aligned pairs whose normalized trees are identical.
pub fn exact_match(preds: &[ParseTree], golds: &[ParseTree]) -> Result<f64> {
    if preds.len() != golds.len() {
        return Err(Error::Eval(format!(
            "length mismatch: {} predictions vs {} golds",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (p, g) in preds.iter().zip(golds) {
        let g = normalize(g)?;
        if normalize(p).map(|p| p == g).unwrap_or(false) {
            hits += 1;
        }
    }
    Ok(hits as f64 / preds.len() as f64)
}

fn span_counts(t: &ParseTree) -> HashMap<(usize, usize, String), usize> {
    let mut out = HashMap::new();
    for s in labeled_spans(t) {
        *out.entry((s.start, s.end, s.label)).or_insert(0) += 1;
    }
    out
}

fn f1_from_counts(matched: usize, pred: usize, gold: usize) -> (f64, f64, f64) {
    let p = if pred == 0 { 0.0 } else { matched as f64 / pred as f64 };
    let r = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Micro-averaged labeled-bracket precision/recall/F1: per-utterance multiset
/// intersection of labeled spans (chains flattened, Dummy excluded, root
/// included), with counts summed over the corpus before dividing.
pub fn labeled_f1(preds: &[ParseTree], golds: &[ParseTree]) -> Result<(f64, f64, f64)> {
    if preds.len() != golds.len() {
        return Err(Error::Eval(format!(
            "length mismatch: {} predictions vs {} golds",
            preds.len(),
            golds.len()
        )));
    }
    let mut matched = 0usize;
    let mut pred_total = 0usize;
    let mut gold_total = 0usize;
    for (p, g) in preds.iter().zip(golds) {
        let gc = span_counts(&normalize(g)?);
        gold_total += gc.values().sum::<usize>();
        let Ok(p) = normalize(p) else { continue };
        let pc = span_counts(&p);
        pred_total += pc.values().sum::<usize>();
        for (k, &n) in &pc {
            matched += n.min(gc.get(k).copied().unwrap_or(0));
        }
    }
    Ok(f1_from_counts(matched, pred_total, gold_total))
}

/// Fraction of equal aligned booleans.
pub fn disamb_accuracy(preds: &[bool], labels: &[bool]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Eval(format!(
            "length mismatch: {} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Full corpus evaluation; `None` predictions (parse failures) count against
/// exact match and contribute no predicted spans.
pub fn evaluate(preds: &[Option<ParseTree>], golds: &[ParseTree]) -> Result<EvalReport> {
    if preds.len() != golds.len() {
        return Err(Error::Eval(format!(
            "length mismatch: {} predictions vs {} golds",
            preds.len(),
            golds.len()
        )));
    }
    let mut report = EvalReport { n_utterances: golds.len(), ..Default::default() };
    let mut em_hits = 0usize;
    for (idx, (p, g)) in preds.iter().zip(golds).enumerate() {
        let g = normalize(g)?;
        let gc = span_counts(&g);
        report.gold_spans += gc.values().sum::<usize>();
        let normalized = p.as_ref().and_then(|p| normalize(p).ok());
        let Some(p) = normalized else {
            report.failures.push(idx);
            continue;
        };
        if p == g {
            em_hits += 1;
        }
        let pc = span_counts(&p);
        report.pred_spans += pc.values().sum::<usize>();
        for (k, &n) in &pc {
            report.matched_spans += n.min(gc.get(k).copied().unwrap_or(0));
        }
    }
    if !golds.is_empty() {
        report.exact_match = em_hits as f64 / golds.len() as f64;
    }
    let (p, r, f1) = f1_from_counts(report.matched_spans, report.pred_spans, report.gold_spans);
    report.precision = p;
    report.recall = r;
    report.f1 = f1;
    Ok(report)
}
