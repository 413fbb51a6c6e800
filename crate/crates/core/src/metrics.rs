//! Text-accuracy metrics: Levenshtein distance, character error rate and its
//! split into recognition versus layout error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::{Error, Result};

/// Edit distance over Unicode scalar values (insert, delete, substitute; unit cost).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

pub fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// A prediction aligned to its transcription.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub predicted: String,
    pub ground_truth: String,
    pub region_id: String,
}

impl EvalPair {
    pub fn new(predicted: impl Into<String>, ground_truth: impl Into<String>, region_id: impl Into<String>) -> Self {
        EvalPair { predicted: predicted.into(), ground_truth: ground_truth.into(), region_id: region_id.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CerOptions {
    /// Apply NFC normalization to both sides before comparing.
    pub nfc: bool,
}

/// Summed edit distance and summed ground-truth length over a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CerTotals {
    pub edits: usize,
    pub gt_chars: usize,
}

impl CerTotals {
    pub fn rate(&self) -> Result<f64> {
        if self.gt_chars == 0 {
            return Err(Error::EmptyGroundTruth);
        }
        Ok(self.edits as f64 / self.gt_chars as f64)
    }
}

pub fn cer_totals(pairs: &[EvalPair], opts: CerOptions) -> CerTotals {
    let mut t = CerTotals::default();
    for p in pairs {
        let (pred, gt): (Vec<char>, Vec<char>) = if opts.nfc {
            (p.predicted.nfc().collect(), p.ground_truth.nfc().collect())
        } else {
            (p.predicted.chars().collect(), p.ground_truth.chars().collect())
        };
        t.edits += levenshtein_chars(&pred, &gt);
        t.gt_chars += gt.len();
    }
    t
}

/// Corpus-level CER: summed distances over summed ground-truth lengths.
pub fn cer(pairs: &[EvalPair]) -> Result<f64> {
    cer_totals(pairs, CerOptions::default()).rate()
}

pub fn cer_with(pairs: &[EvalPair], opts: CerOptions) -> Result<f64> {
    cer_totals(pairs, opts).rate()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CerDecomposition {
    pub cer_total: f64,
    pub cer_ocr: f64,
    pub cer_layout: f64,
    /// Set when recognition-only CER exceeded end-to-end CER and the layout share was clamped to zero.
    pub clamped: bool,
}

/// Splits end-to-end CER into the part recognition alone explains (OCR run on
/// gold layouts) and the residual attributed to layout and line detection.
pub fn cer_decomposition(end_to_end: &[EvalPair], ocr_on_gold_layout: &[EvalPair]) -> Result<CerDecomposition> {
    let total = cer_totals(end_to_end, CerOptions::default());
    let ocr = cer_totals(ocr_on_gold_layout, CerOptions::default());
    if total.gt_chars != ocr.gt_chars {
        return Err(Error::CorpusMismatch { left: total.gt_chars, right: ocr.gt_chars });
    }
    Ok(decompose(total.rate()?, ocr.rate()?))
}

pub fn decompose(cer_total: f64, cer_ocr: f64) -> CerDecomposition {
    let residual = cer_total - cer_ocr;
    CerDecomposition { cer_total, cer_ocr, cer_layout: residual.max(0.0), clamped: residual < 0.0 }
}

/// Summary statistics of per-document non-word rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonWordSummary {
    pub documents: usize,
    pub mean: f64,
    pub median: f64,
}

impl NonWordSummary {
    pub fn from_rates(rates: &[f64]) -> NonWordSummary {
        if rates.is_empty() {
            return NonWordSummary { documents: 0, mean: 0.0, median: 0.0 };
        }
        let mut sorted = rates.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        NonWordSummary { documents: n, mean: sorted.iter().sum::<f64>() / n as f64, median }
    }
}

/// The report emitted by `pipeline eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cer_total: f64,
    pub cer_ocr: Option<f64>,
    pub cer_layout: Option<f64>,
    pub cer_spellchecked: Option<f64>,
    pub per_class: BTreeMap<String, f64>,
    pub non_word_rate: Option<NonWordSummary>,
    pub pairs: usize,
    pub ground_truth_chars: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
        // scalar values, not bytes
        assert_eq!(levenshtein("café", "cafe"), 1);
    }

    #[test]
    fn cer_examples() {
        assert_eq!(cer(&[EvalPair::new("abc", "abc", "r")]).unwrap(), 0.0);
        assert!((cer(&[EvalPair::new("abd", "abc", "r")]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(cer(&[EvalPair::new("x", "", "r")]), Err(Error::EmptyGroundTruth)));
        assert!(matches!(cer(&[]), Err(Error::EmptyGroundTruth)));
        // corpus level, not mean of per-pair rates
        let pairs = [EvalPair::new("a", "b", "1"), EvalPair::new("abcd", "abcd", "2")];
        assert!((cer(&pairs).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn nfc_flag() {
        let composed = "caf\u{e9}";
        let decomposed = "cafe\u{301}";
        let pair = [EvalPair::new(decomposed, composed, "r")];
        assert!(cer(&pair).unwrap() > 0.0);
        assert_eq!(cer_with(&pair, CerOptions { nfc: true }).unwrap(), 0.0);
    }

    #[test]
    fn decomposition_examples() {
        let pairs = [EvalPair::new("abd", "abc", "r")];
        let d = cer_decomposition(&pairs, &pairs).unwrap();
        assert_eq!(d.cer_layout, 0.0);
        assert!(!d.clamped);

        let d = decompose(0.051, 0.043);
        assert!((d.cer_layout - 0.008).abs() < 1e-12);

        let d = decompose(0.03, 0.04);
        assert_eq!(d.cer_layout, 0.0);
        assert!(d.clamped);

        let other = [EvalPair::new("abd", "abcd", "r")];
        assert!(matches!(cer_decomposition(&pairs, &other), Err(Error::CorpusMismatch { .. })));
    }

    #[test]
    fn non_word_summary() {
        let s = NonWordSummary::from_rates(&[0.3, 0.1, 0.2, 0.4]);
        assert_eq!(s.documents, 4);
        assert!((s.median - 0.25).abs() < 1e-12);
        assert!((s.mean - 0.25).abs() < 1e-12);
    }
}
