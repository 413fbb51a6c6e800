//! Scoring pipeline output against gold transcriptions.

use std::collections::{BTreeMap, HashMap};

use crate::domain::{ContentClass, PageScan};
use crate::lexicon::{non_word_rate, Lexicon, SpellIndex};
use crate::metrics::{cer, cer_decomposition, EvalPair, EvalReport, NonWordSummary};
use crate::{Error, Result};

/// Text of all transcribed regions of one class, in reading order.
pub fn class_text(scan: &PageScan, class: ContentClass) -> Option<String> {
    let mut regions: Vec<_> = scan.regions.iter().filter(|r| r.class == class && r.text.is_some()).collect();
    if regions.is_empty() {
        return None;
    }
    regions.sort_by(|a, b| a.bbox.y0.total_cmp(&b.bbox.y0).then(a.bbox.x0.total_cmp(&b.bbox.x0)));
    Some(regions.iter().map(|r| r.text.as_deref().unwrap_or_default()).collect::<Vec<_>>().join("\n"))
}

/// One pair per (gold scan, text class with gold text). A scan or class
/// missing from the prediction scores against the empty string.
pub fn class_pairs(pred: &[PageScan], gold: &[PageScan]) -> Vec<(ContentClass, EvalPair)> {
    let by_id: HashMap<&str, &PageScan> = pred.iter().map(|s| (s.scan_id.as_str(), s)).collect();
    let mut out = Vec::new();
    for g in gold {
        for class in ContentClass::ALL.into_iter().filter(|c| c.is_text()) {
            let Some(truth) = class_text(g, class) else { continue };
            let predicted = by_id.get(g.scan_id.as_str()).and_then(|p| class_text(p, class)).unwrap_or_default();
            out.push((class, EvalPair::new(predicted, truth, format!("{}/{}", g.scan_id, class))));
        }
    }
    out
}

#[derive(Default)]
pub struct EvalInputs<'a> {
    /// Recognition run on gold layouts, for the CER decomposition.
    pub ocr_on_gold: Option<&'a [PageScan]>,
    pub lexicon: Option<&'a Lexicon>,
    pub spell: Option<&'a SpellIndex>,
}

pub fn evaluate(pred: &[PageScan], gold: &[PageScan], extra: EvalInputs<'_>) -> Result<EvalReport> {
    let labeled = class_pairs(pred, gold);
    if labeled.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let pairs: Vec<EvalPair> = labeled.iter().map(|(_, p)| p.clone()).collect();
    let cer_total = cer(&pairs)?;

    let mut per_class = BTreeMap::new();
    for class in ContentClass::ALL {
        let subset: Vec<EvalPair> = labeled.iter().filter(|(c, _)| *c == class).map(|(_, p)| p.clone()).collect();
        if let Ok(v) = cer(&subset) {
            per_class.insert(class.to_string(), v);
        }
    }

    let (cer_ocr, cer_layout) = match extra.ocr_on_gold {
        Some(ocr) => {
            let ocr_pairs: Vec<EvalPair> = class_pairs(ocr, gold).into_iter().map(|(_, p)| p).collect();
            let d = cer_decomposition(&pairs, &ocr_pairs)?;
            (Some(d.cer_ocr), Some(d.cer_layout))
        }
        None => (None, None),
    };

    let cer_spellchecked = match extra.spell {
        Some(s) => {
            let corrected: Vec<EvalPair> = labeled
                .iter()
                .map(|(c, p)| {
                    let text = if *c == ContentClass::Headline { p.predicted.clone() } else { s.correct_text(&p.predicted) };
                    EvalPair::new(text, p.ground_truth.clone(), p.region_id.clone())
                })
                .collect();
            Some(cer(&corrected)?)
        }
        None => None,
    };

    let non_word = extra.lexicon.map(|lex| {
        let rates: Vec<f64> = pred
            .iter()
            .map(|s| {
                let text: Vec<&str> = s.regions.iter().filter_map(|r| r.text.as_deref()).collect();
                non_word_rate(&text.join("\n"), lex)
            })
            .collect();
        NonWordSummary::from_rates(&rates)
    });

    Ok(EvalReport {
        cer_total,
        cer_ocr,
        cer_layout,
        cer_spellchecked,
        per_class,
        non_word_rate: non_word,
        pairs: pairs.len(),
        ground_truth_chars: pairs.iter().map(|p| p.ground_truth.chars().count()).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoundingBox, ContentRegion};

    fn scan(id: &str, texts: &[(ContentClass, f64, &str)]) -> PageScan {
        PageScan {
            scan_id: id.into(),
            lccn: "sn1".into(),
            date: "1900-01-01".into(),
            edition: 1,
            page_number: 1,
            width_px: 1000,
            height_px: 1000,
            regions: texts
                .iter()
                .enumerate()
                .map(|(i, (class, y, t))| ContentRegion {
                    id: format!("{id}-{i}"),
                    bbox: BoundingBox::new(0.0, *y, 100.0, y + 10.0).unwrap(),
                    class: *class,
                    confidence: 0.9,
                    legibility: None,
                    lines: vec![],
                    text: Some(t.to_string()),
                })
                .collect(),
        }
    }

    #[test]
    fn concatenates_in_reading_order() {
        let s = scan("a", &[(ContentClass::Article, 50.0, "second"), (ContentClass::Article, 10.0, "first")]);
        assert_eq!(class_text(&s, ContentClass::Article).unwrap(), "first\nsecond");
        assert_eq!(class_text(&s, ContentClass::Headline), None);
    }

    #[test]
    fn report_per_class_and_missing_scans() {
        let gold = vec![
            scan("a", &[(ContentClass::Article, 0.0, "abcd"), (ContentClass::Headline, 0.0, "HI")]),
            scan("b", &[(ContentClass::Article, 0.0, "xyz")]),
        ];
        let pred = vec![scan("a", &[(ContentClass::Article, 0.0, "abcx"), (ContentClass::Headline, 0.0, "HI")])];
        let r = evaluate(&pred, &gold, EvalInputs::default()).unwrap();
        assert_eq!(r.pairs, 3);
        assert_eq!(r.ground_truth_chars, 9);
        assert!((r.cer_total - 4.0 / 9.0).abs() < 1e-12);
        assert!((r.per_class["article"] - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(r.per_class["headline"], 0.0);
        assert!(evaluate(&pred, &[], EvalInputs::default()).is_err());
    }

    #[test]
    fn decomposition_with_gold_layout_run() {
        let gold = vec![scan("a", &[(ContentClass::Article, 0.0, "abcdefghij")])];
        let pred = vec![scan("a", &[(ContentClass::Article, 0.0, "abcdefgh")])];
        let ocr = vec![scan("a", &[(ContentClass::Article, 0.0, "abcdefghix")])];
        let r = evaluate(&pred, &gold, EvalInputs { ocr_on_gold: Some(&ocr), ..Default::default() }).unwrap();
        assert!((r.cer_ocr.unwrap() - 0.1).abs() < 1e-12);
        assert!((r.cer_layout.unwrap() - 0.1).abs() < 1e-12);
    }
}
