//! Legibility gating of text regions and the weighted cross-entropy used to
//! train the gate.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ContentRegion, CropRef, LegibilityClass};
use crate::{BoundaryError, Error, Result};

const PROB_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LegibilityConfig {
    /// Loss weights for legible, borderline, illegible.
    pub class_weights: [f64; 3],
    /// Classes whose regions are sent to OCR.
    pub ocr_policy: BTreeSet<LegibilityClass>,
}

impl Default for LegibilityConfig {
    fn default() -> Self {
        LegibilityConfig { class_weights: [2.0, 1.0, 1.0], ocr_policy: [LegibilityClass::Legible, LegibilityClass::Borderline].into() }
    }
}

impl LegibilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("class weights must be positive, got {:?}", self.class_weights)));
        }
        Ok(())
    }
}

/// Image classifier boundary: probabilities over (legible, borderline, illegible).
pub trait LegibilityModel: Send + Sync {
    fn classify(&self, crop: &CropRef) -> Result<[f64; 3], BoundaryError>;
}

pub fn check_probabilities(p: &[f64; 3]) -> Result<()> {
    let ok = p.iter().all(|v| v.is_finite() && *v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= PROB_TOL;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidProbabilities(*p))
    }
}

/// Argmax, with ties resolved toward the more legible class.
pub fn argmax_class(p: &[f64; 3]) -> LegibilityClass {
    let mut best = 0;
    for i in 1..3 {
        if p[i] > p[best] {
            best = i;
        }
    }
    LegibilityClass::ALL[best]
}

/// Annotation contract: share of words readable without context.
pub fn class_from_readable_fraction(frac: f64) -> LegibilityClass {
    if frac > 0.95 {
        LegibilityClass::Legible
    } else if frac >= 0.5 {
        LegibilityClass::Borderline
    } else {
        LegibilityClass::Illegible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDiagnostic {
    pub region_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GateOutcome {
    pub to_ocr: Vec<ContentRegion>,
    pub skipped: Vec<ContentRegion>,
    pub diagnostics: Vec<GateDiagnostic>,
}

/// Classifies text regions and splits them into those to transcribe and
/// those to skip. Input order is kept within each side. A region whose
/// classification fails is skipped with a diagnostic and left unlabeled.
pub fn gate(regions: Vec<ContentRegion>, scan_id: &str, model: &dyn LegibilityModel, cfg: &LegibilityConfig) -> Result<GateOutcome> {
    if let Some(r) = regions.iter().find(|r| !r.class.is_text()) {
        return Err(Error::NonTextRegion(r.id.clone()));
    }
    let verdicts: Vec<std::result::Result<LegibilityClass, String>> = regions
        .par_iter()
        .map(|r| {
            let p = model.classify(&CropRef::new(scan_id, r.bbox)).map_err(|e| e.to_string())?;
            check_probabilities(&p).map_err(|e| e.to_string())?;
            Ok(argmax_class(&p))
        })
        .collect();
    let mut out = GateOutcome::default();
    for (mut region, verdict) in regions.into_iter().zip(verdicts) {
        match verdict {
            Ok(class) => {
                region.legibility = Some(class);
                if cfg.ocr_policy.contains(&class) {
                    out.to_ocr.push(region);
                } else {
                    out.skipped.push(region);
                }
            }
            Err(message) => {
                out.diagnostics.push(GateDiagnostic { region_id: region.id.clone(), message });
                region.legibility = None;
                out.skipped.push(region);
            }
        }
    }
    Ok(out)
}

/// `-weights[true] * ln p[true]`.
pub fn weighted_cross_entropy(p: &[f64; 3], truth: LegibilityClass, weights: &[f64; 3]) -> Result<f64> {
    check_probabilities(p)?;
    let pt = p[truth.index()];
    if pt == 0.0 {
        return Err(Error::InfiniteLoss);
    }
    Ok(-weights[truth.index()] * pt.ln())
}

/// Confusion counts indexed `[truth][prediction]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn get(&self, truth: LegibilityClass, pred: LegibilityClass) -> u64 {
        self.counts[truth.index()][pred.index()]
    }

    /// Legible texts that would be dropped.
    pub fn legible_as_illegible(&self) -> u64 {
        self.get(LegibilityClass::Legible, LegibilityClass::Illegible)
    }

    /// Illegible texts that would be transcribed as clean.
    pub fn illegible_as_legible(&self) -> u64 {
        self.get(LegibilityClass::Illegible, LegibilityClass::Legible)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn legibility_confusion(preds: &[LegibilityClass], truth: &[LegibilityClass]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::LengthMismatch { left: preds.len(), right: truth.len() });
    }
    let mut m = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(truth) {
        m.counts[t.index()][p.index()] += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoundingBox, ContentClass};
    use LegibilityClass::*;

    struct Table(Vec<(f64, [f64; 3])>);

    impl LegibilityModel for Table {
        fn classify(&self, crop: &CropRef) -> Result<[f64; 3], BoundaryError> {
            self.0.iter().find(|(x, _)| *x == crop.bbox.x0).map(|(_, p)| *p).ok_or_else(|| BoundaryError::new("model unavailable"))
        }
    }

    fn region(x: f64) -> ContentRegion {
        ContentRegion {
            id: format!("r{x}"),
            bbox: BoundingBox::new(x, 0.0, x + 1.0, 1.0).unwrap(),
            class: ContentClass::Article,
            confidence: 0.9,
            legibility: None,
            lines: vec![],
            text: None,
        }
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_class(&[0.9, 0.05, 0.05]), Legible);
        assert_eq!(argmax_class(&[0.4, 0.4, 0.2]), Legible);
        assert_eq!(argmax_class(&[0.2, 0.4, 0.4]), Borderline);
        assert_eq!(argmax_class(&[0.1, 0.2, 0.7]), Illegible);
    }

    #[test]
    fn gate_partitions_in_order() {
        let model = Table(vec![
            (0.0, [0.9, 0.05, 0.05]),
            (1.0, [0.1, 0.2, 0.7]),
            (2.0, [0.4, 0.4, 0.2]),
            (3.0, [0.2, 0.6, 0.2]),
            (5.0, [0.5, 0.6, 0.2]),
        ]);
        let regions: Vec<_> = (0..6).map(|i| region(i as f64)).collect();
        let out = gate(regions, "s", &model, &LegibilityConfig::default()).unwrap();
        let ids = |v: &[ContentRegion]| v.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&out.to_ocr), vec!["r0", "r2", "r3"]);
        assert_eq!(ids(&out.skipped), vec!["r1", "r4", "r5"]);
        assert_eq!(out.skipped[0].legibility, Some(Illegible));
        assert_eq!(out.skipped[1].legibility, None);
        assert_eq!(out.diagnostics.len(), 2);
        assert_eq!(out.diagnostics[0].region_id, "r4");
        assert!(out.diagnostics[1].message.contains("invalid probability"));
    }

    #[test]
    fn gate_rejects_non_text() {
        let mut r = region(0.0);
        r.class = ContentClass::Ad;
        assert!(matches!(gate(vec![r], "s", &Table(vec![]), &LegibilityConfig::default()), Err(Error::NonTextRegion(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        let w = LegibilityConfig::default().class_weights;
        assert_eq!(weighted_cross_entropy(&[1.0, 0.0, 0.0], Legible, &w).unwrap(), 0.0);
        let inv_e = 1.0 / std::f64::consts::E;
        let rest = (1.0 - inv_e) / 2.0;
        assert!((weighted_cross_entropy(&[inv_e, rest, rest], Legible, &w).unwrap() - 2.0).abs() < 1e-12);
        assert!((weighted_cross_entropy(&[rest, inv_e, rest], Borderline, &w).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(weighted_cross_entropy(&[1.0, 0.0, 0.0], Illegible, &w), Err(Error::InfiniteLoss)));
        assert!(weighted_cross_entropy(&[0.5, 0.5, 0.5], Legible, &w).is_err());
    }

    #[test]
    fn confusion_examples() {
        let m = legibility_confusion(&[Legible, Borderline, Illegible], &[Legible, Borderline, Illegible]).unwrap();
        assert_eq!(m.counts, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        assert_eq!(legibility_confusion(&[], &[]).unwrap(), ConfusionMatrix::default());
        assert!(legibility_confusion(&[Legible], &[]).is_err());
    }

    #[test]
    fn labeling_contract() {
        assert_eq!(class_from_readable_fraction(0.96), Legible);
        assert_eq!(class_from_readable_fraction(0.95), Borderline);
        assert_eq!(class_from_readable_fraction(0.5), Borderline);
        assert_eq!(class_from_readable_fraction(0.49), Illegible);
    }

    #[test]
    fn weights_must_be_positive() {
        let cfg = LegibilityConfig { class_weights: [2.0, 0.0, 1.0], ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
