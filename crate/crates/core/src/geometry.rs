//! Box arithmetic and layout post-processing: IoU, NMS, splitting of tall
//! regions and wide lines, and COCO-style mean average precision.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, ContentClass};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    /// Regions taller than `tall_ratio` times their width are split into windows.
    pub tall_ratio: f64,
    /// Lines wider than `wide_ratio` times their height are split into segments.
    pub wide_ratio: f64,
    /// Overlap between consecutive windows, as a fraction of window size.
    pub split_overlap_frac: f64,
    pub nms_iou: f64,
    pub conf_threshold: f64,
    pub max_detections: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            tall_ratio: 2.0,
            wide_ratio: 30.0,
            split_overlap_frac: 0.10,
            nms_iou: 0.2,
            conf_threshold: 0.1,
            max_detections: 500,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tall_ratio.is_nan() || self.tall_ratio <= 1.0 {
            return Err(Error::Config(format!("tall_ratio must be > 1, got {}", self.tall_ratio)));
        }
        if self.wide_ratio.is_nan() || self.wide_ratio <= 1.0 {
            return Err(Error::Config(format!("wide_ratio must be > 1, got {}", self.wide_ratio)));
        }
        if !(0.0..0.5).contains(&self.split_overlap_frac) {
            return Err(Error::Config(format!("split_overlap_frac must be in [0, 0.5), got {}", self.split_overlap_frac)));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::Config(format!("nms_iou must be in (0, 1), got {}", self.nms_iou)));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(Error::Config(format!("conf_threshold must be in [0, 1], got {}", self.conf_threshold)));
        }
        Ok(())
    }
}

/// What a detection refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Region(ContentClass),
    Line,
    Word,
    Char,
}

/// One detector output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub label: Label,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, label: Label, score: f64) -> Self {
        Detection { bbox, label, score }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Detection {
        Detection { bbox: self.bbox.translate(dx, dy), ..*self }
    }
}

/// Intersection over union. Zero for disjoint boxes, one for identical boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = match a.intersection(b) {
        Some(i) => i.area(),
        None => return 0.0,
    };
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Score descending, then y0, then x0.
fn rank(a: &Detection, b: &Detection) -> Ordering {
    b.score.total_cmp(&a.score).then(a.bbox.y0.total_cmp(&b.bbox.y0)).then(a.bbox.x0.total_cmp(&b.bbox.x0))
}

fn suppress(dets: &[Detection], iou_thresh: f64, class_aware: bool) -> Vec<Detection> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| rank(a, b));
    let mut kept: Vec<Detection> = Vec::with_capacity(order.len());
    for d in order {
        let clash = kept.iter().any(|k| (!class_aware || k.label == d.label) && iou(&k.bbox, &d.bbox) > iou_thresh);
        if !clash {
            kept.push(*d);
        }
    }
    kept
}

/// Greedy per-label non-maximum suppression. Output is sorted by score descending.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    suppress(dets, iou_thresh, true)
}

/// Label-agnostic variant of [`nms`]; every detection competes with every other.
pub fn nms_agnostic(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    suppress(dets, iou_thresh, false)
}

/// Region-detector post-processing: confidence floor, NMS, cap on count.
///
/// Returns indices into `dets` of the survivors, in original order.
pub fn filter_region_detections(dets: &[Detection], cfg: &GeometryConfig) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].score >= cfg.conf_threshold).collect();
    idx.sort_by(|&a, &b| rank(&dets[a], &dets[b]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in idx {
        if kept.len() == cfg.max_detections {
            break;
        }
        let d = &dets[i];
        if !kept.iter().any(|&k| dets[k].label == d.label && iou(&dets[k].bbox, &d.bbox) > cfg.nms_iou) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Splits `[start, end)` into windows of length `size` overlapping by
/// `overlap_frac * size`. The last window is shifted back to end at `end`.
fn split_span(start: f64, end: f64, size: f64, overlap_frac: f64) -> Vec<(f64, f64)> {
    let stride = size * (1.0 - overlap_frac);
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let lo = start + i as f64 * stride;
        if lo + size >= end {
            out.push(((end - size).max(start), end));
            break;
        }
        out.push((lo, lo + size));
        i += 1;
    }
    out
}

/// Cuts a region taller than `tall_ratio : 1` into overlapping vertical windows
/// whose height is `width * tall_ratio`.
pub fn split_tall_region(region: &BoundingBox, cfg: &GeometryConfig) -> Vec<BoundingBox> {
    let (w, h) = (region.width(), region.height());
    if h / w <= cfg.tall_ratio {
        return vec![*region];
    }
    split_span(region.y0, region.y1, w * cfg.tall_ratio, cfg.split_overlap_frac)
        .into_iter()
        .map(|(y0, y1)| BoundingBox { y0, y1, ..*region })
        .collect()
}

/// Cuts a line wider than `wide_ratio : 1` into overlapping horizontal segments.
pub fn split_wide_line(line: &BoundingBox, cfg: &GeometryConfig) -> Vec<BoundingBox> {
    let (w, h) = (line.width(), line.height());
    if w / h <= cfg.wide_ratio {
        return vec![*line];
    }
    split_span(line.x0, line.x1, h * cfg.wide_ratio, cfg.split_overlap_frac)
        .into_iter()
        .map(|(x0, x1)| BoundingBox { x0, x1, ..*line })
        .collect()
}

fn reading_order(a: &Detection, b: &Detection) -> Ordering {
    a.bbox.y0.total_cmp(&b.bbox.y0).then(a.bbox.x0.total_cmp(&b.bbox.x0)).then(b.score.total_cmp(&a.score))
}

/// Brings window-local line detections back into region coordinates and
/// suppresses duplicates from overlapping windows. All lines form one class.
pub fn merge_split_lines(per_window: &[(BoundingBox, Vec<Detection>)], cfg: &GeometryConfig) -> Vec<Detection> {
    let all: Vec<Detection> = per_window.iter().flat_map(|(w, dets)| dets.iter().map(move |d| d.translate(w.x0, w.y0))).collect();
    let mut kept = nms_agnostic(&all, cfg.nms_iou);
    kept.sort_by(reading_order);
    kept
}

/// Same as [`merge_split_lines`] but ordered left to right, for word
/// detections gathered from the segments of a split line.
pub fn merge_split_words(per_segment: &[(BoundingBox, Vec<Detection>)], cfg: &GeometryConfig) -> Vec<Detection> {
    let all: Vec<Detection> = per_segment.iter().flat_map(|(w, dets)| dets.iter().map(move |d| d.translate(w.x0, w.y0))).collect();
    let mut kept = nms_agnostic(&all, cfg.nms_iou);
    kept.sort_by(|a, b| a.bbox.x0.total_cmp(&b.bbox.x0).then(reading_order(a, b)));
    kept
}

/// The default COCO threshold ladder 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// A labeled ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// AP per label averaged over thresholds.
    pub per_class: BTreeMap<Label, f64>,
    /// AP per label, one entry per threshold.
    pub per_threshold: BTreeMap<Label, Vec<f64>>,
}

/// 101-point interpolated AP for one label at one IoU threshold.
fn average_precision(preds: &[(usize, Detection)], gts: &BTreeMap<usize, Vec<BoundingBox>>, n_gt: usize, thresh: f64) -> f64 {
    let mut matched: BTreeMap<usize, Vec<bool>> = gts.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(preds.len());
    let mut recall = Vec::with_capacity(preds.len());
    for (k, (scan, det)) in preds.iter().enumerate() {
        if let (Some(boxes), Some(used)) = (gts.get(scan), matched.get_mut(scan)) {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in boxes.iter().enumerate() {
                if used[g] {
                    continue;
                }
                let o = iou(&det.bbox, gt);
                if o >= thresh && best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            if let Some((g, _)) = best {
                used[g] = true;
                tp += 1;
            }
        }
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    // precision envelope, right to left
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        let pos = recall.partition_point(|&x| x < level);
        if pos < precision.len() {
            sum += precision[pos];
        }
    }
    sum / 101.0
}

/// COCO-style mAP over the given IoU thresholds.
///
/// Per label, AP is averaged over thresholds; the result averages over the
/// labels that occur in ground truth. Predictions whose label never appears
/// in ground truth are ignored.
pub fn mean_average_precision(
    preds: &BTreeMap<String, Vec<Detection>>,
    gts: &BTreeMap<String, Vec<GroundTruth>>,
    thresholds: &[f64],
) -> Result<MapReport> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::Config("IoU thresholds must be nonempty and inside (0, 1)".into()));
    }
    if let Some(scan) = preds.keys().find(|k| !gts.contains_key(*k)) {
        return Err(Error::UnknownScan(scan.clone()));
    }
    let scan_ix: BTreeMap<&str, usize> = gts.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let labels: BTreeSet<Label> = gts.values().flatten().map(|g| g.label).collect();

    let mut per_class = BTreeMap::new();
    let mut per_threshold = BTreeMap::new();
    for label in labels {
        let mut gt_boxes: BTreeMap<usize, Vec<BoundingBox>> = BTreeMap::new();
        for (scan, list) in gts {
            let boxes: Vec<BoundingBox> = list.iter().filter(|g| g.label == label).map(|g| g.bbox).collect();
            if !boxes.is_empty() {
                gt_boxes.insert(scan_ix[scan.as_str()], boxes);
            }
        }
        let n_gt: usize = gt_boxes.values().map(Vec::len).sum();
        let mut ranked: Vec<(usize, Detection)> = preds
            .iter()
            .flat_map(|(scan, d)| {
                let i = scan_ix[scan.as_str()];
                d.iter().filter(|d| d.label == label).map(move |d| (i, *d))
            })
            .collect();
        // stable: ties keep scan order, then input order
        ranked.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));
        let aps: Vec<f64> = thresholds.iter().map(|&t| average_precision(&ranked, &gt_boxes, n_gt, t)).collect();
        per_class.insert(label, aps.iter().sum::<f64>() / aps.len() as f64);
        per_threshold.insert(label, aps);
    }
    let map = if per_class.is_empty() { 0.0 } else { per_class.values().sum::<f64>() / per_class.len() as f64 };
    Ok(MapReport { map, per_class, per_threshold })
}
