use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::boxes::{iou, Annotation, BoundingBox, Detection};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Outcome of matching one image's predictions against its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// `(score, is_true_positive)` in descending score order.
    pub labels: Vec<(f64, bool)>,
    /// For each entry of `labels`, the matched ground-truth index.
    pub matched_gt: Vec<Option<usize>>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Predictions in descending score order (stable on ties), each taking the
/// still-unmatched ground truth of highest IoU at or above `iou_thr`.
pub fn match_detections(preds: &[Detection], gts: &[BoundingBox], iou_thr: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut taken = vec![false; gts.len()];
    let mut labels = Vec::with_capacity(preds.len());
    let mut matched_gt = Vec::with_capacity(preds.len());
    for &p in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&preds[p].bbox, gt);
            if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
        }
        labels.push((preds[p].score, best.is_some()));
        matched_gt.push(best.map(|b| b.0));
    }
    let tp = labels.iter().filter(|l| l.1).count();
    MatchResult {
        fp: labels.len() - tp,
        fn_: gts.len() - tp,
        tp,
        labels,
        matched_gt,
    }
}

/// `(P, R)`; each is 0 when its denominator is 0.
pub fn precision_recall(tp: usize, fp: usize, fn_: usize) -> (f64, f64) {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    (ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

/// Single-image, single-class AP.
pub fn average_precision(preds: &[Detection], gts: &[BoundingBox], iou_thr: f64) -> f64 {
    let m = match_detections(preds, gts, iou_thr);
    ap_from_labels(m.labels, gts.len())
}

/// All-point interpolated AP over pooled `(score, tp)` labels.
///
/// Predictions sharing a score enter the curve together. The value is computed
/// with exact integer fractions and rounded once, so it only depends on the
/// rank structure of the scores.
pub fn ap_from_labels(mut labels: Vec<(f64, bool)>, n_gt: usize) -> f64 {
    if n_gt == 0 || labels.is_empty() {
        return 0.0;
    }
    labels.sort_by(|a, b| b.0.total_cmp(&a.0));
    // (cumulative tp, cumulative count) at each distinct-score cut.
    let mut cuts: Vec<(u64, u64)> = Vec::new();
    let (mut tp, mut n) = (0u64, 0u64);
    for (i, &(s, hit)) in labels.iter().enumerate() {
        tp += hit as u64;
        n += 1;
        if labels.get(i + 1).is_none_or(|next| next.0 != s) {
            cuts.push((tp, n));
        }
    }
    // Precision envelope from the right; precisions compared as fractions.
    let mut env = vec![(0u64, 1u64); cuts.len()];
    let mut best = (0u64, 1u64);
    for (k, &c) in cuts.iter().enumerate().rev() {
        if (c.0 as u128) * (best.1 as u128) > (best.0 as u128) * (c.1 as u128) {
            best = c;
        }
        env[k] = best;
    }
    let mut exact = Some(Frac::ZERO);
    let mut approx = 0.0;
    let mut prev_tp = 0;
    for (k, &(tp, _)) in cuts.iter().enumerate() {
        let dtp = tp - prev_tp;
        prev_tp = tp;
        if dtp == 0 {
            continue;
        }
        let (en, ed) = env[k];
        approx += dtp as f64 * en as f64 / ed as f64;
        exact = exact.and_then(|acc| acc.add(Frac::new(dtp as u128 * en as u128, ed as u128)?));
    }
    match exact.and_then(|f| f.mul_den(n_gt as u128)) {
        Some(f) => f.to_f64(),
        None => approx / n_gt as f64,
    }
}

/// Non-negative fraction kept in lowest terms; `None` on overflow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Frac {
    pub num: u128,
    pub den: u128,
}

impl Frac {
    pub const ZERO: Frac = Frac { num: 0, den: 1 };

    pub fn new(num: u128, den: u128) -> Option<Frac> {
        if den == 0 {
            return None;
        }
        let g = gcd(num, den);
        Some(Frac {
            num: num / g,
            den: den / g,
        })
    }

    pub fn add(self, o: Frac) -> Option<Frac> {
        let g = gcd(self.den, o.den);
        let den = (self.den / g).checked_mul(o.den)?;
        let num = self
            .num
            .checked_mul(o.den / g)?
            .checked_add(o.num.checked_mul(self.den / g)?)?;
        Frac::new(num, den)
    }

    pub fn mul_den(self, d: u128) -> Option<Frac> {
        let g = gcd(self.num, d);
        Frac::new(self.num / g, self.den.checked_mul(d / g)?)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// One image's predictions and ground truth.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageEval {
    pub predictions: Vec<Detection>,
    pub ground_truth: Vec<Annotation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Counts and P/R at IoU 0.5, all scores kept.
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(threshold, mAP)` for each requested threshold.
    pub ap_per_threshold: Vec<(f64, f64)>,
    /// Mean over the requested thresholds.
    pub map: f64,
    pub map50: f64,
    pub map50_95: f64,
    pub classes: usize,
}

impl EvalReport {
    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("precision", self.precision.to_string());
        kv("recall", self.recall.to_string());
        kv("tp", self.tp.to_string());
        kv("fp", self.fp.to_string());
        kv("fn", self.fn_.to_string());
        kv("classes", self.classes.to_string());
        kv("map", self.map.to_string());
        kv("map50", self.map50.to_string());
        kv("map50_95", self.map50_95.to_string());
        for (t, ap) in &self.ap_per_threshold {
            kv(&format!("ap@{t:.2}"), ap.to_string());
        }
        s
    }
}

/// Mean over classes (those with ground truth) of AP pooled across images.
pub fn class_map(images: &[ImageEval], iou_thr: f64) -> f64 {
    let classes = gt_classes(images);
    if classes.is_empty() {
        return 0.0;
    }
    classes
        .iter()
        .map(|&c| class_ap(images, c, iou_thr))
        .sum::<f64>()
        / classes.len() as f64
}

fn gt_classes(images: &[ImageEval]) -> BTreeSet<u32> {
    images
        .iter()
        .flat_map(|im| im.ground_truth.iter().map(|a| a.class_id))
        .collect()
}

fn split(im: &ImageEval, class: u32) -> (Vec<Detection>, Vec<BoundingBox>) {
    let p = im
        .predictions
        .iter()
        .filter(|d| d.class_id == class)
        .copied()
        .collect();
    let g = im
        .ground_truth
        .iter()
        .filter(|a| a.class_id == class)
        .map(|a| a.bbox)
        .collect();
    (p, g)
}

fn class_ap(images: &[ImageEval], class: u32, iou_thr: f64) -> f64 {
    let mut labels = Vec::new();
    let mut n_gt = 0;
    for im in images {
        let (p, g) = split(im, class);
        n_gt += g.len();
        labels.extend(match_detections(&p, &g, iou_thr).labels);
    }
    ap_from_labels(labels, n_gt)
}

/// mAP over `thresholds`, plus the fixed 0.5 and 0.50:0.95 summaries.
pub fn map_at(images: &[ImageEval], thresholds: &[f64]) -> EvalReport {
    let ap_per_threshold: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| (t, class_map(images, t)))
        .collect();
    let map = if thresholds.is_empty() {
        0.0
    } else {
        ap_per_threshold.iter().map(|p| p.1).sum::<f64>() / thresholds.len() as f64
    };
    let coco = coco_thresholds();
    let map50_95 = coco.iter().map(|&t| class_map(images, t)).sum::<f64>() / coco.len() as f64;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let classes: BTreeSet<u32> = gt_classes(images)
        .into_iter()
        .chain(
            images
                .iter()
                .flat_map(|im| im.predictions.iter().map(|d| d.class_id)),
        )
        .collect();
    for im in images {
        for &c in &classes {
            let (p, g) = split(im, c);
            let m = match_detections(&p, &g, 0.5);
            tp += m.tp;
            fp += m.fp;
            fn_ += m.fn_;
        }
    }
    let (precision, recall) = precision_recall(tp, fp, fn_);
    EvalReport {
        precision,
        recall,
        tp,
        fp,
        fn_,
        ap_per_threshold,
        map,
        map50: class_map(images, 0.5),
        map50_95,
        classes: gt_classes(images).len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    fn det(b: BoundingBox, s: f64) -> Detection {
        Detection::new(b, s, 0).unwrap()
    }

    #[test]
    fn matching_examples() {
        let gt = bx(0.0, 0.0, 10.0, 10.0);
        // IoU 0.6: (0,0,10,6) covers 60 of 100.
        let m = match_detections(&[det(bx(0.0, 0.0, 10.0, 6.0), 0.5)], &[gt], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));

        let p = [
            det(bx(0.0, 0.0, 10.0, 9.0), 0.8),
            det(bx(0.0, 0.0, 10.0, 10.0), 0.9),
        ];
        let m = match_detections(&p, &[gt], 0.5);
        assert_eq!(m.labels, vec![(0.9, true), (0.8, false)]);

        let m = match_detections(&[], &[gt, gt], 0.5);
        assert_eq!(m.fn_, 2);
    }

    #[test]
    fn iou_ties_go_to_lower_gt_index() {
        let g = [bx(0.0, 0.0, 10.0, 10.0), bx(0.0, 0.0, 10.0, 10.0)];
        let m = match_detections(&[det(g[0], 1.0)], &g, 0.5);
        assert_eq!(m.matched_gt, vec![Some(0)]);
    }

    #[test]
    fn pr_conventions() {
        assert_eq!(precision_recall(1, 0, 0), (1.0, 1.0));
        assert_eq!(precision_recall(1, 1, 0), (0.5, 1.0));
        assert_eq!(precision_recall(0, 0, 3), (0.0, 0.0));
    }

    #[test]
    fn hand_built_curve() {
        let g = [bx(0.0, 0.0, 10.0, 10.0), bx(50.0, 50.0, 60.0, 60.0)];
        let p = [
            det(g[0], 0.9),
            det(bx(100.0, 100.0, 110.0, 110.0), 0.8),
            det(g[1], 0.7),
        ];
        assert_eq!(average_precision(&p, &g, 0.5), 5.0 / 6.0);
        assert_eq!(average_precision(&p[..1], &g[..1], 0.5), 1.0);
        assert_eq!(average_precision(&p[1..2], &g, 0.5), 0.0);
    }

    #[test]
    fn threshold_counting() {
        let gt = bx(0.0, 0.0, 10.0, 10.0);
        let im = ImageEval {
            predictions: vec![det(bx(0.0, 0.0, 10.0, 6.0), 0.9)],
            ground_truth: vec![Annotation {
                bbox: gt,
                class_id: 0,
            }],
        };
        let r = map_at(&[im], &[0.5]);
        assert_eq!(r.map50, 1.0);
        assert!((r.map50_95 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn empty_predictions_are_zero() {
        let im = ImageEval {
            predictions: vec![],
            ground_truth: vec![Annotation {
                bbox: bx(0.0, 0.0, 1.0, 1.0),
                class_id: 0,
            }],
        };
        let r = map_at(&[im], &coco_thresholds());
        assert_eq!(
            (r.map, r.map50, r.map50_95, r.precision, r.recall),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn tied_scores_enter_together() {
        // One TP and one FP at the same score: single cut at P = 1/2, R = 1.
        let labels = vec![(0.5, false), (0.5, true)];
        assert_eq!(ap_from_labels(labels, 1), 0.5);
    }

    #[test]
    fn frac_arithmetic() {
        let a = Frac::new(1, 3)
            .unwrap()
            .add(Frac::new(1, 6).unwrap())
            .unwrap();
        assert_eq!(a, Frac { num: 1, den: 2 });
        assert_eq!(a.mul_den(2).unwrap(), Frac { num: 1, den: 4 });
    }
}
