use crate::evalbench::{iou, Detection};

/// Pools both lists and applies greedy, class-agnostic NMS: boxes are visited
/// by descending score (ties keep list order, `a` first) and a box is dropped
/// when its IoU with any kept box exceeds `iou_thr`.
pub fn decision_fuse(a: &[Detection], b: &[Detection], iou_thr: f64) -> Vec<Detection> {
    let mut pool: Vec<Detection> = a.iter().chain(b).copied().collect();
    pool.sort_by(|x, y| y.score.total_cmp(&x.score));
    let mut kept: Vec<Detection> = Vec::new();
    for d in pool {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_thr) {
            kept.push(d);
        }
    }
    kept
}
