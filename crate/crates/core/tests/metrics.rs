use hetfuse::evalbench::{
    average_precision, coco_thresholds, iou, map_at, match_detections, Annotation, BoundingBox,
    Detection, ImageEval, TimingReport,
};
use proptest::prelude::*;

/// Exact non-negative fraction in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Q(u128, u128);

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Q {
    fn new(n: u128, d: u128) -> Q {
        let g = gcd(n, d).max(1);
        Q(n / g, d / g)
    }
    fn add(self, o: Q) -> Q {
        Q::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    fn mul(self, o: Q) -> Q {
        Q::new(self.0 * o.0, self.1 * o.1)
    }
    fn ge(self, o: Q) -> bool {
        self.0 * o.1 >= o.0 * self.1
    }
    fn to_f64(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

fn oracle_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
    let h = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
    let inter = w * h;
    let union =
        (a.xmax - a.xmin) * (a.ymax - a.ymin) + (b.xmax - b.xmin) * (b.ymax - b.ymin) - inter;
    inter / union
}

/// Greedy matching of predictions already in descending score order.
fn oracle_tp(sorted: &[Detection], gts: &[BoundingBox], thr: f64) -> Vec<bool> {
    let mut used = vec![false; gts.len()];
    sorted
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                let v = oracle_iou(&p.bbox, g);
                if used[j] || v < thr {
                    continue;
                }
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, _)) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// PR table over every distinct score cut point, then all-point
/// interpolation with the running-max envelope, all in exact fractions.
fn oracle_ap(preds: &[Detection], gts: &[BoundingBox], thr: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut sorted = preds.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let tp = oracle_tp(&sorted, gts, thr);
    let mut cuts: Vec<f64> = sorted.iter().map(|d| d.score).collect();
    cuts.dedup();
    let table: Vec<(Q, Q)> = cuts
        .iter()
        .map(|&c| {
            let kept = sorted.iter().filter(|d| d.score >= c).count() as u128;
            let hits = sorted
                .iter()
                .zip(&tp)
                .filter(|(d, &t)| d.score >= c && t)
                .count() as u128;
            (Q::new(hits, gts.len() as u128), Q::new(hits, kept))
        })
        .collect();
    let mut ap = Q(0, 1);
    let mut prev_r = Q(0, 1);
    for (k, &(r, _)) in table.iter().enumerate() {
        if r == prev_r {
            continue;
        }
        let env = table[k..]
            .iter()
            .filter(|(rj, _)| rj.ge(r))
            .map(|&(_, p)| p)
            .fold(Q(0, 1), |m, p| if p.ge(m) { p } else { m });
        let dr = Q::new(r.0 * prev_r.1 - prev_r.0 * r.1, r.1 * prev_r.1);
        ap = ap.add(dr.mul(env));
        prev_r = r;
    }
    ap.to_f64()
}

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (0u8..8, 0u8..8, 1u8..6, 1u8..6).prop_map(|(x, y, w, h)| {
        BoundingBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap()
    })
}

fn arb_instance() -> impl Strategy<Value = (Vec<Detection>, Vec<BoundingBox>)> {
    (0usize..=10).prop_flat_map(|n| {
        (0..=n).prop_flat_map(move |k| {
            (
                prop::collection::vec((arb_box(), 1u8..6), k),
                prop::collection::vec(arb_box(), n - k),
            )
                .prop_map(|(p, g)| {
                    let preds = p
                        .into_iter()
                        .map(|(b, s)| Detection::new(b, s as f64 / 5.0, 0).unwrap())
                        .collect();
                    (preds, g)
                })
        })
    })
}

fn as_images(preds: &[Detection], gts: &[BoundingBox]) -> Vec<ImageEval> {
    vec![ImageEval {
        predictions: preds.to_vec(),
        ground_truth: gts
            .iter()
            .map(|&bbox| Annotation { bbox, class_id: 0 })
            .collect(),
    }]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn ap_equals_exhaustive_oracle((preds, gts) in arb_instance(), thr in prop::sample::select(vec![0.3, 0.5, 0.75])) {
        prop_assert_eq!(average_precision(&preds, &gts, thr), oracle_ap(&preds, &gts, thr));
    }

    #[test]
    fn ap_depends_only_on_score_rank((preds, gts) in arb_instance()) {
        let squashed: Vec<Detection> = preds
            .iter()
            .map(|d| Detection::new(d.bbox, (d.score * 3.0).exp() / 30.0, d.class_id).unwrap())
            .collect();
        prop_assert_eq!(average_precision(&preds, &gts, 0.5), average_precision(&squashed, &gts, 0.5));
    }

    #[test]
    fn coco_average_never_exceeds_map50((preds, gts) in arb_instance()) {
        let r = map_at(&as_images(&preds, &gts), &coco_thresholds());
        prop_assert!(r.map50_95 <= r.map50 + 1e-9);
        prop_assert!((0.0..=1.0).contains(&r.precision) && (0.0..=1.0).contains(&r.recall));
        if r.tp + r.fp > 0 {
            prop_assert_eq!(r.precision, r.tp as f64 / (r.tp + r.fp) as f64);
        }
    }

    #[test]
    fn matching_is_one_to_one((preds, gts) in arb_instance()) {
        let m = match_detections(&preds, &gts, 0.5);
        let mut seen: Vec<usize> = m.matched_gt.iter().flatten().copied().collect();
        let hits = seen.len();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), hits);
        prop_assert_eq!(m.tp, hits);
        prop_assert_eq!(m.tp + m.fp, preds.len());
        prop_assert_eq!(m.tp + m.fn_, gts.len());
    }

    #[test]
    fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let v = iou(&a, &b);
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(iou(&a, &a), 1.0);
        prop_assert!((v - oracle_iou(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn timing_identities(a in 0.0f64..50.0, b in 1e-6f64..50.0, c in 0.0f64..50.0) {
        let t = TimingReport::from_stages(a, b, c).unwrap();
        prop_assert!((t.latency - (a + b + c)).abs() <= 1e-9);
        prop_assert!((t.fps - 1000.0 / t.latency).abs() <= 1e-6);
    }
}

#[test]
fn hand_curve_and_iou_third() {
    let b = |x0: f64, y0: f64, x1: f64, y1: f64| BoundingBox::new(x0, y0, x1, y1).unwrap();
    let gts = [b(0.0, 0.0, 10.0, 10.0), b(20.0, 20.0, 30.0, 30.0)];
    let preds = [
        Detection::new(gts[0], 0.9, 0).unwrap(),
        Detection::new(b(50.0, 50.0, 60.0, 60.0), 0.8, 0).unwrap(),
        Detection::new(gts[1], 0.7, 0).unwrap(),
    ];
    assert_eq!(average_precision(&preds, &gts, 0.5), 5.0 / 6.0);
    assert_eq!(oracle_ap(&preds, &gts, 0.5), 5.0 / 6.0);
    assert_eq!(
        iou(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 0.0, 15.0, 10.0)),
        1.0 / 3.0
    );
}

#[test]
fn latency_row_2_08_ms() {
    let t = TimingReport::from_stages(0.5, 1.5, 0.08).unwrap();
    assert!((t.latency - 2.08).abs() < 1e-12);
    assert!((t.fps - 480.77).abs() < 0.005);
    // Reported as 480.3 FPS for a 2.08 ms latency.
    assert!((t.fps - 480.3).abs() <= 1.0);
}
