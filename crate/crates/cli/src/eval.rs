//! Detection evaluation over prediction and ground-truth directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use hetfuse::evalbench::{
    map_at, read_annotations, read_predictions, BoxFormat, EvalReport, ImageEval,
};
use serde::Serialize;

use crate::pairs::list_by_stem;

pub const REPORT_TXT: &str = "eval_report.txt";
pub const REPORT_JSON: &str = "eval_report.json";
pub const PER_IMAGE_TXT: &str = "eval_per_image.txt";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalOutput {
    pub format: String,
    pub thresholds: Vec<f64>,
    pub aggregate: EvalReport,
    pub per_image: BTreeMap<String, EvalReport>,
}

/// Scores every `*.txt` prediction file against the ground truth file with
/// the same stem. Ground truth without predictions counts as an empty
/// prediction list; predictions without ground truth are an error.
pub fn cmd_eval(
    pred_dir: &Path,
    gt_dir: &Path,
    format: BoxFormat,
    thresholds: &[f64],
    out_dir: &Path,
) -> Result<EvalOutput> {
    if thresholds.is_empty() || thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        bail!("thresholds must be a non-empty list in (0, 1]");
    }
    let preds = list_by_stem(pred_dir, &["txt"])?;
    let gts = list_by_stem(gt_dir, &["txt"])?;
    let orphans: Vec<&str> = preds
        .keys()
        .filter(|s| !gts.contains_key(*s))
        .map(String::as_str)
        .collect();
    if !orphans.is_empty() {
        bail!(
            "no ground truth for prediction files: {}",
            orphans.join(", ")
        );
    }

    let mut images = Vec::with_capacity(gts.len());
    let mut per_image = BTreeMap::new();
    for (stem, gt_path) in &gts {
        let ground_truth = read_annotations(gt_path, format)?;
        let predictions = match preds.get(stem) {
            Some(p) => read_predictions(p, format)?,
            None => Vec::new(),
        };
        let im = ImageEval {
            predictions,
            ground_truth,
        };
        per_image.insert(stem.clone(), map_at(std::slice::from_ref(&im), thresholds));
        images.push(im);
    }
    let out = EvalOutput {
        format: format.to_string(),
        thresholds: thresholds.to_vec(),
        aggregate: map_at(&images, thresholds),
        per_image,
    };

    std::fs::create_dir_all(out_dir)?;
    let mut s = format!("format={}\nimages={}\n", out.format, images.len());
    s.push_str(&out.aggregate.to_key_values());
    std::fs::write(out_dir.join(REPORT_TXT), s)?;
    let mut s = String::from("# image tp fp fn precision recall map50 map50_95\n");
    for (stem, r) in &out.per_image {
        let _ = writeln!(
            s,
            "{stem} {} {} {} {} {} {} {}",
            r.tp, r.fp, r.fn_, r.precision, r.recall, r.map50, r.map50_95
        );
    }
    std::fs::write(out_dir.join(PER_IMAGE_TXT), s)?;
    std::fs::write(
        out_dir.join(REPORT_JSON),
        serde_json::to_string_pretty(&out)? + "\n",
    )?;
    Ok(out)
}
