//! Line-oriented box files: `class_id a b c d [score]`, where `a b c d` is
//! `xmin ymin xmax ymax` (voc) or `xc yc w h` (coco_center). Blank lines and
//! lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::boxes::{Annotation, BoundingBox, Detection};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxFormat {
    Voc,
    CocoCenter,
}

impl FromStr for BoxFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "voc" => Ok(Self::Voc),
            "coco_center" | "coco" => Ok(Self::CocoCenter),
            other => Err(Error::InvalidConfig(format!(
                "unknown box format `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for BoxFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Voc => "voc",
            Self::CocoCenter => "coco_center",
        })
    }
}

struct Row {
    class_id: u32,
    bbox: BoundingBox,
    score: Option<f64>,
}

fn parse_rows(text: &str, format: BoxFormat, with_score: bool) -> Result<Vec<Row>> {
    let want = if with_score { 6 } else { 5 };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != want {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {want} fields, found {}", fields.len()),
            });
        }
        let class_id: u32 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad class id `{}`", fields[0]),
        })?;
        let mut v = [0.0; 5];
        for (k, f) in fields[1..].iter().enumerate() {
            v[k] = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("bad number `{f}`"),
                })?;
        }
        let bbox = match format {
            BoxFormat::Voc => BoundingBox::new(v[0], v[1], v[2], v[3]),
            BoxFormat::CocoCenter => BoundingBox::from_center(v[0], v[1], v[2], v[3]),
        }
        .map_err(|_| Error::DegenerateBox {
            line: Some(line_no),
        })?;
        let score = if with_score {
            if !(0.0..=1.0).contains(&v[4]) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("score {} outside [0, 1]", v[4]),
                });
            }
            Some(v[4])
        } else {
            None
        };
        out.push(Row {
            class_id,
            bbox,
            score,
        });
    }
    Ok(out)
}

pub fn parse_annotations(text: &str, format: BoxFormat) -> Result<Vec<Annotation>> {
    Ok(parse_rows(text, format, false)?
        .into_iter()
        .map(|r| Annotation {
            bbox: r.bbox,
            class_id: r.class_id,
        })
        .collect())
}

pub fn parse_predictions(text: &str, format: BoxFormat) -> Result<Vec<Detection>> {
    Ok(parse_rows(text, format, true)?
        .into_iter()
        .map(|r| Detection {
            bbox: r.bbox,
            score: r.score.unwrap_or(0.0),
            class_id: r.class_id,
        })
        .collect())
}

pub fn read_annotations(path: impl AsRef<Path>, format: BoxFormat) -> Result<Vec<Annotation>> {
    parse_annotations(&std::fs::read_to_string(path)?, format)
}

pub fn read_predictions(path: impl AsRef<Path>, format: BoxFormat) -> Result<Vec<Detection>> {
    parse_predictions(&std::fs::read_to_string(path)?, format)
}

fn coords(b: &BoundingBox, format: BoxFormat) -> [f64; 4] {
    match format {
        BoxFormat::Voc => [b.xmin, b.ymin, b.xmax, b.ymax],
        BoxFormat::CocoCenter => [
            (b.xmin + b.xmax) / 2.0,
            (b.ymin + b.ymax) / 2.0,
            b.width(),
            b.height(),
        ],
    }
}

pub fn format_annotations(items: &[Annotation], format: BoxFormat) -> String {
    let mut s = String::new();
    for a in items {
        let [p, q, r, t] = coords(&a.bbox, format);
        let _ = writeln!(s, "{} {p} {q} {r} {t}", a.class_id);
    }
    s
}

pub fn format_predictions(items: &[Detection], format: BoxFormat) -> String {
    let mut s = String::new();
    for d in items {
        let [p, q, r, t] = coords(&d.bbox, format);
        let _ = writeln!(s, "{} {p} {q} {r} {t} {}", d.class_id, d.score);
    }
    s
}
