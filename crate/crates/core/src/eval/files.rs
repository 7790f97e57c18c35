//! Line formats: detections `clip_id,x1,y1,x2,y2,class_id,score`, ground
//! truth the same without the score.

use std::fmt::Write as _;

use super::{DetectionRecord, GroundTruth};
use crate::error::{Error, Result};
use crate::features::ActorBox;

pub fn write_detections(dets: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for d in dets {
        let b = &d.bbox;
        writeln!(out, "{},{},{},{},{},{},{}", d.clip_id, b.x1, b.y1, b.x2, b.y2, d.class_id, d.score).unwrap();
    }
    out
}

pub fn write_ground_truth(gts: &[GroundTruth]) -> String {
    let mut out = String::new();
    for g in gts {
        let b = &g.bbox;
        writeln!(out, "{},{},{},{},{},{}", g.clip_id, b.x1, b.y1, b.x2, b.y2, g.class_id).unwrap();
    }
    out
}

fn split_fields(text: &str, expected: usize) -> impl Iterator<Item = Result<(usize, Vec<&str>)>> {
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            return None;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != expected {
            return Some(Err(Error::Parse {
                line: i + 1,
                reason: format!("expected {expected} fields, found {}", fields.len()),
            }));
        }
        Some(Ok((i + 1, fields)))
    })
}

fn parse_box(fields: &[&str], line: usize, ground_truth: bool) -> Result<ActorBox> {
    let num = |k: usize| crate::features::boxes_parse_f64(fields[k], line);
    let bbox = ActorBox {
        x1: num(1)?,
        y1: num(2)?,
        x2: num(3)?,
        y2: num(4)?,
        confidence: 1.0,
        ground_truth,
    };
    bbox.validate().map_err(|e| Error::Parse {
        line,
        reason: e.to_string(),
    })?;
    Ok(bbox)
}

fn parse_class(field: &str, line: usize) -> Result<usize> {
    field.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("bad class id `{field}`"),
    })
}

pub fn parse_detections(text: &str) -> Result<Vec<DetectionRecord>> {
    split_fields(text, 7)
        .map(|row| {
            let (line, f) = row?;
            Ok(DetectionRecord {
                clip_id: f[0].to_string(),
                bbox: parse_box(&f, line, false)?,
                class_id: parse_class(f[5], line)?,
                score: crate::features::boxes_parse_f64(f[6], line)?,
            })
        })
        .collect()
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruth>> {
    split_fields(text, 6)
        .map(|row| {
            let (line, f) = row?;
            Ok(GroundTruth {
                clip_id: f[0].to_string(),
                bbox: parse_box(&f, line, true)?,
                class_id: parse_class(f[5], line)?,
            })
        })
        .collect()
}
