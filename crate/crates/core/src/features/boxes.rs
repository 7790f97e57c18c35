use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Person box in normalized image coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActorBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub confidence: f64,
    /// Annotated box rather than a detector proposal.
    pub ground_truth: bool,
}

impl ActorBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, confidence: f64) -> Result<Self> {
        let b = ActorBox {
            x1,
            y1,
            x2,
            y2,
            confidence,
            ground_truth: false,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn annotated(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Ok(ActorBox {
            ground_truth: true,
            ..ActorBox::new(x1, y1, x2, y2, 1.0)?
        })
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidBox(format!("coordinates {coords:?} outside [0, 1]")));
        }
        if self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(Error::InvalidBox(format!("corners {coords:?} are not ordered")));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidBox(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Keeps proposals scoring strictly above `threshold`; annotated boxes are
/// always kept.
pub fn filter_proposals(boxes: &[ActorBox], threshold: f64) -> Vec<ActorBox> {
    boxes
        .iter()
        .filter(|b| b.ground_truth || b.confidence > threshold)
        .copied()
        .collect()
}

/// One line of a box-list file.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRecord {
    pub clip_id: String,
    pub bbox: ActorBox,
}

/// `clip_id,x1,y1,x2,y2,confidence,is_ground_truth` per line.
pub fn write_box_list(records: &[BoxRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let b = &r.bbox;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.clip_id,
            b.x1,
            b.y1,
            b.x2,
            b.y2,
            b.confidence,
            u8::from(b.ground_truth)
        )
        .unwrap();
    }
    out
}

pub(crate) fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("not a number: `{field}`"),
    })
}

pub fn parse_box_list(text: &str) -> Result<Vec<BoxRecord>> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                line,
                reason: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let ground_truth = match fields[6].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    reason: format!("bad ground-truth flag `{other}`"),
                })
            }
        };
        let bbox = ActorBox {
            x1: parse_f64(fields[1], line)?,
            y1: parse_f64(fields[2], line)?,
            x2: parse_f64(fields[3], line)?,
            y2: parse_f64(fields[4], line)?,
            confidence: parse_f64(fields[5], line)?,
            ground_truth,
        };
        bbox.validate().map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        records.push(BoxRecord {
            clip_id: fields[0].trim().to_string(),
            bbox,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_keeps_strictly_higher() {
        let boxes = [
            ActorBox::new(0.1, 0.1, 0.5, 0.5, 0.5).unwrap(),
            ActorBox::new(0.1, 0.1, 0.5, 0.5, 0.9).unwrap(),
            ActorBox::new(0.1, 0.1, 0.5, 0.5, 0.8).unwrap(),
        ];
        let kept = filter_proposals(&boxes, 0.8);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);
        assert_eq!(filter_proposals(&boxes, 0.0).len(), 3);
    }

    #[test]
    fn annotated_boxes_survive_any_threshold() {
        let gt = ActorBox {
            confidence: 0.0,
            ..ActorBox::annotated(0.2, 0.2, 0.4, 0.4).unwrap()
        };
        assert_eq!(filter_proposals(&[gt], 0.99), vec![gt]);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(ActorBox::new(0.5, 0.1, 0.5, 0.4, 0.9).is_err());
        assert!(ActorBox::new(0.1, 0.1, 1.2, 0.4, 0.9).is_err());
        assert!(ActorBox::new(0.1, 0.1, 0.2, 0.4, 1.5).is_err());
    }

    #[test]
    fn box_list_round_trip() {
        let records = vec![
            BoxRecord {
                clip_id: "clip_00001".into(),
                bbox: ActorBox::new(0.125, 0.3, 0.6000000000000001, 0.75, 0.8125).unwrap(),
            },
            BoxRecord {
                clip_id: "clip_00002".into(),
                bbox: ActorBox::annotated(0.0, 0.0, 1.0, 1.0).unwrap(),
            },
        ];
        let text = write_box_list(&records);
        assert!(text.starts_with("clip_00001,0.125,0.3,0.6000000000000001,0.75,0.8125,0\n"));
        assert_eq!(parse_box_list(&text).unwrap(), records);
    }

    #[test]
    fn box_list_errors_carry_line_numbers() {
        let err = parse_box_list("# header\nclip,0.1,0.1,0.2,0.2,0.9,1\nclip,0.1,0.1,0.2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }
}
