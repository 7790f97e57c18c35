//! Binary clip dump: magic, version, rank and extents (u32 LE), frame values
//! (f32 LE), then the clip's box list as text.

use super::SyntheticClip;
use crate::error::{Error, Result};
use crate::features::{parse_box_list, write_box_list, BoxRecord};
use crate::tensor::Tensor;

pub const CLIP_MAGIC: &[u8; 8] = b"STCXCLIP";
pub const CLIP_VERSION: u32 = 1;

/// Contents of a decoded clip dump.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipDump {
    pub frames: Tensor,
    pub boxes: Vec<BoxRecord>,
}

pub fn encode_clip(clip: &SyntheticClip) -> Vec<u8> {
    let shape = clip.frames.shape();
    let mut out = Vec::with_capacity(16 + 4 * shape.len() + 4 * clip.frames.len());
    out.extend_from_slice(CLIP_MAGIC);
    out.extend_from_slice(&CLIP_VERSION.to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &e in shape {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in clip.frames.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let records: Vec<BoxRecord> = clip
        .all_boxes()
        .into_iter()
        .map(|bbox| BoxRecord {
            clip_id: clip.id.clone(),
            bbox,
        })
        .collect();
    out.extend_from_slice(write_box_list(&records).as_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Parse {
                line: 0,
                reason: format!("clip dump truncated at byte {}", self.pos),
            }
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_clip(bytes: &[u8]) -> Result<ClipDump> {
    let mut r = Reader { bytes, pos: 0 };
    let bad = |reason: String| Error::Parse { line: 0, reason };
    if r.take(CLIP_MAGIC.len())? != CLIP_MAGIC {
        return Err(bad("not a clip dump (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CLIP_VERSION {
        return Err(bad(format!("unsupported clip dump version {version}")));
    }
    let rank = r.u32()? as usize;
    if rank != 4 {
        return Err(bad(format!("expected rank-4 frames, found rank {rank}")));
    }
    let shape = (0..rank).map(|_| r.u32().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
    let count: usize = shape.iter().product();
    let raw = r.take(count.checked_mul(4).ok_or_else(|| bad("frame extents overflow".into()))?)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let frames = Tensor::new(shape, data)?;
    let text = std::str::from_utf8(&bytes[r.pos..]).map_err(|_| bad("box section is not UTF-8".into()))?;
    Ok(ClipDump {
        frames,
        boxes: parse_box_list(text)?,
    })
}
