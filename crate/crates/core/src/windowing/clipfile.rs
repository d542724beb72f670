//! Clip blobs: a 16-byte header followed by little-endian `f32` values.
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 0..4  | magic `SLCP`                            |
//! | 4..8  | `T_d` (u32 LE)                          |
//! | 8..10 | `H_c` (u16 LE)                          |
//! | 10..12| `W_c` (u16 LE)                          |
//! | 12    | label: 0 nonRA, 1 RA, 255 unlabelled    |
//! | 13..16| reserved, zero                          |
//!
//! A clip directory also carries `clips.json`, mapping each blob to its
//! patient and start time.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Clip, ClipLabel, CuratedClip};
use crate::error::{Error, Result};

pub const CLIP_MAGIC: [u8; 4] = *b"SLCP";
pub const CLIP_HEADER_LEN: usize = 16;
pub const CLIP_MANIFEST: &str = "clips.json";

pub fn encode_clip(clip: &Clip) -> Result<Vec<u8>> {
    let h = u16::try_from(clip.height).map_err(|_| Error::Shape("clip height exceeds u16".into()))?;
    let w = u16::try_from(clip.width).map_err(|_| Error::Shape("clip width exceeds u16".into()))?;
    let t = u32::try_from(clip.frames).map_err(|_| Error::Shape("clip length exceeds u32".into()))?;
    let mut out = Vec::with_capacity(CLIP_HEADER_LEN + clip.data.len() * 4);
    out.extend_from_slice(&CLIP_MAGIC);
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.push(match clip.label {
        Some(ClipLabel::NonRA) => 0,
        Some(ClipLabel::RA) => 1,
        None => 255,
    });
    out.extend_from_slice(&[0; 3]);
    for v in &clip.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes a blob; `start_s` is not stored in the blob and is set to 0.
pub fn decode_clip(bytes: &[u8]) -> Result<Clip> {
    if bytes.len() < CLIP_HEADER_LEN || bytes[..4] != CLIP_MAGIC {
        return Err(Error::Format("not a clip blob (bad magic or short header)".into()));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u16::from_le_bytes(bytes[8..10].try_into().unwrap()) as usize;
    let width = u16::from_le_bytes(bytes[10..12].try_into().unwrap()) as usize;
    let label = match bytes[12] {
        0 => Some(ClipLabel::NonRA),
        1 => Some(ClipLabel::RA),
        255 => None,
        other => return Err(Error::Format(format!("invalid clip label byte {other}"))),
    };
    let n = frames * height * width;
    let body = &bytes[CLIP_HEADER_LEN..];
    if body.len() != n * 4 {
        return Err(Error::Format(format!(
            "clip body holds {} bytes, header implies {}",
            body.len(),
            n * 4
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Clip::new(0.0, frames, height, width, data, label)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub file: String,
    pub patient_id: String,
    pub start_s: f64,
    pub label: Option<ClipLabel>,
}

pub fn write_clip_dir(dir: impl AsRef<Path>, clips: &[CuratedClip]) -> Result<Vec<ClipEntry>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(clips.len());
    for (i, c) in clips.iter().enumerate() {
        let file = format!("clip_{i:06}.bin");
        let path = dir.join(&file);
        std::fs::write(&path, encode_clip(&c.clip.unpack())?).map_err(|e| Error::io(&path, e))?;
        entries.push(ClipEntry {
            file,
            patient_id: c.patient_id.clone(),
            start_s: c.clip.start_s,
            label: c.clip.label,
        });
    }
    let path = dir.join(CLIP_MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&entries)?).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

pub fn read_clip_dir(dir: impl AsRef<Path>) -> Result<Vec<CuratedClip>> {
    let dir = dir.as_ref();
    let path = dir.join(CLIP_MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let entries: Vec<ClipEntry> = serde_json::from_str(&text)?;
    entries
        .into_iter()
        .map(|e| {
            let p = dir.join(&e.file);
            let bytes = std::fs::read(&p).map_err(|err| Error::io(&p, err))?;
            let mut clip = decode_clip(&bytes)?;
            if clip.label != e.label {
                return Err(Error::Format(format!("{}: label disagrees with manifest", e.file)));
            }
            clip.start_s = e.start_s;
            let clip = clip
                .pack()
                .ok_or_else(|| Error::Format(format!("{}: values are not 8-bit differences", e.file)))?;
            Ok(CuratedClip {
                patient_id: e.patient_id,
                clip,
            })
        })
        .collect()
}
