//! Binary greyscale PGM (P5, maxval 255) encode/decode.

use std::io::Write;

use crate::error::{Error, Result};

/// Decodes a P5 image, returning `(width, height, pixels)`.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::Format(format!(
            "expected PGM magic P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_dim(next_token(bytes, &mut pos)?, "width")?;
    let height = parse_dim(next_token(bytes, &mut pos)?, "height")?;
    let maxval = parse_dim(next_token(bytes, &mut pos)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("PGM header not terminated by whitespace".into())),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < n {
        return Err(Error::Format(format!(
            "PGM raster truncated: {} of {} bytes",
            raster.len(),
            n
        )));
    }
    Ok((width, height, raster[..n].to_vec()))
}

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut out = Vec::with_capacity(pixels.len() + 20);
    write!(out, "P5\n{width} {height}\n255\n").expect("write to Vec");
    out.extend_from_slice(pixels);
    out
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("unexpected end of PGM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_dim(token: &[u8], what: &str) -> Result<usize> {
    let v = std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| {
            Error::Format(format!(
                "invalid PGM {what}: {:?}",
                String::from_utf8_lossy(token)
            ))
        })?;
    if v == 0 {
        return Err(Error::Format(format!("PGM {what} must be positive")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_small() {
        let px: Vec<u8> = (0..12).map(|i| i * 20).collect();
        let bytes = encode(4, 3, &px);
        assert_eq!(decode(&bytes).unwrap(), (4, 3, px));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# max\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        assert_eq!(decode(&bytes).unwrap(), (2, 1, vec![7, 9]));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(decode(b"P2\n1 1\n255\n\x00"), Err(Error::Format(_))));
        assert!(matches!(decode(b"P5\n2 2\n255\n\x00"), Err(Error::Format(_))));
        assert!(matches!(decode(b"P5\n1 1\n65535\n\x00\x00"), Err(Error::Format(_))));
        assert!(matches!(decode(b"P5\n1"), Err(Error::Format(_))));
        assert!(matches!(decode(b""), Err(Error::Format(_))));
    }
}
