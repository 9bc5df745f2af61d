//! Grayscale PFM disparity maps: `Pf` magic, dimensions, a scale line whose
//! sign encodes endianness, then 32-bit float rows stored bottom-to-top.
//! Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::Map;
use crate::error::{Error, Result};

fn read_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedHeader("unexpected end of header".into()));
    }
    // exactly one whitespace byte terminates the token
    if *pos < bytes.len() {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos - 1]).into_owned())
}

pub fn load_pfm(path: &Path) -> Result<Map> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_pfm(&bytes)
}

pub(crate) fn parse_pfm(bytes: &[u8]) -> Result<Map> {
    let mut pos = 0;
    let magic = read_token(bytes, &mut pos)?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::UnsupportedFormat("color PFM ('PF') not supported".into())),
        other => return Err(Error::MalformedHeader(format!("bad magic '{other}'"))),
    }
    let w: usize = read_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad width".into()))?;
    let h: usize = read_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad height".into()))?;
    let scale: f32 = read_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad scale".into()))?;
    if w == 0 || h == 0 {
        return Err(Error::MalformedHeader(format!("degenerate dimensions {w}x{h}")));
    }
    let little_endian = scale < 0.0;
    let expected = w * h * 4;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedData { expected, got: payload.len() });
    }
    let mut map = Map::zeros(h, w);
    for file_row in 0..h {
        let y = h - 1 - file_row; // rows are stored bottom-to-top
        for x in 0..w {
            let off = (file_row * w + x) * 4;
            let raw: [u8; 4] = payload[off..off + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            map.set(y, x, v);
        }
    }
    Ok(map)
}

/// Write little-endian grayscale PFM (scale line `-1.0`).
pub fn save_pfm(path: &Path, map: &Map) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "Pf\n{} {}\n-1.0\n", map.w, map.h)?;
    for file_row in 0..map.h {
        let y = map.h - 1 - file_row;
        for x in 0..map.w {
            f.write_all(&map.at(y, x).to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}
