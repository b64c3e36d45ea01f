//! Minimal Netpbm codecs: PBM (P4, and P1 on input) for masks and PPM (P6)
//! for heatmaps. A set PBM bit (black) is a foreground pixel.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sdr::Mask;

/// An 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols * 3],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.cols + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.cols + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

struct Header<'a> {
    magic: [u8; 2],
    fields: Vec<usize>,
    body: &'a [u8],
}

/// Parses the magic and `count` whitespace-separated decimal fields, skipping comments.
fn parse_header(bytes: &[u8], count: usize) -> std::result::Result<Header<'_>, String> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err("not a netpbm file".into());
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = Vec::with_capacity(count);
    while fields.len() < count {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated or malformed header".into());
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        fields.push(text.parse().map_err(|_| format!("header value {text} out of range"))?);
    }
    // Exactly one whitespace byte separates the header from binary data.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        if !(pos == bytes.len() && magic == *b"P1") {
            return Err("missing whitespace after header".into());
        }
    }
    Ok(Header {
        magic,
        fields,
        body: bytes.get(pos + 1..).unwrap_or(&[]),
    })
}

pub fn decode_pbm(bytes: &[u8]) -> std::result::Result<Mask, String> {
    let h = parse_header(bytes, 2)?;
    let (cols, rows) = (h.fields[0], h.fields[1]);
    let mut mask = Mask::new(rows, cols);
    match &h.magic {
        b"P4" => {
            let stride = cols.div_ceil(8);
            if h.body.len() < stride * rows {
                return Err(format!(
                    "raster truncated: need {} bytes, have {}",
                    stride * rows,
                    h.body.len()
                ));
            }
            for r in 0..rows {
                let line = &h.body[r * stride..(r + 1) * stride];
                for c in 0..cols {
                    if line[c / 8] & (0x80 >> (c % 8)) != 0 {
                        mask.set(r, c, true);
                    }
                }
            }
        }
        b"P1" => {
            let mut bits = h.body.iter().filter(|b| !b.is_ascii_whitespace());
            for r in 0..rows {
                for c in 0..cols {
                    match bits.next() {
                        Some(b'1') => mask.set(r, c, true),
                        Some(b'0') => {}
                        Some(&b) => return Err(format!("unexpected byte {b:#04x} in P1 raster")),
                        None => return Err("P1 raster truncated".into()),
                    }
                }
            }
        }
        m => return Err(format!("unsupported netpbm type {}", String::from_utf8_lossy(m))),
    }
    Ok(mask)
}

pub fn encode_pbm(mask: &Mask) -> Vec<u8> {
    let (rows, cols) = (mask.rows(), mask.cols());
    let stride = cols.div_ceil(8);
    let mut out = format!("P4\n{cols} {rows}\n").into_bytes();
    out.reserve(stride * rows);
    for r in 0..rows {
        let mut line = vec![0u8; stride];
        for (c, &set) in mask.row(r).iter().enumerate() {
            if set {
                line[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&line);
    }
    out
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.cols, image.rows).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    let h = parse_header(bytes, 3)?;
    if &h.magic != b"P6" {
        return Err("expected a P6 file".into());
    }
    let (cols, rows, maxval) = (h.fields[0], h.fields[1], h.fields[2]);
    if maxval != 255 {
        return Err(format!("only maxval 255 is supported, got {maxval}"));
    }
    let n = rows * cols * 3;
    if h.body.len() < n {
        return Err("raster truncated".into());
    }
    Ok(RgbImage {
        rows,
        cols,
        data: h.body[..n].to_vec(),
    })
}

pub fn read_pbm(path: &Path) -> Result<Mask> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pbm(&bytes).map_err(|m| Error::format(path, m))
}

pub fn write_pbm(path: &Path, mask: &Mask) -> Result<()> {
    fs::write(path, encode_pbm(mask)).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}
