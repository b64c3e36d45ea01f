//! Versioned little-endian binary snapshots.
//!
//! Layout: 4-byte magic, `u32` format version, `u64` payload length, payload,
//! then a CRC-32 of everything before it. Floats are stored by bit pattern so
//! a round trip is bit-exact. Decoding checks the whole envelope before any
//! model state is built.

use crate::error::SnapshotError;

pub const MAGIC: &[u8; 4] = b"GHTM";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 8;

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f32(&mut self, v: f32) {
        self.u32(v.to_bits());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn u32s(&mut self, v: &[u32]) {
        self.usize(v.len());
        for &x in v {
            self.u32(x);
        }
    }

    pub fn bools(&mut self, v: &[bool]) {
        self.usize(v.len());
        for &x in v {
            self.bool(x);
        }
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn is_finished(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).ok_or(SnapshotError::Truncated)?;
        if end > self.buf.len() {
            return Err(SnapshotError::Truncated);
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], SnapshotError> {
        Ok(self.bytes(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.array::<1>()?[0])
    }

    pub fn bool(&mut self) -> Result<bool, SnapshotError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(SnapshotError::Malformed(format!("invalid bool byte {b}"))),
        }
    }

    pub fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn u128(&mut self) -> Result<u128, SnapshotError> {
        Ok(u128::from_le_bytes(self.array()?))
    }

    pub fn usize(&mut self) -> Result<usize, SnapshotError> {
        usize::try_from(self.u64()?).map_err(|_| SnapshotError::Malformed("length overflow".into()))
    }

    /// A length prefix that must be coverable by `elem_size`-byte elements in the remaining input.
    pub fn len(&mut self, elem_size: usize) -> Result<usize, SnapshotError> {
        let n = self.usize()?;
        let remaining = self.buf.len() - self.pos;
        if n.saturating_mul(elem_size.max(1)) > remaining {
            return Err(SnapshotError::Truncated);
        }
        Ok(n)
    }

    pub fn f32(&mut self) -> Result<f32, SnapshotError> {
        Ok(f32::from_bits(self.u32()?))
    }

    pub fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn u32s(&mut self) -> Result<Vec<u32>, SnapshotError> {
        let n = self.len(4)?;
        (0..n).map(|_| self.u32()).collect()
    }

    pub fn bools(&mut self) -> Result<Vec<bool>, SnapshotError> {
        let n = self.len(1)?;
        (0..n).map(|_| self.bool()).collect()
    }
}

/// Wraps `payload` in the magic/version/length/checksum envelope.
pub fn seal(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Header fields of a sealed snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Envelope {
    pub version: u32,
    pub payload_len: u64,
}

/// Validates the envelope and returns the payload slice.
pub fn open(bytes: &[u8]) -> Result<(Envelope, &[u8]), SnapshotError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(SnapshotError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(SnapshotError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let payload_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let expected = (HEADER_LEN as u64)
        .checked_add(payload_len)
        .and_then(|n| n.checked_add(4))
        .ok_or(SnapshotError::Truncated)?;
    if bytes.len() as u64 != expected {
        return Err(SnapshotError::Truncated);
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    if crc32fast::hash(&bytes[..body_end]) != stored {
        return Err(SnapshotError::Checksum);
    }
    Ok((
        Envelope {
            version,
            payload_len,
        },
        &bytes[HEADER_LEN..body_end],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip() {
        let payload = b"hello grid".to_vec();
        let sealed = seal(&payload);
        let (env, body) = open(&sealed).unwrap();
        assert_eq!(env.version, FORMAT_VERSION);
        assert_eq!(body, &payload[..]);
    }

    #[test]
    fn envelope_rejects_damage() {
        let sealed = seal(&[1, 2, 3, 4, 5]);

        let mut flipped = sealed.clone();
        flipped[HEADER_LEN + 2] ^= 0x10;
        assert_eq!(open(&flipped).unwrap_err(), SnapshotError::Checksum);

        assert_eq!(
            open(&sealed[..sealed.len() - 1]).unwrap_err(),
            SnapshotError::Truncated
        );
        assert_eq!(open(b"nope").unwrap_err(), SnapshotError::BadMagic);

        let mut future = sealed.clone();
        future[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert_eq!(
            open(&future).unwrap_err(),
            SnapshotError::UnsupportedVersion {
                found: 7,
                supported: FORMAT_VERSION
            }
        );
    }

    #[test]
    fn decoder_guards_lengths() {
        let mut enc = Encoder::new();
        enc.usize(1 << 40);
        let bytes = enc.into_inner();
        assert_eq!(
            Decoder::new(&bytes).u32s().unwrap_err(),
            SnapshotError::Truncated
        );
    }

    #[test]
    fn floats_keep_bit_patterns() {
        let mut enc = Encoder::new();
        enc.f32(-0.0);
        enc.f64(f64::from_bits(0x7ff8_0000_0000_0001));
        let bytes = enc.into_inner();
        let mut dec = Decoder::new(&bytes);
        assert_eq!(dec.f32().unwrap().to_bits(), (-0.0f32).to_bits());
        assert_eq!(dec.f64().unwrap().to_bits(), 0x7ff8_0000_0000_0001);
        assert!(dec.is_finished());
    }
}
