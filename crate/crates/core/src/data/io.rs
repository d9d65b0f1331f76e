//! Binary array formats.
//!
//! `.cplx`: magic `CPLX1\0`, u32 rank, `rank` u32 extents, then `(re, im)`
//! f32 pairs row-major with the coil axis outermost, then a u32 CRC-32 of
//! the value bytes. `.mask`: magic `MASK1\0`, u32 rank (= 2), two u32
//! extents, one u8 per entry in `{0, 1}`, then the CRC-32 of the value bytes.
//! All integers are little-endian. Values are stored as f32, so f64 inputs
//! are rounded on write.

use std::path::Path;

use thiserror::Error;

use crate::mri::{ComplexImage, SamplingMask};

pub const CPLX_MAGIC: &[u8; 6] = b"CPLX1\0";
pub const MASK_MAGIC: &[u8; 6] = b"MASK1\0";

/// Upper bound on the entry count accepted by the readers.
const MAX_ENTRIES: u64 = 1 << 31;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("truncated payload: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("dimension overflow: extents {0:?}")]
    DimensionOverflow(Vec<u64>),
    #[error("zero-extent dimension in {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("unsupported rank {0}")]
    Rank(u32),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("trailing bytes after payload: {0}")]
    Trailing(usize),
    #[error("mask value {0} is not 0 or 1")]
    MaskValue(u8),
    #[error("invalid content: {0}")]
    Content(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Truncated { needed: self.pos + n, found: self.buf.len() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn header(magic: &[u8; 6], extents: &[usize]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend_from_slice(&(extents.len() as u32).to_le_bytes());
    for &e in extents {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    out
}

fn read_header(r: &mut Reader<'_>, magic: &[u8; 6]) -> Result<(Vec<usize>, usize), FormatError> {
    let m = r.take(6).map_err(|_| FormatError::BadMagic { expected: String::from_utf8_lossy(magic).into() })?;
    if m != magic {
        return Err(FormatError::BadMagic { expected: String::from_utf8_lossy(magic).into() });
    }
    let rank = r.u32()?;
    if rank == 0 || rank > 8 {
        return Err(FormatError::Rank(rank));
    }
    let dims: Vec<u64> = (0..rank).map(|_| r.u32().map(u64::from)).collect::<Result<_, _>>()?;
    let mut total: u64 = 1;
    for &d in &dims {
        total = total.checked_mul(d).ok_or_else(|| FormatError::DimensionOverflow(dims.clone()))?;
    }
    if total > MAX_ENTRIES {
        return Err(FormatError::DimensionOverflow(dims));
    }
    if total == 0 {
        return Err(FormatError::ZeroExtent(dims.iter().map(|&d| d as usize).collect()));
    }
    Ok((dims.iter().map(|&d| d as usize).collect(), total as usize))
}

fn finish(r: &mut Reader<'_>, payload: &[u8]) -> Result<(), FormatError> {
    let stored = r.u32()?;
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    if r.pos != r.buf.len() {
        return Err(FormatError::Trailing(r.buf.len() - r.pos));
    }
    Ok(())
}

/// Encodes images sharing extents as a rank-3 `(coils, height, width)` array.
pub fn encode_cplx(images: &[ComplexImage]) -> Result<Vec<u8>, FormatError> {
    let first = images.first().ok_or_else(|| FormatError::ZeroExtent(vec![0]))?;
    let extents = vec![images.len(), first.height(), first.width()];
    if extents.contains(&0) {
        return Err(FormatError::ZeroExtent(extents));
    }
    if images.iter().any(|i| !i.same_extent(first)) {
        return Err(FormatError::Content("images differ in extent".into()));
    }
    if extents.iter().any(|&e| e > u32::MAX as usize) {
        return Err(FormatError::DimensionOverflow(extents.iter().map(|&e| e as u64).collect()));
    }
    let mut out = header(CPLX_MAGIC, &extents);
    let mut payload = Vec::with_capacity(8 * images.len() * first.len());
    for img in images {
        for (r, i) in img.re().iter().zip(img.im()) {
            payload.extend_from_slice(&(*r as f32).to_le_bytes());
            payload.extend_from_slice(&(*i as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

/// Decodes a rank-2 `(height, width)` or rank-3 `(coils, height, width)` array.
pub fn decode_cplx(bytes: &[u8]) -> Result<Vec<ComplexImage>, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let (dims, total) = read_header(&mut r, CPLX_MAGIC)?;
    let (coils, h, w) = match dims[..] {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => return Err(FormatError::Rank(dims.len() as u32)),
    };
    let payload = r.take(8 * total)?;
    finish(&mut r, payload)?;
    let vals: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((0..coils)
        .map(|c| {
            let chunk = &vals[2 * c * h * w..2 * (c + 1) * h * w];
            let re = chunk.iter().step_by(2).copied().collect();
            let im = chunk.iter().skip(1).step_by(2).copied().collect();
            ComplexImage::from_parts(h, w, re, im).expect("sized by header")
        })
        .collect())
}

pub fn encode_mask(mask: &SamplingMask) -> Result<Vec<u8>, FormatError> {
    let extents = vec![mask.height(), mask.width()];
    if extents.contains(&0) {
        return Err(FormatError::ZeroExtent(extents));
    }
    let mut out = header(MASK_MAGIC, &extents);
    let payload = mask.plane();
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

pub fn decode_mask(bytes: &[u8]) -> Result<SamplingMask, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let (dims, total) = read_header(&mut r, MASK_MAGIC)?;
    if dims.len() != 2 {
        return Err(FormatError::Rank(dims.len() as u32));
    }
    let payload = r.take(total)?;
    finish(&mut r, payload)?;
    if let Some(&bad) = payload.iter().find(|&&v| v > 1) {
        return Err(FormatError::MaskValue(bad));
    }
    SamplingMask::from_plane(dims[0], dims[1], payload).map_err(|e| FormatError::Content(e.to_string()))
}

pub fn write_cplx(path: impl AsRef<Path>, images: &[ComplexImage]) -> Result<(), FormatError> {
    let bytes = encode_cplx(images)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_cplx(path: impl AsRef<Path>) -> Result<Vec<ComplexImage>, FormatError> {
    decode_cplx(&std::fs::read(path)?)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &SamplingMask) -> Result<(), FormatError> {
    let bytes = encode_mask(mask)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<SamplingMask, FormatError> {
    decode_mask(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut r = SplitMix64::new(seed);
        // f32-representable values survive the round trip exactly
        let mut draw = || r.normal() as f32 as f64;
        let re = (0..h * w).map(|_| draw()).collect();
        let im = (0..h * w).map(|_| draw()).collect();
        ComplexImage::from_parts(h, w, re, im).unwrap()
    }

    #[test]
    fn cplx_round_trip_is_bit_identical() {
        let imgs = vec![random_image(5, 7, 1), random_image(5, 7, 2)];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.cplx");
        write_cplx(&p, &imgs).unwrap();
        assert_eq!(read_cplx(&p).unwrap(), imgs);
    }

    #[test]
    fn layout_is_as_documented() {
        let img = ComplexImage::from_parts(1, 2, vec![1.0, 2.0], vec![-1.0, 0.5]).unwrap();
        let b = encode_cplx(&[img]).unwrap();
        assert_eq!(&b[..6], b"CPLX1\0");
        assert_eq!(&b[6..10], &3u32.to_le_bytes());
        assert_eq!(&b[10..22], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&b[22..26], &1.0f32.to_le_bytes());
        assert_eq!(&b[26..30], &(-1.0f32).to_le_bytes());
        assert_eq!(b.len(), 22 + 16 + 4);
        assert_eq!(&b[38..], &crc32fast::hash(&b[22..38]).to_le_bytes());
    }

    #[test]
    fn corrupted_magic_is_reported() {
        let mut b = encode_cplx(&[random_image(2, 2, 3)]).unwrap();
        b[0] = b'X';
        assert!(matches!(decode_cplx(&b), Err(FormatError::BadMagic { .. })));
        let mut m = encode_mask(&SamplingMask::full(2, 2)).unwrap();
        m[4] = b'2';
        assert!(matches!(decode_mask(&m), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn truncation_overflow_and_checksum_are_distinct() {
        let b = encode_cplx(&[random_image(3, 3, 4)]).unwrap();
        assert!(matches!(decode_cplx(&b[..b.len() - 9]), Err(FormatError::Truncated { .. })));

        let mut big = header(CPLX_MAGIC, &[]);
        big.truncate(6);
        big.extend_from_slice(&3u32.to_le_bytes());
        for _ in 0..3 {
            big.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(decode_cplx(&big), Err(FormatError::DimensionOverflow(_))));

        let mut flipped = b.clone();
        flipped[30] ^= 0x40;
        assert!(matches!(decode_cplx(&flipped), Err(FormatError::Checksum { .. })));
    }

    #[test]
    fn zero_extent_rejected_at_write() {
        let empty = ComplexImage::zeros(0, 4);
        assert!(matches!(encode_cplx(&[empty]), Err(FormatError::ZeroExtent(_))));
        assert!(matches!(encode_mask(&SamplingMask::from_columns(0, vec![true; 3])), Err(FormatError::ZeroExtent(_))));
    }

    #[test]
    fn mask_round_trip_and_validation() {
        let m = SamplingMask::from_columns(4, vec![true, false, true, true, false]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mask");
        write_mask(&p, &m).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);

        let mut b = encode_mask(&m).unwrap();
        let first_value = 6 + 4 + 8;
        b[first_value + 1] = 1; // row 0, column 1 on while the rest of column 1 is off
        let n = b.len();
        let crc = crc32fast::hash(&b[first_value..n - 4]);
        b[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_mask(&b), Err(FormatError::Content(_))));
    }
}
