//! Fixed byte layout shared by every persisted object.
//!
//! Every record starts with a six byte header:
//!
//! ```text
//! +------+------+-----+---------+
//! | 'A'  | 'B'  | 'E' | 'C' | tag | format |
//! +------+------+-----+---------+
//! ```
//!
//! followed by a body made of big-endian `u32` integers and length-prefixed
//! byte strings (`u32` length, then the bytes). Group elements use their
//! compressed encodings: G1 is 48 bytes, G2 is 96 bytes, scalars are 32
//! little-endian bytes and target-group elements are 288 bytes (torus
//! compression, all-zero for the identity).

use blstrs::{Compress, G1Affine, G2Affine, Gt, Scalar};
use ff::PrimeField;
use group::Group;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"ABEC";
pub const FORMAT_VERSION: u8 = 1;

pub const G1_BYTES: usize = 48;
pub const G2_BYTES: usize = 96;
pub const SCALAR_BYTES: usize = 32;
pub const GT_BYTES: usize = 288;
pub const HEADER_BYTES: usize = 6;

/// Object class tags written after the magic bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    MasterKey = 1,
    PublicParams = 2,
    Ciphertext = 3,
    DecryptionKey = 4,
    ReencryptionKey = 5,
    ReencryptionKeyHistory = 6,
    VersionTable = 7,
    UserComponents = 8,
    BootMaterial = 9,
    SealedKeys = 10,
    SensedData = 11,
    Histories = 12,
    SignedMessage = 13,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("expected object tag {expected}, found {found}")]
    WrongTag { expected: u8, found: u8 },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid {0} encoding")]
    InvalidElement(&'static str),
    #[error("{0} trailing bytes after record")]
    TrailingBytes(usize),
    #[error("malformed record: {0}")]
    Malformed(String),
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_header(tag: Tag) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(&MAGIC);
        buf.push(tag as u8);
        buf.push(FORMAT_VERSION);
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(len_u32(v.len()));
        self.buf.extend_from_slice(v);
        self
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn g1(&mut self, p: &G1Affine) -> &mut Self {
        self.bytes(&p.to_compressed())
    }

    pub fn g2(&mut self, p: &G2Affine) -> &mut Self {
        self.bytes(&p.to_compressed())
    }

    pub fn scalar(&mut self, s: &Scalar) -> &mut Self {
        self.bytes(&s.to_bytes_le())
    }

    pub fn gt(&mut self, g: &Gt) -> &mut Self {
        self.bytes(&gt_to_bytes(g))
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

fn len_u32(len: usize) -> u32 {
    u32::try_from(len).expect("component larger than 4 GiB")
}

pub fn gt_to_bytes(g: &Gt) -> [u8; GT_BYTES] {
    let mut out = [0u8; GT_BYTES];
    if bool::from(g.is_identity()) {
        return out;
    }
    let mut cursor = &mut out[..];
    g.write_compressed(&mut cursor)
        .expect("fixed-size buffer holds a compressed Gt");
    out
}

pub fn gt_from_bytes(bytes: &[u8]) -> Result<Gt, CodecError> {
    if bytes.len() != GT_BYTES {
        return Err(CodecError::InvalidElement("Gt"));
    }
    if bytes.iter().all(|b| *b == 0) {
        return Ok(Gt::identity());
    }
    Gt::read_compressed(bytes).map_err(|_| CodecError::InvalidElement("Gt"))
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    /// Checks magic, tag and format version, returning a reader over the body.
    pub fn with_header(buf: &'a [u8], tag: Tag) -> Result<Self, CodecError> {
        if buf.len() < HEADER_BYTES {
            return Err(CodecError::Truncated);
        }
        if buf[..4] != MAGIC {
            return Err(CodecError::BadMagic);
        }
        if buf[4] != tag as u8 {
            return Err(CodecError::WrongTag {
                expected: tag as u8,
                found: buf[4],
            });
        }
        if buf[5] != FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(buf[5]));
        }
        Ok(Reader {
            buf: &buf[HEADER_BYTES..],
        })
    }

    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_be_bytes(a))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        self.take(n)
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| CodecError::InvalidElement("utf-8 string"))
    }

    pub fn g1(&mut self) -> Result<G1Affine, CodecError> {
        let b = self.bytes()?;
        let arr: [u8; G1_BYTES] = b.try_into().map_err(|_| CodecError::InvalidElement("G1"))?;
        Option::from(G1Affine::from_compressed(&arr)).ok_or(CodecError::InvalidElement("G1"))
    }

    pub fn g2(&mut self) -> Result<G2Affine, CodecError> {
        let b = self.bytes()?;
        let arr: [u8; G2_BYTES] = b.try_into().map_err(|_| CodecError::InvalidElement("G2"))?;
        Option::from(G2Affine::from_compressed(&arr)).ok_or(CodecError::InvalidElement("G2"))
    }

    pub fn scalar(&mut self) -> Result<Scalar, CodecError> {
        let b = self.bytes()?;
        let arr: [u8; SCALAR_BYTES] =
            b.try_into().map_err(|_| CodecError::InvalidElement("scalar"))?;
        Option::from(Scalar::from_bytes_le(&arr)).ok_or(CodecError::InvalidElement("scalar"))
    }

    pub fn gt(&mut self) -> Result<Gt, CodecError> {
        gt_from_bytes(self.bytes()?)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub fn finish(self) -> Result<(), CodecError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(CodecError::TrailingBytes(self.buf.len()))
        }
    }
}

/// Scalar encoding helper used by hash-to-key derivations.
pub fn scalar_repr(s: &Scalar) -> [u8; SCALAR_BYTES] {
    let repr = s.to_repr();
    let mut out = [0u8; SCALAR_BYTES];
    out.copy_from_slice(repr.as_ref());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ff::Field;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    #[test]
    fn header_is_checked() {
        let mut w = Writer::with_header(Tag::Ciphertext);
        w.u32(7);
        let bytes = w.finish();
        assert_eq!(&bytes[..4], b"ABEC");
        assert_eq!(
            Reader::with_header(&bytes, Tag::DecryptionKey).err(),
            Some(CodecError::WrongTag {
                expected: Tag::DecryptionKey as u8,
                found: Tag::Ciphertext as u8
            })
        );
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert_eq!(
            Reader::with_header(&bad, Tag::Ciphertext).err(),
            Some(CodecError::UnsupportedVersion(9))
        );
        let mut r = Reader::with_header(&bytes, Tag::Ciphertext).unwrap();
        assert_eq!(r.u32().unwrap(), 7);
        assert!(r.finish().is_ok());
    }

    #[test]
    fn group_elements_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let s = Scalar::random(&mut rng);
        let g = Gt::generator() * s;
        let mut w = Writer::default();
        w.gt(&g).gt(&Gt::identity()).scalar(&s);
        let bytes = w.finish();
        assert_eq!(bytes.len(), 3 * 4 + 2 * GT_BYTES + SCALAR_BYTES);
        let mut r = Reader::new(&bytes);
        assert_eq!(r.gt().unwrap(), g);
        assert_eq!(r.gt().unwrap(), Gt::identity());
        assert_eq!(r.scalar().unwrap(), s);
    }

    #[test]
    fn truncation_is_reported() {
        let mut r = Reader::new(&[0, 0, 0, 9, 1]);
        assert_eq!(r.bytes().err(), Some(CodecError::Truncated));
    }
}
