//! Byte layouts of the four scheme objects (see [`crate::codec`] for the
//! header and primitive encodings).
//!
//! ```text
//! MasterKey      := y:scalar  n:u32  { version:u32 t_i:scalar }^n
//! PublicParams   := Y:gt      n:u32  { version:u32 T_i:g1 }^n
//! Ciphertext     := ẽ:gt      n:u32  { attr:u32 version:u32 e_i:g1 }^n
//! DecryptionKey  := policy    n:u32  { attr:u32 version:u32 dk_i:g2 }^n
//! policy         := 0x00 attr:u32 | 0x01 n:u32 policy^n (AND) | 0x02 n:u32 policy^n (OR)
//! ```

use std::collections::BTreeMap;

use super::{
    AbeError, AccessPolicy, AttributeId, Ciphertext, DecryptionKey, MasterKey, PublicParams,
    Versioned,
};
use crate::codec::{self, CodecError, Reader, Tag, Writer};

const LEAF: u8 = 0;
const AND: u8 = 1;
const OR: u8 = 2;

/// Policies deeper than this are rejected when decoding.
const MAX_POLICY_DEPTH: usize = 64;

/// Encoded size of one key component (`attr`, `version`, prefixed G2 point).
pub const fn component_bytes() -> usize {
    4 + 4 + 4 + codec::G2_BYTES
}

const CT_COMPONENT_BYTES: usize = 4 + 4 + 4 + codec::G1_BYTES;

pub fn policy_encoded_len(policy: &AccessPolicy) -> usize {
    match policy {
        AccessPolicy::Leaf(_) => 5,
        AccessPolicy::And(c) | AccessPolicy::Or(c) => {
            5 + c.iter().map(policy_encoded_len).sum::<usize>()
        }
    }
}

/// Size of [`DecryptionKey::to_bytes`] for a key over `policy`; components
/// have fixed width so the size follows from the policy alone.
pub fn decryption_key_encoded_len(policy: &AccessPolicy) -> usize {
    codec::HEADER_BYTES + policy_encoded_len(policy) + 4 + policy.leaf_count() * component_bytes()
}

fn write_policy(w: &mut Writer, policy: &AccessPolicy) {
    match policy {
        AccessPolicy::Leaf(a) => {
            w.u8(LEAF).u32(a.0);
        }
        AccessPolicy::And(c) | AccessPolicy::Or(c) => {
            w.u8(if matches!(policy, AccessPolicy::And(_)) { AND } else { OR })
                .u32(c.len() as u32);
            for child in c {
                write_policy(w, child);
            }
        }
    }
}

fn read_policy(r: &mut Reader<'_>, depth: usize) -> Result<AccessPolicy, CodecError> {
    if depth > MAX_POLICY_DEPTH {
        return Err(CodecError::Malformed("policy nesting too deep".into()));
    }
    match r.u8()? {
        LEAF => Ok(AccessPolicy::Leaf(AttributeId(r.u32()?))),
        tag @ (AND | OR) => {
            let n = r.u32()? as usize;
            if n == 0 || n > r.remaining() / 5 {
                return Err(CodecError::Malformed(format!("gate arity {n}")));
            }
            let children = (0..n)
                .map(|_| read_policy(r, depth + 1))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(if tag == AND {
                AccessPolicy::And(children)
            } else {
                AccessPolicy::Or(children)
            })
        }
        other => Err(CodecError::Malformed(format!("policy node tag {other}"))),
    }
}

fn count(r: &mut Reader<'_>, min_item: usize) -> Result<usize, CodecError> {
    let n = r.u32()? as usize;
    if n > r.remaining() / min_item {
        return Err(CodecError::Truncated);
    }
    Ok(n)
}

impl MasterKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(Tag::MasterKey);
        w.scalar(&self.y).u32(self.t.len() as u32);
        for t in &self.t {
            w.u32(t.version).scalar(&t.value);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::with_header(bytes, Tag::MasterKey)?;
        let y = r.scalar()?;
        let n = count(&mut r, 8 + codec::SCALAR_BYTES)?;
        let mut t = Vec::with_capacity(n);
        for _ in 0..n {
            let version = r.u32()?;
            t.push(Versioned {
                version,
                value: r.scalar()?,
            });
        }
        r.finish()?;
        Ok(MasterKey { y, t })
    }
}

impl PublicParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(Tag::PublicParams);
        w.gt(&self.y).u32(self.t.len() as u32);
        for t in &self.t {
            w.u32(t.version).g1(&t.value);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::with_header(bytes, Tag::PublicParams)?;
        let y = r.gt()?;
        let n = count(&mut r, 8 + codec::G1_BYTES)?;
        let mut t = Vec::with_capacity(n);
        for _ in 0..n {
            let version = r.u32()?;
            t.push(Versioned {
                version,
                value: r.g1()?,
            });
        }
        r.finish()?;
        Ok(PublicParams { y, t })
    }
}

impl Ciphertext {
    pub fn encoded_len(&self) -> usize {
        codec::HEADER_BYTES + 4 + codec::GT_BYTES + 4 + self.components.len() * CT_COMPONENT_BYTES
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(Tag::Ciphertext);
        w.gt(&self.blinded).u32(self.components.len() as u32);
        for (a, c) in &self.components {
            w.u32(a.0).u32(c.version).g1(&c.value);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::with_header(bytes, Tag::Ciphertext)?;
        let blinded = r.gt()?;
        let n = count(&mut r, CT_COMPONENT_BYTES)?;
        let mut components = BTreeMap::new();
        for _ in 0..n {
            let attr = AttributeId(r.u32()?);
            let version = r.u32()?;
            let value = r.g1()?;
            if components.insert(attr, Versioned { version, value }).is_some() {
                return Err(CodecError::Malformed(format!("duplicate component {attr}")).into());
            }
        }
        r.finish()?;
        if components.is_empty() {
            return Err(AbeError::EmptyAttributeSet);
        }
        Ok(Ciphertext {
            blinded,
            components,
        })
    }
}

impl DecryptionKey {
    pub fn encoded_len(&self) -> usize {
        decryption_key_encoded_len(&self.policy)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(Tag::DecryptionKey);
        write_policy(&mut w, &self.policy);
        w.u32(self.components.len() as u32);
        for (a, c) in &self.components {
            w.u32(a.0).u32(c.version).g2(&c.value);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::with_header(bytes, Tag::DecryptionKey)?;
        let policy = read_policy(&mut r, 0)?;
        let n = count(&mut r, component_bytes())?;
        let mut components = BTreeMap::new();
        for _ in 0..n {
            let attr = AttributeId(r.u32()?);
            let version = r.u32()?;
            let value = r.g2()?;
            if components.insert(attr, Versioned { version, value }).is_some() {
                return Err(CodecError::Malformed(format!("duplicate component {attr}")).into());
            }
        }
        r.finish()?;
        DecryptionKey::from_parts(policy, components)
    }
}
