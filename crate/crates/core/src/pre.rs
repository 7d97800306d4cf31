//! Attribute version updates and lazy re-encryption of components.
//!
//! Updating attribute `i` draws a fresh secret `t_i'` and publishes the
//! re-encryption key `rk_i = t_i' / t_i`. A ciphertext component
//! `e_i = g1^{s·t_i}` moves forward with `e_i^{rk_i}`, a key component
//! `dk_i = g2^{q/t_i}` with `dk_i^{1/rk_i}`. Components that lag several
//! versions are brought forward by folding the history one entry at a time.

use std::collections::{BTreeMap, BTreeSet};

use blstrs::{G1Affine, G2Affine, Scalar};
use ff::Field;
use group::{prime::PrimeCurveAffine, Curve};
use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Tag, Writer};
use crate::kpabe::{
    AttributeClass, AttributeId, Ciphertext, DecryptionKey, MasterKey, PublicParams, Universe,
    Versioned,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreError {
    #[error("attribute {0} is a time attribute and is never updated")]
    TimeAttribute(AttributeId),
    #[error("attribute {0} is not in the universe")]
    UnknownAttribute(AttributeId),
    #[error("history for {history} cannot update a component of {component}")]
    WrongHistory {
        history: AttributeId,
        component: AttributeId,
    },
    #[error("attribute {attribute}: component version {version} is ahead of history version {current}")]
    FutureVersion {
        attribute: AttributeId,
        version: u32,
        current: u32,
    },
    #[error("attribute {attribute}: history has no key leaving version {version}")]
    MissingHistorySegment { attribute: AttributeId, version: u32 },
    #[error("attribute {attribute}: re-encryption key {from}->{to} does not extend version {current}")]
    BrokenChain {
        attribute: AttributeId,
        from: u32,
        to: u32,
        current: u32,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Clone, PartialEq, Eq)]
pub struct ReencryptionKey {
    pub attribute: AttributeId,
    pub from_version: u32,
    pub to_version: u32,
    pub(crate) factor: Scalar,
}

impl std::fmt::Debug for ReencryptionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ReencryptionKey({} v{}->v{})",
            self.attribute, self.from_version, self.to_version
        )
    }
}

impl ReencryptionKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(Tag::ReencryptionKey);
        self.write_body(&mut w);
        w.finish()
    }

    pub(crate) fn write_body(&self, w: &mut Writer) {
        w.u32(self.attribute.0)
            .u32(self.from_version)
            .u32(self.to_version)
            .scalar(&self.factor);
    }

    pub(crate) fn read_body(r: &mut Reader<'_>) -> Result<Self, PreError> {
        let attribute = AttributeId(r.u32()?);
        let from_version = r.u32()?;
        let to_version = r.u32()?;
        let factor = r.scalar()?;
        if to_version != from_version.wrapping_add(1) || bool::from(factor.is_zero()) {
            return Err(CodecError::Malformed("re-encryption key versions".into()).into());
        }
        Ok(ReencryptionKey {
            attribute,
            from_version,
            to_version,
            factor,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let mut r = Reader::with_header(bytes, Tag::ReencryptionKey)?;
        let rk = Self::read_body(&mut r)?;
        r.finish()?;
        Ok(rk)
    }
}

/// Append-only chain of re-encryption keys for one attribute, covering
/// versions `0 → 1 → … → current`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReencryptionKeyHistory {
    attribute: AttributeId,
    keys: Vec<ReencryptionKey>,
}

impl ReencryptionKeyHistory {
    pub fn new(attribute: AttributeId) -> Self {
        ReencryptionKeyHistory {
            attribute,
            keys: Vec::new(),
        }
    }

    pub fn attribute(&self) -> AttributeId {
        self.attribute
    }

    pub fn current_version(&self) -> u32 {
        self.keys.len() as u32
    }

    pub fn keys(&self) -> &[ReencryptionKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn append(&mut self, rk: ReencryptionKey) -> Result<(), PreError> {
        if rk.attribute != self.attribute {
            return Err(PreError::WrongHistory {
                history: self.attribute,
                component: rk.attribute,
            });
        }
        let current = self.current_version();
        if rk.from_version != current || rk.to_version != current + 1 {
            return Err(PreError::BrokenChain {
                attribute: self.attribute,
                from: rk.from_version,
                to: rk.to_version,
                current,
            });
        }
        self.keys.push(rk);
        Ok(())
    }

    /// Factors that take a component from `version` to the current version.
    fn factors_from(
        &self,
        attribute: AttributeId,
        version: u32,
    ) -> Result<&[ReencryptionKey], PreError> {
        if attribute != self.attribute {
            return Err(PreError::WrongHistory {
                history: self.attribute,
                component: attribute,
            });
        }
        let current = self.current_version();
        if version > current {
            return Err(PreError::FutureVersion {
                attribute,
                version,
                current,
            });
        }
        let tail = &self.keys[version as usize..];
        for (k, rk) in tail.iter().enumerate() {
            if rk.from_version != version + k as u32 {
                return Err(PreError::MissingHistorySegment {
                    attribute,
                    version: version + k as u32,
                });
            }
        }
        Ok(tail)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(Tag::ReencryptionKeyHistory);
        self.write_body(&mut w);
        w.finish()
    }

    pub(crate) fn write_body(&self, w: &mut Writer) {
        w.u32(self.attribute.0).u32(self.keys.len() as u32);
        for rk in &self.keys {
            rk.write_body(w);
        }
    }

    pub(crate) fn read_body(r: &mut Reader<'_>) -> Result<Self, PreError> {
        let mut h = ReencryptionKeyHistory::new(AttributeId(r.u32()?));
        let n = r.u32()?;
        for _ in 0..n {
            h.append(ReencryptionKey::read_body(r)?)?;
        }
        Ok(h)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let mut r = Reader::with_header(bytes, Tag::ReencryptionKeyHistory)?;
        let h = Self::read_body(&mut r)?;
        r.finish()?;
        Ok(h)
    }
}

/// Current version of every attribute. Time attributes stay at version 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeVersionTable {
    versions: BTreeMap<AttributeId, u32>,
    time: BTreeSet<AttributeId>,
}

impl AttributeVersionTable {
    pub fn new(universe: &Universe) -> Self {
        AttributeVersionTable {
            versions: universe.ids().map(|a| (a, 0)).collect(),
            time: universe.time_ids().collect(),
        }
    }

    pub fn version(&self, attr: AttributeId) -> Option<u32> {
        self.versions.get(&attr).copied()
    }

    pub fn bump(&mut self, attr: AttributeId) -> Result<u32, PreError> {
        if self.time.contains(&attr) {
            return Err(PreError::TimeAttribute(attr));
        }
        let v = self
            .versions
            .get_mut(&attr)
            .ok_or(PreError::UnknownAttribute(attr))?;
        *v += 1;
        Ok(*v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AttributeId, u32)> + '_ {
        self.versions.iter().map(|(a, v)| (*a, *v))
    }

    /// Attributes whose version is above zero.
    pub fn updated(&self) -> impl Iterator<Item = AttributeId> + '_ {
        self.versions.iter().filter(|(_, v)| **v > 0).map(|(a, _)| *a)
    }
}

#[derive(Debug, Clone)]
pub struct AttributeUpdate {
    pub secret: Versioned<Scalar>,
    pub public: Versioned<G1Affine>,
    pub rekey: ReencryptionKey,
}

/// Moves attribute `attr` to its next version in both the master key and the
/// public parameters, returning the bridging re-encryption key.
pub fn update_attribute(
    universe: &Universe,
    attr: AttributeId,
    mk: &mut MasterKey,
    pk: &mut PublicParams,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<AttributeUpdate, PreError> {
    match universe.class(attr) {
        None => return Err(PreError::UnknownAttribute(attr)),
        Some(AttributeClass::Time) => return Err(PreError::TimeAttribute(attr)),
        Some(AttributeClass::Road) => {}
    }
    let old = mk.t[attr.index()];
    let new_secret = Scalar::random(&mut *rng);
    let factor = new_secret * old.value.invert().expect("attribute secrets are nonzero");
    let version = old.version + 1;
    let secret = Versioned {
        version,
        value: new_secret,
    };
    let public = Versioned {
        version,
        value: (G1Affine::generator() * new_secret).to_affine(),
    };
    mk.t[attr.index()] = secret;
    pk.t[attr.index()] = public;
    Ok(AttributeUpdate {
        secret,
        public,
        rekey: ReencryptionKey {
            attribute: attr,
            from_version: old.version,
            to_version: version,
            factor,
        },
    })
}

pub fn update_ciphertext_component(
    attr: AttributeId,
    component: &Versioned<G1Affine>,
    history: &ReencryptionKeyHistory,
) -> Result<Versioned<G1Affine>, PreError> {
    let steps = history.factors_from(attr, component.version)?;
    if steps.is_empty() {
        return Ok(*component);
    }
    let value = steps
        .iter()
        .fold(component.value, |acc, rk| (acc * rk.factor).to_affine());
    Ok(Versioned {
        version: history.current_version(),
        value,
    })
}

pub fn update_key_component(
    attr: AttributeId,
    component: &Versioned<G2Affine>,
    history: &ReencryptionKeyHistory,
) -> Result<Versioned<G2Affine>, PreError> {
    let steps = history.factors_from(attr, component.version)?;
    if steps.is_empty() {
        return Ok(*component);
    }
    let value = steps.iter().fold(component.value, |acc, rk| {
        let inv = rk.factor.invert().expect("re-encryption factors are nonzero");
        (acc * inv).to_affine()
    });
    Ok(Versioned {
        version: history.current_version(),
        value,
    })
}

/// Brings every stale ciphertext component up to date. Attributes without a
/// history (time attributes) are left alone. Returns the attributes touched.
pub fn refresh_ciphertext(
    ct: &mut Ciphertext,
    histories: &BTreeMap<AttributeId, ReencryptionKeyHistory>,
) -> Result<Vec<AttributeId>, PreError> {
    let mut touched = Vec::new();
    for (attr, comp) in ct.components.iter_mut() {
        if let Some(h) = histories.get(attr) {
            if comp.version < h.current_version() {
                *comp = update_ciphertext_component(*attr, comp, h)?;
                touched.push(*attr);
            }
        }
    }
    Ok(touched)
}

/// Key-side counterpart of [`refresh_ciphertext`].
pub fn refresh_key(
    dk: &mut DecryptionKey,
    histories: &BTreeMap<AttributeId, ReencryptionKeyHistory>,
) -> Result<Vec<AttributeId>, PreError> {
    let mut touched = Vec::new();
    for (attr, comp) in dk.components.iter_mut() {
        if let Some(h) = histories.get(attr) {
            if comp.version < h.current_version() {
                *comp = update_key_component(*attr, comp, h)?;
                touched.push(*attr);
            }
        }
    }
    Ok(touched)
}
