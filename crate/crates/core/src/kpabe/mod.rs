//! Key-policy attribute-based encryption over BLS12-381.
//!
//! Goyal-style construction with AND/OR gates compiled to threshold gates
//! (AND = n-of-n, OR = 1-of-n):
//!
//! * setup: `t_i ← Z_r`, `T_i = g1^{t_i}`, `y ← Z_r`, `Y = e(g1, g2)^y`
//! * encrypt: `s ← Z_r`, `ẽ = M·Y^s`, `e_i = T_i^s`
//! * keygen: shares of `y` are pushed down the tree with one random
//!   polynomial per gate; leaf `x` over attribute `i` gets
//!   `dk_i = g2^{q_x(0)/t_i}`
//! * decrypt: `e(e_i, dk_i) = e(g1, g2)^{s·q_x(0)}`; Lagrange interpolation
//!   in the exponent recovers `Y^s`, evaluated as one multi-Miller loop.
//!
//! Every per-attribute secret, public value and component carries a version
//! counter. Version bumps are performed by [`crate::pre`].

mod encoding;
mod policy;
mod universe;

use std::collections::{BTreeMap, BTreeSet};

use blstrs::{Bls12, G1Affine, G1Projective, G2Affine, G2Prepared, G2Projective, Gt, Scalar};
use ff::Field;
use group::{prime::PrimeCurveAffine, Curve, Group};
use pairing::{MillerLoopResult, MultiMillerLoop};
use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

pub use encoding::{component_bytes, decryption_key_encoded_len, policy_encoded_len};
pub use policy::AccessPolicy;
pub use universe::{AttributeClass, AttributeId, Universe};

use crate::codec::{self, CodecError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbeError {
    #[error("attribute universe is empty")]
    EmptyUniverse,
    #[error("duplicate attribute name {0:?}")]
    DuplicateAttribute(String),
    #[error("attribute {0} is not in the universe")]
    UnknownAttribute(AttributeId),
    #[error("unknown attribute name {0:?}")]
    UnknownAttributeName(String),
    #[error("encryption attribute set is empty")]
    EmptyAttributeSet,
    #[error("malformed access policy: {0}")]
    MalformedPolicy(String),
    #[error("policy syntax error: {0}")]
    PolicySyntax(String),
    #[error("requested {requested}-bit security, curve provides at most {supported}")]
    UnsupportedSecurityLevel { requested: u32, supported: u32 },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Failure of [`decrypt`]. `Unsatisfied` is the ⊥ outcome.
#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
pub enum DecryptError {
    #[error("ciphertext attributes do not satisfy the key policy")]
    Unsatisfied,
    #[error("attribute {attribute}: ciphertext component at version {ciphertext_version}, key component at version {key_version}")]
    VersionMismatch {
        attribute: AttributeId,
        ciphertext_version: u32,
        key_version: u32,
    },
}

/// Estimated security of BLS12-381 after the exTNFS improvements.
pub const CURVE_SECURITY_BITS: u32 = 117;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecurityLevel(u32);

impl SecurityLevel {
    pub const BITS_80: SecurityLevel = SecurityLevel(80);

    pub fn new(bits: u32) -> Result<Self, AbeError> {
        if bits == 0 || bits > CURVE_SECURITY_BITS {
            return Err(AbeError::UnsupportedSecurityLevel {
                requested: bits,
                supported: CURVE_SECURITY_BITS,
            });
        }
        Ok(SecurityLevel(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }
}

impl Default for SecurityLevel {
    fn default() -> Self {
        SecurityLevel::BITS_80
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Versioned<T> {
    pub version: u32,
    pub value: T,
}

impl<T> Versioned<T> {
    pub fn initial(value: T) -> Self {
        Versioned { version: 0, value }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey {
    pub(crate) y: Scalar,
    pub(crate) t: Vec<Versioned<Scalar>>,
}

impl std::fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MasterKey")
            .field("attributes", &self.t.len())
            .finish_non_exhaustive()
    }
}

impl MasterKey {
    pub fn attribute_count(&self) -> usize {
        self.t.len()
    }

    pub fn version(&self, attr: AttributeId) -> Option<u32> {
        self.t.get(attr.index()).map(|v| v.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicParams {
    pub(crate) y: Gt,
    pub(crate) t: Vec<Versioned<G1Affine>>,
}

impl PublicParams {
    pub fn attribute_count(&self) -> usize {
        self.t.len()
    }

    pub fn version(&self, attr: AttributeId) -> Option<u32> {
        self.t.get(attr.index()).map(|v| v.version)
    }

    pub fn attribute_public(&self, attr: AttributeId) -> Option<&Versioned<G1Affine>> {
        self.t.get(attr.index())
    }

    pub fn blinding_base(&self) -> &Gt {
        &self.y
    }
}

/// Target-group element carried by a ciphertext; used as key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Payload(pub Gt);

impl Payload {
    pub fn random(rng: &mut (impl RngCore + CryptoRng)) -> Self {
        Payload(Gt::generator() * Scalar::random(rng))
    }

    pub fn to_bytes(&self) -> [u8; codec::GT_BYTES] {
        codec::gt_to_bytes(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub(crate) blinded: Gt,
    pub(crate) components: BTreeMap<AttributeId, Versioned<G1Affine>>,
}

impl Ciphertext {
    /// Encryption attribute set γ.
    pub fn attributes(&self) -> BTreeSet<AttributeId> {
        self.components.keys().copied().collect()
    }

    pub fn component(&self, attr: AttributeId) -> Option<&Versioned<G1Affine>> {
        self.components.get(&attr)
    }

    pub fn components(&self) -> impl Iterator<Item = (AttributeId, &Versioned<G1Affine>)> {
        self.components.iter().map(|(a, c)| (*a, c))
    }

    pub fn set_component(&mut self, attr: AttributeId, c: Versioned<G1Affine>) -> bool {
        match self.components.get_mut(&attr) {
            Some(slot) => {
                *slot = c;
                true
            }
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecryptionKey {
    pub(crate) policy: AccessPolicy,
    pub(crate) components: BTreeMap<AttributeId, Versioned<G2Affine>>,
}

impl DecryptionKey {
    pub fn policy(&self) -> &AccessPolicy {
        &self.policy
    }

    /// Leaf attribute set λ.
    pub fn attributes(&self) -> BTreeSet<AttributeId> {
        self.components.keys().copied().collect()
    }

    pub fn component(&self, attr: AttributeId) -> Option<&Versioned<G2Affine>> {
        self.components.get(&attr)
    }

    pub fn components(&self) -> impl Iterator<Item = (AttributeId, &Versioned<G2Affine>)> {
        self.components.iter().map(|(a, c)| (*a, c))
    }

    /// Replaces the component for `attr`; returns false when `attr ∉ λ`.
    pub fn set_component(&mut self, attr: AttributeId, c: Versioned<G2Affine>) -> bool {
        match self.components.get_mut(&attr) {
            Some(slot) => {
                *slot = c;
                true
            }
            None => false,
        }
    }

    /// Builds a key from a policy and externally held components. Each leaf
    /// needs exactly one component.
    pub fn from_parts(
        policy: AccessPolicy,
        components: BTreeMap<AttributeId, Versioned<G2Affine>>,
    ) -> Result<Self, AbeError> {
        policy.validate(None)?;
        let lambda = policy.attributes();
        if lambda.len() != components.len() || !components.keys().all(|a| lambda.contains(a)) {
            return Err(AbeError::MalformedPolicy(
                "key components do not match the policy leaves".into(),
            ));
        }
        Ok(DecryptionKey { policy, components })
    }
}

pub fn setup(
    universe: &Universe,
    _level: SecurityLevel,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<(MasterKey, PublicParams), AbeError> {
    if universe.is_empty() {
        return Err(AbeError::EmptyUniverse);
    }
    let y = Scalar::random(&mut *rng);
    let secrets: Vec<Scalar> = (0..universe.len()).map(|_| Scalar::random(&mut *rng)).collect();
    let projective: Vec<G1Projective> = secrets
        .iter()
        .map(|t| G1Projective::generator() * t)
        .collect();
    let mut publics = vec![G1Affine::identity(); projective.len()];
    G1Projective::batch_normalize(&projective, &mut publics);

    let mk = MasterKey {
        y,
        t: secrets.into_iter().map(Versioned::initial).collect(),
    };
    let pk = PublicParams {
        y: Gt::generator() * y,
        t: publics.into_iter().map(Versioned::initial).collect(),
    };
    Ok((mk, pk))
}

pub fn encrypt(
    payload: &Payload,
    attributes: &BTreeSet<AttributeId>,
    pk: &PublicParams,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Ciphertext, AbeError> {
    if attributes.is_empty() {
        return Err(AbeError::EmptyAttributeSet);
    }
    if let Some(bad) = attributes.iter().find(|a| a.index() >= pk.t.len()) {
        return Err(AbeError::UnknownAttribute(*bad));
    }
    let s = Scalar::random(&mut *rng);
    let ids: Vec<AttributeId> = attributes.iter().copied().collect();
    let projective: Vec<G1Projective> = ids.iter().map(|a| pk.t[a.index()].value * s).collect();
    let mut affine = vec![G1Affine::identity(); projective.len()];
    G1Projective::batch_normalize(&projective, &mut affine);
    let components = ids
        .iter()
        .zip(affine)
        .map(|(a, value)| {
            (
                *a,
                Versioned {
                    version: pk.t[a.index()].version,
                    value,
                },
            )
        })
        .collect();
    Ok(Ciphertext {
        blinded: payload.0 + pk.y * s,
        components,
    })
}

pub fn keygen(
    mk: &MasterKey,
    policy: &AccessPolicy,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<DecryptionKey, AbeError> {
    policy.validate(None)?;
    if let Some(bad) = policy.attributes().into_iter().find(|a| a.index() >= mk.t.len()) {
        return Err(AbeError::UnknownAttribute(bad));
    }
    let mut components = BTreeMap::new();
    share(mk, policy, mk.y, rng, &mut components);
    Ok(DecryptionKey {
        policy: policy.clone(),
        components,
    })
}

fn share(
    mk: &MasterKey,
    node: &AccessPolicy,
    secret: Scalar,
    rng: &mut (impl RngCore + CryptoRng),
    out: &mut BTreeMap<AttributeId, Versioned<G2Affine>>,
) {
    match node {
        AccessPolicy::Leaf(a) => {
            let t = &mk.t[a.index()];
            let inv = t.value.invert().expect("attribute secrets are nonzero");
            out.insert(
                *a,
                Versioned {
                    version: t.version,
                    value: (G2Projective::generator() * (secret * inv)).to_affine(),
                },
            );
        }
        AccessPolicy::Or(children) => {
            for c in children {
                share(mk, c, secret, rng, out);
            }
        }
        AccessPolicy::And(children) => {
            // Degree n-1 polynomial with q(0) = secret; child i gets q(i).
            let coeffs: Vec<Scalar> = std::iter::once(secret)
                .chain((1..children.len()).map(|_| Scalar::random(&mut *rng)))
                .collect();
            for (i, c) in children.iter().enumerate() {
                let x = Scalar::from(i as u64 + 1);
                let value = coeffs.iter().rev().fold(Scalar::ZERO, |acc, k| acc * x + k);
                share(mk, c, value, rng, out);
            }
        }
    }
}

/// Lagrange coefficient at zero for index `i` over the index set `set`.
fn lagrange_at_zero(i: u64, set: &[u64]) -> Scalar {
    let xi = Scalar::from(i);
    let mut num = Scalar::ONE;
    let mut den = Scalar::ONE;
    for &j in set.iter().filter(|&&j| j != i) {
        let xj = Scalar::from(j);
        num *= xj;
        den *= xj - xi;
    }
    num * den.invert().expect("distinct interpolation points")
}

/// Chooses leaves satisfying the tree and their interpolation weights.
fn plan(
    node: &AccessPolicy,
    usable: &impl Fn(AttributeId) -> bool,
) -> Option<Vec<(AttributeId, Scalar)>> {
    match node {
        AccessPolicy::Leaf(a) => usable(*a).then(|| vec![(*a, Scalar::ONE)]),
        AccessPolicy::Or(children) => children.iter().find_map(|c| plan(c, usable)),
        AccessPolicy::And(children) => {
            let plans = children
                .iter()
                .map(|c| plan(c, usable))
                .collect::<Option<Vec<_>>>()?;
            let set: Vec<u64> = (1..=children.len() as u64).collect();
            let mut out = Vec::new();
            for (i, p) in plans.into_iter().enumerate() {
                let w = lagrange_at_zero(i as u64 + 1, &set);
                out.extend(p.into_iter().map(|(a, c)| (a, c * w)));
            }
            Some(out)
        }
    }
}

fn combine(ct: &Ciphertext, dk: &DecryptionKey, weights: &[(AttributeId, Scalar)]) -> Payload {
    let lhs: Vec<G1Affine> = weights
        .iter()
        .map(|(a, w)| {
            let e = ct.components[a].value;
            if *w == Scalar::ONE {
                e
            } else {
                (e * w).to_affine()
            }
        })
        .collect();
    let rhs: Vec<G2Prepared> = weights
        .iter()
        .map(|(a, _)| G2Prepared::from(dk.components[a].value))
        .collect();
    let terms: Vec<(&G1Affine, &G2Prepared)> = lhs.iter().zip(rhs.iter()).collect();
    let mask = Bls12::multi_miller_loop(&terms).final_exponentiation();
    Payload(ct.blinded - mask)
}

/// Recovers the payload when γ satisfies the key policy using components
/// whose versions match.
pub fn decrypt(ct: &Ciphertext, dk: &DecryptionKey) -> Result<Payload, DecryptError> {
    let matching = |a: AttributeId| match (ct.components.get(&a), dk.components.get(&a)) {
        (Some(e), Some(d)) => e.version == d.version,
        _ => false,
    };
    if let Some(weights) = plan(&dk.policy, &matching) {
        return Ok(combine(ct, dk, &weights));
    }
    let present = |a: AttributeId| ct.components.contains_key(&a) && dk.components.contains_key(&a);
    match plan(&dk.policy, &present) {
        None => Err(DecryptError::Unsatisfied),
        Some(weights) => {
            let (attribute, e, d) = weights
                .iter()
                .map(|(a, _)| (*a, ct.components[a].version, dk.components[a].version))
                .find(|(_, e, d)| e != d)
                .expect("a mismatched component blocks the version-checked plan");
            Err(DecryptError::VersionMismatch {
                attribute,
                ciphertext_version: e,
                key_version: d,
            })
        }
    }
}

/// Decrypts without comparing version stamps. With components at different
/// versions the result is an unrelated payload; this models a party that
/// relabels stale components.
pub fn decrypt_ignoring_versions(ct: &Ciphertext, dk: &DecryptionKey) -> Option<Payload> {
    let present = |a: AttributeId| ct.components.contains_key(&a) && dk.components.contains_key(&a);
    plan(&dk.policy, &present).map(|w| combine(ct, dk, &w))
}

/// Plain Boolean policy evaluation, the reference for [`decrypt`].
pub fn eval_policy(policy: &AccessPolicy, attributes: &BTreeSet<AttributeId>) -> bool {
    policy.is_satisfied_by(attributes)
}

#[cfg(test)]
mod tests;
