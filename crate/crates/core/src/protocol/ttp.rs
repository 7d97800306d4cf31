//! Trusted third party: owns the master key, issues and revokes keys, and
//! seals one data encryption key per device per day.

use std::collections::{BTreeMap, BTreeSet};

use rand_core::{CryptoRng, RngCore};

use crate::attrspace::{AttributePool, AttributeSpace, PolicySpec, UserPolicy};
use crate::citysim::city::{DeviceId, DevicePlacement};
use crate::kpabe::{self, AttributeId, MasterKey, Payload, PublicParams, SecurityLevel};
use crate::pre::{self, AttributeVersionTable};

use super::crypto::{self, PkeSender, Signer, SymKey, Verifier};
use super::css::{ComponentMap, CssStore};
use super::messages::{MessageKind, SignedMessage};
use super::payloads::{self, BootMaterial};
use super::{ProtocolError, SealId, UserId};

/// Boot-material keys derived from a device's long-term key.
pub(crate) fn boot_keys(k_lt: &SymKey) -> (SymKey, SymKey) {
    (crypto::kdf("boot-enc", k_lt), crypto::kdf("boot-mac", k_lt))
}

pub(crate) fn boot_nonce(id: &SealId) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[..4].copy_from_slice(&id.day.to_be_bytes());
    n[4..8].copy_from_slice(&id.generation.to_be_bytes());
    n[8..].copy_from_slice(&id.device.to_be_bytes());
    n
}

pub(crate) fn seal_id_bytes(id: &SealId) -> [u8; 12] {
    boot_nonce(id)
}

pub(crate) fn boot_mac_input(dek: &SymKey, id: &SealId) -> Vec<u8> {
    let mut v = dek.to_vec();
    v.extend_from_slice(&seal_id_bytes(id));
    v
}

/// The day's first data key, derived from the sealed target-group payload.
pub fn derive_dek0(payload: &Payload) -> SymKey {
    crypto::kdf("dek0", &payload.to_bytes())
}

#[derive(Debug, Clone)]
pub struct IssuedKey {
    pub spec: PolicySpec,
    pub policy: UserPolicy,
    /// `μ`, the road attributes of the key.
    pub road: BTreeSet<AttributeId>,
}

#[derive(Debug, Clone)]
struct TtpUser {
    public_key: Vec<u8>,
    key: Option<IssuedKey>,
    revoked: bool,
}

pub struct Ttp {
    space: AttributeSpace,
    mk: MasterKey,
    pk: PublicParams,
    signer: Box<dyn Signer>,
    pke: Box<dyn PkeSender>,
    pool: AttributePool,
    versions: AttributeVersionTable,
    k_lt: BTreeMap<DeviceId, SymKey>,
    devices: Vec<DevicePlacement>,
    users: BTreeMap<UserId, TtpUser>,
    generations: BTreeMap<u32, u32>,
    today: u32,
}

impl std::fmt::Debug for Ttp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ttp")
            .field("attributes", &self.space.universe().len())
            .field("devices", &self.devices.len())
            .field("users", &self.users.len())
            .field("today", &self.today)
            .finish()
    }
}

impl Ttp {
    /// Generates the master key and public parameters, one long-term key per
    /// device, and the store with an empty history per road attribute.
    pub fn setup(
        space: AttributeSpace,
        security: SecurityLevel,
        devices: Vec<DevicePlacement>,
        signer: Box<dyn Signer>,
        pke: Box<dyn PkeSender>,
        today: u32,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<(Ttp, CssStore), ProtocolError> {
        let (mk, pk) = kpabe::setup(space.universe(), security, rng)?;
        let k_lt = devices
            .iter()
            .map(|d| (d.id, crypto::random_key(rng)))
            .collect();
        let css = CssStore::new(space.universe());
        let versions = AttributeVersionTable::new(space.universe());
        Ok((
            Ttp {
                space,
                mk,
                pk,
                signer,
                pke,
                pool: AttributePool::new(),
                versions,
                k_lt,
                devices,
                users: BTreeMap::new(),
                generations: BTreeMap::new(),
                today,
            },
            css,
        ))
    }

    pub fn space(&self) -> &AttributeSpace {
        &self.space
    }

    pub fn public_params(&self) -> &PublicParams {
        &self.pk
    }

    pub fn verifier(&self) -> Box<dyn Verifier> {
        self.signer.verifier()
    }

    pub fn pool(&self) -> &AttributePool {
        &self.pool
    }

    pub fn versions(&self) -> &AttributeVersionTable {
        &self.versions
    }

    pub fn today(&self) -> u32 {
        self.today
    }

    pub fn set_today(&mut self, day: u32) {
        self.today = day;
    }

    pub fn devices(&self) -> &[DevicePlacement] {
        &self.devices
    }

    /// Long-term key preloaded into a device at manufacture.
    pub fn provision(&self, device: DeviceId) -> Option<SymKey> {
        self.k_lt.get(&device).copied()
    }

    pub fn issued_key(&self, user: UserId) -> Option<&IssuedKey> {
        self.users.get(&user).and_then(|u| u.key.as_ref())
    }

    pub fn is_revoked(&self, user: UserId) -> bool {
        self.users.get(&user).is_some_and(|u| u.revoked)
    }

    pub fn register_user(&mut self, user: UserId, public_key: Vec<u8>) -> Result<(), ProtocolError> {
        if self.users.contains_key(&user) {
            return Err(ProtocolError::Malformed(format!("user {user} already registered")));
        }
        self.users.insert(
            user,
            TtpUser {
                public_key,
                key: None,
                revoked: false,
            },
        );
        Ok(())
    }

    /// Generates a key for `spec`. Returns the message for the user (signed,
    /// then encrypted to the user's public key) and the signed message for
    /// the store carrying only the road components.
    pub fn issue_key(
        &mut self,
        user: UserId,
        spec: &PolicySpec,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<(Vec<u8>, SignedMessage), ProtocolError> {
        let record = self.users.get(&user).ok_or(ProtocolError::UnknownUser(user))?;
        if record.revoked {
            return Err(ProtocolError::UserRevoked(user));
        }
        if record.key.is_some() {
            return Err(ProtocolError::KeyAlreadyIssued(user));
        }
        let public_key = record.public_key.clone();
        let mut pool = self.pool.clone();
        let policy = self.space.policy_for_user(spec, &mut pool)?;
        let dk = kpabe::keygen(&self.mk, &policy.combined(), rng)?;
        let road = self.space.revocation_attribute_set(&dk);
        let road_components: ComponentMap = dk
            .components()
            .filter(|(a, _)| road.contains(a))
            .map(|(a, c)| (a, *c))
            .collect();

        let to_user = SignedMessage::sign(
            MessageKind::KeyToUser,
            self.today,
            payloads::encode_user_key(user, &dk),
            self.signer.as_ref(),
        );
        let sealed = self.pke.seal(&public_key, &to_user.to_bytes(), rng)?;
        let to_css = SignedMessage::sign(
            MessageKind::KeyToCss,
            self.today,
            payloads::encode_css_key(user, &road_components),
            self.signer.as_ref(),
        );
        self.pool = pool;
        self.users.get_mut(&user).expect("checked above").key = Some(IssuedKey {
            spec: spec.clone(),
            policy,
            road,
        });
        Ok((sealed, to_css))
    }

    fn next_generation(&mut self) -> u32 {
        let g = self.generations.entry(self.today).or_insert(0);
        let out = *g;
        *g += 1;
        out
    }

    /// One seal generation for today: a fresh DEK₀ per device, its sealed key
    /// over the device's label, and boot material under the device's
    /// long-term key.
    pub fn seal(&mut self, rng: &mut (impl RngCore + CryptoRng)) -> Result<Vec<SignedMessage>, ProtocolError> {
        let generation = self.next_generation();
        let mut out = Vec::with_capacity(self.devices.len());
        for d in &self.devices {
            let id = SealId {
                device: d.id,
                day: self.today,
                generation,
            };
            let label = self.space.label_for_device(d.at, self.today)?;
            let payload = Payload::random(rng);
            let ask = kpabe::encrypt(&payload, &label.all(), &self.pk, rng)?;
            let dek0 = derive_dek0(&payload);
            let boot = self.boot_material(d.id, &id, &dek0)?;
            out.push(SignedMessage::sign(
                MessageKind::Seal,
                self.today,
                payloads::encode_seal(&id, &ask, &boot.to_bytes()),
                self.signer.as_ref(),
            ));
        }
        Ok(out)
    }

    fn boot_material(&self, device: DeviceId, id: &SealId, dek0: &SymKey) -> Result<BootMaterial, ProtocolError> {
        let k_lt = self.k_lt.get(&device).ok_or(ProtocolError::UnknownDevice(device))?;
        let (k_enc, k_mac) = boot_keys(k_lt);
        let mut body = dek0.to_vec();
        body.extend_from_slice(&id.day.to_be_bytes());
        let sealed = crypto::aead_seal(&k_enc, &boot_nonce(id), &seal_id_bytes(id), &body);
        let tag = crypto::mac(&k_mac, &boot_mac_input(dek0, id));
        Ok(BootMaterial {
            id: *id,
            sealed,
            tag,
        })
    }

    /// Re-versions every road attribute of `user`'s key and returns the
    /// signed re-encryption keys for the store. The caller runs a fresh seal
    /// afterwards.
    pub fn revoke(
        &mut self,
        user: UserId,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<SignedMessage, ProtocolError> {
        let record = self.users.get(&user).ok_or(ProtocolError::UnknownUser(user))?;
        if record.revoked {
            return Err(ProtocolError::UserRevoked(user));
        }
        let key = record.key.clone().ok_or(ProtocolError::NoKey(user))?;
        let mut rks = Vec::with_capacity(key.road.len());
        for a in &key.road {
            let up = pre::update_attribute(self.space.universe(), *a, &mut self.mk, &mut self.pk, rng)?;
            let v = self.versions.bump(*a)?;
            debug_assert_eq!(v, up.rekey.to_version);
            rks.push(up.rekey);
        }
        self.pool.release(key.road.iter().copied());
        let rec = self.users.get_mut(&user).expect("checked above");
        rec.revoked = true;
        Ok(SignedMessage::sign(
            MessageKind::Revoke,
            self.today,
            payloads::encode_revoke(user, &rks),
            self.signer.as_ref(),
        ))
    }
}
