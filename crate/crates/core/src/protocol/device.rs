//! Sensing device: accepts the day's boot material and encrypts each reading
//! under a key that is hashed forward after use.

use crate::citysim::city::{DeviceId, RoadSegment};

use super::crypto::{self, SymKey};
use super::payloads::BootMaterial;
use super::ttp::{boot_keys, boot_mac_input, boot_nonce, seal_id_bytes};
use super::{ItemRef, ProtocolError, SealId};

const ESD_DOMAIN: &[u8] = b"urban-abe/esd/v1";

/// Associated data binding an encrypted reading to its position.
pub fn esd_aad(item: &ItemRef) -> Vec<u8> {
    let mut v = ESD_DOMAIN.to_vec();
    v.extend_from_slice(&seal_id_bytes(&item.seal()));
    v.extend_from_slice(&item.counter.to_be_bytes());
    v
}

/// Each DEK encrypts exactly one item, so the nonce is fixed.
pub fn encrypt_item(dek: &SymKey, item: &ItemRef, sd: &[u8]) -> Vec<u8> {
    crypto::aead_seal(dek, &[0u8; 12], &esd_aad(item), sd)
}

pub fn decrypt_item(dek: &SymKey, item: &ItemRef, esd: &[u8]) -> Result<Vec<u8>, ProtocolError> {
    crypto::aead_open(dek, &[0u8; 12], &esd_aad(item), esd).map_err(|_| ProtocolError::Integrity(*item))
}

/// What an attacker obtains by capturing a device: the current key and
/// position, nothing older.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceSnapshot {
    pub seal: SealId,
    pub counter: u32,
    pub dek: SymKey,
}

#[derive(Debug, Clone)]
pub struct DeviceState {
    id: DeviceId,
    at: RoadSegment,
    k_lt: SymKey,
    current: Option<(SealId, SymKey, u32)>,
    today: u32,
}

impl DeviceState {
    pub fn new(id: DeviceId, at: RoadSegment, k_lt: SymKey, today: u32) -> Self {
        DeviceState {
            id,
            at,
            k_lt,
            current: None,
            today,
        }
    }

    pub fn id(&self) -> DeviceId {
        self.id
    }

    pub fn location(&self) -> RoadSegment {
        self.at
    }

    pub fn set_today(&mut self, day: u32) {
        self.today = day;
    }

    pub fn current_seal(&self) -> Option<SealId> {
        self.current.map(|(s, _, _)| s)
    }

    pub fn counter(&self) -> Option<u32> {
        self.current.map(|(_, _, c)| c)
    }

    /// Accepts boot material only when it authenticates under this device's
    /// long-term key, carries today's date and is newer than the current
    /// generation. On success the counter restarts at 0.
    pub fn accept_boot(&mut self, bytes: &[u8]) -> Result<SealId, ProtocolError> {
        let reject = |reason: String| ProtocolError::BootRejected {
            device: self.id,
            reason,
        };
        let boot = BootMaterial::from_bytes(bytes).map_err(|e| reject(format!("malformed: {e}")))?;
        if boot.id.device != self.id {
            return Err(reject(format!("addressed to device {}", boot.id.device)));
        }
        let (k_enc, k_mac) = boot_keys(&self.k_lt);
        let body = crypto::aead_open(&k_enc, &boot_nonce(&boot.id), &seal_id_bytes(&boot.id), &boot.sealed)
            .map_err(|_| reject("MAC failure on sealed body".into()))?;
        if body.len() != 36 {
            return Err(reject("bad body length".into()));
        }
        let dek0: SymKey = body[..32].try_into().unwrap();
        let date = u32::from_be_bytes(body[32..].try_into().unwrap());
        crypto::mac_verify(&k_mac, &boot_mac_input(&dek0, &boot.id), &boot.tag)
            .map_err(|_| reject("MAC failure on key and date".into()))?;
        if date != self.today || boot.id.day != date {
            return Err(reject(format!("stale date {date}, today is {}", self.today)));
        }
        if let Some((cur, _, _)) = self.current {
            if cur.day == date && cur.generation >= boot.id.generation {
                return Err(reject(format!(
                    "generation {} not newer than {}",
                    boot.id.generation, cur.generation
                )));
            }
        }
        self.current = Some((boot.id, dek0, 0));
        Ok(boot.id)
    }

    /// Encrypts one reading under the current key, then replaces the key by
    /// its hash and advances the counter.
    pub fn produce(&mut self, sd: &[u8]) -> Result<(ItemRef, Vec<u8>), ProtocolError> {
        let (seal, dek, counter) = self.current.as_mut().ok_or(ProtocolError::NotBooted(self.id))?;
        if seal.day != self.today {
            return Err(ProtocolError::NotBooted(self.id));
        }
        let item = ItemRef::new(*seal, *counter);
        let esd = encrypt_item(dek, &item, sd);
        *dek = crypto::chain_step(dek);
        *counter += 1;
        Ok((item, esd))
    }

    pub fn snapshot(&self) -> Option<DeviceSnapshot> {
        self.current.map(|(seal, dek, counter)| DeviceSnapshot { seal, counter, dek })
    }
}
