//! The four actors and their procedures: system setup, key distribution,
//! daily sealing, data production, data consumption and revocation.
//!
//! Actors exchange bytes over a [`fabric::Fabric`]; every TTP-originated
//! message is signed and dated, and receivers accept only today's date.

pub mod crypto;
pub mod css;
pub mod device;
pub mod fabric;
pub mod messages;
pub mod payloads;
pub mod system;
pub mod trace;
pub mod ttp;
pub mod user;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attrspace::AttrSpaceError;
use crate::citysim::city::DeviceId;
use crate::codec::CodecError;
use crate::kpabe::{AbeError, AttributeId, DecryptError};
use crate::pre::PreError;

pub use system::{CitySystem, SealReport, SystemConfig};

pub type UserId = u32;

/// One seal generation of one device on one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SealId {
    pub device: DeviceId,
    pub day: u32,
    pub generation: u32,
}

/// Position of a data item: its seal and its index in the day's hash chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemRef {
    pub device: DeviceId,
    pub day: u32,
    pub generation: u32,
    pub counter: u32,
}

impl ItemRef {
    pub fn new(seal: SealId, counter: u32) -> Self {
        ItemRef {
            device: seal.device,
            day: seal.day,
            generation: seal.generation,
            counter,
        }
    }

    pub fn seal(&self) -> SealId {
        SealId {
            device: self.device,
            day: self.day,
            generation: self.generation,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("signature check failed on {0} message")]
    BadSignature(&'static str),
    #[error("message dated {message}, receiver's date is {today}")]
    StaleDate { message: u32, today: u32 },
    #[error("expected {expected} message, got {found}")]
    WrongMessageKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("message for user {found} delivered to user {expected}")]
    WrongRecipient { expected: UserId, found: UserId },
    #[error("time attribute {0} must never reach the store")]
    TimeComponentAtStore(AttributeId),
    #[error("unknown attribute {0}")]
    UnknownAttribute(AttributeId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("no sealed key for {0:?}")]
    UnknownSeal(SealId),
    #[error("no data item {0:?}")]
    UnknownItem(ItemRef),
    #[error("user {0} is revoked")]
    UserRevoked(UserId),
    #[error("user {0} holds no key")]
    NoKey(UserId),
    #[error("user {0} already holds a key")]
    KeyAlreadyIssued(UserId),
    #[error("device {device} rejected boot material: {reason}")]
    BootRejected { device: DeviceId, reason: String },
    #[error("device {0} has no key for today")]
    NotBooted(DeviceId),
    #[error("⊥ ({0})")]
    Unauthorized(DecryptError),
    #[error("integrity check failed for item {0:?}")]
    Integrity(ItemRef),
    #[error("day {day} outside lifetime [1, {lifetime}]")]
    DayOutOfRange { day: u32, lifetime: u32 },
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Crypto(#[from] crypto::CryptoError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error(transparent)]
    Pre(#[from] PreError),
    #[error(transparent)]
    AttrSpace(#[from] AttrSpaceError),
}

impl ProtocolError {
    /// True for a policy-level refusal, the protocol's ⊥.
    pub fn is_bottom(&self) -> bool {
        matches!(self, ProtocolError::Unauthorized(_))
    }
}
