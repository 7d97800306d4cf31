//! Data consumer: holds the full decryption key, including the time
//! components the store never sees.

use crate::kpabe::{self, DecryptionKey};

use super::crypto::{self, PkeRecipient, Verifier};
use super::css::ConsumeResponse;
use super::device::decrypt_item;
use super::messages::{MessageKind, SignedMessage};
use super::payloads;
use super::ttp::derive_dek0;
use super::{ItemRef, ProtocolError, UserId};

pub struct UserState {
    id: UserId,
    pke: Box<dyn PkeRecipient>,
    ttp: Box<dyn Verifier>,
    dk: Option<DecryptionKey>,
    today: u32,
}

impl std::fmt::Debug for UserState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UserState")
            .field("id", &self.id)
            .field("has_key", &self.dk.is_some())
            .field("today", &self.today)
            .finish()
    }
}

impl UserState {
    pub fn new(id: UserId, pke: Box<dyn PkeRecipient>, ttp: Box<dyn Verifier>, today: u32) -> Self {
        UserState {
            id,
            pke,
            ttp,
            dk: None,
            today,
        }
    }

    pub fn id(&self) -> UserId {
        self.id
    }

    pub fn public_key(&self) -> Vec<u8> {
        self.pke.public_key()
    }

    pub fn key(&self) -> Option<&DecryptionKey> {
        self.dk.as_ref()
    }

    pub fn set_today(&mut self, day: u32) {
        self.today = day;
    }

    /// Opens, verifies and installs a key message from the TTP.
    pub fn accept_key(&mut self, sealed: &[u8]) -> Result<(), ProtocolError> {
        let inner = self.pke.open(sealed)?;
        let msg = SignedMessage::from_bytes(&inner)?;
        let payload = msg.verify(MessageKind::KeyToUser, self.ttp.as_ref(), self.today)?;
        let (user, dk) = payloads::decode_user_key(payload)?;
        if user != self.id {
            return Err(ProtocolError::WrongRecipient {
                expected: self.id,
                found: user,
            });
        }
        self.dk = Some(dk);
        Ok(())
    }

    /// Installs refreshed road components, opens the sealed key, walks the
    /// hash chain to the item's counter and decrypts the item.
    pub fn consume(&mut self, item: ItemRef, resp: &ConsumeResponse) -> Result<Vec<u8>, ProtocolError> {
        let dk = self.dk.as_mut().ok_or(ProtocolError::NoKey(self.id))?;
        if let Some(comps) = &resp.components {
            for (a, c) in comps {
                if dk.component(*a).is_some_and(|old| old.version <= c.version) {
                    dk.set_component(*a, *c);
                }
            }
        }
        if resp.counter != item.counter {
            return Err(ProtocolError::Malformed("response counter mismatch".into()));
        }
        let payload = kpabe::decrypt(&resp.ask, dk).map_err(ProtocolError::Unauthorized)?;
        let dek = crypto::chain_forward(&derive_dek0(&payload), resp.counter);
        decrypt_item(&dek, &item, &resp.esd)
    }
}
