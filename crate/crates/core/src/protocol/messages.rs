//! Signed, dated envelopes for every TTP-originated message.
//!
//! The signature covers `domain ‖ kind ‖ date ‖ payload`, so changing any
//! field invalidates it.

use crate::codec::{CodecError, Reader, Tag, Writer};

use super::crypto::{Signer, Verifier};
use super::ProtocolError;

const SIGN_DOMAIN: &[u8] = b"urban-abe/msg/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    KeyToUser = 1,
    KeyToCss = 2,
    Seal = 3,
    Revoke = 4,
}

impl MessageKind {
    fn from_u8(v: u8) -> Result<Self, CodecError> {
        Ok(match v {
            1 => MessageKind::KeyToUser,
            2 => MessageKind::KeyToCss,
            3 => MessageKind::Seal,
            4 => MessageKind::Revoke,
            other => return Err(CodecError::Malformed(format!("message kind {other}"))),
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            MessageKind::KeyToUser => "key-to-user",
            MessageKind::KeyToCss => "key-to-css",
            MessageKind::Seal => "seal",
            MessageKind::Revoke => "revoke",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedMessage {
    pub kind: MessageKind,
    pub date: u32,
    pub payload: Vec<u8>,
    pub signature: Vec<u8>,
}

fn signing_bytes(kind: MessageKind, date: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(SIGN_DOMAIN.len() + 5 + payload.len());
    out.extend_from_slice(SIGN_DOMAIN);
    out.push(kind as u8);
    out.extend_from_slice(&date.to_be_bytes());
    out.extend_from_slice(payload);
    out
}

impl SignedMessage {
    pub fn sign(kind: MessageKind, date: u32, payload: Vec<u8>, signer: &dyn Signer) -> Self {
        let signature = signer.sign(&signing_bytes(kind, date, &payload));
        SignedMessage {
            kind,
            date,
            payload,
            signature,
        }
    }

    /// Checks kind, signature and that `date` equals the receiver's clock.
    pub fn verify(
        &self,
        expected: MessageKind,
        verifier: &dyn Verifier,
        today: u32,
    ) -> Result<&[u8], ProtocolError> {
        if self.kind != expected {
            return Err(ProtocolError::WrongMessageKind {
                expected: expected.label(),
                found: self.kind.label(),
            });
        }
        if !verifier.verify(&signing_bytes(self.kind, self.date, &self.payload), &self.signature) {
            return Err(ProtocolError::BadSignature(self.kind.label()));
        }
        if self.date != today {
            return Err(ProtocolError::StaleDate {
                message: self.date,
                today,
            });
        }
        Ok(&self.payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(Tag::SignedMessage);
        w.u8(self.kind as u8)
            .u32(self.date)
            .bytes(&self.payload)
            .bytes(&self.signature);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::with_header(bytes, Tag::SignedMessage)?;
        let kind = MessageKind::from_u8(r.u8()?)?;
        let date = r.u32()?;
        let payload = r.bytes()?.to_vec();
        let signature = r.bytes()?.to_vec();
        r.finish()?;
        Ok(SignedMessage {
            kind,
            date,
            payload,
            signature,
        })
    }
}
