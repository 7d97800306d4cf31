//! Byte layouts of message payloads. All use headerless [`Writer`] bodies
//! carried inside a [`super::messages::SignedMessage`] or sent raw.

use std::collections::BTreeMap;

use crate::codec::{CodecError, Reader, Tag, Writer};
use crate::kpabe::{AttributeId, Ciphertext, DecryptionKey, Versioned};
use crate::pre::ReencryptionKey;

use super::css::{ComponentMap, ConsumeResponse};
use super::{ItemRef, ProtocolError, SealId, UserId};

pub fn encode_user_key(user: UserId, dk: &DecryptionKey) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(user).bytes(&dk.to_bytes());
    w.finish()
}

pub fn decode_user_key(bytes: &[u8]) -> Result<(UserId, DecryptionKey), ProtocolError> {
    let mut r = Reader::new(bytes);
    let user = r.u32()?;
    let dk = DecryptionKey::from_bytes(r.bytes()?)?;
    r.finish()?;
    Ok((user, dk))
}

fn write_components(w: &mut Writer, comps: &ComponentMap) {
    w.u32(comps.len() as u32);
    for (a, c) in comps {
        w.u32(a.0).u32(c.version).g2(&c.value);
    }
}

fn read_components(r: &mut Reader<'_>) -> Result<ComponentMap, CodecError> {
    let n = r.u32()?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let a = AttributeId(r.u32()?);
        let version = r.u32()?;
        let value = r.g2()?;
        if out.insert(a, Versioned { version, value }).is_some() {
            return Err(CodecError::Malformed(format!("duplicate component {a}")));
        }
    }
    Ok(out)
}

pub fn encode_css_key(user: UserId, comps: &ComponentMap) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(user);
    write_components(&mut w, comps);
    w.finish()
}

pub fn decode_css_key(bytes: &[u8]) -> Result<(UserId, ComponentMap), ProtocolError> {
    let mut r = Reader::new(bytes);
    let user = r.u32()?;
    let comps = read_components(&mut r)?;
    r.finish()?;
    Ok((user, comps))
}

pub(crate) fn write_seal_id(w: &mut Writer, id: &SealId) {
    w.u32(id.device).u32(id.day).u32(id.generation);
}

pub(crate) fn read_seal_id(r: &mut Reader<'_>) -> Result<SealId, CodecError> {
    Ok(SealId {
        device: r.u32()?,
        day: r.u32()?,
        generation: r.u32()?,
    })
}

pub fn encode_seal(id: &SealId, ask: &Ciphertext, boot: &[u8]) -> Vec<u8> {
    let mut w = Writer::default();
    write_seal_id(&mut w, id);
    w.bytes(&ask.to_bytes()).bytes(boot);
    w.finish()
}

pub fn decode_seal(bytes: &[u8]) -> Result<(SealId, Ciphertext, Vec<u8>), ProtocolError> {
    let mut r = Reader::new(bytes);
    let id = read_seal_id(&mut r)?;
    let ask = Ciphertext::from_bytes(r.bytes()?)?;
    let boot = r.bytes()?.to_vec();
    r.finish()?;
    Ok((id, ask, boot))
}

pub fn encode_revoke(user: UserId, rks: &[ReencryptionKey]) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(user).u32(rks.len() as u32);
    for rk in rks {
        rk.write_body(&mut w);
    }
    w.finish()
}

pub fn decode_revoke(bytes: &[u8]) -> Result<(UserId, Vec<ReencryptionKey>), ProtocolError> {
    let mut r = Reader::new(bytes);
    let user = r.u32()?;
    let n = r.u32()?;
    let rks = (0..n)
        .map(|_| ReencryptionKey::read_body(&mut r))
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok((user, rks))
}

/// Boot material for one device and seal generation: the day's initial DEK
/// and date under authenticated encryption, plus a MAC over both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootMaterial {
    pub id: SealId,
    pub sealed: Vec<u8>,
    pub tag: [u8; 32],
}

impl BootMaterial {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(Tag::BootMaterial);
        write_seal_id(&mut w, &self.id);
        w.bytes(&self.sealed).raw(&self.tag);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::with_header(bytes, Tag::BootMaterial)?;
        let id = read_seal_id(&mut r)?;
        let sealed = r.bytes()?.to_vec();
        let tag = r.raw(32)?.try_into().expect("32 bytes");
        r.finish()?;
        Ok(BootMaterial { id, sealed, tag })
    }
}

pub fn encode_item_request(user: UserId, item: &ItemRef) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(user);
    write_seal_id(&mut w, &item.seal());
    w.u32(item.counter);
    w.finish()
}

pub fn decode_item_request(bytes: &[u8]) -> Result<(UserId, ItemRef), ProtocolError> {
    let mut r = Reader::new(bytes);
    let user = r.u32()?;
    let id = read_seal_id(&mut r)?;
    let counter = r.u32()?;
    r.finish()?;
    Ok((user, ItemRef::new(id, counter)))
}

pub fn encode_response(resp: &ConsumeResponse) -> Vec<u8> {
    let mut w = Writer::default();
    match &resp.components {
        Some(c) => {
            w.u8(1);
            write_components(&mut w, c);
        }
        None => {
            w.u8(0);
        }
    }
    w.bytes(&resp.ask.to_bytes()).bytes(&resp.esd).u32(resp.counter);
    w.finish()
}

pub fn decode_response(bytes: &[u8]) -> Result<ConsumeResponse, ProtocolError> {
    let mut r = Reader::new(bytes);
    let components = match r.u8()? {
        0 => None,
        1 => Some(read_components(&mut r)?),
        other => return Err(CodecError::Malformed(format!("component flag {other}")).into()),
    };
    let ask = Ciphertext::from_bytes(r.bytes()?)?;
    let esd = r.bytes()?.to_vec();
    let counter = r.u32()?;
    r.finish()?;
    Ok(ConsumeResponse {
        components,
        ask,
        esd,
        counter,
    })
}

pub fn encode_item(item: &ItemRef, esd: &[u8]) -> Vec<u8> {
    let mut w = Writer::default();
    write_seal_id(&mut w, &item.seal());
    w.u32(item.counter).bytes(esd);
    w.finish()
}

pub fn decode_item(bytes: &[u8]) -> Result<(ItemRef, Vec<u8>), ProtocolError> {
    let mut r = Reader::new(bytes);
    let id = read_seal_id(&mut r)?;
    let counter = r.u32()?;
    let esd = r.bytes()?.to_vec();
    r.finish()?;
    Ok((ItemRef::new(id, counter), esd))
}
