//! Honest-but-curious cloud storage.
//!
//! The store holds re-encryption key histories, the road components of every
//! live key, boot material, sealed keys and encrypted data. It never holds a
//! time component, a master secret or a device long-term key; every user
//! component write is checked against the time attribute set.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use blstrs::G2Affine;

use crate::codec::{CodecError, Reader, Tag, Writer};
use crate::kpabe::{AttributeId, Ciphertext, Universe, Versioned};
use crate::pre::{self, ReencryptionKey, ReencryptionKeyHistory};

use super::crypto::Verifier;
use super::messages::{MessageKind, SignedMessage};
use super::payloads::{self, read_seal_id, write_seal_id};
use super::{ItemRef, ProtocolError, SealId, UserId};

pub type ComponentMap = BTreeMap<AttributeId, Versioned<G2Affine>>;

/// What the store hands a user asking for one data item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsumeResponse {
    /// Up-to-date road components; `None` when the store holds none for the
    /// requester.
    pub components: Option<ComponentMap>,
    pub ask: Ciphertext,
    pub esd: Vec<u8>,
    pub counter: u32,
}

#[derive(Debug, Clone)]
pub struct CssStore {
    time_attrs: BTreeSet<AttributeId>,
    histories: BTreeMap<AttributeId, ReencryptionKeyHistory>,
    versions: BTreeMap<AttributeId, u32>,
    user_components: BTreeMap<UserId, ComponentMap>,
    boot: BTreeMap<SealId, Vec<u8>>,
    asks: BTreeMap<SealId, Ciphertext>,
    data: BTreeMap<SealId, Vec<Vec<u8>>>,
    writes: u64,
}

/// Equality of stored contents; the write counter is per session.
impl PartialEq for CssStore {
    fn eq(&self, other: &Self) -> bool {
        self.time_attrs == other.time_attrs
            && self.histories == other.histories
            && self.versions == other.versions
            && self.user_components == other.user_components
            && self.boot == other.boot
            && self.asks == other.asks
            && self.data == other.data
    }
}

impl Eq for CssStore {}

impl CssStore {
    /// Empty store with one empty history per road attribute.
    pub fn new(universe: &Universe) -> Self {
        CssStore {
            time_attrs: universe.time_ids().collect(),
            histories: universe
                .road_ids()
                .map(|a| (a, ReencryptionKeyHistory::new(a)))
                .collect(),
            versions: universe.road_ids().map(|a| (a, 0)).collect(),
            user_components: BTreeMap::new(),
            boot: BTreeMap::new(),
            asks: BTreeMap::new(),
            data: BTreeMap::new(),
            writes: 0,
        }
    }

    pub fn histories(&self) -> &BTreeMap<AttributeId, ReencryptionKeyHistory> {
        &self.histories
    }

    pub fn version(&self, attr: AttributeId) -> Option<u32> {
        self.versions.get(&attr).copied()
    }

    pub fn user_components(&self, user: UserId) -> Option<&ComponentMap> {
        self.user_components.get(&user)
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.user_components.keys().copied()
    }

    pub fn ask(&self, id: &SealId) -> Option<&Ciphertext> {
        self.asks.get(id)
    }

    pub fn asks(&self) -> impl Iterator<Item = (&SealId, &Ciphertext)> {
        self.asks.iter()
    }

    pub fn boot_material(&self, id: &SealId) -> Option<&[u8]> {
        self.boot.get(id).map(Vec::as_slice)
    }

    pub fn items(&self, id: &SealId) -> &[Vec<u8>] {
        self.data.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn seal_ids(&self) -> impl Iterator<Item = &SealId> {
        self.asks.keys()
    }

    /// Number of successful writes, each of which was audited.
    pub fn write_count(&self) -> u64 {
        self.writes
    }

    /// Re-checks the entries a write touched; everything else is unchanged
    /// since its own write.
    fn committed(&mut self, user: Option<UserId>, attrs: &[AttributeId]) {
        self.writes += 1;
        let check = || -> Result<(), ProtocolError> {
            if let Some(u) = user {
                self.audit_user(u)?;
            }
            attrs.iter().try_for_each(|a| self.audit_history(*a))
        };
        if let Err(e) = check() {
            panic!("store invariant broken after write: {e}");
        }
    }

    pub fn store_user_components(
        &mut self,
        user: UserId,
        components: ComponentMap,
    ) -> Result<(), ProtocolError> {
        if let Some(a) = components.keys().find(|a| self.time_attrs.contains(a)) {
            return Err(ProtocolError::TimeComponentAtStore(*a));
        }
        if let Some(a) = components.keys().find(|a| !self.histories.contains_key(a)) {
            return Err(ProtocolError::UnknownAttribute(*a));
        }
        if components.is_empty() {
            return Err(ProtocolError::Malformed("empty component set".into()));
        }
        self.user_components.insert(user, components);
        self.committed(Some(user), &[]);
        Ok(())
    }

    pub fn erase_user(&mut self, user: UserId) -> bool {
        let had = self.user_components.remove(&user).is_some();
        self.committed(None, &[]);
        had
    }

    pub fn append_rekeys(&mut self, rks: Vec<ReencryptionKey>) -> Result<(), ProtocolError> {
        // Validate the batch against a scratch copy so a bad key leaves the
        // store as it was.
        let mut scratch: BTreeMap<AttributeId, ReencryptionKeyHistory> = BTreeMap::new();
        for rk in rks {
            if self.time_attrs.contains(&rk.attribute) {
                return Err(ProtocolError::TimeComponentAtStore(rk.attribute));
            }
            let h = match scratch.get_mut(&rk.attribute) {
                Some(h) => h,
                None => {
                    let base = self
                        .histories
                        .get(&rk.attribute)
                        .ok_or(ProtocolError::UnknownAttribute(rk.attribute))?
                        .clone();
                    scratch.entry(rk.attribute).or_insert(base)
                }
            };
            h.append(rk)?;
        }
        let touched: Vec<AttributeId> = scratch.keys().copied().collect();
        for (a, h) in scratch {
            self.versions.insert(a, h.current_version());
            self.histories.insert(a, h);
        }
        self.committed(None, &touched);
        Ok(())
    }

    pub fn store_seal(&mut self, id: SealId, ask: Ciphertext, boot: Vec<u8>) -> Result<(), ProtocolError> {
        if self.asks.contains_key(&id) {
            return Err(ProtocolError::Malformed(format!("seal {id:?} already stored")));
        }
        self.asks.insert(id, ask);
        self.boot.insert(id, boot);
        self.committed(None, &[]);
        Ok(())
    }

    /// Appends an item; its index must equal the device's counter.
    pub fn append_item(&mut self, id: SealId, counter: u32, esd: Vec<u8>) -> Result<(), ProtocolError> {
        if !self.asks.contains_key(&id) {
            return Err(ProtocolError::UnknownSeal(id));
        }
        let list = self.data.entry(id).or_default();
        if list.len() as u32 != counter {
            return Err(ProtocolError::Malformed(format!(
                "item counter {counter} but {} items stored",
                list.len()
            )));
        }
        list.push(esd);
        self.committed(None, &[]);
        Ok(())
    }

    /// Serves one item, first bringing the requester's stored components and
    /// the item's sealed key up to the current attribute versions.
    pub fn serve(&mut self, user: UserId, item: ItemRef) -> Result<ConsumeResponse, ProtocolError> {
        let id = item.seal();
        let esd = self
            .data
            .get(&id)
            .and_then(|l| l.get(item.counter as usize))
            .cloned()
            .ok_or(ProtocolError::UnknownItem(item))?;
        let ask = self.asks.get_mut(&id).ok_or(ProtocolError::UnknownSeal(id))?;
        pre::refresh_ciphertext(ask, &self.histories)?;
        let ask = ask.clone();
        let components = match self.user_components.get_mut(&user) {
            Some(comps) => {
                for (a, c) in comps.iter_mut() {
                    let h = &self.histories[a];
                    if c.version < h.current_version() {
                        *c = pre::update_key_component(*a, c, h)?;
                    }
                }
                Some(comps.clone())
            }
            None => None,
        };
        self.committed(Some(user), &[]);
        Ok(ConsumeResponse {
            components,
            ask,
            esd,
            counter: item.counter,
        })
    }

    /// Structural checks: no time components, histories cover exactly the
    /// road attributes and match the version mirror, components never run
    /// ahead of their history.
    pub fn audit(&self) -> Result<(), ProtocolError> {
        for u in self.user_components.keys() {
            self.audit_user(*u)?;
        }
        for a in self.histories.keys() {
            self.audit_history(*a)?;
        }
        Ok(())
    }

    fn audit_user(&self, u: UserId) -> Result<(), ProtocolError> {
        let Some(comps) = self.user_components.get(&u) else {
            return Ok(());
        };
        for (a, c) in comps {
            if self.time_attrs.contains(a) {
                return Err(ProtocolError::TimeComponentAtStore(*a));
            }
            let h = self
                .histories
                .get(a)
                .ok_or(ProtocolError::UnknownAttribute(*a))?;
            if c.version > h.current_version() {
                return Err(ProtocolError::Malformed(format!(
                    "user {u}: component {a} at v{} ahead of history v{}",
                    c.version,
                    h.current_version()
                )));
            }
        }
        Ok(())
    }

    fn audit_history(&self, a: AttributeId) -> Result<(), ProtocolError> {
        let h = self.histories.get(&a).ok_or(ProtocolError::UnknownAttribute(a))?;
        if self.time_attrs.contains(&a) {
            return Err(ProtocolError::Malformed(format!("history for time attribute {a}")));
        }
        if self.versions.get(&a) != Some(&h.current_version()) {
            return Err(ProtocolError::Malformed(format!("version mirror out of sync for {a}")));
        }
        Ok(())
    }

    pub fn save_to_dir(&self, dir: &Path) -> Result<(), ProtocolError> {
        std::fs::create_dir_all(dir).map_err(io)?;
        let write = |name: &str, bytes: Vec<u8>| std::fs::write(dir.join(name), bytes).map_err(io);

        let mut w = Writer::with_header(Tag::Histories);
        w.u32(self.histories.len() as u32);
        for h in self.histories.values() {
            h.write_body(&mut w);
        }
        write("histories.bin", w.finish())?;

        let mut w = Writer::with_header(Tag::VersionTable);
        w.u32(self.time_attrs.len() as u32);
        for a in &self.time_attrs {
            w.u32(a.0);
        }
        write("time_attributes.bin", w.finish())?;

        let mut w = Writer::with_header(Tag::UserComponents);
        w.u32(self.user_components.len() as u32);
        for (u, comps) in &self.user_components {
            w.u32(*u).u32(comps.len() as u32);
            for (a, c) in comps {
                w.u32(a.0).u32(c.version).g2(&c.value);
            }
        }
        write("user_components.bin", w.finish())?;

        let mut w = Writer::with_header(Tag::BootMaterial);
        w.u32(self.boot.len() as u32);
        for (id, b) in &self.boot {
            write_seal_id(&mut w, id);
            w.bytes(b);
        }
        write("boot_material.bin", w.finish())?;

        let mut w = Writer::with_header(Tag::SealedKeys);
        w.u32(self.asks.len() as u32);
        for (id, ct) in &self.asks {
            write_seal_id(&mut w, id);
            w.bytes(&ct.to_bytes());
        }
        write("sealed_keys.bin", w.finish())?;

        let mut w = Writer::with_header(Tag::SensedData);
        w.u32(self.data.len() as u32);
        for (id, items) in &self.data {
            write_seal_id(&mut w, id);
            w.u32(items.len() as u32);
            for esd in items {
                w.bytes(esd);
            }
        }
        write("sensed_data.bin", w.finish())?;
        Ok(())
    }

    pub fn load_from_dir(dir: &Path) -> Result<Self, ProtocolError> {
        let read = |name: &str| std::fs::read(dir.join(name)).map_err(io);

        let bytes = read("histories.bin")?;
        let mut r = Reader::with_header(&bytes, Tag::Histories)?;
        let mut histories = BTreeMap::new();
        for _ in 0..r.u32()? {
            let h = ReencryptionKeyHistory::read_body(&mut r)?;
            histories.insert(h.attribute(), h);
        }
        r.finish()?;
        let versions = histories
            .iter()
            .map(|(a, h)| (*a, h.current_version()))
            .collect();

        let bytes = read("time_attributes.bin")?;
        let mut r = Reader::with_header(&bytes, Tag::VersionTable)?;
        let mut time_attrs = BTreeSet::new();
        for _ in 0..r.u32()? {
            time_attrs.insert(AttributeId(r.u32()?));
        }
        r.finish()?;

        let bytes = read("user_components.bin")?;
        let mut r = Reader::with_header(&bytes, Tag::UserComponents)?;
        let mut user_components = BTreeMap::new();
        for _ in 0..r.u32()? {
            let u = r.u32()?;
            let mut comps = BTreeMap::new();
            for _ in 0..r.u32()? {
                let a = AttributeId(r.u32()?);
                let version = r.u32()?;
                comps.insert(
                    a,
                    Versioned {
                        version,
                        value: r.g2()?,
                    },
                );
            }
            user_components.insert(u, comps);
        }
        r.finish()?;

        let bytes = read("boot_material.bin")?;
        let mut r = Reader::with_header(&bytes, Tag::BootMaterial)?;
        let mut boot = BTreeMap::new();
        for _ in 0..r.u32()? {
            let id = read_seal_id(&mut r)?;
            boot.insert(id, r.bytes()?.to_vec());
        }
        r.finish()?;

        let bytes = read("sealed_keys.bin")?;
        let mut r = Reader::with_header(&bytes, Tag::SealedKeys)?;
        let mut asks = BTreeMap::new();
        for _ in 0..r.u32()? {
            let id = read_seal_id(&mut r)?;
            asks.insert(id, Ciphertext::from_bytes(r.bytes()?)?);
        }
        r.finish()?;

        let bytes = read("sensed_data.bin")?;
        let mut r = Reader::with_header(&bytes, Tag::SensedData)?;
        let mut data = BTreeMap::new();
        for _ in 0..r.u32()? {
            let id = read_seal_id(&mut r)?;
            let items = (0..r.u32()?)
                .map(|_| r.bytes().map(<[u8]>::to_vec))
                .collect::<Result<Vec<_>, CodecError>>()?;
            data.insert(id, items);
        }
        r.finish()?;

        let store = CssStore {
            time_attrs,
            histories,
            versions,
            user_components,
            boot,
            asks,
            data,
            writes: 0,
        };
        store.audit()?;
        Ok(store)
    }
}

fn io(e: std::io::Error) -> ProtocolError {
    ProtocolError::Io(e.to_string())
}

/// Message handling: every TTP message is verified for kind, signature and
/// date before it touches the store.
impl CssStore {
    pub fn receive_key(&mut self, bytes: &[u8], ttp: &dyn Verifier, today: u32) -> Result<UserId, ProtocolError> {
        let msg = SignedMessage::from_bytes(bytes)?;
        let payload = msg.verify(MessageKind::KeyToCss, ttp, today)?;
        let (user, comps) = payloads::decode_css_key(payload)?;
        self.store_user_components(user, comps)?;
        Ok(user)
    }

    pub fn receive_seal(&mut self, bytes: &[u8], ttp: &dyn Verifier, today: u32) -> Result<SealId, ProtocolError> {
        let msg = SignedMessage::from_bytes(bytes)?;
        let payload = msg.verify(MessageKind::Seal, ttp, today)?;
        let (id, ask, boot) = payloads::decode_seal(payload)?;
        self.store_seal(id, ask, boot)?;
        Ok(id)
    }

    /// Appends the re-encryption keys and erases the revoked user's
    /// components.
    pub fn receive_revoke(&mut self, bytes: &[u8], ttp: &dyn Verifier, today: u32) -> Result<UserId, ProtocolError> {
        let msg = SignedMessage::from_bytes(bytes)?;
        let payload = msg.verify(MessageKind::Revoke, ttp, today)?;
        let (user, rks) = payloads::decode_revoke(payload)?;
        self.append_rekeys(rks)?;
        self.erase_user(user);
        Ok(user)
    }
}
