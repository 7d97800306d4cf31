//! In-process message delivery with a recording tap and an optional
//! in-transit tamper hook.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::citysim::city::DeviceId;

use super::UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Ttp,
    Css,
    Device(DeviceId),
    User(UserId),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Ttp => f.write_str("TTP"),
            Party::Css => f.write_str("CSS"),
            Party::Device(d) => write!(f, "device#{d}"),
            Party::User(u) => write!(f, "user#{u}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub seq: u64,
    pub from: Party,
    pub to: Party,
    pub kind: &'static str,
    pub bytes: Vec<u8>,
}

pub type TamperHook = Box<dyn FnMut(&mut Envelope) + Send>;

/// Records every envelope as sent. The tamper hook sees envelopes after
/// recording and may alter what the receiver gets.
#[derive(Default)]
pub struct Fabric {
    transcript: Vec<Envelope>,
    tamper: Option<TamperHook>,
}

impl fmt::Debug for Fabric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fabric")
            .field("transcript", &self.transcript.len())
            .field("tamper", &self.tamper.is_some())
            .finish()
    }
}

impl Fabric {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_tamper(&mut self, hook: Option<TamperHook>) {
        self.tamper = hook;
    }

    pub fn deliver(&mut self, from: Party, to: Party, kind: &'static str, bytes: Vec<u8>) -> Vec<u8> {
        let mut env = Envelope {
            seq: self.transcript.len() as u64,
            from,
            to,
            kind,
            bytes,
        };
        self.transcript.push(env.clone());
        if let Some(hook) = self.tamper.as_mut() {
            hook(&mut env);
        }
        env.bytes
    }

    pub fn transcript(&self) -> &[Envelope] {
        &self.transcript
    }
}
