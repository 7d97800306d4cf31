//! JSON-lines event log of a [`CitySystem`] run.
//!
//! The first line is a header with the seed and configuration; each further
//! line is one procedure call with its outcome. Replaying re-executes the
//! calls on a fresh system and compares outcomes line by line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attrspace::PolicySpec;
use crate::citysim::city::DeviceId;

use super::system::{CitySystem, SystemConfig};
use super::{ItemRef, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Seal { sealed: usize, rejected: Vec<DeviceId> },
    Item { item: ItemRef },
    Data { sha256: String },
    Err { error: String },
}

impl Outcome {
    pub(crate) fn from_unit<E: std::fmt::Display>(r: &Result<(), E>) -> Self {
        match r {
            Ok(()) => Outcome::Ok,
            Err(e) => Outcome::Err {
                error: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TraceEvent {
    RegisterUser { user: UserId },
    DistributeKey { user: UserId, spec: PolicySpec, outcome: Outcome },
    SetDay { day: u32 },
    SealDay { day: u32, outcome: Outcome },
    Produce { device: DeviceId, data_hex: String, outcome: Outcome },
    Consume { user: UserId, item: ItemRef, outcome: Outcome },
    Revoke { user: UserId, outcome: Outcome },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    seed: u64,
    config: SystemConfig,
}

const FORMAT: &str = "urban-abe-trace/v1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: replay diverged\n  recorded: {recorded}\n  replayed: {replayed}")]
    Diverged {
        line: usize,
        recorded: String,
        replayed: String,
    },
    #[error("setup failed: {0}")]
    Setup(String),
}

pub fn to_jsonl(system: &CitySystem) -> String {
    let header = Header {
        format: FORMAT.into(),
        seed: system.seed(),
        config: system.config().clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for e in system.trace() {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<(u64, SystemConfig, Vec<TraceEvent>), TraceError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(TraceError::Parse {
        line: 1,
        message: "empty trace".into(),
    })?;
    let header: Header = serde_json::from_str(first).map_err(|e| TraceError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.format != FORMAT {
        return Err(TraceError::Parse {
            line: 1,
            message: format!("unsupported trace format {:?}", header.format),
        });
    }
    let events = lines
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((header.seed, header.config, events))
}

/// Re-runs a recorded trace and checks that every event reproduces.
pub fn replay(text: &str) -> Result<CitySystem, TraceError> {
    let (seed, config, events) = parse(text)?;
    let mut sys = CitySystem::new(config, seed).map_err(|e| TraceError::Setup(e.to_string()))?;
    for (i, recorded) in events.iter().enumerate() {
        match recorded {
            TraceEvent::RegisterUser { .. } => {
                sys.register_user();
            }
            TraceEvent::DistributeKey { user, spec, .. } => {
                let _ = sys.distribute_key(*user, spec);
            }
            TraceEvent::SetDay { day } => {
                let _ = sys.set_day(*day);
            }
            TraceEvent::SealDay { .. } => {
                let _ = sys.seal_day();
            }
            TraceEvent::Produce {
                device, data_hex, ..
            } => {
                let sd = hex::decode(data_hex).map_err(|e| TraceError::Parse {
                    line: i + 2,
                    message: e.to_string(),
                })?;
                let _ = sys.produce_data(*device, &sd);
            }
            TraceEvent::Consume { user, item, .. } => {
                let _ = sys.consume_data(*user, *item);
            }
            TraceEvent::Revoke { user, .. } => {
                let _ = sys.revoke_key(*user);
            }
        }
        let replayed = sys.trace().last().expect("every call records an event");
        if replayed != recorded {
            return Err(TraceError::Diverged {
                line: i + 2,
                recorded: serde_json::to_string(recorded).unwrap_or_default(),
                replayed: serde_json::to_string(replayed).unwrap_or_default(),
            });
        }
    }
    Ok(sys)
}
