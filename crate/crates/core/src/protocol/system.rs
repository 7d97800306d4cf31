//! Whole-system driver: owns every actor, the fabric and the simulated clock,
//! and records each procedure in a replayable trace.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attrspace::{AttributeSpace, PolicySpec, Representation, TimeConfig};
use crate::citysim::city::{generate_grid_city, CityModel, DeviceId, DevicePlacement, GridSpec, RoadSegment};
use crate::kpabe::SecurityLevel;

use super::crypto::{Ed25519Signer, Verifier, X25519Box, X25519Recipient};
use super::css::CssStore;
use super::device::DeviceState;
use super::fabric::{Fabric, Party};
use super::payloads;
use super::trace::{Outcome, TraceEvent};
use super::ttp::Ttp;
use super::user::UserState;
use super::{ItemRef, ProtocolError, SealId, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub city: CityModel,
    pub representation: Representation,
    pub lifetime_days: u32,
    pub security_bits: u32,
    pub start_day: u32,
}

impl SystemConfig {
    /// 2×2-block grid, 100 m blocks cut into 4 segments, one device per
    /// street, 30-day lifetime.
    pub fn toy() -> Self {
        let mut city = generate_grid_city(&GridSpec {
            blocks_x: 2,
            blocks_y: 2,
            block_length: 100.0,
            segment_length: 25.0,
        })
        .expect("fixed grid is valid");
        city.devices = city
            .streets
            .iter()
            .map(|s| DevicePlacement {
                id: s.id,
                at: RoadSegment {
                    street: s.id,
                    segment: (s.id - 1) % s.segments + 1,
                },
            })
            .collect();
        SystemConfig {
            city,
            representation: Representation::segment_tree(),
            lifetime_days: 30,
            security_bits: SecurityLevel::BITS_80.bits(),
            start_day: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SealReport {
    pub sealed: Vec<SealId>,
    pub rejected: Vec<(DeviceId, String)>,
}

pub struct CitySystem {
    config: SystemConfig,
    seed: u64,
    rng: ChaCha20Rng,
    ttp: Ttp,
    css: CssStore,
    css_verifier: Box<dyn Verifier>,
    devices: BTreeMap<DeviceId, DeviceState>,
    users: BTreeMap<UserId, UserState>,
    fabric: Fabric,
    today: u32,
    next_user: UserId,
    trace: Vec<TraceEvent>,
}

impl std::fmt::Debug for CitySystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CitySystem")
            .field("seed", &self.seed)
            .field("today", &self.today)
            .field("ttp", &self.ttp)
            .field("users", &self.users.len())
            .finish()
    }
}

fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl CitySystem {
    /// Builds the universe, runs the TTP setup and provisions every device
    /// with its long-term key.
    pub fn new(config: SystemConfig, seed: u64) -> Result<Self, ProtocolError> {
        config.city.validate().map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        let time = TimeConfig::new(config.lifetime_days)?;
        if config.start_day == 0 || config.start_day > config.lifetime_days {
            return Err(ProtocolError::DayOutOfRange {
                day: config.start_day,
                lifetime: config.lifetime_days,
            });
        }
        let security = SecurityLevel::new(config.security_bits)?;
        let space = AttributeSpace::build(&config.city, config.representation, time)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let signer = Ed25519Signer::generate(&mut rng);
        let (ttp, css) = Ttp::setup(
            space,
            security,
            config.city.devices.clone(),
            Box::new(signer),
            Box::new(X25519Box),
            config.start_day,
            &mut rng,
        )?;
        let devices = config
            .city
            .devices
            .iter()
            .map(|d| {
                let k = ttp.provision(d.id).expect("every placed device is provisioned");
                (d.id, DeviceState::new(d.id, d.at, k, config.start_day))
            })
            .collect();
        let css_verifier = ttp.verifier();
        let today = config.start_day;
        Ok(CitySystem {
            config,
            seed,
            rng,
            ttp,
            css,
            css_verifier,
            devices,
            users: BTreeMap::new(),
            fabric: Fabric::new(),
            today,
            next_user: 1,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn today(&self) -> u32 {
        self.today
    }

    pub fn ttp(&self) -> &Ttp {
        &self.ttp
    }

    pub fn css(&self) -> &CssStore {
        &self.css
    }

    pub fn css_mut(&mut self) -> &mut CssStore {
        &mut self.css
    }

    /// The TTP verification key as held by the store.
    pub fn css_verifier(&self) -> &dyn Verifier {
        self.css_verifier.as_ref()
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    pub fn fabric_mut(&mut self) -> &mut Fabric {
        &mut self.fabric
    }

    pub fn device(&self, id: DeviceId) -> Option<&DeviceState> {
        self.devices.get(&id)
    }

    pub fn device_ids(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.devices.keys().copied()
    }

    pub fn user(&self, id: UserId) -> Option<&UserState> {
        self.users.get(&id)
    }

    pub fn user_mut(&mut self, id: UserId) -> Option<&mut UserState> {
        self.users.get_mut(&id)
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn register_user(&mut self) -> UserId {
        let id = self.next_user;
        self.next_user += 1;
        let pke = X25519Recipient::generate(&mut self.rng);
        let user = UserState::new(id, Box::new(pke), self.ttp.verifier(), self.today);
        self.ttp
            .register_user(id, user.public_key())
            .expect("fresh user ids are unique");
        self.users.insert(id, user);
        self.trace.push(TraceEvent::RegisterUser { user: id });
        id
    }

    pub fn distribute_key(&mut self, user: UserId, spec: &PolicySpec) -> Result<(), ProtocolError> {
        let r = self.distribute_key_inner(user, spec);
        self.trace.push(TraceEvent::DistributeKey {
            user,
            spec: spec.clone(),
            outcome: Outcome::from_unit(&r),
        });
        r
    }

    fn distribute_key_inner(&mut self, user: UserId, spec: &PolicySpec) -> Result<(), ProtocolError> {
        if !self.users.contains_key(&user) {
            return Err(ProtocolError::UnknownUser(user));
        }
        let (sealed, to_css) = self.ttp.issue_key(user, spec, &mut self.rng)?;
        let sealed = self.fabric.deliver(Party::Ttp, Party::User(user), "key-to-user", sealed);
        self.users
            .get_mut(&user)
            .expect("checked above")
            .accept_key(&sealed)?;
        let bytes = self
            .fabric
            .deliver(Party::Ttp, Party::Css, "key-to-css", to_css.to_bytes());
        self.css
            .receive_key(&bytes, self.css_verifier.as_ref(), self.today)?;
        Ok(())
    }

    pub fn set_day(&mut self, day: u32) -> Result<(), ProtocolError> {
        if day == 0 || day > self.config.lifetime_days {
            return Err(ProtocolError::DayOutOfRange {
                day,
                lifetime: self.config.lifetime_days,
            });
        }
        self.today = day;
        self.ttp.set_today(day);
        self.devices.values_mut().for_each(|d| d.set_today(day));
        self.users.values_mut().for_each(|u| u.set_today(day));
        self.trace.push(TraceEvent::SetDay { day });
        Ok(())
    }

    pub fn advance_day(&mut self) -> Result<u32, ProtocolError> {
        self.set_day(self.today + 1)?;
        Ok(self.today)
    }

    /// Seals a new generation for today and delivers boot material to every
    /// device. Devices that reject their boot material are listed in the
    /// report.
    pub fn seal_day(&mut self) -> Result<SealReport, ProtocolError> {
        let r = self.seal_day_inner();
        self.trace.push(TraceEvent::SealDay {
            day: self.today,
            outcome: match &r {
                Ok(rep) => Outcome::Seal {
                    sealed: rep.sealed.len(),
                    rejected: rep.rejected.iter().map(|(d, _)| *d).collect(),
                },
                Err(e) => Outcome::Err {
                    error: e.to_string(),
                },
            },
        });
        r
    }

    fn seal_day_inner(&mut self) -> Result<SealReport, ProtocolError> {
        let msgs = self.ttp.seal(&mut self.rng)?;
        let mut report = SealReport::default();
        for m in msgs {
            let bytes = self.fabric.deliver(Party::Ttp, Party::Css, "seal", m.to_bytes());
            let id = self
                .css
                .receive_seal(&bytes, self.css_verifier.as_ref(), self.today)?;
            report.sealed.push(id);
        }
        for id in &report.sealed {
            let boot = self
                .css
                .boot_material(id)
                .expect("just stored")
                .to_vec();
            let boot = self
                .fabric
                .deliver(Party::Css, Party::Device(id.device), "boot", boot);
            let device = self
                .devices
                .get_mut(&id.device)
                .ok_or(ProtocolError::UnknownDevice(id.device))?;
            if let Err(e) = device.accept_boot(&boot) {
                report.rejected.push((id.device, e.to_string()));
            }
        }
        Ok(report)
    }

    pub fn produce_data(&mut self, device: DeviceId, sd: &[u8]) -> Result<ItemRef, ProtocolError> {
        let r = self.produce_inner(device, sd);
        self.trace.push(TraceEvent::Produce {
            device,
            data_hex: hex::encode(sd),
            outcome: match &r {
                Ok(item) => Outcome::Item { item: *item },
                Err(e) => Outcome::Err {
                    error: e.to_string(),
                },
            },
        });
        r
    }

    fn produce_inner(&mut self, device: DeviceId, sd: &[u8]) -> Result<ItemRef, ProtocolError> {
        let (item, esd) = self
            .devices
            .get_mut(&device)
            .ok_or(ProtocolError::UnknownDevice(device))?
            .produce(sd)?;
        let bytes = self.fabric.deliver(
            Party::Device(device),
            Party::Css,
            "data",
            payloads::encode_item(&item, &esd),
        );
        let (item, esd) = payloads::decode_item(&bytes)?;
        self.css.append_item(item.seal(), item.counter, esd)?;
        Ok(item)
    }

    /// Fetches an item through the store and decrypts it as `user`. A
    /// policy refusal is [`ProtocolError::Unauthorized`].
    pub fn consume_data(&mut self, user: UserId, item: ItemRef) -> Result<Vec<u8>, ProtocolError> {
        let r = self.consume_inner(user, item);
        self.trace.push(TraceEvent::Consume {
            user,
            item,
            outcome: match &r {
                Ok(sd) => Outcome::Data {
                    sha256: digest_hex(sd),
                },
                Err(e) => Outcome::Err {
                    error: e.to_string(),
                },
            },
        });
        r
    }

    fn consume_inner(&mut self, user: UserId, item: ItemRef) -> Result<Vec<u8>, ProtocolError> {
        if !self.users.contains_key(&user) {
            return Err(ProtocolError::UnknownUser(user));
        }
        let req = self.fabric.deliver(
            Party::User(user),
            Party::Css,
            "request",
            payloads::encode_item_request(user, &item),
        );
        let (requester, item) = payloads::decode_item_request(&req)?;
        let resp = self.css.serve(requester, item)?;
        let bytes = self.fabric.deliver(
            Party::Css,
            Party::User(user),
            "response",
            payloads::encode_response(&resp),
        );
        let resp = payloads::decode_response(&bytes)?;
        self.users
            .get_mut(&user)
            .expect("checked above")
            .consume(item, &resp)
    }

    /// Revokes `user`: new attribute versions, re-encryption keys to the
    /// store, erasure of the user's stored components, then a fresh seal.
    pub fn revoke_key(&mut self, user: UserId) -> Result<SealReport, ProtocolError> {
        let r = self.revoke_inner(user);
        self.trace.push(TraceEvent::Revoke {
            user,
            outcome: match &r {
                Ok(rep) => Outcome::Seal {
                    sealed: rep.sealed.len(),
                    rejected: rep.rejected.iter().map(|(d, _)| *d).collect(),
                },
                Err(e) => Outcome::Err {
                    error: e.to_string(),
                },
            },
        });
        r
    }

    fn revoke_inner(&mut self, user: UserId) -> Result<SealReport, ProtocolError> {
        let msg = self.ttp.revoke(user, &mut self.rng)?;
        let bytes = self.fabric.deliver(Party::Ttp, Party::Css, "revoke", msg.to_bytes());
        self.css
            .receive_revoke(&bytes, self.css_verifier.as_ref(), self.today)?;
        self.seal_day_inner()
    }
}
