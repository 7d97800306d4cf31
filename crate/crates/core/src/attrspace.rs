//! Mapping from streets, segments and days to attributes and policies.
//!
//! Road attributes are named `s{street}_{node}` with an `@{ω}` suffix for
//! pool replicas; time attributes are `x_{node}` over one segment tree that
//! spans the system lifetime in days. These names are part of the persisted
//! format.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::citysim::city::{CityModel, RoadSegment, StreetId};
use crate::kpabe::{AbeError, AccessPolicy, AttributeClass, AttributeId, DecryptionKey, Universe};
use crate::segtree::{Interval, NodeId, SegTreeError, SegmentTree};

#[derive(Debug, Error, PartialEq)]
pub enum AttrSpaceError {
    #[error("replica count must be at least 1")]
    BadEpsilon,
    #[error("{0:?} representation takes no replicas")]
    EpsilonNotAllowed(RepresentationKind),
    #[error("lifetime must be at least one day")]
    BadLifetime,
    #[error("city has no streets")]
    EmptyCity,
    #[error("unknown street {0}")]
    UnknownStreet(StreetId),
    #[error("street {street}: {source}")]
    Street {
        street: StreetId,
        source: SegTreeError,
    },
    #[error("day {day} outside lifetime [1, {lifetime}]")]
    DayOutOfRange { day: u32, lifetime: u32 },
    #[error("validity period {0} outside the system lifetime")]
    ValidityOutOfRange(Interval),
    #[error("policy authorizes no road segment")]
    EmptyAuthorization,
    #[error("street {street}: intervals {a} and {b} overlap")]
    OverlappingIntervals {
        street: StreetId,
        a: Interval,
        b: Interval,
    },
    #[error(transparent)]
    Abe(#[from] AbeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationKind {
    Basic,
    SegmentTree,
    AttributePool,
}

impl RepresentationKind {
    pub fn label(self) -> &'static str {
        match self {
            RepresentationKind::Basic => "basic",
            RepresentationKind::SegmentTree => "segtree",
            RepresentationKind::AttributePool => "pool",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRepresentation")]
pub struct Representation {
    kind: RepresentationKind,
    epsilon: u32,
}

#[derive(Deserialize)]
struct RawRepresentation {
    kind: RepresentationKind,
    #[serde(default = "one")]
    epsilon: u32,
}

fn one() -> u32 {
    1
}

impl TryFrom<RawRepresentation> for Representation {
    type Error = AttrSpaceError;

    fn try_from(raw: RawRepresentation) -> Result<Self, Self::Error> {
        Representation::new(raw.kind, raw.epsilon)
    }
}

impl Representation {
    pub fn basic() -> Self {
        Representation {
            kind: RepresentationKind::Basic,
            epsilon: 1,
        }
    }

    pub fn segment_tree() -> Self {
        Representation {
            kind: RepresentationKind::SegmentTree,
            epsilon: 1,
        }
    }

    pub fn pool(epsilon: u32) -> Result<Self, AttrSpaceError> {
        Self::new(RepresentationKind::AttributePool, epsilon)
    }

    /// `epsilon` must be 1 unless `kind` is the attribute pool.
    pub fn new(kind: RepresentationKind, epsilon: u32) -> Result<Self, AttrSpaceError> {
        if epsilon == 0 {
            return Err(AttrSpaceError::BadEpsilon);
        }
        if kind != RepresentationKind::AttributePool && epsilon != 1 {
            return Err(AttrSpaceError::EpsilonNotAllowed(kind));
        }
        Ok(Representation { kind, epsilon })
    }

    pub fn kind(&self) -> RepresentationKind {
        self.kind
    }

    pub fn epsilon(&self) -> u32 {
        self.epsilon
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            RepresentationKind::AttributePool => write!(f, "pool(ε={})", self.epsilon),
            k => f.write_str(k.label()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeConfig {
    max_lifetime_days: u32,
}

impl TimeConfig {
    pub fn new(max_lifetime_days: u32) -> Result<Self, AttrSpaceError> {
        if max_lifetime_days == 0 {
            return Err(AttrSpaceError::BadLifetime);
        }
        Ok(TimeConfig { max_lifetime_days })
    }

    pub fn max_lifetime_days(&self) -> u32 {
        self.max_lifetime_days
    }
}

/// Usage counters of road attribute replicas. Each counter is the number of
/// live keys holding that replica.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributePool {
    counters: BTreeMap<AttributeId, u32>,
}

impl AttributePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, attr: AttributeId) -> u32 {
        self.counters.get(&attr).copied().unwrap_or(0)
    }

    /// Takes the least-used replica, lowest index first on ties.
    pub fn acquire(&mut self, replicas: &[AttributeId]) -> AttributeId {
        let pick = *replicas
            .iter()
            .min_by_key(|a| self.count(**a))
            .expect("replica lists are never empty");
        *self.counters.entry(pick).or_insert(0) += 1;
        pick
    }

    pub fn release(&mut self, attrs: impl IntoIterator<Item = AttributeId>) {
        for a in attrs {
            if let Some(c) = self.counters.get_mut(&a) {
                *c = c.saturating_sub(1);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (AttributeId, u32)> + '_ {
        self.counters.iter().map(|(a, c)| (*a, *c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptionLabel {
    pub road: BTreeSet<AttributeId>,
    pub time: BTreeSet<AttributeId>,
}

impl EncryptionLabel {
    pub fn all(&self) -> BTreeSet<AttributeId> {
        self.road.union(&self.time).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.road.len() + self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.road.is_empty() && self.time.is_empty()
    }
}

/// Road intervals a user may read, and the days their key is valid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub authorized: Vec<(StreetId, Interval)>,
    pub validity: Interval,
}

impl PolicySpec {
    /// Ground truth read directly off the intervals; policy evaluation must agree.
    pub fn authorizes(&self, at: RoadSegment, day: u32) -> bool {
        self.validity.contains(day)
            && self
                .authorized
                .iter()
                .any(|(s, iv)| *s == at.street && iv.contains(at.segment))
    }
}

/// A user's access tree split into its road and time subtrees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserPolicy {
    pub road: AccessPolicy,
    pub time: AccessPolicy,
}

impl UserPolicy {
    pub fn combined(&self) -> AccessPolicy {
        AccessPolicy::all_of(vec![self.road.clone(), self.time.clone()])
    }
}

#[derive(Debug, Clone)]
struct StreetSpace {
    tree: SegmentTree,
    /// Replica attributes per node; basic keeps leaves only.
    replicas: HashMap<NodeId, Vec<AttributeId>>,
}

#[derive(Debug, Clone)]
pub struct AttributeSpace {
    representation: Representation,
    time: TimeConfig,
    universe: Universe,
    streets: BTreeMap<StreetId, StreetSpace>,
    time_tree: SegmentTree,
    time_attrs: HashMap<NodeId, AttributeId>,
}

impl AttributeSpace {
    pub fn build(
        city: &CityModel,
        representation: Representation,
        time: TimeConfig,
    ) -> Result<Self, AttrSpaceError> {
        if city.streets.is_empty() {
            return Err(AttrSpaceError::EmptyCity);
        }
        let mut universe = Universe::new();
        let mut streets = BTreeMap::new();
        for street in &city.streets {
            let tree = SegmentTree::new(street.segments).map_err(|source| AttrSpaceError::Street {
                street: street.id,
                source,
            })?;
            let mut replicas = HashMap::new();
            let nodes: Vec<NodeId> = match representation.kind {
                RepresentationKind::Basic => (1..=street.segments)
                    .map(|p| tree.leaf(p).expect("points within range"))
                    .collect(),
                _ => tree.nodes().collect(),
            };
            for node in nodes {
                let base = format!("s{}_{}", street.id, tree.node_name(&node));
                let ids = match representation.kind {
                    RepresentationKind::AttributePool => (1..=representation.epsilon)
                        .map(|w| universe.add(format!("{base}@{w}"), AttributeClass::Road))
                        .collect::<Result<Vec<_>, _>>()?,
                    _ => vec![universe.add(base, AttributeClass::Road)?],
                };
                replicas.insert(node, ids);
            }
            if streets
                .insert(street.id, StreetSpace { tree, replicas })
                .is_some()
            {
                return Err(AbeError::DuplicateAttribute(format!("street {}", street.id)).into());
            }
        }
        let time_tree = SegmentTree::new(time.max_lifetime_days).map_err(|source| {
            AttrSpaceError::Street {
                street: 0,
                source,
            }
        })?;
        let mut time_attrs = HashMap::new();
        for node in time_tree.nodes() {
            let id = universe.add(
                format!("x_{}", time_tree.node_name(&node)),
                AttributeClass::Time,
            )?;
            time_attrs.insert(node, id);
        }
        Ok(AttributeSpace {
            representation,
            time,
            universe,
            streets,
            time_tree,
            time_attrs,
        })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn time_config(&self) -> TimeConfig {
        self.time
    }

    pub fn road_attribute_count(&self) -> usize {
        self.universe.road_ids().count()
    }

    pub fn time_attribute_count(&self) -> usize {
        self.time_attrs.len()
    }

    pub fn street_tree(&self, street: StreetId) -> Option<&SegmentTree> {
        self.streets.get(&street).map(|s| &s.tree)
    }

    pub fn time_tree(&self) -> &SegmentTree {
        &self.time_tree
    }

    fn street(&self, id: StreetId) -> Result<&StreetSpace, AttrSpaceError> {
        self.streets.get(&id).ok_or(AttrSpaceError::UnknownStreet(id))
    }

    fn check_day(&self, day: u32) -> Result<(), AttrSpaceError> {
        if day == 0 || day > self.time.max_lifetime_days {
            return Err(AttrSpaceError::DayOutOfRange {
                day,
                lifetime: self.time.max_lifetime_days,
            });
        }
        Ok(())
    }

    /// Road nodes a device on `at` is labelled with, before replica expansion.
    fn road_nodes(&self, at: RoadSegment) -> Result<Vec<NodeId>, AttrSpaceError> {
        let s = self.street(at.street)?;
        let wrap = |source| AttrSpaceError::Street {
            street: at.street,
            source,
        };
        Ok(match self.representation.kind {
            RepresentationKind::Basic => vec![s.tree.leaf(at.segment).map_err(wrap)?],
            _ => s.tree.point_rep(at.segment).map_err(wrap)?.into_iter().collect(),
        })
    }

    pub fn label_for_device(&self, at: RoadSegment, day: u32) -> Result<EncryptionLabel, AttrSpaceError> {
        self.check_day(day)?;
        let s = self.street(at.street)?;
        let road = self
            .road_nodes(at)?
            .iter()
            .flat_map(|n| s.replicas[n].iter().copied())
            .collect();
        Ok(EncryptionLabel {
            road,
            time: self.time_label(day)?,
        })
    }

    pub fn time_label(&self, day: u32) -> Result<BTreeSet<AttributeId>, AttrSpaceError> {
        self.check_day(day)?;
        Ok(self
            .time_tree
            .point_rep(day)
            .expect("day checked")
            .iter()
            .map(|n| self.time_attrs[n])
            .collect())
    }

    /// Builds `AND(road, time)` for `spec`. Pool replicas are acquired from
    /// `pool`; on error the pool is left unchanged.
    pub fn policy_for_user(
        &self,
        spec: &PolicySpec,
        pool: &mut AttributePool,
    ) -> Result<UserPolicy, AttrSpaceError> {
        if spec.authorized.is_empty() {
            return Err(AttrSpaceError::EmptyAuthorization);
        }
        if spec.validity.lo() == 0 || spec.validity.hi() > self.time.max_lifetime_days {
            return Err(AttrSpaceError::ValidityOutOfRange(spec.validity));
        }
        let mut per_street: BTreeMap<StreetId, Vec<Interval>> = BTreeMap::new();
        for (street, iv) in &spec.authorized {
            per_street.entry(*street).or_default().push(*iv);
        }
        // Validate everything before touching the pool.
        let mut node_lists: Vec<(StreetId, Vec<NodeId>)> = Vec::new();
        for (street, ivs) in per_street.iter_mut() {
            ivs.sort();
            for w in ivs.windows(2) {
                if w[0].overlaps(&w[1]) {
                    return Err(AttrSpaceError::OverlappingIntervals {
                        street: *street,
                        a: w[0],
                        b: w[1],
                    });
                }
            }
            let s = self.street(*street)?;
            let wrap = |source| AttrSpaceError::Street {
                street: *street,
                source,
            };
            let mut nodes = Vec::new();
            for iv in ivs.iter() {
                match self.representation.kind {
                    RepresentationKind::Basic => {
                        for p in iv.lo()..=iv.hi() {
                            nodes.push(s.tree.leaf(p).map_err(wrap)?);
                        }
                    }
                    _ => nodes.extend(s.tree.interval_rep(*iv).map_err(wrap)?.into_iter()),
                }
            }
            node_lists.push((*street, nodes));
        }

        let mut street_trees = Vec::new();
        for (street, nodes) in node_lists {
            let s = &self.streets[&street];
            let leaves = nodes
                .iter()
                .map(|n| AccessPolicy::Leaf(pool.acquire(&s.replicas[n])))
                .collect();
            street_trees.push(AccessPolicy::any_of(leaves));
        }
        let time_leaves = self
            .time_tree
            .interval_rep(spec.validity)
            .map_err(|source| AttrSpaceError::Street { street: 0, source })?
            .iter()
            .map(|n| AccessPolicy::Leaf(self.time_attrs[n]))
            .collect();
        Ok(UserPolicy {
            road: AccessPolicy::any_of(street_trees),
            time: AccessPolicy::any_of(time_leaves),
        })
    }

    /// `μ = λ ∩ 𝒰_ℛ`: the road attributes that must be re-versioned when the
    /// key is revoked.
    pub fn revocation_attribute_set(&self, dk: &DecryptionKey) -> BTreeSet<AttributeId> {
        self.road_attributes(dk.policy())
    }

    pub fn road_attributes(&self, policy: &AccessPolicy) -> BTreeSet<AttributeId> {
        policy
            .attributes()
            .into_iter()
            .filter(|a| self.universe.is_road(*a))
            .collect()
    }
}

/// Users other than `revoked` whose road attribute sets meet the revoked one.
pub fn affected_users(revoked: usize, road_sets: &[BTreeSet<AttributeId>]) -> BTreeSet<usize> {
    let target = &road_sets[revoked];
    road_sets
        .iter()
        .enumerate()
        .filter(|(v, set)| *v != revoked && !set.is_disjoint(target))
        .map(|(v, _)| v)
        .collect()
}
