use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::AbeError;

/// Dense attribute identifier, an index into the [`Universe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeId(pub u32);

impl AttributeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Which half of the universe an attribute lives in: road segments (updated
/// on revocation) or time (never updated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttributeClass {
    Road,
    Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    name: String,
    class: AttributeClass,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Universe {
    entries: Vec<Entry>,
    by_name: HashMap<String, AttributeId>,
}

impl Universe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I, class: AttributeClass) -> Result<Self, AbeError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut u = Universe::new();
        for n in names {
            u.add(n, class)?;
        }
        Ok(u)
    }

    pub fn add(&mut self, name: impl Into<String>, class: AttributeClass) -> Result<AttributeId, AbeError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(AbeError::DuplicateAttribute(name));
        }
        let id = AttributeId(u32::try_from(self.entries.len()).expect("universe exceeds u32 ids"));
        self.by_name.insert(name.clone(), id);
        self.entries.push(Entry { name, class });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: AttributeId) -> bool {
        id.index() < self.entries.len()
    }

    pub fn id(&self, name: &str) -> Option<AttributeId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: AttributeId) -> Option<&str> {
        self.entries.get(id.index()).map(|e| e.name.as_str())
    }

    pub fn class(&self, id: AttributeId) -> Option<AttributeClass> {
        self.entries.get(id.index()).map(|e| e.class)
    }

    pub fn is_road(&self, id: AttributeId) -> bool {
        self.class(id) == Some(AttributeClass::Road)
    }

    pub fn is_time(&self, id: AttributeId) -> bool {
        self.class(id) == Some(AttributeClass::Time)
    }

    pub fn ids(&self) -> impl Iterator<Item = AttributeId> + '_ {
        (0..self.entries.len() as u32).map(AttributeId)
    }

    pub fn road_ids(&self) -> impl Iterator<Item = AttributeId> + '_ {
        self.ids().filter(|i| self.is_road(*i))
    }

    pub fn time_ids(&self) -> impl Iterator<Item = AttributeId> + '_ {
        self.ids().filter(|i| self.is_time(*i))
    }
}
