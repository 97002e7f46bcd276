//! Name-to-mass lookup table backing `language_query`.
//!
//! The table is a flat JSON object mapping lowercase names to masses in
//! kilograms, plus a required `"__default__"` entry used for names the table
//! does not know. Masses are relative knowledge ("a car outweighs a dog"),
//! so the only structural requirement is that they are positive and pairwise
//! distinct.

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_KEY: &str = "__default__";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge base is not a JSON object of name: mass pairs")]
    NotAnObject,
    #[error("mass for {0:?} must be a positive finite number")]
    BadMass(String),
    #[error("knowledge base must contain a {DEFAULT_KEY:?} entry")]
    MissingDefault,
    #[error("knowledge base JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    entries: BTreeMap<String, f64>,
    default_mass: f64,
}

impl KnowledgeBase {
    pub fn from_json_str(text: &str) -> Result<Self, KbError> {
        let value: Value = serde_json::from_str(text)?;
        let map = value.as_object().ok_or(KbError::NotAnObject)?;
        let mut entries = BTreeMap::new();
        let mut default_mass = None;
        for (name, mass) in map {
            let mass = mass
                .as_f64()
                .filter(|m| m.is_finite() && *m > 0.0)
                .ok_or_else(|| KbError::BadMass(name.clone()))?;
            if name == DEFAULT_KEY {
                default_mass = Some(mass);
            } else {
                entries.insert(name.trim().to_lowercase(), mass);
            }
        }
        Ok(Self {
            entries,
            default_mass: default_mass.ok_or(KbError::MissingDefault)?,
        })
    }

    /// The table bundled with the binary.
    pub fn bundled() -> Self {
        Self::from_json_str(include_str!("../data/kb.json")).expect("bundled table is valid")
    }

    /// Mass in kg for `name`, and whether the name was actually known.
    /// Unknown names get the default mass.
    pub fn mass_of(&self, name: &str) -> (f64, bool) {
        match self.entries.get(&name.trim().to_lowercase()) {
            Some(mass) => (*mass, true),
            None => (self.default_mass, false),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
