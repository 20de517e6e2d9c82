//! Disease-progression state modelling over longitudinal visit records.
//!
//! The crate learns hidden-Markov progression states from visits
//! ([`hmm`]), mines frequent state-transition patterns ([`patterns`]),
//! evaluates cohort filters and temporal state-sequence queries
//! ([`query`]), and computes the aggregations and geometry behind the
//! analysis views ([`analytics`], [`layout`]).

pub mod analytics;
pub mod data;
pub mod hmm;
pub mod json;
pub mod layout;
pub mod patterns;
pub mod query;
pub mod synth;

pub use data::{Dataset, DatasetSummary, Subject, VariableKind, VariableRole, VariableSchema, Visit};
pub use hmm::{DecodedSubject, DecodedVisit, Decoding, HmmConfig, HmmError, HmmModel};
