use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::filter::{evaluate, EvalContext};
use super::{FilterExpr, QueryError};
use crate::data::VariableRole;

pub const SUBGROUP_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    pub id: u64,
    pub name: String,
    pub filter: FilterExpr,
    pub members: BTreeSet<String>,
    /// RFC 3339 timestamp.
    pub created_at: String,
}

/// Portable form of a subgroup, without id or timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRecord {
    pub name: String,
    pub filter: FilterExpr,
    pub members: BTreeSet<String>,
}

/// Export/import document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupFile {
    pub version: u32,
    pub subgroups: Vec<SubgroupRecord>,
}

/// Named subgroups keyed by id. Names need not be unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupStore {
    version: u32,
    next_id: u64,
    subgroups: BTreeMap<u64, Subgroup>,
}

impl Default for SubgroupStore {
    fn default() -> Self {
        SubgroupStore::new()
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn io(e: std::io::Error) -> QueryError {
    QueryError::Io(e.to_string())
}

impl SubgroupStore {
    pub fn new() -> Self {
        SubgroupStore {
            version: SUBGROUP_FILE_VERSION,
            next_id: 1,
            subgroups: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.subgroups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgroups.is_empty()
    }

    pub fn get(&self, id: u64) -> Result<&Subgroup, QueryError> {
        self.subgroups.get(&id).ok_or(QueryError::UnknownSubgroup(id))
    }

    pub fn list(&self) -> impl Iterator<Item = &Subgroup> {
        self.subgroups.values()
    }

    fn insert(&mut self, name: String, filter: FilterExpr, members: BTreeSet<String>) -> u64 {
        let id = self.next_id.max(1);
        self.next_id = id + 1;
        self.subgroups.insert(
            id,
            Subgroup {
                id,
                name,
                filter,
                members,
                created_at: now(),
            },
        );
        id
    }

    /// Evaluates `filter` and stores the result under a fresh id.
    pub fn create(&mut self, ctx: &EvalContext<'_>, name: &str, filter: FilterExpr) -> Result<u64, QueryError> {
        let members = evaluate(ctx, &filter)?;
        Ok(self.insert(name.to_string(), filter, members))
    }

    pub fn rename(&mut self, id: u64, name: &str) -> Result<(), QueryError> {
        let sg = self.subgroups.get_mut(&id).ok_or(QueryError::UnknownSubgroup(id))?;
        sg.name = name.to_string();
        Ok(())
    }

    pub fn delete(&mut self, id: u64) -> Result<Subgroup, QueryError> {
        self.subgroups.remove(&id).ok_or(QueryError::UnknownSubgroup(id))
    }

    /// Recomputes one subgroup's members from its stored filter.
    pub fn refresh(&mut self, id: u64, ctx: &EvalContext<'_>) -> Result<(), QueryError> {
        let sg = self.subgroups.get_mut(&id).ok_or(QueryError::UnknownSubgroup(id))?;
        sg.members = evaluate(ctx, &sg.filter)?;
        Ok(())
    }

    /// Refreshes every subgroup. Subgroups whose filter no longer evaluates
    /// (e.g. a state beyond the new model) are emptied and reported.
    pub fn refresh_all(&mut self, ctx: &EvalContext<'_>) -> Vec<(u64, QueryError)> {
        let mut failures = Vec::new();
        for sg in self.subgroups.values_mut() {
            match evaluate(ctx, &sg.filter) {
                Ok(members) => sg.members = members,
                Err(e) => {
                    sg.members.clear();
                    failures.push((sg.id, e));
                }
            }
        }
        failures
    }

    /// One subgroup per distinct non-missing value of a static variable.
    pub fn import_from_static(&mut self, ctx: &EvalContext<'_>, var: &str) -> Result<Vec<u64>, QueryError> {
        match ctx.dataset.variable(var) {
            Some(v) if v.role == VariableRole::Static => {}
            _ => return Err(QueryError::UnknownVariable(var.to_string())),
        }
        let values: BTreeSet<&String> = ctx
            .dataset
            .subjects
            .iter()
            .filter_map(|s| s.statics.get(var))
            .collect();
        values
            .into_iter()
            .map(|value| {
                let filter = FilterExpr::StaticEquals {
                    var: var.to_string(),
                    value: value.clone(),
                };
                self.create(ctx, &format!("{var} = {value}"), filter)
            })
            .collect()
    }

    pub fn export(&self) -> SubgroupFile {
        SubgroupFile {
            version: SUBGROUP_FILE_VERSION,
            subgroups: self
                .subgroups
                .values()
                .map(|sg| SubgroupRecord {
                    name: sg.name.clone(),
                    filter: sg.filter.clone(),
                    members: sg.members.clone(),
                })
                .collect(),
        }
    }

    /// Adds every record under a fresh id, keeping filter and members as given.
    pub fn import(&mut self, file: SubgroupFile) -> Result<Vec<u64>, QueryError> {
        if file.version != SUBGROUP_FILE_VERSION {
            return Err(QueryError::UnsupportedVersion(file.version));
        }
        for (i, record) in file.subgroups.iter().enumerate() {
            record.filter.validate().map_err(|e| match e {
                QueryError::InvalidFilter { path, reason } => QueryError::InvalidFilter {
                    path: format!("/subgroups/{i}/filter{}", path.trim_end_matches('/')),
                    reason,
                },
                other => other,
            })?;
        }
        Ok(file
            .subgroups
            .into_iter()
            .map(|r| self.insert(r.name, r.filter, r.members))
            .collect())
    }

    pub fn export_to(&self, path: &Path) -> Result<(), QueryError> {
        write_atomic(path, &self.export())
    }

    pub fn import_from(&mut self, path: &Path) -> Result<Vec<u64>, QueryError> {
        let text = std::fs::read_to_string(path).map_err(io)?;
        let file: SubgroupFile = serde_json::from_str(&text).map_err(|e| QueryError::Json(e.to_string()))?;
        self.import(file)
    }

    /// Persists the whole store (ids and timestamps included).
    pub fn save(&self, path: &Path) -> Result<(), QueryError> {
        write_atomic(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, QueryError> {
        let text = std::fs::read_to_string(path).map_err(io)?;
        let store: SubgroupStore = serde_json::from_str(&text).map_err(|e| QueryError::Json(e.to_string()))?;
        if store.version != SUBGROUP_FILE_VERSION {
            return Err(QueryError::UnsupportedVersion(store.version));
        }
        Ok(store)
    }
}

/// Writes to a sibling temp file, then renames over the target.
fn write_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), QueryError> {
    crate::json::write_atomic(path, value).map_err(io)
}
