//! Longitudinal observational data: schema, subjects, visits, and the
//! three-file CSV layout (visits / statics / events) they are ingested from.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ages closer than this (in months) are treated as the same visit.
pub const AGE_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("line {line}: non-numeric value `{value}` for `{variable}`")]
    NonNumericValue {
        line: u64,
        variable: String,
        value: String,
    },
    #[error("line {line}: value {value} is not valid for {kind:?} variable `{variable}`")]
    InvalidValue {
        line: u64,
        variable: String,
        value: f64,
        kind: VariableKind,
    },
    #[error("subject `{0}` has no visits")]
    SubjectWithNoVisits(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl DataError {
    pub fn category(&self) -> &'static str {
        match self {
            DataError::MalformedRow { .. } => "MalformedRow",
            DataError::UnknownVariable(_) => "UnknownVariable",
            DataError::NonNumericValue { .. } => "NonNumericValue",
            DataError::InvalidValue { .. } => "InvalidValue",
            DataError::SubjectWithNoVisits(_) => "SubjectWithNoVisits",
            DataError::InvalidSchema(_) => "InvalidSchema",
            DataError::Io(_) => "Io",
            DataError::Csv(_) => "MalformedRow",
            DataError::Json(_) => "InvalidSchema",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableKind {
    Binary,
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableRole {
    /// Emission input of the state model.
    DynamicObserved,
    /// Recorded per visit but not modelled.
    DynamicContext,
    Static,
    /// Age (months) at which an outcome occurred; absent when it never did.
    OutcomeEvent,
}

impl VariableRole {
    pub fn is_dynamic(self) -> bool {
        matches!(self, VariableRole::DynamicObserved | VariableRole::DynamicContext)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSchema {
    pub name: String,
    pub kind: VariableKind,
    pub role: VariableRole,
}

impl VariableSchema {
    pub fn new(name: impl Into<String>, kind: VariableKind, role: VariableRole) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
        }
    }
}

/// Checks name uniqueness and the outcome-event kind rule.
pub fn validate_schema(schema: &[VariableSchema]) -> Result<(), DataError> {
    let mut seen = BTreeSet::new();
    for var in schema {
        if var.name.is_empty() {
            return Err(DataError::InvalidSchema("empty variable name".into()));
        }
        if var.name == "subject_id" || var.name == "age_months" {
            return Err(DataError::InvalidSchema(format!(
                "`{}` is a reserved column name",
                var.name
            )));
        }
        if !seen.insert(var.name.as_str()) {
            return Err(DataError::InvalidSchema(format!(
                "duplicate variable `{}`",
                var.name
            )));
        }
        if var.role == VariableRole::OutcomeEvent && var.kind != VariableKind::Continuous {
            return Err(DataError::InvalidSchema(format!(
                "outcome event `{}` must be continuous (age in months)",
                var.name
            )));
        }
    }
    Ok(())
}

/// Reads a schema document: a JSON array of `{name, kind, role}`.
pub fn read_schema(path: &Path) -> Result<Vec<VariableSchema>, DataError> {
    let schema: Vec<VariableSchema> = serde_json::from_reader(File::open(path)?)?;
    validate_schema(&schema)?;
    Ok(schema)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub age: f64,
    /// One entry per dynamic variable of the schema; `None` is missing.
    pub values: BTreeMap<String, Option<f64>>,
}

impl Visit {
    pub fn value(&self, var: &str) -> Option<f64> {
        self.values.get(var).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    /// Sorted by strictly increasing age.
    pub visits: Vec<Visit>,
    pub statics: BTreeMap<String, String>,
    pub events: BTreeMap<String, f64>,
}

impl Subject {
    pub fn first_age(&self) -> f64 {
        self.visits[0].age
    }

    pub fn last_age(&self) -> f64 {
        self.visits[self.visits.len() - 1].age
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Vec<VariableSchema>,
    pub subjects: Vec<Subject>,
}

impl Dataset {
    pub fn variable(&self, name: &str) -> Option<&VariableSchema> {
        self.schema.iter().find(|v| v.name == name)
    }

    pub fn variables_with_role(&self, role: VariableRole) -> impl Iterator<Item = &VariableSchema> {
        self.schema.iter().filter(move |v| v.role == role)
    }

    pub fn dynamic_variables(&self) -> impl Iterator<Item = &VariableSchema> {
        self.schema.iter().filter(|v| v.role.is_dynamic())
    }

    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.id == id)
    }

    pub fn subject_ids(&self) -> BTreeSet<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }

    pub fn visit_count(&self) -> usize {
        self.subjects.iter().map(|s| s.visits.len()).sum()
    }

    /// Copy of the dataset keeping only subjects whose id is in `ids`.
    pub fn restrict(&self, ids: &BTreeSet<String>) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            subjects: self
                .subjects
                .iter()
                .filter(|s| ids.contains(&s.id))
                .cloned()
                .collect(),
        }
    }

    /// Full validation of the dataset invariants.
    pub fn validate(&self) -> Result<(), DataError> {
        validate_schema(&self.schema)?;
        let kinds: HashMap<&str, &VariableSchema> =
            self.schema.iter().map(|v| (v.name.as_str(), v)).collect();
        let mut ids = BTreeSet::new();
        for subject in &self.subjects {
            if !ids.insert(subject.id.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate subject id `{}`",
                    subject.id
                )));
            }
            if subject.visits.is_empty() {
                return Err(DataError::SubjectWithNoVisits(subject.id.clone()));
            }
            for pair in subject.visits.windows(2) {
                if pair[1].age - pair[0].age < AGE_RESOLUTION {
                    return Err(DataError::InvalidSchema(format!(
                        "visits of `{}` are not strictly increasing in age",
                        subject.id
                    )));
                }
            }
            for visit in &subject.visits {
                for (name, value) in &visit.values {
                    let var = kinds
                        .get(name.as_str())
                        .filter(|v| v.role.is_dynamic())
                        .ok_or_else(|| DataError::UnknownVariable(name.clone()))?;
                    if let Some(x) = value {
                        check_kind(var, *x, 0)?;
                    }
                }
            }
            for name in subject.statics.keys() {
                match kinds.get(name.as_str()) {
                    Some(v) if v.role == VariableRole::Static => {}
                    _ => return Err(DataError::UnknownVariable(name.clone())),
                }
            }
            for (name, age) in &subject.events {
                match kinds.get(name.as_str()) {
                    Some(v) if v.role == VariableRole::OutcomeEvent => {}
                    _ => return Err(DataError::UnknownVariable(name.clone())),
                }
                if !(age.is_finite() && *age >= 0.0) {
                    return Err(DataError::InvalidSchema(format!(
                        "event `{name}` of `{}` has invalid age {age}",
                        subject.id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_kind(var: &VariableSchema, x: f64, line: u64) -> Result<(), DataError> {
    let ok = match var.kind {
        VariableKind::Binary => x == 0.0 || x == 1.0,
        VariableKind::Continuous => x.is_finite(),
        VariableKind::Categorical => x.is_finite() && x.fract() == 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(DataError::InvalidValue {
            line,
            variable: var.name.clone(),
            value: x,
            kind: var.kind,
        })
    }
}

fn parse_number(cell: &str, line: u64, variable: &str) -> Result<f64, DataError> {
    cell.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| DataError::NonNumericValue {
            line,
            variable: variable.to_string(),
            value: cell.to_string(),
        })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

fn check_leading_headers(
    headers: &csv::StringRecord,
    expected: &[&str],
) -> Result<(), DataError> {
    for (i, name) in expected.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*name) {
            return Err(DataError::MalformedRow {
                line: 1,
                reason: format!("expected column {} to be `{name}`", i + 1),
            });
        }
    }
    Ok(())
}

fn check_width(record: &csv::StringRecord, width: usize) -> Result<(), DataError> {
    if record.len() != width {
        return Err(DataError::MalformedRow {
            line: line_of(record),
            reason: format!("expected {width} fields, found {}", record.len()),
        });
    }
    Ok(())
}

/// Ingests the three CSV files into a validated [`Dataset`].
pub fn ingest_csv(
    visits_file: &Path,
    statics_file: &Path,
    events_file: &Path,
    schema: &[VariableSchema],
) -> Result<Dataset, DataError> {
    ingest_readers(
        File::open(visits_file)?,
        File::open(statics_file)?,
        File::open(events_file)?,
        schema,
    )
}

/// Same as [`ingest_csv`] over arbitrary readers.
pub fn ingest_readers<V: Read, S: Read, E: Read>(
    visits: V,
    statics: S,
    events: E,
    schema: &[VariableSchema],
) -> Result<Dataset, DataError> {
    validate_schema(schema)?;
    let by_name: HashMap<&str, &VariableSchema> =
        schema.iter().map(|v| (v.name.as_str(), v)).collect();
    let dynamic: Vec<&VariableSchema> = schema.iter().filter(|v| v.role.is_dynamic()).collect();

    let mut order: Vec<String> = Vec::new();
    // Per subject: (age key, visit) in row order.
    let mut raw: HashMap<String, Vec<(i64, Visit)>> = HashMap::new();

    let mut rdr = reader(visits);
    let headers = rdr.headers()?.clone();
    check_leading_headers(&headers, &["subject_id", "age_months"])?;
    let mut columns: Vec<&VariableSchema> = Vec::new();
    for name in headers.iter().skip(2).map(str::trim) {
        let var = by_name
            .get(name)
            .filter(|v| v.role.is_dynamic())
            .ok_or_else(|| DataError::UnknownVariable(name.to_string()))?;
        if columns.iter().any(|c| c.name == var.name) {
            return Err(DataError::MalformedRow {
                line: 1,
                reason: format!("duplicate column `{name}`"),
            });
        }
        columns.push(var);
    }
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        check_width(&record, headers.len())?;
        let id = record[0].trim();
        if id.is_empty() {
            return Err(DataError::MalformedRow {
                line,
                reason: "empty subject_id".into(),
            });
        }
        let age = parse_number(&record[1], line, "age_months")?;
        if age < 0.0 {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("negative age {age}"),
            });
        }
        let mut values: BTreeMap<String, Option<f64>> =
            dynamic.iter().map(|v| (v.name.clone(), None)).collect();
        for (var, cell) in columns.iter().zip(record.iter().skip(2)) {
            if cell.trim().is_empty() {
                continue;
            }
            let x = parse_number(cell, line, &var.name)?;
            check_kind(var, x, line)?;
            values.insert(var.name.clone(), Some(x));
        }
        let entry = raw.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            Vec::new()
        });
        entry.push(((age / AGE_RESOLUTION).round() as i64, Visit { age, values }));
    }

    let mut subjects: Vec<Subject> = Vec::with_capacity(order.len());
    for id in &order {
        let mut rows = raw.remove(id).unwrap_or_default();
        // Stable sort keeps row order within one age key, so later rows win.
        rows.sort_by_key(|(key, _)| *key);
        let mut visits: Vec<Visit> = Vec::with_capacity(rows.len());
        let mut last_key = None;
        for (key, visit) in rows {
            if last_key == Some(key) {
                let merged = visits.last_mut().expect("previous visit exists");
                for (name, value) in visit.values {
                    if value.is_some() {
                        merged.values.insert(name, value);
                    }
                }
            } else {
                visits.push(visit);
                last_key = Some(key);
            }
        }
        subjects.push(Subject {
            id: id.clone(),
            visits,
            statics: BTreeMap::new(),
            events: BTreeMap::new(),
        });
    }
    let index: HashMap<String, usize> = subjects
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.clone(), i))
        .collect();

    let mut rdr = reader(statics);
    let headers = rdr.headers()?.clone();
    check_leading_headers(&headers, &["subject_id"])?;
    let mut static_columns: Vec<String> = Vec::new();
    for name in headers.iter().skip(1).map(str::trim) {
        match by_name.get(name) {
            Some(v) if v.role == VariableRole::Static => static_columns.push(name.to_string()),
            _ => return Err(DataError::UnknownVariable(name.to_string())),
        }
    }
    for record in rdr.records() {
        let record = record?;
        check_width(&record, headers.len())?;
        let id = record[0].trim();
        let &i = index
            .get(id)
            .ok_or_else(|| DataError::SubjectWithNoVisits(id.to_string()))?;
        for (name, cell) in static_columns.iter().zip(record.iter().skip(1)) {
            let cell = cell.trim();
            if !cell.is_empty() {
                subjects[i].statics.insert(name.clone(), cell.to_string());
            }
        }
    }

    let mut rdr = reader(events);
    let headers = rdr.headers()?.clone();
    check_leading_headers(&headers, &["subject_id", "event_name", "age_months"])?;
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        check_width(&record, 3)?;
        let id = record[0].trim();
        let name = record[1].trim();
        match by_name.get(name) {
            Some(v) if v.role == VariableRole::OutcomeEvent => {}
            _ => return Err(DataError::UnknownVariable(name.to_string())),
        }
        let &i = index
            .get(id)
            .ok_or_else(|| DataError::SubjectWithNoVisits(id.to_string()))?;
        if record[2].trim().is_empty() {
            continue;
        }
        let age = parse_number(&record[2], line, name)?;
        if age < 0.0 {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("negative event age {age}"),
            });
        }
        subjects[i].events.insert(name.to_string(), age);
    }

    let ds = Dataset {
        schema: schema.to_vec(),
        subjects,
    };
    ds.validate()?;
    Ok(ds)
}

fn format_number(x: f64) -> String {
    // Display for f64 is the shortest representation that round-trips.
    format!("{x}")
}

/// Writes the dataset back out in the three-file layout.
pub fn export_writers<V: Write, S: Write, E: Write>(
    ds: &Dataset,
    visits: V,
    statics: S,
    events: E,
) -> Result<(), DataError> {
    let dynamic: Vec<&str> = ds.dynamic_variables().map(|v| v.name.as_str()).collect();
    let mut w = csv::Writer::from_writer(visits);
    let mut header = vec!["subject_id", "age_months"];
    header.extend(dynamic.iter().copied());
    w.write_record(&header)?;
    for subject in &ds.subjects {
        for visit in &subject.visits {
            let mut row = vec![subject.id.clone(), format_number(visit.age)];
            row.extend(
                dynamic
                    .iter()
                    .map(|v| visit.value(v).map(format_number).unwrap_or_default()),
            );
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let static_vars: Vec<&str> = ds
        .variables_with_role(VariableRole::Static)
        .map(|v| v.name.as_str())
        .collect();
    let mut w = csv::Writer::from_writer(statics);
    let mut header = vec!["subject_id"];
    header.extend(static_vars.iter().copied());
    w.write_record(&header)?;
    for subject in &ds.subjects {
        let mut row = vec![subject.id.as_str()];
        row.extend(
            static_vars
                .iter()
                .map(|v| subject.statics.get(*v).map(String::as_str).unwrap_or("")),
        );
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(events);
    w.write_record(["subject_id", "event_name", "age_months"])?;
    for subject in &ds.subjects {
        for (name, age) in &subject.events {
            w.write_record([subject.id.as_str(), name.as_str(), &format_number(*age)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// File names of the on-disk dataset layout.
pub const SCHEMA_FILE: &str = "schema.json";
pub const VISITS_FILE: &str = "visits.csv";
pub const STATICS_FILE: &str = "statics.csv";
pub const EVENTS_FILE: &str = "events.csv";

/// Writes `schema.json`, `visits.csv`, `statics.csv` and `events.csv` into `dir`.
pub fn export_dir(ds: &Dataset, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    let schema = serde_json::to_string_pretty(&ds.schema)?;
    std::fs::write(dir.join(SCHEMA_FILE), schema + "\n")?;
    export_writers(
        ds,
        File::create(dir.join(VISITS_FILE))?,
        File::create(dir.join(STATICS_FILE))?,
        File::create(dir.join(EVENTS_FILE))?,
    )
}

/// Reads a dataset directory written by [`export_dir`].
pub fn ingest_dir(dir: &Path) -> Result<Dataset, DataError> {
    let schema = read_schema(&dir.join(SCHEMA_FILE))?;
    ingest_csv(
        &dir.join(VISITS_FILE),
        &dir.join(STATICS_FILE),
        &dir.join(EVENTS_FILE),
        &schema,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub subject_count: usize,
    pub visit_count: usize,
    /// Fraction of visits with the variable missing, per dynamic variable.
    pub missing_rate: BTreeMap<String, f64>,
    /// `[min, max]` visit age in months.
    pub age_range: Option<[f64; 2]>,
}

pub fn summarize(ds: &Dataset) -> DatasetSummary {
    let visit_count = ds.visit_count();
    let missing_rate = ds
        .dynamic_variables()
        .map(|var| {
            let missing = ds
                .subjects
                .iter()
                .flat_map(|s| &s.visits)
                .filter(|v| v.value(&var.name).is_none())
                .count();
            let rate = if visit_count == 0 {
                1.0
            } else {
                missing as f64 / visit_count as f64
            };
            (var.name.clone(), rate)
        })
        .collect();
    let age_range = ds
        .subjects
        .iter()
        .flat_map(|s| s.visits.iter().map(|v| v.age))
        .fold(None, |acc: Option<[f64; 2]>, a| match acc {
            None => Some([a, a]),
            Some([lo, hi]) => Some([lo.min(a), hi.max(a)]),
        });
    DatasetSummary {
        subject_count: ds.subjects.len(),
        visit_count,
        missing_rate,
        age_range,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema3() -> Vec<VariableSchema> {
        vec![
            VariableSchema::new("v1", VariableKind::Binary, VariableRole::DynamicObserved),
            VariableSchema::new("v2", VariableKind::Binary, VariableRole::DynamicObserved),
            VariableSchema::new("v3", VariableKind::Binary, VariableRole::DynamicObserved),
            VariableSchema::new("SEX", VariableKind::Categorical, VariableRole::Static),
            VariableSchema::new("onset", VariableKind::Continuous, VariableRole::OutcomeEvent),
        ]
    }

    fn ingest(visits: &str, statics: &str, events: &str) -> Result<Dataset, DataError> {
        ingest_readers(
            visits.as_bytes(),
            statics.as_bytes(),
            events.as_bytes(),
            &schema3(),
        )
    }

    const NO_STATICS: &str = "subject_id,SEX\n";
    const NO_EVENTS: &str = "subject_id,event_name,age_months\n";

    #[test]
    fn empty_cell_is_missing() {
        let ds = ingest("subject_id,age_months,v1,v2,v3\nS1,12.0,1,,0\n", NO_STATICS, NO_EVENTS)
            .unwrap();
        let visit = &ds.subjects[0].visits[0];
        assert_eq!(visit.age, 12.0);
        assert_eq!(visit.values["v1"], Some(1.0));
        assert_eq!(visit.values["v2"], None);
        assert_eq!(visit.values["v3"], Some(0.0));
    }

    #[test]
    fn same_age_rows_merge_later_wins() {
        let ds = ingest(
            "subject_id,age_months,v1,v2,v3\nS1,12.0,1,,1\nS1,12.0,,0,0\n",
            NO_STATICS,
            NO_EVENTS,
        )
        .unwrap();
        let visits = &ds.subjects[0].visits;
        assert_eq!(visits.len(), 1);
        assert_eq!(visits[0].values["v1"], Some(1.0));
        assert_eq!(visits[0].values["v2"], Some(0.0));
        assert_eq!(visits[0].values["v3"], Some(0.0));
    }

    #[test]
    fn events_and_statics_attach() {
        let ds = ingest(
            "subject_id,age_months,v1,v2,v3\nS1,3,0,0,0\n",
            "subject_id,SEX\nS1,F\n",
            "subject_id,event_name,age_months\nS1,onset,96.5\n",
        )
        .unwrap();
        assert_eq!(ds.subjects[0].events["onset"], 96.5);
        assert_eq!(ds.subjects[0].statics["SEX"], "F");
    }

    #[test]
    fn visits_are_sorted() {
        let ds = ingest(
            "subject_id,age_months,v1,v2,v3\nS1,24,0,0,0\nS1,6,1,1,1\nS1,12,,,\n",
            NO_STATICS,
            NO_EVENTS,
        )
        .unwrap();
        let ages: Vec<f64> = ds.subjects[0].visits.iter().map(|v| v.age).collect();
        assert_eq!(ages, vec![6.0, 12.0, 24.0]);
    }

    #[test]
    fn error_paths() {
        let err = ingest("subject_id,age_months,v1,v2,v3\nS1,1,0\n", NO_STATICS, NO_EVENTS)
            .unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { line: 2, .. }), "{err}");

        let err = ingest("subject_id,age_months,v1,vX\n", NO_STATICS, NO_EVENTS).unwrap_err();
        assert!(matches!(err, DataError::UnknownVariable(ref v) if v == "vX"));

        let err = ingest(
            "subject_id,age_months,v1,v2,v3\nS1,1,0,0,0\nS1,2,yes,0,0\n",
            NO_STATICS,
            NO_EVENTS,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::NonNumericValue { line: 3, .. }), "{err}");

        let err = ingest(
            "subject_id,age_months,v1,v2,v3\nS1,1,0,0,0\n",
            "subject_id,SEX\nS2,M\n",
            NO_EVENTS,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::SubjectWithNoVisits(ref s) if s == "S2"));

        let err = ingest("subject_id,age_months,v1,v2,v3\nS1,1,2,0,0\n", NO_STATICS, NO_EVENTS)
            .unwrap_err();
        assert!(matches!(err, DataError::InvalidValue { .. }));
    }

    #[test]
    fn summary_counts() {
        let ds = ingest(
            "subject_id,age_months,v1,v2,v3\nA,0,1,,0\nA,1,1,,0\nA,2,1,,0\nB,100,0,,1\nB,240,0,,1\n",
            NO_STATICS,
            NO_EVENTS,
        )
        .unwrap();
        let summary = summarize(&ds);
        assert_eq!(summary.subject_count, 2);
        assert_eq!(summary.visit_count, 5);
        assert_eq!(summary.missing_rate["v2"], 1.0);
        assert_eq!(summary.missing_rate["v1"], 0.0);
        assert_eq!(summary.age_range, Some([0.0, 240.0]));
    }

    #[test]
    fn schema_rules() {
        let bad = vec![VariableSchema::new(
            "onset",
            VariableKind::Binary,
            VariableRole::OutcomeEvent,
        )];
        assert!(validate_schema(&bad).is_err());
        let dup = vec![
            VariableSchema::new("a", VariableKind::Binary, VariableRole::DynamicObserved),
            VariableSchema::new("a", VariableKind::Binary, VariableRole::Static),
        ];
        assert!(validate_schema(&dup).is_err());
    }
}
