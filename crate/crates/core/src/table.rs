//! Grounding tables: rows of ground-term value assignments, with the
//! counting and slicing operations every estimator builds on.

use std::collections::BTreeMap;
use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{ratio, Real};
use crate::schema::{ColumnSpec, RelationalSchema};

/// Errors raised by table loading and query operations.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("CSV header mismatch: missing {missing:?}, unexpected {unexpected:?}")]
    HeaderMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("row {row}, column {column:?}: value {value:?} is outside the domain")]
    ValueOutsideDomain {
        row: usize,
        column: String,
        value: String,
    },

    #[error("assignment value {value:?} is outside the domain of {column:?}")]
    UnknownValue { column: String, value: String },

    #[error("row {row}, column {column:?}: expected a finite number, got {value:?}")]
    InvalidNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown column {name:?}")]
    UnknownColumn { name: String },

    #[error("column {name:?} is not an object variable")]
    NotObjectVariable { name: String },

    #[error("column {name:?} is not a discrete feature")]
    NotDiscrete { name: String },

    #[error("column {name:?} is not a continuous feature")]
    NotContinuous { name: String },

    #[error("cannot discretize {feature:?} into {bins} bins; at least 2 required")]
    InvalidBins { feature: String, bins: usize },

    #[error("operation requires a non-empty table")]
    EmptyTable,

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Where a table's rows came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// The full class/population table.
    Class,
    /// A slice restricted to one object.
    Object { variable: String, id: String },
}

/// One stored cell. Discrete values are kept as indices into the column
/// domain, which makes grounding counts cheap integer comparisons.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Cell<R> {
    Id(String),
    Label(u32),
    Num(R),
}

/// A map from feature names to value labels, used to state grounding
/// count queries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValueAssignment {
    pairs: BTreeMap<String, String>,
}

impl ValueAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builder-style insertion; a repeated feature keeps the last value.
    pub fn with(mut self, feature: &str, value: &str) -> Self {
        self.pairs.insert(feature.to_string(), value.to_string());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, feature: &str) -> Option<&str> {
        self.pairs.get(feature).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for ValueAssignment {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        Self {
            pairs: iter
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }
}

/// Rows of complete ground-term value assignments under one schema.
///
/// Tables are immutable after construction; every query below is a pure
/// read, so shared references may be used from many threads.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingTable<R: Real> {
    schema: Arc<RelationalSchema>,
    pub(crate) rows: Vec<Vec<Cell<R>>>,
    provenance: Provenance,
}

impl<R: Real> GroundingTable<R> {
    /// Builds a table from string-valued rows in schema column order,
    /// applying the same validation as CSV loading.
    pub fn from_string_rows<S: AsRef<str>>(
        schema: Arc<RelationalSchema>,
        rows: &[Vec<S>],
    ) -> Result<Self, DataError> {
        let mut table_rows = Vec::with_capacity(rows.len());
        for (row_idx, row) in rows.iter().enumerate() {
            let mut cells = Vec::with_capacity(schema.columns().len());
            for (col, spec) in schema.columns().iter().enumerate() {
                let raw = row.get(col).map(AsRef::as_ref).unwrap_or("");
                cells.push(parse_cell(spec, raw, row_idx + 1)?);
            }
            table_rows.push(cells);
        }
        Ok(Self {
            schema,
            rows: table_rows,
            provenance: Provenance::Class,
        })
    }

    pub fn schema(&self) -> &Arc<RelationalSchema> {
        &self.schema
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The object database `D_o`: exactly the rows whose `variable` column
    /// equals `id`. An absent id yields an empty table, not an error.
    pub fn restrict_to_object(&self, variable: &str, id: &str) -> Result<Self, DataError> {
        let (col, spec) = self
            .schema
            .column(variable)
            .ok_or_else(|| DataError::UnknownColumn {
                name: variable.to_string(),
            })?;
        if !spec.is_object_variable() {
            return Err(DataError::NotObjectVariable {
                name: variable.to_string(),
            });
        }
        let rows = self
            .rows
            .iter()
            .filter(|row| matches!(&row[col], Cell::Id(v) if v == id))
            .cloned()
            .collect();
        Ok(Self {
            schema: Arc::clone(&self.schema),
            rows,
            provenance: Provenance::Object {
                variable: variable.to_string(),
                id: id.to_string(),
            },
        })
    }

    /// Keeps only the rows whose `variable` value passes the filter,
    /// e.g. to build a one-class training table from labeled data.
    /// Provenance is unchanged: the result is still a class-level table.
    pub fn filter_objects<F: Fn(&str) -> bool>(
        &self,
        variable: &str,
        keep: F,
    ) -> Result<Self, DataError> {
        let (col, spec) = self
            .schema
            .column(variable)
            .ok_or_else(|| DataError::UnknownColumn {
                name: variable.to_string(),
            })?;
        if !spec.is_object_variable() {
            return Err(DataError::NotObjectVariable {
                name: variable.to_string(),
            });
        }
        let rows = self
            .rows
            .iter()
            .filter(|row| matches!(&row[col], Cell::Id(v) if keep(v)))
            .cloned()
            .collect();
        Ok(Self {
            schema: Arc::clone(&self.schema),
            rows,
            provenance: self.provenance.clone(),
        })
    }

    /// Distinct identifiers appearing in an object-variable column, sorted.
    pub fn distinct_ids(&self, variable: &str) -> Result<Vec<String>, DataError> {
        let (col, spec) = self
            .schema
            .column(variable)
            .ok_or_else(|| DataError::UnknownColumn {
                name: variable.to_string(),
            })?;
        if !spec.is_object_variable() {
            return Err(DataError::NotObjectVariable {
                name: variable.to_string(),
            });
        }
        let mut ids: Vec<String> = self
            .rows
            .iter()
            .filter_map(|row| match &row[col] {
                Cell::Id(v) => Some(v.clone()),
                _ => None,
            })
            .collect();
        ids.sort();
        ids.dedup();
        Ok(ids)
    }

    /// Grounding count `#_D`: rows matching every pair of the assignment.
    /// The empty assignment matches everything.
    pub fn count(&self, assignment: &ValueAssignment) -> Result<usize, DataError> {
        let resolved = self.resolve(assignment)?;
        Ok(self
            .rows
            .iter()
            .filter(|row| {
                resolved
                    .iter()
                    .all(|&(col, label)| matches!(row[col], Cell::Label(l) if l == label))
            })
            .count())
    }

    /// Database frequency `P_D`: grounding count over total groundings.
    pub fn frequency(&self, assignment: &ValueAssignment) -> Result<R, DataError> {
        if self.rows.is_empty() {
            return Err(DataError::EmptyTable);
        }
        Ok(ratio(self.count(assignment)?, self.rows.len()))
    }

    /// Raw values of a continuous column.
    pub fn continuous_values(&self, feature: &str) -> Result<Vec<R>, DataError> {
        let (col, spec) = self
            .schema
            .column(feature)
            .ok_or_else(|| DataError::UnknownColumn {
                name: feature.to_string(),
            })?;
        if !matches!(spec, ColumnSpec::ContinuousFeature { .. }) {
            return Err(DataError::NotContinuous {
                name: feature.to_string(),
            });
        }
        Ok(self
            .rows
            .iter()
            .map(|row| match &row[col] {
                Cell::Num(v) => *v,
                _ => unreachable!("continuous column holds numeric cells"),
            })
            .collect())
    }

    /// Writes the table as RFC-4180 CSV with a header row.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let names: Vec<&str> = self.schema.columns().iter().map(ColumnSpec::name).collect();
        w.write_record(&names)?;
        for row in &self.rows {
            let record: Vec<String> = row
                .iter()
                .zip(self.schema.columns())
                .map(|(cell, spec)| match cell {
                    Cell::Id(v) => v.clone(),
                    Cell::Label(l) => match spec {
                        ColumnSpec::DiscreteFeature { domain, .. } => domain[*l as usize].clone(),
                        _ => unreachable!("label cell under non-discrete column"),
                    },
                    Cell::Num(v) => format!("{}", v.to_f64().expect("finite value")),
                })
                .collect();
            w.write_record(&record)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub(crate) fn with_parts(
        schema: Arc<RelationalSchema>,
        rows: Vec<Vec<Cell<R>>>,
        provenance: Provenance,
    ) -> Self {
        Self {
            schema,
            rows,
            provenance,
        }
    }

    pub(crate) fn label_at(&self, row: usize, col: usize) -> u32 {
        match self.rows[row][col] {
            Cell::Label(l) => l,
            _ => unreachable!("expected a discrete cell"),
        }
    }

    fn resolve(&self, assignment: &ValueAssignment) -> Result<Vec<(usize, u32)>, DataError> {
        let mut resolved = Vec::new();
        for (feature, value) in assignment.iter() {
            let (col, spec) =
                self.schema
                    .column(feature)
                    .ok_or_else(|| DataError::UnknownColumn {
                        name: feature.to_string(),
                    })?;
            let domain = match spec {
                ColumnSpec::DiscreteFeature { domain, .. } => domain,
                _ => {
                    return Err(DataError::NotDiscrete {
                        name: feature.to_string(),
                    })
                }
            };
            let label =
                domain
                    .iter()
                    .position(|v| v == value)
                    .ok_or_else(|| DataError::UnknownValue {
                        column: feature.to_string(),
                        value: value.to_string(),
                    })?;
            resolved.push((col, label as u32));
        }
        Ok(resolved)
    }
}

fn parse_cell<R: Real>(spec: &ColumnSpec, raw: &str, row: usize) -> Result<Cell<R>, DataError> {
    match spec {
        ColumnSpec::ObjectVariable { .. } => Ok(Cell::Id(raw.to_string())),
        ColumnSpec::DiscreteFeature { name, domain } => domain
            .iter()
            .position(|v| v == raw)
            .map(|l| Cell::Label(l as u32))
            .ok_or_else(|| DataError::ValueOutsideDomain {
                row,
                column: name.clone(),
                value: raw.to_string(),
            }),
        ColumnSpec::ContinuousFeature { name, .. } => {
            let parsed: f64 = raw.trim().parse().map_err(|_| DataError::InvalidNumber {
                row,
                column: name.clone(),
                value: raw.to_string(),
            })?;
            if !parsed.is_finite() {
                return Err(DataError::InvalidNumber {
                    row,
                    column: name.clone(),
                    value: raw.to_string(),
                });
            }
            Ok(Cell::Num(R::from_f64(parsed).expect("finite value")))
        }
    }
}

/// Loads a grounding table from RFC-4180 CSV. The header must contain
/// exactly the schema's column names, in any order; continuous columns
/// are kept raw (discretization is a separate step).
pub fn load_grounding_table<R: Real, D: io::Read>(
    reader: D,
    schema: Arc<RelationalSchema>,
) -> Result<GroundingTable<R>, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();

    let mut missing = Vec::new();
    let mut mapping = Vec::with_capacity(schema.columns().len());
    for spec in schema.columns() {
        match headers.iter().position(|h| h == spec.name()) {
            Some(idx) => mapping.push(idx),
            None => missing.push(spec.name().to_string()),
        }
    }
    let unexpected: Vec<String> = headers
        .iter()
        .filter(|h| schema.column(h).is_none())
        .map(str::to_string)
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(DataError::HeaderMismatch {
            missing,
            unexpected,
        });
    }

    let mut rows = Vec::new();
    for (row_idx, record) in csv_reader.records().enumerate() {
        let record = record?;
        let mut cells = Vec::with_capacity(schema.columns().len());
        for (spec, &source) in schema.columns().iter().zip(&mapping) {
            cells.push(parse_cell(spec, &record[source], row_idx + 1)?);
        }
        rows.push(cells);
    }
    Ok(GroundingTable::with_parts(schema, rows, Provenance::Class))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;

    fn soccer_schema() -> Arc<RelationalSchema> {
        Arc::new(
            RelationalSchema::new(vec![
                ColumnSpec::ObjectVariable {
                    name: "TeamId".into(),
                },
                ColumnSpec::ObjectVariable {
                    name: "MatchId".into(),
                },
                ColumnSpec::DiscreteFeature {
                    name: "passEff".into(),
                    domain: vec!["hi".into(), "lo".into()],
                },
                ColumnSpec::DiscreteFeature {
                    name: "shotEff".into(),
                    domain: vec!["hi".into(), "lo".into()],
                },
                ColumnSpec::DiscreteFeature {
                    name: "Result".into(),
                    domain: vec!["win".into(), "loss".into(), "tie".into()],
                },
            ])
            .unwrap(),
        )
    }

    /// 760 team-match rows over 20 teams: 76 population rows satisfy
    /// (passEff=hi, shotEff=hi, Result=win), 7 of them for team WA.
    fn population() -> GroundingTable<f64> {
        let mut rows = Vec::new();
        for team in 0..20 {
            let team_id = format!("T{team:02}");
            let family_rows = if team == 0 {
                7
            } else {
                (76 - 7) / 19 + usize::from(team <= (76 - 7) % 19)
            };
            for m in 0..38 {
                let match_id = format!("M{team:02}x{m:02}");
                let row = if m < family_rows {
                    vec![
                        team_id.clone(),
                        match_id,
                        "hi".into(),
                        "hi".into(),
                        "win".into(),
                    ]
                } else {
                    vec![
                        team_id.clone(),
                        match_id,
                        "lo".into(),
                        "lo".into(),
                        "loss".into(),
                    ]
                };
                rows.push(row);
            }
        }
        GroundingTable::from_string_rows(soccer_schema(), &rows).unwrap()
    }

    fn family() -> ValueAssignment {
        ValueAssignment::new()
            .with("passEff", "hi")
            .with("shotEff", "hi")
            .with("Result", "win")
    }

    #[test]
    fn population_counts_match_grounding_table() {
        let table = population();
        assert_eq!(table.row_count(), 760);
        assert_eq!(table.count(&family()).unwrap(), 76);
        assert_eq!(table.frequency(&family()).unwrap(), 0.1);
    }

    #[test]
    fn object_slice_counts() {
        let table = population();
        let wa = table.restrict_to_object("TeamId", "T00").unwrap();
        assert_eq!(wa.row_count(), 38);
        assert_eq!(wa.count(&family()).unwrap(), 7);
        let freq = wa.frequency(&family()).unwrap();
        assert!((freq - 7.0 / 38.0).abs() < 1e-15);
        assert_eq!(
            wa.provenance(),
            &Provenance::Object {
                variable: "TeamId".into(),
                id: "T00".into()
            }
        );
    }

    #[test]
    fn restriction_is_idempotent() {
        let table = population();
        let once = table.restrict_to_object("TeamId", "T03").unwrap();
        let twice = once.restrict_to_object("TeamId", "T03").unwrap();
        assert_eq!(once.rows, twice.rows);
    }

    #[test]
    fn absent_id_yields_empty_table() {
        let table = population();
        let none = table.restrict_to_object("TeamId", "NOPE").unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn filter_objects_keeps_class_provenance() {
        let table = population();
        let filtered = table.filter_objects("TeamId", |id| id != "T00").unwrap();
        assert_eq!(filtered.row_count(), 760 - 38);
        assert_eq!(filtered.provenance(), &Provenance::Class);
        assert!(filtered
            .distinct_ids("TeamId")
            .unwrap()
            .iter()
            .all(|i| i != "T00"));
    }

    #[test]
    fn empty_assignment_counts_all_rows() {
        let table = population();
        assert_eq!(table.count(&ValueAssignment::new()).unwrap(), 760);
        assert_eq!(table.frequency(&ValueAssignment::new()).unwrap(), 1.0);
    }

    #[test]
    fn count_partitions_over_any_free_feature() {
        let table = population();
        let base = ValueAssignment::new().with("passEff", "hi");
        let total = table.count(&base).unwrap();
        let split: usize = ["win", "loss", "tie"]
            .iter()
            .map(|v| table.count(&base.clone().with("Result", v)).unwrap())
            .sum();
        assert_eq!(total, split);
    }

    #[test]
    fn csv_load_happy_path_and_header_permutation() {
        let schema = soccer_schema();
        let csv = "MatchId,TeamId,passEff,shotEff,Result\nM1,WA,hi,hi,win\nM2,WA,lo,hi,loss\n";
        let table = load_grounding_table::<f64, _>(csv.as_bytes(), schema).unwrap();
        assert_eq!(table.row_count(), 2);
        assert_eq!(
            table
                .count(&ValueAssignment::new().with("passEff", "hi"))
                .unwrap(),
            1
        );
    }

    #[test]
    fn csv_empty_data_section_is_fine() {
        let schema = soccer_schema();
        let csv = "TeamId,MatchId,passEff,shotEff,Result\n";
        let table = load_grounding_table::<f64, _>(csv.as_bytes(), schema).unwrap();
        assert_eq!(table.row_count(), 0);
    }

    #[test]
    fn csv_header_mismatch_reports_both_sides() {
        let schema = soccer_schema();
        let csv = "TeamId,MatchId,passEff,shotEff,Outcome\nWA,M1,hi,hi,win\n";
        let err = load_grounding_table::<f64, _>(csv.as_bytes(), schema).unwrap_err();
        match err {
            DataError::HeaderMismatch {
                missing,
                unexpected,
            } => {
                assert_eq!(missing, vec!["Result".to_string()]);
                assert_eq!(unexpected, vec!["Outcome".to_string()]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_domain_violation_names_row_and_column() {
        let schema = soccer_schema();
        let csv = "TeamId,MatchId,passEff,shotEff,Result\nWA,M1,hi,hi,win\nWA,M2,hi,hi,draw\n";
        let err = load_grounding_table::<f64, _>(csv.as_bytes(), schema).unwrap_err();
        match err {
            DataError::ValueOutsideDomain { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "Result");
                assert_eq!(value, "draw");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn frequency_on_empty_table_is_an_error() {
        let schema = soccer_schema();
        let table =
            GroundingTable::<f64>::from_string_rows(schema, &Vec::<Vec<&str>>::new()).unwrap();
        assert!(matches!(
            table.frequency(&ValueAssignment::new()),
            Err(DataError::EmptyTable)
        ));
    }

    #[test]
    fn unknown_feature_in_assignment_errors() {
        let table = population();
        let err = table
            .count(&ValueAssignment::new().with("Foo", "bar"))
            .unwrap_err();
        assert!(matches!(err, DataError::UnknownColumn { name } if name == "Foo"));
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let table = population();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back =
            load_grounding_table::<f64, _>(buf.as_slice(), Arc::clone(table.schema())).unwrap();
        assert_eq!(back.rows, table.rows);
    }
}
