//! Relational schemas: which columns identify objects and which carry
//! feature values.
//!
//! A schema document is a small plain-text format, one block per column:
//!
//! ```text
//! column TeamId
//! role object-variable
//!
//! column ShotEff
//! role feature
//! kind continuous
//! bins 2
//!
//! column Result
//! role feature
//! kind discrete
//! domain win loss tie
//! ```
//!
//! Blocks are separated by blank lines; `#` starts a comment line. The
//! serializer emits exactly this canonical layout, so canonical documents
//! round-trip byte-identically through parse → serialize.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while parsing or validating a schema.
#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("duplicate column {name:?}")]
    DuplicateColumn { name: String },

    #[error("schema declares no object-variable column")]
    NoObjectVariable,

    #[error("schema declares no feature column")]
    NoFeature,

    #[error("discrete feature {column:?} has an empty domain")]
    EmptyDomain { column: String },

    #[error("discrete feature {column:?} repeats domain value {value:?}")]
    DuplicateDomainValue { column: String, value: String },

    #[error("domain value {value:?} of column {column:?} contains whitespace")]
    WhitespaceInValue { column: String, value: String },

    #[error("column name {name:?} must be a non-empty identifier without whitespace")]
    InvalidColumnName { name: String },

    #[error("continuous feature {column:?} declares {bins} bins; at least 2 required")]
    TooFewBins { column: String, bins: usize },

    #[error("schema parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One declared column: an object identifier or a feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnSpec {
    /// First-order variable column; its values are object identifiers.
    ObjectVariable { name: String },
    /// Feature with a fixed set of value labels.
    DiscreteFeature { name: String, domain: Vec<String> },
    /// Numeric feature that must be discretized before modelling.
    ContinuousFeature { name: String, bins: usize },
}

impl ColumnSpec {
    pub fn name(&self) -> &str {
        match self {
            ColumnSpec::ObjectVariable { name }
            | ColumnSpec::DiscreteFeature { name, .. }
            | ColumnSpec::ContinuousFeature { name, .. } => name,
        }
    }

    pub fn is_feature(&self) -> bool {
        !matches!(self, ColumnSpec::ObjectVariable { .. })
    }

    pub fn is_object_variable(&self) -> bool {
        matches!(self, ColumnSpec::ObjectVariable { .. })
    }
}

/// Ordered column declarations for one grounding table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationalSchema {
    columns: Vec<ColumnSpec>,
}

impl RelationalSchema {
    /// Builds a schema, checking every invariant.
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, SchemaError> {
        let mut seen = std::collections::HashSet::new();
        for col in &columns {
            let name = col.name();
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(SchemaError::InvalidColumnName {
                    name: name.to_string(),
                });
            }
            if !seen.insert(name.to_string()) {
                return Err(SchemaError::DuplicateColumn {
                    name: name.to_string(),
                });
            }
            match col {
                ColumnSpec::DiscreteFeature { name, domain } => {
                    if domain.is_empty() {
                        return Err(SchemaError::EmptyDomain {
                            column: name.clone(),
                        });
                    }
                    let mut values = std::collections::HashSet::new();
                    for v in domain {
                        if v.is_empty() || v.chars().any(char::is_whitespace) {
                            return Err(SchemaError::WhitespaceInValue {
                                column: name.clone(),
                                value: v.clone(),
                            });
                        }
                        if !values.insert(v.as_str()) {
                            return Err(SchemaError::DuplicateDomainValue {
                                column: name.clone(),
                                value: v.clone(),
                            });
                        }
                    }
                }
                ColumnSpec::ContinuousFeature { name, bins } => {
                    if *bins < 2 {
                        return Err(SchemaError::TooFewBins {
                            column: name.clone(),
                            bins: *bins,
                        });
                    }
                }
                ColumnSpec::ObjectVariable { .. } => {}
            }
        }
        if !columns.iter().any(ColumnSpec::is_object_variable) {
            return Err(SchemaError::NoObjectVariable);
        }
        if !columns.iter().any(ColumnSpec::is_feature) {
            return Err(SchemaError::NoFeature);
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    /// Index and spec of the named column.
    pub fn column(&self, name: &str) -> Option<(usize, &ColumnSpec)> {
        self.columns
            .iter()
            .enumerate()
            .find(|(_, c)| c.name() == name)
    }

    pub fn object_variables(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.is_object_variable())
    }

    pub fn features(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.is_feature())
    }

    /// Value domain of a discrete feature, in declaration order.
    pub fn domain(&self, feature: &str) -> Option<&[String]> {
        match self.column(feature)?.1 {
            ColumnSpec::DiscreteFeature { domain, .. } => Some(domain),
            _ => None,
        }
    }

    /// Parses a schema document. See the module docs for the grammar.
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        #[derive(Default)]
        struct Block {
            line: usize,
            name: Option<String>,
            role: Option<String>,
            kind: Option<String>,
            domain: Option<Vec<String>>,
            bins: Option<usize>,
        }

        fn finish(block: Block) -> Result<ColumnSpec, SchemaError> {
            let err = |message: String| SchemaError::Parse {
                line: block.line,
                message,
            };
            let name = block
                .name
                .ok_or_else(|| err("column block without a name".into()))?;
            let role = block
                .role
                .ok_or_else(|| err(format!("column {name:?} is missing a role")))?;
            match role.as_str() {
                "object-variable" => Ok(ColumnSpec::ObjectVariable { name }),
                "feature" => match block.kind.as_deref() {
                    Some("discrete") => Ok(ColumnSpec::DiscreteFeature {
                        name,
                        domain: block.domain.unwrap_or_default(),
                    }),
                    Some("continuous") => {
                        let bins = block
                            .bins
                            .ok_or_else(|| err(format!("continuous {name:?} needs bins")))?;
                        Ok(ColumnSpec::ContinuousFeature { name, bins })
                    }
                    Some(other) => Err(err(format!("unknown kind {other:?}"))),
                    None => Err(err(format!("feature {name:?} is missing a kind"))),
                },
                other => Err(err(format!("unknown role {other:?}"))),
            }
        }

        let mut columns = Vec::new();
        let mut block: Option<Block> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = match line.split_once(char::is_whitespace) {
                Some((k, r)) => (k, r.trim()),
                None => (line, ""),
            };
            let parse_err = |message: String| SchemaError::Parse {
                line: line_no,
                message,
            };
            if key == "column" {
                if let Some(done) = block.take() {
                    columns.push(finish(done)?);
                }
                if rest.is_empty() {
                    return Err(parse_err("column line without a name".into()));
                }
                block = Some(Block {
                    line: line_no,
                    name: Some(rest.to_string()),
                    ..Block::default()
                });
                continue;
            }
            let current = block
                .as_mut()
                .ok_or_else(|| parse_err(format!("{key:?} before any column line")))?;
            match key {
                "role" => current.role = Some(rest.to_string()),
                "kind" => current.kind = Some(rest.to_string()),
                "domain" => {
                    current.domain = Some(rest.split_whitespace().map(str::to_string).collect());
                }
                "bins" => {
                    current.bins = Some(rest.parse().map_err(|_| {
                        parse_err(format!("bins wants a positive integer, got {rest:?}"))
                    })?);
                }
                other => return Err(parse_err(format!("unknown key {other:?}"))),
            }
        }
        if let Some(done) = block.take() {
            columns.push(finish(done)?);
        }
        Self::new(columns)
    }

    /// Canonical text rendering; see module docs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, col) in self.columns.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            match col {
                ColumnSpec::ObjectVariable { name } => {
                    out.push_str(&format!("column {name}\nrole object-variable\n"));
                }
                ColumnSpec::DiscreteFeature { name, domain } => {
                    out.push_str(&format!(
                        "column {name}\nrole feature\nkind discrete\ndomain {}\n",
                        domain.join(" ")
                    ));
                }
                ColumnSpec::ContinuousFeature { name, bins } => {
                    out.push_str(&format!(
                        "column {name}\nrole feature\nkind continuous\nbins {bins}\n"
                    ));
                }
            }
        }
        out
    }
}
