//! Exceptional-object detection in object-relational data.
//!
//! An object in relational data is characterized by its own sub-database
//! (its rows in the grounding table), not a single feature vector. This
//! crate fits Bayesian-network parameters at class level and object level
//! over such data and ranks objects by likelihood-comparison scores; the
//! headline score is the log-likelihood distance (LD), which combines a
//! single-feature divergence with a mutual-information divergence and
//! takes distances instead of differences so deviations cannot cancel.
//!
//! Pipeline: load a grounding table against a [`schema::RelationalSchema`],
//! discretize continuous features ([`discretize`]), fix a DAG over the
//! features ([`structure`], or learn one with [`learn`]), fit class and
//! per-object parameters ([`cpt`]), score ([`scores`]), rank and evaluate
//! ([`eval`]), and explain the top hits ([`explain`]). [`synth`] generates
//! the benchmark scenarios with ground-truth labels.
//!
//! All numeric code is generic over the scalar type via [`num::Real`];
//! the `*64` aliases below cover the common `f64` case.

pub mod cpt;
pub mod discretize;
pub mod eval;
pub mod explain;
pub mod learn;
pub mod num;
pub mod schema;
pub mod scores;
pub mod structure;
pub mod synth;
pub mod table;

pub use cpt::{fit_parameters, CptSet};
pub use discretize::{apply_bins, discretize, fit_bins, BinEdges};
pub use eval::{
    auc, flatten, knn_outlier_score, precision_at, rank_objects, rank_objects_multi, read_labels,
    recall_at, write_labels, FlatVector, ObjectLabel, RankOutcome, Ranking,
};
pub use explain::{drill_down, format_rule, render_text, Explanation};
pub use learn::greedy_structure_learn;
pub use num::Real;
pub use schema::{ColumnSpec, RelationalSchema, SchemaError};
pub use scores::{
    decompose_term, pll_breakdown, pseudo_log_likelihood, score_abs_lr, score_fd, score_ld,
    score_log, score_lr, score_lr_plus, score_report, Metric, ScoreReport,
};
pub use structure::{ModelError, PbnStructure, StructureSpec, StructureViolation};
pub use synth::{generate, scenario_models, ScenarioKind, ScenarioSpec};
pub use table::{load_grounding_table, DataError, GroundingTable, Provenance, ValueAssignment};

/// `f64` grounding table.
pub type Table64 = table::GroundingTable<f64>;
/// `f32` grounding table.
pub type Table32 = table::GroundingTable<f32>;
/// `f64` parameter set.
pub type Cpt64 = cpt::CptSet<f64>;
/// `f32` parameter set.
pub type Cpt32 = cpt::CptSet<f32>;
/// `f64` score report.
pub type Report64 = scores::ScoreReport<f64>;
/// `f64` ranking.
pub type Ranking64 = eval::Ranking<f64>;
/// `f64` drill-down explanation.
pub type Explanation64 = explain::Explanation<f64>;
