//! Synthetic two-feature scenarios with ground-truth outlier labels.
//!
//! Three scenarios, each a binary chain F1 -> F2 sampled per (player,
//! match) grounding:
//!
//! * high-correlation: normal players have a strong association between
//!   their features (0.9), outliers none; single-feature marginals are
//!   uniform for both.
//! * low-correlation: the mirror image.
//! * single-feature: both groups share the association; normals have
//!   P(F1=0) = 0.9, outliers 0.1.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cpt::{CptSet, NodeParams};
use crate::eval::ObjectLabel;
use crate::num::Real;
use crate::schema::RelationalSchema;
use crate::structure::PbnStructure;
use crate::table::{Cell, GroundingTable, Provenance};

/// The three synthetic designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    HighCorrelation,
    LowCorrelation,
    SingleFeature,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::HighCorrelation,
        ScenarioKind::LowCorrelation,
        ScenarioKind::SingleFeature,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::HighCorrelation => "high-correlation",
            ScenarioKind::LowCorrelation => "low-correlation",
            ScenarioKind::SingleFeature => "single-feature",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high" | "high-correlation" | "high_correlation" => Ok(ScenarioKind::HighCorrelation),
            "low" | "low-correlation" | "low_correlation" => Ok(ScenarioKind::LowCorrelation),
            "single" | "single-feature" | "single_feature" => Ok(ScenarioKind::SingleFeature),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

/// Generation parameters. Defaults mirror the evaluation design: 240
/// normal players, 40 outliers, 38 matches each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_normal: usize,
    pub n_outlier: usize,
    pub n_matches: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            n_normal: 240,
            n_outlier: 40,
            n_matches: 38,
            seed,
        }
    }
}

/// Schema of the generated tables: PlayerId and MatchId object variables
/// plus two binary features.
pub fn scenario_schema() -> Arc<RelationalSchema> {
    Arc::new(
        RelationalSchema::parse(
            "column PlayerId\nrole object-variable\n\n\
             column MatchId\nrole object-variable\n\n\
             column F1\nrole feature\nkind discrete\ndomain 0 1\n\n\
             column F2\nrole feature\nkind discrete\ndomain 0 1\n",
        )
        .expect("scenario schema is valid"),
    )
}

/// The F1 -> F2 chain all scenarios share.
pub fn scenario_structure() -> Arc<PbnStructure> {
    Arc::new(
        PbnStructure::from_schema(&scenario_schema(), &[("F1", "F2")])
            .expect("scenario structure is valid"),
    )
}

/// Normal-group and outlier-group generating models for one scenario.
pub struct ScenarioModels<R: Real> {
    pub normal: CptSet<R>,
    pub outlier: CptSet<R>,
}

/// Builds the two generating models. Value order in distributions follows
/// the domain `[0, 1]`.
pub fn scenario_models<R: Real>(kind: ScenarioKind) -> ScenarioModels<R> {
    let structure = scenario_structure();
    let p = |x: f64| R::from_f64(x).unwrap();
    // P(F2 | F1) tables keyed by the F1 value; `strong` flips F2 away from
    // F1 with probability 0.9, `copy` follows it, `none` ignores it.
    let strong = BTreeMap::from([
        (vec![0u32], vec![p(0.1), p(0.9)]),
        (vec![1u32], vec![p(0.9), p(0.1)]),
    ]);
    let copy = BTreeMap::from([
        (vec![0u32], vec![p(0.9), p(0.1)]),
        (vec![1u32], vec![p(0.1), p(0.9)]),
    ]);
    let none = BTreeMap::from([
        (vec![0u32], vec![p(0.5), p(0.5)]),
        (vec![1u32], vec![p(0.5), p(0.5)]),
    ]);
    let root = |q0: f64| NodeParams {
        conditionals: BTreeMap::from([(vec![], vec![p(q0), p(1.0 - q0)])]),
        marginal: Some(vec![p(q0), p(1.0 - q0)]),
    };
    let child = |conds: &BTreeMap<Vec<u32>, Vec<R>>| NodeParams {
        conditionals: conds.clone(),
        marginal: None,
    };
    let build = |f1: NodeParams<R>, conds: &BTreeMap<Vec<u32>, Vec<R>>, source: &str| {
        CptSet::from_parameters(Arc::clone(&structure), vec![f1, child(conds)], source)
            .expect("scenario parameters are normalized")
    };
    match kind {
        ScenarioKind::HighCorrelation => ScenarioModels {
            normal: build(root(0.5), &strong, "normal"),
            outlier: build(root(0.5), &none, "outlier"),
        },
        ScenarioKind::LowCorrelation => ScenarioModels {
            normal: build(root(0.5), &none, "normal"),
            outlier: build(root(0.5), &strong, "outlier"),
        },
        ScenarioKind::SingleFeature => ScenarioModels {
            normal: build(root(0.9), &copy, "normal"),
            outlier: build(root(0.1), &copy, "outlier"),
        },
    }
}

/// Samples one table: a row per (player, match), with per-player labels
/// kept separately. Deterministic for a fixed seed.
pub fn generate<R: Real>(
    spec: &ScenarioSpec,
) -> (GroundingTable<R>, BTreeMap<String, ObjectLabel>) {
    let schema = scenario_schema();
    let models = scenario_models::<R>(spec.kind);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut rows: Vec<Vec<Cell<R>>> =
        Vec::with_capacity((spec.n_normal + spec.n_outlier) * spec.n_matches);
    let mut labels = BTreeMap::new();
    let mut sample_player = |id: String, model: &CptSet<R>, rng: &mut ChaCha8Rng| {
        for m in 0..spec.n_matches {
            let p_f1_one = model.conditional(0, &[], 1).to_f64().unwrap();
            let f1: u32 = u32::from(rng.gen::<f64>() < p_f1_one);
            let p_f2_one = model.conditional(1, &[f1], 1).to_f64().unwrap();
            let f2: u32 = u32::from(rng.gen::<f64>() < p_f2_one);
            rows.push(vec![
                Cell::Id(id.clone()),
                Cell::Id(format!("M{:04}", m + 1)),
                Cell::Label(f1),
                Cell::Label(f2),
            ]);
        }
    };
    for i in 0..spec.n_normal {
        let id = format!("N{:04}", i + 1);
        sample_player(id.clone(), &models.normal, &mut rng);
        labels.insert(id, ObjectLabel::Normal);
    }
    for i in 0..spec.n_outlier {
        let id = format!("O{:04}", i + 1);
        sample_player(id.clone(), &models.outlier, &mut rng);
        labels.insert(id, ObjectLabel::Outlier);
    }
    (
        GroundingTable::with_parts(schema, rows, Provenance::Class),
        labels,
    )
}
