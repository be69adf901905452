//! One-class ranking evaluation (precision at r%, AUC) and the
//! flatten-plus-kNN aggregation baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpt::{fit_parameters, CptSet};
use crate::num::Real;
use crate::schema::ColumnSpec;
use crate::scores::{score_report, Metric};
use crate::structure::ModelError;
use crate::table::{Cell, DataError, GroundingTable};

/// Errors from evaluation and ranking.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no qualifying objects (minimum row count {min_rows})")]
    NoQualifyingObjects { min_rows: usize },

    #[error("no label for ranked object {id:?}")]
    MissingLabel { id: String },

    #[error("cutoff {cutoff} out of range; need 0 < r <= 100")]
    BadCutoff { cutoff: f64 },

    #[error("AUC needs both classes present in the ranking")]
    SingleClass,

    #[error("k = {k} out of range for {n} vectors")]
    KOutOfRange { k: usize, n: usize },

    #[error("ranking is empty")]
    EmptyRanking,

    #[error("score for object {id:?} is not finite")]
    NonFiniteScore { id: String },

    #[error("duplicate object id {id:?} in ranking")]
    DuplicateId { id: String },

    #[error("bad label {value:?} on line {line}; expected normal or outlier")]
    BadLabel { line: usize, value: String },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("malformed labels CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Ground-truth label in the one-class design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectLabel {
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "outlier")]
    Outlier,
}

impl fmt::Display for ObjectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectLabel::Normal => "normal",
            ObjectLabel::Outlier => "outlier",
        })
    }
}

impl FromStr for ObjectLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(ObjectLabel::Normal),
            "outlier" => Ok(ObjectLabel::Outlier),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Reads an `id,label` CSV with a header row.
pub fn read_labels<D: io::Read>(reader: D) -> Result<BTreeMap<String, ObjectLabel>, EvalError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut labels = BTreeMap::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let record = record?;
        let id = record.get(0).unwrap_or("").to_string();
        let raw = record.get(1).unwrap_or("");
        let label = raw.parse().map_err(|_| EvalError::BadLabel {
            line: idx + 2,
            value: raw.to_string(),
        })?;
        labels.insert(id, label);
    }
    Ok(labels)
}

/// Writes the `id,label` CSV consumed by [`read_labels`].
pub fn write_labels<W: io::Write>(
    writer: W,
    labels: &BTreeMap<String, ObjectLabel>,
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "label"])?;
    for (id, label) in labels {
        w.write_record([id.as_str(), &label.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Objects ordered by score, descending; ties break by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking<R> {
    entries: Vec<(String, R)>,
}

impl<R: Real> Ranking<R> {
    /// Sorts and validates the scored objects.
    pub fn new(mut scores: Vec<(String, R)>) -> Result<Self, EvalError> {
        for (id, score) in &scores {
            if !score.is_finite() {
                return Err(EvalError::NonFiniteScore { id: id.clone() });
            }
        }
        scores.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("finite scores")
                .then_with(|| a.0.cmp(&b.0))
        });
        for pair in scores.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(EvalError::DuplicateId {
                    id: pair[0].0.clone(),
                });
            }
        }
        Ok(Self { entries: scores })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, R)> {
        self.entries.iter().map(|(id, s)| (id.as_str(), *s))
    }

    pub fn top(&self, k: usize) -> impl Iterator<Item = (&str, R)> {
        self.entries.iter().take(k).map(|(id, s)| (id.as_str(), *s))
    }
}

/// Outcome of ranking one population: the per-metric rankings plus the
/// ids skipped for having too few rows.
pub struct RankOutcome<R> {
    pub rankings: Vec<(Metric, Ranking<R>)>,
    pub skipped: Vec<String>,
}

/// Scores every object of `variable` under several metrics against a
/// shared class model. Objects with fewer than `min_rows` rows are
/// skipped. Object parameters are fitted with the same `alpha` for every
/// object; per-object work runs in parallel and merges in id order.
pub fn rank_objects_multi<R: Real>(
    table: &GroundingTable<R>,
    variable: &str,
    theta_c: &CptSet<R>,
    metrics: &[Metric],
    alpha: R,
    min_rows: usize,
) -> Result<RankOutcome<R>, EvalError> {
    let ids = table.distinct_ids(variable)?;
    let needs_object_fit = metrics.iter().any(Metric::needs_object_parameters);

    let mut qualifying = Vec::new();
    let mut skipped = Vec::new();
    for id in ids {
        let slice = table.restrict_to_object(variable, &id)?;
        if slice.row_count() < min_rows {
            skipped.push(id);
        } else {
            qualifying.push((id, slice));
        }
    }
    if qualifying.is_empty() {
        return Err(EvalError::NoQualifyingObjects { min_rows });
    }

    // id order in, id order out: rayon preserves indices, so the merged
    // output is thread-count invariant.
    let scored: Vec<(String, Vec<R>)> = qualifying
        .par_iter()
        .map(|(id, slice)| -> Result<(String, Vec<R>), EvalError> {
            let theta_o = if needs_object_fit {
                Some(fit_parameters(slice, theta_c.structure(), alpha)?)
            } else {
                None
            };
            let mut totals = Vec::with_capacity(metrics.len());
            for metric in metrics {
                let report = score_report(*metric, slice, theta_o.as_ref(), theta_c)?;
                totals.push(report.total);
            }
            Ok((id.clone(), totals))
        })
        .collect::<Result<_, _>>()?;

    let mut rankings = Vec::with_capacity(metrics.len());
    for (m, metric) in metrics.iter().enumerate() {
        let scores: Vec<(String, R)> = scored
            .iter()
            .map(|(id, totals)| (id.clone(), totals[m]))
            .collect();
        rankings.push((*metric, Ranking::new(scores)?));
    }
    Ok(RankOutcome { rankings, skipped })
}

/// Single-metric variant of [`rank_objects_multi`].
pub fn rank_objects<R: Real>(
    table: &GroundingTable<R>,
    variable: &str,
    theta_c: &CptSet<R>,
    metric: Metric,
    alpha: R,
    min_rows: usize,
) -> Result<(Ranking<R>, Vec<String>), EvalError> {
    let outcome = rank_objects_multi(table, variable, theta_c, &[metric], alpha, min_rows)?;
    let ranking = outcome.rankings.into_iter().next().expect("one metric").1;
    Ok((ranking, outcome.skipped))
}

/// Precision when the top `r` percent of the ranking is flagged as
/// outliers: `ceil(r/100 * n)` objects, so the selection is never empty.
pub fn precision_at<R: Real>(
    ranking: &Ranking<R>,
    labels: &BTreeMap<String, ObjectLabel>,
    r: f64,
) -> Result<f64, EvalError> {
    if !(r > 0.0 && r <= 100.0) {
        return Err(EvalError::BadCutoff { cutoff: r });
    }
    if ranking.is_empty() {
        return Err(EvalError::EmptyRanking);
    }
    let n = ranking.len();
    let k = ((r * n as f64) / 100.0).ceil() as usize;
    let k = k.clamp(1, n);
    let mut hits = 0usize;
    for (id, _) in ranking.top(k) {
        match labels.get(id) {
            Some(ObjectLabel::Outlier) => hits += 1,
            Some(ObjectLabel::Normal) => {}
            None => {
                return Err(EvalError::MissingLabel { id: id.to_string() });
            }
        }
    }
    Ok(hits as f64 / k as f64)
}

/// Recall at the same top-`r`-percent cutoff as [`precision_at`]: the
/// fraction of all labeled outliers that land in the selection.
pub fn recall_at<R: Real>(
    ranking: &Ranking<R>,
    labels: &BTreeMap<String, ObjectLabel>,
    r: f64,
) -> Result<f64, EvalError> {
    if !(r > 0.0 && r <= 100.0) {
        return Err(EvalError::BadCutoff { cutoff: r });
    }
    if ranking.is_empty() {
        return Err(EvalError::EmptyRanking);
    }
    let n = ranking.len();
    let k = (((r * n as f64) / 100.0).ceil() as usize).clamp(1, n);
    let mut hits = 0usize;
    for (id, _) in ranking.top(k) {
        match labels.get(id) {
            Some(ObjectLabel::Outlier) => hits += 1,
            Some(ObjectLabel::Normal) => {}
            None => return Err(EvalError::MissingLabel { id: id.to_string() }),
        }
    }
    let mut total = 0usize;
    for (id, _) in ranking.iter() {
        match labels.get(id) {
            Some(ObjectLabel::Outlier) => total += 1,
            Some(ObjectLabel::Normal) => {}
            None => return Err(EvalError::MissingLabel { id: id.to_string() }),
        }
    }
    if total == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok(hits as f64 / total as f64)
}

/// Ranking AUC as the Mann-Whitney statistic: the fraction of
/// (outlier, normal) pairs where the outlier scores higher, ties
/// counting one half.
pub fn auc<R: Real>(
    ranking: &Ranking<R>,
    labels: &BTreeMap<String, ObjectLabel>,
) -> Result<f64, EvalError> {
    let mut scored: Vec<(R, ObjectLabel)> = Vec::with_capacity(ranking.len());
    for (id, score) in ranking.iter() {
        let label = labels
            .get(id)
            .ok_or_else(|| EvalError::MissingLabel { id: id.to_string() })?;
        scored.push((score, *label));
    }
    let n_outlier = scored
        .iter()
        .filter(|(_, l)| *l == ObjectLabel::Outlier)
        .count();
    let n_normal = scored.len() - n_outlier;
    if n_outlier == 0 || n_normal == 0 {
        return Err(EvalError::SingleClass);
    }

    // Midranks over ascending scores handle ties exactly.
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_outlier = 0.0f64;
    let mut i = 0usize;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j share the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for entry in &scored[i..j] {
            if entry.1 == ObjectLabel::Outlier {
                rank_sum_outlier += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_outlier - (n_outlier * (n_outlier + 1)) as f64 / 2.0;
    Ok(u / (n_outlier as f64 * n_normal as f64))
}

/// One flattened object: continuous features averaged, discrete features
/// expanded into per-value occurrence counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatVector<R> {
    pub id: String,
    pub values: Vec<R>,
}

/// Flattens an object-relational table into per-object feature vectors.
/// Returns the column names (schema order, one column per continuous
/// feature and one per discrete feature value) and a vector per object,
/// sorted by id.
pub fn flatten<R: Real>(
    table: &GroundingTable<R>,
    variable: &str,
) -> Result<(Vec<String>, Vec<FlatVector<R>>), EvalError> {
    if table.is_empty() {
        return Err(DataError::EmptyTable.into());
    }
    let schema = table.schema();
    let mut names = Vec::new();
    for spec in schema.features() {
        match spec {
            ColumnSpec::ContinuousFeature { name, .. } => names.push(format!("{name}_mean")),
            ColumnSpec::DiscreteFeature { name, domain } => {
                names.extend(domain.iter().map(|v| format!("{name}={v}")));
            }
            ColumnSpec::ObjectVariable { .. } => unreachable!("features() filters these"),
        }
    }

    let ids = table.distinct_ids(variable)?;
    let mut vectors = Vec::with_capacity(ids.len());
    for id in ids {
        let slice = table.restrict_to_object(variable, &id)?;
        if slice.is_empty() {
            continue;
        }
        let n = R::from_usize(slice.row_count()).unwrap();
        let mut values = Vec::with_capacity(names.len());
        for spec in schema.features() {
            let (col, _) = schema.column(spec.name()).expect("feature exists");
            match spec {
                ColumnSpec::ContinuousFeature { .. } => {
                    let mut sum = R::zero();
                    for row in &slice.rows {
                        if let Cell::Num(v) = row[col] {
                            sum = sum + v;
                        }
                    }
                    values.push(sum / n);
                }
                ColumnSpec::DiscreteFeature { domain, .. } => {
                    let mut counts = vec![R::zero(); domain.len()];
                    for row in &slice.rows {
                        if let Cell::Label(l) = row[col] {
                            counts[l as usize] = counts[l as usize] + R::one();
                        }
                    }
                    values.extend(counts);
                }
                ColumnSpec::ObjectVariable { .. } => unreachable!(),
            }
        }
        vectors.push(FlatVector { id, values });
    }
    Ok((names, vectors))
}

/// Distance-based outlier score: Euclidean distance to the k-th nearest
/// neighbor after per-column z-score normalization. Higher means more
/// anomalous.
pub fn knn_outlier_score<R: Real>(
    vectors: &[FlatVector<R>],
    k: usize,
) -> Result<Vec<(String, R)>, EvalError> {
    let n = vectors.len();
    if k == 0 || k >= n {
        return Err(EvalError::KOutOfRange { k, n });
    }
    let dims = vectors.first().map_or(0, |v| v.values.len());
    let nf = R::from_usize(n).unwrap();

    // Column-wise z-scores; constant columns normalize to zero.
    let mut means = vec![R::zero(); dims];
    for v in vectors {
        for (d, &x) in v.values.iter().enumerate() {
            means[d] = means[d] + x;
        }
    }
    for m in &mut means {
        *m = *m / nf;
    }
    let mut stds = vec![R::zero(); dims];
    for v in vectors {
        for (d, &x) in v.values.iter().enumerate() {
            let diff = x - means[d];
            stds[d] = stds[d] + diff * diff;
        }
    }
    for s in &mut stds {
        *s = (*s / nf).sqrt();
    }
    let normalized: Vec<Vec<R>> = vectors
        .iter()
        .map(|v| {
            v.values
                .iter()
                .enumerate()
                .map(|(d, &x)| {
                    if stds[d] > R::zero() {
                        (x - means[d]) / stds[d]
                    } else {
                        R::zero()
                    }
                })
                .collect()
        })
        .collect();

    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<R> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let sum = normalized[i]
                    .iter()
                    .zip(&normalized[j])
                    .fold(R::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                sum.sqrt()
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        scores.push((vectors[i].id.clone(), dists[k - 1]));
    }
    Ok(scores)
}
