//! Command implementations and the exit-code error type.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use relx_core::cpt::fit_parameters;
use relx_core::eval::{
    auc, flatten, knn_outlier_score, precision_at, rank_objects_multi, read_labels, recall_at,
    write_labels, EvalError, Ranking,
};
use relx_core::explain::{drill_down, render_text};
use relx_core::num::format_sig17;
use relx_core::schema::SchemaError;
use relx_core::scores::{score_report, Metric, ScoreReport};
use relx_core::structure::ModelError;
use relx_core::synth::{generate as synth_generate, ScenarioKind, ScenarioSpec};
use relx_core::table::DataError;

use crate::pipeline::{self, sanitize_id, write_output, Pipeline};
use crate::ModelArgs;

/// CLI failure with its process exit code: 2 usage, 3 data/reference,
/// 4 numeric.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ZeroParameter { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(ModelError::ZeroParameter { .. })
            | EvalError::NonFiniteScore { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Metric argument: a likelihood score or the flattening baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CliMetric {
    Score(Metric),
    Knn,
}

impl CliMetric {
    fn name(&self) -> &'static str {
        match self {
            CliMetric::Score(m) => m.name(),
            CliMetric::Knn => "KNN",
        }
    }
}

fn parse_metrics(raw: &[String]) -> Result<Vec<CliMetric>, CliError> {
    let mut metrics = Vec::with_capacity(raw.len());
    for text in raw {
        if text.eq_ignore_ascii_case("knn") {
            metrics.push(CliMetric::Knn);
        } else {
            let m = Metric::from_str(text).map_err(CliError::Usage)?;
            metrics.push(CliMetric::Score(m));
        }
    }
    Ok(metrics)
}

fn csv_bytes(rows: &[Vec<String>]) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.write_record(row).expect("write to memory");
    }
    writer.into_inner().expect("flush to memory")
}

fn ranking_csv(ranking: &Ranking<f64>) -> Vec<u8> {
    let mut rows = vec![vec!["id".to_string(), "score".to_string()]];
    rows.extend(
        ranking
            .iter()
            .map(|(id, score)| vec![id.to_string(), format_sig17(score)]),
    );
    csv_bytes(&rows)
}

/// Rankings for every requested metric, score-based and baseline alike.
fn all_rankings(
    pipeline: &Pipeline,
    metrics: &[CliMetric],
    min_rows: usize,
    knn_k: usize,
) -> Result<Vec<(CliMetric, Ranking<f64>)>, CliError> {
    let score_metrics: Vec<Metric> = metrics
        .iter()
        .filter_map(|m| match m {
            CliMetric::Score(s) => Some(*s),
            CliMetric::Knn => None,
        })
        .collect();
    let mut scored = if score_metrics.is_empty() {
        Vec::new()
    } else {
        let outcome = rank_objects_multi(
            &pipeline.table,
            &pipeline.variable,
            &pipeline.theta_c,
            &score_metrics,
            pipeline.alpha,
            min_rows,
        )?;
        if !outcome.skipped.is_empty() {
            eprintln!(
                "relx: warning: skipped {} object(s) with fewer than {min_rows} rows",
                outcome.skipped.len()
            );
        }
        outcome.rankings
    };

    let mut rankings = Vec::with_capacity(metrics.len());
    for metric in metrics {
        match metric {
            CliMetric::Score(m) => {
                let idx = scored
                    .iter()
                    .position(|(sm, _)| sm == m)
                    .expect("ranked above");
                rankings.push((*metric, scored.remove(idx).1));
            }
            CliMetric::Knn => {
                // The baseline flattens the raw table: means for
                // continuous features, value counts for discrete ones.
                let (_, vectors) = flatten(&pipeline.raw_table, &pipeline.variable)?;
                let vectors: Vec<_> = vectors
                    .into_iter()
                    .filter(|v| {
                        pipeline
                            .raw_table
                            .restrict_to_object(&pipeline.variable, &v.id)
                            .map(|t| t.row_count() >= min_rows)
                            .unwrap_or(false)
                    })
                    .collect();
                let scores = knn_outlier_score(&vectors, knn_k)?;
                rankings.push((*metric, Ranking::new(scores)?));
            }
        }
    }
    Ok(rankings)
}

fn write_meta(out: &Path, lines: &[(&str, String)]) -> Result<(), CliError> {
    let mut text = String::new();
    for (key, value) in lines {
        text.push_str(&format!("{key} {value}\n"));
    }
    write_output(out, "meta.txt", text.as_bytes())
}

pub fn generate(
    scenario: &str,
    normal: usize,
    outlier: usize,
    matches: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let kind = ScenarioKind::from_str(scenario).map_err(CliError::Usage)?;
    if normal == 0 || matches == 0 {
        return Err(CliError::Usage(
            "normal and matches counts must be positive".to_string(),
        ));
    }
    let spec = ScenarioSpec {
        kind,
        n_normal: normal,
        n_outlier: outlier,
        n_matches: matches,
        seed,
    };
    let (table, labels) = synth_generate::<f64>(&spec);

    let mut data = Vec::new();
    table.write_csv(&mut data)?;
    write_output(out, "data.csv", &data)?;
    write_output(out, "schema.txt", table.schema().to_text().as_bytes())?;
    let mut labels_csv = Vec::new();
    write_labels(&mut labels_csv, &labels)?;
    write_output(out, "labels.csv", &labels_csv)?;
    // One-class training slice: the normal players only. Fitting the
    // class model on this table and ranking everyone against it mirrors
    // the evaluation design.
    let class_table = table.filter_objects("PlayerId", |id| {
        labels.get(id) == Some(&relx_core::eval::ObjectLabel::Normal)
    })?;
    let mut class_csv = Vec::new();
    class_table.write_csv(&mut class_csv)?;
    write_output(out, "class.csv", &class_csv)?;
    write_meta(
        out,
        &[
            ("command", "generate".to_string()),
            ("scenario", kind.name().to_string()),
            ("normal", normal.to_string()),
            ("outlier", outlier.to_string()),
            ("matches", matches.to_string()),
            ("seed", seed.to_string()),
        ],
    )?;
    println!(
        "generated {} rows for {} players into {}",
        table.row_count(),
        labels.len(),
        out.display()
    );
    Ok(())
}

pub fn fit(args: &ModelArgs, out: &Path) -> Result<(), CliError> {
    let pipeline = pipeline::load(args)?;
    write_output(out, "model.txt", pipeline.theta_c.to_text().as_bytes())?;
    write_meta(
        out,
        &[
            ("command", "fit".to_string()),
            ("data", args.data.display().to_string()),
            ("alpha", format_sig17(pipeline.alpha)),
            ("source", pipeline.theta_c.source().to_string()),
        ],
    )?;
    println!("wrote class model to {}", out.join("model.txt").display());
    Ok(())
}

pub fn rank(
    args: &ModelArgs,
    metric_names: &[String],
    min_rows: usize,
    knn_k: usize,
    out: &Path,
) -> Result<(), CliError> {
    let metrics = parse_metrics(metric_names)?;
    let pipeline = pipeline::load(args)?;
    let rankings = all_rankings(&pipeline, &metrics, min_rows, knn_k)?;
    for (metric, ranking) in &rankings {
        write_output(
            out,
            &format!("ranking_{}.csv", metric.name()),
            &ranking_csv(ranking),
        )?;
    }
    write_meta(
        out,
        &[
            ("command", "rank".to_string()),
            (
                "metrics",
                metrics
                    .iter()
                    .map(CliMetric::name)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("alpha", format_sig17(pipeline.alpha)),
            ("min_rows", min_rows.to_string()),
            ("variable", pipeline.variable.clone()),
        ],
    )?;
    println!("wrote {} ranking(s) to {}", rankings.len(), out.display());
    Ok(())
}

pub fn score(
    args: &ModelArgs,
    target: &str,
    metric_names: &[String],
    out: &Path,
) -> Result<(), CliError> {
    let metrics = parse_metrics(metric_names)?;
    let score_metrics: Vec<Metric> = metrics
        .iter()
        .map(|m| match m {
            CliMetric::Score(s) => Ok(*s),
            CliMetric::Knn => Err(CliError::Usage(
                "KNN is a ranking baseline; it cannot score a single object".to_string(),
            )),
        })
        .collect::<Result<_, _>>()?;
    let pipeline = pipeline::load(args)?;
    let d_o = pipeline
        .table
        .restrict_to_object(&pipeline.variable, target)?;
    if d_o.is_empty() {
        return Err(CliError::Data(format!(
            "unknown object {target:?} in column {:?}",
            pipeline.variable
        )));
    }
    let needs_theta_o = score_metrics.iter().any(Metric::needs_object_parameters);
    let theta_o = if needs_theta_o {
        Some(fit_parameters(
            &d_o,
            pipeline.theta_c.structure(),
            pipeline.alpha,
        )?)
    } else {
        None
    };

    let mut reports: Vec<ScoreReport<f64>> = Vec::with_capacity(score_metrics.len());
    for metric in &score_metrics {
        reports.push(score_report(
            *metric,
            &d_o,
            theta_o.as_ref(),
            &pipeline.theta_c,
        )?);
    }

    let mut rows = Vec::with_capacity(reports.len() + 1);
    rows.push(reports[0].csv_header());
    rows.extend(reports.iter().map(ScoreReport::csv_row));
    write_output(out, "score.csv", &csv_bytes(&rows))?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    write_output(out, "score.json", json.as_bytes())?;
    write_meta(
        out,
        &[
            ("command", "score".to_string()),
            ("target", target.to_string()),
            ("rows", d_o.row_count().to_string()),
            ("alpha", format_sig17(pipeline.alpha)),
        ],
    )?;
    println!(
        "scored {target} ({} rows) under {} metric(s)",
        d_o.row_count(),
        reports.len()
    );
    Ok(())
}

pub fn evaluate(
    args: &ModelArgs,
    labels_path: &Path,
    metric_names: &[String],
    cutoffs: &[f64],
    min_rows: usize,
    knn_k: usize,
    out: &Path,
) -> Result<(), CliError> {
    let metrics = parse_metrics(metric_names)?;
    for &r in cutoffs {
        if !(r > 0.0 && r <= 100.0) {
            return Err(CliError::Usage(format!(
                "cutoff {r} out of range; need 0 < r <= 100"
            )));
        }
    }
    let labels_file = fs::File::open(labels_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", labels_path.display())))?;
    let labels = read_labels(labels_file)?;

    let pipeline = pipeline::load(args)?;
    let rankings = all_rankings(&pipeline, &metrics, min_rows, knn_k)?;

    // Recall and F1 ride along as extra columns; precision and AUC are
    // the primary measures.
    let mut precision_rows = vec![vec![
        "metric".to_string(),
        "cutoff_percent".to_string(),
        "precision".to_string(),
        "recall".to_string(),
        "f1".to_string(),
    ]];
    let mut auc_rows = vec![vec!["metric".to_string(), "auc".to_string()]];
    for (metric, ranking) in &rankings {
        let mut curve = String::from("# cutoff_percent precision\n");
        for &r in cutoffs {
            let p = precision_at(ranking, &labels, r)?;
            let rec = recall_at(ranking, &labels, r)?;
            let f1 = if p + rec > 0.0 {
                2.0 * p * rec / (p + rec)
            } else {
                0.0
            };
            precision_rows.push(vec![
                metric.name().to_string(),
                format!("{r}"),
                format_sig17(p),
                format_sig17(rec),
                format_sig17(f1),
            ]);
            curve.push_str(&format!("{r} {p}\n"));
        }
        let a = auc(ranking, &labels)?;
        auc_rows.push(vec![metric.name().to_string(), format_sig17(a)]);
        write_output(
            out,
            &format!("curve_{}.dat", metric.name()),
            curve.as_bytes(),
        )?;
    }
    write_output(out, "precision.csv", &csv_bytes(&precision_rows))?;
    write_output(out, "auc.csv", &csv_bytes(&auc_rows))?;
    write_meta(
        out,
        &[
            ("command", "evaluate".to_string()),
            (
                "metrics",
                metrics
                    .iter()
                    .map(CliMetric::name)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "cutoffs",
                cutoffs
                    .iter()
                    .map(f64::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("labels", labels_path.display().to_string()),
        ],
    )?;
    println!(
        "evaluated {} metric(s) at {} cutoff(s) into {}",
        rankings.len(),
        cutoffs.len(),
        out.display()
    );
    Ok(())
}

pub fn explain(args: &ModelArgs, top: usize, min_rows: usize, out: &Path) -> Result<(), CliError> {
    if top == 0 {
        return Err(CliError::Usage("--top must be positive".to_string()));
    }
    let pipeline = pipeline::load(args)?;
    let rankings = all_rankings(&pipeline, &[CliMetric::Score(Metric::Ld)], min_rows, 10)?;
    let ranking = &rankings[0].1;

    let mut summary = vec![vec![
        "rank".to_string(),
        "id".to_string(),
        "ld_total".to_string(),
        "max_node".to_string(),
        "max_node_score".to_string(),
        "single_feature_value".to_string(),
        "object_probability".to_string(),
        "class_probability".to_string(),
    ]];
    let mut written = Vec::new();
    for (position, (id, total)) in ranking.top(top).enumerate() {
        let d_o = pipeline.table.restrict_to_object(&pipeline.variable, id)?;
        let theta_o = fit_parameters(&d_o, pipeline.theta_c.structure(), pipeline.alpha)?;
        let report = score_report(Metric::Ld, &d_o, Some(&theta_o), &pipeline.theta_c)?;
        let explanation = drill_down(&report, &theta_o, &pipeline.theta_c)?;

        let rank_no = position + 1;
        let stem = format!("explain_{rank_no}_{}", sanitize_id(id));
        write_output(
            out,
            &format!("{stem}.txt"),
            render_text(&explanation).as_bytes(),
        )?;
        let json = serde_json::to_string_pretty(&explanation).expect("explanation serializes");
        write_output(out, &format!("{stem}.json"), json.as_bytes())?;

        summary.push(vec![
            rank_no.to_string(),
            id.to_string(),
            format_sig17(total),
            explanation.max_node.clone(),
            format_sig17(explanation.max_node_score),
            explanation.single_feature_row.value.clone(),
            format_sig17(explanation.single_feature_row.object_probability),
            format_sig17(explanation.single_feature_row.class_probability),
        ]);
        written.push(PathBuf::from(format!("{stem}.txt")));
    }
    write_output(out, "explain_summary.csv", &csv_bytes(&summary))?;
    write_meta(
        out,
        &[
            ("command", "explain".to_string()),
            ("top", top.to_string()),
            ("alpha", format_sig17(pipeline.alpha)),
            ("variable", pipeline.variable.clone()),
        ],
    )?;
    println!(
        "explained top {} object(s) into {}",
        written.len(),
        out.display()
    );
    Ok(())
}
