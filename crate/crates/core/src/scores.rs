//! Likelihood-comparison outlier scores.
//!
//! All scores compare how well class parameters and object parameters fit
//! an object database, built from the relational pseudo log-likelihood
//!
//! ```text
//! PLL(D, theta) = sum_i sum_v sum_pa P_D(v, pa) ln theta(v | pa)
//! ```
//!
//! where the weights are the database's empirical parent-child frequencies.
//! The per-node scores, higher meaning more anomalous:
//!
//! ```text
//! LOG_i  = - sum P_o(v,pa) ln theta_C(v|pa)
//! LR_i   =   sum P_o(v,pa) ln( theta_o(v|pa) / theta_C(v|pa) )
//! |LR|_i =   sum P_o(v,pa) |ln( theta_o(v|pa) / theta_C(v|pa) )|
//! FD_i   =   sum P_o(v)    |ln( theta_o(v)    / theta_C(v)    )|
//! LR+_i  =   sum P_o(v) ln(theta_o(v)/theta_C(v)) + sum P_o(v,pa) (lift_o - lift_C)
//! LD_i   =   sum P_o(v) |ln(theta_o(v)/theta_C(v))| + sum P_o(v,pa) |lift_o - lift_C|
//! ```
//!
//! with `lift = ln(theta(v|pa) / theta(v))`. LD splits into a single-feature
//! component and a mutual-information component; taking distances instead
//! of differences stops opposite-signed deviations from cancelling.
//!
//! Weights `P_o` are always the unsmoothed empirical frequencies of the
//! object database; smoothing belongs to the parameters only.
//! Configurations with zero weight contribute zero regardless of the
//! parameter values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cpt::{bind_structure, family_counts, CptSet};
use crate::num::{format_sig17, ratio, Real};
use crate::structure::ModelError;
use crate::table::{GroundingTable, Provenance};

/// The score family. `Ld` is the log-likelihood distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "LOG")]
    Log,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "ABS_LR")]
    AbsLr,
    #[serde(rename = "FD")]
    Fd,
    #[serde(rename = "LR_PLUS")]
    LrPlus,
    #[serde(rename = "LD")]
    Ld,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Log,
        Metric::Lr,
        Metric::AbsLr,
        Metric::Fd,
        Metric::LrPlus,
        Metric::Ld,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Log => "LOG",
            Metric::Lr => "LR",
            Metric::AbsLr => "ABS_LR",
            Metric::Fd => "FD",
            Metric::LrPlus => "LR_PLUS",
            Metric::Ld => "LD",
        }
    }

    /// Whether the metric compares against object-fitted parameters.
    pub fn needs_object_parameters(&self) -> bool {
        !matches!(self, Metric::Log)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "LOG" => Ok(Metric::Log),
            "LR" => Ok(Metric::Lr),
            "ABS_LR" | "ABSLR" | "|LR|" => Ok(Metric::AbsLr),
            "FD" => Ok(Metric::Fd),
            "LR_PLUS" | "LRPLUS" | "LR+" => Ok(Metric::LrPlus),
            "LD" => Ok(Metric::Ld),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// Per-node score with its decomposition where the metric defines one
/// (FD, LR+, LD); both components are zero for the purely conditional
/// metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScore<R> {
    pub feature: String,
    pub score: R,
    pub feature_component: R,
    pub mi_component: R,
}

/// One parent-child configuration term. Lifts are populated for the
/// lift-based metrics (LR+, LD) and zero otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigTerm<R> {
    pub feature: String,
    pub parent_values: Vec<String>,
    pub child_value: String,
    /// Empirical object weight `P_o(v, pa)`.
    pub weight: R,
    pub object_lift: R,
    pub class_lift: R,
    pub term: R,
}

/// Full score breakdown for one object under one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport<R> {
    pub object_id: String,
    pub metric: Metric,
    pub total: R,
    pub per_node: Vec<NodeScore<R>>,
    pub per_config: Vec<ConfigTerm<R>>,
}

impl<R: Real> ScoreReport<R> {
    /// CSV header: object id, metric, total, then one column per node.
    pub fn csv_header(&self) -> Vec<String> {
        let mut header = vec!["id".to_string(), "metric".to_string(), "total".to_string()];
        header.extend(self.per_node.iter().map(|n| n.feature.clone()));
        header
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.object_id.clone(),
            self.metric.name().to_string(),
            format_sig17(self.total),
        ];
        row.extend(self.per_node.iter().map(|n| format_sig17(n.score)));
        row
    }
}

/// One pseudo log-likelihood contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PllTerm<R> {
    pub feature: String,
    pub parent_values: Vec<String>,
    pub child_value: String,
    pub weight: R,
    pub theta: R,
    /// `weight * ln(theta)`.
    pub term: R,
}

/// Observed family statistics of one table against one structure:
/// everything the scores need, computed in a single pass.
struct NodeStats<R> {
    /// `(parent config, child value, weight)` for observed configurations,
    /// in lexicographic order of (config, value).
    configs: Vec<(Vec<u32>, u32, R)>,
    /// Unsmoothed empirical `P(v)` per child value.
    value_weights: Vec<R>,
}

fn gather_stats<R: Real>(
    table: &GroundingTable<R>,
    theta: &CptSet<R>,
) -> Result<Vec<NodeStats<R>>, ModelError> {
    if table.is_empty() {
        return Err(ModelError::EmptyTable);
    }
    let structure = theta.structure();
    let bindings = bind_structure(table, structure)?;
    let n = table.row_count();
    let mut stats = Vec::with_capacity(bindings.len());
    for (i, binding) in bindings.iter().enumerate() {
        let arity = structure.node(i).values.len();
        let (by_config, value_counts) = family_counts(table, binding, arity);
        let mut configs = Vec::new();
        for (config, counts) in by_config {
            for (v, &c) in counts.iter().enumerate() {
                if c > 0 {
                    configs.push((config.clone(), v as u32, ratio(c, n)));
                }
            }
        }
        stats.push(NodeStats {
            configs,
            value_weights: value_counts.into_iter().map(|c| ratio(c, n)).collect(),
        });
    }
    Ok(stats)
}

fn positive<R: Real>(theta: R, node: &str, value: &str) -> Result<R, ModelError> {
    if theta <= R::zero() {
        return Err(ModelError::ZeroParameter {
            node: node.to_string(),
            value: value.to_string(),
        });
    }
    Ok(theta)
}

/// Relational pseudo log-likelihood of `table` under `theta` (Eq-style
/// frequency weighting): always `<= 0`.
pub fn pseudo_log_likelihood<R: Real>(
    table: &GroundingTable<R>,
    theta: &CptSet<R>,
) -> Result<R, ModelError> {
    let stats = gather_stats(table, theta)?;
    let structure = theta.structure();
    let mut total = R::zero();
    for (i, node_stats) in stats.iter().enumerate() {
        let node = structure.node(i);
        for (config, v, w) in &node_stats.configs {
            let t = positive(
                theta.conditional(i, config, *v),
                &node.feature,
                &node.values[*v as usize],
            )?;
            total = total + *w * t.ln();
        }
    }
    Ok(total)
}

/// Per-configuration breakdown of [`pseudo_log_likelihood`].
pub fn pll_breakdown<R: Real>(
    table: &GroundingTable<R>,
    theta: &CptSet<R>,
) -> Result<Vec<PllTerm<R>>, ModelError> {
    let stats = gather_stats(table, theta)?;
    let structure = theta.structure();
    let mut terms = Vec::new();
    for (i, node_stats) in stats.iter().enumerate() {
        let node = structure.node(i);
        for (config, v, w) in &node_stats.configs {
            let t = positive(
                theta.conditional(i, config, *v),
                &node.feature,
                &node.values[*v as usize],
            )?;
            terms.push(PllTerm {
                feature: node.feature.clone(),
                parent_values: config_labels(theta, i, config),
                child_value: node.values[*v as usize].clone(),
                weight: *w,
                theta: t,
                term: *w * t.ln(),
            });
        }
    }
    Ok(terms)
}

fn config_labels<R: Real>(theta: &CptSet<R>, node: usize, config: &[u32]) -> Vec<String> {
    let structure = theta.structure();
    structure
        .parents(node)
        .iter()
        .zip(config)
        .map(|(&p, &v)| structure.node(p).values[v as usize].clone())
        .collect()
}

/// Computes one metric's full report for an object database.
///
/// `theta_o` may be `None` only for [`Metric::Log`]; both parameter sets
/// must have been fitted against the same structure.
pub fn score_report<R: Real>(
    metric: Metric,
    d_o: &GroundingTable<R>,
    theta_o: Option<&CptSet<R>>,
    theta_c: &CptSet<R>,
) -> Result<ScoreReport<R>, ModelError> {
    if let Some(to) = theta_o {
        if to.structure().as_ref() != theta_c.structure().as_ref() {
            return Err(ModelError::StructureMismatch);
        }
    }
    if metric.needs_object_parameters() && theta_o.is_none() {
        return Err(ModelError::MissingObjectParameters {
            metric: metric.name().to_string(),
        });
    }
    let stats = gather_stats(d_o, theta_c)?;
    let object_id = match d_o.provenance() {
        Provenance::Class => "class".to_string(),
        Provenance::Object { id, .. } => id.clone(),
    };
    let structure = theta_c.structure();
    let zero = R::zero();

    let mut per_node = Vec::with_capacity(stats.len());
    let mut per_config = Vec::new();
    let mut total = zero;
    for (i, node_stats) in stats.iter().enumerate() {
        let node = structure.node(i);
        let mut feature_component = zero;
        let mut mi_component = zero;
        let mut conditional_sum = zero;

        // Single-feature part (FD, LR+, LD): weighted marginal log-ratios.
        if matches!(metric, Metric::Fd | Metric::LrPlus | Metric::Ld) {
            let to = theta_o.expect("checked above");
            for (v, &w) in node_stats.value_weights.iter().enumerate() {
                if w <= zero {
                    continue;
                }
                let label = &node.values[v];
                let om = positive(to.marginal(i, v as u32), &node.feature, label)?;
                let cm = positive(theta_c.marginal(i, v as u32), &node.feature, label)?;
                let log_ratio = (om / cm).ln();
                let term = match metric {
                    Metric::LrPlus => w * log_ratio,
                    _ => w * log_ratio.abs(),
                };
                feature_component = feature_component + term;
                if metric == Metric::Fd {
                    per_config.push(ConfigTerm {
                        feature: node.feature.clone(),
                        parent_values: Vec::new(),
                        child_value: label.clone(),
                        weight: w,
                        object_lift: zero,
                        class_lift: zero,
                        term,
                    });
                }
            }
        }

        // Parent-child part: conditional ratios or lift differences.
        if metric != Metric::Fd {
            for (config, v, w) in &node_stats.configs {
                let label = &node.values[*v as usize];
                let cc = positive(theta_c.conditional(i, config, *v), &node.feature, label)?;
                let (term, object_lift, class_lift) = match metric {
                    Metric::Log => (-(*w * cc.ln()), zero, zero),
                    Metric::Lr | Metric::AbsLr => {
                        let oc = positive(
                            theta_o.expect("checked above").conditional(i, config, *v),
                            &node.feature,
                            label,
                        )?;
                        let diff = (oc / cc).ln();
                        let t = if metric == Metric::Lr {
                            *w * diff
                        } else {
                            *w * diff.abs()
                        };
                        (t, zero, zero)
                    }
                    Metric::LrPlus | Metric::Ld => {
                        let to = theta_o.expect("checked above");
                        let oc = positive(to.conditional(i, config, *v), &node.feature, label)?;
                        let om = positive(to.marginal(i, *v), &node.feature, label)?;
                        let cm = positive(theta_c.marginal(i, *v), &node.feature, label)?;
                        let object_lift = (oc / om).ln();
                        let class_lift = (cc / cm).ln();
                        let diff = object_lift - class_lift;
                        let t = if metric == Metric::LrPlus {
                            *w * diff
                        } else {
                            *w * diff.abs()
                        };
                        (t, object_lift, class_lift)
                    }
                    Metric::Fd => unreachable!(),
                };
                match metric {
                    Metric::LrPlus | Metric::Ld => mi_component = mi_component + term,
                    _ => conditional_sum = conditional_sum + term,
                }
                per_config.push(ConfigTerm {
                    feature: node.feature.clone(),
                    parent_values: config_labels(theta_c, i, config),
                    child_value: label.clone(),
                    weight: *w,
                    object_lift,
                    class_lift,
                    term,
                });
            }
        }

        let score = match metric {
            Metric::Fd => feature_component,
            Metric::LrPlus | Metric::Ld => feature_component + mi_component,
            _ => conditional_sum,
        };
        let (fc, mc) = match metric {
            Metric::Fd => (feature_component, zero),
            Metric::LrPlus | Metric::Ld => (feature_component, mi_component),
            _ => (zero, zero),
        };
        total = total + score;
        per_node.push(NodeScore {
            feature: node.feature.clone(),
            score,
            feature_component: fc,
            mi_component: mc,
        });
    }
    Ok(ScoreReport {
        object_id,
        metric,
        total,
        per_node,
        per_config,
    })
}

/// `-PLL(D_o, theta_C)`: how badly the class model fits the object data.
pub fn score_log<R: Real>(d_o: &GroundingTable<R>, theta_c: &CptSet<R>) -> Result<R, ModelError> {
    Ok(-pseudo_log_likelihood(d_o, theta_c)?)
}

/// Log-likelihood difference; with maximum-likelihood object parameters
/// this is a weighted sum of per-configuration KL divergences, hence
/// non-negative.
pub fn score_lr<R: Real>(
    d_o: &GroundingTable<R>,
    theta_o: &CptSet<R>,
    theta_c: &CptSet<R>,
) -> Result<R, ModelError> {
    Ok(score_report(Metric::Lr, d_o, Some(theta_o), theta_c)?.total)
}

/// Log-likelihood difference with absolute values.
pub fn score_abs_lr<R: Real>(
    d_o: &GroundingTable<R>,
    theta_o: &CptSet<R>,
    theta_c: &CptSet<R>,
) -> Result<R, ModelError> {
    Ok(score_report(Metric::AbsLr, d_o, Some(theta_o), theta_c)?.total)
}

/// Feature divergence: marginals only, no feature correlations.
pub fn score_fd<R: Real>(
    d_o: &GroundingTable<R>,
    theta_o: &CptSet<R>,
    theta_c: &CptSet<R>,
) -> Result<R, ModelError> {
    Ok(score_report(Metric::Fd, d_o, Some(theta_o), theta_c)?.total)
}

/// LR with the mutual-information decomposition applied. With empirical
/// marginals this equals [`score_lr`] exactly.
pub fn score_lr_plus<R: Real>(
    d_o: &GroundingTable<R>,
    theta_o: &CptSet<R>,
    theta_c: &CptSet<R>,
) -> Result<R, ModelError> {
    Ok(score_report(Metric::LrPlus, d_o, Some(theta_o), theta_c)?.total)
}

/// The log-likelihood distance, with full per-node and per-configuration
/// breakdown.
pub fn score_ld<R: Real>(
    d_o: &GroundingTable<R>,
    theta_o: &CptSet<R>,
    theta_c: &CptSet<R>,
) -> Result<ScoreReport<R>, ModelError> {
    score_report(Metric::Ld, d_o, Some(theta_o), theta_c)
}

/// Splits one conditional log-ratio into a lift (relevance) difference
/// plus a marginal log-ratio:
///
/// ```text
/// ln(to(v|pa)/tc(v|pa)) = [ln(to(v|pa)/to(v)) - ln(tc(v|pa)/tc(v))] + ln(to(v)/tc(v))
/// ```
///
/// Returns `(conditional log-ratio, lift difference, marginal log-ratio)`;
/// the first equals the sum of the other two.
pub fn decompose_term<R: Real>(
    theta_o: &CptSet<R>,
    theta_c: &CptSet<R>,
    node: &str,
    value: &str,
    parent_values: &[&str],
) -> Result<(R, R, R), ModelError> {
    let oc = positive(
        theta_o.conditional_by_name(node, parent_values, value)?,
        node,
        value,
    )?;
    let cc = positive(
        theta_c.conditional_by_name(node, parent_values, value)?,
        node,
        value,
    )?;
    let om = positive(theta_o.marginal_by_name(node, value)?, node, value)?;
    let cm = positive(theta_c.marginal_by_name(node, value)?, node, value)?;
    let conditional_ratio = (oc / cc).ln();
    let lift_difference = (oc / om).ln() - (cc / cm).ln();
    let marginal_ratio = (om / cm).ln();
    Ok((conditional_ratio, lift_difference, marginal_ratio))
}
