//! Drill-down explanations for LD rankings: the most divergent node, its
//! dominant parent-child configuration, the feature vs. mutual-information
//! split, and the matching association rule with object and class
//! confidences.

use serde::{Deserialize, Serialize};

use crate::cpt::CptSet;
use crate::num::{format_sig17, Real};
use crate::scores::{Metric, ScoreReport};
use crate::structure::ModelError;

/// An association rule `pa -> child = value` with its confidence under
/// both parameter sets. Confidences are the CPT entries themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDisplay<R> {
    /// `(parent feature, value)` pairs; empty for a parentless node.
    pub antecedent: Vec<(String, String)>,
    pub consequent: (String, String),
    pub object_confidence: R,
    pub class_confidence: R,
}

/// Marginal comparison row for the most divergent single feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleFeatureRow<R> {
    pub value: String,
    pub object_probability: R,
    pub class_probability: R,
}

/// The three-step drill-down result for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation<R> {
    pub object_id: String,
    /// Feature with the highest per-node LD score.
    pub max_node: String,
    pub max_node_score: R,
    pub feature_component: R,
    pub mi_component: R,
    /// Parent values of the dominant configuration, in parent order.
    pub max_config_parents: Vec<(String, String)>,
    /// Child value of the dominant configuration.
    pub max_config_value: String,
    /// LD term of the dominant configuration.
    pub max_config_term: R,
    pub rule: RuleDisplay<R>,
    pub single_feature_row: SingleFeatureRow<R>,
}

/// Runs the drill-down on an LD score report.
///
/// Ties in both argmax steps break deterministically: nodes by report
/// order (schema column order), configurations by their sorted emission
/// order.
pub fn drill_down<R: Real>(
    report: &ScoreReport<R>,
    theta_o: &CptSet<R>,
    theta_c: &CptSet<R>,
) -> Result<Explanation<R>, ModelError> {
    if report.metric != Metric::Ld {
        return Err(ModelError::WrongMetric {
            expected: Metric::Ld.name().to_string(),
            got: report.metric.name().to_string(),
        });
    }
    if report.per_node.is_empty() {
        return Err(ModelError::EmptyTable);
    }

    // Step 1: node with the highest LD score; first wins on ties.
    let max_node = report
        .per_node
        .iter()
        .reduce(|best, n| if n.score > best.score { n } else { best })
        .expect("non-empty report");

    // Step 2: dominant configuration within that node.
    let node_terms: Vec<_> = report
        .per_config
        .iter()
        .filter(|t| t.feature == max_node.feature)
        .collect();
    let max_config = node_terms
        .iter()
        .copied()
        .reduce(|best, t| if t.term > best.term { t } else { best })
        .ok_or(ModelError::EmptyTable)?;

    let structure = theta_c.structure();
    let node_idx =
        structure
            .node_index(&max_node.feature)
            .ok_or_else(|| ModelError::UnknownNode {
                name: max_node.feature.clone(),
            })?;
    let parent_names: Vec<String> = structure
        .parents(node_idx)
        .iter()
        .map(|&p| structure.node(p).feature.clone())
        .collect();
    let antecedent: Vec<(String, String)> = parent_names
        .iter()
        .cloned()
        .zip(max_config.parent_values.iter().cloned())
        .collect();

    // Step 3 is read off the report; the rule confidences come straight
    // from the CPTs.
    let parent_values: Vec<&str> = max_config
        .parent_values
        .iter()
        .map(String::as_str)
        .collect();
    let rule = RuleDisplay {
        antecedent: antecedent.clone(),
        consequent: (max_node.feature.clone(), max_config.child_value.clone()),
        object_confidence: theta_o.conditional_by_name(
            &max_node.feature,
            &parent_values,
            &max_config.child_value,
        )?,
        class_confidence: theta_c.conditional_by_name(
            &max_node.feature,
            &parent_values,
            &max_config.child_value,
        )?,
    };

    // Single-feature comparison: the value maximizing the weighted
    // marginal log-distance. Weights are recovered from the config terms,
    // whose configurations partition each child value's mass.
    let node = structure.node(node_idx);
    let mut best_value: Option<(usize, R)> = None;
    for (v, label) in node.values.iter().enumerate() {
        let weight = node_terms
            .iter()
            .filter(|t| &t.child_value == label)
            .fold(R::zero(), |acc, t| acc + t.weight);
        if weight <= R::zero() {
            continue;
        }
        let om = theta_o.marginal(node_idx, v as u32);
        let cm = theta_c.marginal(node_idx, v as u32);
        if om <= R::zero() || cm <= R::zero() {
            return Err(ModelError::ZeroParameter {
                node: node.feature.clone(),
                value: label.clone(),
            });
        }
        let term = weight * (om / cm).ln().abs();
        if best_value.is_none_or(|(_, t)| term > t) {
            best_value = Some((v, term));
        }
    }
    let (value_idx, _) = best_value.unwrap_or((0, R::zero()));
    let single_feature_row = SingleFeatureRow {
        value: node.values[value_idx].clone(),
        object_probability: theta_o.marginal(node_idx, value_idx as u32),
        class_probability: theta_c.marginal(node_idx, value_idx as u32),
    };

    Ok(Explanation {
        object_id: report.object_id.clone(),
        max_node: max_node.feature.clone(),
        max_node_score: max_node.score,
        feature_component: max_node.feature_component,
        mi_component: max_node.mi_component,
        max_config_parents: antecedent,
        max_config_value: max_config.child_value.clone(),
        max_config_term: max_config.term,
        rule,
        single_feature_row,
    })
}

/// Renders a rule as `P1=a, P2=b -> C=v : object x%, class y%` with
/// whole-number percentages (half-up). A parentless antecedent renders
/// as `(marginal)`.
pub fn format_rule<R: Real>(rule: &RuleDisplay<R>) -> String {
    let antecedent = if rule.antecedent.is_empty() {
        "(marginal)".to_string()
    } else {
        rule.antecedent
            .iter()
            .map(|(f, v)| format!("{f}={v}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let pct = |x: R| (x.to_f64().unwrap() * 100.0).round() as i64;
    format!(
        "{antecedent} -> {}={} : object {}%, class {}%",
        rule.consequent.0,
        rule.consequent.1,
        pct(rule.object_confidence),
        pct(rule.class_confidence)
    )
}

/// Human-readable drill-down report, one section per step.
pub fn render_text<R: Real>(explanation: &Explanation<R>) -> String {
    let config = if explanation.max_config_parents.is_empty() {
        format!(
            "(marginal) {}={}",
            explanation.max_node, explanation.max_config_value
        )
    } else {
        format!(
            "{} with {}={}",
            explanation
                .max_config_parents
                .iter()
                .map(|(f, v)| format!("{f}={v}"))
                .collect::<Vec<_>>()
                .join(", "),
            explanation.max_node,
            explanation.max_config_value
        )
    };
    let row = &explanation.single_feature_row;
    format!(
        "object {id}\n\
         step 1: most divergent node\n\
         \x20 {node}  (LD = {score})\n\
         step 2: dominant parent-child configuration\n\
         \x20 {config}  (term = {term})\n\
         step 3: component split\n\
         \x20 feature = {fc}\n\
         \x20 mutual information = {mi}\n\
         association rule\n\
         \x20 {rule}\n\
         single-feature comparison\n\
         \x20 {node}={value} : object {op}, class {cp}\n",
        id = explanation.object_id,
        node = explanation.max_node,
        score = format_sig17(explanation.max_node_score),
        config = config,
        term = format_sig17(explanation.max_config_term),
        fc = format_sig17(explanation.feature_component),
        mi = format_sig17(explanation.mi_component),
        rule = format_rule(&explanation.rule),
        value = row.value,
        op = format_sig17(row.object_probability),
        cp = format_sig17(row.class_probability),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpt::fit_parameters;
    use crate::schema::RelationalSchema;
    use crate::scores::score_ld;
    use crate::structure::PbnStructure;
    use crate::table::GroundingTable;
    use std::sync::Arc;

    fn fixture() -> (GroundingTable<f64>, GroundingTable<f64>, Arc<PbnStructure>) {
        let schema = Arc::new(
            RelationalSchema::parse(
                "column PlayerId\nrole object-variable\n\n\
                 column ShotEff\nrole feature\nkind discrete\ndomain high low\n\n\
                 column DribbleEff\nrole feature\nkind discrete\ndomain high low\n",
            )
            .unwrap(),
        );
        // Class: dribble efficiency follows shot efficiency weakly; object
        // (player "x"): strongly, and with shifted marginals.
        let mut class_rows: Vec<Vec<String>> = Vec::new();
        for i in 0..100 {
            let shot = if i % 2 == 0 { "high" } else { "low" };
            let dribble = if (i / 2) % 2 == 0 { "high" } else { "low" };
            class_rows.push(vec![format!("p{}", i % 10), shot.into(), dribble.into()]);
        }
        let mut object_rows: Vec<Vec<String>> = Vec::new();
        for i in 0..38 {
            let shot = if i < 30 { "high" } else { "low" };
            let dribble = if i < 28 { "high" } else { "low" };
            object_rows.push(vec!["x".into(), shot.into(), dribble.into()]);
        }
        let class = GroundingTable::from_string_rows(Arc::clone(&schema), &class_rows).unwrap();
        let object = GroundingTable::from_string_rows(Arc::clone(&schema), &object_rows).unwrap();
        let object = object.restrict_to_object("PlayerId", "x").unwrap();
        let structure =
            Arc::new(PbnStructure::from_schema(&schema, &[("ShotEff", "DribbleEff")]).unwrap());
        (class, object, structure)
    }

    #[test]
    fn drill_down_components_reconcile() {
        let (class, object, structure) = fixture();
        let theta_c = fit_parameters(&class, &structure, 1.0).unwrap();
        let theta_o = fit_parameters(&object, &structure, 1.0).unwrap();
        let report = score_ld(&object, &theta_o, &theta_c).unwrap();
        let explanation = drill_down(&report, &theta_o, &theta_c).unwrap();

        let node = report
            .per_node
            .iter()
            .find(|n| n.feature == explanation.max_node)
            .unwrap();
        assert_eq!(explanation.max_node_score, node.score);
        assert!(
            (explanation.feature_component + explanation.mi_component - explanation.max_node_score)
                .abs()
                < 1e-9
        );
        // max_node attains the per-node maximum.
        for n in &report.per_node {
            assert!(n.score <= node.score + 1e-15);
        }
        // Rule confidences are exactly the CPT entries.
        let parents: Vec<&str> = explanation
            .rule
            .antecedent
            .iter()
            .map(|(_, v)| v.as_str())
            .collect();
        assert_eq!(
            explanation.rule.object_confidence,
            theta_o
                .conditional_by_name(
                    &explanation.max_node,
                    &parents,
                    &explanation.max_config_value
                )
                .unwrap()
        );
    }

    #[test]
    fn equal_parameters_tie_break_to_first_node() {
        let (class, _, structure) = fixture();
        let theta = fit_parameters(&class, &structure, 1.0).unwrap();
        let report = score_ld(&class, &theta, &theta).unwrap();
        let explanation = drill_down(&report, &theta, &theta).unwrap();
        assert_eq!(explanation.max_node, "ShotEff");
        assert_eq!(explanation.feature_component, 0.0);
        assert_eq!(explanation.mi_component, 0.0);
        assert_eq!(
            explanation.rule.object_confidence,
            explanation.rule.class_confidence
        );
    }

    #[test]
    fn rule_formatting() {
        let rule = RuleDisplay {
            antecedent: vec![
                ("ShotEff".to_string(), "high".to_string()),
                ("TimePlayed".to_string(), "high".to_string()),
            ],
            consequent: ("ShotsOnTarget".to_string(), "high".to_string()),
            object_confidence: 0.70f64,
            class_confidence: 0.52,
        };
        assert_eq!(
            format_rule(&rule),
            "ShotEff=high, TimePlayed=high -> ShotsOnTarget=high : object 70%, class 52%"
        );
    }

    #[test]
    fn parentless_rule_marks_marginal() {
        let rule = RuleDisplay {
            antecedent: vec![],
            consequent: ("F1".to_string(), "0".to_string()),
            object_confidence: 0.505f64,
            class_confidence: 0.4949,
        };
        assert_eq!(
            format_rule(&rule),
            "(marginal) -> F1=0 : object 51%, class 49%"
        );
    }

    #[test]
    fn drill_down_rejects_non_ld_reports() {
        let (class, object, structure) = fixture();
        let theta_c = fit_parameters(&class, &structure, 1.0).unwrap();
        let theta_o = fit_parameters(&object, &structure, 1.0).unwrap();
        let report =
            crate::scores::score_report(Metric::AbsLr, &object, Some(&theta_o), &theta_c).unwrap();
        assert!(drill_down(&report, &theta_o, &theta_c).is_err());
    }

    #[test]
    fn explanation_serializes_to_json() {
        let (class, object, structure) = fixture();
        let theta_c = fit_parameters(&class, &structure, 1.0).unwrap();
        let theta_o = fit_parameters(&object, &structure, 1.0).unwrap();
        let report = score_ld(&object, &theta_o, &theta_c).unwrap();
        let explanation = drill_down(&report, &theta_o, &theta_c).unwrap();
        let json = serde_json::to_string_pretty(&explanation).unwrap();
        let back: Explanation<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, explanation);
        let text = render_text(&explanation);
        assert!(text.contains("step 1"));
        assert!(text.contains(&explanation.max_node));
    }
}
