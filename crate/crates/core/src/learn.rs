//! Greedy structure search: BIC-penalized hill climbing over edge
//! add/remove/reverse moves.
//!
//! The objective is the data-scale pseudo log-likelihood (N times the
//! frequency-standardized form) under alpha = 0 maximum-likelihood
//! parameters, minus ln(N)/2 per free parameter. The score decomposes
//! per node family, so each move re-scores at most two families.
//! Enumeration order is fixed by the schema's column order, which makes
//! the search deterministic.

use std::collections::BTreeSet;

use crate::cpt::{family_counts, NodeBinding};
use crate::num::Real;
use crate::schema::ColumnSpec;
use crate::structure::{ModelError, PbnStructure, StructureSpec};
use crate::table::GroundingTable;

/// Hill-climbing structure learner over all discrete features of the
/// table's schema. Deterministic; respects `max_parents`.
pub fn greedy_structure_learn<R: Real>(
    table: &GroundingTable<R>,
    max_parents: usize,
) -> Result<PbnStructure, ModelError> {
    if table.is_empty() {
        return Err(ModelError::EmptyTable);
    }
    let schema = table.schema();
    let features: Vec<(usize, String, usize)> = schema
        .columns()
        .iter()
        .enumerate()
        .filter_map(|(col, spec)| match spec {
            ColumnSpec::DiscreteFeature { name, domain } => Some((col, name.clone(), domain.len())),
            _ => None,
        })
        .collect();
    let n_nodes = features.len();
    let mut parents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_nodes];

    let family_score = |child: usize, pa: &BTreeSet<usize>| -> f64 {
        let binding = NodeBinding {
            child_col: features[child].0,
            parent_cols: pa.iter().map(|&p| features[p].0).collect(),
        };
        let arity = features[child].2;
        let (by_config, _) = family_counts(table, &binding, arity);
        let mut loglik = 0.0;
        for counts in by_config.values() {
            let total: usize = counts.iter().sum();
            for &c in counts {
                if c > 0 {
                    loglik += c as f64 * (c as f64 / total as f64).ln();
                }
            }
        }
        let parent_states: usize = pa.iter().map(|&p| features[p].2).product();
        let free = (arity - 1) * parent_states;
        let n = table.row_count() as f64;
        loglik - 0.5 * n.ln() * free as f64
    };

    let mut scores: Vec<f64> = (0..n_nodes).map(|i| family_score(i, &parents[i])).collect();

    let creates_cycle = |parents: &[BTreeSet<usize>], from: usize, to: usize| -> bool {
        // Would an edge from -> to close a cycle? True iff `from` is
        // reachable from `to` along existing child -> parent... i.e.
        // search descendants of `to`.
        let mut stack = vec![to];
        let mut seen = vec![false; parents.len()];
        while let Some(node) = stack.pop() {
            if node == from {
                return true;
            }
            if seen[node] {
                continue;
            }
            seen[node] = true;
            for (child, pa) in parents.iter().enumerate() {
                if pa.contains(&node) {
                    stack.push(child);
                }
            }
        }
        false
    };

    // A move rewrites the parent sets of the children it touches.
    type Move = Vec<(usize, BTreeSet<usize>)>;
    loop {
        let mut best: Option<(f64, Move)> = None;
        let mut consider = |gain: f64, change: Move| {
            if gain > 1e-12 && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((gain, change));
            }
        };

        for p in 0..n_nodes {
            for c in 0..n_nodes {
                if p == c {
                    continue;
                }
                let present = parents[c].contains(&p);
                if !present {
                    // Add p -> c.
                    if parents[c].len() < max_parents && !creates_cycle(&parents, p, c) {
                        let mut pa = parents[c].clone();
                        pa.insert(p);
                        let gain = family_score(c, &pa) - scores[c];
                        consider(gain, vec![(c, pa)]);
                    }
                } else {
                    // Remove p -> c.
                    let mut pa = parents[c].clone();
                    pa.remove(&p);
                    let gain = family_score(c, &pa) - scores[c];
                    consider(gain, vec![(c, pa.clone())]);

                    // Reverse to c -> p.
                    if parents[p].len() < max_parents {
                        let mut parents_without = parents.clone();
                        parents_without[c] = pa.clone();
                        if !creates_cycle(&parents_without, c, p) {
                            let mut pa_p = parents[p].clone();
                            pa_p.insert(c);
                            let gain = family_score(c, &pa) + family_score(p, &pa_p)
                                - scores[c]
                                - scores[p];
                            consider(gain, vec![(c, pa), (p, pa_p)]);
                        }
                    }
                }
            }
        }

        match best {
            Some((_, changes)) => {
                for (node, pa) in changes {
                    scores[node] = family_score(node, &pa);
                    parents[node] = pa;
                }
            }
            None => break,
        }
    }

    let nodes: Vec<String> = features.iter().map(|(_, name, _)| name.clone()).collect();
    let mut edges = Vec::new();
    for (c, pa) in parents.iter().enumerate() {
        for &p in pa {
            edges.push((features[p].1.clone(), features[c].1.clone()));
        }
    }
    StructureSpec::new(nodes, edges).build(schema)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::RelationalSchema;
    use crate::table::GroundingTable;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn two_feature_table(rows: &[(u8, u8)]) -> GroundingTable<f64> {
        let schema = Arc::new(
            RelationalSchema::parse(
                "column Id\nrole object-variable\n\n\
                 column A\nrole feature\nkind discrete\ndomain 0 1\n\n\
                 column B\nrole feature\nkind discrete\ndomain 0 1\n",
            )
            .unwrap(),
        );
        let data: Vec<Vec<String>> = rows
            .iter()
            .enumerate()
            .map(|(i, (a, b))| vec![format!("o{i}"), a.to_string(), b.to_string()])
            .collect();
        GroundingTable::from_string_rows(schema, &data).unwrap()
    }

    #[test]
    fn independent_features_learn_no_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<(u8, u8)> = (0..1000)
            .map(|_| (rng.gen_range(0..2), rng.gen_range(0..2)))
            .collect();
        let table = two_feature_table(&rows);
        let learned = greedy_structure_learn(&table, 2).unwrap();
        assert_eq!(learned.edges().count(), 0);
    }

    #[test]
    fn deterministic_copy_learns_one_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<(u8, u8)> = (0..1000)
            .map(|_| {
                let a = rng.gen_range(0..2);
                (a, a)
            })
            .collect();
        let table = two_feature_table(&rows);
        let learned = greedy_structure_learn(&table, 2).unwrap();
        assert_eq!(learned.edges().count(), 1);
    }

    #[test]
    fn search_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<(u8, u8)> = (0..500)
            .map(|_| {
                let a: u8 = rng.gen_range(0..2);
                let b = if rng.gen::<f64>() < 0.8 { a } else { 1 - a };
                (a, b)
            })
            .collect();
        let table = two_feature_table(&rows);
        let first = greedy_structure_learn(&table, 2).unwrap();
        let second = greedy_structure_learn(&table, 2).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn max_parents_zero_forces_empty_graph() {
        let rows: Vec<(u8, u8)> = (0..200).map(|i| ((i % 2) as u8, (i % 2) as u8)).collect();
        let table = two_feature_table(&rows);
        let learned = greedy_structure_learn(&table, 0).unwrap();
        assert_eq!(learned.edges().count(), 0);
    }

    /// Exhaustive three-structure comparison on the copy relation: the
    /// hill climber must land on the BIC-best of {empty, A->B, B->A}.
    #[test]
    fn copy_relation_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<(u8, u8)> = (0..1000)
            .map(|_| {
                let a: u8 = rng.gen_range(0..2);
                let b = if rng.gen::<f64>() < 0.95 { a } else { 1 - a };
                (a, b)
            })
            .collect();
        let table = two_feature_table(&rows);
        let n = rows.len() as f64;
        let count = |f: &dyn Fn(&(u8, u8)) -> bool| rows.iter().filter(|r| f(r)).count() as f64;

        // Count-scale log-likelihood of each candidate, minus the BIC
        // penalty of ln(N)/2 per free parameter.
        let marginal_ll = |col: usize| {
            [0u8, 1]
                .iter()
                .map(|&v| {
                    let c = count(&|r: &(u8, u8)| if col == 0 { r.0 == v } else { r.1 == v });
                    if c > 0.0 {
                        c * (c / n).ln()
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        };
        let conditional_ll = |child: usize| {
            let mut total = 0.0;
            for &pv in &[0u8, 1] {
                let parent_count = count(&|r: &(u8, u8)| {
                    if child == 1 {
                        r.0 == pv
                    } else {
                        r.1 == pv
                    }
                });
                for &cv in &[0u8, 1] {
                    let joint = count(&|r: &(u8, u8)| {
                        if child == 1 {
                            r.0 == pv && r.1 == cv
                        } else {
                            r.1 == pv && r.0 == cv
                        }
                    });
                    if joint > 0.0 {
                        total += joint * (joint / parent_count).ln();
                    }
                }
            }
            total
        };
        let pen = 0.5 * n.ln();
        let empty = marginal_ll(0) + marginal_ll(1) - 2.0 * pen;
        let a_to_b = marginal_ll(0) + conditional_ll(1) - pen - 2.0 * pen;
        let b_to_a = marginal_ll(1) + conditional_ll(0) - pen - 2.0 * pen;
        let best = empty.max(a_to_b).max(b_to_a);
        assert!(best > empty, "edge should pay off on near-copy data");

        let learned = greedy_structure_learn(&table, 2).unwrap();
        assert_eq!(learned.edges().count(), 1);
    }
}
