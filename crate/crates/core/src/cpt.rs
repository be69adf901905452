//! Conditional probability tables: maximum-likelihood estimation with
//! Laplace smoothing, joint evaluation, and a text serialization.
//!
//! Fitted parameters follow the empirical-frequency maximum of the
//! relational pseudo log-likelihood:
//!
//! ```text
//! theta(v | pa) = (#(v, pa) + alpha) / (#(pa) + alpha * r)
//! theta(v)      = (#(v) + alpha)     / (N + alpha * r)
//! ```
//!
//! With `alpha = 0` these are the exact database frequencies; parent
//! configurations never observed in the fitting table fall back to the
//! uniform distribution `1/r`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::num::{format_sig17, parse_sig17, Real};
use crate::structure::{ModelError, PbnStructure, StructureNode, StructureViolation};
use crate::table::{GroundingTable, ValueAssignment};

/// Per-node column binding of a structure against a table schema.
pub(crate) struct NodeBinding {
    pub child_col: usize,
    pub parent_cols: Vec<usize>,
}

/// Resolves every structure node to its table column, checking that the
/// column is discrete with the same value domain.
pub(crate) fn bind_structure<R: Real>(
    table: &GroundingTable<R>,
    structure: &PbnStructure,
) -> Result<Vec<NodeBinding>, ModelError> {
    let col_of = |feature: &str, values: &[String]| -> Result<usize, ModelError> {
        let (col, _) = table.schema().column(feature).ok_or_else(|| {
            ModelError::Invalid(StructureViolation::UnknownNode {
                name: feature.to_string(),
            })
        })?;
        match table.schema().domain(feature) {
            Some(domain) if domain == values => Ok(col),
            Some(_) => Err(ModelError::Invalid(StructureViolation::DomainMismatch {
                name: feature.to_string(),
            })),
            None => Err(ModelError::Invalid(
                StructureViolation::NotDiscreteFeature {
                    name: feature.to_string(),
                },
            )),
        }
    };
    (0..structure.num_nodes())
        .map(|i| {
            let node = structure.node(i);
            let child_col = col_of(&node.feature, &node.values)?;
            let parent_cols = structure
                .parents(i)
                .iter()
                .map(|&p| {
                    let parent = structure.node(p);
                    col_of(&parent.feature, &parent.values)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(NodeBinding {
                child_col,
                parent_cols,
            })
        })
        .collect()
}

/// Grounding counts for one node family: per parent configuration, the
/// count of each child value; plus the plain child-value counts.
pub(crate) fn family_counts<R: Real>(
    table: &GroundingTable<R>,
    binding: &NodeBinding,
    arity: usize,
) -> (BTreeMap<Vec<u32>, Vec<usize>>, Vec<usize>) {
    let mut by_config: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
    let mut value_counts = vec![0usize; arity];
    for row in 0..table.row_count() {
        let v = table.label_at(row, binding.child_col) as usize;
        value_counts[v] += 1;
        let config: Vec<u32> = binding
            .parent_cols
            .iter()
            .map(|&c| table.label_at(row, c))
            .collect();
        by_config.entry(config).or_insert_with(|| vec![0; arity])[v] += 1;
    }
    (by_config, value_counts)
}

#[derive(Debug, Clone, PartialEq)]
struct NodeCpt<R> {
    /// Distributions keyed by parent value-index configuration, in the
    /// order of `PbnStructure::parents`. Configurations absent here read
    /// as uniform.
    conditionals: BTreeMap<Vec<u32>, Vec<R>>,
    marginal: Vec<R>,
}

/// Explicit parameters for one node, for building a [`CptSet`] without
/// data (synthetic generators, perturbation tests).
#[derive(Debug, Clone)]
pub struct NodeParams<R> {
    pub conditionals: BTreeMap<Vec<u32>, Vec<R>>,
    /// Explicit marginal; when `None` it is entailed by forward
    /// enumeration of the joint.
    pub marginal: Option<Vec<R>>,
}

/// A full parameter vector for one structure: per node, conditional
/// distributions over parent configurations plus a marginal distribution.
///
/// Immutable after construction; lookups are pure reads.
#[derive(Debug, Clone, PartialEq)]
pub struct CptSet<R: Real> {
    structure: Arc<PbnStructure>,
    nodes: Vec<NodeCpt<R>>,
    alpha: R,
    source: String,
}

impl<R: Real> CptSet<R> {
    pub fn structure(&self) -> &Arc<PbnStructure> {
        &self.structure
    }

    pub fn alpha(&self) -> R {
        self.alpha
    }

    /// Identifier of the database the parameters came from.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// `theta(value | config)` with the uniform fallback for parent
    /// configurations never observed at fit time.
    pub fn conditional(&self, node: usize, config: &[u32], value: u32) -> R {
        let arity = self.structure.node(node).values.len();
        match self.nodes[node].conditionals.get(config) {
            Some(dist) => dist[value as usize],
            None => R::one() / R::from_usize(arity).unwrap(),
        }
    }

    /// `theta(value)`: the node's marginal probability.
    pub fn marginal(&self, node: usize, value: u32) -> R {
        self.nodes[node].marginal[value as usize]
    }

    /// Iterates the parent configurations stored for a node, with their
    /// distributions, in sorted order.
    pub fn stored_configs(&self, node: usize) -> impl Iterator<Item = (&[u32], &[R])> {
        self.nodes[node]
            .conditionals
            .iter()
            .map(|(k, v)| (k.as_slice(), v.as_slice()))
    }

    /// Name-based conditional lookup; parent values are given in the
    /// order of the node's parents.
    pub fn conditional_by_name(
        &self,
        node: &str,
        parent_values: &[&str],
        value: &str,
    ) -> Result<R, ModelError> {
        let i = self
            .structure
            .node_index(node)
            .ok_or_else(|| ModelError::UnknownNode {
                name: node.to_string(),
            })?;
        let v = self
            .structure
            .value_index(i, value)
            .ok_or_else(|| ModelError::UnknownValue {
                node: node.to_string(),
                value: value.to_string(),
            })?;
        let parents = self.structure.parents(i);
        if parents.len() != parent_values.len() {
            return Err(ModelError::IncompleteAssignment {
                name: node.to_string(),
            });
        }
        let config = parents
            .iter()
            .zip(parent_values)
            .map(|(&p, pv)| {
                self.structure
                    .value_index(p, pv)
                    .ok_or_else(|| ModelError::UnknownValue {
                        node: self.structure.node(p).feature.clone(),
                        value: pv.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.conditional(i, &config, v))
    }

    pub fn marginal_by_name(&self, node: &str, value: &str) -> Result<R, ModelError> {
        let i = self
            .structure
            .node_index(node)
            .ok_or_else(|| ModelError::UnknownNode {
                name: node.to_string(),
            })?;
        let v = self
            .structure
            .value_index(i, value)
            .ok_or_else(|| ModelError::UnknownValue {
                node: node.to_string(),
                value: value.to_string(),
            })?;
        Ok(self.marginal(i, v))
    }

    /// Joint log-probability of a complete assignment: the node-wise sum
    /// of `ln theta(v_i | pa_i)`.
    pub fn joint_log_prob(&self, assignment: &ValueAssignment) -> Result<R, ModelError> {
        let indices: Vec<u32> = (0..self.structure.num_nodes())
            .map(|i| {
                let node = self.structure.node(i);
                let value = assignment.get(&node.feature).ok_or_else(|| {
                    ModelError::IncompleteAssignment {
                        name: node.feature.clone(),
                    }
                })?;
                self.structure
                    .value_index(i, value)
                    .ok_or_else(|| ModelError::UnknownValue {
                        node: node.feature.clone(),
                        value: value.to_string(),
                    })
            })
            .collect::<Result<_, _>>()?;
        let mut total = R::zero();
        for i in 0..self.structure.num_nodes() {
            let config: Vec<u32> = self
                .structure
                .parents(i)
                .iter()
                .map(|&p| indices[p])
                .collect();
            let theta = self.conditional(i, &config, indices[i]);
            if theta <= R::zero() {
                return Err(ModelError::ZeroParameter {
                    node: self.structure.node(i).feature.clone(),
                    value: self.structure.node(i).values[indices[i] as usize].clone(),
                });
            }
            total = total + theta.ln();
        }
        Ok(total)
    }

    /// Builds a set from explicit parameters. Distributions must be
    /// non-negative and sum to 1; missing marginals are entailed from the
    /// conditionals.
    pub fn from_parameters(
        structure: Arc<PbnStructure>,
        params: Vec<NodeParams<R>>,
        source: &str,
    ) -> Result<Self, ModelError> {
        assert_eq!(
            params.len(),
            structure.num_nodes(),
            "one NodeParams per structure node"
        );
        let mut nodes = Vec::with_capacity(params.len());
        let needs_entailment = params.iter().any(|p| p.marginal.is_none());
        for (i, p) in params.iter().enumerate() {
            let node = structure.node(i);
            let arity = node.values.len();
            for dist in p.conditionals.values() {
                check_distribution(&node.feature, dist, arity)?;
            }
            if let Some(m) = &p.marginal {
                check_distribution(&node.feature, m, arity)?;
            }
            nodes.push(NodeCpt {
                conditionals: p.conditionals.clone(),
                marginal: p.marginal.clone().unwrap_or_default(),
            });
        }
        let mut set = Self {
            structure,
            nodes,
            alpha: R::zero(),
            source: source.to_string(),
        };
        if needs_entailment {
            let marginals = set.entailed_marginals()?;
            for (i, m) in marginals.into_iter().enumerate() {
                if set.nodes[i].marginal.is_empty() {
                    set.nodes[i].marginal = m;
                }
            }
        }
        Ok(set)
    }

    /// Marginals entailed by the joint distribution, via enumeration of
    /// the full state space (guarded; intended for small hand-built nets).
    fn entailed_marginals(&self) -> Result<Vec<Vec<R>>, ModelError> {
        let arities: Vec<usize> = self
            .structure
            .nodes()
            .iter()
            .map(|n| n.values.len())
            .collect();
        let states: usize = arities.iter().product();
        assert!(
            states <= 1 << 20,
            "state space too large to entail marginals; provide them explicitly"
        );
        let mut marginals: Vec<Vec<R>> = arities.iter().map(|&r| vec![R::zero(); r]).collect();
        for assignment in enumerate_assignments(&arities) {
            let mut p = R::one();
            for i in 0..arities.len() {
                let config: Vec<u32> = self
                    .structure
                    .parents(i)
                    .iter()
                    .map(|&q| assignment[q])
                    .collect();
                p = p * self.conditional(i, &config, assignment[i]);
            }
            for i in 0..arities.len() {
                marginals[i][assignment[i] as usize] = marginals[i][assignment[i] as usize] + p;
            }
        }
        Ok(marginals)
    }

    /// Canonical text rendering; round-trips bit-identically.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("relx-model 1\n");
        out.push_str(&format!("alpha {}\n", format_sig17(self.alpha)));
        out.push_str(&format!("source {}\n", self.source));
        for (i, cpt) in self.nodes.iter().enumerate() {
            let node = self.structure.node(i);
            out.push('\n');
            out.push_str(&format!("node {}\n", node.feature));
            out.push_str(&format!("values {}\n", node.values.join(" ")));
            let parent_names: Vec<&str> = self
                .structure
                .parents(i)
                .iter()
                .map(|&p| self.structure.node(p).feature.as_str())
                .collect();
            if parent_names.is_empty() {
                out.push_str("parents\n");
            } else {
                out.push_str(&format!("parents {}\n", parent_names.join(" ")));
            }
            let fmt_dist = |d: &[R]| {
                d.iter()
                    .map(|&x| format_sig17(x))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            out.push_str(&format!("marginal {}\n", fmt_dist(&cpt.marginal)));
            for (config, dist) in &cpt.conditionals {
                let labels: Vec<&str> = config
                    .iter()
                    .zip(self.structure.parents(i))
                    .map(|(&v, &p)| self.structure.node(p).values[v as usize].as_str())
                    .collect();
                if labels.is_empty() {
                    out.push_str(&format!("cond {}\n", fmt_dist(dist)));
                } else {
                    out.push_str(&format!("cond {} {}\n", labels.join(" "), fmt_dist(dist)));
                }
            }
        }
        out
    }

    /// Parses the document produced by [`CptSet::to_text`].
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let err = |line: usize, message: String| ModelError::ModelParse { line, message };
        let mut lines = text.lines().enumerate().peekable();

        let expect_kv = |lines: &mut std::iter::Peekable<std::iter::Enumerate<std::str::Lines>>,
                         key: &str|
         -> Result<(usize, String), ModelError> {
            loop {
                match lines.next() {
                    Some((idx, raw)) => {
                        let line = raw.trim();
                        if line.is_empty() || line.starts_with('#') {
                            continue;
                        }
                        return match line.split_once(char::is_whitespace) {
                            Some((k, rest)) if k == key => Ok((idx + 1, rest.trim().to_string())),
                            _ if line == key => Ok((idx + 1, String::new())),
                            _ => Err(err(idx + 1, format!("expected {key:?}, got {line:?}"))),
                        };
                    }
                    None => return Err(err(0, format!("unexpected end of input, wanted {key:?}"))),
                }
            }
        };

        let (line_no, version) = expect_kv(&mut lines, "relx-model")?;
        if version != "1" {
            return Err(err(
                line_no,
                format!("unsupported model version {version:?}"),
            ));
        }
        let (line_no, alpha_text) = expect_kv(&mut lines, "alpha")?;
        let alpha: R = parse_sig17(&alpha_text)
            .ok_or_else(|| err(line_no, format!("bad alpha {alpha_text:?}")))?;
        let (_, source) = expect_kv(&mut lines, "source")?;

        struct RawNode<R> {
            feature: String,
            values: Vec<String>,
            parents: Vec<String>,
            marginal: Vec<R>,
            conds: Vec<(Vec<String>, Vec<R>)>,
        }
        let mut raw_nodes: Vec<RawNode<R>> = Vec::new();
        while lines.peek().is_some() {
            let (idx, raw) = *lines.peek().unwrap();
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                lines.next();
                continue;
            }
            if let Some(current) = raw_nodes.last_mut() {
                if let Some(rest) = line.strip_prefix("cond ") {
                    let tokens: Vec<&str> = rest.split_whitespace().collect();
                    let n_parents = current.parents.len();
                    if tokens.len() < n_parents {
                        return Err(err(idx + 1, "cond line too short".into()));
                    }
                    let labels = tokens[..n_parents].iter().map(|s| s.to_string()).collect();
                    let dist = tokens[n_parents..]
                        .iter()
                        .map(|t| {
                            parse_sig17(t)
                                .ok_or_else(|| err(idx + 1, format!("bad probability {t:?}")))
                        })
                        .collect::<Result<Vec<R>, _>>()?;
                    current.conds.push((labels, dist));
                    lines.next();
                    continue;
                }
            }
            let (line_no, feature) = expect_kv(&mut lines, "node")?;
            if feature.is_empty() {
                return Err(err(line_no, "node line without a name".into()));
            }
            let (_, values_text) = expect_kv(&mut lines, "values")?;
            let (_, parents_text) = expect_kv(&mut lines, "parents")?;
            let (line_no, marginal_text) = expect_kv(&mut lines, "marginal")?;
            let marginal = marginal_text
                .split_whitespace()
                .map(|t| {
                    parse_sig17(t).ok_or_else(|| err(line_no, format!("bad probability {t:?}")))
                })
                .collect::<Result<Vec<R>, _>>()?;
            raw_nodes.push(RawNode {
                feature,
                values: values_text.split_whitespace().map(str::to_string).collect(),
                parents: parents_text
                    .split_whitespace()
                    .map(str::to_string)
                    .collect(),
                marginal,
                conds: Vec::new(),
            });
        }

        let nodes: Vec<StructureNode> = raw_nodes
            .iter()
            .map(|r| StructureNode {
                feature: r.feature.clone(),
                values: r.values.clone(),
            })
            .collect();
        let mut named_edges = Vec::new();
        for r in &raw_nodes {
            for p in &r.parents {
                named_edges.push((p.clone(), r.feature.clone()));
            }
        }
        let structure = Arc::new(PbnStructure::from_parts(nodes, &named_edges)?);

        let mut node_cpts = Vec::with_capacity(raw_nodes.len());
        for (i, r) in raw_nodes.iter().enumerate() {
            // Serialized parents follow structure order already; map labels
            // to value indices per parent.
            let parent_indices: Vec<usize> = structure.parents(i).to_vec();
            let mut conditionals = BTreeMap::new();
            for (labels, dist) in &r.conds {
                if dist.len() != r.values.len() {
                    return Err(err(
                        0,
                        format!(
                            "node {:?}: conditional has {} entries, expected {}",
                            r.feature,
                            dist.len(),
                            r.values.len()
                        ),
                    ));
                }
                let config = labels
                    .iter()
                    .zip(&parent_indices)
                    .map(|(label, &p)| {
                        structure
                            .value_index(p, label)
                            .ok_or_else(|| ModelError::UnknownValue {
                                node: structure.node(p).feature.clone(),
                                value: label.clone(),
                            })
                    })
                    .collect::<Result<Vec<u32>, _>>()?;
                conditionals.insert(config, dist.clone());
            }
            if r.marginal.len() != r.values.len() {
                return Err(err(
                    0,
                    format!("node {:?}: marginal arity mismatch", r.feature),
                ));
            }
            node_cpts.push(NodeCpt {
                conditionals,
                marginal: r.marginal.clone(),
            });
        }
        Ok(Self {
            structure,
            nodes: node_cpts,
            alpha,
            source,
        })
    }
}

fn check_distribution<R: Real>(node: &str, dist: &[R], arity: usize) -> Result<(), ModelError> {
    if dist.len() != arity {
        return Err(ModelError::NotNormalized {
            node: node.to_string(),
            sum: f64::NAN,
        });
    }
    let mut sum = R::zero();
    for &p in dist {
        if p < R::zero() {
            return Err(ModelError::NotNormalized {
                node: node.to_string(),
                sum: p.to_f64().unwrap_or(f64::NAN),
            });
        }
        sum = sum + p;
    }
    if (sum - R::one()).abs() > sum_tolerance::<R>(arity) {
        return Err(ModelError::NotNormalized {
            node: node.to_string(),
            sum: sum.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Normalization tolerance: 1e-9 for f64, loosened to a few ulps worth of
/// accumulation for narrower scalars.
pub(crate) fn sum_tolerance<R: Real>(arity: usize) -> R {
    let fixed = R::from_f64(1e-9).unwrap_or_else(R::epsilon);
    let accumulated = R::epsilon() * R::from_usize(arity.max(4) * 8).unwrap();
    fixed.max(accumulated)
}

/// All complete value-index assignments over the given arities, in
/// lexicographic order.
pub(crate) fn enumerate_assignments(arities: &[usize]) -> Vec<Vec<u32>> {
    let total: usize = arities.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut current = vec![0u32; arities.len()];
    for _ in 0..total {
        out.push(current.clone());
        for i in (0..arities.len()).rev() {
            current[i] += 1;
            if (current[i] as usize) < arities[i] {
                break;
            }
            current[i] = 0;
        }
    }
    out
}

/// Maximum-likelihood CPT estimation with Laplace pseudocount `alpha`.
///
/// With `alpha = 0` the estimates are the exact empirical database
/// frequencies; parent configurations never observed read as uniform.
pub fn fit_parameters<R: Real>(
    table: &GroundingTable<R>,
    structure: &Arc<PbnStructure>,
    alpha: R,
) -> Result<CptSet<R>, ModelError> {
    assert!(alpha >= R::zero(), "pseudocount must be non-negative");
    if table.is_empty() {
        return Err(ModelError::EmptyTable);
    }
    let bindings = bind_structure(table, structure)?;
    let n = table.row_count();
    let mut nodes = Vec::with_capacity(structure.num_nodes());
    for (i, binding) in bindings.iter().enumerate() {
        let arity = structure.node(i).values.len();
        let r = R::from_usize(arity).unwrap();
        let (by_config, value_counts) = family_counts(table, binding, arity);

        let mut conditionals = BTreeMap::new();
        for (config, counts) in by_config {
            let total: usize = counts.iter().sum();
            let denom = R::from_usize(total).unwrap() + alpha * r;
            let dist: Vec<R> = counts
                .iter()
                .map(|&c| (R::from_usize(c).unwrap() + alpha) / denom)
                .collect();
            conditionals.insert(config, dist);
        }
        let denom = R::from_usize(n).unwrap() + alpha * r;
        let marginal: Vec<R> = value_counts
            .iter()
            .map(|&c| (R::from_usize(c).unwrap() + alpha) / denom)
            .collect();
        nodes.push(NodeCpt {
            conditionals,
            marginal,
        });
    }
    let source = match table.provenance() {
        crate::table::Provenance::Class => "class".to_string(),
        crate::table::Provenance::Object { id, .. } => id.clone(),
    };
    Ok(CptSet {
        structure: Arc::clone(structure),
        nodes,
        alpha,
        source,
    })
}
