//! Parametrized Bayesian network structures over discrete feature PRVs.
//!
//! A structure file is plain text, one edge per line:
//!
//! ```text
//! # class model
//! node First_goal
//! passEff -> Result
//! shotEff -> Result
//! ```
//!
//! `node <name>` lines declare isolated nodes; `#` starts a comment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{ColumnSpec, RelationalSchema};

/// Errors from structure parsing and construction.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("structure parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid structure: {0}")]
    Invalid(StructureViolation),

    #[error("feature {name:?} missing from the assignment")]
    IncompleteAssignment { name: String },

    #[error("value {value:?} is not in the domain of node {node:?}")]
    UnknownValue { node: String, value: String },

    #[error("unknown node {name:?}")]
    UnknownNode { name: String },

    #[error(
        "zero probability parameter for node {node:?}, value {value:?} (alpha = 0 fit); \
         cannot take its logarithm"
    )]
    ZeroParameter { node: String, value: String },

    #[error("distribution for node {node:?} sums to {sum}, expected 1")]
    NotNormalized { node: String, sum: f64 },

    #[error("operation requires a non-empty table")]
    EmptyTable,

    #[error("parameter sets were fitted against different structures")]
    StructureMismatch,

    #[error("metric {metric} requires object-fitted parameters")]
    MissingObjectParameters { metric: String },

    #[error("expected a {expected} report, got {got}")]
    WrongMetric { expected: String, got: String },

    #[error("model parse error at line {line}: {message}")]
    ModelParse { line: usize, message: String },
}

/// One diagnostic from [`StructureSpec::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructureViolation {
    /// Edge set admits no topological order.
    Cycle {
        nodes: Vec<String>,
    },
    /// Node is absent from the schema.
    UnknownNode {
        name: String,
    },
    /// Node names a column that is not a discrete feature.
    NotDiscreteFeature {
        name: String,
    },
    /// Node value list differs from the schema domain.
    DomainMismatch {
        name: String,
    },
    DuplicateNode {
        name: String,
    },
    SelfLoop {
        name: String,
    },
    DuplicateEdge {
        parent: String,
        child: String,
    },
}

impl std::fmt::Display for StructureViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StructureViolation::Cycle { nodes } => {
                write!(f, "cycle involving {}", nodes.join(", "))
            }
            StructureViolation::UnknownNode { name } => write!(f, "unknown node {name:?}"),
            StructureViolation::NotDiscreteFeature { name } => {
                write!(f, "node {name:?} is not a discrete feature")
            }
            StructureViolation::DomainMismatch { name } => {
                write!(f, "node {name:?} value list differs from the schema domain")
            }
            StructureViolation::DuplicateNode { name } => {
                write!(f, "node {name:?} declared twice")
            }
            StructureViolation::SelfLoop { name } => write!(f, "self-loop on {name:?}"),
            StructureViolation::DuplicateEdge { parent, child } => {
                write!(f, "duplicate edge {parent} -> {child}")
            }
        }
    }
}

/// Raw, possibly-invalid structure description as read from a file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructureSpec {
    /// Every mentioned node, in first-mention order.
    pub nodes: Vec<String>,
    /// `(parent, child)` pairs in file order.
    pub edges: Vec<(String, String)>,
}

impl StructureSpec {
    pub fn new(nodes: Vec<String>, edges: Vec<(String, String)>) -> Self {
        let mut spec = Self {
            nodes: Vec::new(),
            edges,
        };
        for n in nodes {
            spec.mention(&n);
        }
        let mentioned: Vec<(String, String)> = spec.edges.clone();
        for (p, c) in &mentioned {
            spec.mention(p);
            spec.mention(c);
        }
        spec
    }

    fn mention(&mut self, name: &str) {
        if !self.nodes.iter().any(|n| n == name) {
            self.nodes.push(name.to_string());
        }
    }

    /// Parses the structure-file format described in the module docs.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut spec = StructureSpec::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("node ") {
                let name = rest.trim();
                if name.is_empty() {
                    return Err(ModelError::Parse {
                        line: idx + 1,
                        message: "node line without a name".into(),
                    });
                }
                spec.mention(name);
            } else if let Some((parent, child)) = line.split_once("->") {
                let (parent, child) = (parent.trim(), child.trim());
                if parent.is_empty() || child.is_empty() {
                    return Err(ModelError::Parse {
                        line: idx + 1,
                        message: format!("malformed edge {line:?}"),
                    });
                }
                spec.mention(parent);
                spec.mention(child);
                spec.edges.push((parent.to_string(), child.to_string()));
            } else {
                return Err(ModelError::Parse {
                    line: idx + 1,
                    message: format!("expected `node <name>` or `Parent -> Child`, got {line:?}"),
                });
            }
        }
        Ok(spec)
    }

    /// Diagnostic pass: every violated invariant, or empty when the description
    /// builds cleanly against the schema.
    pub fn validate(&self, schema: &RelationalSchema) -> Vec<StructureViolation> {
        let mut violations = Vec::new();
        for name in &self.nodes {
            match schema.column(name) {
                None => violations.push(StructureViolation::UnknownNode { name: name.clone() }),
                Some((_, ColumnSpec::DiscreteFeature { .. })) => {}
                Some(_) => {
                    violations.push(StructureViolation::NotDiscreteFeature { name: name.clone() })
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (p, c) in &self.edges {
            if p == c {
                violations.push(StructureViolation::SelfLoop { name: p.clone() });
            }
            if !seen.insert((p.clone(), c.clone())) {
                violations.push(StructureViolation::DuplicateEdge {
                    parent: p.clone(),
                    child: c.clone(),
                });
            }
        }
        if let Some(cycle) = find_cycle(&self.nodes, &self.edges) {
            violations.push(StructureViolation::Cycle { nodes: cycle });
        }
        violations
    }

    /// Builds the validated structure, taking node order and value domains
    /// from the schema.
    pub fn build(&self, schema: &RelationalSchema) -> Result<PbnStructure, ModelError> {
        if let Some(first) = self.validate(schema).into_iter().next() {
            return Err(ModelError::Invalid(first));
        }
        // Nodes in schema column order, which fixes every downstream
        // tie-break.
        let mut nodes: Vec<StructureNode> = schema
            .columns()
            .iter()
            .filter(|c| self.nodes.iter().any(|n| n == c.name()))
            .map(|c| match c {
                ColumnSpec::DiscreteFeature { name, domain } => StructureNode {
                    feature: name.clone(),
                    values: domain.clone(),
                },
                _ => unreachable!("validation admits only discrete features"),
            })
            .collect();
        nodes.sort_by_key(|n| schema.column(&n.feature).map(|(i, _)| i));

        PbnStructure::from_parts(nodes, &self.edges)
    }
}

/// One node: a feature PRV with its value list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureNode {
    pub feature: String,
    pub values: Vec<String>,
}

/// A validated DAG over feature PRVs with per-node value lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PbnStructure {
    nodes: Vec<StructureNode>,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl PbnStructure {
    /// Builds a structure from explicit nodes and named edges, without a
    /// schema. Node order is taken as given; edges must form a DAG.
    pub fn from_parts(
        nodes: Vec<StructureNode>,
        named_edges: &[(String, String)],
    ) -> Result<Self, ModelError> {
        let mut seen = std::collections::HashSet::new();
        for n in &nodes {
            if !seen.insert(n.feature.clone()) {
                return Err(ModelError::Invalid(StructureViolation::DuplicateNode {
                    name: n.feature.clone(),
                }));
            }
        }
        let index = |name: &str| {
            nodes.iter().position(|n| n.feature == name).ok_or_else(|| {
                ModelError::Invalid(StructureViolation::UnknownNode {
                    name: name.to_string(),
                })
            })
        };
        let mut edges = Vec::with_capacity(named_edges.len());
        for (p, c) in named_edges {
            if p == c {
                return Err(ModelError::Invalid(StructureViolation::SelfLoop {
                    name: p.clone(),
                }));
            }
            let edge = (index(p)?, index(c)?);
            if edges.contains(&edge) {
                return Err(ModelError::Invalid(StructureViolation::DuplicateEdge {
                    parent: p.clone(),
                    child: c.clone(),
                }));
            }
            edges.push(edge);
        }
        edges.sort_unstable();
        let mut parents = vec![Vec::new(); nodes.len()];
        for &(p, c) in &edges {
            parents[c].push(p);
        }
        let topo = topological_order(nodes.len(), &edges).ok_or_else(|| {
            ModelError::Invalid(StructureViolation::Cycle {
                nodes: nodes.iter().map(|n| n.feature.clone()).collect(),
            })
        })?;
        Ok(PbnStructure {
            nodes,
            edges,
            parents,
            topo,
        })
    }

    /// Structure over every discrete feature of the schema, with the given
    /// named edges.
    pub fn from_schema(
        schema: &RelationalSchema,
        edges: &[(&str, &str)],
    ) -> Result<Self, ModelError> {
        let nodes = schema
            .features()
            .filter(|c| matches!(c, ColumnSpec::DiscreteFeature { .. }))
            .map(|c| c.name().to_string())
            .collect();
        let edges = edges
            .iter()
            .map(|(p, c)| (p.to_string(), c.to_string()))
            .collect();
        StructureSpec::new(nodes, edges).build(schema)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[StructureNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &StructureNode {
        &self.nodes[index]
    }

    pub fn node_index(&self, feature: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.feature == feature)
    }

    /// Parent node indices, ascending.
    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|&(p, c)| {
            (
                self.nodes[p].feature.as_str(),
                self.nodes[c].feature.as_str(),
            )
        })
    }

    /// Node indices in a topological order of the DAG.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn value_index(&self, node: usize, value: &str) -> Option<u32> {
        self.nodes[node]
            .values
            .iter()
            .position(|v| v == value)
            .map(|i| i as u32)
    }

    /// Canonical structure-file rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {}\n", n.feature));
        }
        for (p, c) in self.edges() {
            out.push_str(&format!("{p} -> {c}\n"));
        }
        out
    }
}

fn topological_order(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    for &(_, c) in edges {
        indegree[c] += 1;
    }
    // BTreeSet keeps the order deterministic: smallest ready node first.
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&next) = ready.iter().next() {
        ready.remove(&next);
        order.push(next);
        for &(p, c) in edges {
            if p == next {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

fn find_cycle(nodes: &[String], edges: &[(String, String)]) -> Option<Vec<String>> {
    let index = |name: &str| nodes.iter().position(|n| n == name);
    let idx_edges: Vec<(usize, usize)> = edges
        .iter()
        .filter_map(|(p, c)| Some((index(p)?, index(c)?)))
        .collect();
    if topological_order(nodes.len(), &idx_edges).is_some() {
        return None;
    }
    // Report the nodes still carrying in-degree after peeling.
    let mut indegree = vec![0usize; nodes.len()];
    for &(_, c) in &idx_edges {
        indegree[c] += 1;
    }
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..nodes.len() {
            if indegree[i] == 0 {
                for &(p, c) in &idx_edges {
                    if p == i && indegree[c] > 0 {
                        indegree[c] -= 1;
                        changed = true;
                    }
                }
                indegree[i] = usize::MAX; // peeled
            }
        }
    }
    let stuck: Vec<String> = (0..nodes.len())
        .filter(|&i| indegree[i] != usize::MAX && indegree[i] > 0)
        .map(|i| nodes[i].clone())
        .collect();
    Some(stuck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::RelationalSchema;

    fn schema() -> RelationalSchema {
        RelationalSchema::parse(
            "column TeamId\nrole object-variable\n\n\
             column passEff\nrole feature\nkind discrete\ndomain hi lo\n\n\
             column shotEff\nrole feature\nkind discrete\ndomain hi lo\n\n\
             column Result\nrole feature\nkind discrete\ndomain win loss tie\n",
        )
        .unwrap()
    }

    #[test]
    fn collider_structure_is_valid() {
        let spec = StructureSpec::parse("shotEff -> Result\npassEff -> Result\n").unwrap();
        assert!(spec.validate(&schema()).is_empty());
        let built = spec.build(&schema()).unwrap();
        assert_eq!(built.num_nodes(), 3);
        let result = built.node_index("Result").unwrap();
        assert_eq!(built.parents(result).len(), 2);
        // Nodes follow schema column order.
        assert_eq!(built.node(0).feature, "passEff");
    }

    #[test]
    fn two_cycle_is_reported() {
        let spec = StructureSpec::parse("passEff -> shotEff\nshotEff -> passEff\n").unwrap();
        let violations = spec.validate(&schema());
        assert!(violations
            .iter()
            .any(|v| matches!(v, StructureViolation::Cycle { .. })));
    }

    #[test]
    fn unknown_node_is_reported() {
        let spec = StructureSpec::parse("Foo -> Result\n").unwrap();
        let violations = spec.validate(&schema());
        assert!(violations
            .iter()
            .any(|v| matches!(v, StructureViolation::UnknownNode { name } if name == "Foo")));
    }

    #[test]
    fn self_loop_and_duplicate_edge_reported() {
        let spec =
            StructureSpec::parse("passEff -> passEff\nshotEff -> Result\nshotEff -> Result\n")
                .unwrap();
        let violations = spec.validate(&schema());
        assert!(violations
            .iter()
            .any(|v| matches!(v, StructureViolation::SelfLoop { .. })));
        assert!(violations
            .iter()
            .any(|v| matches!(v, StructureViolation::DuplicateEdge { .. })));
    }

    #[test]
    fn isolated_node_lines_join_the_node_set() {
        let spec = StructureSpec::parse("node passEff\nshotEff -> Result\n").unwrap();
        let built = spec.build(&schema()).unwrap();
        assert_eq!(built.num_nodes(), 3);
        let pass = built.node_index("passEff").unwrap();
        assert!(built.parents(pass).is_empty());
    }

    #[test]
    fn structure_text_round_trips() {
        let built =
            PbnStructure::from_schema(&schema(), &[("passEff", "Result"), ("shotEff", "Result")])
                .unwrap();
        let text = built.to_text();
        let again = StructureSpec::parse(&text)
            .unwrap()
            .build(&schema())
            .unwrap();
        assert_eq!(again, built);
        assert_eq!(again.to_text(), text);
    }

    #[test]
    fn topological_order_respects_edges() {
        let built =
            PbnStructure::from_schema(&schema(), &[("passEff", "shotEff"), ("shotEff", "Result")])
                .unwrap();
        let order = built.topological_order();
        let pos = |f: &str| {
            order
                .iter()
                .position(|&i| built.node(i).feature == f)
                .unwrap()
        };
        assert!(pos("passEff") < pos("shotEff"));
        assert!(pos("shotEff") < pos("Result"));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let spec = StructureSpec::parse("# class model\n\nshotEff -> Result\n# done\n").unwrap();
        assert_eq!(spec.edges.len(), 1);
    }
}
