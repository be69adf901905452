//! Shared helpers for the acceptance suite: a brute-force oracle for the
//! two-node worked examples and small random-table generators.
//!
//! The oracle enumerates the score formulas directly from raw parameter
//! arrays; it never touches the library's scoring path, so it can serve
//! as an independent cross-check.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use relx_core::schema::RelationalSchema;
use relx_core::structure::PbnStructure;
use relx_core::table::GroundingTable;

/// A two-node binary model F1 -> F2: marginal of F1 plus a conditional
/// row per F1 value. Index order matches the domain order `[0, 1]`.
#[derive(Clone, Copy)]
pub struct TwoNodeModel {
    pub f1: [f64; 2],
    /// `f2_given_f1[a][b]` = P(F2 = b | F1 = a).
    pub f2_given_f1: [[f64; 2]; 2],
}

impl TwoNodeModel {
    pub fn marginal_f2(&self) -> [f64; 2] {
        let mut m = [0.0; 2];
        for (a, &pa) in self.f1.iter().enumerate() {
            for (b, slot) in m.iter_mut().enumerate() {
                *slot += pa * self.f2_given_f1[a][b];
            }
        }
        m
    }
}

/// All six totals, computed by full enumeration of the Table-style
/// per-node formulas with weights taken from the object model's joint.
pub struct OracleScores {
    pub log: f64,
    pub lr: f64,
    pub abs_lr: f64,
    pub fd: f64,
    pub lr_plus: f64,
    pub ld: f64,
}

pub fn two_node_oracle(object: &TwoNodeModel, class: &TwoNodeModel) -> OracleScores {
    let om_f2 = object.marginal_f2();
    let cm_f2 = class.marginal_f2();

    let mut log = 0.0;
    let mut lr = 0.0;
    let mut abs_lr = 0.0;
    let mut fd = 0.0;
    let mut lr_plus = 0.0;
    let mut ld = 0.0;

    // Node F1 (root): the empty parent configuration. Conditionals are
    // the marginals themselves.
    for a in 0..2 {
        let w = object.f1[a];
        if w == 0.0 {
            continue;
        }
        let ratio = (object.f1[a] / class.f1[a]).ln();
        log += -(w * class.f1[a].ln());
        lr += w * ratio;
        abs_lr += w * ratio.abs();
        fd += w * ratio.abs();
        // Root lifts are zero: theta(v | empty) = theta(v).
        lr_plus += w * ratio;
        ld += w * ratio.abs();
    }

    // Node F2: marginal part then the parent-conditional part.
    for b in 0..2 {
        let w: f64 = (0..2)
            .map(|a| object.f1[a] * object.f2_given_f1[a][b])
            .sum();
        if w == 0.0 {
            continue;
        }
        let ratio = (om_f2[b] / cm_f2[b]).ln();
        fd += w * ratio.abs();
        lr_plus += w * ratio;
        ld += w * ratio.abs();
    }
    for a in 0..2 {
        for b in 0..2 {
            let w = object.f1[a] * object.f2_given_f1[a][b];
            if w == 0.0 {
                continue;
            }
            let oc = object.f2_given_f1[a][b];
            let cc = class.f2_given_f1[a][b];
            log += -(w * cc.ln());
            lr += w * (oc / cc).ln();
            abs_lr += w * (oc / cc).ln().abs();
            let lift_o = (oc / om_f2[b]).ln();
            let lift_c = (cc / cm_f2[b]).ln();
            lr_plus += w * (lift_o - lift_c);
            ld += w * (lift_o - lift_c).abs();
        }
    }

    OracleScores {
        log,
        lr,
        abs_lr,
        fd,
        lr_plus,
        ld,
    }
}

/// Binary two-feature schema used by the worked examples.
pub fn two_node_schema() -> Arc<RelationalSchema> {
    Arc::new(
        RelationalSchema::parse(
            "column Id\nrole object-variable\n\n\
             column F1\nrole feature\nkind discrete\ndomain 0 1\n\n\
             column F2\nrole feature\nkind discrete\ndomain 0 1\n",
        )
        .unwrap(),
    )
}

pub fn two_node_structure(schema: &RelationalSchema) -> Arc<PbnStructure> {
    Arc::new(PbnStructure::from_schema(schema, &[("F1", "F2")]).unwrap())
}

/// Builds a table whose empirical frequencies equal the model exactly,
/// by repeating each (f1, f2) combination `weight * scale` times. The
/// scale must make every weight integral.
pub fn exact_table(model: &TwoNodeModel, scale: usize) -> GroundingTable<f64> {
    let schema = two_node_schema();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut row_no = 0;
    for a in 0..2 {
        for b in 0..2 {
            let weight = model.f1[a] * model.f2_given_f1[a][b];
            let copies = (weight * scale as f64).round() as usize;
            assert!(
                ((weight * scale as f64) - copies as f64).abs() < 1e-9,
                "scale {scale} does not make weight {weight} integral"
            );
            for _ in 0..copies {
                rows.push(vec![format!("o{row_no}"), a.to_string(), b.to_string()]);
                row_no += 1;
            }
        }
    }
    GroundingTable::from_string_rows(schema, &rows).unwrap()
}

/// Random discrete schema/structure/table triples for the identity and
/// optimality checks.
pub fn random_shape(rng: &mut ChaCha8Rng) -> (Arc<RelationalSchema>, Arc<PbnStructure>) {
    let n_features = rng.gen_range(2..=3);
    let arities: Vec<usize> = (0..n_features).map(|_| rng.gen_range(2..=3)).collect();
    let mut schema_text = String::from("column Id\nrole object-variable\n");
    for (i, &r) in arities.iter().enumerate() {
        let domain: Vec<String> = (0..r).map(|v| format!("v{v}")).collect();
        schema_text.push_str(&format!(
            "\ncolumn F{i}\nrole feature\nkind discrete\ndomain {}\n",
            domain.join(" ")
        ));
    }
    let schema = Arc::new(RelationalSchema::parse(&schema_text).unwrap());
    let order: Vec<usize> = {
        let mut o: Vec<usize> = (0..n_features).collect();
        for i in (1..o.len()).rev() {
            o.swap(i, rng.gen_range(0..=i));
        }
        o
    };
    let mut edges: Vec<(String, String)> = Vec::new();
    for (pos, &child) in order.iter().enumerate() {
        let mut parents = 0;
        for &parent in order[..pos].iter() {
            if parents < 2 && rng.gen_bool(0.6) {
                edges.push((format!("F{parent}"), format!("F{child}")));
                parents += 1;
            }
        }
    }
    let edge_refs: Vec<(&str, &str)> = edges
        .iter()
        .map(|(p, c)| (p.as_str(), c.as_str()))
        .collect();
    let structure = Arc::new(PbnStructure::from_schema(&schema, &edge_refs).unwrap());
    (schema, structure)
}

pub fn random_rows(
    rng: &mut ChaCha8Rng,
    schema: &Arc<RelationalSchema>,
    min_rows: usize,
) -> GroundingTable<f64> {
    let arities: Vec<usize> = schema
        .features()
        .map(|f| schema.domain(f.name()).unwrap().len())
        .collect();
    let n_rows = rng.gen_range(min_rows..min_rows + 40);
    let rows: Vec<Vec<String>> = (0..n_rows)
        .map(|i| {
            let mut row = vec![format!("o{i}")];
            for &r in &arities {
                row.push(format!("v{}", rng.gen_range(0..r)));
            }
            row
        })
        .collect();
    GroundingTable::from_string_rows(Arc::clone(schema), &rows).unwrap()
}

/// Random distributions keyed by full parent-config enumeration.
pub fn random_node_params(
    rng: &mut ChaCha8Rng,
    structure: &PbnStructure,
) -> Vec<relx_core::cpt::NodeParams<f64>> {
    let arities: Vec<usize> = structure.nodes().iter().map(|n| n.values.len()).collect();
    (0..structure.num_nodes())
        .map(|i| {
            let parent_arities: Vec<usize> =
                structure.parents(i).iter().map(|&p| arities[p]).collect();
            let mut conditionals = BTreeMap::new();
            for config in enumerate(&parent_arities) {
                conditionals.insert(config, random_distribution(rng, arities[i]));
            }
            relx_core::cpt::NodeParams {
                conditionals,
                marginal: Some(random_distribution(rng, arities[i])),
            }
        })
        .collect()
}

pub fn random_distribution(rng: &mut ChaCha8Rng, arity: usize) -> Vec<f64> {
    let mut d: Vec<f64> = (0..arity).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = d.iter().sum();
    for p in &mut d {
        *p /= sum;
    }
    d
}

fn enumerate(arities: &[usize]) -> Vec<Vec<u32>> {
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
