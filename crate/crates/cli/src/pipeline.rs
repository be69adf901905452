//! Shared input pipeline: schema, data, discretization, and the class
//! model.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use relx_core::cpt::{fit_parameters, CptSet};
use relx_core::discretize::discretize;
use relx_core::learn::greedy_structure_learn;
use relx_core::schema::{ColumnSpec, RelationalSchema};
use relx_core::structure::StructureSpec;
use relx_core::table::{load_grounding_table, GroundingTable};

use crate::commands::CliError;
use crate::ModelArgs;

/// Everything the model-based commands work from.
pub struct Pipeline {
    /// Table as loaded, continuous columns still raw (for the flattening
    /// baseline).
    pub raw_table: GroundingTable<f64>,
    /// Table with every continuous column discretized.
    pub table: GroundingTable<f64>,
    /// Class parameters (fitted here, or read from a model file).
    pub theta_c: CptSet<f64>,
    /// Object variable under analysis.
    pub variable: String,
    pub alpha: f64,
}

pub fn load(args: &ModelArgs) -> Result<Pipeline, CliError> {
    if let Some(threads) = args.threads {
        // First build wins; later commands in-process share the pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let schema_text = fs::read_to_string(&args.schema)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.schema.display())))?;
    let schema = Arc::new(RelationalSchema::parse(&schema_text)?);

    let data = fs::File::open(&args.data)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.data.display())))?;
    let raw_table = load_grounding_table::<f64, _>(data, Arc::clone(&schema))?;

    // Discretize every continuous column, class-fitted edges only.
    let mut table = raw_table.clone();
    let continuous: Vec<(String, usize)> = schema
        .columns()
        .iter()
        .filter_map(|c| match c {
            ColumnSpec::ContinuousFeature { name, bins } => {
                Some((name.clone(), args.bins.unwrap_or(*bins)))
            }
            _ => None,
        })
        .collect();
    for (feature, bins) in continuous {
        let (binned, edges) = discretize(&table, &feature, bins)?;
        if edges.collapsed {
            eprintln!(
                "relx: warning: {feature} collapsed to {} bins ({} requested)",
                edges.labels.len(),
                edges.requested_bins
            );
        }
        table = binned;
    }

    let theta_c = class_model(args, &table)?;

    let variable = match &args.var {
        Some(v) => v.clone(),
        None => schema
            .object_variables()
            .next()
            .map(|c| c.name().to_string())
            .expect("schema has an object variable"),
    };
    if !schema
        .column(&variable)
        .map(|(_, c)| c.is_object_variable())
        .unwrap_or(false)
    {
        return Err(CliError::Data(format!(
            "{variable:?} is not an object-variable column"
        )));
    }

    Ok(Pipeline {
        raw_table,
        table,
        theta_c,
        variable,
        alpha: args.alpha,
    })
}

fn class_model(args: &ModelArgs, table: &GroundingTable<f64>) -> Result<CptSet<f64>, CliError> {
    if args.learn {
        let structure = Arc::new(greedy_structure_learn(table, args.max_parents)?);
        return Ok(fit_parameters(table, &structure, args.alpha)?);
    }
    let path = args.structure.as_ref().ok_or_else(|| {
        CliError::Usage("either --structure <file> or --learn is required".to_string())
    })?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with("relx-model") {
        // A fitted model written by `relx fit`; reuse its parameters.
        return Ok(CptSet::parse(&text)?);
    }
    let structure = Arc::new(StructureSpec::parse(&text)?.build(table.schema())?);
    Ok(fit_parameters(table, &structure, args.alpha)?)
}

/// Creates the output directory and writes one file into it.
pub fn write_output(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Replaces filesystem-hostile characters in object ids.
pub fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
