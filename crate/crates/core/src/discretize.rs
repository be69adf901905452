//! Equal-frequency discretization of continuous features.
//!
//! Bin edges are empirical quantiles fitted on the class table once and
//! reused verbatim for every object slice, so object databases stay
//! comparable to the class model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::schema::{ColumnSpec, RelationalSchema};
use crate::table::{Cell, DataError, GroundingTable};

/// Fitted bin boundaries for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges<R> {
    pub feature: String,
    /// Interior cut points, strictly increasing. A value lands in bin
    /// `#{c : value >= c}`, so `cuts.len() + 1` bins cover the whole line.
    pub cuts: Vec<R>,
    /// Bin labels `bin_0 .. bin_{k-1}`.
    pub labels: Vec<String>,
    pub requested_bins: usize,
    /// True when ties left fewer usable bins than requested.
    pub collapsed: bool,
}

impl<R: Real> BinEdges<R> {
    pub fn bin_of(&self, value: R) -> usize {
        self.cuts.iter().take_while(|&&c| value >= c).count()
    }
}

/// Fits equal-frequency bin edges on one continuous feature.
///
/// Requires `bins >= 2` and a non-empty table. When the data has fewer
/// distinct values than requested bins, the edges collapse to the
/// distinct-value count and `collapsed` is set.
pub fn fit_bins<R: Real>(
    table: &GroundingTable<R>,
    feature: &str,
    bins: usize,
) -> Result<BinEdges<R>, DataError> {
    if table.is_empty() {
        return Err(DataError::EmptyTable);
    }
    if bins < 2 {
        return Err(DataError::InvalidBins {
            feature: feature.to_string(),
            bins,
        });
    }
    let mut values = table.continuous_values(feature)?;
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();

    let two = R::from_f64(2.0).unwrap();
    let mut candidates = Vec::new();
    if n > 1 {
        for i in 1..bins {
            // Split index so the left part holds ~ i*n/bins values.
            let m = ((i * n) as f64 / bins as f64).round() as usize;
            let m = m.clamp(1, n - 1);
            candidates.push((values[m - 1] + values[m]) / two);
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite cuts"));
    candidates.dedup();

    // Drop any cut whose left bin would be empty.
    let mut cuts: Vec<R> = Vec::new();
    let mut lower = values[0]; // first value not yet assigned to a kept bin
    let mut idx = 0usize;
    for c in candidates {
        // Advance to the first value >= c.
        while idx < n && values[idx] < c {
            idx += 1;
        }
        // Keep c only when at least one value lies in [lower, c).
        if idx > 0 && values[idx - 1] >= lower {
            cuts.push(c);
            if idx < n {
                lower = values[idx];
            }
        }
    }

    let k = cuts.len() + 1;
    Ok(BinEdges {
        feature: feature.to_string(),
        cuts,
        labels: (0..k).map(|i| format!("bin_{i}")).collect(),
        requested_bins: bins,
        collapsed: k < bins,
    })
}

/// Relabels one continuous column using already-fitted edges. The result
/// schema declares the feature as discrete over the bin labels.
pub fn apply_bins<R: Real>(
    table: &GroundingTable<R>,
    edges: &BinEdges<R>,
) -> Result<GroundingTable<R>, DataError> {
    let (col, spec) =
        table
            .schema()
            .column(&edges.feature)
            .ok_or_else(|| DataError::UnknownColumn {
                name: edges.feature.clone(),
            })?;
    if !matches!(spec, ColumnSpec::ContinuousFeature { .. }) {
        return Err(DataError::NotContinuous {
            name: edges.feature.clone(),
        });
    }

    let columns: Vec<ColumnSpec> = table
        .schema()
        .columns()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i == col {
                ColumnSpec::DiscreteFeature {
                    name: edges.feature.clone(),
                    domain: edges.labels.clone(),
                }
            } else {
                c.clone()
            }
        })
        .collect();
    let schema = Arc::new(RelationalSchema::new(columns).expect("schema stays valid"));

    let rows = table
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(i, cell)| {
                    if i == col {
                        match cell {
                            Cell::Num(v) => Cell::Label(edges.bin_of(*v) as u32),
                            _ => unreachable!("continuous column holds numeric cells"),
                        }
                    } else {
                        cell.clone()
                    }
                })
                .collect()
        })
        .collect();
    Ok(GroundingTable::with_parts(
        schema,
        rows,
        table.provenance().clone(),
    ))
}

/// Convenience: fit edges on `table` and apply them to it.
pub fn discretize<R: Real>(
    table: &GroundingTable<R>,
    feature: &str,
    bins: usize,
) -> Result<(GroundingTable<R>, BinEdges<R>), DataError> {
    let edges = fit_bins(table, feature, bins)?;
    let binned = apply_bins(table, &edges)?;
    Ok((binned, edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::RelationalSchema;
    use crate::table::ValueAssignment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cont_schema(bins: usize) -> Arc<RelationalSchema> {
        Arc::new(
            RelationalSchema::new(vec![
                ColumnSpec::ObjectVariable { name: "Id".into() },
                ColumnSpec::ContinuousFeature {
                    name: "X".into(),
                    bins,
                },
            ])
            .unwrap(),
        )
    }

    fn value_table(values: &[f64], bins: usize) -> GroundingTable<f64> {
        let rows: Vec<Vec<String>> = values
            .iter()
            .enumerate()
            .map(|(i, v)| vec![format!("o{i}"), format!("{v}")])
            .collect();
        GroundingTable::from_string_rows(cont_schema(bins), &rows).unwrap()
    }

    #[test]
    fn symmetric_split_puts_edge_at_median() {
        let table = value_table(&[0.1, 0.2, 0.3, 0.4], 2);
        let (binned, edges) = discretize(&table, "X", 2).unwrap();
        assert_eq!(edges.cuts, vec![0.25]);
        assert!(!edges.collapsed);
        let lo = binned
            .count(&ValueAssignment::new().with("X", "bin_0"))
            .unwrap();
        let hi = binned
            .count(&ValueAssignment::new().with("X", "bin_1"))
            .unwrap();
        assert_eq!((lo, hi), (2, 2));
    }

    #[test]
    fn all_equal_values_collapse_to_one_bin() {
        let table = value_table(&[5.0, 5.0, 5.0, 5.0], 3);
        let (binned, edges) = fit_bins(&table, "X", 3)
            .map(|e| (apply_bins(&table, &e).unwrap(), e))
            .unwrap();
        assert!(edges.collapsed);
        assert_eq!(edges.labels, vec!["bin_0"]);
        assert_eq!(
            binned
                .count(&ValueAssignment::new().with("X", "bin_0"))
                .unwrap(),
            4
        );
    }

    #[test]
    fn two_distinct_values_collapse_to_two_bins() {
        let table = value_table(&[1.0, 1.0, 1.0, 2.0], 3);
        let edges = fit_bins(&table, "X", 3).unwrap();
        assert!(edges.collapsed);
        assert_eq!(edges.labels.len(), 2);
    }

    #[test]
    fn tied_runs_never_leave_an_empty_bin() {
        let table = value_table(&[1.0, 1.0, 2.0, 2.0, 3.0, 3.0], 4);
        let (binned, edges) = discretize(&table, "X", 4).unwrap();
        assert!(edges.collapsed);
        for label in &edges.labels {
            assert!(
                binned
                    .count(&ValueAssignment::new().with("X", label))
                    .unwrap()
                    > 0,
                "empty bin {label}"
            );
        }
    }

    /// Brute-force quantile check: 760 uniform draws, two bins, each bin
    /// holds 380 rows.
    #[test]
    fn uniform_760_values_split_380_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let values: Vec<f64> = (0..760).map(|_| rng.gen::<f64>()).collect();
        let table = value_table(&values, 2);
        let (binned, edges) = discretize(&table, "X", 2).unwrap();
        assert!(!edges.collapsed);
        let lo = binned
            .count(&ValueAssignment::new().with("X", "bin_0"))
            .unwrap();
        let hi = binned
            .count(&ValueAssignment::new().with("X", "bin_1"))
            .unwrap();
        assert!(lo.abs_diff(380) <= 1 && hi.abs_diff(380) <= 1, "{lo}/{hi}");
        assert_eq!(lo + hi, 760);
    }

    /// Class-fitted edges applied to a fresh slice only ever produce
    /// class-defined labels, even for out-of-range values.
    #[test]
    fn class_edges_cover_object_slices() {
        let class = value_table(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 3);
        let edges = fit_bins(&class, "X", 3).unwrap();
        let object = value_table(&[-10.0, 0.05, 0.35, 99.0], 3);
        let binned = apply_bins(&object, &edges).unwrap();
        let total: usize = edges
            .labels
            .iter()
            .map(|l| binned.count(&ValueAssignment::new().with("X", l)).unwrap())
            .sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn single_row_collapses_to_one_bin() {
        let table = value_table(&[3.5], 2);
        let edges = fit_bins(&table, "X", 2).unwrap();
        assert!(edges.collapsed);
        assert_eq!(edges.labels, vec!["bin_0"]);
        assert_eq!(edges.bin_of(3.5), 0);
    }

    #[test]
    fn empty_table_is_an_error() {
        let table =
            GroundingTable::<f64>::from_string_rows(cont_schema(2), &Vec::<Vec<&str>>::new())
                .unwrap();
        assert!(matches!(
            fit_bins(&table, "X", 2),
            Err(DataError::EmptyTable)
        ));
    }
}
