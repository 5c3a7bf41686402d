use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CsrStructure, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// Each non-empty row sums to one (mean aggregation).
    #[default]
    RowStochastic,
    /// `w(u, v) / sqrt(deg_out(u) * deg_in(v))`.
    Symmetric,
}

impl std::str::FromStr for NormMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "row" | "row-stochastic" => Ok(NormMode::RowStochastic),
            "sym" | "symmetric" => Ok(NormMode::Symmetric),
            other => Err(format!("unknown normalization {other}")),
        }
    }
}

/// Normalized view of one relation; shares the relation's sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub relation: String,
    pub mode: NormMode,
    pub structure: Arc<CsrStructure>,
    pub weights: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn n_rows(&self) -> usize {
        self.structure.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.structure.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.structure.lookup(&self.weights, row, col)
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        self.weights[self.structure.row(row)].iter().sum()
    }
}

/// Degrees are weighted; empty rows stay empty and therefore propagate zero.
pub fn normalize(rel: &Relation, mode: NormMode) -> NormalizedAdjacency {
    let s = &rel.structure;
    let mut out_deg = vec![0.0f64; s.n_rows];
    for (r, d) in out_deg.iter_mut().enumerate() {
        *d = rel.weights[s.row(r)].iter().sum();
    }
    let weights = match mode {
        NormMode::RowStochastic => (0..s.n_rows)
            .flat_map(|r| {
                let d = out_deg[r];
                rel.weights[s.row(r)].iter().map(move |w| w / d)
            })
            .collect(),
        NormMode::Symmetric => {
            let mut in_deg = vec![0.0f64; s.n_cols];
            for (k, &c) in s.indices.iter().enumerate() {
                in_deg[c as usize] += rel.weights[k];
            }
            (0..s.n_rows)
                .flat_map(|r| {
                    let d = out_deg[r];
                    let in_deg = &in_deg;
                    s.row(r)
                        .map(move |k| rel.weights[k] / (d * in_deg[s.indices[k] as usize]).sqrt())
                })
                .collect()
        }
    };
    NormalizedAdjacency {
        relation: rel.name.clone(),
        mode,
        structure: Arc::clone(&rel.structure),
        weights,
    }
}
