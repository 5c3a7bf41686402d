//! Label matrices and train/valid/test membership of target nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Split of every target node; the splits are disjoint and cover all targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    splits: Vec<Split>,
}

impl SplitAssignment {
    pub fn new(splits: Vec<Split>) -> Self {
        Self { splits }
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn get(&self, v: usize) -> Split {
        self.splits[v]
    }

    pub fn as_slice(&self) -> &[Split] {
        &self.splits
    }

    pub fn is_train(&self, v: usize) -> bool {
        self.splits[v] == Split::Train
    }

    pub fn nodes(&self, split: Split) -> Vec<usize> {
        (0..self.splits.len()).filter(|&v| self.splits[v] == split).collect()
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        self.nodes(Split::Train)
    }

    /// Validation and test nodes.
    pub fn unlabeled_nodes(&self) -> Vec<usize> {
        (0..self.splits.len()).filter(|&v| !self.is_train(v)).collect()
    }

    pub fn num_train(&self) -> usize {
        self.splits.iter().filter(|&&s| s == Split::Train).count()
    }

    pub fn train_indicator(&self) -> Vec<f64> {
        self.splits
            .iter()
            .map(|&s| if s == Split::Train { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Known class of each target node (including valid/test ground truth).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub classes: Vec<Option<usize>>,
    pub num_classes: usize,
}

impl GroundTruth {
    pub fn new(classes: Vec<Option<usize>>, num_classes: usize) -> Result<Self> {
        if let Some(c) = classes.iter().flatten().find(|&&c| c >= num_classes) {
            return Err(Error::Config(format!("class {c} >= class count {num_classes}")));
        }
        Ok(Self { classes, num_classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// `Y`: one-hot rows for training nodes, zero rows everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: Matrix,
}

impl LabelMatrix {
    pub fn from_truth(truth: &GroundTruth, split: &SplitAssignment) -> Result<Self> {
        if truth.len() != split.len() {
            return Err(Error::Shape(format!(
                "labels cover {} nodes, splits cover {}",
                truth.len(),
                split.len()
            )));
        }
        let mut values = Matrix::zeros(truth.len(), truth.num_classes);
        for v in split.train_nodes() {
            let c = truth.classes[v].ok_or_else(|| Error::Split(format!("training node {v} has no label")))?;
            values.set(v, c, 1.0);
        }
        Ok(Self { values })
    }

    /// Wraps a matrix after checking the one-hot-or-zero invariant.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        for r in 0..values.rows() {
            let row = values.row(r);
            let ones = row.iter().filter(|&&x| x == 1.0).count();
            if row.iter().any(|&x| x != 0.0 && x != 1.0) || ones > 1 {
                return Err(Error::Config(format!("label row {r} is not one-hot or zero")));
            }
        }
        Ok(Self { values })
    }

    pub fn num_nodes(&self) -> usize {
        self.values.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.values.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.values
    }

    /// Copy with row `v` zeroed.
    pub fn with_row_zeroed(&self, v: usize) -> Self {
        let mut values = self.values.clone();
        values.row_mut(v).fill(0.0);
        Self { values }
    }
}

/// `[1_train | Y]`, the label matrix with the train indicator prepended.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedLabelMatrix {
    values: Matrix,
}

impl AugmentedLabelMatrix {
    pub fn new(labels: &LabelMatrix, split: &SplitAssignment) -> Result<Self> {
        let (n, c) = (labels.num_nodes(), labels.num_classes());
        if split.len() != n {
            return Err(Error::Shape(format!("labels have {n} rows, splits {}", split.len())));
        }
        let mut values = Matrix::zeros(n, c + 1);
        for v in 0..n {
            let row = values.row_mut(v);
            row[0] = if split.is_train(v) { 1.0 } else { 0.0 };
            row[1..].copy_from_slice(labels.matrix().row(v));
        }
        Ok(Self { values })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.values
    }

    /// `diag(1 - mask) * Ybar`: rows where `mask` is set are zeroed.
    pub fn masked(&self, mask: &[bool]) -> Matrix {
        let mut out = self.values.clone();
        for (v, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(v).fill(0.0);
            }
        }
        out
    }
}
