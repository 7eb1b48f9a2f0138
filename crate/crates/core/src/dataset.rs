use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Feature rows paired with integer class labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
}

impl LabeledDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Input(format!(
                "a dataset needs at least 2 classes, got {num_classes}"
            )));
        }
        if features.rows() != labels.len() {
            return Err(Error::Input(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Input(format!(
                "label {l} at row {i} is not below num_classes = {num_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Same labels and split with replaced features (e.g. after projection).
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.num_classes, self.split)
    }
}
