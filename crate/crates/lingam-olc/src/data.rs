use crate::error::{Error, Result};

/// One observed variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("column {label} has non-finite values")));
        }
        Ok(Series { label, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Column-labelled sample matrix, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    labels: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(labels: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != columns.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} columns",
                labels.len(),
                columns.len()
            )));
        }
        if let Some(first) = columns.first() {
            let n = first.len();
            for (l, c) in labels.iter().zip(&columns) {
                if c.len() != n {
                    return Err(Error::Shape(format!("column {l} has {} rows, expected {n}", c.len())));
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Shape(format!("column {l} has non-finite values")));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in &labels {
            if !seen.insert(l) {
                return Err(Error::Shape(format!("duplicate column label {l}")));
            }
        }
        Ok(Dataset { labels, columns })
    }

    pub fn from_series(series: Vec<Series>) -> Result<Self> {
        let (labels, columns) = series.into_iter().map(|s| (s.label, s.values)).unzip();
        Dataset::new(labels, columns)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn n_samples(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn by_label(&self, label: &str) -> Result<&[f64]> {
        self.index_of(label)
            .map(|i| self.column(i))
            .ok_or_else(|| Error::LabelMismatch(format!("no column named {label}")))
    }

    pub fn series(&self, i: usize) -> Series {
        Series { label: self.labels[i].clone(), values: self.columns[i].clone() }
    }
}
