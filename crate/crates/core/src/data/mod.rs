//! Datasets: synthetic generators with known noise, CSV ingestion, seeded
//! splits and train-only standardization.

mod csv_source;
mod generators;
mod standardize;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub use csv_source::{load_csv, CsvSchema, TargetColumns};
pub use generators::{
    gen_blobs, gen_heteroscedastic, heteroscedastic_mean, heteroscedastic_noise_std,
    HETERO_X_RANGE,
};
pub use standardize::{standardize_splits, Standardizer};

/// Where a dataset came from; embedded in every dataset document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    /// `x ~ U[-4, 4]`, `y = sin(2x) + 0.3x + ε`, `ε ~ N(0, (0.05 + 0.2|x|)²)`.
    Heteroscedastic { n: usize, seed: u64 },
    /// `K` unit-variance isotropic clusters centred on a circle of radius `separation`.
    Blobs {
        n: usize,
        classes: usize,
        separation: f64,
        seed: u64,
    },
    Csv { path: String, schema: CsvSchema },
    /// A subset of another dataset.
    Split {
        parent: Box<Provenance>,
        part: String,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum Targets {
    /// `N × output_dims` real targets.
    Values(Matrix),
    /// Class index per row.
    Classes { labels: Vec<usize>, num_classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(m) => m.rows(),
            Targets::Classes { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Values(m) => Targets::Values(select_rows(m, rows)),
            Targets::Classes {
                labels,
                num_classes,
            } => Targets::Classes {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                num_classes: *num_classes,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Targets,
    pub provenance: Provenance,
    /// Set once the dataset has been standardized; maps back to original units.
    #[serde(default)]
    pub standardization: Option<Standardizer>,
}

fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.cols(), |i, j| m[(rows[i], j)])
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Targets, provenance: Provenance) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::shape("dataset rows", inputs.rows(), targets.len()));
        }
        if let Targets::Classes {
            labels,
            num_classes,
        } = &targets
        {
            if let Some(bad) = labels.iter().find(|&&l| l >= *num_classes) {
                return Err(Error::invalid(
                    "class label",
                    format!("{bad} with {num_classes} classes"),
                ));
            }
        }
        Ok(Self {
            inputs,
            targets,
            provenance,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Target dimensions (regression) or class count (classification).
    pub fn outputs(&self) -> usize {
        match &self.targets {
            Targets::Values(m) => m.cols(),
            Targets::Classes { num_classes, .. } => *num_classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.targets, Targets::Classes { .. })
    }

    pub fn subset(&self, rows: &[usize], part: &str, seed: u64) -> Dataset {
        Dataset {
            inputs: select_rows(&self.inputs, rows),
            targets: self.targets.select(rows),
            provenance: Provenance::Split {
                parent: Box::new(self.provenance.clone()),
                part: part.to_string(),
                seed,
            },
            standardization: self.standardization.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serialization is infallible")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ds: Dataset = serde_json::from_str(&text)
            .map_err(|e| Error::invalid("dataset document", e.to_string()))?;
        Dataset::new(ds.inputs, ds.targets, ds.provenance).map(|mut d| {
            d.standardization = ds.standardization;
            d
        })
    }

    /// Comma-separated export: `x0..x{d-1}` then `y0..` or `label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = (0..self.input_dim()).map(|j| format!("x{j}")).collect();
        match &self.targets {
            Targets::Values(m) => header.extend((0..m.cols()).map(|j| format!("y{j}"))),
            Targets::Classes { .. } => header.push("label".into()),
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let mut cells: Vec<String> = self.inputs.row(i).iter().map(f64::to_string).collect();
            match &self.targets {
                Targets::Values(m) => cells.extend(m.row(i).iter().map(f64::to_string)),
                Targets::Classes { labels, .. } => cells.push(labels[i].to_string()),
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Disjoint, exhaustive seeded split into train / validation / test.
pub fn split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid("split fractions", format!("{fractions:?} must lie in [0, 1]")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split fractions", format!("{fractions:?} sum to {total}, not 1")));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::new(seed, 0x5EED_5917).shuffle(&mut order);
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((
        dataset.subset(train, "train", seed),
        dataset.subset(val, "val", seed),
        dataset.subset(test, "test", seed),
    ))
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.96, 0.02, 0.02];
