use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance, Targets};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Which header columns are features and which are targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub targets: TargetColumns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetColumns {
    /// Real-valued regression targets.
    Values(Vec<String>),
    /// One column of non-negative integer labels `0..num_classes`.
    Class { column: String, num_classes: usize },
}

/// Reads a headed CSV file. Line numbers in errors are 1-based file lines
/// (the header is line 1 unless preceded by `#` comment lines). The result
/// is not standardized.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("unknown column {name:?}")))
    };
    if schema.features.is_empty() {
        return Err(Error::invalid("csv schema", "no feature columns"));
    }
    let feature_idx = schema.features.iter().map(|f| find(f)).collect::<Result<Vec<_>>>()?;
    let (target_idx, classes) = match &schema.targets {
        TargetColumns::Values(cols) if !cols.is_empty() => {
            (cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?, None)
        }
        TargetColumns::Values(_) => return Err(Error::invalid("csv schema", "no target columns")),
        TargetColumns::Class {
            column,
            num_classes,
        } => (vec![find(column)?], Some(*num_classes)),
    };

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} cells, found {}", header.len(), record.len()),
            ));
        }
        let cell = |j: usize| -> Result<f64> {
            let raw = &record[j];
            if raw.is_empty() {
                return Err(parse_err(line, format!("missing value in column {:?}", header[j])));
            }
            let v: f64 = raw.parse().map_err(|_| {
                parse_err(line, format!("non-numeric value {raw:?} in column {:?}", header[j]))
            })?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in column {:?}", header[j])));
            }
            Ok(v)
        };
        for &j in &feature_idx {
            features.push(cell(j)?);
        }
        match classes {
            None => {
                for &j in &target_idx {
                    targets.push(cell(j)?);
                }
            }
            Some(k) => {
                let raw = &record[target_idx[0]];
                let label: usize = raw.parse().map_err(|_| {
                    parse_err(line, format!("class label {raw:?} is not a non-negative integer"))
                })?;
                if label >= k {
                    return Err(parse_err(line, format!("class label {label} >= {k} classes")));
                }
                labels.push(label);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::invalid("csv", format!("{} has no data rows", path.display())));
    }
    let inputs = Matrix::new(rows, feature_idx.len(), features)?;
    let targets = match classes {
        None => Targets::Values(Matrix::new(rows, target_idx.len(), targets)?),
        Some(num_classes) => Targets::Classes {
            labels,
            num_classes,
        },
    };
    Dataset::new(
        inputs,
        targets,
        Provenance::Csv {
            path: path.display().to_string(),
            schema: schema.clone(),
        },
    )
}
