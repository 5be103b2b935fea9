//! Glue between predictors, datasets and calibration reports. Predictions
//! and targets are mapped back to original units before scoring.

use crate::calibration::{CalibrationReport, ZGrid};
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::inference::{predict_rows, MethodSpec, Prediction};
use crate::network::Model;
use crate::numerics::RngStream;

/// Scores predictions made in the dataset's (possibly standardized) units.
pub fn report_for(method: &str, preds: &[Prediction], data: &Dataset, grid: &ZGrid) -> Result<CalibrationReport> {
    match &data.targets {
        Targets::Values(y) => match &data.standardization {
            Some(s) => {
                let preds: Vec<Prediction> = preds.iter().map(|p| s.unstandardize(p)).collect();
                CalibrationReport::regression(method, &preds, &s.unstandardize_targets(y), grid)
            }
            None => CalibrationReport::regression(method, preds, y, grid),
        },
        Targets::Classes { labels, .. } => CalibrationReport::classification(method, preds, labels),
    }
}

pub fn evaluate_method(
    method: MethodSpec,
    models: &[Model],
    data: &Dataset,
    grid: &ZGrid,
    rng: &RngStream,
) -> Result<CalibrationReport> {
    let preds = predict_rows(method, models, &data.inputs, rng)?;
    report_for(&method.to_string(), &preds, data, grid)
}

pub fn evaluate_gp(gp: &GpModel, data: &Dataset, grid: &ZGrid) -> Result<CalibrationReport> {
    if data.is_classification() {
        return Err(Error::invalid("gp", "GP classification is not supported"));
    }
    let preds = (0..data.len())
        .map(|i| gp.predict(data.inputs.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut report = report_for("gp", &preds, data, grid)?;
    report
        .notes
        .push(format!("exact GP fitted on {} training points", gp.len()));
    Ok(report)
}
