//! Versioned on-disk model format: intercept, penalty, convergence
//! metadata, and one step function per feature, as human-inspectable JSON.

use crate::errors::{CliError, CliResult};
use flam_core::glm::LossKind;
use flam_core::StepFunction;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureModel {
    pub name: String,
    #[serde(flatten)]
    pub step: StepFunction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub loss: LossKind,
    pub response: String,
    pub theta0: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub features: Vec<FeatureModel>,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::data(format!("cannot serialize model: {e}")))?;
        std::fs::write(path, json + "\n")
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> CliResult<ModelFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{} is not valid JSON: {e}", path.display())))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| {
                CliError::data(format!("{} has no format_version field", path.display()))
            })?;
        if version != FORMAT_VERSION as u64 {
            return Err(CliError::data(format!(
                "{}: unsupported model format_version {version} (this build reads version {FORMAT_VERSION})",
                path.display()
            )));
        }
        serde_json::from_value(value)
            .map_err(|e| CliError::data(format!("{}: malformed model: {e}", path.display())))
    }

    /// Additive predictor at one covariate row (model feature order).
    pub fn predict_eta(&self, row: &[f64]) -> f64 {
        let mut eta = self.theta0;
        for (f, &x) in self.features.iter().zip(row) {
            eta += f.step.evaluate(x);
        }
        eta
    }
}
