use serde::{Deserialize, Serialize};

use crate::autodiff::bce_value;
use crate::error::{contract, Error, Result};
use crate::oracle::{greedy_policy, Action, PolicyTable};

pub const CLASSIFICATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub bce: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// Flat metric record; fields that do not apply to a task are omitted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bce: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub policy_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pearson: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spearman: Option<f64>,
}

impl MetricReport {
    pub fn with_classification(mut self, c: ClassificationReport) -> Self {
        self.bce = Some(c.bce);
        self.accuracy = Some(c.accuracy);
        self
    }

    pub fn with_regression(mut self, r: RegressionReport) -> Self {
        self.mse = Some(r.mse);
        self.mae = Some(r.mae);
        self.r2 = Some(r.r2);
        self
    }

    pub fn with_isomorphism(mut self, iso: super::IsomorphismReport) -> Self {
        self.pearson = Some(iso.pearson);
        self.spearman = Some(iso.spearman);
        self
    }

    fn fields(&self) -> [Option<f64>; 8] {
        [
            self.bce,
            self.accuracy,
            self.mse,
            self.mae,
            self.r2,
            self.policy_accuracy,
            self.pearson,
            self.spearman,
        ]
    }

    fn from_fields(f: [Option<f64>; 8]) -> Self {
        Self {
            bce: f[0],
            accuracy: f[1],
            mse: f[2],
            mae: f[3],
            r2: f[4],
            policy_accuracy: f[5],
            pearson: f[6],
            spearman: f[7],
        }
    }

    /// Field-wise mean over reports; a field is present when every report has it.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        if reports.is_empty() {
            return MetricReport::default();
        }
        let mut out = [None; 8];
        for (k, slot) in out.iter_mut().enumerate() {
            let vals: Option<Vec<f64>> = reports.iter().map(|r| r.fields()[k]).collect();
            *slot = vals.map(|v| v.iter().sum::<f64>() / v.len() as f64);
        }
        Self::from_fields(out)
    }
}

/// Mean clamped BCE and 0.5-threshold accuracy.
pub fn bce_and_accuracy(predictions: &[f64], labels: &[f64]) -> Result<ClassificationReport> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(contract(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= CLASSIFICATION_THRESHOLD) == (y >= CLASSIFICATION_THRESHOLD))
        .count();
    Ok(ClassificationReport {
        bce: bce_value(predictions, labels),
        accuracy: correct as f64 / labels.len() as f64,
    })
}

/// MSE, MAE and `R² = 1 − SSE/SST`.
pub fn regression_report(predictions: &[f64], targets: &[f64]) -> Result<RegressionReport> {
    if predictions.len() != targets.len() || targets.len() < 2 {
        return Err(contract(format!(
            "{} predictions vs {} targets (need ≥ 2)",
            predictions.len(),
            targets.len()
        )));
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let sst: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    if sst == 0.0 {
        return Err(Error::Degenerate("zero target variance: R² undefined".into()));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    let sae: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(RegressionReport {
        mse: sse / n,
        mae: sae / n,
        r2: 1.0 - sse / sst,
    })
}

/// Fraction of non-terminal nodes where the greedy action derived from
/// `predicted_values` matches `oracle`.
pub fn policy_accuracy(predicted_values: &[f64], oracle: &PolicyTable) -> Result<f64> {
    let n = oracle.n;
    if predicted_values.len() != n * n {
        return Err(contract(format!(
            "expected {} predicted values, got {}",
            n * n,
            predicted_values.len()
        )));
    }
    let predicted = greedy_policy(n, predicted_values);
    let mut total = 0;
    let mut hits = 0;
    for (p, o) in predicted.actions.iter().zip(&oracle.actions) {
        if *o == Action::Terminal {
            continue;
        }
        total += 1;
        if p == o {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::Degenerate("no non-terminal nodes".into()));
    }
    Ok(hits as f64 / total as f64)
}
