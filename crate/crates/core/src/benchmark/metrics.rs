use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub relrmse: f64,
    pub relmae: f64,
}

fn rmse_mae(pred: &[f64], actual: &[f64]) -> (f64, f64) {
    let n = pred.len() as f64;
    let (mut sq, mut ab) = (0.0, 0.0);
    for (p, a) in pred.iter().zip(actual) {
        let e = a - p;
        sq += e * e;
        ab += e.abs();
    }
    ((sq / n).sqrt(), ab / n)
}

/// Errors of `predictions` against `actuals`, and their ratios to the
/// errors of `persistence` on the same points.
pub fn metrics(predictions: &[f64], actuals: &[f64], persistence: &[f64]) -> Result<Metrics> {
    let n = actuals.len();
    if n == 0 || predictions.len() != n || persistence.len() != n {
        return Err(Error::invalid(format!(
            "metric inputs need equal non-zero lengths, got {}/{}/{}",
            predictions.len(),
            n,
            persistence.len()
        )));
    }
    let (rmse, mae) = rmse_mae(predictions, actuals);
    let (p_rmse, p_mae) = rmse_mae(persistence, actuals);
    if p_rmse == 0.0 || p_mae == 0.0 {
        return Err(Error::DivisionByZero(
            "persistence forecast has zero error on this segment".into(),
        ));
    }
    Ok(Metrics {
        rmse,
        mae,
        relrmse: rmse / p_rmse,
        relmae: mae / p_mae,
    })
}

/// Column-wise mean of a set of metric records.
pub fn mean_metrics(items: &[Metrics]) -> Metrics {
    let n = items.len() as f64;
    let sum = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
    Metrics {
        rmse: sum(|m| m.rmse),
        mae: sum(|m| m.mae),
        relrmse: sum(|m| m.relrmse),
        relmae: sum(|m| m.relmae),
    }
}
