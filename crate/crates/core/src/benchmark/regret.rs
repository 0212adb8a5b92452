//! Regret of an online parameter sequence against the best fixed
//! parameters in hindsight.
//!
//! At step `n` the loss is the prefix objective
//! `J_n(w) = (1/n)[Σ_{i≤n} (y_i − x_iᵀ w_{t_i})² + λ wᵀ(A ⊗ I_d) w]`, evaluated
//! at the learner's parameters after step `n` and at the batch minimizer of
//! the same prefix. An exact recursive learner has zero regret.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::kron_identity;
use crate::mt_wrls::mt_batch_oracle;
use crate::task_graph::TaskGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub cumulative: Vec<f64>,
    /// `cumulative[n] / (n + 1)`.
    pub average: Vec<f64>,
}

pub fn regret_curve(step_losses: &[f64], oracle_losses: &[f64]) -> Result<RegretCurve> {
    if step_losses.len() != oracle_losses.len() {
        return Err(Error::invalid(format!(
            "loss streams differ in length: {} vs {}",
            step_losses.len(),
            oracle_losses.len()
        )));
    }
    let mut acc = 0.0;
    let cumulative: Vec<f64> = step_losses
        .iter()
        .zip(oracle_losses)
        .map(|(a, b)| {
            acc += a - b;
            acc
        })
        .collect();
    let average = cumulative.iter().enumerate().map(|(i, r)| r / (i + 1) as f64).collect();
    Ok(RegretCurve { cumulative, average })
}

/// `J_n` at stacked weights `w` over `samples` (the prefix).
pub fn prefix_objective(samples: &[(usize, Vec<f64>, f64)], graph: &TaskGraph, w: &DVector<f64>) -> f64 {
    let d = w.len() / graph.tasks();
    let mut loss = 0.0;
    for (t, x, y) in samples {
        let p: f64 = x.iter().enumerate().map(|(k, v)| v * w[t * d + k]).sum();
        loss += (y - p).powi(2);
    }
    let reg = w.dot(&(kron_identity(graph.interaction(), d) * w));
    (loss + graph.lambda() * reg) / samples.len() as f64
}

/// Runs `step` over the stream; it must absorb one sample and return the
/// learner's stacked weights afterwards. Returns the learner and oracle
/// loss sequences for [`regret_curve`].
pub fn prefix_losses<F>(
    samples: &[(usize, Vec<f64>, f64)],
    graph: &TaskGraph,
    mut step: F,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(&(usize, Vec<f64>, f64)) -> Result<DVector<f64>>,
{
    let mut learner = Vec::with_capacity(samples.len());
    let mut oracle = Vec::with_capacity(samples.len());
    for n in 1..=samples.len() {
        let prefix = &samples[..n];
        let w = step(&samples[n - 1]).map_err(|e| e.at_step(n - 1))?;
        let w_star = mt_batch_oracle(prefix, graph)?;
        learner.push(prefix_objective(prefix, graph, &w));
        oracle.push(prefix_objective(prefix, graph, &w_star));
    }
    Ok((learner, oracle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mt_wrls::MtWrlsModel;
    use crate::task_graph::SimilarityMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_streams_have_zero_regret() {
        let c = regret_curve(&[1.0, 2.0, 0.5], &[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(c.cumulative, vec![0.0; 3]);
        assert_eq!(c.average, vec![0.0; 3]);
        assert!(regret_curve(&[1.0], &[]).is_err());
    }

    #[test]
    fn averages_divide_by_step_count() {
        let c = regret_curve(&[3.0, 3.0], &[1.0, 2.0]).unwrap();
        assert_eq!(c.cumulative, vec![2.0, 3.0]);
        assert_eq!(c.average, vec![2.0, 1.5]);
    }

    #[test]
    fn oracle_is_the_prefix_minimizer() {
        let g = TaskGraph::new(SimilarityMatrix::uniform(2, 0.7).unwrap(), 0.5, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<_> = (0..20)
            .map(|i| (i % 2, vec![rng.random_range(-1.0..1.0), 1.0], rng.random_range(-1.0..1.0)))
            .collect();
        let w = mt_batch_oracle(&samples, &g).unwrap();
        let base = prefix_objective(&samples, &g, &w);
        for k in 0..4 {
            let mut v = w.clone();
            v[k] += 1e-3;
            assert!(prefix_objective(&samples, &g, &v) > base);
        }
    }

    #[test]
    fn exact_learner_has_no_regret() {
        let g = TaskGraph::new(SimilarityMatrix::uniform(3, 0.4).unwrap(), 0.5, 1.0).unwrap();
        let mut m = MtWrlsModel::new(g.clone(), 2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<_> = (0..30)
            .map(|_| {
                let t = rng.random_range(0..3);
                (t, vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], rng.random_range(-1.0..1.0))
            })
            .collect();
        let (l, o) = prefix_losses(&samples, &g, |(t, x, y)| {
            m.step(*t, x, *y)?;
            Ok(m.stacked_weights().clone())
        })
        .unwrap();
        let c = regret_curve(&l, &o).unwrap();
        assert!(c.cumulative.iter().all(|r| r.abs() < 1e-9));
    }
}
