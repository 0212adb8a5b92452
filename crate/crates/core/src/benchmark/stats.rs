//! Rank-based comparison of several methods over several datasets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::task_graph::average_ranks;

pub const ALPHA: f64 = 0.05;

/// Critical difference used for the pairwise calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PostHoc {
    /// `z_{1−α/2} · sqrt(k(k+1) / 6b)` on mean ranks.
    #[default]
    RankZ,
    /// `t_{1−α/2,(b−1)(k−1)} · sqrt(2(bA − ΣR_j²) / ((b−1)(k−1)))` on rank
    /// sums, `A` the sum of all squared ranks.
    RankSumT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCall {
    pub a: usize,
    pub b: usize,
    pub rank_sum_diff: f64,
    /// Method with the lower rank sum, when the difference is significant.
    pub winner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub mean_ranks: Vec<f64>,
    pub rank_sums: Vec<f64>,
    pub post_hoc: PostHoc,
    /// On the rank-sum scale for both variants.
    pub critical_difference: f64,
    pub calls: Vec<PairCall>,
    pub victories: Vec<usize>,
    pub defeats: Vec<usize>,
}

/// Friedman chi-square test on a datasets×methods score table (lower is
/// better, ties get average ranks), then pairwise least-significant-difference
/// calls at `α = 0.05`.
pub fn friedman_fisher(table: &DMatrix<f64>) -> Result<FriedmanResult> {
    friedman_with(table, PostHoc::default())
}

pub fn friedman_with(table: &DMatrix<f64>, post_hoc: PostHoc) -> Result<FriedmanResult> {
    let (b, k) = table.shape();
    if b < 2 || k < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 datasets and 2 methods, got {b}x{k}"
        )));
    }
    if table.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("score table has non-finite entries"));
    }
    let (bf, kf) = (b as f64, k as f64);
    let mut rank_sums = vec![0.0; k];
    let mut sum_sq_ranks = 0.0;
    for r in 0..b {
        let row: Vec<f64> = table.row(r).iter().copied().collect();
        for (j, rk) in average_ranks(&row).into_iter().enumerate() {
            rank_sums[j] += rk;
            sum_sq_ranks += rk * rk;
        }
    }
    let ss: f64 = rank_sums.iter().map(|r| r * r).sum();
    let statistic = (12.0 / (bf * kf * (kf + 1.0)) * ss - 3.0 * bf * (kf + 1.0)).max(0.0);
    let chi = ChiSquared::new(kf - 1.0).expect("k >= 2");
    let p_value = chi.sf(statistic);

    let critical_difference = match post_hoc {
        PostHoc::RankZ => {
            let z = Normal::standard().inverse_cdf(1.0 - ALPHA / 2.0);
            z * (kf * (kf + 1.0) / (6.0 * bf)).sqrt() * bf
        }
        PostHoc::RankSumT => {
            let df = (bf - 1.0) * (kf - 1.0);
            let t = StudentsT::new(0.0, 1.0, df).expect("df >= 1").inverse_cdf(1.0 - ALPHA / 2.0);
            let spread = ((2.0 * (bf * sum_sq_ranks - ss)) / df).max(0.0);
            t * spread.sqrt()
        }
    };

    let mut calls = Vec::new();
    let mut victories = vec![0; k];
    let mut defeats = vec![0; k];
    for a in 0..k {
        for c in (a + 1)..k {
            let diff = rank_sums[a] - rank_sums[c];
            let winner = if diff.abs() > critical_difference {
                let (w, l) = if diff < 0.0 { (a, c) } else { (c, a) };
                victories[w] += 1;
                defeats[l] += 1;
                Some(w)
            } else {
                None
            };
            calls.push(PairCall {
                a,
                b: c,
                rank_sum_diff: diff,
                winner,
            });
        }
    }
    Ok(FriedmanResult {
        statistic,
        p_value,
        mean_ranks: rank_sums.iter().map(|r| r / bf).collect(),
        rank_sums,
        post_hoc,
        critical_difference,
        calls,
        victories,
        defeats,
    })
}
