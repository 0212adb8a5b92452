//! Prequential forecasting protocol: difference, embed, split, tune on the
//! training segment, then evaluate a fresh learner on the test segment.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_maps::{ar_embed, ElmMap, Standardizer, DEFAULT_HIDDEN, DEFAULT_LAG};
use crate::learner::{Grids, HyperParams, LearnerContext, Method, OnlineLearner};
use crate::task_graph::SimilarityMatrix;

use super::data::MultiTaskDataset;
use super::metrics::{mean_metrics, metrics, Metrics};

/// Sequential split of the embedded samples: the first `floor(μ·n)` train,
/// the rest test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mu: f64,
}

impl SplitSpec {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::invalid(format!("train fraction must be in (0, 1), got {mu}")));
        }
        Ok(Self { mu })
    }

    /// `floor(μ·n)`, with a relative slack of 1e-12 so that fractions that
    /// are exact in decimal do not lose a sample to binary rounding.
    pub fn train_len(&self, n: usize) -> usize {
        (self.mu * n as f64 * (1.0 + 1e-12)).floor() as usize
    }

    pub fn split(&self, n: usize) -> Result<(usize, usize)> {
        let train = self.train_len(n);
        if train == 0 || train >= n {
            return Err(Error::invalid(format!(
                "split of {n} samples at mu={} leaves an empty segment",
                self.mu
            )));
        }
        Ok((train, n - train))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilaritySource {
    /// Targets of the differenced training segment.
    Differenced,
    /// Raw levels over the same time span.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElmConfig {
    pub hidden: usize,
    pub seed: u64,
    /// Standardize inputs with training statistics before the hidden layer.
    pub standardize: bool,
}

impl Default for ElmConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            seed: 0,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub lag: usize,
    pub mu: f64,
    pub gamma: f64,
    pub similarity: SimilaritySource,
    pub elm: Option<ElmConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lag: DEFAULT_LAG,
            mu: 0.275,
            gamma: 0.1,
            similarity: SimilaritySource::Differenced,
            elm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub task: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

/// Model-ready view of a dataset. Samples are interleaved by time step,
/// tasks in index order within a step.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tasks: usize,
    pub dim: usize,
    pub sims: SimilarityMatrix,
    pub gamma: f64,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub train_steps: usize,
    pub test_steps: usize,
}

impl Prepared {
    pub fn context(&self) -> LearnerContext {
        LearnerContext {
            tasks: self.tasks,
            dim: self.dim,
            sims: self.sims.clone(),
            gamma: self.gamma,
        }
    }
}

pub fn prepare(data: &MultiTaskDataset, cfg: &PipelineConfig) -> Result<Prepared> {
    let split = SplitSpec::new(cfg.mu)?;
    let diff = data.differenced()?;
    if diff.len() < cfg.lag + 2 {
        return Err(Error::invalid(format!(
            "series of {} differenced points too short for lag {}",
            diff.len(),
            cfg.lag
        )));
    }
    let embeds = diff
        .series()
        .iter()
        .map(|s| ar_embed(s, cfg.lag))
        .collect::<Result<Vec<_>>>()?;
    let rows = embeds[0].rows();
    let (n_train, n_test) = split.split(rows)?;

    let sims = match cfg.similarity {
        SimilaritySource::Differenced => {
            let seg: Vec<Vec<f64>> = embeds.iter().map(|e| e.y[..n_train].to_vec()).collect();
            SimilarityMatrix::from_series(&seg)?
        }
        SimilaritySource::Raw => {
            // Raw level at the same time indices as the differenced targets.
            let off = data.len() - diff.len() + cfg.lag;
            let seg: Vec<Vec<f64>> =
                data.series().iter().map(|s| s[off..off + n_train].to_vec()).collect();
            SimilarityMatrix::from_series(&seg)?
        }
    };

    let mut features: Box<dyn Fn(Vec<f64>) -> Result<Vec<f64>>> = Box::new(Ok);
    let mut dim = cfg.lag + 1;
    if let Some(elm) = &cfg.elm {
        let map = ElmMap::new(elm.hidden, dim, elm.seed)?;
        dim = map.output_dim();
        let scaler = if elm.standardize {
            let train_rows: Vec<Vec<f64>> =
                embeds.iter().flat_map(|e| (0..n_train).map(|i| e.row(i))).collect();
            Some(Standardizer::fit(&train_rows)?)
        } else {
            None
        };
        features = Box::new(move |x| match &scaler {
            Some(s) => map.features(&s.apply(&x)),
            None => map.features(&x),
        });
    }

    let mut train = Vec::with_capacity(n_train * data.tasks());
    let mut test = Vec::with_capacity(n_test * data.tasks());
    for i in 0..rows {
        for (task, e) in embeds.iter().enumerate() {
            let s = Sample {
                task,
                x: features(e.row(i))?,
                y: e.y[i],
            };
            if i < n_train {
                train.push(s);
            } else {
                test.push(s);
            }
        }
    }
    Ok(Prepared {
        tasks: data.tasks(),
        dim,
        sims,
        gamma: cfg.gamma,
        train,
        test,
        train_steps: n_train,
        test_steps: n_test,
    })
}

/// Per-task predictions and targets in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub predictions: Vec<Vec<f64>>,
    pub actuals: Vec<Vec<f64>>,
}

impl Trace {
    /// Metrics per task against the no-change forecast, which is zero in
    /// differenced space.
    pub fn metrics(&self) -> Result<Vec<Metrics>> {
        self.predictions
            .iter()
            .zip(&self.actuals)
            .map(|(p, a)| metrics(p, a, &vec![0.0; a.len()]))
            .collect()
    }

    /// Mean over tasks of the per-task RMSE.
    pub fn mean_rmse(&self) -> f64 {
        let per: Vec<f64> = self
            .predictions
            .iter()
            .zip(&self.actuals)
            .map(|(p, a)| {
                let n = a.len().max(1) as f64;
                (p.iter().zip(a).map(|(p, a)| (a - p).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect();
        per.iter().sum::<f64>() / per.len() as f64
    }
}

/// Predict, record, then learn, for every sample in order. Errors carry the
/// index of the failing sample.
pub fn evaluate_online(learner: &mut dyn OnlineLearner, samples: &[Sample], tasks: usize) -> Result<Trace> {
    let mut trace = Trace {
        predictions: vec![Vec::new(); tasks],
        actuals: vec![Vec::new(); tasks],
    };
    for (i, s) in samples.iter().enumerate() {
        if s.task >= tasks {
            return Err(Error::invalid(format!("task {} out of range", s.task)).at_step(i));
        }
        let p = learner.predict(s.task, &s.x).map_err(|e| e.at_step(i))?;
        if !p.is_finite() {
            return Err(Error::NumericalBreakdown("non-finite prediction".into()).at_step(i));
        }
        trace.predictions[s.task].push(p);
        trace.actuals[s.task].push(s.y);
        learner.learn(s.task, &s.x, s.y).map_err(|e| e.at_step(i))?;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub params: HyperParams,
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: HyperParams,
    pub score: f64,
    pub candidates: Vec<CandidateScore>,
}

/// Scores every candidate by prequential mean per-task RMSE on `samples`
/// with a fresh learner; lowest wins, ties go to the earlier candidate.
/// Candidates that fail or produce a non-finite score are skipped.
pub fn grid_search(
    method: &dyn Method,
    ctx: &LearnerContext,
    samples: &[Sample],
    grids: &Grids,
) -> Result<GridOutcome> {
    let cands = method.candidates(grids);
    if cands.is_empty() {
        return Err(Error::invalid(format!("empty grid for {}", method.name())));
    }
    let run = |hp: &HyperParams| -> Result<f64> {
        let mut l = method.build(ctx, hp)?;
        let s = evaluate_online(l.as_mut(), samples, ctx.tasks)?.mean_rmse();
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NumericalBreakdown("non-finite training score".into()))
        }
    };
    let results: Vec<Result<f64>> = cands.par_iter().map(run).collect();
    let mut best: Option<(usize, f64)> = None;
    let mut first_err = None;
    let mut scored = Vec::with_capacity(cands.len());
    for (i, (hp, r)) in cands.iter().zip(results).enumerate() {
        match r {
            Ok(s) => {
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((i, s));
                }
                scored.push(CandidateScore { params: *hp, score: Some(s), error: None });
            }
            Err(e) => {
                scored.push(CandidateScore { params: *hp, score: None, error: Some(e.to_string()) });
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((i, s)) => Ok(GridOutcome { best: cands[i], score: s, candidates: scored }),
        None => Err(Error::AllCandidatesFailed {
            count: cands.len(),
            first: Box::new(first_err.expect("at least one candidate")),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    pub params: HyperParams,
    pub train_score: f64,
    pub per_task: Vec<Metrics>,
    pub mean: Metrics,
    #[serde(skip)]
    pub trace: Option<Trace>,
    /// Wall time; kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

/// Tunes on the training segment, then runs a fresh learner on the test
/// segment.
pub fn run_method(method: &dyn Method, data: &Prepared, grids: &Grids) -> Result<MethodRun> {
    let start = Instant::now();
    let ctx = data.context();
    let tuned = grid_search(method, &ctx, &data.train, grids)?;
    let mut learner = method.build(&ctx, &tuned.best)?;
    let trace = evaluate_online(learner.as_mut(), &data.test, data.tasks)?;
    let per_task = trace.metrics()?;
    Ok(MethodRun {
        method: method.name().to_string(),
        params: tuned.best,
        train_score: tuned.score,
        mean: mean_metrics(&per_task),
        per_task,
        trace: Some(trace),
        seconds: start.elapsed().as_secs_f64(),
    })
}
