//! Runtime method registry. Every forecaster sits behind [`OnlineLearner`];
//! a [`Method`] knows its hyperparameter grid and how to build a fresh
//! learner, and [`MethodRegistry`] maps names to methods.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contenders::{stl_wrap, MogdState, StlMethod, StlModel, StlParams};
use crate::error::{Error, Result};
use crate::mt_oslssvr::DualState;
use crate::mt_wrls::MtWrlsModel;
use crate::task_graph::{SimilarityMatrix, TaskGraph};

/// Predict-then-learn interface shared by all forecasters.
pub trait OnlineLearner: Send {
    fn predict(&mut self, task: usize, x: &[f64]) -> Result<f64>;
    fn learn(&mut self, task: usize, x: &[f64], y: f64) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HyperParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
}

impl HyperParams {
    fn need(v: Option<f64>, name: &str) -> Result<f64> {
        v.ok_or_else(|| Error::invalid(format!("missing hyperparameter {name}")))
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (k, v) in [
            ("sigma", self.sigma),
            ("lambda", self.lambda),
            ("nu", self.nu),
            ("eta0", self.eta0),
        ] {
            if let Some(v) = v {
                parts.push(format!("{k}={v:e}"));
            }
        }
        if parts.is_empty() {
            write!(f, "-")
        } else {
            write!(f, "{}", parts.join(" "))
        }
    }
}

/// Hyperparameter grids searched on the training segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub eta0: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            sigma: vec![0.01, 0.2, 0.4, 0.6, 0.8, 1.0],
            lambda: vec![
                1e-10, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e10,
            ],
            nu: vec![1e-3, 1e-2, 1e-1],
            eta0: vec![1e-4, 1e-3, 1e-2, 1e-1],
        }
    }
}

/// Everything a method needs besides its hyperparameters.
#[derive(Debug, Clone)]
pub struct LearnerContext {
    pub tasks: usize,
    pub dim: usize,
    pub sims: SimilarityMatrix,
    pub gamma: f64,
}

impl LearnerContext {
    fn graph(&self, lambda: f64) -> Result<TaskGraph> {
        if self.sims.tasks() != self.tasks {
            return Err(Error::invalid(format!(
                "similarity matrix has {} tasks, context has {}",
                self.sims.tasks(),
                self.tasks
            )));
        }
        TaskGraph::new(self.sims.clone(), self.gamma, lambda)
    }

    /// The single-task learners have no γ; their λ carries the same
    /// shrinkage as an edgeless graph with the context's γ.
    fn stl_params(&self, hp: &HyperParams) -> Result<StlParams> {
        Ok(StlParams {
            sigma: hp.sigma.unwrap_or(1.0),
            lambda: HyperParams::need(hp.lambda, "lambda")? * self.gamma,
            nu: hp.nu.unwrap_or(0.0) * self.gamma,
        })
    }
}

pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;
    fn candidates(&self, grids: &Grids) -> Vec<HyperParams>;
    fn build(&self, ctx: &LearnerContext, hp: &HyperParams) -> Result<Box<dyn OnlineLearner>>;
}

fn product2(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> HyperParams) -> Vec<HyperParams> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).map(|(x, y)| f(x, y)).collect()
}

impl OnlineLearner for MtWrlsModel {
    fn predict(&mut self, task: usize, x: &[f64]) -> Result<f64> {
        MtWrlsModel::predict(self, task, x)
    }
    fn learn(&mut self, task: usize, x: &[f64], y: f64) -> Result<()> {
        self.step(task, x, y).map(|_| ())
    }
}

impl OnlineLearner for DualState {
    fn predict(&mut self, task: usize, x: &[f64]) -> Result<f64> {
        DualState::predict(self, x, task)
    }
    fn learn(&mut self, task: usize, x: &[f64], y: f64) -> Result<()> {
        DualState::learn(self, x, task, y).map(|_| ())
    }
}

impl OnlineLearner for StlModel {
    fn predict(&mut self, task: usize, x: &[f64]) -> Result<f64> {
        StlModel::predict(self, task, x)
    }
    fn learn(&mut self, task: usize, x: &[f64], y: f64) -> Result<()> {
        self.step(task, x, y).map(|_| ())
    }
}

impl OnlineLearner for MogdState {
    fn predict(&mut self, task: usize, x: &[f64]) -> Result<f64> {
        MogdState::predict(self, task, x)
    }
    fn learn(&mut self, task: usize, x: &[f64], y: f64) -> Result<()> {
        self.step(task, x, y).map(|_| ())
    }
}

pub struct MtWrlsMethod;
pub struct MtOslssvrMethod;
pub struct StlWrlsMethod;
pub struct StlOslssvrMethod;
pub struct MogdMethod;
pub struct PersistenceMethod;

impl Method for MtWrlsMethod {
    fn name(&self) -> &'static str {
        "mt-wrls"
    }
    fn candidates(&self, g: &Grids) -> Vec<HyperParams> {
        product2(&g.sigma, &g.lambda, |s, l| HyperParams {
            sigma: Some(s),
            lambda: Some(l),
            ..Default::default()
        })
    }
    fn build(&self, ctx: &LearnerContext, hp: &HyperParams) -> Result<Box<dyn OnlineLearner>> {
        let graph = ctx.graph(HyperParams::need(hp.lambda, "lambda")?)?;
        let sigma = HyperParams::need(hp.sigma, "sigma")?;
        Ok(Box::new(MtWrlsModel::new(graph, ctx.dim, sigma)?))
    }
}

impl Method for MtOslssvrMethod {
    fn name(&self) -> &'static str {
        "mt-oslssvr"
    }
    fn candidates(&self, g: &Grids) -> Vec<HyperParams> {
        product2(&g.nu, &g.lambda, |n, l| HyperParams {
            nu: Some(n),
            lambda: Some(l),
            ..Default::default()
        })
    }
    fn build(&self, ctx: &LearnerContext, hp: &HyperParams) -> Result<Box<dyn OnlineLearner>> {
        let graph = ctx.graph(HyperParams::need(hp.lambda, "lambda")?)?;
        Ok(Box::new(DualState::new(&graph, HyperParams::need(hp.nu, "nu")?)?))
    }
}

impl Method for StlWrlsMethod {
    fn name(&self) -> &'static str {
        "wrls"
    }
    fn candidates(&self, g: &Grids) -> Vec<HyperParams> {
        MtWrlsMethod.candidates(g)
    }
    fn build(&self, ctx: &LearnerContext, hp: &HyperParams) -> Result<Box<dyn OnlineLearner>> {
        HyperParams::need(hp.sigma, "sigma")?;
        let p = ctx.stl_params(hp)?;
        Ok(Box::new(stl_wrap(StlMethod::Wrls, ctx.tasks, ctx.dim, p)?))
    }
}

impl Method for StlOslssvrMethod {
    fn name(&self) -> &'static str {
        "oslssvr"
    }
    fn candidates(&self, g: &Grids) -> Vec<HyperParams> {
        MtOslssvrMethod.candidates(g)
    }
    fn build(&self, ctx: &LearnerContext, hp: &HyperParams) -> Result<Box<dyn OnlineLearner>> {
        HyperParams::need(hp.nu, "nu")?;
        let p = ctx.stl_params(hp)?;
        Ok(Box::new(stl_wrap(StlMethod::Oslssvr, ctx.tasks, ctx.dim, p)?))
    }
}

impl Method for MogdMethod {
    fn name(&self) -> &'static str {
        "mogd"
    }
    fn candidates(&self, g: &Grids) -> Vec<HyperParams> {
        product2(&g.eta0, &g.lambda, |e, l| HyperParams {
            eta0: Some(e),
            lambda: Some(l),
            ..Default::default()
        })
    }
    fn build(&self, ctx: &LearnerContext, hp: &HyperParams) -> Result<Box<dyn OnlineLearner>> {
        let graph = ctx.graph(HyperParams::need(hp.lambda, "lambda")?)?;
        Ok(Box::new(MogdState::new(graph, ctx.dim, HyperParams::need(hp.eta0, "eta0")?)?))
    }
}

/// Forecasts no change. On a differenced series this is the classic
/// last-value persistence forecast.
#[derive(Debug, Clone, Copy, Default)]
pub struct Persistence;

impl OnlineLearner for Persistence {
    fn predict(&mut self, _task: usize, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
    fn learn(&mut self, _task: usize, _x: &[f64], _y: f64) -> Result<()> {
        Ok(())
    }
}

impl Method for PersistenceMethod {
    fn name(&self) -> &'static str {
        "persistence"
    }
    fn candidates(&self, _g: &Grids) -> Vec<HyperParams> {
        vec![HyperParams::default()]
    }
    fn build(&self, _ctx: &LearnerContext, _hp: &HyperParams) -> Result<Box<dyn OnlineLearner>> {
        Ok(Box::new(Persistence))
    }
}

#[derive(Clone, Default)]
pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Arc<dyn Method>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(MtWrlsMethod));
        r.register(Arc::new(MtOslssvrMethod));
        r.register(Arc::new(StlWrlsMethod));
        r.register(Arc::new(StlOslssvrMethod));
        r.register(Arc::new(MogdMethod));
        r.register(Arc::new(PersistenceMethod));
        r
    }

    /// Replaces any method already registered under the same name.
    pub fn register(&mut self, method: Arc<dyn Method>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Method>> {
        self.methods.get(name).cloned().ok_or_else(|| {
            Error::invalid(format!(
                "unknown method '{name}' (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

/// Wraps a learner and fails if a target is learned before the matching
/// prediction has been made.
pub struct PrequentialSpy<L> {
    inner: L,
    pending: Option<(usize, Vec<f64>)>,
    pub predictions: u64,
    pub updates: u64,
}

impl<L: OnlineLearner> PrequentialSpy<L> {
    pub fn new(inner: L) -> Self {
        Self {
            inner,
            pending: None,
            predictions: 0,
            updates: 0,
        }
    }

    pub fn into_inner(self) -> L {
        self.inner
    }
}

impl<L: OnlineLearner> OnlineLearner for PrequentialSpy<L> {
    fn predict(&mut self, task: usize, x: &[f64]) -> Result<f64> {
        self.predictions += 1;
        self.pending = Some((task, x.to_vec()));
        self.inner.predict(task, x)
    }

    fn learn(&mut self, task: usize, x: &[f64], y: f64) -> Result<()> {
        match self.pending.take() {
            Some((t, ref px)) if t == task && px.as_slice() == x => {}
            _ => {
                return Err(Error::invalid(
                    "target revealed before its prediction was recorded",
                ))
            }
        }
        self.updates += 1;
        self.inner.learn(task, x, y)
    }
}

impl OnlineLearner for Box<dyn OnlineLearner> {
    fn predict(&mut self, task: usize, x: &[f64]) -> Result<f64> {
        self.as_mut().predict(task, x)
    }
    fn learn(&mut self, task: usize, x: &[f64], y: f64) -> Result<()> {
        self.as_mut().learn(task, x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> LearnerContext {
        LearnerContext {
            tasks: 2,
            dim: 3,
            sims: SimilarityMatrix::uniform(2, 0.5).unwrap(),
            gamma: 0.1,
        }
    }

    #[test]
    fn builtin_names() {
        let r = MethodRegistry::builtin();
        assert_eq!(
            r.names(),
            vec!["mogd", "mt-oslssvr", "mt-wrls", "oslssvr", "persistence", "wrls"]
        );
        assert!(r.get("madmm").is_err());
    }

    #[test]
    fn grid_sizes() {
        let g = Grids::default();
        let r = MethodRegistry::builtin();
        assert_eq!(r.get("mt-wrls").unwrap().candidates(&g).len(), 66);
        assert_eq!(r.get("wrls").unwrap().candidates(&g).len(), 66);
        assert_eq!(r.get("mt-oslssvr").unwrap().candidates(&g).len(), 33);
        assert_eq!(r.get("persistence").unwrap().candidates(&g).len(), 1);
    }

    #[test]
    fn every_builtin_builds_from_its_first_candidate() {
        let r = MethodRegistry::builtin();
        let g = Grids::default();
        for name in r.names() {
            let m = r.get(name).unwrap();
            let hp = m.candidates(&g)[0];
            let mut l = m.build(&ctx(), &hp).unwrap();
            let x = [0.1, -0.2, 1.0];
            l.predict(1, &x).unwrap();
            l.learn(1, &x, 0.3).unwrap();
        }
    }

    #[test]
    fn missing_hyperparameter_is_reported() {
        let hp = HyperParams { sigma: Some(1.0), ..Default::default() };
        assert!(MtWrlsMethod.build(&ctx(), &hp).is_err());
    }

    #[test]
    fn spy_rejects_learning_without_prediction() {
        let mut spy = PrequentialSpy::new(Persistence);
        assert!(spy.learn(0, &[1.0], 1.0).is_err());
        spy.predict(0, &[1.0]).unwrap();
        assert!(spy.learn(1, &[1.0], 1.0).is_err());
        spy.predict(0, &[1.0]).unwrap();
        spy.learn(0, &[1.0], 1.0).unwrap();
        assert_eq!((spy.predictions, spy.updates), (2, 1));
    }
}
