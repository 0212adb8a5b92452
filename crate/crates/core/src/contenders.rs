//! Comparison baselines: online gradient descent on the graph-regularized
//! objective, and single-task wrappers around the recursive learners.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mt_oslssvr::DualState;
use crate::mt_wrls::MtWrlsModel;
use crate::task_graph::{SimilarityMatrix, TaskGraph};

/// Online gradient descent over the task weight matrix `W` (d×T).
///
/// Each sample of task `t` contributes the instantaneous objective
/// `(y − xᵀw_t)² + λ wᵀ(A ⊗ I_d) w`; only column `t` moves, with step size
/// `η_i = η₀ / √i`.
#[derive(Debug, Clone)]
pub struct MogdState {
    w: DMatrix<f64>,
    eta0: f64,
    steps: u64,
    graph: TaskGraph,
}

impl MogdState {
    pub fn new(graph: TaskGraph, d: usize, eta0: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        if !(eta0 > 0.0) || !eta0.is_finite() {
            return Err(Error::invalid(format!("base step size must be > 0, got {eta0}")));
        }
        Ok(Self {
            w: DMatrix::zeros(d, graph.tasks()),
            eta0,
            steps: 0,
            graph,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn set_weights(&mut self, w: DMatrix<f64>) -> Result<()> {
        if w.shape() != self.w.shape() {
            return Err(Error::invalid("weight matrix shape mismatch"));
        }
        self.w = w;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn graph(&self) -> &TaskGraph {
        &self.graph
    }

    fn check(&self, task: usize, x: &[f64]) -> Result<()> {
        if task >= self.w.ncols() {
            return Err(Error::invalid(format!("task {task} out of range")));
        }
        if x.len() != self.w.nrows() {
            return Err(Error::invalid(format!(
                "input has length {}, expected {}",
                x.len(),
                self.w.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite input"));
        }
        Ok(())
    }

    pub fn predict(&self, task: usize, x: &[f64]) -> Result<f64> {
        self.check(task, x)?;
        Ok(self.w.column(task).iter().zip(x).map(|(a, b)| a * b).sum())
    }

    /// Value of the instantaneous objective at the current weights.
    pub fn objective(&self, task: usize, x: &[f64], y: f64) -> Result<f64> {
        let r = y - self.predict(task, x)?;
        let a = self.graph.interaction();
        let t = self.w.ncols();
        let mut reg = 0.0;
        for s in 0..t {
            for u in 0..t {
                if a[(s, u)] != 0.0 {
                    reg += a[(s, u)] * self.w.column(s).dot(&self.w.column(u));
                }
            }
        }
        Ok(r * r + self.graph.lambda() * reg)
    }

    /// `∇_{w_t}` of the instantaneous objective:
    /// `−2x(y − xᵀw_t) + λ Σ_j (A[t,j] + A[j,t]) w_j`. For symmetric
    /// similarities the coupling part is
    /// `2λ Σ_{j∈E_t}[w_t sim(t,j) − w_j sim(j,t)] + 2λγ w_t`.
    pub fn gradient(&self, task: usize, x: &[f64], y: f64) -> Result<DVector<f64>> {
        let r = y - self.predict(task, x)?;
        let xv = DVector::from_column_slice(x);
        let mut g = xv * (-2.0 * r);
        let a = self.graph.interaction();
        let lambda = self.graph.lambda();
        if lambda != 0.0 {
            for j in 0..self.w.ncols() {
                let c = a[(task, j)] + a[(j, task)];
                if c != 0.0 {
                    g.axpy(lambda * c, &self.w.column(j), 1.0);
                }
            }
        }
        Ok(g)
    }

    pub fn step(&mut self, task: usize, x: &[f64], y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::invalid("non-finite target"));
        }
        let prediction = self.predict(task, x)?;
        let g = self.gradient(task, x, y)?;
        self.steps += 1;
        let eta = self.eta0 / (self.steps as f64).sqrt();
        let mut col = self.w.column_mut(task);
        col.axpy(-eta, &g, 1.0);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown(
                "gradient step diverged; lower the base step size".into(),
            ));
        }
        Ok(prediction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StlMethod {
    Wrls,
    Oslssvr,
}

/// Hyperparameters of the single-task learners, in their own
/// parametrization: WRLS starts from `P0 = λ⁻¹ I`, OSLSSVR uses the plain
/// linear kernel `x·x'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StlParams {
    pub sigma: f64,
    pub lambda: f64,
    pub nu: f64,
}

/// T independent single-task learners, routed by task index.
#[derive(Debug, Clone)]
pub enum StlModel {
    Wrls(Vec<MtWrlsModel>),
    Oslssvr(Vec<DualState>),
}

pub fn stl_wrap(method: StlMethod, tasks: usize, d: usize, params: StlParams) -> Result<StlModel> {
    if tasks == 0 {
        return Err(Error::invalid("need at least one task"));
    }
    let single = TaskGraph::new(SimilarityMatrix::edgeless(1), 1.0, params.lambda)?;
    match method {
        StlMethod::Wrls => (0..tasks)
            .map(|_| MtWrlsModel::new(single.clone(), d, params.sigma))
            .collect::<Result<Vec<_>>>()
            .map(StlModel::Wrls),
        StlMethod::Oslssvr => (0..tasks)
            .map(|_| DualState::new(&single, params.nu))
            .collect::<Result<Vec<_>>>()
            .map(StlModel::Oslssvr),
    }
}

impl StlModel {
    pub fn tasks(&self) -> usize {
        match self {
            StlModel::Wrls(m) => m.len(),
            StlModel::Oslssvr(m) => m.len(),
        }
    }

    fn check(&self, task: usize) -> Result<()> {
        if task >= self.tasks() {
            return Err(Error::invalid(format!("task {task} out of range")));
        }
        Ok(())
    }

    pub fn predict(&self, task: usize, x: &[f64]) -> Result<f64> {
        self.check(task)?;
        match self {
            StlModel::Wrls(m) => m[task].predict(0, x),
            StlModel::Oslssvr(m) => m[task].predict(x, 0),
        }
    }

    pub fn step(&mut self, task: usize, x: &[f64], y: f64) -> Result<f64> {
        self.check(task)?;
        match self {
            StlModel::Wrls(m) => m[task].step(0, x, y),
            StlModel::Oslssvr(m) => m[task].step(x, 0, y),
        }
    }
}
