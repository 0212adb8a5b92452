//! Multi-task WRLS on the stacked parameter space.
//!
//! All task parameter vectors are concatenated into one vector of length
//! `d·T`, and a sample of task `t` becomes a stacked input that is zero
//! outside block `t`. With `P(0) = λ⁻¹ (A⁻¹ ⊗ I_d)` and `w(0) = 0`, the
//! plain WRLS recursion on the stacked inputs reproduces, at σ = 1, the
//! closed-form minimizer `(XᵀX + λ A ⊗ I_d)⁻¹ Xᵀ y` after every sample.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg;
use crate::task_graph::TaskGraph;
use crate::wrls::WrlsState;

/// Largest stacked dimension `d·T` accepted by default.
pub const DEFAULT_STACKED_CAP: usize = 2000;

/// A task-tagged input together with its one-block stacked view.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedInput<'a> {
    pub task: usize,
    pub x: &'a [f64],
}

impl<'a> StackedInput<'a> {
    pub fn new(task: usize, x: &'a [f64]) -> Self {
        Self { task, x }
    }

    pub fn offset(&self) -> usize {
        self.task * self.x.len()
    }

    /// Dense length-`d·T` vector with `x` in block `task`.
    pub fn stacked(&self, tasks: usize) -> DVector<f64> {
        let d = self.x.len();
        let mut v = DVector::zeros(d * tasks);
        v.rows_mut(self.offset(), d).copy_from_slice(self.x);
        v
    }
}

#[derive(Debug, Clone)]
pub struct MtWrlsModel {
    graph: TaskGraph,
    d: usize,
    core: WrlsState,
}

impl MtWrlsModel {
    pub fn new(graph: TaskGraph, d: usize, sigma: f64) -> Result<Self> {
        Self::with_capacity(graph, d, sigma, DEFAULT_STACKED_CAP)
    }

    pub fn with_capacity(graph: TaskGraph, d: usize, sigma: f64, cap: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        let lambda = graph.lambda();
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be > 0 for the stacked initialization, got {lambda}"
            )));
        }
        let dim = d * graph.tasks();
        if dim > cap {
            return Err(Error::CapacityExceeded(format!(
                "stacked dimension {dim} exceeds cap {cap}"
            )));
        }
        let p0 = linalg::kron_identity(graph.interaction_inv(), d) / lambda;
        let core = WrlsState::general(p0, DVector::zeros(dim), sigma)?;
        Ok(Self { graph, d, core })
    }

    pub fn graph(&self) -> &TaskGraph {
        &self.graph
    }

    pub fn tasks(&self) -> usize {
        self.graph.tasks()
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn state(&self) -> &WrlsState {
        &self.core
    }

    /// Stacked parameter vector `w`.
    pub fn stacked_weights(&self) -> &DVector<f64> {
        self.core.weights()
    }

    /// Block `task` of the stacked weights.
    pub fn task_weights(&self, task: usize) -> DVector<f64> {
        self.core.weights().rows(task * self.d, self.d).into_owned()
    }

    fn check(&self, task: usize, x: &[f64]) -> Result<()> {
        if task >= self.tasks() {
            return Err(Error::invalid(format!(
                "task {task} out of range for {} tasks",
                self.tasks()
            )));
        }
        if x.len() != self.d {
            return Err(Error::invalid(format!(
                "input has length {}, expected {}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn predict(&self, task: usize, x: &[f64]) -> Result<f64> {
        self.check(task, x)?;
        Ok(self.core.predict_block(task * self.d, x))
    }

    /// Predicts with `w_task(i−1)`, then runs one WRLS update on the stacked
    /// input.
    pub fn step(&mut self, task: usize, x: &[f64], y: f64) -> Result<f64> {
        self.check(task, x)?;
        self.core.step_block(task * self.d, x, y)
    }
}

/// Dense solve of `(XᵀX + λ A ⊗ I_d) w = Xᵀ y` on the stacked design built
/// from `(task, x, y)` samples.
pub fn mt_batch_oracle(samples: &[(usize, Vec<f64>, f64)], graph: &TaskGraph) -> Result<DVector<f64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("oracle needs at least one sample"))?;
    let d = first.1.len();
    let t = graph.tasks();
    let dim = d * t;
    let mut lhs = linalg::kron_identity(graph.interaction(), d) * graph.lambda();
    let mut rhs = DVector::zeros(dim);
    for (task, x, y) in samples {
        if *task >= t || x.len() != d {
            return Err(Error::invalid("sample does not match the graph or input dimension"));
        }
        let xs = StackedInput::new(*task, x).stacked(t);
        lhs.ger(1.0, &xs, &xs, 1.0);
        rhs.axpy(*y, &xs, 1.0);
    }
    linalg::solve(&lhs, &rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use crate::task_graph::SimilarityMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(sims: SimilarityMatrix, gamma: f64, lambda: f64) -> TaskGraph {
        TaskGraph::new(sims, gamma, lambda).unwrap()
    }

    #[test]
    fn stacked_view_has_one_block() {
        let x = [1.0, 2.0];
        let s = StackedInput::new(1, &x).stacked(3);
        assert_eq!(s.as_slice(), &[0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn single_task_reduces_to_wrls() {
        let g = graph(SimilarityMatrix::edgeless(1), 0.5, 2.0);
        let mut mt = MtWrlsModel::new(g, 2, 0.9).unwrap();
        assert!((mt.state().p() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        let mut st = WrlsState::identity(2, 1.0, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let y = rng.random_range(-1.0..1.0);
            let a = mt.step(0, &x, y).unwrap();
            let b = st.step(&DVector::from_column_slice(&x), y).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn initial_p_is_scaled_kronecker() {
        let s = SimilarityMatrix::uniform(2, 0.5).unwrap();
        let m = MtWrlsModel::new(graph(s.clone(), 0.1, 1.0), 1, 1.0).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[60.0, 50.0, 50.0, 60.0]) / 11.0;
        assert!((m.state().p() - &expect).amax() < 1e-12);

        let m = MtWrlsModel::new(graph(s.clone(), 0.1, 10.0), 1, 1.0).unwrap();
        assert!((m.state().p() - &expect * 0.1).amax() < 1e-12);

        let m = MtWrlsModel::new(graph(s, 0.1, 1.0), 3, 1.0).unwrap();
        let p = m.state().p();
        for bi in 0..2 {
            for bj in 0..2 {
                let block = p.view((3 * bi, 3 * bj), (3, 3));
                let diff = block - DMatrix::<f64>::identity(3, 3) * expect[(bi, bj)];
                assert!(diff.amax() < 1e-12);
            }
        }
        assert_eq!(m.stacked_weights(), &DVector::zeros(6));
    }

    #[test]
    fn rejects_bad_configuration() {
        let g = graph(SimilarityMatrix::edgeless(2), 1.0, 0.0);
        assert!(matches!(MtWrlsModel::new(g, 2, 1.0), Err(Error::InvalidInput(_))));
        let g = graph(SimilarityMatrix::edgeless(2), 1.0, 1.0);
        assert!(matches!(
            MtWrlsModel::with_capacity(g.clone(), 3, 1.0, 5),
            Err(Error::CapacityExceeded(_))
        ));
        let mut m = MtWrlsModel::new(g, 2, 1.0).unwrap();
        assert!(m.step(2, &[1.0, 0.0], 1.0).is_err());
        assert!(m.step(0, &[1.0], 1.0).is_err());
    }

    #[test]
    fn identical_streams_on_fully_similar_tasks_stay_equal() {
        let g = graph(SimilarityMatrix::uniform(2, 1.0).unwrap(), 0.3, 1.0);
        let mut m = MtWrlsModel::new(g, 3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = rng.random_range(-1.0..1.0);
            m.step(0, &x, y).unwrap();
            m.step(1, &x, y).unwrap();
            // After each round both tasks saw the same data.
            assert!((m.task_weights(0) - m.task_weights(1)).amax() < 1e-10);
        }
    }

    #[test]
    fn infinite_shrinkage_predicts_zero() {
        let g = graph(SimilarityMatrix::edgeless(2), 1.0, 1e10);
        let mut m = MtWrlsModel::new(g, 2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..50 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let p = m.step(i % 2, &x, 5.0).unwrap();
            assert!(p.abs() < 1e-7);
        }
        assert!(m.stacked_weights().amax() < 1e-7);
    }

    #[test]
    fn edgeless_oracle_decouples_into_ridge() {
        let g = graph(SimilarityMatrix::edgeless(2), 0.5, 2.0);
        let samples = vec![
            (0, vec![1.0, 0.0], 1.0),
            (0, vec![0.0, 2.0], -1.0),
            (1, vec![1.0, 1.0], 3.0),
        ];
        let w = mt_batch_oracle(&samples, &g).unwrap();
        // Task 0: (XᵀX + I) w = Xᵀy with ridge λγ = 1.
        let w0 = DVector::from_vec(vec![1.0 / 2.0, -2.0 / 5.0]);
        assert!((w.rows(0, 2) - w0).amax() < 1e-14);
        // Task 1: (x xᵀ + I) w = 3x → w = 3x / (1 + |x|²).
        assert!((w.rows(2, 2) - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn two_task_hand_solve() {
        // d = 1, sim = 0.5 both ways, γ = 0.1, λ = 1:
        // [[1 + 0.6, -0.5], [-0.5, 4 + 0.6]] w = [1, 2·(-1)].
        let g = graph(SimilarityMatrix::uniform(2, 0.5).unwrap(), 0.1, 1.0);
        let samples = vec![(0, vec![1.0], 1.0), (1, vec![2.0], -1.0)];
        let w = mt_batch_oracle(&samples, &g).unwrap();
        let det = 1.6 * 4.6 - 0.25;
        let w0 = (4.6 * 1.0 + 0.5 * -2.0) / det;
        let w1 = (0.5 * 1.0 + 1.6 * -2.0) / det;
        assert!((w[0] - w0).abs() < 1e-14);
        assert!((w[1] - w1).abs() < 1e-14);
    }

    #[test]
    fn recursion_is_exact_for_asymmetric_graphs() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 1)] = 0.2;
        m[(1, 0)] = 0.4;
        m[(2, 1)] = 0.7;
        let g = graph(SimilarityMatrix::new(m).unwrap(), 1.0, 0.5);
        let mut model = MtWrlsModel::new(g.clone(), 2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut samples = Vec::new();
        for i in 0..30 {
            let task = i % 3;
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let y = rng.random_range(-1.0..1.0);
            model.step(task, &x, y).unwrap();
            samples.push((task, x, y));
            let w = mt_batch_oracle(&samples, &g).unwrap();
            assert!((model.stacked_weights() - w).amax() < 1e-9);
        }
    }
}
