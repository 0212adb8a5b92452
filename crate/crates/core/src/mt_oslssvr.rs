//! Multi-task online sparse LSSVR.
//!
//! The multi-task kernel `K((x, s), (x', t)) = (x·x') A⁻¹[s, t]` is the inner
//! product of stacked inputs mapped by `A⁻¹ ⊗ I_d` into the space with inner
//! product `⟨u, v⟩ = uᵀ (A ⊗ I_d) v`. Running a sparse LSSVR recursion with
//! this kernel solves the same graph-regularized problem as the stacked WRLS,
//! in the dual.
//!
//! Sparsification follows the approximate-linear-dependency test: a sample
//! joins the dictionary only when its feature image lies farther than `ν`
//! (squared distance) from the span of the current atoms. Every other sample
//! is expressed through its projection coefficients `a` and still enters the
//! compressed normal equations. Writing `Aₙ` for the n×m matrix of those
//! coefficients (an indicator row for each atom's own sample), the state
//! tracks
//!
//! ```text
//! Q = (AₙᵀAₙ + λ K_D⁻¹)⁻¹,   ψ = Aₙᵀ y,   u = Q ψ,   α = K_D⁻¹ u
//! ```
//!
//! so that `α = (AₙᵀAₙ K_D + λ I)⁻¹ Aₙᵀ y`. When every sample is an atom this
//! is exactly `(K + λ I)⁻¹ y`, and in general `α = Aₙᵀ (K̃ + λI)⁻¹ y` for the
//! compressed kernel matrix `K̃ = Aₙ K_D Aₙᵀ`. Both updates (absorbing a
//! sample, growing the dictionary) cost `O(m²)` plus `m + 1` kernel
//! evaluations of cost `O(d)`.

use std::cell::Cell;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::task_graph::TaskGraph;

/// Default maximum number of dictionary atoms.
pub const DEFAULT_DICTIONARY_CAP: usize = 512;

#[derive(Debug, Clone)]
pub struct MtKernel {
    a_inv: DMatrix<f64>,
}

impl MtKernel {
    /// Requires a symmetric task graph, so that the kernel is symmetric.
    pub fn new(graph: &TaskGraph) -> Result<Self> {
        if !graph.is_symmetric() {
            return Err(Error::invalid(
                "the multi-task kernel needs a symmetric similarity matrix",
            ));
        }
        Ok(Self {
            a_inv: graph.interaction_inv().clone(),
        })
    }

    pub fn tasks(&self) -> usize {
        self.a_inv.nrows()
    }

    /// Coupling factor `A⁻¹[s, t]`.
    pub fn coupling(&self, s: usize, t: usize) -> f64 {
        self.a_inv[(s, t)]
    }

    pub fn eval(&self, x: &[f64], s: usize, x2: &[f64], t: usize) -> Result<f64> {
        let tasks = self.tasks();
        if s >= tasks || t >= tasks {
            return Err(Error::invalid(format!(
                "task pair ({s}, {t}) out of range for {tasks} tasks"
            )));
        }
        if x.len() != x2.len() {
            return Err(Error::invalid("kernel inputs differ in length"));
        }
        Ok(self.eval_unchecked(x, s, x2, t))
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], s: usize, x2: &[f64], t: usize) -> f64 {
        let dot: f64 = x.iter().zip(x2).map(|(a, b)| a * b).sum();
        dot * self.a_inv[(s, t)]
    }
}

/// `(x·x2) · A⁻¹[s, t]`, evaluated in `O(d)`.
pub fn mt_kernel_eval(x: &[f64], s: usize, x2: &[f64], t: usize, graph: &TaskGraph) -> Result<f64> {
    let tasks = graph.tasks();
    if s >= tasks || t >= tasks {
        return Err(Error::invalid(format!(
            "task pair ({s}, {t}) out of range for {tasks} tasks"
        )));
    }
    if x.len() != x2.len() {
        return Err(Error::invalid("kernel inputs differ in length"));
    }
    let dot: f64 = x.iter().zip(x2).map(|(a, b)| a * b).sum();
    Ok(dot * graph.interaction_inv()[(s, t)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub x: Vec<f64>,
    pub task: usize,
}

/// Result of the approximate-linear-dependency test for one sample.
#[derive(Debug, Clone)]
pub struct AldOutcome {
    /// Squared residual of the best reconstruction from the atoms, `≥ 0`.
    pub delta: f64,
    /// Reconstruction coefficients `a = K_D⁻¹ k`.
    pub coeffs: DVector<f64>,
    /// Kernel values between the atoms and the sample.
    pub kvec: DVector<f64>,
    /// Kernel value of the sample with itself.
    pub self_k: f64,
}

#[derive(Debug, Clone)]
pub struct KernelDictionary {
    atoms: Vec<Atom>,
    k: DMatrix<f64>,
    k_inv: DMatrix<f64>,
    nu: f64,
    capacity: usize,
}

impl KernelDictionary {
    pub fn new(nu: f64, capacity: usize) -> Result<Self> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::invalid(format!("sparsity threshold must be >= 0, got {nu}")));
        }
        if capacity == 0 {
            return Err(Error::invalid("dictionary capacity must be positive"));
        }
        Ok(Self {
            atoms: Vec::new(),
            k: DMatrix::zeros(0, 0),
            k_inv: DMatrix::zeros(0, 0),
            nu,
            capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn kernel_matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn kernel_inverse(&self) -> &DMatrix<f64> {
        &self.k_inv
    }

    fn kernel_vector(&self, kernel: &MtKernel, x: &[f64], task: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.atoms.len(),
            self.atoms
                .iter()
                .map(|a| kernel.eval_unchecked(&a.x, a.task, x, task)),
        )
    }

    fn ald_from_kvec(&self, kvec: DVector<f64>, self_k: f64) -> AldOutcome {
        if self.atoms.is_empty() {
            return AldOutcome {
                delta: self_k.max(0.0),
                coeffs: DVector::zeros(0),
                kvec,
                self_k,
            };
        }
        let coeffs = &self.k_inv * &kvec;
        let delta = (self_k - kvec.dot(&coeffs)).max(0.0);
        AldOutcome {
            delta,
            coeffs,
            kvec,
            self_k,
        }
    }

    /// ALD test of `(x, task)` against the current atoms.
    pub fn ald_test(&self, kernel: &MtKernel, x: &[f64], task: usize) -> Result<AldOutcome> {
        if task >= kernel.tasks() {
            return Err(Error::invalid(format!("task {task} out of range")));
        }
        if let Some(a) = self.atoms.first() {
            if a.x.len() != x.len() {
                return Err(Error::invalid("input dimension differs from the dictionary's"));
            }
        }
        let kvec = self.kernel_vector(kernel, x, task);
        let self_k = kernel.eval_unchecked(x, task, x, task);
        Ok(self.ald_from_kvec(kvec, self_k))
    }

    /// Appends an atom, extending `K_D⁻¹` through its Schur complement
    /// `delta`.
    fn admit(&mut self, atom: Atom, ald: &AldOutcome) -> Result<()> {
        if self.atoms.len() >= self.capacity {
            return Err(Error::CapacityExceeded(format!(
                "dictionary is full ({} atoms); raise nu or the capacity",
                self.capacity
            )));
        }
        let delta = ald.delta;
        if !(delta > 0.0) {
            return Err(Error::NumericalBreakdown(
                "non-positive Schur complement while growing the kernel inverse; increase nu or lambda"
                    .into(),
            ));
        }
        let m = self.atoms.len();
        let a = &ald.coeffs;
        let mut k_inv = DMatrix::zeros(m + 1, m + 1);
        if m > 0 {
            let mut top = self.k_inv.clone();
            top.ger(1.0 / delta, a, a, 1.0);
            k_inv.view_mut((0, 0), (m, m)).copy_from(&top);
            let col = a * (-1.0 / delta);
            k_inv.view_mut((0, m), (m, 1)).copy_from(&col);
            k_inv.view_mut((m, 0), (1, m)).copy_from(&col.transpose());
        }
        k_inv[(m, m)] = 1.0 / delta;

        let mut k = DMatrix::zeros(m + 1, m + 1);
        k.view_mut((0, 0), (m, m)).copy_from(&self.k);
        for i in 0..m {
            k[(i, m)] = ald.kvec[i];
            k[(m, i)] = ald.kvec[i];
        }
        k[(m, m)] = ald.self_k;

        self.k = k;
        self.k_inv = k_inv;
        self.atoms.push(atom);
        Ok(())
    }
}

/// Dual state of the sparse recursion.
#[derive(Debug, Clone)]
pub struct DualState {
    kernel: MtKernel,
    dict: KernelDictionary,
    lambda: f64,
    q: DMatrix<f64>,
    psi: DVector<f64>,
    u: DVector<f64>,
    alpha: DVector<f64>,
    samples: u64,
    kernel_evals: Cell<u64>,
    matrix_touches: u64,
}

/// Whether the last step grew the dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Admitted,
    Absorbed,
}

impl DualState {
    pub fn new(graph: &TaskGraph, nu: f64) -> Result<Self> {
        Self::with_capacity(graph, nu, DEFAULT_DICTIONARY_CAP)
    }

    pub fn with_capacity(graph: &TaskGraph, nu: f64, capacity: usize) -> Result<Self> {
        let lambda = graph.lambda();
        if !(lambda >= 0.0) {
            return Err(Error::invalid("lambda must be >= 0"));
        }
        Ok(Self {
            kernel: MtKernel::new(graph)?,
            dict: KernelDictionary::new(nu, capacity)?,
            lambda,
            q: DMatrix::zeros(0, 0),
            psi: DVector::zeros(0),
            u: DVector::zeros(0),
            alpha: DVector::zeros(0),
            samples: 0,
            kernel_evals: Cell::new(0),
            matrix_touches: 0,
        })
    }

    pub fn kernel(&self) -> &MtKernel {
        &self.kernel
    }

    pub fn dictionary(&self) -> &KernelDictionary {
        &self.dict
    }

    /// Dual coefficients over the dictionary atoms.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples
    }

    /// Total kernel evaluations so far, each of cost `O(d)`.
    pub fn kernel_evaluations(&self) -> u64 {
        self.kernel_evals.get()
    }

    /// Matrix entries written by the `O(m²)` updates so far.
    pub fn matrix_touches(&self) -> u64 {
        self.matrix_touches
    }

    fn check(&self, task: usize, x: &[f64]) -> Result<()> {
        if task >= self.kernel.tasks() {
            return Err(Error::invalid(format!(
                "task {task} out of range for {} tasks",
                self.kernel.tasks()
            )));
        }
        if let Some(a) = self.dict.atoms.first() {
            if a.x.len() != x.len() {
                return Err(Error::invalid(format!(
                    "input has length {}, expected {}",
                    x.len(),
                    a.x.len()
                )));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite input"));
        }
        Ok(())
    }

    /// `Σ_m α_m K(atom_m, (x, task))`; zero for an empty dictionary.
    pub fn predict(&self, x: &[f64], task: usize) -> Result<f64> {
        self.check(task, x)?;
        let kvec = self.dict.kernel_vector(&self.kernel, x, task);
        self.kernel_evals.set(self.kernel_evals.get() + kvec.len() as u64);
        Ok(kvec.dot(&self.alpha))
    }

    /// Predicts from the current `α`, then trains on `(x, task, y)`.
    pub fn step(&mut self, x: &[f64], task: usize, y: f64) -> Result<f64> {
        self.check(task, x)?;
        if !y.is_finite() {
            return Err(Error::invalid("non-finite target"));
        }
        let kvec = self.dict.kernel_vector(&self.kernel, x, task);
        let self_k = self.kernel.eval_unchecked(x, task, x, task);
        self.kernel_evals
            .set(self.kernel_evals.get() + kvec.len() as u64 + 1);
        let prediction = kvec.dot(&self.alpha);
        let ald = self.dict.ald_from_kvec(kvec, self_k);
        self.absorb(x, task, y, ald)?;
        Ok(prediction)
    }

    /// Trains without emitting a prediction.
    pub fn learn(&mut self, x: &[f64], task: usize, y: f64) -> Result<StepKind> {
        self.check(task, x)?;
        if !y.is_finite() {
            return Err(Error::invalid("non-finite target"));
        }
        let ald = self.dict.ald_test(&self.kernel, x, task)?;
        self.kernel_evals
            .set(self.kernel_evals.get() + ald.kvec.len() as u64 + 1);
        self.absorb(x, task, y, ald)
    }

    fn absorb(&mut self, x: &[f64], task: usize, y: f64, ald: AldOutcome) -> Result<StepKind> {
        let m = self.dict.len();
        let kind = if ald.delta > self.dict.nu {
            self.grow(x, task, y, ald)?;
            StepKind::Admitted
        } else {
            if m > 0 {
                // Sherman–Morrison on Q⁻¹ += a aᵀ.
                let a = &ald.coeffs;
                let qa = &self.q * a;
                let denom = 1.0 + a.dot(&qa);
                if !(denom > 0.0) {
                    return Err(Error::NumericalBreakdown(format!(
                        "rank-one update denominator {denom}; increase nu or lambda"
                    )));
                }
                self.q.ger(-1.0 / denom, &qa, &qa, 1.0);
                linalg::symmetrize(&mut self.q);
                self.psi.axpy(y, a, 1.0);
                self.matrix_touches += (m * m) as u64;
            }
            StepKind::Absorbed
        };
        self.refresh()?;
        self.samples += 1;
        Ok(kind)
    }

    fn grow(&mut self, x: &[f64], task: usize, y: f64, ald: AldOutcome) -> Result<()> {
        let m = self.dict.len();
        let delta = ald.delta;
        let r = self.lambda / delta;
        let a = ald.coeffs.clone();
        self.dict.admit(
            Atom {
                x: x.to_vec(),
                task,
            },
            &ald,
        )?;

        // Q⁻¹ gains λ K_D⁻¹'s new terms:
        //   [[Q⁻¹ + r a aᵀ, −r a], [−r aᵀ, 1 + r]],  r = λ / δ.
        let mut q1 = self.q.clone();
        if m > 0 && r > 0.0 {
            let qa = &q1 * &a;
            let denom = 1.0 + r * a.dot(&qa);
            q1.ger(-r / denom, &qa, &qa, 1.0);
        }
        let q1b = &q1 * &a * (-r);
        let b_q1b = -r * a.dot(&q1b);
        let schur = 1.0 + r - b_q1b;
        if !(schur > 0.0) || !schur.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "non-positive Schur complement {schur} in the dual update; increase nu or lambda"
            )));
        }
        let mut q = DMatrix::zeros(m + 1, m + 1);
        if m > 0 {
            let mut top = q1;
            top.ger(1.0 / schur, &q1b, &q1b, 1.0);
            q.view_mut((0, 0), (m, m)).copy_from(&top);
            let col = &q1b * (-1.0 / schur);
            q.view_mut((0, m), (m, 1)).copy_from(&col);
            q.view_mut((m, 0), (1, m)).copy_from(&col.transpose());
        }
        q[(m, m)] = 1.0 / schur;
        linalg::symmetrize(&mut q);
        self.q = q;

        let mut psi = DVector::zeros(m + 1);
        psi.rows_mut(0, m).copy_from(&self.psi);
        psi[m] = y;
        self.psi = psi;
        self.matrix_touches += ((m + 1) * (m + 1)) as u64;
        Ok(())
    }

    fn refresh(&mut self) -> Result<()> {
        self.u = &self.q * &self.psi;
        self.alpha = self.dict.kernel_inverse() * &self.u;
        let m = self.dict.len() as u64;
        self.matrix_touches += 2 * m * m;
        if self.alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown(
                "dual coefficients became non-finite; increase nu or lambda".into(),
            ));
        }
        Ok(())
    }

    /// CSV snapshot: `atom,task,x1..xd,alpha` with a header row.
    pub fn write_dictionary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dict.atoms.first().map_or(0, |a| a.x.len());
        let mut header = vec!["atom".to_string(), "task".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.push("alpha".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, atom) in self.dict.atoms.iter().enumerate() {
            let mut row = vec![i.to_string(), atom.task.to_string()];
            row.extend(atom.x.iter().map(|v| format!("{v}")));
            row.push(format!("{}", self.alpha[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `(K + λ I)⁻¹ y` by dense solve.
pub fn lssvr_batch_oracle(k: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !k.is_square() || k.nrows() != y.len() {
        return Err(Error::invalid("kernel matrix and targets disagree in size"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    let n = k.nrows();
    let sys = k + DMatrix::<f64>::identity(n, n) * lambda;
    linalg::solve(&sys, y)
}

/// Full multi-task kernel matrix over `(task, x)` samples.
pub fn kernel_matrix(kernel: &MtKernel, samples: &[(usize, Vec<f64>)]) -> DMatrix<f64> {
    let n = samples.len();
    DMatrix::from_fn(n, n, |i, j| {
        kernel.eval_unchecked(&samples[i].1, samples[i].0, &samples[j].1, samples[j].0)
    })
}
