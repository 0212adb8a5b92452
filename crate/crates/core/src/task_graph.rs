//! Task-relationship structure: pairwise similarities and the interaction
//! matrix `A` that couples the per-task parameter blocks.
//!
//! `A` has `γ + Σ_j sim(t, j)` on its diagonal and `−sim(t, j)` off the
//! diagonal. The stacked regularizer is `λ (A ⊗ I_d)`, so both the primal
//! recursion (through `P(0)`) and the dual recursion (through the kernel) are
//! driven by `A⁻¹`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// T×T matrix of task similarities in `[0, 1]` with a zero diagonal.
/// Entry `(t, j)` is `sim(t, j)`; a positive entry puts `j` in the
/// neighbourhood of `t`. Asymmetric matrices are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    entries: DMatrix<f64>,
}

impl SimilarityMatrix {
    /// Wraps a user-provided matrix after validating range and diagonal.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::invalid("similarity matrix must be square and non-empty"));
        }
        for i in 0..entries.nrows() {
            for j in 0..entries.ncols() {
                let v = entries[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!(
                        "similarity ({i},{j}) = {v} outside [0, 1]"
                    )));
                }
                if i == j && v != 0.0 {
                    return Err(Error::invalid(format!("diagonal entry {i} must be 0, got {v}")));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Graph without edges.
    pub fn edgeless(tasks: usize) -> Self {
        Self {
            entries: DMatrix::zeros(tasks, tasks),
        }
    }

    /// Every off-diagonal entry set to `value`.
    pub fn uniform(tasks: usize, value: f64) -> Result<Self> {
        let mut m = DMatrix::from_element(tasks, tasks, value);
        m.fill_diagonal(0.0);
        Self::new(m)
    }

    /// Pairwise Spearman similarities, clamped at zero. Pairs whose
    /// correlation is undefined (a constant series) get similarity 0.
    pub fn from_series(series: &[Vec<f64>]) -> Result<Self> {
        let t = series.len();
        let mut m = DMatrix::zeros(t, t);
        for i in 0..t {
            for j in (i + 1)..t {
                let s = match spearman_similarity(&series[i], &series[j]) {
                    Ok(v) => v,
                    Err(Error::UndefinedCorrelation(_)) => 0.0,
                    Err(e) => return Err(e),
                };
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        Self::new(m)
    }

    pub fn tasks(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.entries[(t, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        linalg::max_asymmetry(&self.entries) == 0.0
    }

    /// Neighbourhood `E_t`: tasks with a positive similarity from `t`.
    pub fn neighbours(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.tasks()).filter(move |&j| self.entries[(t, j)] > 0.0)
    }

    /// (min, max) over off-diagonal entries.
    pub fn off_diagonal_range(&self) -> (f64, f64) {
        let t = self.tasks();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..t {
            for j in 0..t {
                if i != j {
                    lo = lo.min(self.entries[(i, j)]);
                    hi = hi.max(self.entries[(i, j)]);
                }
            }
        }
        (lo, hi)
    }

    /// Headerless CSV, T rows by T columns.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                row: r + 1,
                col: 0,
                msg: e.to_string(),
            })?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    cell.parse::<f64>().map_err(|_| Error::Parse {
                        row: r + 1,
                        col: c + 1,
                        msg: format!("not a number: {cell:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let t = rows.len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != t {
                return Err(Error::Parse {
                    row: r + 1,
                    col: row.len(),
                    msg: format!("expected {t} columns"),
                });
            }
        }
        Self::new(DMatrix::from_fn(t, t, |i, j| rows[i][j]))
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        for i in 0..self.tasks() {
            let line = (0..self.tasks())
                .map(|j| format!("{}", self.entries[(i, j)]))
                .collect::<Vec<_>>()
                .join(",");
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }
}

/// Average ranks (1-based), ties share the mean of their positions.
pub(crate) fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation clamped to `[0, 1]`.
pub fn spearman_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(spearman_rho(a, b)?.max(0.0))
}

/// Unclamped Spearman ρ (Pearson correlation of average ranks).
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::invalid("need at least 3 points for a rank correlation"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contain missing or non-finite values"));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Interaction matrix: `γ + Σ_{j∈E_t} sim(t,j)` on the diagonal,
/// `−sim(t,j)` off it. No normalization.
pub fn build_interaction_matrix(sims: &SimilarityMatrix, gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    let t = sims.tasks();
    let mut a = DMatrix::zeros(t, t);
    for i in 0..t {
        let mut diag = gamma;
        for j in sims.neighbours(i) {
            diag += sims.get(i, j);
            a[(i, j)] = -sims.get(i, j);
        }
        a[(i, i)] = diag;
    }
    Ok(a)
}

/// Factorization-based inverse of `A`, with the condition estimate.
pub fn invert_interaction_matrix(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    linalg::inverse(a).map_err(|e| match e {
        Error::SingularMatrix(msg) => Error::SingularMatrix(format!(
            "interaction matrix is singular or ill-conditioned ({msg}); increase gamma"
        )),
        other => other,
    })
}

/// Similarities plus the regularization weights, with `A` and `A⁻¹`
/// precomputed. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskGraph {
    sims: SimilarityMatrix,
    gamma: f64,
    lambda: f64,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    condition: f64,
}

impl TaskGraph {
    pub fn new(sims: SimilarityMatrix, gamma: f64, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        let a = build_interaction_matrix(&sims, gamma)?;
        let (a_inv, condition) = invert_interaction_matrix(&a)?;
        Ok(Self {
            sims,
            gamma,
            lambda,
            a,
            a_inv,
            condition,
        })
    }

    /// Same similarities and γ with a different λ; reuses `A⁻¹`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            lambda,
            ..self.clone()
        })
    }

    pub fn tasks(&self) -> usize {
        self.sims.tasks()
    }

    pub fn similarities(&self) -> &SimilarityMatrix {
        &self.sims
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn interaction(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn interaction_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn is_symmetric(&self) -> bool {
        self.sims.is_symmetric()
    }
}
