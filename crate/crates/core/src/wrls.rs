//! Exponentially weighted recursive least squares.
//!
//! The state carries `w(n)` and `P(n) = Φ(n)⁻¹` with
//! `Φ(n) = σ Φ(n−1) + x xᵀ`. One step computes, in order, the gain
//! `k = P x / (σ + xᵀ P x)`, the a-priori error `α = y − xᵀ w`, the
//! parameter update `w += α k` and `P = σ⁻¹ (P − k xᵀ P)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WrlsState {
    w: DVector<f64>,
    p: DMatrix<f64>,
    sigma: f64,
    n: u64,
    /// `P` is kept symmetric by averaging with its transpose after each
    /// step. Disabled only for the stacked recursion under an asymmetric
    /// task graph, where `P(0)` itself is not symmetric.
    symmetric: bool,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("forgetting factor must be in (0, 1], got {sigma}")))
    }
}

impl WrlsState {
    /// `P0` must be symmetric positive-definite and `0 < σ ≤ 1`.
    pub fn new(p0: DMatrix<f64>, w0: DVector<f64>, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if p0.nrows() != w0.len() || !p0.is_square() || w0.is_empty() {
            return Err(Error::invalid(format!(
                "P0 is {}x{} but w0 has length {}",
                p0.nrows(),
                p0.ncols(),
                w0.len()
            )));
        }
        if !linalg::is_spd(&p0) {
            return Err(Error::invalid("P0 must be symmetric positive-definite"));
        }
        Ok(Self {
            w: w0,
            p: p0,
            sigma,
            n: 0,
            symmetric: true,
        })
    }

    /// Zero parameters with `P0 = scale · I`.
    pub fn identity(dim: usize, scale: f64, sigma: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(format!("initial P scale must be > 0, got {scale}")));
        }
        Self::new(DMatrix::identity(dim, dim) * scale, DVector::zeros(dim), sigma)
    }

    /// Accepts a nonsingular, possibly asymmetric `P0`.
    pub(crate) fn general(p0: DMatrix<f64>, w0: DVector<f64>, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        let symmetric = linalg::is_symmetric(&p0, 1e-12);
        if symmetric {
            return Self::new(p0, w0, sigma);
        }
        Ok(Self {
            w: w0,
            p: p0,
            sigma,
            n: 0,
            symmetric: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn steps(&self) -> u64 {
        self.n
    }

    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.w)
    }

    /// Prediction over the block `offset..offset + x.len()`; the rest of the
    /// stacked input is zero.
    pub fn predict_block(&self, offset: usize, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, v)| v * self.w[offset + i])
            .sum()
    }

    /// Predicts with the current weights, then absorbs `(x, y)`.
    pub fn step(&mut self, x: &DVector<f64>, y: f64) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "regressor has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite regressor or target"));
        }
        let prediction = self.predict(x);
        let px = &self.p * x;
        let xp = if self.symmetric {
            px.clone()
        } else {
            self.p.tr_mul(x)
        };
        let xpx = x.dot(&px);
        self.apply(px, xp, xpx, y - prediction)?;
        Ok(prediction)
    }

    /// Same as [`step`](Self::step) for an input that is zero outside one
    /// block. `P x` only touches the block's columns, so the gain costs
    /// `O(D·d)`; the rank-one update of `P` stays `O(D²)`.
    pub fn step_block(&mut self, offset: usize, x: &[f64], y: f64) -> Result<f64> {
        let d = x.len();
        if offset + d > self.dim() {
            return Err(Error::invalid(format!(
                "block {}..{} exceeds dimension {}",
                offset,
                offset + d,
                self.dim()
            )));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite regressor or target"));
        }
        let prediction = self.predict_block(offset, x);
        let xb = DVector::from_column_slice(x);
        let px = self.p.columns(offset, d) * &xb;
        let xp = if self.symmetric {
            px.clone()
        } else {
            self.p.rows(offset, d).tr_mul(&xb)
        };
        let xpx = xb.dot(&px.rows(offset, d));
        self.apply(px, xp, xpx, y - prediction)?;
        Ok(prediction)
    }

    fn apply(
        &mut self,
        px: DVector<f64>,
        xp: DVector<f64>,
        xpx: f64,
        a_priori: f64,
    ) -> Result<()> {
        let denom = self.sigma + xpx;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "gain denominator sigma + x'Px = {denom}"
            )));
        }
        let gain = px / denom;
        self.w.axpy(a_priori, &gain, 1.0);
        let inv_sigma = 1.0 / self.sigma;
        self.p.ger(-inv_sigma, &gain, &xp, inv_sigma);
        if self.symmetric {
            linalg::symmetrize(&mut self.p);
        }
        if self.w.iter().any(|v| !v.is_finite()) || self.p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown(
                "parameters or inverse correlation matrix became non-finite".into(),
            ));
        }
        self.n += 1;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("bad WRLS snapshot: {e}")))
    }
}

/// Direct solve of the σ-weighted regularized normal equations:
/// `(Σ σ^{n−i} x_i x_iᵀ + σⁿ P0⁻¹)⁻¹ Σ σ^{n−i} y_i x_i`.
pub fn wrls_batch_oracle(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    p0: &DMatrix<f64>,
    sigma: f64,
) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    let n = x.nrows();
    if y.len() != n || p0.nrows() != x.ncols() {
        return Err(Error::invalid("dimension mismatch in batch oracle"));
    }
    let (p0_inv, _) = linalg::inverse(p0)?;
    let mut phi = p0_inv * sigma.powi(n as i32);
    let mut psi = DVector::zeros(x.ncols());
    for i in 0..n {
        let wgt = sigma.powi((n - 1 - i) as i32);
        let xi = x.row(i).transpose();
        phi.ger(wgt, &xi, &xi, 1.0);
        psi.axpy(wgt * y[i], &xi, 1.0);
    }
    linalg::solve(&phi, &psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_examples() {
        let s = WrlsState::identity(2, 1.0, 1.0).unwrap();
        assert_eq!(s.p(), &DMatrix::identity(2, 2));
        assert_eq!(s.weights(), &DVector::zeros(2));
        assert_eq!(s.steps(), 0);

        let s = WrlsState::new(
            DMatrix::from_element(1, 1, 5.0),
            DVector::from_element(1, 1.0),
            0.9,
        )
        .unwrap();
        assert_eq!(s.p()[(0, 0)], 5.0);
        assert_eq!(s.weights()[0], 1.0);

        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(WrlsState::new(indef, DVector::zeros(2), 1.0).is_err());
        assert!(WrlsState::identity(2, 1.0, 0.0).is_err());
        assert!(WrlsState::identity(2, 1.0, 1.5).is_err());
    }

    #[test]
    fn hand_evaluated_step() {
        let mut s = WrlsState::identity(2, 1.0, 1.0).unwrap();
        let pred = s.step(&DVector::from_vec(vec![1.0, 0.0]), 1.0).unwrap();
        assert_eq!(pred, 0.0);
        assert!((s.weights() - DVector::from_vec(vec![0.5, 0.0])).amax() < 1e-15);
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0]));
        assert!((s.p() - expect).amax() < 1e-15);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn zero_regressor_only_rescales_p() {
        let mut s = WrlsState::identity(2, 1.0, 0.5).unwrap();
        s.step(&DVector::from_vec(vec![1.0, 2.0]), 3.0).unwrap();
        let (w, p) = (s.weights().clone(), s.p().clone());
        let pred = s.step(&DVector::zeros(2), 7.0).unwrap();
        assert_eq!(pred, 0.0);
        assert_eq!(s.weights(), &w);
        assert!((s.p() - p * 2.0).amax() < 1e-12);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let mut s = WrlsState::identity(2, 1.0, 1.0).unwrap();
        assert!(s.step(&DVector::from_vec(vec![f64::NAN, 0.0]), 1.0).is_err());
        assert!(s.step(&DVector::from_vec(vec![1.0, 0.0]), f64::INFINITY).is_err());
        assert_eq!(s.steps(), 0);
    }

    #[test]
    fn oracle_examples() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0]);
        let w = wrls_batch_oracle(&x, &y, &DMatrix::identity(2, 2), 1.0).unwrap();
        assert!((w - DVector::from_vec(vec![0.5, 0.0])).amax() < 1e-15);

        // Vanishing regularization recovers an exact fit.
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let w_true = DVector::from_vec(vec![2.0, -3.0]);
        let y = &x * &w_true;
        let w = wrls_batch_oracle(&x, &y, &(DMatrix::identity(2, 2) * 1e10), 1.0).unwrap();
        assert!((w - w_true).amax() < 1e-6);
    }

    #[test]
    fn oracle_two_sample_forgetting() {
        // σ = 0.5, P0 = I, D = 1: Φ = σ² + σ x1² + x2², Ψ = σ y1 x1 + y2 x2.
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DVector::from_vec(vec![3.0, -1.0]);
        let w = wrls_batch_oracle(&x, &y, &DMatrix::identity(1, 1), 0.5).unwrap();
        let expect = (0.5 * 3.0 * 1.0 - 2.0) / (0.25 + 0.5 * 1.0 + 4.0);
        assert!((w[0] - expect).abs() < 1e-15);

        let mut s = WrlsState::identity(1, 1.0, 0.5).unwrap();
        s.step(&DVector::from_element(1, 1.0), 3.0).unwrap();
        s.step(&DVector::from_element(1, 2.0), -1.0).unwrap();
        assert!((s.weights()[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn block_step_matches_dense_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut dense = WrlsState::identity(6, 2.0, 0.9).unwrap();
        let mut block = dense.clone();
        for _ in 0..30 {
            let off = 2 * rng.random_range(0..3usize);
            let xb = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let mut x = DVector::zeros(6);
            x[off] = xb[0];
            x[off + 1] = xb[1];
            let y = rng.random_range(-1.0..1.0);
            let a = dense.step(&x, y).unwrap();
            let b = block.step_block(off, &xb, y).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        assert!((dense.weights() - block.weights()).amax() < 1e-12);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut s = WrlsState::identity(3, 1.0, 0.95).unwrap();
        s.step(&DVector::from_vec(vec![1.0, -1.0, 0.5]), 2.0).unwrap();
        let back = WrlsState::from_json(&s.to_json()).unwrap();
        assert_eq!(back.weights(), s.weights());
        assert_eq!(back.p(), s.p());
        assert_eq!(back.steps(), 1);
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(d, d) * 0.5
    }

    fn weighted_inverse_correlation(x: &DMatrix<f64>, p0: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
        let n = x.nrows();
        let mut phi = p0.clone().try_inverse().unwrap() * sigma.powi(n as i32);
        for i in 0..n {
            let xi = x.row(i).transpose();
            phi += &xi * xi.transpose() * sigma.powi((n - 1 - i) as i32);
        }
        phi.try_inverse().unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn recursion_matches_batch_oracle(
            seed in 0u64..10_000,
            d in 1usize..=10,
            n in 1usize..=50,
            forget in prop::bool::ANY,
        ) {
            let sigma = if forget { 0.8 } else { 1.0 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p0 = random_spd(&mut rng, d);
            let mut state = WrlsState::new(p0.clone(), DVector::zeros(d), sigma).unwrap();
            let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            for i in 0..n {
                let xi = x.row(i).transpose();
                let before = state.predict(&xi);
                let pred = state.step(&xi, y[i]).unwrap();
                prop_assert_eq!(pred, before);
                let xs = x.rows(0, i + 1).into_owned();
                let ys = y.rows(0, i + 1).into_owned();
                let w_ref = wrls_batch_oracle(&xs, &ys, &p0, sigma).unwrap();
                let scale = 1.0 + w_ref.amax();
                prop_assert!((state.weights() - &w_ref).amax() <= 1e-7 * scale);
                prop_assert!(linalg::max_asymmetry(state.p()) <= 1e-8);
                let p_ref = weighted_inverse_correlation(&xs, &p0, sigma);
                let p_scale = 1.0 + linalg::max_abs(&p_ref);
                prop_assert!(linalg::max_abs(&(state.p() - &p_ref)) <= 1e-7 * p_scale);
            }
        }
    }
}
