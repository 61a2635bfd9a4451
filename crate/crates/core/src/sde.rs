//! Diffusion models `dX = b(t, X) dt + σ(t, X) dW` and the Euler step.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::VectorField;

/// Row-major `d × d'` matrix field `(t, x, out)`.
pub type MatrixField = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct SdeModel {
    dim_state: usize,
    dim_noise: usize,
    drift: VectorField,
    diffusion: MatrixField,
    time_homogeneous: bool,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("time_homogeneous", &self.time_homogeneous)
            .finish_non_exhaustive()
    }
}

impl SdeModel {
    /// Model from arbitrary coefficient callables. They must be pure, as
    /// paths are simulated concurrently.
    pub fn new(
        dim_state: usize,
        dim_noise: usize,
        drift: VectorField,
        diffusion: MatrixField,
        time_homogeneous: bool,
    ) -> Result<Self> {
        if dim_state == 0 || dim_noise == 0 {
            return Err(Error::invalid("state and noise dimensions must be >= 1"));
        }
        Ok(Self {
            dim_state,
            dim_noise,
            drift,
            diffusion,
            time_homogeneous,
        })
    }

    /// Standard Brownian motion in `R^d`.
    pub fn brownian(dim: usize) -> Self {
        Self::scaled_brownian(dim, 1.0).expect("unit scale is valid")
    }

    /// `b = 0`, `σ = s I`.
    pub fn scaled_brownian(dim: usize, scale: f64) -> Result<Self> {
        if !scale.is_finite() {
            return Err(Error::invalid("brownian scale must be finite"));
        }
        Self::new(
            dim,
            dim,
            Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            Arc::new(move |_, _, out: &mut [f64]| {
                out.fill(0.0);
                for i in 0..dim {
                    out[i * dim + i] = scale;
                }
            }),
            true,
        )
    }

    /// Three-dimensional benchmark diffusion: cyclic linear drift
    /// `b(x) = (x2, x3, x1)` and a lower-triangular `σ` whose rows scale with
    /// `√(1 + |x3|)`, `√(1 + |x1|)` and `√(1 + |x2|)`.
    pub fn section6() -> Self {
        Self::new(
            3,
            3,
            Arc::new(|_, x: &[f64], out: &mut [f64]| {
                out[0] = x[1];
                out[1] = x[2];
                out[2] = x[0];
            }),
            Arc::new(|_, x: &[f64], out: &mut [f64]| section6_diffusion(x, out)),
            true,
        )
        .expect("dimensions are valid")
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }

    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.drift)(t, x, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteCoefficient { what: "drift", t })
        }
    }

    pub fn diffusion_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.diffusion)(t, x, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteCoefficient {
                what: "diffusion",
                t,
            })
        }
    }

    pub fn drift(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim_state];
        self.drift_into(t, x, &mut out)?;
        Ok(out)
    }

    /// Row-major `d × d'` diffusion matrix at `(t, x)`.
    pub fn diffusion(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim_state * self.dim_noise];
        self.diffusion_into(t, x, &mut out)?;
        Ok(out)
    }

    /// One Euler iterate `x + b(t, x) Δ + σ(t, x) dW`.
    pub fn euler_step(&self, t: f64, x: &[f64], delta: f64, dw: &[f64]) -> Result<Vec<f64>> {
        if dw.len() != self.dim_noise {
            return Err(Error::invalid(format!(
                "increment has length {}, expected {}",
                dw.len(),
                self.dim_noise
            )));
        }
        let mut drift = vec![0.0; self.dim_state];
        let mut sigma = vec![0.0; self.dim_state * self.dim_noise];
        self.drift_into(t, x, &mut drift)?;
        self.diffusion_into(t, x, &mut sigma)?;
        let mut next = x.to_vec();
        apply_euler(&mut next, &drift, &sigma, dw, delta);
        Ok(next)
    }
}

/// In-place Euler update of `x` from precomputed coefficients.
#[inline]
pub(crate) fn apply_euler(x: &mut [f64], drift: &[f64], sigma: &[f64], dw: &[f64], delta: f64) {
    let cols = dw.len();
    for (i, xi) in x.iter_mut().enumerate() {
        let row = &sigma[i * cols..(i + 1) * cols];
        let noise: f64 = row.iter().zip(dw).map(|(s, w)| s * w).sum();
        *xi += drift[i] * delta + noise;
    }
}

fn section6_diffusion(x: &[f64], out: &mut [f64]) {
    let s1 = (1.0 + x[0].abs()).sqrt();
    let s2 = (1.0 + x[1].abs()).sqrt();
    let s3 = (1.0 + x[2].abs()).sqrt();
    let r34 = 0.75f64.sqrt();
    out.copy_from_slice(&[
        s3,
        0.0,
        0.0,
        0.5 * s1,
        r34 * s1,
        0.0,
        0.0,
        0.5 * s2,
        r34 * s2,
    ]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pure_noise_step() {
        let bm = SdeModel::brownian(1);
        assert_eq!(bm.euler_step(0.0, &[0.0], 0.01, &[0.3]).unwrap(), vec![0.3]);
    }

    #[test]
    fn section6_drift_step() {
        let m = SdeModel::section6();
        let next = m.euler_step(0.0, &[1.0, 2.0, 3.0], 0.1, &[0.0; 3]).unwrap();
        let expected = [1.2, 2.3, 3.1];
        for (a, b) in next.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn section6_diffusion_at_origin() {
        let s = SdeModel::section6().diffusion(0.0, &[0.0; 3]).unwrap();
        let r = 0.75f64.sqrt();
        assert_eq!(s, vec![1.0, 0.0, 0.0, 0.5, r, 0.0, 0.0, 0.5, r]);
    }

    #[test]
    fn non_finite_coefficients_are_reported() {
        let m = SdeModel::new(
            1,
            1,
            Arc::new(|_, x: &[f64], out: &mut [f64]| out[0] = 1.0 / x[0]),
            Arc::new(|_, _, out: &mut [f64]| out[0] = 1.0),
            false,
        )
        .unwrap();
        assert_eq!(
            m.euler_step(0.5, &[0.0], 0.1, &[0.0]),
            Err(Error::NonFiniteCoefficient {
                what: "drift",
                t: 0.5
            })
        );
    }

    #[test]
    fn constant_coefficients_compose() {
        let m = SdeModel::new(
            2,
            1,
            Arc::new(|_, _, out: &mut [f64]| out.copy_from_slice(&[0.5, -1.0])),
            Arc::new(|_, _, out: &mut [f64]| out.copy_from_slice(&[2.0, 0.25])),
            true,
        )
        .unwrap();
        let dws = [0.125, -0.5, 0.25, 0.0625];
        let delta = 0.25;
        let mut x = vec![1.0, 1.0];
        for (i, dw) in dws.iter().enumerate() {
            x = m.euler_step(i as f64 * delta, &x, delta, &[*dw]).unwrap();
        }
        let total: f64 = dws.iter().sum();
        let n = dws.len() as f64;
        assert_eq!(x[0], 1.0 + 0.5 * n * delta + 2.0 * total);
        assert_eq!(x[1], 1.0 - n * delta + 0.25 * total);
    }

    proptest! {
        #[test]
        fn step_is_affine_in_increment(
            x in prop::array::uniform3(-1.5..1.5f64),
            a in prop::array::uniform3(-1.0..1.0f64),
            b in prop::array::uniform3(-1.0..1.0f64),
            lambda in -2.0..2.0f64,
        ) {
            let m = SdeModel::section6();
            let delta = 0.05;
            let step = |w: &[f64]| m.euler_step(0.0, &x, delta, w).unwrap();
            let base = step(&[0.0; 3]);
            let mix: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + lambda * b).collect();
            let (sa, sb, smix) = (step(&a), step(&b), step(&mix));
            for i in 0..3 {
                let lin = sa[i] + lambda * (sb[i] - base[i]);
                prop_assert!((smix[i] - lin).abs() < 1e-12);
            }
        }

        #[test]
        fn section6_covariance_matches_closed_form(x in prop::array::uniform3(-2.0..2.0f64)) {
            let s = SdeModel::section6().diffusion(0.0, &x).unwrap();
            // a = σ σ^T by explicit matrix product.
            let mut a = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] = (0..3).map(|k| s[i * 3 + k] * s[j * 3 + k]).sum();
                }
            }
            let (p1, p2, p3) = (1.0 + x[0].abs(), 1.0 + x[1].abs(), 1.0 + x[2].abs());
            prop_assert!((a[0][0] - p3).abs() < 1e-12);
            prop_assert!((a[1][1] - p1).abs() < 1e-12);
            prop_assert!((a[2][2] - p2).abs() < 1e-12);
            prop_assert!((a[0][1] - 0.5 * (p3 * p1).sqrt()).abs() < 1e-12);
            prop_assert!(a[0][2].abs() < 1e-12);
            prop_assert!((a[1][2] - 0.5 * 0.75f64.sqrt() * (p1 * p2).sqrt()).abs() < 1e-12);
            // Lower triangular with positive diagonal.
            prop_assert!(s[1] == 0.0 && s[2] == 0.0 && s[5] == 0.0);
            prop_assert!(s[0] > 0.0 && s[4] > 0.0 && s[8] > 0.0);
        }
    }
}
