//! Time-dependent spatial domains described by their signed distance.
//!
//! A domain `D_t` is represented by `F(t, x)`, positive strictly inside,
//! negative strictly outside and zero on `∂D_t`. Near the boundary `|∇F| = 1`
//! and `∇F` is the inward unit normal at the nearest boundary point, so the
//! projection onto `∂D_t` is `x - F(t, x) ∇F(t, x)`.
//!
//! The Δ-shrunken domain used by the boundary correction is never
//! materialized: [`TimeSpaceDomain::shifted_signed_distance`] returns a value
//! whose sign is membership in it.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sde::SdeModel;
use crate::C0;

/// Gradients with a smaller Euclidean norm are reported as [`Error::DegenerateNormal`].
pub const DEGENERATE_NORMAL_TOL: f64 = 1e-8;

/// Scalar function of time, e.g. a moving boundary `t -> φ(t)`.
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Scalar field `(t, x) -> value`.
pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Vector field `(t, x, out)`; writes its value into `out`.
pub type VectorField = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Time horizon of a problem: a finite maturity (parabolic case) or none
/// (stationary case, stopping only at the boundary).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Open,
}

impl Horizon {
    pub fn maturity(&self) -> Option<f64> {
        match *self {
            Horizon::Finite(t) => Some(t),
            Horizon::Open => None,
        }
    }
}

#[derive(Clone)]
pub enum DomainKind {
    /// `{x : <direction, x> < level + velocity * t}` with a unit `direction`.
    HalfSpace {
        direction: Vec<f64>,
        level: f64,
        velocity: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// One-dimensional interval `(lower(t), upper(t))`.
    MovingInterval {
        lower: TimeFn,
        upper: TimeFn,
    },
    /// Caller-supplied signed distance and gradient. Both callables must be
    /// pure (or internally synchronized), since paths run concurrently.
    UserDefined {
        distance: ScalarField,
        gradient: VectorField,
        tube_radius: f64,
    },
}

impl fmt::Debug for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::HalfSpace {
                direction,
                level,
                velocity,
            } => f
                .debug_struct("HalfSpace")
                .field("direction", direction)
                .field("level", level)
                .field("velocity", velocity)
                .finish(),
            DomainKind::Ball { center, radius } => f
                .debug_struct("Ball")
                .field("center", center)
                .field("radius", radius)
                .finish(),
            DomainKind::MovingInterval { .. } => f.write_str("MovingInterval { .. }"),
            DomainKind::UserDefined { tube_radius, .. } => f
                .debug_struct("UserDefined")
                .field("tube_radius", tube_radius)
                .finish_non_exhaustive(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TimeSpaceDomain {
    kind: DomainKind,
    horizon: Horizon,
}

fn check_horizon(horizon: Horizon) -> Result<()> {
    match horizon {
        Horizon::Finite(t) if !(t.is_finite() && t > 0.0) => {
            Err(Error::invalid(format!("horizon must be > 0, got {t}")))
        }
        _ => Ok(()),
    }
}

impl TimeSpaceDomain {
    /// Half-space `{<direction, x> < level}`; `direction` is normalized.
    pub fn half_space(direction: Vec<f64>, level: f64, horizon: Horizon) -> Result<Self> {
        Self::moving_half_space(direction, level, 0.0, horizon)
    }

    /// Half-space whose level moves linearly: `{<direction, x> < level + velocity t}`.
    pub fn moving_half_space(
        mut direction: Vec<f64>,
        level: f64,
        velocity: f64,
        horizon: Horizon,
    ) -> Result<Self> {
        check_horizon(horizon)?;
        let norm = norm(&direction);
        if direction.is_empty() || !(norm > DEGENERATE_NORMAL_TOL) || !norm.is_finite() {
            return Err(Error::invalid(
                "half-space direction must be a nonzero vector",
            ));
        }
        if !level.is_finite() || !velocity.is_finite() {
            return Err(Error::invalid(
                "half-space level and velocity must be finite",
            ));
        }
        direction.iter_mut().for_each(|v| *v /= norm);
        Ok(Self {
            kind: DomainKind::HalfSpace {
                direction,
                level,
                velocity,
            },
            horizon,
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64, horizon: Horizon) -> Result<Self> {
        check_horizon(horizon)?;
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(
                "ball center must be a finite, non-empty point",
            ));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "ball radius must be > 0, got {radius}"
            )));
        }
        Ok(Self {
            kind: DomainKind::Ball { center, radius },
            horizon,
        })
    }

    /// Interval `(lower(t), upper(t))` on a finite horizon. The ordering
    /// `lower < upper` is checked on a uniform grid of `[0, T]`; smoothness of
    /// the boundaries is the caller's responsibility.
    pub fn moving_interval(lower: TimeFn, upper: TimeFn, horizon: Horizon) -> Result<Self> {
        check_horizon(horizon)?;
        let t_max = horizon.maturity().unwrap_or(1.0);
        const CHECKS: usize = 1024;
        for i in 0..=CHECKS {
            let t = t_max * i as f64 / CHECKS as f64;
            let (lo, hi) = (lower(t), upper(t));
            if !(lo < hi) {
                return Err(Error::invalid(format!(
                    "moving interval requires lower(t) < upper(t); fails at t={t} ({lo} >= {hi})"
                )));
            }
        }
        Ok(Self {
            kind: DomainKind::MovingInterval { lower, upper },
            horizon,
        })
    }

    /// Interval with affine boundaries `a + b t`.
    pub fn affine_interval(lower: (f64, f64), upper: (f64, f64), horizon: Horizon) -> Result<Self> {
        let (la, lb) = lower;
        let (ua, ub) = upper;
        Self::moving_interval(
            Arc::new(move |t| la + lb * t),
            Arc::new(move |t| ua + ub * t),
            horizon,
        )
    }

    pub fn user_defined(
        distance: ScalarField,
        gradient: VectorField,
        tube_radius: f64,
        horizon: Horizon,
    ) -> Result<Self> {
        check_horizon(horizon)?;
        if !(tube_radius > 0.0) {
            return Err(Error::invalid("tube radius must be > 0"));
        }
        Ok(Self {
            kind: DomainKind::UserDefined {
                distance,
                gradient,
                tube_radius,
            },
            horizon,
        })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    /// Spatial dimension, when fixed by the kind.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            DomainKind::HalfSpace { direction, .. } => Some(direction.len()),
            DomainKind::Ball { center, .. } => Some(center.len()),
            DomainKind::MovingInterval { .. } => Some(1),
            DomainKind::UserDefined { .. } => None,
        }
    }

    /// Radius of the neighbourhood of `∂D_t` in which the nearest boundary
    /// point is unique.
    pub fn tube_radius(&self, t: f64) -> f64 {
        match &self.kind {
            DomainKind::HalfSpace { .. } => f64::INFINITY,
            DomainKind::Ball { radius, .. } => *radius,
            DomainKind::MovingInterval { lower, upper } => 0.5 * (upper(t) - lower(t)),
            DomainKind::UserDefined { tube_radius, .. } => *tube_radius,
        }
    }

    #[inline]
    pub fn signed_distance(&self, t: f64, x: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::HalfSpace {
                direction,
                level,
                velocity,
            } => level + velocity * t - dot(direction, x),
            DomainKind::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                radius - r2.sqrt()
            }
            DomainKind::MovingInterval { lower, upper } => (x[0] - lower(t)).min(upper(t) - x[0]),
            DomainKind::UserDefined { distance, .. } => distance(t, x),
        }
    }

    /// Writes `∇F(t, x)` into `out`.
    pub fn gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.kind {
            DomainKind::HalfSpace { direction, .. } => {
                for (o, d) in out.iter_mut().zip(direction) {
                    *o = -d;
                }
            }
            DomainKind::Ball { center, .. } => {
                let mut r2 = 0.0;
                for ((o, a), c) in out.iter_mut().zip(x).zip(center) {
                    *o = c - a;
                    r2 += *o * *o;
                }
                let r = r2.sqrt();
                if !(r >= DEGENERATE_NORMAL_TOL) {
                    return Err(Error::DegenerateNormal { t, norm: r });
                }
                out.iter_mut().for_each(|o| *o /= r);
            }
            DomainKind::MovingInterval { lower, upper } => {
                let below = x[0] - lower(t);
                let above = upper(t) - x[0];
                if below < above {
                    out[0] = 1.0;
                } else if above < below {
                    out[0] = -1.0;
                } else {
                    // Midpoint: both boundary points are nearest.
                    return Err(Error::DegenerateNormal { t, norm: 0.0 });
                }
            }
            DomainKind::UserDefined { gradient, .. } => {
                gradient(t, x, out);
                let n = norm(out);
                if !(n >= DEGENERATE_NORMAL_TOL) {
                    return Err(Error::DegenerateNormal { t, norm: n });
                }
            }
        }
        Ok(())
    }

    pub fn gradient(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(t, x, &mut g)?;
        Ok(g)
    }

    /// Unit inward normal `∇F / |∇F|`.
    pub fn inward_normal(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.gradient(t, x)?;
        let n = norm(&g);
        g.iter_mut().for_each(|v| *v /= n);
        Ok(g)
    }

    /// Nearest point of `∂D_t`: `x - F(t, x) ∇F(t, x)`.
    pub fn project_to_boundary(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut p = self.gradient(t, x)?;
        let f = self.signed_distance(t, x);
        for (p, xi) in p.iter_mut().zip(x) {
            *p = xi - f * *p;
        }
        Ok(p)
    }

    /// `|∇F(t, x) σ|` for a row-major `d × d'` matrix `sigma`: the noise
    /// amplitude along the normal direction. `grad` is scratch space of length `d`.
    pub fn normal_noise_amplitude(
        &self,
        t: f64,
        x: &[f64],
        sigma: &[f64],
        dim_noise: usize,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.gradient_into(t, x, grad)?;
        Ok(row_times_matrix_norm(grad, sigma, dim_noise))
    }

    /// `F(t, x) - c0 √Δ |∇F σ(t, x)|`, positive iff `x` lies in the shrunken
    /// domain `D^Δ_t`. The diffusion matrix is evaluated at `(t, x)` itself.
    pub fn shifted_signed_distance(
        &self,
        t: f64,
        x: &[f64],
        delta: f64,
        model: &SdeModel,
    ) -> Result<f64> {
        let mut sigma = vec![0.0; model.dim_state() * model.dim_noise()];
        model.diffusion_into(t, x, &mut sigma)?;
        let mut grad = vec![0.0; x.len()];
        self.shifted_signed_distance_with(t, x, delta, &sigma, model.dim_noise(), &mut grad)
    }

    /// As [`Self::shifted_signed_distance`] with a precomputed diffusion matrix.
    pub fn shifted_signed_distance_with(
        &self,
        t: f64,
        x: &[f64],
        delta: f64,
        sigma: &[f64],
        dim_noise: usize,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.shifted_distance_scaled(t, x, C0 * delta.sqrt(), sigma, dim_noise, grad)
    }

    /// `F(t, x) - shift |∇F σ|` with `shift = c0 √Δ` precomputed.
    #[inline]
    pub(crate) fn shifted_distance_scaled(
        &self,
        t: f64,
        x: &[f64],
        shift: f64,
        sigma: &[f64],
        dim_noise: usize,
        grad: &mut [f64],
    ) -> Result<f64> {
        let f = self.signed_distance(t, x);
        if shift == 0.0 {
            return Ok(f);
        }
        match self.normal_noise_amplitude(t, x, sigma, dim_noise, grad) {
            Ok(amp) => Ok(f - shift * amp),
            // Far inside (e.g. the centre of a ball): the shift cannot change the sign.
            Err(Error::DegenerateNormal { .. }) if f > 0.0 => Ok(f),
            Err(e) => Err(e),
        }
    }

    /// Largest deviation between the analytic gradient and central finite
    /// differences of `F` with step `h`. Useful to validate user-defined domains.
    pub fn gradient_mismatch(&self, t: f64, x: &[f64], h: f64) -> Result<f64> {
        let g = self.gradient(t, x)?;
        let mut probe = x.to_vec();
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            probe[i] = x[i] + h;
            let up = self.signed_distance(t, &probe);
            probe[i] = x[i] - h;
            let down = self.signed_distance(t, &probe);
            probe[i] = x[i];
            worst = worst.max(((up - down) / (2.0 * h) - g[i]).abs());
        }
        Ok(worst)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean norm of `v^T M` for a row-major `v.len() × cols` matrix.
#[inline]
pub(crate) fn row_times_matrix_norm(v: &[f64], m: &[f64], cols: usize) -> f64 {
    if v.len() == 1 && cols == 1 {
        return (v[0] * m[0]).abs();
    }
    let mut acc = 0.0;
    for j in 0..cols {
        let mut s = 0.0;
        for (i, vi) in v.iter().enumerate() {
            s += vi * m[i * cols + j];
        }
        acc += s * s;
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball2() -> TimeSpaceDomain {
        TimeSpaceDomain::ball(vec![0.0; 3], 2.0, Horizon::Open).unwrap()
    }

    fn unit_half_space(dim: usize) -> TimeSpaceDomain {
        let mut dir = vec![0.0; dim];
        dir[0] = 1.0;
        TimeSpaceDomain::half_space(dir, 1.0, Horizon::Finite(1.0)).unwrap()
    }

    #[test]
    fn ball_signed_distance() {
        let d = ball2();
        assert_eq!(d.signed_distance(0.0, &[0.0, 0.0, 0.0]), 2.0);
        assert_eq!(d.signed_distance(0.0, &[2.0, 0.0, 0.0]), 0.0);
        assert_eq!(d.signed_distance(0.0, &[3.0, 0.0, 0.0]), -1.0);
    }

    #[test]
    fn normals() {
        assert_eq!(
            ball2().inward_normal(0.0, &[1.0, 0.0, 0.0]).unwrap(),
            vec![-1.0, 0.0, 0.0]
        );
        assert_eq!(
            unit_half_space(4)
                .inward_normal(0.3, &[5.0, 1.0, -2.0, 0.0])
                .unwrap(),
            vec![-1.0, 0.0, 0.0, 0.0]
        );
        let iv = TimeSpaceDomain::affine_interval((-1.0, -0.2), (1.0, 0.1), Horizon::Finite(1.0))
            .unwrap();
        assert_eq!(iv.inward_normal(0.5, &[1.05]).unwrap(), vec![-1.0]);
        assert_eq!(iv.inward_normal(0.5, &[-1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn degenerate_normal_at_ball_centre() {
        assert!(matches!(
            ball2().inward_normal(0.0, &[0.0, 0.0, 0.0]),
            Err(Error::DegenerateNormal { .. })
        ));
        let iv = TimeSpaceDomain::affine_interval((-1.0, 0.0), (1.0, 0.0), Horizon::Finite(1.0))
            .unwrap();
        assert!(iv.gradient(0.0, &[0.0]).is_err());
    }

    #[test]
    fn projections() {
        assert_eq!(
            ball2().project_to_boundary(0.0, &[3.0, 0.0, 0.0]).unwrap(),
            vec![2.0, 0.0, 0.0]
        );
        assert_eq!(
            ball2().project_to_boundary(0.0, &[1.0, 0.0, 0.0]).unwrap(),
            vec![2.0, 0.0, 0.0]
        );
        let p = unit_half_space(2)
            .project_to_boundary(0.0, &[1.3, 0.4])
            .unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.4);
    }

    #[test]
    fn shifted_distance_examples() {
        let hs = unit_half_space(1);
        let bm = SdeModel::brownian(1);
        let v = hs.shifted_signed_distance(0.0, &[0.9], 0.01, &bm).unwrap();
        assert!((v - (0.1 - 0.5826 * 0.1)).abs() < 1e-5, "{v}");
        assert!((v - 0.04174).abs() < 1e-5);

        // Noise orthogonal to the normal: no shift.
        let tangential = SdeModel::new(
            2,
            1,
            Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            Arc::new(|_, _, out: &mut [f64]| {
                out[0] = 0.0;
                out[1] = 1.0;
            }),
            true,
        )
        .unwrap();
        let hs2 = unit_half_space(2);
        assert_eq!(
            hs2.shifted_signed_distance(0.0, &[0.5, 0.3], 0.04, &tangential)
                .unwrap(),
            hs2.signed_distance(0.0, &[0.5, 0.3])
        );

        let s = 1.7;
        let model = SdeModel::scaled_brownian(3, s).unwrap();
        let r = 1.6;
        let got = ball2()
            .shifted_signed_distance(0.0, &[r, 0.0, 0.0], 0.01, &model)
            .unwrap();
        assert!((got - ((2.0 - r) - C0 * 0.1 * s)).abs() < 1e-14);
    }

    #[test]
    fn shifted_distance_deep_inside_is_positive() {
        let v = ball2()
            .shifted_signed_distance(0.0, &[0.0; 3], 0.1, &SdeModel::brownian(3))
            .unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn rejects_crossing_interval() {
        assert!(
            TimeSpaceDomain::affine_interval((0.0, 2.0), (1.0, 0.0), Horizon::Finite(1.0)).is_err()
        );
    }

    fn domains() -> Vec<TimeSpaceDomain> {
        let sphere_like: TimeSpaceDomain = TimeSpaceDomain::user_defined(
            // Ball of radius 1.5 + 0.25 t around (0.5, -0.5).
            Arc::new(|t, x: &[f64]| {
                1.5 + 0.25 * t - ((x[0] - 0.5).powi(2) + (x[1] + 0.5).powi(2)).sqrt()
            }),
            Arc::new(|_, x: &[f64], out: &mut [f64]| {
                let r = ((x[0] - 0.5).powi(2) + (x[1] + 0.5).powi(2)).sqrt();
                out[0] = -(x[0] - 0.5) / r;
                out[1] = -(x[1] + 0.5) / r;
            }),
            1.5,
            Horizon::Finite(1.0),
        )
        .unwrap();
        vec![
            TimeSpaceDomain::moving_half_space(vec![1.0, -2.0], 0.3, 0.5, Horizon::Finite(1.0))
                .unwrap(),
            TimeSpaceDomain::ball(vec![0.5, -0.5], 1.5, Horizon::Finite(1.0)).unwrap(),
            sphere_like,
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn projection_lands_on_boundary(
            which in 0usize..3, t in 0.0..1.0f64, r in 0.1..2.9f64, theta in 0.0..std::f64::consts::TAU
        ) {
            let d = &domains()[which];
            let x = [0.5 + r * theta.cos(), -0.5 + r * theta.sin()];
            let p = d.project_to_boundary(t, &x).unwrap();
            prop_assert!(d.signed_distance(t, &p).abs() < 1e-10);
            if d.signed_distance(t, &x) < 0.0 {
                let g = d.gradient(t, &x).unwrap();
                let f_minus = -d.signed_distance(t, &x);
                for i in 0..2 {
                    prop_assert!((p[i] - (x[i] + g[i] * f_minus)).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn analytic_gradients_match_finite_differences(
            which in 0usize..3, t in 0.0..1.0f64, r in 0.2..2.9f64, theta in 0.0..std::f64::consts::TAU
        ) {
            let d = &domains()[which];
            let x = [0.5 + r * theta.cos(), -0.5 + r * theta.sin()];
            prop_assert!(d.gradient_mismatch(t, &x, 1e-6).unwrap() < 1e-5);
        }

        #[test]
        fn interval_projection(t in 0.0..1.0f64, x in -1.4..1.3f64) {
            let iv = TimeSpaceDomain::affine_interval((-1.0, -0.2), (1.0, 0.1), Horizon::Finite(1.0)).unwrap();
            prop_assume!((x - (-0.05 * t)).abs() > 1e-6);
            let p = iv.project_to_boundary(t, &[x]).unwrap();
            prop_assert!(iv.signed_distance(t, &p).abs() < 1e-10);
        }

        #[test]
        fn shift_is_zero_at_zero_delta_and_decreasing(
            r in 0.05..1.95f64, d1 in 1e-6..0.2f64, d2 in 1e-6..0.2f64
        ) {
            let model = crate::sde::SdeModel::section6();
            let b = ball2();
            let x = [r * 0.6, -r * 0.8, 0.0];
            prop_assert_eq!(
                b.shifted_signed_distance(0.0, &x, 0.0, &model).unwrap(),
                b.signed_distance(0.0, &x)
            );
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(
                b.shifted_signed_distance(0.0, &x, hi, &model).unwrap()
                    < b.shifted_signed_distance(0.0, &x, lo, &model).unwrap()
            );
        }
    }
}
