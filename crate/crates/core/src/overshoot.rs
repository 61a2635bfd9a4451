//! Asymptotic law of the renormalized overshoot.
//!
//! The limit law is built from the ladder height `s_{τ+}` of a standard
//! Gaussian random walk `s_n = G_1 + ... + G_n` (first strictly positive
//! partial sum):
//!
//! ```text
//! H(y) = E[s_{τ+}]^{-1} ∫_0^y P(s_{τ+} > z) dz,   mean of H = E[s²] / (2 E[s]) = c0
//! ```
//!
//! and `c0 = -ζ(1/2) / √(2π)` in closed form.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{GaussianSource, NoiseStream};
use crate::stats::CompensatedSum;

/// Default cap on the ladder epoch. `E[τ+]` is infinite, so some cap is needed.
pub const DEFAULT_LADDER_CAP: u64 = 1_000_000;

/// Terms in the accelerated eta series; the truncation error is below
/// `3 (3 + √8)^{-n}`.
const ETA_TERMS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderSample {
    /// `s_{τ+}`, or `None` when the walk was capped before turning positive.
    pub height: Option<f64>,
    /// `τ+`, or the cap when capped.
    pub epoch: u64,
}

impl LadderSample {
    pub fn capped(&self) -> bool {
        self.height.is_none()
    }
}

/// Runs the walk until its first strictly positive partial sum, giving up
/// after `cap` steps.
pub fn sample_ladder_height<G: GaussianSource>(mut noise: G, cap: u64) -> LadderSample {
    let mut s = 0.0;
    for n in 1..=cap.max(1) {
        s += noise.standard_normal();
        if s > 0.0 {
            return LadderSample {
                height: Some(s),
                epoch: n,
            };
        }
    }
    LadderSample {
        height: None,
        epoch: cap.max(1),
    }
}

/// Ladder samples for path indices `0..n` of `seed`, in index order.
pub fn sample_ladder_heights(seed: u64, n: u64, cap: u64) -> Vec<LadderSample> {
    (0..n)
        .into_par_iter()
        .map(|i| sample_ladder_height(NoiseStream::new(seed, i), cap))
        .collect()
}

/// Moments of the ladder height accumulated over many walks, without
/// keeping the samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderMoments {
    pub samples: u64,
    pub capped: u64,
    /// `Σ h^k` for `k = 1..=4` over uncapped heights.
    power_sums: [f64; 4],
}

impl LadderMoments {
    pub fn uncapped(&self) -> u64 {
        self.samples - self.capped
    }

    pub fn capped_fraction(&self) -> f64 {
        self.capped as f64 / self.samples as f64
    }

    fn moment(&self, k: usize) -> f64 {
        self.power_sums[k - 1] / self.uncapped() as f64
    }

    pub fn mean_height(&self) -> f64 {
        self.moment(1)
    }

    /// `E[s²] / (2 E[s])`, the mean of the limit law `H`.
    pub fn c0_estimate(&self) -> f64 {
        self.moment(2) / (2.0 * self.moment(1))
    }

    /// Delta-method standard error of [`Self::c0_estimate`].
    pub fn c0_std_error(&self) -> f64 {
        let r = self.c0_estimate();
        let m1 = self.moment(1);
        let centered_sq = self.moment(4) - 4.0 * r * self.moment(3) + 4.0 * r * r * self.moment(2);
        let var_psi = centered_sq / (4.0 * m1 * m1);
        (var_psi / self.uncapped() as f64).sqrt()
    }
}

/// Ladder-height moments over path indices `0..n`. Work is split into fixed
/// chunks combined in index order, so the result does not depend on the
/// number of worker threads.
pub fn ladder_moments(seed: u64, n: u64, cap: u64) -> Result<LadderMoments> {
    const CHUNK: u64 = 4096;
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<([CompensatedSum; 4], u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sums = [CompensatedSum::default(); 4];
            let mut capped = 0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                match sample_ladder_height(NoiseStream::new(seed, i), cap).height {
                    Some(h) => {
                        let mut p = h;
                        for s in sums.iter_mut() {
                            s.add(p);
                            p *= h;
                        }
                    }
                    None => capped += 1,
                }
            }
            (sums, capped)
        })
        .collect();
    let mut totals = [CompensatedSum::default(); 4];
    let mut capped = 0;
    for (sums, c) in &partials {
        for (t, s) in totals.iter_mut().zip(sums) {
            t.add(s.value());
        }
        capped += c;
    }
    if capped == n {
        return Err(Error::NoSamples);
    }
    Ok(LadderMoments {
        samples: n,
        capped,
        power_sums: totals.map(|s| s.value()),
    })
}

/// Plug-in estimate of the limit overshoot distribution `H` from observed
/// ladder heights. Since `∫_0^y P(s > z) dz = E[min(s, y)]`, the estimate is
/// `Σ min(h_i, y) / Σ h_i`, exact for the empirical law.
#[derive(Debug, Clone)]
pub struct LimitOvershootLaw {
    sorted: Vec<f64>,
    /// `prefix[k]` is the sum of the `k` smallest heights.
    prefix: Vec<f64>,
}

impl LimitOvershootLaw {
    /// Builds the law from the uncapped samples; capped ones are skipped.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a LadderSample>) -> Result<Self> {
        Self::from_heights(samples.into_iter().filter_map(|s| s.height).collect())
    }

    pub fn from_heights(mut heights: Vec<f64>) -> Result<Self> {
        if heights.is_empty() {
            return Err(Error::NoSamples);
        }
        if heights.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::invalid("ladder heights must be positive"));
        }
        heights.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(heights.len() + 1);
        let mut acc = CompensatedSum::default();
        prefix.push(0.0);
        for &h in &heights {
            acc.add(h);
            prefix.push(acc.value());
        }
        Ok(Self {
            sorted: heights,
            prefix,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `H(y)`; zero for `y <= 0` and one from the largest height on.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let k = self.sorted.partition_point(|&h| h <= y);
        let total = self.prefix[self.sorted.len()];
        ((self.prefix[k] + (self.sorted.len() - k) as f64 * y) / total).min(1.0)
    }

    /// Mean of `H`, i.e. the plug-in `E[s²] / (2 E[s])`.
    pub fn mean(&self) -> f64 {
        let sq: f64 = self.sorted.iter().map(|h| h * h).sum();
        sq / (2.0 * self.prefix[self.sorted.len()])
    }
}

/// `H(y)` estimated from `samples`; see [`LimitOvershootLaw`].
pub fn limit_overshoot_cdf(y: f64, samples: &[LadderSample]) -> Result<f64> {
    Ok(LimitOvershootLaw::from_samples(samples)?.cdf(y))
}

/// Dirichlet eta `η(s) = Σ (-1)^{k} (k+1)^{-s}` for real `s > 0`, by the
/// Chebyshev-weighted (Borwein) acceleration of the alternating series:
///
/// ```text
/// d_k = n Σ_{i<=k} (n+i-1)! 4^i / ((n-i)! (2i)!)
/// η(s) ≈ -1/d_n Σ_{k<n} (-1)^k (d_k - d_n) / (k+1)^s
/// ```
///
/// All weights are positive, so the sum is well conditioned in `f64`.
pub fn dirichlet_eta(s: f64) -> f64 {
    let n = ETA_TERMS;
    let mut d = Vec::with_capacity(n + 1);
    let mut term = 1.0; // i = 0 summand
    let mut acc = term;
    d.push(acc);
    for i in 1..=n {
        let (nf, i_f) = (n as f64, i as f64);
        term *= 4.0 * (nf + i_f - 1.0) * (nf - i_f + 1.0) / ((2.0 * i_f) * (2.0 * i_f - 1.0));
        acc += term;
        d.push(acc);
    }
    let dn = d[n];
    let mut sum = CompensatedSum::default();
    for (k, dk) in d.iter().take(n).enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum.add(sign * (dk - dn) / ((k + 1) as f64).powf(s));
    }
    -sum.value() / dn
}

/// `ζ(1/2) = η(1/2) / (1 - √2)`.
pub fn zeta_half() -> f64 {
    dirichlet_eta(0.5) / (1.0 - std::f64::consts::SQRT_2)
}

/// The boundary-shift constant `c0 = -ζ(1/2) / √(2π) ≈ 0.5826`.
pub fn c0_analytic() -> f64 {
    -zeta_half() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::ScriptedNoise;

    /// Euler–Maclaurin evaluation of ζ(s), independent of the eta series.
    fn zeta_euler_maclaurin(s: f64) -> f64 {
        let n = 12usize;
        let nf = n as f64;
        let mut z: f64 = (1..n).map(|k| (k as f64).powf(-s)).sum();
        z += nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
        // B_{2j} / (2j)!
        let bern = [
            1.0 / 6.0 / 2.0,
            -1.0 / 30.0 / 24.0,
            1.0 / 42.0 / 720.0,
            -1.0 / 30.0 / 40320.0,
            5.0 / 66.0 / 3628800.0,
            -691.0 / 2730.0 / 479001600.0,
        ];
        let mut rising = s; // s (s+1) ... (s+2j-2)
        for (j, b) in bern.iter().enumerate() {
            let j = j + 1;
            if j > 1 {
                rising *= (s + 2.0 * j as f64 - 3.0) * (s + 2.0 * j as f64 - 2.0);
            }
            z += b * rising * nf.powf(-s - 2.0 * j as f64 + 1.0);
        }
        z
    }

    #[test]
    fn zeta_half_two_routes() {
        let eta = zeta_half();
        let em = zeta_euler_maclaurin(0.5);
        assert!((eta - em).abs() < 1e-12, "{eta} vs {em}");
        assert!((eta - -1.4603545).abs() < 1e-7);
        // Reference value to 17 digits.
        assert!((eta - -1.460_354_508_809_586_8).abs() < 1e-14);
    }

    #[test]
    fn eta_at_one_is_ln2() {
        assert!((dirichlet_eta(1.0) - std::f64::consts::LN_2).abs() < 1e-14);
        // η(2) = π²/12
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert!((dirichlet_eta(2.0) - pi2 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn c0_value() {
        let c0 = c0_analytic();
        assert_eq!((c0 * 1e4).round() / 1e4, 0.5826);
        assert!((c0 - crate::C0).abs() < 1e-15);
        assert_eq!(c0, c0_analytic());
    }

    #[test]
    fn scripted_ladder_heights() {
        let s = sample_ladder_height(ScriptedNoise::new(vec![0.7]), 10);
        assert_eq!(
            s,
            LadderSample {
                height: Some(0.7),
                epoch: 1
            }
        );
        let s = sample_ladder_height(ScriptedNoise::new(vec![-0.5, -0.2, 1.0]), 10);
        assert!((s.height.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(s.epoch, 3);
        let s = sample_ladder_height(ScriptedNoise::new(vec![-0.5, -0.2, 1.0]), 2);
        assert!(s.capped());
        assert_eq!(s.epoch, 2);
    }

    #[test]
    fn limit_cdf_edges() {
        let samples = sample_ladder_heights(3, 2000, 10_000);
        assert_eq!(limit_overshoot_cdf(0.0, &samples).unwrap(), 0.0);
        let law = LimitOvershootLaw::from_samples(&samples).unwrap();
        let max = samples.iter().filter_map(|s| s.height).fold(0.0, f64::max);
        assert_eq!(law.cdf(max), 1.0);
        assert_eq!(law.cdf(1e9), 1.0);
        let mut prev = 0.0;
        for i in 0..400 {
            let v = law.cdf(i as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
        let single = LimitOvershootLaw::from_heights(vec![0.8]).unwrap();
        assert_eq!(single.cdf(0.8), 1.0);
        assert_eq!(single.cdf(0.4), 0.5);
        assert!(matches!(
            limit_overshoot_cdf(1.0, &[]),
            Err(Error::NoSamples)
        ));
    }

    #[test]
    fn ladder_heights_positive_and_prefix_nonpositive() {
        for i in 0..500 {
            let mut draws = Vec::new();
            let mut noise = NoiseStream::new(8, i);
            let mut s = 0.0;
            loop {
                let g = noise.standard_normal();
                draws.push(g);
                s += g;
                if s > 0.0 {
                    break;
                }
            }
            let sample = sample_ladder_height(ScriptedNoise::new(draws.clone()), 1 << 40);
            assert!(sample.height.unwrap() > 0.0);
            let mut partial = 0.0;
            for g in &draws[..draws.len() - 1] {
                partial += g;
                assert!(partial <= 0.0);
            }
        }
    }

    #[test]
    fn moments_agree_with_samples_and_analytic_c0() {
        let n = 200_000;
        let cap = 100_000;
        let m = ladder_moments(21, n, cap).unwrap();
        let samples = sample_ladder_heights(21, n, cap);
        let law = LimitOvershootLaw::from_samples(&samples).unwrap();
        assert_eq!(law.len() as u64, m.uncapped());
        assert!((law.mean() - m.c0_estimate()).abs() < 1e-12);
        let z = (m.c0_estimate() - c0_analytic()) / m.c0_std_error();
        assert!(z.abs() < 3.0, "z = {z}");
        // E[s_{τ+}] = 1/√2 for the standard Gaussian walk.
        assert!((m.mean_height() - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01);
        assert!(m.capped_fraction() < 0.01);
    }

    #[test]
    fn moments_do_not_depend_on_worker_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ladder_moments(4, 20_000, 10_000).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
