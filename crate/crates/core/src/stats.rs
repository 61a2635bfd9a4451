//! Small statistical helpers shared by the estimators.

/// Neumaier-compensated running sum. Adding the same values in the same order
/// always gives the same bits, whatever produced them.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Mean and unbiased sample standard deviation, summed in slice order.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut s = CompensatedSum::default();
    values.iter().for_each(|&v| s.add(v));
    let mean = s.value() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let mut sq = CompensatedSum::default();
    values.iter().for_each(|&v| sq.add((v - mean) * (v - mean)));
    (mean, (sq.value() / (n - 1) as f64).sqrt())
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    /// `None` for an empty sample.
    pub fn new(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        Some(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of the sample `<= y`.
    pub fn eval(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= y) as f64 / self.sorted.len() as f64
    }

    pub fn eval_grid(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&y| self.eval(y)).collect()
    }

    pub fn mean(&self) -> f64 {
        mean_and_std(&self.sorted).0
    }

    /// Lower empirical quantile, `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }
}

/// Largest absolute difference between two distribution functions on `grid`.
pub fn ks_distance(a: impl Fn(f64) -> f64, b: impl Fn(f64) -> f64, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&y| (a(y) - b(y)).abs())
        .fold(0.0, f64::max)
}

/// `count` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_function_cdf() {
        let one = EmpiricalCdf::new(vec![0.5]).unwrap();
        assert_eq!(one.eval(0.499), 0.0);
        assert_eq!(one.eval(0.5), 1.0);
        assert_eq!(one.eval(3.0), 1.0);

        let two = EmpiricalCdf::new(vec![0.4, 0.2]).unwrap();
        assert_eq!(
            two.eval_grid(&[0.1, 0.2, 0.3, 0.4, 0.5]),
            vec![0.0, 0.5, 0.5, 1.0, 1.0]
        );
        assert!(EmpiricalCdf::new(vec![]).is_none());
    }

    #[test]
    fn ks_examples() {
        let g = linspace(-1.0, 2.0, 31);
        assert_eq!(ks_distance(normal_cdf, normal_cdf, &g), 0.0);
        let h0 = |y: f64| if y >= 0.0 { 1.0 } else { 0.0 };
        let h1 = |y: f64| if y >= 1.0 { 1.0 } else { 0.0 };
        assert_eq!(ks_distance(h0, h1, &[0.5]), 1.0);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut s = CompensatedSum::default();
        for v in [1e16, 1.0, -1e16, 1.0] {
            s.add(v);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn mean_std_and_quantiles() {
        let (m, s) = mean_and_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let c = EmpiricalCdf::new(vec![3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(c.quantile(0.5), 2.0);
        assert_eq!(c.quantile(1.0), 4.0);
        assert_eq!(c.quantile(0.0), 1.0);
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((2.0 * normal_cdf(-1.0) - 0.317_310_507_862_914_1).abs() < 1e-15);
    }
}
