//! Small numeric helpers shared across the analytic modules: stable binomial
//! coefficients, log-factorials, compensated summation, and Poisson weights.

/// Compensated (Kahan) accumulator for alternating or ill-conditioned sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Table of ln(n!) values, grown on demand.
///
/// Building by cumulative ln sums keeps the absolute error around 1e-13 for
/// the index range used here (a few thousand), which is far below every
/// tolerance in this crate.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    pub fn new() -> Self {
        Self { table: vec![0.0, 0.0] }
    }

    pub fn with_capacity(n: usize) -> Self {
        let mut t = Self::new();
        t.grow(n);
        t
    }

    fn grow(&mut self, n: usize) {
        while self.table.len() <= n {
            let k = self.table.len();
            let last = *self.table.last().unwrap();
            self.table.push(last + (k as f64).ln());
        }
    }

    pub fn ln_fact(&mut self, n: usize) -> f64 {
        self.grow(n);
        self.table[n]
    }

    pub fn ln_binomial(&mut self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.ln_fact(n) - self.ln_fact(k) - self.ln_fact(n - k)
    }
}

impl Default for LnFactorial {
    fn default() -> Self {
        Self::new()
    }
}

/// Binomial coefficient as f64; zero outside the valid range.
///
/// Uses the multiplicative product, which is exact while the running value
/// stays under 2^53 and keeps relative error ~k*eps beyond that. For n above
/// 60 callers that combine coefficients with tiny power terms should work in
/// log space via [`LnFactorial::ln_binomial`].
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0_f64;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// Poisson pmf evaluated in log space so that large means stay finite.
pub fn poisson_pmf(n: usize, mean: f64, lnf: &mut LnFactorial) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mean.ln() - mean - lnf.ln_fact(n)).exp()
}

/// Truncation index for Poisson mixtures: max(50, ceil(mean + 12*sqrt(mean))).
/// The tail mass beyond this index is below 1e-10 for every mean.
pub fn poisson_truncation(mean: f64) -> usize {
    let spread = (mean + 12.0 * mean.sqrt()).ceil() as usize;
    spread.max(50)
}

/// Deterministic compact float rendering for CSV output: plain shortest
/// decimal in a sane magnitude window, exponent notation outside it.
pub fn fmt_compact(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    let magnitude = value.abs();
    if (1e-4..1e15).contains(&magnitude) {
        format!("{value}")
    } else {
        format!("{value:e}")
    }
}
