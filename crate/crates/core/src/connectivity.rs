//! Per-street edge-open probabilities.
//!
//! A street is radio-connected end to end when its two short end sections
//! each hold at least one vehicle and the vehicles of the long middle section
//! (plus the section boundaries) leave no gap wider than the transmission
//! range. With Poisson section occupancies this gives a closed-form product:
//! `(1 - e^{-rho1}) * P(middle connected) * (1 - e^{-rho3})`.
//!
//! The middle-section term mixes, over a Poisson vehicle count, the classic
//! probability that n uniform points on a span leave no gap above the range
//! — an alternating inclusion-exclusion sum evaluated with compensated
//! summation and, for large n, logarithmic binomials.
//!
//! With two transmission ranges the exact probability has no closed form;
//! [`DualRangeTable`] computes a lower bound by splitting each arrangement of
//! long- and short-range vehicles into runs and granting the long range only
//! to gaps that cannot escape it. The bound collapses to the single-range
//! formula when the two ranges coincide and is exact at the all-short and
//! all-long extremes.

use serde::{Deserialize, Serialize};

use crate::model::TransmissionModel;
use crate::numeric::{binomial, fmt_compact, poisson_pmf, poisson_truncation, KahanSum, LnFactorial};

/// Direct binomial products stay accurate up to this many points; beyond it
/// terms are assembled in log space.
const LOG_EVAL_THRESHOLD: usize = 60;

/// Probability that `n` points placed uniformly on `[0, span]`, together with
/// both endpoints, leave no gap larger than `range`.
pub fn span_connectivity(n: usize, range: f64, span: f64) -> f64 {
    assert!(range > 0.0 && span > 0.0);
    if range >= span {
        return 1.0;
    }
    let x = range / span;
    // Quick infeasibility: n+1 gaps each at most x must cover the whole span.
    if ((n + 1) as f64) * x < 1.0 {
        return 0.0;
    }
    let mut acc = KahanSum::new();
    if n <= LOG_EVAL_THRESHOLD {
        for i in 0..=n + 1 {
            let base = 1.0 - i as f64 * x;
            if base <= 0.0 {
                break;
            }
            let term = binomial(n + 1, i) * base.powi(n as i32);
            acc.add(if i % 2 == 0 { term } else { -term });
        }
    } else {
        let mut lnf = LnFactorial::with_capacity(n + 2);
        for i in 0..=n + 1 {
            let base = 1.0 - i as f64 * x;
            if base <= 0.0 {
                break;
            }
            let term = (lnf.ln_binomial(n + 1, i) + n as f64 * base.ln()).exp();
            acc.add(if i % 2 == 0 { term } else { -term });
        }
    }
    acc.value().clamp(0.0, 1.0)
}

/// Middle-section connectivity for a Poisson(rho) vehicle count: the mixture
/// of [`span_connectivity`] over n. The sum truncates where the Poisson tail
/// drops below 1e-10 of the mass; since the conditional terms are at most
/// one, the truncation undershoots by less than that.
pub fn middle_connectivity(rho: f64, range: f64, span: f64) -> f64 {
    assert!(rho >= 0.0);
    if range >= span {
        return 1.0;
    }
    let n_max = poisson_truncation(rho);
    let mut lnf = LnFactorial::with_capacity(n_max + 2);
    let mut total = 0.0;
    let mut mass = 0.0;
    for n in 0..=n_max {
        let w = poisson_pmf(n, rho, &mut lnf);
        mass += w;
        if w > 0.0 {
            total += w * span_connectivity(n, range, span);
        }
    }
    debug_assert!(1.0 - mass < 1e-10, "Poisson tail {:e} above bound", 1.0 - mass);
    total.clamp(0.0, 1.0)
}

/// How a street's edge-open probability was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectivityMode {
    ExactSingleRange,
    HeteroLowerBound,
}

impl ConnectivityMode {
    pub fn name(&self) -> &'static str {
        match self {
            ConnectivityMode::ExactSingleRange => "exact_single_range",
            ConnectivityMode::HeteroLowerBound => "hetero_lower_bound",
        }
    }
}

/// Inputs of the exact single-range street formula: the three section
/// occupancy means, the shared transmission range, and the middle span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleRangeInputs {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub range: f64,
    pub span: f64,
}

/// Inputs of the dual-range lower bound: section means, the two ranges
/// (x1 < x2), the probability a vehicle carries the short range, and the
/// middle span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualRangeInputs {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub x1: f64,
    pub x2: f64,
    pub prob_short: f64,
    pub span: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConnectivityInputs {
    Single(SingleRangeInputs),
    Dual(DualRangeInputs),
}

/// A street's edge-open probability plus the inputs that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StreetConnectivity {
    pub street: u32,
    pub p_open: f64,
    pub mode: ConnectivityMode,
    pub inputs: ConnectivityInputs,
}

/// Exact single-range street probability: both end sections occupied and the
/// middle section gap-free.
pub fn street_connectivity_single(street: u32, inputs: SingleRangeInputs) -> StreetConnectivity {
    debug_assert!(inputs.rho1 >= 0.0 && inputs.rho2 >= 0.0 && inputs.rho3 >= 0.0);
    let p_open = (1.0 - (-inputs.rho1).exp())
        * middle_connectivity(inputs.rho2, inputs.range, inputs.span)
        * (1.0 - (-inputs.rho3).exp());
    StreetConnectivity {
        street,
        p_open: p_open.clamp(0.0, 1.0),
        mode: ConnectivityMode::ExactSingleRange,
        inputs: ConnectivityInputs::Single(inputs),
    }
}

/// Probability that, of the `n1 + n2` spacings induced by `n1 + n2 - 1`
/// uniform points on the unit interval, a designated `n1` stay below `x1`
/// and the remaining `n2` stay below `x2` (thresholds normalized by the
/// span). Inclusion-exclusion over the spacings; only terms with a strictly
/// positive base contribute.
pub fn spacing_prob(n1: usize, n2: usize, x1: f64, x2: f64) -> f64 {
    let gaps = n1 + n2;
    if gaps == 0 {
        return 1.0;
    }
    let n = gaps - 1;
    let mut acc = KahanSum::new();
    let mut lnf = if n > LOG_EVAL_THRESHOLD {
        Some(LnFactorial::with_capacity(gaps + 1))
    } else {
        None
    };
    for k in 0..=gaps {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let lo = k.saturating_sub(n2);
        let hi = k.min(n1);
        for l in lo..=hi {
            let base = 1.0 - l as f64 * x1 - (k - l) as f64 * x2;
            if base <= 0.0 {
                continue;
            }
            let term = match &mut lnf {
                Some(table) => (table.ln_binomial(n1, l)
                    + table.ln_binomial(n2, k - l)
                    + n as f64 * base.ln())
                .exp(),
                None => binomial(n1, l) * binomial(n2, k - l) * base.powi(n as i32),
            };
            acc.add(sign * term);
        }
    }
    acc.value().clamp(0.0, 1.0)
}

/// Which run-decomposition the dual-range bound uses.
///
/// `Merged` folds the four end-of-street cases into one pessimistic term per
/// run count; `CaseSplit` keeps them separate and is tighter while remaining
/// a lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundFormula {
    #[default]
    Merged,
    CaseSplit,
}

/// Exponent pairing of the per-arrangement weight.
///
/// `Standard` weights an arrangement with `r` long-range vehicles by its
/// actual probability `(1-p)^r p^{N-r}` (p = probability of the short
/// range) and is a guaranteed lower bound. `Swapped` pairs the same
/// arrangement sums with `p^r (1-p)^{N-r}` instead, reproducing the
/// literature form of the bound verbatim; it is kept for comparison and is
/// not bound-safe as p approaches one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightOrientation {
    #[default]
    Standard,
    Swapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DualRangeOptions {
    pub formula: BoundFormula,
    pub orientation: WeightOrientation,
}

/// Cached evaluator for the dual-range middle-section bound at fixed ranges
/// and span. The expensive tables depend only on (x1, x2, span), so one
/// instance serves a whole sweep over densities and range-mix probabilities.
#[derive(Debug, Clone)]
pub struct DualRangeTable {
    x1: f64,
    x2: f64,
    formula: BoundFormula,
    /// spacing_rows[n][j] = spacing_prob(j, n+1-j, x1, x2).
    spacing_rows: Vec<Vec<f64>>,
    /// weight_rows[n][r] = arrangement-summed bound weight for r long-range
    /// vehicles among n, with exact all-short / all-long endpoints.
    weight_rows: Vec<Vec<f64>>,
}

impl DualRangeTable {
    /// Configs require strictly ordered ranges, but the table accepts
    /// `x1 == x2` so the exact collapse onto the single-range formula can be
    /// exercised directly.
    pub fn new(x1: f64, x2: f64, span: f64, formula: BoundFormula) -> Self {
        assert!(x1 > 0.0 && x1 <= x2 && span > 0.0);
        Self {
            x1: x1 / span,
            x2: x2 / span,
            formula,
            spacing_rows: Vec::new(),
            weight_rows: Vec::new(),
        }
    }

    fn ensure(&mut self, total: usize) {
        while self.spacing_rows.len() <= total {
            let n = self.spacing_rows.len();
            let gaps = n + 1;
            let row: Vec<f64> =
                (0..=gaps).map(|j| spacing_prob(j, gaps - j, self.x1, self.x2)).collect();
            self.spacing_rows.push(row);
            let weights: Vec<f64> =
                (0..=n).map(|r| self.weight_uncached(n, r)).collect();
            self.weight_rows.push(weights);
        }
    }

    fn weight_uncached(&self, total: usize, long_count: usize) -> f64 {
        let row = &self.spacing_rows[total];
        let gaps = total + 1;
        if long_count == total {
            // Every vehicle long-range, both section boundaries included.
            return row[0];
        }
        if long_count == 0 {
            return row[gaps];
        }
        let r = long_count;
        let s = total - r;
        let mut acc = 0.0;
        match self.formula {
            BoundFormula::Merged => {
                // All arrangements with q runs of long-range vehicles, each
                // granted the long range only on the r - q gaps interior to
                // a run.
                for q in 1..=r.min(s + 1) {
                    let count = binomial(r - 1, q - 1) * binomial(s + 1, q);
                    acc += count * row[gaps - r + q];
                }
            }
            BoundFormula::CaseSplit => {
                // Separate the four boundary cases: runs of short-range
                // vehicles at both street ends, one end, or neither, which
                // shifts how many gaps keep the long range.
                for q in 1..=r {
                    let runs = binomial(r - 1, q - 1);
                    if runs == 0.0 {
                        break;
                    }
                    let both_short = binomial(s - 1, q) * row[gaps - r + q];
                    let one_short = 2.0 * binomial(s - 1, q - 1) * row[gaps - r + q - 1];
                    let neither = if q >= 2 {
                        binomial(s - 1, q - 2) * row[gaps - r + q - 2]
                    } else {
                        0.0
                    };
                    acc += runs * (both_short + one_short + neither);
                }
            }
        }
        acc
    }

    /// Arrangement-summed bound weight for `long_count` long-range vehicles
    /// among `total`. Sums to the plain binomial count times the homogeneous
    /// probability when the two ranges coincide.
    pub fn pattern_weight(&mut self, total: usize, long_count: usize) -> f64 {
        assert!(long_count <= total);
        self.ensure(total);
        self.weight_rows[total][long_count]
    }

    fn mixture_given_total(&mut self, total: usize, prob_short: f64, orient: WeightOrientation) -> f64 {
        self.ensure(total);
        let mut value = 0.0;
        for r in 0..=total {
            let weight = match orient {
                WeightOrientation::Standard => {
                    (1.0 - prob_short).powi(r as i32) * prob_short.powi((total - r) as i32)
                }
                WeightOrientation::Swapped => {
                    prob_short.powi(r as i32) * (1.0 - prob_short).powi((total - r) as i32)
                }
            };
            if weight == 0.0 {
                continue;
            }
            let q = match orient {
                WeightOrientation::Standard => self.weight_rows[total][r],
                // Verbatim literature form: the r = 0 term is the all-long
                // value, every other term the raw run sum.
                WeightOrientation::Swapped => {
                    if r == 0 {
                        self.spacing_rows[total][0]
                    } else {
                        self.raw_merged(total, r)
                    }
                }
            };
            value += weight * q;
        }
        value.clamp(0.0, 1.0)
    }

    fn raw_merged(&self, total: usize, r: usize) -> f64 {
        let row = &self.spacing_rows[total];
        let gaps = total + 1;
        let s = total - r;
        let mut acc = 0.0;
        for q in 1..=r.min(s + 1) {
            acc += binomial(r - 1, q - 1) * binomial(s + 1, q) * row[gaps - r + q];
        }
        acc
    }

    /// Lower bound on middle-section connectivity for a Poisson(rho) count of
    /// vehicles that independently carry the short range with probability
    /// `prob_short`.
    pub fn middle_bound(&mut self, rho: f64, prob_short: f64, orient: WeightOrientation) -> f64 {
        assert!((0.0..=1.0).contains(&prob_short));
        assert!(rho >= 0.0);
        let n_max = poisson_truncation(rho);
        let mut lnf = LnFactorial::with_capacity(n_max + 2);
        let mut total = 0.0;
        for n in 0..=n_max {
            let w = poisson_pmf(n, rho, &mut lnf);
            if w > 0.0 {
                total += w * self.mixture_given_total(n, prob_short, orient);
            }
        }
        total.clamp(0.0, 1.0)
    }
}

/// Convenience wrapper building a throwaway table.
pub fn dual_range_middle_bound(
    rho: f64,
    x1: f64,
    x2: f64,
    prob_short: f64,
    span: f64,
    opts: DualRangeOptions,
) -> f64 {
    DualRangeTable::new(x1, x2, span, opts.formula).middle_bound(rho, prob_short, opts.orientation)
}

/// Dual-range street lower bound: the end-section factors are unchanged
/// (one vehicle of either range covers a short section), the middle section
/// uses the run-decomposition bound.
pub fn street_connectivity_dual(
    street: u32,
    inputs: DualRangeInputs,
    opts: DualRangeOptions,
) -> StreetConnectivity {
    let mut table = DualRangeTable::new(inputs.x1, inputs.x2, inputs.span, opts.formula);
    street_connectivity_dual_with(street, inputs, opts, &mut table)
}

/// Same as [`street_connectivity_dual`] but reusing a prepared table.
pub fn street_connectivity_dual_with(
    street: u32,
    inputs: DualRangeInputs,
    opts: DualRangeOptions,
    table: &mut DualRangeTable,
) -> StreetConnectivity {
    let middle = table.middle_bound(inputs.rho2, inputs.prob_short, opts.orientation);
    let p_open = (1.0 - (-inputs.rho1).exp()) * middle * (1.0 - (-inputs.rho3).exp());
    StreetConnectivity {
        street,
        p_open: p_open.clamp(0.0, 1.0),
        mode: ConnectivityMode::HeteroLowerBound,
        inputs: ConnectivityInputs::Dual(inputs),
    }
}

/// Street probability under the configured transmission model.
pub fn street_connectivity_for_model(
    street: u32,
    rhos: [f64; 3],
    span: f64,
    model: &TransmissionModel,
    opts: DualRangeOptions,
) -> StreetConnectivity {
    match *model {
        TransmissionModel::Single { range } => street_connectivity_single(
            street,
            SingleRangeInputs { rho1: rhos[0], rho2: rhos[1], rho3: rhos[2], range, span },
        ),
        TransmissionModel::Dual { x1, x2, prob_short } => street_connectivity_dual(
            street,
            DualRangeInputs {
                rho1: rhos[0],
                rho2: rhos[1],
                rho3: rhos[2],
                x1,
                x2,
                prob_short,
                span,
            },
            opts,
        ),
    }
}

/// CSV export, one row per street:
/// `street_id,rho1,rho2,rho3,R_or_x1,x2_or_blank,p_type1_or_blank,p_open,mode`.
pub fn street_connectivity_csv(rows: &[StreetConnectivity]) -> String {
    let mut out =
        String::from("street_id,rho1,rho2,rho3,R_or_x1,x2_or_blank,p_type1_or_blank,p_open,mode\n");
    for row in rows {
        match row.inputs {
            ConnectivityInputs::Single(i) => out.push_str(&format!(
                "{},{},{},{},{},,,{},{}\n",
                row.street,
                fmt_compact(i.rho1),
                fmt_compact(i.rho2),
                fmt_compact(i.rho3),
                fmt_compact(i.range),
                fmt_compact(row.p_open),
                row.mode.name()
            )),
            ConnectivityInputs::Dual(i) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.street,
                fmt_compact(i.rho1),
                fmt_compact(i.rho2),
                fmt_compact(i.rho3),
                fmt_compact(i.x1),
                fmt_compact(i.x2),
                fmt_compact(i.prob_short),
                fmt_compact(row.p_open),
                row.mode.name()
            )),
        }
    }
    out
}
