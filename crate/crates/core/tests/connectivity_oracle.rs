//! Connectivity formulas against Monte-Carlo oracles.

mod common;

use common::{
    bernoulli_estimate, close, mc_dual_range_fixed_counts, mc_dual_range_section,
    mc_single_range_section, sigma_floor,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use vanet_core::connectivity::{
    dual_range_middle_bound, middle_connectivity, spacing_prob, BoundFormula, DualRangeOptions,
    DualRangeTable, WeightOrientation,
};
use vanet_core::numeric::binomial;

#[test]
fn middle_connectivity_tracks_monte_carlo() {
    let span = 1600.0;
    let trials = 200_000u64;
    for (i, &(rho, ratio)) in [(1.0, 0.125), (4.0, 0.25), (8.0, 0.125)].iter().enumerate() {
        let range = ratio * span;
        let analytic = middle_connectivity(rho, range, span);
        let (mc, stderr) = mc_single_range_section(rho, range, span, trials, 900 + i as u64);
        let slack = (3.0 * sigma_floor(stderr, trials)).max(0.005);
        assert!(
            (analytic - mc).abs() <= slack,
            "rho={rho} range={range}: analytic {analytic} mc {mc}"
        );
    }
}

#[test]
fn spacing_prob_matches_designated_gap_oracle() {
    // 20-point grid over counts and thresholds; the oracle designates the
    // first n1 spacings for the tight threshold, which by exchangeability
    // matches any designation.
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let trials = 150_000u64;
    let grid = [
        (0usize, 3usize, 0.3, 0.5),
        (1, 2, 0.25, 0.6),
        (2, 2, 0.2, 0.5),
        (3, 1, 0.3, 0.4),
        (2, 4, 0.15, 0.3),
        (4, 2, 0.18, 0.35),
        (1, 5, 0.12, 0.3),
        (5, 1, 0.22, 0.4),
        (3, 3, 0.2, 0.28),
        (0, 6, 0.1, 0.25),
        (6, 0, 0.25, 0.5),
        (2, 6, 0.1, 0.22),
        (6, 2, 0.16, 0.3),
        (4, 4, 0.14, 0.25),
        (1, 7, 0.1, 0.2),
        (7, 1, 0.15, 0.22),
        (5, 3, 0.14, 0.3),
        (3, 5, 0.12, 0.26),
        (8, 0, 0.16, 0.3),
        (0, 8, 0.08, 0.17),
    ];
    for &(n1, n2, x1, x2) in &grid {
        let analytic = spacing_prob(n1, n2, x1, x2);
        let points = n1 + n2 - 1;
        let mut hits = 0u64;
        let mut positions = Vec::new();
        for _ in 0..trials {
            positions.clear();
            positions.extend((0..points).map(|_| rng.random::<f64>()));
            positions.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut prev = 0.0;
            let mut ok = true;
            for gap_idx in 0..=points {
                let here = if gap_idx == points { 1.0 } else { positions[gap_idx] };
                let gap = here - prev;
                let threshold = if gap_idx < n1 { x1 } else { x2 };
                if gap > threshold {
                    ok = false;
                    break;
                }
                prev = here;
            }
            hits += ok as u64;
        }
        let (mc, stderr) = bernoulli_estimate(hits, trials);
        let slack = 3.0 * sigma_floor(stderr, trials);
        assert!(
            (analytic - mc).abs() <= slack,
            "({n1},{n2},{x1},{x2}): analytic {analytic} mc {mc} slack {slack}"
        );
    }
}

#[test]
fn dual_bound_is_below_max_rule_monte_carlo_everywhere() {
    let (x1, x2, span) = (200.0, 400.0, 1600.0);
    let trials = 200_000u64;
    for formula in [BoundFormula::Merged, BoundFormula::CaseSplit] {
        let mut table = DualRangeTable::new(x1, x2, span, formula);
        for (i, &rho) in [1.0, 2.0, 4.0].iter().enumerate() {
            for (j, &p_short) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
                let bound = table.middle_bound(rho, p_short, WeightOrientation::Standard);
                let seed = 5000 + 31 * i as u64 + j as u64;
                let (mc, stderr) =
                    mc_dual_range_section(rho, x1, x2, p_short, span, trials, seed);
                assert!(
                    bound <= mc + 3.0 * sigma_floor(stderr, trials),
                    "{formula:?} rho={rho} p={p_short}: bound {bound} above mc {mc}"
                );
            }
        }
    }
}

#[test]
fn dual_bound_exact_at_extreme_mix_probabilities() {
    let (x1, x2, span) = (200.0, 400.0, 1600.0);
    for rho in [1.0, 2.0, 4.0] {
        let at_zero =
            dual_range_middle_bound(rho, x1, x2, 0.0, span, DualRangeOptions::default());
        assert!(close(at_zero, middle_connectivity(rho, x2, span), 1e-10));
        let at_one = dual_range_middle_bound(rho, x1, x2, 1.0, span, DualRangeOptions::default());
        assert!(close(at_one, middle_connectivity(rho, x1, span), 1e-10));
    }
}

#[test]
fn fixed_count_pattern_weight_is_a_lower_bound() {
    // Two vehicles, one long-range: the run-decomposition weight divided by
    // the number of arrangements must bound the position-averaged
    // connectivity from below.
    let trials = 1_000_000u64;
    let (x1, x2) = (0.4, 0.9);
    let mut table = DualRangeTable::new(x1, x2, 1.0, BoundFormula::Merged);
    let per_arrangement = table.pattern_weight(2, 1) / binomial(2, 1);
    let (mc, stderr) = mc_dual_range_fixed_counts(2, 1, x1, x2, trials, 60);
    assert!(
        per_arrangement <= mc + 3.0 * sigma_floor(stderr, trials),
        "bound {per_arrangement} vs mc {mc}"
    );
    // The known closed forms at these parameters: the bound term is the
    // all-short probability, the truth the one-short/two-long split.
    assert!(close(per_arrangement, spacing_prob(3, 0, x1, x2), 1e-12));
    assert!(close(mc, spacing_prob(1, 2, x1, x2), 3.0 * stderr + 0.002));
}

#[test]
fn larger_fixed_counts_stay_bounded() {
    let trials = 300_000u64;
    let (x1, x2) = (0.125, 0.25);
    for formula in [BoundFormula::Merged, BoundFormula::CaseSplit] {
        let mut table = DualRangeTable::new(x1, x2, 1.0, formula);
        for (total, long_count) in [(5usize, 2usize), (7, 3), (9, 5), (6, 6), (8, 0)] {
            let per = table.pattern_weight(total, long_count) / binomial(total, long_count);
            let seed = 7000 + (total * 31 + long_count) as u64;
            let (mc, stderr) =
                mc_dual_range_fixed_counts(total, long_count, x1, x2, trials, seed);
            assert!(
                per <= mc + 3.0 * sigma_floor(stderr, trials),
                "{formula:?} N={total} r={long_count}: {per} above {mc}"
            );
        }
    }
}
