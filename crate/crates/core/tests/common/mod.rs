//! Shared oracles for the integration and acceptance suites. Everything here
//! is deliberately independent of the library's computational paths: plain
//! rejection/inversion sampling, breadth-first search instead of union-find,
//! and direct summation instead of the solver.

#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Knuth-style Poisson sampler; fine for the means used in these tests.
pub fn sample_poisson(rng: &mut impl Rng, mean: f64) -> usize {
    if mean == 0.0 {
        return 0;
    }
    let limit = (-mean).exp();
    let mut count = 0usize;
    let mut product: f64 = 1.0;
    loop {
        product *= rng.random::<f64>();
        if product <= limit {
            return count;
        }
        count += 1;
    }
}

/// Mean and standard error of a Bernoulli estimate.
pub fn bernoulli_estimate(successes: u64, trials: u64) -> (f64, f64) {
    let p = successes as f64 / trials as f64;
    let stderr = (p * (1.0 - p) / trials as f64).sqrt();
    (p, stderr)
}

/// Standard error with a rule-of-three floor: a [0, 1] observable estimated
/// from n trials that saw zero successes still has true value up to ~3/n, so
/// its sigma is never taken below 1/n.
pub fn sigma_floor(stderr: f64, trials: u64) -> f64 {
    stderr.max(1.0 / trials as f64)
}

/// Monte-Carlo estimate of single-range section connectivity: a Poisson
/// number of uniform points on [0, span] must leave no gap above `range`,
/// endpoints included.
pub fn mc_single_range_section(
    rho: f64,
    range: f64,
    span: f64,
    trials: u64,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    let mut points = Vec::new();
    for _ in 0..trials {
        let n = sample_poisson(&mut rng, rho);
        points.clear();
        points.extend((0..n).map(|_| rng.random::<f64>() * span));
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prev = 0.0;
        let mut ok = true;
        for &p in &points {
            if p - prev > range {
                ok = false;
                break;
            }
            prev = p;
        }
        if ok && span - prev > range {
            ok = false;
        }
        hits += ok as u64;
    }
    bernoulli_estimate(hits, trials)
}

/// Gap rule for two ranges: endpoint gaps check the single adjacent node,
/// interior gaps the max (or min) of the two adjacent ranges.
pub fn gaps_connected(positions: &[f64], ranges: &[f64], span: f64, use_min: bool) -> bool {
    let n = positions.len();
    if n == 0 {
        return false;
    }
    if positions[0] > ranges[0] {
        return false;
    }
    if span - positions[n - 1] > ranges[n - 1] {
        return false;
    }
    for i in 0..n - 1 {
        let gap = positions[i + 1] - positions[i];
        let reach = if use_min {
            ranges[i].min(ranges[i + 1])
        } else {
            ranges[i].max(ranges[i + 1])
        };
        if gap > reach {
            return false;
        }
    }
    true
}

/// Monte-Carlo estimate of dual-range section connectivity under the
/// max-adjacent-range rule: Poisson count, uniform positions, each node
/// short-range with probability `prob_short`.
pub fn mc_dual_range_section(
    rho: f64,
    x1: f64,
    x2: f64,
    prob_short: f64,
    span: f64,
    trials: u64,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    for _ in 0..trials {
        let n = sample_poisson(&mut rng, rho);
        nodes.clear();
        for _ in 0..n {
            let pos = rng.random::<f64>() * span;
            let range = if rng.random::<f64>() < prob_short { x1 } else { x2 };
            nodes.push((pos, range));
        }
        nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let positions: Vec<f64> = nodes.iter().map(|v| v.0).collect();
        let ranges: Vec<f64> = nodes.iter().map(|v| v.1).collect();
        hits += gaps_connected(&positions, &ranges, span, false) as u64;
    }
    bernoulli_estimate(hits, trials)
}

/// Dual-range connectivity with a fixed node count and a fixed number of
/// long-range nodes, averaged over positions and arrangements.
pub fn mc_dual_range_fixed_counts(
    total: usize,
    long_count: usize,
    x1: f64,
    x2: f64,
    trials: u64,
    seed: u64,
) -> (f64, f64) {
    assert!(long_count <= total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let mut positions: Vec<f64> = (0..total).map(|_| rng.random::<f64>()).collect();
        positions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Random arrangement of the long-range nodes among the order
        // statistics.
        let mut ranges = vec![x1; total];
        let mut slots: Vec<usize> = (0..total).collect();
        slots.shuffle(&mut rng);
        for &slot in slots.iter().take(long_count) {
            ranges[slot] = x2;
        }
        hits += gaps_connected(&positions, &ranges, 1.0, false) as u64;
    }
    bernoulli_estimate(hits, trials)
}

/// Exact microcanonical observables of an open-boundary square lattice by
/// enumerating every bond subset and clustering with breadth-first search.
/// Returns `[giant, avg_cluster, perfect]` indexed by bond count.
pub fn enumerate_microcanonical(side: usize) -> [Vec<f64>; 3] {
    let bonds = lattice_bonds(side);
    let m_total = bonds.len();
    assert!(m_total <= 26, "enumeration oracle capped");
    let nodes = side * side;
    let mut sums = vec![[0.0f64; 3]; m_total + 1];
    let mut counts = vec![0u64; m_total + 1];
    for mask in 0u64..(1 << m_total) {
        let m = mask.count_ones() as usize;
        let obs = bfs_observables(nodes, &bonds, mask);
        for k in 0..3 {
            sums[m][k] += obs[k];
        }
        counts[m] += 1;
    }
    let mut giant = Vec::new();
    let mut avg = Vec::new();
    let mut perfect = Vec::new();
    for m in 0..=m_total {
        giant.push(sums[m][0] / counts[m] as f64);
        avg.push(sums[m][1] / counts[m] as f64);
        perfect.push(sums[m][2] / counts[m] as f64);
    }
    [giant, avg, perfect]
}

/// Bond list of the open square lattice in the same order the engine uses:
/// horizontal bonds row-major, then vertical.
pub fn lattice_bonds(side: usize) -> Vec<(usize, usize)> {
    let mut bonds = Vec::new();
    for r in 0..side {
        for c in 0..side - 1 {
            bonds.push((r * side + c, r * side + c + 1));
        }
    }
    for r in 0..side - 1 {
        for c in 0..side {
            bonds.push((r * side + c, (r + 1) * side + c));
        }
    }
    bonds
}

/// Cluster statistics of one bond subset via BFS: giant fraction, nodes per
/// cluster, all-connected indicator.
pub fn bfs_observables(nodes: usize, bonds: &[(usize, usize)], mask: u64) -> [f64; 3] {
    let mut adjacency = vec![Vec::new(); nodes];
    for (i, &(a, b)) in bonds.iter().enumerate() {
        if mask & (1 << i) != 0 {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    let mut seen = vec![false; nodes];
    let mut clusters = 0usize;
    let mut largest = 0usize;
    let mut queue = Vec::new();
    for start in 0..nodes {
        if seen[start] {
            continue;
        }
        clusters += 1;
        let mut size = 0usize;
        queue.push(start);
        seen[start] = true;
        while let Some(node) = queue.pop() {
            size += 1;
            for &next in &adjacency[node] {
                if !seen[next] {
                    seen[next] = true;
                    queue.push(next);
                }
            }
        }
        largest = largest.max(size);
    }
    [
        largest as f64 / nodes as f64,
        nodes as f64 / clusters as f64,
        (clusters == 1) as u8 as f64,
    ]
}
