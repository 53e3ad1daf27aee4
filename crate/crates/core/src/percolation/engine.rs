//! Bond-percolation observables on the intersection lattice.
//!
//! The workhorse is the Newman-Ziff style sweep: permute all M bonds, add
//! them one at a time while a union-find structure tracks clusters, and
//! record each observable after every addition. Averaging sweeps gives the
//! fixed-bond-count (microcanonical) expectations `Q_m`; a binomial mixture
//! then turns those into curves over the edge probability p. A direct
//! Bernoulli sampler covers lattices whose edges have unequal probabilities.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::union_find::UnionFind;
use crate::lattice::GridLattice;
use crate::numeric::fmt_compact;

/// Hard cap on exhaustive enumeration: 2^24 subsets is the largest run that
/// stays interactive.
pub const EXHAUSTIVE_MAX_BONDS: usize = 24;

const CHUNK: u64 = 64;

#[derive(Debug, Error)]
pub enum PercolationError {
    #[error("exhaustive enumeration needs at most {EXHAUSTIVE_MAX_BONDS} bonds, lattice has {0}")]
    ExhaustiveTooLarge(usize),
    #[error("giant-fraction curve never crosses level {0} inside the p grid")]
    NoCrossing(f64),
    #[error("edge probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("expected {expected} edge probabilities, got {got}")]
    EdgeCountMismatch { expected: usize, got: usize },
    #[error("iterations must be at least 1")]
    NoIterations,
}

/// Which per-state observables the engine records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    GiantFraction,
    AvgClusterSize,
    PerfectConnectivity,
}

impl Observable {
    pub const ALL: [Observable; 3] = [
        Observable::GiantFraction,
        Observable::AvgClusterSize,
        Observable::PerfectConnectivity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Observable::GiantFraction => "giant_fraction",
            Observable::AvgClusterSize => "avg_cluster_size",
            Observable::PerfectConnectivity => "perfect_connectivity",
        }
    }
}

/// How "average cluster size" is computed.
///
/// `NodesOverClusters` (nodes divided by cluster count) is the default;
/// `WeightedExcludingGiant` is the size-weighted mean over the non-giant
/// clusters for readers who expect the susceptibility-style definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AvgClusterMode {
    #[default]
    NodesOverClusters,
    WeightedExcludingGiant,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub avg_mode: AvgClusterMode,
}

/// Mean and standard error per index of a series.
#[derive(Debug, Clone, Default)]
pub struct SeriesStat {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Observables conditioned on the exact number of open bonds m = 0..=M.
#[derive(Debug, Clone)]
pub struct MicrocanonicalRecord {
    pub side: usize,
    pub iterations: u64,
    pub giant: SeriesStat,
    pub avg_cluster: SeriesStat,
    pub perfect: SeriesStat,
}

impl MicrocanonicalRecord {
    pub fn num_bonds(&self) -> usize {
        self.giant.mean.len() - 1
    }

    pub fn series(&self, obs: Observable) -> &SeriesStat {
        match obs {
            Observable::GiantFraction => &self.giant,
            Observable::AvgClusterSize => &self.avg_cluster,
            Observable::PerfectConnectivity => &self.perfect,
        }
    }
}

/// Observable curves over an edge-probability grid.
#[derive(Debug, Clone)]
pub struct PercolationCurve {
    pub side: usize,
    pub p_grid: Vec<f64>,
    pub giant: SeriesStat,
    pub avg_cluster: SeriesStat,
    pub perfect: SeriesStat,
}

impl PercolationCurve {
    pub fn series(&self, obs: Observable) -> &SeriesStat {
        match obs {
            Observable::GiantFraction => &self.giant,
            Observable::AvgClusterSize => &self.avg_cluster,
            Observable::PerfectConnectivity => &self.perfect,
        }
    }
}

/// Point estimate with standard error.
#[derive(Debug, Clone, Copy, Default)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Observable estimates from direct per-realization sampling.
#[derive(Debug, Clone, Copy)]
pub struct SampleStats {
    pub giant: Estimate,
    pub avg_cluster: Estimate,
    pub perfect: Estimate,
}

impl SampleStats {
    pub fn get(&self, obs: Observable) -> Estimate {
        match obs {
            Observable::GiantFraction => self.giant,
            Observable::AvgClusterSize => self.avg_cluster,
            Observable::PerfectConnectivity => self.perfect,
        }
    }
}

fn measure(uf: &UnionFind, nodes: f64, mode: AvgClusterMode) -> [f64; 3] {
    let giant = uf.max_cluster_size() as f64;
    let avg = match mode {
        AvgClusterMode::NodesOverClusters => nodes / uf.num_clusters() as f64,
        AvgClusterMode::WeightedExcludingGiant => {
            let rest = nodes - giant;
            if rest > 0.0 {
                (uf.sum_sq_sizes() - giant * giant) / rest
            } else {
                0.0
            }
        }
    };
    let perfect = if uf.num_clusters() == 1 { 1.0 } else { 0.0 };
    [giant / nodes, avg, perfect]
}

/// Observables of a single bond-addition sweep, indexed by bond count.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub giant: Vec<f64>,
    pub avg_cluster: Vec<f64>,
    pub perfect: Vec<f64>,
}

/// One full sweep: shuffle all bonds with `rng`, add them one at a time and
/// record every observable after each addition (index 0 is the empty lattice).
pub fn microcanonical_sweep(side: usize, rng: &mut impl Rng) -> SweepRecord {
    let lattice = GridLattice::new(side);
    let mut uf = UnionFind::new(lattice.num_nodes());
    let mut bonds: Vec<u32> = (0..lattice.num_bonds() as u32).collect();
    let mut rec = SweepRecord {
        giant: Vec::with_capacity(bonds.len() + 1),
        avg_cluster: Vec::with_capacity(bonds.len() + 1),
        perfect: Vec::with_capacity(bonds.len() + 1),
    };
    sweep_into(&lattice, &mut uf, &mut bonds, rng, SweepOptions::default(), |obs| {
        rec.giant.push(obs[0]);
        rec.avg_cluster.push(obs[1]);
        rec.perfect.push(obs[2]);
    });
    rec
}

fn sweep_into(
    lattice: &GridLattice,
    uf: &mut UnionFind,
    bonds: &mut [u32],
    rng: &mut impl Rng,
    opts: SweepOptions,
    mut sink: impl FnMut([f64; 3]),
) {
    uf.reset();
    bonds.shuffle(rng);
    let nodes = lattice.num_nodes() as f64;
    sink(measure(uf, nodes, opts.avg_mode));
    for &bond in bonds.iter() {
        let (a, b) = lattice.bond_endpoints(bond as usize);
        uf.union(a, b);
        sink(measure(uf, nodes, opts.avg_mode));
    }
}

struct MomentAcc {
    count: u64,
    sum: Vec<[f64; 3]>,
    sum_sq: Vec<[f64; 3]>,
}

impl MomentAcc {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            sum: vec![[0.0; 3]; len],
            sum_sq: vec![[0.0; 3]; len],
        }
    }

    fn merge(&mut self, other: &MomentAcc) {
        self.count += other.count;
        for (dst, src) in self.sum.iter_mut().zip(&other.sum) {
            for k in 0..3 {
                dst[k] += src[k];
            }
        }
        for (dst, src) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            for k in 0..3 {
                dst[k] += src[k];
            }
        }
    }

    fn finish(&self, side: usize) -> (SeriesStat, SeriesStat, SeriesStat) {
        let n = self.count as f64;
        let mut out = [SeriesStat::default(), SeriesStat::default(), SeriesStat::default()];
        for k in 0..3 {
            let len = self.sum.len();
            out[k].mean = Vec::with_capacity(len);
            out[k].stderr = Vec::with_capacity(len);
            for i in 0..len {
                let mean = self.sum[i][k] / n;
                let stderr = if self.count > 1 {
                    let var = (self.sum_sq[i][k] - n * mean * mean) / (n - 1.0);
                    (var.max(0.0) / n).sqrt()
                } else {
                    0.0
                };
                out[k].mean.push(mean);
                out[k].stderr.push(stderr);
            }
        }
        let _ = side;
        let [giant, avg, perfect] = out;
        (giant, avg, perfect)
    }
}

fn sweep_rng(seed: u64, sweep_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sweep_index);
    rng
}

/// Run `iterations` independent sweeps and average them.
///
/// Sweep i always draws from stream i of the seeded generator, and chunk
/// results are merged in a fixed order, so the outcome is identical for any
/// thread count and bit-identical across runs.
pub fn accumulate_sweeps(
    side: usize,
    iterations: u64,
    seed: u64,
    opts: SweepOptions,
) -> Result<MicrocanonicalRecord, PercolationError> {
    if iterations == 0 {
        return Err(PercolationError::NoIterations);
    }
    let lattice = GridLattice::new(side);
    let len = lattice.num_bonds() + 1;
    let chunks: Vec<u64> = (0..iterations.div_ceil(CHUNK)).collect();
    let partials: Vec<MomentAcc> = chunks
        .par_iter()
        .map(|&chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(iterations);
            let mut acc = MomentAcc::new(len);
            let mut uf = UnionFind::new(lattice.num_nodes());
            let mut bonds: Vec<u32> = (0..lattice.num_bonds() as u32).collect();
            for sweep in lo..hi {
                let mut rng = sweep_rng(seed, sweep);
                let mut idx = 0;
                sweep_into(&lattice, &mut uf, &mut bonds, &mut rng, opts, |obs| {
                    for k in 0..3 {
                        acc.sum[idx][k] += obs[k];
                        acc.sum_sq[idx][k] += obs[k] * obs[k];
                    }
                    idx += 1;
                });
                acc.count += 1;
            }
            acc
        })
        .collect();
    let mut total = MomentAcc::new(len);
    for part in &partials {
        total.merge(part);
    }
    let (giant, avg_cluster, perfect) = total.finish(side);
    Ok(MicrocanonicalRecord {
        side,
        iterations,
        giant,
        avg_cluster,
        perfect,
    })
}

/// Exact microcanonical expectations by enumerating every bond subset.
/// Only feasible for tiny lattices; gated at [`EXHAUSTIVE_MAX_BONDS`] bonds.
pub fn exhaustive_microcanonical(
    side: usize,
    opts: SweepOptions,
) -> Result<MicrocanonicalRecord, PercolationError> {
    let lattice = GridLattice::new(side);
    let bonds = lattice.num_bonds();
    if bonds > EXHAUSTIVE_MAX_BONDS {
        return Err(PercolationError::ExhaustiveTooLarge(bonds));
    }
    let nodes = lattice.num_nodes() as f64;
    let mut sums = vec![[0.0f64; 3]; bonds + 1];
    let mut counts = vec![0u64; bonds + 1];
    let mut uf = UnionFind::new(lattice.num_nodes());
    for mask in 0u64..(1u64 << bonds) {
        uf.reset();
        let m = mask.count_ones() as usize;
        for bond in 0..bonds {
            if mask & (1 << bond) != 0 {
                let (a, b) = lattice.bond_endpoints(bond);
                uf.union(a, b);
            }
        }
        let obs = measure(&uf, nodes, opts.avg_mode);
        for k in 0..3 {
            sums[m][k] += obs[k];
        }
        counts[m] += 1;
    }
    let mut giant = SeriesStat::default();
    let mut avg = SeriesStat::default();
    let mut perfect = SeriesStat::default();
    for m in 0..=bonds {
        let n = counts[m] as f64;
        giant.mean.push(sums[m][0] / n);
        avg.mean.push(sums[m][1] / n);
        perfect.mean.push(sums[m][2] / n);
        giant.stderr.push(0.0);
        avg.stderr.push(0.0);
        perfect.stderr.push(0.0);
    }
    Ok(MicrocanonicalRecord {
        side,
        iterations: 1u64 << bonds,
        giant,
        avg_cluster: avg,
        perfect,
    })
}

/// Binomial(M, p) weights over m = 0..=M, anchored at the mode so the
/// multiplicative recurrence never overflows; normalized to sum to one.
pub fn binomial_weights(total_bonds: usize, p: f64) -> Result<Vec<f64>, PercolationError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PercolationError::BadProbability(p));
    }
    let m_max = total_bonds;
    let mut w = vec![0.0f64; m_max + 1];
    if p == 0.0 {
        w[0] = 1.0;
        return Ok(w);
    }
    if p == 1.0 {
        w[m_max] = 1.0;
        return Ok(w);
    }
    let mode = (((m_max + 1) as f64) * p).floor() as usize;
    let mode = mode.min(m_max);
    let ratio = p / (1.0 - p);
    w[mode] = 1.0;
    for m in mode + 1..=m_max {
        w[m] = w[m - 1] * ((m_max - m + 1) as f64 / m as f64) * ratio;
    }
    for m in (0..mode).rev() {
        w[m] = w[m + 1] * ((m + 1) as f64 / (m_max - m) as f64) / ratio;
    }
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Mix microcanonical observables into curves over `p_grid` via the law of
/// total probability. Standard errors combine as the weighted sum, which is
/// deliberately conservative because Q_m values within one sweep correlate.
pub fn canonical_convolve(
    record: &MicrocanonicalRecord,
    p_grid: &[f64],
) -> Result<PercolationCurve, PercolationError> {
    let m_total = record.num_bonds();
    let mut curve = PercolationCurve {
        side: record.side,
        p_grid: p_grid.to_vec(),
        giant: SeriesStat::default(),
        avg_cluster: SeriesStat::default(),
        perfect: SeriesStat::default(),
    };
    for &p in p_grid {
        let weights = binomial_weights(m_total, p)?;
        for obs in Observable::ALL {
            let series = record.series(obs);
            let mut mean = 0.0;
            let mut err = 0.0;
            for m in 0..=m_total {
                mean += weights[m] * series.mean[m];
                err += weights[m] * series.stderr[m];
            }
            let target = match obs {
                Observable::GiantFraction => &mut curve.giant,
                Observable::AvgClusterSize => &mut curve.avg_cluster,
                Observable::PerfectConnectivity => &mut curve.perfect,
            };
            target.mean.push(mean);
            target.stderr.push(err);
        }
    }
    Ok(curve)
}

/// Direct Bernoulli realizations for per-edge probabilities: every iteration
/// opens each edge independently, clusters the lattice, and records the
/// observables. Deterministic for a given seed, independent of thread count.
pub fn inhomogeneous_sample(
    side: usize,
    edge_probs: &[f64],
    iterations: u64,
    seed: u64,
    opts: SweepOptions,
) -> Result<SampleStats, PercolationError> {
    if iterations == 0 {
        return Err(PercolationError::NoIterations);
    }
    let lattice = GridLattice::new(side);
    if edge_probs.len() != lattice.num_bonds() {
        return Err(PercolationError::EdgeCountMismatch {
            expected: lattice.num_bonds(),
            got: edge_probs.len(),
        });
    }
    if let Some(&bad) = edge_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(PercolationError::BadProbability(bad));
    }
    let nodes = lattice.num_nodes() as f64;
    let chunks: Vec<u64> = (0..iterations.div_ceil(CHUNK)).collect();
    let partials: Vec<MomentAcc> = chunks
        .par_iter()
        .map(|&chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(iterations);
            let mut acc = MomentAcc::new(1);
            let mut uf = UnionFind::new(lattice.num_nodes());
            for iter in lo..hi {
                let mut rng = sweep_rng(seed, iter);
                uf.reset();
                for (bond, &p) in edge_probs.iter().enumerate() {
                    if rng.random::<f64>() < p {
                        let (a, b) = lattice.bond_endpoints(bond);
                        uf.union(a, b);
                    }
                }
                let obs = measure(&uf, nodes, opts.avg_mode);
                for k in 0..3 {
                    acc.sum[0][k] += obs[k];
                    acc.sum_sq[0][k] += obs[k] * obs[k];
                }
                acc.count += 1;
            }
            acc
        })
        .collect();
    let mut total = MomentAcc::new(1);
    for part in &partials {
        total.merge(part);
    }
    let (giant, avg, perfect) = total.finish(side);
    Ok(SampleStats {
        giant: Estimate { mean: giant.mean[0], stderr: giant.stderr[0] },
        avg_cluster: Estimate { mean: avg.mean[0], stderr: avg.stderr[0] },
        perfect: Estimate { mean: perfect.mean[0], stderr: perfect.stderr[0] },
    })
}

/// First upward crossing of `level` by a series over `grid`, linearly
/// interpolated.
pub fn level_crossing(grid: &[f64], values: &[f64], level: f64) -> Option<f64> {
    if values.is_empty() || values[0] >= level {
        return None;
    }
    for i in 1..values.len() {
        if values[i] >= level {
            let (p0, p1) = (grid[i - 1], grid[i]);
            let (v0, v1) = (values[i - 1], values[i]);
            if v1 == v0 {
                return Some(p1);
            }
            return Some(p0 + (level - v0) * (p1 - p0) / (v1 - v0));
        }
    }
    None
}

/// Edge probability at which the giant fraction first reaches one half.
pub fn estimate_threshold(curve: &PercolationCurve) -> Result<f64, PercolationError> {
    level_crossing(&curve.p_grid, &curve.giant.mean, 0.5)
        .ok_or(PercolationError::NoCrossing(0.5))
}

/// Width of the giant-fraction transition: p at level `hi` minus p at `lo`.
pub fn transition_width(curve: &PercolationCurve, lo: f64, hi: f64) -> Result<f64, PercolationError> {
    let a = level_crossing(&curve.p_grid, &curve.giant.mean, lo)
        .ok_or(PercolationError::NoCrossing(lo))?;
    let b = level_crossing(&curve.p_grid, &curve.giant.mean, hi)
        .ok_or(PercolationError::NoCrossing(hi))?;
    Ok(b - a)
}

/// CSV rows `(m, observable, mean, stderr)` for a microcanonical record.
pub fn microcanonical_csv(record: &MicrocanonicalRecord) -> String {
    let mut out = String::from("m,observable,mean,stderr\n");
    for m in 0..=record.num_bonds() {
        for obs in Observable::ALL {
            let s = record.series(obs);
            out.push_str(&format!(
                "{},{},{},{}\n",
                m,
                obs.name(),
                fmt_compact(s.mean[m]),
                fmt_compact(s.stderr[m])
            ));
        }
    }
    out
}

/// CSV rows `(p, observable, mean, stderr)` for a canonical curve.
pub fn canonical_csv(curve: &PercolationCurve) -> String {
    let mut out = String::from("p,observable,mean,stderr\n");
    for (i, &p) in curve.p_grid.iter().enumerate() {
        for obs in Observable::ALL {
            let s = curve.series(obs);
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_compact(p),
                obs.name(),
                fmt_compact(s.mean[i]),
                fmt_compact(s.stderr[i])
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_sweep_side_two_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rec = microcanonical_sweep(2, &mut rng);
        assert_eq!(rec.giant.len(), 5);
        assert!(close(rec.giant[0], 0.25, 1e-15));
        assert!(close(rec.giant[4], 1.0, 1e-15));
        // Giant fraction never decreases within a sweep.
        for w in rec.giant.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn sweep_perfect_connectivity_needs_spanning_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rec = microcanonical_sweep(3, &mut rng);
            // 9 nodes need at least 8 bonds.
            for m in 0..8 {
                assert_eq!(rec.perfect[m], 0.0);
            }
        }
    }

    #[test]
    fn cluster_count_drops_once_per_merging_bond() {
        let lattice = GridLattice::new(4);
        let mut uf = UnionFind::new(lattice.num_nodes());
        let mut bonds: Vec<u32> = (0..lattice.num_bonds() as u32).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        bonds.shuffle(&mut rng);
        let mut seen_max = 1usize;
        for &bond in &bonds {
            let before = uf.num_clusters();
            let (a, b) = lattice.bond_endpoints(bond as usize);
            let merged = uf.union(a, b);
            let expected = before - merged as usize;
            assert_eq!(uf.num_clusters(), expected);
            seen_max = seen_max.max(uf.max_cluster_size());
            assert!(uf.max_cluster_size() >= seen_max);
        }
        assert_eq!(uf.num_clusters(), 1);
    }

    #[test]
    fn accumulate_single_iteration_equals_sweep() {
        let rec = accumulate_sweeps(3, 1, 42, SweepOptions::default()).unwrap();
        let mut rng = sweep_rng(42, 0);
        let single = microcanonical_sweep(3, &mut rng);
        assert_eq!(rec.giant.mean, single.giant);
        assert_eq!(rec.avg_cluster.mean, single.avg_cluster);
        assert_eq!(rec.perfect.mean, single.perfect);
    }

    #[test]
    fn accumulate_is_deterministic() {
        let a = accumulate_sweeps(4, 300, 7, SweepOptions::default()).unwrap();
        let b = accumulate_sweeps(4, 300, 7, SweepOptions::default()).unwrap();
        assert_eq!(a.giant.mean, b.giant.mean);
        assert_eq!(a.perfect.stderr, b.perfect.stderr);
    }

    #[test]
    fn stderr_shrinks_roughly_with_root_iterations() {
        let small = accumulate_sweeps(8, 1000, 9, SweepOptions::default()).unwrap();
        let large = accumulate_sweeps(8, 2000, 9, SweepOptions::default()).unwrap();
        // Compare near the transition where variance is largest.
        let m = small.num_bonds() / 2;
        let ratio = large.giant.stderr[m] / small.giant.stderr[m];
        let expected = (0.5f64).sqrt();
        assert!(
            (ratio / expected - 1.0).abs() < 0.2,
            "ratio {ratio} expected near {expected}"
        );
    }

    #[test]
    fn exhaustive_side_two_known_values() {
        let rec = exhaustive_microcanonical(2, SweepOptions::default()).unwrap();
        assert!(close(rec.giant.mean[0], 0.25, 1e-15));
        assert!(close(rec.giant.mean[4], 1.0, 1e-15));
        // No pair of bonds spans the 4-cycle, every triple does.
        assert_eq!(rec.perfect.mean[2], 0.0);
        assert_eq!(rec.perfect.mean[3], 1.0);
    }

    #[test]
    fn exhaustive_rejects_large_lattices() {
        assert!(matches!(
            exhaustive_microcanonical(5, SweepOptions::default()),
            Err(PercolationError::ExhaustiveTooLarge(40))
        ));
    }

    #[test]
    fn binomial_weights_match_direct_eval() {
        let w = binomial_weights(4, 0.5).unwrap();
        let expect = [1.0, 4.0, 6.0, 4.0, 1.0].map(|x| x / 16.0);
        for (a, b) in w.iter().zip(expect) {
            assert!(close(*a, b, 1e-14));
        }
        assert_eq!(binomial_weights(6, 0.0).unwrap()[0], 1.0);
        assert_eq!(binomial_weights(6, 1.0).unwrap()[6], 1.0);
    }

    #[test]
    fn binomial_weights_normalize_for_huge_m() {
        let w = binomial_weights(1_000_000, 0.3).unwrap();
        let total: f64 = w.iter().sum();
        assert!(close(total, 1.0, 1e-12));
        assert!(w.iter().all(|&x| x.is_finite() && x >= 0.0));
    }

    #[test]
    fn convolve_constant_and_linear_records() {
        let m_total = 2;
        let flat = SeriesStat { mean: vec![0.7; m_total + 1], stderr: vec![0.0; m_total + 1] };
        let linear = SeriesStat {
            mean: (0..=m_total).map(|m| m as f64).collect(),
            stderr: vec![0.0; m_total + 1],
        };
        let record = MicrocanonicalRecord {
            side: 2,
            iterations: 1,
            giant: flat.clone(),
            avg_cluster: linear,
            perfect: flat,
        };
        let grid = [0.0, 0.25, 0.5, 0.9];
        let curve = canonical_convolve(&record, &grid).unwrap();
        for (i, &p) in grid.iter().enumerate() {
            assert!(close(curve.giant.mean[i], 0.7, 1e-12));
            assert!(close(curve.avg_cluster.mean[i], 2.0 * p, 1e-12), "p={p}");
        }
    }

    #[test]
    fn convolve_is_linear_in_the_record() {
        let m_total = 6;
        let a: Vec<f64> = (0..=m_total).map(|m| (m as f64).sin().abs()).collect();
        let b: Vec<f64> = (0..=m_total).map(|m| 0.3 + 0.05 * m as f64).collect();
        let zeros = vec![0.0; m_total + 1];
        let make = |mean: Vec<f64>| MicrocanonicalRecord {
            side: 2,
            iterations: 1,
            giant: SeriesStat { mean, stderr: zeros.clone() },
            avg_cluster: SeriesStat { mean: zeros.clone(), stderr: zeros.clone() },
            perfect: SeriesStat { mean: zeros.clone(), stderr: zeros.clone() },
        };
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let grid = [0.2, 0.6];
        let ca = canonical_convolve(&make(a), &grid).unwrap();
        let cb = canonical_convolve(&make(b), &grid).unwrap();
        let cs = canonical_convolve(&make(sum), &grid).unwrap();
        for i in 0..grid.len() {
            assert!(close(ca.giant.mean[i] + cb.giant.mean[i], cs.giant.mean[i], 1e-12));
        }
    }

    #[test]
    fn threshold_interpolates_synthetic_crossing() {
        let p_grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let values: Vec<f64> = p_grid
            .iter()
            .map(|&p| (0.5 + 3.0 * (p - 0.42)).clamp(0.0, 1.0))
            .collect();
        let curve = PercolationCurve {
            side: 2,
            p_grid: p_grid.clone(),
            giant: SeriesStat { mean: values, stderr: vec![0.0; p_grid.len()] },
            avg_cluster: SeriesStat::default(),
            perfect: SeriesStat::default(),
        };
        let t = estimate_threshold(&curve).unwrap();
        assert!(close(t, 0.42, 1e-12));
    }

    #[test]
    fn threshold_errors_without_crossing() {
        let curve = PercolationCurve {
            side: 2,
            p_grid: vec![0.0, 0.1],
            giant: SeriesStat { mean: vec![0.1, 0.2], stderr: vec![0.0, 0.0] },
            avg_cluster: SeriesStat::default(),
            perfect: SeriesStat::default(),
        };
        assert!(estimate_threshold(&curve).is_err());
    }

    #[test]
    fn inhomogeneous_all_open_is_perfectly_connected() {
        let probs = vec![1.0; GridLattice::new(3).num_bonds()];
        let stats = inhomogeneous_sample(3, &probs, 10, 1, SweepOptions::default()).unwrap();
        assert_eq!(stats.perfect.mean, 1.0);
        assert_eq!(stats.giant.mean, 1.0);
    }

    #[test]
    fn inhomogeneous_rejects_bad_input() {
        assert!(inhomogeneous_sample(3, &[0.5; 3], 5, 1, SweepOptions::default()).is_err());
        let mut probs = vec![0.5; GridLattice::new(3).num_bonds()];
        probs[4] = 1.5;
        assert!(inhomogeneous_sample(3, &probs, 5, 1, SweepOptions::default()).is_err());
    }
}
