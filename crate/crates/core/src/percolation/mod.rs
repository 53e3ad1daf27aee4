//! Connectivity observables of the intersection lattice: microcanonical bond
//! sweeps, the binomial mixture to probability curves, direct sampling for
//! unequal edge probabilities, and threshold estimation.

mod engine;
mod union_find;

pub use engine::{
    accumulate_sweeps, binomial_weights, canonical_convolve, canonical_csv, estimate_threshold,
    exhaustive_microcanonical, inhomogeneous_sample, level_crossing, microcanonical_csv,
    microcanonical_sweep, transition_width, AvgClusterMode, Estimate, MicrocanonicalRecord,
    Observable, PercolationCurve, PercolationError, SampleStats, SeriesStat, SweepOptions,
    SweepRecord, EXHAUSTIVE_MAX_BONDS,
};
pub use union_find::UnionFind;
