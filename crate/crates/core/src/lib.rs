//! Two-dimensional connectivity analysis for grid-city vehicular networks.
//!
//! The crate chains four pieces:
//!
//! 1. [`model`] — city topology, speed classes, and run configuration.
//! 2. [`traffic`] — open queueing-network traffic equations giving per-node
//!    arrival rates and Poisson vehicle densities.
//! 3. [`connectivity`] — per-street edge-open probabilities, exact for one
//!    transmission range and lower-bounded for two.
//! 4. [`percolation`] — fast bond-percolation observables on the intersection
//!    lattice (giant cluster, average cluster size, perfect connectivity).
//!
//! A time-stepped microscopic simulator ([`sim`]) produces the same
//! statistics empirically and is used to validate the analytic chain, and
//! [`scenario`] orchestrates the standard experiment suites behind the CLI.

pub mod connectivity;
pub mod lattice;
pub mod model;
pub mod numeric;
pub mod percolation;
pub mod scenario;
pub mod sim;
pub mod traffic;

pub use lattice::GridLattice;
pub use model::{
    build_city, validate_config, CityTopology, ConfigError, RunConfig, SpeedClass, Street,
    StreetGeometry,
};
pub use percolation::{MicrocanonicalRecord, PercolationCurve, UnionFind};
pub use traffic::{RoutingMatrix, TrafficSolution};
