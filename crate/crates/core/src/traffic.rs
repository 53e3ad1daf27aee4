//! Open queueing-network traffic model of the city.
//!
//! Every street direction is a chain of three infinite-server queue nodes
//! (front, middle, end) with 2/3/2 vehicle classes. Departing end-node
//! traffic splits over the neighbouring streets' front nodes according to the
//! turn table, or leaves the network at the boundary. The stationary
//! per-node, per-class arrival rates solve the linear traffic equations
//! `alpha = lambda + R^T alpha`, and the node occupancies are Poisson with
//! mean `rho = alpha / mu`.

use thiserror::Error;

use crate::model::{
    build_turn_table, CityTopology, Direction, RunConfig, Segment, SpeedClass, TurnTable,
};
use crate::numeric::{fmt_compact, poisson_pmf, LnFactorial};

/// Residual bound the solver must meet, in max norm.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Above this many unknowns the dense LU solve gives way to fixed-point
/// iteration.
const DENSE_LIMIT: usize = 2500;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("speed class {0} has non-positive v_min; harmonic mean speed diverges")]
    InvalidSpeedClass(String),
    #[error("segment length must be positive, got {0}")]
    InvalidLength(f64),
    #[error("traffic equations did not reach residual {RESIDUAL_TOL:e}; attained {residual:e}")]
    NotConverged { residual: f64 },
    #[error("routing matrix is singular (zero pivot at row {0})")]
    Singular(usize),
    #[error("dimension mismatch: routing has {routing} rows, rates vector has {rates}")]
    DimensionMismatch { routing: usize, rates: usize },
}

/// Flat indexing over (street, direction, segment, class): seven class slots
/// per street direction, fourteen per street.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassLayout {
    num_streets: usize,
}

const SEGMENT_OFFSET: [usize; 3] = [0, 2, 5];
pub const CLASSES_PER_DIRECTION: usize = 7;

impl ClassLayout {
    pub fn new(num_streets: usize) -> Self {
        Self { num_streets }
    }

    pub fn dim(&self) -> usize {
        self.num_streets * 2 * CLASSES_PER_DIRECTION
    }

    pub fn num_streets(&self) -> usize {
        self.num_streets
    }

    pub fn flat(&self, street: u32, dir: Direction, segment: Segment, class: usize) -> usize {
        debug_assert!(class < segment.class_count());
        (street as usize * 2 + dir.index()) * CLASSES_PER_DIRECTION
            + SEGMENT_OFFSET[segment.index()]
            + class
    }

    /// Inverse of [`ClassLayout::flat`].
    pub fn unflat(&self, index: usize) -> (u32, Direction, Segment, usize) {
        let slot = index % CLASSES_PER_DIRECTION;
        let dir_street = index / CLASSES_PER_DIRECTION;
        let dir = if dir_street % 2 == 0 { Direction::Forward } else { Direction::Backward };
        let street = (dir_street / 2) as u32;
        let (segment, class) = match slot {
            0 | 1 => (Segment::Front, slot),
            2..=4 => (Segment::Middle, slot - 2),
            _ => (Segment::End, slot - 5),
        };
        (street, dir, segment, class)
    }
}

/// Sparse row-stochastic routing over (node, class) pairs, plus the exit
/// column for departures to the outside world.
#[derive(Debug, Clone)]
pub struct RoutingMatrix {
    layout: ClassLayout,
    rows: Vec<Vec<(u32, f64)>>,
    exit: Vec<f64>,
}

impl RoutingMatrix {
    pub fn layout(&self) -> ClassLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn row(&self, index: usize) -> &[(u32, f64)] {
        &self.rows[index]
    }

    pub fn exit_prob(&self, index: usize) -> f64 {
        self.exit[index]
    }

    /// Max deviation of any row sum (entries plus exit) from one.
    pub fn max_row_defect(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.exit)
            .map(|(row, &exit)| {
                let sum: f64 = exit + row.iter().map(|&(_, p)| p).sum::<f64>();
                (sum - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Build the routing matrix: deterministic front -> middle -> end chaining
/// through the class-transition matrices inside each street direction, and
/// end-node mass distributed over the outgoing front nodes by the turn table
/// (boundary exit mass goes to the exit column).
pub fn build_routing_matrix(topology: &CityTopology, config: &RunConfig) -> RoutingMatrix {
    let turn_table = build_turn_table(topology, config);
    build_routing_with_turns(topology, config, &turn_table)
}

pub fn build_routing_with_turns(
    topology: &CityTopology,
    config: &RunConfig,
    turn_table: &TurnTable,
) -> RoutingMatrix {
    let layout = ClassLayout::new(topology.streets().len());
    let mut rows = vec![Vec::new(); layout.dim()];
    let mut exit = vec![0.0; layout.dim()];
    for street in topology.streets() {
        for dir in Direction::BOTH {
            for class in 0..Segment::Front.class_count() {
                let from = layout.flat(street.id, dir, Segment::Front, class);
                for (target, &p) in config.transitions.front_to_middle[class].iter().enumerate() {
                    if p > 0.0 {
                        let to = layout.flat(street.id, dir, Segment::Middle, target);
                        rows[from].push((to as u32, p));
                    }
                }
            }
            for class in 0..Segment::Middle.class_count() {
                let from = layout.flat(street.id, dir, Segment::Middle, class);
                for (target, &p) in config.transitions.middle_to_end[class].iter().enumerate() {
                    if p > 0.0 {
                        let to = layout.flat(street.id, dir, Segment::End, target);
                        rows[from].push((to as u32, p));
                    }
                }
            }
            let decision = turn_table.decision(street.id, dir);
            for class in 0..Segment::End.class_count() {
                let from = layout.flat(street.id, dir, Segment::End, class);
                for choice in &decision.choices {
                    for (target, &p) in config.transitions.end_to_front[class].iter().enumerate() {
                        let prob = choice.prob * p;
                        if prob > 0.0 {
                            let to =
                                layout.flat(choice.street, choice.direction, Segment::Front, target);
                            rows[from].push((to as u32, prob));
                        }
                    }
                }
                exit[from] = decision.exit_prob;
            }
        }
    }
    RoutingMatrix { layout, rows, exit }
}

/// Exogenous class arrival rates: every entrance feeds its street direction's
/// front node, split across front classes per the configured split.
pub fn exogenous_rates(topology: &CityTopology, config: &RunConfig) -> Vec<f64> {
    let layout = ClassLayout::new(topology.streets().len());
    let mut lambda = vec![0.0; layout.dim()];
    for entrance in topology.entrances() {
        for (class, &share) in config.entrance_class_split.iter().enumerate() {
            lambda[layout.flat(entrance.street, entrance.direction, Segment::Front, class)] +=
                entrance.rate * share;
        }
    }
    lambda
}

/// Mean service rate of a speed class over a segment of the given length:
/// `mu = 1 / (length * E[1/V])`. For a uniform speed band this is
/// `(v_max - v_min) / (length * ln(v_max / v_min))`.
pub fn mean_service_rate(class: &SpeedClass, length: f64) -> Result<f64, TrafficError> {
    if !(class.v_min > 0.0) {
        return Err(TrafficError::InvalidSpeedClass(class.name.clone()));
    }
    if !(length > 0.0) {
        return Err(TrafficError::InvalidLength(length));
    }
    Ok(1.0 / (length * class.mean_reciprocal_speed()))
}

/// Per-(node, class) service rates for the whole city.
pub fn service_rates(topology: &CityTopology, config: &RunConfig) -> Result<Vec<f64>, TrafficError> {
    let layout = ClassLayout::new(topology.streets().len());
    let mut mu = vec![0.0; layout.dim()];
    for street in topology.streets() {
        for dir in Direction::BOTH {
            for segment in Segment::ALL {
                let classes = match segment {
                    Segment::Front => &config.speeds.front[..],
                    Segment::Middle => &config.speeds.middle[..],
                    Segment::End => &config.speeds.end[..],
                };
                let length = segment.length(&street.geometry);
                for (class, speed) in classes.iter().enumerate() {
                    mu[layout.flat(street.id, dir, segment, class)] =
                        mean_service_rate(speed, length)?;
                }
            }
        }
    }
    Ok(mu)
}

/// Stationary solution of the traffic equations.
#[derive(Debug, Clone)]
pub struct TrafficSolution {
    layout: ClassLayout,
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    pub lambda: Vec<f64>,
    pub residual: f64,
}

impl TrafficSolution {
    pub fn layout(&self) -> ClassLayout {
        self.layout
    }

    pub fn alpha_at(&self, street: u32, dir: Direction, segment: Segment, class: usize) -> f64 {
        self.alpha[self.layout.flat(street, dir, segment, class)]
    }

    pub fn rho_at(&self, street: u32, dir: Direction, segment: Segment, class: usize) -> f64 {
        self.rho[self.layout.flat(street, dir, segment, class)]
    }

    /// Class-summed mean vehicle count of one directed queue node.
    pub fn node_rho(&self, street: u32, dir: Direction, segment: Segment) -> f64 {
        (0..segment.class_count())
            .map(|c| self.rho_at(street, dir, segment, c))
            .sum()
    }

    /// Class-summed arrival rate of one directed queue node.
    pub fn node_alpha(&self, street: u32, dir: Direction, segment: Segment) -> f64 {
        (0..segment.class_count())
            .map(|c| self.alpha_at(street, dir, segment, c))
            .sum()
    }

    /// CSV export: one row per (street, direction, segment, class).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("street_id,direction,segment,class,alpha,mu,rho\n");
        for street in 0..self.layout.num_streets() as u32 {
            for dir in Direction::BOTH {
                for segment in Segment::ALL {
                    for class in 0..segment.class_count() {
                        let i = self.layout.flat(street, dir, segment, class);
                        out.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            street,
                            dir.name(),
                            segment.name(),
                            class,
                            fmt_compact(self.alpha[i]),
                            fmt_compact(self.mu[i]),
                            fmt_compact(self.rho[i])
                        ));
                    }
                }
            }
        }
        out
    }
}

fn residual_max_norm(routing: &RoutingMatrix, lambda: &[f64], alpha: &[f64]) -> f64 {
    let mut expect = lambda.to_vec();
    for (from, row) in routing.rows.iter().enumerate() {
        let a = alpha[from];
        if a != 0.0 {
            for &(to, p) in row {
                expect[to as usize] += a * p;
            }
        }
    }
    alpha
        .iter()
        .zip(&expect)
        .map(|(a, e)| (a - e).abs())
        .fold(0.0, f64::max)
}

/// Dense LU with partial pivoting; solves in place, `b` becomes the solution.
fn lu_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<(), TrafficError> {
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[perm[col] * n + col].abs();
        for row in col + 1..n {
            let cand = a[perm[row] * n + col].abs();
            if cand > best {
                best = cand;
                pivot = row;
            }
        }
        if best == 0.0 {
            return Err(TrafficError::Singular(col));
        }
        perm.swap(col, pivot);
        let prow = perm[col];
        let diag = a[prow * n + col];
        for row in col + 1..n {
            let r = perm[row];
            let factor = a[r * n + col] / diag;
            if factor != 0.0 {
                a[r * n + col] = factor;
                for k in col + 1..n {
                    a[r * n + k] -= factor * a[prow * n + k];
                }
            }
        }
    }
    let mut y = vec![0.0; n];
    for row in 0..n {
        let mut value = b[perm[row]];
        for col in 0..row {
            value -= a[perm[row] * n + col] * y[col];
        }
        y[row] = value;
    }
    for row in (0..n).rev() {
        let mut value = y[row];
        for col in row + 1..n {
            value -= a[perm[row] * n + col] * b[col];
        }
        b[row] = value / a[perm[row] * n + row];
    }
    Ok(())
}

fn solve_alpha_dense(routing: &RoutingMatrix, lambda: &[f64]) -> Result<Vec<f64>, TrafficError> {
    let n = routing.dim();
    // A = I - R^T, so that A alpha = lambda.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for (from, row) in routing.rows.iter().enumerate() {
        for &(to, p) in row {
            a[to as usize * n + from] -= p;
        }
    }
    let mut x = lambda.to_vec();
    lu_solve(&mut a, n, &mut x)?;
    Ok(x)
}

fn solve_alpha_iterative(routing: &RoutingMatrix, lambda: &[f64]) -> Vec<f64> {
    let n = routing.dim();
    let mut alpha = lambda.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..500_000 {
        next.copy_from_slice(lambda);
        for (from, row) in routing.rows.iter().enumerate() {
            let a = alpha[from];
            if a != 0.0 {
                for &(to, p) in row {
                    next[to as usize] += a * p;
                }
            }
        }
        let delta = alpha
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut alpha, &mut next);
        if delta < 1e-13 {
            break;
        }
    }
    alpha
}

/// Solve `alpha = lambda + R^T alpha`.
///
/// The contract is the residual, not the method: a dense LU solve for
/// moderate systems, fixed-point iteration beyond that. Either way the
/// result must satisfy the equations to [`RESIDUAL_TOL`] in max norm.
pub fn solve_traffic_equations(
    routing: &RoutingMatrix,
    lambda: &[f64],
    mu: &[f64],
) -> Result<TrafficSolution, TrafficError> {
    let n = routing.dim();
    if lambda.len() != n || mu.len() != n {
        return Err(TrafficError::DimensionMismatch { routing: n, rates: lambda.len() });
    }
    let alpha = if n <= DENSE_LIMIT {
        solve_alpha_dense(routing, lambda)?
    } else {
        solve_alpha_iterative(routing, lambda)
    };
    let residual = residual_max_norm(routing, lambda, &alpha);
    if !(residual <= RESIDUAL_TOL) {
        return Err(TrafficError::NotConverged { residual });
    }
    let rho: Vec<f64> = alpha.iter().zip(mu).map(|(a, m)| a / m).collect();
    Ok(TrafficSolution {
        layout: routing.layout(),
        alpha,
        mu: mu.to_vec(),
        rho,
        lambda: lambda.to_vec(),
        residual,
    })
}

/// Full pipeline for a city: routing, exogenous rates, service rates, solve.
pub fn solve_city(
    topology: &CityTopology,
    config: &RunConfig,
) -> Result<TrafficSolution, TrafficError> {
    let routing = build_routing_matrix(topology, config);
    let lambda = exogenous_rates(topology, config);
    let mu = service_rates(topology, config)?;
    solve_traffic_equations(&routing, &lambda, &mu)
}

/// Physical street sections for connectivity purposes, oriented along the
/// forward direction. Radio links ignore travel direction, so each section
/// sums the two directed queue nodes that occupy the same span of road:
/// the forward front shares its 200 m with the backward end, and vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreetSection {
    Near,
    Middle,
    Far,
}

/// Class-summed, direction-summed mean vehicle count of one physical section
/// of a street.
pub fn segment_densities(
    solution: &TrafficSolution,
    street: u32,
    section: StreetSection,
) -> f64 {
    match section {
        StreetSection::Near => {
            solution.node_rho(street, Direction::Forward, Segment::Front)
                + solution.node_rho(street, Direction::Backward, Segment::End)
        }
        StreetSection::Middle => {
            solution.node_rho(street, Direction::Forward, Segment::Middle)
                + solution.node_rho(street, Direction::Backward, Segment::Middle)
        }
        StreetSection::Far => {
            solution.node_rho(street, Direction::Forward, Segment::End)
                + solution.node_rho(street, Direction::Backward, Segment::Front)
        }
    }
}

/// The three section densities (near, middle, far) of a street.
pub fn street_section_densities(solution: &TrafficSolution, street: u32) -> [f64; 3] {
    [
        segment_densities(solution, street, StreetSection::Near),
        segment_densities(solution, street, StreetSection::Middle),
        segment_densities(solution, street, StreetSection::Far),
    ]
}

/// Product-form stationary probability of seeing exactly `counts[u]`
/// class-u vehicles at one directed queue node. Nodes are independent, so
/// joint probabilities multiply.
pub fn spatial_distribution_pmf(
    solution: &TrafficSolution,
    street: u32,
    dir: Direction,
    segment: Segment,
    counts: &[usize],
) -> f64 {
    assert_eq!(counts.len(), segment.class_count(), "one count per class");
    let mut lnf = LnFactorial::new();
    let mut prob = 1.0;
    for (class, &n) in counts.iter().enumerate() {
        prob *= poisson_pmf(n, solution.rho_at(street, dir, segment, class), &mut lnf);
    }
    prob
}

/// Total exogenous inflow, vehicles/second.
pub fn total_inflow(lambda: &[f64]) -> f64 {
    lambda.iter().sum()
}

/// Total departure rate to the outside world, vehicles/second.
pub fn total_outflow(routing: &RoutingMatrix, solution: &TrafficSolution) -> f64 {
    solution
        .alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| a * routing.exit_prob(i))
        .sum()
}
