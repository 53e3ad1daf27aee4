//! Time-stepped microscopic vehicle simulation.
//!
//! Vehicles arrive at the boundary entrances, traverse each street in the
//! three familiar phases (redrawing class and speed at every segment
//! boundary), turn at intersections according to the same decision table the
//! queueing model routes with, and leave the grid at the boundary. Vehicles
//! never interact, matching the sparse-regime assumption of the analytic
//! model. Snapshots project both travel directions of a street onto its axis
//! and mark the street open when no gap beats the link rule; clustering the
//! intersections over open streets yields the same three observables the
//! percolation engine reports.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    build_turn_table, CityTopology, Direction, RunConfig, Segment, SpeedClass, TransmissionModel,
    TurnTable,
};
use crate::numeric::fmt_compact;
use crate::percolation::{Estimate, UnionFind};

/// Bernoulli-per-step arrival sampling needs rate*dt safely below one; this
/// bound keeps the thinning bias under half a percent.
pub const MAX_RATE_DT: f64 = 0.1;

const MIN_BATCHES: usize = 20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("rate*dt = {0} violates the thinning bound {MAX_RATE_DT}; shrink sim.dt")]
    TimeStepTooLarge(f64),
    #[error("warm-up {warm_up} s leaves no measurement window in run_length {run_length} s")]
    RunTooShort { warm_up: f64, run_length: f64 },
    #[error("only {samples} snapshots for {MIN_BATCHES} batches; lengthen the run or shrink sample_interval")]
    TooFewSamples { samples: usize },
}

/// Whether a gap between two vehicles is bridged by the larger or the
/// smaller of their transmission ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkRule {
    #[default]
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    pub street: u32,
    pub direction: Direction,
    pub segment: Segment,
    /// Position within the current segment, meters from its start.
    pub offset: f64,
    pub speed: f64,
    pub class: u8,
    pub range: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SimState {
    pub time: f64,
    pub vehicles: Vec<Vehicle>,
    pub injected: u64,
    pub exited: u64,
    next_id: u64,
}

/// Street-open flags and cluster statistics at one sample instant.
#[derive(Debug, Clone)]
pub struct SimulationSnapshot {
    pub time: f64,
    pub open: Vec<bool>,
    pub giant_fraction: f64,
    pub avg_cluster_size: f64,
    pub perfect: f64,
    /// Vehicle count per directed queue node (street * 6 + dir * 3 + segment).
    pub node_counts: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SimAggregates {
    pub giant: Estimate,
    pub avg_cluster: Estimate,
    pub perfect: Estimate,
    /// Fraction of snapshots in which each street was open.
    pub street_open_freq: Vec<f64>,
    /// Time-average vehicle count per directed queue node.
    pub node_count_mean: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub snapshots: Vec<SimulationSnapshot>,
    pub aggregates: SimAggregates,
    pub warm_up: f64,
}

/// Immutable simulation machinery: topology, decision tables, and sampling
/// parameters. One `SimState` evolves under it on a single logical timeline.
pub struct Simulator<'a> {
    topology: &'a CityTopology,
    config: &'a RunConfig,
    turn_table: TurnTable,
    link_rule: LinkRule,
}

fn draw_index(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let mut u: f64 = rng.random();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

fn draw_speed(rng: &mut impl Rng, class: &SpeedClass) -> f64 {
    if class.v_min == class.v_max {
        class.v_min
    } else {
        rng.random_range(class.v_min..class.v_max)
    }
}

impl<'a> Simulator<'a> {
    pub fn new(topology: &'a CityTopology, config: &'a RunConfig) -> Result<Self, SimError> {
        let worst = topology
            .entrances()
            .iter()
            .map(|e| e.rate * config.sim.dt)
            .fold(0.0, f64::max);
        if worst >= MAX_RATE_DT {
            return Err(SimError::TimeStepTooLarge(worst));
        }
        Ok(Self {
            topology,
            config,
            turn_table: build_turn_table(topology, config),
            link_rule: LinkRule::Max,
        })
    }

    pub fn with_link_rule(mut self, rule: LinkRule) -> Self {
        self.link_rule = rule;
        self
    }

    fn speed_classes(&self, segment: Segment) -> &[SpeedClass] {
        match segment {
            Segment::Front => &self.config.speeds.front,
            Segment::Middle => &self.config.speeds.middle,
            Segment::End => &self.config.speeds.end,
        }
    }

    fn draw_range(&self, rng: &mut impl Rng) -> f64 {
        match self.config.transmission {
            TransmissionModel::Single { range } => range,
            TransmissionModel::Dual { x1, x2, prob_short } => {
                if rng.random::<f64>() < prob_short {
                    x1
                } else {
                    x2
                }
            }
        }
    }

    /// Longest expected traversal of one street: per segment, the slowest
    /// class's mean transit time. Used for the default warm-up.
    pub fn expected_max_traversal(&self) -> f64 {
        Segment::ALL
            .iter()
            .map(|&segment| {
                let length = segment.length(&self.config.geometry);
                self.speed_classes(segment)
                    .iter()
                    .map(|class| length * class.mean_reciprocal_speed())
                    .fold(0.0, f64::max)
            })
            .sum()
    }

    pub fn warm_up_time(&self) -> f64 {
        self.config.sim.warm_up.unwrap_or(3.0 * self.expected_max_traversal())
    }

    /// Advance the state by one time step: move every vehicle (crossing
    /// segment boundaries and intersections as needed), then inject new
    /// arrivals at the entrances.
    pub fn step(&self, state: &mut SimState, rng: &mut impl Rng) {
        let dt = self.config.sim.dt;
        let mut i = 0;
        while i < state.vehicles.len() {
            if self.advance_vehicle(&mut state.vehicles[i], dt, rng) {
                i += 1;
            } else {
                state.vehicles.swap_remove(i);
                state.exited += 1;
            }
        }
        for entrance in self.topology.entrances() {
            if entrance.rate > 0.0 && rng.random::<f64>() < entrance.rate * dt {
                let class = draw_index(rng, &self.config.entrance_class_split);
                let speed = draw_speed(rng, &self.config.speeds.front[class]);
                let range = self.draw_range(rng);
                state.vehicles.push(Vehicle {
                    id: state.next_id,
                    street: entrance.street,
                    direction: entrance.direction,
                    segment: Segment::Front,
                    offset: 0.0,
                    speed,
                    class: class as u8,
                    range,
                });
                state.next_id += 1;
                state.injected += 1;
            }
        }
        state.time += dt;
    }

    /// Returns false when the vehicle exits the grid.
    fn advance_vehicle(&self, vehicle: &mut Vehicle, dt: f64, rng: &mut impl Rng) -> bool {
        let mut remaining = dt;
        loop {
            let geometry = &self.topology.street(vehicle.street).geometry;
            let seg_len = vehicle.segment.length(geometry);
            let time_to_boundary = (seg_len - vehicle.offset) / vehicle.speed;
            if time_to_boundary > remaining {
                vehicle.offset += vehicle.speed * remaining;
                return true;
            }
            remaining -= time_to_boundary;
            match vehicle.segment {
                Segment::Front => {
                    let next = draw_index(
                        rng,
                        &self.config.transitions.front_to_middle[vehicle.class as usize],
                    );
                    vehicle.segment = Segment::Middle;
                    vehicle.class = next as u8;
                    vehicle.speed = draw_speed(rng, &self.config.speeds.middle[next]);
                    vehicle.offset = 0.0;
                }
                Segment::Middle => {
                    let next = draw_index(
                        rng,
                        &self.config.transitions.middle_to_end[vehicle.class as usize],
                    );
                    vehicle.segment = Segment::End;
                    vehicle.class = next as u8;
                    vehicle.speed = draw_speed(rng, &self.config.speeds.end[next]);
                    vehicle.offset = 0.0;
                }
                Segment::End => {
                    let decision = self.turn_table.decision(vehicle.street, vehicle.direction);
                    let mut u: f64 = rng.random();
                    if u < decision.exit_prob {
                        return false;
                    }
                    u -= decision.exit_prob;
                    let mut chosen = decision.choices.last().expect("boundary exits covered");
                    for choice in &decision.choices {
                        if u < choice.prob {
                            chosen = choice;
                            break;
                        }
                        u -= choice.prob;
                    }
                    let next = draw_index(
                        rng,
                        &self.config.transitions.end_to_front[vehicle.class as usize],
                    );
                    vehicle.street = chosen.street;
                    vehicle.direction = chosen.direction;
                    vehicle.segment = Segment::Front;
                    vehicle.class = next as u8;
                    vehicle.speed = draw_speed(rng, &self.config.speeds.front[next]);
                    vehicle.offset = 0.0;
                }
            }
        }
    }

    /// Axis position of a vehicle along its street, measured from the
    /// forward direction's start, in meters.
    fn axis_position(&self, vehicle: &Vehicle) -> f64 {
        let geometry = &self.topology.street(vehicle.street).geometry;
        let along = match vehicle.segment {
            Segment::Front => vehicle.offset,
            Segment::Middle => geometry.len_front + vehicle.offset,
            Segment::End => geometry.len_front + geometry.len_middle + vehicle.offset,
        };
        match vehicle.direction {
            Direction::Forward => along,
            Direction::Backward => geometry.total_length() - along,
        }
    }

    /// Whether a street is radio-connected end to end given the projected
    /// vehicles of both directions. Endpoint gaps check against the single
    /// adjacent vehicle's range; interior gaps against the link rule over the
    /// two adjacent ranges. An empty street is closed.
    fn street_open(&self, street: u32, stations: &mut [(f64, f64)]) -> bool {
        if stations.is_empty() {
            return false;
        }
        let total = self.topology.street(street).geometry.total_length();
        stations.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let first = stations[0];
        if first.0 > first.1 {
            return false;
        }
        let last = stations[stations.len() - 1];
        if total - last.0 > last.1 {
            return false;
        }
        for pair in stations.windows(2) {
            let gap = pair[1].0 - pair[0].0;
            let reach = match self.link_rule {
                LinkRule::Max => pair[0].1.max(pair[1].1),
                LinkRule::Min => pair[0].1.min(pair[1].1),
            };
            if gap > reach {
                return false;
            }
        }
        true
    }

    /// Project every vehicle onto its street, decide street openness, and
    /// cluster the intersections over open streets.
    pub fn snapshot(&self, state: &SimState) -> SimulationSnapshot {
        let streets = self.topology.streets().len();
        let mut projected: Vec<Vec<(f64, f64)>> = vec![Vec::new(); streets];
        let mut node_counts = vec![0u32; self.topology.num_queue_nodes()];
        for vehicle in &state.vehicles {
            projected[vehicle.street as usize].push((self.axis_position(vehicle), vehicle.range));
            node_counts
                [self.topology.queue_node(vehicle.street, vehicle.direction, vehicle.segment)] += 1;
        }
        let mut open = vec![false; streets];
        let mut uf = UnionFind::new(self.topology.num_intersections());
        for street in self.topology.streets() {
            let is_open = self.street_open(street.id, &mut projected[street.id as usize]);
            open[street.id as usize] = is_open;
            if is_open {
                uf.union(street.endpoints.0 as usize, street.endpoints.1 as usize);
            }
        }
        let nodes = self.topology.num_intersections() as f64;
        SimulationSnapshot {
            time: state.time,
            open,
            giant_fraction: uf.max_cluster_size() as f64 / nodes,
            avg_cluster_size: nodes / uf.num_clusters() as f64,
            perfect: if uf.num_clusters() == 1 { 1.0 } else { 0.0 },
            node_counts,
        }
    }

    /// Run the full simulation: warm up, then snapshot every sample interval
    /// until `run_length` total simulated seconds, aggregating with batch
    /// means.
    pub fn run(&self, seed: u64) -> Result<SimulationRun, SimError> {
        let warm_up = self.warm_up_time();
        let run_length = self.config.sim.run_length;
        if run_length <= warm_up {
            return Err(SimError::RunTooShort { warm_up, run_length });
        }
        let interval = self.config.sim.sample_interval;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let mut state = SimState::default();
        let mut snapshots = Vec::new();
        let mut next_sample = warm_up + interval;
        let steps = (run_length / self.config.sim.dt).ceil() as u64;
        for _ in 0..steps {
            self.step(&mut state, &mut rng);
            if state.time + 1e-9 >= next_sample {
                snapshots.push(self.snapshot(&state));
                next_sample += interval;
            }
        }
        let aggregates = aggregate(&snapshots)?;
        Ok(SimulationRun { snapshots, aggregates, warm_up })
    }
}

fn batch_estimate(samples: &[f64]) -> Estimate {
    let batches = MIN_BATCHES;
    let per = samples.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| samples[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (batches - 1) as f64;
    Estimate { mean, stderr: (var / batches as f64).sqrt() }
}

fn aggregate(snapshots: &[SimulationSnapshot]) -> Result<SimAggregates, SimError> {
    if snapshots.len() < MIN_BATCHES {
        return Err(SimError::TooFewSamples { samples: snapshots.len() });
    }
    let giant: Vec<f64> = snapshots.iter().map(|s| s.giant_fraction).collect();
    let avg: Vec<f64> = snapshots.iter().map(|s| s.avg_cluster_size).collect();
    let perfect: Vec<f64> = snapshots.iter().map(|s| s.perfect).collect();
    let streets = snapshots[0].open.len();
    let mut street_open_freq = vec![0.0; streets];
    for snap in snapshots {
        for (acc, &flag) in street_open_freq.iter_mut().zip(&snap.open) {
            *acc += flag as u8 as f64;
        }
    }
    for freq in &mut street_open_freq {
        *freq /= snapshots.len() as f64;
    }
    let nodes = snapshots[0].node_counts.len();
    let mut node_count_mean = vec![0.0; nodes];
    for snap in snapshots {
        for (acc, &count) in node_count_mean.iter_mut().zip(&snap.node_counts) {
            *acc += count as f64;
        }
    }
    for mean in &mut node_count_mean {
        *mean /= snapshots.len() as f64;
    }
    Ok(SimAggregates {
        giant: batch_estimate(&giant),
        avg_cluster: batch_estimate(&avg),
        perfect: batch_estimate(&perfect),
        street_open_freq,
        node_count_mean,
        samples: snapshots.len(),
    })
}

/// CSV time series: `time,street_id,open`.
pub fn timeseries_csv(run: &SimulationRun) -> String {
    let mut out = String::from("time,street_id,open\n");
    for snap in &run.snapshots {
        for (street, &flag) in snap.open.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", fmt_compact(snap.time), street, flag as u8));
        }
    }
    out
}

/// CSV aggregates: `observable,mean,stderr`.
pub fn aggregates_csv(run: &SimulationRun) -> String {
    let a = &run.aggregates;
    format!(
        "observable,mean,stderr\ngiant_fraction,{},{}\navg_cluster_size,{},{}\nperfect_connectivity,{},{}\n",
        fmt_compact(a.giant.mean),
        fmt_compact(a.giant.stderr),
        fmt_compact(a.avg_cluster.mean),
        fmt_compact(a.avg_cluster.stderr),
        fmt_compact(a.perfect.mean),
        fmt_compact(a.perfect.stderr)
    )
}
