//! City model: the grid of intersections and streets, segment/direction/class
//! indexing shared by the solver and the simulator, and the turn-decision
//! table derived from the configuration.
//!
//! Street ids equal the bond ids of [`GridLattice`], so the percolation
//! engine consumes per-street probabilities without any re-indexing.

mod config;

pub use config::{
    validate_config, ClassTransitions, ConfigError, RunConfig, SimParams, SpeedClass,
    SpeedClasses, SpeedDistribution, StreetGeometry, TransmissionModel, TurnOverride, TurnProbs,
    Violation, ROW_SUM_TOL,
};

use crate::lattice::GridLattice;
use serde::{Deserialize, Serialize};

/// Travel direction along a street. `Forward` runs from the lower-id
/// endpoint to the higher-id one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// The three movement phases of a street, in traversal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    Front,
    Middle,
    End,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Front, Segment::Middle, Segment::End];

    pub fn index(self) -> usize {
        match self {
            Segment::Front => 0,
            Segment::Middle => 1,
            Segment::End => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Segment::Front => "front",
            Segment::Middle => "middle",
            Segment::End => "end",
        }
    }

    /// Number of vehicle classes at this segment role.
    pub fn class_count(self) -> usize {
        match self {
            Segment::Middle => 3,
            _ => 2,
        }
    }

    pub fn length(self, geometry: &StreetGeometry) -> f64 {
        match self {
            Segment::Front => geometry.len_front,
            Segment::Middle => geometry.len_middle,
            Segment::End => geometry.len_end,
        }
    }
}

/// One street of the grid: endpoints, geometry, and the queue-node chain per
/// direction (three nodes, front to end).
#[derive(Debug, Clone, PartialEq)]
pub struct Street {
    pub id: u32,
    /// Intersection ids, lower first.
    pub endpoints: (u32, u32),
    pub geometry: StreetGeometry,
}

impl Street {
    pub fn from_intersection(&self, dir: Direction) -> u32 {
        match dir {
            Direction::Forward => self.endpoints.0,
            Direction::Backward => self.endpoints.1,
        }
    }

    pub fn to_intersection(&self, dir: Direction) -> u32 {
        match dir {
            Direction::Forward => self.endpoints.1,
            Direction::Backward => self.endpoints.0,
        }
    }

    /// Queue-node ids in traversal order for one direction.
    pub fn queue_nodes(&self, dir: Direction) -> [usize; 3] {
        let base = self.id as usize * 6 + dir.index() * 3;
        [base, base + 1, base + 2]
    }
}

/// Exogenous arrival point: vehicles enter this street direction from
/// outside the grid at the given rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entrance {
    pub street: u32,
    pub direction: Direction,
    pub rate: f64,
}

/// Immutable city: lattice, streets, per-intersection traffic weights, and
/// entrances. Safe to share read-only across parallel workers.
#[derive(Debug, Clone, PartialEq)]
pub struct CityTopology {
    lattice: GridLattice,
    streets: Vec<Street>,
    traffic_weights: Vec<f64>,
    entrances: Vec<Entrance>,
}

impl CityTopology {
    pub fn grid_side(&self) -> usize {
        self.lattice.side()
    }

    pub fn lattice(&self) -> &GridLattice {
        &self.lattice
    }

    pub fn num_intersections(&self) -> usize {
        self.lattice.num_nodes()
    }

    pub fn streets(&self) -> &[Street] {
        &self.streets
    }

    pub fn street(&self, id: u32) -> &Street {
        &self.streets[id as usize]
    }

    pub fn traffic_weight(&self, intersection: u32) -> f64 {
        self.traffic_weights[intersection as usize]
    }

    pub fn entrances(&self) -> &[Entrance] {
        &self.entrances
    }

    /// Total number of queue nodes: six per street.
    pub fn num_queue_nodes(&self) -> usize {
        self.streets.len() * 6
    }

    /// Queue-node id for (street, direction, segment).
    pub fn queue_node(&self, street: u32, dir: Direction, segment: Segment) -> usize {
        street as usize * 6 + dir.index() * 3 + segment.index()
    }

    /// Streets incident to an intersection, in ascending street-id order.
    pub fn incident_streets(&self, intersection: u32) -> Vec<u32> {
        self.lattice
            .incident_bonds(intersection as usize)
            .into_iter()
            .map(|b| b as u32)
            .collect()
    }

    pub fn is_boundary(&self, intersection: u32) -> bool {
        self.lattice.is_boundary(intersection as usize)
    }
}

/// Unit travel vector of (street, direction) in (row, col) deltas.
fn travel_vector(lattice: &GridLattice, street: &Street, dir: Direction) -> (i32, i32) {
    let (fr, fc) = lattice.node_coords(street.from_intersection(dir) as usize);
    let (tr, tc) = lattice.node_coords(street.to_intersection(dir) as usize);
    (tr as i32 - fr as i32, tc as i32 - fc as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RelativeTurn {
    Straight,
    Left,
    Right,
}

fn classify_turn(incoming: (i32, i32), outgoing: (i32, i32)) -> Option<RelativeTurn> {
    let left = (-incoming.1, incoming.0);
    let right = (incoming.1, -incoming.0);
    if outgoing == incoming {
        Some(RelativeTurn::Straight)
    } else if outgoing == left {
        Some(RelativeTurn::Left)
    } else if outgoing == right {
        Some(RelativeTurn::Right)
    } else {
        None // reverse of incoming: the U-turn, never taken
    }
}

/// One outgoing option at the head intersection of a street direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnChoice {
    pub street: u32,
    pub direction: Direction,
    pub prob: f64,
}

/// Normalized routing decision for one (street, direction): where vehicles go
/// when they reach the head intersection, and with what probability they
/// leave the grid there.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnDecision {
    pub choices: Vec<TurnChoice>,
    pub exit_prob: f64,
}

/// Turn decisions for every (street, direction), indexed
/// `street * 2 + direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnTable {
    decisions: Vec<TurnDecision>,
}

impl TurnTable {
    pub fn decision(&self, street: u32, dir: Direction) -> &TurnDecision {
        &self.decisions[street as usize * 2 + dir.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, Direction, &TurnDecision)> {
        self.decisions.iter().enumerate().map(|(i, d)| {
            let street = (i / 2) as u32;
            let dir = if i % 2 == 0 { Direction::Forward } else { Direction::Backward };
            (street, dir, d)
        })
    }
}

fn base_turn_prob(config: &RunConfig, intersection: u32, turn: RelativeTurn) -> f64 {
    let probs = config
        .turn_overrides
        .iter()
        .find(|ov| ov.intersection == intersection as usize)
        .map(|ov| TurnProbs { straight: ov.straight, left: ov.left, right: ov.right })
        .unwrap_or(config.turns);
    match turn {
        RelativeTurn::Straight => probs.straight,
        RelativeTurn::Left => probs.left,
        RelativeTurn::Right => probs.right,
    }
}

/// Build the turn-decision table. For each relative direction, the available
/// street scores `base_turn * weight(destination intersection)`; relative
/// directions without a street contribute their base mass to the exit score.
/// Scores normalize to a stochastic decision.
pub fn build_turn_table(topology: &CityTopology, config: &RunConfig) -> TurnTable {
    let mut decisions = Vec::with_capacity(topology.streets().len() * 2);
    for street in topology.streets() {
        for dir in Direction::BOTH {
            let head = street.to_intersection(dir);
            let incoming = travel_vector(topology.lattice(), street, dir);
            let mut choices = Vec::new();
            let mut exit_score = 0.0;
            let mut present = [false; 3];
            for out_id in topology.incident_streets(head) {
                if out_id == street.id {
                    continue;
                }
                let out_street = topology.street(out_id);
                let out_dir = if out_street.from_intersection(Direction::Forward) == head {
                    Direction::Forward
                } else {
                    Direction::Backward
                };
                let outgoing = travel_vector(topology.lattice(), out_street, out_dir);
                let turn = classify_turn(incoming, outgoing)
                    .expect("grid streets meet at right angles");
                present[turn as usize] = true;
                let weight = topology.traffic_weight(out_street.to_intersection(out_dir));
                let score = base_turn_prob(config, head, turn) * weight;
                choices.push((out_id, out_dir, score));
            }
            for turn in [RelativeTurn::Straight, RelativeTurn::Left, RelativeTurn::Right] {
                if !present[turn as usize] {
                    exit_score += base_turn_prob(config, head, turn);
                }
            }
            let total: f64 = exit_score + choices.iter().map(|&(_, _, s)| s).sum::<f64>();
            debug_assert!(total > 0.0);
            decisions.push(TurnDecision {
                choices: choices
                    .into_iter()
                    .map(|(street, direction, score)| TurnChoice {
                        street,
                        direction,
                        prob: score / total,
                    })
                    .collect(),
                exit_prob: exit_score / total,
            });
        }
    }
    TurnTable { decisions }
}

/// Build the lattice city described by the config.
///
/// Deterministic: identical configs give identical topologies. Every street
/// direction whose start intersection lies on the boundary receives an
/// entrance at the configured rate.
pub fn build_city(config: &RunConfig) -> Result<CityTopology, ConfigError> {
    let violations = validate_config(config);
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations));
    }
    let lattice = GridLattice::new(config.grid_side);
    let streets: Vec<Street> = (0..lattice.num_bonds())
        .map(|bond| {
            let (a, b) = lattice.bond_endpoints(bond);
            Street {
                id: bond as u32,
                endpoints: (a as u32, b as u32),
                geometry: config.geometry,
            }
        })
        .collect();
    let traffic_weights = if config.traffic_weights.is_empty() {
        vec![1.0; lattice.num_nodes()]
    } else {
        config.traffic_weights.clone()
    };
    let mut entrances = Vec::new();
    for street in &streets {
        for dir in Direction::BOTH {
            if lattice.is_boundary(street.from_intersection(dir) as usize) {
                entrances.push(Entrance {
                    street: street.id,
                    direction: dir,
                    rate: config.entrance_rate,
                });
            }
        }
    }
    Ok(CityTopology {
        lattice,
        streets,
        traffic_weights,
        entrances,
    })
}
