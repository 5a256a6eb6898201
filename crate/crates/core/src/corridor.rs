//! Air-corridor occupancy model and rules-of-engagement validation.
//!
//! The corridor airspace is partitioned into uniform rectangular prisms
//! indexed by a lane cell (i, j) and a vertical layer. The top layer
//! carries north/south traffic in lanes of constant `i`; the bottom layer
//! carries east/west traffic in lanes of constant `j`; a middle hover
//! layer exists only above intersection cells. A discrete-time occupancy
//! schedule assigns vehicles to prisms, and the validator reports every
//! violation of the four operating rules: single occupancy, empty prism
//! on entry, no overtaking within a lane, and minimum safety distance.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorridorError {
    #[error("corridor needs at least 1 x 1 cells, got {ni} x {nj}")]
    InvalidExtent { ni: i32, nj: i32 },
    #[error("prism dimension must be positive and finite, got {0} m")]
    InvalidPrismSize(f64),
    #[error("safety distance must be non-negative and finite, got {0} m")]
    InvalidSafetyDistance(f64),
    #[error("intersection ({i}, {j}) lies outside the corridor cells")]
    IntersectionOutOfBounds { i: i32, j: i32 },
    #[error("vehicle {vehicle} appears in more than one prism at time {time}")]
    DuplicateVehicleEntry { time: u32, vehicle: String },
    #[error("vehicle {vehicle} references unknown prism ({i}, {j}, {layer}) at time {time}")]
    UnknownPrism {
        time: u32,
        vehicle: String,
        i: i32,
        j: i32,
        layer: Layer,
    },
    #[error("unknown layer name {0:?} (expected bottom, middle, or top)")]
    UnknownLayer(String),
    #[error("unknown heading name {0:?} (expected north, south, east, west, or hover)")]
    UnknownHeading(String),
}

/// Vertical layer of a prism, ordered bottom to top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    /// East/west traffic.
    Bottom,
    /// Hover layer, present only above intersections.
    Middle,
    /// North/south traffic.
    Top,
}

impl Layer {
    /// Vertical stacking level: bottom 0, middle 1, top 2.
    pub fn level(&self) -> i32 {
        match self {
            Layer::Bottom => 0,
            Layer::Middle => 1,
            Layer::Top => 2,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Layer::Bottom => "bottom",
            Layer::Middle => "middle",
            Layer::Top => "top",
        };
        f.write_str(name)
    }
}

impl FromStr for Layer {
    type Err = CorridorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bottom" => Ok(Layer::Bottom),
            "middle" => Ok(Layer::Middle),
            "top" => Ok(Layer::Top),
            other => Err(CorridorError::UnknownLayer(other.to_string())),
        }
    }
}

/// Heading of a vehicle over one schedule step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heading {
    North,
    South,
    East,
    West,
    Hover,
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Heading::North => "north",
            Heading::South => "south",
            Heading::East => "east",
            Heading::West => "west",
            Heading::Hover => "hover",
        };
        f.write_str(name)
    }
}

impl FromStr for Heading {
    type Err = CorridorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "north" => Ok(Heading::North),
            "south" => Ok(Heading::South),
            "east" => Ok(Heading::East),
            "west" => Ok(Heading::West),
            "hover" => Ok(Heading::Hover),
            other => Err(CorridorError::UnknownHeading(other.to_string())),
        }
    }
}

/// Grid index of one prism.
///
/// `i` counts cells eastward (+x) and `j` northward (+y).
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct PrismIndex {
    pub i: i32,
    pub j: i32,
    pub layer: Layer,
}

impl PrismIndex {
    pub fn new(i: i32, j: i32, layer: Layer) -> Self {
        Self { i, j, layer }
    }
}

impl fmt::Display for PrismIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.i, self.j, self.layer)
    }
}

/// Corridor geometry: cell extent, prism dimensions for the vehicle class,
/// the set of intersection cells carrying a middle layer, and the minimum
/// safety distance.
#[derive(Clone, Debug)]
pub struct CorridorModel {
    ni: i32,
    nj: i32,
    prism_size_m: Vector3<f64>,
    min_safety_distance_m: f64,
    intersections: BTreeSet<(i32, i32)>,
}

impl CorridorModel {
    pub fn new(
        ni: i32,
        nj: i32,
        prism_size_m: [f64; 3],
        min_safety_distance_m: f64,
        intersections: impl IntoIterator<Item = (i32, i32)>,
    ) -> Result<Self, CorridorError> {
        if ni < 1 || nj < 1 {
            return Err(CorridorError::InvalidExtent { ni, nj });
        }
        for dimension in prism_size_m {
            if !(dimension.is_finite() && dimension > 0.0) {
                return Err(CorridorError::InvalidPrismSize(dimension));
            }
        }
        if !(min_safety_distance_m.is_finite() && min_safety_distance_m >= 0.0) {
            return Err(CorridorError::InvalidSafetyDistance(min_safety_distance_m));
        }
        let intersections: BTreeSet<(i32, i32)> = intersections.into_iter().collect();
        for &(i, j) in &intersections {
            if i < 0 || i >= ni || j < 0 || j >= nj {
                return Err(CorridorError::IntersectionOutOfBounds { i, j });
            }
        }
        Ok(Self {
            ni,
            nj,
            prism_size_m: Vector3::new(prism_size_m[0], prism_size_m[1], prism_size_m[2]),
            min_safety_distance_m,
            intersections,
        })
    }

    pub fn cell_counts(&self) -> (i32, i32) {
        (self.ni, self.nj)
    }

    pub fn prism_size_m(&self) -> [f64; 3] {
        [
            self.prism_size_m.x,
            self.prism_size_m.y,
            self.prism_size_m.z,
        ]
    }

    pub fn min_safety_distance_m(&self) -> f64 {
        self.min_safety_distance_m
    }

    pub fn is_intersection(&self, i: i32, j: i32) -> bool {
        self.intersections.contains(&(i, j))
    }

    /// Whether the prism exists: inside the cell extent, with the middle
    /// layer present only above intersections.
    pub fn contains(&self, prism: &PrismIndex) -> bool {
        let in_cells = prism.i >= 0 && prism.i < self.ni && prism.j >= 0 && prism.j < self.nj;
        in_cells
            && (prism.layer != Layer::Middle || self.is_intersection(prism.i, prism.j))
    }

    /// Geometric center of a prism; adjacent indices map to centers exactly
    /// one prism dimension apart, so the prisms tile space without overlap.
    pub fn prism_center(&self, prism: &PrismIndex) -> Vector3<f64> {
        Vector3::new(
            (prism.i as f64 + 0.5) * self.prism_size_m.x,
            (prism.j as f64 + 0.5) * self.prism_size_m.y,
            (prism.layer.level() as f64 + 0.5) * self.prism_size_m.z,
        )
    }
}

/// One schedule entry: a vehicle occupying a prism at a time step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyRecord {
    pub time: u32,
    pub vehicle: String,
    pub prism: PrismIndex,
}

/// Discrete-time occupancy of the corridor: per time step, each vehicle
/// sits in exactly one prism.
#[derive(Clone, Debug, Default)]
pub struct OccupancySchedule {
    steps: BTreeMap<u32, BTreeMap<String, PrismIndex>>,
}

impl OccupancySchedule {
    pub fn from_records(
        records: impl IntoIterator<Item = OccupancyRecord>,
    ) -> Result<Self, CorridorError> {
        let mut steps: BTreeMap<u32, BTreeMap<String, PrismIndex>> = BTreeMap::new();
        for record in records {
            let step = steps.entry(record.time).or_default();
            if step.insert(record.vehicle.clone(), record.prism).is_some() {
                return Err(CorridorError::DuplicateVehicleEntry {
                    time: record.time,
                    vehicle: record.vehicle,
                });
            }
        }
        Ok(Self { steps })
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Highest time step carrying any occupancy.
    pub fn horizon(&self) -> Option<u32> {
        self.steps.keys().next_back().copied()
    }

    /// Vehicle positions at one time step (empty if none recorded).
    pub fn at(&self, time: u32) -> &BTreeMap<String, PrismIndex> {
        static EMPTY: BTreeMap<String, PrismIndex> = BTreeMap::new();
        self.steps.get(&time).unwrap_or(&EMPTY)
    }

    pub fn records(&self) -> impl Iterator<Item = OccupancyRecord> + '_ {
        self.steps.iter().flat_map(|(&time, step)| {
            step.iter().map(move |(vehicle, &prism)| OccupancyRecord {
                time,
                vehicle: vehicle.clone(),
                prism,
            })
        })
    }
}

/// The four rules of engagement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// A prism holds at most one vehicle at any time.
    SingleOccupancy,
    /// A vehicle may only enter a prism that is empty on arrival: nobody
    /// else is there at the arrival step, and nobody else occupied it on
    /// the step before (which also forbids two vehicles swapping prisms).
    EmptyOnEntry,
    /// Along-lane order is preserved between consecutive steps.
    NoOvertaking,
    /// Pairwise distance between occupied prism centers stays at or above
    /// the minimum safety distance.
    SafetyDistance,
}

impl Rule {
    pub fn id(&self) -> u8 {
        match self {
            Rule::SingleOccupancy => 1,
            Rule::EmptyOnEntry => 2,
            Rule::NoOvertaking => 3,
            Rule::SafetyDistance => 4,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Rule::SingleOccupancy => "single occupancy",
            Rule::EmptyOnEntry => "empty on entry",
            Rule::NoOvertaking => "no overtaking",
            Rule::SafetyDistance => "safety distance",
        };
        write!(f, "rule {} ({name})", self.id())
    }
}

/// One detected rule violation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Violation {
    pub rule: Rule,
    pub time: u32,
    /// Vehicles involved; the entrant first for entry violations, sorted
    /// by name otherwise.
    pub vehicles: Vec<String>,
    /// Prisms involved, aligned with `vehicles` where applicable.
    pub prisms: Vec<PrismIndex>,
}

/// Lane key of a prism: traffic layers group into lanes (top lanes run
/// north/south at constant `i`; bottom lanes run east/west at constant
/// `j`). The hover layer has no lane.
fn lane_of(prism: &PrismIndex) -> Option<(Layer, i32)> {
    match prism.layer {
        Layer::Top => Some((Layer::Top, prism.i)),
        Layer::Bottom => Some((Layer::Bottom, prism.j)),
        Layer::Middle => None,
    }
}

/// Along-lane coordinate of a prism within its lane.
fn lane_coordinate(prism: &PrismIndex) -> i32 {
    match prism.layer {
        Layer::Top => prism.j,
        _ => prism.i,
    }
}

/// Checks an occupancy schedule against the four rules of engagement and
/// reports every violation, sorted by (rule, time, vehicles, prisms).
///
/// Referencing a prism outside the model — including a middle-layer prism
/// away from any intersection — is a malformed schedule, not a violation.
pub fn validate_schedule(
    schedule: &OccupancySchedule,
    model: &CorridorModel,
) -> Result<Vec<Violation>, CorridorError> {
    for record in schedule.records() {
        if !model.contains(&record.prism) {
            return Err(CorridorError::UnknownPrism {
                time: record.time,
                vehicle: record.vehicle,
                i: record.prism.i,
                j: record.prism.j,
                layer: record.prism.layer,
            });
        }
    }

    let mut violations = Vec::new();
    let Some(horizon) = schedule.horizon() else {
        return Ok(violations);
    };

    for time in 0..=horizon {
        let step = schedule.at(time);

        // Rule 1: at most one vehicle per prism.
        let mut occupants: BTreeMap<PrismIndex, Vec<&String>> = BTreeMap::new();
        for (vehicle, prism) in step {
            occupants.entry(*prism).or_default().push(vehicle);
        }
        for (prism, vehicles) in &occupants {
            if vehicles.len() > 1 {
                violations.push(Violation {
                    rule: Rule::SingleOccupancy,
                    time,
                    vehicles: vehicles.iter().map(|v| (*v).clone()).collect(),
                    prisms: vec![*prism],
                });
            }
        }

        // Rule 4: pairwise center distance at or above the safety distance.
        let positions: Vec<(&String, &PrismIndex)> = step.iter().collect();
        for (a_index, (vehicle_a, prism_a)) in positions.iter().enumerate() {
            for (vehicle_b, prism_b) in positions.iter().skip(a_index + 1) {
                let distance = (model.prism_center(prism_a) - model.prism_center(prism_b)).norm();
                if distance < model.min_safety_distance_m {
                    violations.push(Violation {
                        rule: Rule::SafetyDistance,
                        time,
                        vehicles: vec![(*vehicle_a).clone(), (*vehicle_b).clone()],
                        prisms: vec![**prism_a, **prism_b],
                    });
                }
            }
        }

        if time == 0 {
            continue;
        }
        let previous = schedule.at(time - 1);

        // Rule 2: an entered prism must be empty on arrival — free of
        // others now, and not occupied by anyone else on the previous step.
        for (vehicle, prism) in step {
            let entering = previous.get(vehicle) != Some(prism);
            if !entering {
                continue;
            }
            let mut blockers: Vec<String> = step
                .iter()
                .filter(|(other, p)| *other != vehicle && *p == prism)
                .map(|(other, _)| other.clone())
                .collect();
            blockers.extend(
                previous
                    .iter()
                    .filter(|(other, p)| *other != vehicle && *p == prism)
                    .map(|(other, _)| other.clone()),
            );
            blockers.sort();
            blockers.dedup();
            if !blockers.is_empty() {
                let mut vehicles = vec![vehicle.clone()];
                vehicles.extend(blockers);
                violations.push(Violation {
                    rule: Rule::EmptyOnEntry,
                    time,
                    vehicles,
                    prisms: vec![*prism],
                });
            }
        }

        // Rule 3: along-lane order may not invert between consecutive steps.
        let vehicles_now: Vec<&String> = step.keys().collect();
        for (a_index, vehicle_a) in vehicles_now.iter().enumerate() {
            for vehicle_b in vehicles_now.iter().skip(a_index + 1) {
                let (Some(a_now), Some(b_now)) = (step.get(*vehicle_a), step.get(*vehicle_b))
                else {
                    continue;
                };
                let (Some(a_before), Some(b_before)) =
                    (previous.get(*vehicle_a), previous.get(*vehicle_b))
                else {
                    continue;
                };
                let lanes = [
                    lane_of(a_before),
                    lane_of(b_before),
                    lane_of(a_now),
                    lane_of(b_now),
                ];
                let Some(lane) = lanes[0] else { continue };
                if lanes.iter().any(|l| *l != Some(lane)) {
                    continue;
                }
                let order_before = lane_coordinate(a_before) - lane_coordinate(b_before);
                let order_now = lane_coordinate(a_now) - lane_coordinate(b_now);
                if order_before.signum() * order_now.signum() == -1 {
                    violations.push(Violation {
                        rule: Rule::NoOvertaking,
                        time,
                        vehicles: vec![(*vehicle_a).clone(), (*vehicle_b).clone()],
                        prisms: vec![*a_now, *b_now],
                    });
                }
            }
        }
    }

    violations.sort();
    Ok(violations)
}

/// Whether a heading is allowed in a layer: north/south in the top layer,
/// east/west in the bottom layer, hovering only in the middle layer above
/// an intersection.
pub fn direction_for_layer(layer: Layer, heading: Heading, at_intersection: bool) -> bool {
    match (layer, heading) {
        (Layer::Top, Heading::North) | (Layer::Top, Heading::South) => true,
        (Layer::Bottom, Heading::East) | (Layer::Bottom, Heading::West) => true,
        (Layer::Middle, Heading::Hover) => at_intersection,
        _ => false,
    }
}

/// Why a movement step is illegal for its layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionIssue {
    /// Heading not permitted in the layer (wrong traffic direction, or a
    /// hover outside the middle layer).
    DisallowedHeading,
    /// Simultaneous movement along both horizontal axes.
    DiagonalMove,
    /// Layer change combined with horizontal movement, or spanning more
    /// than one level.
    InvalidLayerChange,
    /// Layer change away from an intersection cell.
    VerticalOutsideIntersection,
}

/// One illegal movement step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DirectionViolation {
    pub time: u32,
    pub vehicle: String,
    pub from: PrismIndex,
    pub to: PrismIndex,
    pub issue: DirectionIssue,
}

/// Checks every movement step of a schedule against the layer direction
/// rules: top-layer steps must head north or south, bottom-layer steps
/// east or west, vehicles may hover only in the middle layer above an
/// intersection, and layer changes happen vertically, one level at a
/// time, above intersections.
pub fn validate_directions(
    schedule: &OccupancySchedule,
    model: &CorridorModel,
) -> Result<Vec<DirectionViolation>, CorridorError> {
    for record in schedule.records() {
        if !model.contains(&record.prism) {
            return Err(CorridorError::UnknownPrism {
                time: record.time,
                vehicle: record.vehicle,
                i: record.prism.i,
                j: record.prism.j,
                layer: record.prism.layer,
            });
        }
    }
    let mut violations = Vec::new();
    let Some(horizon) = schedule.horizon() else {
        return Ok(violations);
    };
    for time in 1..=horizon {
        let previous = schedule.at(time - 1);
        for (vehicle, to) in schedule.at(time) {
            let Some(from) = previous.get(vehicle) else {
                continue;
            };
            let di = to.i - from.i;
            let dj = to.j - from.j;
            let issue = if to.layer != from.layer {
                if di != 0 || dj != 0 {
                    Some(DirectionIssue::InvalidLayerChange)
                } else if !model.is_intersection(to.i, to.j) {
                    Some(DirectionIssue::VerticalOutsideIntersection)
                } else if (to.layer.level() - from.layer.level()).abs() != 1 {
                    Some(DirectionIssue::InvalidLayerChange)
                } else {
                    None
                }
            } else if di != 0 && dj != 0 {
                Some(DirectionIssue::DiagonalMove)
            } else {
                let heading = match (di.signum(), dj.signum()) {
                    (0, 0) => Heading::Hover,
                    (0, 1) => Heading::North,
                    (0, -1) => Heading::South,
                    (1, 0) => Heading::East,
                    _ => Heading::West,
                };
                let at_intersection = model.is_intersection(to.i, to.j);
                if direction_for_layer(to.layer, heading, at_intersection) {
                    None
                } else {
                    Some(DirectionIssue::DisallowedHeading)
                }
            };
            if let Some(issue) = issue {
                violations.push(DirectionViolation {
                    time,
                    vehicle: vehicle.clone(),
                    from: *from,
                    to: *to,
                    issue,
                });
            }
        }
    }
    Ok(violations)
}
