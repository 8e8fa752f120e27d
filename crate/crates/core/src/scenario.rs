//! The occluded-intersection world.
//!
//! The conflict zone is centered on the origin. The ego approaches along the
//! `+y` axis toward the origin and the (optional) hazard vehicle approaches
//! along the `−x` axis. Both positions are tracked as signed distances to
//! the centroid: positive before the zone center, negative after it.
//! Neighbors are parked at fixed lateral slots around the intersection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::{ConflictZone, MetaAction};

/// Vehicle id of the ego. Neighbors use ids `1..=neighbor_count`.
pub const EGO_ID: usize = 0;

/// Fixed neighbor slots `(x, y)` in meters around the centroid. Slot 0
/// always has line of sight to the cross road.
const NEIGHBOR_SLOTS: [[f64; 2]; 8] = [
    [-7.0, 9.0],
    [6.0, -10.0],
    [9.0, 14.0],
    [-12.0, 26.0],
    [13.0, 29.0],
    [-17.0, -24.0],
    [19.0, -27.0],
    [-22.0, 31.0],
];

fn neighbor_slot(index: usize) -> [f64; 2] {
    if let Some(slot) = NEIGHBOR_SLOTS.get(index) {
        return *slot;
    }
    // Further vehicles sit on a widening ring.
    let extra = (index - NEIGHBOR_SLOTS.len()) as f64;
    let radius = 40.0 + 4.0 * extra;
    let angle = 0.9 + 1.3 * extra;
    [radius * angle.cos(), radius * angle.sin()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Initial ego speed, m/s.
    pub ego_speed: f64,
    /// Conflict-zone radius about the centroid, m.
    pub conflict_zone_proxy: f64,
    pub neighbor_count: u32,
    /// Probability an episode contains a cross-traffic hazard.
    pub hazard_prevalence: f64,
    /// Probability a present hazard is structurally occluded from the ego.
    pub occlusion_prevalence: f64,
    pub max_steps: u32,
    /// Control step, s.
    pub step_dt: f64,
    /// Initial ego distance to the centroid, m.
    pub approach_distance: f64,
    pub speed_increment: f64,
    pub speed_decrement: f64,
    pub max_speed: f64,
    /// Hazard speed, m/s.
    pub hazard_speed: f64,
    /// Initial hazard distance to the centroid is uniform on `[min, max]`, m.
    pub hazard_distance_min: f64,
    pub hazard_distance_max: f64,
    /// Line-of-sight probability for neighbor slots 1 and 2.
    pub neighbor_los_prob: f64,
    /// Line-of-sight probability for slots beyond the third.
    pub extra_neighbor_los_prob: f64,
    /// Decisions that take longer than this miss the control step; the ego
    /// holds its speed for that step.
    pub reaction_deadline_ms: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            ego_speed: 14.0,
            conflict_zone_proxy: 3.5,
            neighbor_count: 3,
            hazard_prevalence: 0.659,
            occlusion_prevalence: 0.752,
            max_steps: 6,
            step_dt: 0.3,
            approach_distance: 25.0,
            speed_increment: 2.0,
            speed_decrement: 4.0,
            max_speed: 20.0,
            hazard_speed: 9.82,
            hazard_distance_min: 12.99,
            hazard_distance_max: 26.59,
            neighbor_los_prob: 0.03,
            extra_neighbor_los_prob: 0.0,
            reaction_deadline_ms: 218.2,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("hazard_prevalence", self.hazard_prevalence),
            ("occlusion_prevalence", self.occlusion_prevalence),
            ("neighbor_los_prob", self.neighbor_los_prob),
            ("extra_neighbor_los_prob", self.extra_neighbor_los_prob),
        ];
        for (key, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("scenario.{key}"), "must be in [0, 1]"));
            }
        }
        let positive = [
            ("ego_speed", self.ego_speed),
            ("conflict_zone_proxy", self.conflict_zone_proxy),
            ("step_dt", self.step_dt),
            ("approach_distance", self.approach_distance),
            ("speed_increment", self.speed_increment),
            ("speed_decrement", self.speed_decrement),
            ("max_speed", self.max_speed),
            ("hazard_speed", self.hazard_speed),
            ("hazard_distance_min", self.hazard_distance_min),
            ("reaction_deadline_ms", self.reaction_deadline_ms),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("scenario.{key}"), "must be positive"));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::config("scenario.max_steps", "must be positive"));
        }
        if self.hazard_distance_max < self.hazard_distance_min {
            return Err(Error::config(
                "scenario.hazard_distance_max",
                "must be >= hazard_distance_min",
            ));
        }
        if self.ego_speed > self.max_speed {
            return Err(Error::config("scenario.ego_speed", "exceeds max_speed"));
        }
        if self.approach_distance <= self.conflict_zone_proxy {
            return Err(Error::config(
                "scenario.approach_distance",
                "ego must start outside the conflict zone",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    /// Signed distance to the centroid along the ego path, m.
    pub distance: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardState {
    pub present: bool,
    /// Signed distance to the centroid along the cross road, m.
    pub distance: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborState {
    pub id: usize,
    pub position: [f64; 2],
    pub line_of_sight_to_hazard: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub ego: EgoState,
    pub hazard: HazardState,
    pub ego_line_of_sight: bool,
    pub neighbors: Vec<NeighborState>,
    pub step: u32,
    pub zone: ConflictZone,
    /// Conflict-zone radius, m.
    pub zone_radius: f64,
    /// Set once ego and hazard have shared the zone at any instant.
    pub collided: bool,
}

impl WorldState {
    pub fn ego_position(&self) -> [f64; 2] {
        [self.zone.centroid[0], self.zone.centroid[1] + self.ego.distance]
    }

    pub fn hazard_position(&self) -> [f64; 2] {
        [self.zone.centroid[0] - self.hazard.distance, self.zone.centroid[1]]
    }

    pub fn position_of(&self, id: usize) -> Result<[f64; 2]> {
        if id == EGO_ID {
            return Ok(self.ego_position());
        }
        self.neighbor(id).map(|n| n.position)
    }

    pub fn neighbor(&self, id: usize) -> Result<&NeighborState> {
        self.neighbors
            .iter()
            .find(|n| n.id == id)
            .ok_or(Error::UnknownVehicle(id))
    }

    /// The hazard exists and has not yet cleared the far edge of the zone.
    pub fn hazard_pending(&self) -> bool {
        self.hazard.present && self.hazard.distance >= -self.zone_radius
    }

    /// The hazard is pending and would share the zone with an ego that holds
    /// its current speed.
    pub fn hazard_threat(&self) -> bool {
        conflicts_if_held(self, self.ego.speed)
    }

    pub fn ego_in_zone(&self) -> bool {
        self.ego.distance.abs() <= self.zone_radius
    }

    pub fn hazard_in_zone(&self) -> bool {
        self.hazard.present && self.hazard.distance.abs() <= self.zone_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Success,
    Collision,
    ForcedFailure,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Success => "success",
            OutcomeKind::Collision => "collision",
            OutcomeKind::ForcedFailure => "forced_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub result: OutcomeKind,
    pub steps_used: u32,
    /// Action index applied at each step.
    pub decisions: Vec<usize>,
}

/// Samples an initial world.
///
/// Draw order is fixed: hazard presence, hazard distance, occlusion, the
/// guaranteed witness slot, then one line-of-sight draw per neighbor slot.
/// Changing the neighbor count never shifts the hazard draws.
///
/// One of the first three slots, chosen uniformly, always sees the hazard, so
/// a full default swarm has a witness while a lone neighbor may not.
pub fn reset<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> WorldState {
    let present = rng.random::<f64>() < config.hazard_prevalence;
    let u_dist: f64 = rng.random();
    let occluded = rng.random::<f64>() < config.occlusion_prevalence;
    let hazard_distance = config.hazard_distance_min
        + u_dist * (config.hazard_distance_max - config.hazard_distance_min);

    let witness = rng.random_range(0..3usize);
    let neighbors = (0..config.neighbor_count as usize)
        .map(|slot| {
            let u: f64 = rng.random();
            let los = match slot {
                _ if slot == witness => true,
                0..=2 => u < config.neighbor_los_prob,
                _ => u < config.extra_neighbor_los_prob,
            };
            NeighborState {
                id: slot + 1,
                position: neighbor_slot(slot),
                line_of_sight_to_hazard: !present || los,
            }
        })
        .collect();

    WorldState {
        ego: EgoState {
            distance: config.approach_distance,
            speed: config.ego_speed,
        },
        hazard: HazardState {
            present,
            distance: hazard_distance,
            speed: if present { config.hazard_speed } else { 0.0 },
        },
        ego_line_of_sight: !(present && occluded),
        neighbors,
        step: 0,
        zone: ConflictZone::default(),
        zone_radius: config.conflict_zone_proxy,
        collided: false,
    }
}

/// Time interval within `[0, horizon]` during which a body at signed
/// distance `d` moving toward the centroid at `v` is inside radius `r`.
fn zone_interval(d: f64, v: f64, r: f64, horizon: f64) -> Option<(f64, f64)> {
    let (lo, hi) = if v > 0.0 {
        ((d - r) / v, (d + r) / v)
    } else if d.abs() <= r {
        (0.0, f64::INFINITY)
    } else {
        return None;
    };
    let lo = lo.max(0.0);
    let hi = hi.min(horizon);
    (lo <= hi).then_some((lo, hi))
}

fn intervals_overlap(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> bool {
    match (a, b) {
        (Some((a0, a1)), Some((b0, b1))) => a0.max(b0) <= a1.min(b1),
        _ => false,
    }
}

/// Whether holding ego speed `speed` from now on would put ego and a
/// pending hazard in the zone together.
pub fn conflicts_if_held(world: &WorldState, speed: f64) -> bool {
    if !world.hazard_pending() {
        return false;
    }
    let r = world.zone_radius;
    let ego = zone_interval(world.ego.distance, speed, r, f64::INFINITY);
    let hazard = zone_interval(world.hazard.distance, world.hazard.speed, r, f64::INFINITY);
    intervals_overlap(ego, hazard)
}

fn next_speed(speed: f64, action: MetaAction, config: &ScenarioConfig) -> f64 {
    match action {
        MetaAction::Faster => (speed + config.speed_increment).min(config.max_speed),
        MetaAction::Slower => (speed - config.speed_decrement).max(0.0),
        // Lateral maneuvers do not change longitudinal speed here.
        MetaAction::Idle | MetaAction::TurnLeft | MetaAction::TurnRight => speed,
    }
}

/// Applies one action and advances the world by one control step.
///
/// Co-occupancy of the zone is checked continuously over the step, so a
/// crossing between two step boundaries is not missed.
pub fn apply_action(world: &WorldState, action: usize, config: &ScenarioConfig) -> Result<WorldState> {
    let action = MetaAction::from_index(action).ok_or(Error::InvalidAction(action))?;
    let mut next = world.clone();
    let dt = config.step_dt;
    let speed = next_speed(world.ego.speed, action, config);

    if world.hazard.present {
        let r = world.zone_radius;
        let ego = zone_interval(world.ego.distance, speed, r, dt);
        let hazard = zone_interval(world.hazard.distance, world.hazard.speed, r, dt);
        next.collided |= intervals_overlap(ego, hazard);
        next.hazard.distance -= world.hazard.speed * dt;
    }
    next.ego.speed = speed;
    next.ego.distance -= speed * dt;
    next.step += 1;
    Ok(next)
}

/// Terminal check. Returns `None` while the episode should continue.
///
/// At the step limit an ego that is still moving is projected forward at its
/// final speed; one stopped short of the zone timed out (forced failure).
pub fn evaluate(world: &WorldState, config: &ScenarioConfig) -> Option<OutcomeKind> {
    if world.collided || (world.ego_in_zone() && world.hazard_in_zone()) {
        return Some(OutcomeKind::Collision);
    }
    if world.ego.distance < -world.zone_radius {
        return Some(OutcomeKind::Success);
    }
    if world.step < config.max_steps {
        return None;
    }
    if world.ego.speed <= 0.0 {
        return Some(if world.ego_in_zone() && world.hazard_pending() {
            OutcomeKind::Collision
        } else {
            OutcomeKind::ForcedFailure
        });
    }
    if conflicts_if_held(world, world.ego.speed) {
        Some(OutcomeKind::Collision)
    } else {
        Some(OutcomeKind::Success)
    }
}

/// Static line-of-sight flag of an observer toward the hazard.
pub fn occlusion_geometry(world: &WorldState, observer: usize) -> Result<bool> {
    let flag = if observer == EGO_ID {
        world.ego_line_of_sight
    } else {
        world.neighbor(observer)?.line_of_sight_to_hazard
    };
    Ok(!world.hazard.present || flag)
}

/// Omniscient reference policy: proceed (FASTER, else IDLE) whenever holding
/// that speed avoids the hazard, otherwise brake.
pub fn oracle_action(world: &WorldState, config: &ScenarioConfig) -> usize {
    for action in [MetaAction::Faster, MetaAction::Idle] {
        let speed = next_speed(world.ego.speed, action, config);
        if !conflicts_if_held(world, speed) && speed > 0.0 {
            return action.index();
        }
    }
    MetaAction::Slower.index()
}

/// Probability that an ego holding its initial speed meets the hazard,
/// computed directly from the timing law.
pub fn analytic_conflict_probability(config: &ScenarioConfig) -> f64 {
    let r = config.conflict_zone_proxy;
    let v = config.ego_speed;
    let vh = config.hazard_speed;
    let ego_in = (config.approach_distance - r) / v;
    let ego_out = (config.approach_distance + r) / v;
    // Hazard occupies the zone on [(y − r)/vh, (y + r)/vh]; overlap iff
    // y ∈ [ego_in·vh − r, ego_out·vh + r].
    let lo = ego_in * vh - r;
    let hi = ego_out * vh + r;
    let (a, b) = (config.hazard_distance_min, config.hazard_distance_max);
    let frac = if b > a {
        ((hi.min(b) - lo.max(a)).max(0.0)) / (b - a)
    } else if (lo..=hi).contains(&a) {
        1.0
    } else {
        0.0
    };
    config.hazard_prevalence * frac
}

/// One object in an observer's scene graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub object_type: String,
    pub id: usize,
    pub relative_position: [f64; 2],
    pub relative_velocity: [f64; 2],
    pub visible: bool,
}

/// Ego-centric scene description of one observer; excludes the observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub observer: usize,
    pub records: Vec<SceneRecord>,
}

impl SceneGraph {
    pub fn hazard(&self) -> Option<&SceneRecord> {
        self.records.iter().find(|r| r.object_type == "cross_traffic")
    }
}

/// Builds the scene graph of `observer`. The cross-traffic record is listed
/// only while the hazard is still pending; it is visible iff the observer
/// has line of sight.
pub fn scene_graph(world: &WorldState, observer: usize) -> Result<SceneGraph> {
    let origin = world.position_of(observer)?;
    let rel = |p: [f64; 2]| [p[0] - origin[0], p[1] - origin[1]];
    let mut records = Vec::with_capacity(world.neighbors.len() + 1);
    if observer != EGO_ID {
        records.push(SceneRecord {
            object_type: "vehicle".into(),
            id: EGO_ID,
            relative_position: rel(world.ego_position()),
            relative_velocity: [0.0, -world.ego.speed],
            visible: true,
        });
    }
    for n in world.neighbors.iter().filter(|n| n.id != observer) {
        records.push(SceneRecord {
            object_type: "vehicle".into(),
            id: n.id,
            relative_position: rel(n.position),
            relative_velocity: [0.0, 0.0],
            visible: true,
        });
    }
    if world.hazard_pending() {
        records.push(SceneRecord {
            object_type: "cross_traffic".into(),
            id: usize::MAX,
            relative_position: rel(world.hazard_position()),
            relative_velocity: [world.hazard.speed, 0.0],
            visible: occlusion_geometry(world, observer)?,
        });
    }
    Ok(SceneGraph { observer, records })
}
