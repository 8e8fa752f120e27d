//! One ego decision cycle: entropy gate, request/response exchange over the
//! channel, deadline-bounded collection, inverse-distance fusion and
//! fallback.
//!
//! Neighbor responses are logically concurrent. Their arrival times are
//! computed from sampled link latencies, so a cycle is simulated without any
//! real parallelism.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{intent_payload_bytes, sample_delivery, ChannelProfile, MessageEnvelope};
use crate::error::{Error, Result};
use crate::intent::{
    entropy_on_scale, fuse, inverse_distance_weights, select_action, EntropyScale,
    IntentDistribution, DEFAULT_DISTANCE_EPSILON,
};
use crate::scenario::{WorldState, EGO_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusConfig {
    /// `false` disables V2V entirely (the single-local operating point).
    pub enabled: bool,
    pub tau: f64,
    pub entropy_scale: EntropyScale,
    /// Responses arriving later than this after the request are discarded, ms.
    pub decision_window_ms: f64,
    /// Communication radius `R`, m.
    pub communication_radius_m: f64,
    /// Time a neighbor needs to answer a request, ms.
    pub neighbor_processing_delay_ms: f64,
    /// Clamp for zero distances in the fusion weights, m.
    pub distance_epsilon_m: f64,
    /// Message size; `None` derives it from the action count.
    pub payload_bytes: Option<u32>,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            tau: 0.7,
            entropy_scale: EntropyScale::Normalized,
            decision_window_ms: 200.0,
            communication_radius_m: 100.0,
            neighbor_processing_delay_ms: 0.0,
            distance_epsilon_m: DEFAULT_DISTANCE_EPSILON,
            payload_bytes: None,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        let tau_max = match self.entropy_scale {
            EntropyScale::Normalized => 1.0,
            // ln 5 for the default action set
            EntropyScale::Raw => 5f64.ln(),
        };
        if !(0.0..=tau_max).contains(&self.tau) {
            return Err(Error::config(
                "consensus.tau",
                format!("{} is outside [0, {tau_max}]", self.tau),
            ));
        }
        if !(self.decision_window_ms > 0.0 && self.decision_window_ms.is_finite()) {
            return Err(Error::config("consensus.decision_window_ms", "must be > 0"));
        }
        if !(self.communication_radius_m >= 0.0) {
            return Err(Error::config("consensus.communication_radius_m", "must be >= 0"));
        }
        if !(self.neighbor_processing_delay_ms >= 0.0 && self.neighbor_processing_delay_ms.is_finite()) {
            return Err(Error::config("consensus.neighbor_processing_delay_ms", "must be >= 0"));
        }
        if !(self.distance_epsilon_m > 0.0) {
            return Err(Error::config("consensus.distance_epsilon_m", "must be > 0"));
        }
        if let Some(p) = self.payload_bytes {
            MessageEnvelope::new(p, EGO_ID, 0.0)
                .map_err(|_| Error::config("consensus.payload_bytes", "must be in (0, 1024)"))?;
        }
        Ok(())
    }

    fn payload(&self, k: usize) -> u32 {
        self.payload_bytes.unwrap_or_else(|| intent_payload_bytes(k))
    }
}

/// A neighbor's precomputed intent and position for the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborReport {
    pub id: usize,
    pub position: [f64; 2],
    pub intent: IntentDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionCycleResult {
    pub action: usize,
    pub triggered: bool,
    pub fused: IntentDistribution,
    /// Intents fused, including the ego.
    pub participants: usize,
    /// Neighbor responses put on the channel.
    pub messages_sent: u32,
    /// Responses received inside the window and fused.
    pub messages_delivered: u32,
    /// Responses that arrived after the window.
    pub late_responses: u32,
    pub requests_sent: u32,
    pub requests_dropped: u32,
    pub local_latency_ms: f64,
    pub cycle_latency_ms: f64,
    pub fallback_used: bool,
    pub ego_entropy: f64,
    /// Arrival time of every fused response, ms after the request.
    pub arrivals_ms: Vec<f64>,
}

/// Ids of neighbors within `radius` of the ego, ascending.
pub fn neighbors_in_radius(world: &WorldState, radius: f64) -> Vec<usize> {
    let ego = world.ego_position();
    let mut ids: Vec<usize> = world
        .neighbors
        .iter()
        .filter(|n| {
            let dx = n.position[0] - ego[0];
            let dy = n.position[1] - ego[1];
            dx.hypot(dy) <= radius
        })
        .map(|n| n.id)
        .collect();
    ids.sort_unstable();
    ids
}

/// Runs one decision cycle for the ego.
///
/// `neighbors` must already be restricted to the communication radius. Per
/// neighbor the channel is sampled for the request and then the response,
/// both always drawn so the stream stays aligned across loss settings.
pub fn run_decision_cycle<R: Rng + ?Sized>(
    world: &WorldState,
    ego_intent: &IntentDistribution,
    local_latency_ms: f64,
    neighbors: &[NeighborReport],
    config: &ConsensusConfig,
    channel: &ChannelProfile,
    rng: &mut R,
) -> Result<DecisionCycleResult> {
    let ego_entropy = entropy_on_scale(ego_intent, config.entropy_scale);
    let triggered = config.enabled && !neighbors.is_empty() && ego_entropy > config.tau;

    let mut result = DecisionCycleResult {
        action: select_action(ego_intent),
        triggered,
        fused: ego_intent.clone(),
        participants: 1,
        messages_sent: 0,
        messages_delivered: 0,
        late_responses: 0,
        requests_sent: 0,
        requests_dropped: 0,
        local_latency_ms,
        cycle_latency_ms: local_latency_ms,
        fallback_used: false,
        ego_entropy,
        arrivals_ms: Vec::new(),
    };
    if !triggered {
        return Ok(result);
    }

    let payload = config.payload(ego_intent.len());
    let request = MessageEnvelope::new(payload, EGO_ID, 0.0)?;
    let mut arrived: Vec<(&NeighborReport, f64)> = Vec::with_capacity(neighbors.len());
    for n in neighbors {
        if !n.intent.conforms_to_len(ego_intent.len()) {
            return Err(Error::LengthMismatch {
                what: "neighbor intent length",
                expected: ego_intent.len(),
                got: n.intent.len(),
            });
        }
        result.requests_sent += 1;
        let req = sample_delivery(channel, &request, rng);
        let response = MessageEnvelope::new(payload, n.id, 0.0)?;
        let resp = sample_delivery(channel, &response, rng);
        let Some(req_ms) = req.latency_ms() else {
            result.requests_dropped += 1;
            continue;
        };
        result.messages_sent += 1;
        let Some(resp_ms) = resp.latency_ms() else {
            continue;
        };
        let arrival = req_ms + config.neighbor_processing_delay_ms + resp_ms;
        if arrival > config.decision_window_ms {
            result.late_responses += 1;
            continue;
        }
        arrived.push((n, arrival));
    }

    if arrived.is_empty() {
        result.fallback_used = true;
        result.cycle_latency_ms = local_latency_ms + config.decision_window_ms;
        return Ok(result);
    }

    let mut distances = Vec::with_capacity(arrived.len() + 1);
    distances.push(world.zone.distance_to(world.ego_position()));
    distances.extend(arrived.iter().map(|(n, _)| world.zone.distance_to(n.position)));
    let weights = inverse_distance_weights(&distances, config.distance_epsilon_m)?;
    let mut intents = Vec::with_capacity(arrived.len() + 1);
    intents.push(ego_intent);
    intents.extend(arrived.iter().map(|(n, _)| &n.intent));
    let fused = fuse(&intents, &weights)?;

    let last = arrived.iter().map(|(_, t)| *t).fold(0.0, f64::max);
    assert!(
        last <= config.decision_window_ms,
        "fused a response after the decision window"
    );
    result.action = select_action(&fused);
    result.fused = fused;
    result.participants = intents.len();
    result.messages_delivered = arrived.len() as u32;
    result.cycle_latency_ms = local_latency_ms + last.min(config.decision_window_ms);
    result.arrivals_ms = arrived.iter().map(|(_, t)| *t).collect();
    Ok(result)
}

impl IntentDistribution {
    fn conforms_to_len(&self, k: usize) -> bool {
        self.len() == k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Role};
    use crate::scenario::{reset, ScenarioConfig};

    fn world() -> WorldState {
        let c = ScenarioConfig {
            hazard_prevalence: 1.0,
            occlusion_prevalence: 1.0,
            ..Default::default()
        };
        reset(&c, &mut stream(1, 0, 0, Role::EnvReset))
    }

    fn reports(w: &WorldState) -> Vec<NeighborReport> {
        w.neighbors
            .iter()
            .map(|n| NeighborReport {
                id: n.id,
                position: n.position,
                intent: IntentDistribution::new(vec![0.05, 0.8, 0.05, 0.05, 0.05]).unwrap(),
            })
            .collect()
    }

    fn ambiguous() -> IntentDistribution {
        IntentDistribution::new(vec![0.3, 0.28, 0.26, 0.08, 0.08]).unwrap()
    }

    fn exact_6g(loss: f64) -> ChannelProfile {
        ChannelProfile {
            loss_rate: loss,
            latency_jitter_fraction: 0.0,
            ..ChannelProfile::six_g()
        }
    }

    fn cfg() -> ConsensusConfig {
        ConsensusConfig {
            neighbor_processing_delay_ms: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn confident_ego_stays_local() {
        let w = world();
        let ego = IntentDistribution::one_hot(5, 0).unwrap();
        let mut rng = stream(1, 0, 0, Role::CommNoise);
        let r = run_decision_cycle(&w, &ego, 145.0, &reports(&w), &cfg(), &exact_6g(0.0), &mut rng).unwrap();
        assert!(!r.triggered);
        assert_eq!(r.messages_sent, 0);
        assert_eq!(r.participants, 1);
        assert_eq!(r.action, 0);
        assert_eq!(r.cycle_latency_ms, 145.0);
        assert_eq!(r.fused, ego);
    }

    #[test]
    fn lossless_6g_cycle_timing() {
        let w = world();
        let mut rng = stream(1, 0, 0, Role::CommNoise);
        let r = run_decision_cycle(&w, &ambiguous(), 145.0, &reports(&w), &cfg(), &exact_6g(0.0), &mut rng).unwrap();
        assert!(r.triggered);
        assert_eq!(r.participants, 4);
        assert_eq!(r.messages_sent, 3);
        assert_eq!(r.messages_delivered, 3);
        // 5 + 1 + 5 ms plus two 72-byte serializations at 200 Mbps
        let expected = 145.0 + 11.0 + 2.0 * 72.0 * 8.0 / 200_000.0;
        assert!((r.cycle_latency_ms - expected).abs() < 1e-9, "{}", r.cycle_latency_ms);
        assert_eq!(r.action, 1);
        assert!(!r.fallback_used);
    }

    #[test]
    fn total_loss_falls_back_and_pays_the_window() {
        let w = world();
        let mut rng = stream(1, 0, 0, Role::CommNoise);
        let r = run_decision_cycle(&w, &ambiguous(), 145.0, &reports(&w), &cfg(), &exact_6g(1.0), &mut rng).unwrap();
        assert!(r.triggered);
        assert!(r.fallback_used);
        assert_eq!(r.participants, 1);
        assert_eq!(r.fused, ambiguous());
        assert_eq!(r.cycle_latency_ms, 345.0);
        assert_eq!(r.messages_delivered, 0);
        // requests are all lost, so no response is ever attempted
        assert_eq!(r.messages_sent, 0);
        assert_eq!(r.requests_dropped, 3);
    }

    #[test]
    fn late_responses_are_discarded() {
        let w = world();
        let slow = ChannelProfile {
            nominal_latency_ms: 150.0,
            ..exact_6g(0.0)
        };
        let mut rng = stream(1, 0, 0, Role::CommNoise);
        let r = run_decision_cycle(&w, &ambiguous(), 145.0, &reports(&w), &cfg(), &slow, &mut rng).unwrap();
        assert_eq!(r.late_responses, 3);
        assert!(r.fallback_used);
        assert!(r.arrivals_ms.is_empty());
    }

    #[test]
    fn disabled_consensus_never_triggers() {
        let w = world();
        let c = ConsensusConfig {
            enabled: false,
            ..cfg()
        };
        let mut rng = stream(1, 0, 0, Role::CommNoise);
        let r = run_decision_cycle(&w, &ambiguous(), 145.0, &reports(&w), &c, &exact_6g(0.0), &mut rng).unwrap();
        assert!(!r.triggered);
        let r = run_decision_cycle(&w, &ambiguous(), 145.0, &[], &cfg(), &exact_6g(0.0), &mut rng).unwrap();
        assert!(!r.triggered);
    }

    #[test]
    fn radius_examples() {
        let mut w = world();
        w.ego.distance = 0.0;
        for (n, d) in w.neighbors.iter_mut().zip([10.0, 20.0, 30.0]) {
            n.position = [d, 0.0];
        }
        assert!(neighbors_in_radius(&w, 0.001).is_empty());
        assert_eq!(neighbors_in_radius(&w, 1e6), vec![1, 2, 3]);
        assert_eq!(neighbors_in_radius(&w, 25.0), vec![1, 2]);
    }

    #[test]
    fn invalid_tau_is_rejected() {
        let c = ConsensusConfig {
            tau: 1.5,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("consensus.tau"));
    }
}
