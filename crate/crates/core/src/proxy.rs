//! Parametric stand-in for the per-vehicle language model.
//!
//! Perception is a two-stage Bernoulli process over the observer's scene
//! graph. The quantity read is whether cross traffic conflicts with the ego
//! at its current speed: occluded observers have no reading with
//! `ego_occlusion_prob`, line-of-sight observers read it correctly with
//! `neighbor_detection_prob` and inverted otherwise, and an empty scene
//! produces a false alarm with `false_positive_prob`. A reading carries a certainty
//! `1 − exp(−confident_concentration · evidence)`, where evidence is 1 for a
//! reading and 0 for no reading.
//!
//! The intent is a mixture `c · sharp + (1 − c) · background`, where `sharp`
//! is the reading's preferred action profile and `background` spreads
//! `1 − 2ℓ` over FASTER/SLOWER/IDLE by a symmetric Dirichlet draw (parameter
//! `ambiguous_concentration`) and `ℓ` on each lateral action.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::{IntentDistribution, MetaAction};
use crate::scenario::{scene_graph, WorldState};

/// Version tag of the generative law, echoed into run manifests.
pub const PROXY_MODEL_VERSION: &str = "proxy-bernoulli-dirichlet/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxyCalibration {
    pub calibration_label: String,
    /// Probability an occluded observer has no reading of the hazard.
    pub ego_occlusion_prob: f64,
    /// Probability a line-of-sight observer reads hazard presence correctly.
    pub neighbor_detection_prob: f64,
    /// Probability of reading a hazard in an empty scene.
    pub false_positive_prob: f64,
    pub confident_concentration: f64,
    pub ambiguous_concentration: f64,
    /// Mass placed on each lateral action by the background profile.
    pub lateral_mass: f64,
    /// Share of FASTER in the "no hazard" profile; the rest goes to IDLE.
    pub proceed_faster_share: f64,
    pub inference_latency_ms: f64,
    pub inference_jitter_fraction: f64,
}

impl Default for ProxyCalibration {
    fn default() -> Self {
        Self {
            calibration_label: "intersection-default-v1".into(),
            ego_occlusion_prob: 1.0,
            neighbor_detection_prob: 0.968,
            false_positive_prob: 0.163,
            confident_concentration: 0.558,
            ambiguous_concentration: 82.0,
            lateral_mass: 0.08,
            proceed_faster_share: 0.723,
            inference_latency_ms: 145.0,
            inference_jitter_fraction: 0.02,
        }
    }
}

impl ProxyCalibration {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("ego_occlusion_prob", self.ego_occlusion_prob),
            ("neighbor_detection_prob", self.neighbor_detection_prob),
            ("false_positive_prob", self.false_positive_prob),
            ("proceed_faster_share", self.proceed_faster_share),
        ];
        for (key, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("calibration.{key}"), "must be in [0, 1]"));
            }
        }
        for (key, c) in [
            ("confident_concentration", self.confident_concentration),
            ("ambiguous_concentration", self.ambiguous_concentration),
        ] {
            if !(c > 0.0) {
                return Err(Error::config(format!("calibration.{key}"), "must be > 0"));
            }
        }
        if !(0.0..0.5).contains(&self.lateral_mass) {
            return Err(Error::config("calibration.lateral_mass", "must be in [0, 0.5)"));
        }
        if !(self.inference_latency_ms > 0.0 && self.inference_latency_ms.is_finite()) {
            return Err(Error::config("calibration.inference_latency_ms", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.inference_jitter_fraction) {
            return Err(Error::config(
                "calibration.inference_jitter_fraction",
                "must be in [0, 1)",
            ));
        }
        if self.calibration_label.trim().is_empty() {
            return Err(Error::config("calibration.calibration_label", "must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardReading {
    Present,
    Absent,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionOutcome {
    pub hazard_perceived: HazardReading,
    /// Zero exactly when the reading is unknown.
    pub certainty: f64,
}

impl PerceptionOutcome {
    pub fn unknown() -> Self {
        Self {
            hazard_perceived: HazardReading::Unknown,
            certainty: 0.0,
        }
    }

    pub fn reading(hazard_perceived: HazardReading, certainty: f64) -> Self {
        debug_assert!(hazard_perceived != HazardReading::Unknown);
        Self {
            hazard_perceived,
            certainty,
        }
    }
}

fn certainty(concentration: f64, evidence: f64) -> f64 {
    if concentration.is_infinite() {
        return 1.0;
    }
    1.0 - (-concentration * evidence).exp()
}

/// Samples what `observer` believes about the hazard.
///
/// Consumes exactly two uniforms per call regardless of the branch taken.
pub fn perceive<R: Rng + ?Sized>(
    world: &WorldState,
    observer: usize,
    calib: &ProxyCalibration,
    rng: &mut R,
) -> Result<PerceptionOutcome> {
    let graph = scene_graph(world, observer)?;
    let u_miss: f64 = rng.random();
    let u_read: f64 = rng.random();

    let (truth, inverted) = if world.hazard_threat() {
        (HazardReading::Present, HazardReading::Absent)
    } else {
        (HazardReading::Absent, HazardReading::Present)
    };
    let reading = match graph.hazard() {
        None if u_read < calib.false_positive_prob => HazardReading::Present,
        None => HazardReading::Absent,
        Some(rec) if !rec.visible => {
            if u_miss < calib.ego_occlusion_prob {
                return Ok(PerceptionOutcome::unknown());
            }
            truth
        }
        Some(_) if u_read < calib.neighbor_detection_prob => truth,
        Some(_) => inverted,
    };
    Ok(PerceptionOutcome::reading(
        reading,
        certainty(calib.confident_concentration, 1.0),
    ))
}

/// Maps a perception outcome to an intent distribution over the default
/// five meta-actions.
pub fn infer_intent<R: Rng + ?Sized>(
    outcome: &PerceptionOutcome,
    calib: &ProxyCalibration,
    rng: &mut R,
) -> IntentDistribution {
    let alpha = calib.ambiguous_concentration;
    let mut shares = [0.0f64; 3];
    if alpha.is_infinite() {
        shares = [1.0; 3];
    } else {
        // alpha > 0 is a validated invariant.
        let gamma = Gamma::new(alpha, 1.0).expect("ambiguous_concentration > 0");
        for s in &mut shares {
            *s = gamma.sample(rng);
        }
    }
    let total: f64 = shares.iter().sum();
    let core = 1.0 - 2.0 * calib.lateral_mass;
    let background = [
        core * shares[0] / total,
        core * shares[1] / total,
        core * shares[2] / total,
        calib.lateral_mass,
        calib.lateral_mass,
    ];

    let f = calib.proceed_faster_share;
    let sharp = match outcome.hazard_perceived {
        HazardReading::Present => [0.0, 1.0, 0.0, 0.0, 0.0],
        HazardReading::Absent => [f, 0.0, 1.0 - f, 0.0, 0.0],
        HazardReading::Unknown => background,
    };
    let c = outcome.certainty.clamp(0.0, 1.0);
    let mixed: Vec<f64> = sharp
        .iter()
        .zip(&background)
        .map(|(s, b)| c * s + (1.0 - c) * b)
        .collect();
    IntentDistribution::from_weights(&mixed).expect("mixture of simplex points")
}

/// Per-decision local inference latency with uniform relative jitter.
pub fn local_inference_latency<R: Rng + ?Sized>(calib: &ProxyCalibration, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    calib.inference_latency_ms * (1.0 + calib.inference_jitter_fraction * (2.0 * u - 1.0))
}

/// The action a well-informed vehicle should take for a ground-truth hazard state.
pub fn safe_actions(hazard_pending: bool) -> &'static [MetaAction] {
    if hazard_pending {
        &[MetaAction::Slower]
    } else {
        &[MetaAction::Faster, MetaAction::Idle]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::{select_action, shannon_entropy_normalized};
    use crate::rng::{stream, Role};
    use crate::scenario::{reset, ScenarioConfig, EGO_ID};

    fn rng() -> crate::rng::Stream {
        stream(3, 0, 0, Role::PolicyNoise { vehicle: 0 })
    }

    fn occluded_world() -> WorldState {
        let c = ScenarioConfig {
            hazard_prevalence: 1.0,
            occlusion_prevalence: 1.0,
            ..Default::default()
        };
        let mut w = reset(&c, &mut stream(3, 0, 0, Role::EnvReset));
        // put the hazard on a collision course with the held ego
        w.hazard.distance = w.ego.distance / w.ego.speed * w.hazard.speed;
        assert!(w.hazard_threat());
        w
    }

    fn witness(w: &WorldState) -> usize {
        w.neighbors.iter().find(|n| n.line_of_sight_to_hazard).expect("a witness").id
    }

    #[test]
    fn forced_occlusion_reads_unknown() {
        let w = occluded_world();
        let calib = ProxyCalibration {
            ego_occlusion_prob: 1.0,
            ..Default::default()
        };
        let mut r = rng();
        for _ in 0..100 {
            let out = perceive(&w, EGO_ID, &calib, &mut r).unwrap();
            assert_eq!(out, PerceptionOutcome::unknown());
        }
    }

    #[test]
    fn perfect_detector_reads_present() {
        let w = occluded_world();
        let calib = ProxyCalibration {
            neighbor_detection_prob: 1.0,
            ..Default::default()
        };
        let mut r = rng();
        let id = witness(&w);
        for _ in 0..100 {
            let out = perceive(&w, id, &calib, &mut r).unwrap();
            assert_eq!(out.hazard_perceived, HazardReading::Present);
        }
    }

    #[test]
    fn detection_rate_matches_bernoulli_law() {
        let w = occluded_world();
        let calib = ProxyCalibration {
            neighbor_detection_prob: 0.9,
            ..Default::default()
        };
        let mut r = rng();
        let id = witness(&w);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| perceive(&w, id, &calib, &mut r).unwrap().hazard_perceived == HazardReading::Present)
            .count();
        let rate = hits as f64 / n as f64;
        let se = (0.9f64 * 0.1 / n as f64).sqrt();
        assert!((rate - 0.9).abs() < 3.0 * se, "rate {rate}");
    }

    #[test]
    fn unknown_observer_is_an_error() {
        let w = occluded_world();
        assert!(perceive(&w, 17, &ProxyCalibration::default(), &mut rng()).is_err());
    }

    #[test]
    fn unknown_intent_is_ambiguous() {
        let calib = ProxyCalibration::default();
        let mut r = rng();
        for _ in 0..10_000 {
            let p = infer_intent(&PerceptionOutcome::unknown(), &calib, &mut r);
            assert!(shannon_entropy_normalized(&p) > 0.65);
        }
    }

    #[test]
    fn infinite_concentration_limits() {
        let calib = ProxyCalibration {
            confident_concentration: f64::INFINITY,
            ..Default::default()
        };
        let c = certainty(calib.confident_concentration, 1.0);
        let present = PerceptionOutcome::reading(HazardReading::Present, c);
        let p = infer_intent(&present, &calib, &mut rng());
        assert_eq!(p.probs(), &[0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(shannon_entropy_normalized(&p), 0.0);

        let absent = PerceptionOutcome::reading(HazardReading::Absent, 1.0);
        let p = infer_intent(&absent, &calib, &mut rng());
        let a = select_action(&p);
        assert!(a == MetaAction::Faster.index() || a == MetaAction::Idle.index());
    }

    #[test]
    fn inference_latency_examples() {
        let exact = ProxyCalibration {
            inference_jitter_fraction: 0.0,
            ..Default::default()
        };
        assert_eq!(local_inference_latency(&exact, &mut rng()), 145.0);
        let cloud = ProxyCalibration {
            inference_latency_ms: 510.0,
            ..exact
        };
        assert_eq!(local_inference_latency(&cloud, &mut rng()), 510.0);

        let jittered = ProxyCalibration::default();
        let mut r = rng();
        for _ in 0..10_000 {
            let l = local_inference_latency(&jittered, &mut r);
            assert!((142.1..=147.9).contains(&l), "{l}");
        }
    }

    #[test]
    fn calibration_validation_names_keys() {
        let bad = ProxyCalibration {
            neighbor_detection_prob: 1.2,
            ..Default::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("neighbor_detection_prob"));
        let bad = ProxyCalibration {
            confident_concentration: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        ProxyCalibration::default().validate().unwrap();
    }
}
