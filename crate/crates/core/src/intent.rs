//! Intent distributions over meta-actions, the entropy gate, inverse-distance
//! weighting and the weighted fusion rule.
//!
//! Everything here is a value type or a pure function. The consensus engine
//! and the campaign runner build on these primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of a probability vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Default clamp for distances in [`inverse_distance_weights`], in meters.
pub const DEFAULT_DISTANCE_EPSILON: f64 = 0.1;

/// The default DiLu-style meta-action vocabulary, in canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetaAction {
    Faster,
    Slower,
    Idle,
    TurnLeft,
    TurnRight,
}

impl MetaAction {
    pub const ALL: [MetaAction; 5] = [
        MetaAction::Faster,
        MetaAction::Slower,
        MetaAction::Idle,
        MetaAction::TurnLeft,
        MetaAction::TurnRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            MetaAction::Faster => "FASTER",
            MetaAction::Slower => "SLOWER",
            MetaAction::Idle => "IDLE",
            MetaAction::TurnLeft => "TURN_LEFT",
            MetaAction::TurnRight => "TURN_RIGHT",
        }
    }
}

/// Ordered set of `k ≥ 2` unique action labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaActionSet {
    actions: Vec<String>,
}

impl MetaActionSet {
    pub fn new<S: Into<String>>(actions: impl IntoIterator<Item = S>) -> Result<Self> {
        let actions: Vec<String> = actions.into_iter().map(Into::into).collect();
        if actions.len() < 2 {
            return Err(Error::InvalidActionSet(format!(
                "need at least 2 actions, got {}",
                actions.len()
            )));
        }
        for (i, a) in actions.iter().enumerate() {
            if actions[..i].contains(a) {
                return Err(Error::InvalidActionSet(format!("duplicate label {a:?}")));
            }
        }
        Ok(Self { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.actions
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == label)
    }
}

impl Default for MetaActionSet {
    fn default() -> Self {
        Self {
            actions: MetaAction::ALL.iter().map(|a| a.label().to_string()).collect(),
        }
    }
}

/// A categorical distribution over the `k` actions of a [`MetaActionSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct IntentDistribution {
    probs: Vec<f64>,
}

impl IntentDistribution {
    /// Validates that every entry is in `[0, 1]` and the vector sums to one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 entries, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidDistribution(format!(
                "entry {p} outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes a nonnegative weight vector onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::InvalidAction(index));
        }
        let mut probs = vec![0.0; k];
        probs[index] = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, action: MetaAction) -> f64 {
        self.probs.get(action.index()).copied().unwrap_or(0.0)
    }

    /// Checks the distribution against an action set.
    pub fn conforms_to(&self, actions: &MetaActionSet) -> bool {
        self.probs.len() == actions.len()
    }
}

impl TryFrom<Vec<f64>> for IntentDistribution {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<IntentDistribution> for Vec<f64> {
    fn from(value: IntentDistribution) -> Self {
        value.probs
    }
}

/// The intersection conflict zone; fusion weights use distances to its centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictZone {
    pub centroid: [f64; 2],
}

impl ConflictZone {
    pub fn new(centroid: [f64; 2]) -> Result<Self> {
        if centroid.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("scenario.conflict_zone", "centroid must be finite"));
        }
        Ok(Self { centroid })
    }

    pub fn distance_to(&self, position: [f64; 2]) -> f64 {
        let dx = position[0] - self.centroid[0];
        let dy = position[1] - self.centroid[1];
        dx.hypot(dy)
    }
}

impl Default for ConflictZone {
    fn default() -> Self {
        Self { centroid: [0.0, 0.0] }
    }
}

/// Normalized inverse-distance weights together with the distances they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    weights: Vec<f64>,
    distances: Vec<f64>,
}

impl FusionWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weights for a single participant (local fallback).
    pub fn single(distance: f64) -> Self {
        Self {
            weights: vec![1.0],
            distances: vec![distance],
        }
    }
}

/// How the entropy gate measures uncertainty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyScale {
    /// Natural-log entropy divided by `ln k`, in `[0, 1]`.
    #[default]
    Normalized,
    /// Natural-log entropy in nats, in `[0, ln k]`.
    Raw,
}

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn shannon_entropy(p: &IntentDistribution) -> f64 {
    -p.probs
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Shannon entropy divided by `ln k`.
pub fn shannon_entropy_normalized(p: &IntentDistribution) -> f64 {
    let h = shannon_entropy(p) / (p.len() as f64).ln();
    h.clamp(0.0, 1.0)
}

pub fn entropy_on_scale(p: &IntentDistribution, scale: EntropyScale) -> f64 {
    match scale {
        EntropyScale::Normalized => shannon_entropy_normalized(p),
        EntropyScale::Raw => shannon_entropy(p),
    }
}

/// The event trigger: strictly greater than `tau`.
pub fn should_trigger(p: &IntentDistribution, tau: f64) -> bool {
    shannon_entropy_normalized(p) > tau
}

pub fn should_trigger_on_scale(p: &IntentDistribution, tau: f64, scale: EntropyScale) -> bool {
    entropy_on_scale(p, scale) > tau
}

/// `w_j = (1/max(d_j, ε)) / Σ_k (1/max(d_k, ε))`.
pub fn inverse_distance_weights(distances: &[f64], epsilon: f64) -> Result<FusionWeights> {
    if distances.is_empty() {
        return Err(Error::NoParticipants);
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::config("fusion.epsilon", "must be positive"));
    }
    if let Some(d) = distances.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(Error::config(
            "fusion.distances",
            format!("distance {d} must be finite and nonnegative"),
        ));
    }
    let inverse: Vec<f64> = distances.iter().map(|d| 1.0 / d.max(epsilon)).collect();
    let total: f64 = inverse.iter().sum();
    Ok(FusionWeights {
        weights: inverse.iter().map(|w| w / total).collect(),
        distances: distances.to_vec(),
    })
}

/// Weighted aggregate `Σ_j w_j p_j`.
pub fn fuse(intents: &[&IntentDistribution], weights: &FusionWeights) -> Result<IntentDistribution> {
    let Some(first) = intents.first() else {
        return Err(Error::NoParticipants);
    };
    if intents.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "fusion weights",
            expected: intents.len(),
            got: weights.len(),
        });
    }
    let k = first.len();
    let mut acc = vec![0.0; k];
    for (p, w) in intents.iter().zip(&weights.weights) {
        if p.len() != k {
            return Err(Error::LengthMismatch {
                what: "intent length",
                expected: k,
                got: p.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(&p.probs) {
            *a += w * x;
        }
    }
    // Rounding can leave the sum a few ulps off one; rescale so the result
    // stays exactly on the simplex.
    let total: f64 = acc.iter().sum();
    for a in &mut acc {
        *a = (*a / total).clamp(0.0, 1.0);
    }
    IntentDistribution::new(acc)
}

/// Argmax with ties going to the lowest index.
pub fn select_action(p: &IntentDistribution) -> usize {
    let mut best = 0;
    for (i, &x) in p.probs.iter().enumerate().skip(1) {
        if x > p.probs[best] {
            best = i;
        }
    }
    best
}
