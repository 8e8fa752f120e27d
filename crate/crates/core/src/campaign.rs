//! Seeded multi-episode campaigns, sweeps and seed-mean aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::channel::{effective_loss_for_density, ChannelProfile, DensityLossTable};
use crate::consensus::{neighbors_in_radius, run_decision_cycle, ConsensusConfig, NeighborReport};
use crate::error::{Error, Result};
use crate::intent::MetaAction;
use crate::proxy::{infer_intent, local_inference_latency, perceive, ProxyCalibration};
use crate::rng::SeedStreams;
use crate::scenario::{apply_action, evaluate, reset, OutcomeKind, ScenarioConfig, EGO_ID};

/// Named operating points and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    SingleLocal,
    SwarmBaselineV2x,
    #[serde(rename = "swarm_6g")]
    Swarm6g,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::SingleLocal,
        Condition::SwarmBaselineV2x,
        Condition::Swarm6g,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::SingleLocal => "single_local",
            Condition::SwarmBaselineV2x => "swarm_baseline_v2x",
            Condition::Swarm6g => "swarm_6g",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Channel profile the operating point uses.
    pub fn channel(self) -> ChannelProfile {
        match self {
            Condition::SwarmBaselineV2x => ChannelProfile::baseline_v2x(),
            Condition::SingleLocal | Condition::Swarm6g => ChannelProfile::six_g(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    SwarmSize,
    PacketLoss,
    Tau,
}

impl SweepKind {
    pub const ALL: [SweepKind; 3] = [SweepKind::SwarmSize, SweepKind::PacketLoss, SweepKind::Tau];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::SwarmSize => "swarm_size",
            SweepKind::PacketLoss => "packet_loss",
            SweepKind::Tau => "tau",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("sweep.kind", format!("unknown sweep kind `{s}`")))
    }

    /// Row label in summaries, e.g. `sweep_tau`.
    pub fn label(self) -> String {
        format!("sweep_{}", self.as_str())
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepKind::SwarmSize => vec![1.0, 2.0, 3.0, 4.0, 8.0],
            SweepKind::PacketLoss => vec![0.0, 0.1, 0.2, 0.4],
            SweepKind::Tau => vec![0.5, 0.6, 0.65, 0.7, 0.8, 0.9, 0.95, 1.0],
        }
    }
}

/// Neighbor turnaround on the conventional V2X stack, ms.
pub const BASELINE_PROCESSING_DELAY_MS: f64 = 18.7;

/// Everything needed to simulate one condition or one sweep grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub label: String,
    pub grid_value: Option<f64>,
    pub scenario: ScenarioConfig,
    pub consensus: ConsensusConfig,
    pub channel: ChannelProfile,
    pub calibration: ProxyCalibration,
}

impl ConditionSpec {
    /// Shipped defaults for a named operating point.
    pub fn preset(condition: Condition) -> Self {
        let mut consensus = ConsensusConfig::default();
        match condition {
            Condition::SingleLocal => consensus.enabled = false,
            Condition::SwarmBaselineV2x => {
                consensus.neighbor_processing_delay_ms = BASELINE_PROCESSING_DELAY_MS
            }
            Condition::Swarm6g => {}
        }
        Self {
            label: condition.as_str().to_string(),
            grid_value: None,
            scenario: ScenarioConfig::default(),
            consensus,
            channel: condition.channel(),
            calibration: ProxyCalibration::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.consensus.validate()?;
        self.channel.validate("channel")?;
        self.calibration.validate()
    }

    /// Derives the spec for one sweep grid point.
    pub fn at_grid_point(&self, kind: SweepKind, value: f64, density: &DensityLossTable) -> Result<Self> {
        let mut spec = self.clone();
        spec.label = kind.label();
        spec.grid_value = Some(value);
        match kind {
            SweepKind::SwarmSize => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::config(
                        "sweep.grid",
                        format!("swarm size {value} is not a positive integer"),
                    ));
                }
                let n = value as u32;
                spec.scenario.neighbor_count = n - 1;
                spec.channel.loss_rate = effective_loss_for_density(density, n)?;
            }
            SweepKind::PacketLoss => spec.channel.loss_rate = value,
            SweepKind::Tau => spec.consensus.tau = value,
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// One simulated episode as exported to JSONL. Field order is the key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode: u64,
    pub condition: String,
    pub grid_value: Option<f64>,
    pub success: bool,
    pub outcome: OutcomeKind,
    /// Decision cycles run.
    pub steps: u32,
    pub triggered_steps: u32,
    pub late_steps: u32,
    pub latency_proxy_ms: f64,
    pub trigger_rate: f64,
    pub messages_sent: u32,
    pub messages_delivered: u32,
    pub effective_loss: f64,
    pub mean_participants: f64,
    pub mean_ego_entropy: f64,
}

/// Simulates one episode.
///
/// The ego and every neighbor infer locally at each step from their own
/// policy-noise stream; the ego cycle then goes through the consensus
/// engine. A decision slower than the scenario's reaction deadline misses
/// the step and the ego holds its speed.
pub fn run_episode(spec: &ConditionSpec, master_seed: u64, seed: u64, episode: u64) -> Result<EpisodeRecord> {
    let mut streams = SeedStreams::new(master_seed, seed, episode);
    let scenario = &spec.scenario;
    let calib = &spec.calibration;
    let mut world = reset(scenario, &mut streams.env_reset);
    let mut policy: Vec<_> = (0..=scenario.neighbor_count)
        .map(|v| streams.policy_noise(v))
        .collect();

    let mut outcome = None;
    let mut triggered_steps = 0u32;
    let mut late_steps = 0u32;
    let mut latency_sum = 0.0;
    let mut participants_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut sent = 0u32;
    let mut delivered = 0u32;

    for _ in 0..scenario.max_steps {
        let (ego_rng, neighbor_rngs) = policy.split_first_mut().expect("ego stream");
        let ego_view = perceive(&world, EGO_ID, calib, ego_rng)?;
        let ego_intent = infer_intent(&ego_view, calib, ego_rng);
        let local_ms = local_inference_latency(calib, ego_rng);

        let mut reports = Vec::with_capacity(world.neighbors.len());
        for (n, rng) in world.neighbors.iter().zip(neighbor_rngs.iter_mut()) {
            let view = perceive(&world, n.id, calib, rng)?;
            reports.push(NeighborReport {
                id: n.id,
                position: n.position,
                intent: infer_intent(&view, calib, rng),
            });
        }
        let in_range = neighbors_in_radius(&world, spec.consensus.communication_radius_m);
        reports.retain(|r| in_range.binary_search(&r.id).is_ok());

        let cycle = run_decision_cycle(
            &world,
            &ego_intent,
            local_ms,
            &reports,
            &spec.consensus,
            &spec.channel,
            &mut streams.comm_noise,
        )?;
        triggered_steps += u32::from(cycle.triggered);
        latency_sum += cycle.cycle_latency_ms;
        participants_sum += cycle.participants as f64;
        entropy_sum += cycle.ego_entropy;
        sent += cycle.messages_sent;
        delivered += cycle.messages_delivered;

        let action = if cycle.cycle_latency_ms > scenario.reaction_deadline_ms {
            late_steps += 1;
            MetaAction::Idle.index()
        } else {
            cycle.action
        };
        world = apply_action(&world, action, scenario)?;
        if outcome.is_none() {
            outcome = evaluate(&world, scenario);
        }
    }
    let outcome = outcome.unwrap_or(OutcomeKind::ForcedFailure);
    let steps = scenario.max_steps;
    let n = f64::from(steps);
    Ok(EpisodeRecord {
        seed,
        episode,
        condition: spec.label.clone(),
        grid_value: spec.grid_value,
        success: outcome == OutcomeKind::Success,
        outcome,
        steps,
        triggered_steps,
        late_steps,
        latency_proxy_ms: latency_sum / n,
        trigger_rate: f64::from(triggered_steps) / n,
        messages_sent: sent,
        messages_delivered: delivered,
        effective_loss: crate::channel::measure_effective_loss(sent.into(), delivered.into())?,
        mean_participants: participants_sum / n,
        mean_ego_entropy: entropy_sum / n,
    })
}

/// Per-seed means of the episode metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub episodes: usize,
    pub success_rate: f64,
    pub latency_ms: f64,
    /// Triggered cycles over all cycles of the seed.
    pub trigger_rate: f64,
    pub messages_per_episode: f64,
    pub messages_total: u64,
    /// Undelivered over sent responses, pooled across the seed.
    pub effective_loss: f64,
    pub mean_participants: f64,
    pub mean_ego_entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    /// Half-width of the 95 % Student-t interval across seed means.
    pub ci95: f64,
}

/// Mean and t-based 95 % half-width of a sample; a single value has width 0.
pub fn mean_ci95(values: &[f64]) -> MeanCi {
    let n = values.len();
    if n == 0 {
        return MeanCi { mean: f64::NAN, ci95: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanCi { mean, ci95: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975);
    MeanCi {
        mean,
        ci95: t * var.sqrt() / (n as f64).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub grid_value: Option<f64>,
    pub success: MeanCi,
    pub latency_ms: MeanCi,
    pub trigger_rate: MeanCi,
    pub messages_per_episode: f64,
    pub messages_total: u64,
    pub effective_loss: f64,
    pub mean_participants: f64,
    pub mean_ego_entropy: f64,
    pub seeds: Vec<SeedMetrics>,
}

fn seed_metrics(seed: u64, records: &[&EpisodeRecord]) -> SeedMetrics {
    let n = records.len() as f64;
    let mean = |f: fn(&EpisodeRecord) -> f64| records.iter().map(|r| f(r)).sum::<f64>() / n;
    let cycles: u64 = records.iter().map(|r| u64::from(r.steps)).sum();
    let triggered: u64 = records.iter().map(|r| u64::from(r.triggered_steps)).sum();
    let sent: u64 = records.iter().map(|r| u64::from(r.messages_sent)).sum();
    let delivered: u64 = records.iter().map(|r| u64::from(r.messages_delivered)).sum();
    SeedMetrics {
        seed,
        episodes: records.len(),
        success_rate: mean(|r| f64::from(u8::from(r.success))),
        latency_ms: mean(|r| r.latency_proxy_ms),
        trigger_rate: if cycles == 0 { 0.0 } else { triggered as f64 / cycles as f64 },
        messages_per_episode: mean(|r| f64::from(r.messages_sent)),
        messages_total: sent,
        effective_loss: if sent == 0 {
            0.0
        } else {
            (sent - delivered) as f64 / sent as f64
        },
        mean_participants: mean(|r| r.mean_participants),
        mean_ego_entropy: mean(|r| r.mean_ego_entropy),
    }
}

/// Aggregates records of one condition (or grid point) into seed means and
/// a summary. Seeds are taken in ascending order.
pub fn summarize(condition: &str, grid_value: Option<f64>, records: &[EpisodeRecord]) -> Result<ConditionSummary> {
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        return Err(Error::config("seeds", "no episodes to summarize"));
    }
    let per_seed: Vec<SeedMetrics> = seeds
        .iter()
        .map(|&s| {
            let rows: Vec<&EpisodeRecord> = records.iter().filter(|r| r.seed == s).collect();
            seed_metrics(s, &rows)
        })
        .collect();
    let collect = |f: fn(&SeedMetrics) -> f64| per_seed.iter().map(f).collect::<Vec<f64>>();
    let plain_mean = |f: fn(&SeedMetrics) -> f64| mean_ci95(&collect(f)).mean;
    Ok(ConditionSummary {
        condition: condition.to_string(),
        grid_value,
        success: mean_ci95(&collect(|m| m.success_rate)),
        latency_ms: mean_ci95(&collect(|m| m.latency_ms)),
        trigger_rate: mean_ci95(&collect(|m| m.trigger_rate)),
        messages_per_episode: plain_mean(|m| m.messages_per_episode),
        messages_total: per_seed.iter().map(|m| m.messages_total).sum(),
        effective_loss: plain_mean(|m| m.effective_loss),
        mean_participants: plain_mean(|m| m.mean_participants),
        mean_ego_entropy: plain_mean(|m| m.mean_ego_entropy),
        seeds: per_seed,
    })
}

/// Seeds, episode budget and execution settings shared by every condition
/// of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub episodes_per_seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub parallelism: usize,
}

impl RunPlan {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "must be unique"));
        }
        if self.episodes_per_seed == 0 {
            return Err(Error::config("episodes_per_seed", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRun {
    pub summary: ConditionSummary,
    /// Sorted by `(seed, episode)`.
    pub records: Vec<EpisodeRecord>,
}

fn with_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .expect("thread pool");
    pool.install(f)
}

fn simulate(spec: &ConditionSpec, plan: &RunPlan) -> Result<Vec<EpisodeRecord>> {
    let mut seeds = plan.seeds.clone();
    seeds.sort_unstable();
    let jobs: Vec<(u64, u64)> = seeds
        .iter()
        .flat_map(|&s| (0..plan.episodes_per_seed).map(move |e| (s, e)))
        .collect();
    jobs.par_iter()
        .map(|&(s, e)| run_episode(spec, plan.master_seed, s, e))
        .collect()
}

/// Runs every seed and episode of one condition.
pub fn run_condition(spec: &ConditionSpec, plan: &RunPlan) -> Result<ConditionRun> {
    spec.validate()?;
    plan.validate()?;
    let records = with_pool(plan.parallelism, || simulate(spec, plan))?;
    let summary = summarize(&spec.label, spec.grid_value, &records)?;
    Ok(ConditionRun { summary, records })
}

/// Runs a sweep: one condition run per grid value, in grid order.
pub fn run_sweep(
    base: &ConditionSpec,
    kind: SweepKind,
    grid: &[f64],
    density: &DensityLossTable,
    plan: &RunPlan,
) -> Result<Vec<ConditionRun>> {
    if grid.is_empty() {
        return Err(Error::config("sweep.grid", "must not be empty"));
    }
    density.validate("channel.density_loss")?;
    let specs = grid
        .iter()
        .map(|&v| base.at_grid_point(kind, v, density))
        .collect::<Result<Vec<_>>>()?;
    plan.validate()?;
    with_pool(plan.parallelism, || {
        specs
            .iter()
            .map(|spec| {
                let records = simulate(spec, plan)?;
                let summary = summarize(&spec.label, spec.grid_value, &records)?;
                Ok(ConditionRun { summary, records })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_ci() {
        let m = mean_ci95(&[0.9; 5]);
        assert!((m.mean - 0.9).abs() < 1e-12);
        assert!(m.ci95.abs() < 1e-12);
    }

    #[test]
    fn five_seed_ci() {
        let m = mean_ci95(&[0.8, 0.9, 1.0, 0.9, 0.8]);
        assert!((m.mean - 0.88).abs() < 1e-12);
        let sd = 0.083_666_002_653_407_55;
        let expected = 2.776_445_105_197_793 * sd / 5f64.sqrt();
        assert!((m.ci95 - expected).abs() < 1e-9, "{}", m.ci95);
        assert!((m.ci95 - 0.1039).abs() < 1e-4);
    }

    #[test]
    fn single_seed_has_zero_width() {
        assert_eq!(mean_ci95(&[0.4]).ci95, 0.0);
    }

    #[test]
    fn unknown_sweep_kind() {
        let err = SweepKind::parse("weather").unwrap_err();
        assert!(err.to_string().contains("sweep.kind"));
        assert_eq!(SweepKind::parse("tau").unwrap(), SweepKind::Tau);
    }

    #[test]
    fn plan_validation() {
        let plan = RunPlan {
            master_seed: 0,
            seeds: vec![1, 1],
            episodes_per_seed: 3,
            parallelism: 1,
        };
        assert!(plan.validate().is_err());
        let plan = RunPlan { seeds: vec![], ..plan };
        assert!(plan.validate().is_err());
    }
}
