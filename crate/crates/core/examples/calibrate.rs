//! Calibration search for the shipped defaults.
//!
//! `cargo run --release --example calibrate -- eval [params.json]` prints the
//! target table for one parameter vector; `search <iters> [params.json]`
//! runs a perturbation search from it and prints the best vector as JSON.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use v2v_consensus::campaign::{run_condition, Condition, ConditionSpec, RunPlan, SweepKind};
use v2v_consensus::channel::DensityLossTable;

type Params = BTreeMap<String, f64>;

const KEYS: &[(&str, f64, f64)] = &[
    ("hazard_prevalence", 0.05, 1.0),
    ("occlusion_prevalence", 0.0, 1.0),
    ("hazard_distance_min", 5.0, 40.0),
    ("hazard_distance_span", 0.0, 30.0),
    ("hazard_speed", 4.0, 20.0),
    ("neighbor_los_prob", 0.0, 1.0),
    ("extra_neighbor_los_prob", 0.0, 1.0),
    ("ego_occlusion_prob", 0.0, 1.0),
    ("neighbor_detection_prob", 0.0, 1.0),
    ("false_positive_prob", 0.0, 0.5),
    ("confident_concentration", 0.01, 5.0),
    ("ambiguous_concentration", 0.2, 200.0),
    ("lateral_mass", 0.0, 0.2),
    ("proceed_faster_share", 0.0, 1.0),
    ("reaction_deadline_ms", 150.0, 400.0),
    ("baseline_processing_delay_ms", 0.0, 60.0),
];

fn defaults() -> Params {
    let s = ConditionSpec::preset(Condition::Swarm6g);
    let b = ConditionSpec::preset(Condition::SwarmBaselineV2x);
    let mut p = Params::new();
    let c = &s.calibration;
    let sc = &s.scenario;
    for (k, v) in [
        ("hazard_prevalence", sc.hazard_prevalence),
        ("occlusion_prevalence", sc.occlusion_prevalence),
        ("hazard_distance_min", sc.hazard_distance_min),
        ("hazard_distance_span", sc.hazard_distance_max - sc.hazard_distance_min),
        ("hazard_speed", sc.hazard_speed),
        ("neighbor_los_prob", sc.neighbor_los_prob),
        ("extra_neighbor_los_prob", sc.extra_neighbor_los_prob),
        ("ego_occlusion_prob", c.ego_occlusion_prob),
        ("neighbor_detection_prob", c.neighbor_detection_prob),
        ("false_positive_prob", c.false_positive_prob),
        ("confident_concentration", c.confident_concentration),
        ("ambiguous_concentration", c.ambiguous_concentration),
        ("lateral_mass", c.lateral_mass),
        ("proceed_faster_share", c.proceed_faster_share),
        ("reaction_deadline_ms", sc.reaction_deadline_ms),
        ("baseline_processing_delay_ms", b.consensus.neighbor_processing_delay_ms),
    ] {
        p.insert(k.into(), v);
    }
    p
}

fn apply(spec: &mut ConditionSpec, p: &Params) {
    let sc = &mut spec.scenario;
    sc.hazard_prevalence = p["hazard_prevalence"];
    sc.occlusion_prevalence = p["occlusion_prevalence"];
    sc.hazard_distance_min = p["hazard_distance_min"];
    sc.hazard_distance_max = p["hazard_distance_min"] + p["hazard_distance_span"];
    sc.hazard_speed = p["hazard_speed"];
    sc.neighbor_los_prob = p["neighbor_los_prob"];
    sc.extra_neighbor_los_prob = p["extra_neighbor_los_prob"];
    sc.reaction_deadline_ms = p["reaction_deadline_ms"];
    let c = &mut spec.calibration;
    c.ego_occlusion_prob = p["ego_occlusion_prob"];
    c.neighbor_detection_prob = p["neighbor_detection_prob"];
    c.false_positive_prob = p["false_positive_prob"];
    c.confident_concentration = p["confident_concentration"];
    c.ambiguous_concentration = p["ambiguous_concentration"];
    c.lateral_mass = p["lateral_mass"];
    c.proceed_faster_share = p["proceed_faster_share"];
    if spec.label == Condition::SwarmBaselineV2x.as_str() {
        spec.consensus.neighbor_processing_delay_ms = p["baseline_processing_delay_ms"];
    }
}

struct Target {
    name: &'static str,
    value: f64,
    tol: f64,
}

fn evaluate(p: &Params, episodes: u64, verbose: bool) -> f64 {
    let plan = RunPlan {
        master_seed: std::env::var("MASTER_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0x5eed),
        seeds: vec![0, 1, 2, 3, 4],
        episodes_per_seed: episodes,
        parallelism: 0,
    };
    let density = DensityLossTable::default();
    let spec = |c: Condition| {
        let mut s = ConditionSpec::preset(c);
        apply(&mut s, p);
        s
    };
    let run = |s: &ConditionSpec| run_condition(s, &plan).map(|r| r.summary);
    let mut rows: Vec<(Target, f64)> = Vec::new();
    let mut push = |name, value, tol, got| rows.push((Target { name, value, tol }, got));

    let (Ok(sl), Ok(bl), Ok(g6)) = (
        run(&spec(Condition::SingleLocal)),
        run(&spec(Condition::SwarmBaselineV2x)),
        run(&spec(Condition::Swarm6g)),
    ) else {
        return f64::INFINITY;
    };
    push("sl_success", 0.689, 0.02, sl.success.mean);
    push("sl_latency", 145.0, 3.0, sl.latency_ms.mean);
    push("bl_success", 0.835, 0.02, bl.success.mean);
    push("bl_latency", 218.9, 8.0, bl.latency_ms.mean);
    push("6g_success", 0.941, 0.02, g6.success.mean);
    push("6g_latency", 151.4, 4.0, g6.latency_ms.mean);
    push("6g_messages", 18.0, 0.5, g6.messages_per_episode);
    push("6g_trigger", 1.0, 0.01, g6.trigger_rate.mean);

    let base = spec(Condition::Swarm6g);
    for (q, t) in [(0.0, 0.953), (0.1, 0.906), (0.2, 0.859), (0.4, 0.769)] {
        let s = base.at_grid_point(SweepKind::PacketLoss, q, &density).unwrap();
        push("pl", t, 0.03, run(&s).unwrap().success.mean);
    }
    for (n, t) in [(1.0, 0.698), (2.0, 0.795), (3.0, 0.858), (4.0, 0.926), (8.0, 0.865)] {
        let s = base.at_grid_point(SweepKind::SwarmSize, n, &density).unwrap();
        push("ss", t, 0.03, run(&s).unwrap().success.mean);
    }
    let best_low = [0.65, 0.7]
        .iter()
        .map(|&t| run(&base.at_grid_point(SweepKind::Tau, t, &density).unwrap()).unwrap().success.mean)
        .fold(0.0, f64::max);
    push("tau_low_success_floor", 0.945, 0.005, best_low.min(0.945));
    let s = base.at_grid_point(SweepKind::Tau, 0.8, &density).unwrap();
    let t8 = run(&s).unwrap();
    push("tau08_trigger", 0.676, 0.05, t8.trigger_rate.mean);
    push("tau08_success_floor", 0.92, 0.01, t8.success.mean.min(0.92));
    let s = base.at_grid_point(SweepKind::Tau, 0.95, &density).unwrap();
    let t95 = run(&s).unwrap();
    push("tau095_trigger", 0.0, 0.002, t95.trigger_rate.mean);

    let mut loss = 0.0;
    for (t, got) in &rows {
        let z = (got - t.value) / t.tol;
        // inside tolerance counts little, outside counts a lot
        loss += if z.abs() <= 0.5 { 0.2 * z * z } else { z * z };
        if verbose {
            println!("{:<22} target {:>8.4} got {:>8.4}  z {:+.2}", t.name, t.value, got, z);
        }
    }
    if verbose {
        println!("loss {loss:.4}");
    }
    loss
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("eval");
    let mut p = defaults();
    let file_arg = match mode {
        "search" => args.get(2),
        _ => args.get(1),
    };
    if let Some(path) = file_arg {
        let text = std::fs::read_to_string(path).expect("params file");
        let loaded: Params = serde_json::from_str(&text).expect("params json");
        p.extend(loaded);
    }
    match mode {
        "eval" => {
            let episodes = std::env::var("EPISODES").ok().and_then(|s| s.parse().ok()).unwrap_or(1500);
            evaluate(&p, episodes, true);
        }
        "search" => {
            let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
            let episodes = std::env::var("EPISODES").ok().and_then(|s| s.parse().ok()).unwrap_or(300);
            let mut rng = ChaCha8Rng::seed_from_u64(std::process::id().into());
            let mut best = evaluate(&p, episodes, false);
            let mut scale: f64 = std::env::var("SCALE").ok().and_then(|s| s.parse().ok()).unwrap_or(0.15);
            for i in 0..iters {
                let mut cand = p.clone();
                let n_changes = rng.random_range(1..=3);
                for _ in 0..n_changes {
                    let (k, lo, hi) = KEYS[rng.random_range(0..KEYS.len())];
                    let v = cand[k];
                    let step = (hi - lo) * scale * (2.0 * rng.random::<f64>() - 1.0);
                    cand.insert(k.into(), (v + step).clamp(lo, hi));
                }
                let l = evaluate(&cand, episodes, false);
                if l < best {
                    best = l;
                    p = cand;
                    eprintln!("iter {i} loss {best:.4}");
                    if let Ok(path) = std::env::var("BEST_OUT") {
                        std::fs::write(path, serde_json::to_string_pretty(&p).unwrap()).unwrap();
                    }
                } else if i % 50 == 49 {
                    scale = (scale * 0.8).max(0.02);
                }
            }
            println!("{}", serde_json::to_string_pretty(&p).unwrap());
            evaluate(&p, episodes, true);
        }
        other => panic!("unknown mode {other}"),
    }
}
