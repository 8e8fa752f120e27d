"""Smoke test for the Python bindings.

Build first: `pip install maturin && maturin develop -m crates/py/Cargo.toml`.
"""

import math
import pathlib

import v2v_consensus as vc

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    assert vc.META_ACTIONS == ["FASTER", "SLOWER", "IDLE", "TURN_LEFT", "TURN_RIGHT"], vc.META_ACTIONS

    u = vc.IntentDistribution.uniform(5)
    assert math.isclose(u.entropy(), 1.0)
    assert math.isclose(u.entropy(normalized=False), math.log(5))
    assert u.should_trigger(0.7)

    p = vc.IntentDistribution([0.0, 1.0, 0.0, 0.0, 0.0])
    assert p.entropy() == 0.0 and p.action() == "SLOWER"

    w = vc.inverse_distance_weights([1.0, 3.0])
    assert math.isclose(w[0], 0.75) and math.isclose(w[1], 0.25)
    fused = vc.fuse([p, u], [1.0, 3.0])
    assert math.isclose(sum(fused.probs), 1.0)
    assert fused.argmax() == 1

    try:
        vc.IntentDistribution([0.5, 0.6])
    except ValueError:
        pass
    else:
        raise AssertionError("non-simplex input accepted")

    s = vc.run_condition("swarm_6g", seeds=[0, 1], episodes_per_seed=50)
    assert 0.0 <= s["success_mean"] <= 1.0
    assert s["trigger_rate_mean"] > 0.9

    local = vc.run_condition("single_local", seeds=[0], episodes_per_seed=50)
    assert local["messages_total"] == 0

    r = vc.run_config(str(ROOT / "configs" / "sweep_tau.toml"), seeds=[0], episodes_per_seed=10)
    assert len(r["rows"]) == 8 and r["episodes"] == 80
    print(f"ok: swarm_6g success {s['success_mean']:.3f}, {r['run_id']}")


if __name__ == "__main__":
    main()
