"""Smoke test for the `hawkes` extension module.

Build first with `cargo build --release -p hawkes-py`, then run
`python3 python/smoke.py`. The script copies the shared library next to a
temporary `hawkes.so` so it can be imported without installing a wheel.
"""

import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libhawkes.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "hawkes.so")
            sys.path.insert(0, str(tmp))
            import hawkes

            return hawkes
    sys.exit("libhawkes.so not found; run `cargo build --release -p hawkes-py` first")


def main():
    hawkes = load()

    params = hawkes.ModelParams([0.5, 0.5], [[0.3, 0.0], [0.2, 0.4]], alpha=1.0)
    assert params.dim == 2
    assert 0.0 < params.spectral_radius() < 1.0

    events = hawkes.simulate(params, 500.0, seed=3)
    again = hawkes.simulate(params, 500.0, seed=3)
    assert events.events == again.events, "simulation is not reproducible"
    assert events.total_events() > 0
    assert hawkes.EventData.from_json(events.to_json()).events == events.events
    print(events)

    lam = params.intensity_at(events, 0, 100.0)
    assert lam >= 0.5

    res = hawkes.fit(events, procedure="NoPen", loss="least-squares", max_iter=500)
    truth = [0.5, 0.5, 0.3, 0.0, 0.2, 0.4]
    est = res.mu + [v for row in res.adjacency for v in row]
    rel = math.sqrt(sum((a - b) ** 2 for a, b in zip(est, truth)) / sum(v * v for v in truth))
    print(res, f"relative error {rel:.3f}")
    assert rel < 0.5

    w, big_w, tau = hawkes.weights(events, mode="practical", c1=1.0, c2=1.0)
    assert len(w) == 2 and len(big_w) == 2 and tau >= 0.0

    report = hawkes.evaluate(res.mu, res.adjacency, params.mu, params.adjacency)
    assert 0.0 <= report["auc"] <= 1.0

    cv = hawkes.cross_validation(events, "wL1", c1=[0.5, 1.0], c2=[1.0, 4.0])
    assert cv["best"]["c1"] in (0.5, 1.0)

    scenario, support = hawkes.community_scenario(d=20, seed=1)
    assert scenario.dim == 20 and len(support) == 20

    bound = hawkes.check_bound("pointwise", d=2, horizon=50.0, reps=50, seed=1)
    assert "consistent" in bound

    try:
        hawkes.ModelParams([0.1], [[1.5]])
        hawkes.simulate(hawkes.ModelParams([0.1], [[1.5]]), 10.0)
    except ValueError as e:
        print("rejected unstable parameters:", e)
    else:
        raise AssertionError("unstable parameters were accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
