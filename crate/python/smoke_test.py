"""Smoke test for the sim2real Python module.

Build and install the module first, for example with
``maturin develop -m crates/py/Cargo.toml``, then run this script.
"""

import math
import pathlib

import sim2real

ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "crates" / "sim2real" / "configs"


def check_numeric():
    assert sim2real.round_sig(0.123456, 2) == 0.12
    assert sim2real.round_sig(-1234.5, 3) == -1230.0
    mean, half, n = sim2real.mean_ci95([1.0, 2.0, 3.0])
    assert n == 3 and mean == 2.0
    assert math.isclose(half, 1.96 / math.sqrt(3))


def check_functions_and_explainers():
    box = sim2real.GroundTruth("box")
    assert box.dim == 3
    assert box.predict([0.2, 0.5, 0.5]) in (0, 1)
    piece = sim2real.GroundTruth("piece")
    assert piece.dim == 10
    assert not piece.uses_feature([0.5] * 10, 0)

    ex = sim2real.Explainers("box", seed=1)
    for kind in ("faithful", "robust", "sparse", "sparse_robust"):
        weights, intercept = ex.explain(kind, [0.3, 0.6, 0.9])
        assert len(weights) == 3 and math.isfinite(intercept)
    _, _ = ex.explain("sparse", [0.1, 0.1, 0.1])
    try:
        ex.explain("nonsense", [0.1, 0.1, 0.1])
    except ValueError:
        pass
    else:
        raise AssertionError("unknown kind accepted")


def check_simulate():
    config = """
seed = 3
trials = 3
functions = ["box"]
tasks = ["forward"]
memory = ["limited"]

[properties]
enabled = false
"""
    rows = sim2real.simulate(config)
    assert len(rows) == 4, rows
    assert {r["kind"] for r in rows} == {"faithful", "robust", "sparse", "sparse_robust"}
    assert all(r["n"] == 3 and 0.0 <= r["mean"] <= 1.0 for r in rows)
    assert sim2real.simulate(config) == rows, "same seed, same numbers"


def check_stimuli():
    text = sim2real.generate_stimuli((CONFIGS / "box_forward.toml").read_text())
    rows = sim2real.parse_stimuli(text)
    test_items = {r["item"] for r in rows if r["phase"] == "test"}
    assert len(test_items) == 30
    counts = {}
    for r in rows:
        if r["phase"] == "test" and r["kind"] == "faithful":
            counts[r["category"]] = counts.get(r["category"], 0) + 1
    assert sorted(counts.values()) == [10, 10, 10], counts


if __name__ == "__main__":
    check_numeric()
    check_functions_and_explainers()
    check_simulate()
    check_stimuli()
    print(f"sim2real {sim2real.__version__}: python smoke test passed")
