"""Smoke test for the nfldp Python extension.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
or
    pip install --no-build-isolation ./crates/python
"""

import json
import math
import tempfile

import nfldp


def main():
    assert nfldp.gram_deviation(1, 63) < 1e-8
    basis = nfldp.basis(1, 16, xi=1.0)
    assert len(basis["indices"]) == 17

    model = nfldp.Model.homogeneous_bistable(1, 7, 1.0)
    assert model.n_modes == 8
    lower, kind = model.stationary(model.constant_state(0.0))
    assert kind == "stable", kind
    saddle, kind = model.stationary(model.constant_state(0.5))
    assert kind == "unstable", kind
    assert max(abs(x) for x in model.drift(lower)) < 1e-10

    times, states = model.simulate(lower, epsilon=0.1, t_end=1.0, dt=0.01, seed=3)
    assert len(times) == len(states) == 101
    again = model.simulate(lower, epsilon=0.1, t_end=1.0, dt=0.01, seed=3)[1]
    assert states == again

    scalar = nfldp.Model.scalar_bistable()
    lo, _ = scalar.stationary([0.0])
    s, kind = scalar.stationary([1.25])
    assert kind == "saddle-like", kind
    report = scalar.quasipotential(lo, s, [2.0, 4.0, 6.0, 8.0], m=200)
    assert set(report) == {"value", "T_profile", "N_eff", "converged"}
    k = scalar.kramers(epsilon=0.3, a=-1.0, b=4.0)
    assert abs(k["estimate"]["barrier"] * 2 - report["value"]) / report["value"] < 0.05

    exact = 2 * math.pi / math.sqrt(2) * math.exp(5)
    assert abs(nfldp.kramers_quartic(math.sqrt(0.1)) - exact) / exact < 1e-12

    rows = [[0.1 * k for k in range(11)], [0.0] * 11]
    total, (a1, a2, a3) = nfldp.Model.homogeneous_bistable(1, 1, 1.0).action(1.0, rows)
    assert abs(total - 0.5 * (a1 - 2 * a2 + a3)) < 1e-9 * max(1.0, total)

    try:
        nfldp.run_config(json.dumps({"command": "spectrum", "model": {"alpha": -1.0}}))
    except ValueError:
        pass
    else:
        raise AssertionError("bad config accepted")

    with tempfile.TemporaryDirectory() as d:
        manifest = nfldp.run_config('command = "spectrum"\n', output_dir=d)
        assert {o["file"] for o in manifest["outputs"]} >= {"basis.json", "spectrum.json"}

    print("python smoke test passed")


if __name__ == "__main__":
    main()
