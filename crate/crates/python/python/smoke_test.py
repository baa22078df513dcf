"""Smoke test for the compiled module.

    cargo build --release -p atomscan-python
    cp target/release/libatomscan_py.so /tmp/pymod/atomscan.so
    PYTHONPATH=/tmp/pymod python3 crates/python/python/smoke_test.py
"""

import json
import math
import os
import tempfile

import atomscan


def main():
    eta = atomscan.lamb_dicke()
    assert abs(eta - 0.262) < 0.005, eta
    assert atomscan.bound_state_count() == 235

    fc = atomscan.franck_condon_matrix(eta, 60)
    assert abs(fc[0][0] - math.exp(-eta * eta)) < 1e-12
    assert abs(sum(row[0] for row in fc) - 1.0) < 1e-9
    identity = atomscan.franck_condon_matrix(0.0, 5)
    assert all(identity[n][m] == (1.0 if n == m else 0.0) for n in range(5) for m in range(5))

    r = [0.2e-6 + 0.1e-6 * i for i in range(40)]
    intensity = [atomscan.evanescent_intensity(400e-12, 743e-9, x) for x in r]
    fit = atomscan.fit_decay_length(r, intensity, power=400e-12)
    assert abs(fit["decay_length"] / 743e-9 - 1.0) < 1e-9, fit
    free = atomscan.fit_decay_length(r, [3.0 * v for v in intensity])
    assert abs(free["power"] / 1.2e-9 - 1.0) < 1e-8, free

    curve = atomscan.survival_vs_position([0.1e-6, 1e-6, 2.35e-6, 5e-6])
    s = curve["survival"]
    assert s == sorted(s) and s[0] < 0.05 and s[-1] > 0.95, s

    try:
        atomscan.survival_vs_position([0.05e-6])
    except ValueError as e:
        assert "out of domain" in str(e)
    else:
        raise AssertionError("expected a ValueError inside the cutoff radius")

    times = [i * 10e-6 for i in range(9)]
    obs = atomscan.release_recapture_simulate(40e-6, times, 10_000, seed=11)
    assert obs[0] == 1.0 and obs[-1] < obs[1]
    t = atomscan.fit_temperature(times, obs, 10_000, bootstrap=8)
    assert abs(t["temperature"] / 40e-6 - 1.0) < 0.15, t

    move = atomscan.transport_profile(3.6e-3, 0.1, 2.0, 5e-3, 1e-4)
    assert abs(move["position"][-1] - 3.6e-3) < 1e-15 and move["velocity"][-1] == 0.0

    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "run.json")
        with open(cfg, "w") as f:
            json.dump({"fc_matrix": {"n_trunc": 10}}, f)
        out = os.path.join(tmp, "out")
        assert atomscan.run_cli(["fc-matrix", "--config", cfg, "--out", out]) == 0
        with open(os.path.join(out, "fc_matrix_report.json")) as f:
            assert json.load(f)["n_trunc"] == 10
        assert atomscan.run_cli(["fc-matrix", "--config", os.path.join(tmp, "missing.json")]) == 2

    print("smoke test passed")


if __name__ == "__main__":
    main()
