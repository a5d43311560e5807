"""Smoke test for the stipp_py extension.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import math
import pathlib
import sys
import tempfile

import stipp_py as sp


def main() -> int:
    h = sp.Hyperparams(1.0, 25.0, 43200.0, 0.01)
    assert sp.eval_kernel((0.0, 0.0), (0.0, 0.0), 0.0, 0.0, h) == 1.0

    # One noisy reading pulls the mean toward it and shrinks the variance.
    mean, cov = sp.posterior([(0.0, 0.0, 0.0)], [2.0], [(0.0, 0.0, 0.0), (500.0, 0.0, 0.0)], h)
    assert abs(mean[0] - 2.0 / 1.01) < 1e-9, mean
    assert abs(mean[1]) < 1e-9 and abs(cov[1][1] - 1.0) < 1e-9
    assert cov[0][0] < 0.011

    f, grad = sp.neg_logdet_and_grad([(0.0, 0.0, 0.0)], [(3.0, 4.0, 1.0), (-2.0, 1.0, 2.0)], h)
    assert math.isfinite(f) and len(grad) == 4

    try:
        sp.Hyperparams(-1.0, 1.0, 1.0, 0.0)
    except sp.StippError as e:
        print("rejected bad hyperparameters:", e)
    else:
        raise AssertionError("negative sigma2 accepted")

    root = pathlib.Path(__file__).resolve().parent.parent
    cfg = sp.ScenarioConfig.load(root / "configs" / "default.toml")
    cfg.steps = 5
    agree, total = sp.oracle_check(cfg)
    assert agree == total, (agree, total)

    res = sp.run(cfg)
    assert res.all_connected and res.rounds_total == 5
    with tempfile.TemporaryDirectory() as d:
        files = res.write(d)
        names = {pathlib.Path(p).name for p in files}
        assert {"trajectories.csv", "run_meta.json"} <= names, names
    med = res.median_std()
    print(f"oracle {agree}/{total}; {res.rounds_converged}/{res.rounds_total} rounds converged; median std {med[0]:.3f} -> {med[-1]:.3f}")
    print("smoke ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
