"""Smoke test for the pyspecreg extension.

Build and install first:  pip install --no-build-isolation -e crates/pyspecreg
"""

import math
import random

import pyspecreg


def design(n, p, seed):
    rng = random.Random(seed)
    return [[rng.gauss(0.0, 1.0) for _ in range(p)] for _ in range(n)]


def matvec(x, b):
    return [sum(xi * bi for xi, bi in zip(row, b)) for row in x]


def main():
    n, p = 40, 10
    x = design(n, p, 1)
    beta = [2.0, -1.0, 1.0] + [0.0] * (p - 3)
    rng = random.Random(2)
    noise = [rng.gauss(0.0, 0.1) for _ in range(n)]
    y = [v + e for v, e in zip(matvec(x, beta), noise)]

    ridge = pyspecreg.fit(x, y, {"method": "ridge", "alpha": 1e-3}, b_n=0.3)
    assert ridge["n_hat"] == [0, 1, 2], ridge["n_hat"]
    assert max(abs(a - b) for a, b in zip(ridge["theta_tilde"], beta)) < 0.1

    # Least squares has nothing to debias.
    ls = pyspecreg.fit(x, y, {"method": "least_squares", "alpha": 1.0})
    assert ls["beta_hat"] == ls["beta_tilde"]

    noise_norm = math.sqrt(sum(e * e for e in noise))
    lw = pyspecreg.fit_iterative(
        x, y, {"scheme": "landweber", "dt": 5e-3}, "discrepancy", b_n=0.3, noise_norm=noise_norm
    )
    assert lw["k0"] >= 1 and lw["spec"]["method"] == "landweber"
    assert lw["n_tilde"] == [0, 1, 2], lw["n_tilde"]

    boot = pyspecreg.bootstrap(x, y, {"method": "ridge", "alpha": 1e-3}, 0.3, seed=5, replicates=100)
    again = pyspecreg.bootstrap(x, y, {"method": "ridge", "alpha": 1e-3}, 0.3, seed=5, replicates=100)
    assert boot == again and boot["c_hat"] > 0.0

    reports = pyspecreg.verify_filters()
    assert len(reports) == 10
    assert all(all(r["passed"].values()) for r in reports)

    config = {"n": 30, "p": 20, "seed": 0, "replicates": 2, "methods": ["least_squares"]}
    assert pyspecreg.simulate(config, seed=3) == pyspecreg.simulate(config, seed=3)

    try:
        pyspecreg.fit(x, y[:-1], {"method": "ridge", "alpha": 0.1})
    except ValueError:
        pass
    else:
        raise AssertionError("mismatched y accepted")

    print("pyspecreg smoke test passed")


if __name__ == "__main__":
    main()
