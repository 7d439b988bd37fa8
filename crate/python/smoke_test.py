"""Smoke test for the lorentz_limits extension module.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml
then run:
    python python/smoke_test.py
"""

import math

import lorentz_limits as ll


def bit(k):
    return ll.WindowFunction.coordinate(2, k).add_constant(-0.5)


def main():
    fair = ll.BernoulliShift.fair(2)

    r = ll.decompose(fair, bit(-1))
    assert r.m.lo == 0 and r.m.hi == 0
    assert r.m.table == [-0.5, 0.5], r.m.table
    assert (r.chi + bit(-1)).max_abs() == 0.0
    assert r.sigma2_from_m == 0.25
    assert r.residual_decomposition <= 1e-12 and r.residual_martingale <= 1e-12

    past, future = ll.condition_decay_profile(fair, bit(-1), 2.0, 4)
    assert all(v == 0.0 for v in past[1:]) and all(v == 0.0 for v in future[1:])

    driver = ll.Driver.symbolic(fair, [bit(0), bit(-1)])
    sigma, e = driver.exact_correlations()
    assert abs(e[0][1] - 0.25) < 1e-15
    ks, samples = ll.Driver.symbolic(fair, [bit(0)]).clt(500, 2000, 0.25, 1)
    assert len(samples) == 2000 and ks < 0.05, ks
    it = driver.iterated(100, 500, 2)
    assert it["max_symmetrization_residual"] < 1e-10

    table = ll.ScattererTable.reference()
    h = table.estimate_horizon(20000, 50.0, 3)
    assert not h["cap_exceeded"] and h["tau_min_observed"] >= table.tau_min_lower
    assert table.hyperbolicity_constant() > 1.0
    assert ll.ScattererTable([(0.0, 0.0, 0.3)]).estimate_horizon(2000, 50.0, 3)["cap_exceeded"]
    for name, coord, ks in table.invariance_check(20000, 4):
        assert ks < 3 * math.sqrt(math.log(2) / (2 * 20000)), (name, coord, ks)

    gas = ll.Driver.lorentz(table, ["cos_theta"])
    gk = gas.green_kubo(20, 20000, 5)
    assert gk["sigma"][0][0] > 0.0

    drift = ll.corrected_drift(["0"], [["1 + x0"]], [[0.25]], [1.0])
    assert abs(drift[0] - 0.5) < 1e-15, drift
    xs = ll.euler_maruyama(["0"], [["1 + x0"]], [[1.0]], [[0.25]], [0.0], 200, 2000, 6)
    m = sum(x[0] for x in xs) / len(xs)
    assert abs(m - (math.exp(0.25) - 1.0)) < 0.15, m

    slow = ll.Driver.symbolic(fair, [bit(0) + bit(-1)]).fastslow(["0"], [["1 + x0"]], 0.1, [0.0], 500, 7)
    assert len(slow) == 500 and len(slow[0]) == 1

    try:
        ll.BernoulliShift([0.5, 0.6])
    except ValueError:
        pass
    else:
        raise AssertionError("invalid probabilities accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
