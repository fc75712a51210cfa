import math

import pytest

import occuhet


TROUT = {0: 45, 1: 11, 2: 17, 3: 4}


def trout_root():
    lo, hi = 1e-9, 1 - 1e-9
    f = lambda p: 3 * p / (1 - (1 - p) ** 3) - 57 / 32
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_trout_cl_matches_mean_equation():
    fit = occuhet.fit_counts("binomial", TROUT, visits=3, method="cl")
    p = trout_root()
    p_hat = next(d["estimate"] for d in fit["derived"] if d["name"] == "p")
    assert p_hat == pytest.approx(p, abs=1e-6)
    assert fit["psi"]["estimate"] == pytest.approx(32 / (77 * (1 - (1 - p) ** 3)), abs=1e-6)


def test_ml_equals_cl_for_homogeneous_poisson():
    counts = {0: 85, 1: 10, 2: 5}
    ml = occuhet.fit_counts("poisson", counts, method="ml")
    cl = occuhet.fit_counts("poisson", counts, method="cl")
    for a, b in zip(ml["parameters"], cl["parameters"]):
        assert a["estimate"] == pytest.approx(b["estimate"], abs=1e-6)


def test_bias_rho_closed_form():
    r = occuhet.bias_rho(1.0, 1.0)
    assert r["rho"] == pytest.approx((math.e - 2) / (math.e - 1.5), rel=1e-12)


def test_limit_omega_constant_psi():
    out = occuhet.limit_omega([0.2, 0.5, 0.9], [0.4, 0.4, 0.4])
    assert out["exact"] == pytest.approx(0.4, abs=1e-9)


def test_validation_error_maps_to_value_error():
    with pytest.raises(ValueError):
        occuhet.fit_counts("poisson", {0: 10})


def test_fit_csv_with_ht(tmp_path):
    path = tmp_path / "sites.csv"
    rows = ["y,x"] + [f"{k},{(i % 5) / 4:.2f}" for i, k in enumerate([0] * 30 + [1, 2, 3, 1, 4, 2] * 3)]
    path.write_text("\n".join(rows) + "\n")
    fit = occuhet.fit_csv(path, "poisson", y="y", detection="1 + x", method="cl", ht=True)
    assert fit["ht_estimate"]["estimate"] >= 18 / 48


def test_small_simulation_runs():
    config = 'scenario = "b"\nn = 100\nreplicates = 4\nseed = 7\n'
    rows = occuhet.simulate(config, threads=2)
    assert any(r["estimand"] == "psi" for r in rows)
