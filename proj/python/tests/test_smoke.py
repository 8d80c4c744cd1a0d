import json

import numpy as np
import pytest

import factorkit as fk


def make_panel(T=80, N=30, r=3, noise=0.5, seed=0):
    rng = np.random.default_rng(seed)
    factors = rng.standard_normal((T, r))
    loadings = rng.standard_normal((N, r))
    return factors @ loadings.T + noise * rng.standard_normal((T, N))


def test_standardize():
    x = make_panel()
    out = fk.standardize(x)
    z = out["values"]
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(z.std(axis=0), 1.0, atol=1e-12)
    assert np.allclose(out["means"], x.mean(axis=0))


def test_fit_shapes_and_shrinkage():
    x = make_panel()
    plain = fk.fit(x, r=3, method="pc")
    shrunk = fk.fit(x, r=3, method="rpc", gamma=0.05)
    assert plain["F"].shape == (80, 3)
    assert plain["loadings"].shape == (30, 3)
    d = plain["d"]
    assert np.all(np.diff(d) <= 1e-12)
    assert shrunk["effective_rank"] <= 3
    weights = np.sqrt(np.maximum(d - 0.05, 0.0) / d)
    assert np.allclose(shrunk["F"], plain["F"] * weights, atol=1e-10)
    assert np.allclose(shrunk["loadings"], plain["loadings"] * weights, atol=1e-10)


def test_iterative_matches_closed_form():
    x = make_panel(seed=1)
    a = fk.fit(x, r=3, method="rpc", gamma=0.1, iterative=True)
    b = fk.fit(x, r=3, method="rpc", gamma=0.1)
    gap = a["F"] @ a["loadings"].T - b["F"] @ b["loadings"].T
    assert np.max(np.abs(gap)) < 1e-8


def test_select_recovers_planted_rank():
    x = make_panel(T=150, N=100, r=3, noise=1.0, seed=2)
    sel = fk.select(x, rmax=8, gamma=0.05)
    assert sel["r_hat"] == 3
    assert sel["r_bar"] == 3
    assert len(sel["ic"]) == 9


def test_constrained_fit_residual():
    x = make_panel(T=60, N=10, r=2, seed=3)
    restrictions = json.dumps(
        {
            "r": 2,
            "constraints": [{"terms": [{"i": 1, "j": 2, "c": 1.0}], "phi": 0.0}],
        }
    )
    out = fk.constrained_fit(x, restrictions, gamma=0.02)
    assert out["restrictions"] == 1
    assert abs(out["loadings"][0, 1]) < 1e-9
    assert out["constraint_residual"] < 1e-10
    assert out["converged"]


def test_impute_preserves_observed():
    x = make_panel(T=60, N=20, r=2, noise=0.2, seed=4)
    x_missing = x.copy()
    holes = [(5, 3), (10, 7), (33, 0)]
    for t, i in holes:
        x_missing[t, i] = np.nan
    out = fk.impute(x_missing, k=2)
    completed = out["completed"]
    assert out["converged"]
    observed = np.isfinite(x_missing)
    assert np.array_equal(completed[observed], x_missing[observed])
    for t, i in holes:
        assert np.isfinite(completed[t, i])


def test_simulate_reproducible():
    a = fk.simulate(N=40, T=50, r=2, seed=9)
    b = fk.simulate(N=40, T=50, r=2, seed=9)
    assert np.array_equal(a["values"], b["values"])
    assert a["values"].shape == (50, 40)
    assert a["F0"].shape == (50, 2)
    assert a["loadings0"].shape == (40, 2)
    assert np.allclose(a["C0"], a["F0"] @ a["loadings0"].T)
    assert np.all(a["outliers"] == 0.0)


def test_sweep_csv():
    grid = json.dumps([{"dgp": "gaussian_factors", "N": 40, "T": 40, "r": 2}])
    csv = fk.sweep(grid, reps=2, gamma=0.05, rmax=6, seed=3, threads=1)
    lines = csv.splitlines()
    assert lines[0].startswith("dgp,N,T,r,omega")
    assert len(lines) == 2
    assert lines[1].startswith("gaussian_factors,40,40,2")


def test_interval_brackets_estimate():
    x = make_panel(T=100, N=50, r=2, noise=0.4, seed=5)
    out = fk.common_component_interval(x, r=2, i=3, t=7)
    assert out["lower"] <= out["estimate"] <= out["upper"]
    assert out["half_width"] > 0
    assert out["retained"] == 2
    corrected = fk.common_component_interval(x, r=2, i=3, t=7, gamma=0.1)
    assert corrected["bias"] != 0.0
    assert np.isclose(
        corrected["corrected"], corrected["estimate"] - corrected["bias"]
    )


def test_regress_ridge_shrinks():
    x = make_panel(T=80, N=30, r=3, seed=6)
    y = x[:, 0]
    out = fk.regress(x, y, r=3, method="pc", kappa=0.7)
    assert len(out["coef_ols"]) == 3
    assert out["retained"] == [0, 1, 2]
    assert np.all(np.abs(out["coef_ridge"]) <= np.abs(out["coef_ols"]) + 1e-12)


def test_validation_errors_map_to_value_error():
    with pytest.raises(ValueError):
        fk.fit(np.ones((1, 1)), r=1)
    with pytest.raises(ValueError):
        fk.fit(make_panel(), r=3, method="nope")
