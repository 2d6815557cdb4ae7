import json
import math

import numpy as np
import pytest

from semantic_bmm.distributions import MapParams
from semantic_bmm.scenarios import (
    ScenarioConfig,
    affine_fit,
    align_classes,
    gen_driving,
    gen_toy,
    grid_kl,
    run_benchmark,
    run_scenario,
    write_outputs,
)

from conftest import random_map


def test_config_parsing(tmp_path):
    cfg = ScenarioConfig.from_dict({"kind": "driving_time_varying", "J": 2, "K": 3, "delta": "inf"})
    assert math.isinf(cfg.delta)
    assert cfg.prior_spread == 0.0 and cfg.projection == "weighted"
    assert ScenarioConfig(kind="toy_static").prior_spread == 0.5
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ScenarioConfig.from_json_file(path) == cfg
    for bad in ({"kind": "nope"}, {"N": 0}, {"rate_hz": 0}, {"delta": -1}, {"bogus": 1},
                {"projection": "median"}, {"p_inf": "whatever"}):
        with pytest.raises(ValueError):
            ScenarioConfig.from_dict(bad)


def test_checkpoint_defaults():
    assert ScenarioConfig(N=1000).checkpoint_steps == [100, 1000]
    assert ScenarioConfig(N=5, checkpoints=[0, 2, 2, 9]).checkpoint_steps == [2]


def test_gen_toy_recipe():
    cfg = ScenarioConfig(kind="toy_static", J=3, K=4, N=10)
    truth, p0 = gen_toy(cfg, np.random.default_rng(0))
    t = truth[1]
    assert truth[7] is t
    np.testing.assert_array_equal(t.alpha, 1000.0)
    np.testing.assert_array_equal(t.lam, 1.0)
    tau = t.alpha / t.beta
    assert np.all((tau >= 100) & (tau <= 300))
    assert np.all((t.a >= 1) & (t.a <= 3)) and np.all((t.mu >= 0) & (t.mu <= 1))
    np.testing.assert_allclose(p0.lam, 0.1)
    np.testing.assert_allclose(p0.alpha, 100.0)
    np.testing.assert_allclose(p0.beta, 0.1 * t.beta)
    np.testing.assert_array_equal(p0.a, 1.0)
    assert np.all(np.abs(p0.mu - t.mu) <= 0.5)


def test_gen_driving_trajectory():
    cfg = ScenarioConfig(kind="driving_time_varying", J=2, K=3, N=100)
    truth, p0 = gen_driving(cfg, np.random.default_rng(0))
    np.testing.assert_allclose(truth[0].mu[0], [0.95, 0.9])
    np.testing.assert_allclose(truth[100].a, [10, 10, 50])
    np.testing.assert_allclose(truth[50].a, [30, 10, 30])
    np.testing.assert_allclose(truth[100].mu, 0.9 * truth[0].mu)
    np.testing.assert_array_equal(truth[100].lam, truth[0].lam)
    np.testing.assert_array_equal(p0.mu, truth[0].mu)  # prior_spread 0 by default
    with pytest.raises(ValueError):
        gen_driving(ScenarioConfig(kind="driving_time_varying", J=3, K=3), np.random.default_rng(0))


def test_grid_kl_properties(rng):
    p = random_map(rng, 3, 2)
    assert grid_kl(p, p, 60) == pytest.approx(0.0, abs=1e-12)
    assert grid_kl(p, p.replace(mu=p.mu + 0.3), 60) > 0
    with pytest.raises(ValueError):
        grid_kl(random_map(rng, 2, 3), random_map(rng, 2, 3))


def test_align_classes_recovers_permutation(rng):
    p = random_map(rng, 5, 3, spread=5.0)
    order = [3, 0, 4, 1, 2]
    perm = align_classes(p, p.permute(order))
    np.testing.assert_array_equal(np.asarray(order)[perm], np.arange(5))


def test_affine_fit_exact_line():
    b, m, r2 = affine_fit([1, 2, 5, 10, 20], [3 + 2 * x for x in (1, 2, 5, 10, 20)])
    assert (b, m, r2) == pytest.approx((3.0, 2.0, 1.0))


def test_benchmark_rejects_few_reps():
    with pytest.raises(ValueError):
        run_benchmark([1, 2], n_reps=100)


def test_benchmark_small_run():
    rows, (b, m, r2) = run_benchmark([1, 4], K=3, n_reps=10_000, block=2_500)
    assert [r[0] for r in rows] == [1, 4]
    assert all(r[1] > 0 for r in rows)


@pytest.mark.parametrize("kind, J, K", [("toy_static", 2, 3), ("driving_time_varying", 2, 3)])
def test_run_scenario_outputs(tmp_path, kind, J, K):
    cfg = ScenarioConfig(kind=kind, J=J, K=K, N=300, delta=20.0, seed=4, record_every=7, grid_points=40)
    res = run_scenario(cfg)
    assert res.steps[-1] == 300 and res.steps[0] == 7
    assert [c["step"] for c in res.checkpoints] == [30, 300]
    assert {"static_kl", "dynamic_weight_mae", "dynamic_dominant_mean_err_raw"} <= set(res.checkpoints[0])
    paths = write_outputs(res, tmp_path / "a")
    names = sorted(p.name for p in paths)
    assert names == ["dynamic.csv", "manifest.json", "static.csv", "truth.csv"]
    # positivity of every emitted row (a, lambda, alpha, beta columns)
    header = (tmp_path / "a" / "static.csv").read_text().splitlines()[0].split(",")
    cols = [i for i, h in enumerate(header) if h.split("_")[0] in ("a", "lambda", "alpha", "beta")]
    for name in ("static.csv", "dynamic.csv", "truth.csv"):
        data = np.loadtxt(tmp_path / "a" / name, delimiter=",", skiprows=1)
        assert np.all(data[:, cols] > 0)
    # same seed -> byte-identical files
    write_outputs(run_scenario(cfg), tmp_path / "b")
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_static_filter_independent_of_rate():
    base = dict(kind="driving_time_varying", J=2, K=3, N=200, seed=1, grid_points=30)
    a = run_scenario(ScenarioConfig(rate_hz=10.0, **base)).final_static
    b = run_scenario(ScenarioConfig(rate_hz=0.37, **base)).final_static
    assert np.array_equal(a.flat(), b.flat())


def test_dynamic_tends_to_static_for_large_delta():
    base = dict(kind="toy_static", J=2, K=2, N=200, seed=2, grid_points=30)
    gaps = []
    for delta in (1e6, 1e9, 1e12):
        res = run_scenario(ScenarioConfig(delta=delta, **base))
        gaps.append(np.max(np.abs(res.final_dynamic.flat() - res.final_static.flat())))
    # forgetting perturbs by O(dt / delta): each 1000x step shrinks the gap ~1000x
    assert gaps[1] < 1e-2 * gaps[0] and gaps[2] < 1e-2 * gaps[1] and gaps[2] < 1e-6


def test_explicit_p_inf(rng):
    p_inf = random_map(rng, 3, 2)
    cfg = ScenarioConfig(kind="driving_time_varying", J=2, K=3, N=20, delta=1e-3,
                         p_inf=p_inf.to_dict(), grid_points=20)
    res = run_scenario(cfg)
    # with a tiny time constant the dynamic filter restarts from p_inf before every update
    assert not np.allclose(res.final_dynamic.flat(), res.final_static.flat())
