import numpy as np
import pytest

from stochexp.catalog import brownian_model, catalog_get
from stochexp.engine import Streams
from stochexp.errors import NonFiniteState
from stochexp.estimates import MCEstimate
from stochexp.model import CoefficientSet, LevyMeasure, ModelSpec
from stochexp.simulate import (
    DriverPath,
    StoppingRule,
    TimeGrid,
    apply_stopping,
    default_checkpoints,
    integrate_path,
    run_ensemble,
    simulate_driver,
    simulate_ensemble,
    write_paths_csv,
)


def _pure_jump(rate=2.0, h=lambda s, v, z: z):
    return ModelSpec(x0=[0.0], levy=LevyMeasure.two_point(rate=rate),
                     coefficients=CoefficientSet(h=h))


def test_grid_validation():
    g = TimeGrid(1.0, 1e-3)
    assert g.n == 1000
    assert g.times[-1] == 1.0
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, -1.0)


def test_default_checkpoints_end_at_horizon():
    cps = default_checkpoints(TimeGrid(1.0, 1e-3))
    assert len(cps) == 10 and cps[-1] == 1000


def test_driver_without_levy_has_no_jumps():
    d = simulate_driver(TimeGrid(1.0, 0.01), None, 1, Streams(3))
    assert d.n_jumps == 0 and d.dB.shape == (100, 1)


def test_driver_is_deterministic():
    g, K = TimeGrid(1.0, 0.01), LevyMeasure.two_point(rate=3.0)
    a = simulate_driver(g, K, 2, Streams(11))
    b = simulate_driver(g, K, 2, Streams(11))
    np.testing.assert_array_equal(a.dB, b.dB)
    np.testing.assert_array_equal(a.jump_times, b.jump_times)
    np.testing.assert_array_equal(a.jump_marks, b.jump_marks)
    assert np.all(np.diff(a.jump_times) > 0)
    assert np.all((a.jump_times > 0) & (a.jump_times <= 1.0))


def test_poisson_jump_count():
    ens = run_ensemble(_pure_jump(rate=2.0), TimeGrid(1.0, 0.1), 100_000, 5, checkpoints=())
    est = MCEstimate.from_values(ens.arrays["jump_count"])
    assert est.contains(2.0)


def test_zero_coefficients_keep_state():
    spec = ModelSpec(x0=[1.5, -2.0], coefficients=CoefficientSet(), d_brownian=2)
    g = TimeGrid(1.0, 0.01)
    b = integrate_path(spec, simulate_driver(g, None, 2, Streams(0)), g)
    assert np.all(b.X == np.array([1.5, -2.0]))


def test_brownian_moments():
    ens = run_ensemble(brownian_model(x0=0.5), TimeGrid(1.0, 0.01), 100_000, 1, checkpoints=())
    x = ens.arrays["x"][:, 0]
    assert MCEstimate.from_values(x).contains(0.5)
    assert np.var(x, ddof=1) == pytest.approx(1.0, rel=0.02)


@pytest.mark.slow
def test_cev_mean_is_exponential():
    spec = catalog_get("cev").spec
    ens = run_ensemble(spec, TimeGrid(1.0, 1e-3), 100_000, 2, checkpoints=())
    assert MCEstimate.from_values(ens.arrays["x"][:, 0]).contains(np.e)


def test_compensated_jumps_are_centered():
    # h = z with marks {1, -1/2}: the compensator removes the mean drift 0.25 * rate
    ens = run_ensemble(_pure_jump(rate=2.0), TimeGrid(1.0, 0.01), 100_000, 8, checkpoints=())
    assert MCEstimate.from_values(ens.arrays["x"][:, 0]).contains(0.0)


def test_weak_order_brownian():
    spec = brownian_model()
    a = run_ensemble(spec, TimeGrid(1.0, 0.02), 100_000, 4, checkpoints=())
    b = run_ensemble(spec, TimeGrid(1.0, 0.01), 100_000, 4, checkpoints=())
    ea, eb = (MCEstimate.from_values(e.arrays["x"][:, 0]) for e in (a, b))
    assert abs(ea.mean - eb.mean) < 3 * ea.se


def test_stopping_rule_validation():
    with pytest.raises(ValueError):
        StoppingRule(1.0)
    with pytest.raises(ValueError):
        StoppingRule(10.0, "other")
    with pytest.raises(ValueError):
        StoppingRule(2.0).check([3.0])


def _recorded(X):
    X = np.asarray(X, dtype=float).reshape(-1, 1)
    g = TimeGrid(0.1 * (X.shape[0] - 1), 0.1)
    spec = ModelSpec(x0=X[0], coefficients=CoefficientSet())
    b = integrate_path(spec, DriverPath(np.zeros((g.n, 1))), g)
    b.X = X
    b.log_z = np.zeros(X.shape[0])
    return b


def test_apply_stopping_below_level():
    assert apply_stopping(_recorded(np.ones(6)), StoppingRule(4.0)).stop_index is None


def test_apply_stopping_freezes():
    b = apply_stopping(_recorded([0.0, 1.0, 2.5, 1.0, 0.0, 3.0]), StoppingRule(4.0))
    assert b.stop_index == 2
    assert np.all(b.X[2:] == 2.5)


def test_pathdep_fires_no_later():
    rng = np.random.default_rng(0)
    for _ in range(20):
        path = _recorded(np.cumsum(rng.normal(size=40)))
        m = apply_stopping(path, StoppingRule(9.0, "markov")).stop_index
        p = apply_stopping(path, StoppingRule(9.0, "pathdep")).stop_index
        if m is not None:
            assert p is not None and p <= m


def test_workers_do_not_change_results():
    spec = catalog_get("pure_jump_iid").spec
    g = TimeGrid(1.0, 0.01)
    a = run_ensemble(spec, g, 3000, 21, levels=(1e2, 1e3), workers=1)
    b = run_ensemble(spec, g, 3000, 21, levels=(1e2, 1e3), workers=3)
    for key in ("log_z", "x", "stop_step", "cp_log_z"):
        np.testing.assert_array_equal(a.arrays[key], b.arrays[key])


def test_single_path_matches_integrate_path():
    spec = catalog_get("two_driver").spec
    g = TimeGrid(1.0, 0.01)
    (bundle,) = list(simulate_ensemble(spec, g, n_paths=1, master_seed=9))
    drv = simulate_driver(g, spec.levy, spec.d_brownian, Streams(9))
    np.testing.assert_array_equal(bundle.driver.dB, drv.dB)
    ref = integrate_path(spec, drv, g)
    np.testing.assert_allclose(bundle.X, ref.X, rtol=0, atol=1e-13)
    np.testing.assert_allclose(bundle.log_z, ref.log_z, rtol=0, atol=1e-12)


def test_single_jump_path_matches_integrate_path():
    spec = catalog_get("pure_jump_iid").spec
    g = TimeGrid(1.0, 0.01)
    (bundle,) = list(simulate_ensemble(spec, g, n_paths=1, master_seed=4))
    ref = integrate_path(spec, bundle.driver, g)
    np.testing.assert_allclose(bundle.X, ref.X, atol=1e-13)
    np.testing.assert_allclose(bundle.log_z, ref.log_z, atol=1e-12)


def test_bridge_mean_at_midpoint():
    spec = catalog_get("brownian_bridge").spec
    bundles = simulate_ensemble(spec, TimeGrid(1.0, 1e-3), n_paths=10_000, master_seed=3)
    x = np.array([b.X[500, 0] for b in bundles])
    est = MCEstimate.from_values(x)
    assert est.contains(0.0)
    # bridge variance t (1 - t) = 1/4 at the midpoint
    assert np.var(x, ddof=1) == pytest.approx(0.25, rel=0.05)


def test_post_stop_freeze_in_ensemble():
    spec = catalog_get("bm_quadratic").spec
    rule = StoppingRule(5.0)
    for b in simulate_ensemble(spec, TimeGrid(1.0, 0.01), rule, n_paths=200, master_seed=1):
        if b.stop_index is not None:
            k = b.stop_index
            assert np.all(b.X[k:] == b.X[k])
            assert np.all(b.log_z[k:] == b.log_z[k])


def test_unlocalised_overflow_raises():
    spec = ModelSpec(x0=[1.0], coefficients=CoefficientSet(a=lambda s, v: v.x**3 * 1e3))
    with pytest.raises(NonFiniteState):
        run_ensemble(spec, TimeGrid(1.0, 0.01), 10, 0, halt=False)


def test_csv_dump(tmp_path):
    spec = catalog_get("cev").spec
    g = TimeGrid(1.0, 0.1)
    bundles = list(simulate_ensemble(spec, g, n_paths=3, master_seed=0))
    rows = write_paths_csv(tmp_path / "p.csv", bundles)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "path,t,X,z,stopped"
    assert rows == 3 * 11 == len(lines) - 1
