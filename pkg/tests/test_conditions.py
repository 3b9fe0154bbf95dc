import numpy as np
import pytest

from stochexp.catalog import brownian_model, catalog_get, gaussian_model
from stochexp.conditions import (
    Domain,
    benes_verdict,
    condition_one,
    explosion_probe,
    growth_ratio,
    kazamaki_estimate,
    novikov_estimate,
    operator_frakL_markov,
    operator_frakL_pathdep,
    operator_L_markov,
    operator_L_pathdep,
)
from stochexp.errors import CallbackFailure
from stochexp.model import CoefficientSet, ModelSpec, PathDependent, synthetic_view
from stochexp.simulate import TimeGrid, run_ensemble

XS = np.linspace(-4.0, 4.0, 17)


# growth_ratio -------------------------------------------------------------


def test_quadratic_growth_constant():
    res = growth_ratio(lambda x: 4 * x[:, 0] ** 2)
    assert res.verdict == "pass" and res.trend == "bounded"
    assert res.estimated_r == pytest.approx(4.0, rel=1e-3)


def test_inverse_square_near_zero_fails():
    dom = Domain(box=(1e-3, 5.0), positive=True, singular_points=(0.0,))
    res = growth_ratio(lambda x: 1.0 / x[:, 0] ** 2, dom)
    assert res.verdict == "fail"
    assert res.estimated_r == np.inf
    assert 0 < res.witness["x"][0] < 1e-3


def test_zero_function():
    res = growth_ratio(lambda x: 0.0 * x[:, 0])
    assert res.estimated_r == 0.0 and res.verdict == "pass"


def test_superquadratic_fails_on_escape_shells():
    res = growth_ratio(lambda x: x[:, 0] ** 4)
    assert res.verdict == "fail"
    assert res.sequences["trends"]["escape"] == "unbounded"


def test_time_dependent_callback():
    res = growth_ratio(lambda s, x: (1.0 + s) * x[:, 0] ** 2, horizon=1.0)
    assert res.verdict == "pass"
    assert 1.0 < res.estimated_r < 2.0


def test_raising_callback():
    def f(x):
        raise ZeroDivisionError

    with pytest.raises(CallbackFailure):
        growth_ratio(f)


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain(escape_radii=(10.0, 20.0))
    with pytest.raises(ValueError):
        Domain(inner_radii=(1e-3, 1e-1))


@pytest.mark.parametrize("f", [
    lambda x: np.sin(3 * x[:, 0]) * x[:, 0] ** 2,
    lambda x: np.abs(x[:, 0]) ** 1.5,
    lambda x: np.exp(-x[:, 0] ** 2),
])
def test_box_enlargement_never_decreases_r(f):
    rs = [growth_ratio(f, Domain(box=(-b, b))).estimated_r for b in (0.5, 2.0, 8.0)]
    assert rs[0] <= rs[1] <= rs[2]


# operators ----------------------------------------------------------------


def test_cev_operators():
    spec = catalog_get("cev").spec
    xp = np.maximum(XS, 0.0)
    np.testing.assert_allclose(operator_L_markov(spec, 0.3, XS), 2 * XS**2 + xp, atol=1e-12)
    np.testing.assert_allclose(operator_frakL_markov(spec, 0.3, XS),
                               2 * XS * (XS + xp) + xp, atol=1e-12)


def test_cubic_operator():
    spec = catalog_get("cubic_drift").spec
    np.testing.assert_allclose(operator_L_markov(spec, 0.0, XS), -2 * XS**4 + XS**2, atol=1e-10)


def test_zero_model_operator():
    spec = ModelSpec(x0=[0.0], coefficients=CoefficientSet())
    assert not operator_L_markov(spec, 0.0, XS).any()


def test_bessel_drift_frakL():
    # a = 1/x, b = 1, sigma = x: 2x (1/x + x) + 1
    spec = catalog_get("mijatovic_urusov").spec
    x = np.linspace(0.1, 5.0, 11)
    np.testing.assert_allclose(operator_frakL_markov(spec, 0.0, x), 3 + 2 * x**2, rtol=1e-12)


def test_frakL_equals_L_without_tilt():
    spec = catalog_get("explosive_markov").spec
    coeffs = spec.coefficients
    untilted = ModelSpec(x0=spec.x0, levy=spec.levy, coefficients=CoefficientSet(
        a=coeffs.a, b=coeffs.b, h=coeffs.h))
    np.testing.assert_allclose(operator_frakL_markov(untilted, 0.2, XS),
                               operator_L_markov(untilted, 0.2, XS))
    np.testing.assert_allclose(operator_frakL_pathdep(untilted, 0.2, XS),
                               operator_L_pathdep(untilted, 0.2, XS))


def test_pathdep_constant_coefficients():
    spec = ModelSpec(x0=[0.0], dependence=PathDependent(),
                     coefficients=CoefficientSet(a=lambda s, v: 1.5, b=lambda s, v: 0.5))
    np.testing.assert_allclose(operator_frakL_pathdep(spec, 0.0, XS), 1.5**2 + 0.5**2)


def test_condition_one_jump_part():
    spec = catalog_get("pure_jump_iid", phi_const=0.5).spec
    # |sigma|^2 = 0 and int phi^2 K = rate * 0.25
    np.testing.assert_allclose(condition_one(spec, 0.0, XS), 0.25)


def test_pathdep_operator_reads_supremum():
    spec = catalog_get("weak_existence_unit_diffusion").spec
    hist = np.array([[[0.0], [3.0]]])
    view = synthetic_view(0.5, [[0.0]], hist, [0.0, 0.25])
    # sigma = 0.5 sqrt(1 + 9) cos(0), b = 1
    expected_frak = 1.0 + 1.0 * 0.25 * 10.0
    assert operator_frakL_pathdep(spec, 0.5, view)[0] == pytest.approx(expected_frak)
    assert operator_L_pathdep(spec, 0.5, view)[0] == pytest.approx(1.0)


# verdicts -----------------------------------------------------------------


@pytest.mark.parametrize("name", ["cev", "brownian_bridge", "delay_sde",
                                  "weak_existence_unit_diffusion"])
def test_passing_models(name):
    rep = benes_verdict(catalog_get(name).spec)
    assert rep.verdict == "pass"
    assert all(np.isfinite(e.estimated_r) for e in rep.entries if e.verdict == "pass")


def test_bessel_fails_condition_one():
    rep = benes_verdict(catalog_get("bessel_counterexample").spec)
    assert rep.verdict == "fail"
    assert rep["growth_sigma_phi"].verdict == "fail"
    assert rep["growth_sigma_phi"].witness["x"][0] < 1e-2


def test_weak_existence_needs_linear_growth():
    spec = ModelSpec(x0=[0.0], dependence=PathDependent(), coefficients=CoefficientSet(
        b=lambda s, v: 1.0, sigma=lambda s, v: v.running_sup_sq))
    rep = benes_verdict(spec)
    assert rep.verdict == "fail"
    assert "growth_sigma_phi" in rep.failing


def test_report_serialises():
    d = benes_verdict(catalog_get("explosive_markov").spec).to_dict()
    assert d["verdict"] == "fail"
    assert {e["name"] for e in d["entries"]} >= {"growth_sigma_phi", "L_bound", "frakL_bound"}


# explosion and classical criteria ------------------------------------------


def test_explosion_probe_brownian():
    rep = explosion_probe(brownian_model(), TimeGrid(1.0, 1e-2), 5000, levels=(4.0, 9.0, 16.0, 25.0),
                          seed=2)
    p = [e.mean for e in rep.p_stop]
    assert p[0] > p[-1] and not rep.explosion_suspect


def test_explosion_probe_explosive():
    rep = explosion_probe(catalog_get("explosive_markov").spec, TimeGrid(1.0, 1e-3), 5000, seed=2)
    assert rep.explosion_suspect
    assert rep.p_stop[-1].mean > 0.3


def test_l_bounded_second_moment():
    rep = explosion_probe(catalog_get("cubic_drift").spec, TimeGrid(1.0, 1e-2), 5000, seed=2)
    assert max(rep.sup_mean_x2) < 10.0
    assert np.ptp(rep.sup_mean_x2) < 1e-9


def test_novikov_constant_loading():
    theta = 0.8
    ens = run_ensemble(gaussian_model(theta), TimeGrid(1.0, 1e-2), 1000, 0)
    nov = novikov_estimate(ens)
    assert nov.estimate.mean == pytest.approx(np.exp(theta**2 / 2), rel=1e-12)
    assert not nov.diverging


def test_zero_martingale_statistics():
    ens = run_ensemble(brownian_model(), TimeGrid(1.0, 1e-2), 1000, 0)
    assert novikov_estimate(ens).estimate.mean == 1.0
    kaz = kazamaki_estimate(ens)
    assert kaz.estimate.mean == 1.0 and not kaz.diverging


def test_kazamaki_diverges_for_quadratic_loading():
    # E exp(M_t / 2) = E exp((B_t^2 - t) / 2) is infinite for t >= 1; past t = 1 the
    # upper-tail shells grow, so 1e5 paths suffice on [0, 1.5]
    spec = catalog_get("bm_quadratic", horizon=1.5).spec
    ens = run_ensemble(spec, TimeGrid(1.5, 1e-2), 100_000, 3)
    assert kazamaki_estimate(ens).diverging
    assert novikov_estimate(ens).diverging


def test_kazamaki_stable_for_gaussian():
    ens = run_ensemble(gaussian_model(0.5), TimeGrid(1.0, 1e-2), 50_000, 3)
    kaz = kazamaki_estimate(ens)
    assert not kaz.diverging
    # E exp(M_1 / 2) = exp(theta^2 / 8) at t = 1
    assert kaz.estimate.contains(np.exp(0.25 / 8))
