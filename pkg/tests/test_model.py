import numpy as np
import pytest

from stochexp.catalog import catalog_list
from stochexp.errors import CallbackFailure, OutOfRange
from stochexp.model import (
    CoefficientSet,
    Delay,
    LevyMeasure,
    ModelSpec,
    PathDependent,
    Volterra,
    history_view,
    kernel_l2_norm,
    synthetic_view,
    validate_model,
)
from stochexp.simulate import DriverPath, PathBundle, TimeGrid


def _jump_model(phi, marks=(1.0, 2.0)):
    levy = LevyMeasure.discrete(1.0, list(marks), [1.0 / len(marks)] * len(marks))
    return ModelSpec(x0=[0.5], levy=levy,
                     coefficients=CoefficientSet(h=lambda s, v, z: z, phi=phi))


def test_phi_zero_passes():
    rep = validate_model(_jump_model(lambda s, v, z: 0.0 * z), sample_budget=500)
    assert rep.passed and not rep.violations


def test_phi_abs_xz_with_positive_marks_passes():
    rep = validate_model(_jump_model(lambda s, v, z: np.abs(v.x[:, None] * z)), sample_budget=500)
    assert rep.passed


def test_phi_minus_one_fails_at_first_sample():
    rep = validate_model(_jump_model(lambda s, v, z: -1.0 + 0.0 * z), sample_budget=50)
    assert not rep.passed
    # every sample violates the floor, so the first sample is the first witness
    assert len(rep.violations) == 50
    assert rep.violations[0].kind == "phi-floor"
    assert {"s", "x", "z"} <= set(rep.violations[0].witness)


def test_raising_coefficient_reports_witness():
    def bad(s, v):
        raise RuntimeError("boom")

    spec = ModelSpec(x0=[0.0], coefficients=CoefficientSet(a=bad))
    with pytest.raises(CallbackFailure) as err:
        validate_model(spec, sample_budget=10)
    assert err.value.witness is not None


def test_validate_rejects_empty_budget():
    spec = ModelSpec(x0=[0.0], coefficients=CoefficientSet())
    with pytest.raises(ValueError):
        validate_model(spec, sample_budget=0)


@pytest.mark.parametrize("entry", catalog_list(), ids=lambda e: e.name)
def test_catalog_models_validate(entry):
    rep = validate_model(entry.spec, sample_budget=10_000, box=entry.validation_box)
    assert rep.passed, rep.violations[:3]


def test_levy_two_point_moments():
    K = LevyMeasure.two_point(rate=2.0, p_up=0.5)
    assert K.total_mass == 2.0
    assert K.second_moment == pytest.approx(2.0 * (0.5 * 1 + 0.5 * 0.25))
    assert K.third_abs_moment == pytest.approx(2.0 * (0.5 * 1 + 0.5 * 0.125))
    marks, w = K.nodes()
    assert w.sum() == pytest.approx(2.0)
    assert set(marks) == {1.0, -0.5}


def test_levy_rejects_infinite_mass():
    with pytest.raises(ValueError):
        LevyMeasure(np.inf, lambda rng, n: np.zeros(n), 1.0)


def test_delay_requires_positive_lag():
    with pytest.raises(ValueError):
        Delay(0.0)


def test_kernel_l2_norm_exponential():
    # int_0^1 int_0^s e^{-2(s-u)} du ds = 1/2 - (1 - e^{-2})/4
    expected = np.sqrt(0.5 - (1 - np.exp(-2.0)) / 4)
    assert kernel_l2_norm(lambda s, u: np.exp(-(s - u)), 1.0) == pytest.approx(expected, rel=1e-8)


def _bundle(X, dt=0.25):
    X = np.asarray(X, dtype=float).reshape(-1, 1)
    grid = TimeGrid(dt * (X.shape[0] - 1), dt)
    return PathBundle(grid, X, DriverPath(np.zeros((grid.n, 1))))


def test_history_view_constant_path():
    view = history_view(_bundle(np.ones(5)), 0.6)
    assert view.running_sup_sq[0] == 1.0
    assert view.x[0] == 1.0


def test_history_view_is_strict_past():
    b = _bundle([0.0, 1.0, 3.0, 3.0, 3.0])
    # the jump to 3 lands at t = 0.5; at s = 0.5 the view still sees the pre-jump value
    view = history_view(b, 0.5)
    assert view.x[0] == 1.0
    assert len(view) == 2
    assert view.running_sup_sq[0] == 1.0


def test_history_view_length_at_grid_points():
    b = _bundle(np.arange(5.0))
    for i in range(5):
        assert len(history_view(b, 0.25 * i)) == i


def test_history_view_out_of_range():
    with pytest.raises(OutOfRange):
        history_view(_bundle(np.ones(5)), 2.0)


def test_synthetic_view_sup_covers_history():
    hist = np.array([[[1.0], [-3.0]]])
    view = synthetic_view(0.5, [[0.5]], hist, [0.0, 0.25])
    assert view.running_sup_sq[0] == 9.0
    assert view.past(0.3)[0, 0] == 1.0
    # before time zero the view falls back to the initial state
    assert view.past(0.7)[0, 0] == 0.5


def test_view_is_read_only():
    view = synthetic_view(0.0, [[1.0]])
    with pytest.raises(ValueError):
        view.state[0, 0] = 2.0


def test_model_spec_rejects_bad_input():
    with pytest.raises(ValueError):
        ModelSpec(x0=[np.nan], coefficients=CoefficientSet())
    with pytest.raises(ValueError):
        ModelSpec(x0=[0.0], coefficients=CoefficientSet(), horizon=0.0)


def test_dependence_kinds():
    base = dict(x0=[0.0], coefficients=CoefficientSet())
    assert ModelSpec(**base).kind == "markov"
    assert ModelSpec(**base, dependence=PathDependent()).needs_history
    assert ModelSpec(**base, dependence=Delay(0.1)).kind == "delay"
    assert ModelSpec(**base, dependence=Volterra(lambda s, u: 0 * u)).kind == "volterra"
