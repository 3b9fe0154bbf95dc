"""Named reference models with their expected verdicts.

Every entry builds a :class:`~stochexp.model.ModelSpec` from keyword
parameters and records what the linear-growth check should conclude,
which conditions should fail, and what ``E z_T`` should look like:

* ``one``: ``E z_T = 1``;
* ``less-than-one``: a strict local martingale with a known value;
* ``stopped-one``: only the localised identity ``E z_{T ^ tau} = 1`` is
  guaranteed (absorption or explosion stops the model).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import stats

from .conditions import Domain
from .errors import UnknownModel
from .model import (
    CoefficientSet,
    Delay,
    LevyMeasure,
    ModelSpec,
    PathDependent,
    Volterra,
)

__all__ = [
    "BESSEL_EZ",
    "CatalogEntry",
    "ExpectedEz",
    "brownian_model",
    "catalog_get",
    "catalog_list",
    "catalog_names",
    "expected_value",
    "gaussian_model",
]

BESSEL_EZ = float(2.0 * stats.norm.cdf(1.0) - 1.0)
"""``E[1 / X_1]`` for a three-dimensional Bessel process started at one."""

_EXP_CLIP = 200.0


@dataclass(frozen=True)
class ExpectedEz:
    kind: str
    value: float | None = None

    def __str__(self) -> str:
        if self.value is None:
            return self.kind
        return f"{self.kind}({self.value:.4f} at T=1)"


@dataclass(frozen=True)
class CatalogEntry:
    """A reference model.

    Attributes
    ----------
    name : str
    factory : callable
        ``factory(**params) -> ModelSpec``.
    params : dict
        Parameters used to build :attr:`spec`.
    spec : ModelSpec
    expected_verdict : str
        ``pass`` or ``fail`` for :func:`~stochexp.conditions.benes_verdict`.
    failing_conditions : tuple of str
        Condition entries expected to fail.
    expected_ez : ExpectedEz
    provenance : str
        Where the model comes from, in brief.
    domain : Domain
        Sampling domain for the growth checks.
    validation_box : (float, float)
        State box for :func:`~stochexp.model.validate_model`.
    variant : str
        Localisation statistic, ``markov`` or ``pathdep``.
    explosive : bool
        Paths may leave every bounded set before ``T``.
    """

    name: str
    factory: Callable[..., ModelSpec]
    params: dict
    spec: ModelSpec
    expected_verdict: str
    failing_conditions: tuple
    expected_ez: ExpectedEz
    provenance: str
    domain: Domain
    validation_box: tuple = (-5.0, 5.0)
    variant: str = "markov"
    explosive: bool = False
    notes: str = ""

    @property
    def horizon(self) -> float:
        return self.spec.horizon

    @property
    def dependence(self) -> str:
        return self.spec.kind


def _default_jumps(rate=1.0, p_up=0.5):
    return LevyMeasure.two_point(rate=rate, p_up=p_up)


# ---------------------------------------------------------------------------
# auxiliary builders


def gaussian_model(theta: float = 1.0, x0: float = 0.0, horizon: float = 1.0) -> ModelSpec:
    """Brownian state with constant exponent loading ``sigma = theta``."""
    th = float(theta)
    return ModelSpec(
        x0=[x0], name="gaussian_shift", horizon=horizon,
        coefficients=CoefficientSet(a=lambda s, v: 0.0, b=lambda s, v: 1.0,
                                    sigma=lambda s, v: th))


def brownian_model(x0: float = 0.0, horizon: float = 1.0) -> ModelSpec:
    """Brownian motion with ``M = 0``."""
    return ModelSpec(x0=[x0], name="brownian", horizon=horizon,
                     coefficients=CoefficientSet(b=lambda s, v: 1.0))


# ---------------------------------------------------------------------------
# factories


def _bm_quadratic(horizon=1.0, scale=2.0):
    c = float(scale)
    return ModelSpec(
        x0=[0.0], name="bm_quadratic", horizon=horizon,
        coefficients=CoefficientSet(b=lambda s, v: 1.0, sigma=lambda s, v: c * v.x))


def _pure_jump_iid(horizon=1.0, rate=1.0, p_up=0.5, phi_const=None):
    levy = _default_jumps(rate, p_up)
    if phi_const is None:
        def phi(s, v, z):
            return np.abs(v.x[:, None] * z)
    else:
        c = float(phi_const)

        def phi(s, v, z):
            return np.full(np.shape(z), c)
    return ModelSpec(
        x0=[0.0], name="pure_jump_iid", horizon=horizon, levy=levy,
        coefficients=CoefficientSet(h=lambda s, v, z: z, phi=phi))


def _cev(horizon=1.0, x0=1.0):
    def root(s, v):
        return np.sqrt(np.maximum(v.x, 0.0))
    return ModelSpec(
        x0=[x0], name="cev", horizon=horizon, absorbing_boundary=0.0,
        coefficients=CoefficientSet(a=lambda s, v: v.x, b=root, sigma=root))


def _cubic_drift(horizon=1.0, x0=1.0):
    return ModelSpec(
        x0=[x0], name="cubic_drift", horizon=horizon,
        coefficients=CoefficientSet(a=lambda s, v: -v.x**3, b=lambda s, v: v.x,
                                    sigma=lambda s, v: v.x))


def _brownian_bridge(horizon=1.0):
    def drift(s, v):
        return -v.x / (1.0 - s)
    return ModelSpec(
        x0=[0.0], name="brownian_bridge", horizon=horizon,
        coefficients=CoefficientSet(a=drift, b=lambda s, v: 1.0, sigma=lambda s, v: v.x))


def _mijatovic_urusov(horizon=1.0, alpha=-1.0, x0=1.0):
    al = float(alpha)
    if not -1.0 <= al <= 0.0:
        raise ValueError("alpha must lie in [-1, 0]")

    def drift(s, v):
        return np.abs(v.x) ** al

    transition = None
    if al == -1.0:
        # Drift-implicit step X' = X + dB + dt / X', which keeps X positive.
        def transition(s, dt, v, dB):
            y = v.x + dB[:, 0]
            return 0.5 * (y + np.sqrt(y * y + 4.0 * dt))
    return ModelSpec(
        x0=[x0], name="mijatovic_urusov", horizon=horizon, transition=transition,
        coefficients=CoefficientSet(a=drift, b=lambda s, v: 1.0, sigma=lambda s, v: v.x))


def _explosive_markov(horizon=1.0, alpha=3.5, x0=1.0, rate=1.0, p_up=0.5, sigma_scale=0.5):
    al, sc = float(alpha), float(sigma_scale)
    return ModelSpec(
        x0=[x0], name="explosive_markov", horizon=horizon, levy=_default_jumps(rate, p_up),
        coefficients=CoefficientSet(
            a=lambda s, v: np.abs(v.x) ** al, b=lambda s, v: 1.0,
            sigma=lambda s, v: sc * np.tanh(v.x),
            h=lambda s, v, z: z, phi=lambda s, v, z: np.abs(z)))


def _bessel_counterexample(horizon=1.0, x0=1.0):
    # log X moves by dB / X + dt / (2 X^2), so z = 1 / X holds on the grid.
    def transition(s, dt, v, dB):
        x = v.x
        e = np.minimum(dB[:, 0] / x + 0.5 * dt / (x * x), _EXP_CLIP)
        return x * np.exp(e)

    return ModelSpec(
        x0=[x0], name="bessel_counterexample", horizon=horizon, transition=transition,
        coefficients=CoefficientSet(a=lambda s, v: 1.0 / v.x, b=lambda s, v: 1.0,
                                    sigma=lambda s, v: -1.0 / v.x))


def _two_driver(horizon=1.0, x0=1.0, mean_reversion=1.0, sigma_scale=0.5, theta=1.0):
    k, sc, th = float(mean_reversion), float(sigma_scale), float(theta)

    def loading(s, v):
        return np.stack([sc * v.x, np.full(v.batch, th)], axis=1)

    return ModelSpec(
        x0=[x0], name="two_driver", horizon=horizon, d_brownian=2,
        coefficients=CoefficientSet(
            a=lambda s, v: -k * v.x, b=lambda s, v: np.array([1.0, 0.0]), sigma=loading))


def _hitsuda_volterra(horizon=1.0, decay=1.0):
    lam = float(decay)

    def kernel(s, u):
        return np.exp(-lam * (s - np.asarray(u, dtype=float)))

    def sigma(s, v):
        x = v.x
        return np.sqrt(1.0 + x * x) * np.tanh(x)

    return ModelSpec(
        x0=[0.0], name="hitsuda_volterra", horizon=horizon,
        dependence=Volterra(kernel, decay=lam),
        coefficients=CoefficientSet(a=lambda s, v: v.volterra, b=lambda s, v: 1.0,
                                    sigma=sigma))


def _delay_sde(horizon=1.0, lag=0.1, x0=1.0):
    lg = float(lag)

    def y(v):
        return v.past(lg)[:, 0]

    return ModelSpec(
        x0=[x0], name="delay_sde", horizon=horizon, dependence=Delay(lg),
        coefficients=CoefficientSet(
            a=lambda s, v: np.cos(y(v)),
            b=lambda s, v: 0.5 + 1.0 / (1.0 + y(v) ** 2),
            sigma=lambda s, v: np.tanh(y(v))))


def _weak_existence(horizon=1.0, scale=0.5):
    c = float(scale)

    def target_drift(s, v):
        return c * np.sqrt(1.0 + v.running_sup_sq) * np.cos(v.x)

    return ModelSpec(
        x0=[0.0], name="weak_existence_unit_diffusion", horizon=horizon,
        dependence=PathDependent(),
        coefficients=CoefficientSet(b=lambda s, v: 1.0, sigma=target_drift))


def _singular_diffusion(horizon=1.0, x0=1.0):
    def diff(s, v):
        return np.minimum(np.abs(v.x), 1.0)

    def ratio(s, v):
        # sigma = (target drift) / b on {b > 0}; the target drift is b times
        # a bounded functional of the running supremum.
        g = 0.5 + 0.5 * v.running_sup_sq / (1.0 + v.running_sup_sq)
        return np.where(diff(s, v) > 0, g, 0.0)

    return ModelSpec(
        x0=[x0], name="singular_diffusion", horizon=horizon, dependence=PathDependent(),
        coefficients=CoefficientSet(b=diff, sigma=ratio))


# ---------------------------------------------------------------------------
# registry

_POS = Domain(box=(1e-3, 5.0), positive=True, singular_points=(0.0,))

_REGISTRY = {
    "bm_quadratic": dict(
        factory=_bm_quadratic, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Brownian state with exponent loading 2x, so M_t = B_t^2 - t; "
                   "Kazamaki and Novikov fail at T = 1 while the linear-growth bound holds.",
        domain=Domain(),
        notes="kazamaki diverges at T = 1"),
    "pure_jump_iid": dict(
        factory=_pure_jump_iid, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Compensated compound-Poisson state with h = z and exponent jumps |x z|.",
        domain=Domain()),
    "cev": dict(
        factory=_cev, verdict="pass", failing=(), ez=ExpectedEz("stopped-one"),
        provenance="CEV diffusion with a = x, b = sigma = sqrt(x+), absorbed at zero; "
                   "the exponential stopped at absorption is a martingale.",
        domain=Domain()),
    "cubic_drift": dict(
        factory=_cubic_drift, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Cubic stabilising drift a = -x^3 with b = sigma = x.",
        domain=Domain()),
    "brownian_bridge": dict(
        factory=_brownian_bridge, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Brownian bridge on [0, 1] with exponent loading x; E z_1 = 1.",
        domain=Domain(singular_times=(1.0,))),
    "mijatovic_urusov": dict(
        factory=_mijatovic_urusov, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Drift |x|^alpha with unit diffusion and loading x; alpha = -1 "
                   "makes the state a three-dimensional Bessel process.",
        domain=_POS, validation_box=(1e-3, 5.0)),
    "explosive_markov": dict(
        factory=_explosive_markov, verdict="fail", failing=("L_bound", "frakL_bound"),
        ez=ExpectedEz("stopped-one"),
        provenance="Superlinear drift |x|^3.5 with jumps h = z, phi = |z|; the state may "
                   "explode, so only the localised identity is expected.",
        domain=Domain(), explosive=True),
    "bessel_counterexample": dict(
        factory=_bessel_counterexample, verdict="fail", failing=("growth_sigma_phi",),
        ez=ExpectedEz("less-than-one", BESSEL_EZ),
        provenance="Bessel(3) state with loading -1/x, so z = 1/X is a strict local "
                   "martingale with E z_1 = 2 Phi(1) - 1.",
        domain=_POS, validation_box=(1e-3, 5.0)),
    "two_driver": dict(
        factory=_two_driver, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Scalar state driven by B, exponent driven by (B, W): the vector "
                   "form of the growth conditions.",
        domain=Domain()),
    "hitsuda_volterra": dict(
        factory=_hitsuda_volterra, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Volterra drift with kernel exp(-(s-u)) and loading "
                   "sqrt(1+x^2) tanh(x).",
        domain=Domain()),
    "delay_sde": dict(
        factory=_delay_sde, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Delay equation with lag 0.1 and bounded coefficients of X_{s-lag}.",
        domain=Domain(), variant="pathdep"),
    "weak_existence_unit_diffusion": dict(
        factory=_weak_existence, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Brownian state with loading equal to a target drift of linear growth "
                   "in sup |x|; the tilt yields a weak solution with that drift.",
        domain=Domain(), variant="pathdep"),
    "singular_diffusion": dict(
        factory=_singular_diffusion, verdict="pass", failing=(), ez=ExpectedEz("one"),
        provenance="Driftless state with degenerate diffusion min(|x|, 1) and loading "
                   "(target drift)/b on {b > 0}.",
        domain=Domain(), variant="pathdep"),
}


def catalog_get(name: str, **params) -> CatalogEntry:
    """Build a catalog entry, overriding factory defaults with ``params``.

    Raises
    ------
    UnknownModel
        If ``name`` is not registered.
    """
    try:
        info = _REGISTRY[name]
    except KeyError:
        raise UnknownModel(f"unknown model {name!r}; known: {', '.join(_REGISTRY)}") from None
    factory = info["factory"]
    spec = factory(**params)
    if spec.domain is None:
        spec = replace(spec, domain=info["domain"])
    return CatalogEntry(
        name=name, factory=factory, params=dict(params), spec=spec,
        expected_verdict=info["verdict"], failing_conditions=tuple(info["failing"]),
        expected_ez=info["ez"], provenance=info["provenance"], domain=info["domain"],
        validation_box=info.get("validation_box", (-5.0, 5.0)),
        variant=info.get("variant", "markov"), explosive=info.get("explosive", False),
        notes=info.get("notes", ""))


def catalog_list() -> list[CatalogEntry]:
    """All entries with default parameters, in registry order."""
    return [catalog_get(name) for name in _REGISTRY]


def catalog_names() -> list[str]:
    return list(_REGISTRY)


def expected_value(entry: CatalogEntry) -> float:
    """Numeric target for ``E z_T``: one unless a defect value is known."""
    return entry.expected_ez.value if entry.expected_ez.value is not None else 1.0

