"""Model description: coefficients, jump measure, dependence class and validation.

A model is the pair of equations

    X_t = X_0 + int a ds + int b dB + int int h (mu - nu)(ds, dz)
    M_t = int sigma dB + int int phi (mu - nu)(ds, dz)

with a finite-activity compensator ``nu(ds, dz) = ds K(dz)``.  Every
coefficient is a callback evaluated on a batch of paths at once.  The
callback receives the time ``s`` and a :class:`PathHistoryView`; jump
coefficients also receive an array of marks ``z`` with shape
``(batch, k)``.

Shape conventions for callback outputs (``B`` is the batch size):

* ``a``: scalar, ``(B,)`` when ``d_state == 1``, or ``(B, d_state)``.
* ``b``: scalar, ``(B,)`` when both dimensions are one, ``(B, d_brownian)``
  for a scalar state driven by several Brownian motions, or
  ``(B, d_state, d_brownian)``.
* ``sigma``: scalar, ``(B,)`` when ``d_brownian == 1`` or ``(B, d_brownian)``.
* ``h``: ``(B, k)`` for a scalar state, otherwise ``(B, k, d_state)``.
* ``phi``: ``(B, k)``.

One-dimensional outputs of multi-dimensional quantities are read as the
per-component vector shared by all paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import CallbackFailure, OutOfRange

__all__ = [
    "CoefficientSet",
    "Delay",
    "LevyMeasure",
    "Markov",
    "ModelSpec",
    "PathDependent",
    "PathHistoryView",
    "ValidationReport",
    "Violation",
    "Volterra",
    "history_view",
    "kernel_l2_norm",
    "synthetic_view",
    "validate_model",
]


# ---------------------------------------------------------------------------
# dependence classes


@dataclass(frozen=True)
class Markov:
    """Coefficients read only the left-limit state ``X_{s-}``."""

    kind: str = field(default="markov", init=False)


@dataclass(frozen=True)
class PathDependent:
    """Coefficients may read the whole strict past ``x_[0,s)``."""

    kind: str = field(default="path-dependent", init=False)


@dataclass(frozen=True)
class Delay:
    """Coefficients read the state at ``s - lag``.

    Before time zero the path equals the initial state.
    """

    lag: float
    kind: str = field(default="delay", init=False)

    def __post_init__(self):
        if not np.isfinite(self.lag) or self.lag <= 0:
            raise ValueError("delay lag must be positive and finite")


@dataclass(frozen=True, eq=False)
class Volterra:
    """Drift driven by ``int_0^s l(s, u) dB_u`` on the first Brownian component.

    Parameters
    ----------
    kernel : callable
        ``kernel(s, u)`` vectorised over ``u``.
    decay : float, optional
        Declares ``kernel(s, u) == exp(-decay * (s - u))``; the running
        integral is then updated by an O(1) recursion instead of a sum
        over the stored increments.
    """

    kernel: Callable[[float, np.ndarray], np.ndarray]
    decay: float | None = None
    kind: str = field(default="volterra", init=False)


Dependence = Markov | PathDependent | Delay | Volterra


def kernel_l2_norm(kernel: Callable, horizon: float) -> float:
    """Square root of ``int_0^T int_0^s l(s, u)^2 du ds`` by adaptive quadrature."""
    val, _ = integrate.dblquad(
        lambda u, s: float(np.asarray(kernel(s, u), dtype=float)) ** 2,
        0.0,
        horizon,
        0.0,
        lambda s: s,
    )
    return float(np.sqrt(val))


# ---------------------------------------------------------------------------
# jump measure


@dataclass(frozen=True, eq=False)
class LevyMeasure:
    """Finite-activity jump measure ``K = total_mass * (mark law)``.

    Parameters
    ----------
    total_mass : float
        Jump rate ``lambda = K(R)``.
    mark_sampler : callable
        ``mark_sampler(rng, size)`` returning ``size`` i.i.d. marks.
    second_moment : float
        ``int z^2 K(dz)``.
    third_abs_moment : float, optional
        ``int |z|^3 K(dz)``.
    atoms : tuple of arrays, optional
        ``(marks, probabilities)`` when the mark law is discrete.  Mark
        integrals are then exact.
    """

    total_mass: float
    mark_sampler: Callable[[np.random.Generator, int], np.ndarray]
    second_moment: float
    third_abs_moment: float | None = None
    atoms: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if not (np.isfinite(self.total_mass) and self.total_mass >= 0):
            raise ValueError("total_mass must be finite and nonnegative")
        if not np.isfinite(self.second_moment):
            raise ValueError("second_moment must be finite")

    @classmethod
    def discrete(cls, rate: float, marks, probs) -> "LevyMeasure":
        """Jump measure with finitely many marks."""
        marks = np.asarray(marks, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if marks.shape != probs.shape or marks.ndim != 1:
            raise ValueError("marks and probs must be 1-D arrays of equal length")
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise ValueError("probs must be a probability vector")
        marks.setflags(write=False)
        probs.setflags(write=False)

        def sampler(rng, size, _m=marks, _p=probs):
            return _m[rng.choice(_m.size, size=size, p=_p)]

        return cls(
            total_mass=float(rate),
            mark_sampler=sampler,
            second_moment=float(rate * np.sum(probs * marks**2)),
            third_abs_moment=float(rate * np.sum(probs * np.abs(marks) ** 3)),
            atoms=(marks, probs),
        )

    @classmethod
    def two_point(cls, rate: float = 1.0, p_up: float = 0.5, up: float = 1.0,
                  down: float = -0.5) -> "LevyMeasure":
        """Marks ``up`` with probability ``p_up`` and ``down`` otherwise."""
        return cls.discrete(rate, [up, down], [p_up, 1.0 - p_up])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.asarray(self.mark_sampler(rng, size), dtype=float).reshape(size)

    def nodes(self, rng: np.random.Generator | None = None, q: int = 64):
        """Quadrature nodes ``(marks, weights)`` with ``sum(weights) == total_mass``.

        Discrete measures return their atoms.  Otherwise ``q`` marks are
        drawn from ``rng`` with equal weights.
        """
        if self.atoms is not None:
            marks, probs = self.atoms
            return marks.copy(), self.total_mass * probs
        if rng is None:
            raise ValueError("a quadrature generator is required for sampled marks")
        marks = self.sample(rng, q)
        return marks, np.full(q, self.total_mass / q)


# ---------------------------------------------------------------------------
# history views


class PathHistoryView:
    """Read-only window on a batch of paths up to (but excluding) time ``t``.

    Attributes
    ----------
    t : float
        Evaluation time.
    state : ndarray, shape (batch, d)
        Left-limit state ``X_{t-}``.
    running_sup_sq : ndarray, shape (batch,)
        ``sup ||X_u||^2`` over the visible history.
    volterra : ndarray or None
        Running Volterra integral for kernel models.
    """

    __slots__ = ("t", "state", "running_sup_sq", "volterra", "_times", "_states",
                 "_count", "_x_init")

    def __init__(self, t, state, running_sup_sq, times=None, states=None, count=None,
                 volterra=None, x_init=None):
        self.t = float(t)
        self.state = _readonly(state)
        self.running_sup_sq = _readonly(running_sup_sq)
        self.volterra = None if volterra is None else _readonly(volterra)
        self._times = times
        self._states = states
        self._count = count if count is not None else (0 if times is None else len(times))
        self._x_init = self.state[0] if x_init is None else np.asarray(x_init, dtype=float)

    @property
    def x(self) -> np.ndarray:
        """First state component, shape ``(batch,)``."""
        return self.state[:, 0]

    @property
    def batch(self) -> int:
        return self.state.shape[0]

    @property
    def dim(self) -> int:
        return self.state.shape[1]

    def __len__(self) -> int:
        return self._count

    def history(self):
        """Visible ``(times, states)``; states have shape ``(batch, k, d)``."""
        if self._times is None:
            raise ValueError("this view carries no stored history")
        k = self._count
        return _readonly(self._times[:k]), _readonly(self._states[:, :k])

    def past(self, lag: float) -> np.ndarray:
        """State at time ``t - lag`` as seen from the stored history.

        Times before zero map to the initial state.  The lookup uses the
        last stored point at or before ``t - lag``.
        """
        u = self.t - lag
        if u < 0 or self._count == 0:
            return np.broadcast_to(self._x_init, self.state.shape)
        if self._times is None:
            raise ValueError("this view carries no stored history")
        j = int(np.searchsorted(self._times[: self._count], u + 1e-12, side="right")) - 1
        j = min(max(j, 0), self._count - 1)
        return self._states[:, j]

    def take(self, idx) -> "PathHistoryView":
        """Restrict the view to a subset of paths."""
        return PathHistoryView(
            self.t,
            self.state[idx],
            self.running_sup_sq[idx],
            times=self._times,
            states=None if self._states is None else self._states[idx],
            count=self._count,
            volterra=None if self.volterra is None else self.volterra[idx],
            x_init=self._x_init,
        )


def _readonly(arr):
    arr = np.asarray(arr)
    if arr.flags.writeable:
        arr = arr.view()
        arr.flags.writeable = False
    return arr


def synthetic_view(s: float, state, histories=None, times=None, volterra=None,
                   x_init=None) -> PathHistoryView:
    """Build a view from explicit states, used for condition checks and validation.

    Parameters
    ----------
    s : float
        Evaluation time.
    state : array_like, shape (m, d)
        Left-limit states.
    histories : array_like, shape (m, k, d), optional
        Past states at ``times``; the running supremum is taken over them
        and ``state``.
    times : array_like, shape (k,), optional
        Increasing times in ``[0, s)``.
    """
    state = np.atleast_2d(np.asarray(state, dtype=float))
    if histories is None:
        sup = np.sum(state**2, axis=1)
        hist = state[:, None, :]
        times = np.array([max(s - 1e-12, 0.0)])
    else:
        hist = np.asarray(histories, dtype=float)
        times = np.asarray(times, dtype=float)
        sup = np.maximum(np.max(np.sum(hist**2, axis=2), axis=1), np.sum(state**2, axis=1))
    return PathHistoryView(s, state, sup, times=times, states=hist, count=len(times),
                           volterra=volterra, x_init=x_init)


def history_view(path, s: float) -> PathHistoryView:
    """Strict-past view of a recorded path at time ``s``.

    The view holds the grid states at times strictly before ``s``; its
    current state is the last of them (or the initial state at ``s = 0``).

    Raises
    ------
    OutOfRange
        If ``s`` is negative or beyond the last grid time.
    """
    times = path.grid.times
    if s < -1e-12 or s > times[-1] + 1e-12:
        raise OutOfRange(f"time {s} outside [0, {times[-1]}]")
    k = int(np.searchsorted(times, s - 1e-12 * max(1.0, abs(s)), side="left"))
    X = np.asarray(path.X, dtype=float)
    x_init = X[0]
    if k == 0:
        state = x_init[None, :]
        sup = np.array([float(np.sum(x_init**2))])
    else:
        state = X[k - 1][None, :]
        sup = np.array([float(np.max(np.sum(X[:k] ** 2, axis=1)))])
    return PathHistoryView(s, state, sup, times=times, states=X[None, :, :], count=k,
                           x_init=x_init)


# ---------------------------------------------------------------------------
# coefficients and model


def _zero(*_args):
    return 0.0


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Coefficient callbacks ``a, b, sigma, h, phi``; missing ones are zero.

    ``h_compensator`` and ``phi_compensator`` optionally give the mark
    integrals ``int h K`` and ``int phi K`` in closed form, as functions of
    ``(s, view)``.
    """

    a: Callable | None = None
    b: Callable | None = None
    sigma: Callable | None = None
    h: Callable | None = None
    phi: Callable | None = None
    h_compensator: Callable | None = None
    phi_compensator: Callable | None = None


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Complete description of a model.

    Parameters
    ----------
    x0 : array_like
        Initial state.
    coefficients : CoefficientSet
    levy : LevyMeasure, optional
        Jump measure; ``None`` for a pure diffusion.
    dependence : Markov, PathDependent, Delay or Volterra
    d_brownian : int
        Number of Brownian drivers.
    horizon : float
        Default terminal time.
    name : str
    transition : callable, optional
        ``transition(s, dt, view, dB) -> X_next`` replacing the explicit
        Euler step of the continuous part.  It must consume ``dB`` as the
        model's Brownian increment so the exponent stays consistent.
    absorbing_boundary : float, optional
        When the first component falls to or below this value it is set
        to the boundary and the path (state and exponential) is frozen.
    domain : Domain, optional
        Probe domain for the growth checks when none is passed explicitly,
        e.g. a half-line with a singular point for a positive process.
    """

    x0: np.ndarray
    coefficients: CoefficientSet
    levy: LevyMeasure | None = None
    dependence: Dependence = field(default_factory=Markov)
    d_brownian: int = 1
    horizon: float = 1.0
    name: str = "model"
    transition: Callable | None = None
    absorbing_boundary: float | None = None
    domain: object | None = None

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float)).copy()
        if x0.ndim != 1 or not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be a finite vector")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        if int(self.d_brownian) < 1:
            raise ValueError("d_brownian must be at least 1")
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError("horizon must be positive")

    @property
    def dim(self) -> int:
        return self.x0.shape[0]

    @property
    def kind(self) -> str:
        return self.dependence.kind

    @property
    def needs_history(self) -> bool:
        return isinstance(self.dependence, (PathDependent, Delay))

    @property
    def has_jumps(self) -> bool:
        return self.levy is not None and self.levy.total_mass > 0

    # -- normalised coefficient evaluation -------------------------------

    def drift(self, s, view):
        return _as_state(_call(self.coefficients.a, "a", s, view), view.batch, self.dim)

    def diffusion(self, s, view):
        return _as_matrix(_call(self.coefficients.b, "b", s, view), view.batch, self.dim,
                          self.d_brownian)

    def loading(self, s, view):
        return _as_row(_call(self.coefficients.sigma, "sigma", s, view), view.batch,
                       self.d_brownian)

    def jump_state(self, s, view, z):
        z = np.asarray(z, dtype=float)
        out = _call(self.coefficients.h, "h", s, view, z)
        return _as_marks(out, view.batch, z.shape[1], self.dim)

    def jump_exponent(self, s, view, z):
        z = np.asarray(z, dtype=float)
        out = _call(self.coefficients.phi, "phi", s, view, z)
        return np.broadcast_to(np.asarray(out, dtype=float), (view.batch, z.shape[1]))

    def mark_integrals(self, s, view, marks, weights):
        """``int h K`` (batch, d) and ``int phi K`` (batch,) at quadrature nodes."""
        B = view.batch
        if self.coefficients.h_compensator is not None:
            ih = _as_state(self.coefficients.h_compensator(s, view), B, self.dim)
        elif self.coefficients.h is None:
            ih = np.zeros((B, self.dim))
        else:
            Z = np.broadcast_to(marks, (B, marks.size))
            ih = np.einsum("bkd,k->bd", self.jump_state(s, view, Z), weights)
        if self.coefficients.phi_compensator is not None:
            ip = np.broadcast_to(np.asarray(self.coefficients.phi_compensator(s, view),
                                            dtype=float), (B,))
        elif self.coefficients.phi is None:
            ip = np.zeros(B)
        else:
            Z = np.broadcast_to(marks, (B, marks.size))
            ip = self.jump_exponent(s, view, Z) @ weights
        return ih, ip


def _call(fn, name, s, view, *extra):
    if fn is None:
        return 0.0
    try:
        return fn(s, view, *extra)
    except Exception as exc:  # noqa: BLE001 - user callbacks may raise anything
        witness = {"s": s, "x": view.state[0]}
        if extra:
            witness["z"] = np.asarray(extra[0]).reshape(-1)[:1]
        raise CallbackFailure(f"coefficient {name} raised {exc!r}", witness) from exc


def _as_state(val, B, d):
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 1 and d == 1:
        arr = arr[:, None]
    return np.broadcast_to(arr, (B, d))


def _as_matrix(val, B, d, m):
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 1:
        if d == 1 and m == 1:
            arr = arr[:, None, None]
        elif d == 1:
            arr = arr[None, None, :]
        elif m == 1:
            arr = arr[None, :, None]
    elif arr.ndim == 2:
        if d == 1:
            arr = arr[:, None, :]
        elif m == 1:
            arr = arr[:, :, None]
    return np.broadcast_to(arr, (B, d, m))


def _as_row(val, B, m):
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 1 and m == 1:
        arr = arr[:, None]
    return np.broadcast_to(arr, (B, m))


def _as_marks(val, B, k, d):
    arr = np.asarray(val, dtype=float)
    if d == 1 and (arr.ndim < 3):
        arr = np.broadcast_to(arr, (B, k))[:, :, None]
    return np.broadcast_to(arr, (B, k, d))


# ---------------------------------------------------------------------------
# validation


@dataclass
class Violation:
    kind: str
    message: str
    witness: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_model`."""

    passed: bool
    violations: list[Violation]
    box: tuple[float, float]
    n_samples: int

    def __bool__(self) -> bool:
        return self.passed


def _sample_states(rng, n, box, d):
    lo, hi = box
    n_tail = n // 10
    core = rng.uniform(lo, hi, size=(n - n_tail, d))
    scale = rng.uniform(1.0, 10.0, size=(n_tail, d))
    sign_hi = rng.random((n_tail, d)) < 0.5 if lo < 0 else np.ones((n_tail, d), bool)
    tails = np.where(sign_hi, hi * scale, lo * scale)
    if lo >= 0:
        tails = np.where(sign_hi, hi * scale, tails)
    return np.concatenate([core, tails])


def validate_model(spec: ModelSpec, sample_budget: int = 10_000, box=(-5.0, 5.0),
                   seed: int = 0) -> ValidationReport:
    """Check the standing assumptions of a model on sampled points.

    Draws ``sample_budget`` tuples ``(s, x, z)`` with ``x`` uniform on the
    box in every coordinate (plus 10% tail points up to ten times further
    out) and evaluates all callbacks.  Non-finite outputs and exponent
    jumps with ``phi <= -1`` are reported as violations.

    Raises
    ------
    CallbackFailure
        If a coefficient raises on a sampled point.
    """
    if sample_budget < 1:
        raise ValueError("sample_budget must be at least 1")
    rng = np.random.default_rng(seed)
    violations: list[Violation] = []
    n = int(sample_budget)
    d = spec.dim

    if isinstance(spec.dependence, Volterra):
        norm = kernel_l2_norm(spec.dependence.kernel, spec.horizon)
        if not np.isfinite(norm):
            violations.append(Violation("kernel", "Volterra kernel not square integrable"))
        if spec.dependence.decay is not None:
            u = np.linspace(0.0, spec.horizon, 7)
            ref = np.exp(-spec.dependence.decay * (spec.horizon - u))
            if not np.allclose(spec.dependence.kernel(spec.horizon, u), ref, rtol=1e-10):
                violations.append(Violation("kernel", "declared decay does not match kernel"))
    if spec.levy is not None:
        lv = spec.levy
        if lv.third_abs_moment is not None and not np.isfinite(lv.third_abs_moment):
            violations.append(Violation("moment", "third absolute moment is not finite"))

    s_all = rng.uniform(0.0, spec.horizon, size=n)
    x_all = _sample_states(rng, n, box, d)
    z_all = spec.levy.sample(rng, n) if spec.levy is not None else np.zeros(n)
    vol = rng.standard_normal(n) if isinstance(spec.dependence, Volterra) else None

    # Coefficients take a scalar time, so group samples in time buckets.
    n_buckets = min(n, 64)
    order = np.argsort(s_all, kind="stable")
    for chunk in np.array_split(order, n_buckets):
        if chunk.size == 0:
            continue
        s = float(s_all[chunk[0]])
        x = x_all[chunk]
        if spec.needs_history:
            tt = np.linspace(0.0, s, 4, endpoint=False)
            hist = np.repeat(x[:, None, :], tt.size, axis=1)
            view = synthetic_view(s, x, hist, tt, x_init=spec.x0)
        else:
            view = synthetic_view(s, x, volterra=None if vol is None else vol[chunk],
                                  x_init=spec.x0)
        z = z_all[chunk][:, None]
        checks = [("a", lambda: spec.drift(s, view)),
                  ("b", lambda: spec.diffusion(s, view)),
                  ("sigma", lambda: spec.loading(s, view))]
        if spec.levy is not None:
            checks += [("h", lambda: spec.jump_state(s, view, z)),
                       ("phi", lambda: spec.jump_exponent(s, view, z))]
        for name, fn in checks:
            out = fn()
            flat = out.reshape(out.shape[0], -1)
            bad = ~np.all(np.isfinite(flat), axis=1)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                violations.append(Violation(
                    "non-finite", f"{name} is not finite",
                    {"s": s, "x": x[i], "z": z[i, 0]}))
            if name == "phi":
                low = out[:, 0] <= -1.0
                if low.any():
                    i = int(np.flatnonzero(low)[0])
                    violations.append(Violation(
                        "phi-floor", "phi <= -1 (exponent jump below floor)",
                        {"s": s, "x": x[i], "z": z[i, 0]}))
    return ValidationReport(not violations, violations, tuple(box), n)
