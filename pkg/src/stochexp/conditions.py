"""Linear-growth conditions for the martingale property of ``z = E(M)``.

The checks are sampling-based.  A condition ``f <= r (1 + |x|^2)`` (or
``r (1 + sup |x|^2)`` for path-dependent coefficients) is probed on

* a cloud of states inside a configurable box,
* spherical shells at increasing escape radii,
* shrinking neighbourhoods of declared singular points and times.

Each probe sequence is summarised by a trend: ``bounded`` when the
supremum of the ratio never grows by more than 10% from one probe to the
next, ``unbounded`` when it grows by more than 10% twice in a row, and
``inconclusive`` otherwise.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .errors import CallbackFailure
from .estimates import MCEstimate, shell_profile
from .model import (
    Delay,
    Markov,
    ModelSpec,
    PathDependent,
    Volterra,
    kernel_l2_norm,
    synthetic_view,
)

__all__ = [
    "ConditionEntry",
    "ConditionReport",
    "Domain",
    "ExplosionReport",
    "GrowthResult",
    "TailStatistic",
    "benes_verdict",
    "condition_one",
    "explosion_probe",
    "growth_ratio",
    "kazamaki_estimate",
    "novikov_estimate",
    "operator_L_markov",
    "operator_L_pathdep",
    "operator_frakL_markov",
    "operator_frakL_pathdep",
]

_GROWTH_TOL = 0.10
DIVERGENCE_RATIO = 0.8
"""Shell-contribution ratio above which a tail mean is flagged as diverging."""


# ---------------------------------------------------------------------------
# sampling domain


@dataclass(frozen=True)
class Domain:
    """Where growth conditions are probed.

    Parameters
    ----------
    box : (float, float)
        Per-coordinate bounds of the dense sample.
    escape_radii : sequence of float
        Increasing radii of the escape shells (at least three).
    singular_points : sequence of float
        Points (per coordinate) approached with ``inner_radii``.
    inner_radii : sequence of float
        Decreasing distances to the singular points.
    positive : bool
        Restrict states to the positive half-line (first coordinate).
    times : sequence of float, optional
        Evaluation times; eight equally spaced times on ``[0, T)`` by default.
    singular_times : sequence of float
        Times approached from the left with ``inner_radii``.
    n_box : int
        Size of the reference cloud the box sample is drawn from.
    seed : int
    """

    box: tuple = (-5.0, 5.0)
    escape_radii: tuple = (10.0, 20.0, 40.0, 80.0, 160.0)
    singular_points: tuple = ()
    inner_radii: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    positive: bool = False
    times: tuple | None = None
    singular_times: tuple = ()
    n_box: int = 4096
    seed: int = 0

    def __post_init__(self):
        radii = tuple(float(r) for r in self.escape_radii)
        if len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("escape radii must be increasing with at least three levels")
        object.__setattr__(self, "escape_radii", radii)
        inner = tuple(float(r) for r in self.inner_radii)
        if any(b >= a for a, b in zip(inner, inner[1:])):
            raise ValueError("inner radii must be decreasing")
        object.__setattr__(self, "inner_radii", inner)
        lo, hi = self.box
        if not lo < hi:
            raise ValueError("box must satisfy lo < hi")

    def eval_times(self, horizon: float) -> np.ndarray:
        if self.times is not None:
            return np.asarray(self.times, dtype=float)
        return np.linspace(0.0, horizon, 8, endpoint=False)

    def describe(self) -> dict:
        return {
            "box": list(self.box),
            "escape_radii": list(self.escape_radii),
            "singular_points": list(self.singular_points),
            "inner_radii": list(self.inner_radii),
            "positive": self.positive,
            "singular_times": list(self.singular_times),
            "n_box": self.n_box,
            "seed": self.seed,
        }


def _reference_cloud(domain: Domain, d: int) -> np.ndarray:
    # Radii are log-uniform over a fixed range that does not depend on the
    # box, so enlarging the box only ever adds sample points.
    rng = np.random.default_rng([domain.seed, d])
    r = 10.0 ** rng.uniform(-4.0, 4.0, size=domain.n_box)
    u = rng.standard_normal((domain.n_box, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = r[:, None] * u
    if domain.positive:
        pts[:, 0] = np.abs(pts[:, 0])
    return pts


def _box_points(domain: Domain, d: int) -> np.ndarray:
    pts = _reference_cloud(domain, d)
    lo, hi = domain.box
    keep = np.all((pts >= lo) & (pts <= hi), axis=1)
    return pts[keep]


def _shell_points(domain: Domain, d: int, radius: float) -> np.ndarray:
    if d == 1:
        pts = np.array([[radius]]) if domain.positive else np.array([[radius], [-radius]])
        return pts
    rng = np.random.default_rng([domain.seed, d, 7])
    axes = np.concatenate([np.eye(d), -np.eye(d)])
    dirs = rng.standard_normal((32, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = radius * np.concatenate([axes, dirs])
    if domain.positive:
        pts = pts[pts[:, 0] > 0]
    return pts


def _inner_points(domain: Domain, d: int, r: float) -> np.ndarray:
    out = []
    for p in domain.singular_points:
        base = np.full(d, float(p))
        for sgn in (1.0, -1.0):
            q = base.copy()
            q[0] += sgn * r
            if domain.positive and q[0] <= 0:
                continue
            out.append(q)
    return np.array(out).reshape(-1, d)


# ---------------------------------------------------------------------------
# growth ratio


@dataclass
class GrowthResult:
    """Outcome of a growth probe.

    Attributes
    ----------
    estimated_r : float
        Smallest ``r`` with ``f <= r (1 + |x|^2)`` on all probed points
        (``inf`` when a probe sequence is unbounded).
    witness : dict
        Time and state at which the ratio is largest (or first non-finite).
    trend : str
        ``bounded``, ``unbounded`` or ``inconclusive`` (worst over probes).
    verdict : str
        ``pass``, ``fail`` or ``inconclusive``.
    sequences : dict
        Supremum of the ratio along each probe sequence.
    """

    estimated_r: float
    witness: dict
    trend: str
    verdict: str
    sequences: dict = field(default_factory=dict)


def _trend(seq) -> str:
    seq = list(seq)
    if len(seq) < 2:
        return "bounded"
    if not all(np.isfinite(seq)):
        return "unbounded"
    ups = [b - a > _GROWTH_TOL * max(abs(a), 1e-12) for a, b in zip(seq, seq[1:])]
    if any(u and v for u, v in zip(ups, ups[1:])):
        return "unbounded"
    if not any(ups):
        return "bounded"
    return "inconclusive"


class _Probe:
    """Accumulates the running maximum of a ratio and its witness."""

    def __init__(self):
        self.best = -math.inf
        self.witness = {}

    def update(self, s, states, ratio):
        if ratio.size == 0:
            return -math.inf
        bad = ~np.isfinite(ratio)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            val = math.inf
        else:
            k = int(np.argmax(ratio))
            val = float(ratio[k])
        if val > self.best or (not self.witness and val == self.best):
            self.best = val
            self.witness = {"s": float(s), "x": np.asarray(states[k], dtype=float).tolist()}
        return val


def _scan(evaluate, domain: Domain, d: int, horizon: float) -> GrowthResult:
    """Run all probes.  ``evaluate(s, states)`` returns the ratio per state."""
    probe = _Probe()
    times = domain.eval_times(horizon)
    seqs = {}

    def sup_over(points, ts):
        top = -math.inf
        for s in ts:
            with np.errstate(all="ignore"):
                ratio = np.asarray(evaluate(float(s), points), dtype=float)
            top = max(top, probe.update(s, points, ratio))
        return top

    box = _box_points(domain, d)
    box_sup = sup_over(box, times)
    seqs["escape"] = [sup_over(_shell_points(domain, d, R), times)
                      for R in domain.escape_radii]
    if domain.singular_points:
        seqs["inner"] = [sup_over(_inner_points(domain, d, r), times)
                         for r in domain.inner_radii]
    for ts in domain.singular_times:
        pts = np.concatenate([box, _shell_points(domain, d, domain.escape_radii[0])])
        seqs[f"time->{ts:g}"] = [sup_over(pts, [ts - r]) for r in domain.inner_radii]

    trends = {k: _trend(v) for k, v in seqs.items()}
    if "unbounded" in trends.values():
        trend = "unbounded"
    elif "inconclusive" in trends.values():
        trend = "inconclusive"
    else:
        trend = "bounded"
    verdict = {"bounded": "pass", "unbounded": "fail", "inconclusive": "inconclusive"}[trend]
    est = math.inf if trend == "unbounded" else max(0.0, probe.best)
    seqs["box"] = [box_sup]
    seqs["trends"] = trends
    return GrowthResult(est, probe.witness, trend, verdict, seqs)


def _wants_time(f) -> bool:
    try:
        params = inspect.signature(f).parameters.values()
    except (TypeError, ValueError):
        return False
    positional = [p for p in params if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)
                  and p.default is p.empty]
    return len(positional) >= 2


def growth_ratio(f, domain: Domain | None = None, dim: int = 1, horizon: float = 1.0) -> GrowthResult:
    """Estimate the linear-growth constant of ``f``.

    Parameters
    ----------
    f : callable
        ``f(x)`` or ``f(s, x)`` with ``x`` of shape ``(m, dim)`` (or ``(m,)``
        when ``dim == 1`` is more convenient) returning ``m`` values.
    domain : Domain, optional
    dim : int
        State dimension.
    horizon : float
        Upper end of the evaluation times.

    Returns
    -------
    GrowthResult

    Raises
    ------
    CallbackFailure
        If ``f`` raises; the witness is the offending point.

    Examples
    --------
    >>> res = growth_ratio(lambda x: 4 * x[:, 0] ** 2)
    >>> res.verdict, round(res.estimated_r, 2)
    ('pass', 4.0)
    """
    domain = domain or Domain()
    timed = _wants_time(f)

    def evaluate(s, states):
        arg = states
        try:
            out = f(s, arg) if timed else f(arg)
        except Exception as exc:  # noqa: BLE001 - opaque callback
            raise CallbackFailure(f"growth function raised {exc!r}",
                                  {"s": s, "x": states[0]}) from exc
        out = np.broadcast_to(np.asarray(out, dtype=float).reshape(-1), (states.shape[0],))
        return out / (1.0 + np.sum(states**2, axis=1))

    return _scan(evaluate, domain, dim, horizon)


# ---------------------------------------------------------------------------
# operators


def _nodes(spec, quadrature_seed=0):
    if not spec.has_jumps:
        return np.zeros(0), np.zeros(0)
    return engine.quadrature_nodes(spec.levy, quadrature_seed)


def _as_view(spec, s, x):
    if hasattr(x, "state") and hasattr(x, "running_sup_sq"):
        return x
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if spec.dim == 1 else x[None, :]
    vol = np.zeros(x.shape[0]) if isinstance(spec.dependence, Volterra) else None
    return synthetic_view(s, x, volterra=vol, x_init=spec.x0)


def _mark_moments(spec, s, view, nodes):
    """``int |h|^2 K``, ``int h phi K`` (B, d), ``int |h|^2 phi K``, ``int phi^2 K``."""
    B = view.batch
    marks, w = nodes
    if marks.size == 0:
        z = np.zeros(B)
        return z, np.zeros((B, spec.dim)), z, z
    Z = np.broadcast_to(marks, (B, marks.size))
    h = spec.jump_state(s, view, Z)
    ph = spec.jump_exponent(s, view, Z)
    h2 = np.sum(h**2, axis=2)
    return h2 @ w, np.einsum("bkd,bk,k->bd", h, ph, w), (h2 * ph) @ w, (ph**2) @ w


def condition_one(spec: ModelSpec, s, x, quadrature_seed: int = 0) -> np.ndarray:
    """``|sigma|^2 + int phi^2 K`` on a batch of states or a view."""
    view = _as_view(spec, s, x)
    sig = spec.loading(s, view)
    _, _, _, p2 = _mark_moments(spec, s, view, _nodes(spec, quadrature_seed))
    return np.sum(sig**2, axis=1) + p2


def operator_L_markov(spec: ModelSpec, s, x, quadrature_seed: int = 0) -> np.ndarray:
    """``L = 2 <x, a> + tr(b b*) + int |h|^2 K``.

    Examples
    --------
    For the CEV model (``a = x``, ``b = sqrt(x+)``) this is ``2 x^2 + x+``.
    """
    view = _as_view(spec, s, x)
    X = view.state
    a = spec.drift(s, view)
    b = spec.diffusion(s, view)
    h2, _, _, _ = _mark_moments(spec, s, view, _nodes(spec, quadrature_seed))
    return 2.0 * np.sum(X * a, axis=1) + np.sum(b**2, axis=(1, 2)) + h2


def operator_frakL_markov(spec: ModelSpec, s, x, quadrature_seed: int = 0) -> np.ndarray:
    """``2 <x, a + b sigma* + int h phi K> + tr(b b*) + int |h|^2 K + int |h|^2 phi K``.

    This is ``L`` evaluated with the drift of the tilted measure plus the
    tilted jump intensity.
    """
    view = _as_view(spec, s, x)
    X = view.state
    a = spec.drift(s, view)
    b = spec.diffusion(s, view)
    sig = spec.loading(s, view)
    h2, hphi, h2phi, _ = _mark_moments(spec, s, view, _nodes(spec, quadrature_seed))
    shift = a + np.einsum("bij,bj->bi", b, sig) + hphi
    return 2.0 * np.sum(X * shift, axis=1) + np.sum(b**2, axis=(1, 2)) + h2 + h2phi


def operator_L_pathdep(spec: ModelSpec, s, history, quadrature_seed: int = 0) -> np.ndarray:
    """``L = |a|^2 + tr(b b*) + int |h|^2 K`` on a history view."""
    view = _as_view(spec, s, history)
    a = spec.drift(s, view)
    b = spec.diffusion(s, view)
    h2, _, _, _ = _mark_moments(spec, s, view, _nodes(spec, quadrature_seed))
    return np.sum(a**2, axis=1) + np.sum(b**2, axis=(1, 2)) + h2


def operator_frakL_pathdep(spec: ModelSpec, s, history, quadrature_seed: int = 0) -> np.ndarray:
    """``L + tr(b b*) |sigma|^2 + int |h|^2 K int phi^2 K + int |h|^2 phi K``."""
    view = _as_view(spec, s, history)
    a = spec.drift(s, view)
    b = spec.diffusion(s, view)
    sig = spec.loading(s, view)
    h2, _, h2phi, p2 = _mark_moments(spec, s, view, _nodes(spec, quadrature_seed))
    bb = np.sum(b**2, axis=(1, 2))
    return (np.sum(a**2, axis=1) + bb + h2 + bb * np.sum(sig**2, axis=1) + h2 * p2 + h2phi)


# ---------------------------------------------------------------------------
# verdict


@dataclass
class ConditionEntry:
    name: str
    estimated_r: float
    witness: dict
    trend: str
    verdict: str
    note: str = ""

    def to_dict(self) -> dict:
        r = self.estimated_r
        return {"name": self.name, "estimated_r": r if math.isfinite(r) else "inf",
                "witness": self.witness, "trend": self.trend, "verdict": self.verdict,
                "note": self.note}


@dataclass
class ConditionReport:
    """Per-condition growth estimates and the overall verdict."""

    model: str
    dependence: str
    entries: list[ConditionEntry]
    verdict: str
    domain: dict

    def __getitem__(self, name: str) -> ConditionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def failing(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries if e.verdict == "fail")

    def to_dict(self) -> dict:
        return {"model": self.model, "dependence": self.dependence, "verdict": self.verdict,
                "entries": [e.to_dict() for e in self.entries], "domain": self.domain}


def _synthetic_histories(s, levels, d, x0):
    """Constant and spike histories whose running supremum is given by ``levels``.

    Returns ``(state, histories, times)``; each level yields five paths:
    constant, spike first/middle/last with the current state at zero, and
    a spike at the current time.
    """
    k = 8
    times = np.linspace(0.0, s, k, endpoint=False) if s > 0 else np.zeros(1)
    k = times.size
    m = levels.shape[0]
    hists, states = [], []
    for variant in range(5):
        h = np.zeros((m, k, d))
        cur = np.zeros((m, d))
        if variant == 0:
            h[:] = levels[:, None, :]
            cur = levels.copy()
        elif variant == 4:
            cur = levels.copy()
        else:
            pos = {1: 0, 2: k // 2, 3: k - 1}[variant]
            h[:, pos] = levels
        hists.append(h)
        states.append(cur)
    return np.concatenate(states), np.concatenate(hists), times


def _is_brownian(spec, domain, s_probe):
    if (spec.has_jumps or spec.dim != 1 or spec.d_brownian != 1 or spec.transition is not None
            or isinstance(spec.dependence, Volterra)):
        return False
    pts = _box_points(domain, 1)[:256]
    for s in s_probe:
        if spec.needs_history:
            st, hist, tt = _synthetic_histories(s, pts, 1, spec.x0)
            view = synthetic_view(s, st, hist, tt, x_init=spec.x0)
        else:
            view = _as_view(spec, s, pts)
        if not (np.allclose(spec.drift(s, view), 0.0) and np.allclose(spec.diffusion(s, view), 1.0)):
            return False
    return True


def benes_verdict(spec: ModelSpec, domain: Domain | None = None,
                  quadrature_seed: int = 0) -> ConditionReport:
    """Check the linear-growth conditions appropriate to the model's dependence class.

    * Markov models: condition one, ``L`` and ``frakL`` against ``1 + |x|^2``.
    * Path-dependent and delay models: the path-dependent operators against
      ``1 + sup |x|^2`` on synthetic histories with prescribed suprema.
    * Volterra models: condition one and square integrability of the kernel.

    When ``X`` is a Brownian motion the classical condition on ``sigma^2``
    alone is reported as ``benes_BC`` (or ``benes_BCC``) and suffices for a
    pass.

    Returns
    -------
    ConditionReport
        Overall ``pass`` iff all conditions pass (or the Brownian condition
        does); ``fail`` if any condition fails; ``inconclusive`` otherwise.
    """
    domain = domain or spec.domain or Domain()
    d, T = spec.dim, spec.horizon
    pathdep = isinstance(spec.dependence, (PathDependent, Delay))

    def markov_eval(fn):
        def evaluate(s, states):
            view = _as_view(spec, s, states)
            return fn(spec, s, view, quadrature_seed) / (1.0 + np.sum(states**2, axis=1))
        return evaluate

    def pathdep_eval(fn):
        def evaluate(s, levels):
            st, hist, tt = _synthetic_histories(s, levels, d, spec.x0)
            view = synthetic_view(s, st, hist, tt, x_init=spec.x0)
            val = fn(spec, s, view, quadrature_seed) / (1.0 + view.running_sup_sq)
            # worst case over the five history shapes of each level
            return np.max(val.reshape(5, -1), axis=0)
        return evaluate

    entries = []

    def add(name, evaluate, note=""):
        res = _scan(evaluate, domain, d, T)
        entries.append(ConditionEntry(name, res.estimated_r, res.witness, res.trend,
                                      res.verdict, note))
        return res

    wrap = pathdep_eval if pathdep else markov_eval
    add("growth_sigma_phi", wrap(condition_one), "|sigma|^2 + int phi^2 K")
    if isinstance(spec.dependence, Volterra):
        norm = kernel_l2_norm(spec.dependence.kernel, T)
        ok = math.isfinite(norm)
        entries.append(ConditionEntry(
            "kernel_l2", norm if ok else math.inf, {}, "bounded" if ok else "unbounded",
            "pass" if ok else "fail", "L2 norm of the Volterra kernel on [0, T]^2"))
    elif pathdep:
        add("L_bound", wrap(operator_L_pathdep), "|a|^2 + tr(bb*) + int |h|^2 K")
        add("frakL_bound", wrap(operator_frakL_pathdep), "path-dependent tilted operator")
    else:
        add("L_bound", wrap(operator_L_markov), "2<x,a> + tr(bb*) + int |h|^2 K")
        add("frakL_bound", wrap(operator_frakL_markov), "tilted operator")

    verdicts = [e.verdict for e in entries]
    if "fail" in verdicts:
        overall = "fail"
    elif all(v == "pass" for v in verdicts):
        overall = "pass"
    else:
        overall = "inconclusive"

    if _is_brownian(spec, domain, domain.eval_times(T)[:2]):
        name = "benes_BCC" if pathdep else "benes_BC"

        def sig2(fn_spec, s, view, qs):
            return np.sum(fn_spec.loading(s, view) ** 2, axis=1)

        res = add(name, wrap(sig2), "sigma^2 for a Brownian state")
        if res.verdict == "pass":
            overall = "pass"
    return ConditionReport(spec.name, spec.kind, entries, overall, domain.describe())


# ---------------------------------------------------------------------------
# explosion probe


@dataclass
class ExplosionReport:
    """Stopping probabilities and stopped second moments along a level ladder.

    Attributes
    ----------
    levels : list of float
    p_stop : list of MCEstimate
        ``P(tau_n <= T)`` for ``tau_n = inf{t : |X_t|^2 >= n}``.
    sup_mean_x2 : list of float
        ``max_t`` of the sample mean of ``|X_{t ^ tau_n}|^2`` over checkpoints.
    explosion_suspect : bool
        The stopping probability does not decay along the ladder.
    """

    levels: list
    p_stop: list
    sup_mean_x2: list
    explosion_suspect: bool

    def to_dict(self) -> dict:
        return {"levels": list(self.levels), "p_stop": [p.to_dict() for p in self.p_stop],
                "sup_mean_x2": list(self.sup_mean_x2),
                "explosion_suspect": self.explosion_suspect}


def explosion_probe(spec: ModelSpec, grid, n_paths: int, levels=(1e2, 1e3, 1e4, 1e5),
                    seed: int = 0, workers: int = 1) -> ExplosionReport:
    """Estimate ``P(tau_n <= T)`` for the state localisation ``|X|^2 >= n``.

    The ladder is flagged as explosion-suspect when the probability at the
    top level is significantly positive and at least half the probability
    at the bottom level.
    """
    from .simulate import run_ensemble

    if not isinstance(spec.dependence, Markov):
        raise ValueError("explosion_probe expects a Markov model")
    ens = run_ensemble(spec, grid, n_paths, seed, levels=levels, variant="state",
                       workers=workers, track_moments=True)
    p = [MCEstimate.from_values(ens.stopped(k).astype(float), seed=seed, dt=grid.dt)
         for k in range(len(ens.levels))]
    x2 = ens.arrays["cp_x2"]
    sup_m = [float(np.max(np.mean(x2[k], axis=0))) for k in range(len(ens.levels))]
    top, bottom = p[-1], p[0]
    suspect = bool(top.mean > 3 * top.se and top.mean > 0 and top.mean >= 0.5 * bottom.mean)
    return ExplosionReport(list(ens.levels), p, sup_m, suspect)


# ---------------------------------------------------------------------------
# Novikov and Kazamaki statistics


@dataclass
class TailStatistic:
    """A log-domain mean together with a divergence diagnosis.

    ``diverging`` is set when the contributions of successive decade shells
    of the upper tail stop shrinking: the mean of the last two shell ratios
    is at least :data:`DIVERGENCE_RATIO`.
    """

    estimate: MCEstimate
    diverging: bool
    shell_ratios: list
    per_checkpoint: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.to_dict(), "diverging": self.diverging,
                "shell_ratios": [float(r) for r in self.shell_ratios],
                "per_checkpoint": [e.to_dict() for e in self.per_checkpoint]}


def _diverging(log_values) -> tuple[bool, list]:
    lv = np.asarray(log_values, dtype=float)
    if np.ptp(lv) == 0:
        return False, []
    _, ratios = shell_profile(lv)
    ratios = [float(r) for r in ratios if np.isfinite(r)]
    if len(ratios) < 2:
        return False, ratios
    return bool(np.mean(ratios[-2:]) >= DIVERGENCE_RATIO), ratios


def novikov_estimate(ensemble) -> TailStatistic:
    """``E exp(<M^c>_T / 2)`` from an ensemble summary."""
    lv = 0.5 * np.asarray(ensemble.arrays["qv"], dtype=float)
    est = MCEstimate.from_log_values(lv, seed=ensemble.seed, dt=ensemble.dt)
    div, ratios = _diverging(lv)
    return TailStatistic(est, div, ratios)


def kazamaki_estimate(ensemble, checkpoints=None) -> TailStatistic:
    """``max_t E exp(M^c_t / 2)`` over the recorded checkpoints.

    The divergence flag is raised if the statistic diverges at any
    checkpoint.
    """
    mc = np.asarray(ensemble.arrays["cp_mc"], dtype=float)
    cols = range(mc.shape[1]) if checkpoints is None else checkpoints
    per, any_div, worst_ratios = [], False, []
    for c in cols:
        lv = 0.5 * mc[:, c]
        per.append(MCEstimate.from_log_values(lv, seed=ensemble.seed, dt=ensemble.dt))
        div, ratios = _diverging(lv)
        if div and not any_div:
            worst_ratios = ratios
        any_div |= div
        if not any_div:
            worst_ratios = ratios
    best = max(per, key=lambda e: e.mean)
    return TailStatistic(best, any_div, worst_ratios, per)
