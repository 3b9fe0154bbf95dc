"""Change of measure ``dQ = z_T dP`` and Monte Carlo cross-checks.

Under ``Q`` the Brownian driver gains the drift ``sigma`` and the jump
compensator ``ds K(dz)`` becomes ``(1 + phi) ds K(dz)``, so the state has
drift ``a + b sigma* + int h phi K`` relative to the ``Q``-compensated
jumps.  Simulation under ``Q`` shifts the Brownian increments and thins
jump proposals drawn at an envelope rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import JumpBelowFloor, TiltUnbounded
from .estimates import MCEstimate
from .model import ModelSpec, Volterra, synthetic_view

__all__ = [
    "FUNCTIONALS",
    "GirsanovReport",
    "QVReport",
    "TiltedModel",
    "girsanov_consistency",
    "quadratic_variation_check",
    "run_tilted",
    "tilt_model",
]

FUNCTIONALS = ("identity", "square", "indicator", "running_sup")
DEFAULT_LEVEL = 1e4
"""Localisation level used when the growth conditions do not pass."""


class TiltedModel:
    """A model seen under the tilted measure.

    Attributes
    ----------
    base : ModelSpec
    envelope : float or None
        Constant thinning envelope ``C >= 1 + phi``; ``None`` selects a
        state-dependent envelope (see :meth:`envelope_at`).
    nodes : (ndarray, ndarray)
        Mark quadrature shared with the base model.
    """

    def __init__(self, base: ModelSpec, envelope: float | None, quadrature_seed: int = 0):
        self.base = base
        self.envelope = None if envelope is None else float(envelope)
        self.nodes = engine.quadrature_nodes(base.levy, quadrature_seed) if base.has_jumps \
            else (np.zeros(0), np.zeros(0))

    @property
    def name(self) -> str:
        return self.base.name

    def q_drift(self, s, view) -> np.ndarray:
        """``a + b sigma* + int h phi K`` with shape ``(batch, d)``."""
        spec = self.base
        a = spec.drift(s, view)
        b = spec.diffusion(s, view)
        sig = spec.loading(s, view)
        out = a + np.einsum("bij,bj->bi", b, sig)
        marks, w = self.nodes
        if marks.size:
            Z = np.broadcast_to(marks, (view.batch, marks.size))
            h = spec.jump_state(s, view, Z)
            ph = spec.jump_exponent(s, view, Z)
            out = out + np.einsum("bkd,bk,k->bd", h, ph, w)
        return out

    def intensity_factor(self, s, view, z) -> np.ndarray:
        """``1 + phi``: density of the tilted jump compensator against ``K``."""
        return 1.0 + self.base.jump_exponent(s, view, z)

    def envelope_at(self, s, view) -> np.ndarray:
        """Per-path envelope ``max_z (1 + phi)`` over the quadrature marks.

        Exact for discrete jump measures.  For sampled marks a proposal
        outside the envelope raises :class:`TiltUnbounded` during simulation.
        """
        marks, _ = self.nodes
        Z = np.broadcast_to(marks, (view.batch, marks.size))
        return np.max(self.intensity_factor(s, view, Z), axis=1)

    def jump_rate(self, s, view) -> np.ndarray:
        """``int (1 + phi) K`` per path."""
        marks, w = self.nodes
        if marks.size == 0:
            return np.zeros(view.batch)
        Z = np.broadcast_to(marks, (view.batch, marks.size))
        return self.intensity_factor(s, view, Z) @ w


def _sample_views(spec, n, box, seed):
    rng = np.random.default_rng(seed)
    lo, hi = box
    x = rng.uniform(lo, hi, size=(n, spec.dim))
    vol = np.zeros(n) if isinstance(spec.dependence, Volterra) else None
    ts = np.linspace(0.0, spec.horizon, 4, endpoint=False)
    out = []
    for s in ts:
        if spec.needs_history:
            tt = np.linspace(0.0, s, 4, endpoint=False) if s > 0 else np.zeros(1)
            hist = np.repeat(x[:, None, :], tt.size, axis=1)
            out.append((s, synthetic_view(s, x, hist, tt, x_init=spec.x0)))
        else:
            out.append((s, synthetic_view(s, x, volterra=vol, x_init=spec.x0)))
    return out


def tilt_model(spec: ModelSpec, envelope: float | None = None, box=(-5.0, 5.0),
               sample_budget: int = 2048, seed: int = 0,
               quadrature_seed: int = 0) -> TiltedModel:
    """Build the tilted model.

    When ``phi`` does not depend on the state at the sampled points the
    envelope is the constant ``max_z (1 + phi)``; a constant envelope can
    also be supplied.  Otherwise the envelope follows the state.

    Raises
    ------
    TiltUnbounded
        If a supplied envelope is below a sampled ``1 + phi``.
    JumpBelowFloor
        If a sampled ``1 + phi`` is not positive.
    """
    tilt = TiltedModel(spec, None, quadrature_seed)
    if not spec.has_jumps:
        return tilt
    marks, _ = tilt.nodes
    factors = []
    for s, view in _sample_views(spec, sample_budget, box, seed):
        Z = np.broadcast_to(marks, (view.batch, marks.size))
        factors.append(tilt.intensity_factor(s, view, Z))
    fac = np.concatenate(factors)
    if np.any(fac <= 0):
        raise JumpBelowFloor("1 + phi <= 0 at a sampled state")
    if envelope is not None:
        if np.max(fac) > envelope * (1 + 1e-12):
            raise TiltUnbounded(f"sampled 1+phi={np.max(fac):.6g} exceeds envelope {envelope:.6g}")
        tilt.envelope = float(envelope)
    elif np.all(np.ptp(fac, axis=0) <= 1e-12):
        tilt.envelope = float(np.max(fac))
    return tilt


def run_tilted(spec: ModelSpec, grid, n_paths: int, seed: int, levels=(), variant=None,
               workers: int = 1, tilt: TiltedModel | None = None, track_qv: bool = True,
               namespace: int = 1, checkpoints=None):
    """Simulate an ensemble under the tilted measure (seed namespace 1 by default)."""
    from .simulate import run_ensemble

    tilt = tilt or tilt_model(spec)
    variant = variant or ("pathdep" if spec.needs_history else "markov")
    return run_ensemble(spec, grid, n_paths, seed, levels=levels, variant=variant,
                        workers=workers, tilt=tilt, namespace=namespace, track_qv=track_qv,
                        checkpoints=checkpoints)


# ---------------------------------------------------------------------------
# weighted versus tilted expectations


@dataclass
class GirsanovReport:
    """``E_P[z f]`` against ``E_Q[f]`` for one functional."""

    functional: str
    level: float | None
    p_side: MCEstimate
    q_side: MCEstimate
    overlap: bool
    k: float = 3.0
    note: str = ""

    def to_dict(self) -> dict:
        return {"functional": self.functional, "level": self.level,
                "p_side": self.p_side.to_dict(), "q_side": self.q_side.to_dict(),
                "overlap": self.overlap, "k": self.k, "note": self.note}


def _functional(name, x, sup_x, K0):
    x1 = x[:, 0]
    if name == "identity":
        return x1
    if name == "square":
        return x1**2
    if name == "indicator":
        return (x1 > K0).astype(float)
    if name == "running_sup":
        return sup_x
    raise ValueError(f"unknown functional {name!r}; choose from {FUNCTIONALS}")


def _terminal(ens, stopped: bool):
    if stopped:
        return ens.log_z_stopped(0), ens.x_stopped(0), ens.sup_x_stopped(0)
    return ens.arrays["log_z"], ens.arrays["x"], ens.arrays["sup_x"]


def girsanov_consistency(spec: ModelSpec, functional: str | list, grid, n_paths: int,
                         seed: int, level: float | None = None, K0: float | None = None,
                         workers: int = 1, verdict: str | None = None,
                         variant: str | None = None, k: float = 3.0):
    """Compare ``E_P[z_T f(X)]`` with ``E_Q[f(X)]``.

    Parameters
    ----------
    functional : str or list of str
        Any of ``identity`` (``X_T``), ``square`` (``X_T^2``), ``indicator``
        (``1{X_T > K0}``) and ``running_sup`` (``max_t X_t``).  A list
        returns a list of reports sharing the two ensembles.
    level : float, optional
        Localisation level; both sides are then evaluated at ``T ^ tau``.
    K0 : float, optional
        Indicator threshold, ``x0`` by default.
    verdict : str, optional
        Outcome of :func:`~stochexp.conditions.benes_verdict`; computed when
        omitted.  Without a pass and without ``level``, the comparison is
        localised at :data:`DEFAULT_LEVEL`.

    Returns
    -------
    GirsanovReport or list of GirsanovReport
    """
    from .simulate import run_ensemble

    names = [functional] if isinstance(functional, str) else list(functional)
    for nm in names:
        if nm not in FUNCTIONALS:
            raise ValueError(f"unknown functional {nm!r}; choose from {FUNCTIONALS}")
    note = ""
    if level is None:
        if verdict is None:
            from .conditions import benes_verdict
            verdict = benes_verdict(spec).verdict
        if verdict != "pass":
            level = DEFAULT_LEVEL
            note = f"growth conditions did not pass; compared at T ^ tau with level {level:g}"
    variant = variant or ("pathdep" if spec.needs_history else "markov")
    levels = () if level is None else (float(level),)
    K0 = float(spec.x0[0]) if K0 is None else float(K0)
    p_ens = run_ensemble(spec, grid, n_paths, seed, levels=levels, variant=variant,
                         workers=workers, namespace=0)
    q_ens = run_tilted(spec, grid, n_paths, seed, levels=levels, variant=variant,
                       workers=workers, track_qv=False)
    stopped = level is not None
    lz, xp, supp = _terminal(p_ens, stopped)
    _, xq, supq = _terminal(q_ens, stopped)
    w = np.exp(lz)
    out = []
    for nm in names:
        p = MCEstimate.from_values(w * _functional(nm, xp, supp, K0), seed=seed, dt=grid.dt,
                                   weights_tail=True)
        q = MCEstimate.from_values(_functional(nm, xq, supq, K0), seed=seed, dt=grid.dt)
        out.append(GirsanovReport(nm, level, p, q, p.overlaps(q, k), k, note))
    return out[0] if isinstance(functional, str) else out


# ---------------------------------------------------------------------------
# quadratic variation under Q


@dataclass
class QVReport:
    """Realised against predictable quadratic variation of the ``Q``-martingale parts.

    Attributes
    ----------
    continuous : dict
        Means of ``sum (b dW)^2`` and ``int |b|^2 ds`` with their relative gap.
    jumps : dict
        Paired estimate of ``sum |h|^2 - int int |h|^2 (1 + phi) K ds``.
    positive_marks : dict
        Paired estimate of the count of jumps with mark ``> 0`` minus its
        ``Q``-compensator.
    jump_rate : MCEstimate
        Jumps per unit time.
    consistent : bool
        Continuous gap below 5% and both paired differences within ``3 SE``.
    """

    continuous: dict
    jumps: dict
    positive_marks: dict
    jump_rate: MCEstimate
    consistent: bool

    def to_dict(self) -> dict:
        def conv(d):
            return {k: (v.to_dict() if isinstance(v, MCEstimate) else v) for k, v in d.items()}
        return {"continuous": conv(self.continuous), "jumps": conv(self.jumps),
                "positive_marks": conv(self.positive_marks),
                "jump_rate": self.jump_rate.to_dict(), "consistent": self.consistent}


def quadratic_variation_check(ensemble, tol: float = 0.05, k: float = 3.0) -> QVReport:
    """Check the brackets of an ensemble simulated with ``track_qv``."""
    a = ensemble.arrays
    if "qc_real" not in a:
        raise ValueError("ensemble was simulated without track_qv")
    seed, dt = ensemble.seed, ensemble.dt
    real, pred = np.mean(a["qc_real"]), np.mean(a["qc_pred"])
    rel = abs(real - pred) / pred if pred > 0 else abs(real - pred)
    cont = {"realised": float(real), "predictable": float(pred), "relative_gap": float(rel),
            "ok": bool(rel < tol or (pred == 0 and real == 0))}
    dj = MCEstimate.from_values(a["qj_real"] - a["qj_pred"], seed=seed, dt=dt)
    jumps = {"realised": float(np.mean(a["qj_real"])), "predictable": float(np.mean(a["qj_pred"])),
             "difference": dj, "ok": bool(dj.contains(0.0, k))}
    dg = MCEstimate.from_values(a["g_count"] - a["g_pred"], seed=seed, dt=dt)
    pos = {"count": float(np.mean(a["g_count"])), "compensator": float(np.mean(a["g_pred"])),
           "difference": dg, "ok": bool(dg.contains(0.0, k))}
    rate = MCEstimate.from_values(a["jump_count"] / ensemble.horizon, seed=seed, dt=dt)
    ok = cont["ok"] and jumps["ok"] and pos["ok"]
    return QVReport(cont, jumps, pos, rate, bool(ok))

