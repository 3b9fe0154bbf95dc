"""Stochastic exponential along simulated paths.

Two forms are provided.  The closed form accumulates

    log z_t = M_t - <M^c>_t / 2 + sum_{s<=t} [log(1 + dM_s) - dM_s]

in the log domain.  The SDE form runs the recursion ``z_{i+1} = z_i (1 +
dM_i)`` for the Brownian part and the jumps; the compensator drift of the
jump part is a linear ODE between jumps and is integrated exactly, so for
paths without a Brownian part both forms are the same finite product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import JumpBelowFloor
from .estimates import MCEstimate
from .model import ModelSpec, PathHistoryView, Volterra

__all__ = [
    "ExponentialPath",
    "Increments",
    "exponential_closed_form",
    "exponential_from_sde",
    "martingale_increments",
    "martingale_increments_batch",
    "supermartingale_scan",
]


@dataclass(eq=False)
class Increments:
    """Per-step increments of the exponent martingale ``M`` on one path.

    Attributes
    ----------
    times : ndarray, shape (n+1,)
    dMc : ndarray, shape (n,)
        ``sigma(t_i) . dB_i``.
    qv : ndarray, shape (n,)
        ``|sigma(t_i)|^2 dt``, the increments of ``<M^c>``.
    compensator : ndarray, shape (n,)
        ``(int phi K) dt``, subtracted from ``M``.
    jump_steps, jump_times, jump_sizes : ndarray
        Step index, time and size ``dM = phi`` of each jump.
    """

    times: np.ndarray
    dMc: np.ndarray
    qv: np.ndarray
    compensator: np.ndarray
    jump_steps: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray

    @property
    def n(self) -> int:
        return self.dMc.size

    def jump_log_factors(self) -> np.ndarray:
        """Per-step sum of ``log(1 + dM)`` over the jumps of each step."""
        out = np.zeros(self.n)
        np.add.at(out, self.jump_steps, np.log1p(self.jump_sizes))
        return out


@dataclass(eq=False)
class ExponentialPath:
    """``log z`` on the grid with the jump list and ``<M^c>``."""

    times: np.ndarray
    log_z: np.ndarray
    qv: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    clipped: int = 0

    @property
    def z(self) -> np.ndarray:
        return np.exp(self.log_z)


def _check_floor(sizes, times):
    bad = sizes <= -1.0
    if np.any(bad):
        k = int(np.argmax(bad))
        raise JumpBelowFloor(f"1 + dM = {1 + sizes[k]:.6g} <= 0 at t = {times[k]:.6g}")


def martingale_increments_batch(spec: ModelSpec, bundles, quadrature_seed: int = 0):
    """Vectorised :func:`martingale_increments` over bundles sharing a grid."""
    bundles = list(bundles)
    grid = bundles[0].grid
    n, dt, times = grid.n, grid.dt, grid.times
    B = len(bundles)
    X = np.stack([np.asarray(b.X, dtype=float) for b in bundles])
    dB = np.stack([np.asarray(b.driver.dB, dtype=float) for b in bundles])
    stop = np.array([b.stop_index if b.stop_index is not None else n + 1 for b in bundles])
    marks_q, w_q = engine.quadrature_nodes(spec.levy, quadrature_seed)
    has_jumps = spec.has_jumps

    jp = np.concatenate([np.full(b.driver.n_jumps, k) for k, b in enumerate(bundles)]
                        + [np.zeros(0, dtype=int)]).astype(int)
    jt = np.concatenate([np.asarray(b.driver.jump_times, float) for b in bundles] + [np.zeros(0)])
    jz = np.concatenate([np.asarray(b.driver.jump_marks, float) for b in bundles] + [np.zeros(0)])
    js = np.clip(np.searchsorted(times, jt, side="left") - 1, 0, n - 1).astype(int)
    jsize = np.zeros(jt.size)

    dMc = np.zeros((B, n))
    qv = np.zeros((B, n))
    comp = np.zeros((B, n))
    sup_sq = np.sum(X[:, 0] ** 2, axis=1)
    vol = np.zeros(B) if isinstance(spec.dependence, Volterra) else None
    order = np.argsort(js, kind="stable")
    bounds = np.searchsorted(js[order], np.arange(n + 1), side="left")
    for i in range(n):
        live = i < stop
        view = PathHistoryView(times[i], X[:, i], sup_sq, times=times, states=X, count=i + 1,
                               volterra=vol, x_init=spec.x0)
        sig = spec.loading(times[i], view)
        dMc[:, i] = np.where(live, np.sum(sig * dB[:, i], axis=1), 0.0)
        qv[:, i] = np.where(live, np.sum(sig**2, axis=1) * dt, 0.0)
        if has_jumps:
            _, ip = spec.mark_integrals(times[i], view, marks_q, w_q)
            comp[:, i] = np.where(live, ip * dt, 0.0)
            sel = order[bounds[i]:bounds[i + 1]]
            if sel.size:
                keep = sel[live[jp[sel]]]
                if keep.size:
                    ph = spec.jump_exponent(times[i], view.take(jp[keep]), jz[keep][:, None])[:, 0]
                    jsize[keep] = ph
        np.maximum(sup_sq, np.sum(X[:, i + 1] ** 2, axis=1), out=sup_sq)
        if vol is not None:
            if spec.dependence.decay is not None:
                vol = np.exp(-spec.dependence.decay * dt) * (vol + dB[:, i, 0])
            else:
                vol = dB[:, : i + 1, 0] @ np.asarray(
                    spec.dependence.kernel(times[i + 1], times[: i + 1]), dtype=float)

    live_jump = js < stop[jp] if jp.size else np.zeros(0, dtype=bool)
    _check_floor(jsize[live_jump], jt[live_jump])
    out = []
    for k in range(B):
        m = (jp == k) & live_jump
        out.append(Increments(times, dMc[k], qv[k], comp[k], js[m], jt[m], jsize[m]))
    return out


def martingale_increments(spec: ModelSpec, bundle, grid=None, quadrature_seed: int = 0) -> Increments:
    """Increments of ``M`` along a recorded path.

    Parameters
    ----------
    spec : ModelSpec
    bundle : PathBundle
        Recorded path with its driver.  Steps at or after the stopping
        index contribute nothing.
    grid : TimeGrid, optional
        Defaults to the bundle's grid.
    quadrature_seed : int
        Seed of the mark quadrature for non-discrete jump measures.

    Raises
    ------
    JumpBelowFloor
        If a jump has ``1 + dM <= 0``.
    """
    if grid is not None and grid.n != bundle.grid.n:
        raise ValueError("grid does not match the bundle")
    return martingale_increments_batch(spec, [bundle], quadrature_seed)[0]


def exponential_closed_form(inc: Increments) -> ExponentialPath:
    """Closed-form exponential accumulated in the log domain."""
    _check_floor(inc.jump_sizes, inc.jump_times)
    step = inc.dMc - 0.5 * inc.qv - inc.compensator + inc.jump_log_factors()
    log_z = np.concatenate([[0.0], np.cumsum(step)])
    qv = np.concatenate([[0.0], np.cumsum(inc.qv)])
    return ExponentialPath(inc.times, log_z, qv, inc.jump_times, inc.jump_sizes)


def exponential_from_sde(inc: Increments) -> ExponentialPath:
    """Step-by-step recursion ``z_{i+1} = z_i (1 + dM_i)``.

    A step that would make ``z`` negative sets it to zero, where it stays;
    the number of such steps is returned in ``clipped``.
    """
    _check_floor(inc.jump_sizes, inc.jump_times)
    jump_factor = np.ones(inc.n)
    np.multiply.at(jump_factor, inc.jump_steps, 1.0 + inc.jump_sizes)
    z = np.empty(inc.n + 1)
    z[0] = 1.0
    clipped = 0
    cur = 1.0
    for i in range(inc.n):
        f = 1.0 + inc.dMc[i]
        if f < 0.0:
            f = 0.0
            if cur > 0.0:
                clipped += 1
        cur = cur * f * np.exp(-inc.compensator[i]) * jump_factor[i]
        z[i + 1] = cur
    with np.errstate(divide="ignore"):
        log_z = np.log(z)
    qv = np.concatenate([[0.0], np.cumsum(inc.qv)])
    return ExponentialPath(inc.times, log_z, qv, inc.jump_times, inc.jump_sizes, clipped)


def supermartingale_scan(ensemble, checkpoints=None) -> list[MCEstimate]:
    """Mean of ``z_t`` with standard error at each checkpoint.

    Parameters
    ----------
    ensemble : EnsembleSummary or array_like
        A summary (its checkpoint records are used) or an array of ``z``
        values with shape ``(n_paths, n_checkpoints)``.
    checkpoints : sequence of int, optional
        Subset of checkpoint positions to report; all by default.
    """
    if hasattr(ensemble, "arrays"):
        logs = ensemble.arrays["cp_log_z"]
        seed, dt = ensemble.seed, ensemble.dt
    else:
        with np.errstate(divide="ignore"):
            logs = np.log(np.asarray(ensemble, dtype=float))
        if logs.ndim == 1:
            logs = logs[:, None]
        seed = dt = None
    if logs.shape[0] < 100:
        raise ValueError("supermartingale_scan needs at least 100 paths")
    cols = range(logs.shape[1]) if checkpoints is None else checkpoints
    return [MCEstimate.from_log_values(logs[:, c], seed=seed, dt=dt) for c in cols]
