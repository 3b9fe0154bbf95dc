"""Vectorised path integrator shared by every Monte Carlo routine.

Paths are organised in *lanes* of :data:`LANE` consecutive paths.  Each
lane owns its own random streams, derived from ``(seed, namespace, lane)``
through :class:`numpy.random.SeedSequence`.  A block is a run of whole
lanes integrated together, so the numbers attached to a path do not depend
on how lanes are grouped into blocks or on how many workers process them.

The integrator keeps only running quantities (current state, log of the
exponential, running suprema, stopping records, checkpoint values).  Full
paths are stored on request.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from .errors import JumpBelowFloor, NonFiniteState, TiltUnbounded
from .model import ModelSpec, PathHistoryView, Volterra

LANE = 1024
"""Number of paths sharing one set of random streams."""

BLOCK_PATHS = 64 * LANE
_CHUNK = 64
_QUAD_KEY = 1 << 20
_MEMORY_BUDGET = 1 << 26  # bytes of stored history per block
_EXP_CLIP = 200.0


# ---------------------------------------------------------------------------
# random streams


def _generator(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


class Streams:
    """Independent generators for one lane.

    Parameters
    ----------
    seed : int
        Master seed.
    lane : int
        Lane index.
    namespace : int
        Separates independent ensembles driven by the same seed.
    """

    def __init__(self, seed: int, lane: int = 0, namespace: int = 0):
        self.seed = int(seed)
        self.lane = int(lane)
        self.namespace = int(namespace)
        self.brownian = _generator(seed, namespace, lane, 0)
        self.jumps = _generator(seed, namespace, lane, 1)
        self.barrier = _generator(seed, namespace, lane, 2)
        self.thinning = _generator(seed, namespace, lane, 3)


def quadrature_nodes(levy, seed: int, q: int = 64):
    """Mark quadrature shared by all steps and by both measures of a run."""
    if levy is None:
        return np.zeros(0), np.zeros(0)
    return levy.nodes(_generator(seed, _QUAD_KEY), q)


def lane_layout(n_paths: int):
    """``(lane, start, size)`` triples covering ``n_paths`` paths."""
    out = []
    start = 0
    lane = 0
    while start < n_paths:
        size = min(LANE, n_paths - start)
        out.append((lane, start, size))
        start += size
        lane += 1
    return out


def draw_jumps(rng, levy, horizon, size, rate_factor=1.0):
    """Compound-Poisson events for ``size`` paths.

    Returns path indices, times in ``(0, horizon]`` and marks, ordered by
    path and then by time.
    """
    counts = rng.poisson(levy.total_mass * rate_factor * horizon, size=size)
    total = int(counts.sum())
    times = horizon - rng.uniform(0.0, horizon, size=total)
    marks = levy.sample(rng, total)
    path = np.repeat(np.arange(size), counts)
    order = np.lexsort((times, path))
    return path[order], times[order], marks[order]


class _Schedule:
    """Jump events sorted by step, with per-step slices."""

    def __init__(self, grid, path, times, marks, accept_u=None):
        step = np.clip(np.searchsorted(grid.times, times, side="left") - 1, 0, grid.n - 1)
        order = np.argsort(step, kind="stable")
        self.step = step[order]
        self.path = path[order]
        self.times = times[order]
        self.marks = marks[order]
        self.accept_u = None if accept_u is None else accept_u[order]
        self.bounds = np.searchsorted(self.step, np.arange(grid.n + 1), side="left")

    def at(self, i):
        lo, hi = self.bounds[i], self.bounds[i + 1]
        if lo == hi:
            return None
        sl = slice(lo, hi)
        u = None if self.accept_u is None else self.accept_u[sl]
        return self.path[sl], self.times[sl], self.marks[sl], u


class LaneNoise:
    """Noise for a block built from whole lanes."""

    def __init__(self, seed, namespace, lanes, grid, d_brownian, levy=None, barrier=False,
                 envelope=None, thinning=False):
        self.grid = grid
        self.m = int(d_brownian)
        self.streams = [Streams(seed, lane, namespace) for lane, _, _ in lanes]
        self.sizes = [size for _, _, size in lanes]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.B = int(self.offsets[-1])
        self.barrier = barrier
        self._sq = np.sqrt(grid.dt)
        self._buf_start = -1
        self._normals = None
        self._uniforms = None
        self.schedule = None
        self.thinning = thinning
        if levy is not None and levy.total_mass > 0 and not thinning:
            factor = 1.0 if envelope is None else float(envelope)
            parts = []
            for st, off, size in zip(self.streams, self.offsets, self.sizes):
                p, t, z = draw_jumps(st.jumps, levy, grid.horizon, size, factor)
                u = st.thinning.random(p.size) if envelope is not None else None
                parts.append((p + off, t, z, u))
            path = np.concatenate([q[0] for q in parts])
            times = np.concatenate([q[1] for q in parts])
            marks = np.concatenate([q[2] for q in parts])
            acc = None if envelope is None else np.concatenate([q[3] for q in parts])
            self.schedule = _Schedule(grid, path, times, marks, acc)

    def _refill(self, i):
        m = min(_CHUNK, self.grid.n - i)
        if self._normals is None or self._normals.shape[0] != m:
            self._normals = np.empty((m, self.B, self.m))
            if self.barrier:
                self._uniforms = np.empty((m, self.B))
        # step-major layout so each step reads contiguous memory
        np.concatenate([st.brownian.standard_normal((m, size, self.m))
                        for st, size in zip(self.streams, self.sizes)], axis=1,
                       out=self._normals)
        self._normals *= self._sq
        if self.barrier:
            np.concatenate([st.barrier.random((m, size))
                            for st, size in zip(self.streams, self.sizes)], axis=1,
                           out=self._uniforms)
        self._buf_start = i

    def normals(self, i):
        if self._buf_start < 0 or i - self._buf_start >= self._normals.shape[0]:
            self._refill(i)
        return self._normals[i - self._buf_start]

    def uniforms(self, i):
        self.normals(i)
        return self._uniforms[i - self._buf_start]

    def jumps(self, i):
        return None if self.schedule is None else self.schedule.at(i)

    def thin(self, rates, levy):
        """Per-step proposals for state-dependent thinning, lane by lane."""
        paths, marks, us = [], [], []
        for st, off, size in zip(self.streams, self.offsets, self.sizes):
            counts = st.thinning.poisson(rates[off:off + size])
            total = int(counts.sum())
            if total == 0:
                continue
            paths.append(np.repeat(np.arange(off, off + size), counts))
            marks.append(levy.sample(st.thinning, total))
            us.append(st.thinning.random(total))
        if not paths:
            return None
        return np.concatenate(paths), np.concatenate(marks), np.concatenate(us)


class DriverNoise:
    """Noise read from explicit driver paths (one per batch row)."""

    def __init__(self, drivers, grid):
        self.grid = grid
        self.B = len(drivers)
        self.barrier = False
        self.thinning = False
        self.dB = np.stack([np.asarray(dr.dB, dtype=float) for dr in drivers])
        path = np.concatenate([np.full(len(dr.jump_times), k) for k, dr in enumerate(drivers)]
                              + [np.zeros(0, dtype=int)]).astype(int)
        times = np.concatenate([np.asarray(dr.jump_times, float) for dr in drivers]
                               + [np.zeros(0)])
        marks = np.concatenate([np.asarray(dr.jump_marks, float) for dr in drivers]
                               + [np.zeros(0)])
        self.schedule = _Schedule(grid, path, times, marks) if path.size else None

    def normals(self, i):
        return self.dB[:, i]

    def jumps(self, i):
        return None if self.schedule is None else self.schedule.at(i)


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class EngineConfig:
    """What to track while integrating.

    Parameters
    ----------
    levels : sequence of float
        Stopping levels, sorted ascending.
    variant : {"markov", "pathdep", "state"}
        Statistic compared with each level: ``z`` or ``|X|^2``, ``z`` or
        ``sup |X|^2``, or ``|X|^2`` alone.
    halt : bool
        Freeze a path once the highest level fires.
    bridge : bool
        Detect crossings of the ``z``-barrier inside a step with the
        Brownian-bridge crossing probability of ``log z``.
    checkpoints : sequence of int
        Grid indices at which running values are recorded.
    record : bool
        Store full paths and drivers.
    tilt : object, optional
        Simulate under the tilted measure (see :mod:`stochexp.measure_change`).
    track_qv : bool
        Accumulate realised and predictable quadratic variations.
    track_moments : bool
        Record stopped ``|X|^2`` per level at checkpoints.
    """

    levels: tuple = ()
    variant: str = "markov"
    halt: bool = True
    bridge: bool = True
    checkpoints: tuple = ()
    record: bool = False
    tilt: object = None
    track_qv: bool = False
    track_moments: bool = False

    def __post_init__(self):
        lv = np.asarray(sorted(float(v) for v in self.levels), dtype=float)
        self.levels = tuple(lv)
        if self.variant not in ("markov", "pathdep", "state"):
            raise ValueError(f"unknown stopping variant {self.variant!r}")
        self.checkpoints = tuple(int(c) for c in self.checkpoints)


@dataclass
class BlockResult:
    arrays: dict = field(default_factory=dict)
    jumps: list | None = None


def _diffuse(b, dB):
    if b.shape[2] == 1:
        return b[:, :, 0] * dB[:, :1]
    if b.shape[1] == 1:
        return np.sum(b[:, 0, :] * dB, axis=1, keepdims=True)
    return np.einsum("bij,bj->bi", b, dB)


def _block_lanes(n_paths, spec, grid, cfg):
    """Group lanes into blocks whose stored history fits the memory budget."""
    per_path = 0
    if spec.needs_history or (isinstance(spec.dependence, Volterra)
                              and spec.dependence.decay is None):
        per_path += (grid.n + 1) * spec.dim * 8
    if cfg.record:
        per_path += (grid.n + 1) * (spec.dim + 2 + spec.d_brownian) * 8
    if per_path:
        lanes_per_block = max(1, _MEMORY_BUDGET // (per_path * LANE))
    else:
        lanes_per_block = BLOCK_PATHS // LANE
    lanes = lane_layout(n_paths)
    lanes_per_block = min(lanes_per_block, BLOCK_PATHS // LANE)
    return [lanes[k:k + lanes_per_block] for k in range(0, len(lanes), lanes_per_block)]


# ---------------------------------------------------------------------------
# the integrator


def integrate_block(spec: ModelSpec, grid, noise, cfg: EngineConfig, nodes,
                    path_offset: int = 0) -> BlockResult:
    """Integrate one block of paths and return per-path summaries."""
    B, d, m, n, dt = noise.B, spec.dim, spec.d_brownian, grid.n, grid.dt
    times = grid.times
    tilt = cfg.tilt
    levy = spec.levy if spec.has_jumps else None
    marks_q, w_q = nodes

    X = np.repeat(spec.x0[None, :], B, axis=0)
    logz = np.zeros(B)
    qv = np.zeros(B)
    mc = np.zeros(B)
    sup_sq = np.sum(X**2, axis=1)
    sup_x = X[:, 0].copy()
    active = np.ones(B, dtype=bool)
    absorbed = np.zeros(B, dtype=bool)
    jump_count = np.zeros(B, dtype=np.int64)

    hist = None
    if spec.needs_history:
        hist = np.empty((B, n + 1, d))
        hist[:, 0] = X
    vol = None
    vol_dB = None
    if isinstance(spec.dependence, Volterra):
        vol = np.zeros(B)
        if spec.dependence.decay is None:
            vol_dB = np.empty((B, n))
        else:
            vol_decay = np.exp(-spec.dependence.decay * dt)

    levels = np.asarray(cfg.levels, dtype=float)
    L = levels.size
    log_levels = np.log(levels) if L else levels
    use_z = cfg.variant != "state"
    bridge = bool(cfg.bridge and L and use_z)
    stop_step = np.full((L, B), -1, dtype=np.int64)
    lz_stop = np.zeros((L, B))
    x_stop = np.zeros((L, B, d))
    supx_stop = np.zeros((L, B))
    qv_stop = np.zeros((L, B))
    nfired = np.zeros(B, dtype=np.intp)
    lvl_next = np.append(levels, np.inf)
    log_next = np.append(log_levels, np.inf)

    cps = {c: k for k, c in enumerate(cfg.checkpoints)}
    K = len(cps)
    cp_lz = np.zeros((B, K))
    cp_mc = np.zeros((B, K))
    cp_x2 = np.zeros((L, B, K)) if cfg.track_moments else None

    if cfg.record:
        rec_X = np.empty((B, n + 1, d))
        rec_X[:, 0] = X
        rec_lz = np.zeros((B, n + 1))
        rec_qv = np.zeros((B, n + 1))
        rec_dB = np.zeros((B, n, m))
        rec_jumps = []

    if cfg.track_qv:
        qc_real = np.zeros(B)
        qc_pred = np.zeros(B)
        qj_real = np.zeros(B)
        qj_pred = np.zeros(B)
        g_count = np.zeros(B)
        g_pred = np.zeros(B)

    q_const = None
    if tilt is not None and levy is not None:
        q_const = tilt.envelope

    def freeze_fill(i_next):
        # copy frozen values into the remaining checkpoint and record slots
        for c, k in cps.items():
            if c >= i_next:
                cp_lz[:, k] = logz
                cp_mc[:, k] = mc
                if cp_x2 is not None:
                    x2 = np.sum(X**2, axis=1)
                    for lv in range(L):
                        stopped = stop_step[lv] >= 0
                        cp_x2[lv, :, k] = np.where(stopped, np.sum(x_stop[lv] ** 2, axis=1), x2)
        if cfg.record:
            rec_X[:, i_next:] = X[:, None, :]
            rec_lz[:, i_next:] = logz[:, None]
            rec_qv[:, i_next:] = qv[:, None]

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for i in range(n):
            t = times[i]
            view = PathHistoryView(t, X, sup_sq, times=times, states=hist, count=i + 1,
                                   volterra=vol, x_init=spec.x0)
            dW = noise.normals(i)
            sig = spec.loading(t, view)
            dB = dW + sig * dt if tilt is not None else dW

            if spec.transition is not None:
                Xn = np.array(spec.transition(t, dt, view, dB), dtype=float).reshape(B, d)
            else:
                Xn = X + spec.drift(t, view) * dt + _diffuse(spec.diffusion(t, view), dB)
            if levy is not None:
                ih, ip = spec.mark_integrals(t, view, marks_q, w_q)
                Xn = Xn - ih * dt
            else:
                ip = 0.0

            if m == 1:
                s2 = sig[:, 0] ** 2
                dm = sig[:, 0] * dB[:, 0]
            else:
                s2 = np.sum(sig**2, axis=1)
                dm = np.sum(sig * dB, axis=1)
            lz_end = logz + dm - 0.5 * s2 * dt

            step_active = active
            halt_now = None
            if bridge:
                U = noise.uniforms(i)
                var = s2 * dt
                pos = var > 0
                b_next = log_next[nfired]
                expo = 2.0 * (b_next - logz) * (b_next - lz_end) / np.where(pos, var, 1.0)
                cand = active & ((lz_end >= b_next) | (pos & (expo < 60.0)))
                if cand.any():
                    idx = np.flatnonzero(cand)
                    for lv in range(L):
                        sub = idx[nfired[idx] == lv]
                        if sub.size == 0:
                            continue
                        b_l = log_levels[lv]
                        e = 2.0 * (b_l - logz[sub]) * (b_l - lz_end[sub]) / np.where(
                            pos[sub], var[sub], 1.0)
                        hit = (lz_end[sub] >= b_l) | (pos[sub] & (U[sub] < np.exp(-e)))
                        hit = sub[hit]
                        if hit.size == 0:
                            continue
                        stop_step[lv, hit] = i + 1
                        lz_stop[lv, hit] = b_l
                        x_stop[lv, hit] = X[hit]
                        supx_stop[lv, hit] = sup_x[hit]
                        qv_stop[lv, hit] = qv[hit]
                        nfired[hit] = lv + 1
                        idx = np.union1d(idx, hit)
                    if cfg.halt:
                        top = idx[nfired[idx] == L]
                        top = top[stop_step[L - 1, top] == i + 1]
                        if top.size:
                            halt_now = np.zeros(B, dtype=bool)
                            halt_now[top] = True
                            step_active = active & ~halt_now

            logz_new = lz_end - ip * dt

            # jumps, evaluated on the pre-step history
            ev = None
            if levy is not None:
                if tilt is None:
                    ev = noise.jumps(i)
                    if ev is not None:
                        jp, jt, jz, _ = ev
                        keep = step_active[jp]
                        ev = (jp[keep], jt[keep], jz[keep])
                elif q_const is not None:
                    ev = noise.jumps(i)
                    if ev is not None:
                        jp, jt, jz, ju = ev
                        keep = step_active[jp]
                        jp, jt, jz, ju = jp[keep], jt[keep], jz[keep], ju[keep]
                        if jp.size:
                            ratio = (1.0 + spec.jump_exponent(t, view.take(jp), jz[:, None])[:, 0]) / q_const
                            if np.any(ratio > 1.0 + 1e-12):
                                k = int(np.argmax(ratio))
                                raise TiltUnbounded(
                                    f"1+phi={ratio[k] * q_const:.6g} exceeds envelope {q_const:.6g} "
                                    f"at x={X[jp[k]]}, z={jz[k]:.6g}")
                            acc = ju < ratio
                            ev = (jp[acc], jt[acc], jz[acc])
                        else:
                            ev = None
                else:
                    env = tilt.envelope_at(t, view)
                    rates = np.where(step_active, levy.total_mass * env * dt, 0.0)
                    prop = noise.thin(rates, levy)
                    if prop is not None:
                        jp, jz, ju = prop
                        ratio = (1.0 + spec.jump_exponent(t, view.take(jp), jz[:, None])[:, 0]) / env[jp]
                        if np.any(ratio > 1.0 + 1e-12):
                            k = int(np.argmax(ratio))
                            raise TiltUnbounded(
                                f"1+phi exceeds the state envelope at x={X[jp[k]]}, z={jz[k]:.6g}")
                        acc = ju < ratio
                        ev = (jp[acc], np.full(int(acc.sum()), times[i + 1]), jz[acc])
                if ev is not None and ev[0].size:
                    jp, jt, jz = ev
                    sub = view.take(jp)
                    hj = spec.jump_state(t, sub, jz[:, None])[:, 0, :]
                    ph = spec.jump_exponent(t, sub, jz[:, None])[:, 0]
                    if np.any(ph <= -1.0):
                        k = int(np.argmax(ph <= -1.0))
                        raise JumpBelowFloor(
                            f"1 + dM = {1 + ph[k]:.6g} <= 0 at t={jt[k]:.6g}, x={X[jp[k]]}, z={jz[k]:.6g}")
                    Xn = np.array(Xn, dtype=float)
                    np.add.at(Xn, jp, hj)
                    np.add.at(logz_new, jp, np.log1p(ph))
                    np.add.at(jump_count, jp, 1)
                    if cfg.track_qv:
                        np.add.at(qj_real, jp, np.sum(hj**2, axis=1))
                        np.add.at(g_count, jp, (jz > 0).astype(float))
                    if cfg.record:
                        rec_jumps.append((jp + 0, jt + 0.0, jz + 0.0, ph + 0.0))
                else:
                    ev = None

            if cfg.track_qv:
                bq = spec.diffusion(t, view)
                qc_real += np.where(step_active, np.sum(_diffuse(bq, dW) ** 2, axis=1), 0.0)
                qc_pred += np.where(step_active, np.sum(bq**2, axis=(1, 2)) * dt, 0.0)
                if levy is not None:
                    Z = np.broadcast_to(marks_q, (B, marks_q.size))
                    h2 = np.sum(spec.jump_state(t, view, Z) ** 2, axis=2)
                    fac = 1.0 + spec.jump_exponent(t, view, Z) if tilt is not None else 1.0
                    qj_pred += np.where(step_active, (h2 * fac) @ w_q * dt, 0.0)
                    g = (marks_q > 0).astype(float) * w_q
                    g_pred += np.where(step_active, np.broadcast_to(fac, Z.shape) @ g * dt, 0.0)

            if spec.absorbing_boundary is not None:
                low = step_active & (Xn[:, 0] <= spec.absorbing_boundary)
                if low.any():
                    Xn = np.array(Xn, dtype=float)
                    Xn[low, 0] = spec.absorbing_boundary
                    absorbed |= low

            # freeze inactive paths
            if halt_now is not None or not active.all():
                Xn = np.where(step_active[:, None], Xn, X)
                logz_new = np.where(step_active, logz_new, logz)
                if halt_now is not None:
                    logz_new[halt_now] = log_levels[L - 1]
                qv = qv + np.where(step_active, s2 * dt, 0.0)
                mc = mc + np.where(step_active, dm, 0.0)
            else:
                qv = qv + s2 * dt
                mc = mc + dm

            bad = step_active & ~(np.all(np.isfinite(Xn), axis=1)
                                  & ~np.isnan(logz_new) & (logz_new < np.inf))
            if bad.any():
                raise NonFiniteState(path_offset + int(np.argmax(bad)), i + 1)

            X = Xn
            logz = logz_new
            x2 = np.sum(X**2, axis=1)
            np.maximum(sup_sq, x2, out=sup_sq)
            np.maximum(sup_x, X[:, 0], out=sup_x)
            if hist is not None:
                hist[:, i + 1] = X
            if vol is not None:
                if vol_dB is None:
                    vol = vol_decay * (vol + dB[:, 0])
                else:
                    vol_dB[:, i] = dB[:, 0]
                    vol = vol_dB[:, : i + 1] @ np.asarray(
                        spec.dependence.kernel(times[i + 1], times[: i + 1]), dtype=float)

            if L:
                stat = sup_sq if cfg.variant == "pathdep" else x2
                fire = step_active & (stat >= lvl_next[nfired])
                if use_z:
                    fire |= step_active & (logz >= log_next[nfired])
                if fire.any():
                    idx = np.flatnonzero(fire)
                    for lv in range(L):
                        sub = idx[nfired[idx] == lv]
                        if sub.size == 0:
                            continue
                        ok = stat[sub] >= levels[lv]
                        if use_z:
                            ok |= logz[sub] >= log_levels[lv]
                        sub = sub[ok]
                        if sub.size == 0:
                            continue
                        stop_step[lv, sub] = i + 1
                        lz_stop[lv, sub] = logz[sub]
                        x_stop[lv, sub] = X[sub]
                        supx_stop[lv, sub] = sup_x[sub]
                        qv_stop[lv, sub] = qv[sub]
                        nfired[sub] = lv + 1
                        if cfg.halt and lv == L - 1:
                            step_active = step_active.copy()
                            step_active[sub] = False

            k = cps.get(i + 1)
            if k is not None:
                cp_lz[:, k] = logz
                cp_mc[:, k] = mc
                if cp_x2 is not None:
                    for lv in range(L):
                        stopped = stop_step[lv] >= 0
                        cp_x2[lv, :, k] = np.where(stopped, np.sum(x_stop[lv] ** 2, axis=1), x2)

            if cfg.record:
                rec_X[:, i + 1] = X
                rec_lz[:, i + 1] = logz
                rec_qv[:, i + 1] = qv
                rec_dB[:, i] = dB

            active = step_active & ~absorbed
            if not active.any():
                freeze_fill(i + 2)
                break

    out = {
        "log_z": logz,
        "x": X,
        "sup_x": sup_x,
        "sup_sq": sup_sq,
        "qv": qv,
        "mc": mc,
        "absorbed": absorbed,
        "jump_count": jump_count,
        "stop_step": stop_step,
        "lz_stop": lz_stop,
        "x_stop": x_stop,
        "supx_stop": supx_stop,
        "qv_stop": qv_stop,
        "cp_log_z": cp_lz,
        "cp_mc": cp_mc,
    }
    if cp_x2 is not None:
        out["cp_x2"] = cp_x2
    if cfg.track_qv:
        out.update(qc_real=qc_real, qc_pred=qc_pred, qj_real=qj_real, qj_pred=qj_pred,
                   g_count=g_count, g_pred=g_pred)
    res = BlockResult(out)
    if cfg.record:
        out.update(rec_X=rec_X, rec_log_z=rec_lz, rec_qv=rec_qv, rec_dB=rec_dB)
        res.jumps = rec_jumps
    return res


# ---------------------------------------------------------------------------
# block orchestration

_JOB = None


def _run_job(k):
    spec, grid, cfg, seed, namespace, blocks, nodes = _JOB
    return _run_one(spec, grid, cfg, seed, namespace, blocks[k], nodes)


def _run_one(spec, grid, cfg, seed, namespace, lanes, nodes):
    tilt = cfg.tilt
    levy = spec.levy if spec.has_jumps else None
    envelope = None
    thinning = False
    if tilt is not None and levy is not None:
        envelope = tilt.envelope
        thinning = envelope is None
    noise = LaneNoise(seed, namespace, lanes, grid, spec.d_brownian, levy,
                      barrier=bool(cfg.bridge and cfg.levels and cfg.variant != "state"),
                      envelope=envelope, thinning=thinning)
    return integrate_block(spec, grid, noise, cfg, nodes, path_offset=lanes[0][1])


def iter_blocks(spec, grid, cfg, n_paths, seed, namespace=0, workers=1):
    """Yield ``(lanes, BlockResult)`` for every block, in path order."""
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    blocks = _block_lanes(int(n_paths), spec, grid, cfg)
    nodes = quadrature_nodes(spec.levy, seed)
    job = (spec, grid, cfg, seed, namespace, blocks, nodes)
    workers = int(workers or 1)
    if workers <= 1 or len(blocks) == 1 or "fork" not in mp.get_all_start_methods():
        for lanes in blocks:
            yield lanes, _run_one(spec, grid, cfg, seed, namespace, lanes, nodes)
        return
    global _JOB
    _JOB = job
    try:
        ctx = mp.get_context("fork")
        with ctx.Pool(min(workers, len(blocks))) as pool:
            for k, res in enumerate(pool.imap(_run_job, range(len(blocks)), chunksize=1)):
                yield blocks[k], res
    finally:
        _JOB = None


def run_engine(spec, grid, cfg, n_paths, seed, namespace=0, workers=1) -> dict:
    """Integrate ``n_paths`` paths and concatenate the per-path summaries."""
    parts = [res.arrays for _, res in iter_blocks(spec, grid, cfg, n_paths, seed,
                                                   namespace, workers)]
    out = {}
    for key in parts[0]:
        axis = 1 if key in ("stop_step", "lz_stop", "x_stop", "supx_stop", "qv_stop",
                            "cp_x2") else 0
        out[key] = np.concatenate([p[key] for p in parts], axis=axis)
    return out
