"""Driver noise, path integration, localisation and ensembles.

The scheme is explicit and left-point: coefficients on ``[t_i, t_{i+1})``
are evaluated on the history up to and including ``X_{t_i}``.  Jumps in a
step are added after the diffusion update, using the same pre-step history
as their left limit, and the compensator ``int h K`` is subtracted as a
drift.  The log of the stochastic exponential is advanced alongside.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import engine
from .engine import EngineConfig, Streams
from .model import ModelSpec

__all__ = [
    "DriverPath",
    "EnsembleSummary",
    "PathBundle",
    "StoppingRule",
    "TimeGrid",
    "apply_stopping",
    "default_checkpoints",
    "integrate_path",
    "run_ensemble",
    "simulate_driver",
    "simulate_ensemble",
    "write_paths_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_n = T``.

    ``dt`` is adjusted to ``T / n`` where ``n = round(T / dt)``; the
    requested step must divide the horizon to within 1e-9 relative.
    """

    horizon: float
    dt: float

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0):
            raise ValueError("horizon and dt must be positive")
        n = int(round(self.horizon / self.dt))
        if n < 1 or abs(n * self.dt - self.horizon) > 1e-9 * self.horizon:
            raise ValueError(f"dt={self.dt} does not divide horizon={self.horizon}")
        object.__setattr__(self, "dt", self.horizon / n)

    @property
    def n(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def times(self) -> np.ndarray:
        t = np.linspace(0.0, self.horizon, self.n + 1)
        t.setflags(write=False)
        return t


def default_checkpoints(grid: TimeGrid, count: int = 10) -> tuple[int, ...]:
    """``count`` equally spaced grid indices ending at ``n``."""
    idx = np.unique(np.round(np.linspace(0, grid.n, count + 1)[1:]).astype(int))
    return tuple(int(i) for i in idx if i > 0)


@dataclass(eq=False)
class DriverPath:
    """Brownian increments ``dB`` of shape ``(n, d_brownian)`` and jump events."""

    dB: np.ndarray
    jump_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    jump_marks: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_jumps(self) -> int:
        return int(len(self.jump_times))


@dataclass(frozen=True)
class StoppingRule:
    """Localisation ``tau = inf{t : z_t v X_t^2 >= level}``.

    ``variant="pathdep"`` replaces ``X_t^2`` by ``sup_{s<=t} X_s^2``.
    """

    level: float
    variant: str = "markov"

    def __post_init__(self):
        if self.variant not in ("markov", "pathdep"):
            raise ValueError("variant must be 'markov' or 'pathdep'")
        if not self.level > 1:
            raise ValueError("level must exceed 1")

    def check(self, x0) -> None:
        if self.level <= max(1.0, float(np.sum(np.asarray(x0, float) ** 2))):
            raise ValueError("stopping level must exceed max(1, |x0|^2)")


@dataclass(eq=False)
class PathBundle:
    """One simulated path with its exponential and stopping record."""

    grid: TimeGrid
    X: np.ndarray
    driver: DriverPath
    log_z: np.ndarray | None = None
    qv: np.ndarray | None = None
    stop_index: int | None = None
    rule: StoppingRule | None = None
    jump_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    jump_sizes: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def stopped(self) -> bool:
        return self.stop_index is not None

    @property
    def z(self) -> np.ndarray | None:
        return None if self.log_z is None else np.exp(self.log_z)

    def to_csv(self, path) -> None:
        write_paths_csv(path, [self])


def simulate_driver(grid: TimeGrid, levy, d_brownian: int, rng_stream: Streams) -> DriverPath:
    """Draw the driving noise of one path.

    Uses the Brownian and jump generators of ``rng_stream``; the draws
    match path 0 of an ensemble of size one with the same seed.
    """
    dB = rng_stream.brownian.standard_normal((grid.n, int(d_brownian))) * np.sqrt(grid.dt)
    if levy is None or levy.total_mass == 0:
        return DriverPath(dB)
    _, times, marks = engine.draw_jumps(rng_stream.jumps, levy, grid.horizon, 1)
    return DriverPath(dB, times, marks)


def _bundles_from_block(spec, grid, res, rule, level_idx=0):
    a = res.arrays
    B = a["rec_X"].shape[0]
    dB = a["rec_dB"]
    jumps = res.jumps or []
    if jumps:
        jp = np.concatenate([j[0] for j in jumps])
        jt = np.concatenate([j[1] for j in jumps])
        jz = np.concatenate([j[2] for j in jumps])
        jphi = np.concatenate([j[3] for j in jumps])
        steps = np.clip(np.searchsorted(grid.times, jt, side="left") - 1, 0, grid.n - 1)
        order = np.lexsort((jt, jp))
        jp, jt, jz, jphi, steps = jp[order], jt[order], jz[order], jphi[order], steps[order]
        bounds = np.searchsorted(jp, np.arange(B + 1), side="left")
    out = []
    for b in range(B):
        if jumps:
            sl = slice(bounds[b], bounds[b + 1])
            driver = DriverPath(dB[b], jt[sl], jz[sl])
            js, jsz = steps[sl], jphi[sl]
        else:
            driver = DriverPath(dB[b])
            js, jsz = np.zeros(0, dtype=int), np.zeros(0)
        stop = None
        if rule is not None and a["stop_step"].shape[0]:
            s = int(a["stop_step"][level_idx, b])
            stop = s if s >= 0 else None
        out.append(PathBundle(grid, a["rec_X"][b], driver, a["rec_log_z"][b], a["rec_qv"][b],
                              stop, rule, js, jsz))
    return out


def integrate_path(spec: ModelSpec, driver: DriverPath, grid: TimeGrid,
                   rule: StoppingRule | None = None, quadrature_seed: int = 0) -> PathBundle:
    """Integrate one path from explicit driver noise.

    Parameters
    ----------
    spec : ModelSpec
    driver : DriverPath
        Must have ``grid.n`` rows and ``spec.d_brownian`` columns.
    grid : TimeGrid
    rule : StoppingRule, optional
        Stop (and freeze) the path when the rule fires.
    quadrature_seed : int
        Seed of the mark quadrature used for the compensators when the
        jump measure is not discrete.  Stopping is checked on the grid.

    Raises
    ------
    NonFiniteState
        If the state overflows before a stopping rule fires.
    """
    dB = np.asarray(driver.dB)
    if dB.shape != (grid.n, spec.d_brownian):
        raise ValueError(f"driver increments have shape {dB.shape}, expected "
                         f"{(grid.n, spec.d_brownian)}")
    cfg = _rule_config(rule, record=True, bridge=False)
    noise = engine.DriverNoise([driver], grid)
    nodes = engine.quadrature_nodes(spec.levy, quadrature_seed)
    res = engine.integrate_block(spec, grid, noise, cfg, nodes)
    bundle = _bundles_from_block(spec, grid, res, rule)[0]
    bundle.driver = driver
    return bundle


def _rule_config(rule, **kw):
    if rule is None:
        return EngineConfig(**kw)
    return EngineConfig(levels=(rule.level,), variant=rule.variant, halt=True, **kw)


def apply_stopping(bundle: PathBundle, rule: StoppingRule) -> PathBundle:
    """Stop a recorded path at the first grid index where the rule fires.

    Entries after the stopping index are frozen at their stopped values.
    Returns a new bundle; the input is left unchanged.
    """
    X = np.array(bundle.X, dtype=float)
    lz = None if bundle.log_z is None else np.array(bundle.log_z, dtype=float)
    qv = None if bundle.qv is None else np.array(bundle.qv, dtype=float)
    x2 = np.sum(X**2, axis=1)
    stat = np.maximum.accumulate(x2) if rule.variant == "pathdep" else x2
    fire = stat >= rule.level
    if lz is not None:
        fire |= lz >= np.log(rule.level)
    idx = np.flatnonzero(fire)
    stop = int(idx[0]) if idx.size else None
    if stop is not None:
        X[stop + 1:] = X[stop]
        if lz is not None:
            lz[stop + 1:] = lz[stop]
        if qv is not None:
            qv[stop + 1:] = qv[stop]
    return replace(bundle, X=X, log_z=lz, qv=qv, stop_index=stop, rule=rule)


def simulate_ensemble(spec: ModelSpec, grid: TimeGrid, rule: StoppingRule | None = None,
                      n_paths: int = 1, master_seed: int = 0, workers: int = 1,
                      bridge: bool = True, namespace: int = 0) -> Iterator[PathBundle]:
    """Stream recorded paths of an ensemble in path order.

    Path ``i`` draws its noise from lane ``i // LANE`` of ``master_seed``;
    the output does not depend on ``workers``.

    Raises
    ------
    NonFiniteState
        With the global path index, if a path overflows.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if rule is not None:
        rule.check(spec.x0)
    cfg = _rule_config(rule, record=True, bridge=bridge)
    for _, res in engine.iter_blocks(spec, grid, cfg, n_paths, master_seed, namespace, workers):
        yield from _bundles_from_block(spec, grid, res, rule)


@dataclass(eq=False)
class EnsembleSummary:
    """Per-path terminal and stopped quantities of an ensemble.

    Arrays are indexed by path; level-indexed arrays have the level as
    their first axis.  ``log_z`` is the unstopped terminal value except on
    paths frozen by the top stopping level (``halted``) or by absorption.
    """

    spec_name: str
    seed: int
    n_paths: int
    dt: float
    horizon: float
    levels: tuple
    variant: str
    checkpoint_steps: tuple
    checkpoint_times: tuple
    measure: str
    arrays: dict
    bridge: bool = True

    def __getattr__(self, key):
        arrays = self.__dict__.get("arrays")
        if arrays is not None and key in arrays:
            return arrays[key]
        raise AttributeError(key)

    @property
    def halted(self) -> np.ndarray:
        if not self.levels:
            return np.zeros(self.n_paths, dtype=bool)
        return self.arrays["stop_step"][-1] >= 0

    def level_index(self, level: float) -> int:
        for k, lv in enumerate(self.levels):
            if np.isclose(lv, level):
                return k
        raise KeyError(f"level {level} was not simulated")

    def stopped(self, k: int) -> np.ndarray:
        return self.arrays["stop_step"][k] >= 0

    def log_z_stopped(self, k: int) -> np.ndarray:
        """``log z_{T ^ tau}`` for level index ``k``."""
        return np.where(self.stopped(k), self.arrays["lz_stop"][k], self.arrays["log_z"])

    def x_stopped(self, k: int) -> np.ndarray:
        return np.where(self.stopped(k)[:, None], self.arrays["x_stop"][k], self.arrays["x"])

    def sup_x_stopped(self, k: int) -> np.ndarray:
        return np.where(self.stopped(k), self.arrays["supx_stop"][k], self.arrays["sup_x"])


def run_ensemble(spec: ModelSpec, grid: TimeGrid, n_paths: int, seed: int, levels=(),
                 variant: str = "markov", checkpoints=None, workers: int = 1,
                 bridge: bool = True, tilt=None, namespace: int = 0, track_qv: bool = False,
                 track_moments: bool = False, halt: bool = True) -> EnsembleSummary:
    """Simulate an ensemble and keep per-path summaries only.

    Parameters
    ----------
    levels : sequence of float
        Stopping levels tracked simultaneously; paths are frozen at the top
        level when ``halt`` is true.
    checkpoints : sequence of int, optional
        Grid indices for running records; defaults to ten equally spaced.
    tilt : TiltedModel, optional
        Simulate under the tilted measure.
    namespace : int
        Seed namespace; the tilted side of a comparison uses its own.
    """
    levels = tuple(sorted(float(v) for v in levels))
    for lv in levels:
        if variant != "state" and lv <= max(1.0, float(np.sum(spec.x0**2))):
            raise ValueError("stopping levels must exceed max(1, |x0|^2)")
    if checkpoints is None:
        checkpoints = default_checkpoints(grid)
    cfg = EngineConfig(levels=levels, variant=variant, halt=halt, bridge=bridge,
                       checkpoints=tuple(checkpoints), tilt=tilt, track_qv=track_qv,
                       track_moments=track_moments)
    arrays = engine.run_engine(spec, grid, cfg, n_paths, seed, namespace, workers)
    times = grid.times
    return EnsembleSummary(
        spec_name=spec.name, seed=int(seed), n_paths=int(n_paths), dt=grid.dt,
        horizon=grid.horizon, levels=levels, variant=variant,
        checkpoint_steps=tuple(cfg.checkpoints),
        checkpoint_times=tuple(float(times[c]) for c in cfg.checkpoints),
        measure="Q" if tilt is not None else "P", arrays=arrays, bridge=bridge)


def write_paths_csv(path, bundles) -> int:
    """Write bundles as rows ``path, t, X..., z, stopped``; returns the row count."""
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = None
        for p, b in enumerate(bundles):
            d = b.X.shape[1]
            if header is None:
                xs = ["X"] if d == 1 else [f"X{j + 1}" for j in range(d)]
                header = ["path", "t", *xs, "z", "stopped"]
                w.writerow(header)
            z = b.z if b.log_z is not None else np.full(b.X.shape[0], np.nan)
            stop = b.stop_index if b.stop_index is not None else b.X.shape[0]
            for i, t in enumerate(b.grid.times):
                w.writerow([p, repr(float(t)), *(repr(float(v)) for v in b.X[i]),
                            repr(float(z[i])), int(i >= stop)])
                rows += 1
    return rows
