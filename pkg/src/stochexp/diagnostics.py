"""Monte Carlo estimates of ``E z_T`` and the martingale verdict.

A single ensemble tracks several localisation levels at once, so the
ladder quantities

* ``E z_{T ^ tau_n}`` (one for every model and level),
* ``E z_T 1{tau_n > T}`` (tends to ``E z_T`` as ``n`` grows),
* ``E[z_{T ^ tau_n} log z_{T ^ tau_n}]`` (bounded when ``z`` is uniformly
  integrable)

all come from the same paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditions import ConditionReport, Domain, benes_verdict
from .errors import NonFiniteState
from .estimates import MCEstimate
from .model import ModelSpec
from .simulate import EnsembleSummary, TimeGrid, run_ensemble

__all__ = [
    "DEFAULT_LEVELS",
    "LadderReport",
    "MCEstimate",
    "UIReport",
    "VerdictRecord",
    "estimate_ez",
    "localization_ladder",
    "martingale_verdict",
    "ui_diagnostic",
]

DEFAULT_LEVELS = (1e2, 1e3, 1e4, 1e5)


def _variant(spec, variant):
    return variant or ("pathdep" if spec.needs_history else "markov")


def estimate_ez(spec: ModelSpec, grid: TimeGrid, n_paths: int, seed: int,
                level: float | None = None, workers: int = 1, variant: str | None = None,
                bridge: bool = True) -> MCEstimate:
    """``E z_T``, or ``E z_{T ^ tau}`` when a localisation level is given.

    The mean is accumulated from ``log z`` rescaled by its maximum, and the
    result carries the heavy-tail fields of :class:`MCEstimate`.

    Raises
    ------
    NonFiniteState
        If an unlocalised path overflows.
    """
    levels = () if level is None else (float(level),)
    ens = run_ensemble(spec, grid, n_paths, seed, levels=levels, variant=_variant(spec, variant),
                       workers=workers, bridge=bridge, checkpoints=())
    lz = ens.log_z_stopped(0) if levels else ens.arrays["log_z"]
    return MCEstimate.from_log_values(lz, seed=seed, dt=grid.dt)


def ladder_ensemble(spec: ModelSpec, grid: TimeGrid, levels, n_paths: int, seed: int,
                    workers: int = 1, variant: str | None = None, bridge: bool = True,
                    checkpoints=None) -> EnsembleSummary:
    """Ensemble tracking all ``levels``; unstopped values are kept when possible.

    Paths run past every level so that ``E z_T`` is available.  If a path
    overflows, the run is repeated with paths halted at the top level and
    the summary's ``halted`` paths carry stopped values.
    """
    kw = dict(levels=tuple(levels), variant=_variant(spec, variant), workers=workers,
              bridge=bridge, checkpoints=checkpoints)
    try:
        ens = run_ensemble(spec, grid, n_paths, seed, halt=False, **kw)
        ens.arrays["unstopped"] = np.array(True)
    except NonFiniteState:
        ens = run_ensemble(spec, grid, n_paths, seed, halt=True, **kw)
        ens.arrays["unstopped"] = np.array(False)
    return ens


@dataclass
class LadderReport:
    """Localisation ladder.

    Attributes
    ----------
    levels : list of float
    stopped : list of MCEstimate
        ``E z_{T ^ tau_n}``.
    survivor : list of MCEstimate
        ``E z_T 1{tau_n > T}``.
    p_stop : list of float
        Fraction of paths stopped before ``T``.
    self_test : list of bool
        ``E z_{T ^ tau_n}`` within ``3 SE`` of one.
    verdict : str
        ``martingale-consistent`` or ``mass defect ~ <value>``.
    defect : float
        ``1 -`` survivor mean at the top level.
    """

    levels: list
    stopped: list
    survivor: list
    p_stop: list
    self_test: list
    verdict: str
    defect: float
    note: str = ""

    def to_dict(self) -> dict:
        return {"levels": list(self.levels),
                "stopped": [e.to_dict() for e in self.stopped],
                "survivor": [e.to_dict() for e in self.survivor],
                "p_stop": list(self.p_stop), "self_test": list(self.self_test),
                "verdict": self.verdict, "defect": self.defect, "note": self.note}


def _ladder_from(ens: EnsembleSummary, k: float = 3.0) -> LadderReport:
    stopped, survivor, p_stop, ok = [], [], [], []
    lz_T = ens.arrays["log_z"]
    for j in range(len(ens.levels)):
        est = MCEstimate.from_log_values(ens.log_z_stopped(j), seed=ens.seed, dt=ens.dt)
        stopped.append(est)
        alive = ~ens.stopped(j)
        surv = MCEstimate.from_log_values(np.where(alive, lz_T, -np.inf), seed=ens.seed,
                                          dt=ens.dt)
        survivor.append(surv)
        p_stop.append(float(np.mean(~alive)))
        ok.append(bool(est.contains(1.0, k)))
    top = survivor[-1]
    defect = 1.0 - top.mean
    if top.contains(1.0, k):
        verdict = "martingale-consistent"
    else:
        verdict = f"mass defect ~ {defect:.4f}"
    return LadderReport(list(ens.levels), stopped, survivor, p_stop, ok, verdict, float(defect))


def localization_ladder(spec: ModelSpec, grid: TimeGrid, levels=DEFAULT_LEVELS,
                        n_paths: int = 100_000, seed: int = 0, workers: int = 1,
                        variant: str | None = None, ensemble: EnsembleSummary | None = None
                        ) -> LadderReport:
    """Stopped means and survivor means along increasing localisation levels.

    Parameters
    ----------
    levels : sequence of float
        At least three increasing levels.
    ensemble : EnsembleSummary, optional
        Reuse an ensemble from :func:`ladder_ensemble`.
    """
    if len(levels) < 3:
        raise ValueError("a ladder needs at least three levels")
    ens = ensemble or ladder_ensemble(spec, grid, levels, n_paths, seed, workers, variant)
    rep = _ladder_from(ens)
    if not bool(ens.arrays.get("unstopped", True)):
        rep.note = "paths halted at the top level; only stopped identities are available"
    return rep


@dataclass
class UIReport:
    """``E[z log z]`` at ``T ^ tau_n`` per level with a trend flag."""

    levels: list
    estimates: list
    trend: str

    def to_dict(self) -> dict:
        return {"levels": list(self.levels), "estimates": [e.to_dict() for e in self.estimates],
                "trend": self.trend}


def _ui_from(ens: EnsembleSummary, k: float = 3.0) -> UIReport:
    ests = []
    for j in range(len(ens.levels)):
        lz = ens.log_z_stopped(j)
        with np.errstate(invalid="ignore", over="ignore"):
            v = np.where(np.isfinite(lz), np.exp(lz) * lz, 0.0)
        ests.append(MCEstimate.from_values(v, seed=ens.seed, dt=ens.dt, weights_tail=False))
    first, last = ests[0], ests[-1]
    rising = last.mean - first.mean > k * (first.se + last.se)
    steps = [b.mean - a.mean for a, b in zip(ests, ests[1:])]
    trend = "increasing" if rising and sum(s > 0 for s in steps) >= len(steps) - 1 else "bounded"
    return UIReport(list(ens.levels), ests, trend)


def ui_diagnostic(spec: ModelSpec, grid: TimeGrid, levels=DEFAULT_LEVELS,
                  n_paths: int = 100_000, seed: int = 0, workers: int = 1,
                  variant: str | None = None, ensemble: EnsembleSummary | None = None
                  ) -> UIReport:
    """Uniform-integrability statistic ``E[z log z]`` at each localisation level.

    ``trend`` is ``increasing`` when the top-level value exceeds the
    bottom-level value by more than ``3 (SE_1 + SE_2)`` and the sequence
    rises at all but at most one step; ``bounded`` otherwise.
    """
    ens = ensemble or ladder_ensemble(spec, grid, levels, n_paths, seed, workers, variant)
    return _ui_from(ens)


@dataclass
class VerdictRecord:
    """Analytic and empirical sides of the martingale question.

    ``category`` is one of

    * ``both``: the conditions pass and ``E z_T = 1`` within ``3 SE``;
    * ``theorem-pass``: the conditions pass, the estimate is inconclusive;
    * ``empirical-pass``: the conditions do not pass, ``E z_T = 1`` within ``3 SE``;
    * ``neither``: the conditions fail and a defect (or only the stopped
      identity) is observed;
    * ``contradiction``: the conditions pass but the defect exceeds ``5 SE``
      without a heavy-tail warning.  This signals a bug.
    """

    model: str
    conditions: ConditionReport
    ez: MCEstimate | None
    ladder: LadderReport
    ui: UIReport
    category: str
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"model": self.model, "category": self.category, "notes": list(self.notes),
                "conditions_verdict": self.conditions.verdict,
                "ez": None if self.ez is None else self.ez.to_dict()}


def classify(cond_verdict: str, ez: MCEstimate | None, k: float = 3.0,
             k_bug: float = 5.0) -> tuple[str, list]:
    """Map a condition verdict and an ``E z_T`` estimate to a category."""
    notes = []
    theorem = cond_verdict == "pass"
    if ez is None:
        notes.append("stopped-martingale-only: E z at T ^ tau is the only guaranteed identity")
        if not theorem:
            notes.append(f"condition-{cond_verdict}")
        return ("theorem-pass" if theorem else "neither"), notes
    gap = 1.0 - ez.mean
    if ez.contains(1.0, k):
        return ("both" if theorem else "empirical-pass"), notes
    if theorem:
        if gap > k_bug * ez.se and not ez.dominance_warning:
            notes.append(f"defect {gap:.4g} exceeds {k_bug:g} SE under passing conditions")
            return "contradiction", notes
        notes.append("empirical inconclusive: heavy tail" if ez.dominance_warning
                     else "empirical inconclusive")
        return "theorem-pass", notes
    if gap > 0:
        notes.append(f"condition-{cond_verdict} + empirical defect {gap:.4g}")
    else:
        notes.append(f"condition-{cond_verdict}; estimate above one")
    return "neither", notes


def martingale_verdict(spec: ModelSpec, grid: TimeGrid | None = None, n_paths: int = 100_000,
                       seed: int = 0, levels=DEFAULT_LEVELS, workers: int = 1,
                       domain: Domain | None = None, variant: str | None = None,
                       conditions: ConditionReport | None = None,
                       ensemble: EnsembleSummary | None = None) -> VerdictRecord:
    """Combine the growth-condition verdict with the Monte Carlo evidence."""
    grid = grid or TimeGrid(spec.horizon, 1e-3)
    cond = conditions or benes_verdict(spec, domain)
    ens = ensemble or ladder_ensemble(spec, grid, levels, n_paths, seed, workers, variant)
    unstopped = bool(ens.arrays.get("unstopped", True))
    ez = MCEstimate.from_log_values(ens.arrays["log_z"], seed=seed, dt=grid.dt) \
        if unstopped else None
    ladder = localization_ladder(spec, grid, levels, ensemble=ens)
    ui = _ui_from(ens)
    category, notes = classify(cond.verdict, ez)
    if not all(ladder.self_test):
        bad = [lv for lv, ok in zip(ladder.levels, ladder.self_test) if not ok]
        notes.append(f"localised identity outside 3 SE at levels {bad}")
    return VerdictRecord(spec.name, cond, ez, ladder, ui, category, notes)
