"""
A strict local martingale: the Bessel example
=============================================

With sigma = -1/x and a three-dimensional Bessel state, z_t = 1 / X_t.  The
stopped means stay at one for every localisation level while the mass that
survives to T without stopping settles at 2 Phi(1) - 1.
"""

from stochexp import TimeGrid, catalog_get, localization_ladder, ui_diagnostic
from stochexp.catalog import BESSEL_EZ
from stochexp.diagnostics import ladder_ensemble

spec = catalog_get("bessel_counterexample").spec
grid = TimeGrid(1.0, 1e-3)
levels = (3.0, 10.0, 30.0, 100.0)
ens = ladder_ensemble(spec, grid, levels, n_paths=50_000, seed=2)

ladder = localization_ladder(spec, grid, levels, ensemble=ens)
for lv, st, sv in zip(ladder.levels, ladder.stopped, ladder.survivor):
    print(f"n = {lv:6g}   E z_(T^tau) = {st.mean:.4f} +- {st.se:.4f}"
          f"   E z_T 1(tau > T) = {sv.mean:.4f}")
print(f"verdict: {ladder.verdict}   exact defect {1 - BESSEL_EZ:.4f}")

# E[z log z] at T ^ tau_n grows with n: the family is not uniformly integrable.
ui = ui_diagnostic(spec, grid, levels, ensemble=ens)
print("E[z log z]:", [round(e.mean, 3) for e in ui.estimates], ui.trend)
