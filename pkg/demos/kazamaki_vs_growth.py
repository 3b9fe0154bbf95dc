"""
Growth conditions succeed where Kazamaki's criterion fails
==========================================================

For M_t = 2 int_0^t B dB the exponential has mean one at T = 1, yet
E exp(M_1 / 2) is infinite.  The Monte Carlo mean sits at one while the
upper tail of exp(M / 2) keeps shedding mass into ever larger shells.
"""

from stochexp import TimeGrid, catalog_get, kazamaki_estimate, run_ensemble
from stochexp.estimates import MCEstimate

spec = catalog_get("bm_quadratic").spec
ens = run_ensemble(spec, TimeGrid(1.0, 1e-3), n_paths=200_000, seed=1)

ez = MCEstimate.from_log_values(ens.arrays["log_z"])
print(f"E z_1 = {ez.mean:.4f} +- {ez.se:.4f}")

kaz = kazamaki_estimate(ens)
print("Kazamaki shell ratios:", [round(r, 3) for r in kaz.shell_ratios])
print("diverging:", kaz.diverging)
# Theory gives ratios 0.57, 0.77, 0.84, 0.88, 0.90: each decade of the tail
# carries nearly as much mass as the last, so the mean cannot converge.
#
# The standard error is large and erratic because z_1 itself has infinite
# variance here: E z_1^2 = E exp(2 B_1^2 - 2 - 4 int B^2) diverges.  The mean
# is right, but no finite ensemble gives it a tight confidence interval.
