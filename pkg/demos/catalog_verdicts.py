"""
Growth-condition verdicts across the catalog
============================================

Each catalog entry carries the verdict its coefficients should produce.
Here the verdicts are recomputed and printed next to the expected ones.
"""

from stochexp import benes_verdict, catalog_get, catalog_list

print(f"{'model':32s} {'expected':8s} {'got':8s} failing")
for entry in catalog_list():
    rep = benes_verdict(entry.spec)
    print(f"{entry.name:32s} {entry.expected_verdict:8s} {rep.verdict:8s} "
          f"{', '.join(rep.failing) or '-'}")

# The Bessel example fails only the first condition: |sigma|^2 = 1/x^2 blows
# up near the origin, and the witness sits next to it.
rep = benes_verdict(catalog_get("bessel_counterexample").spec)
print("\nBessel witness:", rep["growth_sigma_phi"].witness)
