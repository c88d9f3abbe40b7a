"""Convergence of the hat-function interpolator between lattices.

Run with ``python3 demos/interpolator_rates.py``. Each coarse lattice is
mapped into a lattice four times finer. r1 measures how far iota^* iota is
from the identity on smooth fields and should shrink like a^2.
"""

from sflab.interpolator import check_props

report = check_props((4, 8, 16), ratio=4, d=2, trials=4)
print(report.table())
print(f"partition of unity residual {report.pou_residual:.1e}")
