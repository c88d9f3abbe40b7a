"""Real operators in d = 1: only the parity of the flow is meaningful.

Run with ``python3 demos/mod2_flow.py``. The determinant sign, the
tracked crossings and the congruence oracle agree: a periodic circle has
an odd number of crossings, an antiperiodic one an even number.
"""

import math

from sflab.acceptance import mod2_setup
from sflab.spectral import mod2_flow

for name, bc in (("periodic", 0.0), ("antiperiodic", math.pi)):
    r = mod2_flow(mod2_setup(bc), grid=32)
    print(f"{name:12s} det sign {r.det_sign_minus:+d} -> {r.det_sign_plus:+d}  parity={r.parity}  "
          f"tracked={r.tracked_parity}  V={r.v_parity}  consistent={r.consistent}")
