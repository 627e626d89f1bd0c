# Deep quench: the logarithmic potential approaches the double obstacle as theta -> 0.
#
# We sweep theta with the sweep driver used by the command line, measure the
# time-integrated L2 distance to a penalised obstacle run and watch it shrink.
import os
import tempfile

from evosurf_ch.cli import run_sweep
from evosurf_ch.config import parse_config

here = os.path.dirname(os.path.abspath(__file__))
cfg = parse_config(os.path.join(here, "configs", "deep_quench.cfg"))

# ----------------------------------------------------------------------
# 1. Sweep theta; the reference is the obstacle model at reference_delta
# ----------------------------------------------------------------------
with tempfile.TemporaryDirectory() as out:
    rows = run_sweep(cfg, "theta", [0.5, 0.2, 0.1, 0.05], out)

# ----------------------------------------------------------------------
# 2. Summary
# ----------------------------------------------------------------------
print(f"{'theta':>6s} {'distance':>10s} {'wall [s]':>9s}  status")
for r in rows:
    print(f"{r['value']:6.3g} {r['distance_to_reference']:10.4g} {r['wall_time']:9.2f}  {r['status']}")
