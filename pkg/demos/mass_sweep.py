"""Mass of the single boundary spike as eps decreases.

Builds the run in code instead of TOML and prints the quantized mass, the
Newton iteration count and the star norm of the ansatz residual per eps.
"""
import numpy as np

from layercrest.config import parse_config
from layercrest.pipeline import run_pipeline

BUMP5 = "2 + (x1^3 - 3*x1*x2^2)*(2.5 - 1.5*(x1^2 + x2^2)) + 5*(1 - x1^2 - x2^2)^2"

cfg = parse_config({
    "domain": {"kind": "disk"},
    "weight": {"kind": "expression", "expression": BUMP5},
    "run": {"scenario": "separated", "candidates": [0.0], "eps_list": [0.05, 0.025, 0.0125], "h": 0.1},
})
for row in run_pipeline(cfg, write=False).rows:
    print(f"eps {row.eps:<8g} mass {row.mass / np.pi:.4f} pi  newton {row.iterations:>3d}  "
          f"star norm {row.star_norm:.4f}")
