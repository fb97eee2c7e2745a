"""Coverage and capacity of RIS-assisted HAP downlinks under random blockage.

Two independent routes to the SIR law: a closed-form chain built on gamma
moment matching (:mod:`rishap.analytic`) and a trial-by-trial simulator
(:mod:`rishap.montecarlo`).
"""

__version__ = "0.1.0"

from .analytic import coverage_probability, ergodic_capacity, evaluate, fit_gamma
from .geometry import SystemParams
from .montecarlo import run_batch

__all__ = [
    "__version__",
    "SystemParams",
    "coverage_probability",
    "ergodic_capacity",
    "evaluate",
    "fit_gamma",
    "run_batch",
]
