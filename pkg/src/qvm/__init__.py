"""Simulation and analysis toolkit for the quantum Vicsek model of flocking."""

import os

# the TBB layer shipped with some numba builds is too old; OpenMP is always present
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
