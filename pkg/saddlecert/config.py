"""
Application configuration.
"""
import os
from dotenv import load_dotenv

load_dotenv()

# Output
OUTPUT_DIR = os.getenv("SADDLECERT_OUTPUT_DIR", "./results")
LOG_LEVEL = os.getenv("SADDLECERT_LOG_LEVEL", "INFO")

# Loewner / spectral tolerances
LOEWNER_REL_TOL = 1e-10
SUITE_REL_TOL = 1e-9  # inequality suite runs a notch looser than single checks
CHAIN_REL_TOL = 1e-8
SYMMETRY_TOL = 1e-8
DELTA_ZERO_TOL = 1e-12
ASSEMBLY_TOL = 1e-12

# Smoother defaults
DEFAULT_SGS_DAMPING = 0.95  # keeps R_A^{-1} > A strict
DEFAULT_TWO_GRID_DAMPING = 0.95
DEFAULT_DOMINANCE_MARGIN = 1e-3

# Iteration drivers
DEFAULT_K_MAX = 200
DEFAULT_TOL = 1e-10
RATE_WINDOW = 10
ROUNDOFF_FLOOR = 1e-13
RATE_SLACK = 0.02

# Krylov
GMRES_TOL = 1e-8
GMRES_MAX_ITER = 300
REORTH_THRESHOLD = 1e-8

# Desk scale
MAX_DENSE_DIM = 4000

# Random systems
NEAR_SINGULAR_SHIFT = 1e-6  # lambda_min(A) for a_mode = near_singular
