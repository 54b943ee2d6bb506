"""
Configuration file for the grad-div DPG solver.
Contains global constants used across modules.
"""

import math

# Model problem (d = 2 throughout)
SPACE_DIMENSION = 2
VECTOR_TEST_OFFSET = 2                     # H(div) test degree p + 2
SCALAR_TEST_OFFSET = SPACE_DIMENSION + 1   # H^1 test degree p + d + 1
GRADDIV_TEST_OFFSET = 3                    # H(grad div) test degree p + 3 (cubic for p = 0)
MAX_FIRST_ORDER_DEGREE = 3
MAX_SECOND_ORDER_DEGREE = 2       # element routines only; runs use p = 0

# Domains
LSHAPE_HALF_DIAGONAL = math.sqrt(2.0) / 4.0
LSHAPE_SPLIT = "origin"   # diagonal splitting the three L-shape squares: "origin" or "outer"
LSHAPE_REENTRANT_TAGS = frozenset({0, 5})
DEFAULT_SUBDIVISIONS = 2

# Quadrature
MAX_TRIANGLE_DEGREE = 20
MAX_EDGE_DEGREE = 41
ERROR_QUADRATURE_DEGREE = 10    # also used near the L-shape singularity
BOUNDARY_QUADRATURE_DEGREE = 10

# Adaptivity
DEFAULT_THETA = 0.75
DEFAULT_LEVELS = 6
DEFAULT_MAX_DOFS = 250_000
UNIFORM_BISECTIONS = 2          # NVB rounds per uniform level, halves h

# Solver
DEFAULT_SOLVER = "direct"
SOLVER_CHOICES = ("direct", "cg")
CG_RTOL = 1e-12
CG_MAXITER = 50_000
RESIDUAL_TOLERANCE = 1e-10
REFINEMENT_STEPS = 2            # residual corrections before a solve is rejected
ELEMENT_CHUNK_SIZE = 256
DEFAULT_THREADS = 1

# Reporting
SLOPE_FIT_LEVELS = 3
OUTPUT_DIR_ENV = "GRADDIV_DPG_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"
CSV_HEADER = ("level", "nelems", "dim", "e_u", "e_w", "eta", "eoc_u", "eoc_eta", "e_total")

# Acceptance (slope of error versus dim(U_h))
EXPECTED_SLOPES = {
    ("smooth", "uniform"): -0.5,
    ("smooth", "adaptive"): -0.5,
    ("lshape", "uniform"): -1.0 / 3.0,
    ("lshape", "adaptive"): -0.5,
}
SLOPE_TOLERANCES = {
    ("smooth", "uniform"): 0.10,
    ("smooth", "adaptive"): 0.10,
    ("lshape", "uniform"): 0.07,
    ("lshape", "adaptive"): 0.10,
}
ESTIMATOR_SLOPE_TOLERANCE = 0.15
ADAPTIVE_SLOPE_MIN_DIM = 10_000

# Fortin verification
FORTIN_SINGULARITY_RATIO = 1e-10
FORTIN_RANDOM_SAMPLES = 100
