# config/settings.py
import os
from dotenv import load_dotenv

load_dotenv()

class Settings:
    # --- Runtime (environment driven, never changes a numeric result) ---
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    OUTPUT_DIR = os.getenv("CONE_OUTPUT_DIR", "runs")
    N_JOBS = int(os.getenv("N_JOBS", 1))

    CODE_VERSION = "1.0.0"
    SCHEMA_VERSION = "1"

    # --- Core geometry tolerances ---
    DEGENERACY_THRESHOLD = 1e-12
    LAGRANGIAN_TOL = 1e-8
    CLOSURE_TOL = 1e-10
    BRANCH_JUMP_LIMIT = 1.5707963267948966  # pi/2
    SUPPORT_MARGIN = 2          # outer grid layers that must carry zero variation
    SUPPORT_TOL = 1e-12
    QUADRATURE_TOL = 1e-6

    # --- Cone catalog ---
    CONE_SAMPLES = 4096
    CONE_VALIDATION_TOL = 1e-10
    MASLOV_MAX_SAMPLES = 2 ** 20

    # --- Stability ---
    MODE_MAX = 8
    PQ_MAX = 12
    BANK_SIZE = 100
    BANK_SEED = 20240101
    PROFILE_NODES = 4001
    PROFILE_NODES_PER_UNIT = 400     # taper pieces of the three-piece profile, per unit of log r
    PROFILE_MIDDLE_INTERVALS = 64    # the linear middle piece has a constant integrand
    PROFILE_T_RANGE = (-3.0, 3.0)
    TAPER_SLOPE_BOUND = 4.0
    TAPER_CURVATURE_BOUND = 20.0     # |delta''| <= bound / eps
    CERT_MARGIN = 10.0
    EPS_START = 1e-3
    LOG_EPS_FLOOR = -1.0e4           # bisection runs in log(eps) down to this value
    BISECTION_WIDTH = 0.5
    MULTICOVER_K = (2, 3)

    # --- Monotonicity kernel ---
    KERNEL_C = 31.0
    KERNEL_T_NODES = 800
    KERNEL_THETA_NODES = 400
    KERNEL_T_CHUNK = 25         # fixed column block size, independent of N_JOBS
    KERNEL_FINE_STEP = 1e-3
    KERNEL_QUAD_EPSABS = 1e-10
    KERNEL_PATH_RTOL = 1e-4
    KERNEL_RESIDUAL_RTOL = 1e-3
    KERNEL_REGIME_TOL = 1e-6
    KERNEL_BOUND_TOL = 1e-8

    # --- Graph minimizer ---
    GRAPH_CELLS = 16
    GRAPH_EPS = 0.05
    GRAPH_TOL = 1e-9
    GRAPH_MAX_ITER = 20000
    GRAPH_HISTORY = 10
    GRAPH_SEED = 7
    GRAPH_NOISE = 0.1           # seeded interior perturbation, in units of eps * h^2
    GRAPH_WINDOW_RADIUS = 0.25  # refinement studies use cells within this sup-distance of the centre
    GRAPH_TARGET_ORDER = 1.5
    GRAPH_RESIDUAL_FLOOR = 1e-9  # refinement residuals below this on the finer grid count as resolved

    # --- Density study ---
    DENSITY_CONES = ((1, 1), (1, 2), (2, 3))
    DENSITY_RADII = (0.25, 0.5, 1.0)
    DENSITY_TOL = 1e-3

settings = Settings()
