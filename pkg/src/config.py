import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    LOG_LEVEL = os.getenv('FRONTDOOR_LOG_LEVEL', 'INFO')

    # IRLS / OLS engine
    IRLS_TOL = float(os.getenv('FRONTDOOR_IRLS_TOL', 1e-10))
    IRLS_MAX_ITER = int(os.getenv('FRONTDOOR_IRLS_MAX_ITER', 100))
    IRLS_MAX_HALVINGS = 30
    RANK_TOL = 1e-10

    # Probability clamps
    PROB_CLAMP = float(os.getenv('FRONTDOOR_PROB_CLAMP', 1e-12))  # predictions and simulation
    PSEUDO_CLAMP = float(os.getenv('FRONTDOOR_PSEUDO_CLAMP', 1e-6))  # logistic sequential pseudo-outcomes

    # Oracle and recursion guards
    STATE_SPACE_CAP = int(os.getenv('FRONTDOOR_STATE_SPACE_CAP', 2 ** 22))
    MAX_SR_HORIZON = int(os.getenv('FRONTDOOR_MAX_SR_HORIZON', 3))

    # Ground truth for studies run with truth "auto"
    TRUTH_N = int(os.getenv('FRONTDOOR_TRUTH_N', 10 ** 6))
    TRUTH_SEED = int(os.getenv('FRONTDOOR_TRUTH_SEED', 20240607))
    SIMULATION_CHUNK = 1_000_000

    DEFAULT_ALPHA = float(os.getenv('FRONTDOOR_ALPHA', 0.05))
    DEFAULT_JOBS = int(os.getenv('FRONTDOOR_JOBS', 1))

    # Study defaults
    DEFAULT_SAMPLE_SIZES = (500, 1000, 2000, 3000, 4000, 5000)
    DEFAULT_REPLICATIONS = 1000
    MIN_SAMPLE_SIZE = 50
