# Numerical tolerances
SYMMETRY_RTOL = 1e-12  # relative asymmetry allowed before a covariance is rejected
PHYSICALITY_SLACK = 1e-9  # relative to ||cov||; cov + i Omega may dip this far below 0
HERALD_ROUNDING = 2e-15  # rounding of a Schur complement, relative to ||cov||^2
SYMPLECTIC_ATOL = 1e-10  # S Omega S^T = Omega
UNITARITY_ATOL = 1e-10  # U U^dagger = I
CONDITIONING_FLOOR = 1e-12  # smallest acceptable det / norm before a numerical error
NORMALIZATION_ATOL = 1e-12  # quadrature forms must have unit squared norm
SYMMETRIC_STATE_ATOL = 1e-9  # det A = det B for the symmetric EoF closed form
DEGENERATE_PHASOR = 1e-14  # mean phasor modulus below this has no defined argument

# Oracle comparison tolerances
PATH_PROBABILITY_ATOL = 1e-9
PATH_COVARIANCE_ATOL = 1e-8
ORACLE_AMPLITUDE_ATOL = 1e-8
ORACLE_MOMENT_ATOL = 1e-5

# Small-noise regime of the analytic expansion
SMALL_NOISE_LIMIT = 0.5

# Fock oracle limits
DEFAULT_DIAGONAL_CUTOFF = 60  # photons per mode for two-mode |N,N> states
DEFAULT_EVOLUTION_CUTOFF = 8  # total photons inside the interferometer
MAX_EVOLUTION_CUTOFF = 8
MAX_INTERFEROMETER_MODES = 3

# Monte Carlo
SHOTS_PER_BLOCK = 4096  # stream granularity; results never depend on shard count
DEFAULT_SHOTS = 100_000
DEFAULT_SEED = 20240901
CONVERGENCE_LADDER = (1_000, 10_000, 100_000)
ZERO_STDERR = 1e-12  # below this a standard error is rounding noise

# Defaults of the channel
MAX_SQUEEZING = 15.0  # tanh r must stay below 1 in double precision
DEFAULT_REDUNDANCY = 5
DEFAULT_SQUEEZING = 1.2
DEFAULT_VARIANCE = 0.01

# dB per unit squeezing parameter: 10*log10(e^2)
DB_PER_NEPER = 8.685889638065037

# Reference values printed in the squeezing comparison table (dB)
TABLE1_SQUEEZING = (0.5, 1.0, 1.2, 1.5, 2.0)
TABLE1_INPUT_DB = {0.5: 4.34, 1.0: 8.69, 1.2: 10.43, 1.5: 12.03, 2.0: 17.38}
TABLE1_N1_DB = {0.5: 4.09, 1.0: 6.84, 1.2: 6.87, 1.5: 6.16, 2.0: 2.49}
TABLE1_N5_DB = {0.5: 4.27, 1.0: 8.17, 1.2: 9.39, 1.5: 10.43, 2.0: 9.03}
TABLE1_FIT_MAX_SQUEEZING = 1.5  # the r=2 row is excluded from the variance fit
