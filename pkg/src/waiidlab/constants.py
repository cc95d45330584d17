"""Shared numerical tolerances and size caps.

All tolerances used across the package live here so that support cutoffs,
threshold tie-breaking and validation are consistent everywhere.
"""

import os

# Eigenvalues below this are treated as zero: defines operator supports and
# the domain of logarithms.
EIG_CUTOFF = 1e-12

# Hermiticity / trace / normalization validation tolerance (max-entry norm).
HERMITIAN_TOL = 1e-10

# Spectral threshold tie-breaking: an eigenvalue within TIE_TOL of the
# threshold r counts as "<= r".  Keeps the closed/open split {Q<=r}/{Q>r}
# stable under floating-point noise.
TIE_TOL = 1e-12

# Quantization grid for exact integer counting of level sums.
LEVEL_GRID = 1e-9

# Kraus completeness tolerance for channels.
KRAUS_TOL = 1e-8


def dense_cap() -> int:
    """Largest total dimension d**n for which dense matrices are built."""
    return int(os.environ.get("WAIIDLAB_DENSE_CAP", 4096))


def pure_cap() -> int:
    """Largest total dimension d**n for pure amplitude vectors."""
    return int(os.environ.get("WAIIDLAB_PURE_CAP", 2**20))
