"""Smooth zero-order entropy and spectral entropy-rate diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import StateN, ValidationError

# default crossing tolerance for the "value reaches 1 - tol" proxy of the
# asymptotic liminf = 1 condition
DEFAULT_TOL = 1e-3


@dataclass(frozen=True)
class SpectralCurve:
    """value(gamma) = Tr[{A(gamma) >= 0} A(gamma)] with
    A(gamma) = omega_n - 2^{-n gamma} 1, on an ascending gamma grid
    (bits per site)."""

    n: int
    gammas: np.ndarray
    values: np.ndarray

    def crossing(self, tol: float):
        """Smallest grid gamma whose value reaches 1 - tol, or None."""
        idx = np.flatnonzero(self.values >= 1.0 - tol)
        if idx.size == 0:
            return None
        return float(self.gammas[idx[0]])


def smooth_zero_renyi(s: StateN, eps: float) -> float:
    """log2 of the smallest k such that the top-k eigenvalues of the state
    sum to at least 1 - eps.  The optimal projector is onto the top
    eigenvectors, so a greedy scan of the sorted spectrum is exact."""
    if not 0.0 < eps < 1.0:
        raise ValidationError("epsilon must lie in (0,1)")
    spec = np.sort(s.spectrum())[::-1]
    cum = np.cumsum(spec)
    k = int(np.searchsorted(cum, 1.0 - eps - 1e-12)) + 1
    return math.log2(k)


def spectral_curve(s: StateN, gammas: Sequence[float]) -> SpectralCurve:
    """Evaluate the positive-part trace sum over the supplied gamma grid."""
    gammas = np.asarray(gammas, dtype=float)
    if gammas.size == 0:
        raise ValidationError("gamma grid must be nonempty")
    spec = s.spectrum()
    cuts = np.exp2(-s.n * gammas)
    values = np.array(
        [np.clip(spec - c, 0.0, None).sum() for c in cuts]
    )
    return SpectralCurve(s.n, gammas, np.clip(values, 0.0, 1.0))


def default_gamma_grid(d: int, points: int = 257) -> np.ndarray:
    return np.linspace(0.0, math.log2(d), points)


def sup_entropy_estimate(curves: Sequence[SpectralCurve], tol: float = DEFAULT_TOL):
    """Finite-n proxy for the asymptotic sup-entropy rate.

    For each n, take the smallest grid gamma whose value reaches 1 - tol;
    return the estimate at the largest n together with the per-n sequence.
    This is an estimate of an asymptotic inf, never the rate itself.
    Returns (estimate, per_n list of (n, gamma_or_None), flagged) where
    flagged is True if the largest-n curve never reaches 1 - tol (then the
    grid maximum is returned).
    """
    if len(curves) < 2:
        raise ValidationError("need curves for at least two values of n")
    ordered = sorted(curves, key=lambda c: c.n)
    per_n = [(c.n, c.crossing(tol)) for c in ordered]
    last = ordered[-1]
    est = last.crossing(tol)
    flagged = est is None
    if flagged:
        est = float(last.gammas[-1])
    return est, per_n, flagged


def projector_rate_certificate(
    pairs: Sequence[tuple], eta: float, tol: float = DEFAULT_TOL
):
    """Sup-entropy upper-bound certificate from projector data.

    ``pairs`` lists (weight w_n, logdim r_n, n).  Returns
    (max_n r_n/n + 2 eta, flagged) where flagged is True when the weight at
    the largest n has not reached 1 - tol, in which case the certificate is
    not yet supported at this size.
    """
    if not pairs:
        raise ValidationError("need at least one (weight, logdim, n) triple")
    if eta <= 0:
        raise ValidationError("eta must be positive")
    rate = max(r / n for _, r, n in pairs)
    w_last = max(pairs, key=lambda p: p[2])[0]
    flagged = w_last < 1.0 - tol
    return rate + 2.0 * eta, flagged
