"""Concentration machinery: smoothed reference states, implicit spectral
projectors of empirical one-site averages, and the weak law of large numbers
for empirical observables.

The central representation is the implicit level projector: the empirical
average (1/n) sum_i A^(i) is diagonal in the product basis V^{\\otimes n}
of the one-site eigenbasis V of A, with eigenvalue (1/n) sum_j a_{x_j} on
the product basis vector labeled by the multi-index x.  Spectral projectors
of the average are therefore predicates on per-site level sums and are
never materialized at d^n x d^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .constants import EIG_CUTOFF, LEVEL_GRID, TIE_TOL
from .core import (
    DensityOperator,
    Observable,
    StateN,
    ValidationError,
    apply_local_matrix,
    partial_trace,
)


@dataclass(frozen=True)
class SigmaQ:
    """Smoothed reference state sigma_q = (1-q) rho + q 1/d with its
    spectral data and the rate parameter h_q = Tr(rho (-log2 sigma_q))."""

    q: float
    rho: DensityOperator
    sigma: DensityOperator
    levels: np.ndarray  # -log2 of the eigenvalues of sigma_q, basis order
    basis: np.ndarray  # eigenvector columns of sigma_q
    h_q: float


def build_sigma_q(rho: DensityOperator, q: float) -> SigmaQ:
    """Smoothed reference state; q in (0, 1) keeps sigma_q full rank."""
    if not 0.0 < q < 1.0:
        raise ValidationError("q must lie in (0,1); q=0 breaks the full-rank guarantee")
    d = rho.dim
    sig = (1.0 - q) * rho.matrix + (q / d) * np.eye(d)
    ev, vecs = np.linalg.eigh(sig)
    levels = -np.log2(ev)
    # h_q in the sigma_q eigenbasis: Tr(rho V diag(levels) V^dag)
    diag_rho = np.real(np.einsum("ij,jk,ik->i", vecs.conj().T, rho.matrix, vecs.T))
    h_q = float((diag_rho * levels).sum())
    return SigmaQ(q, rho, DensityOperator(sig), levels, vecs, h_q)


@dataclass(frozen=True)
class LevelCondition:
    """One threshold predicate on the per-site mean of a level set.

    kind "le": mean <= t (+tie);  "ge": mean >= t (-tie);
    "gt"/"lt" are the exact complements;
    "band": |mean - t| <= halfwidth;  "outside": its complement.
    """

    levels: np.ndarray
    kind: str
    threshold: float
    halfwidth: float = 0.0

    def mask(self, mean: np.ndarray) -> np.ndarray:
        t = self.threshold
        if self.kind == "le":
            return mean <= t + TIE_TOL
        if self.kind == "gt":
            return mean > t + TIE_TOL
        if self.kind == "ge":
            return mean >= t - TIE_TOL
        if self.kind == "lt":
            return mean < t - TIE_TOL
        if self.kind == "band":
            return (mean <= t + self.halfwidth + TIE_TOL) & (
                mean >= t - self.halfwidth - TIE_TOL
            )
        if self.kind == "outside":
            return (mean > t + self.halfwidth + TIE_TOL) | (
                mean < t - self.halfwidth - TIE_TOL
            )
        raise ValidationError(f"unknown condition kind {self.kind!r}")


@dataclass(frozen=True)
class ImplicitLevelProjector:
    """Spectral projector of commuting empirical one-site averages.

    All conditions share the one-site eigenbasis ``basis`` (columns).  The
    projector selects the product basis vectors whose per-site level means
    satisfy every condition.
    """

    basis: np.ndarray
    n: int
    conditions: tuple

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    def level_means(self, cond: LevelCondition) -> np.ndarray:
        """Per-site mean of cond.levels over all d^n multi-indices, in
        flattened index order (site 1 most significant)."""
        sums = reduce(
            lambda s, _: (s[:, None] + cond.levels[None, :]).ravel(),
            range(self.n),
            np.zeros(1),
        )
        return sums / self.n

    def index_mask(self) -> np.ndarray:
        """Boolean mask over the d^n product basis indices."""
        mask = None
        for cond in self.conditions:
            m = cond.mask(self.level_means(cond))
            mask = m if mask is None else (mask & m)
        return mask


def typical_projector(sq: SigmaQ, delta: float, n: int) -> ImplicitLevelProjector:
    """Projector onto eigenvalues of -(1/n) log2 sigma_q^{\\otimes n} that
    are at most h_q + delta."""
    if delta <= 0:
        raise ValidationError("delta must be positive")
    if n < 1:
        raise ValidationError("n must be positive")
    cond = LevelCondition(sq.levels, "le", sq.h_q + delta)
    return ImplicitLevelProjector(sq.basis, n, (cond,))


def _rotated_diag_probs(p: ImplicitLevelProjector, rho: np.ndarray) -> np.ndarray:
    """diag(V^dag rho V) for a one-site density matrix."""
    v = p.basis
    return np.real(np.einsum("ji,jk,ki->i", v.conj(), rho, v))


def projector_weight(p: ImplicitLevelProjector, s: StateN) -> float:
    """Tr(Pi rho_n), without materializing the projector.

    Pure payloads are rotated into the projector basis by n strided local
    applications of V^dag; product payloads use factorized diagonal
    probabilities; dense payloads rotate the diagonal site by site.
    """
    if s.d != p.d or s.n != p.n:
        raise ValidationError("projector and state dimensions do not match")
    mask = p.index_mask()
    if s.kind == "pure":
        amp = np.asarray(s.data)
        vdag = p.basis.conj().T
        for site in range(1, s.n + 1):
            amp = apply_local_matrix(amp, vdag, site, s.d, s.n)
        return float((np.abs(amp[mask]) ** 2).sum())
    if s.kind == "product":
        probs = _rotated_diag_probs(p, np.asarray(s.data))
        prod = reduce(
            lambda acc, _: (acc[:, None] * probs[None, :]).ravel(),
            range(s.n),
            np.ones(1),
        )
        return float(prod[mask].sum())
    diag = sitewise_conjugate(np.asarray(s.data), p.basis.conj().T, s.d, s.n)
    return float(np.real(np.diagonal(diag))[mask].sum())


def sitewise_conjugate(rho: np.ndarray, u: np.ndarray, d: int, n: int) -> np.ndarray:
    """u^{\\otimes n} rho (u^{\\otimes n})^dag without forming u^{\\otimes n}."""
    dim = d**n
    m = rho
    for site in range(1, n + 1):
        left = d ** (site - 1)
        right = d ** (n - site)
        t = m.reshape(left, d, right, dim)
        t = np.einsum("ab,ibjc->iajc", u, t)
        t = t.reshape(dim, left, d, right)
        t = np.einsum("ab,cibj->ciaj", u.conj(), t)
        m = t.reshape(dim, dim)
    return m


def projector_count(p: ImplicitLevelProjector) -> int:
    """Exact number of product basis indices selected by the projector.

    Level values are quantized to the 1e-9 grid and summed exactly via
    dynamic-programming convolution over per-site level multisets, so the
    count is an exact integer even for n in the hundreds.
    """
    if len(p.conditions) != 1:
        # multi-band counts fall back to direct mask evaluation
        return int(p.index_mask().sum())
    cond = p.conditions[0]
    qlevels = [int(round(x / LEVEL_GRID)) for x in cond.levels]
    sums = {0: 1}
    for _ in range(p.n):
        nxt: dict = {}
        for s, c in sums.items():
            for ql in qlevels:
                key = s + ql
                nxt[key] = nxt.get(key, 0) + c
        sums = nxt
    total = 0
    for s, c in sums.items():
        mean = np.array([(s * LEVEL_GRID) / p.n])
        if cond.mask(mean)[0]:
            total += c
    return total


def projector_logdim(p: ImplicitLevelProjector) -> float:
    """log2 of the projector rank (log2(0) reported as -inf)."""
    cnt = projector_count(p)
    if cnt == 0:
        return -math.inf
    return math.log2(cnt)


def empirical_moments(s: StateN, a: Observable, mu: float):
    """Mean and second central moment of the empirical average of ``a``.

    Returns (Tr(rho_n Abar_n), Tr[rho_n (Abar_n - mu 1)^2]), assembled from
    one- and two-site marginals only.
    """
    if a.dim != s.d:
        raise ValidationError("observable dimension does not match the state")
    n = s.n
    amat = a.matrix
    a2 = amat @ amat
    singles = [partial_trace(s, [i]).matrix for i in range(1, n + 1)]
    mean = float(np.mean([np.real(np.trace(m @ amat)) for m in singles]))
    diag_term = sum(np.real(np.trace(m @ a2)) for m in singles) / n**2
    aa = np.kron(amat, amat)
    if s.kind == "product":
        pair_tr = np.real(np.trace(np.kron(s.data, s.data) @ aa))
        cross = n * (n - 1) * pair_tr / n**2
    else:
        cross = 0.0
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                pair = partial_trace(s, [i, j]).matrix
                cross += 2.0 * np.real(np.trace(pair @ aa))
        cross /= n**2
    second = diag_term + cross - 2.0 * mu * mean + mu**2
    return mean, float(second)


def deviation_projector(
    a: Observable, n: int, mu: float, delta: float
) -> ImplicitLevelProjector:
    """Projector onto {|Abar_n - mu 1| > delta} (an "outside" band)."""
    ev, vecs = np.linalg.eigh(a.matrix)
    cond = LevelCondition(ev, "outside", mu, delta)
    return ImplicitLevelProjector(vecs, n, (cond,))


def chebyshev_tail(s: StateN, a: Observable, mu: float, delta: float) -> float:
    """Tr[rho_n {|Abar_n - mu 1| > delta}], computed exactly through the
    implicit projector in the eigenbasis of ``a``."""
    if delta <= 0:
        raise ValidationError("delta must be positive")
    return projector_weight(deviation_projector(a, s.n, mu, delta), s)


def variance_about(rho: DensityOperator, a: Observable, mu: float) -> float:
    """Tr(rho A^2) - 2 mu Tr(rho A) + mu^2 (single-site variance about mu)."""
    amat = a.matrix
    t1 = float(np.real(np.trace(rho.matrix @ amat @ amat)))
    t2 = float(np.real(np.trace(rho.matrix @ amat)))
    return t1 - 2.0 * mu * t2 + mu**2


def simultaneous_eigenbasis(mats: Sequence[np.ndarray], tol: float = 1e-9):
    """Shared eigenbasis of a commuting Hermitian family.

    Sequential block diagonalization: diagonalize the first matrix, then
    re-diagonalize each following matrix inside every degenerate block.
    Returns (basis columns V, list of per-matrix level arrays diag(V^dag A V)).
    Raises ValidationError if any pair fails to commute within ``tol``.
    """
    mats = [np.asarray(m, dtype=complex) for m in mats]
    d = mats[0].shape[0]
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            comm = mats[i] @ mats[j] - mats[j] @ mats[i]
            err = np.max(np.abs(comm))
            if err > tol:
                raise ValidationError(
                    f"observables {i} and {j} do not commute "
                    f"(commutator max-norm {err:.3e}); a commuting family is required"
                )
    v = np.eye(d, dtype=complex)
    blocks = [list(range(d))]
    for a in mats:
        new_blocks = []
        for idx in blocks:
            cols = v[:, idx]
            sub = cols.conj().T @ a @ cols
            sub = 0.5 * (sub + sub.conj().T)
            w, u = np.linalg.eigh(sub)
            v[:, idx] = cols @ u
            # split the block at eigenvalue gaps
            start = 0
            for pos in range(1, len(idx)):
                if w[pos] - w[pos - 1] > 1e-8:
                    new_blocks.append(idx[start:pos])
                    start = pos
            new_blocks.append(idx[start:])
        blocks = new_blocks
    levels = []
    for a in mats:
        full = v.conj().T @ a @ v
        off = np.max(np.abs(full - np.diag(np.diagonal(full))))
        if off > 1e-7:
            raise ValidationError(
                f"simultaneous diagonalization failed (off-diagonal {off:.3e})"
            )
        levels.append(np.real(np.diagonal(full)))
    return v, levels
