"""Dense complex Hermitian linear algebra and n-site state representations.

Conventions used throughout the package:

* all logarithms are base 2, entropies are in bits;
* sites are 1-based and site 1 is the most significant digit of the
  flattened index of an n-site vector or matrix;
* eigenvalues below ``EIG_CUTOFF`` are treated as zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import (
    EIG_CUTOFF,
    HERMITIAN_TOL,
    KRAUS_TOL,
    TIE_TOL,
    dense_cap,
    pure_cap,
)


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _check_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL, what: str = "matrix"):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{what} must be square, got shape {m.shape}")
    err = np.max(np.abs(m - m.conj().T))
    if err > tol:
        raise ValidationError(f"{what} is not Hermitian (max deviation {err:.3e})")


@dataclass(frozen=True)
class Observable:
    """Hermitian matrix on the local d-dimensional space."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        _check_hermitian(m, what="observable")
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def diag(cls, values: Sequence[float]) -> "Observable":
        return cls(np.diag(np.asarray(values, dtype=float)).astype(complex))


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, positive semidefinite, unit-trace matrix on C^d."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        _check_hermitian(m, what="density operator")
        tr = np.trace(m).real
        if abs(tr - 1.0) > HERMITIAN_TOL:
            raise ValidationError(f"density operator trace {tr} deviates from 1")
        ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        if ev.min() < -HERMITIAN_TOL:
            raise ValidationError(
                f"density operator has negative eigenvalue {ev.min():.3e}"
            )
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def diag(cls, probs: Sequence[float]) -> "DensityOperator":
        return cls(np.diag(np.asarray(probs, dtype=float)).astype(complex))

    @classmethod
    def pure(cls, vec: Sequence[complex]) -> "DensityOperator":
        v = np.asarray(vec, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, d: int) -> "DensityOperator":
        return cls(np.eye(d, dtype=complex) / d)

    def eig(self):
        """Eigenvalues (ascending) and orthonormal eigenvector columns."""
        return np.linalg.eigh(self.matrix)


@dataclass(frozen=True)
class POVM:
    """Finite collection of positive effects summing to the identity."""

    effects: tuple

    def __post_init__(self):
        effs = tuple(_freeze(np.asarray(e, dtype=complex)) for e in self.effects)
        if not effs:
            raise ValidationError("POVM needs at least one effect")
        d = effs[0].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for e in effs:
            _check_hermitian(e, what="POVM effect")
            ev = np.linalg.eigvalsh(0.5 * (e + e.conj().T))
            if ev.min() < -HERMITIAN_TOL:
                raise ValidationError(
                    f"POVM effect has negative eigenvalue {ev.min():.3e}"
                )
            total += e
        if np.max(np.abs(total - np.eye(d))) > HERMITIAN_TOL:
            raise ValidationError("POVM effects do not sum to the identity")
        object.__setattr__(self, "effects", effs)

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    @property
    def num_outcomes(self) -> int:
        return len(self.effects)

    @classmethod
    def computational_basis(cls, d: int) -> "POVM":
        effs = []
        for i in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, i] = 1.0
            effs.append(e)
        return cls(tuple(effs))


@dataclass(frozen=True)
class StateN:
    """An n-site state on (C^d)^{\\otimes n}.

    Payload kinds:

    * ``"pure"``   -- amplitude vector of length d**n (unit norm);
    * ``"dense"``  -- density matrix of shape (d**n, d**n);
    * ``"product"``-- a single-site density matrix rho, representing the
      tensor power rho^{\\otimes n} without materializing it.

    Site 1 is the most significant digit of the flattened index.
    """

    d: int
    n: int
    kind: str
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValidationError("d and n must be positive")
        data = np.asarray(self.data, dtype=complex)
        dim = self.d**self.n
        if self.kind == "pure":
            if dim > pure_cap():
                raise ValidationError(f"d^n = {dim} exceeds pure payload cap")
            if data.shape != (dim,):
                raise ValidationError(f"pure payload must have length {dim}")
            nrm = np.linalg.norm(data)
            if abs(nrm - 1.0) > HERMITIAN_TOL:
                raise ValidationError(f"pure payload norm {nrm} deviates from 1")
        elif self.kind == "dense":
            if dim > dense_cap():
                raise ValidationError(f"d^n = {dim} exceeds dense payload cap")
            DensityOperator(data)  # full validation
        elif self.kind == "product":
            DensityOperator(data)
            if data.shape != (self.d, self.d):
                raise ValidationError("product payload must be a d x d matrix")
        else:
            raise ValidationError(f"unknown payload kind {self.kind!r}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def total_dim(self) -> int:
        return self.d**self.n

    @classmethod
    def from_pure(cls, d: int, n: int, amplitudes) -> "StateN":
        v = np.asarray(amplitudes, dtype=complex)
        return cls(d, n, "pure", v / np.linalg.norm(v))

    @classmethod
    def tensor_power(cls, rho: DensityOperator, n: int) -> "StateN":
        """rho^{\\otimes n}; collapses to a pure payload when rho is pure."""
        ev, vecs = rho.eig()
        if ev[-1] > 1.0 - EIG_CUTOFF and rho.dim**n <= pure_cap():
            psi = vecs[:, -1]
            amp = psi
            for _ in range(n - 1):
                amp = np.kron(amp, psi)
            return cls(rho.dim, n, "pure", amp / np.linalg.norm(amp))
        return cls(rho.dim, n, "product", rho.matrix)

    def to_dense_matrix(self) -> np.ndarray:
        """Materialize the full density matrix (subject to the dense cap)."""
        dim = self.total_dim
        if dim > dense_cap():
            raise ValidationError(f"d^n = {dim} exceeds dense payload cap")
        if self.kind == "pure":
            return np.outer(self.data, self.data.conj())
        if self.kind == "dense":
            return np.array(self.data)
        m = np.array([[1.0 + 0j]])
        for _ in range(self.n):
            m = np.kron(m, self.data)
        return m

    def spectrum(self) -> np.ndarray:
        """Eigenvalues of the state, ascending, clipped at zero."""
        if self.kind == "pure":
            return np.array([1.0])
        if self.kind == "product":
            ev = np.clip(np.linalg.eigvalsh(self.data), 0.0, None)
            out = np.array([1.0])
            for _ in range(self.n):
                out = np.outer(out, ev).ravel()
            return np.sort(out)
        ev = np.linalg.eigvalsh(self.data)
        return np.sort(np.clip(ev, 0.0, None))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def eigh(m: np.ndarray):
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, orthonormal eigenvector columns).
    Raises ValidationError for non-Hermitian input.
    """
    m = np.asarray(m, dtype=complex)
    _check_hermitian(m)
    return np.linalg.eigh(m)


def trace_norm(x: np.ndarray) -> float:
    """Tr|X|, the sum of singular values."""
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValidationError(f"trace norm needs a square matrix, got {x.shape}")
    return float(np.linalg.svd(x, compute_uv=False).sum())


def spectral_projector(q: np.ndarray, r: float, side: str = "le") -> np.ndarray:
    """Spectral projector of a Hermitian matrix at threshold r.

    side is one of "le", "gt", "ge", "lt".  Eigenvalues within TIE_TOL of r
    count as "<= r", so {Q<=r} + {Q>r} is exactly the identity.
    """
    ev, vecs = eigh(q)
    if side == "le":
        mask = ev <= r + TIE_TOL
    elif side == "gt":
        mask = ev > r + TIE_TOL
    elif side == "ge":
        mask = ev >= r - TIE_TOL
    elif side == "lt":
        mask = ev < r - TIE_TOL
    else:
        raise ValidationError(f"unknown side {side!r}")
    sel = vecs[:, mask]
    return sel @ sel.conj().T


def von_neumann_entropy(rho: DensityOperator) -> float:
    """S(rho) = -sum lambda log2 lambda, in bits."""
    ev = np.linalg.eigvalsh(rho.matrix)
    ev = ev[ev > EIG_CUTOFF]
    return float(-(ev * np.log2(ev)).sum())


def relative_entropy(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Umegaki relative entropy D(rho||sigma) in bits; math.inf if the
    support of rho is not contained in the support of sigma."""
    if rho.dim != sigma.dim:
        raise ValidationError("relative entropy needs equal dimensions")
    sev, svec = sigma.eig()
    kernel = svec[:, sev <= EIG_CUTOFF]
    if kernel.shape[1] > 0:
        outside = float(
            np.real(np.trace(kernel.conj().T @ rho.matrix @ kernel))
        )
        if outside > HERMITIAN_TOL:
            return math.inf
    rev, rvec = rho.eig()
    keep = rev > EIG_CUTOFF
    term1 = float((rev[keep] * np.log2(rev[keep])).sum())
    logsig = svec @ np.diag(np.log2(np.clip(sev, EIG_CUTOFF, None))) @ svec.conj().T
    term2 = float(np.real(np.trace(rho.matrix @ logsig)))
    return term1 - term2


def _pure_marginal(amp: np.ndarray, d: int, n: int, keep: Sequence[int]) -> np.ndarray:
    """Marginal of a pure amplitude vector via the Gram matrix of slices."""
    tensor = amp.reshape((d,) * n)
    keep0 = [i - 1 for i in keep]
    rest = [i for i in range(n) if i not in keep0]
    perm = keep0 + rest
    m = np.transpose(tensor, perm).reshape(d ** len(keep0), -1)
    return m @ m.conj().T


def _dense_marginal(rho: np.ndarray, d: int, n: int, keep: Sequence[int]) -> np.ndarray:
    tensor = rho.reshape((d,) * (2 * n))
    # trace out sites not in keep, highest index first so axes stay valid
    drop = sorted((i for i in range(1, n + 1) if i not in keep), reverse=True)
    cur_n = n
    for site in drop:
        ax = site - 1
        tensor = np.trace(tensor, axis1=ax, axis2=ax + cur_n)
        cur_n -= 1
    kept_sorted = sorted(keep)
    order = [kept_sorted.index(i) for i in keep]
    k = len(keep)
    tensor = np.transpose(tensor, order + [k + o for o in order])
    return tensor.reshape(d**k, d**k)


def partial_trace(s: StateN, keep: Sequence[int]) -> DensityOperator:
    """Marginal of an n-site state on the ordered site subset ``keep``.

    Sites are 1-based.  Pure payloads never materialize the d^n x d^n
    matrix; product payloads return rho^{\\otimes k} exactly.
    """
    keep = list(keep)
    if not keep:
        raise ValidationError("keep must be nonempty")
    if len(set(keep)) != len(keep):
        raise ValidationError("keep has repeated sites")
    if any(i < 1 or i > s.n for i in keep):
        raise ValidationError(f"site indices must lie in [1, {s.n}]")
    if s.kind == "product":
        m = np.array([[1.0 + 0j]])
        for _ in keep:
            m = np.kron(m, s.data)
        return DensityOperator(m)
    if s.kind == "pure":
        m = _pure_marginal(s.data, s.d, s.n, keep)
    else:
        m = _dense_marginal(np.asarray(s.data), s.d, s.n, keep)
    m = 0.5 * (m + m.conj().T)
    return DensityOperator(m / np.trace(m).real)


def apply_local_matrix(vec: np.ndarray, m: np.ndarray, site: int, d: int, n: int) -> np.ndarray:
    """Apply a d x d matrix at one site of a length-d**n vector (1-based)."""
    if site < 1 or site > n:
        raise ValidationError(f"site {site} out of range [1, {n}]")
    left = d ** (site - 1)
    right = d ** (n - site)
    t = vec.reshape(left, d, right)
    out = np.einsum("ab,ibj->iaj", m, t)
    return out.reshape(-1)


def apply_local_unitary(s: StateN, u: np.ndarray, site: int) -> StateN:
    """Apply a single-site unitary to a pure payload."""
    u = np.asarray(u, dtype=complex)
    if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > 1e-9:
        raise ValidationError("matrix is not unitary")
    if s.kind != "pure":
        raise ValidationError("apply_local_unitary expects a pure payload")
    out = apply_local_matrix(np.asarray(s.data), u, site, s.d, s.n)
    return StateN(s.d, s.n, "pure", out)


def check_kraus_complete(kraus: Sequence[np.ndarray], tol: float = KRAUS_TOL):
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    dim = ks[0].shape[1]
    total = sum(k.conj().T @ k for k in ks)
    err = np.max(np.abs(total - np.eye(dim)))
    if err > tol:
        raise ValidationError(f"Kraus set is not trace preserving (error {err:.3e})")


def entanglement_fidelity(rho, kraus: Sequence[np.ndarray]) -> float:
    """F_e = sum_k |Tr(rho E_k)|^2 for a channel given by Kraus operators."""
    check_kraus_complete(kraus)
    if isinstance(rho, StateN):
        mat = rho.to_dense_matrix()
    elif isinstance(rho, DensityOperator):
        mat = rho.matrix
    else:
        mat = np.asarray(rho, dtype=complex)
    total = 0.0
    for k in kraus:
        total += abs(np.trace(mat @ np.asarray(k, dtype=complex))) ** 2
    return float(min(total, 1.0))


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _encode_array(a: np.ndarray) -> str:
    if a.ndim == 1:
        return "[" + ", ".join(f"[{_fmt(z.real)}, {_fmt(z.imag)}]" for z in a) + "]"
    return "[" + ", ".join(_encode_array(row) for row in a) + "]"


def state_to_json(s: StateN) -> str:
    """Serialize a state in the package's JSON format (17 significant digits).

    Product payloads are materialized densely (subject to the dense cap),
    since the wire format only knows "dense" and "pure".
    """
    if s.kind == "product":
        data = s.to_dense_matrix()
        kind = "dense"
    else:
        data = np.asarray(s.data)
        kind = s.kind
    return (
        '{"d": %d, "n": %d, "kind": "%s", "data": %s}'
        % (s.d, s.n, kind, _encode_array(data))
    )


def state_from_json(text: str) -> StateN:
    obj = json.loads(text)
    d, n, kind = int(obj["d"]), int(obj["n"]), obj["kind"]
    raw = np.asarray(obj["data"], dtype=float)
    data = raw[..., 0] + 1j * raw[..., 1]
    return StateN(d, n, kind, data)


def save_state(s: StateN, path):
    with open(path, "w") as fh:
        fh.write(state_to_json(s))
        fh.write("\n")


def load_state(path) -> StateN:
    with open(path) as fh:
        return state_from_json(fh.read())


def save_operator(m: np.ndarray, path):
    """Store a bare d x d matrix as a 1-site dense payload file."""
    m = np.asarray(m, dtype=complex)
    with open(path, "w") as fh:
        fh.write(
            '{"d": %d, "n": 1, "kind": "dense", "data": %s}'
            % (m.shape[0], _encode_array(m))
        )
        fh.write("\n")


def load_operator(path) -> np.ndarray:
    with open(path) as fh:
        obj = json.loads(fh.read())
    raw = np.asarray(obj["data"], dtype=float)
    return raw[..., 0] + 1j * raw[..., 1]
