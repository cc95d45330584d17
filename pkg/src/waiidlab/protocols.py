"""Universal compression and asymmetric hypothesis testing built from the
typicality projectors, plus an exact Neyman--Pearson oracle for the
hypothesis-testing relative entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Optional

import numpy as np

from .constants import EIG_CUTOFF, TIE_TOL, dense_cap
from .core import (
    DensityOperator,
    StateN,
    ValidationError,
    apply_local_matrix,
)
from .typicality import (
    ImplicitLevelProjector,
    LevelCondition,
    SigmaQ,
    build_sigma_q,
    projector_count,
    projector_logdim,
    projector_weight,
    sitewise_conjugate,
    typical_projector,
)

TAU_CHOICES = ("first_basis_vector_of_range", "maximally_mixed_on_range")


@dataclass(frozen=True)
class CompressionScheme:
    """Universal scheme: project onto the typical subspace, dump the
    complement weight onto a fixed state tau on the compressed space."""

    n: int
    sq: SigmaQ
    projector: ImplicitLevelProjector
    tau_choice: str
    compressed_logdim: float


def build_compression(
    rho: DensityOperator,
    q: float,
    delta: float,
    n: int,
    tau_choice: str = "first_basis_vector_of_range",
) -> CompressionScheme:
    if tau_choice not in TAU_CHOICES:
        raise ValidationError(f"tau_choice must be one of {TAU_CHOICES}")
    sq = build_sigma_q(rho, q)
    proj = typical_projector(sq, delta, n)
    logdim = projector_logdim(proj)
    if logdim == -math.inf:
        raise ValidationError("typical projector is empty; no compressed space")
    return CompressionScheme(n, sq, proj, tau_choice, logdim)


def _first_range_index(proj: ImplicitLevelProjector) -> int:
    mask = proj.index_mask()
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValidationError("projector range is empty")
    return int(idx[0])


def _materialize_projector(proj: ImplicitLevelProjector) -> np.ndarray:
    """Dense Pi = V^{\\otimes n} diag(mask) (V^{\\otimes n})^dag."""
    mask = proj.index_mask().astype(float)
    dim = proj.d**proj.n
    if dim > dense_cap():
        raise ValidationError(f"d^n = {dim} exceeds dense payload cap")
    return sitewise_conjugate(np.diag(mask).astype(complex), proj.basis, proj.d, proj.n)


def scheme_kraus(scheme: CompressionScheme) -> list:
    """Explicit Kraus operators of the decode-after-encode channel.

    {Pi} together with sqrt(mu_m) |t_m><e_l| (1 - Pi) over the eigenstates
    t_m of tau and an orthonormal basis {e_l}.  Dense-cap sized only; used
    for validation and small oracles.
    """
    proj = scheme.projector
    dim = proj.d**proj.n
    pi = _materialize_projector(proj)
    one_minus = np.eye(dim) - pi
    kraus = [pi]
    if scheme.tau_choice == "first_basis_vector_of_range":
        taus = [(1.0, _product_basis_vector(proj, _first_range_index(proj)))]
    else:
        mask = proj.index_mask()
        rank = int(mask.sum())
        taus = [
            (1.0 / rank, _product_basis_vector(proj, int(i)))
            for i in np.flatnonzero(mask)
        ]
    for mu, t in taus:
        for l in range(dim):
            kraus.append(math.sqrt(mu) * np.outer(t, one_minus[l, :]))
    return kraus


def _product_basis_vector(proj: ImplicitLevelProjector, flat_index: int) -> np.ndarray:
    """The product eigenbasis vector with the given flattened multi-index."""
    d, n = proj.d, proj.n
    digits = []
    rem = flat_index
    for _ in range(n):
        digits.append(rem % d)
        rem //= d
    digits.reverse()  # site 1 is most significant
    vec = np.array([1.0 + 0j])
    for dig in digits:
        vec = np.kron(vec, proj.basis[:, dig])
    return vec


def compression_fidelity(scheme: CompressionScheme, omega: StateN):
    """Exact entanglement fidelity of the scheme on omega and the universal
    lower bound |Tr(omega Pi)|^2.

    Returns (fe_exact, lower_bound); fe_exact is None when omega is a dense
    payload beyond the dense cap.
    """
    proj = scheme.projector
    if omega.d != proj.d or omega.n != proj.n:
        raise ValidationError("scheme and state dimensions do not match")
    w = projector_weight(proj, omega)
    lower = w * w
    if omega.kind == "pure":
        # Kraus sum collapses: F = w^2 + <psi|tau|psi> (1 - w)
        tau_ov = _tau_overlap_pure(scheme, omega)
        exact = min(1.0, lower + tau_ov * (1.0 - w))
    else:
        dim = omega.total_dim
        if dim > dense_cap():
            return None, lower
        rho = omega.to_dense_matrix()
        pi = _materialize_projector(proj)
        one_minus = np.eye(dim) - pi
        extra = 0.0
        if scheme.tau_choice == "first_basis_vector_of_range":
            t = _product_basis_vector(proj, _first_range_index(proj))
            extra = float(np.linalg.norm(one_minus @ rho @ t) ** 2)
        else:
            mask = proj.index_mask()
            rank = int(mask.sum())
            b = one_minus @ rho @ pi
            extra = float(np.real(np.trace(b @ b.conj().T))) / rank
        exact = min(1.0, abs(np.trace(rho @ pi)) ** 2 + extra)
    if exact < lower - 1e-10:
        raise AssertionError(f"F_e {exact} fell below its lower bound {lower}")
    return exact, lower


def _tau_overlap_pure(scheme: CompressionScheme, omega: StateN) -> float:
    proj = scheme.projector
    amp = np.asarray(omega.data)
    vdag = proj.basis.conj().T
    for site in range(1, omega.n + 1):
        amp = apply_local_matrix(amp, vdag, site, omega.d, omega.n)
    if scheme.tau_choice == "first_basis_vector_of_range":
        return float(abs(amp[_first_range_index(proj)]) ** 2)
    count = projector_count(proj)
    mask = proj.index_mask()
    return float((np.abs(amp[mask]) ** 2).sum()) / float(count)


# ---------------------------------------------------------------------------
# hypothesis testing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SteinTest:
    """Three-factor test T_n = Q_n P_n Q_n for a null along rho against an
    i.i.d. alternative sigma^{\\otimes n}."""

    n: int
    q_proj: ImplicitLevelProjector  # spectral cutoff of -1/n log2 sigma^{(n)}
    p_proj: ImplicitLevelProjector  # typical projector of sigma_q
    a: float  # Tr[rho (-log2 sigma)]
    h_q: float
    delta: float
    certificate_exponent: float  # a - h_q - 2 delta
    sigma_eigs: np.ndarray
    sigma_basis: np.ndarray


def build_stein_test(
    rho: DensityOperator, sigma: DensityOperator, q: float, delta: float, n: int
) -> SteinTest:
    if rho.dim != sigma.dim:
        raise ValidationError("rho and sigma must share a dimension")
    if delta <= 0:
        raise ValidationError("delta must be positive")
    sev, svec = sigma.eig()
    if sev.min() <= EIG_CUTOFF:
        raise ValidationError(
            "sigma must be full rank (the test construction assumes sigma > 0)"
        )
    levels = -np.log2(sev)
    diag_rho = np.real(np.einsum("ji,jk,ki->i", svec.conj(), rho.matrix, svec))
    a = float((diag_rho * levels).sum())
    q_proj = ImplicitLevelProjector(
        svec, n, (LevelCondition(levels, "ge", a - delta),)
    )
    sq = build_sigma_q(rho, q)
    p_proj = typical_projector(sq, delta, n)
    return SteinTest(
        n, q_proj, p_proj, a, sq.h_q, delta, a - sq.h_q - 2 * delta, sev, svec
    )


def _prob_products(values: np.ndarray, n: int) -> np.ndarray:
    return reduce(
        lambda acc, _: (acc[:, None] * values[None, :]).ravel(),
        range(n),
        np.ones(1),
    )


def stein_errors(test: SteinTest, rho_n: StateN, sigma: DensityOperator):
    """Type-I and type-II errors of the constructed test, with the proof's
    exponential certificate on the type-II error.

    beta is always exact: sigma^{\\otimes n} Q_n is diagonal in the product
    basis of sigma, and <w_y|P_n|w_y> factorizes through the one-site
    overlap matrix |V^dag W|^2, so beta costs O(n d^{n+1}).
    """
    n = test.n
    d = sigma.dim
    maskP = test.p_proj.index_mask()
    maskQ = test.q_proj.index_mask()
    # beta = sum_y s_y maskQ(y) <w_y|P|w_y>
    g = np.abs(test.p_proj.basis.conj().T @ test.sigma_basis) ** 2
    f = maskP.astype(float)
    for site in range(1, n + 1):
        f = apply_local_matrix(f.astype(complex), g.T.astype(complex), site, d, n)
    f = np.real(f)
    s_prod = _prob_products(test.sigma_eigs, n)
    beta = float((s_prod * maskQ * f).sum())
    beta_bound = 2.0 ** (-n * test.certificate_exponent)
    assert beta <= beta_bound + 1e-12, (beta, beta_bound)
    alpha = 1.0 - _test_acceptance(test, rho_n, maskP, maskQ)
    return alpha, beta, beta_bound


def _test_acceptance(test: SteinTest, rho_n: StateN, maskP, maskQ) -> float:
    """Tr(T_n rho_n) with T_n = Q P Q applied as factor actions."""
    n, d = test.n, rho_n.d
    w = test.sigma_basis
    v = test.p_proj.basis
    if rho_n.kind == "pure":
        amp = np.asarray(rho_n.data)
        wdag = w.conj().T
        for site in range(1, n + 1):
            amp = apply_local_matrix(amp, wdag, site, d, n)
        amp = amp * maskQ
        for site in range(1, n + 1):
            amp = apply_local_matrix(amp, w, site, d, n)
        vdag = v.conj().T
        for site in range(1, n + 1):
            amp = apply_local_matrix(amp, vdag, site, d, n)
        return float((np.abs(amp[maskP]) ** 2).sum())
    if rho_n.kind == "product":
        rho1 = np.asarray(rho_n.data)
        sig1 = sigma_of(test)
        if np.max(np.abs(rho1 @ sig1 - sig1 @ rho1)) <= 1e-9:
            # all operators share one product eigenbasis; everything becomes
            # a diagonal sum, so n is not limited by the dense cap
            basis, (sig_levels, rho_levels) = _shared_basis(sig1, rho1)
            condV = test.p_proj.conditions[0]
            a_q = v @ np.diag(condV.levels.astype(complex)) @ v.conj().T
            aq_levels = np.real(np.einsum("ji,jk,ki->i", basis.conj(), a_q, basis))
            condQ = LevelCondition(-np.log2(sig_levels), "ge", test.a - test.delta)
            condP = LevelCondition(aq_levels, "le", test.h_q + test.delta)
            joint = ImplicitLevelProjector(basis, n, (condQ, condP))
            p_prod = _prob_products(rho_levels, n)
            return float(p_prod[joint.index_mask()].sum())
        rho_n = StateN(d, n, "dense", rho_n.to_dense_matrix())
    rho = np.asarray(rho_n.data)
    m = sitewise_conjugate(rho, w.conj().T, d, n)
    m = m * np.outer(maskQ, maskQ)
    m = sitewise_conjugate(m, v.conj().T @ w, d, n)
    return float(np.real(np.diagonal(m))[maskP].sum())


def _shared_basis(sig1: np.ndarray, rho1: np.ndarray):
    from .typicality import simultaneous_eigenbasis

    basis, levels = simultaneous_eigenbasis([sig1, rho1])
    return basis, (np.clip(levels[0], EIG_CUTOFF, None), np.clip(levels[1], 0.0, None))


def sigma_of(test: SteinTest) -> np.ndarray:
    return (
        test.sigma_basis
        @ np.diag(test.sigma_eigs.astype(complex))
        @ test.sigma_basis.conj().T
    )


def dh_epsilon_oracle(rho_n: StateN, sigma_n: StateN, eps: float) -> float:
    """Exact hypothesis-testing relative entropy -log2 min Tr(T sigma) over
    tests with type-I error at most eps, via the Neyman--Pearson structure.

    The optimal test is the positive spectral part of rho - lam*sigma plus a
    fractional weight on the boundary eigenspace, with the type-I constraint
    met with equality.  Returns math.inf when a test with zero type-II error
    is feasible.
    """
    if not 0.0 < eps < 1.0:
        raise ValidationError("epsilon must lie in (0,1)")
    if rho_n.d != sigma_n.d or rho_n.n != sigma_n.n:
        raise ValidationError("states must share (d, n)")
    rho = rho_n.to_dense_matrix()
    sig = sigma_n.to_dense_matrix()
    target = 1.0 - eps
    sev, svec = np.linalg.eigh(sig)
    kernel = svec[:, sev <= EIG_CUTOFF]
    if kernel.shape[1] > 0:
        ker_weight = float(np.real(np.trace(kernel.conj().T @ rho @ kernel)))
        if ker_weight >= target - TIE_TOL:
            return math.inf

    def weights(lam: float):
        ev, vec = np.linalg.eigh(rho - lam * sig)
        pr = np.real(np.einsum("ji,jk,ki->i", vec.conj(), rho, vec))
        ps = np.real(np.einsum("ji,jk,ki->i", vec.conj(), sig, vec))
        return ev, pr, ps

    def strict_mass(lam: float) -> float:
        ev, pr, _ = weights(lam)
        return float(pr[ev > 0.0].sum())

    # bracket the Neyman--Pearson multiplier: strict_mass is nonincreasing
    # in lam with strict_mass(0) = 1 >= target
    lo, hi = 0.0, 1.0
    while strict_mass(hi) >= target and hi < 1e18:
        lo, hi = hi, hi * 2.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if strict_mass(mid) >= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    # the bisection pins the crossing eigenspace at 0 (to within solver
    # noise), so a much wider band cleanly separates it from the rest
    ev, pr, ps = weights(0.5 * (lo + hi))
    scale = max(1.0, float(np.abs(ev).max()))
    band = 1e-11 * scale
    pos = ev > band
    bnd = np.abs(ev) <= band
    alpha_pos = float(pr[pos].sum())
    bnd_rho = float(pr[bnd].sum())
    if alpha_pos >= target or bnd_rho <= 0.0:
        gamma = 0.0
    else:
        gamma = min(max((target - alpha_pos) / bnd_rho, 0.0), 1.0)
    beta = float(ps[pos].sum()) + gamma * float(ps[bnd].sum())
    if beta <= 0.0:
        return math.inf
    return -math.log2(beta)
