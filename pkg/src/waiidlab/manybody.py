"""Joint concentration of commuting empirical observables, generalized
Gibbs reference states, and measurement-frequency statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .core import (
    DensityOperator,
    Observable,
    POVM,
    StateN,
    ValidationError,
    apply_local_matrix,
)
from .sources import SourceSpec, generate, philox, trial_seed
from .typicality import (
    ImplicitLevelProjector,
    LevelCondition,
    projector_weight,
    simultaneous_eigenbasis,
)


@dataclass(frozen=True)
class GGESpec:
    """Generalized Gibbs data: a Hamiltonian, commuting one-site conserved
    quantities, and their inverse-temperature-like multipliers."""

    hamiltonian: Observable
    conserved: tuple
    multipliers: tuple  # (lambda_0 for H, then one per conserved quantity)

    def __post_init__(self):
        if len(self.multipliers) != 1 + len(self.conserved):
            raise ValidationError("need one multiplier for H and one per Q")
        object.__setattr__(self, "conserved", tuple(self.conserved))
        object.__setattr__(self, "multipliers", tuple(float(x) for x in self.multipliers))

    @property
    def generators(self):
        return [self.hamiltonian] + list(self.conserved)


@dataclass(frozen=True)
class FrequencyReport:
    trials: int
    n: int
    delta: float
    exceed_probability_estimate: float
    std_error: float
    per_outcome_means: np.ndarray


def joint_band_projector(
    obs: Sequence[Observable], n: int, ref_means: Sequence[float], delta: float
) -> ImplicitLevelProjector:
    """prod_j {|Abar_{j,n} - a_j| <= delta} as one multi-band projector in
    the shared eigenbasis of the commuting family."""
    basis, levels = simultaneous_eigenbasis([a.matrix for a in obs])
    conds = tuple(
        LevelCondition(lv, "band", float(a), delta)
        for lv, a in zip(levels, ref_means)
    )
    return ImplicitLevelProjector(basis, n, conds)


def joint_concentration(
    s: StateN, obs: Sequence[Observable], ref_means: Sequence[float], delta: float
) -> float:
    """Joint weight Tr[rho_n prod_j P_{j,n}] of the commuting band
    projectors around the supplied reference means."""
    if len(obs) != len(ref_means) or not obs:
        raise ValidationError("need one reference mean per observable")
    if delta <= 0:
        raise ValidationError("delta must be positive")
    return projector_weight(joint_band_projector(obs, s.n, ref_means, delta), s)


def gge_state(spec: GGESpec) -> DensityOperator:
    """gamma = exp2(-lam_0 H - sum_j lam_j Q_j) / Z in the shared eigenbasis
    of the commuting family (exponentials base 2)."""
    basis, levels = simultaneous_eigenbasis([g.matrix for g in spec.generators])
    exponent = np.zeros(spec.hamiltonian.dim)
    for lam, lv in zip(spec.multipliers, levels):
        exponent -= lam * lv
    w = np.exp2(exponent - exponent.max())  # overflow-safe
    w /= w.sum()
    return DensityOperator(basis @ np.diag(w.astype(complex)) @ basis.conj().T)


def gge_typicality(s: StateN, spec: GGESpec, delta: float) -> float:
    """Joint concentration of {H} and the conserved quantities around their
    expectations in the GGE state built from ``spec``."""
    gamma = gge_state(spec)
    obs = spec.generators
    means = [float(np.real(np.trace(gamma.matrix @ a.matrix))) for a in obs]
    return joint_concentration(s, obs, means, delta)


def sample_outcomes(s: StateN, m: POVM, seed: int) -> np.ndarray:
    """One length-n outcome record of measuring M^{\\otimes n} on the state.

    Pure payloads use sequential site-by-site conditional sampling with the
    sqrt(M_x) instrument (outcome statistics are instrument independent);
    product payloads draw i.i.d. per-site outcomes from Tr(rho M_x), which
    is the exact joint law for product states; dense payloads update the
    conditional density matrix site by site.
    """
    if m.dim != s.d:
        raise ValidationError("POVM dimension does not match the state")
    rng = philox(seed, stream=s.n)
    roots = [scipy.linalg.sqrtm(e).astype(complex) for e in m.effects]
    if s.kind == "product":
        probs = np.array(
            [max(np.real(np.trace(s.data @ e)), 0.0) for e in m.effects]
        )
        probs /= probs.sum()
        return rng.choice(len(probs), size=s.n, p=probs)
    out = np.empty(s.n, dtype=int)
    if s.kind == "pure":
        amp = np.array(s.data)
        for site in range(1, s.n + 1):
            branches = [
                apply_local_matrix(amp, r, site, s.d, s.n) for r in roots
            ]
            probs = np.array([np.linalg.norm(b) ** 2 for b in branches])
            probs = np.where(probs < 1e-15, 0.0, probs)
            probs /= probs.sum()
            x = int(rng.choice(len(probs), p=probs))
            out[site - 1] = x
            amp = branches[x] / np.linalg.norm(branches[x])
        return out
    rho = s.to_dense_matrix()
    for site in range(1, s.n + 1):
        branch_probs = []
        for r in roots:
            mat = _lift(r, site, s.d, s.n)
            branch_probs.append(max(np.real(np.trace(mat @ rho @ mat.conj().T)), 0.0))
        probs = np.array(branch_probs)
        probs = np.where(probs < 1e-15, 0.0, probs)
        probs /= probs.sum()
        x = int(rng.choice(len(probs), p=probs))
        out[site - 1] = x
        mat = _lift(roots[x], site, s.d, s.n)
        rho = mat @ rho @ mat.conj().T
        rho /= np.real(np.trace(rho))
    return out


def _lift(op: np.ndarray, site: int, d: int, n: int) -> np.ndarray:
    m = np.array([[1.0 + 0j]])
    for i in range(1, n + 1):
        m = np.kron(m, op if i == site else np.eye(d))
    return m


def multinomial_sample(rho: DensityOperator, m: POVM, n: int, seed: int) -> np.ndarray:
    """Reference sampler: n i.i.d. draws from p(x) = Tr(rho M_x)."""
    probs = np.array([max(np.real(np.trace(rho.matrix @ e)), 0.0) for e in m.effects])
    probs /= probs.sum()
    return philox(seed, stream=n).choice(len(probs), size=n, p=probs)


def frequency_concentration(
    spec: SourceSpec,
    m: POVM,
    n: int,
    delta: float,
    trials: int,
    seed: int,
    state: Optional[StateN] = None,
) -> FrequencyReport:
    """Monte Carlo estimate of P(max_x |phat_n(x) - p(x)| > delta) where
    p(x) = Tr(rho M_x) for the reference state rho."""
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    p_ref = np.array(
        [np.real(np.trace(spec.reference.matrix @ e)) for e in m.effects]
    )
    exceed = 0
    freq_sum = np.zeros(m.num_outcomes)
    for t in range(trials):
        st = state if state is not None else generate(spec, n, trial=t)
        outcomes = sample_outcomes(st, m, trial_seed(seed, t))
        phat = np.bincount(outcomes, minlength=m.num_outcomes) / n
        freq_sum += phat
        if np.max(np.abs(phat - p_ref)) > delta:
            exceed += 1
    est = exceed / trials
    se = math.sqrt(max(est * (1 - est), 0.0) / trials)
    return FrequencyReport(trials, n, delta, est, se, freq_sum / trials)
