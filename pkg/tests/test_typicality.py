"""Unit tests for empirical-average concentration and the implicit typical
projector, validated against dense matrix oracles built independently here."""

import math

import numpy as np
import pytest

from waiidlab.core import (
    DensityOperator,
    Observable,
    StateN,
    ValidationError,
    spectral_projector,
    von_neumann_entropy,
)
from waiidlab.sources import haar_state
from waiidlab.typicality import (
    ImplicitLevelProjector,
    LevelCondition,
    build_sigma_q,
    chebyshev_tail,
    empirical_moments,
    projector_count,
    projector_logdim,
    projector_weight,
    simultaneous_eigenbasis,
    typical_projector,
    variance_about,
)

RNG = np.random.default_rng(20240818)


def random_density(d, rng=RNG):
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = m @ m.conj().T
    return DensityOperator(rho / np.trace(rho))


def random_observable(d, rng=RNG):
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return Observable((m + m.conj().T) / 2)


def site_average_matrix(a: np.ndarray, d: int, n: int) -> np.ndarray:
    """Dense (1/n) sum_i 1 ⊗ ... ⊗ a_(site i) ⊗ ... ⊗ 1."""
    dim = d**n
    total = np.zeros((dim, dim), dtype=complex)
    for site in range(n):
        m = np.array([[1.0 + 0j]])
        for j in range(n):
            m = np.kron(m, a if j == site else np.eye(d))
        total += m
    return total / n


class TestSigmaQ:
    def test_rejects_degenerate_q(self):
        rho = DensityOperator.diag([1.0, 0.0])
        for q in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValidationError):
                build_sigma_q(rho, q)

    def test_rate_closed_form_for_pure_reference(self):
        # sigma_q of a pure qubit state at q=1/2 is diag(3/4, 1/4), and the
        # rate is -log2(3/4) exactly
        sq = build_sigma_q(DensityOperator.diag([1.0, 0.0]), 0.5)
        assert sq.h_q == pytest.approx(math.log2(4 / 3), abs=1e-12)
        assert np.allclose(np.sort(-np.exp2(-sq.levels)), [-0.75, -0.25])

    def test_rate_approaches_entropy_as_q_vanishes(self):
        rho = random_density(3)
        s = von_neumann_entropy(rho)
        gaps = [abs(build_sigma_q(rho, q).h_q - s) for q in (0.1, 0.01, 0.001, 1e-5)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-4

    def test_full_rank_guarantee(self):
        sq = build_sigma_q(DensityOperator.diag([1.0, 0.0]), 0.2)
        assert np.all(np.isfinite(sq.levels))


class TestMoments:
    def test_identity_observable_trivial(self):
        s = StateN.tensor_power(DensityOperator.diag([0.6, 0.4]), 5)
        mean, moment = empirical_moments(s, Observable(np.eye(2)), 1.0)
        assert mean == pytest.approx(1.0, abs=1e-12)
        assert moment == pytest.approx(0.0, abs=1e-12)

    def test_iid_moment_closed_form(self):
        # central second moment of the site average is (Tr(rho A^2)-mu^2)/n
        for _ in range(20):
            d = int(RNG.integers(2, 4))
            n = int(RNG.integers(2, 9))
            rho, a = random_density(d), random_observable(d)
            mu = float(np.real(np.trace(rho.matrix @ a.matrix)))
            s = StateN.tensor_power(rho, n)
            mean, moment = empirical_moments(s, a, mu)
            expect = (
                float(np.real(np.trace(rho.matrix @ a.matrix @ a.matrix))) - mu**2
            ) / n
            assert mean == pytest.approx(mu, abs=1e-10)
            assert moment == pytest.approx(expect, abs=1e-10)

    def test_chebyshev_inequality_exact(self):
        for _ in range(10):
            d = int(RNG.integers(2, 4))
            n = int(RNG.integers(2, 7))
            rho, a = random_density(d), random_observable(d)
            mu = float(np.real(np.trace(rho.matrix @ a.matrix)))
            s = StateN.tensor_power(rho, n)
            delta = float(RNG.uniform(0.05, 0.5))
            _, moment = empirical_moments(s, a, mu)
            assert chebyshev_tail(s, a, mu, delta) <= moment / delta**2 + 1e-12

    def test_tail_matches_dense_oracle(self):
        rho, a = random_density(2), random_observable(2)
        mu = float(np.real(np.trace(rho.matrix @ a.matrix)))
        n, delta = 4, 0.3
        s = StateN.tensor_power(rho, n)
        abar = site_average_matrix(a.matrix, 2, n)
        dev = np.eye(2**n) - spectral_projector(
            (abar - mu * np.eye(2**n)) @ (abar - mu * np.eye(2**n)),
            delta**2,
            "le",
        )
        oracle = float(np.real(np.trace(s.to_dense_matrix() @ dev)))
        assert chebyshev_tail(s, a, mu, delta) == pytest.approx(oracle, abs=1e-10)

    def test_variance_about(self):
        rho, a = random_density(2), random_observable(2)
        mu = float(np.real(np.trace(rho.matrix @ a.matrix)))
        v = variance_about(rho, a, mu)
        expect = float(np.real(np.trace(rho.matrix @ a.matrix @ a.matrix))) - mu**2
        assert v == pytest.approx(expect, abs=1e-12)


class TestTypicalProjector:
    def dense_projector(self, sq, delta, n):
        a_q = sq.basis @ np.diag(sq.levels.astype(complex)) @ sq.basis.conj().T
        abar = site_average_matrix(a_q, sq.rho.dim, n)
        return spectral_projector(abar, sq.h_q + delta, "le")

    def test_weight_matches_dense_oracle_all_payloads(self):
        for d, n in [(2, 5), (3, 4), (2, 6), (3, 6)]:
            rho = random_density(d)
            sq = build_sigma_q(rho, 0.1)
            proj = typical_projector(sq, 0.2, n)
            dense_p = self.dense_projector(sq, 0.2, n)
            states = [StateN.tensor_power(rho, n), haar_state(d, n, seed=42)]
            states.append(StateN(d, n, "dense", states[1].to_dense_matrix()))
            for s in states:
                oracle = float(np.real(np.trace(s.to_dense_matrix() @ dense_p)))
                assert projector_weight(proj, s) == pytest.approx(oracle, abs=1e-10)

    def test_count_matches_dense_rank(self):
        for d, n in [(2, 6), (3, 4)]:
            rho = random_density(d)
            sq = build_sigma_q(rho, 0.15)
            proj = typical_projector(sq, 0.1, n)
            rank = round(np.real(np.trace(self.dense_projector(sq, 0.1, n))))
            assert projector_count(proj) == rank

    def test_rank_bound_at_large_n(self):
        # counting runs through an integer-exact convolution, so n is not
        # limited by any payload cap
        rho = DensityOperator.diag([0.75, 0.25])
        sq = build_sigma_q(rho, 0.1)
        for n in (50, 120, 200):
            proj = typical_projector(sq, 0.1, n)
            logdim = projector_logdim(proj)
            assert logdim <= n * (sq.h_q + 0.1) + 1e-9
            assert projector_count(proj) >= 1

    def test_iid_weight_certificate(self):
        rho = random_density(2)
        sq = build_sigma_q(rho, 0.1)
        a_q = Observable(sq.basis @ np.diag(sq.levels.astype(complex)) @ sq.basis.conj().T)
        var = variance_about(rho, a_q, sq.h_q)
        for n in (4, 8, 16):
            proj = typical_projector(sq, 0.2, n)
            w = projector_weight(proj, StateN.tensor_power(rho, n))
            assert 1.0 - w <= var / (n * 0.2**2) + 1e-12

    def test_empty_projector_logdim(self):
        cond = LevelCondition(np.array([5.0, 6.0]), "le", 1.0)
        proj = ImplicitLevelProjector(np.eye(2, dtype=complex), 3, (cond,))
        assert projector_count(proj) == 0
        assert projector_logdim(proj) == -math.inf


class TestSimultaneousEigenbasis:
    def test_commuting_family(self):
        base = random_observable(4).matrix
        mats = [base, base @ base, 2.0 * base - np.eye(4)]
        basis, levels = simultaneous_eigenbasis(mats)
        for m, lv in zip(mats, levels):
            recon = basis @ np.diag(lv.astype(complex)) @ basis.conj().T
            assert np.allclose(recon, m, atol=1e-8)

    def test_degenerate_spectra(self):
        # first matrix fully degenerate: its eigenbasis alone says nothing,
        # the joint basis must still diagonalize the second matrix
        a = np.eye(3, dtype=complex)
        b = np.diag([1.0, 2.0, 3.0]).astype(complex)
        u = np.linalg.qr(RNG.standard_normal((3, 3)) + 1j * RNG.standard_normal((3, 3)))[0]
        mats = [u @ a @ u.conj().T, u @ b @ u.conj().T]
        basis, levels = simultaneous_eigenbasis(mats)
        for m, lv in zip(mats, levels):
            recon = basis @ np.diag(lv.astype(complex)) @ basis.conj().T
            assert np.allclose(recon, m, atol=1e-8)

    def test_rejects_noncommuting(self):
        x = np.array([[0, 1], [1, 0]], dtype=complex)
        z = np.diag([1.0, -1.0]).astype(complex)
        with pytest.raises(ValidationError):
            simultaneous_eigenbasis([x, z])
