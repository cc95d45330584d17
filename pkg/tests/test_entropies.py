"""Unit tests for the smooth zero-order entropy and the spectral
entropy-rate diagnostics."""

import math

import numpy as np
import pytest

from waiidlab.core import DensityOperator, StateN, ValidationError
from waiidlab.entropies import (
    default_gamma_grid,
    projector_rate_certificate,
    smooth_zero_renyi,
    spectral_curve,
    sup_entropy_estimate,
)
from waiidlab.sources import haar_state
from waiidlab.typicality import (
    build_sigma_q,
    projector_logdim,
    projector_weight,
    typical_projector,
)


class TestSmoothZeroRenyi:
    def test_pure_state_is_zero(self):
        s = haar_state(2, 5, seed=2)
        for eps in (0.01, 0.3, 0.9):
            assert smooth_zero_renyi(s, eps) == 0.0

    def test_maximally_mixed_closed_form(self):
        for n, eps in [(3, 0.1), (4, 0.35)]:
            s = StateN.tensor_power(DensityOperator.maximally_mixed(2), n)
            expect = math.log2(math.ceil((1 - eps) * 2**n))
            assert smooth_zero_renyi(s, eps) == pytest.approx(expect, abs=1e-12)

    def test_two_site_enumeration(self):
        # spectrum {9,3,3,1}/16: top-2 mass 12/16 < 0.8 but top-3 is 15/16
        s = StateN.tensor_power(DensityOperator.diag([0.75, 0.25]), 2)
        assert smooth_zero_renyi(s, 0.2) == pytest.approx(math.log2(3), abs=1e-12)

    def test_nonincreasing_in_epsilon(self):
        s = StateN.tensor_power(DensityOperator.diag([0.6, 0.4]), 6)
        vals = [smooth_zero_renyi(s, e) for e in (0.05, 0.1, 0.2, 0.4, 0.8)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_rejects_bad_epsilon(self):
        s = haar_state(2, 2, seed=1)
        for eps in (0.0, 1.0):
            with pytest.raises(ValidationError):
                smooth_zero_renyi(s, eps)

    def test_projector_implication(self):
        # weight >= 1 - eps forces the smooth zero-order entropy below the
        # projector log-dimension
        rho = DensityOperator.diag([0.75, 0.25])
        sq = build_sigma_q(rho, 0.1)
        checked = 0
        for n in (4, 6, 8):
            for delta in (0.2, 0.4):
                proj = typical_projector(sq, delta, n)
                s = StateN.tensor_power(rho, n)
                w = projector_weight(proj, s)
                if w < 1.0:
                    eps = min(1.0 - w + 1e-12, 0.999)
                    assert smooth_zero_renyi(s, eps) <= projector_logdim(proj) + 1e-12
                    checked += 1
        assert checked > 0


class TestSpectralCurve:
    def test_pure_state_closed_form(self):
        s = haar_state(2, 6, seed=4)
        grid = np.linspace(0.0, 1.0, 33)
        curve = spectral_curve(s, grid)
        expect = np.clip(1.0 - np.exp2(-6 * grid), 0.0, None)
        assert np.allclose(curve.values, expect, atol=1e-12)

    def test_maximally_mixed_closed_form(self):
        n = 4
        s = StateN.tensor_power(DensityOperator.maximally_mixed(2), n)
        grid = np.linspace(0.0, 1.0, 65)
        curve = spectral_curve(s, grid)
        expect = np.clip(1.0 - 2**n * np.exp2(-n * grid), 0.0, None)
        assert np.allclose(curve.values, expect, atol=1e-12)

    def test_monotone_and_bounded(self):
        s = StateN.tensor_power(DensityOperator.diag([0.7, 0.2, 0.1]), 4)
        curve = spectral_curve(s, default_gamma_grid(3))
        assert np.all(np.diff(curve.values) >= -1e-15)
        assert np.all((curve.values >= 0.0) & (curve.values <= 1.0))

    def test_rejects_empty_grid(self):
        s = haar_state(2, 2, seed=1)
        with pytest.raises(ValidationError):
            spectral_curve(s, [])


class TestSupEntropyEstimate:
    def curves(self, make_state, ns, d=2):
        grid = default_gamma_grid(d)
        return [spectral_curve(make_state(n), grid) for n in ns]

    def test_pure_estimates_decrease_in_n(self):
        # the strict tol=1e-3 crossing sits at log2(1000)/n bits, outside the
        # per-site grid for small n; a bulk-mass crossing shows the decay
        curves = self.curves(lambda n: haar_state(2, n, seed=5), (4, 8, 12))
        est, per_n, flagged = sup_entropy_estimate(curves, tol=0.7)
        gammas = [g for _, g in per_n]
        assert not flagged
        assert all(b < a for a, b in zip(gammas, gammas[1:]))
        assert est == gammas[-1]

    def test_requires_two_sizes(self):
        curves = self.curves(lambda n: haar_state(2, n, seed=5), (4,))
        with pytest.raises(ValidationError):
            sup_entropy_estimate(curves, tol=1e-3)

    def test_flagged_when_curve_never_crosses(self):
        # a truncated grid cannot reach the crossing for a mixed state
        rho = DensityOperator.diag([0.55, 0.45])
        curves = [
            spectral_curve(StateN.tensor_power(rho, n), np.linspace(0, 0.2, 9))
            for n in (3, 4)
        ]
        est, _, flagged = sup_entropy_estimate(curves, tol=1e-3)
        assert flagged
        assert est == pytest.approx(0.2)


class TestRateCertificate:
    def test_full_projectors(self):
        rho = DensityOperator.maximally_mixed(2)
        sq = build_sigma_q(rho, 0.1)
        pairs = []
        for n in (4, 6):
            proj = typical_projector(sq, 0.1, n)
            s = StateN.tensor_power(rho, n)
            pairs.append((projector_weight(proj, s), projector_logdim(proj), n))
        cert, flagged = projector_rate_certificate(pairs, eta=0.01)
        assert cert == pytest.approx(1.0 + 0.02, abs=1e-12)
        assert not flagged

    def test_dominates_estimate_for_iid(self):
        rho = DensityOperator.diag([0.75, 0.25])
        sq = build_sigma_q(rho, 0.1)
        delta = 0.2
        pairs = []
        for n in (4, 8, 12):
            proj = typical_projector(sq, delta, n)
            s = StateN.tensor_power(rho, n)
            pairs.append((projector_weight(proj, s), projector_logdim(proj), n))
        cert, _ = projector_rate_certificate(pairs, eta=0.01)
        assert cert <= sq.h_q + delta + 0.02 + 1e-12
        curves = [
            spectral_curve(StateN.tensor_power(rho, n), default_gamma_grid(2))
            for n in (4, 8, 12)
        ]
        est, _, _ = sup_entropy_estimate(curves, tol=0.7)
        assert cert >= est

    def test_flagged_when_weight_low(self):
        pairs = [(0.3, 2.0, 4), (0.4, 2.5, 6)]
        cert, flagged = projector_rate_certificate(pairs, eta=0.05)
        assert flagged
        assert cert == pytest.approx(max(2.0 / 4, 2.5 / 6) + 0.1)

    def test_rejects_bad_eta(self):
        with pytest.raises(ValidationError):
            projector_rate_certificate([(1.0, 1.0, 2)], eta=0.0)
