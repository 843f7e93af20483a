"""Scale-function backends against closed forms, transforms and each other."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from lastzero.errors import DomainError, NumericError
from lastzero.models import (
    CompoundPoisson,
    DeterministicLaw,
    ExponentialLaw,
    LevyModel,
    brownian_motion,
    cramer_lundberg,
    jump_diffusion,
    stable_process,
)
from lastzero.scale import ScaleEvaluator

BM = brownian_motion()
CL = cramer_lundberg(premium=1.5, claim_rate=1.0, claim_mean=1.0)
JD = jump_diffusion(mu=-0.3, sigma=0.6, rate=0.8, law=ExponentialLaw(mean=0.5))
DET = LevyModel(mu=-1.2, sigma=0.0, jumps=CompoundPoisson(rate=1.0, law=DeterministicLaw(size=0.7)))
STABLE = stable_process(alpha=1.5, scale=1.0, mu=-0.5)


def bm_scale(q, x, sigma=1.0):
    """Independent closed form for driftless Brownian motion."""
    if x < 0:
        return 0.0
    a = math.sqrt(2.0 * q) / sigma
    if a == 0:
        return 2.0 * x / sigma**2
    return 2.0 * math.sinh(a * x) / (a * sigma**2)


class TestPointValues:
    def test_zero_below_zero(self):
        for model in (BM, CL, DET, STABLE):
            ev = ScaleEvaluator(model, 0.7)
            assert ev.value(-1.0) == 0.0
            assert ev.value(-1e-12) == 0.0

    def test_bm_closed_form(self):
        ev = ScaleEvaluator(BM, 0.5)
        assert ev.value(1.0) == pytest.approx(2.0 * math.sinh(1.0), rel=1e-13)
        for x in (0.05, 0.7, 3.2):
            assert ev.value(x) == pytest.approx(bm_scale(0.5, x), rel=1e-12)

    def test_value_at_zero_finite_variation(self):
        assert ScaleEvaluator(CL, 0.5).value(0.0) == pytest.approx(1.0 / CL.drift_d, rel=1e-14)
        assert ScaleEvaluator(DET, 0.5).value(0.0) == pytest.approx(1.0 / DET.drift_d, rel=1e-14)
        # continuity from the right
        assert ScaleEvaluator(CL, 0.5).value(1e-10) == pytest.approx(1.0 / CL.drift_d, rel=1e-8)

    def test_value_at_zero_infinite_variation(self):
        for model in (BM, JD, STABLE):
            assert ScaleEvaluator(model, 0.5).value(0.0) == 0.0

    def test_oscillating_q0(self):
        # premium 1, unit exponential claims: psi(b) = b^2/(1+b), W(x) = x + 1
        osc = cramer_lundberg(premium=1.0, claim_rate=1.0, claim_mean=1.0)
        ev = ScaleEvaluator(osc, 0.0)
        for x in (0.0, 0.4, 2.0):
            assert ev.value(x) == pytest.approx(x + 1.0, rel=1e-12)
        assert ScaleEvaluator(BM, 0.0).value(1.3) == pytest.approx(2.6, rel=1e-13)

    @pytest.mark.parametrize("q", [0.1, 0.5, 2.0])
    def test_inversion_matches_closed_bm(self, q):
        closed = ScaleEvaluator(BM, q)
        inv = ScaleEvaluator(BM, q, method="talbot")
        for x in np.geomspace(0.01, 5.0, 12):
            assert inv.value(x) == pytest.approx(closed.value(x), rel=1e-9)

    def test_inversion_matches_closed_cl(self):
        closed = ScaleEvaluator(CL, 0.5)
        inv = ScaleEvaluator(CL, 0.5, method="talbot")
        for x in (0.1, 0.9, 2.7):
            assert inv.value(x) == pytest.approx(closed.value(x), rel=1e-8)

    def test_stable_laplace_round_trip(self):
        ev = ScaleEvaluator(STABLE, 0.5)
        beta = ev.phi_q + 1.0
        val, _ = quad(lambda x: math.exp(-beta * x) * ev.value(x), 0, 45, limit=400)
        assert val == pytest.approx(1.0 / (STABLE.psi(beta) - 0.5), rel=1e-9)

    def test_deterministic_jump_series_round_trip(self):
        ev = ScaleEvaluator(DET, 0.5)
        assert ev.method == "closed"
        beta = ev.phi_q + 1.0
        val, _ = quad(lambda x: math.exp(-beta * x) * ev.value(x), 0, 45, limit=500)
        assert val == pytest.approx(1.0 / (DET.psi(beta) - 0.5), rel=1e-8)

    def test_talbot_failure_is_loud(self):
        # the Dirichlet pole strings of a deterministic-jump exponent defeat the
        # fixed-Talbot contour; the backend must fail with diagnostics
        ev = ScaleEvaluator(DET, 0.5, method="talbot")
        with pytest.raises(NumericError) as err:
            ev.value(0.59)
        assert "nodes" in err.value.diagnostics

    @given(st.floats(0.05, 4.0))
    @settings(max_examples=25, deadline=None)
    def test_strictly_increasing_and_positive(self, q):
        for model in (BM, CL, JD):
            ev = ScaleEvaluator(model, q)
            grid = np.linspace(0.01, 4.0, 41)
            vals = ev.values(grid)
            assert (vals > 0).all()
            assert (np.diff(vals) > 0).all()


class TestIntegral:
    def test_empty_integral(self):
        ev = ScaleEvaluator(BM, 0.5)
        assert ev.integral_exp(1.0, 0.0) == 0.0
        assert ev.integral_exp(1.0, -2.0) == 0.0

    def test_bm_closed_value(self):
        ev = ScaleEvaluator(BM, 0.5)
        assert ev.integral_exp(0.0, 1.0) == pytest.approx(2.0 * (math.cosh(1.0) - 1.0), rel=1e-12)

    @pytest.mark.parametrize("model", [BM, CL, JD, DET])
    def test_against_quadrature_oracle(self, model):
        ev = ScaleEvaluator(model, 0.8)
        for beta, x in ((0.0, 1.0), (0.6, 2.3), (-0.4, 0.7)):
            oracle, _ = quad(lambda y: math.exp(-beta * y) * ev.value(y), 0, x, limit=300)
            assert ev.integral_exp(beta, x) == pytest.approx(oracle, rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("model", [BM, CL, JD, DET, STABLE])
    def test_laplace_transform_identity(self, model):
        # int_0^inf e^{-beta x} W^(q)(x) dx = 1/(psi(beta) - q) at beta = Phi(q) + 1
        q = 0.5
        ev = ScaleEvaluator(model, q)
        beta = ev.phi_q + 1.0
        x_max = 40.0
        val, _ = quad(lambda x: math.exp(-beta * x) * ev.value(x), 0, x_max, limit=500)
        assert val == pytest.approx(1.0 / (model.psi(beta) - q), rel=1e-6)


class TestTiltedIdentity:
    def test_residual_zero_at_zero(self):
        assert ScaleEvaluator(BM, 0.5).tilted_residual(0.0) == 0.0

    def test_bm_closed(self):
        ev = ScaleEvaluator(BM, 0.5)
        for x in (0.5, 1.0, 2.0):
            assert abs(ev.tilted_residual(x)) < 1e-8

    def test_cl_inversion_backend(self):
        ev = ScaleEvaluator(CL, 0.5, method="talbot")
        assert abs(ev.tilted_residual(1.0)) < 1e-6


class TestAsymptotics:
    @pytest.mark.parametrize("model", [BM, CL, JD])
    def test_growth_rate(self, model):
        # e^{-Phi(q) x} W^(q)(x) -> Phi'(q)
        q = 0.5
        ev = ScaleEvaluator(model, q)
        x = 1.0
        while math.exp(-ev.phi_q * x) > 1e-6 * ev.phi_prime:
            x += 1.0
        ratio = math.exp(-ev.phi_q * x) * ev.value(x) / ev.phi_prime
        assert abs(ratio - 1.0) < 0.01

    @pytest.mark.parametrize("model", [BM, CL, JD])
    def test_ratio_limit_at_zero(self, model):
        # W^{(q+a)}(eps) / W^(q)(eps) -> 1 as eps -> 0
        ev1 = ScaleEvaluator(model, 0.5)
        ev2 = ScaleEvaluator(model, 1.5)
        ratios = [ev2.value(e) / ev1.value(e) for e in (1e-3, 1e-4, 1e-5, 1e-6)]
        assert abs(ratios[-1] - 1.0) < 1e-4
        assert abs(ratios[-1] - 1.0) <= abs(ratios[0] - 1.0) + 1e-12


class TestResolventTail:
    @pytest.mark.parametrize("model", [BM, CL, JD])
    def test_against_quadrature(self, model):
        q = 0.5
        ev = ScaleEvaluator(model, q)
        for beta, x in ((0.25, 0.4), (0.25, -0.7), (1.5, 0.0)):
            oracle = 0.0
            lo = x
            while lo < 60.0:
                hi = min(lo + 1.0, 60.0)
                val, _ = quad(
                    lambda z: math.exp(-beta * z) * (ev.phi_prime * math.exp(ev.phi_q * z) - ev.value(z)),
                    lo,
                    hi,
                    limit=200,
                )
                oracle += val
                lo = hi
            assert ev.resolvent_tail(beta, x) == pytest.approx(oracle, rel=1e-7, abs=1e-9)

    def test_divergent_beta_rejected(self):
        ev = ScaleEvaluator(BM, 0.5)
        # subleading exponent of the BM resolvent is -zeta = -1; beta below it diverges
        with pytest.raises(DomainError):
            ev.resolvent_tail(-1.5, 0.0)


class TestBackendSelection:
    def test_methods(self):
        assert ScaleEvaluator(BM, 0.5).method == "closed"
        assert ScaleEvaluator(CL, 0.5).method == "closed"
        assert ScaleEvaluator(DET, 0.5).method == "closed"
        assert ScaleEvaluator(STABLE, 0.5).method == "talbot"
        assert ScaleEvaluator(BM, 0.5, method="talbot").method == "talbot"

    def test_closed_unavailable(self):
        with pytest.raises(DomainError):
            ScaleEvaluator(STABLE, 0.5, method="closed")

    def test_negative_q_rejected(self):
        with pytest.raises(DomainError):
            ScaleEvaluator(BM, -0.1)
