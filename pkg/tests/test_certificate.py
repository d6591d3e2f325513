"""Tests for the H(theta) certificate pipeline."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dln_nse.certificate import (
    CertificateInput,
    HCertificate,
    bound_flags,
    build_certificate,
    certify,
    debug_report,
    h11_floor,
    h22_floor,
    max_timestep,
    max_timestep_factor,
    system_residuals,
)
from dln_nse.dln_core import make_coefficients
from dln_nse.errors import DomainError, InadmissibleTimestep

# Reference solution at theta=0.5, s=0.2, from a 40-digit Newton solve of
# the six coefficient equations started at the pipeline output.
REF_HALF = dict(
    h11=0.33818106411341816951,
    h22=0.13513513513513513514,
    epsilon=0.15708532898474899984,
    a=0.24942188591603793636,
    b=-0.34767899248902257796,
    c=0.25841006198508434849,
)


def vector_identity_residual(cert, theta, s, triple):
    """Both sides of the H-decomposition evaluated on explicit vectors."""
    c = make_coefficients(theta)
    yp, yc, yn = triple
    gu, gv = c.g_weights
    ybeta = c.beta[0] * yp + c.beta[1] * yc + c.beta[2] * yn
    diss = c.dissip[0] * yp + c.dissip[1] * yc + c.dissip[2] * yn
    lhs = (gu * yn @ yn + gv * yc @ yc - gu * yc @ yc - gv * yp @ yp
           + diss @ diss + s / 2 * ybeta @ ybeta)
    mix = cert.a * yn + cert.b * yc + cert.c * yp
    rhs = ((1 + cert.epsilon) * (cert.h11 * yn @ yn + cert.h22 * yc @ yc)
           - (cert.h11 * yc @ yc + cert.h22 * yp @ yp) + mix @ mix)
    scale = max(abs(lhs), abs(rhs), *(abs(v) for v in (yn @ yn, yc @ yc, yp @ yp)))
    return (lhs - rhs) / scale


class TestMaxTimestep:
    def test_first_branch(self):
        assert max_timestep(0.5, 1.0, 1.0) == pytest.approx(48 / 107, rel=1e-15)

    def test_second_branch(self):
        assert max_timestep(0.9, 1.0, 1.0) == pytest.approx(0.2, rel=1e-14)
        first = 8 * 0.9 * (1 - 0.81) / (8 - 6 * 0.81 + 3 * 0.9**4)
        assert first == pytest.approx(1.368 / 5.1083, rel=1e-12)
        assert first > 0.2

    def test_vanishes_at_one(self):
        assert max_timestep_factor(1 - 1e-9) < 1e-8

    def test_scaling(self):
        assert max_timestep(0.3, 2.0, 5.0) == pytest.approx(max_timestep_factor(0.3) / 10)

    @pytest.mark.parametrize("nu, lam", [(0.0, 1.0), (1.0, -1.0), (math.nan, 1.0)])
    def test_bad_parameters(self, nu, lam):
        with pytest.raises(DomainError):
            max_timestep(0.5, nu, lam)


class TestBuild:
    def test_reference_values(self):
        cert = certify(0.5, 1.0, 1.0, 0.2)
        for k, v in REF_HALF.items():
            assert getattr(cert, k) == pytest.approx(v, rel=1e-13), k

    def test_half_all_flags(self):
        inp = CertificateInput(0.5, 1.0, 1.0, 0.2)
        cert = build_certificate(inp)
        assert system_residuals(cert, inp).max_relative() < 1e-10
        flags = bound_flags(cert, inp)
        assert flags.all_pass, flags.failed()

    def test_inadmissible(self):
        with pytest.raises(InadmissibleTimestep) as info:
            CertificateInput(0.5, 1.0, 1.0, 0.5)
        assert info.value.limit == pytest.approx(0.448598, abs=1e-6)
        with pytest.raises(InadmissibleTimestep):
            certify(0.5, 1.0, 1.0, 48 / 107)

    def test_accepts_tuple(self):
        assert build_certificate((0.5, 1.0, 1.0, 0.2)) == certify(0.5, 1.0, 1.0, 0.2)

    def test_sum_identity(self):
        for th in (0.1, 0.5, 0.9):
            inp = CertificateInput(th, 1.0, 1.0, 0.5 * max_timestep(th, 1, 1))
            c = build_certificate(inp)
            assert (c.a + c.b + c.c) ** 2 == pytest.approx(c.x, rel=1e-10)
            assert c.epsilon * (c.h11 + c.h22) + c.x == pytest.approx(inp.s / 2, rel=1e-10)

    def test_h11_solves_its_quadratic(self):
        # h11^2 + B h11 - C h22 = 0, so h11 + B = C h22 / h11 > -B is strict
        for th in np.linspace(0.05, 0.95, 19):
            c = certify(th, 1.0, 1.0, 0.7 * max_timestep(th, 1, 1))
            assert c.h11 + c.B == pytest.approx(c.C * c.h22 / c.h11, rel=1e-9, abs=1e-15)
            assert c.h11 > -c.B

    def test_small_timestep_limit(self):
        c = certify(0.5, 1.0, 1.0, 1e-8)
        assert 0 < c.epsilon < 1e-6
        assert 1 / c.epsilon > 1e6
        assert system_residuals(c, CertificateInput(0.5, 1.0, 1.0, 1e-8)).max_relative() < 1e-10

    def test_near_limit_uses_extended_precision(self):
        lim = max_timestep(0.5, 1, 1)
        inp = CertificateInput(0.5, 1.0, 1.0, lim * (1 - 1e-8))
        c = build_certificate(inp)
        assert c.extended_precision
        assert system_residuals(c, inp).max_relative() < 1e-10
        assert bound_flags(c, inp).all_pass
        assert not certify(0.5, 1.0, 1.0, 0.2).extended_precision

    def test_vector_identity(self):
        rng = np.random.default_rng(11)
        for th in (0.2, 0.5, 0.8):
            s = 0.6 * max_timestep_factor(th)
            cert = certify(th, 1.0, 1.0, s)
            for _ in range(20):
                t = [rng.standard_normal(16) for _ in range(3)]
                assert abs(vector_identity_residual(cert, th, s, t)) < 1e-12

    def test_effective_constants(self):
        c = certify(0.4, 2.0, 3.0, 0.01)
        assert c.C_h_eff == max(c.h11, c.h22)
        assert c.C_eps_eff == pytest.approx(c.s / c.epsilon)
        assert 0 < c.mu < 1
        assert c.h_norm_sq(2.0, 3.0) == pytest.approx(2 * c.h11 + 3 * c.h22)


class TestScaling:
    @settings(max_examples=40, deadline=None)
    @given(th=st.floats(0.02, 0.98), frac=st.floats(0.01, 0.99), scale=st.floats(0.01, 100))
    def test_covariance(self, th, frac, scale):
        dt = frac * max_timestep(th, 1.0, 1.0)
        c1 = certify(th, 1.0, 1.0, dt)
        c2 = certify(th, scale, 1.0, dt / scale)
        for k in ("h11", "h22", "epsilon", "a", "b", "c"):
            assert getattr(c2, k) == pytest.approx(getattr(c1, k), rel=1e-9, abs=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(th=st.floats(0.01, 0.99), frac=st.floats(1e-4, 0.999))
    def test_admissible_property(self, th, frac):
        inp = CertificateInput(th, 1.0, 1.0, frac * max_timestep(th, 1.0, 1.0))
        c = build_certificate(inp)
        assert system_residuals(c, inp).max_relative() < 1e-10
        assert bound_flags(c, inp).all_pass


class TestResiduals:
    def test_h11_perturbation(self):
        inp = CertificateInput(0.5, 1.0, 1.0, 0.2)
        c = build_certificate(inp)
        base = system_residuals(c, inp)
        d = c.as_dict()
        d.pop("C_h_eff"), d.pop("C_eps_eff")
        d["h11"] += 1e-3
        bumped = system_residuals(HCertificate(**d), inp)
        assert bumped.curr_sq - base.curr_sq == pytest.approx(-1e-3, abs=1e-15)
        assert bumped.next_sq - base.next_sq == pytest.approx((1 + c.epsilon) * 1e-3, abs=1e-15)

    def test_b_negated(self):
        inp = CertificateInput(0.5, 1.0, 1.0, 0.2)
        c = build_certificate(inp)
        d = c.as_dict()
        d.pop("C_h_eff"), d.pop("C_eps_eff")
        d["b"] = -d["b"]
        res = system_residuals(HCertificate(**d), inp)
        assert res.next_curr == pytest.approx(-4 * c.a * c.b, rel=1e-12)
        assert abs(res.next_prev) < 1e-14

    def test_floors(self):
        assert h11_floor(0.5) == pytest.approx(0.0625 * 0.875)
        assert h22_floor(0.5) == pytest.approx(0.5 * 0.25 * 1.5 * 2.5 / 16)

    def test_debug_report(self):
        inp = CertificateInput(0.3, 1.0, 1.0, 0.1)
        rep = debug_report(build_certificate(inp), inp)
        assert rep["flag_h11_lower"] is True
        assert rep["abc_sum"] ** 2 == pytest.approx(rep["x"], rel=1e-10)
        assert rep["residual_max_relative"] < 1e-10
        assert 0 < rep["mu"] < 1


def test_grid_sweep():
    for th in np.linspace(0.05, 0.95, 19):
        for frac in np.linspace(0.05, 0.99, 10):
            inp = CertificateInput(th, 1.0, 1.0, frac * max_timestep(th, 1.0, 1.0))
            c = build_certificate(inp)
            assert system_residuals(c, inp).max_relative() < 1e-10
            assert bound_flags(c, inp).all_pass
