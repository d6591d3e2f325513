"""Tests for the L2/H1 bound constants and the discrete Gronwall lemmas."""

import math
import sys

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dln_nse.bounds import (
    GronwallInput,
    gronwall_bound,
    h1_constants,
    k3_bound,
    kappa_constants,
    l2_constants,
    uniform_gronwall_bound,
    uniform_timestep_limit,
    window_max_sum,
)
from dln_nse.certificate import certify, max_timestep
from dln_nse.errors import DomainError, IndexWindowError, WindowTooShort

TINY = sys.float_info.min
HUGE = sys.float_info.max


def oracle(theta, nu, lam, dt, n0, n1, g0, g1, f, r, C_Omega=1.0, horizon=None):
    """Every constant re-evaluated in 30-digit arithmetic with unbounded exponents."""
    mp.mp.dps = 30
    cert = certify(theta, nu, lam, dt)
    th, nu, lam, f, r = (mp.mpf(v) for v in (theta, nu, lam, f, r))
    ch = mp.mpf(max(cert.h11, cert.h22))
    ce = nu * lam * mp.mpf(dt) / mp.mpf(cert.epsilon)
    floor = th**3 / 2 * (1 - th * (1 - th) / 2)
    C_dt = min(8 * th * (1 - th**2) / (8 - 6 * th**2 + 3 * th**4), 2 * (1 - th)) / (nu * lam)
    b0, b1, b2 = (2 - th - th**2) / 4, th**2 / 2, (2 + th - th**2) / 4
    m = 2 * b2 - 1
    ic = mp.mpf(n1) ** 2 + mp.mpf(n0) ** 2
    f2 = f * f
    out = {}
    out["K1"] = K1 = ch * ic + ce / (2 * nu**2 * lam**2) * f2
    out["K2"] = K2 = mp.sqrt(K1 / floor)
    hat = ch / floor
    out["rho0"] = rho0 = ce * f2 / (nu**2 * lam**2 * th**3 * (1 - th * (1 - th) / 2))
    T = 4 * ce / (nu * lam) * mp.log(hat * ic / rho0)
    T = max(T, mp.mpf(0))
    out["T_star"] = T
    q = 2 - th**2
    out["kappa1"] = k1 = 27 * q * C_Omega**2 * K2**2 / (16 * nu**3)
    out["kappa2"] = k2 = 3 + 8 * q * K2**2 / (nu**2 * (2 - th) ** 2 * (1 + th))
    out["kappa3"] = k3 = 27 * q * C_Omega**2 * rho0 / (8 * nu**3)
    out["kappa4"] = k4 = 3 + 16 * q * rho0 / (nu**2 * (2 - th) ** 2 * (1 + th))
    G0 = (1 + th) / 4 * mp.mpf(n1) ** 2 + (1 - th) / 4 * mp.mpf(n0) ** 2
    A1 = (1 + th) / 4 * mp.mpf(g1) ** 2 + (1 - th) / 4 * mp.mpf(g0) ** 2
    tt = T + r if horizon is None else mp.mpf(horizon)
    inner = 2 * G0 + tt / nu * f2
    out["K3"] = (A1 + k1 * C_dt * f2 / nu**2 * inner + tt / (2 * nu) * f2) \
        * mp.exp(k1 * (k2 + 1) / nu * inner)
    out["K4"] = K4 = (1 + th) * rho0 / (2 * hat) * mp.exp(nu * lam * T / (4 * ce)) \
        + (T + 2 * C_dt) / nu * f2
    out["K5"] = K5 = (A1 + k1 * C_dt * f2 * K4 / nu**2 + (T + 2 * C_dt) / (2 * nu) * f2) \
        * mp.exp(k1 * (k2 + 1) * K4 / nu)
    win = 2 * rho0 + r / (nu * lam) * f2
    ew = mp.exp(k3 * (k4 + 1) / nu * win)
    out["K6"] = m * r / (4 * (4 + 3 * th) * K5) * ew
    bsq = (b0**2 + b1**2) ** 2
    out["rho1"] = rho1 = (
        1 + 16 * rho0 / (nu * m * r) * (1 + 4 * rho0**4 * bsq / (nu**4 * m**3))
        + 32 / (nu**2 * m**2 * lam) * (1 + rho0**2 * bsq / (nu**4 * m**2)) * f2
        + k3 * C_dt / nu**2 * f2 * win + r * f2 / (2 * nu)
    ) * ew**2
    win2 = 2 * (1 + th) * rho0 + r / nu * f2
    out["rho2"] = (rho1 + k3 * C_dt * f2 / nu**2 * win2 + r / (2 * nu) * f2) \
        * mp.exp(2 * k3 * (k4 + 1) / nu * win2)
    out["rho3"] = m * r / (4 * (4 + 3 * th) * rho1) * ew
    return out


def compute(theta, nu, lam, dt, n0, n1, g0, g1, f, r, **kw):
    cert = certify(theta, nu, lam, dt)
    l2 = l2_constants(cert, n0, n1, f, nu, lam, theta)
    h1 = h1_constants(theta, nu, lam, dt, cert, l2, None, (g0, g1), f, r, **kw)
    vals = dict(l2.as_dict())
    vals.update(h1.as_dict())
    return vals


def agrees(value, ref, rel):
    if math.isinf(value):
        return ref > HUGE
    if value == 0.0:
        return ref < TINY
    return abs(value - float(ref)) <= rel * abs(float(ref))


PARAM_SETS = [
    # theta, nu, lam, dt, |u0|, |u1|, |grad u0|, |grad u1|, f, r
    (0.5, 1.0, 1.0, 0.2, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0),
    (0.5, 1.0, 1.0, 0.002, 0.05, 0.05, 0.1, 0.1, 0.01, 2.5),
    (0.7, 2.0, 1.0, 0.005, 0.05, 0.04, 0.1, 0.08, 0.001, 1.5),
    (0.3, 0.5, 2.0, 0.01, 0.3, 0.2, 0.5, 0.4, 0.05, 4.0),
    (0.5, 0.1, 1.0, 0.01, 1.0, 1.0, 1.0, 1.0, 1.0, 25.0),
]
KEYS = ["K1", "K2", "rho0", "T_star", "kappa1", "kappa2", "kappa3", "kappa4",
        "K3", "K4", "K5", "K6", "rho1", "rho2", "rho3"]


class TestL2Constants:
    @pytest.mark.parametrize("params", PARAM_SETS)
    def test_against_oracle(self, params):
        vals = compute(*params)
        ref = oracle(*params)
        for k in KEYS:
            assert agrees(vals[k], ref[k], 1e-9), (k, vals[k], ref[k])

    def test_unforced(self):
        c = certify(0.5, 1.0, 1.0, 0.2)
        l2 = l2_constants(c, 0.7, 0.6, 0.0, 1.0, 1.0, 0.5)
        assert l2.rho0 == 0.0
        assert l2.T_star == math.inf
        assert l2.K1 == pytest.approx(c.C_h_eff * (0.49 + 0.36))

    def test_zero_initial_data(self):
        c = certify(0.5, 1.0, 1.0, 0.2)
        l2 = l2_constants(c, 0.0, 0.0, 2.0, 1.0, 1.0, 0.5)
        assert l2.K1 == pytest.approx(c.C_eps_eff * 4.0 / 2.0)
        assert l2.T_star == 0.0

    def test_clamped_T_star(self):
        c = certify(0.5, 1.0, 1.0, 0.2)
        l2 = l2_constants(c, 1e-3, 1e-3, 1.0, 1.0, 1.0, 0.5)
        assert l2.T_star == 0.0

    def test_rejects_negative(self):
        c = certify(0.5, 1.0, 1.0, 0.2)
        with pytest.raises(DomainError):
            l2_constants(c, -1.0, 1.0, 1.0, 1.0, 1.0, 0.5)


class TestKappa:
    def test_unforced_floor(self):
        assert kappa_constants(0.5, 1.0, 1.0, 0.0, 0.0) == (0.0, 3.0, 0.0, 3.0)

    def test_example(self):
        k1, _, k3, _ = kappa_constants(0.5, 1.0, 1.0, 1.0, 0.5)
        assert k1 == pytest.approx(2.953125, rel=1e-15)
        assert k3 == pytest.approx(2.953125, rel=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(th=st.floats(0.01, 0.99), nu=st.floats(0.01, 10), K2=st.floats(1e-3, 1e3),
           rho0=st.floats(1e-3, 1e3))
    def test_ratio(self, th, nu, K2, rho0):
        k1, _, k3, _ = kappa_constants(th, nu, 1.0, K2, rho0)
        assert k3 / k1 == pytest.approx(2 * rho0 / K2**2, rel=1e-12)


class TestH1Constants:
    def test_window_too_short(self):
        with pytest.raises(WindowTooShort):
            compute(0.5, 0.1, 1.0, 0.01, 1, 1, 1, 1, 1.0, 10.0)

    def test_unforced_collapse(self):
        vals = compute(0.5, 1.0, 1.0, 0.2, 1, 1, 1, 1, 0.0, 10.0)
        assert vals["kappa3"] == 0.0
        assert vals["rho1"] == pytest.approx(1.0)
        assert vals["rho2"] == pytest.approx(vals["rho1"])

    def test_ic_independence(self):
        base = compute(0.5, 1.0, 1.0, 0.002, 0.05, 0.05, 0.1, 0.1, 0.01, 2.5)
        moved = compute(0.5, 1.0, 1.0, 0.002, 0.02, 0.03, 0.3, 0.2, 0.01, 2.5)
        for k in ("rho1", "rho2", "rho3", "kappa3", "kappa4"):
            assert base[k] == moved[k], k

    def test_K3_monotone(self):
        args = dict(theta=0.5, nu=1.0, C_dt=0.4, kappa1=0.1, kappa2=3.5, A1=0.2,
                    G_initial=0.3, f_inf=0.05, elapsed=1.0)
        base = k3_bound(**args)
        for k in ("C_dt", "kappa1", "kappa2", "A1", "G_initial", "f_inf", "elapsed"):
            bumped = dict(args)
            bumped[k] *= 1.1
            assert k3_bound(**bumped) >= base, k

    def test_finite_positive_in_gentle_regime(self):
        vals = compute(0.5, 1.0, 1.0, 0.002, 0.05, 0.05, 0.1, 0.1, 0.01, 2.5)
        for k in KEYS:
            assert 0.0 <= vals[k] < math.inf, k
        for k in ("K1", "K2", "rho0", "K3", "K4", "K5", "K6", "rho1", "rho2", "rho3"):
            assert vals[k] > 0.0, k

    def test_horizon_and_K3_at(self):
        cert = certify(0.5, 1.0, 1.0, 0.002)
        l2 = l2_constants(cert, 0.05, 0.05, 0.01, 1.0, 1.0, 0.5)
        h = h1_constants(0.5, 1.0, 1.0, 0.002, cert, l2, None, (0.1, 0.1), 0.01, 2.5)
        assert h.horizon == pytest.approx(l2.T_star + 2.5)
        assert h.K3_at(h.horizon) == h.K3
        assert h.K3_at(0.0) <= h.K3


class TestTimestepLimit:
    def test_min(self):
        assert uniform_timestep_limit(0.4, 10, 10) == 0.4
        assert uniform_timestep_limit(0.4, 0.1, 10) == 0.1

    def test_full_chain(self):
        vals = compute(0.5, 1.0, 1.0, 0.002, 0.05, 0.05, 0.1, 0.1, 0.01, 2.5)
        ref = oracle(0.5, 1.0, 1.0, 0.002, 0.05, 0.05, 0.1, 0.1, 0.01, 2.5)
        lim = uniform_timestep_limit(max_timestep(0.5, 1, 1), vals["K6"], vals["rho3"])
        expect = min(max_timestep(0.5, 1, 1), float(ref["K6"]), float(ref["rho3"]))
        assert lim == pytest.approx(expect, rel=1e-9)

    def test_rejects_zero(self):
        with pytest.raises(DomainError):
            uniform_timestep_limit(0.4, 0.0, 1.0)


def brute_force(k, xi0, eta, zeta, n):
    xi = [xi0]
    for i in range(1, n + 1):
        xi.append(xi[-1] * (1 + k * eta[i - 1]) + k * zeta[i])
    return xi


class TestGronwall:
    def test_telescoping_example(self):
        inp = GronwallInput(1.0, 0.0, np.zeros(5), np.ones(6))
        assert gronwall_bound(inp, 5) == 6.0
        assert brute_force(1.0, 0.0, np.zeros(5), np.ones(6), 5)[5] == 5.0

    def test_no_sources(self):
        inp = GronwallInput(0.3, 2.5, np.zeros(10), np.zeros(11))
        assert all(gronwall_bound(inp, n) == 2.5 for n in range(2, 11))

    def test_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            k = rng.uniform(0.01, 1.0)
            eta, zeta = rng.uniform(0, 2, 50), rng.uniform(0, 2, 51)
            xi0 = rng.uniform(0, 5)
            xi = brute_force(k, xi0, eta, zeta, 50)
            inp = GronwallInput(k, xi0, eta, zeta)
            for n in range(2, 51):
                assert xi[n] <= gronwall_bound(inp, n) * (1 + 1e-12)

    def test_index_errors(self):
        inp = GronwallInput(1.0, 0.0, np.zeros(3), np.ones(4))
        with pytest.raises(IndexWindowError):
            gronwall_bound(inp, 5)
        with pytest.raises(IndexWindowError):
            gronwall_bound(inp, 1)

    def test_rejects_negative_sequences(self):
        with pytest.raises(DomainError):
            GronwallInput(1.0, 0.0, [-1.0], [0.0, 0.0])


class TestUniformGronwall:
    def test_mean_value_case(self):
        assert uniform_gronwall_bound(None, 0, 4, 10, 0.0, 0.0, 2.0, k=0.5) == 2.0 / (0.5 * 4)

    def test_constant_sequence(self):
        xi_bar, k, n2 = 3.0, 0.1, 5
        b = uniform_gronwall_bound(None, 1, n2, 20, 0.0, 0.0, k * (n2 + 1) * xi_bar, k=k)
        assert b == pytest.approx(xi_bar * (n2 + 1) / n2)
        assert b >= xi_bar

    def test_window_max_sum(self):
        seq = [1.0, 2.0, 3.0, 4.0, 5.0]
        assert window_max_sum(seq, 1.0, 0, 1, 4) == 9.0
        assert window_max_sum(seq, 0.5, 0, 2, 3) == 4.5

    def test_random_instances(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            k = rng.uniform(0.01, 0.5)
            n_star = int(rng.integers(8, 40))
            n1 = int(rng.integers(1, n_star // 2))
            n2 = int(rng.integers(1, n_star - n1))
            eta, zeta = rng.uniform(0, 1, n_star + 1), rng.uniform(0, 1, n_star + 1)
            xi = np.empty(n_star + 1)
            xi[: n1] = rng.uniform(0, 3, n1)
            for n in range(n1, n_star + 1):
                xi[n] = xi[n - 1] * (1 + k * eta[n - 1]) + k * zeta[n]
            a = [max(k * sum(s[p:p + n2 + 1]) for p in range(n1, n_star - n2 + 1))
                 for s in (eta, zeta, xi)]
            bound = uniform_gronwall_bound(None, n1, n2, n_star, *a, k=k)
            for n in range(n1 + n2 + 1, n_star + 1):
                assert xi[n] <= bound * (1 + 1e-12)

    def test_window_validation(self):
        with pytest.raises(IndexWindowError):
            uniform_gronwall_bound(None, 5, 4, 9, 0, 0, 1, k=1.0)
        with pytest.raises(IndexWindowError):
            uniform_gronwall_bound(None, 0, 0, 9, 0, 0, 1, k=1.0)
        with pytest.raises(DomainError):
            uniform_gronwall_bound(None, 0, 2, 9, 0, 0, 1)
