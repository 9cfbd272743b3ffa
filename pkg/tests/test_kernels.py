from __future__ import annotations

import cmath
import math

import numpy as np
import pytest

from qcdsim.kernels import (
    ExponentialMoment,
    KernelEvaluator,
    kernels,
    phi1,
    phi2,
    quad_complex,
)
from qcdsim.model import CouplingProfile, RateInputs, derive_rates


def test_phi_functions_are_continuous_at_zero() -> None:
    for z in (1e-9, 0.49, 0.51j, -0.6 + 0.2j):
        assert phi1(z) == pytest.approx(complex(np.expm1(complex(z))) / z, rel=1e-12)
    assert phi2(0j) == pytest.approx(0.5)
    assert phi2(0.3) == pytest.approx((math.expm1(0.3) - 0.3) / 0.09, rel=1e-12)


def test_exponential_moment_matches_quadrature() -> None:
    profile = CouplingProfile.sampled([(0.0, 0.0), (0.7, 1.3), (1.5, -0.4), (2.0, 0.2)], nu=0.9)
    c = complex(-0.2, 0.9)
    moment = ExponentialMoment(profile, c)
    for s in (0.3, 0.7, 1.9, 3.0):
        expected = quad_complex(
            lambda u: profile(u) * cmath.exp(c * u), 0.0, s, profile.breakpoints()
        )
        assert abs(moment(s) - expected) < 1e-10


def test_constant_coupling_kernels() -> None:
    g, kappa, t = 1.0, 0.01, 1.0
    evaluator = KernelEvaluator(CouplingProfile.constant(g), kappa, gamma=0.01, Delta=0.5)
    alpha0 = -1j * (2 * g / kappa) * (1 - math.exp(-kappa * t / 2))
    assert abs(evaluator.xi(t) + 2 * alpha0) < 1e-12
    assert abs(evaluator.lam(t) + alpha0) < 1e-12
    assert abs(evaluator.mu(t) - 1j * (4 * g / kappa) * math.tanh(kappa * t / 4)) < 1e-12
    assert evaluator.tau(0.0) == 0.0


def test_mu_small_kappa_branch_is_continuous() -> None:
    profile = CouplingProfile.constant(1.0)
    t = 2.0
    below = KernelEvaluator(profile, 1e-7, gamma=0.0, Delta=0.5).mu(t)
    above = KernelEvaluator(profile, 1e-5, gamma=0.0, Delta=0.5).mu(t)
    assert abs(below - 1j * t) < 1e-6
    assert abs(above - 1j * t) < 1e-5


def test_kernel_set_at_the_reference_point() -> None:
    profile = CouplingProfile.constant(1.0)
    rates = RateInputs(kappa=0.01, gamma2=0.01)
    kset = kernels(profile, rates, derive_rates(rates), 1.0)
    assert kset.t == 1.0
    assert kset.tau == pytest.approx(0.011667, abs=1e-6)
    assert abs(kset.mu - 1j) < 1e-4
    start = kernels(profile, rates, derive_rates(rates), 0.0)
    assert (start.xi, start.mu, start.tau, start.lam) == (0, 0, 0, 0)
    with pytest.raises(ValueError):
        kernels(profile, rates, derive_rates(rates), -1.0)
