"""Time-integral kernels of the coupling profile.

Every kernel is built from exponential moments F_c(t) = ∫₀ᵗ g(s) e^{cs} ds, which have
closed forms on each piece where g is linear:

    ξ(t) = 2i F_{iν-κ/2}(t)
    λ(t) = i e^{-κt/2} F_{iν+κ/2}(t)
    μ(t) = i [F_{iν+κ/2}(t) - F_{iν-κ/2}(t)] / sinh(κt/2)
    τ(t) = γt + κΔ ∫₀ᵗ |μ(s)|² ds
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy import integrate

from .constants import KERNEL_ATOL, SMALL_KAPPA_T
from .model import CouplingProfile, DerivedRates, RateInputs

_SERIES_RADIUS = 0.5
_SERIES_TERMS = 20
_PHI1_COEFFS = np.array([1.0 / factorial(k + 1) for k in range(_SERIES_TERMS)])
_PHI2_COEFFS = np.array([1.0 / factorial(k + 2) for k in range(_SERIES_TERMS)])


def _horner(coeffs: np.ndarray, z: complex) -> complex:
    acc = 0j
    for c in coeffs[::-1]:
        acc = acc * z + c
    return acc


def phi1(z: complex) -> complex:
    """(e^z - 1)/z, continuous at zero."""
    if abs(z) < _SERIES_RADIUS:
        return _horner(_PHI1_COEFFS, z)
    return complex(np.expm1(complex(z))) / z


def phi2(z: complex) -> complex:
    """(e^z - 1 - z)/z², continuous at zero."""
    if abs(z) < _SERIES_RADIUS:
        return _horner(_PHI2_COEFFS, z)
    return (complex(np.expm1(complex(z))) - z) / (z * z)


def _piece_moment(a: float, b: float, ga: float, gb: float, c: complex, s: float) -> complex:
    """∫ₐˢ g(u) e^{cu} du for g linear from ga at a to gb at b, with a <= s <= b."""
    h = s - a
    if h <= 0:
        return 0j
    gs = ga if math.isinf(b) else ga + (gb - ga) * h / (b - a)
    z = c * h
    p1, p2 = phi1(z), phi2(z)
    return complex(np.exp(c * a)) * h * (ga * p2 + gs * (p1 - p2))


class ExponentialMoment:
    """F(s) = ∫₀ˢ g(u) e^{cu} du, evaluated by binary search over cumulative piece sums."""

    def __init__(self, profile: CouplingProfile, c: complex) -> None:
        self.c = complex(c)
        self._pieces = profile.linear_pieces()
        self._starts = np.array([p[0] for p in self._pieces])
        cumulative = [0j]
        for a, b, ga, gb in self._pieces:
            if math.isinf(b):
                break
            cumulative.append(cumulative[-1] + _piece_moment(a, b, ga, gb, self.c, b))
        self._cumulative = cumulative

    def __call__(self, s: float) -> complex:
        if s <= 0 or not self._pieces:
            return 0j
        k = int(np.searchsorted(self._starts, s, side="right")) - 1
        if k < 0:
            return 0j
        a, b, ga, gb = self._pieces[k]
        if s >= b:
            return self._cumulative[k + 1]
        return self._cumulative[k] + _piece_moment(a, b, ga, gb, self.c, s)


def quad_complex(
    func: Callable[[float], complex],
    lo: float,
    hi: float,
    breakpoints: np.ndarray | None = None,
    epsabs: float = KERNEL_ATOL,
) -> complex:
    """Adaptive Gauss-Kronrod quadrature of a complex integrand, split at breakpoints."""
    if hi <= lo:
        return 0j
    edges = [lo]
    if breakpoints is not None:
        edges.extend(float(p) for p in breakpoints if lo < p < hi)
    edges.append(hi)
    total = 0j
    for left, right in zip(edges[:-1], edges[1:], strict=True):
        value, _err = integrate.quad(
            func, left, right, complex_func=True, epsabs=epsabs, epsrel=1e-12, limit=200
        )
        total += value
    return total


@dataclass(frozen=True)
class KernelSet:
    t: float
    xi: complex
    mu: complex
    tau: float
    lam: complex


class KernelEvaluator:
    """Kernel functions of time for one profile and one set of bath rates."""

    def __init__(self, profile: CouplingProfile, kappa: float, gamma: float, Delta: float):
        self.profile = profile
        self.kappa = float(kappa)
        self.gamma = float(gamma)
        self.Delta = float(Delta)
        nu = profile.nu
        self._free = ExponentialMoment(profile, 1j * nu)
        self._decay = ExponentialMoment(profile, complex(-0.5 * self.kappa, nu))
        self._grow = ExponentialMoment(profile, complex(0.5 * self.kappa, nu))

    @classmethod
    def for_rates(
        cls, profile: CouplingProfile, rates: RateInputs, derived: DerivedRates
    ) -> KernelEvaluator:
        return cls(profile, rates.kappa, derived.gamma, derived.Delta)

    def alpha(self, t: float) -> complex:
        return -1j * self._free(t)

    def xi(self, t: float) -> complex:
        return 2j * self._decay(t)

    def lam_scaled(self, t: float) -> complex:
        """e^{κt/2} λ(t)."""
        return 1j * self._grow(t)

    def lam(self, t: float) -> complex:
        return math.exp(-0.5 * self.kappa * t) * self.lam_scaled(t)

    def mu(self, t: float) -> complex:
        if t <= 0:
            return 0j
        kt = self.kappa * t
        if kt < SMALL_KAPPA_T:
            return self._mu_series(t)
        return 1j * (self._grow(t) - self._decay(t)) / math.sinh(0.5 * kt)

    def _mu_series(self, t: float) -> complex:
        k2 = self.kappa * self.kappa / 24.0
        nu = self.profile.nu

        def integrand(s: float) -> complex:
            weight = s * (1.0 + k2 * (s * s - t * t))
            return self.profile(s) * weight * complex(math.cos(nu * s), math.sin(nu * s))

        moment = quad_complex(integrand, 0.0, t, self.profile.breakpoints())
        return 2j * moment / t

    def tau(self, t: float) -> float:
        if t <= 0:
            return 0.0
        decay = self.gamma * t
        if self.kappa == 0:
            return decay
        weight = self.kappa * self.Delta
        points = self.profile.breakpoints_within(0.0, t)
        value, _err = integrate.quad(
            lambda s: abs(self.mu(s)) ** 2,
            0.0,
            t,
            points=points if points.size else None,
            epsabs=KERNEL_ATOL / weight,
            epsrel=1e-12,
            limit=200,
        )
        return decay + weight * value

    def coupling_phase(self, s: float, b: np.ndarray) -> np.ndarray:
        """e^{E(s,b)} with E = 2e^{κs/2}[λ(s)b* - λ(s)*b], a unit-modulus phase."""
        big_lam = self.lam_scaled(s)
        return np.exp(4j * np.imag(big_lam * np.conj(b)))

    def at(self, t: float) -> KernelSet:
        return KernelSet(t=t, xi=self.xi(t), mu=self.mu(t), tau=self.tau(t), lam=self.lam(t))


def kernels(
    profile: CouplingProfile, rates: RateInputs, derived: DerivedRates, t: float
) -> KernelSet:
    if t < 0:
        raise ValueError("t must be non-negative")
    return KernelEvaluator.for_rates(profile, rates, derived).at(t)
