"""Physical parameters: coupling profiles, bath rates and derived decoherence rates."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import constants

ProfileKind = Literal["constant", "piecewise", "sampled"]
RateMode = Literal["standard", "exchanged-qed"]

_PROFILE_KINDS = ("constant", "piecewise", "sampled")
_RATE_MODES = ("standard", "exchanged-qed")


class ProfileError(ValueError):
    pass


class RateError(ValueError):
    pass


@dataclass(frozen=True)
class CouplingProfile:
    """Time-dependent coupling g(t) with modulation frequency ν.

    ``segments`` holds ``(t_start, t_end, amplitude)`` triples for piecewise profiles and
    ``samples`` holds ``(t, amplitude)`` stamps for sampled ones. The profile is zero
    outside its support.
    """

    kind: ProfileKind = "constant"
    g0: float = 0.0
    segments: tuple[tuple[float, float, float], ...] = ()
    samples: tuple[tuple[float, float], ...] = ()
    nu: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _PROFILE_KINDS:
            raise ProfileError(f"unknown profile kind {self.kind!r}")
        if not math.isfinite(self.nu) or not math.isfinite(self.g0):
            raise ProfileError("g0 and nu must be finite")
        if self.kind == "piecewise":
            if not self.segments:
                raise ProfileError("piecewise profile needs at least one segment")
            previous_end = -math.inf
            for start, end, _amp in self.segments:
                if start < 0:
                    raise ProfileError(f"segment starts before t=0: {start}")
                if end < start:
                    raise ProfileError(f"segment has negative duration: ({start}, {end})")
                if start < previous_end:
                    raise ProfileError("segments must be sorted and disjoint")
                previous_end = end
        if self.kind == "sampled":
            if len(self.samples) < 2:
                raise ProfileError("sampled profile needs at least two stamps")
            stamps = np.array([s[0] for s in self.samples], dtype=float)
            if np.any(np.diff(stamps) <= 0):
                raise ProfileError("sample time stamps must be strictly increasing")
            if stamps[0] < 0:
                raise ProfileError("sample time stamps must be non-negative")

    @classmethod
    def constant(cls, g0: float, nu: float = 0.0) -> CouplingProfile:
        return cls(kind="constant", g0=float(g0), nu=float(nu))

    @classmethod
    def piecewise(
        cls, segments: Sequence[Sequence[float]], nu: float = 0.0
    ) -> CouplingProfile:
        segs = tuple((float(a), float(b), float(g)) for a, b, g in segments)
        peak = max((abs(g) for _, _, g in segs), default=0.0)
        return cls(kind="piecewise", g0=peak, segments=segs, nu=float(nu))

    @classmethod
    def sampled(cls, samples: Sequence[Sequence[float]], nu: float = 0.0) -> CouplingProfile:
        stamps = tuple((float(t), float(g)) for t, g in samples)
        peak = max((abs(g) for _, g in stamps), default=0.0)
        return cls(kind="sampled", g0=peak, samples=stamps, nu=float(nu))

    @property
    def g_max(self) -> float:
        return abs(self.g0)

    def linear_pieces(self) -> list[tuple[float, float, float, float]]:
        """Support as ``(a, b, g(a+), g(b-))`` pieces on which g is linear."""
        if self.kind == "constant":
            return [(0.0, math.inf, self.g0, self.g0)]
        if self.kind == "piecewise":
            return [(a, b, g, g) for a, b, g in self.segments if b > a]
        return [
            (t0, t1, g0, g1)
            for (t0, g0), (t1, g1) in zip(self.samples[:-1], self.samples[1:], strict=True)
        ]

    def breakpoints(self) -> np.ndarray:
        """Times where g or its derivative may jump."""
        if self.kind == "constant":
            return np.array([0.0])
        if self.kind == "piecewise":
            edges = [x for a, b, _ in self.segments for x in (a, b)]
            return np.unique(np.asarray(edges, dtype=float))
        return np.array([t for t, _ in self.samples], dtype=float)

    def breakpoints_within(self, lo: float, hi: float) -> np.ndarray:
        points = self.breakpoints()
        return points[(points > lo) & (points < hi)]

    def __call__(self, t: float | np.ndarray) -> float | np.ndarray:
        times = np.asarray(t, dtype=float)
        if self.kind == "constant":
            values = np.where(times >= 0, self.g0, 0.0)
        elif self.kind == "piecewise":
            starts = np.array([s[0] for s in self.segments])
            ends = np.array([s[1] for s in self.segments])
            amps = np.array([s[2] for s in self.segments])
            idx = np.searchsorted(starts, times, side="right") - 1
            safe = np.clip(idx, 0, len(starts) - 1)
            inside = (idx >= 0) & (times < ends[safe])
            values = np.where(inside, amps[safe], 0.0)
        else:
            stamps = np.array([s[0] for s in self.samples])
            amps = np.array([s[1] for s in self.samples])
            values = np.interp(times, stamps, amps, left=0.0, right=0.0)
        if np.ndim(values) == 0:
            return float(values)
        return values


@dataclass(frozen=True)
class RateInputs:
    kappa: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    Na: float = 0.0
    Nq: float = 0.0
    mode: RateMode = "standard"

    def __post_init__(self) -> None:
        for name in ("kappa", "gamma1", "gamma2", "Na", "Nq"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise RateError(f"{name} must be a finite non-negative number, got {value}")
        if self.mode not in _RATE_MODES:
            raise RateError(f"unknown rate mode {self.mode!r}")


@dataclass(frozen=True)
class DerivedRates:
    gamma: float
    Gamma_c: float
    Gamma_h: float
    Delta: float
    gamma1_eff: float | None = None
    gamma2_eff: float | None = None

    @property
    def gamma_phi(self) -> float:
        """Pure-dephasing part of γ left after the exchange processes."""
        return max(self.gamma - 0.5 * (self.Gamma_c + self.Gamma_h), 0.0)


def derive_rates(rates: RateInputs) -> DerivedRates:
    Delta = rates.Na + 0.5
    if rates.mode == "standard":
        return DerivedRates(
            gamma=rates.gamma1 * (rates.Nq + 0.5) + rates.gamma2,
            Gamma_c=rates.gamma1 * (rates.Nq + 1.0),
            Gamma_h=rates.gamma1 * rates.Nq,
            Delta=Delta,
        )
    g1 = rates.gamma1 * (rates.Nq + 0.5)
    g2 = 0.5 * rates.gamma1 * (rates.Nq + 0.5) + rates.gamma2
    return DerivedRates(
        gamma=g1 + g2,
        Gamma_c=g2,
        Gamma_h=g2,
        Delta=Delta,
        gamma1_eff=g1,
        gamma2_eff=g2,
    )


@dataclass(frozen=True)
class SystemConfig:
    profile: CouplingProfile
    rates: RateInputs
    derived: DerivedRates = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "derived", derive_rates(self.rates))

    @property
    def closed(self) -> bool:
        return self.rates.kappa == 0 and self.rates.gamma1 == 0 and self.rates.gamma2 == 0


def bose_einstein(omega_over_T: float | np.ndarray) -> float | np.ndarray:
    """Thermal occupation 1/(e^x - 1) of a bath mode."""
    x = np.asarray(omega_over_T, dtype=float)
    if np.any(x <= 0) or np.any(~np.isfinite(x)):
        raise ValueError("omega/T must be positive; occupation diverges at zero")
    occupation = 1.0 / np.expm1(x)
    if occupation.ndim == 0:
        return float(occupation)
    return occupation


def omega_over_temperature(omega: float, temperature: float) -> float:
    """ħω/k_BT for an angular frequency in rad/s and a temperature in K."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return constants.hbar * omega / (constants.k * temperature)


def cavity_equilibrium_displacement(
    Omega: float, phi: float, delta: float, kappa: float
) -> complex:
    """Centre -Ω e^{iφ}/(δ - iκ/2) of a driven, damped cavity mode."""
    if Omega == 0:
        return 0j
    denominator = complex(delta, -0.5 * kappa)
    if denominator == 0:
        raise ZeroDivisionError("undamped resonant drive has no equilibrium displacement")
    return -Omega * complex(math.cos(phi), math.sin(phi)) / denominator


def drive_phase_for_real_displacement(delta: float, kappa: float) -> float:
    """Drive phase φ in (-π, π] that makes the equilibrium displacement real and positive."""
    denominator = complex(delta, -0.5 * kappa)
    if denominator == 0:
        raise ZeroDivisionError("undamped resonant drive has no equilibrium displacement")
    phi = math.atan2(denominator.imag, denominator.real) - math.pi
    return math.atan2(math.sin(phi), math.cos(phi))
