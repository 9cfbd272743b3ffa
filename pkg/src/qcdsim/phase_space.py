"""C-Matrix solver for the open qubit-oscillator dynamics.

Off-diagonal elements always have a closed form in terms of the kernels. The diagonal
elements are coupled by the qubit exchange rates Γ_c, Γ_h. They are written as

    χ_gg(β,t) = e^{-Δ(1-e^{-κt})|β|²} e^{-(λβ*-λ*β)} p(b,t)
    χ_ee(β,t) = e^{-Δ(1-e^{-κt})|β|²} e^{+(λβ*-λ*β)} q(b,t),   b = βe^{-κt/2}

where p = e^{-Γ_h t}Φ_gg χ_gg(b,0) and q = e^{-Γ_c t}Φ_ee χ_ee(b,0) obey

    ṗ = -Γ_h p + Γ_c e^{E} q,   q̇ = -Γ_c q + Γ_h e^{-E} p,
    E = 2e^{κs/2}[λ(s)b* - λ(s)*b].

E is purely imaginary, so the system never divides by initial data and never
overflows.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate

from .cmatrix import CharFn, CMatrixField, GridSpec, as_beta, check_hermiticity
from .constants import (
    KERNEL_ATOL,
    ODE_ATOL,
    ODE_CHUNK_SIZE,
    ODE_RTOL,
    PERTURBATIVE_LIMIT,
)
from .kernels import KernelEvaluator, KernelSet
from .model import SystemConfig

logger = logging.getLogger(__name__)

Method = Literal["auto", "ode", "perturbative"]


class IntegrationError(RuntimeError):
    def __init__(self, message: str, beta: complex | None = None) -> None:
        super().__init__(message if beta is None else f"{message} at beta={beta:.6g}")
        self.beta = beta


def _damping(kappa: float, Delta: float, t: float) -> float:
    return -Delta * np.expm1(-kappa * t)


def offdiag_solution(
    chi_eg0: CharFn,
    chi_ge0: CharFn,
    kset: KernelSet,
    kappa: float,
    Delta: float,
    beta: complex | np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    points = as_beta(beta)
    shrink = np.exp(-0.5 * kappa * kset.t)
    b = points * shrink
    damp = _damping(kappa, Delta, kset.t)
    eg = chi_eg0(b - kset.xi) * np.exp(-damp * np.abs(points - kset.mu) ** 2 - kset.tau)
    ge = chi_ge0(b + kset.xi) * np.exp(-damp * np.abs(points + kset.mu) ** 2 - kset.tau)
    return eg, ge


def _assemble(
    p: np.ndarray,
    q: np.ndarray,
    beta: np.ndarray,
    lam: complex,
    kappa: float,
    Delta: float,
    t: float,
) -> tuple[np.ndarray, np.ndarray]:
    envelope = np.exp(-_damping(kappa, Delta, t) * np.abs(beta) ** 2)
    phase = lam * np.conj(beta) - np.conj(lam) * beta
    return envelope * np.exp(phase) * q, envelope * np.exp(-phase) * p


def diag_uncoupled(
    chi_ee0: CharFn,
    chi_gg0: CharFn,
    lam: complex,
    kappa: float,
    Delta: float,
    Gamma_c: float,
    Gamma_h: float,
    beta: complex | np.ndarray,
    t: float,
) -> tuple[np.ndarray, np.ndarray]:
    points = as_beta(beta)
    b = points * np.exp(-0.5 * kappa * t)
    p = np.exp(-Gamma_h * t) * chi_gg0(b)
    q = np.exp(-Gamma_c * t) * chi_ee0(b)
    return _assemble(p, q, points, lam, kappa, Delta, t)


def _integrate_chunk(
    evaluator: KernelEvaluator,
    b: np.ndarray,
    beta: np.ndarray,
    p0: np.ndarray,
    q0: np.ndarray,
    Gamma_c: float,
    Gamma_h: float,
    t: float,
) -> tuple[np.ndarray, np.ndarray]:
    n = b.size

    def rhs(s: float, y: np.ndarray) -> np.ndarray:
        p, q = y[:n], y[n:]
        phase = evaluator.coupling_phase(s, b)
        return np.concatenate(
            [-Gamma_h * p + Gamma_c * phase * q, -Gamma_c * q + Gamma_h * np.conj(phase) * p]
        )

    edges = [0.0, *evaluator.profile.breakpoints_within(0.0, t), t]
    y = np.concatenate([p0, q0]).astype(complex)
    for lo, hi in zip(edges[:-1], edges[1:], strict=True):
        sol = integrate.solve_ivp(
            rhs, (lo, hi), y, method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL
        )
        if not sol.success:
            raise IntegrationError(f"ODE integration failed: {sol.message}", complex(beta[0]))
        y = sol.y[:, -1]
    return y[:n], y[n:]


def _integrate_points(
    evaluator: KernelEvaluator,
    b: np.ndarray,
    beta: np.ndarray,
    p0: np.ndarray,
    q0: np.ndarray,
    Gamma_c: float,
    Gamma_h: float,
    t: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate fixed-size chunks; a failing chunk is retried point by point."""
    p = np.empty_like(p0)
    q = np.empty_like(q0)
    for start in range(0, b.size, ODE_CHUNK_SIZE):
        sl = slice(start, start + ODE_CHUNK_SIZE)
        try:
            p[sl], q[sl] = _integrate_chunk(
                evaluator, b[sl], beta[sl], p0[sl], q0[sl], Gamma_c, Gamma_h, t
            )
        except IntegrationError:
            logger.warning("ODE chunk at index %d failed; retrying point by point", start)
            for i in range(start, min(start + ODE_CHUNK_SIZE, b.size)):
                one = slice(i, i + 1)
                p[one], q[one] = _integrate_chunk(
                    evaluator, b[one], beta[one], p0[one], q0[one], Gamma_c, Gamma_h, t
                )
    return p, q


def _points_of(grid: GridSpec | complex | np.ndarray) -> np.ndarray:
    if isinstance(grid, GridSpec):
        return grid.points()
    return as_beta(grid)


def diag_ode_solve(
    chi_ee0: CharFn,
    chi_gg0: CharFn,
    config: SystemConfig,
    t: float,
    grid: GridSpec | complex | np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    if t < 0:
        raise ValueError("t must be non-negative")
    points = _points_of(grid)
    flat = points.ravel()
    rates, derived = config.rates, config.derived
    evaluator = KernelEvaluator.for_rates(config.profile, rates, derived)
    b = flat * np.exp(-0.5 * rates.kappa * t)
    p0 = np.asarray(chi_gg0(b), dtype=complex)
    q0 = np.asarray(chi_ee0(b), dtype=complex)
    if t == 0:
        p, q = p0, q0
    else:
        p, q = _integrate_points(evaluator, b, flat, p0, q0, derived.Gamma_c, derived.Gamma_h, t)
    ee, gg = _assemble(p, q, flat, evaluator.lam(t), rates.kappa, derived.Delta, t)
    return ee.reshape(points.shape), gg.reshape(points.shape)


def _phase_integral(
    evaluator: KernelEvaluator, b: np.ndarray, t: float, decay: float = 0.0
) -> np.ndarray:
    """∫₀ᵗ e^{-decay·s + E(s,b)} ds for every b."""
    if t == 0:
        return np.zeros_like(b)
    points = evaluator.profile.breakpoints_within(0.0, t)
    value, _err = integrate.quad_vec(
        lambda s: np.exp(-decay * s) * evaluator.coupling_phase(s, b),
        0.0,
        t,
        epsabs=KERNEL_ATOL,
        epsrel=1e-12,
        norm="max",
        points=points if points.size else None,
    )
    return np.asarray(value, dtype=complex)


def perturbative_bound(config: SystemConfig) -> float:
    """Rate that must stay small against 1/t for the first-order solution."""
    return max(config.derived.Gamma_c, config.derived.Gamma_h)


def diag_perturbative(
    chi_ee0: CharFn,
    chi_gg0: CharFn,
    config: SystemConfig,
    t: float,
    beta: complex | np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """First-order solution in Γ_c t, Γ_h t; the error is O((Γt)²)."""
    rates, derived = config.rates, config.derived
    Gamma_c, Gamma_h = derived.Gamma_c, derived.Gamma_h
    strength = perturbative_bound(config) * t
    if strength > PERTURBATIVE_LIMIT:
        logger.warning(
            "perturbative solution outside its validity range: Gamma*t=%.3g > %.3g",
            strength,
            PERTURBATIVE_LIMIT,
        )
    points = as_beta(beta)
    flat = points.ravel()
    evaluator = KernelEvaluator.for_rates(config.profile, rates, derived)
    b = flat * np.exp(-0.5 * rates.kappa * t)
    p0 = np.asarray(chi_gg0(b), dtype=complex)
    q0 = np.asarray(chi_ee0(b), dtype=complex)
    integral = _phase_integral(evaluator, b, t)
    u = p0 + Gamma_c * q0 * integral
    v = q0 + Gamma_h * p0 * np.conj(integral)
    p = np.exp(-Gamma_h * t) * u
    q = np.exp(-Gamma_c * t) * v
    ee, gg = _assemble(p, q, flat, evaluator.lam(t), rates.kappa, derived.Delta, t)
    return ee.reshape(points.shape), gg.reshape(points.shape)


def diag_zero_heating(
    chi_ee0: CharFn,
    chi_gg0: CharFn,
    config: SystemConfig,
    t: float,
    beta: complex | np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact diagonal solution when the qubit is never thermally excited (Γ_h = 0)."""
    rates, derived = config.rates, config.derived
    if derived.Gamma_h != 0:
        raise ValueError("zero-heating solution requires Gamma_h = 0")
    points = as_beta(beta)
    flat = points.ravel()
    evaluator = KernelEvaluator.for_rates(config.profile, rates, derived)
    b = flat * np.exp(-0.5 * rates.kappa * t)
    p0 = np.asarray(chi_gg0(b), dtype=complex)
    q0 = np.asarray(chi_ee0(b), dtype=complex)
    Gamma_c = derived.Gamma_c
    if Gamma_c == 0:
        p = p0
    else:
        p = p0 + Gamma_c * q0 * _phase_integral(evaluator, b, t, decay=Gamma_c)
    q = np.exp(-Gamma_c * t) * q0
    ee, gg = _assemble(p, q, flat, evaluator.lam(t), rates.kappa, derived.Delta, t)
    return ee.reshape(points.shape), gg.reshape(points.shape)


@dataclass
class _DiagonalCache:
    """Shares one diagonal evaluation between χ_ee and χ_gg."""

    solve: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    _key: tuple[bytes, tuple[int, ...]] | None = field(default=None, repr=False)
    _value: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __call__(self, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = as_beta(beta)
        key = (points.tobytes(), points.shape)
        if key != self._key or self._value is None:
            self._value = self.solve(points)
            self._key = key
        return self._value


def _diagonal_route(config: SystemConfig, method: Method) -> str:
    derived = config.derived
    if method == "perturbative":
        return "perturbative"
    if method == "ode":
        return "ode"
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    if derived.Gamma_c == 0 and derived.Gamma_h == 0:
        return "uncoupled"
    if derived.Gamma_h == 0:
        return "zero-heating"
    return "ode"


def solve_cmatrix(
    config: SystemConfig,
    initial: CMatrixField,
    t: float,
    method: Method = "auto",
) -> CMatrixField:
    """C-Matrix at time t; elements are evaluated lazily at whatever β the caller asks for."""
    if t < 0:
        raise ValueError("t must be non-negative")
    trace = initial.trace()
    if abs(trace - 1) > 1e-8:
        raise ValueError(f"initial C-Matrix has trace {trace:.12g}, expected 1")
    check_hermiticity(initial)

    rates, derived = config.rates, config.derived
    evaluator = KernelEvaluator.for_rates(config.profile, rates, derived)
    kset = evaluator.at(t)
    route = _diagonal_route(config, method)
    logger.debug("solve_cmatrix t=%s route=%s", t, route)

    def diagonal(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if route == "uncoupled":
            return diag_uncoupled(
                initial.chi_ee,
                initial.chi_gg,
                kset.lam,
                rates.kappa,
                derived.Delta,
                derived.Gamma_c,
                derived.Gamma_h,
                points,
                t,
            )
        if route == "zero-heating":
            return diag_zero_heating(initial.chi_ee, initial.chi_gg, config, t, points)
        if route == "perturbative":
            return diag_perturbative(initial.chi_ee, initial.chi_gg, config, t, points)
        return diag_ode_solve(initial.chi_ee, initial.chi_gg, config, t, points)

    cache = _DiagonalCache(diagonal)

    def chi_eg(beta: np.ndarray) -> np.ndarray:
        return offdiag_solution(
            initial.chi_eg, initial.chi_ge, kset, rates.kappa, derived.Delta, beta
        )[0]

    def chi_ge(beta: np.ndarray) -> np.ndarray:
        return offdiag_solution(
            initial.chi_eg, initial.chi_ge, kset, rates.kappa, derived.Delta, beta
        )[1]

    provenance = {"uncoupled": "analytic", "zero-heating": "analytic"}.get(route, route)
    return CMatrixField(
        chi_ee=lambda beta: cache(beta)[0],
        chi_gg=lambda beta: cache(beta)[1],
        chi_eg=chi_eg,
        chi_ge=chi_ge,
        provenance=provenance,  # type: ignore[arg-type]
        t=t,
    )
