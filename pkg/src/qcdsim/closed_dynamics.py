"""Unitary evolution U(t) = D(σ₃α(t)) at the characteristic-function level.

The global phase produced by time ordering is not tracked; it cancels in every
density-matrix quantity.
"""

from __future__ import annotations

import cmath
import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .cmatrix import CharFn, CMatrixField, as_beta
from .constants import KERNEL_ATOL
from .kernels import ExponentialMoment, quad_complex
from .model import CouplingProfile

logger = logging.getLogger(__name__)


def displacement_amplitude(
    profile: CouplingProfile, t: float, method: Literal["closed", "quad"] = "closed"
) -> complex:
    """α(t) = -i ∫₀ᵗ g(s) e^{iνs} ds."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if method == "closed":
        return -1j * ExponentialMoment(profile, 1j * profile.nu)(t)
    nu = profile.nu
    moment = quad_complex(
        lambda s: profile(s) * cmath.exp(1j * nu * s),
        0.0,
        t,
        profile.breakpoints(),
        epsabs=KERNEL_ATOL,
    )
    return -1j * moment


@dataclass
class DisplacementTrajectory:
    profile: CouplingProfile
    tolerance: float = KERNEL_ATOL
    _moment: ExponentialMoment = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._moment = ExponentialMoment(self.profile, 1j * self.profile.nu)

    def __call__(self, t: float) -> complex:
        if t < 0:
            raise ValueError("t must be non-negative")
        return -1j * self._moment(t)

    def samples(self, times: np.ndarray) -> np.ndarray:
        return np.array([self(float(t)) for t in np.asarray(times, dtype=float)])


def validate_qubit_state(rho: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    state = np.asarray(rho, dtype=complex)
    if state.shape != (2, 2):
        raise ValueError(f"qubit state must be 2x2, got {state.shape}")
    if abs(np.trace(state) - 1) > atol:
        raise ValueError(f"qubit state trace is {np.trace(state).real:.12g}, expected 1")
    if not np.allclose(state, state.conj().T, atol=atol):
        raise ValueError("qubit state is not Hermitian")
    if np.min(np.linalg.eigvalsh(state)) < -atol:
        raise ValueError("qubit state is not positive")
    return state


def evolve_closed(
    qubit_state: np.ndarray,
    osc_charfn: CharFn,
    t: float,
    profile: CouplingProfile,
) -> CMatrixField:
    """C-Matrix of D(σ₃α)(ρ_q ⊗ ρ_a)D(σ₃α)† for a product initial state."""
    rho = validate_qubit_state(qubit_state)
    origin = complex(np.asarray(osc_charfn(np.array([0j])))[0])
    if abs(origin - 1) > 1e-10:
        raise ValueError(f"oscillator characteristic function is {origin} at the origin")
    alpha = displacement_amplitude(profile, t)
    a_conj = alpha.conjugate()
    logger.debug("closed evolution t=%s alpha=%s", t, alpha)

    def chi_ee(beta: np.ndarray) -> np.ndarray:
        b = as_beta(beta)
        return rho[0, 0] * osc_charfn(b) * np.exp(a_conj * b - alpha * np.conj(b))

    def chi_gg(beta: np.ndarray) -> np.ndarray:
        b = as_beta(beta)
        return rho[1, 1] * osc_charfn(b) * np.exp(alpha * np.conj(b) - a_conj * b)

    def chi_eg(beta: np.ndarray) -> np.ndarray:
        return rho[0, 1] * osc_charfn(as_beta(beta) + 2 * alpha)

    def chi_ge(beta: np.ndarray) -> np.ndarray:
        return rho[1, 0] * osc_charfn(as_beta(beta) - 2 * alpha)

    return CMatrixField(
        chi_ee=chi_ee, chi_gg=chi_gg, chi_eg=chi_eg, chi_ge=chi_ge, provenance="analytic", t=t
    )
