"""Truncated Fock-space reference for the joint qubit-oscillator state.

The state is stored as oscillator blocks ``blocks[j, k] = ⟨j|ρ|k⟩`` with qubit basis
index 0 = e, 1 = g. Dissipators use D[A]ρ = 2AρA† - A†Aρ - ρA†A with prefactors
κ(N_a+1)/2 on a, κN_a/2 on a†, Γ_c/2 on σ⁻, Γ_h/2 on σ⁺ and γ_φ/4 on σ₃.
"""

from __future__ import annotations

import functools
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg, sparse
from scipy.integrate import solve_ivp

from .constants import (
    CSV_FLOAT_FORMAT,
    FOCK_MAX_CUTOFF,
    FOCK_TAIL_BREACH,
    FOCK_TAIL_TARGET,
    ORACLE_ATOL,
    ORACLE_POSITIVITY_FLOOR,
    ORACLE_RTOL,
    ORACLE_TRACE_DRIFT,
)
from .model import SystemConfig

logger = logging.getLogger(__name__)

QUBIT_SIGN = np.array([1.0, -1.0])
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]])
SIGMA_PLUS = SIGMA_MINUS.T.copy()
SIGMA_Z = np.diag(QUBIT_SIGN)
PLUS = np.full((2, 2), 0.5)
BASIS_LABEL = "qubit(e,g) x fock(0..cutoff)"


class TruncationError(RuntimeError):
    def __init__(self, tail: float, cutoff: int) -> None:
        super().__init__(
            f"Fock truncation breach: top-level population {tail:.3e} at cutoff {cutoff}"
        )
        self.tail = tail
        self.cutoff = cutoff


class OracleIntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class JointFockState:
    cutoff: int
    blocks: np.ndarray

    @classmethod
    def from_product(cls, qubit: np.ndarray, oscillator: np.ndarray) -> JointFockState:
        osc = np.asarray(oscillator, dtype=complex)
        blocks = np.einsum("jk,ab->jkab", np.asarray(qubit, dtype=complex), osc)
        return cls(cutoff=osc.shape[0] - 1, blocks=blocks)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> JointFockState:
        dim = matrix.shape[0] // 2
        blocks = np.asarray(matrix, dtype=complex).reshape(2, dim, 2, dim).transpose(0, 2, 1, 3)
        return cls(cutoff=dim - 1, blocks=blocks)

    @property
    def dim(self) -> int:
        return self.cutoff + 1

    @property
    def matrix(self) -> np.ndarray:
        """Full density matrix in the qubit ⊗ oscillator ordering."""
        return self.blocks.transpose(0, 2, 1, 3).reshape(2 * self.dim, 2 * self.dim)

    @property
    def tail_estimate(self) -> float:
        diag = np.real(np.einsum("jjaa->a", self.blocks))
        return float(np.sum(diag[-2:]))

    def trace(self) -> complex:
        return complex(np.einsum("jjaa->", self.blocks))

    def qubit_block(self, j: int, k: int) -> np.ndarray:
        return self.blocks[j, k]

    def reduced_oscillator(self) -> np.ndarray:
        return self.blocks[0, 0] + self.blocks[1, 1]

    def reduced_qubit(self) -> np.ndarray:
        return np.einsum("jkaa->jk", self.blocks)

    def mean_occupation(self) -> float:
        n = np.arange(self.dim)
        return float(np.real(np.diagonal(self.reduced_oscillator()) @ n))

    def min_eigenvalue(self) -> float:
        return float(np.min(linalg.eigvalsh(self.matrix)))

    def check_truncation(self, limit: float = FOCK_TAIL_BREACH) -> None:
        tail = self.tail_estimate
        if tail > limit:
            raise TruncationError(tail, self.cutoff)

    def write(self, path: Path) -> Path:
        rows, cols = np.nonzero(np.abs(self.matrix) > 0)
        values = self.matrix[rows, cols]
        frame = pd.DataFrame({"row": rows, "col": cols, "re": values.real, "im": values.imag})
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fp:
            fp.write(f"# cutoff={self.cutoff}\n")
            fp.write(f"# basis={BASIS_LABEL}\n")
            frame.to_csv(fp, index=False, float_format=CSV_FLOAT_FORMAT)
        return path

    @classmethod
    def read(cls, path: Path) -> JointFockState:
        cutoff: int | None = None
        with path.open("r", encoding="utf-8") as fp:
            for line in fp:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].strip().partition("=")
                if key == "cutoff":
                    cutoff = int(value)
        if cutoff is None:
            raise ValueError(f"{path} has no cutoff header")
        frame = pd.read_csv(path, comment="#")
        dim = 2 * (cutoff + 1)
        matrix = np.zeros((dim, dim), dtype=complex)
        matrix[frame["row"].to_numpy(), frame["col"].to_numpy()] = (
            frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
        )
        return cls.from_matrix(matrix)


def annihilation(cutoff: int) -> sparse.csr_matrix:
    return sparse.diags(np.sqrt(np.arange(1, cutoff + 1)), 1, format="csr", dtype=complex)


def column_norm_defect(matrix: np.ndarray) -> float:
    """Largest |1 - ‖column‖²|, the unitarity loss from truncation."""
    norms = np.sum(np.abs(matrix) ** 2, axis=0)
    return float(np.max(np.abs(1.0 - norms)))


@functools.lru_cache(maxsize=256)
def _displacement_cached(beta: complex, cutoff: int) -> np.ndarray:
    radius = abs(beta)
    pad = int(math.ceil(2 * radius**2 + 6 * radius * math.sqrt(cutoff + 1) + 40))
    size = cutoff + 1 + pad
    a = annihilation(size - 1).toarray()
    generator = beta * a.conj().T - np.conj(beta) * a
    full = linalg.expm(generator)
    cropped = np.ascontiguousarray(full[: cutoff + 1, : cutoff + 1])
    cropped.flags.writeable = False
    return cropped


def displacement_matrix(beta: complex, cutoff: int) -> np.ndarray:
    """D(β) = exp(βa† - β*a) on Fock levels 0..cutoff, cropped from a padded space."""
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    if beta == 0:
        return np.eye(cutoff + 1, dtype=complex)
    return _displacement_cached(complex(beta), int(cutoff))


def thermal_populations(Na: float, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    if Na == 0:
        return (n == 0).astype(float)
    return Na**n / (Na + 1.0) ** (n + 1)


def thermal_tail_weight(Na: float, cutoff: int) -> float:
    """Population above the cutoff, (N/(N+1))^{cutoff+1}."""
    if Na == 0:
        return 0.0
    return float((Na / (Na + 1.0)) ** (cutoff + 1))


def thermal_state(Na: float, cutoff: int, warn: bool = True) -> np.ndarray:
    tail = thermal_tail_weight(Na, cutoff)
    if warn and tail > FOCK_TAIL_TARGET:
        logger.warning("thermal state truncated with tail weight %.3e at cutoff %d", tail, cutoff)
    populations = thermal_populations(Na, cutoff)
    return np.diag(populations / populations.sum()).astype(complex)


def choose_cutoff(Na: float, alpha_max: float) -> int:
    return int(math.ceil(4 * (Na + 1) + 4 * abs(2 * alpha_max) ** 2 + 20))


def adaptive_cutoff(
    build: Callable[[int], JointFockState], Na: float, alpha_max: float
) -> JointFockState:
    """Double the cutoff until the top two levels hold less than the tail target."""
    cutoff = choose_cutoff(Na, alpha_max)
    while True:
        state = build(cutoff)
        if state.tail_estimate < FOCK_TAIL_TARGET:
            return state
        if cutoff * 2 > FOCK_MAX_CUTOFF:
            raise TruncationError(state.tail_estimate, cutoff)
        cutoff *= 2


def _dissipator(
    op: sparse.csr_matrix, op_h: sparse.csr_matrix, number: sparse.csr_matrix, x: np.ndarray
) -> np.ndarray:
    """2AXA† - A†AX - XA†A on every oscillator block, with number = A†A."""
    return 2 * _right(_left(op, x), op_h) - _left(number, x) - _right(x, number)


def _left(op: sparse.csr_matrix, x: np.ndarray) -> np.ndarray:
    """op @ block for every block in a (2, 2, n, n) stack."""
    n = x.shape[-1]
    flat = x.transpose(2, 0, 1, 3).reshape(n, -1)
    return np.asarray(op @ flat).reshape(n, 2, 2, n).transpose(1, 2, 0, 3)


def _right(x: np.ndarray, op: sparse.csr_matrix) -> np.ndarray:
    """block @ op for every block in a (2, 2, n, n) stack."""
    n = x.shape[-1]
    flat = x.reshape(-1, n)
    return np.asarray((op.T @ flat.T).T).reshape(x.shape)


def _qubit_dissipator(op: np.ndarray, x: np.ndarray) -> np.ndarray:
    number = op.conj().T @ op
    return (
        2 * np.einsum("jl,lmab,km->jkab", op, x, op.conj())
        - np.einsum("jl,lkab->jkab", number, x)
        - np.einsum("jlab,lk->jkab", x, number)
    )


class _Liouvillian:
    def __init__(self, config: SystemConfig, cutoff: int) -> None:
        rates, derived = config.rates, config.derived
        self.profile = config.profile
        self.a = annihilation(cutoff)
        self.ad = self.a.conj().T.tocsr()
        ad = self.ad
        self.osc_terms = [
            (0.5 * rates.kappa * (rates.Na + 1.0), self.a, ad, (ad @ self.a).tocsr()),
            (0.5 * rates.kappa * rates.Na, ad, self.a, (self.a @ ad).tocsr()),
        ]
        self.qubit_terms = [
            (0.5 * derived.Gamma_c, SIGMA_MINUS),
            (0.5 * derived.Gamma_h, SIGMA_PLUS),
            (0.25 * derived.gamma_phi, SIGMA_Z),
        ]
        self.dim = cutoff + 1

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        x = y.reshape(2, 2, self.dim, self.dim)
        out = np.zeros_like(x)
        g = self.profile(t)
        if g != 0:
            rot = np.exp(1j * self.profile.nu * t)
            h = (g * rot) * self.ad + (g * np.conj(rot)) * self.a
            hx = _left(h, x)
            xh = _right(x, h)
            out += -1j * (
                QUBIT_SIGN[:, None, None, None] * hx - QUBIT_SIGN[None, :, None, None] * xh
            )
        for rate, op, op_h, number in self.osc_terms:
            if rate:
                out += rate * _dissipator(op, op_h, number, x)
        for rate, op in self.qubit_terms:
            if rate:
                out += rate * _qubit_dissipator(op, x)
        return out.ravel()


def integrate(
    initial: JointFockState, config: SystemConfig, t: float, t0: float = 0.0
) -> JointFockState:
    """Adaptive explicit integration of the master equation from t0 to t."""
    if t < t0:
        raise ValueError("t must not precede t0")
    if t == t0:
        return initial
    rhs = _Liouvillian(config, initial.cutoff)
    edges = [t0, *config.profile.breakpoints_within(t0, t), t]
    y = initial.blocks.ravel().astype(complex)
    for lo, hi in zip(edges[:-1], edges[1:], strict=True):
        sol = solve_ivp(rhs, (lo, hi), y, method="DOP853", rtol=ORACLE_RTOL, atol=ORACLE_ATOL)
        if not sol.success:
            raise OracleIntegrationError(f"oracle integration failed: {sol.message}")
        y = sol.y[:, -1]
    state = JointFockState(cutoff=initial.cutoff, blocks=y.reshape(initial.blocks.shape))
    drift = abs(state.trace() - 1)
    if drift > ORACLE_TRACE_DRIFT:
        logger.warning("oracle trace drifted by %.3e", drift)
    lowest = state.min_eigenvalue()
    if lowest < ORACLE_POSITIVITY_FLOOR:
        logger.warning("oracle state lost positivity: smallest eigenvalue %.3e", lowest)
    state.check_truncation()
    return state


def cmatrix_extract(state: JointFockState, beta: complex) -> np.ndarray:
    """2×2 C-Matrix χ_jk(β) = Tr[⟨j|ρ|k⟩ D(β)] in the (e, g) basis."""
    if abs(beta) ** 2 > state.cutoff / 4:
        logger.warning(
            "beta=%s is near the edge of the Fock support (cutoff %d)", beta, state.cutoff
        )
    d = displacement_matrix(beta, state.cutoff)
    return np.einsum("jkab,ba->jk", state.blocks, d)


def partial_transpose(state: JointFockState) -> np.ndarray:
    """Full matrix of ρ^{T_q}: the eg and ge oscillator blocks swap places."""
    swapped = state.blocks.transpose(1, 0, 2, 3)
    return swapped.transpose(0, 2, 1, 3).reshape(2 * state.dim, 2 * state.dim)


def negativity(state: JointFockState) -> float:
    eigenvalues = linalg.eigvalsh(partial_transpose(state))
    return float(2 * np.sum(np.abs(eigenvalues[eigenvalues < 0])))


def apply_controlled_displacement(state: JointFockState, alpha: complex) -> JointFockState:
    """D(σ₃α) ρ D(σ₃α)†: the e rows move by +α and the g rows by -α."""
    ops = [displacement_matrix(alpha, state.cutoff), displacement_matrix(-alpha, state.cutoff)]
    blocks = np.empty_like(state.blocks)
    for j in range(2):
        for k in range(2):
            blocks[j, k] = ops[j] @ state.blocks[j, k] @ ops[k].conj().T
    result = JointFockState(cutoff=state.cutoff, blocks=blocks)
    tail = result.tail_estimate
    if tail > FOCK_TAIL_TARGET:
        logger.warning("displaced state reaches the Fock cutoff: tail %.3e", tail)
    return result


def fock_vector(m: int, cutoff: int) -> np.ndarray:
    vec = np.zeros(cutoff + 1, dtype=complex)
    vec[m] = 1.0
    return vec


def test_state(m: int, alpha0: complex, cutoff: int) -> np.ndarray:
    """ψ_m = (|e⟩D(-α₀)|m⟩ - |g⟩D(α₀)|m⟩)/√2 as a (2, cutoff+1) array."""
    ket = fock_vector(m, cutoff)
    return np.stack(
        [
            displacement_matrix(-alpha0, cutoff) @ ket,
            -(displacement_matrix(alpha0, cutoff) @ ket),
        ]
    ) / math.sqrt(2)


test_state.__test__ = False  # type: ignore[attr-defined]


def expectation(operator_blocks: np.ndarray, psi: np.ndarray) -> complex:
    """⟨ψ|A|ψ⟩ for A given as (2, 2, n, n) blocks and ψ as a (2, n) array."""
    return complex(np.einsum("ja,jkab,kb->", psi.conj(), operator_blocks, psi))


def scenario_state(
    alpha0: complex, w: float, Na: float, cutoff: int
) -> JointFockState:
    """Constant-coupling state: displaced |+⟩⊗ρ_th with coherences damped by e^{-w}."""
    initial = JointFockState.from_product(PLUS, thermal_state(Na, cutoff, warn=False))
    displaced = apply_controlled_displacement(initial, alpha0)
    blocks = displaced.blocks.copy()
    blocks[0, 1] *= math.exp(-w)
    blocks[1, 0] *= math.exp(-w)
    return JointFockState(cutoff=cutoff, blocks=blocks)


def projected_oscillator(state: JointFockState, sign: int) -> tuple[float, np.ndarray]:
    """Probability and normalized oscillator state after measuring the qubit in |±⟩."""
    s = 1 if sign > 0 else -1
    blocks = state.blocks
    unnormalized = 0.5 * (blocks[0, 0] + blocks[1, 1] + s * (blocks[0, 1] + blocks[1, 0]))
    probability = float(np.real(np.trace(unnormalized)))
    if probability <= 0:
        return 0.0, unnormalized
    return probability, unnormalized / probability


def wigner_origin(oscillator: np.ndarray) -> float:
    """W(0) = (2/π) Σ (-1)ⁿ ρ_nn."""
    parity = (-1.0) ** np.arange(oscillator.shape[0])
    return float(2 / math.pi * np.real(np.diagonal(oscillator) @ parity))


def oracle_cutoff(Na: float, alpha_max: float) -> int:
    """Cutoff for states reaching displacement alpha_max, probed on the closed-form state."""
    probe = adaptive_cutoff(lambda c: scenario_state(alpha_max, 0.0, Na, c), Na, alpha_max)
    return probe.cutoff
