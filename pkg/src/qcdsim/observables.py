"""Constant-coupling scenario: entanglement witness, projections, Wigner function and scans."""

from __future__ import annotations

import functools
import logging
import math
from collections.abc import Iterable
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from scipy import integrate, special

from . import fock_oracle
from .cmatrix import CharFn, CMatrixField, SampledCMatrix, as_beta
from .constants import (
    CSV_FLOAT_FORMAT,
    SCENARIO_SERIES_KAPPA_T,
    WIGNER_ENVELOPE_FLOOR,
    WIGNER_TOL,
)
from .model import CouplingProfile, RateInputs, SystemConfig

logger = logging.getLogger(__name__)

SCAN_COLUMNS = ["Na", "g0t", "alpha0_im", "w", "BN", "W_metric", "P_minus", "negativity_oracle"]


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioPoint:
    g0: float
    kappa: float
    gamma: float
    Na: float
    t: float
    alpha0: complex
    w: float

    @property
    def Delta(self) -> float:
        return self.Na + 0.5

    def cmatrix(self) -> CMatrixField:
        """Closed-form C-Matrix for the |+⟩ ⊗ thermal initial state."""
        a0, d, w = self.alpha0, self.Delta, self.w
        a0c = a0.conjugate()

        def chi_ee(beta: np.ndarray) -> np.ndarray:
            b = as_beta(beta)
            return 0.5 * np.exp(-d * np.abs(b) ** 2 - a0 * np.conj(b) + a0c * b)

        def chi_gg(beta: np.ndarray) -> np.ndarray:
            b = as_beta(beta)
            return 0.5 * np.exp(-d * np.abs(b) ** 2 + a0 * np.conj(b) - a0c * b)

        def chi_eg(beta: np.ndarray) -> np.ndarray:
            return 0.5 * np.exp(-d * np.abs(as_beta(beta) + 2 * a0) ** 2 - w)

        def chi_ge(beta: np.ndarray) -> np.ndarray:
            return 0.5 * np.exp(-d * np.abs(as_beta(beta) - 2 * a0) ** 2 - w)

        return CMatrixField(chi_ee, chi_gg, chi_eg, chi_ge, provenance="analytic", t=self.t)


def _bracket_over_y2(y: float) -> float:
    """(y - 3 + 4e^{-y/2} - e^{-y})/y²."""
    if y < SCENARIO_SERIES_KAPPA_T:
        return y / 12 - y**2 / 32 + 7 * y**3 / 960 - y**4 / 768
    return (y + 4 * math.expm1(-0.5 * y) - math.expm1(-y)) / (y * y)


def scenario(g0: float, kappa: float, gamma: float, Na: float, t: float) -> ScenarioPoint:
    if kappa < 0 or gamma < 0 or Na < 0 or t < 0:
        raise ValueError("scenario parameters must be non-negative")
    y = kappa * t
    if y < SCENARIO_SERIES_KAPPA_T:
        alpha0 = -1j * g0 * t * (1 - y / 4 + y * y / 24)
    else:
        alpha0 = -1j * (2 * g0 / kappa) * -math.expm1(-0.5 * y)
    Delta = Na + 0.5
    w = gamma * t + 16 * Delta * (g0 * t) ** 2 * _bracket_over_y2(y)
    return ScenarioPoint(g0=g0, kappa=kappa, gamma=gamma, Na=Na, t=t, alpha0=alpha0, w=w)


def thermal_population(m: int | np.ndarray, Na: float) -> np.ndarray:
    m = np.asarray(m)
    if Na == 0:
        return (m == 0).astype(float)
    return np.exp(m * math.log(Na) - (m + 1) * math.log1p(Na))


def _population_closed(m: np.ndarray, zeta: complex, Na: float) -> np.ndarray:
    """Displaced-thermal populations as a positive sum, evaluated in log space."""
    s = abs(zeta) ** 2
    m = np.atleast_1d(np.asarray(m, dtype=int))
    out = np.empty(m.shape, dtype=float)
    log_n1 = math.log1p(Na)
    for idx, mm in enumerate(m):
        k = np.arange(mm + 1)
        log_terms = (
            special.gammaln(mm + 1)
            - special.gammaln(k + 1)
            - special.gammaln(mm - k + 1)
            - special.gammaln(k + 1)
            + special.xlogy(mm - k, Na)
            + special.xlogy(k, s)
            - (mm + k) * log_n1
        )
        out[idx] = math.exp(-s / (Na + 1) - log_n1 + special.logsumexp(log_terms))
    return out


def _population_matrix(m: np.ndarray, zeta: complex, Na: float) -> np.ndarray:
    m = np.atleast_1d(np.asarray(m, dtype=int))
    cutoff = max(int(m.max()) + 20, fock_oracle.choose_cutoff(Na, abs(zeta) / 2))
    while fock_oracle.thermal_tail_weight(Na, cutoff) > 1e-14:
        cutoff *= 2
    d = fock_oracle.displacement_matrix(zeta, cutoff)
    rho = fock_oracle.thermal_state(Na, cutoff, warn=False)
    displaced = d @ rho @ d.conj().T
    return np.real(np.diagonal(displaced))[m]


def _population_laguerre(m: np.ndarray, zeta: complex, Na: float) -> np.ndarray:
    m = np.atleast_1d(np.asarray(m, dtype=int))
    s = abs(zeta) ** 2
    if Na == 0:
        return np.exp(special.xlogy(m, s) - s - special.gammaln(m + 1))
    x = -s / (Na * (Na + 1))
    values = np.array([laguerre(int(mm), x) for mm in m])
    return thermal_population(m, Na) * math.exp(-s / (Na + 1)) * values


@functools.cache
def _closed_population_validated() -> bool:
    probes = [(0.0, 0j), (0.0, 1 + 1j), (2.0, 1 + 1j), (3.0, 2j), (0.5, -0.7 + 0.3j)]
    m = np.arange(12)
    for Na, zeta in probes:
        closed = _population_closed(m, zeta, Na)
        matrix = _population_matrix(m, zeta, Na)
        if np.max(np.abs(closed - matrix)) > 1e-9:
            raise ArithmeticError(
                f"closed-form populations disagree with matrix algebra at Na={Na}, zeta={zeta}"
            )
    return True


def displaced_thermal_population(
    m: int | np.ndarray,
    zeta: complex,
    Na: float,
    method: Literal["matrix", "closed", "laguerre"] = "matrix",
) -> float | np.ndarray:
    """P_m(ζ, N_a) = ⟨m|D(ζ)ρ_th D(ζ)†|m⟩."""
    scalar = np.ndim(m) == 0
    if np.any(np.asarray(m) < 0):
        raise ValueError("m must be non-negative")
    if method == "matrix":
        values = _population_matrix(np.asarray(m), zeta, Na)
    elif method == "closed":
        _closed_population_validated()
        values = _population_closed(np.asarray(m), zeta, Na)
    elif method == "laguerre":
        values = _population_laguerre(np.asarray(m), zeta, Na)
    else:
        raise ValueError(f"unknown population method {method!r}")
    return float(values[0]) if scalar else values


def default_m_max(point: ScenarioPoint) -> int:
    return int(math.ceil(8 * abs(point.alpha0) ** 2 + 8 * point.Na + 20))


def q_m(m: int | np.ndarray, point: ScenarioPoint) -> float | np.ndarray:
    """½[P_m(2α₀) - p_m e^{-w}], the test-state expectation of ρ^{T_q}."""
    scalar = np.ndim(m) == 0
    ms = np.atleast_1d(np.asarray(m, dtype=int))
    displaced = displaced_thermal_population(ms, 2 * point.alpha0, point.Na, method="closed")
    values = 0.5 * (displaced - thermal_population(ms, point.Na) * math.exp(-point.w))
    return float(values[0]) if scalar else values


def q_m_oracle(m: int, point: ScenarioPoint) -> float:
    """⟨ψ_m|ρ^{T_q}|ψ_m⟩ on the Fock-space scenario state with an explicit test state."""
    state = fock_oracle.adaptive_cutoff(
        lambda c: fock_oracle.scenario_state(point.alpha0, point.w, point.Na, c),
        point.Na,
        abs(point.alpha0) + math.sqrt(m),
    )
    transposed = state.blocks.transpose(1, 0, 2, 3)
    psi = fock_oracle.test_state(m, point.alpha0, state.cutoff)
    return fock_oracle.expectation(transposed, psi).real


def witness_BN(point: ScenarioPoint, m_max: int | None = None) -> float:
    top = default_m_max(point) if m_max is None else m_max
    q = np.asarray(q_m(np.arange(top + 1), point))
    return float(2 * np.sum(np.abs(q[q < 0])))


def projection_probability(point: ScenarioPoint, sign: int | str) -> float:
    s = _sign(sign)
    p_minus = -0.5 * math.expm1(-4 * point.Delta * abs(point.alpha0) ** 2 - point.w)
    return p_minus if s < 0 else 1.0 - p_minus


def projected_charfn(point: ScenarioPoint, sign: int | str) -> CharFn:
    """Normalized χ of the oscillator after the qubit is found in |±⟩."""
    s = _sign(sign)
    probability = projection_probability(point, s)
    if probability <= 0:
        raise ValueError("projection has zero probability")
    unnormalized = point.cmatrix().projected(s)
    return lambda beta: unnormalized(beta) / probability


def _sign(sign: int | str) -> int:
    if sign in (1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ValueError(f"sign must be + or -, got {sign!r}")


@dataclass(frozen=True)
class WignerQuadrature:
    """Tensor Gauss-Legendre rule on [-extent, extent]², refined by order doubling."""

    extent: float | None = None
    order: int = 48
    max_order: int = 768
    tol: float = WIGNER_TOL


def envelope_extent(charfn: CharFn, floor: float = WIGNER_ENVELOPE_FLOOR) -> float:
    """Smallest probed radius beyond which |χ| stays under the floor."""
    angles = np.exp(1j * np.linspace(0, 2 * np.pi, 32, endpoint=False))
    radius = 1.0
    while radius <= 4096:
        ring = np.concatenate([np.abs(charfn(r * angles)) for r in (radius, 1.5 * radius)])
        if np.max(ring) < floor:
            return radius
        radius *= 2
    raise QuadratureError("characteristic function does not decay; Wigner integral diverges")


def _gauss_square(extent: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    x = extent * nodes
    wx = extent * weights
    re, im = np.meshgrid(x, x, indexing="ij")
    return (re + 1j * im).ravel(), np.outer(wx, wx).ravel()


def _wigner_sum(values: np.ndarray, beta: np.ndarray, weights: np.ndarray, alpha: complex):
    kernel = np.exp(alpha * np.conj(beta) - np.conj(alpha) * beta)
    return np.sum(weights * values * kernel) / math.pi**2


def wigner_grid(
    charfn: CharFn, alphas: Iterable[complex], quad: WignerQuadrature | None = None
) -> np.ndarray:
    """W(α) = π⁻² ∫ d²β χ(β) e^{αβ*-α*β} at many points on one quadrature rule."""
    rule = quad or WignerQuadrature()
    points = np.asarray(list(alphas), dtype=complex)
    extent = rule.extent or envelope_extent(charfn)
    probe = points[np.argmax(np.abs(points))] if points.size else 0j

    order = rule.order
    beta, weights = _gauss_square(extent, order)
    values = np.asarray(charfn(beta), dtype=complex)
    previous = _wigner_sum(values, beta, weights, probe)
    while True:
        if order * 2 > rule.max_order:
            raise QuadratureError(f"Wigner quadrature did not converge by order {order}")
        order *= 2
        beta, weights = _gauss_square(extent, order)
        values = np.asarray(charfn(beta), dtype=complex)
        current = _wigner_sum(values, beta, weights, probe)
        if abs(current - previous) < rule.tol:
            break
        previous = current

    results = np.array([_wigner_sum(values, beta, weights, a) for a in points])
    residual = float(np.max(np.abs(results.imag))) if results.size else 0.0
    if residual > rule.tol:
        raise QuadratureError(f"Wigner integral has imaginary residual {residual:.3e}")
    return results.real


def wigner(charfn: CharFn, alpha: complex, quad: WignerQuadrature | None = None) -> float:
    return float(wigner_grid(charfn, [alpha], quad)[0])


def wigner_from_table(
    table: SampledCMatrix,
    alphas: Iterable[complex],
    state: Literal["reduced", "plus", "minus"] = "reduced",
) -> np.ndarray:
    """W(α) of an oscillator state stored as a sampled C-Matrix, by trapezoidal quadrature."""
    if table.grid is None or table.grid.pattern != "cartesian":
        raise QuadratureError("stored table is not on a cartesian grid")
    if state not in ("reduced", "plus", "minus"):
        raise ValueError(f"unknown oscillator state {state!r}")
    if state == "reduced":
        chi = table.values["ee"] + table.values["gg"]
    else:
        s = 1 if state == "plus" else -1
        chi = 0.5 * (
            table.values["ee"] + table.values["gg"] + s * (table.values["eg"] + table.values["ge"])
        )
    re_axis, im_axis = table.grid.axes()
    shape = (re_axis.size, im_axis.size)
    beta = table.beta.reshape(shape)
    chi = chi.reshape(shape)
    edge = np.concatenate([chi[0], chi[-1], chi[:, 0], chi[:, -1]])
    if np.max(np.abs(edge)) > 1e-6:
        logger.warning("characteristic function is %.3e at the table edge", np.max(np.abs(edge)))
    norm = table.value_at(0j)
    weight = norm["ee"] + norm["gg"]
    if state != "reduced":
        weight = 0.5 * (weight + s * (norm["eg"] + norm["ge"]))
    if abs(weight) <= 0:
        raise ValueError(f"{state} projection has zero probability")
    results = []
    for alpha in alphas:
        integrand = chi * np.exp(alpha * np.conj(beta) - np.conj(alpha) * beta)
        inner = integrate.trapezoid(integrand, im_axis, axis=1)
        results.append(integrate.trapezoid(inner, re_axis) / (math.pi**2 * weight))
    values = np.asarray(results, dtype=complex)
    residual = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if residual > 1e-6:
        logger.warning("Wigner values carry imaginary residual %.3e", residual)
    return values.real


def wigner_origin(point: ScenarioPoint, sign: int | str = -1) -> float:
    """W(0) of the |±⟩-projected oscillator from the closed-form C-Matrix."""
    s = _sign(sign)
    probability = projection_probability(point, s)
    if probability <= 0:
        raise ValueError("projection has zero probability")
    d = point.Delta
    numerator = math.exp(-abs(point.alpha0) ** 2 / d) + s * math.exp(-point.w)
    return numerator / (2 * math.pi * d * probability)


def wigner_origin_oracle(point: ScenarioPoint) -> float:
    alpha_max = abs(point.alpha0)
    state = fock_oracle.adaptive_cutoff(
        lambda c: fock_oracle.scenario_state(point.alpha0, point.w, point.Na, c),
        point.Na,
        alpha_max,
    )
    _probability, oscillator = fock_oracle.projected_oscillator(state, -1)
    return fock_oracle.wigner_origin(oscillator)


@functools.cache
def _closed_wigner_validated() -> bool:
    probes = [
        scenario(1.0, 0.01, 0.01, 0.0, 1.0),
        scenario(1.0, 0.05, 0.02, 1.0, 0.7),
        scenario(1.0, 0.0, 0.0, 0.0, 2.0),
    ]
    for point in probes:
        closed = wigner_origin(point, -1)
        by_quadrature = wigner(projected_charfn(point, -1), 0j)
        by_oracle = wigner_origin_oracle(point)
        if abs(closed - by_quadrature) > 1e-6 or abs(closed - by_oracle) > 1e-6:
            raise ArithmeticError(
                f"W(0) routes disagree: closed={closed}, quadrature={by_quadrature}, "
                f"oracle={by_oracle}"
            )
    return True


def nonclassicality_W(
    point: ScenarioPoint, route: Literal["closed", "quadrature", "oracle"] = "closed"
) -> float:
    """πP₋ max{0, -W(0)} for the oscillator left after finding the qubit in |-⟩."""
    p_minus = projection_probability(point, -1)
    if p_minus <= 0:
        return 0.0
    if route == "closed":
        _closed_wigner_validated()
        d = point.Delta
        value = max(0.0, (math.exp(-point.w) - math.exp(-abs(point.alpha0) ** 2 / d)) / (2 * d))
    else:
        if route == "quadrature":
            w0 = wigner(projected_charfn(point, -1), 0j)
        elif route == "oracle":
            w0 = wigner_origin_oracle(point)
        else:
            raise ValueError(f"unknown route {route!r}")
        value = math.pi * p_minus * max(0.0, -w0)
    if value > 1 + 1e-9:
        raise ArithmeticError(f"non-classicality metric {value} exceeds 1")
    return value


def laguerre(m: int, x: float | np.ndarray, alpha: float = 0.0) -> float | np.ndarray:
    """Generalized Laguerre polynomial L_m^(α)(x) by three-term recurrence."""
    if m < 0:
        raise ValueError("m must be non-negative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if m == 0:
        return prev if prev.ndim else float(prev)
    curr = 1.0 + alpha - x
    for k in range(1, m):
        prev, curr = curr, ((2 * k + 1 + alpha - x) * curr - (k + alpha) * prev) / (k + 1)
    return curr if np.ndim(curr) else float(curr)


@dataclass(frozen=True)
class ScanCell:
    Na: float
    g0t: float
    alpha0_im: float
    w: float
    BN: float
    W_metric: float
    P_minus: float
    negativity_oracle: float | None = None


def scan_cell(
    Na: float,
    g0t: float,
    kappa: float,
    gamma: float,
    oracle: Literal["off", "check", "full"] = "off",
) -> ScanCell:
    """One (N_a, g₀t) cell in units where g₀ = 1."""
    point = scenario(1.0, kappa, gamma, Na, g0t)
    negativity = None
    if oracle == "check":
        state = fock_oracle.adaptive_cutoff(
            lambda c: fock_oracle.scenario_state(point.alpha0, point.w, Na, c),
            Na,
            abs(point.alpha0),
        )
        negativity = fock_oracle.negativity(state)
    elif oracle == "full":
        negativity = fock_oracle.negativity(evolved_scenario_state(point))
    return ScanCell(
        Na=Na,
        g0t=g0t,
        alpha0_im=point.alpha0.imag,
        w=point.w,
        BN=witness_BN(point),
        W_metric=nonclassicality_W(point),
        P_minus=projection_probability(point, -1),
        negativity_oracle=negativity,
    )


def evolved_scenario_state(point: ScenarioPoint) -> fock_oracle.JointFockState:
    """Master-equation evolution of |+⟩⊗ρ_th under constant coupling, pure dephasing γ."""
    config = SystemConfig(
        profile=CouplingProfile.constant(point.g0),
        rates=RateInputs(kappa=point.kappa, gamma2=point.gamma, Na=point.Na),
    )
    cutoff = fock_oracle.oracle_cutoff(point.Na, abs(point.alpha0))
    initial = fock_oracle.JointFockState.from_product(
        fock_oracle.PLUS, fock_oracle.thermal_state(point.Na, cutoff, warn=False)
    )
    return fock_oracle.integrate(initial, config, point.t)


@dataclass
class ScanTable:
    cells: list[ScanCell]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(cell) for cell in self.cells], columns=SCAN_COLUMNS)

    def write_csv(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="")
        return path

    def surface(self, column: str) -> np.ndarray:
        frame = self.to_frame()
        return frame.pivot(index="Na", columns="g0t", values=column).to_numpy()


def scan(
    Na_grid: Iterable[float],
    g0t_grid: Iterable[float],
    kappa: float,
    gamma: float,
    oracle: Literal["off", "check", "full"] = "off",
    oracle_max_Na: float = 3.0,
) -> ScanTable:
    """Row-major over N_a then g₀t."""
    Nas = [float(n) for n in Na_grid]
    times = [float(t) for t in g0t_grid]
    if not Nas or not times:
        raise ValueError("scan grids must be non-empty")
    cells = [
        scan_cell(Na, g0t, kappa, gamma, oracle if Na <= oracle_max_Na else "off")
        for Na in Nas
        for g0t in times
    ]
    return ScanTable(cells)
