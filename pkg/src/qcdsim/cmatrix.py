"""C-Matrix fields, phase-space grids and their tabular form."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator

from .constants import CSV_FLOAT_FORMAT, DEFAULT_GRID_COUNT, GRID_ENVELOPE_FLOOR

CharFn = Callable[[np.ndarray], np.ndarray]
Provenance = Literal["analytic", "ode", "perturbative", "oracle", "sampled"]

ELEMENTS = ("ee", "gg", "eg", "ge")
TABLE_COLUMNS = ["re_beta", "im_beta"] + [
    f"{part}_chi_{name}" for name in ELEMENTS for part in ("re", "im")
]


def as_beta(beta: complex | np.ndarray) -> np.ndarray:
    return np.asarray(beta, dtype=complex)


@dataclass(frozen=True)
class GridSpec:
    """Phase-space sample points.

    Cartesian grids are row-major with Re β as the outer index. Polar grids are
    row-major with the radius as the outer index.
    """

    pattern: Literal["cartesian", "polar"] = "cartesian"
    extent: float = 7.0
    counts: tuple[int, int] = (DEFAULT_GRID_COUNT, DEFAULT_GRID_COUNT)

    def __post_init__(self) -> None:
        if self.pattern not in ("cartesian", "polar"):
            raise ValueError(f"unknown grid pattern {self.pattern!r}")
        if not self.extent > 0:
            raise ValueError("grid extent must be positive")
        if len(self.counts) != 2 or min(self.counts) < 2:
            raise ValueError("grid counts must be two integers >= 2")

    @classmethod
    def default_for(cls, Delta: float, pattern: str = "cartesian") -> GridSpec:
        """Extent where a Gaussian envelope e^{-Δ|β|²} drops below the floor."""
        extent = math.sqrt(-math.log(GRID_ENVELOPE_FLOOR) / Delta)
        return cls(pattern=pattern, extent=extent)  # type: ignore[arg-type]

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        n1, n2 = self.counts
        if self.pattern == "cartesian":
            axis1 = np.linspace(-self.extent, self.extent, n1)
            axis2 = np.linspace(-self.extent, self.extent, n2)
        else:
            axis1 = np.linspace(0.0, self.extent, n1)
            axis2 = np.linspace(0.0, 2 * math.pi, n2, endpoint=False)
        return axis1, axis2

    def points(self) -> np.ndarray:
        axis1, axis2 = self.axes()
        first, second = np.meshgrid(axis1, axis2, indexing="ij")
        if self.pattern == "cartesian":
            grid = first + 1j * second
        else:
            grid = first * np.exp(1j * second)
        return grid.ravel()

    @property
    def size(self) -> int:
        return self.counts[0] * self.counts[1]


@dataclass(frozen=True)
class CMatrixField:
    """The four characteristic-function components χ_jk(β) = Tr_osc[⟨j|ρ|k⟩ D(β)]."""

    chi_ee: CharFn
    chi_gg: CharFn
    chi_eg: CharFn
    chi_ge: CharFn
    provenance: Provenance = "analytic"
    t: float = 0.0

    def element(self, name: str) -> CharFn:
        return getattr(self, f"chi_{name}")

    def evaluate(self, beta: complex | np.ndarray) -> dict[str, np.ndarray]:
        points = as_beta(beta)
        return {name: np.asarray(self.element(name)(points), dtype=complex) for name in ELEMENTS}

    def matrix(self, beta: complex) -> np.ndarray:
        """2×2 C-Matrix at one point, basis (e, g)."""
        values = self.evaluate(np.array([beta]))
        return np.array(
            [[values["ee"][0], values["eg"][0]], [values["ge"][0], values["gg"][0]]]
        )

    def trace(self) -> complex:
        values = self.evaluate(np.array([0j]))
        return complex(values["ee"][0] + values["gg"][0])

    def reduced(self) -> CharFn:
        """Characteristic function of the oscillator with the qubit traced out."""
        return lambda beta: self.chi_ee(beta) + self.chi_gg(beta)

    def projected(self, sign: int) -> CharFn:
        """Unnormalized χ of ⟨±|ρ|±⟩, with |±⟩ = (|e⟩ ± |g⟩)/√2."""
        s = 1 if sign > 0 else -1
        return lambda beta: 0.5 * (
            self.chi_ee(beta) + self.chi_gg(beta) + s * (self.chi_eg(beta) + self.chi_ge(beta))
        )

    def sample(self, grid: GridSpec) -> SampledCMatrix:
        beta = grid.points()
        return SampledCMatrix(
            beta=beta,
            values=self.evaluate(beta),
            grid=grid,
            provenance=self.provenance,
            t=self.t,
        )


def thermal_charfn(Na: float) -> CharFn:
    """χ_th(β) = e^{-(N_a+½)|β|²}."""
    delta = Na + 0.5
    return lambda beta: np.exp(-delta * np.abs(as_beta(beta)) ** 2)


def product_field(qubit: np.ndarray, osc_charfn: CharFn) -> CMatrixField:
    """C-Matrix of ρ_q ⊗ ρ_osc, qubit basis (e, g)."""
    rho = np.asarray(qubit, dtype=complex)

    def element(j: int, k: int) -> CharFn:
        return lambda beta: rho[j, k] * osc_charfn(as_beta(beta))

    return CMatrixField(
        chi_ee=element(0, 0), chi_gg=element(1, 1), chi_eg=element(0, 1), chi_ge=element(1, 0)
    )


def check_hermiticity(
    cmatrix: CMatrixField, probes: np.ndarray | None = None, atol: float = 1e-8
) -> float:
    """Largest |χ_ge(β) - conj χ_eg(-β)| over the probe points."""
    points = probes if probes is not None else np.array([0.3 + 0.1j, -0.7 + 0.4j, 1.1 - 0.9j])
    eg = np.asarray(cmatrix.chi_eg(-points))
    ge = np.asarray(cmatrix.chi_ge(points))
    defect = float(np.max(np.abs(ge - np.conj(eg))))
    if defect > atol:
        raise ValueError(f"C-Matrix is not Hermitian: defect {defect:.3e}")
    return defect


@dataclass
class SampledCMatrix:
    beta: np.ndarray
    values: dict[str, np.ndarray]
    grid: GridSpec | None = None
    provenance: str = "sampled"
    t: float = 0.0
    _interpolants: dict[str, tuple[RegularGridInterpolator, RegularGridInterpolator]] = field(
        default_factory=dict, repr=False
    )

    def to_frame(self) -> pd.DataFrame:
        columns: dict[str, np.ndarray] = {
            "re_beta": self.beta.real,
            "im_beta": self.beta.imag,
        }
        for name in ELEMENTS:
            columns[f"re_chi_{name}"] = self.values[name].real
            columns[f"im_chi_{name}"] = self.values[name].imag
        return pd.DataFrame(columns, columns=TABLE_COLUMNS)

    def write_csv(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        return path

    @classmethod
    def read_csv(cls, path: Path) -> SampledCMatrix:
        frame = pd.read_csv(path)
        missing = [c for c in TABLE_COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"{path} is missing columns: {', '.join(missing)}")
        beta = frame["re_beta"].to_numpy() + 1j * frame["im_beta"].to_numpy()
        values = {
            name: frame[f"re_chi_{name}"].to_numpy() + 1j * frame[f"im_chi_{name}"].to_numpy()
            for name in ELEMENTS
        }
        return cls(beta=beta, values=values, grid=_infer_cartesian(beta))

    def value_at(self, beta: complex) -> dict[str, complex]:
        idx = int(np.argmin(np.abs(self.beta - beta)))
        return {name: complex(self.values[name][idx]) for name in ELEMENTS}

    def _cartesian_axes(self) -> tuple[np.ndarray, np.ndarray]:
        if self.grid is None or self.grid.pattern != "cartesian":
            raise ValueError("interpolation needs a cartesian grid")
        return self.grid.axes()

    def _interpolant(self, name: str) -> tuple[RegularGridInterpolator, RegularGridInterpolator]:
        if name not in self._interpolants:
            axes = self._cartesian_axes()
            shape = (len(axes[0]), len(axes[1]))
            table = self.values[name].reshape(shape)
            self._interpolants[name] = tuple(  # type: ignore[assignment]
                RegularGridInterpolator(axes, part, bounds_error=False, fill_value=0.0)
                for part in (table.real, table.imag)
            )
        return self._interpolants[name]

    def to_field(self) -> CMatrixField:
        """Bilinear interpolant of the table, zero outside the grid."""

        def make(name: str) -> CharFn:
            def chi(beta: np.ndarray) -> np.ndarray:
                points = as_beta(beta)
                flat = points.ravel()
                xy = np.column_stack([flat.real, flat.imag])
                re_part, im_part = self._interpolant(name)
                return (re_part(xy) + 1j * im_part(xy)).reshape(points.shape)

            return chi

        return CMatrixField(
            chi_ee=make("ee"),
            chi_gg=make("gg"),
            chi_eg=make("eg"),
            chi_ge=make("ge"),
            provenance="sampled",
            t=self.t,
        )

    def max_deviation(self, other: SampledCMatrix) -> dict[str, float]:
        return {
            name: float(np.max(np.abs(self.values[name] - other.values[name])))
            for name in ELEMENTS
        }


def _infer_cartesian(beta: np.ndarray) -> GridSpec | None:
    re_axis = np.unique(np.round(beta.real, 12))
    im_axis = np.unique(np.round(beta.imag, 12))
    if re_axis.size * im_axis.size != beta.size or re_axis.size < 2 or im_axis.size < 2:
        return None
    extent = float(re_axis[-1])
    if not np.isclose(-re_axis[0], extent) or not np.isclose(im_axis[-1], extent):
        return None
    grid = GridSpec(pattern="cartesian", extent=extent, counts=(re_axis.size, im_axis.size))
    if not np.allclose(grid.points(), beta, atol=1e-9):
        return None
    return grid
