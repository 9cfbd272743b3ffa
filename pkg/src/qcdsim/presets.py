"""Experimental platform presets shipped as YAML data files."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources
from typing import Any

import yaml

from .constants import PRESET_TOLERANCE
from .model import (
    CouplingProfile,
    RateInputs,
    SystemConfig,
    bose_einstein,
    omega_over_temperature,
)

PLATFORMS = ("flux-nanomech", "trapped-ion", "cavity-qed", "circuit-qed")

# unit -> (SI factor, dimension)
_UNITS: dict[str, tuple[float, str]] = {
    "": (1.0, "dimensionless"),
    "Hz": (1.0, "rate"),
    "kHz": (1e3, "rate"),
    "MHz": (1e6, "rate"),
    "GHz": (1e9, "rate"),
    "1/s": (1.0, "rate"),
    "1/ms": (1e3, "rate"),
    "1/us": (1e6, "rate"),
    "K": (1.0, "temperature"),
    "mK": (1e-3, "temperature"),
    "m": (1.0, "length"),
    "nm": (1e-9, "length"),
    "1/m": (1.0, "wavenumber"),
    "mT": (1e-3, "field"),
    "MHz/mT": (1e9, "rate/field"),
}

_QUANTITY_RE = re.compile(r"^\s*(?P<twopi>2pi\s*\*\s*)?(?P<mag>[-+0-9.eE]+)\s*(?P<unit>\S*)\s*$")


class UnknownPlatformError(KeyError):
    pass


@dataclass(frozen=True)
class Quantity:
    text: str
    value: float
    dimension: str
    note: str | None = None


def parse_quantity(text: str | float | int, note: str | None = None) -> Quantity:
    """Parse ``"2pi*100 MHz"``-style strings into SI values (angular rates in 1/s)."""
    if isinstance(text, int | float):
        return Quantity(text=str(text), value=float(text), dimension="dimensionless", note=note)
    match = _QUANTITY_RE.match(text)
    if match is None:
        raise ValueError(f"cannot parse quantity {text!r}")
    unit = match.group("unit")
    if unit not in _UNITS:
        raise ValueError(f"unknown unit {unit!r} in {text!r}")
    factor, dimension = _UNITS[unit]
    value = float(match.group("mag")) * factor
    if match.group("twopi"):
        value *= 2 * math.pi
    return Quantity(text=text, value=value, dimension=dimension, note=note)


@dataclass(frozen=True)
class Quote:
    quantity: str
    text: str
    unit: str
    annotation: str | None = None

    @property
    def value(self) -> float:
        return float(self.text)

    def label(self) -> str:
        suffix = f" {self.unit}" if self.unit else ""
        return f"{self.quantity} = {self.text}{suffix}"


@dataclass(frozen=True)
class QuoteCheck:
    quote: Quote
    computed: float
    deviation: float
    enforced: bool

    @property
    def ok(self) -> bool:
        return not self.enforced or self.deviation <= PRESET_TOLERANCE


@dataclass(frozen=True)
class PlatformPreset:
    name: str
    description: str
    reference: str
    raw: dict[str, Quantity]
    normalized: SystemConfig
    quotes: tuple[Quote, ...]
    thermal: dict[str, str]

    @property
    def reference_rate(self) -> float:
        """Reference rate in 1/s."""
        return self.raw[self.reference].value

    def normalized_value(self, quantity: str) -> float:
        cfg = self.normalized
        rates, derived = cfg.rates, cfg.derived
        table: dict[str, float | None] = {
            "g_max": cfg.profile.g_max,
            "nu": cfg.profile.nu,
            "kappa": rates.kappa,
            "kappa_Na": rates.kappa * rates.Na,
            "Na": rates.Na,
            "Nq": rates.Nq,
            "gamma1": rates.gamma1,
            "gamma2": rates.gamma2,
            "gamma": derived.gamma,
            "Gamma_c": derived.Gamma_c,
            "Gamma_h": derived.Gamma_h,
            "gamma1_eff": derived.gamma1_eff,
            "gamma2_eff": derived.gamma2_eff,
        }
        if quantity not in table or table[quantity] is None:
            raise KeyError(f"{self.name} has no quantity {quantity!r}")
        return float(table[quantity])  # type: ignore[arg-type]

    def quoted_value(self, quote: Quote) -> float:
        """The normalized quantity expressed in the quote's unit."""
        value = self.normalized_value(quote.quantity)
        if quote.unit in ("", self.reference):
            return value
        factor, dimension = _UNITS[quote.unit]
        if dimension != "rate":
            raise ValueError(f"quote unit {quote.unit!r} is not a rate")
        return value * self.reference_rate / factor

    def check_quotes(self) -> list[QuoteCheck]:
        checks: list[QuoteCheck] = []
        for quote in self.quotes:
            computed = self.quoted_value(quote)
            deviation = abs(computed - quote.value) / abs(quote.value)
            checks.append(
                QuoteCheck(
                    quote=quote,
                    computed=computed,
                    deviation=deviation,
                    enforced=quote.annotation is None,
                )
            )
        return checks

    def thermal_estimates(self) -> dict[str, float]:
        """Bose-Einstein occupations at the recorded bath temperature."""
        temperature = self.raw.get("T")
        if temperature is None:
            return {}
        estimates: dict[str, float] = {}
        for occupation, frequency_key in self.thermal.items():
            omega = self.raw[frequency_key].value
            estimates[occupation] = bose_einstein(
                omega_over_temperature(omega, temperature.value)
            )
        return estimates


def _load_preset_data(name: str) -> dict[str, Any]:
    if name not in PLATFORMS:
        raise UnknownPlatformError(
            f"unknown platform {name!r}; expected one of {', '.join(PLATFORMS)}"
        )
    text = resources.files("qcdsim").joinpath("presets", f"{name}.yaml").read_text("utf-8")
    return yaml.safe_load(text)


def _resolve(value: Any, raw: dict[str, Quantity], reference: float) -> float:
    """Numbers pass through; raw-parameter names are normalized by the reference rate."""
    if isinstance(value, int | float):
        return float(value)
    try:
        return float(value)
    except ValueError:
        pass
    quantity = raw[str(value)]
    if quantity.dimension == "rate":
        return quantity.value / reference
    if quantity.dimension == "dimensionless":
        return quantity.value
    raise ValueError(f"raw parameter {value!r} ({quantity.dimension}) cannot be normalized")


def platform_preset(name: str) -> PlatformPreset:
    data = _load_preset_data(name)
    raw: dict[str, Quantity] = {}
    for key, entry in data["raw"].items():
        if isinstance(entry, dict):
            raw[key] = parse_quantity(entry["value"], note=entry.get("note"))
        else:
            raw[key] = parse_quantity(entry)
    reference = str(data["reference"])
    ref_rate = raw[reference].value

    norm = data["normalized"]
    prof = norm["profile"]
    profile = CouplingProfile(
        kind=prof.get("kind", "constant"),
        g0=_resolve(prof["g0"], raw, ref_rate),
        nu=_resolve(prof.get("nu", 0.0), raw, ref_rate),
    )
    rate_raw = norm["rates"]
    rates = RateInputs(
        kappa=_resolve(rate_raw.get("kappa", 0.0), raw, ref_rate),
        gamma1=_resolve(rate_raw.get("gamma1", 0.0), raw, ref_rate),
        gamma2=_resolve(rate_raw.get("gamma2", 0.0), raw, ref_rate),
        Na=_resolve(rate_raw.get("Na", 0.0), raw, ref_rate),
        Nq=_resolve(rate_raw.get("Nq", 0.0), raw, ref_rate),
        mode=rate_raw.get("mode", "standard"),
    )
    quotes = tuple(
        Quote(
            quantity=q["quantity"],
            text=str(q["text"]),
            unit=q.get("unit", ""),
            annotation=q.get("annotation"),
        )
        for q in data.get("quotes", [])
    )
    return PlatformPreset(
        name=name,
        description=data.get("description", ""),
        reference=reference,
        raw=raw,
        normalized=SystemConfig(profile=profile, rates=rates),
        quotes=quotes,
        thermal=dict(data.get("thermal", {})),
    )
