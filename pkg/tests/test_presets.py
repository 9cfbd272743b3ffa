from __future__ import annotations

import math

import pytest

from qcdsim.presets import PLATFORMS, UnknownPlatformError, parse_quantity, platform_preset


def test_parse_quantity_angular_rates() -> None:
    quantity = parse_quantity("2pi*100 MHz")
    assert quantity.value == pytest.approx(2 * math.pi * 1e8)
    assert quantity.dimension == "rate"
    assert parse_quantity("100 mK").value == pytest.approx(0.1)
    with pytest.raises(ValueError, match="unknown unit"):
        parse_quantity("3 furlongs")


@pytest.mark.parametrize("name", PLATFORMS)
def test_every_enforced_quote_is_reproduced(name: str) -> None:
    preset = platform_preset(name)
    checks = preset.check_quotes()
    assert checks
    failing = [c.quote.label() for c in checks if not c.ok]
    assert failing == []


def test_flux_quotes_labels() -> None:
    labels = [q.label() for q in platform_preset("flux-nanomech").quotes]
    assert "kappa_Na = 0.01 omega" in labels


def test_cavity_quotes_keep_annotations() -> None:
    preset = platform_preset("cavity-qed")
    by_label = {c.quote.label(): c for c in preset.check_quotes()}
    gamma = by_label["gamma = 3e-4 g"]
    assert not gamma.enforced
    assert gamma.quote.annotation
    kappa_na = by_label["kappa_Na = 8e-3 g"]
    assert not kappa_na.enforced
    assert kappa_na.computed == pytest.approx(5.1e-3, rel=0.02)
    assert preset.normalized.rates.mode == "exchanged-qed"


def test_circuit_effective_rates_in_inverse_microseconds() -> None:
    preset = platform_preset("circuit-qed")
    by_quantity = {c.quote.quantity: c for c in preset.check_quotes()}
    assert by_quantity["gamma1_eff"].computed == pytest.approx(0.3)
    assert by_quantity["gamma2_eff"].computed == pytest.approx(0.65)


def test_trapped_ion_thermal_estimate() -> None:
    preset = platform_preset("trapped-ion")
    assert preset.thermal_estimates()["Na"] == pytest.approx(6e5, rel=0.1)
    assert preset.normalized.rates.kappa * preset.normalized.rates.Na == pytest.approx(2e-3)


def test_unknown_platform() -> None:
    with pytest.raises(UnknownPlatformError):
        platform_preset("quantum-dot")
    with pytest.raises(KeyError):
        platform_preset("")
