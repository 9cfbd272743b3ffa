from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from scipy import special

from qcdsim import fock_oracle
from qcdsim.cmatrix import GridSpec, product_field, thermal_charfn
from qcdsim.observables import (
    SCAN_COLUMNS,
    QuadratureError,
    ScenarioPoint,
    WignerQuadrature,
    displaced_thermal_population,
    envelope_extent,
    evolved_scenario_state,
    laguerre,
    nonclassicality_W,
    projected_charfn,
    projection_probability,
    q_m,
    q_m_oracle,
    scan,
    scenario,
    thermal_population,
    wigner,
    wigner_from_table,
    wigner_grid,
    wigner_origin,
    wigner_origin_oracle,
    witness_BN,
)

REFERENCE = scenario(g0=1.0, kappa=0.01, gamma=0.01, Na=0.0, t=1.0)


def _lossless(alpha0: complex, Na: float = 0.0) -> ScenarioPoint:
    return ScenarioPoint(g0=1.0, kappa=0.0, gamma=0.0, Na=Na, t=1.0, alpha0=alpha0, w=0.0)


def test_reference_point() -> None:
    assert REFERENCE.alpha0.real == 0
    assert REFERENCE.alpha0.imag == pytest.approx(-0.9975042, abs=1e-6)
    assert REFERENCE.w == pytest.approx(0.0166417, abs=1e-6)
    assert projection_probability(REFERENCE, -1) == pytest.approx(0.43277, abs=1e-4)
    assert q_m(0, REFERENCE) == pytest.approx(-0.482407, abs=1e-5)
    assert witness_BN(REFERENCE) == pytest.approx(0.965, abs=1e-3)
    assert nonclassicality_W(REFERENCE) == pytest.approx(0.847, abs=1e-3)


def test_scenario_series_branch_is_continuous() -> None:
    below = scenario(1.0, 1e-3 * (1 - 1e-9), 0.0, 1.0, 1.0)
    above = scenario(1.0, 1e-3 * (1 + 1e-9), 0.0, 1.0, 1.0)
    assert abs(below.alpha0 - above.alpha0) < 1e-9
    assert below.w == pytest.approx(above.w, rel=1e-6)
    lossless = scenario(2.0, 0.0, 0.0, 0.0, 0.5)
    assert lossless.alpha0 == pytest.approx(-1j)
    assert lossless.w == 0.0
    with pytest.raises(ValueError):
        scenario(1.0, -0.1, 0.0, 0.0, 1.0)


@pytest.mark.parametrize(("zeta", "Na"), [(0j, 0.0), (1 + 1j, 0.0), (0.5 - 1j, 2.0), (2j, 0.3)])
def test_population_routes_agree(zeta: complex, Na: float) -> None:
    m = np.arange(15)
    matrix = displaced_thermal_population(m, zeta, Na)
    closed = displaced_thermal_population(m, zeta, Na, method="closed")
    by_laguerre = displaced_thermal_population(m, zeta, Na, method="laguerre")
    np.testing.assert_allclose(closed, matrix, atol=1e-10)
    np.testing.assert_allclose(by_laguerre, matrix, atol=1e-10)


def test_population_sum_rule() -> None:
    m = np.arange(200)
    for zeta, Na in [(2j, 0.0), (1 - 1j, 1.5)]:
        total = np.sum(displaced_thermal_population(m, zeta, Na, method="closed"))
        assert total == pytest.approx(1.0, abs=1e-10)
    assert np.sum(thermal_population(m, 0.7)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        displaced_thermal_population(-1, 0j, 0.0)


def test_laguerre_matches_scipy() -> None:
    assert laguerre(1, 2.0) == pytest.approx(-1.0)
    assert laguerre(3, 1.0) == pytest.approx(-2 / 3)
    x = np.linspace(-3, 5, 9)
    for m in (0, 2, 7):
        for alpha in (0.0, 1.5):
            np.testing.assert_allclose(
                laguerre(m, x, alpha), special.eval_genlaguerre(m, alpha, x), rtol=1e-12
            )


def test_witness_for_a_pure_cat() -> None:
    point = _lossless(-1j)
    assert q_m(0, point) == pytest.approx(-0.490842, abs=1e-6)
    assert witness_BN(point) == pytest.approx(1 - math.exp(-4), abs=1e-9)


@pytest.mark.parametrize(("Na", "g0t"), [(0.0, 1.0), (1.0, 2.0), (3.0, 0.25)])
def test_witness_terms_sum_to_the_lost_coherence(Na: float, g0t: float) -> None:
    point = scenario(1.0, 0.01, 0.01, Na, g0t)
    total = 2 * np.sum(q_m(np.arange(250), point))
    assert total == pytest.approx(-math.expm1(-point.w), abs=1e-8)


def test_witness_and_metric_over_the_parameter_box() -> None:
    Na_grid = np.linspace(0.0, 30.0, 50)[::7]
    g0t_grid = np.linspace(0.06, 3.0, 50)[::7]
    table = scan(Na_grid, g0t_grid, kappa=0.01, gamma=0.01)
    bn = table.surface("BN")
    metric = table.surface("W_metric")
    assert np.all((metric >= 0) & (metric <= 1))
    assert bn.max() > 0.5
    assert metric.max() > 0.5
    # rows run over N_a
    assert np.all(np.diff(bn, axis=0) <= 1e-12)
    assert np.all(np.diff(metric, axis=0) <= 1e-12)


def test_witness_terms_match_the_fock_oracle() -> None:
    for m in range(4):
        assert q_m_oracle(m, REFERENCE) == pytest.approx(q_m(m, REFERENCE), abs=1e-8)


def test_projection_probabilities() -> None:
    plus = projection_probability(REFERENCE, "+")
    minus = projection_probability(REFERENCE, "minus")
    assert plus + minus == pytest.approx(1.0)
    chi = projected_charfn(REFERENCE, -1)
    assert chi(np.array([0j]))[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        projection_probability(REFERENCE, 0)
    with pytest.raises(ValueError, match="zero probability"):
        projected_charfn(_lossless(0j), -1)


def test_wigner_of_gaussian_states() -> None:
    assert wigner(thermal_charfn(0.0), 0j) == pytest.approx(2 / math.pi, abs=1e-8)
    assert wigner(thermal_charfn(1.0), 0j) == pytest.approx(1 / (1.5 * math.pi), abs=1e-8)

    d = 0.6 + 0.8j

    def displaced_vacuum(beta: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * np.abs(beta) ** 2 + beta * np.conj(d) - np.conj(beta) * d)

    values = wigner_grid(displaced_vacuum, [d, 0j])
    assert values[0] == pytest.approx(2 / math.pi, abs=1e-8)
    assert values[1] == pytest.approx(2 / math.pi * math.exp(-2), abs=1e-8)


def test_wigner_quadrature_failures() -> None:
    with pytest.raises(QuadratureError, match="does not decay"):
        envelope_extent(lambda beta: np.ones_like(beta))
    with pytest.raises(QuadratureError, match="did not converge"):
        wigner(thermal_charfn(0.0), 0j, WignerQuadrature(extent=8.0, order=8, max_order=16, tol=0))


def test_wigner_from_sampled_table() -> None:
    vacuum = product_field(np.full((2, 2), 0.5), thermal_charfn(0.0))
    table = vacuum.sample(GridSpec(extent=7.0, counts=(71, 71)))
    values = wigner_from_table(table, [0j, 1 + 0j])
    np.testing.assert_allclose(values, [2 / math.pi, 2 / math.pi * math.exp(-2)], atol=1e-8)

    field = REFERENCE.cmatrix().sample(GridSpec(extent=9.0, counts=(181, 181)))
    minus = wigner_from_table(field, [0j], state="minus")[0]
    assert minus == pytest.approx(wigner_origin(REFERENCE, -1), abs=1e-6)
    polar = vacuum.sample(GridSpec(pattern="polar", extent=5.0, counts=(10, 10)))
    with pytest.raises(QuadratureError):
        wigner_from_table(polar, [0j])


def test_wigner_origin_routes_agree() -> None:
    point = scenario(1.0, 0.05, 0.02, 1.0, 0.7)
    closed = wigner_origin(point, -1)
    assert wigner_origin_oracle(point) == pytest.approx(closed, abs=1e-6)
    assert wigner(projected_charfn(point, -1), 0j) == pytest.approx(closed, abs=1e-6)
    for route in ("quadrature", "oracle"):
        assert nonclassicality_W(REFERENCE, route=route) == pytest.approx(
            nonclassicality_W(REFERENCE), abs=1e-6
        )
    assert wigner_origin(point, +1) > 0


def test_lossless_cat_metric() -> None:
    assert nonclassicality_W(_lossless(-2j)) == pytest.approx(1 - math.exp(-8), abs=1e-6)
    assert nonclassicality_W(_lossless(0j)) == 0.0


def test_scan_grid(tmp_path: Path) -> None:
    table = scan([0.0, 1.0], [0.0, 0.5, 1.0], kappa=0.01, gamma=0.01)
    frame = table.to_frame()
    assert list(frame.columns) == SCAN_COLUMNS
    assert list(frame["Na"]) == [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]
    assert list(frame["g0t"]) == [0.0, 0.5, 1.0] * 2
    first = frame[frame["g0t"] == 0.0]
    assert (first["BN"].abs() < 1e-12).all()
    assert (first["W_metric"] == 0).all()
    assert table.surface("BN").shape == (2, 3)
    assert frame["negativity_oracle"].isna().all()

    path = table.write_csv(tmp_path / "scan.csv")
    loaded = pd.read_csv(path)
    assert loaded["BN"].to_numpy() == pytest.approx(frame["BN"].to_numpy(), rel=1e-10)

    with pytest.raises(ValueError, match="non-empty"):
        scan([], [1.0], 0.01, 0.01)


def test_witness_never_exceeds_the_negativity() -> None:
    table = scan([0.0, 0.5, 5.0], [1.0], kappa=0.01, gamma=0.01, oracle="check")
    frame = table.to_frame()
    checked = frame[frame["Na"] <= 3.0]
    assert (checked["BN"] <= checked["negativity_oracle"] + 1e-9).all()
    assert frame[frame["Na"] > 3.0]["negativity_oracle"].isna().all()


def test_evolved_state_matches_the_closed_form() -> None:
    point = scenario(1.0, 0.05, 0.02, 0.0, 0.5)
    evolved = evolved_scenario_state(point)
    closed = fock_oracle.scenario_state(point.alpha0, point.w, point.Na, evolved.cutoff)
    assert fock_oracle.negativity(evolved) == pytest.approx(
        fock_oracle.negativity(closed), abs=1e-6
    )
