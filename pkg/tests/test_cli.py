from __future__ import annotations

import json
import math
import time
from pathlib import Path
from types import SimpleNamespace

import pandas as pd
import pytest

from qcdsim import fock_oracle
from qcdsim.cli import map_ordered, oracle_probes, platform_report, run


def _config(tmp_path: Path, body: str) -> Path:
    path = tmp_path / "config.yaml"
    path.write_text(body.strip() + "\n", encoding="utf-8")
    return path


def _events(tmp_path: Path) -> list[dict]:
    lines = (tmp_path / "logs" / "events.jsonl").read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines]


SCENARIO = """
profile: {kind: constant, g0: 1.0}
rates: {kappa: 0.01, gamma2: 0.01, Na: 0}
times: [0.0, 1.0]
grid: {extent: 3, counts: 5}
"""


@pytest.mark.asyncio
async def test_map_ordered_keeps_input_order() -> None:
    def slow_square(x: int) -> int:
        time.sleep(0.01 * (5 - x))
        return x * x

    assert await map_ordered(slow_square, [1, 2, 3, 4], threads=4) == [1, 4, 9, 16]


def test_oracle_probes_stay_inside_the_disc() -> None:
    probes = oracle_probes(7, radius=2.0)
    assert probes.shape == (7,)
    assert max(abs(probes)) <= 2.0
    assert len(set(probes.round(12))) == 7


def test_platform_report_contents() -> None:
    report = platform_report("flux-nanomech")
    assert report["name"] == "flux-nanomech"
    assert all(entry["ok"] for entry in report["quotes"] if entry["enforced"])
    assert report["normalized"]["mode"] == "standard"


@pytest.mark.asyncio
async def test_platform_command(capsys) -> None:
    assert await run(["platform", "trapped-ion", "--json"]) == 0
    assert "trapped-ion" in capsys.readouterr().out
    assert await run(["platform", "quantum-dot"]) == 2


@pytest.mark.asyncio
async def test_simulate_writes_snapshots(tmp_path: Path) -> None:
    config_path = _config(tmp_path, SCENARIO)
    out = tmp_path / "run"

    assert await run(["simulate", "--config", str(config_path), "--out", str(out)]) == 0

    start = pd.read_csv(out / "cmatrix_000.csv")
    later = pd.read_csv(out / "cmatrix_001.csv")
    origin = (start["re_beta"] == 0) & (start["im_beta"] == 0)
    assert start.loc[origin, "re_chi_ee"].item() == pytest.approx(0.5)
    assert start.loc[origin, "re_chi_eg"].item() == pytest.approx(0.5)
    assert later.loc[origin, "re_chi_eg"].item() == pytest.approx(0.06723, abs=1e-4)
    assert len(later) == 25

    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["oracle"] == "off"
    assert len(report["files"]) == 2
    events = [entry["event"] for entry in _events(tmp_path)]
    assert events == ["run.start", "simulate.snapshot", "simulate.snapshot", "run.finish"]


@pytest.mark.asyncio
async def test_simulate_json_output(tmp_path: Path) -> None:
    config_path = _config(tmp_path, SCENARIO + "output: {format: json}\n")
    out = tmp_path / "run"
    assert await run(["simulate", "--config", str(config_path), "--out", str(out)]) == 0
    rows = json.loads((out / "cmatrix_001.json").read_text(encoding="utf-8"))
    assert len(rows) == 25
    assert set(rows[0]) >= {"re_beta", "im_beta", "re_chi_eg", "im_chi_ge"}


@pytest.mark.asyncio
async def test_oracle_check_closed_system(tmp_path: Path) -> None:
    config_path = _config(
        tmp_path,
        """
profile: {kind: constant, g0: 1.0}
rates: {Na: 0.5}
times: [0.5, 1.0]
solver: {oracle_points: 4}
""",
    )
    out = tmp_path / "check"
    assert await run(["oracle-check", "--config", str(config_path), "--out", str(out)]) == 0
    report = json.loads((out / "oracle_report.json").read_text(encoding="utf-8"))
    assert report["status"] == "ok"
    assert report["max_deviation"] < 1e-7
    assert [row["t"] for row in report["rows"]] == [0.5, 1.0]


@pytest.mark.asyncio
async def test_oracle_check_reports_truncation_breach(tmp_path: Path) -> None:
    config_path = _config(
        tmp_path,
        """
profile: {kind: constant, g0: 1.0}
times: [1.0]
solver: {cutoff: 4}
""",
    )
    out = tmp_path / "check"
    assert await run(["oracle-check", "--config", str(config_path), "--out", str(out)]) == 1
    report = json.loads((out / "oracle_report.json").read_text(encoding="utf-8"))
    assert report["status"] == "truncation-breach"
    assert report["cutoff"] == 4


@pytest.mark.asyncio
async def test_scan_writes_a_table(tmp_path: Path) -> None:
    config_path = _config(
        tmp_path,
        """
scan:
  Na: [0, 1]
  g0t: [0.5, 1.0]
  kappa: 0.01
  gamma: 0.01
""",
    )
    out = tmp_path / "scan"
    argv = ["scan", "--config", str(config_path), "--out", str(out), "--oracle", "check"]
    assert await run(argv) == 0
    frame = pd.read_csv(out / "scan.csv")
    assert len(frame) == 4
    assert (frame["BN"] <= frame["negativity_oracle"] + 1e-9).all()
    batches = [e for e in _events(tmp_path) if e["event"] == "scan.cell_batch"]
    assert [b["payload"]["Na"] for b in batches] == [0.0, 1.0]


@pytest.mark.asyncio
async def test_wigner_of_a_stored_table(tmp_path: Path, capsys) -> None:
    config_path = _config(
        tmp_path,
        """
times: [0.0]
grid: {extent: 7, counts: 71}
""",
    )
    out = tmp_path / "run"
    assert await run(["simulate", "--config", str(config_path), "--out", str(out)]) == 0
    capsys.readouterr()

    table = out / "cmatrix_000.csv"
    assert await run(["wigner", str(table), "--alpha", "0", "--json"]) == 0
    printed = capsys.readouterr().out
    payload = json.loads(printed[printed.index("[") :])
    assert payload[0]["W"] == pytest.approx(2 / math.pi, abs=1e-8)


@pytest.mark.asyncio
async def test_usage_errors_exit_with_two(tmp_path: Path) -> None:
    config_path = _config(tmp_path, "rates: {kapa: 0.1}")
    assert await run(["simulate", "--config", str(config_path)]) == 2
    assert await run(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert await run(["wigner", str(tmp_path / "missing.csv")]) == 2


@pytest.mark.asyncio
async def test_oracle_integration_failure_exits_with_one(tmp_path: Path, monkeypatch) -> None:
    def failing(rhs, span, y0, **kwargs):
        return SimpleNamespace(success=False, message="Required step size is less than spacing")

    monkeypatch.setattr(fock_oracle, "solve_ivp", failing)
    config_path = _config(
        tmp_path,
        """
profile: {kind: constant, g0: 1.0}
times: [0.5]
""",
    )
    out = tmp_path / "check"
    assert await run(["oracle-check", "--config", str(config_path), "--out", str(out)]) == 1
    errors = [e for e in _events(tmp_path) if e["event"] == "run.error"]
    assert errors[0]["payload"]["exit"] == 1
    assert "step size" in errors[0]["payload"]["error"]
