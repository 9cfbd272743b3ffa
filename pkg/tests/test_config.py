from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from qcdsim.cmatrix import GridSpec, product_field, thermal_charfn
from qcdsim.config import ConfigError, load_config, with_overrides
from qcdsim.presets import platform_preset


def _write(tmp_path: Path, text: str) -> Path:
    config_path = tmp_path / "config.yaml"
    config_path.write_text(text.strip(), encoding="utf-8")
    return config_path


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("QCDSIM_THREADS", raising=False)
    monkeypatch.delenv("QCDSIM_CONFIG", raising=False)


def test_load_config_with_env_substitution(tmp_path: Path, monkeypatch) -> None:
    (tmp_path / ".env").write_text("QCD_OUT=results\nQCD_NA=2.5\n", encoding="utf-8")
    config_path = _write(
        tmp_path,
        """
version: 1
profile:
  kind: constant
  g0: 1.0
rates:
  kappa: 0.01
  gamma2: 0.01
  Na: ${QCD_NA}
times: [0.0, 0.5, 1.0]
output:
  path: ${QCD_OUT}
""",
    )
    monkeypatch.delenv("QCD_OUT", raising=False)
    monkeypatch.delenv("QCD_NA", raising=False)

    result = load_config(config_path=config_path, workspace_root=tmp_path)

    assert result.path == config_path
    config = result.config
    assert config.system.rates.Na == 2.5
    assert config.times == [0.0, 0.5, 1.0]
    assert os.environ["QCD_OUT"] == "results"
    # Paths are resolved against the config directory
    assert config.output.path == (tmp_path / "results").resolve()
    assert config.runtime.log_dir == (tmp_path / "logs").resolve()
    assert config.grid == GridSpec.default_for(3.0)
    assert config.solver.oracle == "off"


def test_platform_preset_is_the_base(tmp_path: Path) -> None:
    config_path = _write(
        tmp_path,
        """
platform: circuit-qed
rates:
  Na: 0.5
""",
    )
    config = load_config(config_path=config_path).config
    preset = platform_preset("circuit-qed").normalized
    assert config.platform == "circuit-qed"
    assert config.system.rates.Na == 0.5
    assert config.system.rates.kappa == preset.rates.kappa
    assert config.system.profile == preset.profile


def test_ranges_and_scalar_lists(tmp_path: Path) -> None:
    config_path = _write(
        tmp_path,
        """
times: {start: 0, stop: 2, count: 5}
scan:
  Na: 1
  g0t: [0.5, 1.0]
grid:
  pattern: polar
  extent: 4
  counts: 11
solver:
  oracle: off
""",
    )
    config = load_config(config_path=config_path).config
    assert config.times == pytest.approx([0.0, 0.5, 1.0, 1.5, 2.0])
    assert config.scan.Na == [1.0]
    assert config.scan.g0t == [0.5, 1.0]
    assert config.grid == GridSpec(pattern="polar", extent=4.0, counts=(11, 11))
    assert config.solver.oracle == "off"


def test_unknown_key_names_the_line(tmp_path: Path) -> None:
    config_path = _write(
        tmp_path,
        """
version: 1
rates:
  kappa: 0.1
  kapa: 0.2
""",
    )
    with pytest.raises(ConfigError, match=r"rates\.kapa \(line 4\): unknown config key") as info:
        load_config(config_path=config_path)
    assert info.value.line == 4


@pytest.mark.parametrize(
    ("text", "key"),
    [
        ("rates:\n  kappa: -1", "rates.kappa"),
        ("times: [1.0, 0.5]", "times"),
        ("solver:\n  method: rk4", "solver.method"),
        ("runtime:\n  threads: 0", "runtime.threads"),
        ("platform: quantum-dot", "platform"),
        ("profile:\n  kind: piecewise\n  segments: [[0, 2, 1], [1, 3, 1]]", "profile.segments"),
        ("initial:\n  state: custom-cmatrix-file", "initial.path"),
    ],
)
def test_invalid_values_are_config_errors(tmp_path: Path, text: str, key: str) -> None:
    config_path = _write(tmp_path, text)
    with pytest.raises(ConfigError) as info:
        load_config(config_path=config_path)
    assert info.value.key == key


def test_missing_config_file(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError):
        load_config(config_path=tmp_path / "missing.yaml")


def test_thread_override_from_environment(tmp_path: Path, monkeypatch) -> None:
    config_path = _write(tmp_path, "runtime:\n  threads: 2")
    monkeypatch.setenv("QCDSIM_THREADS", "6")
    assert load_config(config_path=config_path).config.runtime.threads == 6
    monkeypatch.setenv("QCDSIM_THREADS", "many")
    with pytest.raises(ConfigError, match="QCDSIM_THREADS"):
        load_config(config_path=config_path)


def test_custom_initial_state_reads_a_table(tmp_path: Path) -> None:
    field = product_field(np.full((2, 2), 0.5), thermal_charfn(0.0))
    field.sample(GridSpec(extent=4.0, counts=(21, 21))).write_csv(tmp_path / "initial.csv")
    config_path = _write(
        tmp_path,
        """
initial:
  state: custom-cmatrix-file
  path: initial.csv
""",
    )
    initial = load_config(config_path=config_path).config.initial
    assert initial.path == (tmp_path / "initial.csv").resolve()
    loaded = initial.cmatrix(Na=0.0)
    assert loaded.trace() == pytest.approx(1.0)


def test_command_line_overrides(tmp_path: Path) -> None:
    config = load_config(config_path=_write(tmp_path, "version: 1")).config
    updated = with_overrides(config, output=tmp_path / "elsewhere", oracle="check", threads=3)
    assert updated.output.path == (tmp_path / "elsewhere").resolve()
    assert updated.solver.oracle == "check"
    assert updated.solver.method == "auto"
    assert updated.runtime.threads == 3
    with pytest.raises(ConfigError):
        with_overrides(config, threads=0)
