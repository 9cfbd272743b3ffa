"""Command-line interface surface."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import math
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
import pandas as pd
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import __version__, fock_oracle, observables
from .closed_dynamics import DisplacementTrajectory
from .cmatrix import ELEMENTS, CMatrixField, SampledCMatrix
from .config import ConfigError, RunConfig, load_config, with_overrides
from .constants import CSV_FLOAT_FORMAT, ORACLE_AGREEMENT
from .events import EventLog
from .phase_space import IntegrationError, solve_cmatrix
from .presets import PLATFORMS, UnknownPlatformError, platform_preset

console = Console()

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

T = TypeVar("T")
R = TypeVar("R")

_NUMERICAL_ERRORS = (
    IntegrationError,
    fock_oracle.TruncationError,
    fock_oracle.OracleIntegrationError,
    observables.QuadratureError,
    ArithmeticError,
)


async def map_ordered(func: Callable[[T], R], items: Sequence[T], threads: int) -> list[R]:
    """Run func over items on at most `threads` workers; results keep the input order."""
    semaphore = asyncio.Semaphore(max(1, threads))

    async def one(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(func, item)

    return await asyncio.gather(*(one(item) for item in items))


def _load_run(args: argparse.Namespace) -> RunConfig:
    result = load_config(args.config)
    return with_overrides(
        result.config,
        output=args.out,
        method=getattr(args, "method", None),
        oracle=getattr(args, "oracle", None),
        threads=args.threads,
    )


def _write_table(frame: pd.DataFrame, path: Path, fmt: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        target = path.with_suffix(".json")
        target.write_text(frame.to_json(orient="records", double_precision=12), encoding="utf-8")
        return target
    target = path.with_suffix(".csv")
    frame.to_csv(target, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="")
    return target


def _write_report(report: dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def oracle_probes(count: int, radius: float = 3.0) -> np.ndarray:
    """Deterministic β samples on a golden-angle spiral inside |β| ≤ radius."""
    k = np.arange(count)
    golden = math.pi * (3 - math.sqrt(5))
    r = radius * np.sqrt((k + 0.5) / count)
    return r * np.exp(1j * golden * k)


def _max_displacement(run: RunConfig) -> float:
    horizon = max(run.times)
    trajectory = DisplacementTrajectory(run.system.profile)
    samples = trajectory.samples(np.linspace(0.0, horizon, 201))
    return float(np.max(np.abs(samples)))


def _oracle_initial(run: RunConfig) -> fock_oracle.JointFockState:
    if run.initial.kind == "custom-cmatrix-file":
        raise ConfigError("solver.oracle", "the Fock oracle needs a product initial state")
    Na = run.system.rates.Na
    if run.solver.cutoff is not None:
        cutoff = run.solver.cutoff
    else:
        cutoff = fock_oracle.oracle_cutoff(Na, _max_displacement(run))
    return fock_oracle.JointFockState.from_product(
        run.initial.qubit, fock_oracle.thermal_state(Na, cutoff)
    )


def _compare(
    cmatrix: CMatrixField, state: fock_oracle.JointFockState, probes: np.ndarray
) -> dict[str, float]:
    analytic = cmatrix.evaluate(probes)
    extracted = np.array([fock_oracle.cmatrix_extract(state, complex(b)) for b in probes])
    index = {"ee": (0, 0), "gg": (1, 1), "eg": (0, 1), "ge": (1, 0)}
    return {
        name: float(np.max(np.abs(analytic[name] - extracted[:, j, k])))
        for name, (j, k) in index.items()
    }


def _evolve_oracle(run: RunConfig) -> list[fock_oracle.JointFockState]:
    """Oracle states at every requested time, integrated segment by segment."""
    state = _oracle_initial(run)
    states = []
    previous = 0.0
    for t in run.times:
        state = fock_oracle.integrate(state, run.system, t, t0=previous)
        states.append(state)
        previous = t
    return states


def _deviation_table(rows: list[dict[str, Any]], title: str) -> Table:
    table = Table(title=title)
    table.add_column("t", justify="right")
    for name in ELEMENTS:
        table.add_column(f"chi_{name}", justify="right")
    for row in rows:
        table.add_row(f"{row['t']:.6g}", *(f"{row['max_deviation'][n]:.3e}" for n in ELEMENTS))
    return table


async def cmd_simulate(args: argparse.Namespace, events: list[EventLog]) -> int:
    run = _load_run(args)
    log = EventLog(run.runtime.log_dir)
    events.append(log)
    await log.log_event(
        "run.start", payload={"command": "simulate", "times": run.times, "version": __version__}
    )
    initial = run.initial.cmatrix(run.system.rates.Na)

    def snapshot(index: int) -> SampledCMatrix:
        t = run.times[index]
        cmatrix = solve_cmatrix(run.system, initial, t, run.solver.method)
        return cmatrix.sample(run.grid)

    sampled = await map_ordered(snapshot, list(range(len(run.times))), run.runtime.threads)
    written = []
    for index, (t, table) in enumerate(zip(run.times, sampled, strict=True)):
        path = _write_table(
            table.to_frame(), run.output.path / f"cmatrix_{index:03d}", run.output.format
        )
        written.append(str(path))
        await log.log_event(
            "simulate.snapshot",
            payload={"t": t, "path": str(path), "provenance": table.provenance},
        )
        console.print(f"[green]✓[/green] t={t:.6g} → {path}")

    report: dict[str, Any] = {"command": "simulate", "files": written}
    report["oracle"] = run.solver.oracle
    status = EXIT_OK
    if run.solver.oracle != "off":
        status, oracle_report = await _simulate_oracle(run, initial, log)
        report["oracle_check"] = oracle_report
    _write_report(report, run.output.path / "report.json")
    await log.log_event("run.finish", payload={"command": "simulate", "exit": status})
    return status


async def _simulate_oracle(
    run: RunConfig, initial: CMatrixField, log: EventLog
) -> tuple[int, dict[str, Any]]:
    states = await asyncio.to_thread(_evolve_oracle, run)
    rows = []
    for index, (t, state) in enumerate(zip(run.times, states, strict=True)):
        cmatrix = solve_cmatrix(run.system, initial, t, run.solver.method)
        probes = oracle_probes(run.solver.oracle_points)
        if run.solver.oracle == "full":
            grid_points = run.grid.points()
            reach = min(3.0, math.sqrt(state.cutoff / 4))
            probes = np.concatenate([probes, grid_points[np.abs(grid_points) <= reach]])
            state.write(run.output.path / f"oracle_{index:03d}.txt")
        deviation = _compare(cmatrix, state, probes)
        rows.append({"t": t, "cutoff": state.cutoff, "max_deviation": deviation})
        await log.log_event("oracle.compare", payload=rows[-1])
    console.print(_deviation_table(rows, "oracle deviation"))
    worst = max(max(row["max_deviation"].values()) for row in rows)
    passed = worst <= ORACLE_AGREEMENT
    report = {
        "status": "ok" if passed else "tolerance-failure",
        "tolerance": ORACLE_AGREEMENT,
        "max_deviation": worst,
        "rows": rows,
    }
    return (EXIT_OK if passed else EXIT_NUMERICAL), report


def _scan_cell(run: RunConfig) -> Callable[[tuple[float, float]], observables.ScanCell]:
    settings = run.scan

    def cell(job: tuple[float, float]) -> observables.ScanCell:
        Na, g0t = job
        oracle = run.solver.oracle if Na <= settings.oracle_max_Na else "off"
        return observables.scan_cell(Na, g0t, settings.kappa, settings.gamma, oracle)

    return cell


async def cmd_scan(args: argparse.Namespace, events: list[EventLog]) -> int:
    run = _load_run(args)
    log = EventLog(run.runtime.log_dir)
    events.append(log)
    settings = run.scan
    jobs = [(Na, g0t) for Na in settings.Na for g0t in settings.g0t]
    await log.log_event(
        "run.start",
        payload={"command": "scan", "cells": len(jobs), "oracle": run.solver.oracle},
    )
    cells = await map_ordered(_scan_cell(run), jobs, run.runtime.threads)
    row = len(settings.g0t)
    for start in range(0, len(cells), row):
        batch = cells[start : start + row]
        await log.log_event(
            "scan.cell_batch",
            payload={"Na": batch[0].Na, "cells": len(batch), "max_BN": max(c.BN for c in batch)},
        )
    table = observables.ScanTable(cells)
    path = _write_table(table.to_frame(), run.output.path / "scan", run.output.format)
    violations = [
        (c.Na, c.g0t)
        for c in cells
        if c.negativity_oracle is not None and c.BN > c.negativity_oracle + 1e-9
    ]
    console.print(f"[green]✓[/green] {len(cells)} cells → {path}")
    status = EXIT_OK
    if violations:
        console.print(f"[red]witness exceeds oracle negativity[/red] at {violations}")
        status = EXIT_NUMERICAL
    await log.log_event("run.finish", payload={"command": "scan", "exit": status})
    return status


def platform_report(name: str) -> dict[str, Any]:
    preset = platform_preset(name)
    config = preset.normalized
    return {
        "name": preset.name,
        "description": preset.description,
        "reference": preset.reference,
        "raw": {key: {"text": q.text, "si": q.value} for key, q in preset.raw.items()},
        "normalized": {
            "g0": config.profile.g0,
            "nu": config.profile.nu,
            "kappa": config.rates.kappa,
            "gamma1": config.rates.gamma1,
            "gamma2": config.rates.gamma2,
            "Na": config.rates.Na,
            "Nq": config.rates.Nq,
            "mode": config.rates.mode,
            "gamma": config.derived.gamma,
            "Gamma_c": config.derived.Gamma_c,
            "Gamma_h": config.derived.Gamma_h,
        },
        "quotes": [
            {
                "quote": check.quote.label(),
                "computed": check.computed,
                "deviation": check.deviation,
                "enforced": check.enforced,
                "annotation": check.quote.annotation,
                "ok": check.ok,
            }
            for check in preset.check_quotes()
        ],
        "thermal_estimates": preset.thermal_estimates(),
    }


async def cmd_platform(args: argparse.Namespace, events: list[EventLog]) -> int:
    report = platform_report(args.name)
    if args.json:
        console.print_json(json.dumps(report, default=str))
        return EXIT_OK

    console.print(f"[bold]{report['name']}[/bold]  {report['description']}")
    raw = Table(title="raw parameters")
    raw.add_column("name")
    raw.add_column("value")
    raw.add_column("SI", justify="right")
    for key, entry in report["raw"].items():
        raw.add_row(key, entry["text"], f"{entry['si']:.6g}")
    console.print(raw)

    normalized = Table(title=f"normalized (units of {report['reference']})")
    normalized.add_column("quantity")
    normalized.add_column("value", justify="right")
    for key, value in report["normalized"].items():
        normalized.add_row(key, value if isinstance(value, str) else f"{value:.6g}")
    console.print(normalized)

    quotes = Table(title="quoted figures")
    quotes.add_column("quote")
    quotes.add_column("computed", justify="right")
    quotes.add_column("deviation", justify="right")
    quotes.add_column("note")
    for entry in report["quotes"]:
        mark = "[green]ok[/green]" if entry["ok"] else "[red]off[/red]"
        note = entry["annotation"] or mark
        quotes.add_row(
            entry["quote"], f"{entry['computed']:.4g}", f"{entry['deviation']:.1%}", note
        )
    console.print(quotes)

    for occupation, value in report["thermal_estimates"].items():
        console.print(f"Bose-Einstein {occupation} ≈ {value:.4g}")
    return EXIT_OK


async def cmd_oracle_check(args: argparse.Namespace, events: list[EventLog]) -> int:
    run = _load_run(args)
    log = EventLog(run.runtime.log_dir)
    events.append(log)
    await log.log_event("run.start", payload={"command": "oracle-check", "times": run.times})
    initial = run.initial.cmatrix(run.system.rates.Na)
    probes = oracle_probes(run.solver.oracle_points)
    report: dict[str, Any] = {"command": "oracle-check", "tolerance": ORACLE_AGREEMENT}
    try:
        states = await asyncio.to_thread(_evolve_oracle, run)
    except fock_oracle.TruncationError as exc:
        report.update(status="truncation-breach", tail=exc.tail, cutoff=exc.cutoff)
        console.print(f"[red]truncation breach[/red]  {exc}")
        console.print_json(json.dumps(report))
        _write_report(report, run.output.path / "oracle_report.json")
        await log.log_event("oracle.compare", level="error", payload=report)
        await log.log_event("run.finish", payload={"command": "oracle-check", "exit": 1})
        return EXIT_NUMERICAL

    def compare(index: int) -> dict[str, Any]:
        t = run.times[index]
        cmatrix = solve_cmatrix(run.system, initial, t, run.solver.method)
        return {
            "t": t,
            "cutoff": states[index].cutoff,
            "max_deviation": _compare(cmatrix, states[index], probes),
        }

    rows = await map_ordered(compare, list(range(len(run.times))), run.runtime.threads)
    for row in rows:
        await log.log_event("oracle.compare", payload=row)
    worst = max(max(row["max_deviation"].values()) for row in rows)
    passed = worst <= ORACLE_AGREEMENT
    report.update(
        status="ok" if passed else "tolerance-failure",
        max_deviation=worst,
        per_element={n: max(row["max_deviation"][n] for row in rows) for n in ELEMENTS},
        rows=rows,
    )
    console.print(_deviation_table(rows, "analytic vs Fock oracle"))
    console.print_json(json.dumps(report))
    _write_report(report, run.output.path / "oracle_report.json")
    status = EXIT_OK if passed else EXIT_NUMERICAL
    await log.log_event("run.finish", payload={"command": "oracle-check", "exit": status})
    return status


def _parse_alpha(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


async def cmd_wigner(args: argparse.Namespace, events: list[EventLog]) -> int:
    table = SampledCMatrix.read_csv(args.table)
    alphas = args.alpha or [0j]
    values = observables.wigner_from_table(table, alphas, args.state)
    result = Table(title=f"W(alpha), {args.state} oscillator state")
    result.add_column("alpha")
    result.add_column("W", justify="right")
    for alpha, value in zip(alphas, values, strict=True):
        result.add_row(f"{alpha.real:+.4g}{alpha.imag:+.4g}i", f"{value:.8g}")
    console.print(result)
    if args.json:
        payload = [
            {"re_alpha": a.real, "im_alpha": a.imag, "W": float(v)}
            for a, v in zip(alphas, values, strict=True)
        ]
        console.print_json(json.dumps(payload))
    return EXIT_OK


def _add_run_flags(parser: argparse.ArgumentParser, *, solver: bool = True) -> None:
    parser.add_argument("--config", type=Path, default=None, help="Path to config.yaml")
    parser.add_argument("--out", type=Path, default=None, help="Output directory")
    parser.add_argument("--threads", type=int, default=None, help="Worker count")
    parser.add_argument("--oracle", choices=("off", "check", "full"), default=None)
    if solver:
        parser.add_argument("--method", choices=("auto", "ode", "perturbative"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcdsim")
    parser.add_argument("--version", action="version", version=f"qcdsim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Write C-Matrix snapshots at the configured times")
    _add_run_flags(simulate)
    scan = sub.add_parser("scan", help="Witness and Wigner-metric scan over N_a and g0 t")
    _add_run_flags(scan, solver=False)
    platform = sub.add_parser("platform", help="Show a platform parameter preset")
    platform.add_argument("name", help=f"One of: {', '.join(PLATFORMS)}")
    platform.add_argument("--json", action="store_true", help="Machine-readable report")
    oracle = sub.add_parser("oracle-check", help="Compare the C-Matrix solver with the Fock oracle")
    _add_run_flags(oracle)
    wigner = sub.add_parser("wigner", help="Evaluate W(alpha) of a stored C-Matrix table")
    wigner.add_argument("table", type=Path, help="C-Matrix CSV written by simulate")
    wigner.add_argument(
        "--alpha", type=_parse_alpha, action="append", help="Point such as 0.5+1i (repeatable)"
    )
    wigner.add_argument("--state", choices=("reduced", "plus", "minus"), default="reduced")
    wigner.add_argument("--json", action="store_true", help="Also print JSON")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "platform": cmd_platform,
    "oracle-check": cmd_oracle_check,
    "wigner": cmd_wigner,
}


async def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )

    events: list[EventLog] = []
    try:
        return await _COMMANDS[args.command](args, events)
    except _NUMERICAL_ERRORS as exc:
        console.print(f"[red]numerical failure:[/red] {exc}")
        code, error = EXIT_NUMERICAL, str(exc)
    except (ConfigError, UnknownPlatformError, FileNotFoundError, ValueError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        console.print(f"[red]error:[/red] {message}")
        code, error = EXIT_USAGE, str(message)
    for log in events:
        await log.log_event(
            "run.error",
            level="error",
            payload={"command": args.command, "exit": code, "error": error},
        )
    return code


def main() -> None:
    try:
        code = asyncio.run(run())
    except KeyboardInterrupt:
        code = 130
    sys.exit(code)
