"""Orchestration, persistence, and replay of the experiments.

Every experiment writes two artifacts into the output directory: results.csv
with the exact columns (n, theta_linf, D, stderr, M, seconds), and
report.json carrying the config hash, the effective seed, the code version,
timestamps, the verdict, and the raw config text used for the run.  Fixing
(config, seed) fixes every result value bit for bit: per-path randomness is
keyed by (seed, path index, mode rank), and reductions run in path order
regardless of worker count.  The seconds column records wallclock and is the
one field excluded from replay comparison.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, parse_config_text
from .euler import PathFailure, euler_limit_experiment
from .fourier import field_from_modes, isotropy_sum
from .levy import eddy_viscosity, make_theta
from .marcus import corrector_operator, corrector_vs_laplacian
from .transport import LimitRow, transport_limit_experiment

CSV_COLUMNS = ("n", "theta_linf", "D", "stderr", "M", "seconds")
IDENTITY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class RunReport:
    experiment: str
    rows: tuple[LimitRow, ...]
    verdict: str
    passed: bool
    seed: int
    config_sha256: str
    config_text: str
    started_at: str
    finished_at: str
    extras: dict


def _utcnow() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _pool_map(workers: int):
    if workers <= 1:
        return map

    def mapper(fn, args):
        args = list(args)
        chunk = max(1, len(args) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, args, chunksize=chunk))

    return mapper


def _identity_check(cfg: ExperimentConfig) -> tuple[list[LimitRow], str, bool]:
    rng = np.random.default_rng(cfg.seed)
    points = rng.random((cfg.M, 2))
    target = 0.5 * np.eye(2)
    rows = []
    for n in cfg.n_list:
        theta = make_theta(n, cfg.theta_a)
        started = time.perf_counter()
        sums = isotropy_sum(theta, points)
        deviation = float(np.max(np.abs(sums - target)))
        rows.append(
            LimitRow(n, theta.linf(), deviation, 0.0, cfg.M, time.perf_counter() - started)
        )
    ok = all(r.value <= IDENTITY_TOLERANCE for r in rows)
    return rows, ("within-tolerance" if ok else "exceeds-tolerance"), ok


def _corrector_check(cfg: ExperimentConfig) -> tuple[list[LimitRow], str, bool]:
    kappa = eddy_viscosity(cfg.nu)
    testmode = cfg.test_functions[0]
    rows = []
    for n in cfg.n_list:
        theta = make_theta(n, cfg.theta_a)
        started = time.perf_counter()
        B = corrector_operator(theta, cfg.nu, n)
        testfn = field_from_modes(n, {testmode: 1.0})
        d = corrector_vs_laplacian(B, kappa, testfn)
        rows.append(LimitRow(n, theta.linf(), d, 0.0, 1, time.perf_counter() - started))
    ok = all(b.value < a.value for a, b in zip(rows, rows[1:]))
    return rows, ("monotone" if ok else "non-monotone"), ok


def execute(cfg: ExperimentConfig, workers: int = 1) -> tuple[list[LimitRow], str, bool, dict]:
    extras: dict = {}
    if cfg.experiment == "identity-check":
        rows, verdict, ok = _identity_check(cfg)
    elif cfg.experiment == "corrector-check":
        rows, verdict, ok = _corrector_check(cfg)
    elif cfg.experiment == "transport-limit":
        result = transport_limit_experiment(
            cfg.nu,
            cfg.theta_a,
            cfg.n_list,
            cfg.initial_condition,
            cfg.test_functions,
            cfg.T,
            cfg.eps,
            cfg.M,
            cfg.seed,
            grid=cfg.grid,
            checkpoints=cfg.checkpoints,
            solver=cfg.solver,
            n_gal=cfg.n_gal,
            path_map=_pool_map(workers),
        )
        rows = list(result.rows)
        ok = result.strictly_decreasing()
        verdict = "monotone" if ok else "non-monotone"
        extras["terminal_variance"] = {
            str(n): float(np.var(vals[:, 0], ddof=1)) for n, vals in result.terminal_pairings.items()
        }
    elif cfg.experiment == "euler-limit":
        result = euler_limit_experiment(
            cfg.nu,
            cfg.theta_a,
            cfg.n_list,
            cfg.initial_condition,
            cfg.test_functions,
            cfg.T,
            cfg.eps,
            cfg.M,
            cfg.seed,
            n_gal=cfg.n_gal,
            dt=cfg.dt,
            checkpoints=cfg.checkpoints,
            path_map=_pool_map(workers),
        )
        rows = list(result.rows)
        ok = result.strictly_decreasing()
        verdict = "monotone" if ok else "non-monotone"
        extras["max_jump_norm_error"] = max((d.jump_norm_error for d in result.diagnostics), default=0.0)
        extras["max_growth"] = max((d.max_growth for d in result.diagnostics), default=1.0)
    else:  # pragma: no cover - guarded by config validation
        raise ConfigError("experiment", f"unknown experiment {cfg.experiment!r}")
    return rows, verdict, ok, extras


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow(
            [r.n, repr(float(r.theta_linf)), repr(float(r.value)), repr(float(r.stderr)), r.samples, repr(float(r.seconds))]
        )
    return buf.getvalue()


def run(config_path: str, out_dir: str, workers: int = 1, seed_override: int | None = None) -> int:
    """Execute the configured experiment; returns the process exit code."""
    try:
        with open(config_path, "rb") as fh:
            config_bytes = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}")
        return 2
    return _run_from_bytes(config_bytes, out_dir, workers, seed_override)


def _run_from_bytes(config_bytes: bytes, out_dir: str, workers: int, seed_override: int | None) -> int:
    try:
        text = config_bytes.decode("utf-8")
        cfg = parse_config_text(text)
        if seed_override is not None:
            cfg = dataclasses.replace(cfg, seed=int(seed_override))
    except ConfigError as exc:
        print(f"error: {exc}")
        return 2
    text_for_hash = config_bytes

    started = _utcnow()
    try:
        rows, verdict, ok, extras = execute(cfg, workers=workers)
    except PathFailure as exc:
        print(f"error: numerical failure on path {exc.path_index} at t={exc.time}: {exc.cause}")
        return 3
    finished = _utcnow()

    report = RunReport(
        experiment=cfg.experiment,
        rows=tuple(rows),
        verdict=verdict,
        passed=ok,
        seed=cfg.seed,
        config_sha256=hashlib.sha256(text_for_hash).hexdigest(),
        config_text=text,
        started_at=started,
        finished_at=finished,
        extras=extras,
    )
    write_report(report, out_dir)
    for r in rows:
        print(f"n={r.n} theta_linf={r.theta_linf:.6f} D={r.value:.6e} stderr={r.stderr:.2e} M={r.samples} seconds={r.seconds:.2f}")
    print(f"verdict: {verdict}")
    return 0 if ok else 1


def write_report(report: RunReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        fh.write(rows_to_csv(report.rows))
    sidecar = {
        "experiment": report.experiment,
        "config_sha256": report.config_sha256,
        "seed": report.seed,
        "version": __version__,
        "started_at": report.started_at,
        "finished_at": report.finished_at,
        "verdict": report.verdict,
        "config_toml": report.config_text,
        "extras": report.extras,
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _mask_seconds(csv_text: str) -> list[str]:
    """Rows with the wallclock column blanked (the one nondeterministic field)."""
    out = []
    for row in csv.reader(io.StringIO(csv_text)):
        if row and row != list(CSV_COLUMNS):
            row = row[:-1] + ["-"]
        out.append(",".join(row))
    return out


def replay(report_path: str, workers: int = 1) -> int:
    """Re-run from the sidecar's embedded config and compare the CSV.

    All value columns must match byte for byte; only the wallclock column is
    exempt.  Returns 0 on match, 1 on mismatch (naming the first differing
    row), 2 when the report or sidecar is missing.
    """
    if os.path.isdir(report_path):
        report_path = os.path.join(report_path, "results.csv")
    sidecar_path = os.path.join(os.path.dirname(report_path) or ".", "report.json")
    try:
        with open(report_path) as fh:
            original_csv = fh.read()
        with open(sidecar_path) as fh:
            sidecar = json.load(fh)
    except OSError as exc:
        print(f"error: missing report artifact: {exc}")
        return 2

    cfg = parse_config_text(sidecar["config_toml"])
    if cfg.seed != sidecar["seed"]:
        cfg = dataclasses.replace(cfg, seed=int(sidecar["seed"]))
    try:
        rows, verdict, ok, _ = execute(cfg, workers=workers)
    except PathFailure as exc:
        print(f"error: numerical failure on path {exc.path_index} at t={exc.time}: {exc.cause}")
        return 3
    fresh_csv = rows_to_csv(rows)

    a, b = _mask_seconds(original_csv), _mask_seconds(fresh_csv)
    if a == b:
        print("replay: match")
        return 0
    for i, (ra, rb) in enumerate(zip(a, b)):
        if ra != rb:
            print(f"replay: mismatch at row {i}: {ra!r} != {rb!r}")
            return 1
    print(f"replay: mismatch: row count {len(a)} != {len(b)}")
    return 1
