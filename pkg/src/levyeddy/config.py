"""Experiment configuration: a single TOML file with nested tables, validated
before any computation with field-citing error messages."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .fourier import as_pair
from .levy import DiscreteAtoms, LevyMeasure, TruncatedPowerLaw

EXPERIMENTS = ("identity-check", "corrector-check", "transport-limit", "euler-limit")

INITIAL_PRESETS = {
    "two-mode": {(1, 0): 1.0, (1, 1): 1.0},
    "three-mode": {(1, 0): 1.0, (0, 1): 1.0, (1, 1): 1.0},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, fieldname: str, message: str):
        super().__init__(f"config field '{fieldname}': {message}")
        self.fieldname = fieldname


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    nu: LevyMeasure
    theta_a: float
    n_list: tuple[int, ...]
    initial_condition: dict
    T: float
    dt: float
    eps: float
    M: int
    n_gal: int
    grid: int
    test_functions: tuple[tuple[int, int], ...]
    solver: str = "characteristics"
    checkpoints: int = 8


def _require(table: dict, key: str, kind, fieldname: str):
    if key not in table:
        raise ConfigError(fieldname, "missing")
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(fieldname, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _positive(value, fieldname: str):
    if value <= 0:
        raise ConfigError(fieldname, f"must be positive, got {value}")
    return value


def _parse_measure(table: dict) -> LevyMeasure:
    kind = _require(table, "kind", str, "nu.kind")
    if kind == "atoms":
        atoms = table.get("atoms")
        if not isinstance(atoms, list) or not atoms:
            raise ConfigError("nu.atoms", "expected a non-empty list of [z, mass] pairs")
        try:
            return DiscreteAtoms(tuple((float(z), float(m)) for z, m in atoms))
        except (TypeError, ValueError) as exc:
            raise ConfigError("nu.atoms", str(exc)) from None
    if kind == "power-law":
        alpha = _positive(_require(table, "alpha", float, "nu.alpha"), "nu.alpha")
        scale = _positive(_require(table, "scale", float, "nu.scale"), "nu.scale")
        try:
            return TruncatedPowerLaw(alpha=alpha, scale=scale)
        except ValueError as exc:
            raise ConfigError("nu.alpha", str(exc)) from None
    raise ConfigError("nu.kind", f"unknown kind {kind!r} (expected 'atoms' or 'power-law')")


def _parse_initial(table: dict) -> dict:
    if "preset" in table:
        name = table["preset"]
        if name not in INITIAL_PRESETS:
            raise ConfigError(
                "initial_condition.preset",
                f"unknown preset {name!r} (available: {sorted(INITIAL_PRESETS)})",
            )
        return dict(INITIAL_PRESETS[name])
    if "modes" in table:
        out = {}
        for entry in table["modes"]:
            if not isinstance(entry, list) or len(entry) != 3:
                raise ConfigError("initial_condition.modes", "entries must be [k1, k2, coeff]")
            k1, k2, c = entry
            try:
                out[as_pair((k1, k2))] = float(c)
            except ValueError as exc:
                raise ConfigError("initial_condition.modes", str(exc)) from None
        if not out:
            raise ConfigError("initial_condition.modes", "empty mode list")
        return out
    raise ConfigError("initial_condition", "needs either 'preset' or 'modes'")


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<toml>", str(exc)) from None

    experiment = _require(raw, "experiment", str, "experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r} (expected one of {EXPERIMENTS})")
    seed = _require(raw, "seed", int, "seed")
    if seed < 0:
        raise ConfigError("seed", f"must be >= 0, got {seed}")

    theta = raw.get("theta")
    if not isinstance(theta, dict):
        raise ConfigError("theta", "missing table")
    a = _require(theta, "a", float, "theta.a")
    if not 0.0 < a < 1.0:
        raise ConfigError("theta.a", f"must lie in (0, 1), got {a}")
    n_list = theta.get("n_list")
    if (
        not isinstance(n_list, list)
        or not n_list
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in n_list)
    ):
        raise ConfigError("theta.n_list", "expected a non-empty list of integers")
    if any(v < 1 for v in n_list):
        raise ConfigError("theta.n_list", "entries must be >= 1")
    if any(b <= a_ for a_, b in zip(n_list, n_list[1:])):
        raise ConfigError("theta.n_list", "must be strictly increasing")

    needs_dynamics = experiment in ("transport-limit", "euler-limit")
    needs_measure = experiment != "identity-check"

    nu = _parse_measure(raw["nu"]) if needs_measure and "nu" in raw else None
    if needs_measure and nu is None:
        raise ConfigError("nu", "missing table")
    if nu is None:
        nu = DiscreteAtoms(((0.5, 0.5), (-0.5, 0.5)))  # unused by identity-check

    T = _positive(_require(raw, "T", float, "T"), "T") if needs_dynamics else float(raw.get("T", 0.5))
    if needs_dynamics and T <= 0:
        raise ConfigError("T", f"must be positive, got {T}")
    eps = float(raw.get("eps", 0.1))
    if not 0.0 < eps < 1.0:
        raise ConfigError("eps", f"must lie in (0, 1), got {eps}")
    default_m = {"identity-check": 100, "corrector-check": 1}.get(experiment)
    M = raw.get("M", default_m)
    if M is None:
        raise ConfigError("M", "missing")
    if not isinstance(M, int) or isinstance(M, bool) or M < 1:
        raise ConfigError("M", f"expected a positive integer, got {M!r}")
    dt = float(raw.get("dt", 5e-3))
    if dt <= 0:
        raise ConfigError("dt", f"must be positive, got {dt}")

    cutoffs = raw.get("cutoffs", {})
    if not isinstance(cutoffs, dict):
        raise ConfigError("cutoffs", "expected a table")
    n_gal = cutoffs.get("n_gal", 2 * max(n_list))
    if not isinstance(n_gal, int) or n_gal < 1:
        raise ConfigError("cutoffs.n_gal", f"expected a positive integer, got {n_gal!r}")
    grid = cutoffs.get("grid", 96)
    if not isinstance(grid, int) or grid < 8:
        raise ConfigError("cutoffs.grid", f"expected an integer >= 8, got {grid!r}")

    initial = _parse_initial(raw.get("initial_condition", {})) if needs_dynamics else {}
    if needs_dynamics and not initial:
        raise ConfigError("initial_condition", "missing")

    tf_raw = raw.get("test_functions", [[1, 1]] if experiment == "corrector-check" else None)
    if needs_dynamics and tf_raw is None:
        tf_raw = [list(m) for m in initial]
    if experiment in ("corrector-check", "transport-limit", "euler-limit"):
        if not isinstance(tf_raw, list) or not tf_raw:
            raise ConfigError("test_functions", "expected a non-empty list of [k1, k2] modes")
        try:
            test_functions = tuple(as_pair(m) for m in tf_raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError("test_functions", str(exc)) from None
    else:
        test_functions = ()

    solver = raw.get("solver", "characteristics")
    if solver not in ("characteristics", "galerkin"):
        raise ConfigError("solver", f"expected 'characteristics' or 'galerkin', got {solver!r}")
    checkpoints = raw.get("checkpoints", 8)
    if not isinstance(checkpoints, int) or checkpoints < 1:
        raise ConfigError("checkpoints", f"expected a positive integer, got {checkpoints!r}")

    if experiment == "euler-limit" and n_gal < 2 * max(n_list):
        raise ConfigError("cutoffs.n_gal", f"must be >= 2 * max(n_list) = {2 * max(n_list)}")

    return ExperimentConfig(
        experiment=experiment,
        seed=seed,
        nu=nu,
        theta_a=a,
        n_list=tuple(n_list),
        initial_condition=initial,
        T=T,
        dt=dt,
        eps=eps,
        M=M,
        n_gal=n_gal,
        grid=grid,
        test_functions=test_functions,
        solver=solver,
        checkpoints=checkpoints,
    )


def parse_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return parse_config_text(fh.read().decode("utf-8"))
