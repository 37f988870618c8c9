"""Stochastic 2D Euler dynamics in vorticity form on the Galerkin space, with
orthogonal Marcus jumps and a dealiased pseudo-spectral nonlinear term, plus
the deterministic Navier-Stokes reference solver targeted by the scaling
limit.

Time stepping is jump-adapted: the integrator steps exactly to each event
time, applies the jump map, and resumes, so the norm identity of the jumps is
never smeared by the integrator.  The quadratic term is computed on a
zero-padded grid large enough that the projected product is exact for
band-limited inputs; its energy neutrality then holds to roundoff.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fourier import (
    SpectralField,
    as_pair,
    biot_savart,
    dealias_grid,
    derivative_values_grid,
    field_from_modes,
    field_values_grid,
    mode_basis,
)
from .levy import EventStream, JumpEvent, LevyMeasure, NoiseCoefficients, eddy_viscosity, make_theta, sample_jumps
from .marcus import CorrectorOperator, exp_coupling_apply, residual_corrector
from .transport import LimitResult, LimitRow, Trajectory, _checkpoint_times

CFL_SAFETY = 0.5
MAX_HALVINGS = 40


class CFLError(RuntimeError):
    pass


class PathFailure(RuntimeError):
    """A Monte-Carlo path failed numerically (step collapse or NaN)."""

    def __init__(self, path_index: int, at_time: float, cause: str):
        super().__init__(f"path {path_index} failed at t={at_time}: {cause}")
        self.path_index = path_index
        self.time = at_time
        self.cause = cause


def nonlinear_drift(xi: SpectralField) -> SpectralField:
    """Projected advection u . grad xi with u recovered by Biot-Savart.

    Computed pseudo-spectrally on a zero-padded grid so that the projection of
    the quadratic product is exact; the discrete pairing <xi, drift> therefore
    vanishes to roundoff, mirroring the continuum cancellation.
    """
    u1, u2 = biot_savart(xi)
    m = dealias_grid(xi.n)
    prod = (
        field_values_grid(u1, m) * derivative_values_grid(xi, m, 0)
        + field_values_grid(u2, m) * derivative_values_grid(xi, m, 1)
    )
    from .fourier import project_from_grid

    return project_from_grid(prod, xi.n)


def max_speed(xi: SpectralField) -> float:
    """Sup of |u| sampled on a grid resolving the velocity band."""
    u1, u2 = biot_savart(xi)
    m = dealias_grid(xi.n)
    v1 = field_values_grid(u1, m)
    v2 = field_values_grid(u2, m)
    return float(np.sqrt(np.max(v1 * v1 + v2 * v2)))


def cfl_limit(xi: SpectralField) -> float:
    """Largest admissible step: dt * max|u| * 2 pi n <= CFL_SAFETY."""
    speed = max_speed(xi)
    if speed == 0.0:
        return np.inf
    return CFL_SAFETY / (speed * 2.0 * np.pi * xi.n)


@dataclass(frozen=True)
class EulerState:
    """Vorticity state; velocity is derived lazily and cached until the
    vorticity changes (states are immutable, so the cache never goes stale)."""

    t: float
    xi: SpectralField
    _velocity: tuple | None = field(default=None, compare=False, repr=False)

    def velocity(self) -> tuple[SpectralField, SpectralField]:
        if self._velocity is None:
            object.__setattr__(self, "_velocity", biot_savart(self.xi))
        return self._velocity


def _rhs(coeffs: np.ndarray, n: int, B: CorrectorOperator | None) -> np.ndarray:
    out = -nonlinear_drift(SpectralField(n, coeffs)).coeffs
    if B is not None and not B.is_zero():
        out = out + B.matrix @ coeffs
    return out


def _rk4(coeffs: np.ndarray, n: int, B, h: float) -> np.ndarray:
    k1 = _rhs(coeffs, n, B)
    k2 = _rhs(coeffs + 0.5 * h * k1, n, B)
    k3 = _rhs(coeffs + 0.5 * h * k2, n, B)
    k4 = _rhs(coeffs + h * k3, n, B)
    return coeffs + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_step_between_jumps(state: EulerState, B: CorrectorOperator | None, dt: float) -> EulerState:
    """One 4th-order step of d xi/dt = -u.grad xi + B xi.

    A step violating the advective stability bound is rejected and retried as
    two half steps, recursively.
    """
    if dt == 0.0:
        return state
    if dt < 0.0:
        raise ValueError("negative step")
    if B is not None and B.n != state.xi.n:
        raise ValueError("corrector cutoff mismatch")
    allowed = cfl_limit(state.xi)
    if B is not None and not B.is_zero():
        allowed = min(allowed, 2.5 / max(B.spectral_bound(), 1e-300))
    depth = 0
    h = dt
    while h > allowed:
        h *= 0.5
        depth += 1
        if depth > MAX_HALVINGS:
            raise CFLError(f"step collapsed below {h} at t={state.t}")
    coeffs = state.xi.coeffs
    for _ in range(1 << depth):
        coeffs = _rk4(coeffs, state.xi.n, B, h)
    return EulerState(state.t + dt, SpectralField(state.xi.n, coeffs))


def euler_apply_jump(state: EulerState, event: JumpEvent, theta: NoiseCoefficients) -> EulerState:
    """Orthogonal jump e^{-z theta_k A_k} (noise on the left-hand side)."""
    k1, k2 = as_pair(event.mode)
    if k1 * k1 + k2 * k2 > (2 * state.xi.n) ** 2:
        raise ValueError(f"event mode {event.mode} outside the coupling range of n={state.xi.n}")
    value = theta.value_of(event.mode)
    if value == 0.0:
        raise ValueError(f"event mode {event.mode} outside coefficient support")
    coeffs = exp_coupling_apply(event.mode, state.xi.n, -event.size * value, state.xi.coeffs)
    return EulerState(state.t, SpectralField(state.xi.n, coeffs))


# ---------------------------------------------------------------------------
# deterministic Navier-Stokes reference
# ---------------------------------------------------------------------------


def nse_reference(
    xi0: SpectralField,
    kappa: float,
    T: float,
    dt: float,
    checkpoints: Sequence[float] | None = None,
) -> Trajectory:
    """Vorticity-form solver with integrating-factor diffusion and 4th-order
    explicit stages for the advection (Lawson scheme); enstrophy nonincreasing.
    """
    if kappa <= 0.0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if checkpoints is None:
        checkpoints = [T]
    checkpoints = sorted(float(t) for t in checkpoints)
    if checkpoints[-1] > T + 1e-12:
        raise ValueError("checkpoint beyond horizon")
    n = xi0.n
    symbol = kappa * xi0.basis.laplacian_symbol  # negative

    def nl(c):
        return -nonlinear_drift(SpectralField(n, c)).coeffs

    def step(c, h):
        e_half = np.exp(0.5 * h * symbol)
        e_full = e_half * e_half
        n1 = nl(c)
        n2 = nl(e_half * (c + 0.5 * h * n1))
        n3 = nl(e_half * c + 0.5 * h * n2)
        n4 = nl(e_full * c + h * e_half * n3)
        return e_full * c + (h / 6.0) * (e_full * n1 + 2.0 * e_half * (n2 + n3) + n4)

    coeffs = xi0.coeffs.copy()
    t_now = 0.0
    out_times, out_states = [], []
    for target in checkpoints:
        while t_now < target - 1e-14:
            allowed = cfl_limit(SpectralField(n, coeffs))
            h = min(dt, allowed, target - t_now)
            coeffs = step(coeffs, h)
            t_now += h
        out_times.append(target)
        out_states.append(SpectralField(n, coeffs))
    return Trajectory(np.array(out_times), tuple(out_states))


# ---------------------------------------------------------------------------
# stochastic paths and the scaling-limit experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathDiagnostics:
    jump_norm_error: float     # worst relative norm change across jumps
    max_growth: float          # max over time of ||xi(t)|| / ||xi0||
    excess_rate: float         # max over time of (||xi(t)||/||xi0|| - 1) / t
    jumps: int


def simulate_euler_path(
    xi0: SpectralField,
    events: EventStream,
    theta: NoiseCoefficients,
    drift: CorrectorOperator | None,
    T: float,
    checkpoints: Sequence[float],
    dt: float,
) -> tuple[Trajectory, PathDiagnostics]:
    """Jump-adapted integration of one realization over [0, T]."""
    checkpoints = sorted(float(t) for t in checkpoints)
    state = EulerState(0.0, xi0)
    norm0 = xi0.norm()
    worst_jump = 0.0
    max_growth = 1.0
    excess_rate = 0.0
    out_times, out_states = [], []
    # events sort before checkpoints at (measure-zero) ties: recorded states
    # are right-continuous in time
    breakpoints = [(float(t), 0, i) for i, t in enumerate(events.times)]
    breakpoints += [(t, 1, None) for t in checkpoints]
    breakpoints.sort(key=lambda b: (b[0], b[1]))

    for t_break, kind, idx in breakpoints:
        while state.t < t_break - 1e-14:
            h = min(dt, t_break - state.t)
            state = euler_step_between_jumps(state, drift, h)
            growth = state.xi.norm() / norm0
            max_growth = max(max_growth, growth)
            excess_rate = max(excess_rate, (growth - 1.0) / state.t)
        if kind == 0:
            before = state.xi.norm()
            state = euler_apply_jump(state, events[idx], theta)
            after = state.xi.norm()
            worst_jump = max(worst_jump, abs(after - before) / before)
        else:
            out_times.append(t_break)
            out_states.append(state.xi)
    traj = Trajectory(np.array(out_times), tuple(out_states))
    return traj, PathDiagnostics(worst_jump, max_growth, excess_rate, len(events))


def euler_path_pairings(
    nu: LevyMeasure,
    theta: NoiseCoefficients,
    xi0_entries: dict,
    test_modes: Sequence,
    T: float,
    eps: float,
    seed: int,
    path_index: int,
    n_gal: int,
    dt: float,
    checkpoints: int,
    drift: CorrectorOperator | None,
) -> tuple[np.ndarray, PathDiagnostics]:
    events = sample_jumps(nu, theta, T, eps, seed, path_index)
    times = _checkpoint_times(T, checkpoints)
    xi0 = field_from_modes(n_gal, xi0_entries)
    traj, diag = simulate_euler_path(xi0, events, theta, drift, T, times, dt)
    return traj.pairings(test_modes), diag


def _euler_path_star(args):
    path_index = args[7]
    try:
        pairings, diag = euler_path_pairings(*args)
    except CFLError as exc:
        raise PathFailure(path_index, float("nan"), str(exc)) from exc
    if not np.all(np.isfinite(pairings)):
        raise PathFailure(path_index, float(args[4]), "non-finite pairing")
    return pairings, diag


@dataclass(frozen=True)
class EulerLimitResult(LimitResult):
    diagnostics: tuple[PathDiagnostics, ...] = ()


def euler_limit_experiment(
    nu: LevyMeasure,
    a: float,
    n_list: Sequence[int],
    xi0_entries: dict,
    test_modes: Sequence,
    T: float,
    eps: float,
    M: int,
    seed: int,
    n_gal: int,
    dt: float = 2e-3,
    checkpoints: int = 8,
    path_map=map,
) -> EulerLimitResult:
    """Stochastic Euler ensembles against the Navier-Stokes reference with
    kappa = C2 mu_2; D_n as in the transport experiment."""
    if n_gal < 2 * max(n_list):
        raise ValueError("n_gal must be at least twice the largest coefficient index")
    kappa = eddy_viscosity(nu)
    xi0_entries = {as_pair(m): float(c) for m, c in xi0_entries.items()}
    test_modes = [as_pair(m) for m in test_modes]
    times = _checkpoint_times(T, checkpoints)
    reference = nse_reference(field_from_modes(n_gal, xi0_entries), kappa, T, dt, times)
    ref = reference.pairings(test_modes)
    rows, terminal, diags = [], {}, []
    for n in n_list:
        theta = make_theta(n, a)
        drift = residual_corrector(theta, nu, n_gal, eps)
        if drift.is_zero():
            drift = None  # skip pickling a large zero matrix to workers
        started = time.perf_counter()
        args = [
            (nu, theta, xi0_entries, test_modes, T, eps, seed, p, n_gal, dt, checkpoints, drift)
            for p in range(M)
        ]
        results = list(path_map(_euler_path_star, args))
        pairings = np.array([r[0] for r in results])
        diags.extend(r[1] for r in results)
        deviations = np.max(np.abs(pairings - ref[None, :, :]), axis=(1, 2))
        elapsed = time.perf_counter() - started
        rows.append(
            LimitRow(
                n=n,
                theta_linf=theta.linf(),
                value=float(np.mean(deviations)),
                stderr=float(np.std(deviations, ddof=1) / np.sqrt(M)) if M > 1 else 0.0,
                samples=M,
                seconds=elapsed,
            )
        )
        terminal[n] = pairings[:, -1, :].copy()
    return EulerLimitResult(tuple(rows), terminal, tuple(test_modes), tuple(diags))
