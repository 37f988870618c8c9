"""Jump-size measures, noise-coefficient sequences, and exact-in-law sampling
of the compound-Poisson skeleton driving each mode.

Measures are symmetric, live on [-1,1] minus the origin, and have a finite
second moment; both a discrete-atom variant and a truncated power-law density
c |z|^(-1-alpha) dz are provided.  Sampling below a threshold eps is dropped;
`truncation_error_bound` quantifies the variance of what was dropped.  All
randomness is drawn from counter-based Philox streams keyed by
(seed, path index, mode rank) so ensembles are reproducible and independent of
execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .fourier import as_pair, mode_basis, ISOTROPY_C2


@dataclass(frozen=True)
class DiscreteAtoms:
    """Symmetric purely atomic measure: finitely many (z, mass) pairs."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple((float(z), float(m)) for z, m in self.atoms)
        for z, m in atoms:
            if z == 0.0:
                raise ValueError("atom at the origin is not allowed")
            if not -1.0 <= z <= 1.0:
                raise ValueError(f"atom {z} outside [-1, 1]")
            if m <= 0.0:
                raise ValueError(f"atom mass must be positive, got {m}")
        masses = {}
        for z, m in atoms:
            masses[z] = masses.get(z, 0.0) + m
        for z, m in masses.items():
            if not math.isclose(masses.get(-z, 0.0), m, rel_tol=1e-12):
                raise ValueError(f"measure not symmetric: mass at {z} vs {-z}")
        object.__setattr__(self, "atoms", atoms)


@dataclass(frozen=True)
class TruncatedPowerLaw:
    """Density c |z|^(-1-alpha) restricted to 0 < |z| <= 1, alpha in (0, 2)."""

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.scale <= 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")


LevyMeasure = DiscreteAtoms | TruncatedPowerLaw


def second_moment(nu: LevyMeasure) -> float:
    """mu_2 = integral of z^2 over the whole measure, in closed form."""
    if isinstance(nu, DiscreteAtoms):
        return sum(m * z * z for z, m in nu.atoms)
    return 2.0 * nu.scale / (2.0 - nu.alpha)


def second_moment_window(nu: LevyMeasure, lo: float, hi: float) -> float:
    """integral of z^2 over lo <= |z| <= hi (closed form per variant)."""
    if hi < lo:
        raise ValueError("empty window")
    if isinstance(nu, DiscreteAtoms):
        return sum(m * z * z for z, m in nu.atoms if lo <= abs(z) <= hi)
    hi = min(hi, 1.0)
    p = 2.0 - nu.alpha
    return 2.0 * nu.scale * (hi**p - lo**p) / p


def truncation_error_bound(nu: LevyMeasure, eps: float) -> float:
    """Variance of the omitted compensated jumps below eps: int_{|z|<eps} z^2."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if isinstance(nu, DiscreteAtoms):
        return sum(m * z * z for z, m in nu.atoms if abs(z) < eps)
    p = 2.0 - nu.alpha
    return 2.0 * nu.scale * eps**p / p


def intensity(nu: LevyMeasure, eps: float) -> float:
    """Total mass of {eps <= |z| <= 1} (per-mode Poisson rate per unit time)."""
    if isinstance(nu, DiscreteAtoms):
        return sum(m for z, m in nu.atoms if abs(z) >= eps)
    return 2.0 * nu.scale * (eps**-nu.alpha - 1.0) / nu.alpha


def eddy_viscosity(nu: LevyMeasure) -> float:
    """Effective diffusion constant of the scaling limit: C2 * mu_2."""
    return ISOTROPY_C2 * second_moment(nu)


def sample_sizes(nu: LevyMeasure, rng: np.random.Generator, count: int, eps: float) -> np.ndarray:
    """i.i.d. sizes from the measure restricted to eps <= |z| <= 1, normalized."""
    if count == 0:
        return np.empty(0)
    if isinstance(nu, DiscreteAtoms):
        kept = [(z, m) for z, m in nu.atoms if abs(z) >= eps]
        if not kept:
            return np.empty(0)
        zs = np.array([z for z, _ in kept])
        ps = np.array([m for _, m in kept])
        return rng.choice(zs, size=count, p=ps / ps.sum())
    # inverse CDF of the normalized density on [eps, 1], random sign
    u = rng.random(count)
    a = nu.alpha
    mags = (eps**-a - u * (eps**-a - 1.0)) ** (-1.0 / a)
    signs = 1.0 - 2.0 * rng.integers(0, 2, size=count)
    return signs * mags


def cos_weight_integral(
    nu: LevyMeasure,
    rates: np.ndarray,
    amplitude: float,
    window: tuple[float, float] = (0.0, 1.0),
) -> np.ndarray:
    """integral of (cos(z * amplitude * rate) - 1) over lo < |z| <= hi.

    This is the even part of the jump-map expansion that survives symmetric
    integration; it is always <= 0.  Vectorized over an array of rates.  For
    the power-law density the singular end is handled by an exact series below
    a smallness threshold and composite Gauss-Legendre panels above it, with
    panel doubling until the result is stable to 1e-12.
    """
    rates = np.asarray(rates, dtype=float)
    lo, hi = window
    if isinstance(nu, DiscreteAtoms):
        out = np.zeros_like(rates)
        for z, m in nu.atoms:
            if lo < abs(z) <= hi:
                out += m * (np.cos(z * amplitude * rates) - 1.0)
        return out
    hi = min(hi, 1.0)
    if hi <= lo:
        return np.zeros_like(rates)
    c, a = nu.scale, nu.alpha
    freq = np.abs(amplitude) * rates
    top = float(np.max(freq, initial=0.0))
    # series region: |z * freq| <= 0.1 keeps the x^10 tail below 1e-13
    delta = hi if top == 0.0 else min(hi, 0.1 / top)
    out = np.zeros_like(rates)
    if lo < delta:
        zlo = max(lo, 0.0)
        for j, fact in ((1, 2.0), (2, 24.0), (3, 720.0), (4, 40320.0)):
            p = 2 * j - a
            moment = 2.0 * c * (delta**p - zlo**p) / p
            out += (-1.0) ** j * freq ** (2 * j) * moment / fact
    if delta < hi:
        panels = 8
        prev = None
        glx, glw = np.polynomial.legendre.leggauss(16)
        while True:
            edges = np.exp(np.linspace(np.log(delta), np.log(hi), panels + 1))
            zs = np.concatenate(
                [0.5 * (e1 - e0) * glx + 0.5 * (e0 + e1) for e0, e1 in zip(edges, edges[1:])]
            )
            ws = np.concatenate([0.5 * (e1 - e0) * glw for e0, e1 in zip(edges, edges[1:])])
            dens = 2.0 * c * zs ** (-1.0 - a)
            vals = (np.cos(np.outer(freq, zs)) - 1.0) @ (ws * dens)
            if prev is not None and np.max(np.abs(vals - prev)) <= 1e-12:
                out += vals
                break
            if panels >= 512:
                out += vals
                break
            prev, panels = vals, panels * 2
    return out


# ---------------------------------------------------------------------------
# noise coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseCoefficients:
    """Radially symmetric mode weights with unit l2 norm and finite support."""

    modes: tuple[tuple[int, int], ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        if len(self.modes) == 0:
            raise ValueError("empty support")
        if values.shape != (len(self.modes),):
            raise ValueError("values misaligned with modes")
        if np.any(values <= 0.0):
            raise ValueError("coefficients must be positive on the support")
        norm = float(np.linalg.norm(values))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"l2 norm must be 1, got {norm!r}")
        values.setflags(write=False)
        object.__setattr__(self, "modes", tuple(tuple(map(int, m)) for m in self.modes))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_table", dict(zip(self.modes, values.tolist())))
        self.require_radial()

    def require_radial(self) -> None:
        """Radial symmetry must hold exactly (one weight per shell)."""
        shells: dict[int, float] = {}
        for (k1, k2), v in zip(self.modes, self.values):
            r2 = k1 * k1 + k2 * k2
            if shells.setdefault(r2, v) != v:
                raise ValueError(f"coefficients not radial on shell |k|^2 = {r2}")
            if (-k1, -k2) not in self._table:
                raise ValueError(f"support not symmetric: missing {(-k1, -k2)}")

    def value_of(self, mode) -> float:
        return self._table.get(as_pair(mode), 0.0)

    def linf(self) -> float:
        return float(np.max(self.values))

    @property
    def max_mode_norm(self) -> float:
        m = np.asarray(self.modes)
        return float(np.sqrt(np.max(m[:, 0] ** 2 + m[:, 1] ** 2)))

    def __len__(self) -> int:
        return len(self.modes)


def make_theta(n: int, a: float) -> NoiseCoefficients:
    """Power-law shell weights |k|^(-a) on 1 <= |k| <= n, l2-normalized.

    Weights are computed once per shell so the radial equality is bit-exact,
    and the sup norm is strictly decreasing in n for a in (0, 1).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 < a < 1.0:
        raise ValueError(f"a must lie in (0, 1), got {a}")
    basis = mode_basis(n)
    shells = {r2: r2 ** (-a / 2.0) for r2 in sorted(set(basis.norm_sq.astype(int)))}
    raw = np.array([shells[int(r2)] for r2 in basis.norm_sq])
    values = raw / np.linalg.norm(raw)
    return NoiseCoefficients(tuple(map(tuple, basis.modes.tolist())), values)


# ---------------------------------------------------------------------------
# jump-event sampling
# ---------------------------------------------------------------------------


class JumpEvent(NamedTuple):
    time: float
    mode: tuple[int, int]
    size: float


@dataclass(frozen=True)
class EventStream:
    """Time-ordered jump events (merged across modes)."""

    times: np.ndarray
    modes: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        modes = np.asarray(self.modes, dtype=np.int64).reshape(-1, 2)
        sizes = np.asarray(self.sizes, dtype=float)
        if not (len(times) == len(modes) == len(sizes)):
            raise ValueError("ragged event arrays")
        if np.any(np.diff(times) < 0.0):
            raise ValueError("events not time-ordered")
        for arr in (times, modes, sizes):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "sizes", sizes)

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[JumpEvent]:
        for t, (k1, k2), z in zip(self.times, self.modes, self.sizes):
            yield JumpEvent(float(t), (int(k1), int(k2)), float(z))

    def __getitem__(self, i: int) -> JumpEvent:
        return JumpEvent(
            float(self.times[i]),
            (int(self.modes[i, 0]), int(self.modes[i, 1])),
            float(self.sizes[i]),
        )


def empty_stream() -> EventStream:
    return EventStream(np.empty(0), np.empty((0, 2), dtype=np.int64), np.empty(0))


def mode_rng(seed: int, path_index: int, mode_rank: int) -> np.random.Generator:
    """Counter-based stream for one (path, mode) pair."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(path_index, mode_rank))
    return np.random.Generator(np.random.Philox(ss))


def sample_jumps(
    nu: LevyMeasure,
    theta: NoiseCoefficients,
    horizon: float,
    eps: float,
    seed: int,
    path_index: int = 0,
) -> EventStream:
    """Compound-Poisson skeleton of the drivers over [0, horizon].

    Per supported mode, independently: Poisson(intensity * horizon) many
    events at i.i.d. uniform times with sizes from the restriction of nu to
    {eps <= |z| <= 1}.  The per-mode streams are merged and time-sorted.  For
    symmetric measures the compensator drift of the removed mean vanishes, so
    no inter-event drift accompanies the skeleton.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if horizon <= 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    lam = intensity(nu, eps)
    all_times, all_modes, all_sizes, all_ranks = [], [], [], []
    for rank, mode in enumerate(theta.modes):
        rng = mode_rng(seed, path_index, rank)
        count = int(rng.poisson(lam * horizon))
        if count == 0:
            continue
        times = np.sort(rng.random(count) * horizon)
        sizes = sample_sizes(nu, rng, count, eps)
        all_times.append(times)
        all_sizes.append(sizes)
        all_modes.append(np.repeat([mode], count, axis=0))
        all_ranks.append(np.full(count, rank))
    if not all_times:
        return empty_stream()
    times = np.concatenate(all_times)
    modes = np.concatenate(all_modes)
    sizes = np.concatenate(all_sizes)
    ranks = np.concatenate(all_ranks)
    order = np.lexsort((ranks, times))
    return EventStream(times[order], modes[order], sizes[order])
