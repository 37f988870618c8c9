"""Jump machinery: exact pointwise jump flows, orthogonal jump exponentials on
the Galerkin space, and the nonlocal corrector operator whose flat-coefficient
limit is kappa times the Laplacian.

Each coupling operator A_k decomposes over the connected components of its
sparsity graph (chains of modes along the direction k).  On every component a
real Schur factorization reduces the antisymmetric block to 2x2 rotation
blocks, after which e^{w A_k} is evaluated exactly for any amplitude w as a
bundle of plane rotations, and the measure-integrated corrector reduces to
scalar integrals of cos(z * theta_k * rate) - 1 per rotation pair.  The dense
series/Pade exponential survives only as a test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg
from scipy.sparse import csgraph

from .fourier import (
    ModeCouplingOperator,
    ModeIndex,
    SpectralField,
    as_pair,
    coupling_matrix,
    mode_basis,
    sigma_field,
)
from .levy import LevyMeasure, NoiseCoefficients, cos_weight_integral

SIGN_TRANSPORT = "transport"
SIGN_EULER = "euler"


@dataclass(frozen=True)
class JumpFlowMap:
    """Time-1 flow of the mode field scaled by the jump amplitude.

    With w = z * theta_k, the transport convention moves points along
    x -> x - w sigma_k(x) and the Euler convention along x -> x + w sigma_k(x),
    both reduced mod 1.  The map is measure preserving (unit Jacobian) and
    leaves sigma_k itself invariant, which is why the closed form is exact.
    """

    mode: ModeIndex
    amplitude: float
    sign: str = SIGN_TRANSPORT

    def __post_init__(self):
        if self.sign not in (SIGN_TRANSPORT, SIGN_EULER):
            raise ValueError(f"unknown sign convention {self.sign!r}")


def apply_jump_flow(flow: JumpFlowMap, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    step = flow.amplitude * sigma_field(flow.mode)(x)
    if flow.sign == SIGN_TRANSPORT:
        return np.mod(x - step, 1.0)
    return np.mod(x + step, 1.0)


# ---------------------------------------------------------------------------
# rotation-block structure of a coupling operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Component:
    idx: np.ndarray        # basis indices of this invariant subspace
    q: np.ndarray          # orthogonal Schur basis
    ia: np.ndarray         # first row of each 2x2 rotation block (in Schur basis)
    ib: np.ndarray         # second row of each block
    rates: np.ndarray      # rotation rate per block (T[ia, ib] = +rate)


@dataclass(frozen=True)
class RotationStructure:
    """e^{w A_k} as plane rotations: two-mode couplings batched into flat index
    arrays, longer chains kept as Schur-factored components."""

    k: ModeIndex
    n: int
    pair_i: np.ndarray     # batched 2-dim components: A[pair_i, pair_j] = +rate
    pair_j: np.ndarray
    pair_rates: np.ndarray
    components: tuple[_Component, ...]

    def exp_apply(self, w: float, coeffs: np.ndarray) -> np.ndarray:
        """e^{w A_k} acting on a coefficient vector (exactly orthogonal)."""
        out = coeffs.copy()
        if len(self.pair_i):
            c = np.cos(w * self.pair_rates)
            s = np.sin(w * self.pair_rates)
            ya, yb = out[self.pair_i], out[self.pair_j]
            out[self.pair_i] = c * ya + s * yb
            out[self.pair_j] = -s * ya + c * yb
        for comp in self.components:
            y = comp.q.T @ out[comp.idx]
            c = np.cos(w * comp.rates)
            s = np.sin(w * comp.rates)
            ya, yb = y[comp.ia], y[comp.ib]
            y[comp.ia] = c * ya + s * yb
            y[comp.ib] = -s * ya + c * yb
            out[comp.idx] = comp.q @ y
        return out


def _schur_blocks(block: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    t, q = linalg.schur(block, output="real")
    scale = max(1.0, float(np.max(np.abs(t))))
    ia, ib, rates = [], [], []
    i = 0
    s = block.shape[0]
    while i < s:
        if i + 1 < s and abs(t[i + 1, i]) > 1e-12 * scale:
            ia.append(i)
            ib.append(i + 1)
            rates.append(0.5 * (t[i, i + 1] - t[i + 1, i]))
            i += 2
        else:
            i += 1
    return q, np.array(ia, dtype=int), np.array(ib, dtype=int), np.array(rates)


@lru_cache(maxsize=4096)
def _rotation_structure_cached(kpair: tuple[int, int], n: int) -> RotationStructure:
    op = coupling_matrix(kpair, n)
    mat = op.matrix
    n_comp, labels = csgraph.connected_components(mat, directed=False)
    dense = mat.toarray()
    order = np.argsort(labels, kind="stable")
    starts = np.searchsorted(labels[order], np.arange(n_comp))
    bounds = np.append(starts, len(order))
    pair_i, pair_j, pair_rates = [], [], []
    comps = []
    for c in range(n_comp):
        idx = order[bounds[c] : bounds[c + 1]]
        if len(idx) < 2:
            continue  # untouched directions: e^{wA} acts as the identity
        if len(idx) == 2:
            i0, i1 = int(idx[0]), int(idx[1])
            pair_i.append(i0)
            pair_j.append(i1)
            pair_rates.append(0.5 * (dense[i0, i1] - dense[i1, i0]))
            continue
        block = dense[np.ix_(idx, idx)]
        q, ia, ib, rates = _schur_blocks(block)
        idx = np.ascontiguousarray(idx)
        for arr in (idx, q, ia, ib, rates):
            arr.setflags(write=False)
        comps.append(_Component(idx, q, ia, ib, rates))
    pi = np.asarray(pair_i, dtype=int)
    pj = np.asarray(pair_j, dtype=int)
    pr = np.asarray(pair_rates, dtype=float)
    for arr in (pi, pj, pr):
        arr.setflags(write=False)
    return RotationStructure(ModeIndex(*kpair), n, pi, pj, pr, tuple(comps))


def rotation_structure(kmode, n: int) -> RotationStructure:
    return _rotation_structure_cached(as_pair(kmode), n)


def exp_coupling_apply(kmode, n: int, w: float, coeffs: np.ndarray) -> np.ndarray:
    """e^{w A_k} applied to raw coefficients at cutoff n."""
    return rotation_structure(kmode, n).exp_apply(w, coeffs)


def jump_exponential(A: ModeCouplingOperator, w: float, f: SpectralField) -> SpectralField:
    """e^{-w A} f, the jump map of the Galerkin system written with the noise
    on the left-hand side.  Norm preserving (orthogonal matrix)."""
    if f.n != A.n:
        raise ValueError(f"cutoff mismatch: field at n={f.n}, operator at n={A.n}")
    coeffs = exp_coupling_apply(A.k.pair, A.n, -w, f.coeffs)
    return SpectralField(f.n, coeffs)


def expm_dense_oracle(A: ModeCouplingOperator, w: float) -> np.ndarray:
    """Dense scaling-and-squaring exponential, used only to cross-check the
    rotation-block path."""
    return linalg.expm(-w * A.dense())


# ---------------------------------------------------------------------------
# corrector operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrectorOperator:
    """Measure-integrated drift  sum_k int (e^{-z theta_k A_k} - I + z theta_k A_k) nu(dz)
    restricted to a window in |z|.

    For symmetric measures only the even part survives, so the matrix is
    symmetric negative semidefinite and identical for both sign conventions.
    """

    n: int
    matrix: np.ndarray
    z_window: tuple[float, float]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (mode_basis(self.n).size,) * 2:
            raise ValueError("matrix shape does not match cutoff")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_eigh", None)

    def apply(self, f: SpectralField) -> SpectralField:
        if f.n != self.n:
            raise ValueError("cutoff mismatch")
        return SpectralField(self.n, self.matrix @ f.coeffs)

    def _decomposition(self):
        if object.__getattribute__(self, "_eigh") is None:
            vals, vecs = np.linalg.eigh(self.matrix)
            object.__setattr__(self, "_eigh", (vals, vecs))
        return object.__getattribute__(self, "_eigh")

    def expm_apply(self, dt: float, coeffs: np.ndarray) -> np.ndarray:
        """exp(dt * B) applied exactly through the symmetric eigendecomposition."""
        vals, vecs = self._decomposition()
        return vecs @ (np.exp(dt * vals) * (vecs.T @ coeffs))

    def spectral_bound(self) -> float:
        vals, _ = self._decomposition()
        return float(np.max(np.abs(vals)))

    def is_zero(self) -> bool:
        return not np.any(self.matrix)


def corrector_operator(
    theta: NoiseCoefficients,
    nu: LevyMeasure,
    n: int,
    z_window: tuple[float, float] = (0.0, 1.0),
) -> CorrectorOperator:
    basis = mode_basis(n)
    B = np.zeros((basis.size, basis.size))
    diag_view = np.einsum("ii->i", B)
    for mode, value in zip(theta.modes, theta.values):
        st = rotation_structure(mode, n)
        if len(st.pair_i):
            # a two-mode coupling contributes g on both diagonal entries
            g = cos_weight_integral(nu, st.pair_rates, value, z_window)
            diag_view[st.pair_i] += g
            diag_view[st.pair_j] += g
        for comp in st.components:
            g = cos_weight_integral(nu, comp.rates, value, z_window)
            diag = np.zeros(len(comp.idx))
            diag[comp.ia] = g
            diag[comp.ib] = g
            B[np.ix_(comp.idx, comp.idx)] += (comp.q * diag) @ comp.q.T
    B = 0.5 * (B + B.T)
    return CorrectorOperator(n, B, z_window)


def residual_corrector(
    theta: NoiseCoefficients, nu: LevyMeasure, n: int, eps: float
) -> CorrectorOperator:
    """Corrector of the jumps below the sampling threshold.

    An eps-truncated event stream realizes the jumps with |z| >= eps; their
    mean effect is carried by the events themselves, so the only drift left to
    integrate between events is the corrector of the omitted sizes |z| < eps.
    (For an atomic measure with no mass below eps this is the zero operator.)
    """
    from .levy import DiscreteAtoms

    window = (0.0, eps * (1.0 - 1e-12))
    if isinstance(nu, DiscreteAtoms) and all(abs(z) >= eps for z, _ in nu.atoms):
        size = mode_basis(n).size
        return CorrectorOperator(n, np.zeros((size, size)), window)
    return corrector_operator(theta, nu, n, z_window=window)


def corrector_vs_laplacian(B: CorrectorOperator, kappa: float, testfn: SpectralField) -> float:
    """L2 distance between B f and kappa * Laplacian f for a smooth test field."""
    if testfn.n != B.n:
        raise ValueError("cutoff mismatch")
    target = kappa * testfn.basis.laplacian_symbol * testfn.coeffs
    return float(np.linalg.norm(B.matrix @ testfn.coeffs - target))


def quadratic_corrector_reference(
    theta: NoiseCoefficients, nu: LevyMeasure, n: int
) -> np.ndarray:
    """Leading term (mu_2 / 2) sum_k theta_k^2 A_k^2 of the corrector series
    (dense); independent reference for small-amplitude comparisons."""
    from .levy import second_moment

    basis = mode_basis(n)
    S = np.zeros((basis.size, basis.size))
    for mode, value in zip(theta.modes, theta.values):
        A = coupling_matrix(mode, n).matrix
        S += (value * value) * (A @ A).toarray()
    return 0.5 * second_moment(nu) * S
