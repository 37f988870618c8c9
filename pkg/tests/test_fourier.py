"""Basis, mode fields, coupling operators, Biot-Savart, and the isotropy sum."""

import numpy as np
import pytest

from levyeddy import fourier as fr
from levyeddy.levy import NoiseCoefficients, make_theta

SQRT2 = np.sqrt(2.0)


def grid_quadrature(values_a, values_b):
    """L2 inner product on a uniform grid (exact for band-limited factors)."""
    return float(np.mean(values_a * values_b))


def eval_on_grid(mode, m):
    return fr.eval_basis(mode, fr.grid_nodes(m).reshape(m, m, 2))


class TestBasis:
    def test_partition_tie_break(self):
        assert fr.ModeIndex(1, 0).plus
        assert fr.ModeIndex(0, 1).plus
        assert not fr.ModeIndex(-1, 0).plus
        assert not fr.ModeIndex(0, -1).plus
        assert fr.ModeIndex(-1, 2).partition_class == "minus"

    def test_partition_is_sign_split(self):
        basis = fr.mode_basis(5)
        for k1, k2 in map(tuple, basis.modes):
            assert fr.is_plus(k1, k2) != fr.is_plus(-k1, -k2)

    def test_zero_mode_rejected(self):
        with pytest.raises(ValueError):
            fr.ModeIndex(0, 0)
        with pytest.raises(ValueError):
            fr.eval_basis((0, 0), np.zeros(2))

    def test_point_values(self):
        x0 = np.zeros(2)
        assert fr.eval_basis((1, 0), x0) == pytest.approx(SQRT2, abs=0)
        assert fr.eval_basis((-1, 0), x0) == pytest.approx(0.0, abs=0)

    def test_unit_l2_norm_by_quadrature(self):
        for mode in [(1, 0), (-1, 0), (2, 3), (-1, -4)]:
            vals = eval_on_grid(mode, 64)
            assert abs(grid_quadrature(vals, vals) - 1.0) < 1e-12

    def test_orthonormality_low_modes(self):
        basis = fr.mode_basis(4)
        vals = np.array([eval_on_grid(tuple(l), 64) for l in basis.modes])
        gram = np.tensordot(vals, vals, axes=([1, 2], [1, 2])) / 64**2
        assert np.max(np.abs(gram - np.eye(basis.size))) < 1e-12

    def test_field_norm_is_coefficient_norm(self):
        rng = np.random.default_rng(0)
        f = fr.SpectralField(5, rng.standard_normal(fr.mode_basis(5).size))
        vals = fr.field_values_grid(f, 32)
        assert abs(np.mean(vals**2) - f.norm() ** 2) < 1e-10


class TestSigma:
    def test_directions(self):
        assert np.allclose(fr.sigma_field((1, 0)).a, [0.0, -1.0], atol=0)
        assert np.allclose(fr.sigma_field((-1, 0)).a, [0.0, -1.0], atol=0)
        a = fr.sigma_field((1, 1)).a
        assert np.allclose(a, [1 / SQRT2, -1 / SQRT2])

    def test_direction_shared_with_negation(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            k = tuple(rng.integers(-6, 7, 2))
            if k == (0, 0):
                continue
            a1 = fr.sigma_field(k).a
            a2 = fr.sigma_field((-k[0], -k[1])).a
            assert np.array_equal(a1, a2)
            assert abs(a1 @ np.array(k)) < 1e-15
            assert abs(a1 @ a1 - 1.0) < 1e-15

    def test_divergence_free(self):
        m = 64
        nodes = fr.grid_nodes(m).reshape(m, m, 2)
        for k in [(1, 0), (2, -1), (-3, 3)]:
            a = fr.sigma_field(k).a
            ek = fr.field_from_modes(5, {k: 1.0})
            div = a[0] * fr.derivative_values_grid(ek, m, 0) + a[1] * fr.derivative_values_grid(ek, m, 1)
            assert np.max(np.abs(div)) < 1e-11

    def test_self_advection_vanishes_pointwise(self):
        # sigma_k . grad sigma_k = 0 at every grid point
        m = 48
        nodes = fr.grid_nodes(m).reshape(m, m, 2)
        for k in [(1, 0), (1, 2), (-2, 3)]:
            a = fr.sigma_field(k).a
            ek = fr.field_from_modes(5, {k: 1.0})
            gx = fr.derivative_values_grid(ek, m, 0)
            gy = fr.derivative_values_grid(ek, m, 1)
            sig = fr.sigma_values(k, nodes)
            # component j of sigma.grad sigma is (sigma . grad e_k) a_j
            directional = sig[..., 0] * gx + sig[..., 1] * gy
            assert np.max(np.abs(directional * a[0])) < 1e-12
            assert np.max(np.abs(directional * a[1])) < 1e-12


class TestCoupling:
    def test_norm_example_against_quadrature(self):
        # sigma_(1,0) . grad e_(0,1) = 4 pi cos(2 pi x1) sin(2 pi x2)
        m = 128
        nodes = fr.grid_nodes(m).reshape(m, m, 2)
        product = 4 * np.pi * np.cos(2 * np.pi * nodes[..., 0]) * np.sin(2 * np.pi * nodes[..., 1])
        oracle = np.sqrt(np.mean(product**2))
        for n in (2, 4):
            f = fr.field_from_modes(n, {(0, 1): 1.0})
            got = fr.coupling_matrix((1, 0), n).apply(f).norm()
            assert abs(got - oracle) < 1e-12
            assert abs(got - 2 * np.pi) < 1e-12
        # at n=1 the output modes (-1, +-1) are truncated away
        f1 = fr.field_from_modes(1, {(0, 1): 1.0})
        assert fr.coupling_matrix((1, 0), 1).apply(f1).norm() == 0.0

    def test_antisymmetry_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            k = tuple(rng.integers(-10, 11, 2))
            if k == (0, 0):
                continue
            A = fr.coupling_matrix(k, 5).dense()
            assert np.max(np.abs(A + A.T)) == 0.0

    def test_quadratic_form_vanishes(self):
        rng = np.random.default_rng(3)
        basis = fr.mode_basis(6)
        for k in [(1, 0), (2, 3), (-4, 1)]:
            A = fr.coupling_matrix(k, 6)
            f = fr.SpectralField(6, rng.standard_normal(basis.size))
            q = float(f.coeffs @ (A.matrix @ f.coeffs))
            assert abs(q) < 1e-12 * f.norm() ** 2 * max(1.0, A.matrix.max())

    def test_zero_beyond_double_cutoff(self):
        for n in (2, 4):
            A = fr.coupling_matrix((2 * n + 1, 0), n)
            assert A.matrix.nnz == 0

    def test_pseudospectral_oracle_agreement(self):
        rng = np.random.default_rng(4)
        n = 6
        basis = fr.mode_basis(n)
        for _ in range(30):
            k = tuple(rng.integers(-2 * n, 2 * n + 1, 2))
            if k == (0, 0):
                continue
            f = fr.SpectralField(n, rng.standard_normal(basis.size))
            f = (1.0 / f.norm()) * f
            lhs = fr.coupling_matrix(k, n).apply(f)
            rhs = fr.advect_pseudospectral(k, f, n)
            assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) < 1e-11

    def test_cutoff_mismatch_rejected(self):
        f = fr.field_from_modes(4, {(1, 0): 1.0})
        with pytest.raises(ValueError):
            fr.coupling_matrix((1, 0), 5).apply(f)

    def test_double_derivative_bound(self):
        # || sigma_k . grad P_n (sigma_k . grad e_l) || <= C |l|^2 with a single
        # constant over all |k| <= 2n, |l| <= n, n in {4, 8}; the sup bound of
        # the mode fields gives C = 8 pi^2.
        C = 8 * np.pi**2
        worst = 0.0
        for n in (4, 8):
            basis = fr.mode_basis(n)
            norm_l2 = basis.norm_sq
            for k in map(tuple, fr.mode_basis(2 * n).modes):
                inner = fr.coupling_matrix(k, n).matrix
                kn = int(np.ceil(np.sqrt(k[0] ** 2 + k[1] ** 2)))
                outer = fr.advection_matrix(k, n, n + kn)
                comp = outer @ inner
                col_norms = np.sqrt(np.asarray(comp.multiply(comp).sum(axis=0)).ravel())
                worst = max(worst, float(np.max(col_norms / norm_l2)))
        assert worst <= C


class TestBiotSavart:
    def test_single_mode_example(self):
        u1, u2 = fr.biot_savart(fr.field_from_modes(4, {(1, 0): 1.0}))
        assert u1.norm() == 0.0
        assert u2.coeff((-1, 0)) == pytest.approx(-1.0 / (2 * np.pi), abs=1e-15)
        assert abs(u2.norm() - 1.0 / (2 * np.pi)) < 1e-15

    def test_poisson_oracle(self):
        # independent route: solve -lap psi = xi mode-wise, u = (d2 psi, -d1 psi)
        rng = np.random.default_rng(5)
        n = 5
        basis = fr.mode_basis(n)
        xi = fr.SpectralField(n, rng.standard_normal(basis.size))
        psi = fr.SpectralField(n, xi.coeffs / (-basis.laplacian_symbol))
        v1 = fr.derivative(psi, 1)
        v2 = -1.0 * fr.derivative(psi, 0)
        u1, u2 = fr.biot_savart(xi)
        assert np.max(np.abs(u1.coeffs - v1.coeffs)) < 1e-14
        assert np.max(np.abs(u2.coeffs - v2.coeffs)) < 1e-14

    def test_curl_and_divergence(self):
        rng = np.random.default_rng(6)
        basis = fr.mode_basis(6)
        xi = fr.SpectralField(6, rng.standard_normal(basis.size))
        u1, u2 = fr.biot_savart(xi)
        assert np.max(np.abs(fr.curl(u1, u2).coeffs - xi.coeffs)) < 1e-13
        assert np.max(np.abs(fr.divergence(u1, u2).coeffs)) < 1e-14

    def test_h1_norm_matches_vorticity(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            xi = fr.SpectralField(6, rng.standard_normal(fr.mode_basis(6).size))
            u1, u2 = fr.biot_savart(xi)
            h1 = np.sqrt(fr.sobolev_norm(u1, 1.0) ** 2 + fr.sobolev_norm(u2, 1.0) ** 2)
            assert abs(h1 / xi.norm() - 1.0) < 1e-12

    def test_zero_field(self):
        u1, u2 = fr.biot_savart(fr.zero_field(3))
        assert u1.norm() == 0.0 and u2.norm() == 0.0


class TestProjection:
    def test_embedding_identity(self):
        f = fr.field_from_modes(3, {(1, 0): 1.0, (2, 2): -0.5})
        g = fr.project(f, 6)
        assert g.coeff((1, 0)) == 1.0 and g.coeff((2, 2)) == -0.5
        assert abs(g.norm() - f.norm()) < 1e-15

    def test_truncation_kills_high_modes(self):
        f = fr.field_from_modes(5, {(4, 3): 1.0})
        assert fr.project(f, 4).norm() == 0.0

    def test_pythagoras(self):
        rng = np.random.default_rng(8)
        f = fr.SpectralField(6, rng.standard_normal(fr.mode_basis(6).size))
        low = fr.project(f, 3)
        high = f - fr.project(low, 6)
        assert abs(low.norm() ** 2 + high.norm() ** 2 - f.norm() ** 2) < 1e-12


class TestIsotropy:
    def brute_force_sum(self, theta, x):
        # independent oracle: direct loop over the support, no shared code path
        total = np.zeros((2, 2))
        for (k1, k2), v in zip(theta.modes, theta.values):
            p = (k1, k2) if fr.is_plus(k1, k2) else (-k1, -k2)
            norm = np.hypot(*p)
            a = np.array([p[1], -p[0]]) / norm
            phase = 2 * np.pi * (k1 * x[0] + k2 * x[1])
            e = np.sqrt(2) * (np.cos(phase) if fr.is_plus(k1, k2) else np.sin(phase))
            total += v * v * e * e * np.outer(a, a)
        return total

    def test_unit_shell_gives_half_identity(self):
        theta = make_theta(1, 0.5)
        rng = np.random.default_rng(9)
        for _ in range(10):
            x = rng.random(2)
            got = fr.isotropy_sum(theta, x)
            oracle = self.brute_force_sum(theta, x)
            assert np.max(np.abs(got - oracle)) < 1e-14
            assert np.max(np.abs(got - 0.5 * np.eye(2))) < 1e-12
        # pins the dimension constant: 2 * C2 = 1/2
        assert fr.ISOTROPY_C2 == 0.25

    def test_off_diagonal_and_trace(self):
        theta = make_theta(4, 0.35)
        rng = np.random.default_rng(10)
        pts = rng.random((50, 2))
        sums = fr.isotropy_sum(theta, pts)
        assert np.max(np.abs(sums[:, 0, 1])) < 1e-12
        assert np.max(np.abs(sums[:, 1, 0])) < 1e-12
        traces = sums[:, 0, 0] + sums[:, 1, 1]
        assert np.max(np.abs(traces - 1.0)) < 1e-12

    def test_position_independence(self):
        theta = make_theta(8, 0.25)
        rng = np.random.default_rng(11)
        sums = fr.isotropy_sum(theta, rng.random((100, 2)))
        spread = np.max(sums, axis=0) - np.min(sums, axis=0)
        assert np.max(spread) < 1e-10

    def test_non_radial_rejected(self):
        with pytest.raises(ValueError):
            NoiseCoefficients(
                ((1, 0), (-1, 0), (0, 1), (0, -1)),
                np.array([0.6, 0.6, np.sqrt(1 - 2 * 0.36) / np.sqrt(2)] * 1 + [np.sqrt(1 - 2 * 0.36) / np.sqrt(2)]),
            )


class TestGridTransforms:
    def test_round_trip(self):
        rng = np.random.default_rng(12)
        f = fr.SpectralField(7, rng.standard_normal(fr.mode_basis(7).size))
        back = fr.project_from_grid(fr.field_values_grid(f, 36), 7)
        assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12

    def test_grid_too_coarse_rejected(self):
        f = fr.field_from_modes(8, {(1, 0): 1.0})
        with pytest.raises(ValueError):
            fr.field_values_grid(f, 16)

    def test_derivative_values(self):
        f = fr.field_from_modes(3, {(2, 1): 1.0})
        m = 24
        got = fr.derivative_values_grid(f, m, 0)
        want = fr.field_values_grid(fr.derivative(f, 0), m)
        assert np.max(np.abs(got - want)) < 1e-11
