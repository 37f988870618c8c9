"""Jump flows, orthogonal jump exponentials, and the corrector operator."""

import numpy as np
import pytest
from scipy import linalg

from levyeddy import fourier as fr
from levyeddy import levy
from levyeddy import marcus as mc

TWO_ATOM = levy.DiscreteAtoms(((0.5, 0.5), (-0.5, 0.5)))
POWER = levy.TruncatedPowerLaw(alpha=1.0, scale=1.0)


class TestJumpFlow:
    def test_closed_form_example(self):
        flow = mc.JumpFlowMap(fr.ModeIndex(1, 0), 0.1, mc.SIGN_EULER)
        image = mc.apply_jump_flow(flow, np.zeros(2))
        # sigma_(1,0)(0) = (0, -sqrt(2)); forward map adds w sigma
        assert image[0] == 0.0
        assert image[1] == pytest.approx(np.mod(-0.1 * np.sqrt(2.0), 1.0), abs=1e-15)
        back = mc.apply_jump_flow(mc.JumpFlowMap(fr.ModeIndex(1, 0), 0.1, mc.SIGN_TRANSPORT), np.zeros(2))
        assert back[1] == pytest.approx(np.mod(0.1 * np.sqrt(2.0), 1.0), abs=1e-15)

    def test_zero_amplitude_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.random((40, 2))
        flow = mc.JumpFlowMap(fr.ModeIndex(2, -1), 0.0, mc.SIGN_TRANSPORT)
        assert np.array_equal(mc.apply_jump_flow(flow, x), x)

    def test_field_invariance_along_flow(self):
        rng = np.random.default_rng(1)
        x = rng.random((100, 2))
        for k in [(1, 0), (3, -2), (-1, 4)]:
            for sign in (mc.SIGN_TRANSPORT, mc.SIGN_EULER):
                flow = mc.JumpFlowMap(fr.ModeIndex(*k), 0.31, sign)
                image = mc.apply_jump_flow(flow, x)
                gap = np.max(np.abs(fr.sigma_values(k, image) - fr.sigma_values(k, x)))
                assert gap < 1e-14

    def test_measure_preserving(self):
        # unit Jacobian via central finite differences
        rng = np.random.default_rng(2)
        flow = mc.JumpFlowMap(fr.ModeIndex(2, 1), 0.4, mc.SIGN_TRANSPORT)
        h = 1e-6
        for x in rng.random((20, 2)):
            J = np.empty((2, 2))
            for j in range(2):
                dx = np.zeros(2)
                dx[j] = h
                # avoid the mod-1 wrap for the difference quotient
                plus = x + dx - 0.4 * fr.sigma_values((2, 1), x + dx)
                minus = x - dx - 0.4 * fr.sigma_values((2, 1), x - dx)
                J[:, j] = (plus - minus) / (2 * h)
            assert abs(np.linalg.det(J) - 1.0) < 1e-8

    def test_forward_backward_composition(self):
        # the time-(+w) and time-(-w) maps are inverse flows; numerically the
        # round trip returns to the start at roundoff scale
        rng = np.random.default_rng(3)
        x = rng.random((50, 2))
        fwd = mc.JumpFlowMap(fr.ModeIndex(1, 2), 0.2, mc.SIGN_TRANSPORT)
        bwd = mc.JumpFlowMap(fr.ModeIndex(1, 2), 0.2, mc.SIGN_EULER)
        back = mc.apply_jump_flow(bwd, mc.apply_jump_flow(fwd, x))
        assert np.max(np.abs(back - x)) < 1e-13

    def test_unknown_sign_rejected(self):
        with pytest.raises(ValueError):
            mc.JumpFlowMap(fr.ModeIndex(1, 0), 0.1, "sideways")


class TestJumpExponential:
    def test_zero_amplitude(self):
        f = fr.field_from_modes(5, {(1, 0): 1.0, (2, 2): -2.0})
        out = mc.jump_exponential(fr.coupling_matrix((1, 1), 5), 0.0, f)
        assert np.array_equal(out.coeffs, f.coeffs)

    def test_norm_preservation_bulk(self):
        rng = np.random.default_rng(4)
        n = 6
        basis = fr.mode_basis(n)
        worst = 0.0
        for _ in range(1000):
            k = tuple(rng.integers(-2 * n, 2 * n + 1, 2))
            if k == (0, 0):
                continue
            w = float(rng.normal())
            f = fr.SpectralField(n, rng.standard_normal(basis.size))
            out = mc.jump_exponential(fr.coupling_matrix(k, n), w, f)
            worst = max(worst, abs(out.norm() - f.norm()) / f.norm())
        assert worst < 1e-13

    def test_inverse_pair(self):
        rng = np.random.default_rng(5)
        n = 5
        basis = fr.mode_basis(n)
        for _ in range(50):
            k = tuple(rng.integers(-6, 7, 2))
            if k == (0, 0):
                continue
            w = float(rng.normal())
            f = fr.SpectralField(n, rng.standard_normal(basis.size))
            A = fr.coupling_matrix(k, n)
            back = mc.jump_exponential(A, -w, mc.jump_exponential(A, w, f))
            assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12

    def test_against_dense_expm(self):
        rng = np.random.default_rng(6)
        n = 6
        basis = fr.mode_basis(n)
        for _ in range(40):
            k = tuple(rng.integers(-8, 9, 2))
            if k == (0, 0):
                continue
            w = float(rng.normal() * 0.8)
            f = fr.SpectralField(n, rng.standard_normal(basis.size))
            A = fr.coupling_matrix(k, n)
            got = mc.jump_exponential(A, w, f)
            want = mc.expm_dense_oracle(A, w) @ f.coeffs
            assert np.max(np.abs(got.coeffs - want)) < 1e-11

    def test_matches_ode_definition(self):
        # e^{-wA} f equals the time-1 solution of dPhi/dt = -w A Phi
        n = 4
        rng = np.random.default_rng(7)
        f = fr.SpectralField(n, rng.standard_normal(fr.mode_basis(n).size))
        A = fr.coupling_matrix((1, 1), n)
        w = 0.37
        got = mc.jump_exponential(A, w, f).coeffs
        c = f.coeffs.copy()
        steps = 2000
        h = 1.0 / steps
        M = (-w) * A.dense()
        for _ in range(steps):
            k1 = M @ c
            k2 = M @ (c + 0.5 * h * k1)
            k3 = M @ (c + 0.5 * h * k2)
            k4 = M @ (c + h * k3)
            c = c + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        assert np.max(np.abs(got - c)) < 1e-9

    def test_cutoff_mismatch(self):
        f = fr.field_from_modes(4, {(1, 0): 1.0})
        with pytest.raises(ValueError):
            mc.jump_exponential(fr.coupling_matrix((1, 0), 5), 0.1, f)

    def test_spectral_norm_equals_max_rate(self):
        for k in [(1, 0), (2, 1)]:
            st = mc.rotation_structure(k, 5)
            rates = [np.max(np.abs(st.pair_rates), initial=0.0)]
            rates += [np.max(np.abs(c.rates), initial=0.0) for c in st.components]
            dense = fr.coupling_matrix(k, 5).dense()
            assert abs(max(rates) - np.linalg.norm(dense, 2)) < 1e-10


class TestCorrector:
    def test_two_atom_exact_formula(self):
        # independent oracle: per-mode average of dense exponentials at the atoms
        n = 5
        theta = levy.make_theta(1, 0.5)
        B = mc.corrector_operator(theta, TWO_ATOM, n)
        size = fr.mode_basis(n).size
        oracle = np.zeros((size, size))
        for mode, value in zip(theta.modes, theta.values):
            Ad = fr.coupling_matrix(mode, n).dense()
            oracle += 0.5 * (linalg.expm(-0.5 * value * Ad) + linalg.expm(0.5 * value * Ad)) - np.eye(size)
        assert np.max(np.abs(B.matrix - oracle)) < 1e-12

    def test_dissipativity(self):
        rng = np.random.default_rng(8)
        theta = levy.make_theta(2, 0.5)
        B = mc.corrector_operator(theta, TWO_ATOM, 4)
        for _ in range(100):
            f = rng.standard_normal(B.matrix.shape[0])
            assert f @ (B.matrix @ f) <= 1e-12 * (f @ f)

    def test_symmetrized_spectrum_nonpositive(self):
        theta = levy.make_theta(2, 0.35)
        for nu in (TWO_ATOM, POWER):
            B = mc.corrector_operator(theta, nu, 4)
            sym = 0.5 * (B.matrix + B.matrix.T)
            assert np.max(np.linalg.eigvalsh(sym)) <= 1e-10

    def test_power_law_matches_dense_quadrature_oracle(self):
        # assemble by brute force: 4000-node midpoint rule on dense exponentials
        n = 3
        theta = levy.make_theta(1, 0.5)
        B = mc.corrector_operator(theta, POWER, n, z_window=(0.05, 1.0))
        size = fr.mode_basis(n).size
        zs = np.linspace(0.05, 1.0, 4001)
        zs = 0.5 * (zs[1:] + zs[:-1])
        dz = (1.0 - 0.05) / 4000
        oracle = np.zeros((size, size))
        for mode, value in zip(theta.modes, theta.values):
            Ad = fr.coupling_matrix(mode, n).dense()
            for z in zs:
                dens = z**-2  # alpha = 1, scale = 1
                inc = linalg.expm(-z * value * Ad) + linalg.expm(z * value * Ad) - 2 * np.eye(size)
                oracle += 0.5 * inc * dens * dz * 2.0
        assert np.max(np.abs(B.matrix - oracle)) < 1e-5

    def test_small_amplitude_series(self):
        # fourth-order tail bound with atoms at +-1e-2: quadratic reference
        # matches to well below 1e-6
        tiny = levy.DiscreteAtoms(((1e-2, 0.5), (-1e-2, 0.5)))
        theta = levy.make_theta(1, 0.5)
        B = mc.corrector_operator(theta, tiny, 4)
        S2 = mc.quadratic_corrector_reference(theta, tiny, 4)
        assert np.linalg.norm(B.matrix - S2, 2) < 1e-6

    def test_quartic_tail_bound(self):
        # ||B - (mu_2/2) sum theta^2 A^2|| <= (mu_4/24) sum theta^4 ||A||^4,
        # from the global Taylor remainder of cos; checked at the full jump size
        theta = levy.make_theta(1, 0.5)
        n = 4
        B = mc.corrector_operator(theta, TWO_ATOM, n)
        S2 = mc.quadratic_corrector_reference(theta, TWO_ATOM, n)
        mu4 = sum(m * z**4 for z, m in TWO_ATOM.atoms)
        bound = 0.0
        for mode, value in zip(theta.modes, theta.values):
            norm = np.linalg.norm(fr.coupling_matrix(mode, n).dense(), 2)
            bound += (mu4 / 24.0) * value**4 * norm**4
        assert np.linalg.norm(B.matrix - S2, 2) <= bound

    def test_second_order_taylor_identity(self):
        # ||(e^{-wA} - I + wA) f|| / w^2 -> ||A^2 f|| / 2, observed order 2
        n = 4
        rng = np.random.default_rng(9)
        f = fr.SpectralField(n, rng.standard_normal(fr.mode_basis(n).size))
        A = fr.coupling_matrix((1, 0), n)
        Ad = A.dense()
        target = 0.5 * np.linalg.norm(Ad @ (Ad @ f.coeffs))
        resid = []
        for w in (1e-1, 1e-2, 1e-3):
            val = mc.jump_exponential(A, w, f).coeffs - f.coeffs + w * (Ad @ f.coeffs)
            resid.append(np.linalg.norm(val))
            assert np.linalg.norm(val) / w**2 < 2.0 * target + 1.0
        slope = np.polyfit(np.log([1e-1, 1e-2, 1e-3]), np.log(resid), 1)[0]
        assert 1.9 < slope < 2.1
        assert abs(resid[-1] / 1e-6 - target) / target < 0.02

    def test_residual_corrector_zero_for_atoms(self):
        theta = levy.make_theta(2, 0.5)
        R = mc.residual_corrector(theta, TWO_ATOM, 4, eps=0.1)
        assert R.is_zero()

    def test_residual_plus_window_recovers_full(self):
        theta = levy.make_theta(1, 0.5)
        full = mc.corrector_operator(theta, POWER, 3, z_window=(0.0, 1.0))
        low = mc.corrector_operator(theta, POWER, 3, z_window=(0.0, 0.1))
        high = mc.corrector_operator(theta, POWER, 3, z_window=(0.1, 1.0))
        assert np.max(np.abs(full.matrix - low.matrix - high.matrix)) < 1e-11

    def test_expm_apply_matches_scipy(self):
        theta = levy.make_theta(1, 0.5)
        B = mc.corrector_operator(theta, TWO_ATOM, 3)
        rng = np.random.default_rng(10)
        c = rng.standard_normal(B.matrix.shape[0])
        got = B.expm_apply(0.7, c)
        want = linalg.expm(0.7 * B.matrix) @ c
        assert np.max(np.abs(got - want)) < 1e-12

    def test_corrector_vs_laplacian_zero_case(self):
        theta = levy.make_theta(1, 0.5)
        B = mc.corrector_operator(theta, TWO_ATOM, 2)
        zeroB = mc.CorrectorOperator(2, np.zeros_like(B.matrix), (0.0, 1.0))
        f = fr.field_from_modes(2, {(1, 1): 1.0})
        assert mc.corrector_vs_laplacian(zeroB, 0.0, f) == 0.0

    def test_corrector_discrepancy_decreases(self):
        kappa = levy.eddy_viscosity(TWO_ATOM)
        vals = []
        for n in (1, 2, 4, 8):
            theta = levy.make_theta(n, 0.25)
            B = mc.corrector_operator(theta, TWO_ATOM, max(n, 2))
            f = fr.field_from_modes(max(n, 2), {(1, 1): 1.0})
            vals.append(mc.corrector_vs_laplacian(B, kappa, f))
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestMarcusMapConvergence:
    def test_exponential_approaches_flow_composition(self):
        # Galerkin jump exponential converges to composition with the exact
        # jump flow as the cutoff grows
        phi_entries = {(1, 0): 0.8, (0, 1): -0.5, (1, 1): 0.6}
        m = 128
        nodes = fr.grid_nodes(m).reshape(m, m, 2)

        def phi_fn(points):
            total = np.zeros(points.shape[:-1])
            for mode, c in phi_entries.items():
                total += c * fr.eval_basis(mode, points)
            return total

        for k, w in [((1, 0), 0.25), ((2, -1), -0.2)]:
            flow = np.mod(nodes + w * fr.sigma_values(k, nodes), 1.0)
            target = phi_fn(flow)
            errs = []
            for n in (4, 8, 16):
                f = fr.field_from_modes(n, phi_entries)
                coeffs = mc.exp_coupling_apply(k, n, w, f.coeffs)
                vals = fr.field_values_grid(fr.SpectralField(n, coeffs), m)
                errs.append(float(np.sqrt(np.mean((vals - target) ** 2))))
            assert errs[0] > errs[1] > errs[2]
