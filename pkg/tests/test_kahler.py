import numpy as np
import pytest

from conesphere import (
    Configuration,
    DomainError,
    dbar_solve,
    gram,
    kernel_R,
    q_basis_values,
    solve_accessory,
    stress_tensor,
    validate_orders,
    verify_cbar_metric,
    verify_kahler_potential,
)
from conesphere.kahler import MetricMatrix


class TestKernel:
    def test_vanishes_at_normalized_points(self):
        zs = np.array([0.3 + 0.7j, -2 + 1j, 5 - 3j, 1e8 + 1e7j])
        assert np.max(np.abs(kernel_R(zs, 0.0))) == 0.0
        assert np.max(np.abs(kernel_R(zs, 1.0))) == 0.0

    def test_cubic_decay_coefficient(self):
        z0 = 0.3 + 0.2j
        for R in (1e4, 1e8):
            zeta = R * np.exp(0.77j)
            lead = zeta**3 * kernel_R(np.array([zeta]), z0)[0]
            assert lead == pytest.approx(-(z0**2 - z0) / np.pi, rel=1e-3)

    def test_pole_rejected(self):
        with pytest.raises(DomainError):
            kernel_R(np.array([0.5 + 0j]), 0.5)

    def test_matches_partial_fractions(self):
        # factored form equals the literal three-term sum at moderate points
        z0 = 0.4 - 0.3j
        zeta = np.array([2.0 + 1.0j, -0.7 + 0.4j, 0.2 - 2.0j])
        literal = -(1 / np.pi) * (1 / (zeta - z0) + (z0 - 1) / zeta - z0 / (zeta - 1))
        assert np.max(np.abs(kernel_R(zeta, z0) - literal)) < 1e-14


class TestDbarInversion:
    @staticmethod
    def f0(z):
        return z * (z - 1) * np.exp(-np.abs(z) ** 2)

    @staticmethod
    def g(z):
        return -(z**2) * (z - 1) * np.exp(-np.abs(z) ** 2)

    def test_recovers_fixture(self):
        for z in (0.4 + 0.5j, -0.7 - 0.3j, 2.0 + 0.1j):
            f = dbar_solve(self.g, z)
            assert abs(f - self.f0(z)) < 1e-4

    def test_vanishes_at_normalized_points(self):
        # kernel vanishes identically there, no quadrature needed to see it
        zs = np.array([0.5 + 2j, -1 - 1j])
        assert np.max(np.abs(kernel_R(zs, 0.0))) == 0.0
        assert np.max(np.abs(kernel_R(zs, 1.0))) == 0.0

    def test_linearity(self):
        z = 0.4 + 0.5j
        g2 = lambda w: 1j * self.g(w) * 0.7
        both = lambda w: self.g(w) + g2(w)
        f1 = dbar_solve(self.g, z)
        f2 = dbar_solve(g2, z)
        f12 = dbar_solve(both, z)
        assert abs(f12 - (f1 + f2)) < 1e-12


class TestGram:
    def test_one_modulus_positive_real(self, gram4):
        G = gram4.matrix
        assert G.shape == (1, 1)
        assert abs(G[0, 0].imag) < 1e-12
        assert G[0, 0].real > 0

    def test_integrand_decay_exponent(self, testbed4):
        # fitted radial decay of |Q_1|^2 e^{-phi} near the free point is
        # 2 alpha - 2
        ev = testbed4.ev
        w1 = testbed4.config.free_points[0]
        rs = np.array([3e-3, 1.5e-3, 7.5e-4])
        vals = []
        for r in rs:
            th = 2 * np.pi * (np.arange(32) + 0.5) / 32
            z = w1 + r * np.exp(1j * th)
            from conesphere.field import frames_to_field
            e_phi, _ = frames_to_field(ev.frames_series(0, z))
            Q = q_basis_values(testbed4.config, z)[0]
            vals.append(np.mean(np.abs(Q) ** 2 / e_phi))
        slope = np.polyfit(np.log(rs), np.log(vals), 1)[0]
        assert slope == pytest.approx(2 * 0.7 - 2, abs=0.05)

    def test_hermitian_positive_two_moduli(self):
        od = validate_orders([0.7] * 5)
        cfg = Configuration((0.45 + 0.45j, -0.35 + 0.25j))
        rep = solve_accessory(cfg, od)
        rep.raise_for_status()
        ten = stress_tensor(cfg, od, rep.accessory.free)
        from conesphere import FieldEvaluator
        gm = gram(FieldEvaluator(ten))
        G = gm.matrix
        assert G.shape == (2, 2)
        assert np.max(np.abs(G - G.conj().T)) < 1e-10
        assert np.min(np.linalg.eigvalsh(G)) > 0
        M = MetricMatrix.from_gram(gm).matrix
        assert np.max(np.abs(G @ M - np.eye(2))) < 1e-10 * np.linalg.cond(G)

    @pytest.mark.slow
    def test_reflection_symmetry(self, testbed4):
        # equal orders: G at z1 equals G at 1 - z1
        od = testbed4.orders
        other = solve_accessory(Configuration((0.7 + 0j,)), od).raise_for_status()
        from conesphere import FieldEvaluator
        ten = stress_tensor(Configuration((0.7 + 0j,)), od, other.accessory.free)
        g_other = gram(FieldEvaluator(ten))
        a = gram(testbed4.ev).matrix[0, 0].real
        b = g_other.matrix[0, 0].real
        assert a == pytest.approx(b, rel=1e-6)


class TestTheorem2:
    def test_contraction_is_identity(self, testbed4, stencil4):
        rep = verify_cbar_metric(testbed4.config, testbed4.orders,
                                 stencil=stencil4, evaluator=testbed4.ev)
        assert rep.residual * 2 * np.pi < 1e-2 * 2 * np.pi  # max-norm residual
        assert rep.residual < 1e-2
        assert rep.diagonal_positive

    def test_derivative_positive(self, stencil4):
        D = stencil4.c_zbar_derivative()
        assert D[0, 0].real > 0
        assert abs(D[0, 0].imag) < 1e-6

    def test_symmetric_point_relation_holds(self, testbed4_sym):
        # the derivative, not the value, is constrained where c vanishes
        from conesphere.action import moduli_stencil
        st = moduli_stencil(testbed4_sym.config, testbed4_sym.orders,
                            fd_step=1e-3, with_action=False,
                            center=testbed4_sym.solve)
        rep = verify_cbar_metric(testbed4_sym.config, testbed4_sym.orders,
                                 stencil=st, evaluator=testbed4_sym.ev)
        assert rep.residual < 1e-2


class TestPotential:
    @pytest.mark.slow
    def test_corollary(self, testbed4, gram4):
        rep = verify_kahler_potential(testbed4.config, testbed4.orders,
                                      gram_matrix=gram4)
        assert rep.worst_rel_mismatch < 5e-2
        assert rep.empirical_sign == -1
