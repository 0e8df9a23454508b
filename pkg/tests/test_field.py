import numpy as np
import pytest

from conesphere import (
    BranchError,
    DomainError,
    FieldEvaluator,
    asymptotic_report,
    lemma3_check,
    liouville_defect,
    schwarzian_defect,
    stress_tensor,
    total_area,
    validate_orders,
)
from conesphere import Configuration
from conesphere.field import frames_to_field
from conesphere.quadrature import QuadBudget

from oracles import TriangleOracle

SAMPLES_3PT = (0.3 + 0.3j, -0.2 + 0.5j, 0.7 - 0.4j)


class TestAgainstTriangleOracle:
    def test_density_matches(self, testbed3):
        oracle = TriangleOracle(0.8, 0.8, 0.8)
        for z in SAMPLES_3PT + (2.0 + 1.0j, 0.05 + 0.02j, 10.0 + 3.0j):
            mine, _ = testbed3.ev.field_at(z)
            assert mine == pytest.approx(oracle.e_phi(z), rel=1e-6)

    def test_density_matches_asymmetric(self):
        od = validate_orders([0.9, 0.7, 0.6])
        ten = stress_tensor(Configuration(()), od, [])
        ev = FieldEvaluator(ten)
        oracle = TriangleOracle(0.9, 0.7, 0.6)
        for z in SAMPLES_3PT:
            mine, _ = ev.field_at(z)
            assert mine == pytest.approx(oracle.e_phi(z), rel=1e-6)

    def test_phi_z_matches(self, testbed3):
        import mpmath as mp
        oracle = TriangleOracle(0.8, 0.8, 0.8)

        def oracle_phi_z(z, d=1e-6):
            lp = lambda w: mp.log(oracle.e_phi(w))
            dx = (lp(z + d) - lp(z - d)) / (2 * d)
            dy = (lp(z + 1j * d) - lp(z - 1j * d)) / (2 * d)
            return complex(dx - 1j * dy) / 2

        for z in (0.08 + 0.05j, 0.5 + 0.9j, 12.0 + 5.0j):
            _, pz = testbed3.ev.field_at(z)
            assert abs(pz - oracle_phi_z(z)) < 1e-6


class TestFieldBasics:
    def test_positive_and_in_disk(self, testbed4):
        rng = np.random.default_rng(3)
        for _ in range(12):
            z = complex(rng.uniform(-2, 3), rng.uniform(-2, 2))
            if min(abs(z - p) for p in testbed4.config.finite_points) < 0.2:
                continue
            e, _ = testbed4.ev.field_at(z)
            assert e > 0
            w = testbed4.ev.developing_map(np.asarray([z]))[0]
            assert abs(w) < 1.0

    def test_pole_rejected(self, testbed4):
        with pytest.raises(DomainError):
            testbed4.ev.field_at(0.0)

    def test_single_valuedness(self, testbed4):
        for z in (0.55 + 0.2j, -0.6 - 0.4j, 1.7 + 0.8j):
            assert testbed4.ev.single_valuedness_defect(z) < 1e-9

    def test_unitarity_residual(self, testbed4):
        assert testbed4.ev.unitarity_residual < 1e-8

    def test_gauge_normalization(self, testbed4):
        # developing map vanishes at the base with positive derivative
        F = testbed4.ev.base_frame
        w_b = F[0, 0] / F[0, 1]
        assert abs(w_b) < 1e-10
        W = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
        dw = -W / F[0, 1] ** 2
        assert abs(dw.imag) < 1e-10 * abs(dw)
        assert dw.real > 0

    def test_conical_growth(self, testbed3):
        # |z|^{2 alpha} e^phi tends to a positive limit at the cone point
        vals = []
        for r in (1e-3, 1e-4, 1e-5):
            e, _ = testbed3.ev.field_at(r * np.exp(0.3j))
            vals.append(e * r**1.6)
        assert vals[0] > 0
        assert abs(vals[2] / vals[1] - 1) < abs(vals[1] / vals[0] - 1)

    def test_wrong_sheet_raises(self, testbed4):
        F = testbed4.ev.frames_at(np.asarray([0.55 + 0.2j]))
        swapped = F[:, :, ::-1]
        with pytest.raises(BranchError):
            frames_to_field(swapped)


class TestDiagnostics:
    def test_liouville_equation(self, testbed4):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(6):
            z = complex(rng.uniform(-1.5, 2.5), rng.uniform(-1.5, 1.5))
            if min(abs(z - p) for p in testbed4.config.finite_points) < 0.25:
                continue
            worst = max(worst, liouville_defect(testbed4.ev, z))
        assert worst < 1e-5

    def test_schwarzian_identity(self, testbed4):
        rng = np.random.default_rng(11)
        count = 0
        while count < 8:
            z = complex(rng.uniform(-1.5, 2.5), rng.uniform(-1.5, 1.5))
            if min(abs(z - p) for p in testbed4.config.finite_points) < 0.25:
                continue
            assert schwarzian_defect(testbed4.ev, z) < 1e-7
            count += 1

    def test_lemma3_n3(self, testbed3):
        for i in range(2):
            rep = lemma3_check(testbed3.ev, i)
            assert rep.rel_error < 1e-5

    def test_lemma3_n4(self, testbed4):
        for i in range(3):
            rep = lemma3_check(testbed4.ev, i)
            assert rep.rel_error < 1e-4

    def test_lemma3_symmetric_zero(self, testbed4_sym):
        rep = lemma3_check(testbed4_sym.ev, 0)
        assert rep.abs_error < 1e-5
        assert abs(rep.expansion.a1) < 1e-4

    def test_asymptotics_testbed(self, testbed4):
        for i in range(3):
            rep = asymptotic_report(testbed4.ev, i)
            assert rep.limit_error < 1e-3
            assert abs(rep.fitted_exponent - rep.expected_exponent) < 0.1

    def test_asymptotics_symmetric_limit_zero(self, testbed4_sym):
        rep = asymptotic_report(testbed4_sym.ev, 0)
        assert abs(rep.limit) < 1e-6

    def test_asymptotics_small_order_decays(self):
        od = validate_orders([0.4, 0.9, 0.9])
        ten = stress_tensor(Configuration(()), od, [])
        ev = FieldEvaluator(ten)
        rep = asymptotic_report(ev, 0)
        assert rep.expected_exponent == pytest.approx(0.2)
        assert abs(rep.fitted_exponent - 0.2) < 0.1


class TestTotalArea:
    def test_gauss_bonnet_n3(self, testbed3):
        area, est = total_area(testbed3.ev)
        expect = 2 * np.pi * 0.4
        assert abs(area / expect - 1) < 1e-3
        assert abs(area - expect) <= max(est, 1e-3 * expect)

    def test_gauss_bonnet_n4_moduli_independent(self, testbed4):
        area, _ = total_area(testbed4.ev)
        assert abs(area / (2 * np.pi * 0.8) - 1) < 1e-3

    @pytest.mark.slow
    def test_budget_consistency(self, testbed3):
        coarse_budget = QuadBudget(n_theta=32, p_rad=8, bg_order=8)
        a1, e1 = total_area(testbed3.ev, budget=coarse_budget)
        a2, e2 = total_area(testbed3.ev)
        assert abs(a1 - a2) < 10 * max(e1, e2)
