import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conesphere import (
    Configuration,
    DomainError,
    ValidationError,
    complete_accessories,
    stress_tensor,
    t_phi_eval,
    validate_orders,
)


class TestValidateOrders:
    def test_weights(self):
        od = validate_orders([0.8, 0.8, 0.8])
        assert od.weights == pytest.approx((0.96, 0.96, 0.96))
        assert od.metric_grade

    def test_sum_too_small(self):
        with pytest.raises(ValidationError):
            validate_orders([0.5, 0.5, 0.5])

    def test_order_at_least_one(self):
        with pytest.raises(ValidationError):
            validate_orders([1.2, 0.9, 0.9])

    def test_cusp_rejected(self):
        with pytest.raises(ValidationError):
            validate_orders([1.0, 0.9, 0.9])

    def test_negative_order_not_metric_grade(self):
        od = validate_orders([-0.3, 0.9, 0.8, 0.9])
        assert not od.metric_grade

    @given(st.lists(st.floats(0.05, 0.95), min_size=3, max_size=6))
    def test_weight_formula(self, alphas):
        if sum(alphas) <= 2.0:
            alphas = [0.9] * len(alphas)
        od = validate_orders(alphas)
        for a, h in zip(od.alphas, od.weights):
            assert h == a * (2.0 - a)


class TestConfiguration:
    def test_near_collision_rejected(self):
        with pytest.raises(ValidationError):
            Configuration((1e-10 + 0j,))
        with pytest.raises(ValidationError):
            Configuration((0.4, 0.4 + 1e-11j))

    def test_counts(self):
        cfg = Configuration((0.3 + 0.4j,))
        assert cfg.n == 4
        assert cfg.finite_points == (0.3 + 0.4j, 0j, 1 + 0j)


class TestCompleteAccessories:
    def test_three_points(self):
        od = validate_orders([0.8, 0.8, 0.8])
        acc = complete_accessories(Configuration(()), od, [])
        assert acc.c_zero == pytest.approx(0.48, abs=1e-15)
        assert acc.c_one == pytest.approx(-0.48, abs=1e-15)
        assert acc.c_infinity == pytest.approx(0.48, abs=1e-15)

    def test_four_points_symmetric(self):
        od = validate_orders([0.7] * 4)
        acc = complete_accessories(Configuration((0.5 + 0j,)), od, [0j])
        assert acc.c_zero == pytest.approx(0.91, abs=1e-15)
        assert acc.c_one == pytest.approx(-0.91, abs=1e-15)
        assert acc.c_infinity == pytest.approx(0.455, abs=1e-15)

    def test_length_mismatch(self):
        od = validate_orders([0.7] * 4)
        with pytest.raises(ValidationError):
            complete_accessories(Configuration((0.5 + 0j,)), od, [])

    @given(
        st.lists(st.floats(0.3, 0.95), min_size=4, max_size=6),
        st.data(),
    )
    @settings(max_examples=40)
    def test_relations_hold(self, alphas, data):
        if sum(alphas) <= 2.0:
            alphas = [0.9] * len(alphas)
        od = validate_orders(alphas)
        m = len(alphas) - 3
        pts = []
        for k in range(m):
            pts.append(complex(data.draw(st.floats(-2, 3)), data.draw(st.floats(0.1, 2))))
        try:
            cfg = Configuration(tuple(pts))
        except ValidationError:
            return
        free = [complex(data.draw(st.floats(-2, 2)), data.draw(st.floats(-2, 2)))
                for _ in range(m)]
        acc = complete_accessories(cfg, od, free)
        scale = max(1.0, max(abs(c) for c in acc.finite))
        for r in acc.relation_residuals(cfg, od):
            assert abs(r) < 1e-12 * scale


class TestStressTensor:
    def test_point_value(self):
        od = validate_orders([0.8] * 3)
        ten = stress_tensor(Configuration(()), od, [])
        assert t_phi_eval(ten, 2.0) == pytest.approx(0.36, abs=1e-15)

    def test_decay_at_infinity(self):
        od = validate_orders([0.8] * 3)
        ten = stress_tensor(Configuration(()), od, [])
        assert abs(t_phi_eval(ten, 1e3)) == pytest.approx(0.96 / 2e6, rel=1e-2)

    def test_infinity_expansion_order(self):
        # |z^2 T - h_n/2 - c_n/z| should drop like |z|^-2
        od = validate_orders([0.75, 0.85, 0.7, 0.8])
        ten = stress_tensor(Configuration((0.4 + 0.2j,)), od, [0.3 - 0.1j])
        h_n = od.weights[-1]
        c_n = ten.accessory.c_infinity

        def defect(R):
            th = np.exp(1j * np.linspace(0, 2 * np.pi, 8, endpoint=False))
            z = R * th
            vals = ten.eval_many(z)
            return np.max(np.abs(z**2 * vals - h_n / 2.0 - c_n / z))

        d1, d2 = defect(1e3), defect(2e3)
        assert d2 < d1 / 3.0  # consistent with O(R^-2)

    def test_pole_rejected(self):
        od = validate_orders([0.8] * 3)
        ten = stress_tensor(Configuration(()), od, [])
        with pytest.raises(DomainError):
            t_phi_eval(ten, 1.0)

    def test_laurent_coefficient(self):
        od = validate_orders([0.7] * 4)
        ten = stress_tensor(Configuration((0.35 + 0.1j,)), od, [0.2 + 0.4j])
        for i, p in enumerate(ten.config.finite_points):
            t = 1e-6 * np.exp(0.3j)
            lead = (t**2 * ten.eval(p + t)).real
            assert lead == pytest.approx(od.weights[i] / 2.0, rel=1e-4)

    def test_conjugation_symmetry(self):
        # real points, real accessories: T(conj z) = conj T(z)
        od = validate_orders([0.7] * 4)
        ten = stress_tensor(Configuration((0.3 + 0j,)), od, [0.12 + 0j])
        for z in (0.5 + 0.7j, -1.1 + 0.2j, 2.0 - 0.9j):
            assert ten.eval(np.conj(z)) == pytest.approx(np.conj(ten.eval(z)), rel=1e-14)

    def test_taylor_matches_direct(self):
        od = validate_orders([0.7] * 4)
        ten = stress_tensor(Configuration((0.35 + 0.1j,)), od, [0.2 + 0.4j])
        q = ten.q_taylor_at(0, 14)
        z0 = 0.35 + 0.1j
        t = 0.02 * np.exp(0.7j)
        head_h, head_c = ten.laurent_head(0)
        direct = ten.eval(z0 + t) / 2.0 - head_h / t**2 - head_c / t
        series = sum(q[k] * t**k for k in range(14))
        assert abs(direct - series) < 1e-10

    def test_infinity_taylor_matches_direct(self):
        od = validate_orders([0.7] * 4)
        ten = stress_tensor(Configuration((0.35 + 0.1j,)), od, [0.2 + 0.4j])
        q = ten.q_taylor_at_infinity(12)
        t = 0.05 * np.exp(1.1j)
        head_h, head_c = ten.laurent_head(3)
        direct = ten.eval(1.0 / t) / (2.0 * t**4) - head_h / t**2 - head_c / t
        series = sum(q[k] * t**k for k in range(12))
        assert abs(direct - series) < 1e-9
