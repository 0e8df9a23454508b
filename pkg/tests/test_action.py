import numpy as np
import pytest

from conesphere import (
    Configuration,
    FieldEvaluator,
    ValidationError,
    action,
    solve_accessory,
    solve_and_action,
    stress_tensor,
    validate_orders,
    verify_action_gradient,
)
from conesphere.action import ActionEvaluator, DEFAULT_LADDER
from conesphere.quadrature import QuadBudget


@pytest.fixture(scope="module")
def action3(testbed3):
    return ActionEvaluator(testbed3.ev)


class TestEpsilonFunctional:
    def test_ladder_differences_shrink(self, action3):
        vals = [action3.epsilon_value(e) for e in DEFAULT_LADDER]
        diffs = np.abs(np.diff(vals))
        assert np.all(np.diff(diffs) < 0)

    def test_extrapolant_differences_shrink(self, action3):
        av = action3.value()
        gaps = np.abs(np.diff(av.extrapolants))
        assert gaps[-1] < gaps[1]
        assert av.error_estimate >= abs(av.extrapolants[-1] - av.extrapolants[-2]) - 1e-15

    def test_value_is_finite_real(self, action3):
        av = action3.value()
        assert np.isfinite(av.value)
        assert isinstance(av.value, float)

    def test_stability_across_ladder(self, action3):
        # extrapolated limit from the first three rungs vs all rungs; the
        # leading corrections decay like eps^0.4 here, so the short ladder
        # carries a visible but bounded remainder
        from conesphere.extrapolation import correction_exponents, power_extrapolate
        samples = [action3.epsilon_value(e) for e in DEFAULT_LADDER]
        exps = correction_exponents([0.8] * 3, len(DEFAULT_LADDER) - 1)
        full, _, _ = power_extrapolate(DEFAULT_LADDER, samples, exps)
        head, _, _ = power_extrapolate(DEFAULT_LADDER[:3], samples[:3], exps[:2])
        assert abs(full - head) < 5e-3
        av = action3.value()
        assert abs(av.extrapolants[-1] - av.extrapolants[-2]) < 5e-4

    def test_eps_out_of_range(self, action3):
        with pytest.raises(ValidationError):
            action3.epsilon_value(0.3)

    def test_gauss_bonnet_subcheck(self, action3, testbed3):
        # the density part alone extrapolates to the cone area
        from conesphere.extrapolation import correction_exponents, power_extrapolate
        ladder = DEFAULT_LADDER
        areas = [action3.area_density_epsilon(e) for e in ladder]
        exps = correction_exponents([0.8] * 3, len(ladder) - 1)
        lim, _, _ = power_extrapolate(ladder, areas, exps)
        assert lim == pytest.approx(2 * np.pi * 0.4, rel=2e-4)


class TestActionSymmetries:
    @pytest.mark.slow
    def test_conjugate_configuration(self):
        od = validate_orders([0.7] * 4)
        up = solve_and_action(Configuration((0.3 + 0.2j,)), od)
        dn = solve_and_action(Configuration((0.3 - 0.2j,)), od)
        assert up.action.value == pytest.approx(dn.action.value, abs=5e-5)

    @pytest.mark.slow
    def test_reflection_symmetric_pair(self):
        # equal orders: z -> 1 - z maps the configuration to itself
        od = validate_orders([0.7] * 4)
        a = solve_and_action(Configuration((0.42 + 0j,)), od)
        b = solve_and_action(Configuration((0.58 + 0j,)), od)
        assert a.action.value == pytest.approx(b.action.value, abs=5e-5)


class TestGradient:
    def test_symmetric_point_stationary(self, testbed4_sym):
        from conesphere.action import moduli_stencil
        st = moduli_stencil(testbed4_sym.config, testbed4_sym.orders,
                            fd_step=1e-3, center=testbed4_sym.solve)
        assert abs(st.dS_dz(0)) < 1e-3

    def test_theorem_gradient(self, testbed4, stencil4):
        rep = verify_action_gradient(testbed4.config, testbed4.orders,
                                     stencil=stencil4)
        assert rep.worst_rel_residual < 1e-3
        assert rep.empirical_sign in (-1, 1)
        # the sign is recorded, not normalized away
        assert "sign" in rep.sign_note

    def test_gradient_requires_moduli(self, testbed3):
        with pytest.raises(ValidationError):
            verify_action_gradient(testbed3.config, testbed3.orders)
