import numpy as np
import pytest

from conesphere import (
    Configuration,
    ReducibleError,
    default_clearance,
    elliptic_fixed_points,
    invariant_form,
    loop_monodromy,
    monodromy_rep,
    reality_residual,
    solve_accessory,
    stress_tensor,
    validate_orders,
)
from conesphere.monodromy import MonodromyRep, trace_pairs


@pytest.fixture(scope="module")
def tensor4_offsol():
    """Arbitrary (non-unitarizable) accessory values, orders 0.8."""
    od = validate_orders([0.8] * 4)
    return stress_tensor(Configuration((0.3 + 0.4j,)), od, [0.37 + 0.21j])


class TestLoopMonodromy:
    def test_traces_fixed_by_exponents(self, tensor4_offsol):
        # |tr| = 2|cos(pi (1-alpha))| for every accessory vector
        rep = monodromy_rep(tensor4_offsol)
        expect = 2.0 * np.cos(0.2 * np.pi)
        for g in rep.generators:
            assert abs(abs(np.trace(g)) - expect) < 1e-8
            assert abs(np.linalg.det(g) - 1.0) < 1e-10

    def test_trace_zero_at_half(self):
        od = validate_orders([0.5, 0.9, 0.9])
        ten = stress_tensor(Configuration(()), od, [])
        g = loop_monodromy(ten, 0)
        assert abs(np.trace(g)) < 1e-8

    def test_product_identity(self, tensor4_offsol):
        rep = monodromy_rep(tensor4_offsol)
        assert rep.product_identity_defect() < 1e-8

    def test_product_identity_n3(self):
        od = validate_orders([0.8] * 3)
        ten = stress_tensor(Configuration(()), od, [])
        rep = monodromy_rep(ten)
        assert rep.product_identity_defect() < 1e-9

    def test_multiplier(self, tensor4_offsol):
        # eigenvalue ratio of the local loop is exp(2 pi i (1 - alpha))
        g = loop_monodromy(tensor4_offsol, 0)
        ev = np.linalg.eigvals(g)
        ratio = ev[0] / ev[1]
        lam = np.exp(2j * np.pi * 0.2)
        assert min(abs(ratio - lam), abs(1.0 / ratio - lam)) < 1e-7

    def test_fixed_points_diagnostic(self):
        M = np.array([[1.3, 0.2 + 0.1j], [0.5 - 0.2j, 1.1]], dtype=complex)
        w1, w2 = elliptic_fixed_points(M)
        for w in (w1, w2):
            from conesphere.field import mobius
            assert abs(mobius(M, w) - w) < 1e-10


class TestRealityResidual:
    def test_pair_sets(self):
        assert trace_pairs(2) == [(0, 1)]
        assert trace_pairs(3) == [(0, 1), (0, 2), (1, 2)]
        assert trace_pairs(4) == [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]
        assert len(trace_pairs(4, "all")) == 6

    def test_forced_n3_unitarizable(self):
        od = validate_orders([0.8] * 3)
        ten = stress_tensor(Configuration(()), od, [])
        rep = monodromy_rep(ten, include_infinity=False)
        assert np.max(np.abs(reality_residual(rep))) < 1e-8

    def test_solution_vs_perturbed(self, testbed4_sym):
        rep = monodromy_rep(testbed4_sym.tensor, include_infinity=False)
        assert np.max(np.abs(reality_residual(rep))) < 1e-7
        bad = stress_tensor(testbed4_sym.config, testbed4_sym.orders, [1.0 + 0j])
        rep_bad = monodromy_rep(bad, include_infinity=False)
        assert np.max(np.abs(reality_residual(rep_bad))) > 1e-2


class TestSolve:
    def test_n3_forced(self):
        od = validate_orders([0.8] * 3)
        rep = solve_accessory(Configuration(()), od)
        assert rep.converged and rep.iterations == 0
        assert rep.signature == "(1,1)"
        assert abs(rep.accessory.c_zero - 0.48) < 1e-14

    def test_symmetry_oracle(self, testbed4_sym):
        assert abs(testbed4_sym.solve.accessory.free[0]) < 1e-6
        assert testbed4_sym.solve.signature == "(1,1)"

    def test_reality_oracle(self, testbed4):
        assert abs(testbed4.solve.accessory.free[0].imag) < 1e-6
        assert testbed4.solve.residual_norm < 1e-9

    def test_base_point_independence(self, testbed4):
        alt = solve_accessory(testbed4.config, testbed4.orders,
                              base=0.7 - 1.1j)
        alt.raise_for_status()
        assert abs(alt.accessory.free[0] - testbed4.solve.accessory.free[0]) < 1e-8

    def test_continuity_along_segment(self, testbed4):
        # continuation: the solved value moves smoothly, no branch jump
        c_prev = testbed4.solve.accessory.free[0]
        for x in (0.32, 0.34):
            rep = solve_accessory(Configuration((x + 0j,)), testbed4.orders,
                                  guess=[c_prev])
            rep.raise_for_status()
            assert abs(rep.accessory.free[0] - c_prev) < 0.2
            c_prev = rep.accessory.free[0]

    @pytest.mark.slow
    def test_complex_configuration(self):
        od = validate_orders([0.9, 0.5, 0.5, 0.9])
        rep = solve_accessory(Configuration((0.3 + 0.2j,)), od)
        rep.raise_for_status()
        assert rep.signature == "(1,1)"


class TestInvariantForm:
    def test_post_solve_form(self, testbed4):
        rep = monodromy_rep(testbed4.tensor)
        form = invariant_form(rep)
        assert form.signature == "(1,1)"
        assert form.residual < 1e-8
        H = form.matrix
        assert np.max(np.abs(H - H.conj().T)) == 0.0
        assert np.linalg.det(H).real < 0
        assert H[0, 0].real >= 0

    def test_sign_flip_invariance(self, testbed4):
        rep = monodromy_rep(testbed4.tensor)
        flipped = MonodromyRep(
            base_point=rep.base_point,
            generators=[-g for g in rep.generators],
            n_finite=rep.n_finite,
        )
        f1 = invariant_form(rep)
        f2 = invariant_form(flipped)
        assert np.max(np.abs(f1.matrix - f2.matrix)) < 1e-8

    def test_reducible_rejected(self):
        diag = [np.diag([np.exp(1j * t), np.exp(-1j * t)]) for t in (0.3, 0.9, 1.4)]
        rep = MonodromyRep(base_point=0j, generators=diag, n_finite=3)
        with pytest.raises(ReducibleError):
            invariant_form(rep)

    def test_spherical_branch_detected(self):
        # an SU(2) representation must come out with a definite form
        def su2(a, b):
            m = np.array([[a, b], [-np.conj(b), np.conj(a)]], dtype=complex)
            return m / np.sqrt(np.linalg.det(m))

        C = np.array([[1.0, 0.3 + 0.2j], [0.1j, 0.8]], dtype=complex)
        Ci = np.linalg.inv(C)
        gens = [C @ su2(np.exp(0.4j), 0.3 + 0.1j) @ Ci,
                C @ su2(np.exp(-0.7j), 0.2 - 0.4j) @ Ci,
                C @ su2(np.exp(0.9j), -0.1 + 0.5j) @ Ci]
        rep = MonodromyRep(base_point=0j, generators=gens, n_finite=3)
        form = invariant_form(rep)
        assert form.signature == "(+,+)"


class TestWorkspaceDefaults:
    def test_default_clearance(self):
        cfg = Configuration((0.3 + 0j,))
        assert default_clearance(cfg) == pytest.approx(0.4 * 0.3)
