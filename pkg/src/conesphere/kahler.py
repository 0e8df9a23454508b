"""Moduli-space metric from the accessory parameters and its verifications.

The kernel

    R(zeta, z) = -(1/pi) (1/(zeta - z) + (z - 1)/zeta - z/(zeta - 1))

inverts d/d z-bar among functions vanishing at 0 and 1 with ``o(|z|^2)``
growth.  The basis functions ``Q_i(z) = R(z, w_i)`` attached to the free
points have simple poles at ``w_i, 0, 1``, decay as ``z^{-3}``, and are
square integrable against ``e^{-phi}`` when all orders are positive.  The
matrix of pairings

    G_ik = integral of Q_i conj(Q_k) e^{-phi}

is Hermitian positive definite, and the metric on the moduli space is its
inverse; the z-bar derivatives of the accessory parameters recover it as
``D G = I/(2 pi)`` (index placement fixed empirically, see
``verify_cbar_metric``), and ``-1`` times the mixed second derivatives of the
critical action value reproduce the metric directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .action import DEFAULT_LADDER, ModuliStencil, moduli_stencil, solve_and_action
from .errors import BudgetError, DomainError, ValidationError
from .field import FieldEvaluator
from .model import Configuration, OrderData
from .quadrature import PlanarDomain, QuadBudget
from .transport import DEFAULT_RTOL


def kernel_R(zeta, z) -> complex:
    """The plane d-bar kernel; vanishes identically in ``zeta`` at z = 0, 1.

    The three partial fractions ``1/(zeta-z) + (z-1)/zeta - z/(zeta-1)``
    combine exactly to ``(z^2 - z)/(zeta (zeta-1) (zeta-z))``; the factored
    form is used because the term-by-term sum cancels from ``1/zeta`` down to
    ``zeta^{-3}`` and loses all significance at large ``|zeta|``.
    """
    zeta = np.asarray(zeta, dtype=complex)
    z = complex(z)
    d = np.minimum(np.abs(zeta - z), np.minimum(np.abs(zeta), np.abs(zeta - 1.0)))
    if np.any(d < 1e-12):
        raise DomainError("kernel evaluated at a pole")
    val = -(1.0 / math.pi) * (z * z - z) / (zeta * (zeta - 1.0) * (zeta - z))
    return val if val.shape else complex(val)


def q_basis_values(config: Configuration, z: np.ndarray) -> np.ndarray:
    """Values ``Q_i(z) = R(z, w_i)`` for all free indices, ``(n-3,) + z.shape``."""
    z = np.asarray(z, dtype=complex)
    out = np.empty((config.n - 3,) + z.shape, dtype=complex)
    base = z * (z - 1.0)
    for i, w in enumerate(config.free_points):
        out[i] = -(1.0 / math.pi) * (w * w - w) / (base * (z - w))
    return out


@dataclass
class GramMatrix:
    matrix: np.ndarray
    error_estimate: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass
class MetricMatrix:
    matrix: np.ndarray

    @classmethod
    def from_gram(cls, gram: GramMatrix) -> "MetricMatrix":
        M = np.linalg.inv(gram.matrix)
        return cls(matrix=0.5 * (M + M.conj().T))


def gram(ev: FieldEvaluator, budget: QuadBudget | None = None,
         with_error: bool = True) -> GramMatrix:
    """Pairing matrix ``G_ik`` of the basis against ``e^{-phi}``.

    All entries share one pass over the quadrature nodes (the field values
    are cached on the evaluator).  Near each finite marked point the
    integrand behaves like ``r^{2 alpha - 2}`` when both factors have a pole
    there, which the fitted-power tails capture below the innermost panel.
    """
    if not ev.orders.metric_grade:
        raise ValidationError("the pairing needs all orders in (0, 1)")
    config = ev.config
    m = config.n - 3
    if m == 0:
        return GramMatrix(matrix=np.zeros((0, 0), dtype=complex),
                          error_estimate=np.zeros((0, 0)))
    budget = budget or QuadBudget()
    dom = ev.domain(budget)

    def pole_orders(j: int) -> np.ndarray:
        # Q_i has a pole at finite center j iff j is the matching free point
        # or one of the normalized points 0, 1 (the last two centers).
        return np.array([1 if (j == i or j >= m) else 0 for i in range(m)])

    def polar_far_part(d: PlanarDomain) -> np.ndarray:
        G = np.zeros((m, m), dtype=complex)
        for j in range(len(d.centers)):
            r_lo = d.budget.r_floor * d.chart_radius[j]
            block = d.polar_block(j, r_lo, d.chart_radius[j])
            e_phi, _ = ev.fields_on_block(block)
            Q = q_basis_values(config, block.z)
            G += np.einsum("ik,jk,k->ij", Q, Q.conj(), block.w / e_phi)
            ring = d.ring(j, r_lo, 64)
            e_ring, _ = ev.fields_on_block(ring)
            Qr = q_basis_values(config, ring.z)
            means = np.einsum("ik,jk,k->ij", Qr, Qr.conj(), 1.0 / e_ring) / len(ring.z)
            orders_ij = pole_orders(j)[:, None] + pole_orders(j)[None, :]
            alpha = ev.orders.alphas[j]
            expo = 2.0 * alpha - orders_ij
            G += means * 2.0 * math.pi * r_lo**2 / (expo + 2.0)
        rho_lo = d.budget.r_floor / d.far_inner
        block = d.far_block(rho_lo, 1.0 / d.far_inner)
        e_phi, _ = ev.fields_on_block(block)
        Q = q_basis_values(config, block.z)
        G += np.einsum("ik,jk,k->ij", Q, Q.conj(), block.w / e_phi)
        ring = d.ring(None, 1.0 / rho_lo, 64)
        e_ring, _ = ev.fields_on_block(ring)
        Qr = q_basis_values(config, ring.z)
        vals = np.einsum("ik,jk,k->ij", Qr, Qr.conj(),
                         np.abs(ring.z) ** 4 / e_ring) / len(ring.z)
        G += vals * 2.0 * math.pi * rho_lo**2 / (2.0 * ev.orders.alphas[-1] - 2.0 + 2.0)
        return G

    G = polar_far_part(dom)
    for block in dom.background_blocks():
        e_phi, _ = ev.fields_on_block(block)
        Q = q_basis_values(config, block.z)
        G += np.einsum("ik,jk,k->ij", Q, Q.conj(), block.w / e_phi)
    G = 0.5 * (G + G.conj().T)
    if with_error:
        coarse = polar_far_part(PlanarDomain(config.finite_points, budget.coarse()))
        fine = polar_far_part(dom)
        est = np.abs(fine - coarse) + 1e-12 * np.abs(G)
    else:
        est = np.full((m, m), np.nan)
    ev_min = float(np.min(np.linalg.eigvalsh(G)))
    if ev_min <= 0:
        raise BudgetError(
            f"pairing matrix not positive definite (min eigenvalue {ev_min}); "
            "raise the quadrature budget"
        )
    return GramMatrix(matrix=G, error_estimate=est)


# ---------------------------------------------------------------------------
# d-bar inversion self-test
# ---------------------------------------------------------------------------


def dbar_solve(g_fun, z: complex, budget: QuadBudget | None = None,
               box_half: float = 6.0) -> complex:
    """Evaluate ``f(z) = integral g(zeta) R(zeta, z)`` by planar quadrature.

    Test scaffolding for the kernel: for ``g = d f0 / d z-bar`` of a smooth,
    rapidly decaying ``f0`` with ``f0(0) = f0(1) = 0`` this recovers ``f0``.
    The integrand has integrable simple poles at ``z``, 0 and 1, handled by
    polar charts; ``g`` must be negligible outside the box.
    """
    z = complex(z)
    centers = [z, 0.0 + 0j, 1.0 + 0j]
    if min(abs(centers[0] - centers[1]), abs(centers[0] - centers[2])) < 1e-3:
        raise ValidationError("evaluation point too close to 0 or 1 for the fixture")
    budget = budget or QuadBudget()
    dom = PlanarDomain(centers, budget, with_far=False)
    dom.box_half = box_half
    total = 0j
    for j in range(3):
        r_lo = 1e-10 * dom.chart_radius[j]
        block = dom.polar_block(j, r_lo, dom.chart_radius[j])
        vals = g_fun(block.z) * kernel_R(block.z, z)
        total += np.sum(block.w * vals)
    for block in dom.background_blocks():
        vals = g_fun(block.z) * kernel_R(block.z, z)
        total += np.sum(block.w * vals)
    return complex(total)


# ---------------------------------------------------------------------------
# theorem-style verifications
# ---------------------------------------------------------------------------

_CONVENTIONS = ("D G", "D^T G", "D conj(G)", "D^T conj(G)")


def _convention_products(D: np.ndarray, G: np.ndarray) -> dict:
    return {
        "D G": D @ G,
        "D^T G": D.T @ G,
        "D conj(G)": D @ G.conj(),
        "D^T conj(G)": D.T @ G.conj(),
    }


@dataclass
class CbarMetricReport:
    fd_step: float
    D: np.ndarray
    gram: GramMatrix
    metric: MetricMatrix
    residuals: dict                 # convention -> max-norm of 2 pi X - I
    convention: str
    residual: float
    diagonal_positive: bool


def verify_cbar_metric(config: Configuration, orders: OrderData, *,
                       fd_step: float = 1e-3, budget: QuadBudget | None = None,
                       rtol: float = DEFAULT_RTOL,
                       solver_kwargs: dict | None = None,
                       stencil: ModuliStencil | None = None,
                       evaluator: FieldEvaluator | None = None) -> CbarMetricReport:
    """Check ``d c / d z-bar`` against the inverse pairing matrix.

    The contraction ``2 pi D G`` must be the identity; since the source does
    not fix whether the derivative matrix enters transposed or conjugated,
    all four placements are evaluated and the best is recorded (they agree
    for one free modulus, where the product is a positive scalar).
    """
    if stencil is None:
        stencil = moduli_stencil(config, orders, fd_step=fd_step, budget=budget,
                                 rtol=rtol, with_action=False,
                                 solver_kwargs=solver_kwargs)
    if evaluator is None:
        res = solve_and_action(config, orders, guess=stencil.center.accessory.free,
                               rtol=rtol, want_action=False,
                               solver_kwargs=solver_kwargs)
        evaluator = res.evaluator
    D = stencil.c_zbar_derivative()
    gm = gram(evaluator, budget=budget)
    eye = np.eye(config.n - 3)
    residuals = {
        name: float(np.max(np.abs(2.0 * math.pi * X - eye)))
        for name, X in _convention_products(D, gm.matrix).items()
    }
    best = min(residuals, key=residuals.get)
    return CbarMetricReport(
        fd_step=stencil.fd_step,
        D=D,
        gram=gm,
        metric=MetricMatrix.from_gram(gm),
        residuals=residuals,
        convention=best,
        residual=residuals[best],
        diagonal_positive=bool(np.all(np.diag(D).real > 0)),
    )


@dataclass
class PotentialReport:
    fd_step: float
    S_center: float
    second_derivative: np.ndarray   # diagonal entries d^2 S / dz_i dzbar_i
    metric_diagonal: np.ndarray
    rel_mismatch: np.ndarray        # |(-d^2 S) - metric| / metric per index
    rel_mismatch_flipped: np.ndarray
    empirical_sign: int             # -1 means metric = -d^2 S (as in the corollary)

    @property
    def worst_rel_mismatch(self) -> float:
        return float(np.max(np.minimum(self.rel_mismatch, self.rel_mismatch_flipped)))


def verify_kahler_potential(config: Configuration, orders: OrderData, *,
                            fd_step: float = 2e-2, richardson: bool = True,
                            budget: QuadBudget | None = None,
                            ladder=DEFAULT_LADDER, rtol: float = DEFAULT_RTOL,
                            solver_kwargs: dict | None = None,
                            gram_matrix: GramMatrix | None = None) -> PotentialReport:
    """Compare ``-d^2 S / dz_i dzbar_i`` with the metric's diagonal entries.

    The mixed second derivative is the quarter Laplacian in the modulus, so
    one five-point stencil per index suffices.  The step is much larger than
    the gradient check's (second differences amplify the action's quadrature
    noise by ``1/h^2``); the remaining ``O(h^2)`` truncation is removed by a
    second stencil at half the step when ``richardson`` is set.
    """
    m = config.n - 3
    if m == 0:
        raise ValidationError("potential check needs at least one free modulus")
    center_res = solve_and_action(config, orders, budget=budget, ladder=ladder,
                                  rtol=rtol, solver_kwargs=solver_kwargs)
    S_c = center_res.action.value
    if gram_matrix is None:
        gram_matrix = gram(center_res.evaluator, budget=budget)
    metric = MetricMatrix.from_gram(gram_matrix)

    def laplacian(h):
        stencil = moduli_stencil(config, orders, fd_step=h, budget=budget,
                                 ladder=ladder, rtol=rtol, with_action=True,
                                 solver_kwargs=solver_kwargs, center=center_res.solve)
        out = np.empty(m)
        for i in range(m):
            S_sum = sum(stencil.actions[(i, tag)] for tag in ("+h", "-h", "+ih", "-ih"))
            out[i] = (S_sum - 4.0 * S_c) / (4.0 * h**2)
        return out

    lap = laplacian(fd_step)
    if richardson:
        lap = (4.0 * laplacian(fd_step / 2.0) - lap) / 3.0
    metric_diag = np.real(np.diag(metric.matrix))
    mismatch_minus = np.abs(-lap - metric_diag) / np.abs(metric_diag)
    mismatch_plus = np.abs(lap - metric_diag) / np.abs(metric_diag)
    sign = -1 if np.sum(mismatch_minus) <= np.sum(mismatch_plus) else 1
    return PotentialReport(
        fd_step=fd_step,
        S_center=S_c,
        second_derivative=lap,
        metric_diagonal=metric_diag,
        rel_mismatch=mismatch_minus,
        rel_mismatch_flipped=mismatch_plus,
        empirical_sign=sign,
    )
