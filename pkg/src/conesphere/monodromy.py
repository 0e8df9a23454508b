"""Monodromy of the Fuchsian equation and the accessory-parameter solver.

Monodromy matrices act on frames from the right: continuing a frame ``F``
around a closed loop based at ``b`` yields ``F . M``.  Matrix products
therefore compose left-to-right in traversal order, and the keyhole loops
around the finite marked points, composed in the angular order seen from a
base point below the configuration, multiply to the boundary circle of a
large disk.  The loop around infinity is that circle traversed clockwise, so
the full ordered product of all ``n`` generators is the identity (up to the
sign ambiguity of lifting to SL(2)).

The index-ordered generator list required by :class:`MonodromyRep` is obtained
from the geometric order by braid moves ``(A, B) -> (B, B^-1 A B)``, which
preserve the ordered product exactly and keep every factor a loop around its
original point.

A representation generated by elliptic elements is conjugate into SU(1,1) or
SU(2) iff there is an invariant Hermitian form; for an irreducible
representation the form is unique up to scale and its signature separates the
hyperbolic branch, signature (1,1), from the spherical one.  Reality of the
traces ``tr(g_i g_j)`` over a generating pair set is used as the residual the
solver drives to zero.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ReducibleError, SolverError, ValidationError
from .model import (
    AccessoryVector,
    Configuration,
    OrderData,
    StressTensor,
    complete_accessories,
)
from .transport import (
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    ArcSegment,
    LineSegment,
    Path,
    canonical_base_frame,
    choose_base_point,
    plan_path,
    _propagate_frame,
)


def default_clearance(config: Configuration) -> float:
    """0.4 times the minimum pairwise distance of the finite marked points."""
    return 0.4 * config.min_pairwise_distance()


def _inv2(M: np.ndarray) -> np.ndarray:
    a, b = M[0, 0], M[0, 1]
    c, d = M[1, 0], M[1, 1]
    det = a * d - b * c
    return np.array([[d, -b], [-c, a]], dtype=complex) / det


class LoopWorkspace:
    """Precomputed loop geometry for one configuration.

    The geometry (base point, legs, circles) depends only on the marked
    points, so it is built once and reused across all accessory values during
    a solve.
    """

    def __init__(self, config: Configuration, base: complex | None = None,
                 clearance: float | None = None):
        self.config = config
        self.clearance = clearance if clearance is not None else default_clearance(config)
        if base is None:
            base = choose_base_point(config, self.clearance)
        self.base = complex(base)
        pts = config.finite_points
        self.loop_radius = self.clearance
        self.legs = []
        self.circles = []
        for z in pts:
            direction = (self.base - z) / abs(self.base - z)
            entry = z + self.loop_radius * direction
            self.legs.append(Path((LineSegment(self.base, entry),)))
            th = cmath.phase(entry - z)
            self.circles.append(Path((ArcSegment(z, self.loop_radius, th, th + 2 * math.pi),)))
        centroid = sum(pts) / len(pts)
        big_r = abs(self.base - centroid)
        margin = big_r - max(abs(z - centroid) for z in pts)
        if margin < self.clearance:
            raise ValidationError("base point too close to the configuration for the outer loop")
        th_b = cmath.phase(self.base - centroid)
        # Clockwise outer circle: positively oriented around infinity.
        self.outer_circle = Path((ArcSegment(centroid, big_r, th_b, th_b - 2 * math.pi),))
        # Composition order: sort finite points by descending angle seen from
        # the base (left to right when viewed from below).
        angles = [cmath.phase(z - self.base) for z in pts]
        self.geometric_order = sorted(range(len(pts)), key=lambda i: -angles[i])
        self.base_frame = canonical_base_frame(self.base)

    def finite_loop_matrices(self, tensor: StressTensor, rtol: float = DEFAULT_RTOL,
                             atol: float = DEFAULT_ATOL) -> list[np.ndarray]:
        """Monodromy of the keyhole loop around each finite point (index order)."""
        q = tensor.q_scalar_factory()
        eye = np.eye(2, dtype=complex)
        F = self.base_frame.frame
        Finv = _inv2(F)
        out = []
        for leg, circle in zip(self.legs, self.circles):
            phi_leg = _propagate_frame(q, leg, eye, rtol, atol)
            phi_circ = _propagate_frame(q, circle, eye, rtol, atol)
            phi_loop = _inv2(phi_leg) @ phi_circ @ phi_leg
            out.append(Finv @ phi_loop @ F)
        return out

    def infinity_loop_matrix(self, tensor: StressTensor, rtol: float = DEFAULT_RTOL,
                             atol: float = DEFAULT_ATOL) -> np.ndarray:
        q = tensor.q_scalar_factory()
        phi = _propagate_frame(q, self.outer_circle, np.eye(2, dtype=complex), rtol, atol)
        F = self.base_frame.frame
        return _inv2(F) @ phi @ F


def braid_to_index_order(order: list[int], mats: list[np.ndarray]) -> list[np.ndarray]:
    """Reorder loop matrices from geometric to increasing-index order.

    Adjacent transpositions ``(A, B) -> (B, B^-1 A B)`` preserve the ordered
    product and conjugate the moved factor, so each output is still the
    monodromy of a simple loop around its point.
    """
    items = [[i, M] for i, M in zip(order, mats)]
    changed = True
    while changed:
        changed = False
        for k in range(len(items) - 1):
            iL, A = items[k]
            iR, B = items[k + 1]
            if iR < iL:
                items[k] = [iR, B]
                items[k + 1] = [iL, _inv2(B) @ A @ B]
                changed = True
    return [M for _, M in items]


@dataclass
class MonodromyRep:
    """Generators in index order (infinity last); ordered product is +-identity."""

    base_point: complex
    generators: list
    n_finite: int
    loop_order: str = "increasing index, infinity last"

    @property
    def finite(self) -> list:
        return self.generators[: self.n_finite]

    def product(self) -> np.ndarray:
        P = np.eye(2, dtype=complex)
        for g in self.generators:
            P = P @ g
        return P

    def product_identity_defect(self) -> float:
        """Distance of the ordered product from +-identity."""
        P = self.product()
        eye = np.eye(2)
        return float(min(np.max(np.abs(P - eye)), np.max(np.abs(P + eye))))


def loop_monodromy(tensor: StressTensor, i: int, base: complex | None = None,
                   rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Monodromy around marked point ``i`` (``n-1`` is infinity), det = 1.

    The loop is a keyhole from the base point: straight leg, one positively
    oriented circle of radius equal to the clearance, straight leg back.  For
    infinity it is the outer circle traversed clockwise.
    """
    ws = LoopWorkspace(tensor.config, base=base)
    if i == tensor.config.n - 1:
        return ws.infinity_loop_matrix(tensor, rtol)
    q = tensor.q_scalar_factory()
    eye = np.eye(2, dtype=complex)
    phi_leg = _propagate_frame(q, ws.legs[i], eye, rtol, DEFAULT_ATOL)
    phi_circ = _propagate_frame(q, ws.circles[i], eye, rtol, DEFAULT_ATOL)
    phi_loop = _inv2(phi_leg) @ phi_circ @ phi_leg
    F = ws.base_frame.frame
    return _inv2(F) @ phi_loop @ F


def monodromy_rep(tensor: StressTensor, base: complex | None = None,
                  rtol: float = DEFAULT_RTOL, include_infinity: bool = True,
                  workspace: LoopWorkspace | None = None) -> MonodromyRep:
    """All generators, braided into index order so the product is +-identity."""
    ws = workspace or LoopWorkspace(tensor.config, base=base)
    mats_index_order = ws.finite_loop_matrices(tensor, rtol)
    geo = [mats_index_order[i] for i in ws.geometric_order]
    braided = braid_to_index_order(list(ws.geometric_order), geo)
    gens = list(braided)
    if include_infinity:
        gens.append(ws.infinity_loop_matrix(tensor, rtol))
    return MonodromyRep(base_point=ws.base, generators=gens,
                        n_finite=len(braided))


def trace_pairs(n_finite: int, pair_set: str = "banded") -> list[tuple[int, int]]:
    """Deterministic generating pair set for the reality residual (0-based)."""
    if pair_set == "banded":
        return [(i, j) for i in range(n_finite) for j in range(i + 1, min(i + 3, n_finite))]
    if pair_set == "all":
        return [(i, j) for i in range(n_finite) for j in range(i + 1, n_finite)]
    raise ValidationError(f"unknown pair set {pair_set!r}")


def reality_residual(rep: MonodromyRep, pair_set: str = "banded") -> np.ndarray:
    """Imaginary parts of ``tr(g_i g_j)`` over the pair set.

    Individual traces ``tr g_i`` are fixed by the local exponents, so only
    products carry information; the vector vanishes iff the (irreducible)
    representation admits an invariant Hermitian form.
    """
    pairs = trace_pairs(rep.n_finite, pair_set)
    gens = rep.finite
    out = np.empty(len(pairs))
    for k, (i, j) in enumerate(pairs):
        out[k] = np.trace(gens[i] @ gens[j]).imag
    return out


def elliptic_fixed_points(M: np.ndarray) -> tuple[complex, complex]:
    """Fixed points of the Moebius action ``w -> (M00 w + M10)/(M01 w + M11)``.

    Returned with the in-disk point first when the magnitudes separate.
    Read-only diagnostic; the eigenvalue ratio is the rotation multiplier.
    """
    a, c = M[0, 0], M[0, 1]
    b, d = M[1, 0], M[1, 1]
    # c w^2 + (d - a) w - b = 0
    if abs(c) < 1e-15:
        w1 = b / (a - d) if abs(a - d) > 1e-15 else complex("inf")
        return w1, complex("inf")
    disc = cmath.sqrt((d - a) ** 2 + 4 * c * b)
    w1 = ((a - d) - disc) / (2 * c)
    w2 = ((a - d) + disc) / (2 * c)
    if abs(w1) > abs(w2):
        w1, w2 = w2, w1
    return w1, w2


# ---------------------------------------------------------------------------
# invariant Hermitian form
# ---------------------------------------------------------------------------

_HERM_BASIS = (
    np.array([[1, 0], [0, 0]], dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, 1j], [-1j, 0]], dtype=complex),
    np.array([[0, 0], [0, 1]], dtype=complex),
)


@dataclass
class HermitianForm:
    matrix: np.ndarray
    signature: str           # "(1,1)", "(+,+)" or "degenerate"
    residual: float          # max over generators of ||g* H g - H||
    nullspace_gap: float     # second-smallest singular value of the system


def conjugator_from_form(H: np.ndarray) -> np.ndarray:
    """Matrix ``C`` with ``H = C* J C`` for ``J = diag(1, -1)``.

    Requires signature (1,1); right-multiplying a frame by ``C^{-1}``
    conjugates the monodromy into U(1,1).
    """
    vals, vecs = np.linalg.eigh(H)
    if not (vals[0] < 0.0 < vals[1]):
        raise ValidationError(f"form is not of signature (1,1): eigenvalues {vals}")
    U = vecs[:, [1, 0]]
    return np.diag([math.sqrt(vals[1]), math.sqrt(-vals[0])]).astype(complex) @ U.conj().T


def disk_sheet_consistent(ws: LoopWorkspace, tensor: StressTensor,
                          H: np.ndarray, rtol: float = DEFAULT_RTOL) -> bool:
    """Whether the unitarized solution ratio stays on one side of the unit
    circle along the probes from the base to every loop entry point.

    For the geometric branch the developing map omits the unit circle, so the
    indicator ``|u2|^2 - |u1|^2`` of the conjugated frame keeps a single sign
    on the punctured plane.  Spurious solutions of the trace-reality system
    can be unitarizable with an indefinite form and still fail this: their
    ratio crosses the circle, so they define no smooth metric.
    """
    try:
        C = conjugator_from_form(H)
    except ValidationError:
        return False
    F0 = ws.base_frame.frame @ _inv2(C)
    q = tensor.q_scalar_factory()

    def indicator(F):
        return abs(F[0, 1]) ** 2 - abs(F[0, 0]) ** 2

    s0 = indicator(F0)
    if s0 == 0.0:
        return False
    for leg in ws.legs:
        Y = _propagate_frame(q, leg, F0, rtol, DEFAULT_ATOL)
        if indicator(Y) * s0 <= 0.0:
            return False
    return True


def invariant_form(rep: MonodromyRep, dim_tol: float = 1e-6) -> HermitianForm:
    """Solve ``g* H g = H`` over the generators for a Hermitian ``H``.

    The solution space must be one-dimensional (irreducibility); the returned
    form has unit Frobenius norm and nonnegative (1,1) entry.
    """
    def coords(E):
        return (E[0, 0].real, E[0, 1].real, E[0, 1].imag, E[1, 1].real)
    blocks = []
    for g in rep.generators:
        gh = g.conj().T
        # column k: real coordinates of g* E_k g - E_k, so that A x = 0 is the
        # invariance equation for H = sum_k x_k E_k
        block = np.array([coords(gh @ E @ g - E) for E in _HERM_BASIS]).T
        blocks.append(block)
    A = np.vstack(blocks)
    _, s, Vt = np.linalg.svd(A)
    if s[-2] < dim_tol * s[0]:
        raise ReducibleError(
            "invariant-form solution space is not one-dimensional "
            f"(singular values {s})"
        )
    x = Vt[-1]
    H = x[0] * _HERM_BASIS[0] + x[1] * _HERM_BASIS[1] + x[2] * _HERM_BASIS[2] + x[3] * _HERM_BASIS[3]
    H = 0.5 * (H + H.conj().T)
    H /= np.linalg.norm(H)
    # Fix the overall sign.
    if H[0, 0].real < 0:
        H = -H
    elif abs(H[0, 0]) < 1e-12 and np.trace(H).real < 0:
        H = -H
    ev = np.linalg.eigvalsh(H)
    thr = 1e-10
    if ev[0] > thr and ev[1] > thr:
        sig = "(+,+)"
    elif ev[0] < -thr and ev[1] > thr:
        sig = "(1,1)"
    else:
        sig = "degenerate"
    resid = max(
        float(np.max(np.abs(g.conj().T @ H @ g - H))) for g in rep.generators
    )
    return HermitianForm(matrix=H, signature=sig, residual=resid, nullspace_gap=float(s[-2] / s[0]))


# ---------------------------------------------------------------------------
# accessory solver
# ---------------------------------------------------------------------------


@dataclass
class SolveReport:
    accessory: AccessoryVector
    residual_norm: float
    residual_inf: float
    iterations: int
    converged: bool
    status: str                      # success | wrong_branch | max_iter | stalled
    signature: str | None = None
    condition: float | None = None
    base_point: complex | None = None
    form: HermitianForm | None = None
    message: str = ""

    def raise_for_status(self):
        if not self.converged:
            raise SolverError(f"accessory solve failed: {self.status} ({self.message})")
        return self


def _pack(free) -> np.ndarray:
    c = np.asarray(free, dtype=complex)
    return np.concatenate([c.real, c.imag])


def _unpack(x: np.ndarray) -> np.ndarray:
    m = len(x) // 2
    return x[:m] + 1j * x[m:]


def solve_accessory(config: Configuration, orders: OrderData, guess=None, *,
                    rtol: float = DEFAULT_RTOL, tol: float = 1e-9,
                    max_iter: int = 60, fd_step: float = 1e-6,
                    pair_set: str = "banded", base: complex | None = None,
                    allow_continuation: bool = True,
                    workspace: LoopWorkspace | None = None) -> SolveReport:
    """Find accessory parameters making the monodromy unitarizable.

    Damped least squares on the reality residual, with the Jacobian from
    forward differences in the real and imaginary parts of each free value.
    On success the invariant form must have signature (1,1); a definite form
    means the solver landed on the spherical branch and the report says so.
    """
    m = config.n - 3
    ws = workspace or LoopWorkspace(config, base=base)

    def residual_of(x):
        tensor = StressTensor(config, orders,
                              complete_accessories(config, orders, _unpack(x)))
        rep = monodromy_rep(tensor, rtol=rtol, include_infinity=False, workspace=ws)
        return reality_residual(rep, pair_set)

    def finish(x, iterations, status_if_ok, rnorm, rinf, cond):
        tensor = StressTensor(config, orders,
                              complete_accessories(config, orders, _unpack(x)))
        rep = monodromy_rep(tensor, rtol=rtol, include_infinity=True, workspace=ws)
        try:
            form = invariant_form(rep)
            sig = form.signature
        except ReducibleError as exc:
            return SolveReport(tensor.accessory, rnorm, rinf, iterations, False,
                               "reducible", None, cond, ws.base, None, str(exc))
        ok = status_if_ok == "success"
        if ok and sig != "(1,1)":
            return SolveReport(tensor.accessory, rnorm, rinf, iterations, False,
                               "wrong_branch", sig, cond, ws.base, form,
                               f"invariant form signature {sig}")
        if ok and not disk_sheet_consistent(ws, tensor, form.matrix, rtol):
            # unitarizable but not geometric: the solution ratio crosses the
            # unit circle, so it cannot be a developing map of a metric
            return SolveReport(tensor.accessory, rnorm, rinf, iterations, False,
                               "wrong_branch", sig, cond, ws.base, form,
                               "spurious unitarizable branch (sheet indicator flips)")
        return SolveReport(tensor.accessory, rnorm, rinf, iterations, ok,
                           status_if_ok, sig, cond, ws.base, form)

    if m == 0:
        r = residual_of(np.zeros(0))
        rnorm = float(np.linalg.norm(r))
        rinf = float(np.max(np.abs(r))) if len(r) else 0.0
        return finish(np.zeros(0), 0, "success", rnorm, rinf, None)

    if guess is None:
        guess = [0j] * m
    x = _pack(guess)

    report = _levenberg(residual_of, x, tol=tol, max_iter=max_iter, fd_step=fd_step)
    x, r, iterations, status, cond = report
    rnorm = float(np.linalg.norm(r))
    rinf = float(np.max(np.abs(r)))
    if status == "success":
        final = finish(x, iterations, "success", rnorm, rinf, cond)
        if final.converged or not allow_continuation:
            return final
    elif not allow_continuation:
        return finish(x, iterations, status, rnorm, rinf, cond)

    # Continuation fallback: walk in a straight segment of moduli space from a
    # balanced configuration where the zero guess lands on the geometric
    # branch, re-checking the branch after every substep (the reality system
    # has spurious roots that a large step can hop onto).
    start_free = tuple((k + 1) / (config.n - 2) + 0j for k in range(m))
    target_free = config.free_points
    c_prev = [0j] * m
    t_done = 0.0
    step = 0.25
    iter_total = iterations
    while t_done < 1.0:
        step = min(step, 1.0 - t_done, 0.25)
        if step < 1e-4:
            return SolveReport(
                complete_accessories(config, orders, c_prev),
                math.inf, math.inf, iter_total, False, "stalled",
                None, None, ws.base, None,
                "continuation step underflow",
            )
        t_try = t_done + step
        free_pts = tuple((1 - t_try) * s + t_try * z
                         for s, z in zip(start_free, target_free))
        try:
            cfg_t = Configuration(free_pts)
            ws_t = ws if t_try == 1.0 else LoopWorkspace(cfg_t)

            def resid_t(xx, cfg_t=cfg_t, ws_t=ws_t):
                tensor = StressTensor(cfg_t, orders,
                                      complete_accessories(cfg_t, orders, _unpack(xx)))
                rep = monodromy_rep(tensor, rtol=rtol, include_infinity=False,
                                    workspace=ws_t)
                return reality_residual(rep, pair_set)

            xx, rr, its, st, cond = _levenberg(resid_t, _pack(c_prev), tol=tol,
                                               max_iter=max_iter, fd_step=fd_step)
            iter_total += its
            if st != "success":
                raise SolverError("continuation substep failed")
            tensor_t = StressTensor(cfg_t, orders,
                                    complete_accessories(cfg_t, orders, _unpack(xx)))
            rep_t = monodromy_rep(tensor_t, rtol=rtol, include_infinity=True,
                                  workspace=ws_t)
            form_t = invariant_form(rep_t)
            if form_t.signature != "(1,1)" or not disk_sheet_consistent(
                    ws_t, tensor_t, form_t.matrix, rtol):
                raise SolverError("continuation substep left the geometric branch")
        except (SolverError, ValidationError, ReducibleError):
            step *= 0.5
            continue
        c_prev = list(_unpack(xx))
        t_done = t_try
        step *= 1.7
    rnorm = float(np.linalg.norm(rr))
    rinf = float(np.max(np.abs(rr)))
    return finish(xx, iter_total, "success", rnorm, rinf, cond)


def _levenberg(residual_fn, x0: np.ndarray, *, tol: float, max_iter: int,
               fd_step: float):
    """Levenberg-style damped least squares; returns (x, r, iters, status, cond)."""
    x = np.array(x0, dtype=float)
    r = residual_fn(x)
    rnorm = np.linalg.norm(r)
    lam = 1e-3
    cond = None
    for it in range(1, max_iter + 1):
        if rnorm < tol:
            return x, r, it - 1, "success", cond
        J = np.empty((len(r), len(x)))
        for k in range(len(x)):
            xk = x.copy()
            xk[k] += fd_step
            J[:, k] = (residual_fn(xk) - r) / fd_step
        cond = float(np.linalg.cond(J)) if J.size else 0.0
        JTJ = J.T @ J
        g = J.T @ r
        accepted = False
        for _ in range(10):
            A = JTJ + lam * np.diag(np.maximum(np.diag(JTJ), 1e-30))
            try:
                delta = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_try = x + delta
            r_try = residual_fn(x_try)
            n_try = np.linalg.norm(r_try)
            if n_try < rnorm:
                x, r, rnorm = x_try, r_try, n_try
                lam = max(lam / 3, 1e-13)
                accepted = True
                break
            lam *= 10
        if not accepted:
            if rnorm < tol:
                return x, r, it, "success", cond
            return x, r, it, "stalled", cond
    status = "success" if rnorm < tol else "max_iter"
    return x, r, max_iter, status, cond
