"""Domain model for hyperbolic cone spheres.

Conventions used throughout the package:

* A configuration of ``n >= 3`` marked points on the Riemann sphere is
  normalized so that the last three points are ``0, 1, infinity``.  Only the
  first ``n - 3`` points are free moduli.  Index ``i`` runs over
  ``[w_1, ..., w_{n-3}, 0, 1, infinity]`` in that order, so ``i = n - 1``
  (0-based) always refers to the point at infinity.
* Each marked point carries a real order ``alpha_i < 1`` with
  ``sum(alpha_i) > 2``; its conformal weight is ``h_i = alpha_i*(2 - alpha_i)``.
* The quadratic differential ``T(z)`` attached to a configuration has double
  poles with leading coefficient ``h_i/2`` and simple poles with residues
  ``c_i`` (the accessory parameters) at the finite marked points, and behaves
  as ``h_n/(2 z^2) + c_n/z^3 + O(z^-4)`` at infinity.  That decay imposes
  three linear relations on ``c_1, ..., c_n``, which makes the values at
  ``0``, ``1`` and ``infinity`` explicit functions of the free ones.

All types here are immutable value objects; every operation is pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, ValidationError

#: Finite marked points closer than this are rejected outright: every
#: downstream algorithm (seeds, loops, quadrature) degrades unboundedly there.
MIN_SEPARATION = 1e-9

#: Distance below which evaluating T(z) counts as hitting a pole.
POLE_EPS = 1e-12


@dataclass(frozen=True)
class OrderData:
    """Validated singularity orders and their conformal weights.

    Attributes
    ----------
    alphas : tuple of float
        Orders ``alpha_i`` of all ``n`` marked points, infinity last.
    weights : tuple of float
        Weights ``h_i = alpha_i*(2 - alpha_i)``.
    metric_grade : bool
        True iff every ``alpha_i`` lies in ``(0, 1)``; required by the
        moduli-space metric (weights all positive).
    """

    alphas: tuple[float, ...]
    weights: tuple[float, ...]
    metric_grade: bool

    @property
    def n(self) -> int:
        return len(self.alphas)

    @property
    def total(self) -> float:
        return float(sum(self.alphas))


def validate_orders(alphas) -> OrderData:
    """Validate a sequence of orders and compute the weight data.

    Requires ``alpha_i < 1`` for all i and ``sum(alpha_i) > 2``; the flag
    ``metric_grade`` is set iff additionally all orders are positive.
    """
    alphas = tuple(float(a) for a in alphas)
    if len(alphas) < 3:
        raise ValidationError(f"need at least 3 orders, got {len(alphas)}")
    for i, a in enumerate(alphas):
        if not np.isfinite(a):
            raise ValidationError(f"order {i} is not finite")
        if a >= 1.0:
            raise ValidationError(f"order {i} is {a}, but every order must be < 1")
    total = sum(alphas)
    if total <= 2.0:
        raise ValidationError(f"sum of orders is {total}, but must exceed 2")
    weights = tuple(a * (2.0 - a) for a in alphas)
    metric_grade = all(a > 0.0 for a in alphas)
    return OrderData(alphas=alphas, weights=weights, metric_grade=metric_grade)


@dataclass(frozen=True)
class Configuration:
    """Marked points ``[w_1..w_{n-3}, 0, 1, infinity]`` with free moduli first."""

    free_points: tuple[complex, ...]

    def __post_init__(self):
        pts = tuple(complex(w) for w in self.free_points)
        object.__setattr__(self, "free_points", pts)
        finite = pts + (0j, 1 + 0j)
        for i in range(len(finite)):
            for k in range(i + 1, len(finite)):
                if abs(finite[i] - finite[k]) < MIN_SEPARATION:
                    raise ValidationError(
                        f"marked points {finite[i]} and {finite[k]} are closer "
                        f"than {MIN_SEPARATION}"
                    )

    @property
    def n(self) -> int:
        return len(self.free_points) + 3

    @property
    def finite_points(self) -> tuple[complex, ...]:
        """All finite marked points, i.e. everything except infinity."""
        return self.free_points + (0j, 1 + 0j)

    def min_pairwise_distance(self) -> float:
        pts = self.finite_points
        return min(
            abs(pts[i] - pts[k])
            for i in range(len(pts))
            for k in range(i + 1, len(pts))
        )

    def replaced(self, free_index: int, value: complex) -> "Configuration":
        """Copy with one free point moved (used by finite-difference stencils)."""
        pts = list(self.free_points)
        pts[free_index] = complex(value)
        return Configuration(tuple(pts))


@dataclass(frozen=True)
class AccessoryVector:
    """Accessory parameters: free values plus the three dependent ones.

    ``free[i]`` sits at the free point ``w_{i+1}``; ``c_zero``, ``c_one`` and
    ``c_infinity`` are determined by the decay of ``T`` at infinity.
    """

    free: tuple[complex, ...]
    c_zero: complex
    c_one: complex
    c_infinity: complex

    @property
    def finite(self) -> tuple[complex, ...]:
        """Residues at the finite points, ordered like ``finite_points``."""
        return self.free + (self.c_zero, self.c_one)

    def relation_residuals(self, config: Configuration, orders: OrderData):
        """Residuals of the three linear relations (should vanish)."""
        pts = config.finite_points
        c = self.finite
        h = orders.weights
        r1 = sum(c)
        r2 = sum(h[i] + 2 * c[i] * pts[i] for i in range(len(pts))) - h[-1]
        r3 = sum(h[i] * pts[i] + c[i] * pts[i] ** 2 for i in range(len(pts))) - self.c_infinity
        return (r1, r2, r3)


def complete_accessories(config: Configuration, orders: OrderData, free) -> AccessoryVector:
    """Fill in the dependent accessory values from the free ones.

    The decay ``T(z) = h_n/(2 z^2) + c_n/z^3 + O(z^-4)`` forces::

        sum c_i = 0
        sum (h_i + 2 c_i z_i) = h_n          (over finite points)
        sum (h_i z_i + c_i z_i^2) = c_n

    With ``z = 0`` and ``z = 1`` among the finite points these give the values
    at 1, at 0, and at infinity, in that order.
    """
    free = tuple(complex(c) for c in free)
    if orders.n != config.n:
        raise ValidationError(f"orders for {orders.n} points but configuration has {config.n}")
    if len(free) != config.n - 3:
        raise ValidationError(f"expected {config.n - 3} free accessory values, got {len(free)}")
    h = orders.weights
    w = config.free_points
    h_finite_sum = sum(h[:-1])
    # Relation 2: sum over finite points of c_i z_i = (h_n - sum h_i)/2; only
    # the free points and z = 1 contribute on the left.
    c_one = (h[-1] - h_finite_sum) / 2.0 - sum(c * z for c, z in zip(free, w))
    # Relation 1.
    c_zero = -sum(free) - c_one
    # Relation 3.
    c_inf = (
        sum(h[i] * w[i] + free[i] * w[i] ** 2 for i in range(len(w)))
        + h[len(w) + 1]  # weight at z = 1
        + c_one
    )
    return AccessoryVector(free=free, c_zero=c_zero, c_one=c_one, c_infinity=c_inf)


@dataclass(frozen=True)
class StressTensor:
    """Pole data of ``T(z)`` bundled for evaluation.

    ``T(z) = sum_i [h_i/(2 (z - z_i)^2) + c_i/(z - z_i)]`` over the finite
    marked points.  The ODE potential used elsewhere is ``q = T/2``.
    """

    config: Configuration
    orders: OrderData
    accessory: AccessoryVector

    @cached_property
    def _pole_data(self):
        pts = np.asarray(self.config.finite_points, dtype=complex)
        h = np.asarray(self.orders.weights[:-1], dtype=float)
        c = np.asarray(self.accessory.finite, dtype=complex)
        return pts, h, c

    def __call__(self, z: complex) -> complex:
        return self.eval(z)

    def eval(self, z: complex) -> complex:
        """Evaluate ``T`` at a single point away from the poles."""
        pts, h, c = self._pole_data
        dz = complex(z) - pts
        if np.min(np.abs(dz)) < POLE_EPS:
            raise DomainError(f"T evaluated at a pole: z = {z}")
        return complex(np.sum(h / (2.0 * dz**2) + c / dz))

    def eval_many(self, z: np.ndarray) -> np.ndarray:
        """Vectorized ``T`` without pole checks (callers guarantee clearance)."""
        pts, h, c = self._pole_data
        dz = np.asarray(z, dtype=complex)[..., None] - pts
        return np.sum(h / (2.0 * dz**2) + c / dz, axis=-1)

    def q_scalar_factory(self):
        """Return a fast scalar ``q(z) = T(z)/2`` using native complex arithmetic."""
        pts, h, c = self._pole_data
        data = tuple((complex(p), float(hh) / 4.0, complex(cc) / 2.0)
                     for p, hh, cc in zip(pts, h, c))

        def q(z):
            acc = 0j
            for p, h4, c2 in data:
                d = z - p
                acc += h4 / (d * d) + c2 / d
            return acc

        return q

    def q_batch_factory(self):
        """Vectorized ``q(z) = T(z)/2`` over numpy arrays."""
        pts, h, c = self._pole_data
        h4 = h / 4.0
        c2 = c / 2.0

        def q(z):
            dz = z[..., None] - pts
            return np.sum(h4 / dz**2 + c2 / dz, axis=-1)

        return q

    # -- local expansions of the potential q = T/2 ---------------------------

    def q_taylor_at(self, i: int, count: int) -> np.ndarray:
        """Taylor coefficients ``q_0..q_{count-1}`` of the regular part of ``q``
        around the finite point ``z_i`` (the full Laurent series starts with
        ``h_i/4 * t^-2 + c_i/2 * t^-1``, ``t = z - z_i``)."""
        pts, h, c = self._pole_data
        zi = pts[i]
        out = np.zeros(count, dtype=complex)
        for j in range(len(pts)):
            if j == i:
                continue
            d = zi - pts[j]
            m = np.arange(count)
            sign = (-1.0) ** m
            out += h[j] / 4.0 * (m + 1) * sign / d ** (m + 2)
            out += c[j] / 2.0 * sign / d ** (m + 1)
        return out

    def q_taylor_at_infinity(self, count: int) -> np.ndarray:
        """Taylor coefficients of the regular part of the pulled-back potential.

        In the chart ``t = 1/z`` the equation ``u'' + q u = 0`` becomes
        ``v'' + q~ v = 0`` for ``v(t) = t * u(1/t)`` with
        ``q~(t) = q(1/t)/t^4``.  The Laurent series of ``q~`` starts with
        ``h_n/4 * t^-2 + c_n/2 * t^-1``; this returns the ``t^0, t^1, ...``
        coefficients.
        """
        pts, h, c = self._pole_data
        out = np.zeros(count, dtype=complex)
        p = np.arange(count)
        for j in range(len(pts)):
            out += h[j] * (p + 3) * pts[j] ** (p + 2) / 4.0
            out += c[j] * pts[j] ** (p + 3) / 2.0
        return out

    def laurent_head(self, i: int) -> tuple[float, complex]:
        """Leading Laurent data ``(h_i/4, c_i/2)`` of ``q`` at a marked point.

        ``i`` indexes all points including infinity (``i = n - 1``), in which
        case the data refers to the ``1/z`` chart.
        """
        if i == self.config.n - 1:
            return self.orders.weights[-1] / 4.0, complex(self.accessory.c_infinity) / 2.0
        pts, h, c = self._pole_data
        return h[i] / 4.0, complex(c[i]) / 2.0


def stress_tensor(config: Configuration, orders: OrderData, free) -> StressTensor:
    """Convenience constructor: complete the accessory vector and bundle."""
    acc = complete_accessories(config, orders, free)
    return StressTensor(config=config, orders=orders, accessory=acc)


def t_phi_eval(tensor: StressTensor, z: complex) -> complex:
    """Evaluate the quadratic differential ``T`` at a point (pole-checked)."""
    return tensor.eval(z)
