"""Planar quadrature adapted to isolated power-law singularities.

The plane is covered by a smooth partition of unity: one radial bump around
each finite marked point, one around infinity, and the leftover background.
Each weight is integrated in its natural chart:

* polar coordinates around each marked point, with geometrically graded
  radial panels (Gauss-Legendre per panel, uniform trapezoid in angle, which
  is spectrally accurate for periodic integrands);
* polar coordinates in ``1/z`` for the far region, with the measure Jacobian
  ``1/|zeta|^4`` folded into the weights;
* tensor Gauss-Legendre patches on a bounding box for the smooth, compactly
  supported background weight.

Charts overlap but the weights sum to one exactly, so block sums add up to
the plane integral; there is no cell clipping, and node positions and weights
vary smoothly with the marked points, which keeps quadrature error smooth
across finite-difference stencils in the moduli.

Excluding disks ``|z - z_i| < eps`` and ``|z| > 1/eps`` only truncates the
radial range of the polar charts (the bumps are identically one there), so
regularized domains are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError

_LEG_CACHE: dict = {}


def gauss_nodes(p: int):
    if p not in _LEG_CACHE:
        _LEG_CACHE[p] = np.polynomial.legendre.leggauss(p)
    return _LEG_CACHE[p]


def smooth_step(t):
    """Degree-11 polynomial step: 1 for t <= 0, 0 for t >= 1, C^5 joints.

    A polynomial profile keeps the partition weights easy to integrate: panel
    edges are aligned with the joints, so each radial panel sees an analytic
    integrand, and background patches see a C^5 function with moderate
    derivatives (an exponential bump would defeat Gauss rules, and low-order
    joints make the patch error oscillate as the moduli move).
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return 1.0 - t**6 * (
        462.0 - 1980.0 * t + 3465.0 * t**2 - 3080.0 * t**3 + 1386.0 * t**4 - 252.0 * t**5
    )


@dataclass(frozen=True)
class QuadBudget:
    """Node counts for the planar quadrature; the accuracy knob."""

    n_theta: int = 64
    p_rad: int = 12
    panel_ratio: float = 2.0
    bg_div: int = 10
    bg_order: int = 10
    bg_refine_depth: int = 3
    contour_nodes: int = 256
    r_floor: float = 1e-12   # innermost radius, relative to the chart radius

    def coarse(self) -> "QuadBudget":
        return replace(
            self,
            n_theta=max(16, self.n_theta // 2),
            p_rad=max(4, self.p_rad - 4),
            contour_nodes=max(32, self.contour_nodes // 2),
        )

    def key(self) -> tuple:
        return (
            self.n_theta, self.p_rad, self.panel_ratio, self.bg_div,
            self.bg_order, self.bg_refine_depth, self.contour_nodes, self.r_floor,
        )


_PRESETS = {
    "low": QuadBudget(n_theta=32, p_rad=8, bg_div=8, bg_order=8,
                      bg_refine_depth=1, contour_nodes=128, r_floor=1e-10),
    "default": QuadBudget(),
    "high": QuadBudget(n_theta=96, p_rad=16, bg_div=12, bg_order=12,
                       bg_refine_depth=2, contour_nodes=384),
}


def budget_preset(name: str) -> QuadBudget:
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown budget preset {name!r}") from None


@dataclass
class NodeBlock:
    """Quadrature nodes with plane-measure weights (partition factor included)."""

    key: tuple
    z: np.ndarray
    w: np.ndarray
    kind: str                       # "polar" | "far" | "background" | "ring"
    center_index: int | None = None
    anchor: complex | None = None


class PlanarDomain:
    """Chart geometry and partition of unity for one set of finite centers."""

    def __init__(self, centers, budget: QuadBudget | None = None, with_far: bool = True):
        self.centers = np.asarray(centers, dtype=complex)
        if len(self.centers) < 1:
            raise ValidationError("need at least one center")
        self.budget = budget or QuadBudget()
        m = len(self.centers)
        if m == 1:
            nearest = np.array([2.0 * max(1.0, abs(self.centers[0]))])
        else:
            sep = np.abs(self.centers[:, None] - self.centers[None, :])
            np.fill_diagonal(sep, np.inf)
            nearest = sep.min(axis=1)
        self.nearest = nearest
        self.chart_radius = 0.45 * nearest          # b_i: outer edge of each bump
        self.bump_inner = 0.4 * self.chart_radius   # a_i: bump is 1 inside this
        self.with_far = with_far
        maxabs = max(1.0, float(np.max(np.abs(self.centers))))
        self.far_inner = 2.3 * maxabs               # A: far bump is 0 inside
        self.far_outer = 1.45 * self.far_inner      # B: far bump is 1 outside
        self.box_half = 1.02 * self.far_outer

    # -- partition of unity -------------------------------------------------

    def chi_center(self, i: int, r):
        a, b = self.bump_inner[i], self.chart_radius[i]
        return smooth_step((np.asarray(r, dtype=float) - a) / (b - a))

    def chi_far(self, absz):
        if not self.with_far:
            return np.zeros_like(np.asarray(absz, dtype=float))
        A, B = self.far_inner, self.far_outer
        return smooth_step((B - np.asarray(absz, dtype=float)) / (B - A))

    def chi_background(self, z):
        z = np.asarray(z, dtype=complex)
        total = np.ones(z.shape, dtype=float)
        for i in range(len(self.centers)):
            total -= self.chi_center(i, np.abs(z - self.centers[i]))
        total -= self.chi_far(np.abs(z))
        return total

    # -- blocks ---------------------------------------------------------------

    def _radial_panels(self, r_lo: float, r_hi: float, splice: tuple | None = None):
        """Descending panel edges: geometric grading, with the partition
        transition interval (if it intersects the range) split into aligned
        panels so no panel straddles a joint of the step profile."""
        if not (0.0 < r_lo < r_hi * (1 + 1e-12)):
            raise ValidationError(f"bad radial range [{r_lo}, {r_hi}]")
        ratio = self.budget.panel_ratio

        def geometric(lo, hi):
            edges = [hi]
            while edges[-1] > lo * ratio:
                edges.append(edges[-1] / ratio)
            edges.append(lo)
            return edges

        if splice is None:
            return geometric(r_lo, r_hi)
        ta, tb = splice
        if r_hi <= ta or r_lo >= tb:
            return geometric(r_lo, r_hi)
        edges = []
        if r_hi > tb:
            edges.extend(geometric(tb, r_hi)[:-1])
        hi_t = min(r_hi, tb)
        lo_t = max(r_lo, ta)
        k = 2
        edges.extend(hi_t - (hi_t - lo_t) * np.arange(k) / k)
        edges.append(lo_t)
        if r_lo < ta:
            edges.extend(geometric(r_lo, ta)[1:])
        return edges

    def polar_block(self, i: int, r_lo: float, r_hi: float) -> NodeBlock:
        """Nodes for ``chi_i * g`` over ``r_lo <= |z - z_i| <= r_hi``."""
        bud = self.budget
        xg, wg = gauss_nodes(bud.p_rad)
        edges = self._radial_panels(r_lo, r_hi,
                                    splice=(self.bump_inner[i], self.chart_radius[i]))
        rs = []
        ws = []
        for hi, lo in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
            rs.append(mid + half * xg)
            ws.append(half * wg)
        r = np.concatenate(rs)
        wr = np.concatenate(ws)
        th = 2.0 * np.pi * (np.arange(bud.n_theta) + 0.5) / bud.n_theta
        dth = 2.0 * np.pi / bud.n_theta
        zz = self.centers[i] + r[:, None] * np.exp(1j * th)[None, :]
        weight = (wr * r * self.chi_center(i, r))[:, None] * np.full(bud.n_theta, dth)
        key = ("polar", i, round(r_lo, 16), round(r_hi, 16), bud.key())
        return NodeBlock(key=key, z=zz.ravel(), w=weight.ravel(), kind="polar",
                         center_index=i)

    def far_block(self, rho_lo: float, rho_hi: float) -> NodeBlock:
        """Nodes for ``chi_far * g`` over ``1/rho_hi <= |z| <= 1/rho_lo``.

        Weights are plane-measure: the ``1/|zeta|^4`` Jacobian of ``z = 1/zeta``
        is included, so ``sum(w * g(z))`` approximates the z-plane integral.
        """
        bud = self.budget
        if not self.with_far:
            raise ValidationError("domain built without a far chart")
        xg, wg = gauss_nodes(bud.p_rad)
        edges = self._radial_panels(rho_lo, rho_hi,
                                    splice=(1.0 / self.far_outer, 1.0 / self.far_inner))
        rs, ws = [], []
        for hi, lo in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
            rs.append(mid + half * xg)
            ws.append(half * wg)
        rho = np.concatenate(rs)
        wrho = np.concatenate(ws)
        th = 2.0 * np.pi * (np.arange(bud.n_theta) + 0.5) / bud.n_theta
        dth = 2.0 * np.pi / bud.n_theta
        zeta = rho[:, None] * np.exp(1j * th)[None, :]
        zz = 1.0 / zeta
        weight = (wrho * self.chi_far(1.0 / rho) / rho**3)[:, None] * np.full(
            self.budget.n_theta, dth
        )
        key = ("far", round(rho_lo, 16), round(rho_hi, 16), bud.key())
        return NodeBlock(key=key, z=zz.ravel(), w=weight.ravel(), kind="far")

    def ring(self, i: int | None, r: float, n_theta: int | None = None) -> NodeBlock:
        """Circle of nodes (equal angular weights summing to 2 pi) for tails
        and contour terms; ``i = None`` means the circle ``|z| = r`` around 0."""
        n = n_theta or self.budget.contour_nodes
        th = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        center = 0j if i is None else self.centers[i]
        zz = center + r * np.exp(1j * th)
        ww = np.full(n, 2.0 * np.pi / n)
        key = ("ring", i, round(r, 16), n)
        return NodeBlock(key=key, z=zz, w=ww, kind="ring", center_index=i)

    def background_blocks(self) -> list[NodeBlock]:
        """Gauss patches covering the support of the background weight."""
        bud = self.budget
        L = self.box_half
        xg, wg = gauss_nodes(bud.bg_order)
        size0 = 2.0 * L / bud.bg_div
        patches = []

        def needs_refine(cx, cy, half):
            corner = math.hypot(half, half)
            for k in range(len(self.centers)):
                d = abs(complex(cx, cy) - self.centers[k])
                lo, hi = d - corner, d + corner
                # fattened transition annulus; margins keep the decision
                # stable under small moduli moves
                if lo < 1.25 * self.chart_radius[k] and hi > 0.75 * self.bump_inner[k]:
                    return True
            return False

        def emit(cx, cy, half, depth):
            if depth < bud.bg_refine_depth and needs_refine(cx, cy, half):
                h2 = half / 2
                for sx in (-1, 1):
                    for sy in (-1, 1):
                        emit(cx + sx * h2, cy + sy * h2, h2, depth + 1)
                return
            patches.append((cx, cy, half))

        for ix in range(bud.bg_div):
            for iy in range(bud.bg_div):
                cx = -L + (ix + 0.5) * size0
                cy = -L + (iy + 0.5) * size0
                emit(cx, cy, size0 / 2, 0)

        blocks = []
        for pidx, (cx, cy, half) in enumerate(patches):
            xs = cx + half * xg
            ys = cy + half * xg
            wx = half * wg
            zz = (xs[:, None] + 1j * ys[None, :]).ravel()
            ww = (wx[:, None] * wx[None, :]).ravel()
            chi = self.chi_background(zz)
            keep = chi > 1e-280
            if not np.any(keep):
                continue
            zz = zz[keep]
            ww = ww[keep] * chi[keep]
            dist = np.min(np.abs(zz[:, None] - self.centers[None, :]), axis=1)
            anchor = zz[int(np.argmax(dist))]
            key = ("bg", pidx, round(cx, 14), round(cy, 14), round(half, 14), bud.key())
            blocks.append(NodeBlock(key=key, z=zz, w=ww, kind="background",
                                    anchor=anchor))
        return blocks

    def tail_integral(self, ring_mean: float, r: float, exponent: float) -> float:
        """Integral over the disk of radius ``r`` of an angular-mean power law.

        For ``g`` with angular mean ``ring_mean * (s/r)^exponent`` this is
        ``2 pi ring_mean r^2 / (exponent + 2)``; requires ``exponent > -2``.
        """
        if exponent <= -2.0:
            raise ValidationError("tail exponent must exceed -2 for integrability")
        return 2.0 * math.pi * ring_mean * r * r / (exponent + 2.0)
