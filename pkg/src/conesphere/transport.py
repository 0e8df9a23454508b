"""Analytic continuation of ``u'' + q(z) u = 0`` along paths in the plane.

The potential ``q = T/2`` has double poles at the marked points, so the
equation is integrated only along paths that keep a prescribed clearance from
them.  Fundamental frames are ``2 x 2`` matrices whose columns are ``(u, u')``
for two independent solutions; because the equation has no ``u'`` term the
Wronskian ``u1 u2' - u2 u1'`` is exactly constant along any path (Abel), which
is the main online accuracy check.

Local behaviour at a marked point of order ``alpha`` is captured by Frobenius
series: the indicial equation ``rho (rho - 1) + h/4 = 0`` with
``h = alpha (2 - alpha)`` has roots ``rho = 1 - alpha/2`` and ``alpha/2``,
whose difference ``1 - alpha`` is never a nonnegative integer for
``alpha in (0, 1)``.  The point at infinity is handled in the chart
``t = 1/z`` where ``v(t) = t u(1/t)`` satisfies the same kind of equation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PathError, SeriesError, UnsupportedOrderError, ValidationError
from .model import Configuration, StressTensor

#: Internal convention: frames are normalized to Wronskian 2i.  Nothing
#: observable depends on this common scale; it only pins cached frames.
FRAME_WRONSKIAN = 2j

DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-14

_SERIES_TOL = 1e-16
_SERIES_MAX_TERMS = 200


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LineSegment:
    a: complex
    b: complex

    @property
    def start(self) -> complex:
        return self.a

    @property
    def end(self) -> complex:
        return self.b

    @property
    def length(self) -> float:
        return abs(self.b - self.a)

    def point(self, t: float) -> complex:
        return self.a + t * (self.b - self.a)

    def velocity(self, t: float) -> complex:
        return self.b - self.a

    def reversed(self) -> "LineSegment":
        return LineSegment(self.b, self.a)

    def min_distance(self, p: complex) -> float:
        d = self.b - self.a
        L2 = (d * d.conjugate()).real
        if L2 == 0.0:
            return abs(p - self.a)
        t = ((p - self.a) * d.conjugate()).real / L2
        t = min(1.0, max(0.0, t))
        return abs(p - (self.a + t * d))


@dataclass(frozen=True)
class ArcSegment:
    """Circular arc ``center + radius * exp(i theta)``, theta from t0 to t1.

    Counterclockwise iff ``t1 > t0``; the sweep may exceed a full turn.
    """

    center: complex
    radius: float
    t0: float
    t1: float

    @property
    def start(self) -> complex:
        return self.center + self.radius * cmath.exp(1j * self.t0)

    @property
    def end(self) -> complex:
        return self.center + self.radius * cmath.exp(1j * self.t1)

    @property
    def length(self) -> float:
        return abs(self.t1 - self.t0) * self.radius

    def point(self, t: float) -> complex:
        th = self.t0 + t * (self.t1 - self.t0)
        return self.center + self.radius * cmath.exp(1j * th)

    def velocity(self, t: float) -> complex:
        th = self.t0 + t * (self.t1 - self.t0)
        return 1j * (self.t1 - self.t0) * self.radius * cmath.exp(1j * th)

    def reversed(self) -> "ArcSegment":
        return ArcSegment(self.center, self.radius, self.t1, self.t0)

    def min_distance(self, p: complex) -> float:
        rel = p - self.center
        r = abs(rel)
        lo, hi = min(self.t0, self.t1), max(self.t0, self.t1)
        if hi - lo >= 2 * math.pi:
            return abs(r - self.radius)
        ang = cmath.phase(rel)
        # Is the ray through p inside the swept sector (mod 2 pi)?
        k0 = math.ceil((lo - ang) / (2 * math.pi))
        if ang + 2 * math.pi * k0 <= hi:
            return abs(r - self.radius)
        return min(abs(p - self.start), abs(p - self.end))


@dataclass(frozen=True)
class Path:
    """Piecewise path made of line and arc segments."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValidationError("empty path")
        for s, snext in zip(segs, segs[1:]):
            if abs(s.end - snext.start) > 1e-9 * max(1.0, abs(s.end)):
                raise ValidationError("path segments are not contiguous")
        object.__setattr__(self, "segments", segs)

    @property
    def start(self) -> complex:
        return self.segments[0].start

    @property
    def end(self) -> complex:
        return self.segments[-1].end

    @property
    def length(self) -> float:
        return sum(s.length for s in self.segments)

    def reversed(self) -> "Path":
        return Path(tuple(s.reversed() for s in reversed(self.segments)))

    def min_distance(self, points) -> float:
        return min(s.min_distance(p) for s in self.segments for p in points)

    def vertices(self, per_segment: int = 16) -> np.ndarray:
        """Sample points along the path (for inspection and tests)."""
        ts = np.linspace(0.0, 1.0, per_segment, endpoint=False)
        pts = [s.point(t) for s in self.segments for t in ts]
        pts.append(self.end)
        return np.asarray(pts, dtype=complex)


def line_path(a: complex, b: complex) -> Path:
    return Path((LineSegment(a, b),))


def circle_path(center: complex, radius: float, start_angle: float, turns: float = 1.0) -> Path:
    """Full-circle (or partial) loop; positive turns are counterclockwise."""
    return Path((ArcSegment(center, radius, start_angle, start_angle + 2 * math.pi * turns),))


def plan_path(start: complex, end: complex, obstacles, clearance: float) -> Path:
    """Straight path from start to end with counterclockwise arc detours.

    Every obstacle closer than ``clearance`` to the straight segment is
    bypassed on an arc of radius ``clearance`` around it, swept
    counterclockwise.  Endpoints must themselves respect the clearance.
    """
    start = complex(start)
    end = complex(end)
    obstacles = [complex(p) for p in obstacles]
    if clearance <= 0:
        raise ValidationError("clearance must be positive")
    slack = 1.0 - 1e-12
    for p in obstacles:
        if abs(start - p) < clearance * slack or abs(end - p) < clearance * slack:
            raise PathError(
                f"path endpoint within clearance {clearance} of marked point {p}"
            )
    d = end - start
    L = abs(d)
    if L == 0.0:
        return Path((LineSegment(start, end),))
    u = d / L

    # Obstacles that actually obstruct the open segment, by arclength position.
    hits = []
    for p in obstacles:
        s = ((p - start) * u.conjugate()).real  # projection onto the segment
        if s <= 0.0 or s >= L:
            continue
        perp = abs(p - (start + s * u))
        if perp < clearance * (1.0 - 1e-9):
            half = math.sqrt(clearance**2 - perp**2)
            hits.append((s - half, s + half, p))
    hits.sort(key=lambda h: h[0])
    for (a0, a1, _), (b0, b1, _) in zip(hits, hits[1:]):
        if b0 < a1:
            raise PathError("overlapping detours; obstacles too congested for a straight plan")

    segs = []
    cur = 0.0
    cur_pt = start
    for s_in, s_out, p in hits:
        s_in = max(s_in, 0.0)
        s_out = min(s_out, L)
        entry = start + s_in * u
        exit_ = start + s_out * u
        if s_in > cur + 1e-15:
            segs.append(LineSegment(cur_pt, entry))
        th_in = cmath.phase(entry - p)
        th_out = cmath.phase(exit_ - p)
        sweep = (th_out - th_in) % (2 * math.pi)
        segs.append(ArcSegment(p, clearance, th_in, th_in + sweep))
        cur = s_out
        cur_pt = p + clearance * cmath.exp(1j * (th_in + sweep))
    if cur < L - 1e-15 or not segs:
        segs.append(LineSegment(cur_pt, end))
    return Path(tuple(segs))


def choose_base_point(config: Configuration, clearance: float) -> complex:
    """Deterministic base point below the configuration.

    The point is chosen so that the straight probes from it to every finite
    marked point stay well clear of the other points and see them under
    distinct angles; this makes the spider of monodromy loops non-crossing.
    """
    pts = config.finite_points
    c0 = sum(pts) / len(pts)
    spread = max(abs(p - c0) for p in pts)
    candidates = []
    # Nearby bases keep the monodromy matrices well conditioned (their norms
    # grow exponentially with the hyperbolic distance to the base), so prefer
    # the closest candidate whose probe clearances are adequate.
    for radial in (0.8, 1.0, 1.25, 1.6, 2.1, 2.8):
        for tilt in (0.0, 0.17, -0.17, 0.34, -0.34, 0.55, -0.55, 0.81, -0.81):
            b = c0 - 1j * (radial * spread + 3 * clearance) * cmath.exp(1j * tilt)
            score = min(
                LineSegment(b, pts[i]).min_distance(pts[j])
                for i in range(len(pts))
                for j in range(len(pts))
                if i != j
            )
            angles = sorted(cmath.phase(p - b) for p in pts)
            gap = min(
                (a2 - a1 for a1, a2 in zip(angles, angles[1:])),
                default=math.pi,
            )
            score = min(score, gap * abs(b - c0))
            candidates.append((score, abs(b - c0), b))
    best_score = max(c[0] for c in candidates)
    if best_score < clearance:
        raise PathError("could not find a base point with adequate clearance")
    viable = [c for c in candidates if c[0] >= max(clearance, 0.8 * best_score)]
    viable.sort(key=lambda c: (c[1], -c[0]))
    return viable[0][2]


# ---------------------------------------------------------------------------
# adaptive Dormand-Prince 5(4) in complex arithmetic
# ---------------------------------------------------------------------------

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)

_MAX_STEPS = 2_000_000


def _propagate_frame(q, path: Path, Y0, rtol: float, atol: float) -> np.ndarray:
    """Continue a 2x2 frame along a path; ``q`` is the scalar potential.

    State is kept as four native complex numbers, which is substantially
    faster than numpy at this size.
    """
    u1, u2 = complex(Y0[0, 0]), complex(Y0[0, 1])
    d1, d2 = complex(Y0[1, 0]), complex(Y0[1, 1])
    nsteps = 0
    for seg in path.segments:
        if seg.length == 0.0:
            continue
        point = seg.point
        velocity = seg.velocity
        t = 0.0
        h = min(0.1, 1.0 / max(seg.length, 1e-30))
        # k1 for FSAL
        z = point(0.0)
        zd = velocity(0.0)
        qq = q(z) * zd
        k1 = (zd * d1, -qq * u1, zd * d2, -qq * u2)
        while t < 1.0:
            if nsteps > _MAX_STEPS:
                raise PathError("transport exceeded the step budget")
            if h < 1e-13:
                raise PathError("step size underflow during transport")
            if t + h > 1.0:
                h = 1.0 - t
            y = (u1, d1, u2, d2)

            ta = t + _C2 * h
            z = point(ta)
            zd = velocity(ta)
            qq = q(z) * zd
            s0 = y[0] + h * _A21 * k1[0]
            s1 = y[1] + h * _A21 * k1[1]
            s2 = y[2] + h * _A21 * k1[2]
            s3 = y[3] + h * _A21 * k1[3]
            k2 = (zd * s1, -qq * s0, zd * s3, -qq * s2)

            ta = t + _C3 * h
            z = point(ta)
            zd = velocity(ta)
            qq = q(z) * zd
            s0 = y[0] + h * (_A31 * k1[0] + _A32 * k2[0])
            s1 = y[1] + h * (_A31 * k1[1] + _A32 * k2[1])
            s2 = y[2] + h * (_A31 * k1[2] + _A32 * k2[2])
            s3 = y[3] + h * (_A31 * k1[3] + _A32 * k2[3])
            k3 = (zd * s1, -qq * s0, zd * s3, -qq * s2)

            ta = t + _C4 * h
            z = point(ta)
            zd = velocity(ta)
            qq = q(z) * zd
            s0 = y[0] + h * (_A41 * k1[0] + _A42 * k2[0] + _A43 * k3[0])
            s1 = y[1] + h * (_A41 * k1[1] + _A42 * k2[1] + _A43 * k3[1])
            s2 = y[2] + h * (_A41 * k1[2] + _A42 * k2[2] + _A43 * k3[2])
            s3 = y[3] + h * (_A41 * k1[3] + _A42 * k2[3] + _A43 * k3[3])
            k4 = (zd * s1, -qq * s0, zd * s3, -qq * s2)

            ta = t + _C5 * h
            z = point(ta)
            zd = velocity(ta)
            qq = q(z) * zd
            s0 = y[0] + h * (_A51 * k1[0] + _A52 * k2[0] + _A53 * k3[0] + _A54 * k4[0])
            s1 = y[1] + h * (_A51 * k1[1] + _A52 * k2[1] + _A53 * k3[1] + _A54 * k4[1])
            s2 = y[2] + h * (_A51 * k1[2] + _A52 * k2[2] + _A53 * k3[2] + _A54 * k4[2])
            s3 = y[3] + h * (_A51 * k1[3] + _A52 * k2[3] + _A53 * k3[3] + _A54 * k4[3])
            k5 = (zd * s1, -qq * s0, zd * s3, -qq * s2)

            ta = t + h
            z = point(ta)
            zd = velocity(ta)
            qq = q(z) * zd
            s0 = y[0] + h * (_A61 * k1[0] + _A62 * k2[0] + _A63 * k3[0] + _A64 * k4[0] + _A65 * k5[0])
            s1 = y[1] + h * (_A61 * k1[1] + _A62 * k2[1] + _A63 * k3[1] + _A64 * k4[1] + _A65 * k5[1])
            s2 = y[2] + h * (_A61 * k1[2] + _A62 * k2[2] + _A63 * k3[2] + _A64 * k4[2] + _A65 * k5[2])
            s3 = y[3] + h * (_A61 * k1[3] + _A62 * k2[3] + _A63 * k3[3] + _A64 * k4[3] + _A65 * k5[3])
            k6 = (zd * s1, -qq * s0, zd * s3, -qq * s2)

            n0 = y[0] + h * (_B1 * k1[0] + _B3 * k3[0] + _B4 * k4[0] + _B5 * k5[0] + _B6 * k6[0])
            n1 = y[1] + h * (_B1 * k1[1] + _B3 * k3[1] + _B4 * k4[1] + _B5 * k5[1] + _B6 * k6[1])
            n2 = y[2] + h * (_B1 * k1[2] + _B3 * k3[2] + _B4 * k4[2] + _B5 * k5[2] + _B6 * k6[2])
            n3 = y[3] + h * (_B1 * k1[3] + _B3 * k3[3] + _B4 * k4[3] + _B5 * k5[3] + _B6 * k6[3])

            k7 = (zd * n1, -qq * n0, zd * n3, -qq * n2)

            # Error per unit step: keeps the global error near rtol * length
            # instead of rtol * step count.
            err = 0.0
            for kk1, kk3, kk4, kk5, kk6, kk7, yo, yn in (
                (k1[0], k3[0], k4[0], k5[0], k6[0], k7[0], y[0], n0),
                (k1[1], k3[1], k4[1], k5[1], k6[1], k7[1], y[1], n1),
                (k1[2], k3[2], k4[2], k5[2], k6[2], k7[2], y[2], n2),
                (k1[3], k3[3], k4[3], k5[3], k6[3], k7[3], y[3], n3),
            ):
                e = _E1 * kk1 + _E3 * kk3 + _E4 * kk4 + _E5 * kk5 + _E6 * kk6 + _E7 * kk7
                sc = atol + rtol * max(abs(yo), abs(yn))
                err = max(err, abs(e) / sc)

            nsteps += 1
            if err <= 1.0:
                t += h
                u1, d1, u2, d2 = n0, n1, n2, n3
                k1 = k7
                h *= min(5.0, max(0.2, 0.9 * (err + 1e-300) ** -0.25))
            else:
                h *= max(0.2, 0.9 * err**-0.25)
    return np.array([[u1, u2], [d1, d2]], dtype=complex)


def _propagate_batch(qb, a, b, Y0, rtol: float, atol: float) -> np.ndarray:
    """Continue a batch of frames along straight segments ``a[k] -> b[k]``.

    ``Y0`` has shape (K, 2, 2); all batch members share the adaptive step
    sequence, controlled by the worst member.
    """
    a = np.asarray(a, dtype=complex)
    bb = np.asarray(b, dtype=complex)
    zd = bb - a  # constant velocity per member

    y = np.array(Y0, dtype=complex)

    def rhs(t, Y):
        z = a + t * zd
        qq = (qb(z) * zd)[:, None]
        out = np.empty_like(Y)
        out[:, 0, :] = zd[:, None] * Y[:, 1, :]
        out[:, 1, :] = -qq * Y[:, 0, :]
        return out

    t = 0.0
    h = 0.1
    k1 = rhs(0.0, y)
    nsteps = 0
    while t < 1.0:
        if nsteps > _MAX_STEPS:
            raise PathError("batch transport exceeded the step budget")
        if h < 1e-13:
            raise PathError("step size underflow during batch transport")
        if t + h > 1.0:
            h = 1.0 - t
        k2 = rhs(t + _C2 * h, y + h * _A21 * k1)
        k3 = rhs(t + _C3 * h, y + h * (_A31 * k1 + _A32 * k2))
        k4 = rhs(t + _C4 * h, y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = rhs(t + _C5 * h, y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = rhs(t + h, y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
        ynew = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = rhs(t + h, ynew)
        # error per unit step, as in _propagate_frame
        e = _E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = float(np.max(np.abs(e) / sc))
        nsteps += 1
        if err <= 1.0:
            t += h
            y = ynew
            k1 = k7
            h *= min(5.0, max(0.2, 0.9 * (err + 1e-300) ** -0.25))
        else:
            h *= max(0.2, 0.9 * err**-0.25)
    return y


# ---------------------------------------------------------------------------
# frames and public transport operations
# ---------------------------------------------------------------------------


@dataclass
class FrameTransport:
    """A fundamental frame at a point: columns are ``(u, u')`` of two solutions."""

    base_point: complex
    frame: np.ndarray

    @property
    def wronskian(self) -> complex:
        f = self.frame
        return f[0, 0] * f[1, 1] - f[0, 1] * f[1, 0]


def canonical_base_frame(base_point: complex) -> FrameTransport:
    """Frame with ``u1 = 1, u1' = 0, u2 = 0, u2' = 2i`` at the base point."""
    return FrameTransport(
        base_point=complex(base_point),
        frame=np.array([[1.0, 0.0], [0.0, FRAME_WRONSKIAN]], dtype=complex),
    )


def propagator(tensor: StressTensor, path: Path, rtol: float = DEFAULT_RTOL,
               atol: float = DEFAULT_ATOL) -> np.ndarray:
    """Transfer matrix ``Phi`` with ``Y(end) = Phi Y(start)`` along the path."""
    q = tensor.q_scalar_factory()
    return _propagate_frame(q, path, np.eye(2, dtype=complex), rtol, atol)


def transport(tensor: StressTensor, frame: FrameTransport, path: Path,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> FrameTransport:
    """Analytically continue a frame along a path."""
    if abs(path.start - frame.base_point) > 1e-9 * max(1.0, abs(frame.base_point)):
        raise ValidationError("path does not start at the frame base point")
    q = tensor.q_scalar_factory()
    Y = _propagate_frame(q, path, frame.frame, rtol, atol)
    return FrameTransport(base_point=path.end, frame=Y)


def transport_batch(tensor: StressTensor, starts, ends, Y0,
                    rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> np.ndarray:
    """Continue frames along straight segments, vectorized over the batch."""
    qb = tensor.q_batch_factory()
    return _propagate_batch(qb, starts, ends, Y0, rtol, atol)


# ---------------------------------------------------------------------------
# Frobenius seeds
# ---------------------------------------------------------------------------


def _indicial_exponents(alpha: float) -> tuple[float, float]:
    # rho(rho - 1) + h/4 = 0 with h = alpha(2 - alpha); 1 - h = (1 - alpha)^2.
    return 1.0 - alpha / 2.0, alpha / 2.0


def _series_coeffs(q_head: tuple, q_taylor: np.ndarray, rho: float,
                   max_terms: int) -> np.ndarray:
    """Coefficients ``a_k`` of ``t^rho sum a_k t^k`` solving ``u'' + q u = 0``.

    ``q_head = (q_{-2}, q_{-1})`` and ``q_taylor[m] = q_m``.  The recurrence is
    ``a_k k (k + 2 rho - 1) = - sum_{j<k} q_{k-2-j} a_j``.
    """
    q_m1 = q_head[1]
    a = np.zeros(max_terms, dtype=complex)
    a[0] = 1.0
    two_rho_m1 = 2.0 * rho - 1.0
    for k in range(1, max_terms):
        s = q_m1 * a[k - 1]
        if k >= 2:
            s += np.dot(q_taylor[: k - 1][::-1], a[: k - 1])
        denom = k * (k + two_rho_m1)
        a[k] = -s / denom
    return a


def _truncate(a: np.ndarray, radius: float) -> int:
    """Number of terms needed for the series tail to fall below tolerance."""
    mags = np.abs(a) * radius ** np.arange(len(a))
    scale = max(1.0, float(mags.max()))
    small = mags / scale < _SERIES_TOL
    # require three consecutive below-tolerance terms
    for k in range(len(a) - 3):
        if small[k] and small[k + 1] and small[k + 2]:
            return k + 3
    raise SeriesError(
        f"local series did not converge within {len(a)} terms at radius {radius}"
    )


@dataclass
class FrobeniusSeed:
    """Truncated local solution basis at one marked point.

    For a finite point the local variable is ``t = z - z_i``; for infinity it
    is ``t = 1/z`` and the series describe ``v(t) = t u(1/t)``.  The two
    columns behave as ``t^{rho_plus} (1 + O(t))`` and ``t^{rho_minus} (kappa +
    O(t))`` where ``kappa`` normalizes the Wronskian of the returned plane
    frame to ``FRAME_WRONSKIAN``.
    """

    index: int
    center: complex
    at_infinity: bool
    alpha: float
    rho_plus: float
    rho_minus: float
    coeffs_plus: np.ndarray
    coeffs_minus: np.ndarray
    validity_radius: float

    def local_frame(self, t) -> np.ndarray:
        """Frame(s) in the local chart at local coordinates ``t`` (array ok).

        Returns shape ``t.shape + (2, 2)`` with rows (values, derivatives) of
        the two local solutions, using the principal branch of ``t^rho``.
        """
        t = np.asarray(t, dtype=complex)
        if np.any(np.abs(t) > self.validity_radius * (1 + 1e-12)):
            raise SeriesError("local frame requested outside the series validity radius")
        if np.any(t == 0):
            raise SeriesError("local frame requested at the singular point")
        out = np.empty(t.shape + (2, 2), dtype=complex)
        for col, (rho, a) in enumerate(
            ((self.rho_plus, self.coeffs_plus), (self.rho_minus, self.coeffs_minus))
        ):
            k = np.arange(len(a))
            tp = t[..., None] ** k
            p = np.sum(a * tp, axis=-1)
            dp = np.sum(a * (rho + k) * tp, axis=-1)
            tr = np.exp(rho * np.log(t))
            out[..., 0, col] = tr * p
            out[..., 1, col] = tr / t * dp
        return out

    def plane_frame(self, z) -> np.ndarray:
        """Frame(s) in the plane chart ``(u, du/dz)`` at points ``z``."""
        z = np.asarray(z, dtype=complex)
        if self.at_infinity:
            t = 1.0 / z
            Yv = self.local_frame(t)
            out = np.empty_like(Yv)
            out[..., 0, :] = Yv[..., 0, :] / t[..., None]
            out[..., 1, :] = Yv[..., 0, :] - t[..., None] * Yv[..., 1, :]
            return out
        return self.local_frame(z - self.center)


def frobenius_series(tensor: StressTensor, i: int, validity_radius: float | None = None,
                     max_terms: int = _SERIES_MAX_TERMS) -> FrobeniusSeed:
    """Construct the Frobenius basis at marked point ``i`` (``n-1`` = infinity)."""
    n = tensor.config.n
    at_inf = i == n - 1
    alpha = tensor.orders.alphas[i]
    gap = 1.0 - alpha
    if abs(gap - round(gap)) < 1e-9 and round(gap) >= 0:
        raise UnsupportedOrderError(
            f"order {alpha} has integer exponent difference {gap}; "
            "logarithmic local solutions are not supported"
        )
    pts = tensor.config.finite_points
    if at_inf:
        center = 0j
        nonzero = [abs(p) for p in pts if abs(p) > 0]
        conv_radius = 1.0 / max(nonzero)
    else:
        center = pts[i]
        conv_radius = min(abs(pts[j] - center) for j in range(len(pts)) if j != i)
    if validity_radius is None:
        validity_radius = 0.55 * conv_radius
    if validity_radius >= conv_radius:
        raise SeriesError(
            f"requested validity radius {validity_radius} >= convergence radius {conv_radius}"
        )
    rho_p, rho_m = _indicial_exponents(alpha)
    head = tensor.laurent_head(i)
    taylor = (
        tensor.q_taylor_at_infinity(max_terms)
        if at_inf
        else tensor.q_taylor_at(i, max_terms)
    )
    a_p = _series_coeffs(head, taylor, rho_p, max_terms)
    a_m = _series_coeffs(head, taylor, rho_m, max_terms)
    keep = max(_truncate(a_p, validity_radius), _truncate(a_m, validity_radius))
    a_p = a_p[:keep]
    a_m = a_m[:keep]
    # The Wronskian of (t^rho+ (1+..), t^rho- (1+..)) is rho_minus - rho_plus =
    # -(1 - alpha), constant.  Scale the second column so the plane frame has
    # Wronskian FRAME_WRONSKIAN; in the 1/z chart the plane Wronskian flips sign.
    w_local = rho_m - rho_p
    target = -FRAME_WRONSKIAN if at_inf else FRAME_WRONSKIAN
    a_m = a_m * (target / w_local)
    return FrobeniusSeed(
        index=i,
        center=center,
        at_infinity=at_inf,
        alpha=alpha,
        rho_plus=rho_p,
        rho_minus=rho_m,
        coeffs_plus=a_p,
        coeffs_minus=a_m,
        validity_radius=float(validity_radius),
    )


def frobenius_seed(tensor: StressTensor, i: int, r: float) -> FrameTransport:
    """Frame of the two local solutions at ``z_i + r`` (or ``|z| = 1/r`` for infinity)."""
    n = tensor.config.n
    at_inf = i == n - 1
    if not at_inf:
        pts = tensor.config.finite_points
        d = min(abs(pts[j] - pts[i]) for j in range(len(pts)) if j != i)
        if r >= 0.5 * d:
            raise ValidationError(
                f"seed radius {r} must be below half the distance {d} to the nearest point"
            )
    seed = frobenius_series(tensor, i, validity_radius=max(1.2 * r, 1e-12))
    z = 1.0 / r if at_inf else seed.center + r
    return FrameTransport(base_point=complex(z), frame=seed.plane_frame(np.asarray(z)))
