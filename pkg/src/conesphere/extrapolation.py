"""Power-law limit extrapolation with known correction exponents."""

from __future__ import annotations

import numpy as np

from .errors import ExtrapolationError


def power_extrapolate(eps, values, exponents):
    """Fit ``v(e) = L + sum_j A_j e^{p_j}`` and return ``L`` with diagnostics.

    ``len(exponents)`` must be ``len(eps) - 1``.  Returns ``(limit,
    extrapolants, error_estimate)`` where ``extrapolants[k]`` uses the first
    ``k+1`` samples (and ``k`` exponents), so the last entry is the limit and
    the error estimate is at least the gap between the last two.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(eps) != len(values) or len(eps) < 1:
        raise ExtrapolationError("need matching, nonempty epsilon and value lists")
    if len(exponents) < len(eps) - 1:
        raise ExtrapolationError("not enough correction exponents for the ladder")
    extrapolants = []
    for k in range(1, len(eps) + 1):
        cols = [np.ones(k)]
        for p in exponents[: k - 1]:
            cols.append(eps[:k] ** p)
        A = np.stack(cols, axis=1)
        try:
            coef = np.linalg.solve(A, values[:k])
        except np.linalg.LinAlgError as exc:
            raise ExtrapolationError(f"singular extrapolation system: {exc}") from exc
        extrapolants.append(float(coef[0]))
    if len(extrapolants) >= 2:
        err = abs(extrapolants[-1] - extrapolants[-2])
    else:
        err = np.inf
    return extrapolants[-1], extrapolants, err


def correction_exponents(alphas, count):
    """Leading correction exponents ``2(1 - alpha_i)`` and their harmonics.

    The remainder of the truncated boundary terms decays like
    ``eps^{2(1 - alpha_i)}`` near the point of order ``alpha_i`` (with the
    order at infinity entering as ``alpha_n``), with further integer-power and
    doubled-exponent corrections.  Returns the ``count`` smallest distinct
    exponents, merging near-duplicates that would make the fit singular.
    """
    base = sorted({round(2.0 * (1.0 - a), 12) for a in alphas} | {2.0})
    candidates = set()

    def grow(total, depth, start):
        if total > 0:
            candidates.add(round(total, 12))
        if depth == 0:
            return
        for k in range(start, len(base)):
            grow(total + base[k], depth - 1, k)

    grow(0.0, 4, 0)
    merged = []
    for p in sorted(candidates):
        if p <= 0:
            continue
        if not merged or p - merged[-1] > 1e-3:
            merged.append(p)
    if len(merged) < count:
        merged.extend(merged[-1] + 2.0 * (k + 1) for k in range(count - len(merged)))
    return merged[:count]
