"""Monomial-basis polynomials and bounded-interval real root isolation.

Coefficients are stored lowest degree first. Root isolation works by
recursion on the derivative chain: the real roots of ``p'`` split
``[lo, hi]`` into pieces on which ``p`` is monotone, so each piece holds at
most one root and a sign change brackets it exactly. Brackets are bisected down
to adjacent floats. Roots of even multiplicity do not change sign; they sit at a
critical point and are picked up by a residual test there.
"""

from dataclasses import dataclass
from math import comb

import numpy as np

TRIM_EPS = 1e-12


class EverywhereZeroError(ValueError):
    """The polynomial is identically zero, so every point of the interval is a root."""


def trim(coeffs):
    """Drop negligible leading coefficients. The zero polynomial becomes ``[0.0]``."""
    c = [float(x) for x in np.ravel(coeffs)]
    if not c:
        return [0.0]
    scale = max(1.0, max(abs(x) for x in c))
    while len(c) > 1 and abs(c[-1]) <= TRIM_EPS * scale:
        c.pop()
    if len(c) == 1 and abs(c[0]) <= TRIM_EPS * scale:
        c[0] = 0.0
    return c


def _horner(c, t):
    acc = 0.0
    for x in reversed(c):
        acc = acc * t + x
    return acc


def _deriv(c):
    if len(c) <= 1:
        return [0.0]
    return [i * c[i] for i in range(1, len(c))]


@dataclass(frozen=True)
class Polynomial:
    coeffs: tuple

    def __init__(self, coeffs):
        object.__setattr__(self, "coeffs", tuple(trim(coeffs)))

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def is_zero(self):
        return self.coeffs == (0.0,)

    def __call__(self, t):
        if np.ndim(t) == 0:
            return _horner(self.coeffs, float(t))
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.coeffs)

    def derivative(self):
        return Polynomial(_deriv(self.coeffs))

    def integrate(self):
        """Antiderivative with zero constant term."""
        return Polynomial([0.0] + [c / (i + 1) for i, c in enumerate(self.coeffs)])

    def shift(self, s):
        """Return ``q`` with ``q(t) = p(t + s)``."""
        n = len(self.coeffs)
        out = [0.0] * n
        for i, c in enumerate(self.coeffs):
            for k in range(i + 1):
                out[k] += c * comb(i, k) * s ** (i - k)
        return Polynomial(out)

    def __add__(self, other):
        other = other if isinstance(other, Polynomial) else Polynomial([other])
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [0.0] * (n - len(self.coeffs))
        b = list(other.coeffs) + [0.0] * (n - len(other.coeffs))
        return Polynomial([x + y for x, y in zip(a, b)])

    __radd__ = __add__

    def __neg__(self):
        return Polynomial([-x for x in self.coeffs])

    def __sub__(self, other):
        return self + (-(other if isinstance(other, Polynomial) else Polynomial([other])))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial([x * float(other) for x in self.coeffs])
        out = [0.0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return Polynomial(out)

    __rmul__ = __mul__

    def roots_in(self, lo, hi, tol=1e-9):
        return real_roots_in_interval(self, lo, hi, tol)


def _coeff_list(p):
    if isinstance(p, Polynomial):
        return list(p.coeffs)
    return trim(p)


def evaluate(p, t):
    return _horner(_coeff_list(p), float(t))


def derivative(p):
    return Polynomial(_deriv(_coeff_list(p)))


def integrate(p):
    return Polynomial(_coeff_list(p)).integrate()


def _bisect(c, a, b, fa, tol, resid):
    # invariant: sign(p(a)) == sign(fa) != sign(p(b)); run until floats run out so
    # callers can evaluate other polynomials at the root without slack
    for _ in range(1100):
        mid = 0.5 * (a + b)
        fm = _horner(c, mid)
        if fm == 0.0:
            return mid
        if mid == a or mid == b:
            return mid if abs(fm) <= abs(_horner(c, b)) else b
        if (fm > 0.0) == (fa > 0.0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def _roots(c, lo, hi, tol, resid):
    deg = len(c) - 1
    if deg == 0:
        return []
    if deg == 1:
        r = -c[0] / c[1]
        return [r] if lo <= r <= hi else []
    crit = _roots(_deriv(c), lo, hi, tol, resid)
    pts = [lo] + crit + [hi]
    vals = [_horner(c, x) for x in pts]
    out = []
    for x, v in zip(pts, vals):
        if v == 0.0:
            out.append(x)
    for x, v in zip(crit, vals[1:-1]):
        # tangential contact: extremum touching zero without a sign change
        if abs(v) <= resid:
            out.append(x)
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0 or fb == 0.0 or b <= a:
            continue
        if (fa > 0.0) != (fb > 0.0):
            out.append(_bisect(c, a, b, fa, tol, resid))
    return out


def real_roots_in_interval(p, lo, hi, tol=1e-9):
    """Sorted real roots of ``p`` in ``[lo, hi]``, merged when closer than ``tol``.

    Raises :class:`EverywhereZeroError` for the zero polynomial.
    """
    if lo > hi:
        raise ValueError("empty interval: lo > hi")
    if tol <= 0:
        raise ValueError("tol must be positive")
    c = _coeff_list(p)
    if len(c) == 1 and c[0] == 0.0:
        raise EverywhereZeroError("polynomial is identically zero on the interval")
    # normalize so the residual threshold is scale-free
    scale = max(abs(x) for x in c)
    c = [x / scale for x in c]
    roots = sorted(_roots(c, float(lo), float(hi), tol, tol))
    merged = []
    for r in roots:
        if merged and r - merged[-1] < tol:
            continue
        merged.append(min(max(r, lo), hi) + 0.0)
    return merged
