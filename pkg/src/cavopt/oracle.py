"""Closed-form resonator frequencies used as ground truth.

Bessel functions are summed from their power series, which is accurate for
the small arguments (``x <= 12``) needed by the low-order pillbox modes.
Roots are bracketed by a sign-change scan and refined by bisection.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

from .eigen import C0

X_MAX = 12.0
_SCAN_STEP = 0.02
_LABEL = re.compile(r"^(TM|TE)(\d)(\d)(\d)$")


class OracleError(ValueError):
    """Unsupported mode label or root index."""


@dataclass(frozen=True)
class PillboxSpec:
    radius: float
    length: float

    def __post_init__(self):
        if not (self.radius > 0 and self.length > 0):
            raise ValueError("pillbox radius and length must be positive")


def bessel_j(m: int, x: float) -> float:
    """Bessel function of the first kind ``J_m(x)`` for integer ``m >= 0``."""
    if m < 0:
        return (-1) ** m * bessel_j(-m, x)
    if abs(x) > X_MAX:
        raise OracleError("power series limited to |x| <= %g, got %g" % (X_MAX, x))
    half = 0.5 * x
    term = half ** m / math.factorial(m)
    terms = [term]
    q = half * half
    k = 0
    while True:
        k += 1
        term *= -q / (k * (k + m))
        terms.append(term)
        if abs(term) < 1e-18 * max(1.0, abs(terms[0])) and k > q:
            break
    return math.fsum(terms)


def bessel_jp(m: int, x: float) -> float:
    """Derivative ``J_m'(x) = (J_{m-1}(x) - J_{m+1}(x)) / 2``."""
    return 0.5 * (bessel_j(m - 1, x) - bessel_j(m + 1, x))


def _bisect(fn, a: float, b: float) -> float:
    fa = fn(a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


@lru_cache(maxsize=None)
def _roots(kind: str, m: int) -> tuple[float, ...]:
    fn = (lambda x: bessel_j(m, x)) if kind == "J" else (lambda x: bessel_jp(m, x))
    n_steps = int(round(X_MAX / _SCAN_STEP))
    roots = []
    a = 1e-6
    fa = fn(a)
    for i in range(1, n_steps + 1):
        b = i * _SCAN_STEP
        fb = fn(b)
        if fb == 0.0:
            roots.append(b)
        elif (fa < 0) != (fb < 0) and fa != 0.0:
            roots.append(_bisect(fn, a, b))
        a, fa = b, fb
    return tuple(roots)


def bessel_zero(kind: str, m: int, n: int) -> float:
    """``n``-th positive root of ``J_m`` (``kind="J"``) or ``J_m'`` (``kind="J'"``)."""
    if kind not in ("J", "J'"):
        raise OracleError("kind must be 'J' or \"J'\", got %r" % kind)
    if m < 0 or n < 1:
        raise OracleError("need order m >= 0 and index n >= 1")
    roots = _roots(kind, m)
    if n > len(roots):
        raise OracleError("root %s_{%d,%d} lies beyond x = %g" % (kind, m, n, X_MAX))
    return roots[n - 1]


def bessel_roots_below(kind: str, m: int, x: float) -> int:
    """Number of positive roots in ``(0, x)``."""
    if x > X_MAX:
        raise OracleError("scan limited to x <= %g" % X_MAX)
    return sum(1 for r in _roots(kind, m) if r < x)


def parse_label(label: str) -> tuple[str, int, int, int]:
    match = _LABEL.match(label.strip().upper())
    if not match:
        raise OracleError("invalid mode label %r (expected e.g. 'TM010' or 'TE111')" % label)
    family, m, n, p = match.group(1), int(match.group(2)), int(match.group(3)), int(match.group(4))
    if n < 1:
        raise OracleError("radial index must be >= 1 in %r" % label)
    if family == "TE" and p < 1:
        raise OracleError("pillbox TE modes need an axial index >= 1, got %r" % label)
    return family, m, n, p


def pillbox_wavenumber(spec: PillboxSpec, label: str) -> float:
    """Wavenumber ``k = 2 pi f / c`` (1/m) of a pillbox mode."""
    family, m, n, p = parse_label(label)
    x = bessel_zero("J" if family == "TM" else "J'", m, n)
    return math.hypot(x / spec.radius, p * math.pi / spec.length)


def pillbox_freqs(spec: PillboxSpec, labels) -> dict[str, float]:
    """Frequencies in Hz of the pillbox modes named by ``labels``."""
    if isinstance(labels, str):
        labels = [labels]
    return {lab: C0 * pillbox_wavenumber(spec, lab) / (2.0 * math.pi) for lab in labels}


def crossing_radius(length: float) -> float:
    """Radius at which TM010 and TE111 share one frequency."""
    if not length > 0:
        raise ValueError("length must be positive")
    j01 = bessel_zero("J", 0, 1)
    jp11 = bessel_zero("J'", 1, 1)
    return length * math.sqrt(j01 ** 2 - jp11 ** 2) / math.pi


def _box_indices(label) -> tuple[int, int, int]:
    if isinstance(label, str):
        digits = label.strip().strip("()").replace(",", " ").split()
        if len(digits) == 1 and digits[0].isdigit() and len(digits[0]) == 3:
            digits = list(digits[0])
        label = digits
    try:
        m, n, p = (int(v) for v in label)
    except (TypeError, ValueError) as exc:
        raise OracleError("box mode label must be three integers, got %r" % (label,)) from exc
    if m < 1 or n < 1 or p < 0:
        raise OracleError("box mode needs m, n >= 1 and p >= 0, got %r" % ((m, n, p),))
    return m, n, p


def box_lambda(a: float, b: float, label, length: float = math.inf) -> float:
    """Eigenvalue ``k^2`` (1/m^2) of a Dirichlet rectangle ``a x b`` extruded to ``length``."""
    if not (a > 0 and b > 0 and length > 0):
        raise ValueError("box dimensions must be positive")
    m, n, p = _box_indices(label)
    axial = 0.0 if p == 0 else (p * math.pi / length) ** 2
    return math.pi ** 2 * (m ** 2 / a ** 2 + n ** 2 / b ** 2) + axial


def box_freqs(a: float, b: float, length: float, label) -> float:
    """Frequency in Hz of the ``(m, n, p)`` mode of an ``a x b x length`` box."""
    return C0 * math.sqrt(box_lambda(a, b, label, length)) / (2.0 * math.pi)
