"""Exact rational checks of the quadratic slice polynomials and their resultant.

On a slice {X2 = kappa X1} of the zero set of P, B restricts to
Y^2 (b2 x^2 + b1 x + b0) and Q to X1 Y^2 (q2 x^2 + q1 x + q0) with x = Z/Y.
Everything here runs on ``fractions.Fraction`` so sign claims are decided
exactly; floats appear only in reports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .model import ModelParams

RTILDE_ROWS = (
    # coefficient of m^k as a polynomial in kappa, constant term first
    (19683, -19683),
    (133407, -59049, -74358),
    (333882, 186624, -433026, -90396),
    (375192, 957420, -672624, -644436, -33048),
    (199584, 1353024, 266328, -1525392, -281880),
    (92016, 857520, 1472688, -1256256, -800496),
    (54432, 507456, 1432512, 248832, -926496),
    (0, 308160, 1143744, 1151040, -275904),
    (0, 0, 675840, 1233920, 373760),
    (0, 0, 0, 679936, 516096),
    (0, 0, 0, 0, 262144),
)


class DomainError(ValueError):
    pass


class NoRootInInterval(ArithmeticError):
    pass


def _q(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def _check(m, k):
    m, k = _q(m), _q(k)
    if not (0 < k < 1):
        raise DomainError(f"kappa = {k} outside (0, 1)")
    if m < 1:
        raise DomainError(f"m = {m} < 1")
    return m, k


def _den(m, k):
    return (1 - k) * (2 * k * k * m * (8 * m - 5) + 6 * k * (4 * m - 1) + 9)


@dataclass(frozen=True)
class SliceCoeffs:
    b2: Fraction
    b1: Fraction
    b0: Fraction
    q2: Fraction
    q1: Fraction
    q0: Fraction

    def b_at(self, x) -> Fraction:
        return (self.b2 * x + self.b1) * x + self.b0

    def q_at(self, x) -> Fraction:
        return (self.q2 * x + self.q1) * x + self.q0


def slice_coeffs(m, kappa) -> SliceCoeffs:
    m, k = _check(m, kappa)
    d = _den(m, k)
    b2 = -(96 * k**3 * m**3 + 264 * k**2 * m**2 + 216 * k * m + 54) / d
    b1 = (
        4 * (m + 2) * (4 * k * m + 3) * (2 * k**2 * m + 4 * k * m + 3) / d
        - 2 * (4 * m + 3) ** 2 * (2 * m + 3) * (m - 1) / (m * (2 * m + 1) * (8 * m + 3))
    )
    b0 = -3 * (4 + (4 * m - 2) * k) * (4 * k * m + 3) * k / d
    q2 = -4 * (2 * k * m + 3) * (
        32 * k**3 * m**3 + k**2 * m**2 * (96 - 68 * k) + k * m * (90 - 84 * k) + 27 * (1 - k)
    ) / (3 * d)
    q1 = 16 * k * (m + 2) * (
        16 * k**3 * m**3 - 18 * k**3 * m**2 + 32 * k**2 * m**2 - 24 * k**2 * m + 27 * k * m - 9 * k + 9
    ) / (3 * d)
    q0 = -4 * k**2 * (
        32 * k**2 * m**3 - 20 * k**2 * m**2 - 6 * k**2 * m + 48 * k * m**2 - 6 * k * m - 9 * k + 18 * m + 9
    ) / (3 * d)
    return SliceCoeffs(b2, b1, b0, q2, q1, q0)


def a_corner(m, kappa) -> Fraction:
    """Upper end of Z/Y on a slice, where A vanishes."""
    m, k = _check(m, kappa)
    return m * k / (3 + 2 * m * k)


def a_check_corner(m, kappa) -> Fraction:
    """Lower end of Z/Y on a slice of the check set, where A-check vanishes."""
    m, k = _check(m, kappa)
    return 3 * m * k / (3 * (m + 2) + 2 * m * (m + 2) * k)


# ---- independent route: the slice restriction computed from the polynomials ----

def slice_point(m, kappa, x):
    """Solve the conservation law and P = 0 on {X2 = kappa X1, Z = x Y} for (X1^2, Y^2).

    Both equations are affine in (X1^2, Y^2) along such a ray once P is divided
    by X1, so the 2x2 system is solved exactly.  Returns None when singular.
    """
    m, k = _q(m), _q(kappa)
    x = _q(x)
    params = ModelParams(m)

    def cons(u, v):
        return _cons_affine(params, k, x, u, v)

    def p_over_x1(u, v):
        return _p_affine(params, k, x, u, v)

    c0, cu, cv = cons(0, 0), cons(1, 0) - cons(0, 0), cons(0, 1) - cons(0, 0)
    p0, pu, pv = p_over_x1(0, 0), p_over_x1(1, 0) - p_over_x1(0, 0), p_over_x1(0, 1) - p_over_x1(0, 0)
    det = cu * pv - cv * pu
    if det == 0:
        return None
    u = (-c0 * pv + cv * p0) / det
    v = (-cu * p0 + c0 * pu) / det
    return u, v


def _poly_parts(params, k, x, u, v):
    # values of the basic monomials at X1^2 = u, Y^2 = v with X2 = kX1, Z = xY
    m = params.m
    n = 4 * m + 3
    h_sq = (3 + 4 * m * k) ** 2 * u  # H^2
    w = (1 - h_sq) / n
    return m, n, h_sq, w


def _cons_affine(params, k, x, u, v):
    m, n, h_sq, w = _poly_parts(params, k, x, u, v)
    g = (3 + 4 * m * k * k) * u
    return g + w + (6 + 4 * m * (4 * m + 8) * x - 12 * m * x * x) * v - 1


def _p_affine(params, k, x, u, v):
    # P / X1 with every X1, Y product reduced to u = X1^2, v = Y^2
    m, n, h_sq, w = _poly_parts(params, k, x, u, v)
    r1 = (2 + 4 * m * x * x) * v
    r2 = ((4 * m + 8) * x - 6 * x * x) * v
    u_lin = 1 + Fraction(2, 3) * m * k  # (X1 + 2m/3 X2) / X1
    return (r2 - w) - k * (r1 - w) - 2 * k * u_lin * (1 - k) * u


def _b_affine(params, k, x, u, v):
    m, n, h_sq, w = _poly_parts(params, k, x, u, v)
    c = 2 * n * n * (2 * m + 3) * (m - 1) / (m * (2 * m + 1) * (8 * m + 3))
    return w - c * x * v


def _q_affine(params, k, x, u, v):
    # Q / X1
    m, n, h_sq, w = _poly_parts(params, k, x, u, v)
    u_lin = 1 + Fraction(2, 3) * m * k
    h_lin = 3 + 4 * m * k
    return (
        -4 * k * v - (4 * m + 8) * (4 * m * k + 2) * x * v + (2 + (4 * m + 2) * k) * w
        + 4 * k * u_lin * (h_lin + Fraction(2, 3) * m * k) * u
    )


def slice_coeffs_oracle(m, kappa, nodes: Sequence = (Fraction(1, 7), Fraction(2, 7), Fraction(3, 7))) -> SliceCoeffs:
    """Coefficients of B and Q/X1 on the slice, fitted exactly through three rays x = Z/Y."""
    m, k = _check(m, kappa)
    params = ModelParams(m)
    bs, qs = [], []
    for x in nodes:
        sol = slice_point(m, k, x)
        if sol is None:
            raise ArithmeticError(f"singular slice system at x = {x}")
        u, v = sol
        bs.append(_b_affine(params, k, x, u, v) / v)
        qs.append(_q_affine(params, k, x, u, v) / v)
    return SliceCoeffs(*_fit_quadratic(nodes, bs), *_fit_quadratic(nodes, qs))


def _fit_quadratic(xs, ys):
    (x0, x1, x2), (y0, y1, y2) = [_q(c) for c in xs], ys
    d01 = (y1 - y0) / (x1 - x0)
    d12 = (y2 - y1) / (x2 - x1)
    a = (d12 - d01) / (x2 - x0)
    b = d01 - a * (x0 + x1)
    c = y0 - a * x0 * x0 - b * x0
    return a, b, c


def slice_state(m, kappa, x) -> tuple:
    """A float state on E with X2 = kappa X1, Z = x Y and P = 0 (for cross-checks with the float code)."""
    sol = slice_point(m, kappa, x)
    if sol is None or sol[0] < 0 or sol[1] < 0:
        raise DomainError("slice ray does not meet the real surface")
    x1 = math.sqrt(sol[0])
    y = math.sqrt(sol[1])
    return (x1, float(kappa) * x1, y, float(x) * y)


# ---- roots, F, endpoint values ----

def _smaller_root_parts(c: SliceCoeffs):
    # discriminant; with b2 < 0 the smaller root of B-tilde is (-b1 + sqrt(D)) / (2 b2)
    return c.b1 * c.b1 - 4 * c.b2 * c.b0


def sigma_root(m, kappa) -> float:
    """Smaller real root of B-tilde, after exact containment in (0, A corner].

    The corner itself is attained only for m = 1, where B-tilde vanishes there.
    """
    c = slice_coeffs(m, kappa)
    end = a_corner(m, kappa)
    if not sigma_contained(m, kappa):
        raise NoRootInInterval(f"B-tilde has no sign change on (0, {end}] at m={m}, kappa={kappa}")
    if c.b_at(end) == 0:
        return float(end)
    sq = math.sqrt(float(c.b1 * c.b1 - 4 * c.b2 * c.b0))
    b1, b2 = float(c.b1), float(c.b2)
    # cancellation-free evaluation
    if b1 > 0:
        return float(2 * c.b0) / (-b1 - sq)
    return (-b1 + sq) / (2 * b2)


def sigma_contained(m, kappa, coeffs: Optional[SliceCoeffs] = None) -> bool:
    """Smaller root of B-tilde in the open interval (closed at the corner when m = 1)."""
    c = coeffs or slice_coeffs(m, kappa)
    at_end = c.b_at(a_corner(m, kappa))
    if _q(m) == 1:
        return c.b2 < 0 and c.b0 < 0 and at_end == 0 and 2 * c.b2 * a_corner(m, kappa) + c.b1 > 0
    return c.b2 < 0 and c.b0 < 0 and at_end > 0


def _sign(v) -> int:
    return (v > 0) - (v < 0)


def f_sign(m, kappa, coeffs: Optional[SliceCoeffs] = None) -> int:
    """Exact sign of Q-tilde at the smaller root of B-tilde.

    Q-tilde is reduced modulo B-tilde to a linear remainder alpha x + beta; at
    sigma = (-b1 + sqrt(D)) / (2 b2) this is (u + alpha sqrt(D)) / (2 b2) with
    u = 2 b2 beta - alpha b1, whose sign is decided by comparing squares.
    """
    c = slice_coeffs(m, kappa)
    if c.b2 >= 0:
        raise NoRootInInterval("leading coefficient of B-tilde is not negative")
    ratio = c.q2 / c.b2
    alpha = c.q1 - ratio * c.b1
    beta = c.q0 - ratio * c.b0
    disc = _smaller_root_parts(c)
    if disc < 0:
        raise NoRootInInterval("B-tilde has no real root")
    u = 2 * c.b2 * beta - alpha * c.b1
    su, sv = _sign(u), _sign(alpha)
    if su == sv or sv == 0 or (su == 0):
        num = su if su != 0 else sv
    else:
        # u and alpha sqrt(D) have opposite signs
        lhs, rhs = u * u, alpha * alpha * disc
        num = su if lhs > rhs else (0 if lhs == rhs else sv)
    return -num  # dividing by 2 b2 < 0


def F_value(m, kappa) -> float:
    c = slice_coeffs(m, kappa)
    s = sigma_root(m, kappa)
    return float(c.q2) * s * s + float(c.q1) * s + float(c.q0)


def q_at_A_corner(m, kappa) -> Fraction:
    """Closed form of Q-tilde at the A corner."""
    m, k = _check(m, kappa)
    return (
        4 * (m + 3) * (m - 1)
        * (4 * k**3 * m**2 * (8 * m - 1) + 4 * k**2 * m * (8 * m - 3) + 18 * k * m + 9 * (1 - k)) * k**2
        / (3 * (2 * k * m + 3) * _den(m, k))
    )


def b_at_A_corner_closed(m, kappa) -> Fraction:
    m, k = _check(m, kappa)
    b_star = (
        (m**4 + Fraction(15, 8) * m**3 + Fraction(5, 16) * m**2 - Fraction(45, 32) * m - Fraction(45, 64)) * m * k**3
        + (Fraction(13, 4) * m**4 + Fraction(163, 32) * m**3 + Fraction(255, 64) * m**2
           + Fraction(9, 16) * m - Fraction(27, 64)) * k**2
        + (Fraction(21, 8) * m**3 + Fraction(147, 64) * m**2 + Fraction(243, 128) * m + Fraction(27, 32)) * k
        + Fraction(21, 32) * m**2 - Fraction(27, 128)
    )
    return 768 * (m - 1) * k * b_star / ((8 * m + 3) * (2 * k * m + 3) * (2 * m + 1) * _den(m, k))


def _check_corner_poly(m, k, linear_m3: Fraction) -> Fraction:
    return (
        (m**3 + Fraction(11, 8) * m**2 + linear_m3 * m - Fraction(3, 8)) * m**2 * k**3
        + Fraction(3, 2) * (m**3 - Fraction(5, 8) * m**2 + 3 * m - Fraction(3, 4)) * m * k**2
        + (Fraction(9, 8) * m**3 - Fraction(99, 64) * m**2 + Fraction(27, 16) * m - Fraction(27, 32)) * k
        + Fraction(27, 64) * m**2 + Fraction(27, 32)
    )


def q_at_check_corner_closed(m, kappa, corrected: bool = False) -> Fraction:
    """Closed form of Q-tilde at the lower check-set corner.

    The printed form carries -19/4 in the kappa^3 bracket; direct expansion
    gives +19/4.  ``corrected=True`` returns the expansion-consistent form.
    """
    m, k = _check(m, kappa)
    coef = Fraction(19, 4) if corrected else Fraction(-19, 4)
    poly = _check_corner_poly(m, k, coef)
    return 512 * (m - 1) * k**2 * poly / (3 * _den(m, k) * (2 * k * m + 3) * (m + 2) ** 2)


def m1_factored(kappa, x) -> tuple:
    """The factored m = 1 forms of B-tilde and Q-tilde."""
    k, x = _q(kappa), _q(x)
    den = (2 * k * k + 6 * k + 3) * (k - 1)
    b = 2 * (3 + 4 * k) * ((2 * k + 1) * x - k - 2) * ((2 * k + 3) * x - k) / den
    q = -4 * ((12 * k**3 - 4 * k**2 - 21 * k - 9) * x + 2 * k**3 + 11 * k**2 + 9 * k) * ((2 * k + 3) * x - k) / (3 * den)
    return b, q


# ---- resultant ----

def rtilde(m, kappa) -> Fraction:
    # integer evaluation of the homogenized polynomial, one division at the end
    m, k = _q(m), _q(kappa)
    p, q = m.numerator, m.denominator
    a, b = k.numerator, k.denominator
    deg_m, deg_k = len(RTILDE_ROWS) - 1, 4
    pw_a = [a**j * b ** (deg_k - j) for j in range(deg_k + 1)]
    total = 0
    for i, row in enumerate(RTILDE_ROWS):
        inner = sum(c * pw_a[j] for j, c in enumerate(row))
        total += inner * p**i * q ** (deg_m - i)
    return Fraction(total, q**deg_m * b**deg_k)


def resultant_printed(m, kappa, rt: Optional[Fraction] = None) -> Fraction:
    m, k = _check(m, kappa)
    pre = -64 * k * k * (m - 1) * (2 * k * m + 3) / (
        (8 * m + 3) ** 2 * (2 * m + 1) ** 2 * m * m * (1 - k)
        * (2 * k * k * m * (8 * m - 5) + 6 * k * (4 * m - 1) + 9) ** 2
    )
    return pre * (rtilde(m, k) if rt is None else rt)


def _det(rows):
    # fraction-exact Gaussian elimination
    a = [list(r) for r in rows]
    size = len(a)
    det = Fraction(1)
    for i in range(size):
        piv = next((r for r in range(i, size) if a[r][i] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != i:
            a[i], a[piv] = a[piv], a[i]
            det = -det
        det *= a[i][i]
        for r in range(i + 1, size):
            f = a[r][i] / a[i][i]
            if f:
                for cidx in range(i, size):
                    a[r][cidx] -= f * a[i][cidx]
    return det


def resultant_sylvester(m, kappa, coeffs: Optional[SliceCoeffs] = None) -> Fraction:
    """Resultant of Q-tilde and B-tilde as the 4x4 Sylvester determinant."""
    c = coeffs or slice_coeffs(m, kappa)
    return _det([
        [c.q2, c.q1, c.q0, 0],
        [0, c.q2, c.q1, c.q0],
        [c.b2, c.b1, c.b0, 0],
        [0, c.b2, c.b1, c.b0],
    ])


@dataclass
class ResultantCheck:
    r_printed: Fraction
    r_sylvester: Fraction
    rtilde: Fraction

    @property
    def agree(self) -> bool:
        return self.r_printed == self.r_sylvester


def resultant_check(m, kappa) -> ResultantCheck:
    return ResultantCheck(resultant_printed(m, kappa), resultant_sylvester(m, kappa), rtilde(m, kappa))


# ---- grid ----

def default_m_grid(count: int = 200, m_max: float = 100.0, max_den: int = 1000) -> list:
    """Geometrically spaced m in [1, m_max], rationalized."""
    out = []
    for i in range(count):
        v = m_max ** (i / (count - 1)) if count > 1 else 1.0
        q = Fraction(v).limit_denominator(max_den)
        out.append(max(q, Fraction(1)))
    out[0] = Fraction(1)
    return sorted(set(out))


def default_kappa_grid(count: int = 199) -> list:
    return [Fraction(k, count + 1) for k in range(1, count + 1)]


CLAIMS = ("b2<0", "b0<0", "q2<0", "q1>0", "q0<0", "rtilde>0", "F>=0", "sigma_in", "resultant_routes", "Qcheck>0")


@dataclass
class GridReport:
    nodes: int = 0
    violations: list = field(default_factory=list)
    m1_F_zero: bool = True
    m1_r_zero: bool = True
    counts: dict = field(default_factory=lambda: {c: 0 for c in CLAIMS})

    @property
    def ok(self) -> bool:
        return not self.violations


def check_node(m, kappa, sylvester: bool = True) -> tuple:
    """Names of the sign claims that fail at one node, and the exact sign of F there."""
    m, k = _q(m), _q(kappa)
    c = slice_coeffs(m, k)
    bad = [name for name, ok in (
        ("b2<0", c.b2 < 0), ("b0<0", c.b0 < 0), ("q2<0", c.q2 < 0), ("q1>0", c.q1 > 0), ("q0<0", c.q0 < 0),
    ) if not ok]
    rt = rtilde(m, k)
    if not rt > 0:
        bad.append("rtilde>0")
    if not sigma_contained(m, k, c):
        bad.append("sigma_in")
    fs = f_sign(m, k, c)
    if fs < 0 or (m > 1 and fs == 0):
        bad.append("F>=0")
    if sylvester and resultant_sylvester(m, k, c) != resultant_printed(m, k, rt):
        bad.append("resultant_routes")
    if m >= 2 and not c.q_at(a_check_corner(m, k)) > 0:
        bad.append("Qcheck>0")
    return bad, fs


def grid_sign_report(m_grid: Iterable, kappa_grid: Iterable, sylvester: bool = True) -> GridReport:
    rep = GridReport()
    kappas = [_q(k) for k in kappa_grid]
    for m in m_grid:
        m = _q(m)
        for k in kappas:
            rep.nodes += 1
            bad, fs = check_node(m, k, sylvester)
            for name in bad:
                rep.counts[name] += 1
                rep.violations.append((str(m), str(k), name))
            if m == 1:
                rep.m1_F_zero &= fs == 0
                rep.m1_r_zero &= resultant_printed(m, k) == 0
    return rep
