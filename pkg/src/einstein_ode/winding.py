"""Winding of orbits around the Jensen line in cylindrical coordinates.

The cylinder axis is the invariant line {X1 = X2, Y = (2m+3) Z}; r is the
distance to it and theta the (unwrapped) winding angle.  On the axis itself
the flow reduces to a planar (H, theta) system whose H-component is solved by
H = -tanh(eta / n), which gives the scalar angle equation used for Omega.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit

from .critical import p2_deltas, z0
from .model import ModelParams, StateXYZ

PSI_STEP = 0.01
HORIZON_FACTOR = 40.0
CONVERGENCE_TOL = 1e-8
UNRESOLVED_MARGIN = 1e-3


class AngleUndefined(ValueError):
    pass


class NotConverged(RuntimeError):
    pass


class NoZeroCrossing(RuntimeError):
    pass


class DomainError(ValueError):
    pass


class StateCyl(NamedTuple):
    h: float
    r: float
    theta: float
    y: float


def _axis_scale(params: ModelParams) -> float:
    m = params.m
    return math.sqrt((2 * m + 2) / (2 * m + 3))


def to_cylindrical(
    state: Sequence[float], params: ModelParams, prev_theta: Optional[float] = None
) -> StateCyl:
    x1, x2, y, z = (float(c) for c in state)
    m = params.m
    h = 3 * x1 + 4 * m * x2
    s = x1 - x2
    c = _axis_scale(params) * (y - (2 * m + 3) * z)
    r = math.hypot(s, c)
    if r == 0.0:
        if prev_theta is None:
            raise AngleUndefined("winding angle undefined on the axis")
        return StateCyl(h, 0.0, prev_theta, y)
    theta = math.atan2(s, c)
    if prev_theta is not None:
        theta += 2 * math.pi * round((prev_theta - theta) / (2 * math.pi))
    return StateCyl(h, r, theta, y)


def from_cylindrical(state: Sequence[float], params: ModelParams) -> StateXYZ:
    h, r, theta, y = (float(c) for c in state)
    m, n = params.m, params.n
    d = r * math.sin(theta)
    x1 = (h + 4 * m * d) / n
    x2 = (h - 3 * d) / n
    z = (y - r * math.cos(theta) / _axis_scale(params)) / (2 * m + 3)
    return StateXYZ(x1, x2, y, z)


def cyl_vector_field(state: Sequence[float], params: ModelParams) -> tuple:
    """Field in (H, r, theta, Y); valid on the conservation surface."""
    h, r, th, y = state
    m, n = params.m, params.n
    sn, cs = math.sin(th), math.cos(th)
    lag = 1 / n + 12 * m / n * r * r * sn * sn
    k = (m + 2) / (m + 1) + 3 / n
    return (
        (h * h - 1) * lag,
        r * h * lag - h * r * sn * sn - h / n * r * cs * cs + k * r * r * sn * cs * cs,
        2 * _axis_scale(params) * y + r * cs / (m + 1) - (n - 1) / n * h * sn * cs - k * r * cs * sn * sn,
        y * (12 * m / n * h * r * r * sn * sn - 4 * m / n * r * sn),
    )


def axis_rate(params: ModelParams) -> float:
    """Constant term of the angle equation on the axis."""
    m = params.m
    return 2 * math.sqrt((2 * m + 2) * (2 * m + 3)) * z0(params)


def axis_rate_closed(params: ModelParams) -> float:
    m, n = params.m, params.n
    return 2 / n * math.sqrt((2 * m + 1) * (2 * m + 2) * (2 * m + 3) / ((2 * m + 3) ** 2 + 2 * m))


@dataclass
class AngleCatalog:
    alpha: float  # arctan(-delta1 / (2 sqrt((2m+3)(2m+2)) z0))
    beta: float  # same with delta2

    def a_plus(self, i: int) -> float:
        return self.alpha + i * math.pi

    def a_minus(self, i: int) -> float:
        return -self.alpha + i * math.pi

    def b_plus(self, i: int) -> float:
        return self.beta + i * math.pi

    def b_minus(self, i: int) -> float:
        return -self.beta + i * math.pi


def angle_catalog(params: ModelParams) -> AngleCatalog:
    d1, d2 = p2_deltas(params)
    den = 2 * math.sqrt((2 * params.m + 3) * (2 * params.m + 2)) * z0(params)
    return AngleCatalog(math.atan(-d1 / den), math.atan(-d2 / den))


@njit(cache=True)
def _psi_kernel(n, k, step, n_steps, stride):
    # RK4 on theta' = (n-1)/(2n) tanh(eta/n) sin(2 theta) + k, theta(0) = 0
    c = (n - 1) / (2 * n)
    out = np.empty((n_steps // stride + 1, 2))
    th = 0.0
    t = 0.0
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    j = 1
    for i in range(1, n_steps + 1):
        k1 = c * math.tanh(t / n) * math.sin(2 * th) + k
        th2 = th + 0.5 * step * k1
        tm = t + 0.5 * step
        k2 = c * math.tanh(tm / n) * math.sin(2 * th2) + k
        th3 = th + 0.5 * step * k2
        k3 = c * math.tanh(tm / n) * math.sin(2 * th3) + k
        th4 = th + step * k3
        k4 = c * math.tanh((t + step) / n) * math.sin(2 * th4) + k
        th = th + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = i * step
        if i % stride == 0:
            out[j, 0] = t
            out[j, 1] = th
            j += 1
    return out[:j]


@njit(cache=True)
def _axis_kernel(n, k, h0, th0, step, n_steps, stride):
    # RK4 on the autonomous pair H' = (H^2 - 1)/n, theta' = k - (n-1)/(2n) H sin(2 theta)
    c = (n - 1) / (2 * n)
    out = np.empty((n_steps // stride + 1, 3))
    h = h0
    th = th0
    out[0, 0] = 0.0
    out[0, 1] = h
    out[0, 2] = th
    j = 1
    for i in range(1, n_steps + 1):
        a1 = (h * h - 1) / n
        b1 = k - c * h * math.sin(2 * th)
        hh = h + 0.5 * step * a1
        tt = th + 0.5 * step * b1
        a2 = (hh * hh - 1) / n
        b2 = k - c * hh * math.sin(2 * tt)
        hh = h + 0.5 * step * a2
        tt = th + 0.5 * step * b2
        a3 = (hh * hh - 1) / n
        b3 = k - c * hh * math.sin(2 * tt)
        hh = h + step * a3
        tt = th + step * b3
        a4 = (hh * hh - 1) / n
        b4 = k - c * hh * math.sin(2 * tt)
        h = h + step / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        th = th + step / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        if i % stride == 0:
            out[j, 0] = i * step
            out[j, 1] = h
            out[j, 2] = th
            j += 1
    return out[:j]


@njit(cache=True)
def _pi_kernel(n, k, theta0, eta_end, n_steps):
    # theta' = k - (n-1)/(2n) H(eta) sin(2 theta) with H(eta) = tanh((eta_end - eta)/n)
    c = (n - 1) / (2 * n)
    step = eta_end / n_steps
    th = theta0
    for i in range(n_steps):
        t = i * step
        h0 = math.tanh((eta_end - t) / n)
        hm = math.tanh((eta_end - t - 0.5 * step) / n)
        h1 = math.tanh((eta_end - t - step) / n)
        k1 = k - c * h0 * math.sin(2 * th)
        k2 = k - c * hm * math.sin(2 * (th + 0.5 * step * k1))
        k3 = k - c * hm * math.sin(2 * (th + 0.5 * step * k2))
        k4 = k - c * h1 * math.sin(2 * (th + step * k3))
        th = th + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return th


@dataclass
class PsiConfig:
    step: float = PSI_STEP
    horizon_factor: float = HORIZON_FACTOR
    max_horizon_factor: float = 8 * HORIZON_FACTOR
    convergence_tol: float = CONVERGENCE_TOL
    stride: int = 100
    cross_check: bool = True
    cross_check_tol: float = 1e-8


@dataclass
class PsiResult:
    m: float
    constant: float
    omega: float
    limit_class: str
    limit_angle: float
    drift: float
    autonomous_gap: Optional[float]
    eta: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)

    @property
    def h(self) -> np.ndarray:
        return -np.tanh(self.eta / (4 * self.m + 3))


def classify_limit(theta: float, params: ModelParams, margin: float = UNRESOLVED_MARGIN) -> tuple:
    """Nearest A_i^- / B_i^- angle; 'Unresolved' when theta sits within margin of a midpoint."""
    cat = angle_catalog(params)
    i0 = int(math.floor(theta / math.pi))
    cands = []
    for i in range(i0 - 1, i0 + 3):
        cands.append((f"A{i}-", cat.a_minus(i)))
        cands.append((f"B{i}-", cat.b_minus(i)))
    cands.sort(key=lambda c: abs(c[1] - theta))
    (name, ang), (_, ang2) = cands[0], cands[1]
    mid = 0.5 * (ang + ang2)
    if abs(theta - mid) < margin:
        return "Unresolved", math.nan
    return name, ang


def integrate_psi(params: ModelParams, config: Optional[PsiConfig] = None) -> PsiResult:
    cfg = config or PsiConfig()
    n = float(params.n)
    k = axis_rate(params)
    factor = cfg.horizon_factor
    while True:
        n_steps = int(round(factor * n / cfg.step))
        stride = max(1, min(cfg.stride, n_steps // 4))
        n_steps -= n_steps % (2 * stride)
        out = _psi_kernel(n, k, cfg.step, n_steps, stride)
        eta, theta = out[:, 0], out[:, 1]
        omega = float(theta[-1])
        drift = abs(omega - float(theta[len(theta) // 2]))
        if drift < cfg.convergence_tol:
            break
        # slow final approach: double the horizon rather than report a moving angle
        factor *= 2
        if factor > cfg.max_horizon_factor:
            raise NotConverged(f"theta moved {drift:.3e} over the second half of the horizon")
    gap = None
    if cfg.cross_check:
        aut = _axis_kernel(n, k, 0.0, 0.0, cfg.step, n_steps, stride)
        gap = float(np.max(np.abs(aut[:, 2] - theta)))
        if gap >= cfg.cross_check_tol:
            raise NotConverged(f"autonomous and tanh forms disagree by {gap:.3e}")
    name, ang = classify_limit(omega, params)
    return PsiResult(params.m, k, omega, name, ang, drift, gap, eta, theta)


@dataclass
class PiResult:
    theta_star: float
    seed_theta: float
    eta_span: float
    autonomous_theta_star: float


def integrate_pi(params: ModelParams, epsilon: float = 1e-7, step: float = PSI_STEP) -> PiResult:
    """Angle where the axis orbit leaving A_0^+ (the sink of the H = 1 slice) crosses H = 0."""
    n = float(params.n)
    k = axis_rate(params)
    a = angle_catalog(params).a_plus(0)
    c = -((n - 1) / (2 * n)) * math.sin(2 * a) / ((n - 1) / n * math.cos(2 * a) + 2 / n)
    h0 = 1 - epsilon
    th0 = a - epsilon * c
    if not (0 < h0 < 1):
        raise NoZeroCrossing("seed is not in 0 < H < 1")
    eta_end = n * math.atanh(h0)
    n_steps = max(1, int(math.ceil(eta_end / step)))
    theta_star = float(_pi_kernel(n, k, th0, eta_end, n_steps))
    # autonomous pair, stopped at the step that crosses H = 0 and linearly interpolated
    aut = _axis_kernel(n, k, h0, th0, eta_end / n_steps, n_steps + 10, 1)
    hs = aut[:, 1]
    j = int(np.argmax(hs <= 0))
    if hs[j] > 0:
        raise NoZeroCrossing("H did not reach 0")
    w = hs[j - 1] / (hs[j - 1] - hs[j])
    aut_star = float(aut[j - 1, 2] + w * (aut[j, 2] - aut[j - 1, 2]))
    return PiResult(theta_star, th0, eta_end, aut_star)


def h1_junction() -> float:
    return 2 / (math.exp(math.sqrt(5) * math.pi / 6) + 1) - 1


def _a1_minus_m1() -> float:
    return math.pi - math.atan(2 * math.sqrt(5) / 5)


def h2_junction() -> float:
    return 2 / (math.pi - 2 - 2 * _a1_minus_m1())


def theta_barrier_m1(h: float) -> float:
    """Piecewise lower barrier for the m = 1 axis orbit on -1 <= H <= 0."""
    if not (-1.0 <= h <= 0.0):
        raise DomainError(f"H = {h} outside [-1, 0]")
    if h <= h2_junction():
        return 1 / h + 1 + _a1_minus_m1()
    if h < h1_junction():
        return math.pi / 2
    return 3 * math.sqrt(5) / 5 * math.log((1 - h) / (1 + h))


@dataclass
class BarrierReport:
    samples: int
    min_gap: float
    h_at_min: float
    holds: bool


def verify_barrier_m1(result: PsiResult, h_lo: float = -1 + 1e-3, h_hi: float = -1e-3) -> BarrierReport:
    hs = result.h
    mask = (hs > h_lo) & (hs < h_hi)
    if not mask.any():
        raise DomainError("no samples in the requested H range")
    gaps = np.array([t - theta_barrier_m1(float(h)) for h, t in zip(hs[mask], result.theta[mask])])
    j = int(np.argmin(gaps))
    return BarrierReport(int(mask.sum()), float(gaps[j]), float(hs[mask][j]), bool(gaps[j] > 0))
