"""Parameters, state space and the polynomial vector field.

The state (X1, X2, Y, Z) evolves by a quartic polynomial field whose
conservation surface E carries every orbit of geometric interest.  All
polynomial helpers are written with plain arithmetic so they accept either
Python floats or numpy arrays of states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

SURFACE_TOL = 1e-9


class NoRealRoot(ValueError):
    pass


class NegativeY(ValueError):
    pass


class OffSurface(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Fiber parameter m; the orbit dimension n and Einstein constant follow."""

    m: float = 1

    def __post_init__(self) -> None:
        if not self.m >= 1:
            raise ValueError(f"m must be >= 1, got {self.m}")

    @property
    def n(self) -> float:
        return 4 * self.m + 3

    @property
    def lam(self) -> float:
        # homothety fixed so that the Einstein constant equals n
        return self.n

    @property
    def is_integral(self) -> bool:
        return float(self.m).is_integer()


class StateXYZ(NamedTuple):
    x1: float
    x2: float
    y: float
    z: float


class DerivedQuantities(NamedTuple):
    h: float
    g: float
    r1: float
    r2: float


def derived(state: Sequence[float], params: ModelParams) -> DerivedQuantities:
    x1, x2, y, z = state
    m = params.m
    return DerivedQuantities(
        3 * x1 + 4 * m * x2,
        3 * x1 * x1 + 4 * m * x2 * x2,
        2 * y * y + 4 * m * z * z,
        (4 * m + 8) * y * z - 6 * z * z,
    )


def vector_field(state: Sequence[float], params: ModelParams) -> tuple:
    x1, x2, y, z = state
    m = params.m
    n = 4 * m + 3
    h = 3 * x1 + 4 * m * x2
    w = (1 - h * h) / n
    lag = 3 * x1 * x1 + 4 * m * x2 * x2 + w
    drag = h * (lag - 1)
    return (
        x1 * drag + 2 * y * y + 4 * m * z * z - w,
        x2 * drag + (4 * m + 8) * y * z - 6 * z * z - w,
        y * (h * lag - x1),
        z * (h * lag + x1 - 2 * x2),
    )


def make_field(params: ModelParams) -> Callable[[float, Sequence[float]], list]:
    """Autonomous field in the (eta, state) -> derivative form the integrator expects."""
    m = float(params.m)
    n = 4 * m + 3
    c4m, c4m8 = 4 * m, 4 * m + 8

    def field(eta: float, s: Sequence[float]) -> list:
        x1, x2, y, z = s
        h = 3 * x1 + c4m * x2
        w = (1 - h * h) / n
        lag = 3 * x1 * x1 + c4m * x2 * x2 + w
        drag = h * (lag - 1)
        hl = h * lag
        return [
            x1 * drag + 2 * y * y + c4m * z * z - w,
            x2 * drag + c4m8 * y * z - 6 * z * z - w,
            y * (hl - x1),
            z * (hl + x1 - 2 * x2),
        ]

    return field


def conservation_residual(state: Sequence[float], params: ModelParams):
    x1, x2, y, z = state
    m = params.m
    n = 4 * m + 3
    h = 3 * x1 + 4 * m * x2
    g = 3 * x1 * x1 + 4 * m * x2 * x2
    return g + (1 - h * h) / n + 6 * y * y + 4 * m * (4 * m + 8) * y * z - 12 * m * z * z - 1


def conservation_residual_reduced(state: Sequence[float], params: ModelParams):
    """Same polynomial written through X1 - X2 only; agrees identically with the full form."""
    x1, x2, y, z = state
    m = params.m
    n = 4 * m + 3
    d = x1 - x2
    return 12 * m / n * d * d + 6 * y * y + 4 * m * (4 * m + 8) * y * z - 12 * m * z * z - (1 - 1 / n)


def conservation_gradient(state: Sequence[float], params: ModelParams) -> tuple:
    x1, x2, y, z = state
    m = params.m
    n = 4 * m + 3
    k = 24 * m / n * (x1 - x2)
    return (k, -k, 12 * y + 4 * m * (4 * m + 8) * z, 4 * m * (4 * m + 8) * y - 24 * m * z)


def on_surface(state: Sequence[float], params: ModelParams, tol: float = SURFACE_TOL) -> bool:
    h = derived(state, params).h
    return (
        abs(conservation_residual(state, params)) <= tol
        and state[2] >= -tol
        and state[3] >= -tol
        and h * h <= 1 + tol
    )


def h_prime_identity_gap(
    state: Sequence[float], params: ModelParams, strict: bool = True, tol: float = 1e-6
):
    """<grad H, V> minus (H^2 - 1)(1/n + 12m/n (X1 - X2)^2).

    The identity only holds on E; with ``strict`` an off-surface state raises.
    """
    if strict:
        res = conservation_residual(state, params)
        if abs(res) > tol * (1 + sum(float(c) ** 2 for c in state)):
            raise OffSurface(f"conservation residual {res:.3e}")
    m = params.m
    n = 4 * m + 3
    v = vector_field(state, params)
    h = 3 * state[0] + 4 * m * state[1]
    d = state[0] - state[1]
    return 3 * v[0] + 4 * m * v[1] - (h * h - 1) * (1 / n + 12 * m / n * d * d)


def _polish_y(x1: float, x2: float, y: float, z: float, params: ModelParams) -> float:
    # one Newton step in Y brings the residual to rounding level
    m = params.m
    res = conservation_residual((x1, x2, y, z), params)
    dy = 12 * y + 4 * m * (4 * m + 8) * z
    return y - res / dy if dy != 0 else y


def project_to_surface(
    partial: Sequence[float], params: ModelParams, branch: int = 1
) -> StateXYZ:
    """Solve the conservation law for Y given (X1, X2, Z).

    ``branch=+1`` takes the larger root (the one continuous with Y > 0),
    ``branch=-1`` the smaller.
    """
    x1, x2, z = (float(c) for c in partial)
    m = params.m
    n = 4 * m + 3
    d = x1 - x2
    # 6 Y^2 + bY + c = 0
    b = 4 * m * (4 * m + 8) * z
    c = 12 * m / n * d * d - 12 * m * z * z - (1 - 1 / n)
    disc = b * b - 24 * c
    if disc < 0:
        raise NoRealRoot(f"discriminant {disc:.3e} < 0 at {partial}")
    sq = math.sqrt(disc)
    # cancellation-free pair of roots
    q = -0.5 * (b + math.copysign(sq, b if b != 0 else 1.0))
    roots = sorted([q / 6, c / q if q != 0 else -b / 12])
    y = roots[1] if branch >= 0 else roots[0]
    if roots[1] < 0:
        raise NegativeY(f"both roots negative at {partial}")
    if y < 0:
        raise NegativeY(f"requested branch gives Y = {y:.3e}")
    y = _polish_y(x1, x2, y, z, params)
    return StateXYZ(x1, x2, y, z)


def newton_project(
    state: Sequence[float], params: ModelParams, max_iter: int = 20, tol: float = 1e-15
) -> StateXYZ:
    """Move a nearby point onto E along the conservation gradient."""
    s = [float(c) for c in state]
    for _ in range(max_iter):
        res = conservation_residual(s, params)
        if abs(res) <= tol:
            return StateXYZ(*s)
        g = conservation_gradient(s, params)
        gg = sum(c * c for c in g)
        if gg == 0:
            break
        s = [a - res * b / gg for a, b in zip(s, g)]
    if abs(conservation_residual(s, params)) <= 1e-13:
        return StateXYZ(*s)
    raise ProjectionFailed(f"Newton projection did not converge from {tuple(state)}")


class ProjectionFailed(RuntimeError):
    pass
