"""Barrier polynomials, invariant sets and their boundary-derivative identities.

Gradients are hand-derived partials; tests cross-check them against finite
differences.  Every ``gap_*`` function returns the directional derivative
along the field minus the closed-form right-hand side, so a correct identity
gives zero up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .critical import z0
from .model import (
    ModelParams, NegativeY, NoRealRoot, conservation_residual, derived,
    project_to_surface, vector_field,
)

BAND = 1e-9
CURVES = ("BQK", "BQKbar", "BSpin7", "SphereLine", "JensenLine", "BRF", "BRFtilde", "BRFhat")


class FaceSamplingFailed(RuntimeError):
    pass


class BarrierValues(NamedTuple):
    a: float
    b: float
    p: float
    q: float
    a_check: float


def b_coefficient(params: ModelParams) -> float:
    m, n = params.m, params.n
    return 2 * n * n * (2 * m + 3) * (m - 1) / (m * (2 * m + 1) * (8 * m + 3))


def eval_barriers(state: Sequence[float], params: ModelParams) -> BarrierValues:
    x1, x2, y, z = state
    m, n = params.m, params.n
    h = 3 * x1 + 4 * m * x2
    w = (1 - h * h) / n
    r1 = 2 * y * y + 4 * m * z * z
    r2 = (4 * m + 8) * y * z - 6 * z * z
    u = x1 + 2 * m / 3 * x2
    a = y * x2 - 3 / m * z * u
    b = w - b_coefficient(params) * y * z
    p = x1 * (r2 - w) - x2 * (r1 - w) - 2 * x2 * u * (x1 - x2)
    q = (
        -4 * x2 * y * y - (4 * m + 8) * (4 * m * x2 + 2 * x1) * y * z
        + (2 * x1 + (4 * m + 2) * x2) * w + 4 * x2 * u * (h + 2 * m / 3 * x2)
    )
    a_check = y * x2 - (m + 2) / m * z * u
    return BarrierValues(a, b, p, q, a_check)


def grad_a(state, params):
    x1, x2, y, z = state
    m = params.m
    return (-3 * z / m, y - 2 * z, x2, -3 / m * x1 - 2 * x2)


def grad_b(state, params):
    x1, x2, y, z = state
    m, n = params.m, params.n
    h = 3 * x1 + 4 * m * x2
    c = b_coefficient(params)
    return (-6 * h / n, -8 * m * h / n, -c * z, -c * y)


def grad_p(state, params):
    x1, x2, y, z = state
    m, n = params.m, params.n
    h = 3 * x1 + 4 * m * x2
    w = (1 - h * h) / n
    r1 = 2 * y * y + 4 * m * z * z
    r2 = (4 * m + 8) * y * z - 6 * z * z
    u = x1 + 2 * m / 3 * x2
    d = x1 - x2
    return (
        r2 - w + 6 * h / n * d - 2 * x2 * (d + u),
        8 * m * h / n * d - (r1 - w) - 2 * (u * d + 2 * m / 3 * x2 * d - x2 * u),
        (4 * m + 8) * x1 * z - 4 * x2 * y,
        x1 * ((4 * m + 8) * y - 12 * z) - 8 * m * x2 * z,
    )


def _dot(g, v):
    return g[0] * v[0] + g[1] * v[1] + g[2] * v[2] + g[3] * v[3]


def _lag(state, params):
    dq = derived(state, params)
    return dq.h, dq.g + (1 - dq.h * dq.h) / params.n, dq


def gap_a(state, params):
    x1, x2, y, z = state
    m, n = params.m, params.n
    u = x1 + 2 * m / 3 * x2
    if np.any(np.asarray(u) == 0):
        raise ZeroDivisionError("X1 + 2m/3 X2 = 0")
    h, lag, dq = _lag(state, params)
    w = (1 - h * h) / n
    bv = eval_barriers(state, params)
    rhs = (
        bv.a * (2 * h * lag - 2 * x1 - (4 * m + 2) * x2)
        + bv.a / u * (dq.r1 + 2 * m / 3 * dq.r2 - (1 + 2 * m / 3) * w)
        + y / u * bv.p
    )
    return _dot(grad_a(state, params), vector_field(state, params)) - rhs


def gap_b(state, params):
    x1, x2, y, z = state
    m, n = params.m, params.n
    h, lag, _ = _lag(state, params)
    bv = eval_barriers(state, params)
    k = 4 * n * n * (2 * m + 3) * (m - 1) / (m * (16 * m * m + 14 * m + 3))
    rhs = 2 * bv.b * h * lag + k * y * z * x2
    return _dot(grad_b(state, params), vector_field(state, params)) - rhs


def gap_p(state, params):
    x1, x2, y, z = state
    m = params.m
    h, lag, _ = _lag(state, params)
    bv = eval_barriers(state, params)
    rhs = bv.p * (h * (3 * lag - 1) + 4 * m / 3 * x2) + (x1 - x2) * bv.q
    return _dot(grad_p(state, params), vector_field(state, params)) - rhs


def gap_y_over_z(state, params):
    """Logarithmic derivative of Y/Z against -2(X1 - X2)."""
    x1, x2, y, z = state
    v = vector_field(state, params)
    ratio = y / z
    deriv = v[2] / z - y * v[3] / (z * z)
    return deriv + 2 * ratio * (x1 - x2)


def gap_x1_minus_x2(state, params):
    x1, x2, y, z = state
    m = params.m
    h, lag, _ = _lag(state, params)
    v = vector_field(state, params)
    rhs = (x1 - x2) * h * (lag - 1) + 2 * (z - y) * ((2 * m + 3) * z - y)
    return v[0] - v[1] - rhs


def jensen_offset(state, params):
    """Y - (2m+3) Z."""
    return state[2] - (2 * params.m + 3) * state[3]


def rf_offset(state, params):
    """X2 - X1 + Y - (2m+3) Z."""
    return state[1] - state[0] + jensen_offset(state, params)


def gap_jensen_offset(state, params):
    x1, x2, y, z = state
    m = params.m
    h, lag, _ = _lag(state, params)
    v = vector_field(state, params)
    e = jensen_offset(state, params)
    rhs = e * (h * lag - x1 - (4 * m + 6) * z) + (4 * m + 6) * z * rf_offset(state, params)
    return v[2] - (2 * m + 3) * v[3] - rhs


def rf_offset_derivative(state, params):
    v = vector_field(state, params)
    return v[1] - v[0] + v[2] - (2 * params.m + 3) * v[3]


def gap_rf_offset(state, params):
    x1, x2, y, z = state
    m, n = params.m, params.n
    h, lag, _ = _lag(state, params)
    e = jensen_offset(state, params)
    rhs = (
        rf_offset(state, params) * (h * (lag - 1) + 4 * m / n * y + (8 * m * m + 24 * m + 18) / n * z)
        + e * ((4 * m + 2) * h - (12 * m + 6) * y - (8 * m * m + 16 * m + 12) * z) / n
    )
    return rf_offset_derivative(state, params) - rhs


def _on_e(state, params, tol):
    return abs(conservation_residual(state, params)) <= tol and state[2] >= -tol and state[3] >= -tol


def in_S(state, params, tol: float = BAND) -> bool:
    bv = eval_barriers(state, params)
    return (
        _on_e(state, params, tol) and state[0] - state[1] >= -tol and state[1] >= -tol
        and bv.a >= -tol and bv.b >= -tol and bv.p >= -tol
    )


def in_S_check(state, params, tol: float = BAND) -> bool:
    bv = eval_barriers(state, params)
    return (
        _on_e(state, params, tol) and state[0] - state[1] > tol and state[1] > tol
        and bv.a > tol and bv.a_check < -tol and bv.p < -tol
    )


def in_W(state, params, tol: float = BAND) -> bool:
    return _on_e(state, params, tol) and state[3] - state[2] >= -tol and state[0] - state[1] >= -tol


def in_invariant_curve(state, params, which: str, tol: float = BAND) -> bool:
    x1, x2, y, z = state
    m, n = params.m, params.n
    if not _on_e(state, params, tol):
        return False
    h = 3 * x1 + 4 * m * x2
    e = jensen_offset(state, params)
    if which == "BQK":
        return abs(x1 - x2 + z - y) <= tol and abs(x2 + z) <= tol
    if which == "BQKbar":
        return abs(x2 - x1 + z - y) <= tol and abs(x2 - z) <= tol
    if which == "BSpin7":
        return abs(y - 2 * z - x1) <= tol and abs(3 * z - x2) <= tol
    if which == "SphereLine":
        return abs(x1 - x2) <= tol and abs(y - 1 / n) <= tol and abs(z - 1 / n) <= tol
    if which == "JensenLine":
        return abs(x1 - x2) <= tol and abs(e) <= tol and abs(z - z0(params)) <= tol
    if which == "BRF":
        return abs(h - 1) <= tol and e >= -tol and rf_offset(state, params) >= -tol
    if which == "BRFtilde":
        return abs(h - 1) <= tol and e <= tol and rf_offset(state, params) <= tol
    if which == "BRFhat":
        return (
            abs(h - 1) <= tol and y - z >= -tol and x2 - x1 + 2 * y - 2 * z >= -tol
            and x1 <= 0.5 + tol and x2 >= -tol
        )
    raise ValueError(f"unknown set {which!r}; expected one of {CURVES}")


def bqk_point(x1: float, params: ModelParams) -> tuple:
    """Point of the QK invariant curve on E with first coordinate x1 and the larger Z."""
    # X2 = -Z and Y = X1 + 2Z; the conservation residual is quadratic in Z
    f = [conservation_residual((x1, -z, x1 + 2 * z, z), params) for z in (0.0, 1.0, -1.0)]
    c = f[0]
    b = 0.5 * (f[1] - f[2])
    a = 0.5 * (f[1] + f[2]) - c
    disc = b * b - 4 * a * c
    if disc < 0:
        raise NoRealRoot("no QK point at this X1")
    roots = [(-b + s * math.sqrt(disc)) / (2 * a) for s in (1, -1)]
    z = max(r for r in roots)
    return (x1, -z, x1 + 2 * z, z)


@dataclass
class FaceReport:
    face: str
    samples: int
    attempts: int
    min_inward: float
    min_flux: float
    violations: int
    points: list = field(default_factory=list)


@dataclass
class InwardReport:
    m: float
    interior_found: int
    interior_attempts: int
    degenerate: bool
    faces: dict = field(default_factory=dict)

    @property
    def worst(self) -> float:
        vals = [f.min_inward for f in self.faces.values() if f.samples]
        return min(vals) if vals else 0.0


FACES = ("A", "B", "P")
_SLACK_ORDER = ("X1-X2", "X2", "A", "B", "P")


def _lift_many(x1, x2, z, params):
    """Vectorized larger-root solve of the conservation law for Y; NaN where none is admissible."""
    m, n = params.m, params.n
    d = x1 - x2
    b = 4 * m * (4 * m + 8) * z
    c = 12 * m / n * d * d - 12 * m * z * z - (1 - 1 / n)
    disc = b * b - 24 * c
    with np.errstate(invalid="ignore"):
        y = (-b + np.sqrt(disc)) / 12
    y = np.where((disc >= 0) & (y >= 0), y, np.nan)
    return np.stack([x1, x2, y, z])


def _slack_many(states, params):
    bv = eval_barriers(states, params)
    return np.stack([states[0] - states[1], states[1], bv.a, bv.b, bv.p])


def _lift(x1, x2, z, params):
    try:
        return tuple(project_to_surface((x1, x2, z), params, branch=1))
    except (NoRealRoot, NegativeY):
        return None


def _box(params):
    # B >= 0 forces H^2 <= 1 which with X1 >= X2 >= 0 bounds both; Z is bounded through A >= 0
    m = params.m
    return (0.0, 1 / 3), (0.0, 1 / (3 + 4 * m)), (0.0, 0.6)


class _InteriorPool:
    """Batches of interior points of S drawn by rejection from a box in (X1, X2, Z)."""

    def __init__(self, rng, params, batch: int = 4096):
        self.rng, self.params, self.batch = rng, params, batch
        self.pool: list = []
        self.drawn = 0

    def draw(self, budget: int):
        while not self.pool:
            if self.drawn >= budget:
                return None
            k = min(self.batch, budget - self.drawn)
            (a0, a1), (b0, b1), (c0, c1) = _box(self.params)
            x1 = self.rng.uniform(a0, a1, k)
            x2 = self.rng.uniform(b0, b1, k)
            z = self.rng.uniform(c0, c1, k)
            s = _lift_many(x1, x2, z, self.params)
            with np.errstate(invalid="ignore"):
                ok = np.all(_slack_many(s, self.params) > BAND, axis=0)
            self.drawn += k
            self.pool = [tuple(col) for col in s[:, ok].T]
        return self.pool.pop()


def _inward(face, s, params):
    x1, x2, y, z = s
    bv = eval_barriers(s, params)
    if face == "A":
        return bv.p, _dot(grad_a(s, params), vector_field(s, params))
    if face == "B":
        return y * z * x2, _dot(grad_b(s, params), vector_field(s, params))
    return (x1 - x2) * bv.q, _dot(grad_p(s, params), vector_field(s, params))


def sample_boundary_inward_check(
    faces: Sequence[str], n_samples: int, params: ModelParams, rng_seed: int = 0,
    max_attempts: int = 100_000, keep_points: bool = False,
) -> InwardReport:
    """Sample points of each face of S along rays from interior points and test inwardness.

    A ray in (X1, X2, Z) starts at an interior point of S and is marched until
    some defining inequality fails; when the first failure is the requested
    face, the crossing is bisected and kept.  For A and B the inward quantity
    is P and Y Z X2, for P it is (X1 - X2) Q; the report also carries the
    directional derivative of the face polynomial itself.
    """
    rng = np.random.default_rng(rng_seed)
    pool = _InteriorPool(rng, params)
    first = pool.draw(max_attempts)
    report = InwardReport(params.m, 0 if first is None else 1, pool.drawn, first is None)
    if first is None:
        for face in faces:
            report.faces[face] = FaceReport(face, 0, pool.drawn, 0.0, 0.0, 0)
        return report
    pool.pool.append(first)
    for face in faces:
        if face not in FACES:
            raise ValueError(f"unknown face {face!r}")
        fr = FaceReport(face, 0, 0, math.inf, math.inf, 0)
        while fr.samples < n_samples:
            if fr.attempts >= max_attempts:
                raise FaceSamplingFailed(f"face {face}: {fr.samples} points in {max_attempts} attempts")
            k = min(RAY_BATCH, max_attempts - fr.attempts)
            starts = []
            for _ in range(k):
                st = pool.draw(pool.drawn + 100 * pool.batch)
                if st is None:
                    raise FaceSamplingFailed("interior of S exhausted")
                starts.append(st)
            hits = _ray_hits(np.array(starts), face, rng, params)
            for hit in hits:
                fr.attempts += 1
                if hit is None:
                    continue
                inward, flux = _inward(face, tuple(hit), params)
                fr.samples += 1
                fr.min_inward = min(fr.min_inward, inward)
                fr.min_flux = min(fr.min_flux, flux)
                if inward < -1e-10:
                    fr.violations += 1
                if keep_points:
                    fr.points.append(tuple(hit))
                if fr.samples == n_samples:
                    break
        report.faces[face] = fr
    return report


RAY_BATCH = 256


def _ray_hits(starts, face, rng, params, n_march: int = 256, length: float = 0.6) -> list:
    """Boundary points where rays from ``starts`` first leave S, or None per ray.

    A ray counts only if the first inequality to fail is the requested face;
    the crossing is then refined by multisection on that face's polynomial.
    """
    k = len(starts)
    d = rng.normal(size=(k, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    base = starts[:, [0, 1, 3]]
    fi = _SLACK_ORDER.index(face)
    ts = np.linspace(0.0, length, n_march + 1)[1:]

    def slack_at(tt):  # tt: (k, j) ray parameters
        q = base[:, :, None] + d[:, :, None] * tt[:, None, :]
        with np.errstate(invalid="ignore"):
            return _slack_many(_lift_many(q[:, 0], q[:, 1], q[:, 2], params), params)  # (5, k, j)

    sl = slack_at(np.broadcast_to(ts, (k, n_march)))
    bad = ~np.all(sl > 0, axis=0)
    any_bad = bad.any(axis=1)
    first = np.argmax(bad, axis=1)
    rows = np.arange(k)
    ok = any_bad & (sl[fi, rows, first] <= 0)
    lo = np.where(first > 0, ts[np.maximum(first - 1, 0)], 0.0)
    hi = ts[first]
    for _ in range(12):
        ss = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, 33)[None, 1:-1]
        good = slack_at(ss)[fi] > 0
        j = np.where(good.all(axis=1), ss.shape[1], np.argmax(~good, axis=1))
        new_lo = np.where(j > 0, ss[rows, np.maximum(j - 1, 0)], lo)
        hi = np.where(j < ss.shape[1], ss[rows, np.minimum(j, ss.shape[1] - 1)], hi)
        lo = new_lo
    q = base + lo[:, None] * d
    with np.errstate(invalid="ignore"):
        pts = _lift_many(q[:, 0], q[:, 1], q[:, 2], params)
        slh = _slack_many(pts, params)
    others = np.delete(slh, fi, axis=0)
    with np.errstate(invalid="ignore"):
        ok &= np.isfinite(pts[2]) & (np.abs(slh[fi]) <= BAND) & np.all(others >= -BAND, axis=0)
    return [pts[:, i] if ok[i] else None for i in range(k)]


def degenerate_union_check(params: ModelParams, n_points: int = 50) -> dict:
    """For m = 1: points of the pieces {X1 = X2 = 0} and the Jensen line with X > 0 lie in S."""
    gamma = []
    for z in np.linspace(0.0, 5.0, n_points):
        s = _lift(0.0, 0.0, float(z), params)
        if s is not None:
            gamma.append(in_S(s, params))
    zz = z0(params)
    jensen = []
    for x in np.linspace(0.0, 1 / params.n, n_points)[1:]:
        s = (float(x), float(x), (2 * params.m + 3) * zz, zz)
        jensen.append(in_S(s, params))
    return {"gamma_in_S": all(gamma) and bool(gamma), "jensen_in_S": all(jensen), "points": len(gamma) + len(jensen)}
