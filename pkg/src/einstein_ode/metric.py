"""Back-transform from polynomial-field orbits to warped metric profiles.

A profile lists (t, f1, f2) for the metric dt^2 + f1(t)^2 g1 + f2(t)^2 g2.
Arc length t comes from integrating sqrt(1 - H^2) / sqrt(n * Lambda) along
the orbit; the turning point (H = 0) is recorded as the gauge anchor.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .integrator import Trajectory
from .model import ModelParams

DROP_BELOW = 1e-10  # samples with 1 - H^2 below this sit on a singular orbit
DEFAULT_TRIM = 0.05


class HSquaredOne(ValueError):
    pass


class NonpositiveYZ(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


@dataclass
class Gauge:
    eta_star: Optional[float]  # None when no turning point exists
    t_star: float  # t at the anchor
    anchored: bool  # False: anchored at the first kept sample instead
    t_tail: float = 0.0  # extrapolated arc length before the first kept sample
    quad_error: float = 0.0  # Simpson minus trapezoid, a Richardson-type estimate


@dataclass
class MetricProfile:
    t: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    gauge: Gauge
    params: ModelParams
    eta: np.ndarray = field(default_factory=lambda: np.empty(0))
    source: Optional[Trajectory] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def t_from_turn(self) -> np.ndarray:
        return self.t - self.gauge.t_star

    @property
    def length(self) -> float:
        return float(self.t[-1]) if len(self.t) else 0.0


def _speed(states: np.ndarray, params: ModelParams) -> np.ndarray:
    """dt/d(eta) = sqrt((1 - H^2) / (n Lambda)); NaN where 1 - H^2 < 0."""
    h = 3 * states[..., 0] + 4 * params.m * states[..., 1]
    one = 1 - h * h
    with np.errstate(invalid="ignore"):
        return np.sqrt(one / (params.n * params.lam))


def _kept_block(traj: Trajectory, params: ModelParams) -> slice:
    h = 3 * traj.states[:, 0] + 4 * params.m * traj.states[:, 1]
    one = 1 - h * h
    keep = one >= DROP_BELOW
    if not keep.any():
        raise HSquaredOne("every sample has H^2 = 1")
    idx = np.flatnonzero(keep)
    lo, hi = int(idx[0]), int(idx[-1]) + 1
    if not keep[lo:hi].all():
        bad = lo + int(np.argmin(keep[lo:hi]))
        raise HSquaredOne(f"H^2 reaches 1 inside the orbit at eta={traj.eta[bad]:.6g}")
    return slice(lo, hi)


def _tail(eta: np.ndarray, g: np.ndarray) -> float:
    """Arc length beyond the first sample, assuming exponential decay of the speed."""
    if len(g) < 2 or g[0] <= 0 or g[1] <= 0:
        return 0.0
    rate = math.log(g[1] / g[0]) / (eta[1] - eta[0])
    return float(g[0] / rate) if rate > 0 else 0.0


def reconstruct(trajectory: Trajectory, params: ModelParams) -> MetricProfile:
    blk = _kept_block(trajectory, params)
    eta = trajectory.eta[blk]
    st = trajectory.states[blk]
    y, z = st[:, 2], st[:, 3]
    if np.any(y <= 0) or np.any(z <= 0):
        k = int(np.argmax((y <= 0) | (z <= 0)))
        raise NonpositiveYZ(f"Y={y[k]:.3g}, Z={z[k]:.3g} at eta={eta[k]:.6g}")
    g = _speed(st, params)
    # Simpson per step with the Hermite midpoint
    mids = 0.5 * (eta[:-1] + eta[1:])
    gm = _speed(np.array([trajectory.dense(e) for e in mids]), params) if len(mids) else np.empty(0)
    dh = np.diff(eta)
    simpson = dh / 6 * (g[:-1] + 4 * gm + g[1:])
    trap = dh / 2 * (g[:-1] + g[1:])
    t_tail = _tail(eta, g)
    t = t_tail + np.concatenate(([0.0], np.cumsum(simpson)))
    f1 = g / y
    f2 = g / np.sqrt(y * z)

    turns = trajectory.named("turning") if trajectory.events else []
    if turns and eta[0] <= turns[0].eta <= eta[-1]:
        es = turns[0].eta
        k = min(int(np.searchsorted(eta, es, side="right")) - 1, len(eta) - 2)
        gs = float(_speed(np.asarray(trajectory.dense(es)), params))
        gmid = float(_speed(np.asarray(trajectory.dense(0.5 * (eta[k] + es))), params))
        t_star = float(t[k] + (es - eta[k]) / 6 * (g[k] + 4 * gmid + gs))
        gauge = Gauge(es, t_star, True, t_tail, float(np.sum(np.abs(simpson - trap))))
    else:
        gauge = Gauge(None, float(t[0]), False, t_tail, float(np.sum(np.abs(simpson - trap))))
    return MetricProfile(t, f1, f2, gauge, params, eta=eta.copy(), source=trajectory)


def _ode_terms(f1, f2, d1, d2, dd1, dd2, params: ModelParams):
    """Residuals of the two second-order equations and of the first-order constraint."""
    m, lam, n = params.m, params.lam, params.n
    a, b = d1 / f1, d2 / f2
    tr = 3 * a + 4 * m * b
    r1 = dd1 / f1 - a * a - (-tr * a + 2 / f1 ** 2 + 4 * m * f1 ** 2 / f2 ** 4 - lam)
    r2 = dd2 / f2 - b * b - (-tr * b + (4 * m + 8) / f2 ** 2 - 6 * f1 ** 2 / f2 ** 4 - lam)
    cons = (3 * a * a + 4 * m * b * b - tr * tr + 6 / f1 ** 2 + 4 * m * (4 * m + 8) / f2 ** 2
            - 12 * m * f1 ** 2 / f2 ** 4 - (n - 1) * lam)
    return r1, r2, cons


def _fd4(v: np.ndarray, h: float) -> tuple:
    d = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    dd = (-v[:-4] + 16 * v[1:-3] - 30 * v[2:-2] + 16 * v[3:-1] - v[4:]) / (12 * h * h)
    return d, dd


def _fd_nonuniform(t: np.ndarray, v: np.ndarray) -> tuple:
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    d = (-h1 / (h0 * (h0 + h1)) * v[:-2] + (h1 - h0) / (h0 * h1) * v[1:-1]
         + h0 / (h1 * (h0 + h1)) * v[2:])
    dd = 2 * (v[:-2] / (h0 * (h0 + h1)) - v[1:-1] / (h0 * h1) + v[2:] / (h1 * (h0 + h1)))
    return d, dd


def resample_uniform(profile: MetricProfile, count: int, trim: float = DEFAULT_TRIM) -> tuple:
    """(t, f1, f2) on a uniform grid inside the profile's t-range.

    eta(t) is a cubic Hermite interpolant using d(eta)/dt = 1/speed, then the
    source orbit's dense output gives the state.
    """
    src = profile.source
    if src is None:
        raise InsufficientSamples("profile carries no source orbit to resample")
    t, eta = profile.t, profile.eta
    span = t[-1] - t[0]
    tt = np.linspace(t[0] + trim * span, t[-1] - trim * span, count)
    g = _speed(src.states[np.searchsorted(src.eta, eta)], profile.params)
    k = np.clip(np.searchsorted(t, tt, side="right") - 1, 0, len(t) - 2)
    h = t[k + 1] - t[k]
    s = (tt - t[k]) / h
    h00, h10 = 2 * s ** 3 - 3 * s ** 2 + 1, s ** 3 - 2 * s ** 2 + s
    h01, h11 = -2 * s ** 3 + 3 * s ** 2, s ** 3 - s ** 2
    ee = h00 * eta[k] + h10 * h / g[k] + h01 * eta[k + 1] + h11 * h / g[k + 1]
    st = np.array([src.dense(e) for e in ee])
    gs = _speed(st, profile.params)
    return tt, gs / st[:, 2], gs / np.sqrt(st[:, 2] * st[:, 3])


def einstein_residual(
    profile: MetricProfile, params: Optional[ModelParams] = None, samples: int = 1000,
    trim: float = DEFAULT_TRIM,
) -> tuple:
    """(max ODE residual, max constraint residual) with Lambda = n.

    Profiles with a source orbit are resampled on a uniform t-grid and
    differentiated with fourth-order centered stencils; bare profiles fall
    back to three-point stencils on their own grid.
    """
    params = params or profile.params
    if len(profile) < 5:
        raise InsufficientSamples(f"need at least 5 samples, got {len(profile)}")
    if profile.source is not None:
        t, f1, f2 = resample_uniform(profile, samples, trim)
        h = t[1] - t[0]
        d1, dd1 = _fd4(f1, h)
        d2, dd2 = _fd4(f2, h)
        f1, f2 = f1[2:-2], f2[2:-2]
    else:
        t, f1, f2 = profile.t, profile.f1, profile.f2
        d1, dd1 = _fd_nonuniform(t, f1)
        d2, dd2 = _fd_nonuniform(t, f2)
        f1, f2 = f1[1:-1], f2[1:-1]
    r1, r2, cons = _ode_terms(f1, f2, d1, d2, dd1, dd2, params)
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2)))), float(np.max(np.abs(cons)))


def symmetry_defect(profile: MetricProfile, fraction: float = 0.9, count: int = 200) -> float:
    """max |f1(t* - s) - f1(t* + s)| for s up to ``fraction`` of the shorter side."""
    if not profile.gauge.anchored:
        raise ValueError("profile has no turning point")
    ts = profile.gauge.t_star
    reach = fraction * min(ts - profile.t[0], profile.t[-1] - ts)
    s = np.linspace(0.0, reach, count)
    left = np.interp(ts - s, profile.t, profile.f1)
    right = np.interp(ts + s, profile.t, profile.f1)
    return float(np.max(np.abs(left - right)))


# closed-form profiles with Lambda = n


def sphere_f(t):
    return np.sin(t)


def qk_f1(t, params: ModelParams):
    m, n = params.m, params.n
    return math.sqrt((m + 3) / n) * np.sin(2 * math.sqrt(n / (4 * (m + 3))) * t)


def qk_f2(t, params: ModelParams):
    m, n = params.m, params.n
    return math.sqrt(4 * (m + 3) / n) * np.cos(math.sqrt(n / (4 * (m + 3))) * t)


def jensen_cone_coefficient(params: ModelParams) -> float:
    m = params.m
    return math.sqrt((2 * m + (2 * m + 3) ** 2) / ((2 * m + 1) * (2 * m + 3) ** 2))


def jensen_cone_f1(t, params: ModelParams):
    return jensen_cone_coefficient(params) * np.sin(t)


# serialization


def _header(profile: MetricProfile) -> dict:
    gz = profile.gauge
    return {"m": profile.params.m, "eta_star": gz.eta_star, "t_star": gz.t_star, "anchored": gz.anchored}


def emit_profile(profile: MetricProfile, fmt: str = "csv") -> bytes:
    """CSV (comment header, then t,f1,f2) or JSON; floats use shortest round-trip repr."""
    head = _header(profile)
    rows = [(float(a), float(b), float(c)) for a, b, c in zip(profile.t, profile.f1, profile.f2)]
    if fmt == "json":
        return json.dumps({"header": head, "samples": rows}).encode()
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    buf.write("# " + json.dumps(head) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "f1", "f2"])
    for r in rows:
        w.writerow([repr(v) for v in r])
    return buf.getvalue().encode()


def parse_profile(data: bytes, fmt: str = "csv") -> MetricProfile:
    text = data.decode()
    if fmt == "json":
        obj = json.loads(text)
        head, rows = obj["header"], obj["samples"]
    else:
        first, _, rest = text.partition("\n")
        head = json.loads(first[2:])
        rows = [tuple(float(v) for v in r) for r in list(csv.reader(io.StringIO(rest)))[1:]]
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    gauge = Gauge(head["eta_star"], head["t_star"], head["anchored"])
    return MetricProfile(arr[:, 0], arr[:, 1], arr[:, 2], gauge, ModelParams(head["m"]))


def constant_profile(params: ModelParams, f1: float = 1.0, f2: float = 1.0, count: int = 11) -> MetricProfile:
    t = np.linspace(0.0, 1.0, count)
    return MetricProfile(t, np.full(count, f1), np.full(count, f2), Gauge(None, 0.0, False), params)


def closed_form_gap(profile: MetricProfile, reference, lo: float, hi: float, which: str = "f1") -> float:
    """sup |f - reference(t)| over profile samples with lo <= t <= hi."""
    vals = getattr(profile, which)
    sel = (profile.t >= lo) & (profile.t <= hi)
    if not sel.any():
        raise InsufficientSamples("no samples in the comparison window")
    return float(np.max(np.abs(vals[sel] - reference(profile.t[sel]))))


def profile_from_samples(t: Sequence[float], f1: Sequence[float], f2: Sequence[float], params: ModelParams) -> MetricProfile:
    return MetricProfile(np.asarray(t, float), np.asarray(f1, float), np.asarray(f2, float), Gauge(None, 0.0, False), params)
