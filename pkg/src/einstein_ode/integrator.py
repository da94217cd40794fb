"""Fixed-step RK4 and adaptive Dormand-Prince 5(4) with event location.

Fields have the signature ``f(eta, y) -> list`` and states are handled as
plain Python lists; for 1 to 4 dimensional systems this is markedly faster
than small numpy arrays.  Events are located by bisection on the cubic
Hermite interpolant of each accepted step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Field = Callable[[float, Sequence[float]], Sequence[float]]


class StepUnderflow(RuntimeError):
    pass


class NonFiniteState(RuntimeError):
    pass


@dataclass
class IntegratorConfig:
    step: float = 0.01
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    eta_max: float = 100.0
    event_tol: float = 1e-12
    drift_monitor: bool = False
    method: str = "adaptive"
    r_max: float = 1e6
    max_step: float = math.inf
    min_step: float = 1e-14
    touch_tol: float = 1e-12

    def __post_init__(self) -> None:
        if not (self.step > 0 and self.eta_max > 0):
            raise ValueError("step and eta_max must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.event_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.method not in ("adaptive", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class EventSpec:
    """Sign change of ``fn(state)``; direction +1 up, -1 down, 0 either.

    ``guard`` is evaluated at the located crossing; a false guard discards it.
    """

    name: str
    fn: Callable[[Sequence[float]], float]
    direction: int = 0
    terminal: bool = False
    guard: Optional[Callable[[Sequence[float]], bool]] = None


@dataclass
class EventRecord:
    name: str
    eta: float
    state: np.ndarray


@dataclass
class Trajectory:
    eta: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    events: list = field(default_factory=list)
    fate: str = "eta_max"
    drift: Optional[np.ndarray] = None
    touches: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.eta)

    def named(self, name: str) -> list:
        return [e for e in self.events if e.name == name]

    def dense(self, eta: float) -> np.ndarray:
        """Cubic Hermite value between the accepted steps bracketing ``eta``."""
        k = int(np.searchsorted(self.eta, eta, side="right")) - 1
        k = min(max(k, 0), len(self.eta) - 2)
        return np.asarray(
            _hermite(
                self.eta[k], self.eta[k + 1], self.states[k], self.states[k + 1],
                self.derivs[k], self.derivs[k + 1], eta,
            )
        )


def _hermite(t0, t1, y0, y1, f0, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    a = 2 * s3 - 3 * s2 + 1
    b = (s3 - 2 * s2 + s) * h
    c = -2 * s3 + 3 * s2
    d = (s3 - s2) * h
    return [a * p + b * q + c * r + d * w for p, q, r, w in zip(y0, f0, y1, f1)]


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _dp_step(f: Field, t: float, y: list, k1: list, h: float):
    dim = len(y)
    ks = [k1]
    for i in range(1, 7):
        a = _A[i]
        yi = [y[j] + h * sum(a[r] * ks[r][j] for r in range(i)) for j in range(dim)]
        ks.append(list(f(t + _C[i] * h, yi)))
    y1 = yi  # stage 7 node equals the 5th order solution (FSAL)
    err = [h * sum(_E[r] * ks[r][j] for r in range(7)) for j in range(dim)]
    return y1, ks[6], err


def _rk4_step(f: Field, t: float, y: list, k1: list, h: float) -> list:
    h2 = 0.5 * h
    k2 = f(t + h2, [a + h2 * b for a, b in zip(y, k1)])
    k3 = f(t + h2, [a + h2 * b for a, b in zip(y, k2)])
    k4 = f(t + h, [a + h * b for a, b in zip(y, k3)])
    return [a + h / 6 * (p + 2 * q + 2 * r + s) for a, p, q, r, s in zip(y, k1, k2, k3, k4)]


def _finite(v: Sequence[float]) -> bool:
    return all(math.isfinite(c) for c in v)


def _initial_step(f: Field, t: float, y: list, f0: list, cfg: IntegratorConfig) -> float:
    sc = [cfg.abs_tol + cfg.rel_tol * abs(c) for c in y]
    d0 = math.sqrt(sum((a / s) ** 2 for a, s in zip(y, sc)) / len(y))
    d1 = math.sqrt(sum((a / s) ** 2 for a, s in zip(f0, sc)) / len(y))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = [a + h0 * b for a, b in zip(y, f0)]
    f1 = f(t + h0, y1)
    d2 = math.sqrt(sum(((a - b) / s) ** 2 for a, b, s in zip(f1, f0, sc)) / len(y)) / h0
    big = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if big <= 1e-15 else (0.01 / big) ** 0.2
    return min(100 * h0, h1, cfg.max_step, cfg.eta_max)


def _locate(ev: EventSpec, t0, t1, y0, y1, f0, f1, g0, tol, restep=None):
    """Bisect the event function on the Hermite interpolant, then polish by re-stepping.

    The interpolant is only fourth-order accurate; ``restep(te)`` returns the
    state from a fresh step out of (t0, y0), and a few secant-slope Newton
    corrections move te onto the zero of that state's event value.
    """
    a, b = t0, t1
    ga = g0
    while b - a > tol:
        mid = 0.5 * (a + b)
        gm = ev.fn(_hermite(t0, t1, y0, y1, f0, f1, mid))
        if gm == 0:
            a = b = mid
            break
        if (ga < 0) == (gm < 0):
            a, ga = mid, gm
        else:
            b = mid
    te = 0.5 * (a + b)
    if restep is None:
        return te, _hermite(t0, t1, y0, y1, f0, f1, te)
    d = max(1e-7 * (t1 - t0), 4 * tol)
    ye = restep(te)
    for _ in range(4):
        g = ev.fn(ye)
        slope = (ev.fn(_hermite(t0, t1, y0, y1, f0, f1, te + d))
                 - ev.fn(_hermite(t0, t1, y0, y1, f0, f1, te - d))) / (2 * d)
        if slope == 0 or not math.isfinite(slope):
            break
        dt = -g / slope
        cand = min(max(te + dt, t0), t1)
        if cand <= t0 or cand >= t1:
            break
        te = cand
        ye = restep(te)
        if abs(dt) <= tol:
            break
    return te, ye


def _restepper(f: Field, t0: float, y0: list, f0: list, adaptive: bool):
    def run(te):
        if te <= t0:
            return list(y0)
        if adaptive:
            return _dp_step(f, t0, y0, f0, te - t0)[0]
        return _rk4_step(f, t0, y0, f0, te - t0)

    return run


def _crossed(ev: EventSpec, g0: float, g1: float) -> bool:
    up = g0 < 0 <= g1
    down = g0 > 0 >= g1
    if ev.direction > 0:
        return up
    if ev.direction < 0:
        return down
    return up or down


def integrate(
    f: Field,
    start: Sequence[float],
    config: Optional[IntegratorConfig] = None,
    events: Sequence[EventSpec] = (),
    eta0: float = 0.0,
    monitor: Optional[Callable[[Sequence[float]], float]] = None,
) -> Trajectory:
    """Advance ``start`` from ``eta0`` to ``eta0 + eta_max`` or a terminal event."""
    cfg = config or IntegratorConfig()
    y = [float(c) for c in start]
    t = float(eta0)
    t_end = t + cfg.eta_max
    fy = list(f(t, y))
    if not (_finite(y) and _finite(fy)):
        raise NonFiniteState(f"non-finite field at start {y}")
    ts, ys, fs = [t], [y], [fy]
    records: list = []
    touches: list = []
    gvals = [ev.fn(y) for ev in events]
    fate = "eta_max"
    adaptive = cfg.method == "adaptive"
    h = _initial_step(f, t, y, fy, cfg) if adaptive else cfg.step

    while t < t_end:
        if adaptive:
            h = min(h, cfg.max_step, t_end - t)
            y1, f1, err = _dp_step(f, t, y, fy, h)
            sc = [cfg.abs_tol + cfg.rel_tol * max(abs(a), abs(b)) for a, b in zip(y, y1)]
            enorm = math.sqrt(sum((e / s) ** 2 for e, s in zip(err, sc)) / len(y))
            if not math.isfinite(enorm) or enorm > 1.0:
                fac = 0.2 if not math.isfinite(enorm) else max(0.2, 0.9 * enorm ** -0.2)
                h *= fac
                if h < cfg.min_step:
                    raise StepUnderflow(f"step {h:.3e} below minimum at eta={t:.6g}")
                continue
            t1 = t + h
            h_next = h * min(5.0, 0.9 * enorm ** -0.2 if enorm > 0 else 5.0)
        else:
            hh = min(cfg.step, t_end - t)
            if t_end - t - hh < 1e-12 * max(1.0, abs(t_end)):
                hh = t_end - t
            y1 = _rk4_step(f, t, y, fy, hh)
            t1 = t + hh
            f1 = None
        if not _finite(y1):
            raise NonFiniteState(f"non-finite state at eta={t1:.6g}")
        if f1 is None:
            f1 = list(f(t1, y1))
        if not _finite(f1):
            raise NonFiniteState(f"non-finite field at eta={t1:.6g}")

        # events inside [t, t1]
        hits = []
        new_g = []
        for i, ev in enumerate(events):
            g1 = ev.fn(y1)
            new_g.append(g1)
            if _crossed(ev, gvals[i], g1):
                te, ye = _locate(ev, t, t1, y, y1, fy, f1, gvals[i], cfg.event_tol, _restepper(f, t, y, fy, adaptive))
                if ev.guard is None or ev.guard(ye):
                    hits.append((te, i, ye))
            elif ev.direction == 0 and abs(g1) < cfg.touch_tol and gvals[i] != 0:
                touches.append((ev.name, t1))
        hits.sort(key=lambda r: r[0])
        stop = None
        for te, i, ye in hits:
            records.append(EventRecord(events[i].name, te, np.array(ye)))
            if events[i].terminal:
                stop = (te, i, ye)
                break
        if stop is not None:
            te, i, ye = stop
            if te > t:
                ts.append(te)
                ys.append(list(ye))
                fs.append(list(f(te, ye)))
            fate = f"event:{events[i].name}"
            break

        t, y, fy = t1, y1, f1
        gvals = new_g
        ts.append(t)
        ys.append(y)
        fs.append(fy)
        if max(abs(c) for c in y) > cfg.r_max:
            fate = "diverged"
            break
        if adaptive:
            h = h_next

    states = np.array(ys)
    drift = None
    if cfg.drift_monitor and monitor is not None:
        drift = np.array([monitor(s) for s in ys])
    return Trajectory(
        eta=np.array(ts), states=states, derivs=np.array(fs), events=records,
        fate=fate, drift=drift, touches=touches,
    )
