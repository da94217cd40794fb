"""Shooting along the two unstable families and heterocline bisection.

The Gamma family leaves P0+ along ``v1 + s v2`` and the Zeta family leaves
P1+ along ``w1 + s w2``.  Each shot is integrated until it falls into a small
ball around a sink, diverges, or reaches the horizon.  Along the way it
records the turning point (H = 0), W-intersections (Y = Z with H > 0) and
transversal zeros of X1 - X2 while H > 0 and Y > Z; the number of those zeros
is the count that labels the shot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .critical import CriticalPoint, catalog, closed_form_eigenvectors, point, stability_class
from .integrator import EventSpec, IntegratorConfig, Trajectory, integrate
from .model import ModelParams, StateXYZ, conservation_residual, make_field, newton_project

DEFAULT_EPS = 1e-7
SINK_RADIUS = 1e-3


class Family(str, Enum):
    GAMMA = "gamma"
    ZETA = "zeta"


class Fate(str, Enum):
    P0_MINUS = "ConvergesP0Minus"
    P1_MINUS = "ConvergesP1Minus"
    Q1_MINUS = "ConvergesQ1Minus"
    Q2_MINUS = "ConvergesQ2Minus"
    Q3_MINUS = "ConvergesQ3Minus"
    DIVERGED = "Diverged"
    HORIZON = "HorizonReached"


_SINK_FATES = {"Q1-": Fate.Q1_MINUS, "Q2-": Fate.Q2_MINUS, "Q3-": Fate.Q3_MINUS}


class NoTransitionInBracket(ValueError):
    pass


class PoleAtS2(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class ShotSpec:
    family: Family
    s: float
    params: ModelParams
    epsilon: float = DEFAULT_EPS


@dataclass
class ShotConfig:
    integrator: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(eta_max=2000.0))
    sink_radius: float = SINK_RADIUS


@dataclass
class ShotOutcome:
    fate: Fate
    terminal: Fate  # where the orbit ends, ignoring close passes by P0-/P1-
    c_count: int
    turning_eta: Optional[float]
    w_intersection_eta: Optional[float]
    min_dist_p0minus: float
    min_dist_p1minus: float
    sqrt_zy_count: int
    turning_count: int

    @property
    def min_dist_to_target(self) -> float:
        return min(self.min_dist_p0minus, self.min_dist_p1minus)

    @property
    def label(self) -> tuple:
        """Discrete observable used for scans and bisection."""
        return (self.terminal.value, self.c_count)


def _offset(family: Family, s: float, eps: float, params: ModelParams) -> tuple:
    if family == Family.GAMMA:
        base = np.array(point("P0+", params).coords)
        vecs = closed_form_eigenvectors("P0+", params)
    else:
        base = np.array(point("P1+", params).coords)
        vecs = closed_form_eigenvectors("P1+", params)
    a = np.array(vecs[0][1], dtype=float)
    b = np.array(vecs[1][1], dtype=float)
    return base, base + eps * (a + s * b)


def seed_gamma(s1: float, epsilon: float, params: ModelParams, project: bool = True) -> StateXYZ:
    if not s1 > -3:
        raise ValueError(f"Gamma seeds need s1 > -3, got {s1}")
    _, raw = _offset(Family.GAMMA, s1, epsilon, params)
    return newton_project(raw, params) if project else StateXYZ(*raw)


def seed_zeta(s2: float, epsilon: float, params: ModelParams, project: bool = True) -> StateXYZ:
    _, raw = _offset(Family.ZETA, s2, epsilon, params)
    return newton_project(raw, params) if project else StateXYZ(*raw)


def seed(spec: ShotSpec) -> StateXYZ:
    if spec.family == Family.GAMMA:
        return seed_gamma(spec.s, spec.epsilon, spec.params)
    return seed_zeta(spec.s, spec.epsilon, spec.params)


def sinks(params: ModelParams) -> list:
    """Catalog points that attract within E, by computed stability class."""
    return [p for p in catalog(params) if stability_class(p, params) == "sink"]


def shot_events(params: ModelParams, sink_radius: float = SINK_RADIUS) -> list:
    m = float(params.m)

    def hval(s):
        return 3 * s[0] + 4 * m * s[1]

    evs = [
        EventSpec("turning", hval, direction=-1),
        EventSpec("w_intersection", lambda s: s[2] - s[3], direction=-1, guard=lambda s: hval(s) > 0),
        EventSpec(
            "c_zero", lambda s: s[0] - s[1], direction=0,
            guard=lambda s: hval(s) > 0 and s[2] - s[3] > 0 and s[3] > 0,
        ),
    ]
    for p in sinks(params):
        c = tuple(p.coords)

        def dist(s, c=c):
            return math.sqrt(sum((a - b) ** 2 for a, b in zip(s, c))) - sink_radius

        evs.append(EventSpec("sink:" + p.name, dist, direction=-1, terminal=True))
    return evs


def closest_approach(traj: Trajectory, target: Sequence[float]) -> tuple:
    """Minimum distance from the orbit to ``target`` with Hermite refinement."""
    tgt = np.asarray(target, dtype=float)
    d = np.linalg.norm(traj.states - tgt, axis=1)
    k = int(np.argmin(d))
    best, best_eta = float(d[k]), float(traj.eta[k])
    for lo, hi in ((k - 1, k), (k, k + 1)):
        if lo < 0 or hi >= len(traj):
            continue
        a, b = float(traj.eta[lo]), float(traj.eta[hi])
        for _ in range(60):
            c1, c2 = a + (b - a) / 3, b - (b - a) / 3
            if np.linalg.norm(traj.dense(c1) - tgt) < np.linalg.norm(traj.dense(c2) - tgt):
                b = c2
            else:
                a = c1
        e = 0.5 * (a + b)
        v = float(np.linalg.norm(traj.dense(e) - tgt))
        if v < best:
            best, best_eta = v, e
    return best, best_eta


def sqrt_zy_critical_count(traj: Trajectory, params: ModelParams) -> int:
    """Critical points of sqrt(Z/Y) on the counted region.

    An independent route to the zero count of X1 - X2: the slope of
    log(Z/Y) comes from the stored Y' and Z' alone.  Each sign change is
    placed by linear interpolation and kept when the dense state there lies
    in the region H > 0, Y > Z > 0.
    """
    m = params.m
    s, ds = traj.states, traj.derivs
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = ds[:, 3] / s[:, 3] - ds[:, 2] / s[:, 2]

    def inside(st):
        return 3 * st[0] + 4 * m * st[1] > 0 and st[2] - st[3] > 0 and st[3] > 0

    count = 0
    for k in range(len(slope) - 1):
        a, b = slope[k], slope[k + 1]
        if not (np.isfinite(a) and np.isfinite(b)) or a == 0 or (a > 0) == (b > 0):
            continue
        e = traj.eta[k] + a / (a - b) * (traj.eta[k + 1] - traj.eta[k])
        if inside(traj.dense(e)):
            count += 1
    return count


def shoot(spec: ShotSpec, config: Optional[ShotConfig] = None) -> tuple:
    cfg = config or ShotConfig()
    params = spec.params
    start = seed(spec)
    traj = integrate(
        make_field(params), start, cfg.integrator, shot_events(params, cfg.sink_radius),
        monitor=lambda s: conservation_residual(s, params),
    )
    return traj, classify(traj, params, cfg.sink_radius)


def classify(traj: Trajectory, params: ModelParams, sink_radius: float = SINK_RADIUS) -> ShotOutcome:
    d0, _ = closest_approach(traj, point("P0-", params).coords)
    d1, _ = closest_approach(traj, point("P1-", params).coords)
    if traj.fate.startswith("event:sink:"):
        terminal = _SINK_FATES[traj.fate.split(":")[-1]]
    elif traj.fate == "diverged":
        terminal = Fate.DIVERGED
    else:
        terminal = Fate.HORIZON
    fate = terminal
    if d0 < sink_radius:
        fate = Fate.P0_MINUS
    elif d1 < sink_radius:
        fate = Fate.P1_MINUS
    turns = traj.named("turning")
    ws = traj.named("w_intersection")
    return ShotOutcome(
        fate=fate,
        terminal=terminal,
        c_count=len(traj.named("c_zero")),
        turning_eta=turns[0].eta if turns else None,
        w_intersection_eta=ws[0].eta if ws else None,
        min_dist_p0minus=d0,
        min_dist_p1minus=d1,
        sqrt_zy_count=sqrt_zy_critical_count(traj, params),
        turning_count=len(turns),
    )


def scan(
    family: Family, s_values: Iterable[float], params: ModelParams, config: Optional[ShotConfig] = None,
    epsilon: float = DEFAULT_EPS,
) -> list:
    out = []
    for s in s_values:
        _, oc = shoot(ShotSpec(Family(family), float(s), params, epsilon), config)
        out.append((float(s), oc))
    return out


def transitions(results: Sequence[tuple]) -> list:
    """Adjacent scan nodes whose labels differ: (s_lo, s_hi, label_lo, label_hi)."""
    res = sorted(results, key=lambda r: r[0])
    out = []
    for (sa, oa), (sb, ob) in zip(res, res[1:]):
        if oa.label != ob.label:
            out.append((sa, sb, oa.label, ob.label))
    return out


@dataclass
class Heterocline:
    s_star: float
    min_dist: float
    s_lo: float
    s_hi: float
    lo: ShotOutcome
    hi: ShotOutcome
    iterations: int


def find_heterocline(
    family: Family, bracket: tuple, target: CriticalPoint, params: ModelParams,
    config: Optional[ShotConfig] = None, tol: float = 1e-10, epsilon: float = DEFAULT_EPS,
) -> Heterocline:
    """Bisect on the shot label until the bracket is narrower than ``tol``."""
    fam = Family(family)

    def run(s):
        return shoot(ShotSpec(fam, s, params, epsilon), config)

    lo, hi = float(bracket[0]), float(bracket[1])
    (_, olo), (_, ohi) = run(lo), run(hi)
    if olo.label == ohi.label:
        raise NoTransitionInBracket(f"label {olo.label} at both ends of [{lo}, {hi}]")
    it = 0
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        _, om = run(mid)
        if om.label == olo.label:
            lo, olo = mid, om
        else:
            hi, ohi = mid, om
        it += 1
    tgt = np.asarray(target.coords)
    dist = min(_dist_to(run(lo)[0], tgt), _dist_to(run(hi)[0], tgt))
    return Heterocline(0.5 * (lo + hi), dist, lo, hi, olo, ohi, it)


def _dist_to(traj: Trajectory, tgt: np.ndarray) -> float:
    return closest_approach(traj, tgt)[0]


def initial_f_printed(s1: float, params: ModelParams) -> float:
    if not s1 > -3:
        raise ValueError("s1 must exceed -3")
    m, n = params.m, params.n
    return math.sqrt((6 * m + 18) / (n * (3 + s1)))


def singular_orbit_radius(state: Sequence[float], params: ModelParams) -> float:
    """The back-transformed f2 evaluated at a state."""
    x1, x2, y, z = state
    m, n = params.m, params.n
    h = 3 * x1 + 4 * m * x2
    return math.sqrt((1 - h * h) / (n * params.lam)) / math.sqrt(y * z)


@dataclass
class InitialF:
    printed: float
    closed_form_s1_zero: float
    numeric: float


def initial_f_of_s1(s1: float, params: ModelParams, epsilon: float = DEFAULT_EPS) -> InitialF:
    """Printed singular-orbit radius next to its value extrapolated along the shot.

    The numeric value fits f2 against the distance from P0+ over the first
    samples of the trajectory and reports the intercept.
    """
    printed = initial_f_printed(s1, params)
    m, n = params.m, params.n
    qk = math.sqrt(4 * (m + 3) / n)
    cfg = ShotConfig(IntegratorConfig(eta_max=12.0, max_step=0.25))
    traj, _ = shoot(ShotSpec(Family.GAMMA, s1, params, epsilon), cfg)
    base = np.array(point("P0+", params).coords)
    d = np.linalg.norm(traj.states - base, axis=1)
    sel = d < 1e-3
    f2 = np.array([singular_orbit_radius(s, params) for s in traj.states[sel]])
    coef = np.polyfit(d[sel], f2, 2)
    return InitialF(printed, qk, float(coef[-1]))


def second_derivative_ratio_of_s2(s2: float, params: ModelParams) -> float:
    m, n = params.m, params.n
    den = 1 + 6 * m * s2
    if den == 0:
        raise PoleAtS2("1 + 6 m s2 = 0")
    return n / (4 * m * den) - 9 / (12 * m)


def with_horizon(config: ShotConfig, eta_max: float) -> ShotConfig:
    return replace(config, integrator=replace(config.integrator, eta_max=eta_max))
