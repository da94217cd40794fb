import math

import numpy as np
import pytest

from einstein_ode.critical import point, z0
from einstein_ode.model import ModelParams, vector_field
from einstein_ode.winding import (
    AngleUndefined, DomainError, PsiConfig, _axis_kernel, angle_catalog, axis_rate, axis_rate_closed,
    classify_limit, cyl_vector_field, from_cylindrical, h1_junction, integrate_pi, integrate_psi,
    theta_barrier_m1, to_cylindrical, verify_barrier_m1,
)

from conftest import surface_states


def reference_omega(m, step=0.02, factor=80):
    """Plain RK4 on the tanh form of the angle equation, independent of the compiled kernel."""
    n = 4 * m + 3
    k = 2 / n * math.sqrt((2 * m + 1) * (2 * m + 2) * (2 * m + 3) / ((2 * m + 3) ** 2 + 2 * m))

    def rate(eta, th):
        return (n - 1) / (2 * n) * math.tanh(eta / n) * math.sin(2 * th) + k

    th, eta = 0.0, 0.0
    for _ in range(int(factor * n / step)):
        k1 = rate(eta, th)
        k2 = rate(eta + step / 2, th + step / 2 * k1)
        k3 = rate(eta + step / 2, th + step / 2 * k2)
        k4 = rate(eta + step, th + step * k3)
        th += step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        eta += step
    return th


@pytest.mark.parametrize("m", [1, 2, 5])
def test_cylindrical_round_trip(m):
    p = ModelParams(m)
    for s in np.random.default_rng(m).uniform(-1, 1, (10_000, 4)):
        c = to_cylindrical(s, p)
        if c.r <= 1e-6:
            continue
        assert c.r * math.sin(c.theta) == pytest.approx(s[0] - s[1], abs=1e-12)
        back = from_cylindrical(c, p)
        assert np.allclose(back, s, atol=1e-12, rtol=0)


def test_cylindrical_critical_points_m1():
    p = ModelParams(1)
    c0 = to_cylindrical(point("P0+", p).coords, p)
    assert c0.h == pytest.approx(1, abs=1e-15)
    assert c0.r == pytest.approx(math.sqrt(9 / 5) / 3, abs=1e-15)
    assert c0.theta == pytest.approx(math.atan(math.sqrt(5 / 4)), abs=1e-15)
    assert c0.y == pytest.approx(1 / 3, abs=1e-15)
    c1 = to_cylindrical(point("P1+", p).coords, p)
    assert c1.r == pytest.approx(math.sqrt(4 / 5) * 4 / 7, abs=1e-15)
    assert c1.theta == pytest.approx(math.pi, abs=1e-15)
    assert c1.y == pytest.approx(1 / 7, abs=1e-15)


def test_axis_has_zero_radius():
    p = ModelParams(2)
    s = (0.05, 0.05, 7 * z0(p), z0(p))
    with pytest.raises(AngleUndefined):
        to_cylindrical(s, p)
    assert to_cylindrical(s, p, prev_theta=1.25) == (pytest.approx(0.55), 0.0, 1.25, pytest.approx(7 * z0(p)))


def test_unwrapping_follows_previous_angle():
    p = ModelParams(1)
    s = (0.1, 0.2, 0.3, 0.01)
    base = to_cylindrical(s, p).theta
    assert to_cylindrical(s, p, prev_theta=base + 4 * math.pi + 0.1).theta == pytest.approx(base + 4 * math.pi)


@pytest.mark.parametrize("m", [1, 2, 5])
def test_cylindrical_field_is_pushforward(m):
    p = ModelParams(m)
    h = 1e-6
    for s in surface_states(m, 200, seed=7, box=0.6):
        c = to_cylindrical(s, p)
        if c.r < 1e-2:
            continue
        v = np.array(vector_field(s, p))
        fwd = to_cylindrical(s + h * v, p, prev_theta=c.theta)
        bwd = to_cylindrical(s - h * v, p, prev_theta=c.theta)
        fd = (np.array(fwd) - np.array(bwd)) / (2 * h)
        got = np.array(cyl_vector_field(c, p))
        assert np.allclose(got, fd, rtol=1e-7, atol=1e-8)


def test_axis_restriction_matches_subsystem():
    p = ModelParams(2)
    n = p.n
    for h in (-0.5, 0.0, 0.7):
        for th in (0.3, 1.9):
            v = cyl_vector_field((h, 0.0, th, 7 * z0(p)), p)
            assert v[1] == 0 and v[0] == pytest.approx((h * h - 1) / n)
            expect = axis_rate(p) - (n - 1) / n * h * math.sin(th) * math.cos(th)
            assert v[2] == pytest.approx(expect, abs=1e-15)


def test_angle_catalog_m1():
    cat = angle_catalog(ModelParams(1))
    assert cat.a_plus(0) == pytest.approx(math.atan(2 / math.sqrt(5)), abs=1e-14)
    assert cat.a_plus(0) == pytest.approx(0.7297, abs=1e-4)
    assert cat.a_minus(1) == pytest.approx(math.pi - math.atan(2 * math.sqrt(5) / 5), abs=1e-14)
    assert cat.b_plus(0) == pytest.approx(math.atan(math.sqrt(5 / 4)), abs=1e-14)
    assert cat.b_plus(0) == pytest.approx(0.8411, abs=1e-4)


@pytest.mark.parametrize("m", range(1, 21))
def test_angle_interval_placement(m):
    cat = angle_catalog(ModelParams(m))
    q = math.pi / 4
    for i in (-1, 0, 2):
        o = i * math.pi
        assert o < cat.a_plus(i) < q + o
        assert q + o < cat.b_plus(i) < 2 * q + o
        assert -2 * q + o < cat.b_minus(i) < -q + o
        assert -q + o < cat.a_minus(i) < o


def test_axis_constant():
    assert axis_rate(ModelParams(1)) == pytest.approx(4 * math.sqrt(5) / 21, abs=1e-15)
    assert axis_rate(ModelParams(2)) == pytest.approx(2 / 11 * math.sqrt(210 / 53), abs=1e-15)
    for m in range(1, 30):
        assert axis_rate(ModelParams(m)) == pytest.approx(axis_rate_closed(ModelParams(m)), rel=1e-14)


def test_omega_m1():
    r = integrate_psi(ModelParams(1))
    assert 3 * math.pi / 2 < r.omega < 7 * math.pi / 4
    assert r.limit_class == "B2-"
    assert r.omega == pytest.approx(reference_omega(1), abs=1e-6)


def test_omega_m2():
    r = integrate_psi(ModelParams(2))
    assert r.omega < 3 * math.pi / 4
    assert r.limit_class == "B1-"
    assert r.omega == pytest.approx(reference_omega(2), abs=1e-6)


@pytest.mark.parametrize("m", [1, 2, 5, 10])
def test_autonomous_and_tanh_forms_agree(m):
    r = integrate_psi(ModelParams(m))
    assert r.autonomous_gap < 1e-8


def test_theta_star_ordering():
    t1 = integrate_pi(ModelParams(1))
    t2 = integrate_pi(ModelParams(2))
    assert t1.theta_star > math.pi
    assert t2.theta_star < math.pi
    for t in (t1, t2):
        assert t.theta_star == pytest.approx(t.autonomous_theta_star, abs=1e-6)


def test_theta_star_consistent_with_psi_limit():
    for m in (2, 3, 6):
        p = ModelParams(m)
        psi = integrate_psi(p)
        assert psi.limit_class.startswith("B")
        assert (integrate_pi(p).theta_star < math.pi) == (psi.limit_class == "B1-")


def test_classify_unresolved_at_midpoint():
    p = ModelParams(2)
    cat = angle_catalog(p)
    mid = 0.5 * (cat.a_minus(1) + cat.b_minus(1))
    assert classify_limit(mid, p)[0] == "Unresolved"
    assert classify_limit(cat.b_minus(1), p)[0] == "B1-"


def test_theta_barrier_examples():
    assert theta_barrier_m1(0.0) == 0.0
    assert h1_junction() == pytest.approx(-0.527, abs=1e-3)
    assert theta_barrier_m1(h1_junction()) == pytest.approx(math.pi / 2, abs=1e-12)
    assert theta_barrier_m1(-1.0) == pytest.approx(math.pi - math.atan(2 * math.sqrt(5) / 5), abs=1e-15)
    for bad in (0.1, -1.5):
        with pytest.raises(DomainError):
            theta_barrier_m1(bad)


def test_theta_barrier_holds_along_psi_m1():
    rep = verify_barrier_m1(integrate_psi(ModelParams(1), PsiConfig(stride=1)))
    # both angles vanish at H = 0, so the gap closes only at that end
    assert rep.holds and rep.samples > 1000
    assert rep.h_at_min > -0.01


@pytest.mark.parametrize("theta0", [0.0, 0.4, 2.0])
def test_translation_symmetry(theta0):
    p = ModelParams(2)
    n, k = float(p.n), axis_rate(p)
    a = _axis_kernel(n, k, 0.0, theta0, 0.01, 4000, 10)
    b = _axis_kernel(n, k, 0.0, theta0 + math.pi, 0.01, 4000, 10)
    assert np.max(np.abs(b[:, 2] - a[:, 2] - math.pi)) < 1e-12
    assert np.array_equal(a[:, 1], b[:, 1])
