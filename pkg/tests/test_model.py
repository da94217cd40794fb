from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from einstein_ode.critical import catalog
from einstein_ode.integrator import IntegratorConfig, integrate
from einstein_ode.model import (
    ModelParams, NegativeY, NoRealRoot, OffSurface, conservation_residual, conservation_residual_reduced,
    derived, h_prime_identity_gap, make_field, newton_project, on_surface, project_to_surface, vector_field,
)

from conftest import random_states, surface_states

X1, X2, Y, Z, M = sp.symbols("X1 X2 Y Z m")


def symbolic_field():
    n = 4 * M + 3
    H = 3 * X1 + 4 * M * X2
    G = 3 * X1**2 + 4 * M * X2**2
    R1 = 2 * Y**2 + 4 * M * Z**2
    R2 = (4 * M + 8) * Y * Z - 6 * Z**2
    L = G + (1 - H**2) / n
    return [
        X1 * (H * (L - 1)) + R1 - (1 - H**2) / n,
        X2 * (H * (L - 1)) + R2 - (1 - H**2) / n,
        Y * (H * L - X1),
        Z * (H * L + X1 - 2 * X2),
    ]


def test_params_relations():
    for m in (1, 2, 7):
        p = ModelParams(m)
        assert p.n == 4 * m + 3 and p.lam == p.n
    with pytest.raises(ValueError):
        ModelParams(0)


def test_derived_examples():
    p = ModelParams(1)
    assert derived((0, 0, 0, 0), p) == (0, 0, 0, 0)
    h, g, r1, r2 = derived((Fraction(1, 3), 0, Fraction(1, 3), 0), p)
    assert (h, g, r1, r2) == (1, Fraction(1, 3), Fraction(2, 9), 0)
    q = Fraction(1, 7)
    assert derived((q, q, q, q), p) == (1, Fraction(1, 7), Fraction(6, 49), Fraction(6, 49))


def test_derived_recomputes_bit_for_bit():
    s = (0.123, -0.456, 0.789, 0.0123)
    assert derived(s, ModelParams(3)) == derived(s, ModelParams(3))


def test_field_vanishes_at_p0_and_p2_exactly():
    p = ModelParams(1)
    third = Fraction(1, 3)
    assert vector_field((third, 0, third, 0), p) == (0, 0, 0, 0)
    s = (Fraction(1, 7), Fraction(1, 7), Fraction(5, 21), Fraction(1, 21))
    assert vector_field(s, p) == (0, 0, 0, 0)


def test_field_matches_symbolic_oracle():
    exprs = symbolic_field()
    for m, s in ((2, (0.1, 0.2, 0.3, 0.4)), (5, (-0.3, 0.05, 0.2, 0.7)), (1, (0.9, -0.4, 0.1, 0.0))):
        sub = {X1: sp.Rational(str(s[0])), X2: sp.Rational(str(s[1])), Y: sp.Rational(str(s[2])),
               Z: sp.Rational(str(s[3])), M: m}
        exact = [sp.Rational(e.subs(sub)) for e in exprs]
        got = vector_field(s, ModelParams(m))
        for a, b in zip(got, exact):
            assert abs(a - float(b)) <= 1e-14 * max(1.0, abs(float(b)))


def test_make_field_agrees_with_vector_field():
    f = make_field(ModelParams(3))
    for s in random_states(50, seed=4):
        assert np.allclose(f(0.0, s), vector_field(s, ModelParams(3)), rtol=1e-15, atol=1e-15)


def test_conservation_examples():
    p = ModelParams(1)
    assert conservation_residual((Fraction(1, 3), 0, Fraction(1, 3), 0), p) == 0
    q = Fraction(1, 7)
    assert conservation_residual((q, q, q, q), p) == 0
    assert conservation_residual((0, 0, 0, 0), p) == pytest.approx(-6 / 7, abs=1e-15)


def test_conservation_forms_agree_everywhere():
    for m in (1, 2, 5):
        p = ModelParams(m)
        s = random_states(2000, seed=m).T
        a = conservation_residual(s, p)
        b = conservation_residual_reduced(s, p)
        assert np.max(np.abs(a - b)) < 1e-12


def test_conservation_forms_agree_symbolically():
    n = 4 * M + 3
    H = 3 * X1 + 4 * M * X2
    full = 3 * X1**2 + 4 * M * X2**2 + (1 - H**2) / n + 6 * Y**2 + 4 * M * (4 * M + 8) * Y * Z - 12 * M * Z**2 - 1
    red = 12 * M / n * (X1 - X2) ** 2 + 6 * Y**2 + 4 * M * (4 * M + 8) * Y * Z - 12 * M * Z**2 - (1 - 1 / n)
    assert sp.simplify(full - red) == 0


@pytest.mark.parametrize("m", [1, 2, 3, 5, 10])
def test_h_prime_identity_on_surface(m):
    p = ModelParams(m)
    s = surface_states(m, 10_000, seed=m)
    gap = h_prime_identity_gap(s.T, p, strict=False)
    scale = 1 + np.sum(s * s, axis=1)
    assert np.max(np.abs(gap) / scale) < 1e-9


def test_h_prime_identity_at_p0_and_off_surface():
    p = ModelParams(1)
    assert h_prime_identity_gap((1 / 3, 0, 1 / 3, 0), p) == pytest.approx(0, abs=1e-16)
    with pytest.raises(OffSurface):
        h_prime_identity_gap((0.3, 0.1, 0.9, 0.4), p)


def test_h_prime_vanishes_on_h_equal_one():
    p = ModelParams(2)
    # points of E with H = 1 and X1 != X2: solve for Y given X1, X2 = (1 - 3 X1) / 8, Z
    for x1 in (0.1, 0.2, 0.25):
        x2 = (1 - 3 * x1) / 8
        s = project_to_surface((x1, x2, 0.01), p)
        v = vector_field(s, p)
        assert abs(3 * v[0] + 8 * v[1]) < 1e-14
        assert abs(h_prime_identity_gap(s, p)) < 1e-14


def test_project_examples():
    p = ModelParams(1)
    s = project_to_surface((1 / 3, 0, 0), p)
    assert s.y == pytest.approx(1 / 3, abs=1e-15)
    s0 = project_to_surface((0, 0, 0), p)
    assert s0.y == pytest.approx(np.sqrt(1 / 7), abs=1e-15)
    with pytest.raises(NoRealRoot):
        project_to_surface((3.0, -3.0, 0.0), p)


def test_project_negative_branch():
    p = ModelParams(2)
    with pytest.raises(NegativeY):
        project_to_surface((0.0, 0.0, 0.1), p, branch=-1)


@settings(max_examples=200, deadline=None)
@given(
    x1=st.floats(-1, 1), x2=st.floats(-1, 1), z=st.floats(0, 1), m=st.integers(1, 20),
)
def test_project_residual_property(x1, x2, z, m):
    p = ModelParams(m)
    try:
        s = project_to_surface((x1, x2, z), p)
    except (NoRealRoot, NegativeY):
        return
    assert abs(conservation_residual(s, p)) <= 1e-14 * (1 + s.y * s.y + 100 * m * m * z * z)
    h = 3 * s.x1 + 4 * m * s.x2
    assert on_surface(s, p) == (h * h <= 1 + 1e-9)


def test_newton_project_lands_on_surface():
    p = ModelParams(2)
    for s in surface_states(2, 50, seed=9):
        t = newton_project(s + 1e-6, p)
        assert abs(conservation_residual(t, p)) < 1e-14


def test_field_zero_at_catalog():
    for m in (1, 2, 3, 10):
        p = ModelParams(m)
        for pt in catalog(p):
            assert max(abs(c) for c in vector_field(pt.coords, p)) < 1e-13


def test_sign_symmetry_reverses_time():
    p = ModelParams(2)
    f = make_field(p)
    s = np.array(surface_states(2, 1, seed=3, box=0.3)[0])
    flip = s * np.array([-1, -1, 1, 1])
    v, vf = np.array(f(0, s)), np.array(f(0, flip))
    # V(-X1,-X2,Y,Z) = (V1, V2, -V3, -V4)(X1,X2,Y,Z)
    assert np.allclose(vf, v * np.array([1, 1, -1, -1]), atol=1e-15)
    cfg = IntegratorConfig(eta_max=3.0, rel_tol=1e-12, abs_tol=1e-14)
    fwd = integrate(f, s, cfg)
    back = integrate(lambda t, u: [-c for c in f(t, u)], flip, cfg)
    end_f = fwd.states[-1] * np.array([-1, -1, 1, 1])
    assert np.allclose(back.states[-1], end_f, atol=1e-9)
