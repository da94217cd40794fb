import math

import numpy as np
import pytest
import sympy as sp

from einstein_ode.barriers import (
    b_coefficient, bqk_point, degenerate_union_check, eval_barriers, gap_a, gap_b, gap_jensen_offset,
    gap_p, gap_rf_offset, gap_x1_minus_x2, gap_y_over_z, grad_a, grad_b, grad_p, in_invariant_curve,
    in_S, in_W, rf_offset_derivative, sample_boundary_inward_check,
)
from einstein_ode.critical import point
from einstein_ode.integrator import IntegratorConfig, integrate
from einstein_ode.model import ModelParams, make_field, vector_field

from conftest import surface_states
from test_model import M, X1, X2, Y, Z


def symbolic_barriers():
    n = 4 * M + 3
    H = 3 * X1 + 4 * M * X2
    W = (1 - H**2) / n
    R1 = 2 * Y**2 + 4 * M * Z**2
    R2 = (4 * M + 8) * Y * Z - 6 * Z**2
    U = X1 + 2 * M / 3 * X2
    A = Y * X2 - 3 / M * Z * U
    B = W - 2 * n**2 * (2 * M + 3) * (M - 1) / (M * (2 * M + 1) * (8 * M + 3)) * Y * Z
    P = X1 * (R2 - W) - X2 * (R1 - W) - 2 * X2 * U * (X1 - X2)
    Q = (-4 * X2 * Y**2 - (4 * M + 8) * (4 * M * X2 + 2 * X1) * Y * Z + (2 * X1 + (4 * M + 2) * X2) * W
         + 4 * X2 * U * (H + 2 * M / 3 * X2))
    Ac = Y * X2 - (M + 2) / M * Z * U
    return [A, B, P, Q, Ac]


def test_values_at_p0plus():
    for m in (1, 2):
        p = ModelParams(m)
        bv = eval_barriers(point("P0+", p).coords, p)
        assert bv.a == 0 and bv.p == 0 and abs(bv.b) < 1e-15
        assert bv.q == 0


def test_against_symbolic_oracle():
    exprs = symbolic_barriers()
    rng = np.random.default_rng(3)
    for s in rng.uniform(-1, 1, (20, 4)):
        sub = dict(zip((X1, X2, Y, Z), (sp.Rational(str(v)) for v in s)))
        sub[M] = 3
        got = eval_barriers(s, ModelParams(3))
        for g, e in zip(got, exprs):
            exact = float(e.subs(sub))
            assert g == pytest.approx(exact, rel=1e-13, abs=1e-15)


def test_b_coefficient_closed_form():
    assert b_coefficient(ModelParams(1)) == 0
    assert b_coefficient(ModelParams(2)) == pytest.approx(2 * 121 * 7 / (2 * 5 * 19))


def test_set_membership_examples():
    p1, p2 = ModelParams(1), ModelParams(2)
    assert in_S(point("P0+", p2).coords, p2)
    assert in_S((0.0, 0.0, math.sqrt(1 / 7), 0.0), p1)
    assert in_invariant_curve(point("P0+", p1).coords, p1, "BQK")
    assert in_invariant_curve(point("P2+", p2).coords, p2, "JensenLine")
    assert in_invariant_curve(point("P1+", p2).coords, p2, "SphereLine")
    assert not in_invariant_curve(point("P1+", p2).coords, p2, "BQK")
    with pytest.raises(ValueError):
        in_invariant_curve(point("P1+", p2).coords, p2, "nope")


def test_in_w_on_a_surface_point():
    p = ModelParams(2)
    pts = surface_states(2, 400, seed=5, box=0.5)
    w = [s for s in pts if s[3] > s[2] and s[0] > s[1]]
    assert w and all(in_W(s, p) for s in w)
    assert not any(in_W(s, p) for s in pts if s[3] < s[2] - 1e-6)


@pytest.mark.parametrize("which,grad", [("A", grad_a), ("B", grad_b), ("P", grad_p)])
@pytest.mark.parametrize("m", [1, 2, 5])
def test_gradients_against_finite_differences(which, grad, m):
    p = ModelParams(m)
    idx = "ABP".index(which)
    h = 1e-6
    for s in np.random.default_rng(m).uniform(-1, 1, (50, 4)):
        g = np.array(grad(s, p))
        fd = np.array([
            (eval_barriers(s + h * e, p)[idx] - eval_barriers(s - h * e, p)[idx]) / (2 * h)
            for e in np.eye(4)
        ])
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-6)


def _lhs(grad, s, p):
    return float(np.dot(grad(s, p), vector_field(s, p)))


@pytest.mark.parametrize("m", [1, 2, 5])
def test_identity_gaps_on_surface(m):
    p = ModelParams(m)
    states = surface_states(m, 10_000, seed=11 * m)
    worst = {}
    for s in states:
        s = tuple(s)
        checks = [
            ("B", gap_b(s, p), _lhs(grad_b, s, p)),
            ("P", gap_p(s, p), _lhs(grad_p, s, p)),
            ("Y/Z", gap_y_over_z(s, p), 1.0),
            ("X1-X2", gap_x1_minus_x2(s, p), 1.0),
            ("Jensen", gap_jensen_offset(s, p), 1.0),
            ("RF", gap_rf_offset(s, p), rf_offset_derivative(s, p)),
        ]
        if abs(s[0] + 2 * m / 3 * s[1]) > 1e-3 and s[3] != 0:
            checks.append(("A", gap_a(s, p), _lhs(grad_a, s, p) / abs(s[0] + 2 * m / 3 * s[1])))
        for name, gap, lhs in checks:
            scale = 1.0 + abs(lhs) + float(np.dot(s, s)) ** 2
            worst[name] = max(worst.get(name, 0.0), abs(gap) / scale)
    assert max(worst.values()) < 1e-9, worst


def test_a_identity_holds_off_surface():
    p = ModelParams(2)
    for s in np.random.default_rng(1).uniform(-1, 1, (500, 4)):
        if abs(s[0] + 4 / 3 * s[1]) > 1e-2:
            assert abs(gap_a(tuple(s), p)) < 1e-9 * (1 + float(np.dot(s, s)) ** 3)


def test_p_identity_with_p_enforced():
    # on {P = 0} the derivative of P reduces to (X1 - X2) Q
    p = ModelParams(2)
    hits = sample_boundary_inward_check(["P"], 50, p, rng_seed=4, keep_points=True).faces["P"].points
    for s in hits:
        bv = eval_barriers(s, p)
        assert abs(bv.p) < 1e-9
        assert _lhs(grad_p, s, p) == pytest.approx((s[0] - s[1]) * bv.q, abs=1e-9)


def test_gap_a_division_by_zero():
    with pytest.raises(ZeroDivisionError):
        gap_a((0.0, 0.0, 0.3, 0.1), ModelParams(2))


def test_gaps_vanish_at_p0plus():
    p = ModelParams(2)
    s = point("P0+", p).coords
    assert gap_b(s, p) == pytest.approx(0, abs=1e-15)
    assert gap_p(s, p) == pytest.approx(0, abs=1e-15)


def rf_face_points(m, count=20):
    """Points with H = 1, X2 - X1 + Y - (2m+3)Z = 0 on E, built from the restricted conservation law."""
    out = []
    for z in np.linspace(0.0, 0.05, count):
        qa, qb = 18 * (2 * m + 1), 8 * m * (8 * m * m + 16 * m + 3) * z
        qc = 24 * m * (2 * m * m + 4 * m + 3) * z * z - (4 * m + 2)
        y = (-qb + math.sqrt(qb * qb - 4 * qa * qc)) / (2 * qa)
        e = y - (2 * m + 3) * z
        if e < 0:
            continue
        x2 = (1 - 3 * e) / (3 + 4 * m)
        out.append((x2 + e, x2, y, z))
    return out


def test_rf_offset_derivative_degenerates_for_m1():
    from einstein_ode.model import conservation_residual

    pts = rf_face_points(1)
    assert len(pts) > 5
    for s in pts:
        assert abs(conservation_residual(s, ModelParams(1))) < 1e-14
        assert abs(rf_offset_derivative(s, ModelParams(1))) < 1e-12
    strict = [rf_offset_derivative(s, ModelParams(2)) for s in rf_face_points(2)]
    assert min(strict) >= -1e-12 and max(strict) > 1e-3


def test_bqk_field_is_tangent():
    for m in (1, 2, 5):
        p = ModelParams(m)
        for x1 in np.linspace(0.02, 0.32, 16):
            s = bqk_point(float(x1), p)
            v = vector_field(s, p)
            assert abs(v[0] - v[1] + v[3] - v[2]) < 1e-14
            assert abs(v[1] + v[3]) < 1e-14


def test_bqk_confinement():
    # Start next to P0+ so the span covers the curve; near P1- it repels and rounding grows like e^eta.
    for m in (1, 2):
        p = ModelParams(m)
        start = bqk_point(1 / 3 - 1e-6, p)
        assert in_invariant_curve(start, p, "BQK")
        traj = integrate(make_field(p), start, IntegratorConfig(eta_max=30.0, max_step=0.05))
        x1, x2, y, z = traj.states.T
        assert traj.eta[-1] == pytest.approx(30.0)
        assert x1[-1] < 0
        assert np.max(np.abs(x1 - x2 + z - y)) < 1e-7
        assert np.max(np.abs(x2 + z)) < 1e-7


@pytest.mark.parametrize("m", [2, 5])
def test_inward_on_every_face(m):
    rep = sample_boundary_inward_check(["A", "B", "P"], 1000, ModelParams(m), rng_seed=42)
    assert not rep.degenerate
    for face, fr in rep.faces.items():
        assert fr.samples == 1000
        assert fr.violations == 0, face
        assert fr.min_inward >= -1e-10


def test_m1_sampler_reports_degenerate():
    p = ModelParams(1)
    rep = sample_boundary_inward_check(["A"], 10, p, max_attempts=20_000)
    assert rep.degenerate and rep.faces["A"].samples == 0
    chk = degenerate_union_check(p)
    assert chk["gamma_in_S"] and chk["jensen_in_S"]
