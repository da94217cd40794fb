"""Equilibria of the polynomial field, the analytic Jacobian and eigen-data."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ModelParams, StateXYZ, conservation_gradient

TANGENCY_TOL = 1e-9


class DegenerateEigenbasis(RuntimeError):
    pass


@dataclass(frozen=True)
class CriticalPoint:
    name: str
    coords: StateXYZ


@dataclass
class EigenData:
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, unit norm, first nonzero entry positive
    tangency: np.ndarray  # per column: tangent to the conservation surface


def z0(params: ModelParams) -> float:
    m, n = params.m, params.n
    return math.sqrt((2 * m + 1) / (2 * m + (2 * m + 3) ** 2)) / n


def catalog(params: ModelParams) -> list:
    """All equilibria; the q3 pair exists only for m = 1."""
    m, n = params.m, params.n
    if not params.is_integral:
        raise ValueError("catalog is restricted to integer m")
    zz = z0(params)
    r = math.sqrt(12 * m * m + 6 * m)
    pts = []
    for sgn, tag in ((1, "+"), (-1, "-")):
        pts.append(CriticalPoint("P0" + tag, StateXYZ(sgn / 3, 0.0, 1 / 3, 0.0)))
        pts.append(CriticalPoint("P1" + tag, StateXYZ(sgn / n, sgn / n, 1 / n, 1 / n)))
        pts.append(CriticalPoint("P2" + tag, StateXYZ(sgn / n, sgn / n, (2 * m + 3) * zz, zz)))
        pts.append(CriticalPoint(
            "Q1" + tag, StateXYZ(sgn * (3 + 2 * r) / (3 * n), sgn * (4 * m - 2 * r) / (4 * m * n), 0.0, 0.0)))
        pts.append(CriticalPoint(
            "Q2" + tag, StateXYZ(sgn * (3 - 2 * r) / (3 * n), sgn * (4 * m + 2 * r) / (4 * m * n), 0.0, 0.0)))
        if m == 1:
            pts.append(CriticalPoint(
                "Q3" + tag, StateXYZ(-sgn / 3, sgn * 2 / (4 * m), 0.0, math.sqrt(3 - 2 * m) / (6 * m))))
    return sorted(pts, key=lambda p: p.name)


def point(name: str, params: ModelParams) -> CriticalPoint:
    for p in catalog(params):
        if p.name == name:
            return p
    raise KeyError(f"{name} not in catalog for m={params.m}")


def jacobian(state: Sequence[float], params: ModelParams) -> np.ndarray:
    x1, x2, y, z = (float(c) for c in state)
    m = params.m
    n = 4 * m + 3
    h = 3 * x1 + 4 * m * x2
    w = (1 - h * h) / n
    lag = 3 * x1 * x1 + 4 * m * x2 * x2 + w
    # partials of H and L with respect to (X1, X2)
    hx = (3.0, 4.0 * m)
    lx = (6 * x1 - 6 * h / n, 8 * m * x2 - 8 * m * h / n)
    wx = (-6 * h / n, -8 * m * h / n)
    # d/dx of H(L-1) and of H L
    hl1 = [hx[i] * (lag - 1) + h * lx[i] for i in range(2)]
    hl = [hx[i] * lag + h * lx[i] for i in range(2)]
    J = np.zeros((4, 4))
    J[0, 0] = h * (lag - 1) + x1 * hl1[0] - wx[0]
    J[0, 1] = x1 * hl1[1] - wx[1]
    J[0, 2] = 4 * y
    J[0, 3] = 8 * m * z
    J[1, 0] = x2 * hl1[0] - wx[0]
    J[1, 1] = h * (lag - 1) + x2 * hl1[1] - wx[1]
    J[1, 2] = (4 * m + 8) * z
    J[1, 3] = (4 * m + 8) * y - 12 * z
    J[2, 0] = y * (hl[0] - 1)
    J[2, 1] = y * hl[1]
    J[2, 2] = h * lag - x1
    J[3, 0] = z * (hl[0] + 1)
    J[3, 1] = z * (hl[1] - 2)
    J[3, 3] = h * lag + x1 - 2 * x2
    return J


def _normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if np.allclose(v.imag, 0, atol=1e-14):
        v = v.real.astype(complex)
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v) > 1e-12))
    return v * (abs(v[k]) / v[k])


def eigen(pt: CriticalPoint, params: ModelParams) -> EigenData:
    J = jacobian(pt.coords, params)
    vals, vecs = np.linalg.eig(J)
    order = np.lexsort((vals.imag, vals.real))
    vals = vals[order]
    vecs = np.column_stack([_normalize(vecs[:, k]) for k in order])
    if np.linalg.matrix_rank(vecs, tol=1e-8) < 4:
        raise DegenerateEigenbasis(f"eigenvectors at {pt.name} are not independent")
    grad = np.array(conservation_gradient(pt.coords, params))
    tang = np.array([abs(grad @ vecs[:, k]) < TANGENCY_TOL for k in range(4)])
    return EigenData(J, vals, vecs, tang)


def _tangent_basis(state: Sequence[float], params: ModelParams, on_h1: bool) -> np.ndarray:
    rows = [np.array(conservation_gradient(state, params))]
    if on_h1:
        rows.append(np.array([3.0, 4.0 * params.m, 0.0, 0.0]))
    _, sv, vt = np.linalg.svd(np.vstack(rows))
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
    return vt[rank:].T


def restricted_eigenvalues(pt: CriticalPoint, params: ModelParams, on_h1: bool = False) -> np.ndarray:
    """Eigenvalues of the Jacobian acting on the tangent space of E (optionally of E with H = 1)."""
    basis = _tangent_basis(pt.coords, params, on_h1)
    M = basis.T @ jacobian(pt.coords, params) @ basis
    vals = np.linalg.eigvals(M)
    return vals[np.lexsort((vals.imag, vals.real))]


def stability_class(pt: CriticalPoint, params: ModelParams, on_h1: bool = False, tol: float = 1e-10) -> str:
    re = restricted_eigenvalues(pt, params, on_h1).real
    if np.any(np.abs(re) <= tol):
        return "nonhyperbolic"
    if np.all(re < 0):
        return "sink"
    if np.all(re > 0):
        return "source"
    return "saddle"


def closed_form_eigenvalues(name: str, params: ModelParams) -> np.ndarray:
    """Printed eigenvalues at the three positive points, sorted ascending."""
    m, n = params.m, params.n
    if name == "P0+":
        vals = [2 / 3, 2 / 3, -2 / 3, 8 * m / (3 * n)]
    elif name == "P1+":
        vals = [2 / n, 2 / n, 0.0, -4 * (m + 1) / n]
    elif name == "P2+":
        d1, d2 = p2_deltas(params)
        vals = [d1, d2, 2 / n, 0.0]
    else:
        raise KeyError(name)
    return np.sort(np.array(vals))


def p2_deltas(params: ModelParams) -> tuple:
    m, n = params.m, params.n
    zz = z0(params)
    root = math.sqrt((2 * m + 1) ** 2 - 8 * (2 * m + 3) * (m + 1) * n * n * zz * zz)
    return (-(2 * m + 1 - root) / n, -(2 * m + 1 + root) / n)


def closed_form_eigenvectors(name: str, params: ModelParams) -> list:
    """Printed (unnormalized) eigenvectors in the order of ``closed_form_pairs``."""
    m, n = params.m, params.n
    if name == "P0+":
        return [
            (2 / 3, [-(8 * m * m + 18 * m + 18), -9, -(8 * m * m + 18 * m), 9]),
            (2 / 3, [-4 * m * (m + 2), 3 * (m + 2), -2 * m * (m + 2), 3]),
            (-2 / 3, [-4 * m, 3, 2 * m, 0]),
            (8 * m / (3 * n), [-2 * (4 * m - 3), 18, 4 * m - 3, 0]),
        ]
    if name == "P1+":
        return [
            (2 / n, [-1, -1, 0, 0]),
            (2 / n, [-4 * m, 3, 2 * m, -(2 * m + 3)]),
            (0.0, [-(n - 1), -(n - 1), 1, 1]),
            (-4 * (m + 1) / n, [-8 * m * (m + 1), 6 * (m + 1), -2 * m, 2 * m + 3]),
        ]
    if name == "P2+":
        zz = z0(params)
        out = []
        for d in p2_deltas(params):
            out.append((d, [2 * m * n / (2 * m + 3) * d, -3 * n / (2 * (2 * m + 3)) * d, -2 * m * n * zz, n * zz]))
        out.append((2 / n, [-1, -1, 0, 0]))
        c = -2 * n * ((2 * m + 3) ** 2 + 2 * m) * zz
        out.append((0.0, [c, c, 2 * m + 3, 1]))
        return out
    raise KeyError(name)
