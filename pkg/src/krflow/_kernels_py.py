"""Pure-numpy pointwise matrix kernels (fallback backend).

All functions take flattened per-point arrays: metrics and Hessians as
(P, n, n) complex128, gradients as (P, n) complex128, third derivatives
as (P, n, n, n) complex128, with n in {1, 2}.  Outputs are float64 or
complex128 arrays of matching leading dimension.
"""
import numpy as np


def det_herm(g):
    """Determinant of a Hermitian matrix per point (real)."""
    n = g.shape[-1]
    if n == 1:
        return np.ascontiguousarray(g[:, 0, 0].real)
    a = g[:, 0, 0].real
    d = g[:, 1, 1].real
    b = g[:, 0, 1]
    return a * d - (b.real * b.real + b.imag * b.imag)


def det_sum_ratio(g, h):
    """det(g + h) / det(g) per point for Hermitian g, h."""
    if g.shape[-1] == 1:
        return (g[:, 0, 0].real + h[:, 0, 0].real) / g[:, 0, 0].real
    return det_herm(g + h) / det_herm(g)


def inv_herm(g):
    """Pointwise inverse of a Hermitian matrix (no conditioning checks)."""
    n = g.shape[-1]
    out = np.empty_like(g)
    if n == 1:
        out[:, 0, 0] = 1.0 / g[:, 0, 0].real
        return out
    det = det_herm(g)
    out[:, 0, 0] = g[:, 1, 1] / det
    out[:, 1, 1] = g[:, 0, 0] / det
    out[:, 0, 1] = -g[:, 0, 1] / det
    out[:, 1, 0] = -g[:, 1, 0] / det
    return out


def trace_pair(a, b):
    """Re tr(a b) per point; real for Hermitian a, b."""
    return np.einsum("pjk,pkj->p", a, b).real


def quad_form(g, v):
    """Re sum_jk g[j,k] conj(v_j) v_k per point; >= 0 for g positive."""
    return np.einsum("pjk,pj,pk->p", g, v.conj(), v).real


def third_contract(ginv, t):
    """Squared norm of the third-derivative tensor in the metric ginv.

    S = sum ginv[j,i] ginv[l,k] ginv[e,m] t[i,l,m] conj(t[j,k,e]); the
    pairing matches raising one holomorphic and one antiholomorphic index
    per factor, and the result is real and nonnegative.
    """
    u = np.einsum("pem,pilm->pile", ginv, t)
    v = np.einsum("plk,pile->pike", ginv, u)
    return np.einsum("pji,pike,pjke->p", ginv, v, t.conj()).real


def eig_range_herm(g):
    """(lambda_min, lambda_max) of a Hermitian matrix per point."""
    n = g.shape[-1]
    out = np.empty((g.shape[0], 2))
    if n == 1:
        x = g[:, 0, 0].real
        out[:, 0] = x
        out[:, 1] = x
        return out
    a = g[:, 0, 0].real
    d = g[:, 1, 1].real
    b = g[:, 0, 1]
    m = 0.5 * (a + d)
    r = np.sqrt(0.25 * (a - d) ** 2 + b.real * b.real + b.imag * b.imag)
    out[:, 0] = m - r
    out[:, 1] = m + r
    return out
