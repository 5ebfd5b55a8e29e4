"""Gauss-Legendre helpers and Lagrange interpolation on panels."""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


@lru_cache(maxsize=None)
def _rule(n):
    x, w = leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_legendre(a, b, n):
    """Nodes and weights of the n-point rule on [a, b].

    ``a`` and ``b`` may be arrays; the node axis is appended last.
    """
    x, w = _rule(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def composite_gauss(edges, n):
    edges = np.asarray(edges, dtype=float)
    t, w = gauss_legendre(edges[:-1], edges[1:], n)
    return t.ravel(), w.ravel()


def lagrange_basis(nodes, x):
    """Values ``L[..., j] = l_j(x)`` of the Lagrange basis on ``nodes``.

    Uses the barycentric form, which is stable for Gauss nodes.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / diff.prod(axis=1)
    d = x[..., None] - nodes
    hit = d == 0.0
    d = np.where(hit, 1.0, d)
    terms = bary / d
    out = terms / terms.sum(axis=-1, keepdims=True)
    exact = hit.any(axis=-1)
    if np.any(exact):
        out[exact] = hit[exact].astype(float)
    return out
