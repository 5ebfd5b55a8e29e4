"""Catalog of Green Gaussian processes on [0, 1].

Covariance kernels are closed forms wherever the family admits one; each
kernel also carries its row integral ``r(t) = int_0^1 G(t, y) dy`` and the
total integral so that centering (demeaning) stays exact.  Operators are
constant-coefficient differential expressions with linear boundary forms;
``operator_residual`` checks a sampled function against them with finite
differences.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import NotApplicableError, ParameterError, ResolutionError
from .quadrature import gauss_legendre


class Family(str, enum.Enum):
    WIENER = "wiener"
    BRIDGE = "bridge"
    XALPHA = "xalpha"
    OU = "ou"
    OU_ZERO = "ou0"
    INTEGRATED_OU = "iou"


OU_FAMILIES = (Family.OU, Family.OU_ZERO, Family.INTEGRATED_OU)


@dataclass(frozen=True)
class ProcessSpec:
    """A catalog process.

    ``beta = 0`` is accepted only for demeaned OU / OU-from-zero, where it
    denotes the limit kernel (the demeaned Wiener kernel).
    """

    family: Family
    alpha: float = 0.0
    beta: float = 1.0
    demeaned: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", Family(self.family))
        except ValueError as exc:
            raise ParameterError(f"unknown process family {self.family!r}") from exc
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ParameterError("alpha and beta must be finite")
        if self.family is Family.XALPHA and self.alpha == -1.0:
            raise ParameterError(
                "alpha = -1 gives periodic conditions with a constant null "
                "eigenfunction; use the demeaned Brownian bridge instead"
            )
        if self.family in OU_FAMILIES:
            limit_ok = self.demeaned and self.family is not Family.INTEGRATED_OU
            if self.beta < 0 or (self.beta == 0 and not limit_ok):
                raise ParameterError(f"beta must be positive for {self.family.value}, got {self.beta}")

    @property
    def label(self):
        name = self.family.value
        if self.family is Family.XALPHA:
            name += f"(alpha={self.alpha:g})"
        elif self.family in OU_FAMILIES:
            name += f"(beta={self.beta:g})"
        return ("demeaned-" if self.demeaned else "") + name

    @property
    def parameter(self):
        """The family's free parameter (alpha or beta), or None."""
        if self.family is Family.XALPHA:
            return self.alpha
        if self.family in OU_FAMILIES:
            return self.beta
        return None


@dataclass(frozen=True)
class Kernel:
    """Symmetric covariance kernel on [0, 1]^2.

    ``func`` must broadcast over array arguments.  The only derivative
    discontinuity allowed is on the diagonal ``t = s``; ``smoothness_hint``
    is the number of continuous derivatives across it.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    label: str
    smoothness_hint: int = 0
    row_integral: Optional[Callable[[np.ndarray], np.ndarray]] = None
    total_integral: Optional[float] = None
    annihilates_constants: bool = False
    integrated: Optional[Callable[[], "Kernel"]] = field(default=None, repr=False)

    def __call__(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return self.func(t, s)

    def row(self, t):
        t = np.asarray(t, dtype=float)
        if self.row_integral is not None:
            return self.row_integral(t)
        return _numeric_row_integral(self, t)

    def total(self):
        if self.total_integral is not None:
            return self.total_integral
        x, w = gauss_legendre(0.0, 1.0, 64)
        return float(np.dot(w, self.row(x)))

    def grid(self, n):
        """Values on the uniform n x n grid including both endpoints."""
        t = np.linspace(0.0, 1.0, n)
        return t, self(t[:, None], t[None, :])


# --------------------------------------------------------------------------
# closed forms


def _wiener():
    return Kernel(
        func=np.minimum,
        label="wiener",
        row_integral=lambda t: t - 0.5 * t * t,
        total_integral=1.0 / 3.0,
    )


def _bridge():
    return Kernel(
        func=lambda t, s: np.minimum(t, s) - t * s,
        label="bridge",
        row_integral=lambda t: 0.5 * t - 0.5 * t * t,
        total_integral=1.0 / 12.0,
    )


def _xalpha(alpha):
    # Green function of -u'' with u(0) + alpha u(1) = 0, alpha u'(0) + u'(1) = 0:
    # G(t, s) = a(max) + b min with b = 1/(1+alpha).
    b = 1.0 / (1.0 + alpha)
    a0 = alpha * b * (1.0 - b)
    a_mean = b * (0.5 * alpha - alpha * b)

    def func(t, s):
        return a0 - alpha * b * np.maximum(t, s) + b * np.minimum(t, s)

    return Kernel(
        func=func,
        label=f"xalpha(alpha={alpha:g})",
        row_integral=lambda t: -0.5 * t * t + b * t + a_mean,
        total_integral=-1.0 / 6.0 + 0.5 * b + a_mean,
    )


def _ou(beta):
    def func(t, s):
        return np.exp(-beta * np.abs(t - s)) / (2.0 * beta)

    def row(t):
        return (2.0 - np.exp(-beta * t) - np.exp(-beta * (1.0 - t))) / (2.0 * beta**2)

    return Kernel(
        func=func,
        label=f"ou(beta={beta:g})",
        row_integral=row,
        total_integral=(beta + math.expm1(-beta)) / beta**3,
        integrated=lambda: _iou(beta),
    )


def _ou_zero(beta):
    c = -math.expm1(-beta) / beta

    def func(t, s):
        return (np.exp(-beta * np.abs(t - s)) - np.exp(-beta * (t + s))) / (2.0 * beta)

    def row(t):
        stationary = (2.0 - np.exp(-beta * t) - np.exp(-beta * (1.0 - t))) / (2.0 * beta**2)
        return stationary - np.exp(-beta * t) * c / (2.0 * beta)

    return Kernel(
        func=func,
        label=f"ou0(beta={beta:g})",
        row_integral=row,
        total_integral=(beta + math.expm1(-beta)) / beta**3 - c * c / (2.0 * beta),
    )


def _iou(beta):
    # Stationary increments: K(t, s) = (F(t) + F(s) - F(|t - s|)) / 2 with
    # F(x) = int_0^x int_0^x G_OU.  H and J are successive antiderivatives of F.
    b3 = beta**3

    def F(x):
        return (np.expm1(-beta * x) + beta * x) / b3

    def H(x):
        return (0.5 * beta * x * x - x - np.expm1(-beta * x) / beta) / b3

    def J(x):
        return (beta * x**3 / 6.0 - 0.5 * x * x + x / beta + np.expm1(-beta * x) / beta**2) / b3

    def func(t, s):
        return 0.5 * (F(t) + F(s) - F(np.abs(t - s)))

    h1 = float(H(1.0))

    def row(t):
        return 0.5 * (F(t) + h1 - H(t) - H(1.0 - t))

    return Kernel(
        func=func,
        label=f"iou(beta={beta:g})",
        smoothness_hint=2,
        row_integral=row,
        total_integral=h1 - float(J(1.0)),
    )


def _base_kernel(spec):
    fam = spec.family
    if fam is Family.WIENER:
        return _wiener()
    if fam is Family.BRIDGE:
        return _bridge()
    if fam is Family.XALPHA:
        if spec.alpha == 0.0:
            return _wiener()
        return _xalpha(spec.alpha)
    if fam is Family.OU:
        return _ou(spec.beta)
    if fam is Family.OU_ZERO:
        return _ou_zero(spec.beta)
    return _iou(spec.beta)


def kernel(spec: ProcessSpec) -> Kernel:
    """Covariance kernel of ``spec`` (centered when ``spec.demeaned``)."""
    if spec.demeaned and spec.family in (Family.OU, Family.OU_ZERO) and spec.beta == 0.0:
        # (1/2b) exp(-b|t-s|) = 1/(2b) - |t-s|/2 + O(b); centering removes the
        # constant and leaves the same kernel as min(t, s).
        k = demean_kernel(_wiener())
        return _relabel(k, "demeaned-" + spec.family.value + "(beta=0)")
    base = _base_kernel(spec)
    if spec.demeaned:
        return _relabel(demean_kernel(base), spec.label)
    return _relabel(base, spec.label)


def _relabel(k, label):
    return Kernel(
        func=k.func,
        label=label,
        smoothness_hint=k.smoothness_hint,
        row_integral=k.row_integral,
        total_integral=k.total_integral,
        annihilates_constants=k.annihilates_constants,
        integrated=k.integrated,
    )


# --------------------------------------------------------------------------
# transforms

_ROW_NODES = 64


def _numeric_row_integral(k, t):
    # Split at y = t so both pieces see a smooth integrand.
    t = np.asarray(t, dtype=float)
    y1, w1 = gauss_legendre(0.0, t, _ROW_NODES)
    y2, w2 = gauss_legendre(t, 1.0, _ROW_NODES)
    tt = t[..., None]
    return (w1 * k(tt, y1)).sum(-1) + (w2 * k(tt, y2)).sum(-1)


def demean_kernel(k: Kernel) -> Kernel:
    """Covariance of X(t) - int_0^1 X.

    Uses the kernel's closed-form row integral when present, otherwise
    64-node Gauss-Legendre split at the diagonal.  A kernel already known
    to annihilate constants is returned as is.
    """
    if k.annihilates_constants:
        return k
    row = k.row_integral
    if row is None:
        row = lambda t, _k=k: _numeric_row_integral(_k, t)  # noqa: E731
    total = k.total()

    def func(t, s):
        return k.func(t, s) - row(t) - row(s) + total

    return Kernel(
        func=func,
        label="demeaned-" + k.label,
        smoothness_hint=k.smoothness_hint,
        row_integral=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        total_integral=0.0,
        annihilates_constants=True,
    )


def integrated_kernel(k: Kernel) -> Kernel:
    """Covariance of int_0^t X: (t, s) -> int_0^t int_0^s k(u, v) dv du."""
    if k.integrated is not None:
        return k.integrated()
    n = 32

    def func(t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        # The inner integral has a kink at u = s, so split the outer range there.
        lo = np.minimum(t, s)
        ua, wa = gauss_legendre(0.0, lo, n)
        ub, wb = gauss_legendre(lo, t, n)
        u = np.concatenate([ua, ub], axis=-1)
        wu = np.concatenate([wa, wb], axis=-1)
        ss = s[..., None]
        mid = np.minimum(u, ss)
        v1, w1 = gauss_legendre(0.0, mid, n)
        v2, w2 = gauss_legendre(mid, ss, n)
        uu = u[..., None]
        inner = (w1 * k(uu, v1)).sum(-1) + (w2 * k(uu, v2)).sum(-1)
        return (wu * inner).sum(-1)

    return Kernel(func=func, label="integrated-" + k.label, smoothness_hint=k.smoothness_hint + 2)


# --------------------------------------------------------------------------
# operators and boundary forms


@dataclass(frozen=True)
class BoundaryForm:
    """``sum_j at0[j] u^(j)(0) + sum_j at1[j] u^(j)(1)``."""

    at0: tuple
    at1: tuple
    label: str = ""

    def __call__(self, d0, d1):
        return float(np.dot(self.at0, d0) + np.dot(self.at1, d1))

    @property
    def has_zero_order(self):
        return self.at0[0] != 0 or self.at1[0] != 0


@dataclass(frozen=True)
class OperatorSpec:
    """``L u = sum_m coefficients[m] u^(m)`` with boundary forms."""

    order: int
    coefficients: tuple
    boundary_forms: tuple
    label: str = ""

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ParameterError("operator order must be 2 or 4")
        if len(self.coefficients) != self.order + 1:
            raise ParameterError("need one coefficient per derivative order 0..order")
        lead = self.coefficients[-1] * (-1) ** (self.order // 2)
        if lead <= 0:
            raise ParameterError("leading coefficient p_l must be positive")
        for form in self.boundary_forms:
            if len(form.at0) != self.order or len(form.at1) != self.order:
                raise ParameterError("boundary forms must involve derivatives 0..order-1")

    @property
    def p0(self):
        return self.coefficients[0]

    def flux_form(self):
        """The form (L u')(0) - (L u')(1) where ``L u = (L u')'``."""
        if self.p0 != 0:
            raise NotApplicableError("operator has a zero-order term")
        flux = tuple(float(c) for c in self.coefficients[1:])
        return BoundaryForm(flux, tuple(-c for c in flux), label="(Lu')(0)-(Lu')(1)")


def _form(order, label, at0=None, at1=None):
    a = [0.0] * order
    b = [0.0] * order
    for j, c in (at0 or {}).items():
        a[j] = float(c)
    for j, c in (at1 or {}).items():
        b[j] = float(c)
    return BoundaryForm(tuple(a), tuple(b), label)


def base_operator(spec: ProcessSpec) -> OperatorSpec:
    """Boundary value problem whose Green function is ``kernel(spec)``."""
    fam = spec.family
    b = spec.beta
    if fam is Family.WIENER or (fam is Family.XALPHA and spec.alpha == 0.0):
        forms = (_form(2, "u(0)", {0: 1}), _form(2, "u'(1)", at1={1: 1}))
        return OperatorSpec(2, (0.0, 0.0, -1.0), forms, "wiener")
    if fam is Family.BRIDGE:
        forms = (_form(2, "u(0)", {0: 1}), _form(2, "u(1)", at1={0: 1}))
        return OperatorSpec(2, (0.0, 0.0, -1.0), forms, "bridge")
    if fam is Family.XALPHA:
        a = spec.alpha
        forms = (
            _form(2, "u(0)+a*u(1)", {0: 1}, {0: a}),
            _form(2, "a*u'(0)+u'(1)", {1: a}, {1: 1}),
        )
        return OperatorSpec(2, (0.0, 0.0, -1.0), forms, spec.label)
    if fam is Family.OU:
        forms = (
            _form(2, "u'(0)-b*u(0)", {1: 1, 0: -b}),
            _form(2, "u'(1)+b*u(1)", at1={1: 1, 0: b}),
        )
        return OperatorSpec(2, (b * b, 0.0, -1.0), forms, spec.label)
    if fam is Family.OU_ZERO:
        forms = (_form(2, "u(0)", {0: 1}), _form(2, "u'(1)+b*u(1)", at1={1: 1, 0: b}))
        return OperatorSpec(2, (b * b, 0.0, -1.0), forms, spec.label)
    forms = (
        _form(4, "u(0)", {0: 1}),
        _form(4, "u'''(1)-b^2*u'(1)", at1={3: 1, 1: -b * b}),
        _form(4, "u''(0)-b*u'(0)", {2: 1, 1: -b}),
        _form(4, "u''(1)+b*u'(1)", at1={2: 1, 1: b}),
    )
    return OperatorSpec(4, (0.0, 0.0, -b * b, 0.0, 1.0), forms, spec.label)


def _floats(a):
    return tuple(float(x) + 0.0 for x in a)


def demeaned_operator(spec: ProcessSpec) -> OperatorSpec:
    """Boundary value problem for the centered process of a catalog entry.

    Only for operators without a zero-order term.  Forms carrying u(0), u(1)
    are reduced so at most two of them do; with two, their difference is
    kept, with one it is dropped.  The flux condition (Lu')(0) = (Lu')(1)
    is appended.
    """
    op = base_operator(spec)
    if op.p0 != 0:
        raise NotApplicableError(
            f"{spec.label}: the operator has a zero-order term, so centering "
            "does not produce a Green process"
        )
    n = op.order
    rows = np.array([list(f.at0) + list(f.at1) for f in op.boundary_forms], dtype=float)
    labels = [f.label for f in op.boundary_forms]
    pivots = []
    for col in (0, n):
        free = [r for r in range(len(rows)) if r not in pivots and abs(rows[r, col]) > 1e-14]
        if not free:
            continue
        p = max(free, key=lambda r: abs(rows[r, col]))
        rows[p] /= rows[p, col]
        for r in range(len(rows)):
            if r != p:
                rows[r] -= rows[r, col] * rows[p]
        pivots.append(p)
    if not pivots:
        raise NotApplicableError("constants already solve the problem at lambda = 0")
    keep = [r for r in range(len(rows)) if r not in pivots]
    forms = [BoundaryForm(_floats(rows[r, :n]), _floats(rows[r, n:]), labels[r]) for r in keep]
    if len(pivots) == 2:
        p1, p2 = pivots
        diff = rows[p2] - rows[p1]
        forms.insert(0, BoundaryForm(_floats(diff[:n]), _floats(diff[n:]), f"[{labels[p2]}]-[{labels[p1]}]"))
    else:
        (p,) = pivots
        if abs(rows[p, 0] + rows[p, n]) < 1e-14:
            raise NotApplicableError("constants already solve the problem at lambda = 0")
    forms.append(op.flux_form())
    return OperatorSpec(n, op.coefficients, tuple(forms), "demeaned-" + op.label)


# --------------------------------------------------------------------------
# finite differences


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple, m: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x + o_j h) = h^m f^(m)(x) + O(h^(len-m))."""
    o = np.asarray(offsets, dtype=float)
    p = np.arange(len(o))
    V = o[None, :] ** p[:, None] / np.array([math.factorial(k) for k in p])[:, None]
    rhs = np.zeros(len(o))
    rhs[m] = 1.0
    w = np.linalg.solve(V, rhs)
    w.flags.writeable = False
    return w


def central_stencil(m):
    """Fourth-order central stencil offsets for the m-th derivative."""
    npts = m + 3 if m % 2 == 0 else m + 4
    r = (npts - 1) // 2
    return tuple(range(-r, r + 1))


def derivative(u, h, m):
    """Fourth-order central m-th derivative; NaN where the stencil leaves the grid."""
    u = np.asarray(u, dtype=float)
    if m == 0:
        return u.copy()
    offs = central_stencil(m)
    w = fd_weights(offs, m)
    r = offs[-1]
    out = np.full_like(u, np.nan)
    acc = np.zeros(len(u) - 2 * r)
    for o, c in zip(offs, w):
        acc += c * u[r + o : len(u) - r + o]
    out[r : len(u) - r] = acc / h**m
    return out


def endpoint_derivatives(u, h, max_order, accuracy=6):
    """One-sided derivatives 0..max_order at both ends of the grid."""
    u = np.asarray(u, dtype=float)
    d0 = np.zeros(max_order + 1)
    d1 = np.zeros(max_order + 1)
    for m in range(max_order + 1):
        offs = tuple(range(m + accuracy))
        w = fd_weights(offs, m)
        d0[m] = np.dot(w, u[: len(offs)]) / h**m
        d1[m] = np.dot(w, u[::-1][: len(offs)]) / (-h) ** m
    return d0, d1


MIN_GRID = 512


# Eigenfunction samples carry a few ulps of noise; the floor assumes this many.
NOISE_ULPS = 16.0


@dataclass
class ResidualRecord:
    """Residuals of ``operator_residual``.

    ``*_floor`` entries are the relative rounding floor of the stencils used,
    NOISE_ULPS * eps * sum|w| / h^m, so tolerances can be set above it.
    """

    interior_abs: float
    interior_rel: float
    boundary_abs: dict
    boundary_rel: dict
    h: float
    interior_floor: float = 0.0
    boundary_floor: dict = field(default_factory=dict)

    def max_boundary_rel(self):
        return max(self.boundary_rel.values()) if self.boundary_rel else 0.0


def operator_residual(op: OperatorSpec, u, lam: float, noise_ulps: float = NOISE_ULPS) -> ResidualRecord:
    """Finite-difference residual of ``L u = lam u`` and of each boundary form.

    ``u`` is sampled on the uniform grid t_i = i/(N-1).  The interior
    residual skips ``op.order`` points at each end beyond the stencil.
    Relative values divide by sums of |coefficient| * max|u^(j)|.
    ``noise_ulps`` is the assumed sample noise in units of eps * max|u|.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or len(u) < MIN_GRID:
        raise ResolutionError(f"need at least {MIN_GRID} grid points, got {u.size}")
    h = 1.0 / (len(u) - 1)
    derivs = [derivative(u, h, m) for m in range(op.order + 1)]
    lu = sum(c * d for c, d in zip(op.coefficients, derivs) if c != 0)
    res = lu - lam * u
    cut = op.order + central_stencil(op.order)[-1]
    res = res[cut:-cut]
    sup = [np.nanmax(np.abs(d)) for d in derivs]
    scale = abs(lam) * sup[0] + sum(abs(c) * s for c, s in zip(op.coefficients, sup))
    interior_abs = float(np.max(np.abs(res)))
    noise = noise_ulps * np.finfo(float).eps * sup[0]
    central_gain = [np.abs(fd_weights(central_stencil(m), m)).sum() / h**m if m else 1.0 for m in range(op.order + 1)]
    interior_floor = noise * sum(abs(c) * g for c, g in zip(op.coefficients, central_gain)) / scale

    d0, d1 = endpoint_derivatives(u, h, op.order - 1)
    side_gain = [np.abs(fd_weights(tuple(range(m + 6)), m)).sum() / h**m for m in range(op.order)]
    babs, brel, bfloor = {}, {}, {}
    for i, form in enumerate(op.boundary_forms):
        key = form.label or f"form{i}"
        val = abs(form(d0, d1))
        fs = sum((abs(a) + abs(b)) * s for a, b, s in zip(form.at0, form.at1, sup))
        fs = fs if fs > 0 else 1.0
        babs[key] = val
        brel[key] = val / fs
        bfloor[key] = noise * sum((abs(a) + abs(b)) * g for a, b, g in zip(form.at0, form.at1, side_gain)) / fs
    return ResidualRecord(
        interior_abs, interior_abs / scale if scale else interior_abs, babs, brel, h, interior_floor, bfloor
    )


def offdiagonal_identity(k: Kernel, coefficients, s: float, n: int = 1024, band: int = 5):
    """Apply ``sum_m coefficients[m] d^m/dt^m`` to ``k(., s)`` away from t = s.

    Returns the grid points kept (|t - s| >= band*h and stencil inside
    [0, 1]) and the finite-difference values there.
    """
    t = np.linspace(0.0, 1.0, n)
    h = t[1] - t[0]
    u = k(t, np.full_like(t, s))
    out = np.zeros_like(t)
    for m, c in enumerate(coefficients):
        if c != 0:
            out = out + c * derivative(u, h, m)
    keep = np.isfinite(out) & (np.abs(t - s) >= band * h)
    return t[keep], out[keep], h
