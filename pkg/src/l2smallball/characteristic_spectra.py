"""Characteristic functions of the demeaned OU-type boundary problems.

The spectra of the demeaned OU, OU-from-zero and integrated OU processes are
parameterized by the positive real zeros of entire functions of ``zeta``.
This module evaluates those functions stably (series paths near removable
singularities, log-scaled determinants for large arguments), isolates their
real zeros and turns them into KL eigenvalues and distortion constants.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import zeta as hurwitz_zeta

from .errors import (
    DivergenceError,
    NotAvailableError,
    ParameterError,
    RangeError,
    RootIsolationError,
    SingularityError,
)
from .process_catalog import Family, ProcessSpec
from .spectral_oracle import Spectrum

SERIES_RADIUS = 1.0
SERIES_TERMS = 40
CAUCHY_NODES = 64
LOG_MAX = math.log(np.finfo(float).max)


class CharFamily(str, Enum):
    F_OU = "F_ou"
    F_OU0 = "F_ou0"
    FDET = "Fdet"
    FDET2 = "Fdet2"


# --------------------------------------------------------------------------
# F_beta and F°_beta
#
# Both numerators have the shape
#   N = 2b(z^2 + b^2) - (a1 z^2 + a0) cos z + (b1 z^2 + b0) z sin z
# and vanish to order z^4 at the origin, so F = N / z^4 is entire.


def _numerator_coefficients(family, beta):
    b = beta
    if family is CharFamily.F_OU:
        return 2 * b * (1 + b), 2 * b**3, 2 + b, 2 * b**2 - b**3
    return b * (2 + b), 2 * b**3, 1.0, b**2 - b**3


@lru_cache(maxsize=64)
def _series(family, beta):
    """Maclaurin coefficients of F in powers of w = z^2."""
    a1, a0, b1, b0 = _numerator_coefficients(family, beta)
    n = SERIES_TERMS + 3
    cos_c = np.array([(-1) ** j / math.factorial(2 * j) for j in range(n)])
    # z sin z = sum (-1)^j w^(j+1) / (2j+1)!
    zsin_c = np.zeros(n)
    zsin_c[1:] = [(-1) ** j / math.factorial(2 * j + 1) for j in range(n - 1)]
    num = np.zeros(n + 1)
    num[0] += 2 * beta**3
    num[1] += 2 * beta
    num[:n] -= a0 * cos_c
    num[1 : n + 1] -= a1 * cos_c
    num[:n] += b0 * zsin_c
    num[1 : n + 1] += b1 * zsin_c
    return tuple(num[2 : 2 + SERIES_TERMS])


def _f_direct(family, z, beta):
    a1, a0, b1, b0 = _numerator_coefficients(family, beta)
    w = z * z
    num = 2 * beta * (w + beta**2) - (a1 * w + a0) * np.cos(z) + (b1 * w + b0) * z * np.sin(z)
    return num / (w * w)


def _f_eval(family, zeta, beta):
    if beta < 0:
        raise ParameterError("beta must be non-negative")
    z = np.asarray(zeta)
    out_complex = np.iscomplexobj(z)
    z = z.astype(complex)
    small = np.abs(z) < SERIES_RADIUS
    out = np.empty_like(z)
    if np.any(small):
        coef = _series(family, float(beta))
        out[small] = np.polynomial.polynomial.polyval(z[small] ** 2, coef)
    if np.any(~small):
        out[~small] = _f_direct(family, z[~small], beta)
    if not out_complex:
        out = out.real
    return out[()] if out.ndim == 0 else out


def charfn_ou(zeta, beta):
    """Characteristic function F_beta of the demeaned stationary OU process."""
    return _f_eval(CharFamily.F_OU, zeta, beta)


def charfn_ou0(zeta, beta):
    """Characteristic function F°_beta of the demeaned OU process started at 0."""
    return _f_eval(CharFamily.F_OU0, zeta, beta)


# --------------------------------------------------------------------------
# the 4x4 determinant of the demeaned integrated OU problem


def _zeta1(z, beta):
    return 1j * cmath.sqrt(z * z + beta * beta)


def _det_matrix(z, beta):
    """Column-scaled matrix and the log of the scale that was divided out."""
    z1 = _zeta1(z, beta)
    kap = 1j * np.array([z, -z, z1, -z1])
    shift = np.maximum(kap.real, 0.0)
    e = np.exp(kap - shift)
    r1 = kap**3 - beta**2 * kap
    r2 = kap**2 - beta * kap
    r4 = kap**2 + beta * kap
    unit = np.exp(-shift)
    M = np.array([r1 * unit, r2 * unit, r1 * e, r4 * e])
    return M, float(shift.sum())


def det_F_scaled(zeta, beta, rescale=True):
    """Return ``(m, log_scale)`` with det = m * exp(log_scale).

    Rows are normalized by their largest entry and columns by the growth of
    ``exp(i w)``.  With ``rescale=False`` the raw determinant is returned
    with ``log_scale = 0``.
    """
    if beta <= 0:
        raise ParameterError("beta must be positive")
    z = complex(zeta)
    if not rescale:
        z1 = _zeta1(z, beta)
        kap = 1j * np.array([z, -z, z1, -z1])
        with np.errstate(over="raise", invalid="raise"):
            try:
                e = np.exp(kap)
                M = np.array([kap**3 - beta**2 * kap, kap**2 - beta * kap, (kap**3 - beta**2 * kap) * e, (kap**2 + beta * kap) * e])
                val = complex(np.linalg.det(M))
            except FloatingPointError as exc:
                raise RangeError(f"determinant overflows at zeta = {z}") from exc
        if not cmath.isfinite(val):
            raise RangeError(f"determinant overflows at zeta = {z}")
        return val, 0.0
    M, log_scale = _det_matrix(z, beta)
    # exact power-of-two row scaling; safe for subnormal rows
    _, ex = np.frexp(np.max(np.abs(M), axis=1))
    ex = ex[:, None]
    M = np.ldexp(M.real, -ex) + 1j * np.ldexp(M.imag, -ex)
    val = complex(np.linalg.det(M))
    if not cmath.isfinite(val):
        raise RangeError(f"scaled determinant is not finite at zeta = {z}")
    return val, log_scale + float(ex.sum()) * math.log(2.0)


def det_F(zeta, beta):
    """The determinant itself; raises RangeError if it does not fit a float."""
    m, ls = det_F_scaled(zeta, beta)
    if m == 0:
        return 0j
    if ls + math.log(abs(m)) > LOG_MAX:
        raise RangeError(f"|det| exceeds the floating range at zeta = {zeta}")
    return m * math.exp(ls)


def log_abs_det_F(zeta, beta, rescale=True):
    m, ls = det_F_scaled(zeta, beta, rescale)
    return math.log(abs(m)) + ls if m != 0 else -math.inf


def vandermonde(zeta, beta):
    """V(z0, -z0, z1, -z1) = 4 z0 z1 (z0^2 - z1^2)^2 with z1^2 = -(z^2 + beta^2)."""
    z = complex(zeta)
    return 4 * z * _zeta1(z, beta) * (2 * z * z + beta * beta) ** 2


def _f2_singular_points(beta):
    r = beta / math.sqrt(2.0)
    return (0j, 1j * beta, -1j * beta, 1j * r, -1j * r)


def _f2_cauchy_radius(p, beta):
    others = [abs(p - q) for q in _f2_singular_points(beta) if q != p]
    return min(0.25, 0.5 * min(others))


def _f2_direct_scaled(z, beta):
    m, ls = det_F_scaled(z, beta)
    den = vandermonde(z, beta) * (z**4 + beta**2 * z**2)
    if den == 0:
        raise SingularityError(f"F2 denominator vanishes at zeta = {z}")
    return m / den, ls


def charfn_F2_scaled(zeta, beta, limit_path=True):
    """``(m, log_scale)`` for F2 = det / (V * (z^4 + beta^2 z^2)).

    Within half a Cauchy radius of a removable singularity the value is
    recovered from the Cauchy integral over a surrounding circle.
    """
    if beta <= 0:
        raise ParameterError("beta must be positive")
    z = complex(zeta)
    for p in _f2_singular_points(beta):
        rho = _f2_cauchy_radius(p, beta)
        if abs(z - p) < 0.5 * rho:
            if not limit_path:
                raise SingularityError(f"zeta = {z} is inside the removable-singularity radius of {p}")
            return _f2_cauchy(z, p, rho, beta), 0.0
    return _f2_direct_scaled(z, beta)


def _f2_cauchy(z, p, rho, beta):
    theta = 2 * np.pi * np.arange(CAUCHY_NODES) / CAUCHY_NODES
    pts = p + rho * np.exp(1j * theta)
    vals = []
    for q in pts:
        m, ls = _f2_direct_scaled(q, beta)
        vals.append(m * math.exp(ls))
    vals = np.array(vals)
    return complex(np.mean(vals * (pts - p) / (pts - z)))


def charfn_F2(zeta, beta, limit_path=True):
    m, ls = charfn_F2_scaled(zeta, beta, limit_path)
    if m != 0 and ls + math.log(abs(m)) > LOG_MAX:
        raise RangeError(f"|F2| exceeds the floating range at zeta = {zeta}")
    return m * math.exp(ls)


def psi_aux(zeta):
    """Comparison function cosh(z) cos(z) / 2 sharing F2's zero counts."""
    return 0.5 * cmath.cosh(zeta) * cmath.cos(zeta)


# --------------------------------------------------------------------------
# CharFunction and root isolation


@dataclass(frozen=True)
class CharFunction:
    """An entire function whose positive real zeros parameterize a spectrum."""

    family: CharFamily
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "family", CharFamily(self.family))
        beta = float(self.beta)
        object.__setattr__(self, "beta", beta)
        if beta < 0 or (beta == 0 and self.family in (CharFamily.FDET, CharFamily.FDET2)):
            raise ParameterError(f"invalid beta = {beta} for {self.family.value}")

    def __call__(self, zeta):
        if self.family is CharFamily.F_OU:
            return charfn_ou(zeta, self.beta)
        if self.family is CharFamily.F_OU0:
            return charfn_ou0(zeta, self.beta)
        if self.family is CharFamily.FDET:
            return det_F(zeta, self.beta)
        return charfn_F2(zeta, self.beta)

    @property
    def removable_singularity_radius(self):
        if self.family in (CharFamily.F_OU, CharFamily.F_OU0):
            return SERIES_RADIUS
        if self.family is CharFamily.FDET2:
            return 0.5 * _f2_cauchy_radius(0j, self.beta)
        return 0.0

    @property
    def spacing_offset(self):
        return 0.5 if self.family in (CharFamily.FDET, CharFamily.FDET2) else 0.0

    def root_spacing(self, k):
        """Asymptotic location of the k-th positive real zero."""
        return np.pi * (np.asarray(k, dtype=float) - self.spacing_offset)

    def real_sign_function(self, x):
        """A real function of real x, positive multiple of the restriction of
        the characteristic function to the real axis (after removing i)."""
        if self.family in (CharFamily.F_OU, CharFamily.F_OU0):
            return float(self(float(x)))
        if self.family is CharFamily.FDET:
            m, _ = det_F_scaled(float(x), self.beta)
            return m.imag
        m, _ = charfn_F2_scaled(float(x), self.beta)
        return m.real


@dataclass(frozen=True)
class RootList:
    zeta: np.ndarray
    residual: np.ndarray
    bracket_width: np.ndarray
    function: CharFunction = field(repr=False)

    def __len__(self):
        return self.zeta.size

    def deviation(self):
        """zeta_k - root_spacing(k)."""
        k = np.arange(1, self.zeta.size + 1)
        return self.zeta - self.function.root_spacing(k)

    def to_json(self):
        return {
            "family": self.function.family.value,
            "beta": self.function.beta,
            "zeta": [float(v) for v in self.zeta],
            "residual": [float(v) for v in self.residual],
        }


SCAN_POINTS = 16  # per interval of length pi
ROOT_XTOL = 1e-13


def _sign_changes(g, a, b, n):
    x = np.linspace(a, b, n + 1)
    y = np.array([g(v) for v in x])
    return x, y, np.flatnonzero(np.sign(y[:-1]) * np.sign(y[1:]) <= 0)


def roots(f: CharFunction, k_max: int, max_refinements: int = 3) -> RootList:
    """First ``k_max`` positive real zeros of ``f``, in increasing order.

    Low-order zeros can drift by up to pi/2 from ``root_spacing`` when beta
    is large, so zeros are counted from the origin instead of being assigned
    to fixed windows.  The count on (0, U), with U half a spacing beyond the
    k_max-th asymptotic location, must equal k_max; otherwise the scan grid
    is refined, and the search fails once refinements are exhausted.
    """
    if k_max < 1:
        raise ParameterError("k_max must be at least 1")
    g = f.real_sign_function
    upper = float(f.root_spacing(k_max)) + np.pi / 2
    lower = 1e-9
    n = int(np.ceil(SCAN_POINTS * (upper - lower) / np.pi))
    for _ in range(max_refinements + 1):
        x, y, flips = _sign_changes(g, lower, upper, n)
        if flips.size == k_max:
            break
        n *= 4
    else:
        raise RootIsolationError(
            f"{f.family.value}(beta={f.beta:g}): found {flips.size} zeros in (0, {upper:.6g}), expected {k_max}"
        )
    zs, res, widths = [], [], []
    eps = np.finfo(float).eps
    for i in flips:
        lo, hi = x[i], x[i + 1]
        if y[i] == 0:
            r = lo
        elif y[i + 1] == 0:
            r = hi
        else:
            r, info = brentq(g, lo, hi, xtol=ROOT_XTOL, rtol=4 * eps, full_output=True)
            if not info.converged:
                raise RootIsolationError(f"{f.family.value}: bisection did not converge in [{lo}, {hi}]")
        # local scale: largest |g| on the neighbouring scan points
        scale = float(np.max(np.abs(y[max(i - SCAN_POINTS, 0) : i + SCAN_POINTS + 2])))
        zs.append(r)
        res.append(abs(g(r)) / scale)
        widths.append(ROOT_XTOL + 4 * eps * r)
    return RootList(np.array(zs), np.array(res), np.array(widths), f)


# --------------------------------------------------------------------------
# spectra and distortion constants

_CHAR_FAMILY = {
    Family.OU: CharFamily.F_OU,
    Family.OU_ZERO: CharFamily.F_OU0,
    Family.INTEGRATED_OU: CharFamily.FDET2,
}


def char_function(spec: ProcessSpec) -> CharFunction:
    if not spec.demeaned or spec.family not in _CHAR_FAMILY:
        raise NotAvailableError(f"no characteristic function for {spec.label}")
    return CharFunction(_CHAR_FAMILY[spec.family], spec.beta)


def spectrum_from_roots(f: CharFunction, r: RootList, label: str = "") -> Spectrum:
    """KL eigenvalues from the zeros; the zero eigenvalue is already excluded."""
    z = r.zeta
    b2 = f.beta**2
    if f.family in (CharFamily.FDET, CharFamily.FDET2):
        mu = 1.0 / (z**4 + b2 * z**2)
        return Spectrum(mu, "characteristic", zero_modes=1, decay_power=4.0, decay_offset=0.5, label=label)
    mu = 1.0 / (z**2 + b2)
    return Spectrum(mu, "characteristic", zero_modes=1, decay_power=2.0, label=label)


def characteristic_spectrum(spec: ProcessSpec, K: int) -> Spectrum:
    f = char_function(spec)
    return spectrum_from_roots(f, roots(f, K), label=spec.label)


def closed_form_constant(spec: ProcessSpec) -> float:
    """Distortion constant: 2e^b/(2+b), e^b, or 2 sqrt(b e^b)."""
    if not spec.demeaned or spec.family not in _CHAR_FAMILY:
        raise NotAvailableError(f"no distortion constant is defined for {spec.label}")
    b = spec.beta
    if spec.family is Family.OU:
        return 2 * math.exp(b) / (2 + b)
    if spec.family is Family.OU_ZERO:
        return math.exp(b)
    return 2 * math.sqrt(b * math.exp(b))


@dataclass
class ProductResult:
    """A tail-corrected infinite product and its convergence record."""

    value: float
    partial: float
    tail_log: float
    K: int
    trace: list  # (K', tail-corrected value at K')
    closed_form: float = float("nan")

    @property
    def error(self):
        return abs(self.value - self.closed_form)


DIVERGENCE_TOL = 1.0


def _tail_sums(p, K, offset):
    """Sums over j > K of (j - off)^-p and (-1)^j (j - off)^-p."""
    q = K + 1 - offset
    plain = hurwitz_zeta(p, q)
    odd = hurwitz_zeta(p, q / 2) / 2**p  # j = K+1, K+3, ...
    even = hurwitz_zeta(p, (q + 1) / 2) / 2**p
    alt = (-1) ** (K + 1) * (odd - even)
    return plain, alt


def log_product(log_terms, offset=0.0, label="product") -> ProductResult:
    """exp of the sum of ``log_terms`` with an analytic tail.

    Root deviations alternate with the parity of k, so the terms are modeled
    as (A + B(-1)^k)/x^2 + (C + D(-1)^k)/x^3 with x = k - offset, matched to
    the last four terms.  A product whose terms do not decay faster than 1/k
    is reported as divergent.
    """
    lt = np.asarray(log_terms, dtype=float)
    K = lt.size
    if K < 4:
        raise ParameterError("need at least four factors")
    if not np.all(np.isfinite(lt)):
        raise DivergenceError(f"{label}: non-finite factor")
    if abs(lt[-1]) * K > DIVERGENCE_TOL:
        raise DivergenceError(f"{label}: factors do not approach 1 (log term {lt[-1]:.3g} at k = {K})")
    csum = np.cumsum(lt)

    def corrected(n):
        k = np.arange(n - 3, n + 1)
        x = k - offset
        sgn = (-1.0) ** k
        A = np.column_stack([x**-2, sgn * x**-2, x**-3, sgn * x**-3])
        coef = np.linalg.solve(A, lt[n - 4 : n])
        s2, a2 = _tail_sums(2, n, offset)
        s3, a3 = _tail_sums(3, n, offset)
        tail = coef @ np.array([s2, a2, s3, a3])
        return csum[n - 1] + tail, tail

    trace = []
    n = K
    while n >= max(8, K // 16):
        trace.append((n, math.exp(corrected(n)[0])))
        n //= 2
    trace.reverse()
    total, tail = corrected(K)
    return ProductResult(math.exp(total), math.exp(csum[-1]), float(tail), K, trace)


def distortion_constant(spec: ProcessSpec, method: str = "closed_form", K: int = 500) -> ProductResult:
    """Distortion constant of a demeaned OU-type process.

    ``closed_form`` evaluates the known limits; ``product`` multiplies the
    root-based factors up to ``K`` and corrects for the tail.
    """
    closed = closed_form_constant(spec)
    if method == "closed_form":
        return ProductResult(closed, closed, 0.0, 0, [], closed)
    if method != "product":
        raise ParameterError(f"unknown method {method!r}")
    f = char_function(spec)
    if spec.beta == 0.0:
        return ProductResult(1.0, 1.0, 0.0, K, [], closed)
    z = roots(f, K).zeta
    k = np.arange(1, K + 1)
    b2 = spec.beta**2
    if f.family is CharFamily.FDET2:
        ref = np.pi * (k - 0.5)
        # lambda^(1/2) / (pi (k - 1/2))^2
        lt = 2 * np.log(z / ref) + 0.5 * np.log1p(b2 / z**2)
        out = log_product(lt, 0.5, spec.label)
    else:
        ref = np.pi * k
        lt = np.log((z**2 + b2) / ref**2)
        out = log_product(lt, 0.0, spec.label)
    out.closed_form = closed
    return out
