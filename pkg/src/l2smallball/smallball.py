"""Small-ball probabilities P{||X|| <= eps} for Green Gaussian processes.

``||X||^2`` has the law of ``sum mu_k xi_k^2``.  The distribution of the
truncated sum is obtained by Imhof's inversion formula, checked by a seeded
Monte Carlo estimator, and compared with the one-term asymptotics.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .characteristic_spectra import ProductResult, characteristic_spectrum, log_product
from .errors import NotAvailableError, ParameterError, PrecisionError
from .process_catalog import Family, ProcessSpec, kernel
from .spectral_oracle import Spectrum, closed_form_spectrum, nystrom_spectrum

ABS_TOL = 1e-8
ENVELOPE_CUT = 1e-13
GL_NODES = (16, 24)
CHUNK = 4096
MC_TERMS = 100
MC_CHUNK = 16384
NYSTROM_MAX_K = 100
MIN_REPORTED_P = 1e-12


def default_threads():
    try:
        return max(1, int(os.environ.get("SMALLBALL_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class QuadFormDist:
    """Law of ``sum_{k<=K} mu_k xi_k^2 + tail_mean``."""

    spectrum: Spectrum
    tail_mean: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.tail_mean >= 0:
            raise ParameterError("tail_mean must be non-negative")

    @classmethod
    def from_spectrum(cls, spectrum: Spectrum, seed=None, with_tail=True):
        tail = spectrum.tail_mean() if with_tail else 0.0
        return cls(spectrum, tail, seed)

    @property
    def mu(self):
        return self.spectrum.mu

    @property
    def mean(self):
        return float(self.mu.sum()) + self.tail_mean


# --------------------------------------------------------------------------
# Imhof inversion


@dataclass(frozen=True)
class InversionResult:
    p: float
    error: float
    panels: int
    below_tail: bool = False


SERIES_CUT = 0.1  # weights with 2 mu t below this are summed by Taylor series
SERIES_ORDER = 21


class _CharFn:
    """Phase and modulus of prod (1 - 2 i t mu_k)^(-1/2).

    Weights small enough that 2 mu_k t < SERIES_CUT on a block of t enter
    through suffix power sums of the arctan and log1p series, so the cost
    per node is set by the handful of weights that are not yet small.
    """

    def __init__(self, mu):
        self.mu = np.asarray(mu, dtype=float)
        p = np.arange(1, SERIES_ORDER + 1)[:, None]
        with np.errstate(under="ignore"):
            powers = self.mu[None, :] ** p
        # suffix[p-1, j] = sum_{k >= j} mu_k^p
        self.suffix = np.concatenate([np.cumsum(powers[:, ::-1], axis=1)[:, ::-1], np.zeros((SERIES_ORDER, 1))], axis=1)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ph = np.empty_like(t)
        lenv = np.empty_like(t)
        neg_mu = -self.mu
        for c in range(0, t.size, CHUNK):
            tb = t[c : c + CHUNK]
            j = int(np.searchsorted(neg_mu, -SERIES_CUT / (2.0 * tb.max())))
            a = 2.0 * np.outer(tb, self.mu[:j])
            phb = 0.5 * np.arctan(a).sum(axis=1)
            lb = -0.25 * np.log1p(a * a).sum(axis=1)
            x = 2.0 * tb
            for n in range(0, SERIES_ORDER, 2):  # odd powers: arctan
                phb += 0.5 * (-1) ** (n // 2) * x ** (n + 1) * self.suffix[n, j] / (n + 1)
            for n in range(1, SERIES_ORDER, 2):  # even powers: log1p(a^2)
                m = (n + 1) // 2
                lb -= 0.25 * (-1) ** (m + 1) * x ** (n + 1) * self.suffix[n, j] / m
            ph[c : c + CHUNK] = phb
            lenv[c : c + CHUNK] = lb
        return ph, np.exp(lenv)

    def dphase(self, t):
        return float(np.sum(self.mu / (1.0 + (2.0 * self.mu * t) ** 2)))


def _head_limit(mu):
    """Upper end of the panel quadrature and whether an oscillatory tail
    integral is still needed beyond it."""
    t_sat = 20.0 / mu[-1]

    def log_te(t):  # log(t * envelope / t)
        return -0.25 * np.log1p((2.0 * mu * t) ** 2).sum()

    T = 1.0
    while log_te(T) > math.log(ENVELOPE_CUT) and T < t_sat:
        T *= 1.25
    return min(T, t_sat), T >= t_sat


def _panel_edges(cf, y, T):
    """Panels of at most a quarter period of sin(phase - t y); the local
    frequency |phase' - y| is bounded by phase'(t) + y, which decreases."""
    w0 = np.pi / (2.0 * (cf.dphase(0.0) + y))
    edges = [0.0]
    t = 0.0
    while t < T:
        w = min(np.pi / (2.0 * (cf.dphase(t) + y)), max(0.5 * t, w0))
        t = min(t + w, T)
        edges.append(t)
    return np.array(edges)


def _imhof_head(cf, edges, y, q):
    g, w = np.polynomial.legendre.leggauss(q)
    h = np.diff(edges)
    t = (edges[:-1, None] + 0.5 * h[:, None] * (g + 1.0)).ravel()
    wt = (0.5 * h[:, None] * w).ravel()
    ph, env = cf(t)
    return float(np.sum(wt * np.sin(ph - t * y) * env / t))


def _imhof_tail(cf, y, T):
    # sin(phi - t y) = sin(phi) cos(t y) - cos(phi) sin(t y); phi is nearly
    # constant here, so QAWF handles the remaining oscillation.
    def fs(t):
        ph, env = cf(t)
        return float(np.sin(ph[0]) * env[0] / t)

    def fc(t):
        ph, env = cf(t)
        return float(np.cos(ph[0]) * env[0] / t)

    if y <= 0:
        raise ParameterError("oscillatory tail needs y > 0")
    a, ea = quad(fs, T, np.inf, weight="cos", wvar=y, limlst=100)
    b, eb = quad(fc, T, np.inf, weight="sin", wvar=y, limlst=100)
    return a - b, ea + eb


def imhof(d: QuadFormDist, x: float) -> InversionResult:
    """P{Q <= x} by Imhof's formula with two Gauss rules for an error bound."""
    y = float(x) - d.tail_mean
    if y <= 0:
        return InversionResult(0.0, 0.0, 0, below_tail=True)
    mu = np.asarray(d.mu, dtype=float)
    cf = _CharFn(mu)
    T, need_tail = _head_limit(mu)
    edges = _panel_edges(cf, y, T)
    vals = [_imhof_head(cf, edges, y, q) for q in GL_NODES]
    tail = tail_err = 0.0
    if need_tail:
        tail, tail_err = _imhof_tail(cf, y, T)
    p = 0.5 - (vals[-1] + tail) / np.pi
    err = (abs(vals[-1] - vals[0]) + tail_err) / np.pi + ENVELOPE_CUT
    if err > ABS_TOL:
        raise PrecisionError(f"inversion error {err:.3g} exceeds {ABS_TOL:g}", achieved=err)
    return InversionResult(float(min(max(p, 0.0), 1.0)), err, edges.size - 1)


def quadform_cdf(d: QuadFormDist, x: float) -> float:
    return imhof(d, x).p


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MCResult:
    p: float
    stderr: float
    n_samples: int
    terms: int


def _chunk_count(seed, index, size, mu, y):
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    rng = np.random.Generator(np.random.Philox(ss))
    z = rng.standard_normal((size, mu.size))
    np.square(z, out=z)
    z *= mu
    return int(np.count_nonzero(z.sum(axis=1) <= y))


def quadform_mc(d: QuadFormDist, x: float, n_samples: int, seed: Optional[int] = None, threads: Optional[int] = None) -> MCResult:
    """Empirical P{Q <= x}.

    Only the leading ``MC_TERMS`` weights are sampled; the remaining mean is
    added as a shift.  Each chunk of samples draws from its own Philox
    stream keyed by (seed, chunk index), so the estimate does not depend on
    the number of worker threads.
    """
    seed = d.seed if seed is None else seed
    if seed is None:
        raise ParameterError("Monte Carlo needs an explicit seed")
    if n_samples < 10_000:
        raise ParameterError("n_samples must be at least 10^4")
    mu = np.asarray(d.mu, dtype=float)
    m = min(mu.size, MC_TERMS)
    shift = d.tail_mean + float(mu[m:].sum())
    head = mu[:m]
    y = float(x) - shift
    sizes = [MC_CHUNK] * (n_samples // MC_CHUNK)
    if n_samples % MC_CHUNK:
        sizes.append(n_samples % MC_CHUNK)
    jobs = [(seed, i, s, head, y) for i, s in enumerate(sizes)]
    workers = threads or default_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(lambda a: _chunk_count(*a), jobs))
    else:
        hits = sum(_chunk_count(*a) for a in jobs)
    p = hits / n_samples
    return MCResult(p, math.sqrt(max(p * (1.0 - p), 0.0) / n_samples), n_samples, m)


# --------------------------------------------------------------------------
# asymptotics and comparison


def _is_wiener_like(spec):
    if spec.family in (Family.WIENER, Family.XALPHA):
        return True
    return spec.family in (Family.OU, Family.OU_ZERO) and spec.beta == 0.0


def asymptotic_prob(spec: ProcessSpec, eps: float) -> float:
    """Leading-order small-ball asymptotics of the demeaned catalog processes."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    if not spec.demeaned:
        raise NotAvailableError(f"no small-ball asymptotics for {spec.label}")
    b = spec.beta
    gauss = math.exp(-1.0 / (8.0 * eps * eps))
    if _is_wiener_like(spec):
        return math.sqrt(8.0 / math.pi) * gauss
    if spec.family is Family.OU:
        return math.sqrt(16.0 * math.exp(b) / (math.pi * (2.0 + b))) * gauss
    if spec.family is Family.OU_ZERO:
        return math.sqrt(8.0 * math.exp(b) / math.pi) * gauss
    if spec.family is Family.INTEGRATED_OU:
        pref = 16.0 * math.sqrt(b * math.exp(b) / (3.0 * math.pi))
        return pref * eps ** (1.0 / 3.0) * math.exp(-0.375 * eps ** (-2.0 / 3.0))
    raise NotAvailableError(f"no small-ball asymptotics for {spec.label}")


def li_comparison(target: Spectrum, reference: Spectrum) -> ProductResult:
    """Constant (prod reference_k / target_k)^(1/2) with tail correction."""
    if target.truncation != reference.truncation:
        raise ParameterError("spectra must share the same truncation")
    lt = np.log(reference.mu) - np.log(target.mu)
    prod = log_product(lt, target.decay_offset, "comparison product")
    return ProductResult(
        math.sqrt(prod.value),
        math.sqrt(prod.partial),
        0.5 * prod.tail_log,
        prod.K,
        [(k, math.sqrt(v)) for k, v in prod.trace],
    )


# --------------------------------------------------------------------------
# spectra for arbitrary catalog specs and the report


def spectrum_for(spec: ProcessSpec, K: int, method: str = "auto", n_nodes: int = 2000) -> Spectrum:
    """Leading ``K`` KL eigenvalues of a catalog process.

    ``auto`` prefers closed forms, then characteristic roots, then Nystrom
    (capped at ``NYSTROM_MAX_K`` terms).
    """
    if method not in ("auto", "closed_form", "charfn", "nystrom"):
        raise ParameterError(f"unknown spectrum method {method!r}")
    if method in ("auto", "closed_form"):
        try:
            return closed_form_spectrum(spec, K)
        except NotAvailableError:
            if method == "closed_form":
                raise
    if method in ("auto", "charfn"):
        try:
            return characteristic_spectrum(spec, K)
        except NotAvailableError:
            if method == "charfn":
                raise
    k_max = min(K, NYSTROM_MAX_K)
    if n_nodes < 4 * k_max:
        raise ParameterError(f"n_nodes must be at least {4 * k_max}")
    return nystrom_spectrum(kernel(spec), n_nodes=n_nodes, k_max=k_max).spectrum


@dataclass
class ReportConfig:
    methods: Sequence[str] = ("imhof", "asymptotic")
    K: int = 2000
    n_samples: int = 1_000_000
    seed: Optional[int] = None
    n_nodes: int = 2000
    threads: Optional[int] = None
    spectrum_method: str = "auto"

    def __post_init__(self):
        self.methods = tuple(self.methods)
        unknown = set(self.methods) - {"imhof", "mc", "asymptotic"}
        if unknown:
            raise ParameterError(f"unknown method(s): {', '.join(sorted(unknown))}")
        if "mc" in self.methods and self.seed is None:
            raise ParameterError("a seed is required when mc is selected")
        if self.K < 1:
            raise ParameterError("K must be positive")


@dataclass
class SmallBallReport:
    process: str
    parameter: float
    epsilon: float
    p_exact: float = math.nan
    p_exact_error: float = math.nan
    p_mc: float = math.nan
    mc_stderr: float = math.nan
    p_asymptotic: float = math.nan
    truncation: int = 0
    flags: tuple = field(default_factory=tuple)

    @property
    def ratio(self):
        return self.p_exact / self.p_asymptotic

    CSV_FIELDS = ("process", "beta_or_alpha", "epsilon", "p_exact", "p_mc", "mc_stderr", "p_asymptotic", "ratio")

    def row(self):
        return (self.process, self.parameter, self.epsilon, self.p_exact, self.p_mc, self.mc_stderr, self.p_asymptotic, self.ratio)

    def to_json(self):
        out = asdict(self)
        out["ratio"] = self.ratio
        out["flags"] = list(self.flags)
        return out


def report(spec: ProcessSpec, eps_list: Sequence[float], config: Optional[ReportConfig] = None) -> list:
    """Exact, Monte Carlo and asymptotic small-ball probabilities per eps."""
    config = config or ReportConfig()
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        return []
    if any(e <= 0 for e in eps_list):
        raise ParameterError("eps values must be positive")
    dist = None
    if "imhof" in config.methods or "mc" in config.methods:
        spectrum = spectrum_for(spec, config.K, config.spectrum_method, config.n_nodes)
        dist = QuadFormDist.from_spectrum(spectrum, seed=config.seed)
    out = []
    for eps in eps_list:
        rec = SmallBallReport(spec.label, spec.parameter, eps)
        flags = []
        x = eps * eps
        if dist is not None:
            rec.truncation = dist.spectrum.truncation
        if "imhof" in config.methods:
            res = imhof(dist, x)
            if res.below_tail:
                flags.append("below_tail_mean")
            if res.p >= MIN_REPORTED_P:
                rec.p_exact, rec.p_exact_error = res.p, res.error
            else:
                flags.append("below_inversion_floor")
        if "mc" in config.methods:
            mc = quadform_mc(dist, x, config.n_samples, config.seed, config.threads)
            rec.p_mc, rec.mc_stderr = mc.p, mc.stderr
        if "asymptotic" in config.methods:
            rec.p_asymptotic = asymptotic_prob(spec, eps)
        rec.flags = tuple(flags)
        out.append(rec)
    return out
