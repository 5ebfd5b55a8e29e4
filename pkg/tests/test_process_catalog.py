import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad

from l2smallball.errors import NotApplicableError, ParameterError, ResolutionError
from l2smallball.process_catalog import (
    Family,
    Kernel,
    ProcessSpec,
    base_operator,
    demean_kernel,
    demeaned_operator,
    derivative,
    fd_weights,
    integrated_kernel,
    kernel,
    offdiagonal_identity,
    operator_residual,
)

from helpers import OU_DOUBLE_INTEGRAL

GRID = np.linspace(0.0, 1.0, 37)


def catalog_specs():
    betas = st.sampled_from([0.3, 0.5, 1.0, 2.0, 4.0])
    alphas = st.sampled_from([-0.5, 0.0, 0.5, 1.0, 2.0, 3.0])
    plain = st.sampled_from([Family.WIENER, Family.BRIDGE])
    return st.one_of(
        st.builds(ProcessSpec, plain, demeaned=st.booleans()),
        st.builds(ProcessSpec, st.just(Family.XALPHA), alpha=alphas, demeaned=st.booleans()),
        st.builds(ProcessSpec, st.sampled_from([Family.OU, Family.OU_ZERO, Family.INTEGRATED_OU]), beta=betas, demeaned=st.booleans()),
    )


# --------------------------------------------------------------------------
# ProcessSpec validation


def test_xalpha_minus_one_rejected():
    with pytest.raises(ParameterError):
        ProcessSpec(Family.XALPHA, alpha=-1.0)


@pytest.mark.parametrize("family", [Family.OU, Family.OU_ZERO, Family.INTEGRATED_OU])
@pytest.mark.parametrize("beta", [-1.0, 0.0])
def test_nonpositive_beta_rejected(family, beta):
    with pytest.raises(ParameterError):
        ProcessSpec(family, beta=beta)


def test_beta_zero_limit_only_for_demeaned_ou():
    ProcessSpec(Family.OU, beta=0.0, demeaned=True)
    ProcessSpec(Family.OU_ZERO, beta=0.0, demeaned=True)
    with pytest.raises(ParameterError):
        ProcessSpec(Family.INTEGRATED_OU, beta=0.0, demeaned=True)


def test_unknown_family():
    with pytest.raises(ParameterError):
        ProcessSpec("brownian-sheet")


# --------------------------------------------------------------------------
# kernel examples


def test_wiener_kernel_value():
    assert kernel(ProcessSpec(Family.WIENER))(0.3, 0.7) == pytest.approx(0.3, abs=1e-15)


def test_ou_kernel_diagonal():
    assert kernel(ProcessSpec(Family.OU, beta=1.0))(0.4, 0.4) == pytest.approx(0.5, abs=1e-15)


def test_ou_zero_starts_at_zero():
    assert kernel(ProcessSpec(Family.OU_ZERO, beta=1.0))(0.0, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_xalpha_zero_is_wiener():
    T, S = np.meshgrid(GRID, GRID)
    G = kernel(ProcessSpec(Family.XALPHA, alpha=0.0))(T, S)
    np.testing.assert_allclose(G, np.minimum(T, S), atol=1e-15)


def test_ou_zero_kernel_closed_form():
    b = 1.3
    T, S = np.meshgrid(GRID, GRID)
    expected = (np.exp(-b * np.abs(T - S)) - np.exp(-b * (T + S))) / (2 * b)
    np.testing.assert_allclose(kernel(ProcessSpec(Family.OU_ZERO, beta=b))(T, S), expected, atol=1e-15)


@pytest.mark.parametrize("alpha", [-0.5, 0.5, 2.0])
def test_xalpha_kernel_is_green_function(alpha):
    # G(., s) is piecewise linear with a unit drop in slope at t = s and
    # satisfies both boundary forms.
    k = kernel(ProcessSpec(Family.XALPHA, alpha=alpha))
    for s in (0.2, 0.55, 0.9):
        h = 1e-6
        left = (k(s - h, s) - k(s - 2 * h, s)) / h
        right = (k(s + 2 * h, s) - k(s + h, s)) / h
        assert left - right == pytest.approx(1.0, abs=1e-6)
        assert k(0.0, s) + alpha * k(1.0, s) == pytest.approx(0.0, abs=1e-14)
        d0 = (k(h, s) - k(0.0, s)) / h
        d1 = (k(1.0, s) - k(1.0 - h, s)) / h
        assert alpha * d0 + d1 == pytest.approx(0.0, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(catalog_specs())
def test_kernel_symmetric(spec):
    T, S = np.meshgrid(GRID, GRID)
    G = kernel(spec)(T, S)
    assert np.max(np.abs(G - G.T)) <= 1e-12 * max(1.0, np.max(np.abs(G)))


@settings(max_examples=25, deadline=None)
@given(catalog_specs())
def test_kernel_psd_on_gauss_grid(spec):
    x, w = np.polynomial.legendre.leggauss(60)
    t, w = 0.5 * (x + 1), 0.5 * w
    sw = np.sqrt(w)
    ev = np.linalg.eigvalsh(sw[:, None] * kernel(spec)(t[:, None], t[None, :]) * sw[None, :])
    assert ev[0] >= -1e-8 * ev[-1]


# --------------------------------------------------------------------------
# demeaning


def test_demeaning_constant_kernel_gives_zero():
    const = Kernel(lambda t, s: np.full(np.broadcast(t, s).shape, 2.5), "const")
    T, S = np.meshgrid(GRID, GRID)
    np.testing.assert_allclose(demean_kernel(const)(T, S), 0.0, atol=1e-13)


def _eq5_by_quadrature(G, t, s):
    r_t = quad(lambda y: G(t, y), 0, 1, points=[t], epsabs=1e-13)[0]
    r_s = quad(lambda x: G(x, s), 0, 1, points=[s], epsabs=1e-13)[0]
    # split on the diagonal, where G has its kink
    f = lambda y, x: G(x, y)
    c = dblquad(f, 0, 1, 0, lambda x: x, epsabs=1e-13)[0] + dblquad(f, 0, 1, lambda x: x, 1, epsabs=1e-13)[0]
    return G(t, s) - r_t - r_s + c


@pytest.mark.parametrize("point", [(0.0, 0.0), (1.0, 1.0)])
def test_demeaned_wiener_corners(point):
    w = lambda t, s: min(t, s)
    oracle = _eq5_by_quadrature(w, *point)
    assert oracle == pytest.approx(1 / 3, abs=1e-10)
    assert demean_kernel(kernel(ProcessSpec(Family.WIENER)))(*point) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("spec", [ProcessSpec(Family.OU, beta=1.7), ProcessSpec(Family.INTEGRATED_OU, beta=0.8)])
def test_demeaning_matches_quadrature(spec):
    base = kernel(spec)
    G = lambda t, s: float(base(t, s))
    dk = demean_kernel(base)
    for t, s in [(0.1, 0.8), (0.5, 0.5), (0.95, 0.3)]:
        assert dk(t, s) == pytest.approx(_eq5_by_quadrature(G, t, s), abs=1e-10)


def test_demeaning_fixed_point_for_constant_annihilating_kernel():
    k = kernel(ProcessSpec(Family.WIENER, demeaned=True))
    assert demean_kernel(k) is k


def test_numeric_demeaning_matches_closed_form():
    closed = kernel(ProcessSpec(Family.OU, beta=1.1, demeaned=True))
    raw = kernel(ProcessSpec(Family.OU, beta=1.1))
    numeric = demean_kernel(Kernel(raw.func, "anonymous ou"))
    T, S = np.meshgrid(GRID, GRID)
    np.testing.assert_allclose(numeric(T, S), closed(T, S), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(catalog_specs())
def test_demean_idempotent(spec):
    k = demean_kernel(kernel(spec))
    again = demean_kernel(Kernel(k.func, "again"))
    g = np.linspace(0, 1, 50)
    T, S = np.meshgrid(g, g)
    assert np.max(np.abs(again(T, S) - k(T, S))) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(catalog_specs())
def test_demeaned_rows_integrate_to_zero(spec):
    k = demean_kernel(kernel(spec))
    worst = 0.0
    for t in np.linspace(0, 1, 11):
        val = quad(lambda s: float(k(t, s)), 0, 1, points=[t], epsabs=1e-10, epsrel=1e-10)[0]
        worst = max(worst, abs(val))
    assert worst <= 1e-8


# --------------------------------------------------------------------------
# integration


def test_integrated_ou_at_corner():
    k = integrated_kernel(kernel(ProcessSpec(Family.OU, beta=1.0)))
    assert k(1.0, 1.0) == pytest.approx(OU_DOUBLE_INTEGRAL, abs=1e-14)
    assert OU_DOUBLE_INTEGRAL == pytest.approx(math.exp(-1), abs=1e-15)


def test_integrated_zero_kernel():
    zero = Kernel(lambda t, s: np.zeros(np.broadcast(t, s).shape), "zero")
    assert integrated_kernel(zero)(0.7, 0.3) == 0.0


@pytest.mark.parametrize("s", [0.0, 0.4, 1.0])
def test_integrated_kernel_vanishes_at_origin(s):
    k = integrated_kernel(kernel(ProcessSpec(Family.OU, beta=1.0)))
    assert k(0.0, s) == 0.0


def test_integrated_kernel_quadrature_fallback_matches_closed_form():
    raw = kernel(ProcessSpec(Family.OU, beta=0.7))
    numeric = integrated_kernel(Kernel(raw.func, "anonymous ou"))
    closed = kernel(ProcessSpec(Family.INTEGRATED_OU, beta=0.7))
    for t, s in [(0.3, 0.9), (1.0, 1.0), (0.5, 0.2)]:
        assert numeric(t, s) == pytest.approx(float(closed(t, s)), abs=1e-13)


# --------------------------------------------------------------------------
# operators and residuals


def test_demeaned_operator_refuses_p0():
    for fam in (Family.OU, Family.OU_ZERO):
        with pytest.raises(NotApplicableError):
            demeaned_operator(ProcessSpec(fam, beta=1.0, demeaned=True))


def test_demeaned_wiener_operator_is_neumann():
    op = demeaned_operator(ProcessSpec(Family.WIENER, demeaned=True))
    # rows (u(0), u'(0), u(1), u'(1)); the forms must span {u'(0), u'(1)}
    rows = np.array([f.at0 + f.at1 for f in op.boundary_forms])
    assert np.all(rows[:, [0, 2]] == 0)
    assert np.linalg.matrix_rank(rows[:, [1, 3]]) == 2


def test_demeaned_xalpha_operator_drops_zero_order_form():
    op = demeaned_operator(ProcessSpec(Family.XALPHA, alpha=2.0, demeaned=True))
    assert not any(f.has_zero_order for f in op.boundary_forms)
    assert len(op.boundary_forms) == 2


def test_operator_spec_rejects_bad_sign():
    from l2smallball.process_catalog import OperatorSpec

    with pytest.raises(ParameterError):
        OperatorSpec(2, (0.0, 0.0, 1.0), ())


def test_fd_weights_exact_on_polynomials():
    offs = tuple(range(-3, 4))
    w = fd_weights(offs, 4)
    x = np.array(offs, dtype=float)
    assert w @ x**4 == pytest.approx(24.0)
    assert w @ x**2 == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("k", [1, 3])
def test_neumann_cosine_residual(k):
    op = demeaned_operator(ProcessSpec(Family.WIENER, demeaned=True))
    t = np.linspace(0, 1, 1024)
    rec = operator_residual(op, np.cos(np.pi * k * t), (np.pi * k) ** 2)
    assert rec.interior_rel <= 20 * rec.h**2
    assert rec.max_boundary_rel() <= 20 * rec.h**2


def test_constant_is_not_an_ou_eigenfunction():
    op = base_operator(ProcessSpec(Family.OU, beta=1.0))
    rec = operator_residual(op, np.ones(600), 5.0)
    assert rec.interior_abs == pytest.approx(4.0)


def test_residual_needs_fine_grid():
    op = base_operator(ProcessSpec(Family.WIENER))
    with pytest.raises(ResolutionError):
        operator_residual(op, np.ones(100), 1.0)


def test_derivative_of_sine():
    t = np.linspace(0, 1, 1024)
    h = t[1] - t[0]
    d3 = derivative(np.sin(3 * t), h, 3)
    ok = np.isfinite(d3)
    assert np.max(np.abs(d3[ok] + 27 * np.cos(3 * t[ok]))) < 1e-5


def test_offdiagonal_identity_excludes_band():
    k = kernel(ProcessSpec(Family.WIENER, demeaned=True))
    t, vals, h = offdiagonal_identity(k, (0.0, 0.0, -1.0), 0.5)
    assert np.all(np.abs(t - 0.5) >= 5 * h)
    np.testing.assert_allclose(vals, -1.0, atol=1e-6)
