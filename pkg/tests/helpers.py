"""Shared cached computations and frozen oracle values for the tests."""

from functools import lru_cache

import numpy as np

from l2smallball.characteristic_spectra import characteristic_spectrum
from l2smallball.process_catalog import Family, ProcessSpec, kernel
from l2smallball.smallball import QuadFormDist, spectrum_for
from l2smallball.spectral_oracle import nystrom_spectrum

BETAS = (0.5, 1.0, 2.0)
DEMEANED_OU_FAMILIES = (Family.OU, Family.OU_ZERO, Family.INTEGRATED_OU)


def demeaned(family, **kw):
    return ProcessSpec(family, demeaned=True, **kw)


@lru_cache(maxsize=None)
def nystrom(spec, n_nodes=2000, k_max=10):
    return nystrom_spectrum(kernel(spec), n_nodes=n_nodes, k_max=k_max)


@lru_cache(maxsize=None)
def charfn_spectrum(spec, K):
    return characteristic_spectrum(spec, K)


@lru_cache(maxsize=None)
def dist(spec, K=2000):
    return QuadFormDist.from_spectrum(spectrum_for(spec, K))


# Oracle values, computed once with mpmath at 50 digits and frozen here.
# F(0): the closed-form expressions evaluated at zeta = 1e-3 and 1e-4 and
# Richardson-extrapolated in h^2.
F_OU_AT_ZERO = {0.5: 3.1770833333333333, 1.0: 4.75, 2.0: 9.3333333333333333}
F_OU0_AT_ZERO = {0.5: 1.59375, 1.0: 2.4166666666666667, 2.0: 5.0}
# |det(zeta)| / zeta^3 at zeta = 1e-3 (determinant expanded in mpmath).
DET_OVER_CUBE_1E3 = {0.5: 0.05152367223938863844, 1.0: 21.746373481045092344, 2.0: 15132.806811667535677}
# |F2(1e-3)| from the mpmath determinant divided by V * (z^4 + b^2 z^2).
F2_AT_1E3 = {0.5: 1.648721239519478491, 1.0: 5.4365634691057886178, 2.0: 29.556222664212826959}
# int_0^1 int_0^1 exp(-|u - v|)/2 du dv by nested adaptive quadrature.
OU_DOUBLE_INTEGRAL = 0.3678794411714423216
# sqrt(8/pi) exp(-12.5)
WIENER_ASYMPTOTIC_EPS_01 = 5.9468780589371908316e-6
# Brownian-bridge spectrum (pi k)^-2, P{Q <= 0.25}: 10^7 Monte Carlo draws
# (seed 20240601, 100 sampled terms plus tail mean).
BRIDGE_MC_P = 0.8116666
BRIDGE_MC_STDERR = 0.00012363815367613673
