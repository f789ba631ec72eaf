"""Cylinder functions: series/continued-fraction J, downward-recurrence N.

Frozen reference values come from three independent routes, none of which
shares code with the module under test:

* ``mpmath.besselj`` at 40 significant digits for the complex spot value;
* the ascending series for J_3(3.5) summed in exact ``fractions.Fraction``
  arithmetic and rounded once at the end;
* ``scipy.integrate.quad`` applied to the standard integral representation
  of N_nu for the real N spot values.
"""

import math

import numpy as np
import pytest

from invosc.bessel import (EvalDomain, bessel_j, bessel_n, gamma_real,
                           wronskian_check)
from invosc.errors import (DomainTooLarge, NonPositiveArgument, Overflow,
                           Pole)

# mpmath dps=40: besselj(2.5, 3.7 + 0.2j)
J_COMPLEX_REF = 0.4617433206681554439843833 - 0.003205716463664856660341146j

# Ascending series in Fraction arithmetic, 60 terms: J_3(3.5)
J3_35_REF = 0.38677011171688136

# quad on the DLMF integral representation of N_nu(x)
N_REF = {
    (0.0, 1.0): 0.088256964215677136,
    (0.0, 9.3): 0.20857006764523731,
    (1.0, 1.0): -0.78121282130028868,
    (2.0, 9.3): -0.17221279730944872,
}


# -- frozen-value checks -------------------------------------------------------

def test_j_complex_against_mpmath():
    val = bessel_j(2.5, 3.7 + 0.2j)
    assert abs(val - J_COMPLEX_REF) / abs(J_COMPLEX_REF) < 1e-11


def test_j_real_against_exact_series():
    val = bessel_j(3.0, 3.5)
    assert abs(val - J3_35_REF) < 5e-14


@pytest.mark.parametrize("nu,x", sorted(N_REF))
def test_n_against_quadrature(nu, x):
    ref = N_REF[(nu, x)]
    assert abs(bessel_n(nu, x) - ref) / abs(ref) < 1e-11


def test_j_half_integer_closed_forms():
    # J_{1/2} and J_{3/2} reduce to trig closed forms; exercise both the
    # float-series path (|z| < 10) and the high-precision complex path.
    import cmath

    def j_half(z):
        return cmath.sqrt(2.0 / (cmath.pi * z)) * cmath.sin(z)

    def j_3half(z):
        return cmath.sqrt(2.0 / (cmath.pi * z)) * (cmath.sin(z) / z - cmath.cos(z))

    for z in (3.0 + 1.0j, 12.0 + 5.0j):
        for nu, ref_fn in ((0.5, j_half), (1.5, j_3half)):
            ref = ref_fn(z)
            assert abs(bessel_j(nu, z) - ref) / abs(ref) < 1e-12


# -- identities ----------------------------------------------------------------

@pytest.mark.parametrize("nu,x", [(0.0, 1.0), (0.5, 2.3), (2.5, 7.7),
                                  (7.0, 20.0), (1.0, 40.0)])
def test_wronskian_identity_spot_pairs(nu, x):
    # wronskian_check returns the raw deviation; scale by pi x / 2 so the
    # bound matches the usual normalized statement 1 - (pi x / 2) W = 0.
    assert abs(wronskian_check(nu, x) * (math.pi * x / 2.0)) < 1e-9


@pytest.mark.parametrize("nu,x", [(1.0, 2.7), (2.5, 6.3), (4.0, 18.0)])
def test_three_term_recurrence(nu, x):
    lhs = bessel_j(nu - 1.0, x) + bessel_j(nu + 1.0, x)
    rhs = (2.0 * nu / x) * bessel_j(nu, x)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1.0)


@pytest.mark.parametrize("z", [3.7 + 0.2j, 12.0 + 5.0j])
def test_conjugate_symmetry_is_exact(z):
    # Both evaluation routes use arithmetic that commutes with conjugation,
    # so this holds bit for bit, not merely to rounding.
    assert bessel_j(2.5, z.conjugate()) == bessel_j(2.5, z).conjugate()


@pytest.mark.parametrize("nu", [0.0, 1.5, 4.0])
def test_real_axis_and_complex_paths_agree(nu):
    # x = 12 on the axis goes through the continued-fraction evaluator; a
    # vanishing imaginary part forces the high-precision series instead.
    on_axis = bessel_j(nu, 12.0)
    off_axis = bessel_j(nu, 12.0 + 1e-30j)
    assert abs(off_axis - on_axis) / abs(on_axis) < 1e-11


@pytest.mark.parametrize("nu", [0.5, 2.5, 7.0])
def test_small_argument_power_law(nu):
    x = 1e-4
    leading = (x / 2.0) ** nu / gamma_real(nu + 1.0)
    assert abs(bessel_j(nu, x) - leading) / leading < 1e-8


def test_value_at_zero_argument():
    assert bessel_j(0.0, 0.0) == 1.0
    assert bessel_j(0.5, 0.0) == 0.0
    assert bessel_j(3.0, 0.0) == 0.0


def test_n_diverges_toward_origin():
    val = bessel_n(3.0, 0.01)
    assert math.isfinite(val)
    assert val < -1e6


# -- dtype and shape contract --------------------------------------------------

def test_scalar_types_follow_input():
    real = bessel_j(1.0, 2.0)
    assert isinstance(real, float)
    cplx = bessel_j(1.0, 2.0 + 1.0j)
    assert isinstance(cplx, complex)


def test_negative_real_argument_promotes_to_complex():
    val = bessel_j(0.0, -1.0)
    assert isinstance(val, complex)
    # J_0 is even, and (-1)^2 = 1 exactly, so the series sums identically.
    assert val == bessel_j(0.0, 1.0) + 0.0j


def test_array_arguments_round_trip():
    xs = np.array([[0.5, 1.0], [2.0, 9.5]])
    out = bessel_j(1.5, xs)
    assert out.shape == xs.shape
    assert out.dtype == np.float64
    for idx in np.ndindex(xs.shape):
        assert out[idx] == bessel_j(1.5, float(xs[idx]))

    n_out = bessel_n(1.0, np.array([1.0, 2.0, 3.0]))
    assert n_out.shape == (3,)
    assert n_out[1] == bessel_n(1.0, 2.0)


def test_empty_array_passes_through():
    out = bessel_j(1.0, np.array([]))
    assert out.shape == (0,)
    assert not np.iscomplexobj(out)


# -- domain policy and failure modes -------------------------------------------

def test_complex_magnitude_past_validated_radius_refused():
    with pytest.raises(DomainTooLarge):
        bessel_j(1.0, 22.0 + 22.0j)


def test_wider_domain_rescues_and_stays_accurate():
    # mpmath dps=40: besselj(1, 22 + 22j)
    ref = 93146191.19330984 - 236547511.21517372j
    val = bessel_j(1.0, 22.0 + 22.0j, EvalDomain(series_radius=40.0))
    assert abs(val - ref) / abs(ref) < 1e-11


def test_eval_domain_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        EvalDomain(series_radius=0.0)
    with pytest.raises(ValueError):
        EvalDomain(series_radius=-3.0)


def test_order_must_be_finite_and_nonnegative():
    with pytest.raises(ValueError):
        bessel_j(-0.5, 1.0)
    with pytest.raises(ValueError):
        bessel_j(float("nan"), 1.0)
    with pytest.raises(ValueError):
        bessel_n(-1.0, 1.0)


def test_n_needs_strictly_positive_argument():
    with pytest.raises(NonPositiveArgument):
        bessel_n(1.0, 0.0)
    with pytest.raises(NonPositiveArgument):
        bessel_n(1.0, -2.0)
    with pytest.raises(NonPositiveArgument):
        bessel_n(0.0, np.array([1.0, -1.0]))


def test_wronskian_check_needs_positive_x():
    with pytest.raises(NonPositiveArgument):
        wronskian_check(1.0, 0.0)
    with pytest.raises(NonPositiveArgument):
        wronskian_check(1.0, -1.0)


# -- gamma helper ---------------------------------------------------------------

def test_gamma_matches_platform_away_from_poles():
    xs = [0.5, 1.0, 1.5, 7.25, 42.0, 170.0, -0.5, -2.5, -10.25, -169.5]
    for x in xs:
        ref = math.gamma(x)
        assert abs(gamma_real(x) - ref) <= 1e-13 * abs(ref)


def test_gamma_pole_and_overflow_are_typed():
    for x in (0.0, -1.0, -4.0):
        with pytest.raises(Pole):
            gamma_real(x)
    with pytest.raises(Overflow):
        gamma_real(172.0)
    with pytest.raises(ValueError):
        gamma_real(float("inf"))
    with pytest.raises(ValueError):
        gamma_real(float("nan"))
