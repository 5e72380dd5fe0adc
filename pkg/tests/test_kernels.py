import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoslab.errors import ConstraintViolation, InvalidArgument
from chaoslab.kernels import (TrigField, builtin_kernel, derivative_audit, displacement,
                              grid_points, make_kernel, norm_audit, trig_sum_field, wrap)


# -- geometry ----------------------------------------------------------------

def test_wrap_examples():
    assert np.allclose(wrap([0.3, 0.7]), [0.3, 0.7])
    assert np.allclose(wrap([1.25, -0.25]), [0.25, 0.75])
    assert np.allclose(wrap([3.0]), [0.0])


def test_wrap_rejects_non_finite():
    with pytest.raises(InvalidArgument):
        wrap([np.nan, 0.1])
    with pytest.raises(InvalidArgument):
        wrap([np.inf])


def test_wrap_tiny_negative_stays_below_one():
    assert wrap([-1e-18])[0] < 1.0


def test_displacement_examples():
    assert np.allclose(displacement([0.9], [0.1]), [-0.2])
    assert np.allclose(displacement([0.1], [0.9]), [0.2])
    assert np.allclose(displacement([0.5, 0.5], [0.5, 0.5]), [0.0, 0.0])


def test_displacement_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        displacement([0.1, 0.2], [0.1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=3))
def test_wrap_displacement_round_trip(raw):
    x = np.array(raw)
    d = displacement(wrap(x), np.zeros_like(x))
    assert np.all((d >= -0.5) & (d < 0.5))
    # d reconstructs x modulo 1
    frac = (d - x) - np.round(d - x)
    assert np.allclose(frac, 0.0, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=2, max_size=2),
       st.lists(st.floats(0, 1, exclude_max=True), min_size=2, max_size=2))
def test_displacement_antisymmetric(a, b):
    d1 = displacement(a, b)
    d2 = displacement(b, a)
    off_edge = np.abs(np.abs(d1) - 0.5) > 1e-12
    assert np.allclose(d1[off_edge], -d2[off_edge])


def test_grid_points_shape():
    p = grid_points(8, 2)
    assert p.shape == (64, 2)
    assert p.min() == 0.0 and p.max() == 7 / 8


# -- trig fields ---------------------------------------------------------------

def test_trig_field_derivative_closed_form():
    f = trig_sum_field(1, [(0.3, "sin", [2]), (0.2, "cos", [1])], const=1.0)
    x = np.linspace(0, 1, 7)[:, None]
    want = 0.3 * 4 * np.pi * np.cos(4 * np.pi * x[:, 0]) - 0.2 * 2 * np.pi * np.sin(
        2 * np.pi * x[:, 0])
    assert np.allclose(f.derivative(0)(x), want)


def test_trig_field_convolution_matches_quadrature():
    f = trig_sum_field(1, [(0.4, "sin", [1]), (0.1, "cos", [3])], const=0.5)
    n = 64
    y = (np.arange(n) / n)[:, None]
    rho = 1 + 0.3 * np.cos(2 * np.pi * y[:, 0]) + 0.2 * np.sin(6 * np.pi * y[:, 0])
    rho_hat = np.array([np.mean(rho * np.exp(-2j * np.pi * k * y[:, 0]))
                        for k in f.wavevectors[:, 0]])
    conv = f.convolve(rho_hat, mass=float(np.mean(rho)))
    x = np.array([[0.1], [0.37], [0.8]])
    direct = [np.mean(f(xi - y) * rho) for xi in x]
    assert np.allclose(conv(x), direct, atol=1e-13)


def test_pair_sums_match_direct():
    f = trig_sum_field(1, [(0.4, "sin", [1]), (0.1, "cos", [2])], const=0.2)
    pos = np.random.default_rng(1).random((3, 11, 1))
    direct = f(pos[:, :, None, :] - pos[:, None, :, :]).sum(axis=-1)
    assert np.allclose(f.pair_sums(pos), direct, atol=1e-12)


def test_trig_field_zero_and_constant():
    assert TrigField.zero(2)(np.zeros((3, 2))).tolist() == [0.0, 0.0, 0.0]
    assert np.all(TrigField.constant(1, 2.5)(np.random.rand(4, 1)) == 2.5)


# -- builtin kernels ----------------------------------------------------------

def test_zero_drift():
    s = builtin_kernel("zero_drift", 1, [])
    nd = norm_audit(s, 32)
    assert nd.drift_sup == 0 and nd.potential_sup == 0
    assert np.all(s.div_K(np.random.rand(5, 1)) == 0)


def test_constant_sigma_norm():
    s = builtin_kernel("constant_sigma", 1, [1.0, 0.5])
    assert norm_audit(s, 32).sigma_w2inf == 1.0
    assert s.sigma_floor == 0.5


def test_trig_sigma_minimum_and_norm():
    s = builtin_kernel("trig_sigma", 1, [1.0, 0.25, 2])
    x = grid_points(4096, 1)
    # min of 1 + 0.25 sin(4 pi x) is 0.75, attained at x = 3/8
    assert np.isclose(s.sigma(x).min(), 0.75)
    assert s.sigma_floor == 0.5
    # W^{2,inf} convention: max(1.25, 0.25 * 4 pi, 0.25 * 16 pi^2) = 4 pi^2
    assert np.isclose(norm_audit(s, 64).sigma_w2inf, 4 * np.pi**2, rtol=1e-12)


@pytest.mark.parametrize("params", [[1.0, 1.0, 1], [1.0, 1.5, 2], [0.5, -0.6, 1]])
def test_trig_sigma_amplitude_violation(params):
    with pytest.raises(ConstraintViolation) as exc:
        builtin_kernel("trig_sigma", 1, params)
    assert exc.value.assumption == "diffusion lower bound"


def test_constant_sigma_bad_floor():
    with pytest.raises(ConstraintViolation):
        builtin_kernel("constant_sigma", 1, [1.0, 1.0])


def test_unknown_family():
    with pytest.raises(InvalidArgument):
        builtin_kernel("coulomb", 1, [])


def test_norm_audit_grid_precondition():
    with pytest.raises(InvalidArgument):
        norm_audit(builtin_kernel("zero_drift", 1), 8)


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("drift,diffusion", [
    (("trig_drift", [0.5, 1, 0.2, 3]), ("trig_sigma", [1.0, 0.25, 2])),
    (("zero_drift", []), ("constant_sigma", [0.7])),
    (("trig_drift", [0.3, 2]), ("constant_sigma", [1.0])),
])
def test_derivative_audit_passes(dim, drift, diffusion):
    s = make_kernel(dim, drift=drift, diffusion=diffusion)
    for name, (err, tol) in derivative_audit(s, 32 if dim == 2 else 64).items():
        assert err <= tol, name


@pytest.mark.parametrize("dim", [1, 2])
def test_sigma_above_floor_on_grid(dim):
    s = make_kernel(dim, diffusion=("trig_sigma", [0.3, 0.05, 1]))
    assert s.sigma(grid_points(64 if dim == 1 else 32, dim)).min() > s.sigma_floor


def test_trig_drift_potential_has_matching_divergence():
    s = make_kernel(2, drift=("trig_drift", [0.5, 1]))
    x = np.random.default_rng(0).random((20, 2))
    h = 1e-5
    fd = sum((s.g(x + h * e)[:, a] - s.g(x - h * e)[:, a]) / (2 * h)
             for a, e in enumerate(np.eye(2)))
    assert np.allclose(fd, s.div_K(x), atol=1e-6)
