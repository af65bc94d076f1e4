import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dualdist.errors import UndefinedDirectionError, UnsupportedDimensionError
from dualdist.sphcoords import (
    SphCoords,
    angle_periods,
    cartesian_from_sph,
    sph_from_cartesian,
    sph_from_cartesian_batch,
    volume_element,
)


def fd_jacobian_det(rho, phi, h=1e-6):
    """|det| of the central-difference Jacobian of (rho, phi) -> x."""
    z = np.concatenate([[rho], phi])
    f = lambda v: cartesian_from_sph(v[0], v[1:])
    J = np.empty((z.size, z.size))
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        J[:, i] = (f(z + e) - f(z - e)) / (2 * h)
    return abs(np.linalg.det(J))


def test_forward_known_values():
    np.testing.assert_allclose(cartesian_from_sph(SphCoords(1.0, np.array([0.0, 0.0]))), [1, 0, 0])
    np.testing.assert_allclose(cartesian_from_sph(SphCoords(0.0, np.array([0.3, 1.1]))), [0, 0, 0])


def test_inverse_known_values():
    c = sph_from_cartesian([1.0, 0.0, 0.0])
    assert c.rho == 1.0
    np.testing.assert_array_equal(c.phi, [0.0, 0.0])
    c = sph_from_cartesian([-1.0, 0.0, 0.0])
    assert c.rho == -1.0
    np.testing.assert_array_equal(c.phi, [0.0, 0.0])


def test_sign_of_zero_first_component_is_positive():
    c = sph_from_cartesian([0.0, 0.0, 1.0])
    assert c.rho == 1.0
    np.testing.assert_allclose(cartesian_from_sph(c), [0, 0, 1], atol=1e-15)


def test_rejects_small_dimensions():
    with pytest.raises(UnsupportedDimensionError):
        sph_from_cartesian([1.0, 2.0])
    with pytest.raises(UnsupportedDimensionError):
        SphCoords(1.0, np.array([0.1]))


def test_zero_vector_has_no_direction():
    with pytest.raises(UndefinedDirectionError):
        sph_from_cartesian(np.zeros(4))


@pytest.mark.parametrize("N", range(3, 10))
def test_round_trip(rng, N):
    x = rng.standard_normal((1000, N))
    rho, phi = sph_from_cartesian_batch(x)
    back = cartesian_from_sph(rho, phi)
    err = np.linalg.norm(back - x, axis=1) / np.linalg.norm(x, axis=1)
    assert err.max() < 1e-10


@pytest.mark.parametrize("N", range(3, 8))
def test_angle_ranges(rng, N):
    rho, phi = sph_from_cartesian_batch(rng.standard_normal((500, N)))
    assert np.all((phi[:, 0] >= 0) & (phi[:, 0] <= np.pi / 2))
    assert np.all((phi[:, 1:-1] >= 0) & (phi[:, 1:-1] <= np.pi))
    assert np.all((phi[:, -1] >= 0) & (phi[:, -1] < 2 * np.pi))


def test_volume_element_known_values():
    assert volume_element(1.0, np.array([np.pi / 2, 0.4])) == pytest.approx(1.0)
    assert volume_element(2.0, np.array([np.pi / 6, 0.4])) == pytest.approx(2.0)
    assert volume_element(0.0, np.array([0.3, 0.2, 0.1])) == 0.0
    # the frozen value above agrees with the finite-difference determinant
    assert fd_jacobian_det(2.0, np.array([np.pi / 6, 0.4])) == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("N", range(3, 7))
def test_volume_element_matches_fd_jacobian(rng, N):
    for _ in range(100):
        rho = rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
        phi = np.concatenate([[rng.uniform(0.2, np.pi / 2 - 0.2)], rng.uniform(0.2, np.pi - 0.2, N - 3), [rng.uniform(0, 2 * np.pi)]])
        ref = fd_jacobian_det(rho, phi)
        assert volume_element(rho, phi) == pytest.approx(ref, rel=1e-5)


def test_angle_periods():
    assert angle_periods(3) == [None, 2 * np.pi]
    assert angle_periods(5) == [None, None, None, 2 * np.pi]


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(3, 9), elements=st.floats(-1e3, 1e3, allow_subnormal=False)))
def test_round_trip_property(x):
    if np.linalg.norm(x) < 1e-6:
        return
    back = cartesian_from_sph(sph_from_cartesian(x))
    assert np.linalg.norm(back - x) <= 1e-10 * np.linalg.norm(x)


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.lists(st.floats(0, 3), min_size=2, max_size=7))
def test_norm_preservation(rho, phi):
    x = cartesian_from_sph(rho, np.array(phi))
    assert np.linalg.norm(x) == pytest.approx(abs(rho), rel=1e-12, abs=1e-12)
