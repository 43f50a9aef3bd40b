"""Lifted-state construction, views, arithmetic, and the force lift."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from koopdyn.errors import DimensionError, DomainError
from koopdyn.statespace import ForceLift, LiftedState, lift, lift_force, unlift

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def displacements(max_vertices=5):
    return st.integers(1, max_vertices).flatmap(
        lambda n: arrays(np.float64, 3 * n, elements=finite))


@given(displacements(), st.data())
def test_lift_unlift_roundtrip(u_curr, data):
    u_prev = data.draw(arrays(np.float64, u_curr.size, elements=finite))
    x = lift(u_curr, u_prev)
    back_curr, back_prev = unlift(x)
    np.testing.assert_allclose(back_curr, u_curr, atol=1e-9)
    np.testing.assert_allclose(back_prev, u_prev, atol=1e-9)


@given(displacements())
def test_lift_is_linear(u):
    a = lift(u, 0.5 * u)
    b = lift(2.0 * u, u)
    np.testing.assert_allclose((2.0 * a).values, b.values, atol=1e-9)
    np.testing.assert_allclose((a + a).values, b.values, atol=1e-9)
    np.testing.assert_allclose((b - a).values, a.values, atol=1e-9)


def test_views_partition_the_vector():
    x = LiftedState(np.arange(12, dtype=float))
    assert x.n_vertices == 2 and x.dim == 12
    np.testing.assert_array_equal(x.displacement, np.arange(6.0))
    np.testing.assert_array_equal(x.momentum, np.arange(6.0, 12.0))


def test_values_are_read_only():
    x = LiftedState(np.zeros(6))
    with pytest.raises(ValueError):
        x.values[0] = 1.0


@pytest.mark.parametrize("bad", [np.zeros(5), np.zeros((2, 6)), np.zeros(0)])
def test_rejects_non_6n_vectors(bad):
    with pytest.raises(DimensionError):
        LiftedState(bad)


def test_rejects_non_finite():
    with pytest.raises(DomainError):
        LiftedState(np.array([np.nan] + [0.0] * 5))


def test_lift_shape_mismatch():
    with pytest.raises(DimensionError):
        lift(np.zeros(6), np.zeros(3))
    with pytest.raises(DimensionError):
        lift(np.zeros(4), np.zeros(4))


@given(displacements(), st.floats(1e-4, 1.0))
@settings(max_examples=30)
def test_force_lift_scaling(f, h):
    lifted = lift_force(f, h)
    assert lifted.h == h
    np.testing.assert_array_equal(lifted.values[: f.size], 0.0)
    np.testing.assert_allclose(lifted.momentum, f * h * h, rtol=1e-12)


def test_force_lift_rejects_nonzero_displacement_block():
    with pytest.raises(DomainError):
        ForceLift(np.ones(6), h=0.01)
    with pytest.raises(DomainError):
        lift_force(np.zeros(6), h=0.0)
