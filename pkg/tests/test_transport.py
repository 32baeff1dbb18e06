import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oper_spectra.errors import BasepointInsideCircle, ClearanceViolation, DimensionMismatch, PointOnPath
from oper_spectra.oper import OperConfig, to_first_order_system
from oper_spectra.transport import (
    Arc,
    LinearSystemSpec,
    PathSpec,
    Segment,
    circle_loop,
    concat,
    straight,
    transport,
    winding_number,
)

TWO_PI = 2 * math.pi


def zero_system():
    return LinearSystemSpec(2, lambda z: np.zeros((2, 2), dtype=complex))


def euler_system():
    return to_first_order_system(OperConfig((0j,), (0.25,), (0j,), True, 0.25))


def smooth_system():
    """Entire, traceless coefficients: no singular points to avoid."""
    return LinearSystemSpec(2, lambda z: np.array([[0.3 * z, 1.0 + 0.1 * z * z], [-1.0 + 0.5j * z, -0.3 * z]]))


def unit_circle():
    return PathSpec((Arc.make(0j, 1.0, 0.0, TWO_PI),))


def test_zero_field_gives_identity():
    path = concat(straight(0, 2 + 1j), straight(2 + 1j, -1j))
    assert np.max(np.abs(transport(zero_system(), path) - np.eye(2))) < 1e-15


def test_euler_loop_trace():
    # basis z^(1/2), z^(1/2) log z: one turn multiplies by -1 and adds a unipotent part
    T = transport(euler_system(), unit_circle())
    assert abs(np.trace(T) + 2) < 1e-10
    N = T + np.eye(2)
    assert np.linalg.norm(N) > 1.0  # not -I: the log term survives


def test_euler_loop_closed_form():
    # at z = 1: y1 = z^(1/2), y2 = z^(1/2) log z; the Wronskian matrix W maps (c1, c2) to (y, y')
    W = np.array([[1.0, 0.0], [0.5, 1.0]], dtype=complex)
    after = np.array([[-1.0, 0.0], [0.0, -1.0]]) @ np.array([[1.0, TWO_PI * 1j], [0.0, 1.0]])
    expected = W @ after @ np.linalg.inv(W)
    T = transport(euler_system(), unit_circle())
    assert np.max(np.abs(T - expected)) < 1e-10


def test_reverse_path_inverts():
    path = straight(0, 1 + 1j).then(straight(1 + 1j, 2 - 0.5j))
    sys_ = smooth_system()
    T = transport(sys_, path) @ transport(sys_, path.reversed())
    assert np.max(np.abs(T - np.eye(2))) < 1e-10


def test_tiny_pieces():
    sys_ = smooth_system()
    assert np.max(np.abs(transport(sys_, straight(0, 1e-300)) - np.eye(2))) < 1e-15
    # a subnormal first piece must not stall the stepper
    path = straight(0, 2.2e-309).then(straight(2.2e-309, 1))
    assert np.max(np.abs(transport(sys_, path) - transport(sys_, straight(0, 1)))) < 1e-12
    # pieces below the single-step threshold still match a controlled transport
    short = straight(0.3, 0.3 + 5e-5j)
    T = transport(sys_, short)
    # entire coefficients: transport is path independent, so T(a->b) = T(b->c)^-1 T(a->c)
    ref = np.linalg.inv(transport(sys_, straight(0.3 + 5e-5j, 1.3 + 5e-5j))) @ transport(
        sys_, straight(0.3, 1.3 + 5e-5j))
    assert np.max(np.abs(T - ref)) < 1e-12


def test_clearance_violation():
    with pytest.raises(ClearanceViolation):
        transport(euler_system(), straight(-1, 1))
    with pytest.raises(ClearanceViolation):
        transport(euler_system(), straight(0.1j - 1, 0.1j + 1), clearance=0.2)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        transport(zero_system(), straight(0, 1), initial=np.eye(3))


def test_circle_loop_winding():
    loop = circle_loop(0, 2, 1)
    assert loop.is_closed
    assert winding_number(loop, 0) == 1
    assert winding_number(loop, 5) == 0
    assert winding_number(loop, -1.5) == 0


def test_basepoint_inside_circle():
    with pytest.raises(BasepointInsideCircle):
        circle_loop(0, 0.5, 1)


def test_winding_examples():
    c = unit_circle()
    assert winding_number(c, 0) == 1
    assert winding_number(c, 3) == 0
    assert winding_number(c.then(c.reversed()), 0.2) == 0
    with pytest.raises(PointOnPath):
        winding_number(c, 1)


def test_two_loops_compose():
    a = circle_loop(0, -2j, 0.5)
    b = circle_loop(1, -2j, 0.5)
    ab = a.then(b)
    assert (winding_number(ab, 0), winding_number(ab, 1)) == (1, 1)


def test_pieces_must_join():
    with pytest.raises(ValueError):
        PathSpec((Segment(0j, 1 + 0j), Segment(2 + 0j, 3 + 0j)))


complex_pts = st.complex_numbers(min_magnitude=0, max_magnitude=2, allow_nan=False, allow_infinity=False)


@settings(max_examples=25, deadline=None)
@given(complex_pts, complex_pts, complex_pts)
def test_concatenation_multiplies(a, b, c):
    sys_ = smooth_system()
    whole = transport(sys_, straight(a, b).then(straight(b, c)))
    # Y' = A Y: the later leg acts on the left
    parts = transport(sys_, straight(b, c)) @ transport(sys_, straight(a, b))
    assert np.max(np.abs(whole - parts)) <= 2e-12 * max(1.0, np.max(np.abs(whole)))


@settings(max_examples=25, deadline=None)
@given(complex_pts, complex_pts)
def test_traceless_transport_is_unimodular(a, b):
    T = transport(smooth_system(), straight(a, b))
    assert abs(np.linalg.det(T) - 1) < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0, TWO_PI))
def test_self_convergence(radius, start):
    loop = PathSpec((Arc.make(0j, radius, start, TWO_PI),))
    tol = 1e-9
    a = transport(euler_system(), loop, tol=tol)
    b = transport(euler_system(), loop, tol=tol / 10)
    assert np.linalg.norm(a - b, 2) < 10 * tol
