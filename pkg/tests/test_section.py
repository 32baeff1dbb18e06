import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oper_spectra.errors import ClearanceViolation, IrreducibilityRequired, NotRealOper, StencilTooCoarse
from oper_spectra.monodromy import MonodromyRep, compute_monodromy
from oper_spectra.oper import OperConfig, four_point, oper_family
from oper_spectra.section import (
    EigenSection,
    check_single_valued,
    continuation_path,
    eigenvalue_section,
    form_residual,
    invariant_hermitian_form,
    path_pair_defect,
    puncture_loop,
    solution_row,
    stencil_section,
    sym_power_form,
    sym_power_matrix,
    sym_power_section,
    verify_oper_ode,
)
from oper_spectra.transport import Arc, PathSpec, winding_number

GRID = [complex(x, y) for x in np.linspace(-0.5, 2.5, 4) for y in (-0.7, 0.4, 1.1)]
POINT = 0.5 + 0.6j


def su2(a, b):
    n = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
    a, b = a / n, b / n
    return np.array([[a, b], [-np.conj(b), np.conj(a)]])


def synthetic(gens):
    return MonodromyRep(0j, np.asarray(gens, dtype=complex), tuple(range(len(gens))))


def random_hermitian(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    H = a + a.conj().T
    return H / np.sqrt(abs(np.linalg.det(H)))


def test_unitary_group_gives_definite_form():
    rep = synthetic([su2(0.3 + 0.4j, 0.8 - 0.1j), su2(-0.5 + 0.2j, 0.1 + 0.9j)])
    form = invariant_hermitian_form(rep)
    assert form.det_sign == 1
    assert np.allclose(form.H, np.eye(2), atol=1e-12)
    assert form.signature == (2, 0)


def test_identity_generators_are_reducible():
    with pytest.raises(IrreducibilityRequired):
        invariant_hermitian_form(synthetic([np.eye(2), np.eye(2)]))


def test_nonreal_config_has_no_form():
    rep = compute_monodromy(oper_family(four_point()).config_at(0.1 + 0.3j))
    with pytest.raises(NotRealOper):
        invariant_hermitian_form(rep)


def test_rigid_form_is_split(rigid_rep, rigid_form):
    assert rigid_form.det_sign == -1
    assert rigid_form.signature == (1, 1)
    assert np.array_equal(rigid_form.H, rigid_form.H.conj().T)
    assert abs(abs(np.linalg.det(rigid_form.H)) - 1) < 1e-12
    assert rigid_form.residual < 1e-8
    assert form_residual(rigid_rep.generators, rigid_form.H) == rigid_form.residual
    assert rigid_form.gap > 1e-3


def test_section_scales_with_form(rigid, rigid_rep, rigid_form):
    one = eigenvalue_section(rigid, rigid_rep, rigid_form.H, GRID)
    three = eigenvalue_section(rigid, rigid_rep, 3 * rigid_form.H, GRID)
    assert np.allclose(three.values, 3 * one.values, rtol=1e-14, atol=0)
    assert one.values.dtype == float
    assert one.weight == (0.5, 0.5)


def test_points_at_punctures_are_skipped(rigid, rigid_rep, rigid_form):
    sec = eigenvalue_section(rigid, rigid_rep, rigid_form, [0j, 1 + 0j, POINT])
    assert len(sec.points) == 1 and len(sec.skipped) == 2


def test_same_path_gives_zero_defect(rigid, rigid_rep, rigid_form):
    path = continuation_path(rigid, rigid_rep, POINT)
    assert check_single_valued(rigid, rigid_rep, rigid_form, POINT, path, path) == 0.0


def test_contractible_detour(rigid, rigid_rep, rigid_form):
    path = continuation_path(rigid, rigid_rep, POINT)
    # small circle based at the point, enclosing no puncture
    circle = PathSpec((Arc.make(POINT - 0.2, 0.2, 0.0, 2 * np.pi),))
    for z in rigid.punctures:
        assert winding_number(circle, z) == 0
    d = check_single_valued(rigid, rigid_rep, rigid_form, POINT, path, path.then(circle))
    assert d < 1e-10


@pytest.mark.parametrize("j", [0, 1])
def test_puncture_loops(rigid, rigid_rep, rigid_form, j):
    path = continuation_path(rigid, rigid_rep, POINT)
    loop = puncture_loop(rigid, rigid_rep, POINT, j)
    assert loop.start == loop.end == POINT
    for k, z in enumerate(rigid.punctures):
        assert winding_number(loop, z) == (1 if k == j else 0)
    path_b = path.then(loop)
    assert check_single_valued(rigid, rigid_rep, rigid_form, POINT, path, path_b) < 1e-10
    bad = random_hermitian(np.random.default_rng(j))
    assert check_single_valued(rigid, rigid_rep, bad, POINT, path, path_b) > 1e-2


def test_puncture_loop_rejects_nearby_point(rigid, rigid_rep):
    with pytest.raises(ValueError):
        puncture_loop(rigid, rigid_rep, 0.01 + 0.01j, 0)


def test_paths_must_reach_point(rigid, rigid_rep, rigid_form):
    path = continuation_path(rigid, rigid_rep, POINT)
    with pytest.raises(ValueError):
        check_single_valued(rigid, rigid_rep, rigid_form, POINT + 0.1, path, path)


def test_path_pair_defect_scale():
    H = np.diag([1.0, -1.0])
    assert path_pair_defect(H, np.array([1, 0]), np.array([1, 0])) == 0
    assert path_pair_defect(H, np.array([1, 0]), np.array([0, 1])) == pytest.approx(2.0)


def test_sym_power_special_cases(rigid, rigid_rep, rigid_form):
    phi = eigenvalue_section(rigid, rigid_rep, rigid_form, GRID)
    s0 = sym_power_section(rigid, rigid_rep, rigid_form, 0, GRID)
    assert np.all(s0.values == 1.0) and s0.weight == (0, 0)
    s1 = sym_power_section(rigid, rigid_rep, rigid_form, 1, GRID)
    assert np.allclose(s1.values, phi.values, rtol=1e-13, atol=0)
    for m in (2, 3):
        sm = sym_power_section(rigid, rigid_rep, rigid_form, m, GRID)
        assert sm.weight == (m / 2, m / 2)
        assert sm.form_residual < 1e-7
        assert np.allclose(sm.values, phi.values ** m, rtol=1e-10, atol=0)
    with pytest.raises(ValueError):
        sym_power_section(rigid, rigid_rep, rigid_form, -1, GRID)


def test_sym_power_form_values():
    H = np.array([[2.0, 1j], [-1j, 3.0]])
    assert np.array_equal(sym_power_form(H, 0), [[1]])
    assert np.array_equal(sym_power_form(H, 1), H)
    s = np.array([0.3 - 0.2j, 1.1 + 0.5j])
    w = np.array([s[0] ** 2, s[0] * s[1], s[1] ** 2])
    lhs = np.real(w @ sym_power_form(H, 2) @ w.conj())
    assert lhs == pytest.approx(np.real(s @ H @ s.conj()) ** 2, rel=1e-14)


matrices = st.lists(st.floats(-2, 2), min_size=8, max_size=8).map(
    lambda v: np.array(v[:4]).reshape(2, 2) + 1j * np.array(v[4:]).reshape(2, 2))


@settings(max_examples=40, deadline=None)
@given(matrices, matrices, st.integers(0, 4))
def test_sym_power_is_multiplicative(A, B, m):
    lhs = sym_power_matrix(A @ B, m)
    rhs = sym_power_matrix(A, m) @ sym_power_matrix(B, m)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(rhs).max()))


@settings(max_examples=30, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(0.1, 1.5), st.integers(1, 4))
def test_sym_power_form_invariance(theta, r, m):
    # M preserves the split form diag(1, -1) for any boost-rotation in SU(1,1)
    a, b = np.cosh(r) * np.exp(1j * theta), np.sinh(r)
    M = np.array([[a, b], [np.conj(b), np.conj(a)]])
    H = np.diag([1.0, -1.0])
    assert np.allclose(M @ H @ M.conj().T, H, atol=1e-12)
    S = sym_power_form(H, m)
    G = sym_power_matrix(M, m)
    scale = np.linalg.norm(G, 2) ** 2
    assert np.linalg.norm(G @ S @ G.conj().T - S, 2) < 1e-13 * scale


def test_oper_ode_trivial():
    cfg = OperConfig((0j, 1 + 0j), (0.0, 0.0), (0j, 0j))
    pts = np.array([2 + 2j + 0.1 * complex(i, k) for k in range(3) for i in range(3)])
    sec = EigenSection(pts, np.full(9, 5.0), (0.5, 0.5), shape=(3, 3), spacing=0.1)
    assert verify_oper_ode(sec, cfg) == 0.0


def test_oper_ode_needs_stencil(rigid):
    sec = EigenSection(np.zeros(4, complex), np.zeros(4), (0.5, 0.5))
    with pytest.raises(StencilTooCoarse):
        verify_oper_ode(sec, rigid)
    sec = EigenSection(np.zeros(4, complex), np.zeros(4), (0.5, 0.5), shape=(2, 2), spacing=0.1)
    with pytest.raises(StencilTooCoarse):
        verify_oper_ode(sec, rigid)


def test_oper_ode_second_order(rigid, rigid_rep, rigid_form):
    r = [verify_oper_ode(stencil_section(rigid, rigid_rep, rigid_form, POINT, h, size=3), rigid)
         for h in (1e-2, 5e-3)]
    assert r[1] < 1e-4
    assert 1.7 < np.log2(r[0] / r[1]) < 2.3


def test_stencil_clearance(rigid, rigid_rep, rigid_form):
    with pytest.raises(ClearanceViolation):
        stencil_section(rigid, rigid_rep, rigid_form, 0.05 + 0.05j, 1e-2)


def test_solution_row_at_basepoint(rigid, rigid_rep):
    path = continuation_path(rigid, rigid_rep, rigid_rep.basepoint + 0.5)
    row = solution_row(rigid, path)
    assert row.shape == (2,)
