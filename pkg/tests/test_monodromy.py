import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oper_spectra.errors import BadWord, ConfigError, ProductDefectExceeded
from oper_spectra.monodromy import (
    MonodromyRep,
    compute_monodromy,
    default_words,
    irreducibility_margin,
    loop_basis,
    loop_product,
    reality_residual,
    trace_coordinates,
)
from oper_spectra.oper import OperConfig, four_point, oper_family
from oper_spectra.transport import winding_number


def synthetic(gens):
    gens = np.asarray(gens, dtype=complex)
    return MonodromyRep(0j, gens, tuple(range(len(gens))))


def su2(rng):
    a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
    n = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
    a, b = a / n, b / n
    return np.array([[a, b], [-np.conj(b), np.conj(a)]])


def sl2r(rng):
    m = rng.normal(size=(2, 2))
    d = np.linalg.det(m)
    if d < 0:
        m[:, 0] *= -1
        d = -d
    return m / np.sqrt(d)


def test_trivial_oper():
    cfg = OperConfig((0j, 1 + 0j), (0.0, 0.0), (0j, 0j))
    rep = compute_monodromy(cfg)
    assert np.max(np.abs(rep.generators - np.eye(2))) < 1e-13
    assert rep.defect < 1e-13


def test_no_punctures():
    rep = compute_monodromy(OperConfig((), (), ()))
    assert rep.n_generators == 0
    assert rep.defect == 0


def test_rigid_local_traces(rigid_rep):
    for M in rigid_rep.generators:
        assert abs(np.trace(M) + 2) < 1e-8
    assert abs(np.trace(rigid_rep.infinity_generator) + 2) < 1e-8
    assert rigid_rep.defect < 1e-7


def test_loop_basis_windings():
    pts = (0j, 1 + 0j, 2 + 0j)
    basis = loop_basis(pts)
    for k, loop in enumerate(basis.loops):
        for j, z in enumerate(pts):
            assert winding_number(loop, z) == (1 if j == basis.order[k] else 0)
        assert loop.start == loop.end == basis.basepoint


def test_basepoint_inside_rejected():
    with pytest.raises(ConfigError):
        loop_basis((0j, 1 + 0j), basepoint=0.5 + 0.1j)


def test_self_convergence():
    cfg = oper_family(four_point()).config_at(0.1 + 0.05j)
    tol = 1e-9
    a = compute_monodromy(cfg, tol=tol)
    b = compute_monodromy(cfg, tol=tol / 10)
    for Ma, Mb in zip(a.generators, b.generators):
        assert np.linalg.norm(Ma - Mb, 2) < 10 * tol * max(1.0, np.linalg.norm(Mb, 2))


def test_word_traces(rigid_rep):
    assert trace_coordinates(rigid_rep, [(1,)])[0] == pytest.approx(-2, abs=1e-8)
    assert trace_coordinates(rigid_rep, [()])[0] == 2
    t12, t21 = trace_coordinates(rigid_rep, [(1, 2), (2, 1)])
    assert abs(t12 - t21) < 1e-12 * max(1.0, abs(t12))
    inv = trace_coordinates(rigid_rep, [(1, -1)])[0]
    assert abs(inv - 2) < 1e-10
    with pytest.raises(BadWord):
        trace_coordinates(rigid_rep, [(3,)])
    with pytest.raises(BadWord):
        trace_coordinates(rigid_rep, [(0,)])


def test_default_words_include_triple():
    assert (1, 2, 3) in default_words(3)
    assert default_words(2) == [(1,), (2,), (1, 2)]


def test_reality_residual_real_groups():
    rng = np.random.default_rng(0)
    real = synthetic([sl2r(rng) for _ in range(3)])
    assert np.all(reality_residual(real) == 0)
    unitary = synthetic([su2(rng) for _ in range(3)])
    assert np.all(reality_residual(unitary) == 0)


def test_generic_config_is_not_real():
    rng = np.random.default_rng(12345)
    s = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.2, 0.5))
    rep = compute_monodromy(oper_family(four_point()).config_at(s))
    assert np.max(np.abs(reality_residual(rep))) > 1e-3


def test_real_config_has_real_single_traces():
    rep = compute_monodromy(oper_family(four_point((0.0, 1.0, 3.0))).config_at(0.37))
    assert np.max(np.abs(np.imag([np.trace(M) for M in rep.generators]))) < 1e-8


def test_irreducibility_margin_examples():
    assert irreducibility_margin(synthetic([np.eye(2), np.eye(2)])) == 0
    assert irreducibility_margin(synthetic([np.diag([2, 0.5]), np.diag([3, 1 / 3])])) == pytest.approx(0, abs=1e-15)
    assert irreducibility_margin(synthetic([[[1, 1], [0, 1]], [[1, 0], [1, 1]]])) == pytest.approx(1, abs=1e-15)


def test_product_defect_guard():
    cfg = oper_family(four_point()).config_at(0.4 + 0.3j)
    with pytest.raises(ProductDefectExceeded):
        compute_monodromy(cfg, tol=0.5)


def test_basepoint_covariance():
    cfg = oper_family(four_point()).config_at(-0.1 + 0.2j)
    a = compute_monodromy(cfg)
    b = compute_monodromy(cfg, loop_basis(cfg.punctures, basepoint=1 - 3.5j))
    words = default_words(3)
    ta, tb = trace_coordinates(a, words), trace_coordinates(b, words)
    assert np.max(np.abs(ta - tb)) < 1e-8


def test_to_dict_roundtrip_shape(rigid_rep):
    d = rigid_rep.to_dict()
    assert len(d["generators"]) == 2 and len(d["generators"][0]) == 4
    assert "infinity_generator" in d


@settings(max_examples=8, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-2, 3), st.floats(-1.5, 1.5))
def test_group_invariants(sr, si, xr, xi):
    z3 = complex(xr, xi)
    if min(abs(z3), abs(z3 - 1)) < 0.5:
        return
    rep = compute_monodromy(oper_family(four_point((0.0, 1.0, z3))).config_at(complex(sr, si)))
    assert np.max(np.abs(np.linalg.det(rep.generators) - 1)) < 1e-9
    assert rep.defect < 1e-7
    # the enclosing loop is conjugate to the product of the local loops
    assert abs(np.trace(loop_product(rep.generators)) - np.trace(rep.enclosing)) < 1e-7 * max(
        1.0, np.linalg.norm(loop_product(rep.generators)))
