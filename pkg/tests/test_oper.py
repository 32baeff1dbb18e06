import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oper_spectra.errors import ConfigError, DegenerateConfig, EvaluationAtPuncture, UnsealedConfig
from oper_spectra.oper import (
    OperConfig,
    evaluate_t,
    four_point,
    indicial_exponents,
    load_config,
    oper_family,
    rigid_three_point,
    to_first_order_system,
    validate_at_infinity,
)
from oper_spectra.transport import straight, transport


def test_zero_t():
    cfg = OperConfig((0j, 1 + 0j), (0.0, 0.0), (0j, 0j))
    assert evaluate_t(cfg, 0.3 + 2j) == 0


def test_single_term():
    cfg = OperConfig((0j,), (0.25,), (0j,))
    assert evaluate_t(cfg, 2) == pytest.approx(1 / 16, abs=1e-16)


def test_evaluation_at_puncture():
    with pytest.raises(EvaluationAtPuncture):
        evaluate_t(rigid_three_point(), 1)


def test_decay_at_infinity_when_residues_cancel():
    cfg = oper_family(four_point()).config_at(0.3 - 0.1j)
    vals = [abs(z * z * evaluate_t(cfg, z)) for z in (1e2 * np.exp(0.3j), 1e4 * np.exp(0.3j), 1e6 * np.exp(0.3j))]
    assert max(vals) < 1.0
    # the double-pole coefficient at infinity is delta_inf
    assert vals[-1] == pytest.approx(0.25, rel=1e-4)


def test_trivial_constraints():
    cfg = OperConfig((0j, 1 + 0j, 2 + 0j), (0.0,) * 3, (0j,) * 3)
    assert np.all(validate_at_infinity(cfg) == 0)


def test_two_finite_plus_infinity_seals_at_zero():
    # mu_0 + mu_1 = 0 and 1/4 + 1/4 + mu_1 = 1/2 force mu = 0
    cfg = OperConfig((0j, 1 + 0j), (0.25, 0.25), (0j, 0j), True, 0.5)
    assert np.all(validate_at_infinity(cfg) < 1e-15)
    assert cfg.sealed


def test_four_point_family_is_one_dimensional():
    fam = oper_family(four_point())
    assert not fam.rigid
    assert fam.free_index == 2
    np.testing.assert_allclose(fam.direction, (1, -2, 1), atol=1e-14)
    np.testing.assert_allclose(fam.particular, (0.5, -0.5, 0), atol=1e-14)


def test_rigid_family():
    fam = oper_family(rigid_three_point())
    assert fam.rigid
    np.testing.assert_allclose(fam.base.mu, (0.25, -0.25), atol=1e-15)


@pytest.mark.parametrize("delta, expected", [(0.0, (0, 1)), (0.25, (0.5, 0.5)), (3 / 16, (0.25, 0.75))])
def test_indicial_exponents(delta, expected):
    got = indicial_exponents(delta)
    assert got[0] == pytest.approx(expected[0], abs=1e-15)
    assert got[1] == pytest.approx(expected[1], abs=1e-15)


def test_indicial_roots_solve_equation():
    for delta in (0.0, 0.1, 0.25, 0.4, 1.3):
        for r in indicial_exponents(delta):
            assert abs(r * (r - 1) + delta) < 1e-14


def test_zero_t_system():
    cfg = OperConfig((0j,), (0.0,), (0j,))
    A = to_first_order_system(cfg).coefficients(0.5 + 0.5j)
    np.testing.assert_array_equal(A, [[0, 1], [0, 0]])


def test_unsealed_rejected():
    with pytest.raises(UnsealedConfig):
        to_first_order_system(OperConfig((0j, 1 + 0j), (0.25, 0.25), (0.3j, 0j), True, 0.25))


def test_first_order_system_is_unimodular():
    cfg = oper_family(four_point()).config_at(0.3 - 0.2j)
    T = transport(to_first_order_system(cfg), straight(-1j, 3 + 1j))
    assert abs(np.linalg.det(T) - 1) < 1e-10


def test_solution_solves_scalar_ode():
    cfg = oper_family(four_point()).config_at(0.2 + 0.1j)
    system = to_first_order_system(cfg)
    z0 = 0.5 - 1j
    h = 1e-3
    ys = [transport(system, straight(z0, z0 + k * h))[0, 0] for k in (-1, 0, 1)]
    second = (ys[0] - 2 * ys[1] + ys[2]) / h ** 2
    assert abs(second + evaluate_t(cfg, z0) * ys[1]) < 1e-6 * max(1.0, abs(ys[1]))


def test_coincident_punctures():
    with pytest.raises(DegenerateConfig):
        OperConfig((0j, 0j), (0.25, 0.25), (0j, 0j))


def test_roundtrip_dict(tmp_path):
    cfg = oper_family(four_point()).config_at(0.1 + 0.2j)
    path = tmp_path / "oper.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back, raw = load_config(path)
    assert back == cfg
    assert raw["infinity"] is True


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text(json.dumps({"mu": [[0, 0]]}))
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_bundled_configs_are_sealed():
    from oper_spectra.cli import DATA_DIR

    for name in ("rigid3.json", "four_point.json"):
        cfg, _ = load_config(DATA_DIR / name)
        assert cfg.sealed


points = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(points, min_size=3, max_size=5, unique=True), st.randoms(use_true_random=False), points)
def test_t_invariant_under_relabeling(pts, rnd, z):
    if min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:]) < 0.1:
        return
    if min(abs(z - p) for p in pts) < 0.05:
        return
    n = len(pts)
    delta = tuple(0.25 + 0.05 * k for k in range(n))
    mu = tuple(complex(k, -k) * 0.3 for k in range(n))
    perm = list(range(n))
    rnd.shuffle(perm)
    a = OperConfig(tuple(pts), delta, mu)
    b = OperConfig(tuple(pts[k] for k in perm), tuple(delta[k] for k in perm), tuple(mu[k] for k in perm))
    assert abs(evaluate_t(a, z) - evaluate_t(b, z)) <= 1e-12 * max(1.0, abs(evaluate_t(a, z)))


@settings(max_examples=40, deadline=None)
@given(points, st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_family_members_seal(z3, s):
    if min(abs(z3), abs(z3 - 1)) < 0.1:
        return
    fam = oper_family(four_point((0.0, 1.0, z3)))
    cfg = fam.config_at(s)
    assert np.max(validate_at_infinity(cfg)) < 1e-12 * max(1.0, abs(s))


@settings(max_examples=20, deadline=None)
@given(st.lists(points, min_size=3, max_size=6, unique=True))
def test_free_parameter_count(pts):
    if min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:]) < 0.1:
        return
    n = len(pts)
    cfg = OperConfig(tuple(pts), (0.25,) * n, (0j,) * n, True, 0.25)
    # |S| = n + 1 punctures leave n + 1 - 3 accessory parameters
    if n + 1 - 3 > 1:
        with pytest.raises(DegenerateConfig):
            oper_family(cfg)
        fam = oper_family(cfg, adjustable=(0, 1, 2))
    else:
        fam = oper_family(cfg)
    assert (fam.free_index is None) == (n + 1 == 3)
