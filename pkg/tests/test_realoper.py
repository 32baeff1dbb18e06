import numpy as np
import pytest

from oper_spectra.monodromy import compute_monodromy, reality_residual
from oper_spectra.oper import four_point, oper_family, rigid_three_point
from oper_spectra.realoper import (
    SearchOptions,
    enumerate_real_opers,
    is_real_family,
    isolation_factor,
    polish,
    residual_at,
    scan,
)
from oper_spectra.section import invariance_singular_values

EMPTY_RECT = (0.35, 0.55, 0.2, 0.5)


def test_rigid_scan_and_enumeration():
    fam = oper_family(rigid_three_point())
    sr = scan(fam, (0, 0, 0, 0))
    assert sr.rigid and sr.candidates == [0j]
    en = enumerate_real_opers(fam, (-1, 1, -1, 1), (8, 8))
    assert len(en.hits) == 1
    hit = en.hits[0]
    assert hit.rigid and hit.residual_norm < 1e-10
    # direct monodromy run agrees
    rep = compute_monodromy(rigid_three_point())
    assert np.max(np.abs(reality_residual(rep))) < 1e-10


def test_zero_area_rect(four_family):
    assert scan(four_family, (0.1, 0.1, -1, 1), (8, 8)).candidates == []
    assert enumerate_real_opers(four_family, (0.1, 0.1, -1, 1), (8, 8)).hits == []


def test_grid_too_small(four_family):
    with pytest.raises(ValueError):
        scan(four_family, (0, 1, 0, 1), (2, 2))


def test_nonreal_region(four_family):
    # direct evaluation at the corners: nowhere close to real
    a, b, c, d = EMPTY_RECT
    assert min(residual_at(four_family, complex(x, y)) for x in (a, b) for y in (c, d)) > 1.0
    assert enumerate_real_opers(four_family, EMPTY_RECT, (8, 8)).hits == []


def test_scan_worker_independence(four_family):
    a = scan(four_family, EMPTY_RECT, (8, 8), workers=1)
    b = scan(four_family, EMPTY_RECT, (8, 8), workers=2)
    assert a.candidates == b.candidates
    assert [r for _, r in a.log] == [r for _, r in b.log]


def test_hit_count(four_hits):
    assert len(four_hits.hits) == 11
    for h in four_hits.hits:
        assert h.converged and h.residual_norm < 1e-9
        assert h.svd_gap > 1e-4
        assert h.irreducibility_margin > 1e-3 or "reducible" in h.flags


def test_hits_are_separated(four_hits):
    mus = [h.mu for h in four_hits.hits]
    dmin = min(abs(p - q) for i, p in enumerate(mus) for q in mus[i + 1:])
    assert dmin > 10 * SearchOptions().dedup


def test_conjugation_symmetry(four_family, four_hits):
    assert is_real_family(four_family)
    mus = [h.mu for h in four_hits.hits]
    for m in mus:
        assert min(abs(m.conjugate() - q) for q in mus) < 1e-8


def test_reflection_symmetry(four_hits):
    # z -> 2 - z swaps the punctures 0 and 2 and sends mu to -1/2 - mu
    mus = [h.mu for h in four_hits.hits]
    for m in mus:
        assert min(abs(-0.5 - m - q) for q in mus) < 1e-8


def test_polish_fixed_point_and_basin(four_family, four_hits):
    hit = four_hits.hits[3]
    again = polish(four_family, hit.mu)
    assert abs(again.mu - hit.mu) < 1e-12
    shifted = polish(four_family, hit.mu + 1e-3)
    assert shifted.converged
    assert abs(shifted.mu - hit.mu) < 1e-8


def test_isolation(four_family, four_hits):
    for hit in four_hits.hits[:3]:
        assert isolation_factor(four_family, hit) > 1e3


def test_hits_certified_by_invariant_form(four_family, four_hits):
    hit = four_hits.hits[0]
    rep = compute_monodromy(four_family.config_at(hit.mu))
    sigma = invariance_singular_values(rep.generators)
    assert sigma[0] < 1e-8 * max(1.0, sigma[-1])
    assert sigma[1] - sigma[0] > 1e-4


def test_hit_serialization(four_hits):
    d = four_hits.hits[0].to_dict()
    assert len(d["mu"]) == 2 and isinstance(d["flags"], list)
