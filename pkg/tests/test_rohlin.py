import itertools
from fractions import Fraction

import numpy as np
import pytest

from conftest import Z, pointset, rotation

from orbitrewire import (
    AbelianGroupSpec,
    FactorAction,
    FiniteSpace,
    Permutation,
    PointSet,
    Tower,
    box_tile,
    folner_tile,
    measure,
    rohlin_avoiding,
    tiling_base,
    verify_tower,
)
from orbitrewire.errors import CoverageShortfall, HypothesisViolated, TileTooLarge
from orbitrewire.rohlin import tower_support


def test_tiling_base_exact_lattice(z12):
    f = rotation(z12, 1)
    w = tiling_base(f, box_tile(Z, [0], [2]))
    assert w.members == {0, 3, 6, 9}
    support, disjoint = tower_support(f, box_tile(Z, [0], [2]), w)
    assert disjoint and measure(support) == 1


def test_tiling_base_full_cycle(z12):
    f = rotation(z12, 1)
    w = tiling_base(f, box_tile(Z, [0], [11]))
    assert w.members == {0}
    _, disjoint = tower_support(f, box_tile(Z, [0], [11]), w)
    assert disjoint


def test_tiling_base_non_divisor_leaves_remainder():
    sp = FiniteSpace(13)
    f = rotation(sp, 1)
    t = box_tile(Z, [0], [2])
    w = tiling_base(f, t)
    assert w.members == {0, 3, 6, 9}
    support, disjoint = tower_support(f, t, w)
    assert disjoint
    assert measure(support) == Fraction(12, 13)
    with pytest.raises(CoverageShortfall):
        tiling_base(f, t, coverage_floor=Fraction(99, 100))


def test_tiling_base_tile_too_large():
    sp = FiniteSpace(12)
    f = rotation(sp, 2)  # two orbits of size 6
    with pytest.raises(TileTooLarge):
        tiling_base(f, box_tile(Z, [0], [6]))


def test_tiling_base_grid_exact():
    m1 = m2 = 6
    sp = FiniteSpace(m1 * m2)
    idx = np.arange(m1 * m2)
    r, c = idx // m2, idx % m2
    spec2 = AbelianGroupSpec(2)
    f = FactorAction(
        spec2, sp,
        (
            Permutation(sp, ((r + 1) % m1) * m2 + c),
            Permutation(sp, r * m2 + (c + 1) % m2),
        ),
    )
    t = folner_tile(spec2, 1)  # 3x3 box
    w = tiling_base(f, t)
    support, disjoint = tower_support(f, t, w)
    assert disjoint
    assert measure(support) == 1
    assert w.size == 4


def test_tiling_base_greedy_on_non_product_orbit():
    # commuting generators whose cycles interleave without product structure:
    # a 6-cycle with both generators acting as powers of the same rotation
    sp = FiniteSpace(6)
    spec2 = AbelianGroupSpec(2)
    f = FactorAction(
        spec2, sp,
        (
            Permutation(sp, (np.arange(6) + 2) % 6),
            Permutation(sp, (np.arange(6) + 3) % 6),
        ),
    )
    t = box_tile(spec2, [0, 0], [1, 0])  # {(0,0), (1,0)}
    w = tiling_base(f, t)
    support, disjoint = tower_support(f, t, w)
    assert disjoint
    assert measure(support) >= Fraction(2, 3)


def test_rohlin_avoiding_no_avoidance(z12):
    f = rotation(z12, 1)
    t = box_tile(Z, [0], [2])
    tower = rohlin_avoiding(f, t, Fraction(1, 2), PointSet.empty(z12))
    rep = verify_tower(tower, f, avoid=PointSet.empty(z12))
    assert rep.disjoint and rep.coverage == 1 and rep.avoid_clear
    assert tower.base.members == {0, 3, 6, 9}


def test_rohlin_avoiding_spec_cases(z12):
    f = rotation(z12, 1)
    t = box_tile(Z, [0], [2])
    tower = rohlin_avoiding(f, t, Fraction(1, 2), pointset(z12, 3))
    assert tower.base.members == {1, 4, 7, 10}
    tower2 = rohlin_avoiding(f, t, Fraction(1, 2), pointset(z12, 1, 4))
    assert tower2.base.members == {0, 3, 6, 9}


def test_rohlin_avoiding_hypothesis_violated(z12):
    f = rotation(z12, 1)
    t = box_tile(Z, [0], [2])
    with pytest.raises(HypothesisViolated):
        rohlin_avoiding(f, t, Fraction(1, 2), pointset(z12, 0, 1, 2))


def test_verify_tower_detects_overlap():
    sp = FiniteSpace(4)
    f = rotation(sp, 1)
    t = box_tile(Z, [0], [1])
    bad = Tower(tile=t, base=pointset(sp, 0, 1))
    rep = verify_tower(bad, f)
    assert not rep.disjoint
    empty = Tower(tile=t, base=PointSet.empty(sp))
    rep2 = verify_tower(empty, f)
    assert rep2.disjoint and rep2.coverage == 0


def test_shifted_family_stays_disjoint():
    # commutativity: if {tW} is disjoint then so is {t(t0 W)} for any t0
    sp = FiniteSpace(24)
    f = rotation(sp, 1)
    t = box_tile(Z, [-1], [2])
    w = tiling_base(f, t)
    for t0_idx in range(t.size):
        shifted = f.element_image_set(t.element_at(t0_idx), w)
        _, disjoint = tower_support(f, t, shifted)
        assert disjoint


def test_rohlin_mass_bookkeeping_exhaustive_small():
    # every avoid set below the mass hypothesis yields all three conclusions
    sp = FiniteSpace(12)
    f = rotation(sp, 1)
    t = box_tile(Z, [0], [2])
    eps = Fraction(1, 2)
    count = 0
    for k in (0, 1, 2):
        for avoid in itertools.combinations(range(12), k):
            aset = PointSet.from_indices(sp, avoid)
            tower = rohlin_avoiding(f, t, eps, aset)
            rep = verify_tower(tower, f, avoid=aset)
            assert rep.disjoint
            assert rep.coverage > 1 - eps
            assert rep.avoid_clear
            # base mass bound from the argmin step
            assert measure(tower.base) > measure(tiling_base(f, t)) - eps / (2 * t.size)
            count += 1
    assert count == 79


def test_tower_serialization_schema(z12):
    f = rotation(z12, 1)
    t = box_tile(Z, [0], [2])
    tower = rohlin_avoiding(f, t, Fraction(1, 2), pointset(z12, 3), factor_index=0)
    d = tower.to_dict()
    assert d == {
        "factor": 0,
        "tile": {"lows": [0], "highs": [2], "torsion": []},
        "base": [1, 4, 7, 10],
    }
