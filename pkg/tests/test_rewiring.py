from fractions import Fraction

import numpy as np
import pytest

from conftest import Z, pointset, rotation, rotation_system

from orbitrewire import (
    AbelianGroupSpec,
    FactorAction,
    FiniteSpace,
    FreeProductSystem,
    FreeWord,
    Labeling,
    Permutation,
    PointSet,
    box_tile,
    build_rewiring,
    chain_extension,
    column_partitions,
    discrepancy_budget,
    generated_partition,
    good_partition,
    make_factor_ergodic,
    match_labels_conjugator,
    measure,
    oe_approximate,
    pushforward,
    sym_diff_mass,
    tile_matching,
    tower_pair,
    verify_orbit_equivalence,
    weak_discrepancy,
)
from orbitrewire.errors import (
    BaseSizeMismatch,
    BudgetExceeded,
    DefectBoundViolated,
    PushforwardMismatch,
    RankUnsupported,
)
from orbitrewire.rewiring import (
    Column,
    ColumnData,
    _GoodSetEvaluator,
    equalize_bases,
    reduce_words_to_letters,
)
from orbitrewire.rohlin import Tower, rohlin_avoiding


# ---------------------------------------------------------------------------
# conjugator
# ---------------------------------------------------------------------------

def test_match_labels_identity_cases():
    sp = FiniteSpace(6)
    psi = Labeling.from_symbols(sp, list("aabbab"), alphabet=("a", "b"))
    assert match_labels_conjugator(psi, psi) == Permutation.identity(sp)
    const = Labeling.constant(sp, "z")
    assert match_labels_conjugator(const, const) == Permutation.identity(sp)


def test_match_labels_swap():
    sp = FiniteSpace(4)
    psi = Labeling.from_symbols(sp, ["a", "a", "b", "b"], alphabet=("a", "b"))
    phi = Labeling.from_symbols(sp, ["b", "b", "a", "a"], alphabet=("a", "b"))
    r = match_labels_conjugator(psi, phi)
    assert r.forward.tolist() == [2, 3, 0, 1]
    for a in ("a", "b"):
        assert r.image(psi.cell(a)) == phi.cell(a)


def test_match_labels_requires_equal_pushforwards():
    sp = FiniteSpace(4)
    psi = Labeling.from_symbols(sp, ["a", "a", "a", "b"], alphabet=("a", "b"))
    phi = Labeling.from_symbols(sp, ["a", "a", "b", "b"], alphabet=("a", "b"))
    with pytest.raises(PushforwardMismatch):
        match_labels_conjugator(psi, phi)


# ---------------------------------------------------------------------------
# tower pair
# ---------------------------------------------------------------------------

def test_tower_pair_constant_labeling_trivial_alphabet():
    sp = FiniteSpace(240)
    f = rotation(sp, 1)
    phi = Labeling.constant(sp, ())
    pair = tower_pair(f, f, phi, [Z.element([1])], Fraction(1, 20))
    assert pair.tower_alpha.base.size == pair.tower_beta.base.size
    assert pair.good_mass_alpha == 1 and pair.good_mass_beta == 1
    assert pair.avoid_mass == 0
    assert pair.coverage_alpha > Fraction(1, 1) - 8 * Fraction(1, 20)


def test_tower_pair_parity_windows_exact():
    # alternating labels along a rotation: every even-length window is exact
    sp = FiniteSpace(256)
    f = rotation(sp, 1)
    phi = generated_partition(sp, [PointSet(sp, np.arange(256) % 2 == 0)])
    pair = tower_pair(f, f, phi, [Z.element([1])], Fraction(1, 24))
    assert pair.good_mass_alpha == 1
    assert pair.good_mass_beta == 1
    assert pair.side > 24  # |T| must exceed 1/eps'


def test_equalize_bases_trims_highest_indices():
    sp = FiniteSpace(40)
    t = box_tile(Z, [0], [3])
    tw_a = Tower(tile=t, base=pointset(sp, 0, 4, 8, 12, 16))
    tw_b = Tower(tile=t, base=pointset(sp, 1, 5, 9, 13))
    a2, b2 = equalize_bases(tw_a, tw_b)
    assert a2.base.members == {0, 4, 8, 12}
    assert b2.base.members == {1, 5, 9, 13}


def test_good_set_transport_equivalence():
    # computing the rewired-side good set directly on the conjugated action
    # with the target partition equals transporting the original good set
    sp = FiniteSpace(512)
    alpha = rotation_system(sp, 3)
    evens = PointSet(sp, np.arange(512) % 2 == 0)
    phi = generated_partition(sp, [evens])
    pi = pushforward(phi)
    eps = Fraction(1, 30)
    psi, _, _ = good_partition(alpha, pi, eps, seed=2)
    r = match_labels_conjugator(psi, phi)
    alpha_p = alpha.conjugate(r)
    # psi as a labeling over phi's alphabet
    tile = box_tile(Z, [0], [255])
    direct = _GoodSetEvaluator(alpha_p.factors[0], phi, eps, "rewired").evaluate(tile)
    via_psi = _GoodSetEvaluator(alpha.factors[0], psi, eps, "rewired").evaluate(tile)
    assert (direct is None) == (via_psi is None)
    if direct is not None:
        mask_direct, _ = direct
        mask_psi, _ = via_psi
        transported = np.zeros(512, dtype=bool)
        transported[r.forward[np.nonzero(mask_psi)[0]]] = True
        assert np.array_equal(mask_direct, transported)


# ---------------------------------------------------------------------------
# columns
# ---------------------------------------------------------------------------

def _tower_pair_for(sp, alpha_f, beta_f, phi, eps):
    pair = tower_pair(alpha_f, beta_f, phi, [Z.element([1])], eps)
    return pair


def test_column_partitions_constant_label_single_column():
    sp = FiniteSpace(60)
    f = rotation(sp, 1)
    phi = Labeling.constant(sp, ())
    pair = _tower_pair_for(sp, f, f, phi, Fraction(1, 10))
    cd = column_partitions(pair.tower_alpha, pair.tower_beta, phi, f, f)
    assert len(cd.columns) == 1
    assert cd.columns[0].size == pair.tower_alpha.base.size


def test_column_partitions_greedy_split_sizes():
    # class sizes {3, 1} vs {2, 2} refine into matched columns 2, 1, 1
    sp = FiniteSpace(100)
    t = box_tile(Z, [0], [0])  # trivial tile: names are the point's own label
    f = rotation(sp, 1)
    phi = Labeling(
        sp, ("x", "y"),
        np.array([0] * 50 + [1] * 50, dtype=np.int64),
    )
    tw_a = Tower(tile=t, base=pointset(sp, 0, 1, 2, 60))
    tw_b = Tower(tile=t, base=pointset(sp, 3, 4, 61, 62))
    cd = column_partitions(tw_a, tw_b, phi, f, f)
    assert [c.size for c in cd.columns] == [2, 1, 1]
    assert cd.columns[0].q_alpha.tolist() == [0, 1]
    assert cd.columns[0].q_beta.tolist() == [3, 4]
    assert cd.columns[1].q_alpha.tolist() == [2]
    assert cd.columns[1].q_beta.tolist() == [61]
    assert cd.columns[2].q_alpha.tolist() == [60]
    assert cd.columns[2].q_beta.tolist() == [62]


def test_column_partitions_identical_towers():
    sp = FiniteSpace(64)
    f = rotation(sp, 1)
    evens = PointSet(sp, np.arange(64) % 2 == 0)
    phi = generated_partition(sp, [evens])
    pair = _tower_pair_for(sp, f, f, phi, Fraction(1, 12))
    cd = column_partitions(pair.tower_alpha, pair.tower_beta, phi, f, f)
    for col in cd.columns:
        assert np.array_equal(col.name_alpha, col.name_beta)


def test_column_partitions_base_size_mismatch():
    sp = FiniteSpace(30)
    t = box_tile(Z, [0], [0])
    f = rotation(sp, 1)
    phi = Labeling.constant(sp, ())
    with pytest.raises(BaseSizeMismatch):
        column_partitions(Tower(tile=t, base=pointset(sp, 0, 1)),
                          Tower(tile=t, base=pointset(sp, 2)),
                          phi, f, f)


# ---------------------------------------------------------------------------
# tile matching
# ---------------------------------------------------------------------------

def _column_data(sp, tile, name_a, name_b, q_a, q_b, k_sym):
    base_a = PointSet.from_indices(sp, q_a)
    base_b = PointSet.from_indices(sp, q_b)
    return ColumnData(
        factor_index=None,
        tile=tile,
        base_alpha=base_a,
        base_beta=base_b,
        alphabet_size=k_sym,
        columns=[Column(
            q_alpha=np.asarray(q_a, dtype=np.int64),
            q_beta=np.asarray(q_b, dtype=np.int64),
            name_alpha=np.asarray(name_a, dtype=np.int16),
            name_beta=np.asarray(name_b, dtype=np.int16),
        )],
    )


def test_tile_matching_equal_names_identity():
    sp = FiniteSpace(30)
    tile = box_tile(Z, [0], [4])
    cd = _column_data(sp, tile, [0, 1, 0, 1, 0], [0, 1, 0, 1, 0], [0], [1], 2)
    cd = tile_matching(cd, Fraction(1, 6))
    col = cd.columns[0]
    assert col.sigma.tolist() == [0, 1, 2, 3, 4]
    assert col.matched.all()


def test_tile_matching_two_element_swap_case():
    sp = FiniteSpace(30)
    tile = box_tile(Z, [0], [1])
    # names disagree everywhere and sigma(e) = e is forced: T_s is empty
    cd = _column_data(sp, tile, [0, 1], [1, 0], [0], [1], 2)
    cd = tile_matching(cd, Fraction(1, 10))  # 7 * 1/10 * 2 * 2 = 2.8 > 2
    col = cd.columns[0]
    assert col.sigma.tolist() == [0, 1]
    assert not col.matched.any()


def test_tile_matching_defect_bound_violated():
    sp = FiniteSpace(30)
    tile = box_tile(Z, [0], [1])
    cd = _column_data(sp, tile, [0, 1], [1, 0], [0], [1], 2)
    with pytest.raises(DefectBoundViolated):
        tile_matching(cd, Fraction(1, 20))  # 7 * 1/20 * 2 * 2 = 1.4 < 2


def test_tile_matching_per_symbol_count_gap():
    sp = FiniteSpace(64)
    tile = box_tile(Z, [0], [9])
    name_a = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1]
    name_b = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1]  # counts differ by 2 per symbol
    cd = _column_data(sp, tile, name_a, name_b, [0], [1], 2)
    cd = tile_matching(cd, Fraction(1, 8))
    col = cd.columns[0]
    defect = tile.size - int(col.matched.sum())
    assert defect <= 2 * 2 + 1
    # sigma is a bijection fixing the identity
    assert sorted(col.sigma.tolist()) == list(range(10))
    assert col.sigma[tile.identity_index] == tile.identity_index


# ---------------------------------------------------------------------------
# rewiring permutation
# ---------------------------------------------------------------------------

def test_build_rewiring_identity_when_sigma_identity():
    sp = FiniteSpace(60)
    f = rotation(sp, 1)
    phi = Labeling.constant(sp, ())
    pair = _tower_pair_for(sp, f, f, phi, Fraction(1, 10))
    cd = tile_matching(
        column_partitions(pair.tower_alpha, pair.tower_beta, phi, f, f),
        Fraction(1, 10),
    )
    s_perm, app = build_rewiring(f, cd)
    assert s_perm == Permutation.identity(sp)
    assert app.gens[0] == f.gens[0]


def test_build_rewiring_swap_levels_on_z6():
    # tile {0,1,2} over base {0,3} on the 6-cycle; sigma = (e)(1 2)
    sp = FiniteSpace(6)
    f = rotation(sp, 1)
    tile = box_tile(Z, [0], [2])
    cd = ColumnData(
        factor_index=None,
        tile=tile,
        base_alpha=pointset(sp, 0, 3),
        base_beta=pointset(sp, 0, 3),
        alphabet_size=1,
        columns=[Column(
            q_alpha=np.array([0, 3]),
            q_beta=np.array([0, 3]),
            name_alpha=np.zeros(3, dtype=np.int16),
            name_beta=np.zeros(3, dtype=np.int16),
            sigma=np.array([0, 2, 1]),
            matched=np.array([True, False, False]),
        )],
    )
    s_perm, app = build_rewiring(f, cd)
    assert s_perm.forward.tolist() == [0, 2, 1, 3, 5, 4]
    # rewired action stays inside the original orbit
    od = f.orbits()
    assert np.array_equal(od.orbit_id[s_perm.forward], od.orbit_id)
    # base points fixed
    assert s_perm(0) == 0 and s_perm(3) == 3


def test_build_rewiring_fixes_points_outside_tower():
    sp = FiniteSpace(10)
    f = rotation(sp, 1)
    tile = box_tile(Z, [0], [2])
    cd = ColumnData(
        factor_index=None,
        tile=tile,
        base_alpha=pointset(sp, 0),
        base_beta=pointset(sp, 0),
        alphabet_size=1,
        columns=[Column(
            q_alpha=np.array([0]),
            q_beta=np.array([0]),
            name_alpha=np.zeros(3, dtype=np.int16),
            name_beta=np.zeros(3, dtype=np.int16),
            sigma=np.array([0, 2, 1]),
            matched=np.array([True, False, False]),
        )],
    )
    s_perm, _ = build_rewiring(f, cd)
    for x in range(3, 10):
        assert s_perm(x) == x


# ---------------------------------------------------------------------------
# budget
# ---------------------------------------------------------------------------

def test_discrepancy_budget_self_rewiring_zero():
    sp = FiniteSpace(120)
    f = rotation(sp, 1)
    evens = PointSet(sp, np.arange(120) % 2 == 0)
    phi = generated_partition(sp, [evens])
    eps = Fraction(1, 16)
    pair = tower_pair(f, f, phi, [Z.element([1])], eps)
    cd = tile_matching(column_partitions(pair.tower_alpha, pair.tower_beta, phi, f, f), eps)
    s_perm, app = build_rewiring(f, cd)
    report = discrepancy_budget(app, f, cd, [Z.element([1])], [evens], eps, phi)
    assert report.ok
    for eb in report.per_element:
        assert eb.residual_empty
        assert all(d <= eb.l0 + eb.l1 + eb.l2 for d in eb.discrepancies)


def test_discrepancy_budget_identity_element_no_shift_loss():
    sp = FiniteSpace(120)
    f = rotation(sp, 1)
    phi = Labeling.constant(sp, ())
    eps = Fraction(1, 16)
    pair = tower_pair(f, f, phi, [Z.element([1])], eps)
    cd = tile_matching(column_partitions(pair.tower_alpha, pair.tower_beta, phi, f, f), eps)
    _, app = build_rewiring(f, cd)
    report = discrepancy_budget(app, f, cd, [Z.identity()], [PointSet.full(sp)], eps, phi)
    assert report.per_element[0].l1 == 0


# ---------------------------------------------------------------------------
# ergodization
# ---------------------------------------------------------------------------

def test_make_factor_ergodic_already_transitive():
    sp = FiniteSpace(10)
    f = rotation(sp, 1)
    assert make_factor_ergodic(f, Fraction(1, 2)) is f


def test_make_factor_ergodic_two_transpositions():
    sp = FiniteSpace(4)
    perm = Permutation(sp, np.array([1, 0, 3, 2]))
    f = FactorAction(Z, sp, (perm,))
    out = make_factor_ergodic(f, Fraction(1, 2))
    assert out.orbits().is_transitive
    changed = int(np.count_nonzero(out.gens[0].forward != perm.forward))
    assert changed == 2


def test_make_factor_ergodic_budget_exceeded():
    sp = FiniteSpace(12)
    f = rotation(sp, 4)  # 4 cycles of length 3 -> cost 6/12
    with pytest.raises(BudgetExceeded):
        make_factor_ergodic(f, Fraction(5, 12))
    out = make_factor_ergodic(f, Fraction(6, 12))
    assert out.orbits().is_transitive


def test_make_factor_ergodic_rank_unsupported():
    sp = FiniteSpace(8)
    f = FactorAction(
        AbelianGroupSpec(2), sp,
        (Permutation(sp, (np.arange(8) + 2) % 8), Permutation(sp, (np.arange(8) + 4) % 8)),
    )
    with pytest.raises(RankUnsupported):
        make_factor_ergodic(f, Fraction(1, 2))


def test_make_factor_ergodic_exact_cost_random():
    rng = np.random.default_rng(123)
    for _ in range(25):
        n = 200
        sp = FiniteSpace(n)
        perm = Permutation(sp, rng.permutation(n).astype(np.int64))
        f = FactorAction(Z, sp, (perm,))
        k = f.charts[0].n_cycles
        if k == 1:
            continue
        out = make_factor_ergodic(f, Fraction(1))
        changed = int(np.count_nonzero(out.gens[0].forward != perm.forward))
        assert changed == 2 * (k - 1)
        assert out.orbits().is_transitive
        d = weak_discrepancy(
            FreeProductSystem((out,)), FreeProductSystem((f,)),
            [FreeWord.letter(0, Z.element([1]))],
            [PointSet.from_indices(sp, range(0, n, 3))],
        )
        assert d <= Fraction(2 * (k - 1), n)


# ---------------------------------------------------------------------------
# chaining and orbit equivalence
# ---------------------------------------------------------------------------

def test_verify_orbit_equivalence_conjugate_true():
    sp = FiniteSpace(36)
    alpha = rotation_system(sp, 2, 6)
    r = Permutation(sp, np.roll(np.arange(36), 5))
    gamma = alpha.conjugate(r)
    ok, diag = verify_orbit_equivalence(alpha, gamma, r)
    assert ok and diag is None


def test_verify_orbit_equivalence_detects_coarsening():
    sp = FiniteSpace(12)
    alpha = rotation_system(sp, 2, 2)  # parity orbits
    gamma = rotation_system(sp, 1, 2)  # first factor transitive: coarser
    ok, diag = verify_orbit_equivalence(alpha, gamma, Permutation.identity(sp))
    assert not ok
    assert diag is not None


def test_chain_extension_cases():
    sp = FiniteSpace(48)
    alpha = rotation_system(sp, 2, 4, 6)
    r = Permutation(sp, np.roll(np.arange(48), 7))
    head = FreeProductSystem(tuple(f.conjugate(r) for f in alpha.factors[:2]))
    full = chain_extension(alpha, head, r, 2)
    assert full.k == 3
    # tail factor is the exact conjugate
    assert full.factors[2].gens[0] == alpha.factors[2].gens[0].conjugate(r)
    ok, _ = verify_orbit_equivalence(alpha, full, r)
    assert ok
    pure = chain_extension(alpha, None, r, 0)
    assert all(
        pure.factors[i].gens[0] == alpha.factors[i].gens[0].conjugate(r)
        for i in range(3)
    )
    same = chain_extension(alpha, alpha, Permutation.identity(sp), 3)
    assert same.factors == alpha.factors


def test_chain_extension_factor_count_mismatch():
    sp = FiniteSpace(10)
    alpha = rotation_system(sp, 1, 3)
    with pytest.raises(ValueError):
        chain_extension(alpha, alpha, Permutation.identity(sp), 1)


# ---------------------------------------------------------------------------
# end to end
# ---------------------------------------------------------------------------

def test_oe_approximate_small_end_to_end():
    n = 4096
    sp = FiniteSpace(n)
    alpha = rotation_system(sp, 1, 3)
    beta = rotation_system(sp, 1, 7)
    evens = PointSet(sp, np.arange(n) % 2 == 0)
    window = [[Z.element([1])], [Z.element([1])]]
    res = oe_approximate(alpha, beta, window, Fraction(4, 5), [evens], seed=7)
    assert res.report.final_discrepancy < Fraction(4, 5)
    assert res.report.orbit_check
    # independent recomputation of the reported discrepancy
    words = [FreeWord.letter(0, Z.element([1])), FreeWord.letter(1, Z.element([1]))]
    again = weak_discrepancy(res.gamma, beta, words, [evens])
    assert again == res.report.final_discrepancy
    ok, _ = verify_orbit_equivalence(alpha, res.gamma, res.witness.conjugator)
    assert ok


def test_oe_approximate_constant_partition_degenerate():
    # one-cell partition: every discrepancy vanishes outright
    n = 600
    sp = FiniteSpace(n)
    alpha = rotation_system(sp, 1)
    beta = rotation_system(sp, 7)
    window = [[Z.element([1])]]
    full = PointSet.full(sp)
    res = oe_approximate(alpha, beta, window, Fraction(1, 4), [full], seed=1)
    assert res.report.alphabet_size == 1
    assert res.report.final_discrepancy == 0


def test_oe_approximate_multi_orbit_alpha_orbit_equivalence_meaningful():
    # both rewired factors preserve parity, so the full orbit partition is
    # nontrivial and the equivalence check has something to verify
    n = 2048
    sp = FiniteSpace(n)
    alpha = rotation_system(sp, 2, 6)
    beta = rotation_system(sp, 1, 3)
    evens = PointSet(sp, np.arange(n) % 2 == 0)
    window = [[Z.element([1])], [Z.element([1])]]
    res = oe_approximate(alpha, beta, window, Fraction(19, 20), [evens], seed=4)
    assert res.report.orbit_check
    assert alpha.full_orbit_decomposition().n_orbits == 2
    assert res.gamma.full_orbit_decomposition().n_orbits == 2
    assert res.report.final_discrepancy < Fraction(19, 20)


def test_reduce_words_to_letters():
    w1 = FreeWord([(0, Z.element([1])), (1, Z.element([2])), (0, Z.element([1]))])
    w2 = FreeWord.letter(1, Z.element([-1]))
    window, eps = reduce_words_to_letters([w1, w2], 2, Fraction(1, 2))
    assert eps == Fraction(1, 6)
    assert [g.coords for g in window[0]] == [(1,)]
    assert [g.coords for g in window[1]] == [(-1,), (2,)]


def test_eps_prime_uses_24_alphabet_constant():
    # eps = 0.24 with a 2-cell partition gives eps' = 0.24/48 = 0.005 exactly
    n = 2400
    sp = FiniteSpace(n)
    alpha = rotation_system(sp, 1)
    beta = rotation_system(sp, 7)
    evens = PointSet(sp, np.arange(n) % 2 == 0)
    res = oe_approximate(alpha, beta, [[Z.element([1])]], 0.24, [evens], seed=2)
    assert res.report.alphabet_size == 2
    assert res.report.eps_prime == Fraction(1, 200)


def test_eps_prime_override():
    n = 2400
    sp = FiniteSpace(n)
    alpha = rotation_system(sp, 1)
    beta = rotation_system(sp, 7)
    evens = PointSet(sp, np.arange(n) % 2 == 0)
    res = oe_approximate(alpha, beta, [[Z.element([1])]], 0.24, [evens], seed=2,
                         eps_prime_override=Fraction(1, 60))
    assert res.report.eps_prime == Fraction(1, 60)


def test_stage_tag_on_pipeline_errors():
    from orbitrewire.errors import VerificationFailed as VF

    # orbits of length 8 cannot verify a tight good-partition bound
    n = 64
    sp = FiniteSpace(n)
    alpha = rotation_system(sp, 8)
    beta = rotation_system(sp, 1)
    evens = PointSet(sp, np.arange(n) % 2 == 0)
    with pytest.raises(VF) as exc:
        oe_approximate(alpha, beta, [[Z.element([1])]], Fraction(1, 4), [evens],
                       seed=0, max_retries=1)
    assert exc.value.stage == "good_partition"


def test_invariance_prefilter_matches_exact_defect():
    from orbitrewire import invariance_defect
    from orbitrewire.rewiring import _invariance_ok

    rng = np.random.default_rng(8)
    spec2 = AbelianGroupSpec(2)
    for _ in range(100):
        side = int(rng.integers(1, 12))
        tile = box_tile(spec2, [0, 0], [side - 1, side - 1])
        g = spec2.element([int(rng.integers(-side - 1, side + 2)),
                           int(rng.integers(-side - 1, side + 2))])
        eps = Fraction(int(rng.integers(1, 9)), 17)
        assert _invariance_ok(spec2, side, g, tile.size, eps) == \
            (invariance_defect(tile, g) < eps)


def test_oe_approximate_grid_factor_end_to_end():
    # rank-2 factor: 128x128 box tiles over a 256x256 grid, 2x2 base blocks
    from orbitrewire.generate import generate_system

    n = 256 * 256
    sp = FiniteSpace(n)
    z2 = AbelianGroupSpec(2)
    alpha = generate_system(sp, [{"name": "grid_shift", "dims": [256, 256]}])
    beta = generate_system(sp, [{"name": "grid_shift", "dims": [256, 256],
                                 "steps": [1, 7]}])
    evens = PointSet(sp, np.arange(n) % 2 == 0)
    window = [[z2.element([1, 0]), z2.element([0, 1])]]
    res = oe_approximate(alpha, beta, window, Fraction(9, 10), [evens], seed=3)
    assert res.report.final_discrepancy < Fraction(9, 10)
    assert res.report.orbit_check
    assert res.report.factors[0].base_size >= 2  # genuinely multi-column


def test_no_good_tile_when_grid_dimensions_too_short():
    from orbitrewire.errors import NoGoodTile
    from orbitrewire.generate import generate_system

    n = 36 * 36
    sp = FiniteSpace(n)
    z2 = AbelianGroupSpec(2)
    alpha = generate_system(sp, [{"name": "grid_shift", "dims": [36, 36]}])
    beta = generate_system(sp, [{"name": "grid_shift", "dims": [36, 36],
                                 "steps": [1, 7]}])
    evens = PointSet(sp, np.arange(n) % 2 == 0)
    window = [[z2.element([1, 0]), z2.element([0, 1])]]
    with pytest.raises(NoGoodTile) as exc:
        # window invariance needs sides beyond 2/eps' = 106 > 36
        oe_approximate(alpha, beta, window, Fraction(9, 10), [evens], seed=3)
    assert exc.value.stage == "tower_pair[0]"


def test_min_space_estimate_reported():
    n = 2400
    sp = FiniteSpace(n)
    alpha = rotation_system(sp, 1)
    beta = rotation_system(sp, 7)
    evens = PointSet(sp, np.arange(n) % 2 == 0)
    res = oe_approximate(alpha, beta, [[Z.element([1])]], 0.24, [evens], seed=2)
    # eps' = 1/200: tiles need > 200 elements and sides > 400
    assert res.report.min_space_estimate == 401
