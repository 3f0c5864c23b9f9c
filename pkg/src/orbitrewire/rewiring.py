"""Orbit-preserving rewiring of one action toward another.

Given a free system ``alpha`` and a target system ``beta`` on the same space,
the pipeline produces ``gamma`` orbit-equivalent to ``alpha`` whose action is
weakly close to ``beta`` on a requested family of group elements and sets:

1. partition the space by how ``beta`` moves the target sets (``phi``);
2. build a labeling ``psi`` with the same cell masses whose cells are
   equidistributed along most ``alpha`` orbits (good partition);
3. conjugate ``alpha`` by the cell-matching automorphism R;
4. per factor, erect matching Rohlin towers for both actions over a common
   box tile whose levels are label-pure, split the bases into equal-mass
   columns, match tile elements of equal label within each column, and rewire
   the conjugated action by the matching permutation inside each column;
5. certify, with exact arithmetic, the three-part mass budget that bounds the
   final discrepancy, and re-verify the weak discrepancy and the orbit
   partition equality from scratch.

Every inequality asserted here is the exact finite form of the corresponding
step bound; violations raise coded errors instead of degrading silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .actions import FactorAction, FreeProductSystem, weak_discrepancy
from .errors import (
    BaseSizeMismatch,
    BudgetExceeded,
    BudgetViolated,
    DefectBoundViolated,
    FinalDiscrepancyExceeded,
    LevelOverlap,
    NoGoodTile,
    OrbitRewireError,
    PushforwardMismatch,
    RankUnsupported,
    SpecMismatch,
    VerificationFailed,
)
from .goodpart import good_partition
from .groups import DEFAULT_TILE_CAP, AbelianElement, FreeWord, Tile, box_tile
from .rohlin import Tower, max_aligned_coverage, orbit_alignment, rohlin_avoiding
from .space import (
    Labeling,
    Permutation,
    PointSet,
    exact_fraction,
    generated_partition,
    measure,
    pushforward,
)


# ---------------------------------------------------------------------------
# conjugator
# ---------------------------------------------------------------------------

def match_labels_conjugator(psi: Labeling, phi: Labeling) -> Permutation:
    """The automorphism R with R(psi-cell) = phi-cell for every symbol.

    Requires exactly equal pushforwards; within each label, points are
    matched in increasing index order, so R is deterministic.
    """
    if psi.space != phi.space:
        raise PushforwardMismatch("labelings live on different spaces")
    if pushforward(psi) != pushforward(phi):
        raise PushforwardMismatch("labelings have different pushforwards")
    n = psi.space.n_points
    forward = np.empty(n, dtype=np.int64)
    for a in psi.alphabet:
        src = np.nonzero(psi.codes == psi.code_of(a))[0]
        dst = np.nonzero(phi.codes == phi.code_of(a))[0]
        forward[src] = dst
    return Permutation(psi.space, forward)


# ---------------------------------------------------------------------------
# tower pair
# ---------------------------------------------------------------------------

@dataclass
class TowerPairResult:
    tower_alpha: Tower
    tower_beta: Tower
    tile: Tile
    side: int
    good_mass_alpha: Fraction
    good_mass_beta: Fraction
    avoid_mass: Fraction
    coverage_alpha: Fraction
    coverage_beta: Fraction
    base_size: int


def _check_exact_range(eps: Fraction, n: int) -> None:
    """Vectorized comparisons stay in int64; keep their products in range."""
    if (eps.numerator + eps.denominator) * n * n >= 2**60:
        raise ValueError(
            f"eps'={eps} has too large a numerator/denominator for exact "
            f"int64 arithmetic at space size {n}"
        )


class _GoodSetEvaluator:
    """Exact good-set masses for candidate tiles, built for a fixed factor.

    The per-symbol prefix sums (single-generator factors) and the
    tile-independent orbit conditions are computed once; each candidate tile
    is screened on a point subsample first, which is an exact rejection test
    because bad points in the subsample are bad points outright.  The full
    per-point pass early-exits once the bad count crosses the threshold.
    """

    SUBSAMPLE_TARGET = 4096

    def __init__(self, f: FactorAction, phi: Labeling, eps: Fraction, kind: str):
        _check_exact_range(eps, f.space.n_points)
        self.f = f
        self.phi = phi
        self.eps = eps
        self.kind = kind  # "rewired" (orbit-relative) or "target" (global)
        self.n = f.space.n_points
        self.k_sym = len(phi.alphabet)
        self.cells = [np.asarray(phi.codes == a, dtype=np.int64) for a in range(self.k_sym)]
        self.counts = [int(c.sum()) for c in self.cells]
        self.single = len(f.charts) == 1
        if self.single:
            chart = f.charts[0]
            self.prefs = [chart.prefix(c) for c in self.cells]
        stride = max(1, self.n // self.SUBSAMPLE_TARGET)
        self.sample = np.arange(0, self.n, stride, dtype=np.int64)
        if kind == "rewired":
            od = f.orbits()
            enum, eden = eps.numerator, eps.denominator
            self.l_pt = od.sizes[od.orbit_id]
            self.c_pt = []
            fixed_bad = np.zeros(self.n, dtype=bool)
            for a in range(self.k_sym):
                c_orb = np.bincount(od.orbit_id[self.cells[a] > 0], minlength=od.n_orbits)
                self.c_pt.append(c_orb[od.orbit_id])
                orb_bad = np.abs(c_orb * self.n - self.counts[a] * od.sizes) * eden \
                    > 2 * enum * od.sizes * self.n
                fixed_bad |= orb_bad[od.orbit_id]
            # orbit-vs-global failures are tile-independent
            self.fixed_bad = fixed_bad
        else:
            self.fixed_bad = np.zeros(self.n, dtype=bool)

    def _bad_threshold(self) -> tuple[int, int]:
        # good mass > 1 - 2 eps  <=>  bad_count * eden < 2 * enum * n
        return 2 * self.eps.numerator * self.n, self.eps.denominator

    def _window(self, tile: Tile, a: int, points: np.ndarray | None) -> np.ndarray:
        if self.single:
            lo, side = tile.dim_lows[0], tile.sides[0]
            return self.f.charts[0].window_from_prefix(self.prefs[a], lo, side, points)
        w = self.f.window_counts(tile, self.cells[a])
        return w if points is None else w[points]

    def _window_bad(self, tile: Tile, a: int, points: np.ndarray | None) -> np.ndarray:
        enum, eden = self.eps.numerator, self.eps.denominator
        tsz = tile.size
        w = self._window(tile, a, points)
        if self.kind == "rewired":
            l_pt = self.l_pt if points is None else self.l_pt[points]
            c_pt = self.c_pt[a] if points is None else self.c_pt[a][points]
            return np.abs(w * l_pt - c_pt * tsz) * eden > enum * tsz * l_pt
        return np.abs(w * self.n - self.counts[a] * tsz) * eden > 3 * enum * tsz * self.n

    def evaluate(self, tile: Tile) -> tuple[np.ndarray, Fraction] | None:
        """Good-set mask and mass, or None when mass <= 1 - 2*eps."""
        lim_num, lim_den = self._bad_threshold()
        fixed = int(np.count_nonzero(self.fixed_bad))
        if fixed * lim_den >= lim_num:
            return None
        if self.single and len(self.sample) < self.n:
            bad_sub = self.fixed_bad[self.sample].copy()
            for a in range(self.k_sym):
                bad_sub |= self._window_bad(tile, a, self.sample)
                if int(np.count_nonzero(bad_sub)) * lim_den >= lim_num:
                    return None
        bad = self.fixed_bad.copy()
        for a in range(self.k_sym):
            bad |= self._window_bad(tile, a, None)
            if int(np.count_nonzero(bad)) * lim_den >= lim_num:
                return None
        mass = Fraction(self.n - int(np.count_nonzero(bad)), self.n)
        return ~bad, mass

    def base_window_ok(self, tile: Tile, base: PointSet, slack: int) -> bool:
        """Every base point's window is within slack*eps of the reference.

        For the rewired side the reference is the global cell mass (the
        triangle of the orbit and window conditions); slack is 3 for both
        sides.
        """
        enum, eden = self.eps.numerator, self.eps.denominator
        idx = base.indices()
        tsz = tile.size
        for a in range(self.k_sym):
            w = self._window(tile, a, idx)
            if np.any(np.abs(w * self.n - self.counts[a] * tsz) * eden
                      > slack * enum * tsz * self.n):
                return False
        return True


def equalize_bases(tw_a: Tower, tw_b: Tower) -> tuple[Tower, Tower]:
    """Trim the larger base (dropping highest-index points) to equal sizes."""
    na, nb = tw_a.base.size, tw_b.base.size
    if na == nb:
        return tw_a, tw_b
    if na > nb:
        keep = tw_a.base.indices()[:nb]
        return Tower(tw_a.tile, PointSet.from_indices(tw_a.base.space, keep),
                     tw_a.factor_index), tw_b
    keep = tw_b.base.indices()[:na]
    return tw_a, Tower(tw_b.tile, PointSet.from_indices(tw_b.base.space, keep),
                       tw_b.factor_index)


def _invariance_ok(spec, side: int, g: AbelianElement, tile_size: int,
                   eps: Fraction) -> bool:
    overlap = 1
    for d in range(spec.rank):
        overlap *= max(0, side - abs(g.free[d]))
    for c in spec.torsion_moduli:
        overlap *= c
    defect_num = 2 * (tile_size - overlap)
    # defect/size < eps
    return defect_num * eps.denominator < eps.numerator * tile_size


def tower_pair(alpha_i: FactorAction, beta_i: FactorAction, phi: Labeling,
               window: Sequence[AbelianElement], eps_prime, *,
               tile_cap: int = DEFAULT_TILE_CAP,
               factor_index: int | None = None) -> TowerPairResult:
    """Matching Rohlin towers for both actions over one good box tile.

    Searches box sides s = 2, 3, ... (tiles [0, s-1]^rank x full torsion) for
    the smallest tile that is window-invariant within eps', has more than
    1/eps' elements, can reach tiling coverage above 1 - 4*eps' on both
    actions, and whose good sets both have mass above 1 - 2*eps'.  The towers
    avoid the union of bad points and get equal base sizes by trimming.
    """
    eps = exact_fraction(eps_prime)
    if alpha_i.spec != beta_i.spec:
        raise SpecMismatch("tower_pair needs actions of the same factor group")
    spec = alpha_i.spec
    r = spec.rank
    torsion_size = 1
    for c in spec.torsion_moduli:
        torsion_size *= c
    enum, eden = eps.numerator, eps.denominator
    floor_w = 1 - 4 * eps  # tiling stage floor inside rohlin_avoiding
    n = alpha_i.space.n_points

    def _divisors(m: int) -> list[int]:
        out = []
        d = 1
        while d * d <= m:
            if m % d == 0:
                out.append(d)
                out.append(m // d)
            d += 1
        return out

    def candidate_sides() -> list[int]:
        """Sides that can clear the coverage floor: divisors of aligned
        dimension lengths (full block packing) and the near-full band of
        each length (single-block packing).  The exact coverage prefilter
        below still vets every candidate."""
        cand: set[int] = set()
        for f in (alpha_i, beta_i):
            for al in orbit_alignment(f):
                lengths = ([al.dims[d] for d in range(r)]
                           if al.dims is not None else [al.size])
                for length in lengths:
                    cand.update(s for s in _divisors(length) if s >= 2)
                    lo_band = max(2, int((1 - 4 * eps) * length) + 1)
                    cand.update(range(lo_band, length + 1))
        return sorted(cand)

    if r == 0:
        side_candidates: Sequence[int] = (1,)
        s_limit = 1
    else:
        side_candidates = candidate_sides()
        s_limit = side_candidates[-1] if side_candidates else 0

    # the aligned-coverage prefilter is exact unless some orbit lacks product
    # structure; only then may a small model fall through to the greedy sweep
    has_unaligned = any(
        al.dims is None for f in (alpha_i, beta_i) for al in orbit_alignment(f)
    )
    small_model = has_unaligned and n * torsion_size <= 2_000_000

    eval_a = _GoodSetEvaluator(alpha_i, phi, eps, "rewired")
    eval_b = _GoodSetEvaluator(beta_i, phi, eps, "target")

    for side in side_candidates:
        size = (side ** r) * torsion_size
        if size > tile_cap:
            break
        if size * enum <= eden:  # need |T| > 1/eps'
            continue
        if not all(_invariance_ok(spec, side, g, size, eps) for g in window):
            continue
        sides = (side,) * r + spec.torsion_moduli
        cov_a = max_aligned_coverage(alpha_i, sides, size)
        cov_b = max_aligned_coverage(beta_i, sides, size)
        if (cov_a <= floor_w or cov_b <= floor_w) and not small_model:
            continue
        tile = box_tile(spec, (0,) * r, (side - 1,) * r, cap=tile_cap)
        res_a = eval_a.evaluate(tile)
        if res_a is None:
            continue
        res_b = eval_b.evaluate(tile)
        if res_b is None:
            continue
        ga, mass_a = res_a
        gb, mass_b = res_b
        avoid = PointSet(alpha_i.space, ~(ga & gb))
        tw_a = rohlin_avoiding(alpha_i, tile, 8 * eps, avoid, factor_index=factor_index)
        tw_b = rohlin_avoiding(beta_i, tile, 8 * eps, avoid, factor_index=factor_index)
        tw_a, tw_b = equalize_bases(tw_a, tw_b)
        coverage = Fraction(tile.size * tw_a.base.size, n)
        if coverage <= 1 - 8 * eps:
            raise BudgetViolated(
                f"trimmed tower coverage {coverage} not above {1 - 8 * eps}"
            )
        if not eval_a.base_window_ok(tile, tw_a.base, 3):
            raise VerificationFailed("rewired-side base fails the 3*eps' window bound")
        if not eval_b.base_window_ok(tile, tw_b.base, 3):
            raise VerificationFailed("target-side base fails the 3*eps' window bound")
        return TowerPairResult(
            tower_alpha=tw_a,
            tower_beta=tw_b,
            tile=tile,
            side=side,
            good_mass_alpha=mass_a,
            good_mass_beta=mass_b,
            avoid_mass=measure(avoid),
            coverage_alpha=coverage,
            coverage_beta=Fraction(tile.size * tw_b.base.size, n),
            base_size=tw_a.base.size,
        )
    raise NoGoodTile(
        f"no box tile up to side {s_limit} (cap {tile_cap}) satisfies the "
        f"invariance/size/coverage/goodness thresholds at eps'={eps}; "
        f"every orbit dimension must reach about "
        f"{min_space_estimate(eps, [window])} points"
    )


# ---------------------------------------------------------------------------
# columns and tile matching
# ---------------------------------------------------------------------------

@dataclass
class Column:
    """One matched column: equal-size base pieces plus their tile names."""

    q_alpha: np.ndarray
    q_beta: np.ndarray
    name_alpha: np.ndarray
    name_beta: np.ndarray
    sigma: np.ndarray | None = None
    matched: np.ndarray | None = None  # boolean per tile index: the set T_s

    @property
    def size(self) -> int:
        return len(self.q_alpha)


@dataclass
class ColumnData:
    factor_index: int | None
    tile: Tile
    base_alpha: PointSet
    base_beta: PointSet
    alphabet_size: int
    columns: list[Column] = field(default_factory=list)

    def max_defect(self) -> int:
        worst = 0
        for col in self.columns:
            if col.matched is not None:
                worst = max(worst, col.matched.size - int(np.count_nonzero(col.matched)))
        return worst


def _name_key(name: np.ndarray) -> bytes:
    # big-endian unsigned bytes sort exactly like the code tuples
    return name.astype(">u2").tobytes()


def _names_by_class(f: FactorAction, tile: Tile, base: PointSet,
                    codes: np.ndarray) -> list[tuple[bytes, np.ndarray, list[int]]]:
    classes: dict[bytes, tuple[np.ndarray, list[int]]] = {}
    for x in base.indices():
        name = codes[f.tile_images(tile, int(x))].astype(np.int16)
        key = _name_key(name)
        if key in classes:
            classes[key][1].append(int(x))
        else:
            classes[key] = (name, [int(x)])
    return sorted(
        ((k, name, pts) for k, (name, pts) in classes.items()), key=lambda kv: kv[0]
    )


def column_partitions(tw_alpha: Tower, tw_beta: Tower, phi: Labeling,
                      alpha_i: FactorAction, beta_i: FactorAction) -> ColumnData:
    """Group both bases by tile name and refine into equal-size column pairs.

    Name classes are walked in canonical name order on both sides; each step
    splits off the lowest-index points, min(remaining alpha, remaining beta)
    at a time, as the next matched column pair.
    """
    if tw_alpha.base.size != tw_beta.base.size:
        raise BaseSizeMismatch(
            f"base sizes differ: {tw_alpha.base.size} vs {tw_beta.base.size}"
        )
    if tw_alpha.tile is not tw_beta.tile and tw_alpha.tile.sides != tw_beta.tile.sides:
        raise BaseSizeMismatch("towers use different tiles")
    tile = tw_alpha.tile
    if len(phi.alphabet) >= 2**15:
        raise ValueError("alphabet too large for int16 name arrays")
    cls_a = _names_by_class(alpha_i, tile, tw_alpha.base, phi.codes)
    cls_b = _names_by_class(beta_i, tile, tw_beta.base, phi.codes)
    cd = ColumnData(
        factor_index=tw_alpha.factor_index,
        tile=tile,
        base_alpha=tw_alpha.base,
        base_beta=tw_beta.base,
        alphabet_size=len(phi.alphabet),
    )
    ia = ib = 0
    off_a = off_b = 0
    while ia < len(cls_a) and ib < len(cls_b):
        _, name_a, pts_a = cls_a[ia]
        _, name_b, pts_b = cls_b[ib]
        take = min(len(pts_a) - off_a, len(pts_b) - off_b)
        cd.columns.append(
            Column(
                q_alpha=np.array(pts_a[off_a:off_a + take], dtype=np.int64),
                q_beta=np.array(pts_b[off_b:off_b + take], dtype=np.int64),
                name_alpha=name_a,
                name_beta=name_b,
            )
        )
        off_a += take
        off_b += take
        if off_a == len(pts_a):
            ia += 1
            off_a = 0
        if off_b == len(pts_b):
            ib += 1
            off_b = 0
    if ia != len(cls_a) or ib != len(cls_b):
        raise BaseSizeMismatch("internal error: column refinement left points over")
    return cd


def tile_matching(cd: ColumnData, eps_prime) -> ColumnData:
    """Per column, the tile self-matching: a bijection fixing the identity
    that sends target-name positions onto equal rewired-name positions.

    Greedy per symbol in canonical tile order; leftovers complete the
    bijection arbitrarily (canonical order).  The matched set per column must
    miss fewer than 7 * eps' * |alphabet| * |T| tile elements, exactly.
    """
    eps = exact_fraction(eps_prime)
    tile = cd.tile
    tsz = tile.size
    e_idx = tile.identity_index
    k_sym = cd.alphabet_size
    enum, eden = eps.numerator, eps.denominator
    for s, col in enumerate(cd.columns):
        na, nb = col.name_alpha, col.name_beta
        sigma = np.full(tsz, -1, dtype=np.int64)
        sigma[e_idx] = e_idx
        leftovers_b: list[np.ndarray] = []
        leftovers_a: list[np.ndarray] = []
        for a in range(k_sym):
            bs = np.nonzero(nb == a)[0]
            bs = bs[bs != e_idx]
            as_ = np.nonzero(na == a)[0]
            as_ = as_[as_ != e_idx]
            m = min(len(bs), len(as_))
            if m:
                sigma[bs[:m]] = as_[:m]
            leftovers_b.append(bs[m:])
            leftovers_a.append(as_[m:])
        lb = np.sort(np.concatenate(leftovers_b))
        la = np.sort(np.concatenate(leftovers_a))
        if len(lb) != len(la):  # pragma: no cover - cannot happen, both count T-1-matched
            raise DefectBoundViolated("internal error: leftover sides differ")
        sigma[lb] = la
        if np.any(np.bincount(sigma, minlength=tsz) != 1):  # pragma: no cover
            raise DefectBoundViolated("internal error: sigma is not a bijection")
        matched = na[sigma] == nb
        col.sigma = sigma
        col.matched = matched
        defect = tsz - int(np.count_nonzero(matched))
        # exact bound: defect < 7 eps' |A| |T|
        if not defect * eden < 7 * enum * k_sym * tsz:
            raise DefectBoundViolated(
                f"column {s}: |T \\ T_s| = {defect} not below "
                f"7*eps'*|A|*|T| = {Fraction(7 * enum * k_sym * tsz, eden)}",
                column=s,
                defect=defect,
            )
    return cd


# ---------------------------------------------------------------------------
# rewiring permutation
# ---------------------------------------------------------------------------

def build_rewiring(alpha_i: FactorAction, cd: ColumnData) -> tuple[Permutation, FactorAction]:
    """The level-shuffling automorphism S and the rewired action S a S^-1.

    On the level t.Q of column Q, S moves points to the sigma(t) level of the
    same column (identity off the tower).  sigma fixing the identity makes S
    fix every base point, and levels staying inside their column keeps every
    point in its own factor orbit.
    """
    n = alpha_i.space.n_points
    forward = np.arange(n, dtype=np.int64)
    tile = cd.tile
    for col in cd.columns:
        if col.sigma is None:
            raise ValueError("tile_matching must complete the columns first")
        for x in col.q_alpha:
            levels = alpha_i.tile_images(tile, int(x))
            forward[levels] = levels[col.sigma]
    counts = np.bincount(forward, minlength=n)
    if np.any(counts != 1):
        raise LevelOverlap("rewiring assignments collide; tower levels overlap")
    s_perm = Permutation(alpha_i.space, forward)
    base_idx = cd.base_alpha.indices()
    if not np.array_equal(forward[base_idx], base_idx):
        raise LevelOverlap("internal error: rewiring moved a base point")
    od = alpha_i.orbits()
    if not np.array_equal(od.orbit_id[forward], od.orbit_id):
        raise LevelOverlap("internal error: rewiring left an orbit")
    return s_perm, alpha_i.conjugate(s_perm)


# ---------------------------------------------------------------------------
# budget certification
# ---------------------------------------------------------------------------

@dataclass
class ElementBudget:
    element: tuple[int, ...]
    l0: Fraction
    l1: Fraction
    l2: Fraction
    bound_l0: Fraction
    bound_l1: Fraction
    bound_l2: Fraction
    discrepancies: list[Fraction]
    residual_empty: bool

    @property
    def ok(self) -> bool:
        return (
            self.l0 < self.bound_l0
            and self.l1 < self.bound_l1
            and self.l2 < self.bound_l2
            and self.residual_empty
        )


@dataclass
class BudgetReport:
    factor_index: int | None
    per_element: list[ElementBudget]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.per_element)


def discrepancy_budget(alpha_pp_i: FactorAction, beta_i: FactorAction,
                       cd: ColumnData, window: Sequence[AbelianElement],
                       sets: Sequence[PointSet], eps_prime,
                       phi: Labeling) -> BudgetReport:
    """Exact masses of the three discrepancy sources, per window element.

    L0 is the tower complement, L1 the levels lost to tile shift, L2 the
    levels of unmatched tile positions; off their union the rewired and
    target actions move every target set identically, and that emptiness is
    checked pointwise along with the name-transport equivalence on every
    matched level.
    """
    eps = exact_fraction(eps_prime)
    tile = cd.tile
    n = alpha_pp_i.space.n_points
    k_sym = cd.alphabet_size
    support = np.zeros(n, dtype=bool)
    imgs: list[np.ndarray] = []
    col_of: list[int] = []
    for ci, col in enumerate(cd.columns):
        for x in col.q_alpha:
            img = alpha_pp_i.tile_images(tile, int(x))
            imgs.append(img)
            col_of.append(ci)
            support[img] = True
    l0_mask = ~support
    l0 = Fraction(int(np.count_nonzero(l0_mask)), n)
    bound_l0 = 8 * eps
    if not l0 < bound_l0:
        raise BudgetViolated(f"tower complement mass {l0} not below {bound_l0}")
    # name-transport equivalence on matched positions: the rewired level of a
    # column sits inside the cell the target-side name promises
    for img, ci in zip(imgs, col_of):
        col = cd.columns[ci]
        got = phi.codes[img].astype(np.int16)
        if not np.array_equal(got[col.matched], col.name_beta[col.matched]):
            raise BudgetViolated(
                "matched level lands outside the target-side name cell"
            )
    report = BudgetReport(cd.factor_index, [])
    for g in window:
        shift = tile.index_of_shift(g)
        in_gt = shift >= 0
        l1_sel = ~in_gt  # T \ gT
        l1_mask = np.zeros(n, dtype=bool)
        for img in imgs:
            l1_mask[img[l1_sel]] = True
        l2_mask = np.zeros(n, dtype=bool)
        for img, ci in zip(imgs, col_of):
            col = cd.columns[ci]
            in_gts = np.zeros(tile.size, dtype=bool)
            in_gts[in_gt] = col.matched[shift[in_gt]]
            sel = ~(col.matched & in_gts)  # T \ (T_s cap gT_s)
            l2_mask[img[sel]] = True
        l1 = Fraction(int(np.count_nonzero(l1_mask)), n)
        l2 = Fraction(int(np.count_nonzero(l2_mask)), n)
        base_mass = Fraction(cd.base_alpha.size, n)
        bound_l1_tight = eps * tile.size * base_mass
        if not (l1 < bound_l1_tight or l1 == 0):
            raise BudgetViolated(f"shift-loss mass {l1} not below {bound_l1_tight}")
        if not l1 < eps:
            raise BudgetViolated(f"shift-loss mass {l1} not below {eps}")
        bound_l2 = 15 * k_sym * eps
        if not l2 < bound_l2:
            raise BudgetViolated(f"unmatched-level mass {l2} not below {bound_l2}")
        excluded = l0_mask | l1_mask | l2_mask
        discrepancies = []
        residual_empty = True
        pa = alpha_pp_i.element_perm(g)
        pb = beta_i.element_perm(g)
        for a_set in sets:
            d_mask = pa.image(a_set).mask ^ pb.image(a_set).mask
            discrepancies.append(Fraction(int(np.count_nonzero(d_mask)), n))
            if np.any(d_mask & ~excluded):
                residual_empty = False
        if not residual_empty:
            raise BudgetViolated(
                "discrepancy outside L0 | L1 | L2 for element "
                f"{g.coords}; the construction is inconsistent"
            )
        report.per_element.append(
            ElementBudget(
                element=g.coords,
                l0=l0,
                l1=l1,
                l2=l2,
                bound_l0=bound_l0,
                bound_l1=eps,
                bound_l2=bound_l2,
                discrepancies=discrepancies,
                residual_empty=residual_empty,
            )
        )
    return report


# ---------------------------------------------------------------------------
# ergodization (rank-1) and chaining
# ---------------------------------------------------------------------------

def make_factor_ergodic(beta_i: FactorAction, budget) -> FactorAction:
    """Merge the generator's cycles into one by swapping two images per merge.

    Only rank-1 torsion-free factors (a single permutation).  Each merge
    joins the two largest cycles and changes the generator at two points, so
    k cycles cost exactly 2(k-1) changed points; the swap points are the
    lowest-index members whose images are still untouched.
    """
    budget = exact_fraction(budget)
    if beta_i.spec.rank != 1 or beta_i.spec.torsion_moduli:
        raise RankUnsupported("ergodization supports single-generator free factors only")
    chart = beta_i.charts[0]
    k = chart.n_cycles
    if k == 1:
        return beta_i
    n = beta_i.space.n_points
    cost = Fraction(2 * (k - 1), n)
    if cost > budget:
        raise BudgetExceeded(f"merging {k} cycles changes mass {cost} > budget {budget}")
    forward = beta_i.gens[0].forward.copy()
    cycles = [
        np.sort(chart.order[s:s + l])
        for s, l in zip(chart.cycle_start, chart.cycle_len)
    ]
    modified = np.zeros(n, dtype=bool)

    def pick(members: np.ndarray) -> int:
        fresh = members[~modified[members]]
        return int(fresh[0]) if len(fresh) else int(members[0])

    while len(cycles) > 1:
        cycles.sort(key=lambda m: (-len(m), int(m[0])))
        big, second = cycles[0], cycles[1]
        a = pick(big)
        b = pick(second)
        forward[a], forward[b] = forward[b], forward[a]
        modified[a] = modified[b] = True
        merged = np.sort(np.concatenate([big, second]))
        cycles = [merged] + cycles[2:]
    out = FactorAction(beta_i.spec, beta_i.space, (Permutation(beta_i.space, forward),))
    if not out.orbits().is_transitive:  # pragma: no cover - merges guarantee this
        raise VerificationFailed("ergodization did not produce a transitive factor")
    return out


def chain_extension(alpha: FreeProductSystem, gamma_head: FreeProductSystem | None,
                    r: Permutation, k: int) -> FreeProductSystem:
    """Extend a rewired head system to all factors.

    Factors 1..k come from ``gamma_head``; the rest are r-conjugates of
    ``alpha``'s factors, which preserves the full orbit equivalence via r.
    """
    if k < 0 or k > alpha.k:
        raise ValueError(f"k={k} out of range for {alpha.k} factors")
    if k == 0:
        return alpha.conjugate(r)
    if gamma_head is None or gamma_head.k != k:
        raise ValueError("gamma_head must cover exactly the first k factors")
    for i in range(k):
        if gamma_head.factors[i].spec != alpha.factors[i].spec:
            raise SpecMismatch(f"factor {i} spec mismatch between head and alpha")
    tail = [f.conjugate(r) for f in alpha.factors[k:]]
    return FreeProductSystem(tuple(gamma_head.factors) + tuple(tail))


def verify_orbit_equivalence(alpha: FreeProductSystem, gamma: FreeProductSystem,
                             r: Permutation) -> tuple[bool, str | None]:
    """Whether gamma's full orbit partition is the r-image of alpha's."""
    if alpha.space != gamma.space or r.space != alpha.space:
        raise SpecMismatch("systems and conjugator must share one space")
    g_ids = gamma.full_orbit_decomposition().orbit_id
    a_ids = alpha.full_orbit_decomposition().orbit_id[r.inverse_array]
    pairs = g_ids * (int(a_ids.max()) + 1) + a_ids
    n_pairs = len(np.unique(pairs))
    n_g = len(np.unique(g_ids))
    n_a = len(np.unique(a_ids))
    if n_pairs == n_g == n_a:
        return True, None
    order = np.lexsort((np.arange(len(g_ids)), g_ids))
    seen: dict[int, int] = {}
    for x in order:
        gid, aid = int(g_ids[x]), int(a_ids[x])
        if gid in seen and seen[gid] != aid:
            return False, f"point {int(x)} separates the partitions"
        seen[gid] = aid
    seen.clear()
    order = np.lexsort((np.arange(len(a_ids)), a_ids))
    for x in order:
        gid, aid = int(g_ids[x]), int(a_ids[x])
        if aid in seen and seen[aid] != gid:
            return False, f"point {int(x)} separates the partitions"
        seen[aid] = gid
    return False, "partition counts differ"  # pragma: no cover


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class OEWitness:
    """Everything needed to re-check an orbit-equivalent approximation."""

    conjugator: Permutation
    rewirings: tuple[Permutation, ...]
    orbit_check: bool
    diagnostic: str | None = None


@dataclass
class FactorStageReport:
    factor_index: int
    tile_side: int
    tile_size: int
    good_mass_alpha: Fraction
    good_mass_beta: Fraction
    avoid_mass: Fraction
    coverage_alpha: Fraction
    coverage_beta: Fraction
    base_size: int
    column_count: int
    column_defects: list[int]
    max_defect: int
    defect_bound: Fraction
    budget: BudgetReport


@dataclass
class PipelineReport:
    eps: Fraction
    eps_prime: Fraction
    alphabet_size: int
    cell_masses: list[Fraction]
    good_partition_retries: int
    good_partition_bad_masses: list[Fraction]
    good_partition_histograms: list[list[tuple[Fraction, Fraction]]]
    factors: list[FactorStageReport]
    final_discrepancy: Fraction
    orbit_check: bool
    # every orbit must hold a tile of more than 1/eps' window-invariant
    # elements, so spaces below this bound cannot host any qualifying tile
    min_space_estimate: int = 0


def min_space_estimate(eps_prime: Fraction,
                       window: Sequence[Sequence[AbelianElement]]) -> int:
    """Smallest orbit dimension that could host a qualifying tile.

    Tiles need more than 1/eps' elements and window-invariance forces box
    sides beyond 2*|g|/eps' per coordinate, so every aligned orbit dimension
    (hence the space) must be at least this large.
    """
    need = int(1 / eps_prime) + 1
    for elems in window:
        for g in elems:
            for v in g.free:
                need = max(need, int(2 * abs(v) / eps_prime) + 1)
    return need


@dataclass
class PipelineResult:
    gamma: FreeProductSystem
    witness: OEWitness
    report: PipelineReport
    phi: Labeling
    psi: Labeling


def letters_by_factor(words: Sequence[FreeWord], k: int) -> list[list[AbelianElement]]:
    """Collect the distinct letters of the words, grouped per factor."""
    seen: list[dict[tuple[int, ...], AbelianElement]] = [dict() for _ in range(k)]
    for w in words:
        for i, g in w.letters:
            if i >= k:
                raise SpecMismatch(f"word references factor {i}, system has {k}")
            seen[i].setdefault(g.coords, g)
    return [[d[c] for c in sorted(d)] for d in seen]


def reduce_words_to_letters(words: Sequence[FreeWord], k: int, eps) -> tuple[list[list[AbelianElement]], Fraction]:
    """Per-letter window and budget for running the pipeline on general words.

    Splitting a word bound across its letters (the composition inequality)
    means a per-letter budget of eps / max word length suffices.
    """
    eps = exact_fraction(eps)
    max_len = max((len(w) for w in words), default=1)
    return letters_by_factor(words, k), eps / max(max_len, 1)


def _stage(name: str):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if isinstance(exc, OrbitRewireError) and exc.stage is None:
                exc.stage = name
            return False

    return _Ctx()


def oe_approximate(alpha: FreeProductSystem, beta: FreeProductSystem,
                   window: Sequence[Sequence[AbelianElement]], eps,
                   sets: Sequence[PointSet], seed: int, *,
                   eps_prime_override=None,
                   tile_cap: int = DEFAULT_TILE_CAP,
                   max_retries: int = 3) -> PipelineResult:
    """Produce gamma orbit-equivalent to alpha and weakly eps-close to beta.

    ``window`` gives, per factor, the group elements on which closeness is
    required (callers with general words reduce them first, see
    ``reduce_words_to_letters``).  The returned witness carries the
    conjugator, the per-factor rewirings, and the verified orbit check; the
    report carries every certified mass.
    """
    eps = exact_fraction(eps)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if alpha.space != beta.space:
        raise SpecMismatch("alpha and beta must act on the same space")
    if alpha.k != beta.k or len(window) != alpha.k:
        raise SpecMismatch("factor counts of alpha, beta, and window must agree")
    for i in range(alpha.k):
        if alpha.factors[i].spec != beta.factors[i].spec:
            raise SpecMismatch(f"factor {i} group specs differ")
        if not beta.factors[i].orbits().is_transitive:
            raise VerificationFailed(
                f"target factor {i} is not transitive; ergodize it first "
                "(make_factor_ergodic) or supply a transitive template"
            )

    with _stage("phi"):
        family: list[PointSet] = []
        for a_set in sets:
            family.append(a_set)
            for i, elems in enumerate(window):
                for g in elems:
                    family.append(beta.factors[i].element_image_set(g, a_set))
        phi = generated_partition(alpha.space, family)
        k_sym = len(phi.alphabet)
        eps_prime = (
            exact_fraction(eps_prime_override)
            if eps_prime_override is not None
            else eps / (24 * k_sym)
        )
        pi = pushforward(phi)

    with _stage("good_partition"):
        psi, gp_report, retries = good_partition(alpha, pi, eps_prime, seed,
                                                 max_retries=max_retries)

    with _stage("conjugator"):
        r_perm = match_labels_conjugator(psi, phi)
        alpha_p = alpha.conjugate(r_perm)

    rewirings: list[Permutation] = []
    new_factors: list[FactorAction] = []
    factor_reports: list[FactorStageReport] = []
    for i in range(alpha.k):
        with _stage(f"tower_pair[{i}]"):
            pair = tower_pair(alpha_p.factors[i], beta.factors[i], phi, window[i],
                              eps_prime, tile_cap=tile_cap, factor_index=i)
        with _stage(f"columns[{i}]"):
            cd = column_partitions(pair.tower_alpha, pair.tower_beta, phi,
                                   alpha_p.factors[i], beta.factors[i])
        with _stage(f"matching[{i}]"):
            cd = tile_matching(cd, eps_prime)
        with _stage(f"rewiring[{i}]"):
            s_perm, app_i = build_rewiring(alpha_p.factors[i], cd)
        with _stage(f"budget[{i}]"):
            budget = discrepancy_budget(app_i, beta.factors[i], cd, window[i],
                                        sets, eps_prime, phi)
        rewirings.append(s_perm)
        new_factors.append(app_i)
        defects = [
            col.matched.size - int(np.count_nonzero(col.matched))
            for col in cd.columns
        ]
        factor_reports.append(
            FactorStageReport(
                factor_index=i,
                tile_side=pair.side,
                tile_size=pair.tile.size,
                good_mass_alpha=pair.good_mass_alpha,
                good_mass_beta=pair.good_mass_beta,
                avoid_mass=pair.avoid_mass,
                coverage_alpha=pair.coverage_alpha,
                coverage_beta=pair.coverage_beta,
                base_size=pair.base_size,
                column_count=len(cd.columns),
                column_defects=defects,
                max_defect=cd.max_defect(),
                defect_bound=7 * eps_prime * k_sym * pair.tile.size,
                budget=budget,
            )
        )

    gamma = FreeProductSystem(tuple(new_factors))
    with _stage("final"):
        words = [
            FreeWord.letter(i, g) for i, elems in enumerate(window) for g in elems
        ]
        final = weak_discrepancy(gamma, beta, words, sets) if words and sets else Fraction(0)
        if not final < eps:
            raise FinalDiscrepancyExceeded(
                f"end-to-end discrepancy {final} not below {eps}"
            )
        ok, diag = verify_orbit_equivalence(alpha, gamma, r_perm)
        if not ok:
            raise VerificationFailed(f"orbit partitions differ: {diag}")

    witness = OEWitness(conjugator=r_perm, rewirings=tuple(rewirings),
                        orbit_check=ok, diagnostic=diag)
    report = PipelineReport(
        eps=eps,
        eps_prime=eps_prime,
        alphabet_size=k_sym,
        cell_masses=[pi.mass(a) for a in phi.alphabet],
        good_partition_retries=retries,
        good_partition_bad_masses=[fb.bad_mass for fb in gp_report.per_factor],
        good_partition_histograms=[fb.histogram for fb in gp_report.per_factor],
        factors=factor_reports,
        final_discrepancy=final,
        orbit_check=ok,
        min_space_estimate=min_space_estimate(eps_prime, window),
    )
    return PipelineResult(gamma=gamma, witness=witness, report=report, phi=phi, psi=psi)
