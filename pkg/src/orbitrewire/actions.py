"""Permutation actions of abelian factors and their free products.

The workhorse here is the cycle chart of each generator permutation: points
listed cycle by cycle with per-point positions.  Charts turn arbitrary powers
g^j into O(1) index arithmetic and box-window sums into circular prefix-sum
differences, which keeps every tower/name/average computation linear in the
space size instead of linear in |tile| * N.

Orbits of a factor are the joins of its generators' cycles; for a single
generator they are the cycles themselves, otherwise minimum-label propagation
along cycles merges them.  Ergodicity of a finite factor model means
transitivity, and the ergodic decomposition is the uniform measure on each
orbit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import IdentityInWindow, SpaceMismatch, SpecMismatch
from .groups import AbelianElement, AbelianGroupSpec, FreeWord, Tile
from .space import (
    Distribution,
    FiniteSpace,
    Labeling,
    Permutation,
    PointSet,
    same_space,
    sym_diff_mass,
)


class CycleChart:
    """Cycle structure of one permutation.

    ``order`` lists the points cycle by cycle; every cycle starts at its
    minimal point and follows the permutation, and cycles appear by
    increasing minimal point.  ``pos[x]`` is the position of x inside its
    cycle, ``cycle_of[x]`` indexes ``cycle_start``/``cycle_len``.
    """

    __slots__ = ("n", "order", "pos", "cycle_of", "cycle_start", "cycle_len")

    def __init__(self, forward: np.ndarray):
        n = forward.shape[0]
        if n >= 2**31:
            raise ValueError("space too large for cycle charts")
        order = np.empty(n, dtype=np.int64)
        pos = np.empty(n, dtype=np.int64)
        cycle_of = np.empty(n, dtype=np.int64)
        starts: list[int] = []
        lens: list[int] = []
        visited = np.zeros(n, dtype=bool)
        cursor = 0
        cyc = 0
        for x0 in range(n):
            if visited[x0]:
                continue
            starts.append(cursor)
            x = x0
            length = 0
            while not visited[x]:
                visited[x] = True
                order[cursor] = x
                pos[x] = length
                cycle_of[x] = cyc
                cursor += 1
                length += 1
                x = int(forward[x])
            lens.append(length)
            cyc += 1
        self.n = n
        self.order = order
        self.pos = pos
        self.cycle_of = cycle_of
        self.cycle_start = np.array(starts, dtype=np.int64)
        self.cycle_len = np.array(lens, dtype=np.int64)

    @property
    def n_cycles(self) -> int:
        return len(self.cycle_len)

    def power_image(self, power: int, points: np.ndarray) -> np.ndarray:
        """g^power applied to an array of points."""
        c = self.cycle_of[points]
        st = self.cycle_start[c]
        ln = self.cycle_len[c]
        return self.order[st + (self.pos[points] + power) % ln]

    def consecutive_images(self, points: np.ndarray, lo: int, width: int) -> np.ndarray:
        """Images under g^j for j in [lo, lo+width), j-major.

        Output index j*len(points) + i holds g^(lo+j) applied to points[i].
        """
        c = self.cycle_of[points]
        st = self.cycle_start[c]
        ln = self.cycle_len[c]
        offs = (self.pos[points][None, :] + lo + np.arange(width, dtype=np.int64)[:, None]) % ln[None, :]
        return self.order[st[None, :] + offs].ravel()

    def prefix(self, values: np.ndarray) -> np.ndarray:
        """Cycle-ordered prefix sums of a value array, reusable across widths."""
        v_ord = values[self.order]
        pref = np.empty(self.n + 1, dtype=np.int64)
        pref[0] = 0
        np.cumsum(v_ord, out=pref[1:])
        return pref

    def window_from_prefix(self, pref: np.ndarray, lo: int, width: int,
                           points: np.ndarray | None = None) -> np.ndarray:
        """out[x] = sum of values[g^j x] for j in [lo, lo+width).

        ``pref`` comes from :meth:`prefix`; restricting to ``points`` costs
        proportionally less.  Widths beyond the cycle length wrap and count
        full laps.
        """
        if points is None:
            c = self.cycle_of
            pos = self.pos
        else:
            c = self.cycle_of[points]
            pos = self.pos[points]
        st = self.cycle_start[c]
        ln = self.cycle_len[c]
        p0 = (pos + lo) % ln
        laps = width // ln
        rem = width - laps * ln
        total = pref[st + ln] - pref[st]
        end = p0 + rem
        end_in = np.minimum(end, ln)
        seg_in = pref[st + end_in] - pref[st + p0]
        end_wrap = np.maximum(end - ln, 0)
        seg_wrap = (pref[st + ln] - pref[st + p0]) + (pref[st + end_wrap] - pref[st])
        seg = np.where(end <= ln, seg_in, seg_wrap)
        return laps * total + seg

    def window_sum(self, values: np.ndarray, lo: int, width: int) -> np.ndarray:
        """out[x] = sum of values[g^j x] for j in [lo, lo+width), all x."""
        return self.window_from_prefix(self.prefix(values), lo, width)


class FactorAction:
    """An action of one abelian factor: one commuting permutation per generator.

    Validated eagerly: generators must commute pairwise and torsion
    generators must have order dividing their modulus.
    """

    __slots__ = ("spec", "space", "gens", "charts", "_orbits", "_memo")

    def __init__(self, spec: AbelianGroupSpec, space: FiniteSpace,
                 gens: Sequence[Permutation]):
        gens = tuple(gens)
        if len(gens) != spec.num_generators:
            raise ValueError(
                f"spec needs {spec.num_generators} generators, got {len(gens)}"
            )
        for p in gens:
            if p.space != space:
                raise SpaceMismatch("generator on a different space")
        for i in range(len(gens)):
            for j in range(i + 1, len(gens)):
                pq = gens[i].forward[gens[j].forward]
                qp = gens[j].forward[gens[i].forward]
                if not np.array_equal(pq, qp):
                    raise ValueError(f"generators {i} and {j} do not commute")
        charts = tuple(CycleChart(p.forward) for p in gens)
        for k, c in enumerate(spec.torsion_moduli):
            chart = charts[spec.rank + k]
            if np.any(c % chart.cycle_len != 0):
                raise ValueError(
                    f"torsion generator {k} has a cycle not dividing modulus {c}"
                )
        self.spec = spec
        self.space = space
        self.gens = gens
        self.charts = charts
        self._orbits: OrbitDecomposition | None = None
        self._memo: dict = {}

    def element_image_points(self, g: AbelianElement, points: np.ndarray) -> np.ndarray:
        if g.spec != self.spec:
            raise SpecMismatch("element from a different group spec")
        out = np.asarray(points, dtype=np.int64)
        for d, power in enumerate(g.coords):
            if power:
                out = self.charts[d].power_image(power, out)
        return out

    def element_perm(self, g: AbelianElement) -> Permutation:
        return Permutation(
            self.space,
            self.element_image_points(g, np.arange(self.space.n_points, dtype=np.int64)),
        )

    def element_image_set(self, g: AbelianElement, s: PointSet) -> PointSet:
        idx = self.element_image_points(g, s.indices())
        mask = np.zeros(self.space.n_points, dtype=bool)
        mask[idx] = True
        return PointSet(self.space, mask)

    def window_counts(self, tile: Tile, values: np.ndarray) -> np.ndarray:
        """out[x] = sum over tile elements t of values[t . x]."""
        if tile.spec != self.spec:
            raise SpecMismatch("tile from a different group spec")
        v = np.asarray(values, dtype=np.int64)
        for d, (lo, side) in enumerate(zip(tile.dim_lows, tile.sides)):
            v = self.charts[d].window_sum(v, lo, side)
        return v

    def tile_images(self, tile: Tile, x: int) -> np.ndarray:
        """Images t . x for all tile elements t, in canonical tile order."""
        if tile.spec != self.spec:
            raise SpecMismatch("tile from a different group spec")
        arr = np.array([x], dtype=np.int64)
        lows = tile.dim_lows
        sides = tile.sides
        for d in range(len(sides) - 1, -1, -1):
            arr = self.charts[d].consecutive_images(arr, lows[d], sides[d])
        return arr

    def orbits(self) -> "OrbitDecomposition":
        if self._orbits is None:
            self._orbits = _decompose(self.space, self.charts)
        return self._orbits

    def conjugate(self, r: Permutation) -> "FactorAction":
        """The action with every generator conjugated by r."""
        return FactorAction(self.spec, self.space, tuple(p.conjugate(r) for p in self.gens))

    def __repr__(self) -> str:
        return f"FactorAction(spec={self.spec}, N={self.space.n_points})"


@dataclass
class OrbitDecomposition:
    """Orbits of a factor action: the finite ergodic decomposition.

    Orbits are listed by increasing minimal point; orbit_id maps each point
    to its orbit's index in that listing.
    """

    orbit_id: np.ndarray
    orbits: list[np.ndarray]
    sizes: np.ndarray
    factor_index: int | None = None

    @property
    def n_orbits(self) -> int:
        return len(self.orbits)

    @property
    def is_transitive(self) -> bool:
        return self.n_orbits == 1

    def orbit_of(self, x: int) -> np.ndarray:
        return self.orbits[int(self.orbit_id[x])]

    def min_orbit_size(self) -> int:
        return int(self.sizes.min())


def _canonical_orbits(space: FiniteSpace, roots: np.ndarray,
                      factor_index: int | None) -> OrbitDecomposition:
    uniq, orbit_id = np.unique(roots, return_inverse=True)
    sizes = np.bincount(orbit_id)
    sorter = np.argsort(orbit_id, kind="stable")
    bounds = np.cumsum(sizes)[:-1]
    orbits = np.split(sorter, bounds)
    return OrbitDecomposition(orbit_id.astype(np.int64), [o.astype(np.int64) for o in orbits],
                              sizes.astype(np.int64), factor_index)


def _decompose(space: FiniteSpace, charts: Sequence[CycleChart]) -> OrbitDecomposition:
    if len(charts) == 1:
        chart = charts[0]
        orbit_id = chart.cycle_of.copy()
        orbits = [chart.order[s:s + l] for s, l in zip(chart.cycle_start, chart.cycle_len)]
        return OrbitDecomposition(orbit_id, orbits, chart.cycle_len.copy(), None)
    # vectorized label propagation: spread the minimum label along every
    # generator's cycles until nothing changes; the fixpoint labels each
    # orbit by its minimal point
    label = np.arange(space.n_points, dtype=np.int64)
    changed = True
    while changed:
        changed = False
        for chart in charts:
            lab_ord = label[chart.order]
            mins = np.minimum.reduceat(lab_ord, chart.cycle_start)
            new = mins[chart.cycle_of]
            if np.any(new < label):
                np.minimum(label, new, out=label)
                changed = True
    return _canonical_orbits(space, label, None)


def orbit_decomposition(f: FactorAction, factor_index: int | None = None) -> OrbitDecomposition:
    """Orbits of the factor action (union of its generators' cycle graphs)."""
    od = f.orbits()
    if factor_index is None:
        return od
    return OrbitDecomposition(od.orbit_id, od.orbits, od.sizes, factor_index)


def act(f: FactorAction, g: AbelianElement, x: int) -> int:
    """g . x, applying generator powers (order irrelevant by commutativity)."""
    f.space.check_point(x)
    return int(f.element_image_points(g, np.array([x], dtype=np.int64))[0])


class FreeProductSystem:
    """A tuple of factor actions on one space: an action of the free product.

    No relation between distinct factors is imposed; a word acts by composing
    the factor actions of its letters right to left.
    """

    __slots__ = ("factors", "space")

    def __init__(self, factors: Sequence[FactorAction]):
        factors = tuple(factors)
        if not factors:
            raise ValueError("need at least one factor")
        space = factors[0].space
        for f in factors:
            if f.space != space:
                raise SpaceMismatch("factors live on different spaces")
        self.factors = factors
        self.space = space

    @property
    def k(self) -> int:
        return len(self.factors)

    def _check_word(self, w: FreeWord) -> None:
        for i, g in w.letters:
            if i >= len(self.factors):
                raise SpecMismatch(f"word references factor {i}, system has {len(self.factors)}")
            if g.spec != self.factors[i].spec:
                raise SpecMismatch(f"letter spec does not match factor {i}")

    def word_image_points(self, w: FreeWord, points: np.ndarray) -> np.ndarray:
        self._check_word(w)
        out = np.asarray(points, dtype=np.int64)
        for i, g in reversed(w.letters):
            out = self.factors[i].element_image_points(g, out)
        return out

    def word_perm(self, w: FreeWord) -> Permutation:
        return Permutation(
            self.space,
            self.word_image_points(w, np.arange(self.space.n_points, dtype=np.int64)),
        )

    def word_image_set(self, w: FreeWord, s: PointSet) -> PointSet:
        idx = self.word_image_points(w, s.indices())
        mask = np.zeros(self.space.n_points, dtype=bool)
        mask[idx] = True
        return PointSet(self.space, mask)

    def conjugate(self, r: Permutation) -> "FreeProductSystem":
        return FreeProductSystem(tuple(f.conjugate(r) for f in self.factors))

    def full_orbit_decomposition(self) -> OrbitDecomposition:
        """Orbits of the whole free-product action (all generators joined)."""
        charts = [c for f in self.factors for c in f.charts]
        return _decompose(self.space, charts)

    def __repr__(self) -> str:
        return f"FreeProductSystem(k={self.k}, N={self.space.n_points})"


def act_word(s: FreeProductSystem, w: FreeWord, x: int) -> int:
    s.space.check_point(x)
    return int(s.word_image_points(w, np.array([x], dtype=np.int64))[0])


def orbit_pushforward(d: OrbitDecomposition, l: Labeling, x: int) -> Distribution:
    """Empirical label distribution over the orbit of x."""
    orbit = d.orbit_of(x)
    counts = np.bincount(l.codes[orbit], minlength=len(l.alphabet))
    return Distribution.from_counts(l.alphabet, counts, len(orbit))


def average(f: FactorAction, window, indicator: PointSet, x: int) -> Fraction:
    """Fraction of window elements g with g . x in the indicator set.

    ``window`` is a Tile or an iterable of AbelianElement.
    """
    same_space(f, indicator)
    f.space.check_point(x)
    if isinstance(window, Tile):
        hits = indicator.mask[f.tile_images(window, x)]
        return Fraction(int(np.count_nonzero(hits)), window.size)
    elems = list(window)
    if not elems:
        raise ValueError("average over an empty element family")
    pts = np.array([x], dtype=np.int64)
    hits = sum(int(indicator.mask[f.element_image_points(g, pts)[0]]) for g in elems)
    return Fraction(hits, len(elems))


def orbit_average_function(f: FactorAction, indicator: PointSet):
    """Per-point fraction of the point's orbit lying in the indicator.

    This is the conditional mean of the indicator on the factor-invariant
    sets; it is constant on orbits.  Returned object indexes like an array of
    exact fractions without materializing N Fraction objects.
    """
    same_space(f, indicator)
    od = f.orbits()
    counts = np.bincount(od.orbit_id[indicator.mask], minlength=od.n_orbits)
    return OrbitAverages(od, counts.astype(np.int64))


class OrbitAverages:
    __slots__ = ("decomposition", "counts")

    def __init__(self, decomposition: OrbitDecomposition, counts: np.ndarray):
        self.decomposition = decomposition
        self.counts = counts

    def __getitem__(self, x: int) -> Fraction:
        oid = int(self.decomposition.orbit_id[x])
        return Fraction(int(self.counts[oid]), int(self.decomposition.sizes[oid]))

    def per_orbit(self) -> list[Fraction]:
        return [
            Fraction(int(c), int(s))
            for c, s in zip(self.counts, self.decomposition.sizes)
        ]


def weak_discrepancy(a: FreeProductSystem, b: FreeProductSystem,
                     words: Sequence[FreeWord], sets: Sequence[PointSet]) -> Fraction:
    """max over (word, set) of mass(w^a A symdiff w^b A)."""
    same_space(a, b)
    if not words or not sets:
        warnings.warn("weak_discrepancy over an empty word/set family is 0", stacklevel=2)
        return Fraction(0)
    worst = Fraction(0)
    for w in words:
        pa = a.word_perm(w)
        pb = b.word_perm(w)
        for s in sets:
            worst = max(worst, sym_diff_mass(pa.image(s), pb.image(s)))
    return worst


def freeness_defect(f, window) -> Fraction:
    """Mass of points fixed by some nontrivial window element.

    ``f`` is a FactorAction with a window of AbelianElement, or a
    FreeProductSystem with a window of FreeWord.
    """
    if isinstance(f, FactorAction):
        images = [(g, lambda g=g: f.element_image_points(g, _arange(f.space)))
                  for g in window]
        trivial = [g.is_identity() for g, _ in images]
    elif isinstance(f, FreeProductSystem):
        images = [(w, lambda w=w: f.word_image_points(w, _arange(f.space)))
                  for w in window]
        trivial = [w.is_identity() for w, _ in images]
    else:
        raise TypeError("freeness_defect expects a FactorAction or FreeProductSystem")
    if any(trivial):
        raise IdentityInWindow("window contains the identity")
    if not images:
        return Fraction(0)
    fixed = np.zeros(f.space.n_points, dtype=bool)
    ar = _arange(f.space)
    for _, img in images:
        fixed |= img() == ar
    return Fraction(int(np.count_nonzero(fixed)), f.space.n_points)


def _arange(space: FiniteSpace) -> np.ndarray:
    return np.arange(space.n_points, dtype=np.int64)
