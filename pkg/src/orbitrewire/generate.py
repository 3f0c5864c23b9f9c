"""Seeded instance templates: factor actions, systems, and target sets.

Templates are deterministic given their parameters; the only randomness in a
run lives in the good-partition stage, so failures bisect cleanly.
"""

from __future__ import annotations

import numpy as np

from .actions import FactorAction, FreeProductSystem
from .errors import ConfigError
from .groups import AbelianElement, AbelianGroupSpec
from .space import FiniteSpace, Permutation, PointSet


def _rotation(space: FiniteSpace, step: int) -> FactorAction:
    n = space.n_points
    forward = (np.arange(n, dtype=np.int64) + step) % n
    return FactorAction(AbelianGroupSpec(1), space, (Permutation(space, forward),))


def _grid_shift(space: FiniteSpace, dims: list[int], steps: list[int] | None) -> FactorAction:
    n = space.n_points
    total = 1
    for m in dims:
        total *= m
    if total != n:
        raise ConfigError(f"grid dims {dims} do not multiply to space size {n}")
    if steps is None:
        steps = [1] * len(dims)
    if len(steps) != len(dims):
        raise ConfigError("grid template needs one step per dimension")
    idx = np.arange(n, dtype=np.int64)
    coords = []
    rem = idx
    for m in reversed(dims):
        coords.append(rem % m)
        rem = rem // m
    coords.reverse()
    gens = []
    for d, (m, st) in enumerate(zip(dims, steps)):
        shifted = list(coords)
        shifted[d] = (coords[d] + st) % m
        flat = np.zeros(n, dtype=np.int64)
        for c, mm in zip(shifted, dims):
            flat = flat * mm + c
        gens.append(Permutation(space, flat))
    return FactorAction(AbelianGroupSpec(len(dims)), space, tuple(gens))


def _product_cycle(space: FiniteSpace, dims: list[int], steps: list[int] | None) -> FactorAction:
    """One generator shifting every coordinate of a product of cycles at once."""
    n = space.n_points
    total = 1
    for m in dims:
        total *= m
    if total != n:
        raise ConfigError(f"product dims {dims} do not multiply to space size {n}")
    if steps is None:
        steps = [1] * len(dims)
    idx = np.arange(n, dtype=np.int64)
    coords = []
    rem = idx
    for m in reversed(dims):
        coords.append(rem % m)
        rem = rem // m
    coords.reverse()
    flat = np.zeros(n, dtype=np.int64)
    for c, m, st in zip(coords, dims, steps):
        flat = flat * m + (c + st) % m
    return FactorAction(AbelianGroupSpec(1), space, (Permutation(space, flat),))


def _explicit(space: FiniteSpace, rank: int, torsion: list[int],
              arrays: list[list[int]]) -> FactorAction:
    spec = AbelianGroupSpec(rank, tuple(torsion))
    gens = tuple(Permutation(space, np.asarray(a, dtype=np.int64)) for a in arrays)
    return FactorAction(spec, space, gens)


def generate_factor(space: FiniteSpace, template: dict) -> FactorAction:
    """Build one factor action from a template description."""
    if not isinstance(template, dict) or "name" not in template:
        raise ConfigError(f"factor template must be a dict with a name: {template!r}")
    name = template["name"]
    try:
        if name == "rotation":
            return _rotation(space, int(template["step"]))
        if name == "grid_shift":
            return _grid_shift(space, [int(m) for m in template["dims"]],
                               [int(s) for s in template["steps"]] if "steps" in template else None)
        if name == "product_cycle":
            return _product_cycle(space, [int(m) for m in template["dims"]],
                                  [int(s) for s in template["steps"]] if "steps" in template else None)
        if name == "explicit":
            return _explicit(space, int(template.get("rank", 0)),
                             list(template.get("torsion", [])), template["arrays"])
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid {name!r} template: {exc}") from exc
    raise ConfigError(f"unknown factor template {name!r}")


def generate_system(space: FiniteSpace, templates: list[dict]) -> FreeProductSystem:
    if not templates:
        raise ConfigError("system needs at least one factor template")
    return FreeProductSystem(tuple(generate_factor(space, t) for t in templates))


def default_window(spec: AbelianGroupSpec, radius: int = 2) -> list[AbelianElement]:
    """Small nontrivial elements used for freeness diagnostics."""
    elems = []
    for d in range(spec.num_generators):
        for j in range(-radius, radius + 1):
            if j == 0:
                continue
            coords = [0] * spec.num_generators
            coords[d] = j
            g = spec.element(coords)
            if not g.is_identity():
                elems.append(g)
    # dedupe (torsion coordinates may collapse |j| values)
    seen = {}
    for g in elems:
        seen.setdefault(g.coords, g)
    return [seen[c] for c in sorted(seen)]


def make_target_set(space: FiniteSpace, desc: dict) -> PointSet:
    """Target sets: intervals, residue classes, or explicit index lists."""
    if not isinstance(desc, dict) or "type" not in desc:
        raise ConfigError(f"target set must be a dict with a type: {desc!r}")
    kind = desc["type"]
    n = space.n_points
    try:
        if kind == "interval":
            start = int(desc["start"]) % n
            length = int(desc["length"])
            if not 0 <= length <= n:
                raise ConfigError(f"interval length {length} out of range")
            idx = (start + np.arange(length, dtype=np.int64)) % n
            return PointSet.from_indices(space, idx)
        if kind == "residue":
            mod = int(desc["modulus"])
            if mod < 1:
                raise ConfigError("modulus must be positive")
            residues = sorted({int(r) % mod for r in desc["residues"]})
            mask = np.isin(np.arange(n, dtype=np.int64) % mod, residues)
            return PointSet(space, mask)
        if kind == "indices":
            return PointSet.from_indices(space, [int(i) for i in desc["members"]])
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid {kind!r} target set: {exc}") from exc
    raise ConfigError(f"unknown target set type {kind!r}")
