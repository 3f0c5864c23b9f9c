"""Run orchestration and report emission.

A run builds the two systems from a config, executes the rewiring pipeline,
and writes a machine-readable JSON report plus a CSV summary of every
certified bound.  Reports are canonical: sorted keys, exact rationals as
num/den pairs (float renderings are annotations only), no timestamps, so the
same config and seed produce byte-identical files.

The JSON report embeds the full witness (conjugator, rewirings, and rewired
generator arrays), and the reported final discrepancy is recomputed
independently from those serialized arrays before the report is written.
"""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .actions import (
    FactorAction,
    FreeProductSystem,
    freeness_defect,
    weak_discrepancy,
)
from .config import RunConfig, rational_to_json
from .errors import ConfigError, VerificationFailed
from .generate import default_window, generate_system, make_target_set
from .groups import FreeWord
from .rewiring import (
    PipelineResult,
    make_factor_ergodic,
    oe_approximate,
    verify_orbit_equivalence,
)
from .space import FiniteSpace, Permutation, PointSet

REPORT_SCHEMA = "orbitrewire-report/1"


def _window_elements(system: FreeProductSystem, window: list[list[list[int]]]):
    out = []
    for i, per_factor in enumerate(window):
        spec = system.factors[i].spec
        elems = []
        for coords in per_factor:
            if len(coords) != spec.num_generators:
                raise ConfigError(
                    f"window element {coords} has wrong arity for factor {i}"
                )
            g = spec.element(coords)
            if g.is_identity():
                raise ConfigError(f"window of factor {i} contains the identity")
            elems.append(g)
        out.append(elems)
    return out


def execute(config: RunConfig) -> tuple[PipelineResult, dict]:
    """Run the pipeline for a config; returns the result and the report dict."""
    space = FiniteSpace(config.space_size)
    alpha = generate_system(space, config.alpha)
    beta = generate_system(space, config.beta)
    if config.ergodize_budget is not None:
        beta = FreeProductSystem(
            tuple(
                f if f.orbits().is_transitive else make_factor_ergodic(f, config.ergodize_budget)
                for f in beta.factors
            )
        )
    window = _window_elements(alpha, config.window)
    sets = [make_target_set(space, d) for d in config.target_sets]
    freeness = [
        rational_to_json(freeness_defect(f, default_window(f.spec)))
        for f in alpha.factors
    ]
    result = oe_approximate(
        alpha,
        beta,
        window,
        config.epsilon,
        sets,
        config.seed,
        eps_prime_override=config.eps_prime_override,
        tile_cap=config.tile_cap,
        max_retries=config.max_retries,
    )
    report = build_report(config, result, sets, freeness)
    if not _verify_report_payload(report):
        raise VerificationFailed(
            "serialized witness does not reproduce the reported discrepancy"
        )
    return result, report


def build_report(config: RunConfig, result: PipelineResult,
                 sets: list[PointSet], freeness: list[dict]) -> dict:
    rep = result.report
    wit = result.witness
    factors = []
    for fr in rep.factors:
        factors.append({
            "factor": fr.factor_index,
            "tile_side": fr.tile_side,
            "tile_size": fr.tile_size,
            "good_mass_rewired": rational_to_json(fr.good_mass_alpha),
            "good_mass_target": rational_to_json(fr.good_mass_beta),
            "avoid_mass": rational_to_json(fr.avoid_mass),
            "coverage_rewired": rational_to_json(fr.coverage_alpha),
            "coverage_target": rational_to_json(fr.coverage_beta),
            "base_size": fr.base_size,
            "column_count": fr.column_count,
            "column_defects": list(fr.column_defects),
            "max_column_defect": fr.max_defect,
            "defect_bound": rational_to_json(fr.defect_bound),
            "budget": [
                {
                    "element": list(eb.element),
                    "l0": rational_to_json(eb.l0),
                    "l1": rational_to_json(eb.l1),
                    "l2": rational_to_json(eb.l2),
                    "bound_l0": rational_to_json(eb.bound_l0),
                    "bound_l1": rational_to_json(eb.bound_l1),
                    "bound_l2": rational_to_json(eb.bound_l2),
                    "discrepancies": [rational_to_json(d) for d in eb.discrepancies],
                    "residual_empty": eb.residual_empty,
                }
                for eb in fr.budget.per_element
            ],
        })
    return {
        "schema": REPORT_SCHEMA,
        "config": config.to_dict(),
        "alphabet_size": rep.alphabet_size,
        "cell_masses": [rational_to_json(m) for m in rep.cell_masses],
        "eps": rational_to_json(rep.eps),
        "eps_prime": rational_to_json(rep.eps_prime),
        "min_space_estimate": rep.min_space_estimate,
        "good_partition": {
            "retries": rep.good_partition_retries,
            "bad_masses": [rational_to_json(m) for m in rep.good_partition_bad_masses],
            "deviation_histograms": [
                [[rational_to_json(dev), rational_to_json(mass)] for dev, mass in hist]
                for hist in rep.good_partition_histograms
            ],
        },
        "alpha_freeness_defects": freeness,
        "factors": factors,
        "final": {
            "weak_discrepancy": rational_to_json(rep.final_discrepancy),
            "epsilon_ok": rep.final_discrepancy < rep.eps,
            "orbit_equivalence": rep.orbit_check,
        },
        "witness": {
            "conjugator": [int(v) for v in wit.conjugator.forward],
            "rewirings": [[int(v) for v in s.forward] for s in wit.rewirings],
            "gamma_generators": [
                [[int(v) for v in p.forward] for p in f.gens]
                for f in result.gamma.factors
            ],
            "target_sets": [s.to_sorted_list() for s in sets],
        },
    }


def _systems_from_report(report: dict):
    config = RunConfig.from_dict(report["config"])
    space = FiniteSpace(config.space_size)
    alpha = generate_system(space, config.alpha)
    beta = generate_system(space, config.beta)
    if config.ergodize_budget is not None:
        beta = FreeProductSystem(
            tuple(
                f if f.orbits().is_transitive else make_factor_ergodic(f, config.ergodize_budget)
                for f in beta.factors
            )
        )
    wit = report["witness"]
    gamma_factors = []
    for i, gen_arrays in enumerate(wit["gamma_generators"]):
        spec = alpha.factors[i].spec
        gens = tuple(Permutation(space, np.asarray(a, dtype=np.int64)) for a in gen_arrays)
        gamma_factors.append(FactorAction(spec, space, gens))
    gamma = FreeProductSystem(tuple(gamma_factors))
    r_perm = Permutation(space, np.asarray(wit["conjugator"], dtype=np.int64))
    sets = [PointSet.from_indices(space, idx) for idx in wit["target_sets"]]
    window = _window_elements(alpha, config.window)
    words = [FreeWord.letter(i, g) for i, elems in enumerate(window) for g in elems]
    return config, alpha, beta, gamma, r_perm, sets, words


def _verify_report_payload(report: dict) -> bool:
    config, alpha, beta, gamma, r_perm, sets, words = _systems_from_report(report)
    final = weak_discrepancy(gamma, beta, words, sets)
    reported = Fraction(report["final"]["weak_discrepancy"]["num"],
                        report["final"]["weak_discrepancy"]["den"])
    if final != reported:
        return False
    if not final < config.epsilon:
        return False
    ok, _ = verify_orbit_equivalence(alpha, gamma, r_perm)
    return ok


def verify_report_file(path: str | Path) -> bool:
    """Re-check a serialized run: discrepancy and orbit equivalence."""
    with open(path, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    if report.get("schema") != REPORT_SCHEMA:
        raise ConfigError(f"unknown report schema: {report.get('schema')!r}")
    return _verify_report_payload(report)


def report_json_bytes(report: dict) -> bytes:
    return json.dumps(report, sort_keys=True, separators=(",", ":")).encode() + b"\n"


def summary_rows(report: dict) -> list[list[str]]:
    """Flat rows (component, factor, element, set, value, bound, ok) for CSV."""
    rows = [["component", "factor", "element", "set", "value", "bound", "ok"]]

    def rat(d):
        return f"{d['num']}/{d['den']}"

    rows.append(["eps_prime", "", "", "", rat(report["eps_prime"]), "", ""])
    for i, m in enumerate(report["good_partition"]["bad_masses"]):
        rows.append(["good_partition_bad_mass", str(i), "", "",
                     rat(m), rat(report["eps_prime"]), str(
                         Fraction(m["num"], m["den"]) < Fraction(report["eps_prime"]["num"],
                                                                 report["eps_prime"]["den"]))])
    for fr in report["factors"]:
        fi = str(fr["factor"])
        rows.append(["tile_size", fi, "", "", str(fr["tile_size"]), "", ""])
        rows.append(["base_size", fi, "", "", str(fr["base_size"]), "", ""])
        rows.append(["max_column_defect", fi, "", "", str(fr["max_column_defect"]),
                     rat(fr["defect_bound"]),
                     str(Fraction(fr["max_column_defect"]) < Fraction(
                         fr["defect_bound"]["num"], fr["defect_bound"]["den"]))])
        for eb in fr["budget"]:
            el = str(tuple(eb["element"]))
            for name in ("l0", "l1", "l2"):
                val = Fraction(eb[name]["num"], eb[name]["den"])
                bnd = Fraction(eb["bound_" + name]["num"], eb["bound_" + name]["den"])
                rows.append([name, fi, el, "", rat(eb[name]), rat(eb["bound_" + name]),
                             str(val < bnd or (name == "l1" and val == 0))])
            for j, d in enumerate(eb["discrepancies"]):
                rows.append(["element_discrepancy", fi, el, str(j), rat(d), "", ""])
            rows.append(["residual_empty", fi, el, "", str(eb["residual_empty"]),
                         "True", str(eb["residual_empty"])])
    fin = report["final"]
    rows.append(["final_weak_discrepancy", "", "", "", rat(fin["weak_discrepancy"]),
                 rat(report["eps"]), str(fin["epsilon_ok"])])
    rows.append(["orbit_equivalence", "", "", "", str(fin["orbit_equivalence"]),
                 "True", str(fin["orbit_equivalence"])])
    return rows


def summary_csv_bytes(report: dict) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(summary_rows(report))
    return buf.getvalue().encode()


def write_report_files(report: dict, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    csv_path = out / "summary.csv"
    json_path.write_bytes(report_json_bytes(report))
    csv_path.write_bytes(summary_csv_bytes(report))
    return json_path, csv_path


def render_summary(report: dict) -> str:
    """Short human-readable digest of a report."""
    lines = []
    fin = report["final"]
    lines.append(f"space size      : {report['config']['space_size']}")
    lines.append(f"alphabet size   : {report['alphabet_size']}")
    lines.append(f"eps / eps'      : {report['eps']['num']}/{report['eps']['den']}"
                 f" / {report['eps_prime']['num']}/{report['eps_prime']['den']}")
    lines.append(f"good partition  : retries={report['good_partition']['retries']}")
    for fr in report["factors"]:
        lines.append(
            f"factor {fr['factor']}: tile side {fr['tile_side']} (|T|={fr['tile_size']}), "
            f"base {fr['base_size']}, columns {fr['column_count']}, "
            f"max defect {fr['max_column_defect']}"
        )
    wd = fin["weak_discrepancy"]
    lines.append(f"final discrepancy: {wd['num']}/{wd['den']} (~{wd['approx']:.6g})"
                 f" < eps: {fin['epsilon_ok']}")
    lines.append(f"orbit equivalence: {fin['orbit_equivalence']}")
    return "\n".join(lines)
