"""Aligned-text tables and JSON payloads for the command-line front end.

Text tables mirror the usual journal layout (upper-triangular affinity
matrices with standard errors in parentheses, a sigma row of its own);
JSON carries full-precision arrays for machine use. Everything here is
deterministic: no timestamps, stable key order, repr-exact floats.
"""
from __future__ import annotations

import json
import math

import numpy as np

from .data import UNIPARTITE, EmpiricalCoupling
from .descriptives import DescriptiveReport
from .estimation import FitResult, NormalizedModel
from .inference import BootstrapResult, SymmetryTest
from .saliency import SaliencyDecomposition
from .schema import TraitSchema

ENTROPY_CONVENTION = "mutual-information"
COMPARABILITY_NOTE = (
    "Unit-surplus scaling assumes the average couple surplus is the same in "
    "every market; across markets it is a substantive restriction, not an "
    "innocuous normalization.")


def jsonable(obj):
    """Recursively convert numpy containers/scalars for json.dump."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return None if math.isnan(value) else value
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def dump_json(payload: dict) -> str:
    return json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n"


def _fmt(x, nd: int = 4) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{x:.{nd}f}"


def _grid(rows: list[list[str]], indent: str = "") -> str:
    if not rows:
        return ""
    width = max(len(r) for r in rows)
    rows = [list(r) + [""] * (width - len(r)) for r in rows]
    cols = [max(len(r[j]) for r in rows) for j in range(width)]
    lines = []
    for r in rows:
        cells = [r[j].ljust(cols[j]) for j in range(width)]
        lines.append((indent + "  ".join(cells)).rstrip())
    return "\n".join(lines)


def _axis_names(schema: TraitSchema) -> list[str]:
    return list(schema.continuous) + list(schema.categorical_names)


# ---------------------------------------------------------------------------
# affinity estimates
# ---------------------------------------------------------------------------

def affinity_payload(market: str, schema: TraitSchema,
                     normalized: NormalizedModel | None, fit: FitResult,
                     boot: BootstrapResult | None,
                     coupling: EmpiricalCoupling) -> dict:
    model = normalized.model if normalized is not None else fit.model
    k = schema.n_continuous
    c = schema.n_categoricals
    if boot is not None:
        se = boot.standard_errors
        a_se = se[:k * k].reshape(k, k)
        lam_se = se[k * k:k * k + c]
        boot_block = {"replicates": boot.n_requested,
                      "completed": boot.n_completed,
                      "failures": list(boot.failures),
                      "seed": boot.seed,
                      "normalized_scale": boot.normalized}
    else:
        a_se = np.full((k, k), np.nan)
        lam_se = np.full(c, np.nan)
        boot_block = None
    return {
        "market": market,
        "kind": fit.kind,
        "n_couples": coupling.n_couples,
        "traits": list(schema.continuous),
        "categoricals": list(schema.categorical_names),
        "affinity": np.asarray(model.cont),
        "affinity_se": a_se,
        "homogamy": np.asarray(model.homogamy),
        "homogamy_se": lam_se,
        "sigma": (normalized.sigma_report if normalized is not None else 1.0),
        "entropy_convention": ENTROPY_CONVENTION,
        "social_gain_raw": fit.matching.social_gain,
        "converged": fit.converged,
        "moment_residual_max": fit.residual_norm,
        "boundary_flags": list(fit.boundary_flags),
        "bootstrap": boot_block,
    }


def affinity_text(payload: dict) -> str:
    traits = payload["traits"]
    cats = payload["categoricals"]
    a = np.asarray(payload["affinity"])
    a_se = np.asarray(payload["affinity_se"])
    lam = np.asarray(payload["homogamy"])
    lam_se = np.asarray(payload["homogamy_se"])
    k = len(traits)
    names = traits + cats
    symmetric = payload["kind"] == UNIPARTITE

    lines = [f"Affinity matrix: {payload['market']} "
             f"({payload['n_couples']} couples, {payload['kind']})"]
    if not payload["converged"]:
        lines.append("*** NONCONVERGED: max moment residual "
                     f"{payload['moment_residual_max']:.3e} ***")
    rows = [[""] + names]
    for i, trait in enumerate(traits):
        start = i if symmetric else 0
        value_row = [trait] + [""] * (start if symmetric else 0)
        se_row = [""] + [""] * (start if symmetric else 0)
        for j in range(start, k):
            value_row.append(_fmt(a[i, j]))
            se_row.append(f"({_fmt(a_se[i, j])})" if np.isfinite(a_se[i, j])
                          else "")
        rows.append(value_row)
        if any(cell for cell in se_row[1:]):
            rows.append(se_row)
    for ci, cat in enumerate(cats):
        row = [cat] + [""] * k + [""] * ci + [_fmt(lam[ci])]
        rows.append(row)
        if np.isfinite(lam_se[ci]):
            rows.append([""] + [""] * k + [""] * ci + [f"({_fmt(lam_se[ci])})"])
    rows.append(["sigma", _fmt(payload["sigma"])])
    lines.append(_grid(rows))
    lines.append(f"entropy convention: {payload['entropy_convention']}")
    for flag in payload["boundary_flags"]:
        lines.append(f"note: {flag}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# saliency
# ---------------------------------------------------------------------------

def saliency_payload(market: str, schema: TraitSchema,
                     decomposition: SaliencyDecomposition,
                     coupling: EmpiricalCoupling) -> dict:
    order = decomposition.report_order
    total = decomposition.systematic_total
    return {
        "market": market,
        "n_couples": coupling.n_couples,
        "traits": list(schema.continuous),
        "categoricals": list(schema.categorical_names),
        "index_order": order,
        "eigenvalues": decomposition.eigenvalues,
        "loadings": decomposition.loadings,
        "right_loadings": decomposition.right_loadings,
        "index_shares": decomposition.index_shares,
        "categorical_shares": decomposition.categorical_shares,
        "systematic_total": total,
        "share_of_systematic": (decomposition.index_shares / total
                                if total else decomposition.index_shares),
        "categorical_share_of_systematic": (
            decomposition.categorical_shares / total if total
            else decomposition.categorical_shares),
    }


def saliency_text(payload: dict) -> str:
    traits = payload["traits"]
    cats = payload["categoricals"]
    order = list(np.asarray(payload["index_order"], dtype=int))
    left = np.asarray(payload["loadings"])
    right = (None if payload["right_loadings"] is None
             else np.asarray(payload["right_loadings"]))
    shares = np.asarray(payload["share_of_systematic"])
    cat_shares = np.asarray(payload["categorical_share_of_systematic"])

    header = [""]
    for rank, p in enumerate(order, start=1):
        if right is None:
            header.append(f"I{rank}")
        else:
            header.extend([f"I{rank}(head)", f"I{rank}(partner)"])
    header.extend(cats)
    rows = [header]
    for t, trait in enumerate(traits):
        row = [trait]
        for p in order:
            row.append(_fmt(left[p, t], 3))
            if right is not None:
                row.append(_fmt(right[p, t], 3))
        rows.append(row)
    share_row = ["share of systematic surplus"]
    for p in order:
        cell = f"{100.0 * shares[p]:.1f}%"
        share_row.append(cell)
        if right is not None:
            share_row.append("")
    share_row.extend(f"{100.0 * s:.1f}%" for s in cat_shares)
    rows.append(share_row)

    lines = [f"Sorting indices: {payload['market']} "
             f"({payload['n_couples']} couples)",
             _grid(rows),
             f"systematic surplus total: {payload['systematic_total']:.6f}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

def compare_payload(entries: list[dict]) -> dict:
    return {"markets": entries, "note": COMPARABILITY_NOTE,
            "entropy_convention": ENTROPY_CONVENTION}


def compare_text(payload: dict) -> str:
    entries = payload["markets"]
    traits = entries[0]["traits"]
    cats = entries[0]["categoricals"]
    rows = [[""] + [e["market"] for e in entries]]
    for i, trait in enumerate(traits):
        rows.append([trait] + [_fmt(np.asarray(e["affinity"])[i, i])
                               for e in entries])
        se_cells = []
        for e in entries:
            se = np.asarray(e["affinity_se"])[i, i]
            se_cells.append(f"({_fmt(se)})" if np.isfinite(se) else "")
        if any(se_cells):
            rows.append([""] + se_cells)
    for ci, cat in enumerate(cats):
        rows.append([cat] + [_fmt(np.asarray(e["homogamy"])[ci])
                             for e in entries])
        se_cells = []
        for e in entries:
            se = np.asarray(e["homogamy_se"])[ci]
            se_cells.append(f"({_fmt(se)})" if np.isfinite(se) else "")
        if any(se_cells):
            rows.append([""] + se_cells)
    rows.append(["sigma"] + [_fmt(e["sigma"]) for e in entries])
    rows.append(["couples"] + [str(e["n_couples"]) for e in entries])
    lines = ["Cross-market summary (diagonal affinity coefficients)",
             _grid(rows), "note: " + COMPARABILITY_NOTE]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# descriptives
# ---------------------------------------------------------------------------

def descriptives_payload(market: str, schema: TraitSchema,
                         report: DescriptiveReport) -> dict:
    homogamy = {}
    for name, table in report.homogamy.items():
        homogamy[name] = {
            "row_labels": list(table.row_labels),
            "col_labels": list(table.col_labels),
            "rates": table.rates,
            "observed_counts": table.observed_counts,
            "observed_share": table.observed_share,
            "expected_share": table.expected_share,
            "unordered": table.unordered,
        }
    return {"market": market, "counts": report.counts,
            "means": report.means, "correlations": report.correlations,
            "homogamy": homogamy}


def descriptives_text(payload: dict) -> str:
    lines = [f"Descriptives: {payload['market']} "
             f"({payload['counts']['couples']} couples)"]
    means = payload["means"]
    traits = sorted(next(iter(means.values())).keys()) if means else []
    rows = [["mean"] + traits]
    for position in means:
        rows.append([position] + [_fmt(means[position][t]) for t in traits])
    lines += ["", "Sample means (raw units)", _grid(rows)]

    rows = [["trait", "partner correlation"]]
    for trait, value in payload["correlations"].items():
        rows.append([trait, _fmt(value)])
    lines += ["", "Partner Pearson correlations", _grid(rows)]

    for name, table in payload["homogamy"].items():
        rates = np.asarray(table["rates"], dtype=np.float64)
        counts = np.asarray(table["observed_counts"])
        labels_r = table["row_labels"]
        labels_c = table["col_labels"]
        rows = [[""] + list(labels_c)]
        for i, lab in enumerate(labels_r):
            cells = []
            for j in range(len(labels_c)):
                if table["unordered"] and j < i:
                    cells.append("")
                else:
                    cells.append(f"{_fmt(rates[i, j], 2)} [{counts[i, j]}]")
            rows.append([lab] + cells)
        lines += ["", f"Homogamy rates for {name} "
                      "(observed / random matching, [couple counts])",
                  _grid(rows)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# symmetry tests
# ---------------------------------------------------------------------------

def symmetry_payload(market: str, schema: TraitSchema, fit: FitResult,
                     test: SymmetryTest, role: str) -> dict:
    return {"market": market, "role_scheme": role,
            "traits": list(schema.continuous),
            "affinity": np.asarray(fit.model.cont),
            "pairs": [list(p) for p in test.pairs],
            "statistics": test.statistics,
            "p_values": test.p_values,
            "diagnostics": list(test.diagnostics),
            "significant_at_5pct": [
                {"pair": list(pair), "statistic": stat, "p_value": p}
                for pair, stat, p in test.significant(0.05)]}


def symmetry_text(payload: dict) -> str:
    traits = payload["traits"]
    rows = [["pair", "difference", "statistic", "p-value"]]
    a = np.asarray(payload["affinity"])
    stats = np.asarray(payload["statistics"], dtype=np.float64)
    pvals = np.asarray(payload["p_values"], dtype=np.float64)
    for (pair, stat, p) in zip(payload["pairs"], stats, pvals):
        i, j = pair
        if i > j:
            continue  # mirrored pair carries the same information
        rows.append([f"{traits[i]}/{traits[j]}",
                     _fmt(a[i, j] - a[j, i]), _fmt(stat, 3), _fmt(p, 4)])
    lines = [f"Role-symmetry tests: {payload['market']} "
             f"(roles: {payload['role_scheme']})", _grid(rows)]
    sig = payload["significant_at_5pct"]
    if sig:
        for entry in sig:
            i, j = entry["pair"]
            if i > j:
                continue
            lines.append(f"asymmetric at 5%: {traits[i]}/{traits[j]} "
                         f"(p = {entry['p_value']:.4g})")
    else:
        lines.append("no pair rejects symmetry at the 5% level")
    for note in payload["diagnostics"]:
        lines.append("note: " + note)
    return "\n".join(lines) + "\n"
