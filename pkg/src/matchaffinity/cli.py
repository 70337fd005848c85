"""Batch command-line front end.

Subcommands wire ingestion, estimation, normalization, saliency, inference
and simulation into file-based runs driven by a versioned JSON config. All
randomness flows from one root seed; identical config, seed and thread
count produce byte-identical outputs. Exit codes: 0 success, 2 data or
config error, 3 non-convergence (reports are still written with a banner).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import descriptives, estimation, inference, reports, saliency, synthesis
from .data import BIPARTITE, UNIPARTITE, assign_roles, coupling_from, ingest
from .estimation import FitOptions
from .exceptions import MatchAffinityError, DataError
from .schema import CategoricalDef, TraitSchema

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NONCONVERGED = 3

THREADS_ENV = "MATCHAFFINITY_THREADS"


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict) or cfg.get("version") != 1:
        raise DataError("config must be a JSON object with \"version\": 1")
    cfg["_dir"] = str(Path(path).resolve().parent)
    return cfg


def _schema_from(cfg: dict) -> TraitSchema:
    try:
        block = cfg["schema"]
        cats = tuple(CategoricalDef(c["name"], tuple(c["labels"]))
                     for c in block.get("categoricals", ()))
        return TraitSchema(tuple(block["continuous"]), cats)
    except (KeyError, TypeError) as exc:
        raise DataError(f"config schema block is malformed: {exc}")


def _markets_from(cfg: dict) -> list[dict]:
    markets = cfg.get("markets")
    if not markets:
        raise DataError("config declares no markets")
    names = [m.get("name") for m in markets]
    if len(set(names)) != len(names) or None in names:
        raise DataError("markets need distinct names")
    out = []
    for m in markets:
        kind = m.get("kind", UNIPARTITE)
        if kind not in (UNIPARTITE, BIPARTITE):
            raise DataError(f"market '{m['name']}': unknown kind '{kind}'")
        path = Path(m.get("path", ""))
        if not path.is_absolute():
            path = Path(cfg["_dir"]) / path
        if not path.exists():
            raise DataError(f"market '{m['name']}': file not found: {path}")
        out.append({"name": m["name"], "path": str(path), "kind": kind})
    return out


def _fit_options(cfg: dict) -> FitOptions:
    block = cfg.get("fit", {})
    return FitOptions(
        outer_tolerance=float(block.get("outer_tolerance", 1e-6)),
        max_outer_iterations=int(block.get("max_outer_iterations", 400)),
        inner_tolerance=float(block.get("inner_tolerance", 1e-10)),
        inner_max_sweeps=int(block.get("inner_max_sweeps", 10_000)))


def _ingest_kwargs(cfg: dict) -> dict:
    kwargs = {}
    if cfg.get("fill_values"):
        kwargs["fill_values"] = cfg["fill_values"]
    if cfg.get("filters"):
        kwargs["trait_bounds"] = {t: tuple(v)
                                  for t, v in cfg["filters"].items()}
    if cfg.get("derived"):
        kwargs["derived"] = cfg["derived"]
    return kwargs


def _market_seed(root_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([root_seed, index])
               .generate_state(1, np.uint64)[0] % (2 ** 62))


def _write(out_dir: Path, name: str, text: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text, encoding="utf-8")


def _emit_diagnostics(market: str, diagnostics) -> None:
    for line in diagnostics:
        print(f"[{market}] {line}", file=sys.stderr)


def _estimate_market(market: dict, schema: TraitSchema, cfg: dict,
                     seed: int, threads: int, index: int):
    """Shared ingest -> fit -> normalize -> bootstrap pipeline."""
    sample = ingest(market["path"], schema, market["kind"],
                    **_ingest_kwargs(cfg))
    _emit_diagnostics(market["name"], sample.diagnostics)
    coupling = coupling_from(sample)
    opts = _fit_options(cfg)
    if market["kind"] == BIPARTITE:
        fit_result = estimation.fit_bipartite(coupling, schema, opts)
    else:
        fit_result = estimation.fit(coupling, schema, opts)
    normalized = estimation.normalize(fit_result, coupling)
    boot = None
    if fit_result.converged:
        n_reps = int(cfg.get("bootstrap", {}).get("replicates", 200))
        boot = inference.bootstrap(sample, opts, n_reps,
                                   _market_seed(seed, index),
                                   normalized=True, threads=threads,
                                   point_fit=fit_result)
    return sample, coupling, fit_result, normalized, boot


def cmd_estimate(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    schema = _schema_from(cfg)
    status = EXIT_OK
    for index, market in enumerate(_markets_from(cfg)):
        _, coupling, fit_result, normalized, boot = _estimate_market(
            market, schema, cfg, seed, threads, index)
        payload = reports.affinity_payload(market["name"], schema, normalized,
                                           fit_result, boot, coupling)
        _write(out_dir, f"estimate_{market['name']}.json",
               reports.dump_json(payload))
        _write(out_dir, f"estimate_{market['name']}.txt",
               reports.affinity_text(payload))
        if not fit_result.converged:
            status = EXIT_NONCONVERGED
    return status


def cmd_saliency(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    schema = _schema_from(cfg)
    status = EXIT_OK
    for index, market in enumerate(_markets_from(cfg)):
        sample = ingest(market["path"], schema, market["kind"],
                        **_ingest_kwargs(cfg))
        coupling = coupling_from(sample)
        opts = _fit_options(cfg)
        if market["kind"] == BIPARTITE:
            fit_result = estimation.fit_bipartite(coupling, schema, opts)
            decomposition = saliency.decompose_bipartite(fit_result, coupling)
        else:
            fit_result = estimation.fit(coupling, schema, opts)
            normalized = estimation.normalize(fit_result, coupling)
            decomposition = saliency.decompose(normalized, coupling)
        payload = reports.saliency_payload(market["name"], schema,
                                           decomposition, coupling)
        _write(out_dir, f"saliency_{market['name']}.json",
               reports.dump_json(payload))
        _write(out_dir, f"saliency_{market['name']}.txt",
               reports.saliency_text(payload))
        if not fit_result.converged:
            status = EXIT_NONCONVERGED
    return status


def cmd_simulate(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    name = cfg.get("name", "scenario")
    if cfg.get("preset") == "pooled":
        spec = synthesis.pooled_market_preset(seed)
    elif "scenario" in cfg:
        payload = dict(cfg["scenario"])
        payload.setdefault("version", 1)
        if cfg.get("_seed_override") or "seed" not in payload:
            payload["seed"] = seed
        spec = synthesis.scenario_from_dict(payload)
    else:
        raise DataError("simulate needs a \"scenario\" block or "
                        "\"preset\": \"pooled\" in the config")
    frame = synthesis.generate_frame(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_dir / f"sample_{name}.csv", index=False)
    truth = synthesis.scenario_truth(spec)
    if cfg.get("preset") == "pooled":
        truth["note"] = ("pooled-market preset; parameter magnitudes are "
                         "demonstrative only")
    _write(out_dir, f"truth_{name}.json", reports.dump_json(truth))
    return EXIT_OK


def cmd_compare(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    schema = _schema_from(cfg)
    markets = _markets_from(cfg)
    if len(markets) < 2:
        raise DataError("compare needs at least 2 markets")
    status = EXIT_OK
    entries = []
    for index, market in enumerate(markets):
        _, coupling, fit_result, normalized, boot = _estimate_market(
            market, schema, cfg, seed, threads, index)
        entries.append(reports.affinity_payload(
            market["name"], schema, normalized, fit_result, boot, coupling))
        if not fit_result.converged:
            status = EXIT_NONCONVERGED
    payload = reports.compare_payload(entries)
    _write(out_dir, "compare.json", reports.dump_json(payload))
    _write(out_dir, "compare.txt", reports.compare_text(payload))
    return status


def cmd_descriptives(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    schema = _schema_from(cfg)
    for market in _markets_from(cfg):
        sample = ingest(market["path"], schema, market["kind"],
                        **_ingest_kwargs(cfg))
        _emit_diagnostics(market["name"], sample.diagnostics)
        report = descriptives.describe(sample)
        payload = reports.descriptives_payload(market["name"], schema, report)
        _write(out_dir, f"descriptives_{market['name']}.json",
               reports.dump_json(payload))
        _write(out_dir, f"descriptives_{market['name']}.txt",
               reports.descriptives_text(payload))
    return EXIT_OK


def _role_of(cfg: dict) -> tuple[str, str | None]:
    role = cfg.get("role", {"scheme": "householder"})
    scheme = role.get("scheme", "householder")
    if scheme == "householder":
        return "householder", None
    if scheme == "by_trait":
        trait = role.get("trait")
        if not trait:
            raise DataError("role scheme \"by_trait\" needs a \"trait\"")
        return f"by_trait:{trait}", trait
    raise DataError(f"unknown role scheme '{scheme}'")


def cmd_test_symmetry(cfg: dict, out_dir: Path, seed: int, threads: int) -> int:
    schema = _schema_from(cfg)
    opts = _fit_options(cfg)
    status = EXIT_OK
    role_name, role_trait = _role_of(cfg)
    for index, market in enumerate(_markets_from(cfg)):
        sample = ingest(market["path"], schema, market["kind"],
                        **_ingest_kwargs(cfg))
        if sample.kind == UNIPARTITE:
            sample = assign_roles(sample, by=role_trait)
        _emit_diagnostics(market["name"], sample.diagnostics)
        coupling = coupling_from(sample)
        fit_result = estimation.fit_bipartite(coupling, schema, opts)
        n_reps = int(cfg.get("bootstrap", {}).get("replicates", 200))
        boot = inference.bootstrap(sample, opts, n_reps,
                                   _market_seed(seed, index),
                                   normalized=False, threads=threads,
                                   point_fit=fit_result)
        test = inference.test_symmetry(fit_result, boot)
        payload = reports.symmetry_payload(market["name"], schema, fit_result,
                                           test, role_name)
        _write(out_dir, f"symmetry_{market['name']}.json",
               reports.dump_json(payload))
        _write(out_dir, f"symmetry_{market['name']}.txt",
               reports.symmetry_text(payload))
        if not fit_result.converged:
            status = EXIT_NONCONVERGED
    return status


COMMANDS = {
    "estimate": cmd_estimate,
    "saliency": cmd_saliency,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "descriptives": cmd_descriptives,
    "test-symmetry": cmd_test_symmetry,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matchaffinity",
        description="Affinity-matrix estimation for matching markets")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (env {THREADS_ENV})")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if args.seed is not None:
            cfg["_seed_override"] = True
        if args.threads is not None:
            threads = args.threads
        elif os.environ.get(THREADS_ENV):
            threads = int(os.environ[THREADS_ENV])
        else:
            threads = int(cfg.get("threads", 1))
        out_dir = Path(args.out if args.out is not None
                       else cfg.get("out", "."))
        return COMMANDS[args.command](cfg, out_dir, seed, threads)
    except MatchAffinityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
