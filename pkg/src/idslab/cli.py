"""Command-line front end: dataset generation, runs, sweeps, analysis.

Everything is driven by a JSON experiment config (schema-validated;
unknown keys are rejected) plus a handful of override flags. Primary
outputs are byte-stable for a fixed config and seed; wall-clock facts go
to a separate meta file. The ``IDSLAB_LOG`` environment variable sets log
verbosity (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis
from .harness import (
    IDSConfig,
    RunResult,
    SourceExhaustedError,
    read_run_result,
    run,
    write_run_result,
)
from .scoring import AcquisitionMethod, MethodConfig, PrototypeSource, compute_prototypes
from .stream import (
    Dataset,
    PoolSource,
    SyntheticSourceSpec,
    load_embeddings,
    split,
    synth_build,
    write_embeddings,
    write_embeddings_csv,
)

log = logging.getLogger("idslab")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EXHAUSTED = 3

_METHOD_NAMES = [m.value for m in AcquisitionMethod]

_METHOD_SCHEMA = {
    "oneOf": [
        {"enum": _METHOD_NAMES},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["method"],
            "properties": {
                "method": {"enum": _METHOD_NAMES},
                "normalize_by_class_count": {"type": ["boolean", "null"]},
                "prototype_source": {"enum": [s.value for s in PrototypeSource]},
            },
        },
    ]
}

_SYNTH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "num_classes": {"type": "integer", "minimum": 2},
        "feature_dim": {"type": "integer", "minimum": 1},
        "pool_size": {"type": "integer", "minimum": 1},
        "power_law_alpha": {"type": "number", "minimum": 0},
        "cluster_spread": {"type": "number", "exclusiveMinimum": 0},
        "separation": {"type": "number", "minimum": 0},
        "label_noise_rate": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "val_per_class": {"type": "integer", "minimum": 0},
        "test_per_class": {"type": "integer", "minimum": 0},
    },
}

_SOURCE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "synthetic": _SYNTH_SCHEMA,
        "pkem": {"type": "string"},
        "fractions": {
            "type": "array",
            "items": {"type": "number", "minimum": 0, "maximum": 1},
            "minItems": 3,
            "maxItems": 3,
        },
        "split_seed": {"type": "integer", "minimum": 0},
    },
    "oneOf": [{"required": ["synthetic"]}, {"required": ["pkem"]}],
}

_RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["data_budget", "initial_size"],
    "properties": {
        "data_budget": {"type": "integer", "minimum": 2},
        "initial_size": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "selection_increment": {"type": ["integer", "null"], "minimum": 1},
        "total_updates": {"type": "integer", "minimum": 1},
        "init_updates": {"type": "integer", "minimum": 0},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "final_lr_decay": {"type": "number", "exclusiveMinimum": 0},
        "selection_rate": {"type": "number", "exclusiveMinimum": 0, "maximum": 100},
        "refresh_period": {"type": ["integer", "null"], "minimum": 1},
        "method": _METHOD_SCHEMA,
        "replay_sampling": {"enum": ["uniform", "count_inverse"]},
        "deferred_merge": {"type": "boolean"},
        "candidate_batch_size": {"type": "integer", "minimum": 1},
        "eval_every": {"type": ["integer", "null"], "minimum": 1},
        "weight_init": {"enum": ["zeros", "gaussian"]},
        "seed": {"type": "integer", "minimum": 0},
    },
}

_SWEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "methods": {"type": "array", "items": _METHOD_SCHEMA, "minItems": 1},
        "budgets": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "rates": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 100},
            "minItems": 1,
        },
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["source", "run"],
    "properties": {
        "source": _SOURCE_SCHEMA,
        "run": _RUN_SCHEMA,
        "sweep": _SWEEP_SCHEMA,
    },
}


def load_config(path) -> dict:
    """Read and schema-validate an experiment config; unknown keys fail."""
    with open(path) as fh:
        cfg = json.load(fh)
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    return cfg


def method_from_json(obj) -> MethodConfig:
    if isinstance(obj, str):
        return MethodConfig(AcquisitionMethod(obj))
    return MethodConfig(
        AcquisitionMethod(obj["method"]),
        normalize_by_class_count=obj.get("normalize_by_class_count"),
        prototype_source=PrototypeSource(obj.get("prototype_source", "validation_means")),
    )


def run_config_from_json(run_cfg: dict) -> IDSConfig:
    kwargs = dict(run_cfg)
    if "method" in kwargs:
        kwargs["method"] = method_from_json(kwargs["method"])
    return IDSConfig(**kwargs)


def build_synthetic_spec(source_cfg: dict) -> SyntheticSourceSpec:
    return SyntheticSourceSpec(**source_cfg["synthetic"])


def build_source(source_cfg: dict) -> PoolSource:
    if "synthetic" in source_cfg:
        return synth_build(build_synthetic_spec(source_cfg))
    dataset = load_embeddings(source_cfg["pkem"])
    fractions = tuple(source_cfg.get("fractions", (0.8, 0.1, 0.1)))
    pool, val, test = split(dataset, fractions, source_cfg.get("split_seed", 0))
    return PoolSource(pool, val, test)


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = json.loads(json.dumps(cfg))  # deep copy
    run_cfg = cfg["run"]
    if getattr(args, "seed", None) is not None:
        run_cfg["seed"] = args.seed
        if "synthetic" in cfg["source"]:
            cfg["source"]["synthetic"]["seed"] = args.seed
    if getattr(args, "method", None) is not None:
        run_cfg["method"] = args.method
    if getattr(args, "budget", None) is not None:
        run_cfg["data_budget"] = args.budget
    if getattr(args, "rate", None) is not None:
        run_cfg["selection_rate"] = args.rate
    if getattr(args, "tau", None) is not None:
        run_cfg["refresh_period"] = None if args.tau in ("none", "inf") else int(args.tau)
    if getattr(args, "replay", None) is not None:
        run_cfg["replay_sampling"] = args.replay
    if getattr(args, "normalize_class_count", None) is not None:
        method = run_cfg.get("method", "peaks")
        if isinstance(method, str):
            method = {"method": method}
        method["normalize_by_class_count"] = args.normalize_class_count == "true"
        run_cfg["method"] = method
    if getattr(args, "deferred_merge", None) is not None:
        run_cfg["deferred_merge"] = args.deferred_merge == "true"
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    if "synthetic" not in cfg["source"]:
        log.error("generate requires a synthetic source block")
        return EXIT_ERROR
    if args.seed is not None:
        cfg["source"]["synthetic"]["seed"] = args.seed
    source = synth_build(build_synthetic_spec(cfg["source"]))
    writer = write_embeddings_csv if str(args.out).endswith(".csv") else write_embeddings
    writer(source.pool, args.out)
    log.info("wrote pool (%d examples) to %s", len(source.pool), args.out)
    if args.val_out:
        writer(source.validation, args.val_out)
    if args.test_out:
        writer(source.test, args.test_out)
    return EXIT_OK


def _execute_run(cfg: dict, out_dir: Path) -> tuple[RunResult, int]:
    source = build_source(cfg["source"])
    ids_config = run_config_from_json(cfg["run"])
    try:
        result = run(ids_config, source)
        code = EXIT_OK
    except SourceExhaustedError as exc:
        log.warning("run aborted: %s", exc)
        result = exc.result
        code = EXIT_EXHAUSTED
    write_run_result(result, out_dir)
    (out_dir / "config.json").write_text(json.dumps(cfg, sort_keys=True, indent=2))
    return result, code


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    result, code = _execute_run(cfg, Path(args.out))
    summary = {
        "final_test_accuracy": result.final_test_accuracy,
        "selected": len(result.selected),
        "exhausted": result.exhausted,
    }
    print(json.dumps(summary))
    return code


def _sweep_cell(cell_json: str) -> str:
    cfg, out_dir = json.loads(cell_json)
    result, code = _execute_run(cfg, Path(out_dir))
    return json.dumps(
        {
            "out": out_dir,
            "method": cfg["run"]["method"] if isinstance(cfg["run"]["method"], str)
            else cfg["run"]["method"]["method"],
            "budget": cfg["run"]["data_budget"],
            "rate": cfg["run"]["selection_rate"],
            "seed": cfg["run"]["seed"],
            "accuracy": result.final_test_accuracy,
            "exhausted": result.exhausted,
            "code": code,
        }
    )


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    sweep = cfg.get("sweep", {})
    methods = sweep.get("methods", [cfg["run"].get("method", "peaks")])
    budgets = sweep.get("budgets", [cfg["run"]["data_budget"]])
    rates = sweep.get("rates", [cfg["run"].get("selection_rate", 20.0)])
    seeds = sweep.get("seeds", [cfg["run"].get("seed", 0)])

    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    cells = []
    for method in methods:
        for budget in budgets:
            for rate in rates:
                for seed in seeds:
                    cell = json.loads(json.dumps(cfg))
                    cell.pop("sweep", None)
                    cell["run"]["method"] = method
                    cell["run"]["data_budget"] = budget
                    cell["run"]["selection_rate"] = rate
                    cell["run"]["seed"] = seed
                    if "synthetic" in cell["source"]:
                        cell["source"]["synthetic"]["seed"] = seed
                    name = method if isinstance(method, str) else method["method"]
                    cell_dir = out_root / f"{name}_k{budget}_p{rate:g}_s{seed}"
                    cells.append(json.dumps((cell, str(cell_dir))))

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    records = sorted((json.loads(r) for r in rows), key=lambda r: r["out"])

    by_cell: dict[tuple, list[float]] = {}
    for rec in records:
        key = (rec["method"], rec["budget"], rec["rate"])
        if rec["accuracy"] is not None:
            by_cell.setdefault(key, []).append(rec["accuracy"])
    with open(out_root / "summary.csv", "w") as fh:
        fh.write("method,budget,rate,seeds,mean_accuracy,std_accuracy\n")
        for (method, budget, rate) in sorted(by_cell):
            accs = np.asarray(by_cell[(method, budget, rate)])
            fh.write(
                f"{method},{budget},{rate:g},{accs.size},"
                f"{float(accs.mean())!r},{float(accs.std())!r}\n"
            )
    print(f"{len(records)} runs -> {out_root / 'summary.csv'}")
    return EXIT_OK if all(r["code"] == EXIT_OK for r in records) else EXIT_EXHAUSTED


def _run_dirs(results_root: Path) -> list[Path]:
    if (results_root / "result.json").exists():
        return [results_root]
    return sorted(p.parent for p in results_root.glob("*/result.json"))


def _analyze_overlap(run_dirs: list[Path], out_root: Path) -> None:
    results = [read_run_result(d) for d in run_dirs]
    report = analysis.overlap_matrix(results, labels=[d.name for d in run_dirs])

    def write_matrix(path: Path, matrix: np.ndarray) -> None:
        with open(path, "w") as fh:
            fh.write("run," + ",".join(report.labels) + "\n")
            for label, row in zip(report.labels, matrix):
                fh.write(label + "," + ",".join(repr(float(v)) for v in row) + "\n")

    write_matrix(out_root / "overlap_selected.csv", report.selected_jaccard)
    write_matrix(out_root / "overlap_seen.csv", report.seen_jaccard)
    with open(out_root / "overlap_accuracy.csv", "w") as fh:
        fh.write("run,final_test_accuracy\n")
        for label, acc in zip(report.labels, report.final_accuracy):
            fh.write(f"{label},{'' if acc is None else repr(acc)}\n")


def _analyze_traces(run_dirs: list[Path], out_root: Path, window: int) -> None:
    with open(out_root / "traces.csv", "w") as fh:
        fh.write("run,candidate_index,normalized_score,acceptance_rate\n")
        for d in run_dirs:
            result = read_run_result(d)
            scores = result.candidate_log.score
            if not scores:
                log.warning("run %s has an empty candidate log; skipped", d.name)
                continue
            trace = analysis.score_trace(scores, window)
            rates = analysis.acceptance_rate_series(result.candidate_log.accepted, window)
            for i, (t, r) in enumerate(zip(trace, rates)):
                fh.write(f"{d.name},{i},{float(t)!r},{float(r)!r}\n")


def _analyze_rankcorr(run_dirs: list[Path], out_root: Path, pool_size: int = 1000) -> None:
    # rebuild the first run's initialization state and score a held-back pool
    from .harness import phase_initialize

    run_dir = run_dirs[0]
    cfg = json.loads((run_dir / "config.json").read_text())
    if "synthetic" not in cfg["source"]:
        raise ValueError("rankcorr analysis needs a synthetic source config")
    source = build_source(cfg["source"])
    state = phase_initialize(run_config_from_json(cfg["run"]), source)
    prototypes = compute_prototypes(source.validation.features, source.validation.labels)
    rows = source.draw_rows_excluding(state.selected_ids, state.rng_stream, pool_size)
    corr = analysis.rank_correlation_experiment(
        state.model, source.pool.features[rows], source.pool.labels[rows], prototypes
    )
    with open(out_root / "rankcorr.csv", "w") as fh:
        fh.write("score_a,score_b,spearman\n")
        for (a, b), value in sorted(corr.items()):
            fh.write(f"{a},{b},{'' if value is None else repr(value)}\n")


def _analyze_usage(run_dirs: list[Path], out_root: Path) -> None:
    with open(out_root / "usage_summary.csv", "w") as fh:
        fh.write("run,examples,mean,variance,std\n")
        for d in run_dirs:
            result = read_run_result(d)
            summary = analysis.usage_histogram(result.usage_counts)
            fh.write(
                f"{d.name},{summary.counts.size},{summary.mean!r},"
                f"{summary.variance!r},{summary.std!r}\n"
            )


def _analyze_noise(run_dirs: list[Path], out_root: Path) -> None:
    with open(out_root / "noise.csv", "w") as fh:
        fh.write("run,selected_noise_fraction,pool_noise_fraction\n")
        for d in run_dirs:
            cfg = json.loads((d / "config.json").read_text())
            source = build_source(cfg["source"])
            result = read_run_result(d)
            frac = analysis.noise_audit(result.selected_ids, source.pool)
            known = source.pool.clean_labels >= 0
            base = float(
                np.count_nonzero(
                    source.pool.labels[known] != source.pool.clean_labels[known]
                )
                / max(np.count_nonzero(known), 1)
            )
            fh.write(f"{d.name},{frac!r},{base!r}\n")


def cmd_analyze(args) -> int:
    run_dirs = _run_dirs(Path(args.results))
    if not run_dirs:
        log.error("no run directories under %s", args.results)
        return EXIT_ERROR
    out_root = Path(args.out) if args.out else Path(args.results)
    out_root.mkdir(parents=True, exist_ok=True)
    which = args.which
    if which == "overlap":
        _analyze_overlap(run_dirs, out_root)
    elif which == "traces":
        _analyze_traces(run_dirs, out_root, args.window)
    elif which == "rankcorr":
        _analyze_rankcorr(run_dirs, out_root)
    elif which == "usage":
        _analyze_usage(run_dirs, out_root)
    elif which == "noise":
        _analyze_noise(run_dirs, out_root)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="idslab",
        description="Streaming data-selection experiments over a linear-softmax readout.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="materialize a synthetic pool as a PKEM file")
    gen.add_argument("--config", required=True, help="experiment config JSON")
    gen.add_argument("--out", required=True, help="output PKEM (or .csv) path")
    gen.add_argument("--val-out", default=None, help="also write the validation split")
    gen.add_argument("--test-out", default=None, help="also write the test split")
    gen.add_argument("--seed", type=int, default=None)
    gen.set_defaults(fn=cmd_generate)

    runp = sub.add_parser("run", help="execute one selection run")
    runp.add_argument("--config", required=True)
    runp.add_argument("--out", required=True, help="output directory")
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--method", choices=_METHOD_NAMES, default=None)
    runp.add_argument("--budget", type=int, default=None)
    runp.add_argument("--rate", type=float, default=None)
    runp.add_argument("--tau", default=None, help="refresh period (int, 'none', or 'inf')")
    runp.add_argument("--replay", choices=["uniform", "count_inverse"], default=None)
    runp.add_argument("--normalize-class-count", choices=["true", "false"], default=None)
    runp.add_argument("--deferred-merge", choices=["true", "false"], default=None)
    runp.set_defaults(fn=cmd_run)

    sweep = sub.add_parser("sweep", help="run a methods x budgets x rates x seeds grid")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--method", choices=_METHOD_NAMES, default=None)
    sweep.add_argument("--budget", type=int, default=None)
    sweep.add_argument("--rate", type=float, default=None)
    sweep.add_argument("--tau", default=None)
    sweep.add_argument("--replay", choices=["uniform", "count_inverse"], default=None)
    sweep.add_argument("--normalize-class-count", choices=["true", "false"], default=None)
    sweep.add_argument("--deferred-merge", choices=["true", "false"], default=None)
    sweep.set_defaults(fn=cmd_sweep)

    ana = sub.add_parser("analyze", help="emit CSV reports over finished runs")
    ana.add_argument("which", choices=["overlap", "traces", "rankcorr", "usage", "noise"])
    ana.add_argument("--results", required=True, help="run directory or directory of runs")
    ana.add_argument("--out", default=None, help="report directory (default: results dir)")
    ana.add_argument("--window", type=int, default=500, help="rolling window for traces")
    ana.set_defaults(fn=cmd_analyze)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("IDSLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, jsonschema.ValidationError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
