"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 parse, 3 I/O, 4 domain error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

import yaml

from osskit import __version__
from osskit import reports
from osskit.config import ConfigError, RunConfig, load_config
from osskit.errors import (
    EmptyOverlapError,
    IncompatibleVersionError,
    IntegrityError,
    OSSError,
    ParseError,
)
from osskit.features import table_from_manifest
from osskit.ingest import load_feature_table, parse_coco, parse_kitti, save_feature_table
from osskit.osscore import oss, oss_variant_suite
from osskit.select import (
    correlate_with_map,
    eliminate,
    rank_methods,
    read_cost_table,
    savings,
    subsample_search,
)
from osskit.synth import SynthSpec, generate

log = logging.getLogger("osskit")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_IO, EXIT_DOMAIN = 0, 1, 2, 3, 4
THREADS_ENV = "OSSKIT_THREADS"
TABLE_SUFFIX = ".ossft"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads(args, config):
    if args.threads is not None:
        return max(1, args.threads)
    if config.threads:
        return max(1, int(config.threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}")
    return 1


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = args.out
        args.out_dir = Path(args.out)
    else:
        args.out_dir = config.resolve(config.out)
    if getattr(args, "z", None) is not None or getattr(args, "fraction", None) is not None:
        try:
            config.search = dataclasses.replace(
                config.search,
                z=args.z if args.z is not None else config.search.z,
                fraction=args.fraction if args.fraction is not None else config.search.fraction,
            )
        except ValueError as exc:
            raise UsageError(str(exc))
    return config


def _formats(args):
    return ("json", "csv") if args.format is None else (args.format,)


def _emit(args, config, stem, payload, rows=None, fields=None):
    """Write ``<stem>.json`` and/or ``<stem>.csv`` into the output directory."""
    out = args.out_dir
    written = []
    fmts = _formats(args)
    if "json" in fmts:
        written.append(reports.write_text(out / f"{stem}.json", reports.dumps_json(payload)))
    if "csv" in fmts and rows is not None:
        written.append(reports.write_text(out / f"{stem}.csv", reports.dumps_csv(rows, fields)))
    for p in written:
        log.info("wrote %s", p)
    return written


def _report_header(command, config, inputs):
    return reports.header(command, config.seed, config.to_dict(include_runtime=False), inputs)


def _load_tables(paths):
    tables = []
    for p in paths:
        if not Path(p).is_file():
            raise FileNotFoundError(f"feature table not found: {p}")
        tables.append(load_feature_table(p))
    return tables


# -- commands ---------------------------------------------------------------


def cmd_extract(args, config):
    if args.dataset_id not in config.datasets:
        raise UsageError(f"dataset {args.dataset_id!r} is not defined in the config")
    entry = config.datasets[args.dataset_id]
    image_dir = config.resolve(entry.images)
    if not image_dir.is_dir():
        raise FileNotFoundError(f"image directory not found: {image_dir}")
    out = args.out_dir
    table_path = out / f"{args.dataset_id}{TABLE_SUFFIX}"
    summary_path = out / f"{args.dataset_id}.extract.json"
    start = time.perf_counter()
    try:
        if entry.format == "coco":
            ann = config.resolve(entry.annotations)
            if not ann.is_file():
                raise FileNotFoundError(f"annotation file not found: {ann}")
            manifest = parse_coco(ann, image_dir)
        else:
            manifest = parse_kitti(config.resolve(entry.labels), image_dir)
        table, skips = table_from_manifest(
            manifest, config.features, args.dataset_id, config.min_side_px, args.n_threads
        )
        out.mkdir(parents=True, exist_ok=True)
        save_feature_table(table, table_path)
        payload = _report_header("extract", config, {"dataset_id": args.dataset_id})
        payload["manifest"] = manifest.summary()
        payload["extraction"] = skips.to_dict()
        payload["table"] = {
            "path": table_path.name,
            "rows": len(table),
            "feature_schema": table.feature_schema,
            "class_counts": dict(zip(table.class_catalog, table.class_counts().tolist())),
        }
        reports.write_text(summary_path, reports.dumps_json(payload))
    except BaseException:
        for p in (table_path, summary_path):
            if p.exists():
                p.unlink()
        raise
    elapsed = time.perf_counter() - start
    sys.stderr.write(
        reports.dumps_json({"dataset_id": args.dataset_id, "crops": skips.crops, "skips": skips.reasons(), "wall_time_s": round(elapsed, 3)})
    )
    log.info("extracted %d crops from %s in %.2fs", len(table), args.dataset_id, elapsed)
    return EXIT_OK


def _overlap_guard(tables, reference, config, threads):
    try:
        return oss(tables, reference, config.oss_config(), aliases=config.aliases, threads=threads)
    except EmptyOverlapError as exc:
        lines = [f"empty class overlap: {exc}", f"  reference {reference.set_id!r}: {reference.class_catalog}"]
        lines += [f"  comparison {t.set_id!r}: {t.class_catalog}" for t in tables]
        raise EmptyOverlapError("\n".join(lines)) from exc


def cmd_oss(args, config):
    tables = _load_tables(args.tables)
    (reference,) = _load_tables([args.reference])
    results = _overlap_guard(tables, reference, config, args.n_threads)
    payload = _report_header("oss", config, {"comparison": list(args.tables), "reference": args.reference})
    payload["results"] = [r.to_dict() for r in results]
    _emit(args, config, "oss", payload, [r.csv_row() for r in results], ["set_id", "oss", "beta", "weighting_active"])
    for r in results:
        print(f"{r.set_id}\tOSS={r.oss:.6f}")
    return EXIT_OK


def cmd_select_val(args, config):
    val, alt = _load_tables([args.val, args.alt])
    result = subsample_search(
        val, alt, config.search_config(), config.oss_config(), aliases=config.aliases, threads=args.n_threads
    )
    payload = _report_header("select-val", config, {"val": args.val, "alt": args.alt})
    payload["result"] = result.to_dict()
    rows = [{"candidate": i, "oss": s, "selected": i == result.best_index} for i, s in enumerate(result.scores)]
    _emit(args, config, "subset", payload, rows, ["candidate", "oss", "selected"])
    print(f"selected candidate {result.best_index} with OSS_z={result.oss_z:.6f} ({len(result.best_subset)} images)")
    return EXIT_OK


def cmd_correlate(args, config):
    ids, oss_scores = reports.read_score_csv(args.oss_csv, "oss")
    map_ids, map_scores = reports.read_score_csv(args.map_csv)
    lookup = dict(zip(map_ids, map_scores))
    missing = [m for m in ids if m not in lookup]
    if missing:
        raise ValueError(f"no mAP score for methods {missing}")
    report = correlate_with_map(ids, oss_scores, [lookup[m] for m in ids])
    payload = _report_header("correlate", config, {"oss_csv": args.oss_csv, "map_csv": args.map_csv})
    payload["report"] = report.to_dict()
    rows = [
        {"method_id": m["method_id"], "oss": m["oss"], "map": m["map"], "oss_rank": m["oss_rank"], "map_rank": m["map_rank"]}
        for m in payload["report"]["methods"]
    ]
    _emit(args, config, "correlation", payload, rows, ["method_id", "oss", "map", "oss_rank", "map_rank"])
    print(f"pearson r={report.pearson.statistic:.6f} p={report.pearson.p_value:.3g} kendall tau={report.kendall.statistic:.6f}")
    return EXIT_OK


def cmd_rank(args, config):
    ids, scores = reports.read_score_csv(args.oss_csv, "oss")
    report = rank_methods(dict(zip(ids, scores)))
    keep_top = args.keep_top if args.keep_top is not None else len(ids)
    kept, dropped = eliminate(report, keep_top)
    payload = _report_header("rank", config, {"oss_csv": args.oss_csv, "keep_top": keep_top})
    payload["ranking"] = report.to_dict()
    payload["kept"] = kept
    payload["dropped"] = dropped
    kept_set = set(kept)
    rows = [
        {"method_id": m, "oss": report.oss_scores[report.method_ids.index(m)], "rank": r + 1, "kept": m in kept_set}
        for r, m in enumerate(report.order("oss"))
    ]
    _emit(args, config, "ranking", payload, rows, ["method_id", "oss", "rank", "kept"])
    print("kept: " + " ".join(kept))
    print("dropped: " + " ".join(dropped))
    return EXIT_OK


def cmd_savings(args, config):
    costs = read_cost_table(args.cost_csv)
    iterations = [args.iteration] if args.iteration is not None else list(range(1, len(costs) - 1))
    rows = []
    for i in iterations:
        s_oss, s_map = savings(costs, i)
        rows.append({"iteration": i, "s_oss": s_oss, "s_map": s_map})
        print(f"i={i} S_OSS={s_oss:g} S_mAP={s_map:g}")
    payload = _report_header("savings", config, {"cost_csv": args.cost_csv})
    payload["costs"] = costs
    payload["savings"] = rows
    _emit(args, config, "savings", payload, rows, ["iteration", "s_oss", "s_map"])
    return EXIT_OK


def cmd_ablate(args, config):
    tables = _load_tables(args.tables)
    (reference,) = _load_tables([args.reference])
    suite = oss_variant_suite(tables, reference, config.oss_config(), aliases=config.aliases, threads=args.n_threads)
    payload = _report_header("ablate", config, {"comparison": list(args.tables), "reference": args.reference})
    payload["variants"] = {name: [r.to_dict() for r in res] for name, res in suite.items()}
    rows = [{"variant": name, **r.csv_row()} for name, res in suite.items() for r in res]
    _emit(args, config, "ablation", payload, rows, ["variant", "set_id", "oss", "beta", "weighting_active"])
    return EXIT_OK


def cmd_synth(args, config):
    spec_path = Path(args.spec)
    try:
        spec = SynthSpec.from_dict(yaml.safe_load(spec_path.read_text(encoding="utf-8")))
    except (TypeError, KeyError, ValueError, AttributeError, yaml.YAMLError) as exc:
        raise ParseError(f"invalid synth spec: {exc}", path=spec_path) from exc
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    out = args.out_dir
    manifest = generate(spec, out, args.n_threads)
    payload = reports.header("synth", spec.seed, spec.to_dict(), {"spec": args.spec})
    payload["manifest"] = {"images": len(manifest.images), "annotations": len(manifest.annotations), "classes": manifest.class_catalog}
    _emit(args, config, "synth", payload)
    print(f"generated {len(manifest.images)} images with {len(manifest.annotations)} objects in {out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    common.add_argument("--format", choices=("json", "csv"), help="write only this report format")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = _Parser(prog="osskit", description="Object-based set similarity for detection datasets.")
    parser.add_argument("--version", action="version", version=f"osskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", parents=[common], help="crop and featurize one configured dataset")
    p.add_argument("dataset_id")
    p.set_defaults(func=cmd_extract)

    for name, func, help_ in (("oss", cmd_oss, "score comparison tables against a reference"), ("ablate", cmd_ablate, "OSS under every ablation variant")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("tables", nargs="+", help="comparison feature tables")
        p.add_argument("--reference", required=True, help="reference feature table")
        p.set_defaults(func=func)

    p = sub.add_parser("select-val", parents=[common], help="search a representative validation subset")
    p.add_argument("val")
    p.add_argument("alt")
    p.add_argument("--z", type=int)
    p.add_argument("--fraction", type=float)
    p.set_defaults(func=cmd_select_val)

    p = sub.add_parser("correlate", parents=[common], help="Pearson/Kendall between OSS and mAP")
    p.add_argument("oss_csv")
    p.add_argument("map_csv")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("rank", parents=[common], help="rank methods by OSS and keep the best")
    p.add_argument("oss_csv")
    p.add_argument("--keep-top", type=int)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("savings", parents=[common], help="training cost saved by early elimination")
    p.add_argument("cost_csv")
    p.add_argument("--iteration", "-i", type=int)
    p.set_defaults(func=cmd_savings)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset from a YAML spec")
    p.add_argument("spec")
    p.set_defaults(func=cmd_synth)
    return parser


def _setup_logging(args):
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 0 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args)
    try:
        config = _load_run_config(args)
        args.n_threads = _threads(args, config)
        return args.func(args, config)
    except (UsageError, ConfigError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (ParseError, IntegrityError, IncompatibleVersionError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (OSSError, ValueError, ZeroDivisionError) as exc:
        log.error("%s", exc)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
