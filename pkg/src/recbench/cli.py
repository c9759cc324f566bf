"""Command-line pipeline: ingest -> preprocess -> split -> train ->
evaluate -> bench -> report.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numeric failure.
Every stage writes a manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import report as report_mod
from .data import (
    DataFormatError,
    binarize,
    holdout_split,
    kcore_filter,
    parse_ratings,
    read_dataset,
    read_split,
    remap_ids,
    write_dataset,
    write_split,
)
from .evaluation import (
    MetricsReport,
    aggregate_reports,
    evaluate_model,
    group_users_by_profile,
    map_per_group,
)
from .manifest import fingerprint_file, write_manifest
from .models import MODEL_KINDS, ModelSpec, build_config, config_dict, fit_model, load_model, save_model
from .sparse import NumericalError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# flags forwarded into each model kind's configuration
_KIND_FLAGS = {
    "ease-r": ("lam", "max_items"),
    "slim": ("alpha", "l1_ratio", "max_iters", "tol", "nonnegative"),
    "slim-enet": ("alpha", "l1_ratio", "max_iters", "tol", "nonnegative"),
    "als": ("factors", "iterations", "reg", "confidence_alpha", "seed"),
    "funk-svd": ("factors", "epochs", "learning_rate", "reg", "seed"),
    "p3alpha": ("alpha", "topk"),
    "rp3beta": ("alpha", "beta", "topk"),
    "top-pop": (),
}


def _build_parser() -> _Parser:
    p = _Parser(prog="recbench", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("ingest", help="parse a rating file into a dataset directory")
    sp.add_argument("--input", required=True)
    sp.add_argument("--format", required=True, choices=("movielens-csv", "tsv-quad", "netflix-dir"))
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("preprocess", help="k-core filter and binarize a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--min-interactions", type=int, default=5)
    sp.add_argument("--binarize-threshold", type=float, default=4.0)

    sp = sub.add_parser("split", help="write per-seed holdout splits")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--ratio", type=float, default=0.8)
    sp.add_argument("--seeds", type=int, default=5)
    sp.add_argument("--seed-base", type=int, default=0)

    sp = sub.add_parser("train", help="fit one model on a split's training matrix")
    sp.add_argument("--split", required=True)
    sp.add_argument("--model", required=True, choices=MODEL_KINDS)
    sp.add_argument("--out", required=True)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--max-items", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--l1-ratio", type=float)
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--nonnegative", dest="nonnegative", action="store_true", default=None)
    sp.add_argument("--no-nonnegative", dest="nonnegative", action="store_false")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--topk", type=int)
    sp.add_argument("--factors", type=int)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--reg", type=float)
    sp.add_argument("--confidence-alpha", type=float)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("evaluate", help="rank metrics over split/model pairs")
    sp.add_argument("--splits", required=True)
    sp.add_argument("--models", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--k", default="10", help="comma-separated cutoffs")
    sp.add_argument("--metrics", default="precision,recall,ndcg,map")
    sp.add_argument("--groups", type=int, default=10)

    sp = sub.add_parser("bench", help="stress measurements")
    bsub = sp.add_subparsers(dest="bench_cmd", required=True)

    bs = bsub.add_parser("scale", help="size sweep: subsample, preprocess, fit, time")
    bs.add_argument("--dataset", required=True)
    bs.add_argument("--models", required=True, help="comma-separated model kinds")
    bs.add_argument("--sizes", default="100000,1000000,10000000")
    bs.add_argument("--seed", type=int, default=0)
    bs.add_argument("--repetitions", type=int, default=3)
    bs.add_argument("--min-interactions", type=int, default=5)
    bs.add_argument("--binarize-threshold", type=float, default=4.0)
    bs.add_argument("--out", required=True)

    bs = bsub.add_parser("latency", help="batch recommendation latency")
    bs.add_argument("--split", required=True)
    bs.add_argument("--models-dir", required=True)
    bs.add_argument("--batch", type=int, default=1000)
    bs.add_argument("--k", type=int, default=10)
    bs.add_argument("--seed", type=int, default=0)
    bs.add_argument("--out", required=True)

    bs = bsub.add_parser("coldstart", help="truncated-profile evaluation")
    bs.add_argument("--dataset", required=True)
    bs.add_argument("--model", required=True, choices=MODEL_KINDS)
    bs.add_argument("--max-profile", type=int, default=2)
    bs.add_argument("--seed", type=int, default=0)
    bs.add_argument("--k", type=int, default=10)
    bs.add_argument("--out", required=True)

    bs = bsub.add_parser("incremental", help="fold-in vs full retrain")
    bs.add_argument("--dataset", required=True)
    bs.add_argument("--model", required=True, choices=MODEL_KINDS)
    bs.add_argument("--fraction", type=float, default=0.05)
    bs.add_argument("--seed", type=int, default=0)
    bs.add_argument("--k", type=int, default=10)
    bs.add_argument("--out", required=True)

    sp = sub.add_parser("report", help="render tables and plot files")
    sp.add_argument("--reports", required=True)
    sp.add_argument("--bench", action="append", default=[])
    sp.add_argument("--format", default="markdown", choices=("csv", "markdown", "structured"))
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--out", required=True)

    return p


def _cmd_ingest(args, argv) -> int:
    records = parse_ratings(args.input, args.format)
    ds = remap_ids(records)
    out = Path(args.out)
    write_dataset(ds, out)
    write_manifest(
        out / "manifest.json",
        command=argv,
        config={"format": args.format},
        inputs={args.input: fingerprint_file(args.input)},
    )
    print(f"ingested {ds.n_interactions} interactions "
          f"({ds.n_users} users x {ds.n_items} items) -> {out}")
    return EXIT_OK


def _cmd_preprocess(args, argv) -> int:
    ds = read_dataset(args.dataset)
    ds = kcore_filter(ds, args.min_interactions)
    ds = binarize(ds, args.binarize_threshold)
    out = Path(args.out)
    write_dataset(ds, out)
    write_manifest(
        out / "manifest.json",
        command=argv,
        config={
            "min_interactions": args.min_interactions,
            "binarize_threshold": args.binarize_threshold,
        },
        inputs={args.dataset: fingerprint_file(Path(args.dataset) / "interactions.rbm")},
    )
    print(f"preprocessed -> {ds.n_interactions} interactions "
          f"({ds.n_users} users x {ds.n_items} items)")
    return EXIT_OK


def _cmd_split(args, argv) -> int:
    ds = read_dataset(args.dataset)
    out = Path(args.out)
    seeds = list(range(args.seed_base, args.seed_base + args.seeds))
    for seed in seeds:
        split = holdout_split(ds, args.ratio, seed)
        write_split(split, out / f"seed-{seed}")
    write_manifest(
        out / "manifest.json",
        command=argv,
        config={"ratio": args.ratio},
        seeds=seeds,
        inputs={args.dataset: fingerprint_file(Path(args.dataset) / "interactions.rbm")},
    )
    print(f"wrote {len(seeds)} splits -> {out}")
    return EXIT_OK


def _model_spec_from_args(args) -> ModelSpec:
    params = {}
    for name in _KIND_FLAGS[args.model]:
        value = getattr(args, name, None)
        if value is not None:
            params[name] = value
    return ModelSpec(args.model, params)


def _cmd_train(args, argv) -> int:
    split_dir = Path(args.split)
    split = read_split(split_dir)
    spec = _model_spec_from_args(args)
    cfg = build_config(spec)
    echo = {"model": spec.kind, "config": config_dict(cfg)}
    print(json.dumps(echo, sort_keys=True))
    model = fit_model(spec, split.train)
    out = Path(args.out) / split_dir.name
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{spec.kind}.rbmd"
    save_model(model, path)
    write_manifest(
        out / f"{spec.kind}.manifest.json",
        command=argv,
        config=echo,
        seeds=[split.seed],
        inputs={str(split_dir): fingerprint_file(split_dir / "train.rbm")},
    )
    print(f"saved {spec.kind} -> {path}")
    return EXIT_OK


def _cmd_evaluate(args, argv) -> int:
    ks = [int(k) for k in args.k.split(",") if k]
    metrics = tuple(m for m in args.metrics.split(",") if m)
    splits_root = Path(args.splits)
    models_root = Path(args.models)
    split_dirs = sorted(d for d in splits_root.iterdir() if d.is_dir())
    if not split_dirs:
        raise FileNotFoundError(f"no split directories under {splits_root}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    by_kind: dict[str, list[MetricsReport]] = {}
    group_vectors: dict[str, list] = {}
    for sd in split_dirs:
        split = read_split(sd)
        model_dir = models_root / sd.name
        if not model_dir.is_dir():
            raise FileNotFoundError(f"no trained models for {sd.name} under {models_root}")
        groups = group_users_by_profile(split.train, min(args.groups, split.train.n_rows))
        for mf in sorted(model_dir.glob("*.rbmd")):
            model = load_model(mf)
            rep = evaluate_model(model, split, ks, metrics)
            by_kind.setdefault(model.kind, []).append(rep)
            if "map" in metrics:
                group_vectors.setdefault(model.kind, []).append(
                    map_per_group(model, split, groups, max(ks))
                )

    csv_rows = []
    for kind in sorted(by_kind):
        agg = aggregate_reports(by_kind[kind])
        vectors = group_vectors.get(kind)
        if vectors:
            agg.group_map = _mean_group_map(vectors)
            agg.group_k = max(ks)
        (out / f"{kind}.json").write_text(agg.to_json() + "\n", encoding="utf-8")
        for rep in by_kind[kind]:
            csv_rows.extend(rep.csv_rows())
    (out / "metrics.csv").write_text(
        "model,seed,metric,k,value\n" + "\n".join(csv_rows) + "\n", encoding="utf-8"
    )
    write_manifest(
        out / "manifest.json",
        command=argv,
        config={"k": ks, "metrics": list(metrics), "groups": args.groups},
        seeds=[read_split(sd).seed for sd in split_dirs],
        inputs={str(sd): fingerprint_file(sd / "train.rbm") for sd in split_dirs},
    )
    print(f"evaluated {len(by_kind)} model kinds over {len(split_dirs)} splits -> {out}")
    return EXIT_OK


def _mean_group_map(vectors) -> list:
    """Elementwise mean across splits, ignoring missing groups."""
    n = max(len(v) for v in vectors)
    out = []
    for g in range(n):
        vals = [v[g] for v in vectors if g < len(v) and v[g] is not None]
        out.append(float(np.mean(vals)) if vals else None)
    return out


def _write_bench_csv(path, records) -> None:
    rows = [bench_mod.BENCH_CSV_HEADER] + [r.csv_row() for r in records]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def _cmd_bench(args, argv) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.bench_cmd == "scale":
        ds = read_dataset(args.dataset)
        specs = [ModelSpec(kind) for kind in args.models.split(",") if kind]
        sizes = [int(s) for s in args.sizes.split(",") if s]
        records = bench_mod.scalability_sweep(
            specs, ds, sizes, args.seed,
            args.min_interactions, args.binarize_threshold, args.repetitions,
        )
        _write_bench_csv(out / "scale.csv", records)
        for rec in records:
            print(rec.csv_row())
    elif args.bench_cmd == "latency":
        split = read_split(args.split)
        records = []
        for mf in sorted(Path(args.models_dir).glob("*.rbmd")):
            model = load_model(mf)
            records.append(
                bench_mod.measure_latency(model, split.train, args.batch, args.k, args.seed)
            )
        if not records:
            raise FileNotFoundError(f"no model files under {args.models_dir}")
        _write_bench_csv(out / "latency.csv", records)
        for rec in records:
            print(rec.csv_row())
    elif args.bench_cmd == "coldstart":
        ds = read_dataset(args.dataset)
        rep = bench_mod.cold_start_eval(
            ModelSpec(args.model), ds, args.max_profile, args.seed, ks=(args.k,)
        )
        (out / f"coldstart-{args.model}.json").write_text(rep.to_json() + "\n", encoding="utf-8")
        print(rep.to_json())
    else:  # incremental
        ds = read_dataset(args.dataset)
        result = bench_mod.incremental_update_eval(
            ModelSpec(args.model), ds, args.fraction, args.seed, args.k
        )
        payload = {
            "supported": result.supported,
            "incorporation_seconds": result.incorporation_seconds,
            "retrain_seconds": result.retrain_seconds,
            "deltas": result.deltas,
            "incremental": json.loads(result.incremental.to_json()) if result.incremental else None,
            "retrain": json.loads(result.retrain.to_json()) if result.retrain else None,
        }
        (out / f"incremental-{args.model}.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        _write_bench_csv(out / f"incremental-{args.model}.csv", [result.record])
        print(json.dumps({"supported": result.supported, "deltas": result.deltas}, sort_keys=True))
    write_manifest(
        out / f"{args.bench_cmd}.manifest.json",
        command=argv,
        config={k: v for k, v in vars(args).items() if k not in ("cmd", "bench_cmd")},
        seeds=[getattr(args, "seed", 0)],
    )
    return EXIT_OK


def _parse_bench_csv(path) -> list:
    records = []
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if lines and lines[0] == bench_mod.BENCH_CSV_HEADER:
        lines = lines[1:]
    for line in lines:
        model, size, fit_s, peak, lat, reps = line.split(",")
        records.append(bench_mod.BenchRecord(
            model=model,
            config={},
            size=int(size),
            fit_seconds=float(fit_s) if fit_s else None,
            peak_rss_bytes=int(peak) if peak else None,
            latency_ms_per_1k=float(lat) if lat else None,
            repetitions=int(reps),
        ))
    return records


def _cmd_report(args, argv) -> int:
    reports_dir = Path(args.reports)
    reports = [
        MetricsReport.from_json(p.read_text(encoding="utf-8"))
        for p in sorted(reports_dir.glob("*.json"))
        if p.name != "manifest.json"
    ]
    records = []
    for b in args.bench:
        records.extend(_parse_bench_csv(b))
    if not reports and not records:
        raise FileNotFoundError(f"nothing to report under {reports_dir}")
    written = report_mod.write_report_files(args.out, reports, records, args.format, args.k)
    write_manifest(
        Path(args.out) / "manifest.json",
        command=argv,
        config={"format": args.format, "k": args.k},
        inputs={str(p): fingerprint_file(p) for p in sorted(reports_dir.glob("*.json"))
                if p.name != "manifest.json"},
    )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def run_command(argv) -> int:
    argv = list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.cmd == "ingest":
            return _cmd_ingest(args, argv)
        if args.cmd == "preprocess":
            return _cmd_preprocess(args, argv)
        if args.cmd == "split":
            return _cmd_split(args, argv)
        if args.cmd == "train":
            return _cmd_train(args, argv)
        if args.cmd == "evaluate":
            return _cmd_evaluate(args, argv)
        if args.cmd == "bench":
            return _cmd_bench(args, argv)
        if args.cmd == "report":
            return _cmd_report(args, argv)
        raise _UsageError(f"unknown command {args.cmd!r}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ValueError, DataFormatError) as exc:
        if isinstance(exc, DataFormatError):
            print(f"input error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
