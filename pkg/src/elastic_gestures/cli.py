"""Command-line entry point: ``elastic-gestures <subcommand> ...``.

Every subcommand writes under ``--out`` and records what it wrote in
``artifacts.json`` there. Errors go to stderr with a non-zero exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import kernels as kern
from .bench import LATENCY_COLUMNS, fit_loglog_slope, bench_latency
from .dataio import SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from .downsample import MODES, plan_for, resample_to_length
from .errors import ElasticGestureError, SchemaError
from .motion import compression_ratio, extract_descriptor
from .svm import accuracy, load_model, predict, save_model, train
from .validation import (CVReport, SplitSpec, canonical_order, cross_validate, nu_scale,
                         prepare, resolve_descriptor, rows_to_csv)

log = logging.getLogger("elastic_gestures")


def _record(out: Path, command: str, files) -> None:
    path = out / "artifacts.json"
    data = json.loads(path.read_text()) if path.exists() else {}
    data[command] = sorted(str(Path(f).relative_to(out)) for f in files)
    path.write_text(json.dumps(data, indent=1, sort_keys=True))


def _params(args, data=None) -> kern.KernelParams:
    nu = args.nu
    if getattr(args, "nu_relative", False):
        nu = nu * nu_scale(data, args.kernel)
    return kern.KernelParams(nu, args.corridor, args.alpha)


def cmd_synth(args) -> None:
    spec = SyntheticSpec(n_classes=args.classes, sequences_per_class=args.per_class,
                         length_range=(args.tmin, args.tmax), pose_dim=args.dim,
                         warp_intensity=args.warp, noise_sigma=args.noise, seed=args.seed,
                         translation_sigma=args.translation, n_subjects=args.subjects)
    manifest = save_dataset(generate_synthetic(spec), args.out / "dataset")
    _record(args.out, "synth", [manifest])
    print(manifest)


def cmd_downsample(args) -> None:
    seqs = load_dataset(args.manifest)
    out_seqs, rows = [], []
    for s in seqs:
        desc = extract_descriptor(s, resolve_descriptor(args.descriptor, s))
        if desc.length >= args.L:
            plan = plan_for(desc, args.L, args.mode)
            err, over = plan.rms_error, False
        else:
            err, over = 0.0, True
        r = resample_to_length(desc, args.L, args.mode)
        out_seqs.append(r)
        rows.append({"name": s.name, "label": s.label, "T": s.length, "L": args.L,
                     "mode": args.mode, "rms_error": float(err), "oversampled": over,
                     "compression_ratio": compression_ratio(s, r)})
    manifest = save_dataset(out_seqs, args.out / "dataset")
    report = args.out / "downsample_report.csv"
    report.write_text(rows_to_csv(rows, ("name", "label", "T", "L", "mode", "rms_error",
                                         "oversampled", "compression_ratio")))
    _record(args.out, "downsample", [manifest, report])
    print(report)


def cmd_gram(args) -> None:
    seqs = canonical_order(load_dataset(args.manifest))
    g = kern.gram(seqs, args.kernel, _params(args, seqs), workers=args.workers)
    kern.save_gram(g, args.out / "gram.bin")
    kern.save_gram_csv(g, args.out / "gram.csv")
    (args.out / "gram_rows.txt").write_text("\n".join(s.name for s in seqs) + "\n")
    _record(args.out, "gram", [args.out / "gram.bin", args.out / "gram.csv",
                               args.out / "gram_rows.txt"])
    print(args.out / "gram.bin")


def _prepared(manifest, meta):
    seqs = canonical_order(load_dataset(manifest))
    return seqs, prepare(seqs, meta["descriptor"], meta["mode"], meta["L"])


def cmd_train(args) -> None:
    meta = {"descriptor": args.descriptor, "mode": args.mode, "L": args.L,
            "train_manifest": str(Path(args.manifest).resolve())}
    seqs, data = _prepared(args.manifest, meta)
    g = kern.gram(data, args.kernel, _params(args, data), workers=args.workers)
    model = train(g, [s.label for s in seqs], args.C, args.tol)
    model.meta = dict(meta, train_names=[s.name for s in seqs])
    save_model(model, args.out / "model.json")
    if not model.converged:
        log.warning("SMO hit its iteration cap on at least one class pair")
    _record(args.out, "train", [args.out / "model.json"])
    print(args.out / "model.json")


def cmd_predict(args) -> None:
    model = load_model(args.model)
    meta = model.meta
    train_seqs, train_data = _prepared(meta["train_manifest"], meta)
    if [s.name for s in train_seqs] != meta["train_names"]:
        raise SchemaError("training dataset changed since the model was trained")
    test_seqs, test_data = _prepared(args.manifest, meta)
    cross = kern.gram_cross(test_data, train_data, model.kernel_id, model.params,
                            model.norm_bounds, workers=args.workers)
    pred = predict(model, cross)
    rows = [{"name": s.name, "label": s.label, "predicted": p,
             "votes": " ".join(map(str, v))}
            for s, p, v in zip(test_seqs, pred.labels, pred.votes)]
    path = args.out / "predictions.csv"
    path.write_text(rows_to_csv(rows, ("name", "label", "predicted", "votes")))
    _record(args.out, "predict", [path])
    print(f"accuracy {accuracy(pred.labels, [s.label for s in test_seqs]):.4f}")


EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["dataset", "kernels"],
    "additionalProperties": False,
    "properties": {
        "dataset": {"oneOf": [
            {"type": "string"},
            {"type": "object", "required": ["synthetic"],
             "properties": {"synthetic": {"type": "object"}}},
        ]},
        "descriptors": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "modes": {"type": "array", "minItems": 1, "items": {"enum": list(MODES)}},
        "L": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
        "kernels": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["id"], "additionalProperties": False,
            "properties": {
                "id": {"enum": list(kern.KERNEL_IDS)},
                "nu": {"type": "array", "minItems": 1,
                       "items": {"type": "number", "exclusiveMinimum": 0}},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
            }}},
        "C": {"type": "array", "minItems": 1,
              "items": {"type": "number", "exclusiveMinimum": 0}},
        "split": {"type": "object", "properties": {
            "kind": {"enum": ["kfold", "group", "explicit"]},
            "n_folds": {"type": "integer", "minimum": 2},
            "n_train_groups": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer"},
            "train_subjects": {"type": "array", "items": {"type": "string"}},
            "test_subjects": {"type": "array", "items": {"type": "string"}},
        }},
        "nu_relative": {"type": "boolean"},
        "corridor_radius": {"type": ["integer", "null"], "minimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
    },
}


def load_experiment_config(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
        jsonschema.validate(cfg, EXPERIMENT_SCHEMA)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise SchemaError(f"{path}: {where}: {exc.message}") from exc
    if isinstance(cfg["dataset"], dict):
        try:
            syn = dict(cfg["dataset"]["synthetic"])
            if "length_range" in syn:
                syn["length_range"] = tuple(syn["length_range"])
            cfg["_synthetic"] = SyntheticSpec(**syn)
        except (TypeError, ElasticGestureError) as exc:
            raise SchemaError(f"{path}: dataset/synthetic: {exc}") from exc
    else:
        cfg["dataset"] = str((path.parent / cfg["dataset"]).resolve())
    return cfg


def run_experiment(cfg: dict, workers: int = 1, seed: int = 0) -> CVReport:
    if "_synthetic" in cfg:
        seqs = generate_synthetic(cfg["_synthetic"])
    else:
        seqs = load_dataset(cfg["dataset"])
    split = SplitSpec.from_dict(dict({"seed": seed}, **cfg.get("split", {})))
    grid = [(k["id"], float(nu), float(k.get("alpha", 1.0)))
            for k in cfg["kernels"] for nu in k.get("nu", [1.0])]
    return cross_validate(
        seqs, split, grid, C_grid=cfg.get("C", [1.0]), L_grid=cfg.get("L", [15]),
        descriptors=cfg.get("descriptors", ["identity"]),
        modes=cfg.get("modes", ["adaptive-greedy"]),
        nu_relative=cfg.get("nu_relative", True),
        corridor_radius=cfg.get("corridor_radius"), workers=workers,
        tol=cfg.get("tol", 1e-3))


def accuracy_vs_L(report: CVReport) -> list[dict]:
    """Best configuration by mean test accuracy per (descriptor, mode, kernel, L)."""
    best: dict = {}
    for r in report.summary():
        key = (r["descriptor"], r["mode"], r["kernel"], r["L"])
        if key not in best or r["test_mean"] > best[key]["test_mean"]:
            best[key] = r
    return [best[k] for k in sorted(best, key=lambda k: (k[0], k[1], k[2], k[3]))]


def cmd_experiment(args) -> None:
    cfg = load_experiment_config(args.config)
    report = run_experiment(cfg, args.workers, args.seed)
    files = {"results.csv": report.to_csv(), "summary.csv": report.summary_csv(),
             "accuracy_vs_L.csv": rows_to_csv(accuracy_vs_L(report), (
                 "descriptor", "mode", "kernel", "L", "nu", "nu_effective", "alpha", "C",
                 "n_splits", "test_mean", "test_std", "train_mean", "train_std"))}
    for name, text in files.items():
        (args.out / name).write_text(text)
    _record(args.out, "experiment", [args.out / n for n in files])
    print(args.out / "results.csv")


def cmd_bench(args) -> None:
    if args.manifest:
        seqs = load_dataset(args.manifest)
    else:
        per_class = -(-(args.n_train + 1) // 5)
        seqs = generate_synthetic(SyntheticSpec(sequences_per_class=per_class, pose_dim=24,
                                                seed=args.seed))
    rows = bench_latency(seqs, args.kernels, args.L_grid, args.reps, args.descriptor,
                         args.mode, args.nu, args.alpha, args.C,
                         n_train=min(args.n_train, len(seqs) - 1))
    path = args.out / "latency.csv"
    path.write_text(rows_to_csv(rows, LATENCY_COLUMNS))
    _record(args.out, "bench", [path])
    for kid in args.kernels:
        rr = [r for r in rows if r["kernel"] == kid]
        if len(rr) > 1:
            slope = fit_loglog_slope([r["L"] for r in rr], [r["median_of_means_ms"] for r in rr])
            print(f"{kid}: log-log slope {slope:.3f}")


def _kernel_flags(p, kernel_default="rdtw_normalized"):
    p.add_argument("--kernel", choices=kern.KERNEL_IDS, default=kernel_default)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--corridor", type=int, default=None)
    p.add_argument("--nu-relative", action="store_true",
                   help="multiply --nu by the reciprocal mean squared distance of the data")


def _prep_flags(p):
    p.add_argument("--descriptor", default="identity")
    p.add_argument("--mode", choices=MODES, default="adaptive-greedy")
    p.add_argument("-L", type=int, default=15)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elastic-gestures", description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=_positive_int, default=1)
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic gesture dataset")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--tmin", type=int, default=40)
    p.add_argument("--tmax", type=int, default=120)
    p.add_argument("--dim", type=int, default=12)
    p.add_argument("--warp", type=float, default=0.6)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--translation", type=float, default=0.1)
    p.add_argument("--subjects", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("downsample", help="reduce every sequence to L poses")
    p.add_argument("--manifest", required=True)
    p.add_argument("--descriptor", default="identity")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("-L", type=int, required=True)
    p.set_defaults(func=cmd_downsample)

    p = sub.add_parser("gram", help="Gram matrix of a dataset")
    p.add_argument("--manifest", required=True)
    _kernel_flags(p)
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("train", help="train a one-vs-one SVM")
    p.add_argument("--manifest", required=True)
    _prep_flags(p)
    _kernel_flags(p)
    p.add_argument("-C", type=float, default=10.0)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify a dataset with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("experiment", help="grid cross-validation from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("bench", help="single-sequence classification latency")
    p.add_argument("--manifest")
    p.add_argument("--kernels", nargs="+", choices=kern.KERNEL_IDS,
                   default=["euclid_rbf", "dtw_rbf", "rdtw_normalized"])
    p.add_argument("--L-grid", dest="L_grid", type=int, nargs="+", default=[10, 15, 20, 25, 30])
    p.add_argument("--reps", type=_positive_int, default=30)
    p.add_argument("--n-train", type=_positive_int, default=600)
    p.add_argument("--descriptor", default="identity")
    p.add_argument("--mode", choices=MODES, default="adaptive-greedy")
    p.add_argument("--nu", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("-C", type=float, default=10.0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        args.func(args)
    except (ElasticGestureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
