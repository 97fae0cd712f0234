"""Command-line interface and on-disk formats.

Subcommands: train, predict, evaluate, benchmark, sweep, inspect.
Exit codes: 0 success, 2 data or model-file error, 3 empty fairness group,
1 anything else.  Log verbosity comes from FAIRLOGLOSS_LOG_LEVEL.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, data_io
from .errors import DataError, FairLogLossError, ModelFileError, ZeroGroupRate
from .eval_metrics import METRICS, DEFAULT_C_GRID, evaluate, run_benchmark, sweep_regularization
from .fairness import CriterionKind, FairnessSpec, constraints_for
from .inference import THRESHOLD, predict_proba
from .model_core import ConstraintSide, GroupRates, reshaping_curve, truncation_bounds
from .training import Model, TrainConfig, train

log = logging.getLogger("fairlogloss")

MODEL_FORMAT = "fairlogloss-model"
MODEL_VERSION = 1
REPORT_VERSION = 1
LOG_ENV = "FAIRLOGLOSS_LOG_LEVEL"


# ---------------------------------------------------------------- file helpers

def atomic_write(path, text):
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def save_model(model: Model, path, schema=None):
    """Serialize to JSON; floats go through repr so they round-trip exactly."""
    spec = model.spec
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "criterion": spec.kind.value if spec.kind else "none",
        "feature_names": list(model.feature_names),
        "theta": [float(t) for t in model.theta],
        "constraints": [
            {
                "id": c.constraint_id,
                "label": c.label,
                "lambda": float(lam),
                "p_gamma1": r.p_gamma1,
                "p_gamma0": r.p_gamma0,
            }
            for c, r, lam in zip(spec.constraints, spec.rates, model.lambdas)
        ],
        "preprocess": model.preprocess.to_dict() if model.preprocess is not None else None,
        "schema": asdict(schema) if schema is not None else None,
        "config": model.config.to_dict() if model.config else None,
        "diagnostics": {
            k: model.diagnostics[k]
            for k in ("objective", "grad_inf_norm", "iterations", "status", "train_gaps")
            if k in model.diagnostics
        },
    }
    atomic_write(path, json.dumps(doc, indent=1) + "\n")


def load_model(path):
    """Returns (Model, DatasetSchema or None)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFileError(f"{path} is not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFileError(f"{path}: unsupported model version {doc.get('version')!r}")
    try:
        kind = CriterionKind.parse(doc["criterion"])
        cons = constraints_for(kind)
        entries = doc["constraints"]
        if [e["id"] for e in entries] != [c.constraint_id for c in cons]:
            raise ModelFileError(f"{path}: constraints do not match criterion {doc['criterion']}")
        rates = tuple(GroupRates(e["p_gamma1"], e["p_gamma0"]) for e in entries)
        theta = np.asarray(doc["theta"], dtype=float)
        names = list(doc["feature_names"])
        if len(names) != len(theta) - 1:
            raise ModelFileError(f"{path}: {len(names)} feature names for {len(theta)} weights")
        pre = doc.get("preprocess")
        schema = doc.get("schema")
        model = Model(
            theta=theta,
            lambdas=tuple(float(e["lambda"]) for e in entries),
            spec=FairnessSpec(kind, cons, rates),
            feature_names=names,
            preprocess=data_io.PreprocessStats.from_dict(pre) if pre else None,
            config=TrainConfig(**doc["config"]) if doc.get("config") else None,
            diagnostics=doc.get("diagnostics", {}),
        )
        return model, (data_io.DatasetSchema(**schema) if schema else None)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: malformed model file ({exc})") from exc


def _encode_for_model(model, raw):
    if model.preprocess is None:
        raise ModelFileError("model file carries no preprocessing statistics")
    ds = data_io.apply(model.preprocess, raw)
    if ds.X.shape[1] != len(model.theta) - 1:
        raise ModelFileError("encoded data does not match the model's feature count")
    return ds


def _load_data(args, require_label=True):
    schema = data_io.DatasetSchema.load(args.schema)
    return data_io.load_csv(args.data, schema, require_label=require_label), schema


def _config(args):
    return TrainConfig(reg_C=args.reg_C, max_iters=args.max_iters)


# ---------------------------------------------------------------- commands

def cmd_train(args):
    raw, schema = _load_data(args)
    ds, stats = data_io.fit_transform(raw)
    model = train(ds, args.criterion, _config(args))
    model.preprocess = stats
    model.diagnostics["seed"] = args.seed
    save_model(model, args.out, schema)
    d = model.diagnostics
    print(f"objective {d['objective']!r}")
    for c, lam, gap in zip(model.spec.constraints, model.lambdas, d["train_gaps"]):
        print(f"lambda[{c.constraint_id}] {lam!r}  train_gap {gap!r}")
    print(f"iterations {d['iterations']} ({d['status']})  grad_inf_norm {d['grad_inf_norm']:.3e}")
    return 0


def cmd_predict(args):
    model, schema = load_model(args.model)
    schema = data_io.DatasetSchema.load(args.schema) if args.schema else schema
    if schema is None:
        raise ModelFileError("no schema in the model file; pass --schema")
    raw = data_io.load_csv(args.data, schema, require_label=False)
    ds = _encode_for_model(model, raw)
    prob = predict_proba(model, ds.X, ds.a, on_degenerate=args.on_degenerate)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "prob_positive", "label"])
    for i, p in enumerate(prob):
        w.writerow([i, repr(float(p)), int(p > THRESHOLD)])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_evaluate(args):
    model, schema = load_model(args.model)
    schema = data_io.DatasetSchema.load(args.schema) if args.schema else schema
    if schema is None:
        raise ModelFileError("no schema in the model file; pass --schema")
    raw = data_io.load_csv(args.data, schema)
    report = evaluate(model, _encode_for_model(model, raw))
    _emit(json.dumps(asdict(report), indent=1) + "\n", args.out)
    return 0


def format_report(summary, config, args_meta):
    """Benchmark report: versioned header, one row per split per model, summary block."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"# fairlogloss benchmark report v{REPORT_VERSION}\n")
    meta = dict(args_meta)
    meta.update(
        criterion=summary.kind,
        splits=summary.n_splits,
        split_fraction=summary.split_fraction,
        reg_C=config.reg_C,
        fingerprint=summary.fingerprint,
    )
    buf.write("# " + " ".join(f"{k}={_fmt(v)}" for k, v in meta.items()) + "\n")
    w.writerow(["split", "seed", "model", "status", "reg_C", "n_test", *METRICS, "lambdas"])
    for r in summary.results:
        rep = r.report
        vals = [getattr(rep, m) if rep else None for m in METRICS]
        w.writerow([
            r.split, r.seed, r.model, "ok" if rep else (r.error or "failed"),
            _fmt(r.reg_C), rep.n_test if rep else "NA",
            *map(_fmt, vals), ";".join(repr(float(l)) for l in r.lambdas),
        ])
    buf.write(f"# summary v{REPORT_VERSION}\n")
    w.writerow(["model", "metric", "mean", "std", "n"])
    for model in ("fair", "baseline"):
        n = len(summary.reports(model))
        for m in METRICS:
            mean, std = summary.stats(model, m)
            w.writerow([model, m, _fmt(mean), _fmt(std), n])
    return buf.getvalue()


def cmd_benchmark(args):
    raw, _ = _load_data(args)
    config = _config(args)
    grid = _grid(args.select_C) if args.select_C else None
    summary = run_benchmark(
        raw, args.criterion, config,
        n_splits=args.splits, split_fraction=args.split_fraction,
        base_seed=args.seed, select_C=grid,
    )
    meta = {"data": Path(args.data).name, "base_seed": args.seed}
    _emit(format_report(summary, config, meta), args.out)
    s = summary.summary()
    for model in ("fair", "baseline"):
        parts = []
        for m in METRICS:
            mean, std = s[model][m]
            parts.append(f"{m}={_fmt(mean)}" if mean is None else f"{m}={mean:.4f}+-{std:.4f}")
        print(model, " ".join(parts), file=sys.stderr)
    return 0


def _grid(text):
    try:
        grid = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise SystemExit(f"bad C grid {text!r}") from None
    if not grid:
        raise SystemExit("empty C grid")
    return grid


def cmd_sweep(args):
    raw, _ = _load_data(args)
    best, losses = sweep_regularization(
        raw, args.criterion, _grid(args.grid), args.validation_fraction, args.seed,
        TrainConfig(max_iters=args.max_iters),
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["reg_C", "validation_log_loss", "best"])
    for C, v in losses.items():
        w.writerow([repr(C), repr(v), int(C == best)])
    _emit(buf.getvalue(), args.out)
    print(f"best reg_C {best!r}", file=sys.stderr)
    return 0


def threshold_table(model):
    """Rows (constraint, group, kind, value, lambda, rate), one per clamped group.

    A nonzero multiplier caps one group and floors the other; the value may
    fall outside [0, 1], in which case the clamp never binds.
    """
    rows = []
    for c, r, lam in zip(model.spec.constraints, model.spec.rates, model.lambdas):
        if lam == 0:
            continue
        for side, group in ((ConstraintSide.GAMMA1, "gamma1"), (ConstraintSide.GAMMA0, "gamma0")):
            cap, floor, _ = truncation_bounds(np.array([side]), lam, r.p_gamma1, r.p_gamma0)
            if np.isfinite(cap[0]):
                rows.append((c.constraint_id, group, "cap", float(cap[0]), lam, r.for_side(side)))
            else:
                rows.append((c.constraint_id, group, "floor", float(floor[0]), lam, r.for_side(side)))
    return rows


def cmd_inspect(args):
    model, _ = load_model(args.model)
    values = [float(v) for v in args.curve.split(",") if v.strip()] if args.curve else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda_over_p", "P", "Q"])
    for v in values:
        for p, q in reshaping_curve(v, ConstraintSide.GAMMA1, args.points):
            w.writerow([repr(v), repr(float(p)), repr(float(q))])
    if args.out:
        atomic_write(args.out, buf.getvalue())
    tbuf = io.StringIO()
    tw = csv.writer(tbuf, lineterminator="\n")
    tw.writerow(["constraint", "group", "kind", "threshold", "lambda", "rate"])
    for row in threshold_table(model):
        tw.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4]), repr(row[5])])
    _emit(tbuf.getvalue(), args.thresholds)
    return 0


def _emit(text, out):
    if out and out != "-":
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- parser

def build_parser():
    ap = argparse.ArgumentParser(prog="fairlogloss", description="Fair robust log-loss classifier.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("data", help="headered CSV file")
        p.add_argument("--schema", required=True, help="schema INI path or adult/compas/law")
        p.add_argument("--criterion", default="dp", choices=["dp", "eopp", "eodds", "none"])
        p.add_argument("--max-iters", type=int, default=TrainConfig.max_iters)

    p = sub.add_parser("train", help="fit a model on a CSV file")
    data_args(p)
    p.add_argument("--reg-C", dest="reg_C", type=float, default=TrainConfig.reg_C)
    p.add_argument("--seed", type=int, default=0, help="recorded in the model file")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score rows of a CSV file")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--schema", help="override the schema stored in the model")
    p.add_argument("--on-degenerate", choices=["raise", "base"], default="base")
    p.add_argument("--out", help="CSV output (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="error and fairness violations on labeled data")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--schema", help="override the schema stored in the model")
    p.add_argument("--out", help="JSON output (default stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="fair vs unconstrained model over random splits")
    data_args(p)
    p.add_argument("--reg-C", dest="reg_C", type=float, default=TrainConfig.reg_C)
    p.add_argument("--splits", type=int, default=20)
    p.add_argument("--split-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0, help="split i uses seed + i")
    p.add_argument("--select-C", dest="select_C", default=None,
                   help="comma-separated grid; choose C per split by held-out log loss")
    p.add_argument("--out", help="report file (default stdout)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep", help="choose C by held-out log loss")
    data_args(p)
    p.add_argument("--grid", default=",".join(map(str, DEFAULT_C_GRID)))
    p.add_argument("--validation-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="reshaping curves and truncation thresholds")
    p.add_argument("model")
    p.add_argument("--curve", default="", help="comma-separated lambda/p values")
    p.add_argument("--points", type=int, default=11)
    p.add_argument("--out", help="curve CSV file")
    p.add_argument("--thresholds", help="threshold table CSV (default stdout)")
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None):
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ZeroGroupRate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FairLogLossError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
