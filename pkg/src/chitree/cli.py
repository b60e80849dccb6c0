"""Command-line interface: ``chitree {train,predict,cv,simulate,export,generate}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .dataset import DatasetError, Schema, encode_rows, load_dataset, read_costs, read_csv_rows, read_priors
from .ensemble import Ensemble, model_from_dict, model_to_dict
from .harness import (
    crossval_error,
    fit_model,
    gen_chessboard,
    gen_circle_lines,
    generate,
    report_json,
    run_bias_simulation,
)
from .tree import GrowConfig, dumps, export_dot, export_text, training_cost

EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 1, 2, 3
METHODS = ("S", "K", "N", "BG", "GF")
SIM_KINDS = ("bias-independence", "bias-dependence", "chessboard", "circle-lines")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _positive(name):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer") from None
        if v < 1:
            raise argparse.ArgumentTypeError(f"{name} must be >= 1")
        return v
    return conv


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chitree", description="Classification trees with unbiased variable selection.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True, help="CSV file with a header row")
            sp.add_argument("--schema", required=True, help="schema file of 'name role' lines")
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--threads", type=_positive("--threads"), default=1)

    def fitting(sp):
        sp.add_argument("--method", choices=METHODS, default="S")
        sp.add_argument("--m0", type=_positive("--m0"), default=5)
        sp.add_argument("--folds", type=int, default=10)
        sp.add_argument("--trees", type=_positive("--trees"), default=None,
                        help="ensemble size (BG default 100, GF default 500)")
        sp.add_argument("--priors", help="JSON file mapping class label to prior")
        sp.add_argument("--costs", help='JSON file {"labels": [...], "matrix": [[...]]}')
        sp.add_argument("--se-rule", type=float, default=0.0)

    t = sub.add_parser("train", help="grow and prune a model")
    common(t)
    fitting(t)
    t.add_argument("--out", required=True, help="model file to write")

    pr = sub.add_parser("predict", help="predict classes for a CSV")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", help="predictions CSV (stdout if omitted)")
    pr.add_argument("--leaf", action="store_true", help="add the leaf id column (single trees)")

    c = sub.add_parser("cv", help="cross-validated misclassification cost")
    common(c)
    fitting(c)
    c.add_argument("--out")
    c.add_argument("--format", choices=("json", "csv"), default="json")

    s = sub.add_parser("simulate", help="run a synthetic experiment")
    s.add_argument("kind", choices=SIM_KINDS)
    common(s, data=False)
    s.add_argument("--trials", type=int, default=None,
                   help="bias trials (default 2000) or number of seeds for chessboard/circle-lines (default 1)")
    s.add_argument("--out")
    s.add_argument("--format", choices=("json", "csv"), default="json")

    e = sub.add_parser("export", help="render a model as text or DOT")
    e.add_argument("--model", required=True)
    e.add_argument("--format", choices=("text", "dot"), default="text")
    e.add_argument("--out")

    g = sub.add_parser("generate", help="write a synthetic dataset as CSV plus schema")
    g.add_argument("kind", choices=SIM_KINDS)
    g.add_argument("--n", type=_positive("--n"), default=None)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True, help="CSV path; the schema goes next to it with suffix .schema")
    return p


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args):
    try:
        schema = Schema.read(args.schema)
    except OSError as e:
        raise DatasetError(f"cannot read schema: {e}") from None
    if not Path(args.data).is_file():
        raise DatasetError(f"data file not found: {args.data}")
    return load_dataset(Path(args.data), schema)


def _fit_options(args, ds):
    if args.folds < 2:
        raise UsageError("--folds must be >= 2")
    priors = read_priors(args.priors, ds.classes) if args.priors else None
    costs = read_costs(args.costs, ds.classes) if args.costs else None
    cfg = GrowConfig(m0=args.m0, folds=args.folds, seed=args.seed, se_rule=args.se_rule)
    return cfg, priors, costs


def cmd_train(args) -> int:
    ds = _load(args)
    cfg, priors, costs = _fit_options(args, ds)
    model = fit_model(ds, args.method, cfg, priors, costs, args.trees, n_jobs=args.threads)
    Path(args.out).write_text(dumps(model_to_dict(model)))
    pred = model.predict_dataset(ds)
    c = model.costs if not isinstance(model, Ensemble) else model.members[0].costs
    leaves = model.n_leaves
    print(f"method {args.method}: "
          + (f"{leaves} leaves" if not isinstance(model, Ensemble)
             else f"{len(model.members)} trees, mean {leaves:.2f} leaves"))
    print(f"training misclassifications: {int((pred != ds.y).sum())}/{ds.n_rows}; "
          f"mean misclassification cost {float(c[pred, ds.y].mean()):.6g}")
    return 0


def _read_model(path):
    try:
        return model_from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise DatasetError(f"cannot read model file {path}: {e}") from None


def cmd_predict(args) -> int:
    model = _read_model(args.model)
    if not Path(args.data).is_file():
        raise DatasetError(f"data file not found: {args.data}")
    header, rows = read_csv_rows(Path(args.data))
    cols = encode_rows(model.names, model.kinds, model.levels, header, rows)
    pred = model.predict_codes(cols, len(rows))
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    leaf = args.leaf and not isinstance(model, Ensemble)
    w.writerow(["predicted"] + (["leaf"] if leaf else []))
    leaves = model.apply(cols, len(rows)) if leaf else None
    for i, p in enumerate(pred):
        w.writerow([model.classes[p]] + ([int(leaves[i])] if leaf else []))
    _emit(out.getvalue(), args.out)
    return 0


def cmd_cv(args) -> int:
    ds = _load(args)
    cfg, priors, costs = _fit_options(args, ds)
    res = crossval_error(ds, args.method, args.folds, args.seed, cfg, priors, costs, args.trees,
                         n_jobs=args.threads)
    res["method"] = args.method
    if args.format == "json":
        _emit(report_json(res), args.out)
    else:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["fold", "error"])
        for f, e in enumerate(res["per_fold"]):
            w.writerow([f, f"{e:.6g}"])
        w.writerow(["mean", f"{res['error']:.6g}"])
        _emit(out.getvalue(), args.out)
    print(f"{args.folds}-fold CV misclassification cost ({args.method}): {res['error']:.4f}",
          file=sys.stderr if not args.out else sys.stdout)
    return 0


def _experiment_rows(kind, trials, seed, threads):
    rows = []
    gen, methods = (gen_chessboard, ("S",)) if kind == "chessboard" else (gen_circle_lines, ("K", "N"))
    for r in range(trials):
        ds = gen(seed=seed + r)
        for m in methods:
            tree = fit_model(ds, m, GrowConfig(seed=seed + r), n_jobs=threads)
            errors, _ = training_cost(tree, ds)
            rows.append({"seed": seed + r, "method": m, "n": ds.n_rows, "leaves": tree.n_leaves,
                         "training_errors": errors})
    return rows


def cmd_simulate(args) -> int:
    trials = args.trials
    if trials is not None and trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.kind.startswith("bias-"):
        rep = run_bias_simulation(args.kind[5:], trials or 2000, args.seed, n_jobs=args.threads)
        _emit(report_json(rep.to_dict()) if args.format == "json" else rep.to_csv(), args.out)
        summary = ", ".join(f"{n}={p:.4f}" for n, p in zip(rep.names, rep.probabilities))
        print(f"selection probabilities over {rep.trials} trials: {summary}",
              file=sys.stdout if args.out else sys.stderr)
        return 0
    rows = _experiment_rows(args.kind, trials or 1, args.seed, args.threads)
    if args.format == "json":
        _emit(report_json({"kind": args.kind, "runs": rows}), args.out)
    else:
        out = io.StringIO()
        w = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        _emit(out.getvalue(), args.out)
    for r in rows:
        print(f"seed {r['seed']} method {r['method']}: {r['leaves']} leaves, "
              f"{r['training_errors']}/{r['n']} training errors",
              file=sys.stdout if args.out else sys.stderr)
    return 0


def cmd_export(args) -> int:
    model = _read_model(args.model)
    if isinstance(model, Ensemble):
        raise UsageError("export renders single trees only")
    _emit(export_text(model) if args.format == "text" else export_dot(model), args.out)
    return 0


def cmd_generate(args) -> int:
    ds = generate(args.kind, args.n, args.seed)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        ds.to_csv(fh)
    out.with_suffix(".schema").write_text(ds.schema().dumps())
    print(f"wrote {ds.n_rows} rows to {out} and schema to {out.with_suffix('.schema')}")
    return 0


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "cv": cmd_cv, "simulate": cmd_simulate,
            "export": cmd_export, "generate": cmd_generate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"chitree: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, OSError) as e:
        print(f"chitree: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"chitree: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
