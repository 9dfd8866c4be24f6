"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import DataFormatError, MVDLCSLError, NumericalError, ValidationError
from .evaluation import cross_validate
from .inference import fold_in, predict_proba
from .model import BlockDims, Hyperparams, init_model, validate
from .solver import fit
from .synthetic import SyntheticSpec, generate_synthetic

logger = logging.getLogger("mvdlcsl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _add_model_args(p):
    g = p.add_argument_group("model hyperparameters")
    for k, default, what in (("k1", 4, "common discriminative"), ("k2", 2, "common non-discriminative"),
                             ("k3", 4, "view-specific discriminative"),
                             ("k4", 2, "view-specific non-discriminative")):
        g.add_argument(f"--{k}", type=int, default=default, metavar="K",
                       help=f"{what} factors (default: %(default)s)")
    g.add_argument("--alpha", type=float, default=0.1, help="orthogonality weight (default: %(default)s)")
    g.add_argument("--beta", type=float, default=0.1, help="sparsity weight (default: %(default)s)")
    g.add_argument("--gamma", type=float, default=1.0, help="label-loss weight (default: %(default)s)")
    g.add_argument("--lambda", dest="lambda_ridge", type=float, default=1e-6, metavar="LAMBDA",
                   help="ridge term of the closed-form B solves (default: %(default)s)")
    g.add_argument("--loss", choices=("ce", "mse"), default="ce", help="label loss (default: %(default)s)")
    g.add_argument("--max-iters", type=int, default=300, metavar="N",
                   help="maximum number of sweeps (default: %(default)s)")
    g.add_argument("--tol", type=float, default=1e-5, help="relative objective tolerance (default: %(default)s)")
    g.add_argument("--seed", type=int, default=0, help="initialization seed (default: %(default)s)")


def _hyperparams(args) -> Hyperparams:
    return Hyperparams(
        dims=BlockDims(args.k1, args.k2, args.k3, args.k4),
        alpha=args.alpha, beta=args.beta, gamma=args.gamma, lambda_ridge=args.lambda_ridge,
        loss_mode=args.loss, max_iters=args.max_iters, rel_tol=args.tol, seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvdlcsl", description="Multi-view discriminant NMF with cross-entropy supervision.")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress logging on stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    # also accept -q after the command name; SUPPRESS keeps the top-level value otherwise
    quiet = argparse.ArgumentParser(add_help=False)
    quiet.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                       help="suppress progress logging on stderr")

    p = sub.add_parser("fit", parents=[quiet], help="fit a model on a dataset manifest")
    p.add_argument("--data", required=True, help="dataset manifest (JSON)")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--trace", help="trace CSV (default: <out>.trace.csv)")
    p.add_argument("--embeddings", help="write discriminative features of the training instances")
    _add_model_args(p)

    p = sub.add_parser("predict", parents=[quiet], help="predict labels for a dataset by fold-in")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="prediction CSV (default: stdout)")

    p = sub.add_parser("eval", parents=[quiet], help="stratified k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5, help="(default: %(default)s)")
    p.add_argument("--repeats", type=int, default=10, help="(default: %(default)s)")
    p.add_argument("--grid", help="file with one hyperparameter setting per line, e.g. 'alpha=0.1 beta=0.5'")
    p.add_argument("--jobs", type=int, default=1, help="parallel fold workers (default: %(default)s)")
    p.add_argument("--out", help="results CSV (default: stdout)")
    _add_model_args(p)

    p = sub.add_parser("synth", parents=[quiet], help="generate a planted synthetic dataset")
    p.add_argument("--n", type=int, default=200, help="(default: %(default)s)")
    p.add_argument("--classes", type=int, default=4, help="(default: %(default)s)")
    p.add_argument("--dims", type=_int_list, default=[30, 40],
                   help="comma-separated feature count per view (default: 30,40)")
    for k, default in (("k1", 4), ("k2", 2), ("k3", 4), ("k4", 2)):
        p.add_argument(f"--{k}", type=int, default=default, help="(default: %(default)s)")
    p.add_argument("--noise", type=float, default=0.01, help="(default: %(default)s)")
    p.add_argument("--separation", type=float, default=1.0, help="(default: %(default)s)")
    p.add_argument("--seed", type=int, default=7, help="(default: %(default)s)")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("validate", parents=[quiet], help="check a dataset manifest and its files")
    p.add_argument("--data", required=True)
    p.add_argument("--k1", type=int, default=1)
    p.add_argument("--k2", type=int, default=0)
    p.add_argument("--k3", type=int, default=0)
    p.add_argument("--k4", type=int, default=0)
    return parser


_GRID_KEYS = {"alpha": float, "beta": float, "gamma": float, "lambda": float, "lambda_ridge": float,
              "k1": int, "k2": int, "k3": int, "k4": int, "loss": str, "max_iters": int,
              "tol": float, "seed": int}


def _read_grid(path, base: Hyperparams) -> list:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        changes, dims = {}, list(base.dims.as_tuple())
        for item in line.replace(",", " ").split():
            key, _, val = item.partition("=")
            if key not in _GRID_KEYS or not val:
                raise DataFormatError(f"bad grid entry {item!r}", path, lineno)
            val = _GRID_KEYS[key](val)
            if key in ("k1", "k2", "k3", "k4"):
                dims[int(key[1]) - 1] = val
            else:
                changes[{"lambda": "lambda_ridge", "loss": "loss_mode", "tol": "rel_tol"}.get(key, key)] = val
        out.append((line, base.replace(dims=BlockDims(*dims), **changes)))
    return out


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_fit(args):
    data = io.load_dataset(args.data)
    hp = _hyperparams(args)
    model, trace = fit(data, hp)
    io.save_model(model, args.out)
    io.export_trace(trace, args.trace or f"{args.out}.trace.csv")
    if args.embeddings:
        io.export_embeddings(model, data, args.embeddings)
    print(f"status={trace.status} iterations={len(trace)} objective={trace.records[-1].total!r}")
    return EXIT_SOLVER if trace.status == "stalled" else EXIT_OK


def cmd_predict(args):
    model = io.load_model(args.model)
    data = io.load_dataset(args.data)
    hp = Hyperparams.from_dict(model.meta["hyperparams"]) if "hyperparams" in model.meta \
        else Hyperparams(dims=model.dims)
    coefs = fold_in(model, data.views, hp)
    P = predict_proba(model, coefs)
    pred = np.argmax(P, axis=0)
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance", "predicted"] + [f"p{i}" for i in range(P.shape[0])])
        for j in range(P.shape[1]):
            w.writerow([j, int(pred[j])] + [io.fmt(p) for p in P[:, j]])
    finally:
        if fh is not sys.stdout:
            fh.close()
    labeled = data.mask
    if labeled.any():
        acc = float(np.mean(pred[labeled] == data.labels[labeled]))
        logger.info("accuracy on labeled instances: %.4f", acc)
    return EXIT_OK


def cmd_eval(args):
    data = io.load_dataset(args.data)
    base = _hyperparams(args)
    settings = _read_grid(args.grid, base) if args.grid else [("mvdlcsl", base)]
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "dataset", "repeat", "fold", "accuracy"])
        for label, hp in settings:
            res = cross_validate(data, hp, k=args.folds, repeats=args.repeats, seed=args.seed,
                                 jobs=args.jobs, method=label)
            res.write_rows(w)
            logger.info("%s: accuracy %.4f +- %.4f (population std)", label, res.mean, res.std)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_synth(args):
    spec = SyntheticSpec(n=args.n, num_classes=args.classes, feature_dims=tuple(args.dims),
                         dims=BlockDims(args.k1, args.k2, args.k3, args.k4),
                         noise=args.noise, separation=args.separation, seed=args.seed)
    data, planted, _ = generate_synthetic(spec)
    out = Path(args.out_dir)
    manifest = io.save_dataset(data, out, name=f"synthetic-{args.seed}")
    io.save_model(planted, out / "planted_model.json")
    print(manifest)
    return EXIT_OK


def cmd_validate(args):
    data = io.load_dataset(args.data)
    hp = Hyperparams(dims=BlockDims(args.k1, args.k2, args.k3, args.k4))
    problems = validate(init_model(data, hp), data)
    counts = np.bincount(data.labels[data.mask], minlength=data.num_classes)
    print(f"name={data.name} views={data.n_views} instances={data.n} "
          f"features={','.join(map(str, data.feature_dims))} classes={data.num_classes} "
          f"labeled={int(data.mask.sum())} per_class={','.join(map(str, counts))}")
    for p in problems:
        print(f"violation: {p}")
    return EXIT_DATA if problems else EXIT_OK


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "eval": cmd_eval,
            "synth": cmd_synth, "validate": cmd_validate}


def _setup_logging(quiet):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.WARNING if quiet else logging.INFO)
    logger.propagate = False


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    _setup_logging(args.quiet)
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataFormatError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MVDLCSLError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main():
    sys.exit(run())
