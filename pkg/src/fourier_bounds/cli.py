"""Command-line interface: gen-data, train, price, evaluate, bench.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys

from . import pipeline
from .bounds import BoundValues, direct_bounds
from .carr_madan import CarrMadanTuning, optimal_tuning_search, price_call_cm
from .cos import price_cos, tuning_from_bounds
from .exceptions import FourierBoundsError, ModelFormatError
from .heston import HestonParams, MarketContext, OptionSpec
from .surrogates import SurrogateBundle, load_model, save_model

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _emit(rows, fmt, out=None):
    """Write a list of flat dicts as CSV, JSON or aligned text."""
    out = out or sys.stdout
    if fmt == "json":
        json.dump(rows if len(rows) != 1 else rows[0], out, indent=2, default=float)
        out.write("\n")
        return
    if not rows:
        return
    keys = list(rows[0])
    if fmt == "csv":
        w = csv.DictWriter(out, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return
    for row in rows:
        out.write("  ".join(f"{k}={_text(v)}" for k, v in row.items()) + "\n")


def _text(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _market(args):
    return MarketContext(args.s0, args.rate)


def _add_market(p):
    p.add_argument("--s0", type=float, default=100.0, help="spot price")
    p.add_argument("--strike", type=float, default=100.0)
    p.add_argument("--rate", type=float, default=0.0, help="risk-free rate")
    p.add_argument("--kind", choices=("call", "put"), default="call")


def _add_format(p):
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")


def _parse_eps_list(text):
    try:
        values = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tolerance list {text!r}") from None
    return values


def _parse_named_models(specs):
    """``name=path`` or ``name=mu8.json,i20.json``; ``sdt`` means the shipped trees."""
    models = {}
    for spec in specs or ():
        if "=" not in spec:
            raise UsageError(f"--models entries look like name=path, got {spec!r}")
        name, path = spec.split("=", 1)
        models[name] = _load_bound_pair(path)
    return models


def _load_bound_pair(path):
    if path == "sdt":
        return pipeline.shipped_sdt()
    parts = path.split(",")
    if len(parts) == 2:
        pair = tuple(load_model(p) for p in parts)
        targets = [m.target for m in pair]
        if targets == ["i20", "mu8"]:
            pair = pair[::-1]
        return pair
    model = load_model(parts[0])
    if isinstance(model, SurrogateBundle) and {"mu8", "i20"} <= set(model.members):
        return model.members["mu8"], model.members["i20"]
    raise ModelFormatError(f"{path}: need a mu8,i20 pair of model files or a bundle holding both")


def cmd_gen_data(args):
    spec = OptionSpec(args.strike, 1.0, args.kind)

    def progress(draws, n_kept):
        if args.verbose and draws % 100 == 0:
            print(f"draws={draws} kept={n_kept}", file=sys.stderr)

    samples = pipeline.generate_dataset(args.count, args.seed, spec=spec, mkt=_market(args),
                                        cross_check=not args.no_cross_check, with_cm=args.with_cm,
                                        until_kept=args.until_kept, progress=progress)
    pipeline.write_dataset(samples, args.out)
    counts = {s: 0 for s in pipeline.STATUSES}
    for s in samples:
        counts[s.status] += 1
    _emit([{"out": args.out, "rows": len(samples), **counts}], args.format)


def _hyper(args):
    hyper = {}
    if args.model == "tree":
        if args.max_depth is not None:
            hyper["max_depth"] = None if args.max_depth < 0 else args.max_depth
        if args.min_node_size is not None:
            hyper["min_node_size"] = args.min_node_size
    elif args.model == "forest":
        for key in ("num_trees", "min_node_size", "features_per_split"):
            if getattr(args, key) is not None:
                hyper[key] = getattr(args, key)
        if args.max_depth is not None:
            hyper["max_depth"] = None if args.max_depth < 0 else args.max_depth
    else:
        if args.hidden is not None:
            hyper["hidden"] = tuple(int(x) for x in args.hidden.split(",") if x)
        for key in ("activation", "epochs", "batch_size", "learning_rate", "validation_split"):
            if getattr(args, key) is not None:
                hyper[key] = getattr(args, key)
    return hyper


def cmd_train(args):
    samples = pipeline.read_dataset(args.input)
    ks = pipeline.kept(samples)
    if args.n_train is not None:
        ks = ks[:args.n_train]
    model = pipeline.train_surrogate(ks, args.target, args.model, seed=args.seed, hyper=_hyper(args))
    save_model(model, args.out_model)
    _emit([{"out_model": args.out_model, "target": args.target, "model": args.model,
            "n_train": len(ks)}], args.format)


def cmd_price(args):
    params = HestonParams(args.kappa, args.theta, args.xi, args.rho, args.v0)
    mkt = _market(args)
    spec = OptionSpec(args.strike, args.T, args.kind)
    row = {"method": args.method, "kind": args.kind, "strike": args.strike, "T": args.T}
    x = [[args.kappa, args.theta, args.xi, args.rho, args.v0, args.T]]
    if args.method == "cos":
        if args.bounds == "direct":
            bounds = direct_bounds(args.T, params, mkt, n=args.moment_order, s=20)
        elif args.bounds.startswith("model:"):
            mu_model, i_model = _load_bound_pair(args.bounds[len("model:"):])
            if args.moment_order != 8:
                raise UsageError("surrogate bounds predict mu_8; use --moment-order 8")
            bounds = BoundValues(float(mu_model.predict(x)[0]), 8, float(i_model.predict(x)[0]), 20)
        else:
            raise UsageError("--bounds must be 'direct' or 'model:<file>'")
        tuning = tuning_from_bounds(args.eps, bounds, args.strike, args.rate, args.T)
        price = price_cos(spec, tuning, params, mkt)
        row.update(eps=args.eps, mu_n=bounds.mu_n, n=bounds.n, i_s=bounds.i_s,
                   half_width=tuning.half_width, num_terms=tuning.num_terms, price=price)
    else:
        if args.kind != "call":
            raise UsageError("the Carr-Madan pricer handles calls only")
        call = OptionSpec(args.strike, args.T, "call")
        if args.alpha is not None:
            alpha, n = args.alpha, args.grid_points or 4096
        elif args.bounds == "direct":
            ref = price_cos(call, tuning_from_bounds(1e-9, direct_bounds(args.T, params, mkt),
                                                     args.strike, args.rate, args.T), params, mkt)
            alpha, n = optimal_tuning_search(call, params, mkt, ref, args.eps,
                                             upper_limit=args.upper_limit)
        elif args.bounds.startswith("model:"):
            bundle = load_model(args.bounds[len("model:"):])
            if not isinstance(bundle, SurrogateBundle) or not {"alpha", "n"} <= set(bundle.members):
                raise ModelFormatError("Carr-Madan surrogates are bundles with members alpha and n")
            pred = bundle.predict(x)
            alpha = float(pred["alpha"][0])
            # doubling rule: twice the predicted grid size
            n = 2 * max(2, 2 * math.ceil(float(pred["n"][0]) / 2.0))
        else:
            raise UsageError("--bounds must be 'direct' or 'model:<file>'")
        if args.grid_points is not None:
            n = args.grid_points
        tuning = CarrMadanTuning(alpha, args.upper_limit, n)
        price = price_call_cm(call, tuning, params, mkt)
        row.update(alpha=alpha, upper_limit=args.upper_limit, grid_points=n, price=price)
    _emit([row], args.format)


def cmd_evaluate(args):
    samples = pipeline.read_dataset(args.data)
    test = pipeline.kept(samples)[args.skip:]
    if args.limit is not None:
        test = test[:args.limit]
    models = _parse_named_models(args.models)
    spec = OptionSpec(args.strike, 1.0, args.kind)
    report = pipeline.evaluate_accuracy(models, test, spec, _market(args), args.eps_list,
                                        include_direct=not args.no_direct)
    if args.format == "json":
        _emit([report.to_dict()], "json")
    else:
        _emit(report.rows(), args.format)


def cmd_bench(args):
    samples = pipeline.read_dataset(args.data)
    test = pipeline.kept(samples)[args.skip:]
    if args.limit is not None:
        test = test[:args.limit]
    models = _parse_named_models(args.models)
    spec = OptionSpec(args.strike, 1.0, args.kind)
    result = pipeline.benchmark_timing(test, spec, _market(args), args.eps, models=models,
                                       repeats=args.repeats)
    _emit([result], args.format)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fourier-bounds",
        description="Error-controlled Fourier pricing under Heston with surrogate bound models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a filtered dataset with reference prices")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--with-cm", action="store_true", help="also search Carr-Madan optima (slow)")
    p.add_argument("--no-cross-check", action="store_true",
                   help="skip the Carr-Madan confirmation of reference prices")
    p.add_argument("--until-kept", action="store_true",
                   help="draw until COUNT samples are kept; write kept samples only")
    _add_market(p)
    _add_format(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a surrogate on a dataset")
    p.add_argument("--target", choices=("mu8", "i20", "cm"), required=True)
    p.add_argument("--model", choices=("tree", "forest", "mlp"), required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, help="use only the first N kept samples")
    p.add_argument("--max-depth", type=int, help="negative for unlimited")
    p.add_argument("--min-node-size", type=int)
    p.add_argument("--num-trees", type=int)
    p.add_argument("--features-per-split", type=int)
    p.add_argument("--hidden", help="comma-separated hidden layer widths")
    p.add_argument("--activation", choices=("sigmoid", "relu"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--validation-split", type=float)
    _add_format(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("price", help="price one option")
    p.add_argument("--method", choices=("cos", "carr-madan"), default="cos")
    p.add_argument("--eps", type=float, default=1e-7, help="error tolerance (target for Carr-Madan)")
    p.add_argument("--bounds", default="direct", help="'direct' or 'model:<file>'")
    p.add_argument("--moment-order", type=int, default=8, choices=(2, 4, 6, 8))
    for name in ("kappa", "theta", "xi", "rho", "v0", "T"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--alpha", type=float, help="Carr-Madan damping factor (skips the search)")
    p.add_argument("--grid-points", type=int, help="Carr-Madan N")
    p.add_argument("--upper-limit", type=float, default=1200.0, help="Carr-Madan M")
    _add_market(p)
    _add_format(p)
    p.set_defaults(func=cmd_price)

    for name, func, helptext in (("evaluate", cmd_evaluate, "accuracy per tolerance and method"),
                                 ("bench", cmd_bench, "timing of bound computation and pricing")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", required=True)
        p.add_argument("--models", nargs="*", default=[],
                       help="name=mu8.json,i20.json | name=bundle.json | name=sdt")
        p.add_argument("--skip", type=int, default=0, help="skip the first N kept samples")
        p.add_argument("--limit", type=int)
        _add_market(p)
        _add_format(p)
        if name == "evaluate":
            p.add_argument("--eps-list", type=_parse_eps_list,
                           default=pipeline.DEFAULT_EPS_LIST)
            p.add_argument("--no-direct", action="store_true")
        else:
            p.add_argument("--eps", type=float, default=1e-7)
            p.add_argument("--repeats", type=int, default=5)
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ModelFormatError, FourierBoundsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
