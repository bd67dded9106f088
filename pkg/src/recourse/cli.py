"""Command-line entry points.

Verbs: train (fit and save a model bundle), recommend (one instance),
sweep (one instance across budgets), experiment (the full validation
pipeline), serve (HTTP service), probe-h (indirect-estimator timing).
Exit codes: 0 ok, 1 config error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

from recourse.core import ConfigError, DataError, RecourseError


def _cmd_train(args):
    from recourse.harness import load_config, train_bundle

    config = load_config(args.config)
    bundle = train_bundle(config)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(bundle.to_json(), fh)
    meta = bundle.train_meta
    print(f"trained {config.model_type} bundle ({meta}) -> {args.out}")
    return 0


def _load_bundle(path):
    from recourse.harness import ModelBundle

    with open(path, encoding="utf-8") as fh:
        return ModelBundle.from_json(json.load(fh))


def _read_values(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("instance file must be a JSON object of feature: value")
    return doc


def _cmd_recommend(args):
    from recourse.harness import recommend_one

    bundle = _load_bundle(args.bundle)
    report = recommend_one(
        bundle,
        _read_values(args.instance),
        args.budget,
        optimizer=args.optimizer,
    )
    json.dump(report.to_json(), sys.stdout, indent=2)
    print()
    return 0


def _cmd_sweep(args):
    from recourse.harness import recommend_one

    bundle = _load_bundle(args.bundle)
    values = _read_values(args.instance)
    budgets = _parse_budget_arg(args.budgets)
    for b in budgets:
        report = recommend_one(bundle, values, b, optimizer=args.optimizer)
        print(json.dumps(report.to_json()))
    return 0


def _parse_budget_arg(text):
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("budget range must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("budget step must be positive")
        out, b = [], start
        while b <= stop + 1e-12:
            out.append(round(b, 10))
            b += step
        return out
    return [float(p) for p in text.split(",")]


def _cmd_experiment(args):
    from recourse.harness import frequency_table, load_config, run_pipeline

    config = load_config(args.config)
    if args.swap_roles:
        config = dataclasses.replace(config, swap_roles=True)
    result = run_pipeline(config)
    rows = result.summary_rows()
    fields = ["budget", "mean_validated_probability", "mean_epsilon", "mean_gamma"]

    def write_summary(fh):
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)

    if args.out == "-":
        write_summary(sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_summary(fh)
    if args.reports:
        with open(args.reports, "w", encoding="utf-8") as fh:
            for r in result.reports:
                fh.write(json.dumps(r.to_json()) + "\n")
    if args.frequency_budget is not None:
        table = frequency_table(result.reports, args.frequency_budget)
        print(json.dumps(table, indent=2), file=sys.stderr)
    print(
        f"# {result.config_label}: {len(result.reports)} reports in "
        f"{result.seconds:.1f}s (baseline gamma {result.baseline_gamma:.2f})",
        file=sys.stderr,
    )
    return 0


def _cmd_serve(args):
    import uvicorn

    from recourse.harness import load_config, train_bundle
    from recourse.service import create_app

    if args.bundle:
        bundle = _load_bundle(args.bundle)
    elif args.config:
        bundle = train_bundle(load_config(args.config))
    else:
        raise ConfigError("serve needs --bundle or --config")
    app = create_app(bundle)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_probe_h(args):
    from recourse.indirect import complexity_probe

    sizes = [int(s) for s in args.sizes.split(",")]
    rows = complexity_probe(
        target_counts=sizes, repetitions=args.repetitions, seed=args.seed
    )
    writer = csv.writer(sys.stdout)
    writer.writerow(["indirect_count", "median_seconds"])
    for size, seconds in rows:
        writer.writerow([size, f"{seconds:.6f}"])
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="recourse",
        description="Cost- and budget-aware feature-change recommendations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model bundle from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("recommend", help="recommend changes for one instance")
    p.add_argument("--bundle", required=True)
    p.add_argument("--instance", required=True, help="JSON file of feature: value")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--optimizer", choices=["pgd", "sensitivity"], default="pgd")
    p.set_defaults(func=_cmd_recommend)

    p = sub.add_parser("sweep", help="recommendations across a budget grid")
    p.add_argument("--bundle", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--budgets", required=True, help="start:stop:step or b1,b2,...")
    p.add_argument("--optimizer", choices=["pgd", "sensitivity"], default="pgd")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("experiment", help="run the full validation pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="-", help="summary CSV path or - for stdout")
    p.add_argument("--reports", help="optional JSON-lines dump of all reports")
    p.add_argument("--frequency-budget", type=float, default=None)
    p.add_argument("--swap-roles", action="store_true")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bundle")
    p.add_argument("--config", help="train at startup instead of loading a bundle")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("probe-h", help="time the indirect estimator by |I|")
    p.add_argument("--sizes", default="0,10,25,50,100")
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_probe_h)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except RecourseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
