"""Command-line front end: train, sweep, compare, gradcheck, validate-data.

Options resolve in three layers: built-in defaults, then an INI config file
(section ``[salnet]`` for shared keys plus one section per subcommand), then
explicit flags. The effective configuration is echoed before any work starts.
Exit codes: 0 success, 1 failed check (gradcheck failure, bad dataset
verdict), 2 usage or input errors (bad flags, bad config, missing files).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import experiment as exp
from .data import DATASETS, dataset_files, load_dataset
from .figures import render_figures

_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True,
               "0": False, "false": False, "no": False, "off": False}


class UsageError(Exception):
    """Bad flags or config; exits with status 2."""


def _parse_seeds(text: str) -> tuple[int, ...]:
    """Accept "1,2,5" and "1-5" (inclusive range) forms."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part and not part.startswith("-"):
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("empty seed list")
    return tuple(seeds)


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def _default_data_dir() -> str:
    return os.environ.get("SALNET_DATA", "data")


def _build_parser():
    parser = argparse.ArgumentParser(prog="salnet",
                                     description="Routed-area network experiments")
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")
    subs = {}

    def common(sub, data=True, output=True):
        sub.add_argument("--config", help="INI file with option defaults")
        if data:
            sub.add_argument("--data-dir", default=_default_data_dir(),
                             help="directory holding dataset files (default: $SALNET_DATA or ./data)")
        if output:
            sub.add_argument("--out-dir", default="results", help="directory for CSVs and figures")
            sub.add_argument("--no-figures", action="store_true",
                             help="skip rendering PNG figures next to the CSVs")

    train = commands.add_parser("train", help="train one network and record per-epoch metrics")
    common(train)
    train.add_argument("--dataset", required=True, choices=sorted(DATASETS))
    train.add_argument("--kind", default="sal", choices=("sal", "bp", "moe"))
    train.add_argument("--areas", type=int, default=16, help="areas or experts per routed layer")
    train.add_argument("--depth", type=int, default=2)
    train.add_argument("--hidden-dim", type=int, default=256)
    train.add_argument("--deep", action="store_true",
                       help="tanh interior layers with residual wiring (for depth > 2)")
    train.add_argument("--epochs", type=int, default=25)
    train.add_argument("--batch-size", type=int, default=16)
    train.add_argument("--lr", type=float, default=1e-4)
    train.add_argument("--lr-sel", type=float, default=None,
                       help="selector learning rate (default: the library's selector default)")
    train.add_argument("--local-weight", type=float, default=1.0)
    train.add_argument("--seed", type=int, default=1)
    train.add_argument("--label", default=None, help="run label (default: derived from kind/areas)")
    subs["train"] = train

    sweep = commands.add_parser("sweep", help="run a preset sweep over seeds")
    common(sweep)
    sweep.add_argument("--preset", required=True, choices=sorted(exp.PRESETS))
    sweep.add_argument("--dataset", required=True, choices=sorted(DATASETS))
    sweep.add_argument("--seeds", type=_parse_seeds, default=exp.DEFAULT_SEEDS,
                       help='seed list, e.g. "1,2,3" or "1-5" (default 1-5)')
    sweep.add_argument("--epochs", type=int, default=25)
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    subs["sweep"] = sweep

    compare = commands.add_parser(
        "compare", help="routed-area networks vs gated experts vs the dense baseline")
    common(compare)
    compare.add_argument("--dataset", required=True, choices=sorted(DATASETS))
    compare.add_argument("--areas", type=_parse_int_list, default=exp.COMPARE_AREAS,
                         help='comma-separated area counts (default "4,16")')
    compare.add_argument("--seeds", type=_parse_seeds, default=exp.DEFAULT_SEEDS)
    compare.add_argument("--epochs", type=int, default=25)
    compare.add_argument("--jobs", type=int, default=1)
    subs["compare"] = compare

    gradcheck = commands.add_parser("gradcheck", help="run the gradient check suite")
    common(gradcheck, data=False, output=False)
    gradcheck.add_argument("--seed", type=int, default=7)
    subs["gradcheck"] = gradcheck

    validate = commands.add_parser("validate-data", help="check dataset files and checksums")
    common(validate, output=False)
    validate.add_argument("--dataset", default="all",
                          choices=sorted(DATASETS) + ["all"])
    subs["validate-data"] = validate

    return parser, subs


def _apply_config_file(sub, command: str, path: str) -> None:
    """Install INI values as subparser defaults so explicit flags still win."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"config file not found: {path}")
    actions = {a.dest: a for a in sub._actions}
    values = {}
    for section in ("salnet", command):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            if dest not in actions or dest in ("help", "config"):
                raise UsageError(f"{path}: unknown option {key!r} in [{section}]")
            action = actions[dest]
            try:
                if isinstance(action, argparse._StoreTrueAction):
                    values[dest] = _BOOL_WORDS[raw.strip().lower()]
                elif action.type is not None:
                    values[dest] = action.type(raw)
                else:
                    values[dest] = raw
            except (KeyError, ValueError) as err:
                raise UsageError(f"{path}: bad value for {key!r}: {raw!r} ({err})") from None
    sub.set_defaults(**values)


def _echo_config(args) -> None:
    skip = {"command", "config"}
    pairs = []
    for key in sorted(vars(args)):
        if key in skip:
            continue
        value = getattr(args, key)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        pairs.append(f"{key}={value}")
    print(f"salnet {args.command}: " + " ".join(pairs))


def _timestamp_line() -> None:
    print("started " + datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))


def _ensure_out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(records, aggregates, out_dir: Path, stem: str, figures: bool) -> None:
    metrics_path = out_dir / f"{stem}_metrics.csv"
    exp.write_metrics_csv(records, metrics_path)
    written = [metrics_path]
    if aggregates is not None:
        aggregate_path = out_dir / f"{stem}_aggregate.csv"
        exp.write_aggregate_csv(aggregates, aggregate_path)
        written.append(aggregate_path)
    if figures:
        written += render_figures(records, aggregates if aggregates is not None
                                  else exp.aggregate(records), out_dir, stem)
    for path in written:
        print(f"wrote {path}")


def _print_aggregates(aggregates) -> None:
    for a in aggregates:
        if a.metric == "val_accuracy":
            print(f"{a.run_label}: val_accuracy {a.mean:.4f} +/- {a.std:.4f} ({a.n_seeds} seeds)")


def cmd_train(args) -> int:
    default_labels = {"sal": f"sal-{args.areas}", "moe": f"moe-{args.areas}", "bp": "baseline"}
    label = args.label or default_labels[args.kind]
    spec = exp.ExperimentSpec(
        label=label, dataset=args.dataset, kind=args.kind, n_areas=args.areas,
        depth=args.depth, hidden_dim=args.hidden_dim, epochs=args.epochs,
        batch_size=args.batch_size, lr=args.lr, lr_sel=args.lr_sel,
        local_weight=args.local_weight, deep=args.deep,
    )
    train, test = load_dataset(args.dataset, args.data_dir)
    out_dir = _ensure_out_dir(args)

    def progress(rec):
        print(f"epoch {rec.epoch}/{spec.epochs} train_loss={rec.train_loss:.4f} "
              f"val_loss={rec.val_loss:.4f} val_accuracy={rec.val_accuracy:.4f}")

    records = exp.run_single(spec, train, test, args.seed, progress=progress)
    stem = f"train_{args.dataset}_{label}_seed{args.seed}"
    _write_report(records, None, out_dir, stem, not args.no_figures)
    return 0


def _run_specs(args, specs, stem: str) -> int:
    train, test = load_dataset(args.dataset, args.data_dir)
    out_dir = _ensure_out_dir(args)
    epochs = specs[0].epochs

    def progress(rec):
        if rec.epoch == epochs:
            print(f"done {rec.run_label} seed={rec.seed} val_accuracy={rec.val_accuracy:.4f}")

    records = exp.run_many(specs, train, test, seeds=args.seeds, jobs=args.jobs,
                           progress=progress)
    aggregates = exp.aggregate(records)
    _write_report(records, aggregates, out_dir, stem, not args.no_figures)
    _print_aggregates(aggregates)
    return 0


def cmd_sweep(args) -> int:
    specs = exp.PRESETS[args.preset](args.dataset, epochs=args.epochs)
    return _run_specs(args, specs, f"{args.preset}_{args.dataset}")


def cmd_compare(args) -> int:
    specs = exp.compare_preset(args.dataset, epochs=args.epochs, areas=args.areas)
    return _run_specs(args, specs, f"compare_{args.dataset}")


def cmd_gradcheck(args) -> int:
    results = exp.grad_check_suite(args.seed)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name}: max relative error {r.error:.3e} (tolerance {r.tolerance:.0e}) {status}")
        failed += not r.passed
    if failed:
        print(f"{failed} of {len(results)} gradient checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} gradient checks passed")
    return 0


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def cmd_validate_data(args) -> int:
    names = sorted(DATASETS) if args.dataset == "all" else [args.dataset]
    bad = 0
    for name in names:
        source = DATASETS[name]
        paths = dataset_files(name, args.data_dir)
        missing = [p for p in paths if not p.exists()]
        if missing and name == "digits":
            # digits can be materialized from scikit-learn; loading does that.
            missing = []
        if missing:
            bad += 1
            print(f"{name}: MISSING {', '.join(str(p) for p in missing)}")
            for url in source.urls:
                print(f"{name}:   fetch from {url}")
            continue
        try:
            train, test = load_dataset(name, args.data_dir)
        except (OSError, ValueError) as err:
            bad += 1
            print(f"{name}: INVALID ({err})")
            continue
        total = len(train) + len(test)
        shape_ok = (total == source.samples
                    and train.features.shape[1] == source.features
                    and train.class_count == source.classes)
        for p in dataset_files(name, args.data_dir):
            print(f"{name}: {p.name} sha256={_sha256(p)}")
        verdict = "OK" if shape_ok else (
            f"BAD SHAPE (samples={total}, features={train.features.shape[1]})")
        print(f"{name}: {len(train)} train + {len(test)} test, "
              f"{train.features.shape[1]} features, {source.normalization}: {verdict}")
        bad += not shape_ok
    return 1 if bad else 0


_HANDLERS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "gradcheck": cmd_gradcheck,
    "validate-data": cmd_validate_data,
}


def entrypoint(argv=None) -> int:
    parser, subs = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            _apply_config_file(subs[args.command], args.command, args.config)
            args = parser.parse_args(argv)
        _echo_config(args)
        if args.command in ("train", "sweep", "compare"):
            _timestamp_line()
        return _HANDLERS[args.command](args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as err:
        # Missing dataset files and malformed inputs are input errors, same
        # class as bad flags; exit 1 is reserved for failed checks.
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(entrypoint())
