"""Command-line entry point: ``infosel {gen,run,sweep,demo-gp,bench}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

from . import __version__
from .evaluate import GpToyConfig, gp_toy, write_gp_curves
from .experiment import (RESULT_COLUMNS, RunSpec, append_rows, run_once, scoring_latency,
                         selection_wall_time, sweep)
from .selectors import SELECTORS, SelectorParams
from .streams import (DatasetFormatError, StreamConfig, load_dataset, save_binary, save_csv,
                      synth_gaussian_mixture)

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _floats(text: str) -> list[float]:
    return [_num(v) for v in text.split(",") if v.strip()]


def _num(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def _gamma(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise argparse.ArgumentTypeError("gamma must not be NaN")
    return v


def _add_run_args(p: argparse.ArgumentParser, multi: bool) -> None:
    p.add_argument("--dataset", required=True, help="MSL1 binary or .csv dataset")
    if multi:
        p.add_argument("--selector", default="rs,infors",
                       help=f"comma-separated selectors from {sorted(SELECTORS)}")
        p.add_argument("--imbalance", type=_floats, default=[1], help="comma-separated r values")
    else:
        p.add_argument("--selector", choices=sorted(SELECTORS), default="rs")
        p.add_argument("--imbalance", type=_num, default=1)
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--gamma-i", type=_gamma, default=0.0)
    p.add_argument("--gamma-l", type=_gamma, default=0.0)
    p.add_argument("--criterion", choices=("mic", "ig", "er"), default="mic")
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--jitter", type=float, default=0.1)
    p.add_argument("--rebuild-period", type=int, default=512)
    p.add_argument("--tasks", type=int, default=5)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--starred-task", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--drift-rate", type=float, default=0.0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seeds", type=_seeds, default=[0], help="e.g. 0,1,2 or 0-4")
    p.add_argument("--out", default=None, help="result CSV (appended); stdout when omitted")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="infosel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic Gaussian-mixture dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--dim", type=int, default=16, help="raw feature dimension d0")
    g.add_argument("--per-class", type=int, default=500)
    g.add_argument("--separation", type=float, default=10.0)
    g.add_argument("--outlier-fraction", type=float, default=0.0)
    g.add_argument("--outlier-scale", type=float, default=3.0)
    g.add_argument("--seed", type=int, default=0)

    _add_run_args(sub.add_parser("run", help="run one selector over a task stream"), multi=False)
    _add_run_args(sub.add_parser("sweep", help="selectors x imbalances x seeds"), multi=True)

    d = sub.add_parser("demo-gp", help="1-D Gaussian-process surprise/learnability demo")
    d.add_argument("--draws", type=int, default=100)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--noise-var", type=float, default=0.04)
    d.add_argument("--emit-curves", default=None, metavar="CSV",
                   help="write predictive curves for the first draw")

    b = sub.add_parser("bench", help="selection wall time and per-point scoring latency")
    b.add_argument("--dim", type=int, default=64, help="raw feature dimension d0")
    b.add_argument("--points", type=int, default=50_000)
    b.add_argument("--classes", type=int, default=10)
    b.add_argument("--budget", type=int, default=200)
    b.add_argument("--batch-size", type=int, default=32)
    b.add_argument("--selector", default="rs,infors")
    b.add_argument("--seed", type=int, default=0)
    return parser


def _spec(args) -> RunSpec:
    if args.budget < 1:
        raise UsageError("--budget must be >= 1")
    if args.sigma <= 0 or args.jitter <= 0:
        raise UsageError("--sigma and --jitter must be positive")
    if args.eta < 0:
        raise UsageError("--eta must be non-negative")
    if not 0 < args.test_fraction < 1:
        raise UsageError("--test-fraction must lie in (0, 1)")
    stream = StreamConfig(n_tasks=args.tasks, base_epochs=args.epochs,
                          imbalance=args.imbalance if not isinstance(args.imbalance, list) else 1,
                          starred_task=args.starred_task, batch_size=args.batch_size,
                          drift_rate=args.drift_rate)
    return RunSpec(params=SelectorParams(args.eta, args.gamma_i, args.gamma_l, args.criterion),
                   stream=stream, budget=args.budget, sigma=args.sigma, jitter=args.jitter,
                   rebuild_period=args.rebuild_period, test_fraction=args.test_fraction,
                   seeds=args.seeds)


def _print_rows(rows) -> None:
    print(",".join(RESULT_COLUMNS))
    for r in rows:
        print(",".join(str(getattr(r, c)) for c in RESULT_COLUMNS))


def cmd_gen(args) -> int:
    if not 0 <= args.outlier_fraction < 1:
        raise UsageError("--outlier-fraction must lie in [0, 1)")
    if min(args.classes, args.dim, args.per_class) < 1:
        raise UsageError("--classes, --dim and --per-class must be >= 1")
    ds = synth_gaussian_mixture(args.classes, args.dim, args.per_class, args.separation,
                                args.outlier_fraction, args.outlier_scale, args.seed)
    try:
        (save_csv if args.out.lower().endswith(".csv") else save_binary)(ds, args.out)
    except OSError as exc:
        print(f"infosel gen: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"wrote {len(ds)} points (d0={ds.d0}, K={ds.n_classes}) to {args.out}")
    return 0


def _validate_stream(spec: RunSpec, dataset) -> None:
    try:
        spec.stream.validate(dataset.n_classes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_run(args) -> int:
    spec = replace(_spec(args), selector=args.selector)
    dataset = load_dataset(args.dataset)
    _validate_stream(spec, dataset)
    rows = [run_once(dataset, spec, seed).row for seed in spec.seeds]
    if args.out:
        append_rows(args.out, rows)
    else:
        _print_rows(rows)
    return 0


def cmd_sweep(args) -> int:
    spec = _spec(args)
    kinds = [k.strip() for k in args.selector.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in SELECTORS]
    if unknown:
        raise UsageError(f"unknown selector(s) {unknown}; choose from {sorted(SELECTORS)}")
    if any(r < 1 for r in args.imbalance):
        raise UsageError("--imbalance values must be >= 1")
    dataset = load_dataset(args.dataset)
    _validate_stream(spec, dataset)
    rows = sweep(dataset, spec, kinds, args.imbalance, spec.seeds, out=args.out)
    if not args.out:
        _print_rows(rows)
    return 0


def cmd_demo_gp(args) -> int:
    if args.draws < 1 or args.noise_var <= 0:
        raise UsageError("--draws must be >= 1 and --noise-var positive")
    config = GpToyConfig(noise_var=args.noise_var, n_draws=args.draws, seed=args.seed)
    res = gp_toy(config)
    (x0, y0), (x1, y1) = config.probes
    print(f"draws: {args.draws}")
    print(f"learnability win-rate of ({x1:g}, {y1:g}) over ({x0:g}, {y0:g}): "
          f"{res.learnability_win_rate:.3f}")
    print(f"both probes more surprising than the median grid point: "
          f"{res.surprise_exceeds_rate:.3f}")
    for p, (x, y) in enumerate(config.probes):
        print(f"probe ({x:g}, {y:g}): mean surprise {res.surprise[:, p].mean():.3f}, "
              f"mean learnability {res.learnability[:, p].mean():.3f}")
    if args.emit_curves:
        write_gp_curves(args.emit_curves, config, res.memory_targets[0])
        print(f"curves written to {args.emit_curves}")
    return 0


def cmd_bench(args) -> int:
    kinds = [k.strip() for k in args.selector.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in SELECTORS]
    if unknown:
        raise UsageError(f"unknown selector(s) {unknown}")
    times = {k: selection_wall_time(k, args.dim, args.points, args.classes, args.budget,
                                    args.batch_size, args.seed) for k in kinds}
    base = times.get("rs")
    for k, t in times.items():
        ratio = f"  ({t / base:.2f}x rs)" if base else ""
        print(f"{k:12s} {1e3 * t:10.1f} ms for {args.points} points{ratio}")
    for d0 in (args.dim, 2 * args.dim):
        print(f"mic scoring at d0={d0}: {1e6 * scoring_latency(d0, args.classes):.3f} us/point")
    return 0


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "sweep": cmd_sweep,
            "demo-gp": cmd_demo_gp, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"infosel {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetFormatError, OSError) as exc:
        print(f"infosel {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"infosel {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
