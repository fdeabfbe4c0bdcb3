"""Command-line entry point: ``haarthin simulate|thin|table1|table2|disc|bias``.

Every ``simulate`` and ``thin`` flag may also come from ``--config FILE``, a
``key = value`` file whose keys are the long flag names (``lattice-order``,
``checkpoints``, ...).  Flags given on the command line win.  The thread
count for replicate-level parallelism is read from ``HAARTHIN_THREADS``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from contextlib import contextmanager
from pathlib import Path

from . import discrepancy as disc
from .dyadic import RectSpec
from .experiments import (
    ExperimentConfig,
    Metric,
    PointParseError,
    load_points,
    parse_points,
    simulate,
    table1,
    table2,
)
from .strategies import StrategyConfig, ThinningEngine, make_streams

DEFAULTS = {
    "dim": 1,
    "beta": 1.0,
    "strategy": "greedy",
    "n": 1 << 13,
    "checkpoints": None,
    "reps": 20,
    "seed": 0,
    "lattice-order": None,
    "rect": None,
    "metric": "disc",
    "candidates": None,
    "out": None,
    "convention": "balance",
    "kept-out": None,
}

CONVERTERS = {
    "dim": int,
    "beta": float,
    "n": int,
    "reps": int,
    "seed": int,
    "lattice-order": int,
}


def read_config(path) -> dict:
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[haarthin]\n" + text
    parser.read_string(text)
    merged = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            key = key.replace("_", "-")
            if key not in DEFAULTS:
                raise ValueError(f"unknown config key {key!r} in {path}")
            merged[key] = value
    return merged


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags, in that order of priority."""
    values = dict(DEFAULTS)
    if getattr(args, "config", None):
        for key, raw in read_config(args.config).items():
            values[key] = CONVERTERS.get(key, str)(raw)
    for key in DEFAULTS:
        attr = key.replace("-", "_")
        given = getattr(args, attr, None)
        if given is not None:
            values[key] = given
    return values


def _strategy_names(text: str, convention: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    if convention == "paper_sign":
        names = ["greedy_paper_sign" if s == "greedy" else s for s in names]
    elif convention != "balance":
        raise ValueError(f"unknown convention {convention!r}")
    return names


def _checkpoints(values: dict) -> list[int]:
    if values["checkpoints"]:
        return [int(float(c)) for c in str(values["checkpoints"]).split(",")]
    n = values["n"]
    cps = [1 << k for k in range(n.bit_length()) if (1 << k) < n]
    return cps + [n]


@contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


@contextmanager
def _open_in(path):
    if path in (None, "-"):
        yield sys.stdin
    else:
        with open(path) as fh:
            yield fh


def cmd_simulate(args) -> int:
    v = resolve(args)
    d = v["dim"]
    if v["metric"] == "bias" or v["rect"]:
        if not v["rect"]:
            raise ValueError("the bias metric needs --rect")
        metric = Metric("bias", RectSpec.parse(v["rect"]))
    else:
        metric = Metric.parse(v["metric"])
    candidates = load_points(v["candidates"], d) if v["candidates"] else None
    config = ExperimentConfig(
        strategies=_strategy_names(v["strategy"], v["convention"]),
        d=d, beta=v["beta"], master_seed=v["seed"], reps=v["reps"],
        checkpoints=_checkpoints(v), metrics=[metric],
        lattice_order=v["lattice-order"], candidates=candidates, timing=args.timing,
    )
    with _open_out(v["out"]) as fh:
        _, errors = simulate(config, fh)
    for err in errors:
        print(f"haarthin: {err}", file=sys.stderr)
    return 3 if errors else 0


def cmd_thin(args) -> int:
    v = resolve(args)
    d = v["dim"]
    [name] = _strategy_names(v["strategy"], v["convention"])
    engine = ThinningEngine(StrategyConfig(name, v["beta"], d),
                            make_streams(v["seed"])[1], record=False)
    kept_fh = open(v["kept-out"], "w") if v["kept-out"] else None
    try:
        with _open_in(v["candidates"]) as src, _open_out(v["out"]) as out:
            for i, x in enumerate(parse_points(src, d), start=1):
                rec = engine.offer(x)
                out.write(f"{i},{'keep' if rec.kept else 'reject'}\n")
                if rec.kept and kept_fh is not None:
                    kept_fh.write(",".join(f"{c:.17g}" for c in x) + "\n")
    finally:
        if kept_fh is not None:
            kept_fh.close()
    return 0


def cmd_table(args, preset) -> int:
    result = preset(args.out, reps=args.reps, seed=args.seed, n_max=args.n)
    for path in result.files:
        print(path)
    if not result.files:
        for s in result.summary:
            print(",".join(s.csv_row()))
    return 0


def cmd_disc(args) -> int:
    pts = load_points(args.points, args.dim)
    method = args.method
    if method == "auto":
        method = "exact" if args.dim == 1 else "lattice"
    if method == "exact":
        if args.dim != 1:
            raise ValueError("the exact method is only available for --dim 1")
        report = disc.interval_disc_1d(pts)
    elif method == "brute":
        report = disc.brute_disc_oracle(pts, args.dim)
    else:
        level = args.lattice_order or disc.default_lattice_order(pts.shape[0])
        report = disc.lattice_disc(pts, level)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(disc.DiscReport.CSV_FIELDS)
    writer.writerow(report.csv_row())
    return 0


def cmd_bias(args) -> int:
    pts = load_points(args.points, args.dim)
    rect = RectSpec.parse(args.rect)
    print(f"{disc.rect_bias(pts, rect):.6g}")
    return 0


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file mirroring the long flags")
    p.add_argument("--dim", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--strategy", help="monte_carlo, haar, greedy (comma list for simulate)")
    p.add_argument("--seed", type=int)
    p.add_argument("--candidates", help="file of comma-separated points, one per line")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--convention", choices=["balance", "paper_sign"],
                   help="sign convention of the greedy strategy")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haarthin", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="replicated runs, one CSV row per (run, n, metric)")
    _add_run_flags(p)
    p.add_argument("--n", type=int, help="largest output count (checkpoints: powers of 2 and n)")
    p.add_argument("--checkpoints", help="comma-separated output counts")
    p.add_argument("--reps", type=int)
    p.add_argument("--metric", help="disc or bias")
    p.add_argument("--rect", help='rectangle "lo1,hi1;lo2,hi2" for the bias metric')
    p.add_argument("--lattice-order", type=int, help="grid order of the d>1 discrepancy")
    p.add_argument("--timing", action="store_true",
                   help="fill the seconds column with wall time (output is then not reproducible)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("thin", help="online keep/reject decisions for a stream of candidates")
    _add_run_flags(p)
    p.add_argument("--kept-out", help="also write the kept points here")
    p.set_defaults(func=cmd_thin)

    for name, preset, n_default in (("table1", table1, 1 << 19), ("table2", table2, 100_000)):
        p = sub.add_parser(name, help=f"reproduce {name} (20 reps by default)")
        p.add_argument("--out", help="directory for the CSV files")
        p.add_argument("--reps", type=int, default=20)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--n", type=int, default=n_default, help="largest output count")
        p.set_defaults(func=lambda a, preset=preset: cmd_table(a, preset))

    p = sub.add_parser("disc", help="discrepancy of a point file")
    p.add_argument("points")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--method", choices=["auto", "exact", "lattice", "brute"], default="auto")
    p.add_argument("--lattice-order", type=int)
    p.set_defaults(func=cmd_disc)

    p = sub.add_parser("bias", help="|#(points in R) - n|R|| for a point file")
    p.add_argument("points")
    p.add_argument("--rect", required=True)
    p.add_argument("--dim", type=int, default=1)
    p.set_defaults(func=cmd_bias)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PointParseError, ValueError, OSError, MemoryError) as exc:
        print(f"haarthin: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
