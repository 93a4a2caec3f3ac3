"""Command-line entry point: ``listmatch simulate | ode | verify | figures | replay``.

Every command that writes files also writes a JSON run manifest next to
them. ``listmatch replay MANIFEST`` re-executes the recorded arguments and
reproduces the CSV and report bytes exactly.

Exit codes: 0 success, 2 bad flags, 3 internal consistency failure (and,
for ``verify``, any failing suite).
"""
from __future__ import annotations

import argparse
import csv
import inspect
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, continuum, montecarlo, verify
from .distributions import STANDARD_KINDS, DistKind, DistributionSpec
from .errors import ConfigError, ConsistencyError, ListMatchError
from .market import MarketConfig, simulate_batch
from .report import Status
from .seeding import substream
from .svg import Panel, Series, render

SEED_ENV = "LISTMATCH_SEED"
SIMULATE_HEADER = ["i", "d", "q", "dist", "reps", "p_match", "stderr", "rank_cdf_k", "taken_mean"]

EXIT_USAGE = 2
EXIT_INTERNAL = 3


@dataclass
class RunManifest:
    subcommand: str
    argv: list[str]
    params: dict
    seed: int | None
    version: str = __version__
    outputs: list[str] = field(default_factory=list)
    duration_s: float = 0.0

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")


class UsageError(Exception):
    """Bad flag value; the message names the flag."""


def num(v: float) -> str:
    return f"{v:.10g}"


def parse_indices(text: str) -> list[int]:
    """Parse ``1..1000:10``, ``5`` or ``1,2,10..20`` into student indices (inclusive ranges)."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            rng, _, step = part.partition(":")
            a, _, b = rng.partition("..")
            start, stop, stride = int(a), int(b), int(step) if step else 1
            if stride < 1 or stop < start:
                raise ValueError(part)
            out.extend(range(start, stop + 1, stride))
        else:
            out.append(int(part))
    if not out:
        raise ValueError(text)
    return out


def parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def default_seed() -> int:
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 42


def _open_out(path: str | None):
    if path in (None, "-"):
        return sys.stdout, False
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p.open("w", newline=""), True


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    try:
        ds = parse_int_list(args.d)
    except ValueError:
        raise UsageError(f"--d: expected comma-separated integers, got {args.d!r}")
    if not ds or any(d < 1 or d > args.n for d in ds):
        raise UsageError(f"--d: every list length must lie in 1..n={args.n}")
    try:
        indices = parse_indices(args.i) if args.i else list(range(1, args.n + 1))
    except ValueError:
        raise UsageError(f"--i: expected a..b[:step] or comma list, got {args.i!r}")
    m = args.m if args.m is not None else max(indices)
    if any(i < 1 or i > m for i in indices):
        raise UsageError(f"--i: indices must lie in 1..m={m}")
    if args.k < 1:
        raise UsageError("--k: must be >= 1")
    dist = DistributionSpec.make(args.dist, args.n)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SIMULATE_HEADER)
    for d in ds:
        cfg = MarketConfig(n=args.n, d=d, q=args.q, m=m, dist=dist, seed=args.seed)
        rows = montecarlo.estimate_students(cfg, indices, min(args.k, d), args.reps, args.threads)
        for r in rows:
            w.writerow([r.i, d, args.q, args.dist, args.reps, num(r.match.mean), num(r.match.stderr),
                        num(r.rank_cdf.mean), num(r.taken_mean.mean)])
        if args.rsd:
            montecarlo.estimate_rsd(cfg, args.reps, args.threads)
    fh, close = _open_out(args.out)
    fh.write(buf.getvalue())
    if close:
        fh.close()
    return 0


# -- ode ----------------------------------------------------------------------

def solve_for_cli(d: float, q: int, t_max: float, step: float, method: str):
    if method == "tau":
        return continuum.tau_rescaled_solve(d, q, t_max, step)
    if q == 1:
        return continuum.solve_ivp(d, t_max, step)
    return continuum.multi_seat_solve(d, q, t_max, step)


def cmd_ode(args) -> int:
    if args.d < 1:
        raise UsageError("--d: must be >= 1")
    if args.q < 1:
        raise UsageError("--q: must be >= 1")
    if not 0 < args.step <= continuum.MAX_STEP:
        raise UsageError(f"--step: must lie in (0, {continuum.MAX_STEP:g}]")
    if args.t_max < 0:
        raise UsageError("--t-max: must be >= 0")
    sol = solve_for_cli(args.d, args.q, args.t_max, args.step, args.method)
    y = sol.y if sol.y is not None else (1.0 - sol.x)[:, None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "x_prime"] + [f"y{k}" for k in range(args.q)])
    every = max(1, args.every)
    for j in range(0, sol.t_grid.size, every):
        w.writerow([num(sol.t_grid[j]), num(sol.x[j]), num(sol.x_prime[j])] + [num(v) for v in y[j]])
    fh, close = _open_out(args.out)
    fh.write(buf.getvalue())
    if close:
        fh.close()
    return 0


# -- verify -------------------------------------------------------------------

def _suite_kwargs(name: str, args) -> dict:
    fn = verify.SUITES[name]
    if name == "figures":
        return {"protocol": verify.FigureProtocol(
            n=args.n or 1000, reps=args.reps or 10_000, seed=args.seed, threads=args.threads,
            out_dir=Path(args.out_dir) if args.out_dir else None)}
    accepted = inspect.signature(fn).parameters
    kw = {}
    candidates = {"n": args.n, "reps": args.reps, "seed": args.seed, "threads": args.threads,
                  "q_max": args.q_max, "d_max": args.d_max}
    if args.dist and args.dist != "uniform":
        candidates["dist"] = args.dist
        if args.reps is None and name == "main-discrete":
            candidates["reps"] = 10_000
    for key, value in candidates.items():
        if key in accepted and value is not None:
            kw[key] = value
    return kw


def cmd_verify(args) -> int:
    names = list(verify.SUITES) if args.suite == "all" else [s.strip() for s in args.suite.split(",")]
    unknown = [s for s in names if s not in verify.SUITES]
    if unknown:
        raise UsageError(f"--suite: unknown suite(s) {', '.join(unknown)}; "
                         f"choose from all, {', '.join(verify.SUITES)}")
    out_dir = Path(args.out_dir) if args.out_dir else None
    failed = False
    for name in names:
        report = verify.SUITES[name](**_suite_kwargs(name, args))
        text = report.to_json()
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / f"{name}.json").write_text(text)
            args._outputs.append(str(out_dir / f"{name}.json"))
        print(f"{name:18s} {report.status.value:8s} margin={num(report.margin)}")
        failed |= report.status is Status.FAIL
    return EXIT_INTERNAL if failed else 0


# -- figures ------------------------------------------------------------------

def _write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else num(v) for v in row])
    return path


def figure_d1_vs_d2(out: Path, t_max: float = 3.0) -> list[Path]:
    s1 = continuum.solve_ivp(1, t_max)
    s2 = continuum.solve_ivp(2, t_max)
    cut = continuum.crossing_time(1, 2)
    every = 10
    t = s1.t_grid[::every]
    csv_path = _write_csv(out / "d1_vs_d2.csv", ["t", "x1", "x1_prime", "x2", "x2_prime", "crossing_t"],
                          zip(t, s1.x[::every], s1.x_prime[::every], s2.x[::every], s2.x_prime[::every],
                              [cut] * t.size))
    panel = Panel(
        [Series("x_1", t, s1.x[::every]), Series("x_2", t, s2.x[::every]),
         Series("x_1'", t, s1.x_prime[::every], dashed=True, color="#1f77b4"),
         Series("x_2'", t, s2.x_prime[::every], dashed=True, color="#d62728")],
        title="fraction of schools taken and match rate, d = 1 vs d = 2", xlabel="t",
        vlines=[(cut, f"t = {cut:.4f}")],
    )
    return [csv_path, render([[panel]], out / "d1_vs_d2.svg", 640, 400)]


def figure_overlay(out: Path, n: int, d: int, reps: int, seed: int, t_max: float = 2.0) -> list[Path]:
    cfg = MarketConfig(n=n, d=d, m=math.ceil(t_max * n), seed=seed)
    batch = simulate_batch(cfg, reps, substream(seed, 0))
    steps = np.arange(0, cfg.m + 1, max(1, cfg.m // 400))
    t = steps / n
    frac = batch.taken[:, steps] / n
    x = montecarlo.continuum_fraction(cfg, t)
    header = ["t", "continuum"] + [f"rep{r}" for r in range(reps)]
    csv_path = _write_csv(out / "overlay.csv", header,
                          (row for row in np.column_stack([t, x, frac.T]).tolist()))
    series = [Series("", t, frac[r], color="#999999", width=0.6, opacity=0.5) for r in range(reps)]
    series.append(Series(f"continuum x_{d}", t, x, color="#d62728", width=2.0))
    panel = Panel(series, title=f"{reps} simulations, n = {n}, d = {d}", xlabel="t = i / n",
                  ylabel="fraction of schools taken")
    return [csv_path, render([[panel]], out / "overlay.svg", 640, 400)]


def figure_nonuniform(out: Path, n: int, reps: int, seed: int, threads: int,
                      d_set=(1, 2, 4, 10, 20), stride: int = 10) -> list[Path]:
    protocol = verify.FigureProtocol(n=n, d_set=tuple(d_set), reps=reps, stride=stride, seed=seed,
                                     threads=threads, out_dir=out)
    report = verify.verify_figures(protocol)
    csv_path = Path(report.artifacts[0])
    rows = list(csv.DictReader(csv_path.open()))
    grid = []
    for kind in STANDARD_KINDS:
        sub = [r for r in rows if r["dist"] == kind.value]
        w = DistributionSpec.make(kind, n).weights
        weights = Panel([Series("p(j)", np.arange(1, n + 1), w)], title=f"{kind.value}: weights",
                        xlabel="school j", legend=False)
        taken, match = [], []
        for d in d_set:
            part = [r for r in sub if int(r["d"]) == d]
            i = [int(r["i"]) for r in part]
            taken.append(Series(f"d={d}", i, [float(r["taken_fraction"]) for r in part]))
            match.append(Series(f"d={d}", i, [float(r["p_match"]) for r in part]))
        grid.append([weights,
                     Panel(taken, title=f"{kind.value}: fraction taken", xlabel="student i"),
                     Panel(match, title=f"{kind.value}: P(matched)", xlabel="student i")])
    return [csv_path, render(grid, out / "nonuniform.svg", 400, 280)]


def figure_multiseat(out: Path, q: int = 4, t_max: float = 12.0) -> list[Path]:
    sol = continuum.multi_seat_solve(1, q, t_max)
    every = 20
    t = sol.t_grid[::every]
    cols = [sol.x[::every]] + [sol.y[::every, k] for k in range(q)]
    csv_path = _write_csv(out / "multiseat.csv", ["t", "x"] + [f"y{k}" for k in range(q)],
                          zip(t, *cols))
    series = [Series("x (full)", t, cols[0])] + [Series(f"y{k}", t, cols[k + 1]) for k in range(q)]
    panel = Panel(series, title=f"multi-seat continuum, d = 1, q = {q}", xlabel="t")
    return [csv_path, render([[panel]], out / "multiseat.svg", 640, 400)]


FIGURES = ("d1-vs-d2", "overlay", "nonuniform", "multiseat")


def cmd_figures(args) -> int:
    names = FIGURES if args.fig == "all" else [args.fig]
    out = Path(args.out_dir)
    for name in names:
        if name == "d1-vs-d2":
            paths = figure_d1_vs_d2(out)
        elif name == "overlay":
            paths = figure_overlay(out, args.n or 1000, args.d, args.reps or 100, args.seed)
        elif name == "nonuniform":
            paths = figure_nonuniform(out, args.n or 1000, args.reps or 10_000, args.seed, args.threads)
        else:
            paths = figure_multiseat(out, args.q)
        args._outputs.extend(str(p) for p in paths)
        for p in paths:
            print(p)
    return 0


# -- replay -------------------------------------------------------------------

def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    return main(manifest["argv"])


# -- parser -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="listmatch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, manifest=True):
        sp.add_argument("--seed", type=int, default=default_seed(),
                        help=f"master seed (default 42, or ${SEED_ENV})")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads; affects speed only, never output bytes")
        if manifest:
            sp.add_argument("--manifest", help="manifest path (default: next to the output)")

    s = sub.add_parser("simulate", help="Monte Carlo match probabilities per student",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       description="Student ranges use a..b[:step], inclusive, e.g. 1..1000:10.")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--d", default="1", help="comma-separated list lengths, e.g. 1,2,4,10,20")
    s.add_argument("--q", type=int, default=1)
    s.add_argument("--m", type=int, help="students per market (default: largest index)")
    s.add_argument("--dist", default="uniform", choices=[k.value for k in STANDARD_KINDS])
    s.add_argument("--reps", type=int, default=100_000)
    s.add_argument("--i", help="student indices: a..b[:step] or comma list (default 1..n)")
    s.add_argument("--k", type=int, default=1, help="rank threshold for rank_cdf_k")
    s.add_argument("--rsd", action="store_true", help="also cross-check the random-order estimators")
    s.add_argument("--out", help="CSV path (default stdout)")
    common(s)
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("ode", help="continuum trajectory as CSV")
    o.add_argument("--d", type=float, default=2.0)
    o.add_argument("--q", type=int, default=1)
    o.add_argument("--t-max", type=float, default=3.0)
    o.add_argument("--step", type=float, default=1e-3)
    o.add_argument("--method", choices=("direct", "tau"), default="direct")
    o.add_argument("--every", type=int, default=1, help="write every k-th grid point")
    o.add_argument("--out")
    o.add_argument("--manifest")
    o.set_defaults(func=cmd_ode, seed=None, threads=1)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--suite", default="all", help="all, or comma-separated: " + ", ".join(verify.SUITES))
    v.add_argument("--n", type=int)
    v.add_argument("--reps", type=int)
    v.add_argument("--dist", choices=[k.value for k in STANDARD_KINDS])
    v.add_argument("--q-max", type=int)
    v.add_argument("--d-max", type=int)
    v.add_argument("--out-dir", help="write one JSON report per suite here")
    common(v)
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("figures", help="render SVG figures with backing CSVs")
    f.add_argument("--fig", default="all", choices=("all",) + FIGURES)
    f.add_argument("--n", type=int)
    f.add_argument("--d", type=int, default=2)
    f.add_argument("--q", type=int, default=4)
    f.add_argument("--reps", type=int)
    f.add_argument("--out-dir", default="figures")
    common(f)
    f.set_defaults(func=cmd_figures)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay, seed=None)
    return p


def _manifest_path(args) -> Path | None:
    if getattr(args, "manifest", None) and args.command != "replay":
        return Path(args.manifest)
    if getattr(args, "out", None) and args.out != "-":
        return Path(args.out + ".manifest.json")
    if getattr(args, "out_dir", None):
        return Path(args.out_dir) / f"{args.command}.manifest.json"
    return None


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._outputs = []
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads: must be >= 1")
    if getattr(args, "reps", None) is not None and args.reps < 1:
        parser.error("--reps: must be >= 1")
    start = time.perf_counter()
    try:
        code = args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except ConfigError as exc:
        parser.error(str(exc))
    except ConsistencyError as exc:
        print(f"listmatch: consistency failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ListMatchError as exc:
        print(f"listmatch: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if args.command != "replay":
        path = _manifest_path(args)
        if path is not None:
            outputs = list(args._outputs)
            if getattr(args, "out", None) and args.out != "-":
                outputs.insert(0, args.out)
            params = {k: v for k, v in vars(args).items() if not k.startswith("_") and k != "func"}
            RunManifest(args.command, argv, params, getattr(args, "seed", None), outputs=outputs,
                        duration_s=round(time.perf_counter() - start, 3)).write(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
