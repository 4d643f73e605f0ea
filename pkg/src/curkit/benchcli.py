"""Experiment runner: ``curkit {threshold,fixed-rank,selection,block-size}``.

Every experiment writes a CSV with a fixed header (see ``HEADERS``) and prints
a median summary to stderr.  Repetition ``i`` uses seed ``seed + i`` for all
of its sketches; generated matrices use ``seed`` itself, so every repetition
sees the same matrix.
"""

from __future__ import annotations

import argparse
import csv
import io
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .baselines import slupp_cur, truncated_svd_error
from .itercur import StoppingConfig, iterative_cur, true_relative_error
from .matcore import MatrixHandle, set_deterministic
from .selection import SelectionMethod
from .testmat import generate, parse_generator, read_matrix_market

__all__ = ["ExperimentConfig", "HEADERS", "load_matrix", "main", "run_experiment"]

HEADERS = {
    "threshold": ["method", "rep", "final_rank", "rel_error_true", "rel_error_sketched", "wall_time_s"],
    "fixed-rank": ["method", "rank", "rep", "rel_error", "wall_time_s"],
    "selection": ["method", "rank", "rep", "rel_error", "svd_error"],
    "block-size": ["block_size", "rank", "rep", "rel_error", "wall_time_s"],
}
TIMING_COLUMNS = {"wall_time_s"}

ITERATIVE = "IterativeCUR"
SLUPP = "sLUPP"
SVD = "SVD"


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    matrix: str
    b: int = 50
    eps: float = 1e-6
    delta: float = 0.0
    alpha: float = 0.1
    risk_adjust: bool = False
    ranks: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    reps: int = 5
    seed: int = 0
    method: str = "LUPP"
    out: Optional[str] = None
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in HEADERS:
            raise UsageError(f"unknown experiment {self.experiment!r}")
        if self.reps < 1:
            raise UsageError("--reps must be >= 1")
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if self.experiment in ("fixed-rank", "selection", "block-size") and not self.ranks:
            raise UsageError(f"{self.experiment} needs a nonempty --ranks list")
        if self.ranks != sorted(self.ranks):
            raise UsageError("--ranks must be sorted ascending")
        if any(r < 1 for r in self.ranks):
            raise UsageError("--ranks entries must be >= 1")
        if self.experiment == "block-size" and not self.blocks:
            raise UsageError("block-size needs a nonempty --blocks list")
        if any(b < 1 for b in self.blocks) or self.b < 1:
            raise UsageError("block sizes must be >= 1")


def load_matrix(source: str, seed: int = 0) -> MatrixHandle:
    """``gen:<kind>:<args>`` builds a synthetic matrix, ``mm:<path>`` reads a file."""
    kind, _, rest = source.partition(":")
    if kind == "gen":
        return generate(parse_generator(rest, seed=seed))
    if kind == "mm":
        return read_matrix_market(Path(rest))
    raise UsageError(f"--matrix must be gen:<spec> or mm:<path>, got {source!r}")


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _check_ranks(cfg: ExperimentConfig, A: MatrixHandle):
    full = min(A.shape)
    for r in cfg.ranks:
        if r > full:
            raise UsageError(f"rank {r} exceeds min(m, n) = {full}")


def _threshold_rep(A, cfg: ExperimentConfig, rep: int):
    seed = cfg.seed + rep
    stop = StoppingConfig(cfg.eps, cfg.b, delta=cfg.delta, alpha=cfg.alpha, risk_adjust=cfg.risk_adjust)
    meth = SelectionMethod(cfg.method)
    (cur, trace), t_it = _timed(iterative_cur, A, stop, meth, meth, seed)
    (base, t_sl) = _timed(slupp_cur, A, cur.rank, seed)
    return [
        {
            "method": ITERATIVE,
            "rep": rep,
            "final_rank": cur.rank,
            "rel_error_true": true_relative_error(A, cur),
            "rel_error_sketched": trace.rho,
            "wall_time_s": t_it,
        },
        {
            "method": SLUPP,
            "rep": rep,
            "final_rank": base.rank,
            "rel_error_true": true_relative_error(A, base),
            "rel_error_sketched": None,
            "wall_time_s": t_sl,
        },
    ]


def _pure_rank(A, b: int, r: int, method: str, seed: int):
    stop = StoppingConfig(0.0, min(b, A.rows), max_rank=r)
    meth = SelectionMethod(method)
    (cur, _), t = _timed(iterative_cur, A, stop, meth, meth, seed)
    return true_relative_error(A, cur), t


def _fixed_rank_rep(A, cfg: ExperimentConfig, rep: int, svd: dict):
    seed = cfg.seed + rep
    rows = []
    for r in cfg.ranks:
        err, t = _pure_rank(A, cfg.b, r, cfg.method, seed)
        rows.append({"method": ITERATIVE, "rank": r, "rep": rep, "rel_error": err, "wall_time_s": t})
        base, t = _timed(slupp_cur, A, r, seed)
        rows.append({"method": SLUPP, "rank": r, "rep": rep, "rel_error": true_relative_error(A, base), "wall_time_s": t})
        err, t = svd[r]
        rows.append({"method": SVD, "rank": r, "rep": rep, "rel_error": err, "wall_time_s": t})
    return rows


def _selection_rep(A, cfg: ExperimentConfig, rep: int, svd: dict):
    seed = cfg.seed + rep
    rows = []
    for name in ("LUPP", "QRCP"):
        for r in cfg.ranks:
            err, _ = _pure_rank(A, cfg.b, r, name, seed)
            rows.append({"method": name, "rank": r, "rep": rep, "rel_error": err, "svd_error": svd[r][0]})
    return rows


def _block_rep(A, cfg: ExperimentConfig, rep: int):
    seed = cfg.seed + rep
    rows = []
    for b in cfg.blocks:
        for r in cfg.ranks:
            err, t = _pure_rank(A, b, r, cfg.method, seed)
            rows.append({"block_size": b, "rank": r, "rep": rep, "rel_error": err, "wall_time_s": t})
    return rows


def _svd_table(A, ranks):
    out = {}
    for r in ranks:
        err, t = _timed(truncated_svd_error, A, r, True)
        out[r] = (err, t)
    return out


def run_experiment(cfg: ExperimentConfig, A: Optional[MatrixHandle] = None) -> list:
    """Run one experiment and return its rows sorted by (method, rank, rep)."""
    if A is None:
        A = load_matrix(cfg.matrix, cfg.seed)
    if cfg.experiment != "threshold":
        _check_ranks(cfg, A)
    if cfg.experiment == "threshold":
        task = lambda rep: _threshold_rep(A, cfg, rep)  # noqa: E731
        key = lambda row: (row["method"], row["rep"])  # noqa: E731
    elif cfg.experiment == "fixed-rank":
        svd = _svd_table(A, cfg.ranks)
        task = lambda rep: _fixed_rank_rep(A, cfg, rep, svd)  # noqa: E731
        key = lambda row: (row["method"], row["rank"], row["rep"])  # noqa: E731
    elif cfg.experiment == "selection":
        svd = _svd_table(A, cfg.ranks)
        task = lambda rep: _selection_rep(A, cfg, rep, svd)  # noqa: E731
        key = lambda row: (row["method"], row["rank"], row["rep"])  # noqa: E731
    else:
        task = lambda rep: _block_rep(A, cfg, rep)  # noqa: E731
        key = lambda row: (row["block_size"], row["rank"], row["rep"])  # noqa: E731

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            chunks = list(pool.map(task, range(cfg.reps)))
    else:
        chunks = [task(rep) for rep in range(cfg.reps)]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=key)
    return rows


def _fmt(value, column: str) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}" if column in TIMING_COLUMNS else repr(value)
    return str(value)


def write_csv(rows: list, experiment: str, stream) -> None:
    header = HEADERS[experiment]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row[c], c) for c in header])


def summarize(rows: list, experiment: str) -> str:
    """Median error (and time where recorded) per method/block and rank."""
    group = "block_size" if experiment == "block-size" else "method"
    err_col = "rel_error_true" if experiment == "threshold" else "rel_error"
    buckets: dict = {}
    for row in rows:
        k = (row[group], row.get("rank", row.get("final_rank")))
        buckets.setdefault(k, []).append(row)
    lines = [f"{group:>14} {'rank':>6} {'median_err':>12} {'median_time_s':>14}"]
    for (g, r), grp in buckets.items():
        err = statistics.median(x[err_col] for x in grp)
        times = [x["wall_time_s"] for x in grp if "wall_time_s" in x]
        t = f"{statistics.median(times):14.4f}" if times else f"{'-':>14}"
        lines.append(f"{g!s:>14} {r!s:>6} {err:12.3e} {t}")
    return "\n".join(lines)


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curkit", description="Iterative CUR experiments (CSV output).")
    sub = parser.add_subparsers(dest="experiment", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--matrix", required=True, help="gen:<kind>:<args> or mm:<path>")
    common.add_argument("--b", type=int, default=50, help="block size")
    common.add_argument("--eps", type=float, default=1e-6, help="relative error target")
    common.add_argument("--delta", type=float, default=0.0, help="allowed overshoot factor 1+delta")
    common.add_argument("--alpha", type=float, default=0.1, help="failure probability for --risk-adjust")
    common.add_argument("--risk-adjust", action="store_true", help="stop on the risk-adjusted threshold")
    common.add_argument("--ranks", type=_int_list, default=[], help="comma-separated ranks")
    common.add_argument("--blocks", type=_int_list, default=[], help="comma-separated block sizes")
    common.add_argument("--reps", type=int, default=5)
    common.add_argument("--seed", type=int, default=0, help="seed base")
    common.add_argument("--method", default="LUPP", choices=["LUPP", "QRCP"], help="index selection")
    common.add_argument("--jobs", type=int, default=1, help="repetitions run in parallel")
    common.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    common.add_argument("--deterministic", action="store_true", help="single-threaded BLAS")
    for name, text in [
        ("threshold", "run to a tolerance; compare with s-LUPP at the found rank"),
        ("fixed-rank", "pure rank mode at each rank; s-LUPP and SVD references"),
        ("selection", "LUPP vs QRCP selection over a rank grid"),
        ("block-size", "pure rank mode for each block size"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.deterministic:
            set_deterministic(True)
        cfg = ExperimentConfig(
            experiment=args.experiment,
            matrix=args.matrix,
            b=args.b,
            eps=args.eps,
            delta=args.delta,
            alpha=args.alpha,
            risk_adjust=args.risk_adjust,
            ranks=args.ranks,
            blocks=args.blocks,
            reps=args.reps,
            seed=args.seed,
            method=args.method,
            out=args.out,
            jobs=args.jobs,
        )
        rows = run_experiment(cfg)
        buf = io.StringIO()
        write_csv(rows, cfg.experiment, buf)
        if cfg.out:
            Path(cfg.out).write_text(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
        print(summarize(rows, cfg.experiment), file=sys.stderr)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"curkit: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, NotImplementedError) as exc:
        print(f"curkit: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
