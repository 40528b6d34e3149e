"""Command-line surface: measure, generate, sweep, rank, optimize.

Exit codes: 0 success, 1 domain error (degenerate group, missing values,
divergence), 2 usage error (bad flags, malformed input, unknown columns).
Output files are written to a temp file and renamed, so a failed run leaves
nothing partial behind.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import fairopt, generator, ingest, measures, ranking

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class _UsageError(Exception):
    pass


def _write_atomic(path: str | Path, write: Callable[[str], None]) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_f_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise _UsageError(f"expected start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise _UsageError(f"non-numeric f-grid {text!r}") from None
    if step <= 0 or stop < start:
        raise _UsageError(f"bad f-grid {text!r}")
    grid = []
    v = start
    while v <= stop + 1e-9:
        grid.append(round(v, 12))
        v = start + len(grid) * step
    return grid


def _protected_spec(args) -> ingest.ProtectedSpec:
    if (args.protected_equals is None) == (args.protected_less_than is None):
        raise _UsageError(
            "give exactly one of --protected-equals / --protected-less-than"
        )
    if args.protected_equals is not None:
        return ingest.ProtectedSpec.equals(args.protected_col, args.protected_equals)
    return ingest.ProtectedSpec.less_than(
        args.protected_col, args.protected_less_than
    )


def _score_spec(args) -> ingest.ScoreSpec:
    if (args.score_col is None) == (not args.score_sum):
        raise _UsageError("give exactly one of --score-col / --score-sum")
    if args.score_col is not None:
        return ingest.ScoreSpec.single_attribute(args.score_col)
    return ingest.ScoreSpec.equal_weight_sum(args.score_sum)


def cmd_measure(args) -> int:
    rk = ranking.read_ranking_csv(args.ranking_csv)
    report = measures.fairness_report(rk, step=args.step)
    if report.rrd is None and not args.allow_majority_rrd:
        note = "rRD inapplicable: protected group is the majority"
    elif report.rrd is None and args.allow_majority_rrd:
        rrd = measures.measure(
            measures.MeasureKind.RRD, rk, args.step, allow_majority_rrd=True
        )
        note = f"rRD (majority override) = {rrd:.6f}"
    else:
        note = None
    text = measures.report_to_json(report)
    if args.out:
        _write_atomic(args.out, lambda p: Path(p).write_text(text, encoding="utf-8"))
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    if note:
        print(note)
    return EXIT_OK


def cmd_generate(args) -> int:
    have_counts = args.n is not None or args.n_plus is not None
    if have_counts == (args.base is not None):
        raise _UsageError("give either --n/--n-plus or --base, not both")
    if have_counts and (args.n is None or args.n_plus is None):
        raise _UsageError("--n and --n-plus go together")
    if not 0.0 <= args.f <= 1.0:
        raise _UsageError(f"--f must be in [0, 1], got {args.f}")
    if args.base is not None:
        base = ranking.read_ranking_csv(args.base)
    else:
        base = generator.random_base_ranking(args.n, args.n_plus, args.seed)
    out = generator.generate_unfair(
        base, generator.GeneratorConfig(args.f, args.seed)
    )
    _write_atomic(args.out, lambda p: ranking.write_ranking_csv(out, p))
    print(f"wrote {args.out} ({out.n} items, {out.n_plus} protected)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    f_grid = _parse_f_grid(args.f_grid)
    seeds = list(range(args.seeds))
    rows = generator.sweep(args.n, args.n_plus, f_grid, seeds, step=args.step)
    aggs = generator.aggregate_sweep(rows)
    agg_out = args.agg_out or str(Path(args.out).with_suffix(".agg.csv"))
    _write_atomic(args.out, lambda p: generator.write_sweep_csv(rows, p))
    _write_atomic(agg_out, lambda p: generator.write_aggregate_csv(aggs, p))
    print(f"wrote {args.out} ({len(rows)} rows) and {agg_out} ({len(aggs)} rows)")
    return EXIT_OK


def _load_ranked_dataset(args):
    table = ingest.load_table(
        args.dataset_csv,
        row_id_column=args.id_col,
        drop_incomplete_rows=args.drop_incomplete_rows,
    )
    protected, proportion = ingest.derive_protected(table, _protected_spec(args))
    return table, protected, proportion


def cmd_rank(args) -> int:
    table, protected, proportion = _load_ranked_dataset(args)
    rk = ingest.score_and_rank(table, _score_spec(args), protected)
    _write_atomic(args.out, lambda p: ranking.write_ranking_csv(rk, p))
    if table.dropped_rows:
        print(f"dropped {len(table.dropped_rows)} incomplete rows")
    print(
        f"wrote {args.out} ({rk.n} items, protected proportion "
        f"{proportion:.6f})"
    )
    return EXIT_OK


def cmd_optimize(args) -> int:
    table, protected, proportion = _load_ranked_dataset(args)
    score_spec = _score_spec(args)
    scores = ingest.compute_scores(table, score_spec)
    feature_cols = args.features or list(score_spec.columns)
    for name in feature_cols:
        if name not in table.data:
            raise ingest.UnknownColumnError(name)
    x = np.column_stack(
        [ingest.minmax_normalize(table.column(c)) for c in feature_cols]
    )
    features = fairopt.FeatureMatrix(
        x=x,
        protected=np.asarray(protected, dtype=bool),
        y=np.asarray(ingest.minmax_normalize(scores)),
        ids=table.row_ids,
    )
    hyper = fairopt.Hyperparams(
        a_x=args.ax,
        a_y=args.ay,
        a_z=args.az,
        k=args.k,
        learning_rate=args.lr,
        max_iters=args.iters,
        seed=args.seed,
    )
    model, traces = fairopt.train(features, hyper, step=args.step)
    _, ranked = fairopt.apply_model(features, model)
    _write_atomic(args.trace_out, lambda p: fairopt.write_trace_csv(traces, p))
    _write_atomic(args.model_out, lambda p: fairopt.save_model(model, hyper, p))
    _write_atomic(args.ranking_out, lambda p: ranking.write_ranking_csv(ranked, p))
    last = traces[-1]
    print(
        f"finished after {len(traces)} iterations: L={last.total:.6f} "
        f"L_z={last.l_z:.6f} rkl={last.rkl:.6f} score_diff={last.score_diff:.6f}"
    )
    print(f"wrote {args.trace_out}, {args.model_out}, {args.ranking_out}")
    return EXIT_OK


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("dataset_csv", help="input dataset CSV with header")
    p.add_argument("--id-col", default=None, help="row id column (default: row number)")
    p.add_argument("--protected-col", required=True, help="protected attribute column")
    p.add_argument(
        "--protected-equals",
        default=None,
        help="protected iff column equals this value",
    )
    p.add_argument(
        "--protected-less-than",
        type=float,
        default=None,
        help="protected iff column is below this threshold",
    )
    p.add_argument("--score-col", default=None, help="rank by this raw column")
    p.add_argument(
        "--score-sum",
        nargs="+",
        default=None,
        metavar="COL",
        help="rank by the equal-weight sum of these min-max normalized columns",
    )
    p.add_argument(
        "--drop-incomplete-rows",
        action="store_true",
        help="drop rows with missing values instead of failing",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankfair",
        description="Statistical-parity measures and re-scoring for rankings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="compute rND/rKL/rRD for a ranking CSV")
    p.add_argument("ranking_csv", help="ranking CSV (id,protected,score)")
    p.add_argument("--step", type=int, default=10, help="cutoff step (default 10)")
    p.add_argument(
        "--allow-majority-rrd",
        action="store_true",
        help="also report rRD when the protected group is the majority",
    )
    p.add_argument("--out", default=None, help="write report JSON here instead of stdout")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("generate", help="generate a ranking of controlled unfairness")
    p.add_argument("--n", type=int, default=None, help="item count for a random base")
    p.add_argument("--n-plus", type=int, default=None, help="protected count")
    p.add_argument("--base", default=None, help="use this ranking CSV as the base")
    p.add_argument("--f", type=float, required=True, help="fairness probability in [0, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output ranking CSV")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep", help="measure generated rankings over an f grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--n-plus", type=int, required=True)
    p.add_argument("--f-grid", required=True, help="start:stop:step, endpoints inclusive")
    p.add_argument("--seeds", type=int, default=50, help="number of seeds (0..k-1)")
    p.add_argument("--step", type=int, default=10)
    p.add_argument("--out", required=True, help="per-cell CSV")
    p.add_argument("--agg-out", default=None, help="per-f means CSV (default: OUT.agg.csv)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rank", help="rank a tabular dataset by a score spec")
    _add_dataset_flags(p)
    p.add_argument("--out", required=True, help="output ranking CSV")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("optimize", help="learn a fairness-improving re-scoring")
    _add_dataset_flags(p)
    p.add_argument(
        "--features",
        nargs="+",
        default=None,
        metavar="COL",
        help="feature columns (default: the score columns)",
    )
    p.add_argument("--k", type=int, default=10, help="prototype count")
    p.add_argument("--ax", type=float, default=0.01, help="reconstruction weight")
    p.add_argument("--ay", type=float, default=1.0, help="accuracy weight")
    p.add_argument("--az", type=float, default=5.0, help="parity weight")
    p.add_argument("--lr", type=float, default=0.05, help="learning rate")
    p.add_argument("--iters", type=int, default=500, help="iteration budget")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=int, default=10, help="cutoff step for trace measures")
    p.add_argument("--trace-out", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--ranking-out", required=True)
    p.set_defaults(func=cmd_optimize)

    return parser


_USAGE_ERRORS = (
    _UsageError,
    ranking.RankingFormatError,
    ingest.UnknownColumnError,
    ingest.SpecError,
)
_DOMAIN_ERRORS = (
    measures.DegenerateGroupError,
    measures.RrdInapplicableError,
    fairopt.DivergenceError,
    ingest.TableLoadError,
    ranking.ValidationError,
)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
