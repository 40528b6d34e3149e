"""Discounted, normalized statistical-parity measures for rankings: rND
(proportion difference), rKL (KL divergence) and rRD (ratio difference).

Each measure accumulates a set-wise parity term at every cutoff of a schedule,
weighted by 1/log2(i), and divides by the largest value attainable for the
given group sizes. Logarithms are base 2 throughout. 0 means statistical
parity at every cutoff; 1 is the worst attainable value.

The rND/rKL normalizer is the exact maximum of the discounted sum over all
rankings with the given (n, n_plus), found by dynamic programming over
feasible prefix-count sequences. The rRD normalizer is the discounted sum of
the all-nonprotected-first extreme, which anchors the fully segregated
minority-last ranking at exactly 1.0; outside rRD's meaningful regime
(minority protected group, protected items not crowded to the top) values
above 1 are possible and are reported as computed.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .ranking import Ranking, build_schedule, prefix_counts, validate_ranking

_TINY = np.finfo(float).tiny


class DegenerateGroupError(ValueError):
    """The protected group is empty or the whole population."""


class RrdInapplicableError(ValueError):
    """rRD requested for a majority protected group without the override."""


class MeasureKind(enum.Enum):
    RND = "rnd"
    RKL = "rkl"
    RRD = "rrd"


@dataclass(frozen=True)
class BinaryDistribution:
    p_plus: float
    p_minus: float

    def __post_init__(self):
        if not (0.0 <= self.p_plus <= 1.0 and 0.0 <= self.p_minus <= 1.0):
            raise ValueError("components must lie in [0, 1]")
        if abs(self.p_plus + self.p_minus - 1.0) > 1e-12:
            raise ValueError("components must sum to 1")


def kl_divergence(p: BinaryDistribution, q: BinaryDistribution) -> float:
    """Base-2 KL divergence between two binary distributions, with the
    0*log(0/q) = 0 convention. Q must be strictly positive."""
    if q.p_plus <= 0.0 or q.p_minus <= 0.0:
        raise DegenerateGroupError(
            "reference distribution has a zero component"
        )
    out = _kl_terms(
        np.asarray(p.p_plus, dtype=float),
        np.asarray(p.p_minus, dtype=float),
        q.p_plus,
        q.p_minus,
    )
    return float(out)


def _kl_terms(
    p1: np.ndarray, p2: np.ndarray, q1: float, q2: float
) -> np.ndarray:
    """Elementwise KL((p1, p2) || (q1, q2)), base 2, safe at zero components
    of P. Clamped at 0: KL is non-negative and tiny negative values can only
    be rounding noise."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    t1 = np.where(p1 > 0.0, p1 * np.log2(np.maximum(p1, _TINY) / q1), 0.0)
    t2 = np.where(p2 > 0.0, p2 * np.log2(np.maximum(p2, _TINY) / q2), 0.0)
    return np.maximum(t1 + t2, 0.0)


def _term_values(
    kind: MeasureKind, i: np.ndarray, c: np.ndarray, n: int, n_plus: int
) -> np.ndarray:
    """Undiscounted parity terms, broadcast over cutoff i and prefix count c.

    Entries at infeasible (i, c) pairs are garbage-free but meaningless and
    must be masked by the caller.
    """
    i = np.asarray(i, dtype=float)
    c = np.asarray(c, dtype=float)
    n_minus = n - n_plus
    if kind is MeasureKind.RND:
        return np.abs(c / i - n_plus / n)
    if kind is MeasureKind.RKL:
        # both components come straight from the counts so that a prefix in
        # exact proportion yields exactly 0
        return _kl_terms(c / i, (i - c) / i, n_plus / n, n_minus / n)
    # RRD: a fraction with a zero numerator or denominator counts as 0.
    rest = i - c
    r1 = np.where((c > 0.0) & (rest > 0.0), c / np.where(rest > 0.0, rest, 1.0), 0.0)
    r2 = n_plus / n_minus
    return np.abs(r1 - r2)


def _check_group(n: int, n_plus: int) -> None:
    if n_plus <= 0 or n_plus >= n:
        raise DegenerateGroupError(
            f"protected group size {n_plus} of {n} is degenerate"
        )


def parity_term(
    kind: MeasureKind, i: int, c: int, n: int, n_plus: int
) -> float:
    """The undiscounted set-wise parity term at cutoff ``i`` with ``c``
    protected items in the prefix."""
    _check_group(n, n_plus)
    lo, hi = max(0, i - (n - n_plus)), min(i, n_plus)
    if not lo <= c <= hi:
        raise ValueError(f"c={c} infeasible at cutoff {i} (range [{lo},{hi}])")
    return float(_term_values(kind, np.array(i), np.array(c), n, n_plus))


def unnormalized_sum(
    kind: MeasureKind,
    counts: Sequence[tuple[int, int]],
    n: int,
    n_plus: int,
) -> float:
    """Discounted sum of parity terms over the given (cutoff, count) pairs."""
    acc = 0.0
    for i, c in counts:
        acc += parity_term(kind, i, c, n, n_plus) / float(np.log2(i))
    return acc


def _discounted_term_matrix(
    kind: MeasureKind, cutoffs: tuple[int, ...], n: int, n_plus: int
) -> np.ndarray:
    i = np.asarray(cutoffs, dtype=float)[:, None]
    c = np.arange(n_plus + 1, dtype=float)[None, :]
    return _term_values(kind, i, c, n, n_plus) / np.log2(i)


def _dp_max_sum(kind: MeasureKind, n: int, n_plus: int, step: int) -> float:
    """Exact maximum of the discounted parity-term sum over all rankings with
    the given group sizes.

    State: protected count c at each cutoff. Transitions between consecutive
    cutoffs i < j allow any increment in [0, j - i], clipped to the feasible
    band max(0, i - n_minus) <= c <= min(i, n_plus). Each term depends only on
    its own (i, c), so the DP maximum is exact.
    """
    cutoffs = build_schedule(n, step).cutoffs
    n_minus = n - n_plus
    tm = _discounted_term_matrix(kind, cutoffs, n, n_plus)
    lo = [max(0, i - n_minus) for i in cutoffs]
    hi = [min(i, n_plus) for i in cutoffs]

    val = np.full(n_plus + 1, -np.inf)
    val[lo[0] : hi[0] + 1] = tm[0, lo[0] : hi[0] + 1]
    for j in range(1, len(cutoffs)):
        d = cutoffs[j] - cutoffs[j - 1]
        # reach[c] = max(val[c-d .. c]) via d shifted elementwise maxima
        reach = val.copy()
        for s in range(1, d + 1):
            np.maximum(reach[s:], val[:-s], out=reach[s:])
        reach += tm[j]
        reach[: lo[j]] = -np.inf
        reach[hi[j] + 1 :] = -np.inf
        val = reach
    # the final cutoff is n, where c is pinned to n_plus
    return float(val[n_plus])


_normalizer_lock = threading.Lock()


@lru_cache(maxsize=None)
def _normalizer_cached(kind: MeasureKind, n: int, n_plus: int, step: int) -> float:
    if kind is MeasureKind.RRD:
        counts = [(i, max(0, i - (n - n_plus))) for i in build_schedule(n, step).cutoffs]
        return unnormalized_sum(kind, counts, n, n_plus)
    return _dp_max_sum(kind, n, n_plus, step)


def normalizer(
    kind: MeasureKind,
    n: int,
    n_plus: int,
    step: int = 10,
    allow_majority_rrd: bool = False,
) -> float:
    """Largest attainable discounted sum for the given group sizes.

    Returns 0.0 in the trivial single-cutoff case n <= step, where the only
    cutoff is the whole ranking and every ranking scores 0.
    """
    _check_group(n, n_plus)
    if kind is MeasureKind.RRD and 2 * n_plus > n and not allow_majority_rrd:
        raise RrdInapplicableError(
            f"rRD needs a minority protected group (n_plus={n_plus}, n={n})"
        )
    with _normalizer_lock:
        return _normalizer_cached(kind, n, n_plus, step)


def measure_from_flags(
    kind: MeasureKind,
    flags: np.ndarray,
    step: int = 10,
    allow_majority_rrd: bool = False,
) -> float:
    """Measure a ranking given only its protected-flag sequence in rank
    order. Vectorized over cutoffs; the hot path for sweeps and fuzzing."""
    flags = np.asarray(flags, dtype=bool)
    n = int(flags.size)
    n_plus = int(flags.sum())
    z = normalizer(kind, n, n_plus, step, allow_majority_rrd)
    if z == 0.0:
        return 0.0
    cutoffs = np.asarray(build_schedule(n, step).cutoffs)
    c = np.cumsum(flags)[cutoffs - 1]
    terms = _term_values(
        kind, cutoffs.astype(float), c.astype(float), n, n_plus
    )
    # strict left-to-right accumulation, matching the DP's order, so the sum
    # can never exceed the DP normalizer by rounding alone
    return sum((terms / np.log2(cutoffs)).tolist()) / z


def measure(
    kind: MeasureKind,
    ranking: Ranking,
    step: int = 10,
    allow_majority_rrd: bool = False,
) -> float:
    """One fairness measure of a ranking; 0 is most fair."""
    validate_ranking(ranking)
    return measure_from_flags(
        kind, ranking.protected_flags(), step, allow_majority_rrd
    )


@dataclass(frozen=True)
class CutoffDiagnostics:
    """Discounted per-cutoff contributions (term / log2(i))."""

    i: int
    c: int
    term_rnd: float
    term_rkl: float
    term_rrd: Optional[float]


@dataclass(frozen=True)
class FairnessReport:
    n: int
    n_plus: int
    step: int
    rnd: float
    rkl: float
    rrd: Optional[float]
    per_cutoff: tuple[CutoffDiagnostics, ...]
    normalizers: tuple[float, float, Optional[float]]


def fairness_report(ranking: Ranking, step: int = 10) -> FairnessReport:
    """All three measures plus per-cutoff diagnostics. rRD is reported as
    None (not raised) when the protected group is the majority."""
    validate_ranking(ranking)
    n, n_plus = ranking.n, ranking.n_plus
    _check_group(n, n_plus)
    counts = prefix_counts(ranking, build_schedule(n, step))

    rrd_ok = 2 * n_plus <= n
    rnd = measure(MeasureKind.RND, ranking, step)
    rkl = measure(MeasureKind.RKL, ranking, step)
    rrd = measure(MeasureKind.RRD, ranking, step) if rrd_ok else None

    z_rnd = normalizer(MeasureKind.RND, n, n_plus, step)
    z_rkl = normalizer(MeasureKind.RKL, n, n_plus, step)
    z_rrd = normalizer(MeasureKind.RRD, n, n_plus, step) if rrd_ok else None

    diags = []
    for i, c in counts:
        disc = float(np.log2(i))
        diags.append(
            CutoffDiagnostics(
                i=i,
                c=c,
                term_rnd=parity_term(MeasureKind.RND, i, c, n, n_plus) / disc,
                term_rkl=parity_term(MeasureKind.RKL, i, c, n, n_plus) / disc,
                term_rrd=(
                    parity_term(MeasureKind.RRD, i, c, n, n_plus) / disc
                    if rrd_ok
                    else None
                ),
            )
        )
    return FairnessReport(
        n=n,
        n_plus=n_plus,
        step=step,
        rnd=rnd,
        rkl=rkl,
        rrd=rrd,
        per_cutoff=tuple(diags),
        normalizers=(z_rnd, z_rkl, z_rrd),
    )


def _j(x: Optional[float]) -> str:
    return "null" if x is None else f"{x:.6f}"


def report_to_json(report: FairnessReport) -> str:
    """Stable JSON serialization with 6-decimal reals."""
    rows = ",\n    ".join(
        "{"
        + f'"i": {d.i}, "c": {d.c}, "term_rnd": {_j(d.term_rnd)}, '
        + f'"term_rkl": {_j(d.term_rkl)}, "term_rrd": {_j(d.term_rrd)}'
        + "}"
        for d in report.per_cutoff
    )
    z_rnd, z_rkl, z_rrd = report.normalizers
    return (
        "{\n"
        f'  "n": {report.n},\n'
        f'  "n_plus": {report.n_plus},\n'
        f'  "step": {report.step},\n'
        f'  "rnd": {_j(report.rnd)},\n'
        f'  "rkl": {_j(report.rkl)},\n'
        f'  "rrd": {_j(report.rrd)},\n'
        f'  "normalizers": {{"rnd": {_j(z_rnd)}, "rkl": {_j(z_rkl)}, '
        f'"rrd": {_j(z_rrd)}}},\n'
        f'  "per_cutoff": [\n    {rows}\n  ]\n'
        "}\n"
    )
