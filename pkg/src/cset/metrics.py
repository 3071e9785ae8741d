"""Coverage, size, and adaptiveness metrics for prediction sets.

The public entry points accept explicit prediction sets (any iterable of
PredictionSet) so they can be checked against hand counts; the *_from_arrays
variants work on set sizes and coverage indicators directly and are what the
trial harness uses, since every set produced in this package is a prefix of
the sorted class order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conformal import ConformalModel, set_sizes
from .score_store import DataError, SortedScores
from . import seeds

DIFFICULTY_BINS = ((1, 1), (2, 3), (4, 6), (7, 10), (11, 100), (101, 1000))
BASE_STRATA = ((0, 1), (2, 3), (4, 10), (11, 100), (101, 1000))


def default_strata(n_classes: int) -> tuple:
    """Set-size strata clipped to [0, K]; the first stratum holds sizes 0-1."""
    out = []
    for lo, hi in BASE_STRATA:
        if lo > n_classes:
            break
        out.append((lo, min(hi, n_classes)))
    if out and out[-1][1] < n_classes:
        out[-1] = (out[-1][0], n_classes)
    return tuple(out)


@dataclass(frozen=True)
class StratumRow:
    lo: int
    hi: int
    count: int
    coverage: float | None


@dataclass(frozen=True)
class DifficultyRow:
    lo: int
    hi: int
    count: int
    coverage: float | None
    avg_size: float | None


@dataclass(frozen=True)
class EvalReport:
    """Everything measured on one evaluation split."""

    n_eval: int
    coverage: float
    avg_size: float
    sscv: float
    top1: float
    top5: float
    size_hist: dict
    per_stratum: tuple
    per_difficulty: tuple


def default_difficulty_bins(n_classes: int) -> tuple:
    """True-label-rank bins clipped to [1, K]."""
    out = []
    for lo, hi in DIFFICULTY_BINS:
        if lo > n_classes:
            break
        out.append((lo, min(hi, n_classes)))
    if out and out[-1][1] < n_classes:
        out[-1] = (out[-1][0], n_classes)
    return tuple(out)


def _set_classes(s):
    # PredictionSet or any collection of class indices
    return s.classes if hasattr(s, "classes") else s


def _sets_to_arrays(sets, labels) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    sets = [_set_classes(s) for s in sets]
    if len(sets) != len(labels):
        raise DataError(f"{len(sets)} sets but {len(labels)} labels")
    sizes = np.array([len(s) for s in sets], dtype=np.int64)
    covered = np.array(
        [int(label) in s for s, label in zip(sets, labels)], dtype=bool
    )
    return sizes, covered


def coverage_and_size(sets, labels) -> tuple[float, float]:
    """(fraction of labels inside their set, mean set size)."""
    sizes, covered = _sets_to_arrays(sets, labels)
    if sizes.size == 0:
        raise DataError("no prediction sets to evaluate")
    return float(np.mean(covered)), float(np.mean(sizes))


def _validate_strata(strata) -> tuple:
    strata = tuple((int(lo), int(hi)) for lo, hi in strata)
    if not strata:
        raise ValueError("need at least one stratum")
    for lo, hi in strata:
        if lo > hi:
            raise ValueError(f"bad stratum ({lo}, {hi})")
    for (lo1, hi1) in strata:
        for (lo2, hi2) in strata:
            if (lo1, hi1) != (lo2, hi2) and lo1 <= hi2 and lo2 <= hi1:
                raise ValueError(f"overlapping strata ({lo1},{hi1}) and ({lo2},{hi2})")
    return strata


def strata_rows(sizes: np.ndarray, covered: np.ndarray, strata) -> tuple:
    """Per-stratum counts and coverages; empty strata carry coverage None."""
    strata = _validate_strata(strata)
    hit = np.zeros(sizes.shape, dtype=bool)
    rows = []
    for lo, hi in strata:
        inside = (sizes >= lo) & (sizes <= hi)
        hit |= inside
        cnt = int(inside.sum())
        cov = float(np.mean(covered[inside])) if cnt else None
        rows.append(StratumRow(lo, hi, cnt, cov))
    if not hit.all():
        s = int(sizes[~hit][0])
        raise DataError(f"set size {s} falls in no stratum")
    return tuple(rows)


def sscv_from_arrays(sizes: np.ndarray, covered: np.ndarray, strata, alpha: float) -> float:
    """Worst absolute gap between stratum coverage and 1 - alpha.

    Strata are disjoint integer ranges of set size; empty strata are
    skipped. Zero only when every nonempty stratum hits 1 - alpha exactly.
    """
    rows = strata_rows(np.asarray(sizes), np.asarray(covered), strata)
    gaps = [abs(r.coverage - (1.0 - alpha)) for r in rows if r.coverage is not None]
    if not gaps:
        raise DataError("all strata empty")
    return float(max(gaps))


def sscv(sets, labels, strata, alpha: float) -> float:
    sizes, covered = _sets_to_arrays(sets, labels)
    return sscv_from_arrays(sizes, covered, strata, alpha)


def difficulty_rows(ranks: np.ndarray, sizes: np.ndarray, covered: np.ndarray, bins) -> tuple:
    rows = []
    for lo, hi in bins:
        inside = (ranks >= lo) & (ranks <= hi)
        cnt = int(inside.sum())
        if cnt:
            rows.append(
                DifficultyRow(lo, hi, cnt, float(np.mean(covered[inside])),
                              float(np.mean(sizes[inside])))
            )
        else:
            rows.append(DifficultyRow(lo, hi, cnt, None, None))
    return tuple(rows)


def difficulty_table(sets, labels, ss: SortedScores, bins=None) -> tuple:
    """Coverage and size grouped by how deep the true label sits.

    The difficulty of an example is the 1-based rank of its label in the
    sorted score order; bin (1, 1) is exactly the top-1-correct examples.
    """
    sizes, covered = _sets_to_arrays(sets, labels)
    ranks = ss.label_ranks(np.asarray(labels))
    if bins is None:
        bins = default_difficulty_bins(ss.n_classes)
    return difficulty_rows(ranks, sizes, covered, bins)


def size_histogram(sizes: np.ndarray) -> dict:
    """Map set size -> count; sizes times counts reproduces the total mass."""
    sizes = np.asarray(sizes, dtype=np.int64)
    counts = np.bincount(sizes)
    return {int(s): int(c) for s, c in enumerate(counts) if c > 0}


def evaluate_arrays(
    sizes: np.ndarray,
    ranks: np.ndarray,
    alpha: float,
    strata,
    bins,
) -> EvalReport:
    """Full report from set sizes and true-label ranks (prefix sets)."""
    covered = ranks <= sizes
    return EvalReport(
        n_eval=int(sizes.size),
        coverage=float(np.mean(covered)),
        avg_size=float(np.mean(sizes)),
        sscv=sscv_from_arrays(sizes, covered, strata, alpha),
        top1=float(np.mean(ranks <= 1)),
        top5=float(np.mean(ranks <= 5)),
        size_hist=size_histogram(sizes),
        per_stratum=strata_rows(sizes, covered, strata),
        per_difficulty=difficulty_rows(ranks, sizes, covered, bins),
    )


def evaluate_model(
    model: ConformalModel,
    ss: SortedScores,
    labels: np.ndarray,
    seed: int = 0,
    strata=None,
    bins=None,
) -> EvalReport:
    """Predict on an evaluation split and measure everything.

    Randomized models draw one u per row from the substream (seed, EVAL_U).
    """
    u = seeds.rng(seed, seeds.EVAL_U).random(ss.n) if model.spec.randomized else None
    sizes = set_sizes(model, ss, u)
    ranks = ss.label_ranks(np.asarray(labels))
    if strata is None:
        strata = default_strata(ss.n_classes)
    if bins is None:
        bins = default_difficulty_bins(ss.n_classes)
    return evaluate_arrays(sizes, ranks, model.spec.alpha, strata, bins)
