import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import cset
from cset.conformal import ConformalModel, MethodSpec, calibrate
from cset.metrics import (
    coverage_and_size,
    default_difficulty_bins,
    default_strata,
    difficulty_table,
    evaluate_model,
    size_histogram,
    sscv,
    sscv_from_arrays,
    strata_rows,
)
from cset.score_store import DataError, ScoreMatrix, sort_scores

from conftest import dirichlet_matrix


def test_coverage_hand_example():
    sets = ({0}, {1, 2}, {0, 1})
    labels = (0, 2, 2)
    cov, size = coverage_and_size(sets, labels)
    assert cov == pytest.approx(2 / 3, abs=1e-12)
    assert size == pytest.approx(5 / 3, abs=1e-12)


def test_sscv_hand_example():
    sizes = np.array([1, 1, 2, 3])
    covered = np.array([True, False, True, True])
    got = sscv_from_arrays(sizes, covered, ((1, 1), (2, 3)), alpha=0.1)
    assert got == pytest.approx(0.4, abs=1e-9)


def test_sscv_skips_empty_strata():
    sizes = np.array([1, 1])
    covered = np.array([True, True])
    got = sscv_from_arrays(sizes, covered, ((1, 1), (2, 3)), alpha=0.5)
    assert got == pytest.approx(0.5, abs=1e-12)


def test_sscv_rejects_unknown_size():
    sizes = np.array([1, 7])
    covered = np.array([True, True])
    with pytest.raises(DataError, match="7"):
        sscv_from_arrays(sizes, covered, ((1, 1), (2, 3)), alpha=0.5)


def test_sscv_rejects_overlapping_strata():
    sizes = np.array([1])
    covered = np.array([True])
    with pytest.raises(ValueError):
        sscv_from_arrays(sizes, covered, ((1, 2), (2, 3)), alpha=0.5)


def brute_force_sscv(sizes, covered, strata, alpha):
    """Independent re-count with dict buckets, no numpy."""
    buckets = {}
    for s, c in zip(sizes, covered):
        home = None
        for lo, hi in strata:
            if lo <= s <= hi:
                home = (lo, hi)
        if home is None:
            raise AssertionError("unassigned size")
        buckets.setdefault(home, []).append(bool(c))
    worst = None
    for vals in buckets.values():
        dev = abs(sum(vals) / len(vals) - (1 - alpha))
        worst = dev if worst is None else max(worst, dev)
    return worst


def test_sscv_matches_brute_force_on_random_instances():
    g = np.random.default_rng(2024)
    strata_options = [
        ((0, 1), (2, 3), (4, 10)),
        ((0, 2), (3, 10)),
        ((0, 0), (1, 1), (2, 4), (5, 10)),
    ]
    for trial in range(50):
        n = int(g.integers(1, 21))
        sizes = g.integers(0, 11, size=n)
        covered = g.random(n) < 0.7
        strata = strata_options[trial % len(strata_options)]
        alpha = float(g.uniform(0.05, 0.5))
        want = brute_force_sscv(sizes, covered, strata, alpha)
        got = sscv_from_arrays(sizes, covered, strata, alpha)
        assert got == pytest.approx(want, abs=1e-12)


def test_sscv_from_sets_wrapper():
    sets = ({0}, {0, 1}, set(), {1, 2, 3})
    labels = (0, 2, 1, 3)
    got = sscv(sets, labels, ((0, 1), (2, 3)), alpha=0.1)
    # sizes (1,2,0,3): stratum (0,1) coverage 0.5, stratum (2,3) coverage 0.5
    assert got == pytest.approx(0.4, abs=1e-12)


def test_default_strata_clip_to_k():
    assert default_strata(100) == ((0, 1), (2, 3), (4, 10), (11, 100))
    assert default_strata(1000) == ((0, 1), (2, 3), (4, 10), (11, 100), (101, 1000))
    assert default_strata(10) == ((0, 1), (2, 3), (4, 10))
    assert default_strata(5) == ((0, 1), (2, 3), (4, 5))
    assert default_strata(3) == ((0, 1), (2, 3))


def test_default_difficulty_bins_clip():
    assert default_difficulty_bins(10) == ((1, 1), (2, 3), (4, 6), (7, 10))
    assert default_difficulty_bins(100) == (
        (1, 1), (2, 3), (4, 6), (7, 10), (11, 100)
    )


def test_strata_rows_counts_and_empty():
    sizes = np.array([0, 1, 1, 5])
    covered = np.array([False, True, True, True])
    rows = strata_rows(sizes, covered, ((0, 1), (2, 3), (4, 10)))
    assert [(r.lo, r.hi, r.count) for r in rows] == [
        (0, 1, 3),
        (2, 3, 0),
        (4, 10, 1),
    ]
    assert rows[0].coverage == pytest.approx(2 / 3)
    assert rows[1].coverage is None


def test_size_histogram_consistency():
    g = np.random.default_rng(5)
    sizes = g.integers(0, 8, size=300)
    hist = size_histogram(sizes)
    assert sum(hist.values()) == 300
    assert sum(s * c for s, c in hist.items()) / 300 == pytest.approx(sizes.mean())
    assert list(hist) == sorted(hist)


def test_evaluate_model_report_is_consistent():
    m = dirichlet_matrix(600, 10, seed=8)
    ss = sort_scores(m, seed=0)
    model = calibrate(ss, m.labels, MethodSpec("aps", 0.2), seed=0)
    rep = evaluate_model(model, ss, m.labels, seed=3)
    assert rep.n_eval == 600
    assert 0.0 <= rep.coverage <= 1.0
    assert 0.0 <= rep.avg_size <= 10.0
    assert sum(rep.size_hist.values()) == 600
    mean_from_hist = sum(s * c for s, c in rep.size_hist.items()) / 600
    assert mean_from_hist == pytest.approx(rep.avg_size, abs=1e-12)
    assert 0.0 <= rep.sscv <= max(0.8, 0.2)
    # top-1 / top-5 come from label ranks, not sets
    ranks = ss.label_ranks(m.labels)
    assert rep.top1 == pytest.approx(np.mean(ranks <= 1))
    assert rep.top5 == pytest.approx(np.mean(ranks <= 5))
    stratum_total = sum(r.count for r in rep.per_stratum)
    assert stratum_total == 600


def test_evaluate_model_is_deterministic_per_seed():
    m = dirichlet_matrix(300, 6, seed=9)
    ss = sort_scores(m, seed=0)
    model = calibrate(ss, m.labels, MethodSpec("aps", 0.1), seed=0)
    a = evaluate_model(model, ss, m.labels, seed=5)
    b = evaluate_model(model, ss, m.labels, seed=5)
    c = evaluate_model(model, ss, m.labels, seed=6)
    assert a == b
    assert a != c


def test_difficulty_bins_monotone_on_oracle_scores():
    # bin-1 (top-1-correct) coverage should beat the deep bins when sets are
    # built from truthful probabilities
    spec = cset.SynthSpec(n=20000, n_classes=100, seed=3)
    _, m = cset.generate(spec)
    ss = sort_scores(m, seed=0)
    model = ConformalModel(
        MethodSpec("aps", 0.1, randomized=True), 0.9, 0, 0, 100
    )
    from cset.seeds import EVAL_U, rng

    u = rng(0, EVAL_U).random(m.n)
    from cset.conformal import set_sizes

    sizes = set_sizes(model, ss, u=u)
    ranks = ss.label_ranks(m.labels)
    covered = ranks <= sizes
    from cset.metrics import difficulty_rows

    rows = difficulty_rows(ranks, sizes, covered, default_difficulty_bins(100))
    cov = {(r.lo, r.hi): r.coverage for r in rows}
    assert cov[(1, 1)] > cov[(11, 100)]


def test_difficulty_table_from_sets():
    m = dirichlet_matrix(50, 8, seed=10)
    ss = sort_scores(m, seed=0)
    sets = [set(ss.perm[i, :2]) for i in range(50)]
    rows = difficulty_table(sets, m.labels, ss)
    assert sum(r.count for r in rows) == 50
    easy = [r for r in rows if (r.lo, r.hi) == (1, 1)][0]
    # top-2 sets always cover rank-1 labels
    assert easy.count == 0 or easy.coverage == 1.0
