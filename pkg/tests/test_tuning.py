import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import cset
from cset.conformal import MethodSpec, set_sizes
from cset.score_store import DataError, ScoreMatrix, sort_scores
from cset.tuning import (
    ADAPT_LAMBDA_GRID,
    SIZE_LAMBDA_GRID,
    fixed_k_star,
    make_fixed_k_model,
    tune_for_adaptiveness,
    tune_for_size,
)

from conftest import dirichlet_matrix


def matrix_with_ranks(ranks, k=4, seed=0):
    """Rows whose label rank (1-based, after sorting) is exactly as given."""
    n = len(ranks)
    base = np.arange(k, 0, -1) / (k * (k + 1) / 2)  # k=4 -> (0.4, 0.3, 0.2, 0.1)
    scores = np.tile(base, (n, 1))
    labels = np.array([r - 1 for r in ranks])  # descending rows: rank r = class r-1
    return ScoreMatrix(scores, labels, "probabilities")


def test_k_star_hand_example():
    m = matrix_with_ranks([1, 1, 2, 3, 1])
    ss = sort_scores(m, seed=0)
    assert fixed_k_star(ss, m.labels, alpha=0.4) == 2


def test_k_star_overflows_to_k():
    m = matrix_with_ranks([1, 1, 1, 1])
    ss = sort_scores(m, seed=0)
    assert fixed_k_star(ss, m.labels, alpha=0.1) == 4


@given(st.lists(st.integers(1, 6), min_size=1, max_size=40))
def test_k_star_monotone_in_alpha(ranks):
    m = matrix_with_ranks(ranks, k=6)
    ss = sort_scores(m, seed=0)
    ks = [fixed_k_star(ss, m.labels, a) for a in (0.4, 0.3, 0.2, 0.1)]
    assert all(b >= a for a, b in zip(ks, ks[1:]))


def test_mix_prob_hand_example():
    # 17 rank-1, 2 rank-2, 1 rank-3: c_1=0.85, c_2=0.95, alpha=0.1 -> 0.5
    ranks = [1] * 17 + [2] * 2 + [3]
    m = matrix_with_ranks(ranks)
    ss = sort_scores(m, seed=0)
    model = make_fixed_k_model(ss, m.labels, alpha=0.1, seed=0)
    assert model.k_star == 2
    assert model.mix_prob == pytest.approx(0.5, abs=1e-9)


def test_mix_prob_boundary_case():
    # 18 rank-1, 2 rank-2: c_1 = 0.9 hits the target exactly, so the model
    # should predict k*-1 classes with probability one
    ranks = [1] * 18 + [2] * 2
    m = matrix_with_ranks(ranks)
    ss = sort_scores(m, seed=0)
    model = make_fixed_k_model(ss, m.labels, alpha=0.1, seed=0)
    assert model.k_star == 2
    assert model.mix_prob == pytest.approx(1.0, abs=1e-9)


def test_fixed_k_mixed_coverage_near_target():
    spec = cset.SynthSpec(n=4000, n_classes=12, seed=5)
    _, m = cset.generate(spec)
    ss = sort_scores(m, seed=0)
    model = make_fixed_k_model(ss, m.labels, alpha=0.2, seed=0)
    ranks = ss.label_ranks(m.labels)
    c_lo = float(np.mean(ranks <= model.k_star - 1))
    c_hi = float(np.mean(ranks <= model.k_star))
    expected = model.mix_prob * c_lo + (1 - model.mix_prob) * c_hi
    # the mixture is built to land within 1/n of target on its own split
    assert abs(expected - 0.8) <= 1.0 / m.n + 1e-12


def test_fixed_k_sizes_only_two_values():
    spec = cset.SynthSpec(n=500, n_classes=10, seed=6)
    _, m = cset.generate(spec)
    ss = sort_scores(m, seed=0)
    model = make_fixed_k_model(ss, m.labels, alpha=0.2, seed=0)
    u = np.random.default_rng(1).random(m.n)
    sizes = set_sizes(model, ss, u=u)
    assert set(np.unique(sizes)) <= {model.k_star - 1, model.k_star}


def test_tune_rejects_tiny_input():
    m = dirichlet_matrix(19, 4, seed=0)
    ss = sort_scores(m, seed=0)
    with pytest.raises(DataError):
        tune_for_size(ss, m.labels, alpha=0.2, seed=0)


def test_tune_for_size_result_fields():
    m = dirichlet_matrix(400, 10, seed=1, concentration=1.0)
    ss = sort_scores(m, seed=0)
    res = tune_for_size(ss, m.labels, alpha=0.1, seed=0)
    assert res.penalty in SIZE_LAMBDA_GRID
    assert res.kreg >= 1
    assert res.kreg == res.k_star
    assert len(res.grid) == len(SIZE_LAMBDA_GRID)
    assert res.objective == "size"
    # selected penalty achieves the grid minimum (ties to larger lambda)
    best = min(v for _, v in res.grid)
    assert dict(res.grid)[res.penalty] == best
    candidates = [lam for lam, v in res.grid if v == best]
    assert res.penalty == max(candidates)


def test_tune_for_adaptiveness_ties_to_smaller_lambda():
    m = dirichlet_matrix(400, 10, seed=2, concentration=1.0)
    ss = sort_scores(m, seed=0)
    res = tune_for_adaptiveness(ss, m.labels, alpha=0.1, seed=0)
    assert res.penalty in ADAPT_LAMBDA_GRID
    assert res.objective == "adaptiveness"
    best = min(v for _, v in res.grid)
    assert dict(res.grid)[res.penalty] == best
    candidates = [lam for lam, v in res.grid if v == best]
    assert res.penalty == min(candidates)


def test_tune_single_point_grid():
    m = dirichlet_matrix(200, 6, seed=3)
    ss = sort_scores(m, seed=0)
    res = tune_for_size(ss, m.labels, alpha=0.2, seed=0, grid=(0.05,))
    assert res.penalty == 0.05
    assert len(res.grid) == 1


def test_tune_is_deterministic():
    m = dirichlet_matrix(300, 8, seed=4, concentration=1.0)
    ss = sort_scores(m, seed=0)
    a = tune_for_size(ss, m.labels, alpha=0.1, seed=9)
    b = tune_for_size(ss, m.labels, alpha=0.1, seed=9)
    assert a == b


def test_tune_for_size_beats_unpenalized_on_heavy_tail():
    # on tail-noise data the selected penalty must shrink mean size well
    # below the lambda=0 entry (plain cumulative-probability sets)
    spec = cset.SynthSpec(
        n=3000, n_classes=100, concentration=0.4,
        corruption="tail_permute", corruption_param=1, seed=7,
    )
    _, m = cset.generate(spec)
    ss = sort_scores(m, seed=0)
    res = tune_for_size(ss, m.labels, alpha=0.1, seed=0, grid=(0.0,) + SIZE_LAMBDA_GRID)
    by_lam = dict(res.grid)
    assert res.penalty > 0.0
    assert by_lam[res.penalty] < 0.8 * by_lam[0.0]
