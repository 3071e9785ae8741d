"""Multi-trial evaluation protocol.

Each trial re-splits the data (or draws fresh synthetic data), optionally
temperature-scales logits, optionally tunes the raps knobs on the tuning
split, calibrates on the calibration split, and measures everything on the
evaluation split. Per-trial seeds are derived from the master seed and the
trial index alone, so trials are independent of execution order and safe to
parallelize; all methods inside one trial share the same splits and the same
per-row randomization variates.

Summary numbers are medians across trials of per-trial means (median of
means), which keeps a single weird split from dominating the summary.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import seeds
from .conformal import ConformalModel, MethodSpec, calibrate, naive_model, set_sizes
from .metrics import (
    DifficultyRow,
    StratumRow,
    default_difficulty_bins,
    default_strata,
    difficulty_rows,
    size_histogram,
    sscv_from_arrays,
    strata_rows,
)
from .score_store import ScoreMatrix, SortedScores, SplitSpec, sort_scores, split
from .synth import SynthSpec, generate
from .tuning import (
    ADAPT_LAMBDA_GRID,
    SIZE_LAMBDA_GRID,
    make_fixed_k_model,
    tune_for_adaptiveness,
    tune_for_size,
)

PLATT_SPLITS = ("calibration", "tuning")


@dataclass(frozen=True)
class TrialProtocol:
    """Split sizes and shared evaluation settings for a batch of trials."""

    n_trials: int
    cal_size: int
    eval_size: int
    tune_size: int = 0
    seed: int = 0
    platt_split: str = "calibration"
    strata: tuple | None = None
    bins: tuple | None = None

    def __post_init__(self) -> None:
        if self.n_trials < 1:
            raise ValueError("need at least one trial")
        if self.platt_split not in PLATT_SPLITS:
            raise ValueError(f"platt_split must be one of {PLATT_SPLITS}")


@dataclass(frozen=True)
class MethodPolicy:
    """A method spec plus (optionally) how to tune it per trial."""

    spec: MethodSpec
    tune_objective: str | None = None  # None, "size", or "adaptiveness"
    lambda_grid: tuple | None = None

    def __post_init__(self) -> None:
        if self.tune_objective not in (None, "size", "adaptiveness"):
            raise ValueError(f"unknown tune objective {self.tune_objective!r}")
        if self.tune_objective is not None and self.spec.method != "raps":
            raise ValueError("tuning applies to raps only")


@dataclass
class TrialAggregate:
    """Per-trial metric vectors plus pooled tables."""

    n_trials: int
    coverage: np.ndarray
    avg_size: np.ndarray
    sscv: np.ndarray
    top1: np.ndarray
    top5: np.ndarray
    penalties: np.ndarray
    kregs: np.ndarray
    size_hist: dict
    per_stratum: tuple
    per_difficulty: tuple

    @property
    def median_coverage(self) -> float:
        return float(np.median(self.coverage))

    @property
    def median_size(self) -> float:
        return float(np.median(self.avg_size))

    @property
    def median_sscv(self) -> float:
        return float(np.median(self.sscv))

    @property
    def median_top1(self) -> float:
        return float(np.median(self.top1))

    @property
    def median_top5(self) -> float:
        return float(np.median(self.top5))


@dataclass(frozen=True)
class _TrialData:
    """Sorted splits of one trial, shared by every method."""

    trial_seed: int
    ss_tune: SortedScores | None
    y_tune: np.ndarray | None
    ss_cal: SortedScores
    y_cal: np.ndarray
    ss_eval: SortedScores
    y_eval: np.ndarray
    ranks_eval: np.ndarray
    u_eval: np.ndarray


def _prepare(
    tune_m: ScoreMatrix | None,
    cal_m: ScoreMatrix,
    eval_m: ScoreMatrix,
    protocol: TrialProtocol,
    trial_seed: int,
) -> _TrialData:
    if cal_m.kind == "logits":
        from .platt import fit_temperature
        from .score_store import softmax

        fit_on = cal_m
        if protocol.platt_split == "tuning":
            if tune_m is None:
                raise ValueError("platt_split='tuning' needs a tuning split")
            fit_on = tune_m
        t = fit_temperature(fit_on).temperature
        tune_m = softmax(tune_m, t) if tune_m is not None else None
        cal_m = softmax(cal_m, t)
        eval_m = softmax(eval_m, t)

    ss_tune = (
        sort_scores(tune_m, seeds.child_seed(trial_seed, seeds.SORT, 0))
        if tune_m is not None
        else None
    )
    ss_cal = sort_scores(cal_m, seeds.child_seed(trial_seed, seeds.SORT, 1))
    ss_eval = sort_scores(eval_m, seeds.child_seed(trial_seed, seeds.SORT, 2))
    return _TrialData(
        trial_seed=trial_seed,
        ss_tune=ss_tune,
        y_tune=tune_m.labels if tune_m is not None else None,
        ss_cal=ss_cal,
        y_cal=cal_m.labels,
        ss_eval=ss_eval,
        y_eval=eval_m.labels,
        ranks_eval=ss_eval.label_ranks(eval_m.labels),
        u_eval=seeds.rng(trial_seed, seeds.EVAL_U).random(eval_m.n),
    )


def _fit_method(data: _TrialData, policy: MethodPolicy) -> ConformalModel:
    spec = policy.spec
    if policy.tune_objective is not None:
        if data.ss_tune is None:
            raise ValueError("tuning requested but the tuning split is empty")
        tune_seed = seeds.child_seed(data.trial_seed, seeds.TUNE)
        if policy.tune_objective == "size":
            grid = policy.lambda_grid or SIZE_LAMBDA_GRID
            res = tune_for_size(data.ss_tune, data.y_tune, spec.alpha, grid, tune_seed)
        else:
            grid = policy.lambda_grid or ADAPT_LAMBDA_GRID
            res = tune_for_adaptiveness(
                data.ss_tune, data.y_tune, spec.alpha, grid, tune_seed
            )
        spec = replace(spec, penalty=res.penalty, kreg=res.kreg)
    if spec.method == "naive":
        return naive_model(spec.alpha, data.ss_eval.n_classes, spec.randomized)
    if spec.method == "fixed_k":
        return make_fixed_k_model(
            data.ss_cal, data.y_cal, spec.alpha, data.trial_seed, spec.randomized
        )
    return calibrate(data.ss_cal, data.y_cal, spec, seed=data.trial_seed)


def _measure(data: _TrialData, model: ConformalModel, strata, bins) -> dict:
    u = data.u_eval if model.spec.randomized else None
    sizes = set_sizes(model, data.ss_eval, u)
    covered = data.ranks_eval <= sizes
    return {
        "coverage": float(np.mean(covered)),
        "avg_size": float(np.mean(sizes)),
        "sscv": sscv_from_arrays(sizes, covered, strata, model.spec.alpha),
        "top1": float(np.mean(data.ranks_eval <= 1)),
        "top5": float(np.mean(data.ranks_eval <= 5)),
        "penalty": model.spec.penalty,
        "kreg": model.spec.kreg,
        "hist": size_histogram(sizes),
        "strata_rows": strata_rows(sizes, covered, strata),
        "difficulty_rows": difficulty_rows(data.ranks_eval, sizes, covered, bins),
    }


def _aggregate(results: list[dict]) -> TrialAggregate:
    hist: dict[int, int] = {}
    for r in results:
        for s, c in r["hist"].items():
            hist[s] = hist.get(s, 0) + c

    strata_acc: dict[tuple, list] = {}
    for r in results:
        for row in r["strata_rows"]:
            acc = strata_acc.setdefault((row.lo, row.hi), [0, []])
            acc[0] += row.count
            if row.coverage is not None:
                acc[1].append(row.coverage)
    per_stratum = tuple(
        StratumRow(lo, hi, cnt, float(np.median(covs)) if covs else None)
        for (lo, hi), (cnt, covs) in strata_acc.items()
    )

    diff_acc: dict[tuple, list] = {}
    for r in results:
        for row in r["difficulty_rows"]:
            acc = diff_acc.setdefault((row.lo, row.hi), [0, [], []])
            acc[0] += row.count
            if row.coverage is not None:
                acc[1].append(row.coverage)
                acc[2].append(row.avg_size)
    per_difficulty = tuple(
        DifficultyRow(
            lo, hi, cnt,
            float(np.median(covs)) if covs else None,
            float(np.median(szs)) if szs else None,
        )
        for (lo, hi), (cnt, covs, szs) in diff_acc.items()
    )

    def arr(key):
        return np.array([r[key] for r in results], dtype=np.float64)

    return TrialAggregate(
        n_trials=len(results),
        coverage=arr("coverage"),
        avg_size=arr("avg_size"),
        sscv=arr("sscv"),
        top1=arr("top1"),
        top5=arr("top5"),
        penalties=arr("penalty"),
        kregs=arr("kreg"),
        size_hist=dict(sorted(hist.items())),
        per_stratum=per_stratum,
        per_difficulty=per_difficulty,
    )


def _resolve_tables(protocol: TrialProtocol, n_classes: int) -> tuple[tuple, tuple]:
    strata = protocol.strata if protocol.strata is not None else default_strata(n_classes)
    bins = protocol.bins if protocol.bins is not None else default_difficulty_bins(n_classes)
    return strata, bins


def run_trials_multi(
    m: ScoreMatrix, protocol: TrialProtocol, policies: dict[str, MethodPolicy]
) -> dict[str, TrialAggregate]:
    """Random re-splits of one fixed matrix; methods share each trial's data."""
    strata, bins = _resolve_tables(protocol, m.n_classes)
    results: dict[str, list] = {name: [] for name in policies}
    for t in range(protocol.n_trials):
        trial_seed = seeds.child_seed(protocol.seed, seeds.TRIAL, t)
        spec = SplitSpec(
            seed=trial_seed,
            sizes=(protocol.tune_size, protocol.cal_size, protocol.eval_size),
        )
        tune_m, cal_m, eval_m = split(m, spec)
        if cal_m is None or eval_m is None:
            raise ValueError("calibration and evaluation splits must be nonempty")
        data = _prepare(tune_m, cal_m, eval_m, protocol, trial_seed)
        for name, policy in policies.items():
            model = _fit_method(data, policy)
            results[name].append(_measure(data, model, strata, bins))
    return {name: _aggregate(rs) for name, rs in results.items()}


def run_trials(m: ScoreMatrix, protocol: TrialProtocol, policy: MethodPolicy) -> TrialAggregate:
    """Single-policy convenience wrapper around run_trials_multi."""
    return run_trials_multi(m, protocol, {"method": policy})["method"]


def run_synth_trials(
    sspec: SynthSpec, protocol: TrialProtocol, policies: dict[str, MethodPolicy]
) -> dict[str, TrialAggregate]:
    """Fresh synthetic data every trial (the honest protocol for coverage
    claims: the guarantee is marginal over calibration and test draws, and a
    fixed pool would freeze its own sampling noise into every trial)."""
    for s in (protocol.tune_size, protocol.cal_size, protocol.eval_size):
        if isinstance(s, float):
            raise ValueError("synthetic trials need absolute split sizes")
    n_total = protocol.tune_size + protocol.cal_size + protocol.eval_size
    strata, bins = _resolve_tables(protocol, sspec.n_classes)
    results: dict[str, list] = {name: [] for name in policies}
    for t in range(protocol.n_trials):
        trial_seed = seeds.child_seed(protocol.seed, seeds.TRIAL, t)
        data_spec = replace(
            sspec, n=n_total, seed=seeds.child_seed(trial_seed, seeds.SYNTH)
        )
        _, observed = generate(data_spec)
        idx = np.arange(n_total)
        a, b = protocol.tune_size, protocol.tune_size + protocol.cal_size
        tune_m = observed.take(idx[:a]) if a > 0 else None
        cal_m = observed.take(idx[a:b])
        eval_m = observed.take(idx[b:])
        data = _prepare(tune_m, cal_m, eval_m, protocol, trial_seed)
        for name, policy in policies.items():
            model = _fit_method(data, policy)
            results[name].append(_measure(data, model, strata, bins))
    return {name: _aggregate(rs) for name, rs in results.items()}
