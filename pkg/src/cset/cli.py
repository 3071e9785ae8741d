"""Command-line interface.

Subcommands cover the whole pipeline: ingest/validate score files, generate
synthetic data, fit a temperature, tune the raps knobs, calibrate, predict,
evaluate, and run multi-trial experiments. Flags override values from a JSON
--config file, which override built-in defaults; the final configuration is
echoed into the output directory. Exit codes: 2 for usage or bad parameter
values, 1 for missing or malformed data.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import seeds
from .conformal import (
    MethodSpec,
    METHODS,
    calibrate,
    load_model,
    naive_model,
    save_model,
    set_sizes,
)
from .metrics import evaluate_model
from .platt import DEFAULT_BOUNDS, DEFAULT_TOL, fit_temperature
from .reports import (
    difficulty_csv,
    hist_csv,
    render_difficulty_table,
    render_method_table,
    render_strata_table,
    render_sweep,
    strata_csv,
    summary_csv,
    sweep_csv,
)
from .score_store import DataError, load_scores, save_scores, softmax, sort_scores
from .synth import CORRUPTIONS, SynthSpec, generate
from .trials import MethodPolicy, TrialProtocol, run_trials_multi
from .tuning import (
    ADAPT_LAMBDA_GRID,
    SIZE_LAMBDA_GRID,
    make_fixed_k_model,
    tune_for_adaptiveness,
    tune_for_size,
)

SWEEP_LAMBDAS = (0.0, 0.0001, 0.001, 0.01, 0.02, 0.05, 0.2, 0.5, 0.7, 1.0)
SWEEP_KREGS = (1, 2, 5, 10, 50)


# --- argument types -------------------------------------------------------

def _alpha(s: str) -> float:
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must be in (0, 1), got {s}")
    return v


def _pos_float(s: str) -> float:
    v = float(s)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _nonneg_float(s: str) -> float:
    v = float(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {s}")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {s}")
    return v


def _lambda_grid(s: str) -> tuple:
    try:
        vals = tuple(float(p) for p in s.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lambda grid {s!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError(f"bad lambda grid {s!r}")
    return vals


def _strata(s: str) -> tuple:
    out = []
    try:
        for part in s.split(","):
            lo, _, hi = part.partition("-")
            out.append((int(lo), int(hi if hi else lo)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad strata {s!r}, expected like 0-1,2-3,4-10") from None
    if not out:
        raise argparse.ArgumentTypeError("empty strata")
    return tuple(out)


def _method_list(s: str) -> tuple:
    names = tuple(p.strip() for p in s.split(",") if p.strip())
    for n in names:
        if n not in METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {n!r}")
    if not names:
        raise argparse.ArgumentTypeError("empty method list")
    return names


# --- output helpers -------------------------------------------------------

def _write(outdir: str, name: str, text: str) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _echo_config(args: argparse.Namespace) -> None:
    out = getattr(args, "out", None)
    if not out:
        return
    skip = {"func", "config"}
    d = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    _write(out, "config_used.json", json.dumps(d, indent=2, sort_keys=True, default=list) + "\n")


def _require_probabilities(m, args):
    t = getattr(args, "temperature", None)
    if m.kind == "probabilities":
        if t is not None:
            raise ValueError("--temperature only applies to logit inputs")
        return m
    if t is None:
        raise DataError(
            "input holds logits; fit a temperature with fit-temp and pass --temperature"
        )
    return softmax(m, t)


# --- subcommands ----------------------------------------------------------

def cmd_ingest(args) -> int:
    m = load_scores(args.input, args.format)
    print(f"n={m.n} K={m.n_classes} kind={m.kind}")
    if args.out:
        ext = "csv" if args.to == "csv" else "bin"
        path = _write_scores(m, args.out, f"scores.{ext}", args.to)
        _echo_config(args)
        print(f"wrote {path}")
    return 0


def _write_scores(m, outdir, name, fmt) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    save_scores(m, path, fmt)
    return path


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n=args.n,
        n_classes=args.k,
        concentration=args.concentration,
        corruption=args.corruption,
        corruption_param=args.corruption_param,
        seed=args.seed,
    )
    truth, observed = generate(spec)
    _write_scores(observed, args.out, "observed.bin", "binary")
    _write_scores(truth, args.out, "true_probs.bin", "binary")
    _echo_config(args)
    print(f"wrote {args.out}/observed.bin and true_probs.bin (n={spec.n}, K={spec.n_classes})")
    return 0


def cmd_fit_temp(args) -> int:
    m = load_scores(args.input, "auto")
    if m.kind != "logits":
        raise DataError("fit-temp expects a logits file")
    fit = fit_temperature(m, (args.t_lo, args.t_hi), args.t_tol)
    text = (
        f"temperature = {fit.temperature!r}\n"
        f"nll_before = {fit.nll_before!r}\n"
        f"nll_after = {fit.nll_after!r}\n"
        f"iterations = {fit.iterations}\n"
    )
    _write(args.out, "temperature.txt", text)
    _echo_config(args)
    print(f"temperature={fit.temperature:.6g} nll {fit.nll_before:.6g} -> {fit.nll_after:.6g}")
    return 0


def cmd_tune(args) -> int:
    m = _require_probabilities(load_scores(args.input, "auto"), args)
    ss = sort_scores(m, args.seed)
    if args.tune_objective == "size":
        grid = args.lambda_grid if args.lambda_grid is not None else SIZE_LAMBDA_GRID
        res = tune_for_size(ss, m.labels, args.alpha, grid, seed=args.seed)
    else:
        grid = args.lambda_grid if args.lambda_grid is not None else ADAPT_LAMBDA_GRID
        res = tune_for_adaptiveness(
            ss, m.labels, args.alpha, grid, seed=args.seed, strata=args.strata
        )
    lines = [
        f"objective = {res.objective}",
        f"k_star = {res.k_star}",
        f"k_reg = {res.kreg}",
        f"lambda = {res.penalty!r}",
        "grid = " + " ".join(f"{lam!r}:{val!r}" for lam, val in res.grid),
    ]
    _write(args.out, "tune.txt", "\n".join(lines) + "\n")
    _echo_config(args)
    print(f"objective={res.objective} k_reg={res.kreg} lambda={res.penalty:g}")
    return 0


def cmd_calibrate(args) -> int:
    m = _require_probabilities(load_scores(args.input, "auto"), args)
    ss = sort_scores(m, args.seed)
    spec = MethodSpec(
        method=args.method,
        alpha=args.alpha,
        penalty=args.penalty if args.method == "raps" else 0.0,
        kreg=args.k_reg,
        randomized=not args.deterministic,
        boundary_inclusive=args.boundary_inclusive,
    )
    if args.method == "naive":
        model = naive_model(spec.alpha, m.n_classes, spec.randomized)
    elif args.method == "fixed_k":
        model = make_fixed_k_model(ss, m.labels, spec.alpha, args.seed, spec.randomized)
    else:
        model = calibrate(ss, m.labels, spec, seed=args.seed)
    path = _write_model(model, args.out)
    _echo_config(args)
    extra = f" k_star={model.k_star} mix_prob={model.mix_prob:g}" if model.k_star else ""
    print(f"method={spec.method} tau_hat={model.tau_hat:.12g} n_cal={model.n_cal}{extra}")
    print(f"wrote {path}")
    return 0


def _write_model(model, outdir) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "model.txt")
    save_model(model, path)
    return path


def cmd_predict(args) -> int:
    model = load_model(args.model)
    m = _require_probabilities(load_scores(args.input, "auto"), args)
    ss = sort_scores(m, args.seed)
    u = seeds.rng(args.seed, seeds.EVAL_U).random(ss.n) if model.spec.randomized else None
    sizes = set_sizes(model, ss, u)
    lines = []
    for i in range(ss.n):
        classes = ss.perm[i, : sizes[i]]
        lines.append(",".join([str(i), str(int(sizes[i]))] + [str(int(c)) for c in classes]))
    _write(args.out, "predictions.csv", "\n".join(lines) + "\n")
    _echo_config(args)
    print(f"wrote {args.out}/predictions.csv ({ss.n} sets, mean size {float(np.mean(sizes)):.3f})")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    m = _require_probabilities(load_scores(args.input, "auto"), args)
    ss = sort_scores(m, args.seed)
    report = evaluate_model(model, ss, m.labels, seed=args.seed, strata=args.strata)
    lines = [
        f"n_eval = {report.n_eval}",
        f"coverage = {report.coverage!r}",
        f"avg_size = {report.avg_size!r}",
        f"sscv = {report.sscv!r}",
        f"top1 = {report.top1!r}",
        f"top5 = {report.top5!r}",
    ]
    _write(args.out, "report.txt", "\n".join(lines) + "\n")
    csv = ["metric,value"]
    csv += [line.replace(" = ", ",") for line in lines]
    _write(args.out, "report.csv", "\n".join(csv) + "\n")
    hist_lines = ["size,count"] + [f"{s},{c}" for s, c in report.size_hist.items()]
    _write(args.out, "hist.csv", "\n".join(hist_lines) + "\n")
    strata_lines = ["size_lo,size_hi,count,coverage"]
    for row in report.per_stratum:
        cov = repr(row.coverage) if row.coverage is not None else ""
        strata_lines.append(f"{row.lo},{row.hi},{row.count},{cov}")
    _write(args.out, "strata.csv", "\n".join(strata_lines) + "\n")
    diff_lines = ["difficulty_lo,difficulty_hi,count,coverage,avg_size"]
    for row in report.per_difficulty:
        cov = repr(row.coverage) if row.coverage is not None else ""
        sz = repr(row.avg_size) if row.avg_size is not None else ""
        diff_lines.append(f"{row.lo},{row.hi},{row.count},{cov},{sz}")
    _write(args.out, "difficulty.csv", "\n".join(diff_lines) + "\n")
    _echo_config(args)
    print(f"coverage={report.coverage:.4f} avg_size={report.avg_size:.3f} sscv={report.sscv:.4f}")
    return 0


def cmd_experiment(args) -> int:
    rand = not args.deterministic
    if args.input:
        m = load_scores(args.input, "auto")
    else:
        pool = args.n if args.n else args.tune_size + args.cal_size + args.eval_size
        spec = SynthSpec(
            n=pool,
            n_classes=args.k,
            concentration=args.concentration,
            corruption=args.corruption,
            corruption_param=args.corruption_param,
            seed=args.seed,
        )
        _, m = generate(spec)

    policies: dict[str, MethodPolicy] = {}
    for name in args.methods:
        if name == "raps" and args.penalty is None:
            policies[name] = MethodPolicy(
                MethodSpec("raps", args.alpha, randomized=rand),
                tune_objective=args.tune_objective,
                lambda_grid=args.lambda_grid,
            )
        elif name == "raps":
            policies[name] = MethodPolicy(
                MethodSpec("raps", args.alpha, penalty=args.penalty,
                           kreg=args.k_reg, randomized=rand)
            )
        else:
            policies[name] = MethodPolicy(MethodSpec(name, args.alpha, randomized=rand))

    protocol = TrialProtocol(
        n_trials=args.trials,
        cal_size=args.cal_size,
        eval_size=args.eval_size,
        tune_size=args.tune_size,
        seed=args.seed,
        platt_split=args.platt_split,
        strata=args.strata,
    )
    if protocol.tune_size == 0:
        for p in policies.values():
            if p.tune_objective is not None:
                raise ValueError("raps tuning needs --tune-size > 0 (or pass --lambda)")

    aggs = run_trials_multi(m, protocol, policies)
    _write(args.out, "table1.txt", render_method_table(aggs))
    _write(args.out, "summary.csv", summary_csv(aggs))
    _write(args.out, "strata.txt", render_strata_table(aggs))
    _write(args.out, "difficulty.txt", render_difficulty_table(aggs))
    for name, agg in aggs.items():
        _write(args.out, f"hist_{name}.csv", hist_csv(agg))
        _write(args.out, f"strata_{name}.csv", strata_csv(agg))
        _write(args.out, f"difficulty_{name}.csv", difficulty_csv(agg))

    if not args.no_sweep:
        kregs = [k for k in SWEEP_KREGS if k <= m.n_classes]
        sweep_policies = {
            f"raps_k{k}_l{i}": MethodPolicy(
                MethodSpec("raps", args.alpha, penalty=lam, kreg=k, randomized=rand)
            )
            for k in kregs
            for i, lam in enumerate(SWEEP_LAMBDAS)
        }
        sweep_aggs = run_trials_multi(m, protocol, sweep_policies)
        cells = {}
        for k in kregs:
            for i, lam in enumerate(SWEEP_LAMBDAS):
                cells[(k, lam)] = sweep_aggs[f"raps_k{k}_l{i}"].median_size
        _write(args.out, "sweep.txt", render_sweep(cells, kregs, SWEEP_LAMBDAS))
        _write(args.out, "sweep.csv", sweep_csv(cells, kregs, SWEEP_LAMBDAS))

    _echo_config(args)
    print(render_method_table(aggs), end="")
    print(f"wrote report files to {args.out}")
    return 0


# --- parser ---------------------------------------------------------------

def _add_out(p, required=True):
    p.add_argument("--out", required=required, help="output directory")


def _add_common_model_flags(p):
    p.add_argument("--alpha", type=_alpha, default=0.1, help="miscoverage level in (0, 1)")
    p.add_argument("--seed", type=_nonneg_int, default=0, help="master seed")
    p.add_argument("--deterministic", action="store_true",
                   help="fix the randomization variable u to 1 (conservative)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cset",
        description="Conformal prediction sets from classifier score matrices.",
    )
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", help="validate a score file and convert formats")
    p.add_argument("--input", required=True, help="score file (csv or binary)")
    p.add_argument("--format", choices=("auto", "csv", "binary"), default="auto")
    p.add_argument("--to", choices=("binary", "csv"), default="binary")
    _add_out(p, required=False)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate synthetic score matrices")
    p.add_argument("--n", type=_pos_int, required=True, help="number of rows")
    p.add_argument("--k", type=_pos_int, required=True, help="number of classes")
    p.add_argument("--concentration", type=_nonneg_float, default=0.0,
                   help="Dirichlet concentration (0 means 0.05 * K)")
    p.add_argument("--corruption", choices=CORRUPTIONS, default="none")
    p.add_argument("--corruption-param", type=_nonneg_float, default=0.0,
                   help="temperature t, or top_m for tail_permute")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit-temp", help="fit a softmax temperature on logits")
    p.add_argument("--input", required=True)
    p.add_argument("--t-lo", type=_pos_float, default=DEFAULT_BOUNDS[0])
    p.add_argument("--t-hi", type=_pos_float, default=DEFAULT_BOUNDS[1])
    p.add_argument("--t-tol", type=_pos_float, default=DEFAULT_TOL)
    _add_out(p)
    p.set_defaults(func=cmd_fit_temp)

    p = sub.add_parser("tune", help="pick raps knobs on a tuning split")
    p.add_argument("--input", required=True)
    p.add_argument("--tune-objective", choices=("size", "adaptiveness"), default="size")
    p.add_argument("--lambda-grid", type=_lambda_grid, default=None,
                   help="comma-separated penalties; default depends on the objective")
    p.add_argument("--strata", type=_strata, default=None,
                   help="set-size strata like 0-1,2-3,4-10 (adaptiveness objective)")
    p.add_argument("--temperature", type=_pos_float, default=None,
                   help="apply this softmax temperature to logit inputs")
    p.add_argument("--alpha", type=_alpha, default=0.1)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("calibrate", help="calibrate a prediction-set model")
    p.add_argument("--input", required=True, help="calibration score file")
    p.add_argument("--method", choices=METHODS, default="raps")
    p.add_argument("--lambda", dest="penalty", type=_nonneg_float, default=0.0,
                   help="raps rank penalty")
    p.add_argument("--k-reg", type=_pos_int, default=1, help="penalty-free rank count")
    p.add_argument("--boundary-inclusive", action="store_true",
                   help="deterministic sets also include the first class past the threshold")
    p.add_argument("--temperature", type=_pos_float, default=None)
    _add_common_model_flags(p)
    _add_out(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="write prediction sets for a score file")
    p.add_argument("--model", required=True, help="model file from calibrate")
    p.add_argument("--input", required=True)
    p.add_argument("--temperature", type=_pos_float, default=None)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="coverage/size/adaptiveness report")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--temperature", type=_pos_float, default=None)
    p.add_argument("--strata", type=_strata, default=None)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="multi-trial method comparison")
    p.add_argument("--input", default=None, help="score file; omit to use synthetic data")
    p.add_argument("--n", type=_pos_int, default=None,
                   help="synthetic pool size (default: sum of split sizes)")
    p.add_argument("--k", type=_pos_int, default=100, help="synthetic class count")
    p.add_argument("--concentration", type=_nonneg_float, default=0.0)
    p.add_argument("--corruption", choices=CORRUPTIONS, default="none")
    p.add_argument("--corruption-param", type=_nonneg_float, default=0.0)
    p.add_argument("--methods", type=_method_list, default=METHODS,
                   help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--trials", type=_pos_int, default=10)
    p.add_argument("--tune-size", type=_nonneg_int, default=0)
    p.add_argument("--cal-size", type=_pos_int, required=True)
    p.add_argument("--eval-size", type=_pos_int, required=True)
    p.add_argument("--lambda", dest="penalty", type=_nonneg_float, default=None,
                   help="fix the raps penalty instead of tuning")
    p.add_argument("--k-reg", type=_pos_int, default=1)
    p.add_argument("--tune-objective", choices=("size", "adaptiveness"), default="size")
    p.add_argument("--lambda-grid", type=_lambda_grid, default=None)
    p.add_argument("--strata", type=_strata, default=None)
    p.add_argument("--platt-split", choices=("calibration", "tuning"), default="calibration")
    p.add_argument("--no-sweep", action="store_true",
                   help="skip the (k_reg, lambda) size sweep")
    _add_common_model_flags(p)
    _add_out(p)
    p.set_defaults(func=cmd_experiment)

    return parser, sub


def _extract_config(argv) -> tuple[str | None, list]:
    """Pull --config out of argv so it works in any position.

    argparse would only accept the flag before the subcommand name; config
    loading happens before parsing anyway, so the tokens are consumed here.
    """
    path = None
    rest = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                raise ValueError("--config needs a file path")
            path = argv[i + 1]
            i += 2
            continue
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            i += 1
            continue
        rest.append(tok)
        i += 1
    return path, rest


def _apply_config(sub, argv, path) -> None:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise DataError(f"config {path} must hold a JSON object")
    name = next((tok for tok in argv if not tok.startswith("-")), None)
    if name is None or name not in sub.choices:
        raise ValueError("a subcommand is required when using --config")
    target = sub.choices[name]
    actions = {a.dest: a for a in target._actions}
    defaults = {}
    for key, val in data.items():
        if key not in actions:
            raise ValueError(f"unknown config key {key!r} for command {name}")
        action = actions[key]
        if isinstance(val, str) and action.type is not None:
            val = action.type(val)
        defaults[key] = val
    target.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    try:
        cfg, argv = _extract_config(argv)
        if cfg is not None:
            _apply_config(sub, argv, cfg)
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            return 2
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
