"""Command-line front end.

Subcommands: detect, simulate, mc, theory, basis-check, sweep.  Outputs
are JSON documents that embed a run manifest (resolved configuration, RNG
algorithm and seed, library version, wall-clock runtime); plain-data
outputs (series files, TSV tables) get a sibling ``<name>.manifest.json``.
Files are written to a temporary name and atomically renamed, so failures
never leave partial outputs.

Exit codes: 0 ok, 2 unreadable or ill-formed input, 64 flag/usage errors,
70 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .basis import cost_identities_check, full_basis
from .core import Kind, ModelSpec, TruthSpec
from .simlab import (
    RNG_ALGORITHM,
    McConfig,
    generate,
    run_mc,
    scaling_sweep,
)
from .solver import detect_partition, detect_slope
from . import theory

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_USAGE = 64
EXIT_NUMERIC = 70


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(message)


# --------------------------------------------------------------------------
# serialization helpers


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Kind):
        return obj.value
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pencpt-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _manifest(command: str, config: dict, runtime: float, seed=None) -> dict:
    return {
        "command": command,
        "config": _jsonable(config),
        "rng": {"algorithm": RNG_ALGORITHM, "seed": seed},
        "version": __version__,
        "runtime_seconds": runtime,
    }


def _emit(args, command: str, config: dict, result: dict, runtime: float, seed=None):
    doc = {"manifest": _manifest(command, config, runtime, seed), "result": _jsonable(result)}
    text = json.dumps(doc, indent=2) + "\n"
    out = getattr(args, "out", None)
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# input parsing


def read_series(path: str) -> np.ndarray:
    """One observation per line, optional single header line, or two-column
    ``time,value`` with a contiguous 1..T time column."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh]
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    rows = [ln for ln in lines if ln]
    if not rows:
        raise InputError(f"{path} contains no data")

    def parse(ln: str) -> tuple[float, ...] | None:
        parts = [p for p in ln.replace(",", " ").split() if p]
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            return None

    first = parse(rows[0])
    if first is None:
        rows = rows[1:]
        if not rows:
            raise InputError(f"{path} has a header but no data")
    parsed = []
    for k, ln in enumerate(rows):
        vals = parse(ln)
        if vals is None or len(vals) not in (1, 2):
            raise InputError(f"{path}: line {k + 1} is not numeric data: {ln!r}")
        parsed.append(vals)
    widths = {len(v) for v in parsed}
    if len(widths) != 1:
        raise InputError(f"{path}: mixed one- and two-column rows")
    if widths == {2}:
        times = [v[0] for v in parsed]
        if times != [float(k + 1) for k in range(len(parsed))]:
            raise InputError(
                f"{path}: time column must be the contiguous integers 1..T"
            )
        data = np.array([v[1] for v in parsed])
    else:
        data = np.array([v[0] for v in parsed])
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite values in input")
    return data


def _parse_floats(text: str) -> tuple[float, ...]:
    if not text:
        return ()
    return tuple(float(v) for v in text.split(","))


def _parse_ints(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _model_from_args(args, need_sigma=True) -> ModelSpec:
    kind = Kind(args.model)
    if kind is Kind.SPIKE and args.alpha is None:
        raise UsageError("--model spike requires --alpha")
    if kind is not Kind.SPIKE and args.alpha is not None:
        raise UsageError("--alpha only applies to --model spike")
    sigma = args.sigma
    if sigma is None:
        if need_sigma:
            raise UsageError("--sigma is required (or use --estimate-sigma)")
        sigma = 1.0
    return ModelSpec(kind, sigma, args.alpha if kind is Kind.SPIKE else None)


def _truth_from_args(args) -> TruthSpec:
    model = _model_from_args(args)
    if args.T is None or args.theta is None:
        raise UsageError("need --T and --theta (and --tau for m* > 0)")
    tau = _parse_ints(args.tau or "")
    theta = _parse_floats(args.theta)
    try:
        return TruthSpec(model, args.T, tau, theta)
    except (ValueError, TypeError) as err:
        raise UsageError(str(err)) from err


# --------------------------------------------------------------------------
# commands


def cmd_detect(args) -> int:
    t0 = time.perf_counter()
    data = read_series(args.input)
    kind = Kind(args.model)
    if args.estimate_sigma:
        if args.sigma is not None:
            raise UsageError("give either --sigma or --estimate-sigma")
        order = 2 if kind is Kind.SLOPE else 1
        sigma = theory.mad_sigma(data, order)
        if sigma <= 0:
            raise InputError("MAD sigma estimate is zero; supply --sigma")
    elif args.sigma is not None:
        sigma = args.sigma
    else:
        raise UsageError("--sigma is required (or use --estimate-sigma)")

    if args.beta == "auto":
        beta = theory.default_penalty(data.size, args.epsilon)
    else:
        try:
            beta = float(args.beta)
        except ValueError as err:
            raise UsageError(f"--beta must be a number or 'auto': {args.beta!r}") from err

    if kind is Kind.SPIKE and args.alpha is None:
        raise UsageError("--model spike requires --alpha")
    if kind is not Kind.SPIKE and args.alpha is not None:
        raise UsageError("--alpha only applies to --model spike")
    if kind is Kind.SLOPE:
        fit = detect_slope(data, sigma, beta)
    else:
        model = ModelSpec(kind, sigma, args.alpha if kind is Kind.SPIKE else None)
        fit = detect_partition(data, model, beta)

    result = {
        "model": kind.value,
        "T": int(data.size),
        "beta": beta,
        "sigma": sigma,
        "m_hat": fit.m,
        "changepoints": list(fit.changepoints),
        "params": list(fit.segmentation.params),
        "raw_cost": fit.raw_cost,
        "objective": fit.objective,
    }
    if kind is Kind.SPIKE:
        result["alpha"] = args.alpha
    config = {
        "input": args.input,
        "model": kind.value,
        "beta": args.beta,
        "epsilon": args.epsilon,
        "sigma": args.sigma,
        "estimate_sigma": args.estimate_sigma,
        "alpha": args.alpha,
    }
    _emit(args, "detect", config, result, time.perf_counter() - t0)
    return EXIT_OK


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    truth = _truth_from_args(args)
    x = generate(truth, args.T, args.seed)
    body = "".join(f"{v!r}\n" for v in x.values.tolist())
    if args.out:
        _atomic_write(args.out, body)
        config = vars(args).copy()
        config.pop("func", None)
        manifest = _manifest("simulate", config, time.perf_counter() - t0, args.seed)
        _atomic_write(args.out + ".manifest.json", json.dumps(manifest, indent=2) + "\n")
    else:
        sys.stdout.write(body)
    return EXIT_OK


def _mc_config_from_args(args) -> McConfig:
    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise InputError(f"cannot read config {args.config}: {err}") from err

    def pick(name, flag_value, default=None):
        # precedence: flags > config file > defaults
        if flag_value is not None:
            return flag_value
        return file_cfg.get(name, default)

    ns = argparse.Namespace(
        model=pick("model", args.model),
        T=pick("T", args.T),
        tau=pick("tau", args.tau),
        theta=pick("theta", args.theta),
        sigma=pick("sigma", args.sigma),
        alpha=pick("alpha", args.alpha),
    )
    if ns.model is None or ns.T is None or ns.tau is None or ns.theta is None:
        raise UsageError("mc needs --model, --T, --tau and --theta (flags or config)")
    if isinstance(ns.tau, (list, tuple)):
        ns.tau = ",".join(str(v) for v in ns.tau)
    if isinstance(ns.theta, (list, tuple)):
        ns.theta = ",".join(str(v) for v in ns.theta)
    truth = _truth_from_args(ns)
    plan = pick("plan", args.plan)
    if isinstance(plan, str):
        plan = _parse_ints(plan)
    elif isinstance(plan, list):
        plan = tuple(int(v) for v in plan)
    return McConfig(
        truth=truth,
        replicates=int(pick("replicates", args.replicates, 100)),
        seed=int(pick("seed", args.seed, 0)),
        beta=pick("beta", args.beta),
        epsilon=float(pick("epsilon", args.epsilon, 0.2)),
        plan=plan,
        record_locations=bool(args.records_tsv),
    )


def cmd_mc(args) -> int:
    t0 = time.perf_counter()
    config = _mc_config_from_args(args)
    report = run_mc(config)
    result = {
        "replicates": report.replicates,
        "beta": report.beta,
        "count_m_correct": report.count_m_correct,
        "count_event": report.count_event,
        "empirical_prob": report.empirical_prob,
        "std_error": report.std_error,
        "location_error_quantiles": report.location_error_quantiles,
        "theory_bound": report.theory_bound,
        "plan": report.plan,
        "rng_algorithm": report.rng_algorithm,
        "flags": report.flags,
        "m_hats": report.m_hats,
        "runtime_seconds": report.runtime_seconds,
    }
    cfg = {
        "truth": {
            "model": config.truth.model,
            "T": config.truth.T,
            "tau_star": config.truth.tau_star,
            "theta_star": config.truth.theta_star,
        },
        "replicates": config.replicates,
        "beta": config.beta,
        "epsilon": config.epsilon,
        "plan": config.plan,
        "seed": config.seed,
    }
    if args.records_tsv and report.records is not None:
        rows = ["replicate\tm_hat\tchangepoints\tobjective"]
        rows += [
            f"{r}\t{m}\t{','.join(str(c) for c in cps)}\t{obj!r}"
            for r, m, cps, obj in report.records
        ]
        _atomic_write(args.records_tsv, "\n".join(rows) + "\n")
    _emit(args, "mc", cfg, result, time.perf_counter() - t0, config.seed)
    return EXIT_OK


def cmd_theory(args) -> int:
    t0 = time.perf_counter()
    name = args.formula
    lines: dict[str, object] = {}
    if name == "penalty":
        lines["penalty"] = theory.default_penalty(args.T, args.epsilon)
    elif name == "signal-strength":
        model = _model_from_args(args, need_sigma=False)
        lines["signal_strength"] = theory.signal_strength(model, args.delta, args.n)
    elif name in ("gamma", "gap", "probs", "bound"):
        model = _model_from_args(args, need_sigma=False)
        params = theory.TheoryParams(args.epsilon, args.T, args.m_star, model)
        if name in ("gap", "probs", "bound") and args.gamma is None:
            raise UsageError(f"{name} needs --gamma")
        if name == "gamma":
            g1, g2 = theory.gamma_thresholds(params, args.n)
            lines["gamma1"], lines["gamma2"] = g1, g2
        elif name == "gap":
            a, b = theory.gap_functions(params, args.gamma, args.n)
            lines["a"], lines["b"] = a, b
        elif name == "probs":
            p1, p2, p3, p4 = theory.failure_probs(params, args.gamma, args.n)
            lines.update(p1=p1, p2=p2, p3=p3, p4=p4)
            if args.delta is not None:
                s = theory.signal_strength(model, args.delta, args.n)
                av, _ = theory.gap_functions(params, args.gamma, params.T)
                p5v = theory.p5(model.kind, s, args.gamma + av)
                lines["p5"], lines["p5_valid"] = p5v.value, p5v.valid
        else:  # bound
            if args.plan is None:
                raise UsageError("bound needs --plan and --delta lists")
            n = _parse_ints(args.plan)
            deltas = _parse_floats(args.deltas or "")
            if len(deltas) != len(n):
                raise UsageError("--deltas must match --plan in length")
            s_bar = (
                min(theory.signal_strength(model, d, nj) for d, nj in zip(deltas, n))
                if n
                else math.inf
            )
            plan = theory.LocalizationPlan(n, s_bar)
            gb = theory.global_bound(params, args.gamma, plan)
            lines["bound"] = gb.value
            lines["vacuous"] = gb.vacuous
            lines["penalty_clears_thresholds"] = gb.penalty_clears_thresholds
    elif name == "radius":
        if args.beta is None or args.a is None or args.delta is None or not args.seg_lens:
            raise UsageError("radius needs --beta, --a, --delta and --seg-lens")
        model = _model_from_args(args, need_sigma=False)
        lines["radius"] = theory.localization_radius(
            model, args.beta, args.a, args.delta, tuple(_parse_ints(args.seg_lens))
        )
    elif name == "chisq":
        upper, lower = theory.chisq_tail_bounds(args.k, args.x, args.nu, args.y)
        lines["upper"], lines["upper_valid"] = upper.value, upper.valid
        lines["lower"], lines["lower_valid"] = lower.value, lower.valid
    elif name == "nu":
        if not args.change:
            raise UsageError("nu needs --change (theta values around the change)")
        model = _model_from_args(args, need_sigma=False)
        change = _parse_floats(args.change)
        lines["nu"] = theory.noncentrality(model, change, args.n)
    elif name == "mad":
        if not args.input:
            raise UsageError("mad needs --input")
        data = read_series(args.input)
        lines["sigma_hat"] = theory.mad_sigma(data, args.order)
    else:
        raise UsageError(f"unknown formula {name!r}")

    for key, value in lines.items():
        sys.stdout.write(f"{key} = {value!r}\n")
    if args.out:
        _emit(args, "theory", {"formula": name}, lines, time.perf_counter() - t0)
    return EXIT_OK


def cmd_basis_check(args) -> int:
    t0 = time.perf_counter()
    window = full_basis(args.n)
    defect = window.orthonormality_defect()
    theta = _parse_floats(args.theta)
    if len(theta) != 3:
        raise UsageError("--theta must be three knot heights theta0,theta1,theta2")
    rep = cost_identities_check(args.n, theta, args.sigma, args.replicates, args.seed)
    result = {
        "n": args.n,
        "window": 2 * args.n,
        "orthonormality_defect": defect,
        "basis_size": len(window.vectors),
        "identities": rep,
    }
    sys.stdout.write(f"orthonormality_defect = {defect!r}\n")
    sys.stdout.write(f"ks_stat_chi2_3 = {rep.ks_stat_chi2_3!r}\n")
    sys.stdout.write(f"ks_pvalue_chi2_3 = {rep.ks_pvalue_chi2_3!r}\n")
    sys.stdout.write(f"mean_lstar_minus_ltau = {rep.mean_lstar_minus_ltau!r}\n")
    sys.stdout.write(f"max_identity_gap = {rep.max_identity_gap!r}\n")
    config = {k: v for k, v in vars(args).items() if k != "func"}
    _emit(args, "basis-check", config, result, time.perf_counter() - t0, args.seed)
    return EXIT_OK


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    grid = _parse_ints(args.T_grid)
    base = _truth_from_args(argparse.Namespace(
        model=args.model, T=grid[0], tau=args.tau, theta=args.theta,
        sigma=args.sigma, alpha=args.alpha,
    ))

    def truth_for_T(T: int) -> TruthSpec:
        # scale the change locations proportionally, keep parameters
        frac = [t / grid[0] for t in base.tau_star]
        tau = tuple(max(1, min(T - 1, round(f * T))) for f in frac)
        return TruthSpec(base.model, T, tau, base.theta_star)

    rows = scaling_sweep(
        truth_for_T, grid, args.replicates, args.seed,
        epsilon=args.epsilon, q=args.q, reference_c=args.reference_c,
    )
    cols = sorted({k for row in rows for k in row})
    tsv = ["\t".join(cols)]
    tsv += ["\t".join(repr(row.get(c, "")) for c in cols) for row in rows]
    _atomic_write(args.out, "\n".join(tsv) + "\n")
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = _manifest("sweep", config, time.perf_counter() - t0, args.seed)
    _atomic_write(args.out + ".manifest.json", json.dumps(manifest, indent=2) + "\n")
    if args.svg:
        _write_sweep_svg(args.svg, rows, args.q)
    return EXIT_OK


def _write_sweep_svg(path: str, rows: list[dict], q: float) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    key = f"scaled_error_q{q}"
    xs = [r["log_T"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if any(key in r for r in rows):
        ax.plot(xs, [r.get(key, float("nan")) for r in rows], "o-", label=key)
    if any("reference_c_log_T" in r for r in rows):
        ax.plot(xs, [r.get("reference_c_log_T", float("nan")) for r in rows],
                "--", label="c log T")
    ax.set_xlabel("log T")
    ax.set_ylabel("scaled location error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pencpt", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p, with_truth=False, required=True):
        p.add_argument("--model", required=required, choices=[k.value for k in Kind])
        p.add_argument("--sigma", type=float, default=None)
        p.add_argument("--alpha", type=float, default=None)
        if with_truth:
            p.add_argument("--T", type=int, required=False)
            p.add_argument("--tau", default=None, help="comma-separated changepoints")
            p.add_argument("--theta", default=None, help="comma-separated parameters")

    p = sub.add_parser("detect", help="detect changepoints in a data file")
    p.add_argument("input")
    p.add_argument("--model", required=True, choices=[k.value for k in Kind])
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--estimate-sigma", action="store_true")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", default="auto", help="number or 'auto'")
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="draw one series from a true model")
    add_model_flags(p, with_truth=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc", help="Monte Carlo event-frequency experiment")
    add_model_flags(p, with_truth=True, required=False)
    p.add_argument("--config", default=None, help="JSON config (flags win)")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--plan", default=None, help="comma-separated n_j")
    p.add_argument("--records-tsv", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("theory", help="evaluate a named theory formula")
    p.add_argument("formula", choices=[
        "penalty", "gamma", "gap", "probs", "signal-strength", "radius",
        "bound", "chisq", "nu", "mad",
    ])
    p.add_argument("--model", choices=[k.value for k in Kind], default="mean")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--m-star", dest="m_star", type=int, default=1)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--deltas", default=None)
    p.add_argument("--seg-lens", dest="seg_lens", default=None)
    p.add_argument("--plan", default=None)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--x", type=float, default=None)
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--y", type=float, default=None)
    p.add_argument("--change", default=None, help="comma-separated change parameters")
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--input", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("basis-check", help="orthonormal-basis and identity checks")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replicates", type=int, default=2000)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--theta", default="0,1,0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_basis_check)

    p = sub.add_parser("sweep", help="consistency scaling sweep over T")
    add_model_flags(p, with_truth=True)
    p.add_argument("--T-grid", dest="T_grid", required=True)
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--q", type=float, default=0.9)
    p.add_argument("--reference-c", dest="reference_c", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        sys.stderr.write(f"usage error: {err}\n")
        return EXIT_USAGE
    except InputError as err:
        sys.stderr.write(f"input error: {err}\n")
        return EXIT_INPUT
    except (ValueError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as err:
        sys.stderr.write(f"numeric failure: {err}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
