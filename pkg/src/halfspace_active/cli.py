"""Command-line harness: run, curve, check, psi-table, budget.

Configuration is a single JSON tree (diffable, archivable) with dotted
``--set key=value`` overrides; unknown keys are rejected by name.  Exit
codes: 0 success, 1 runtime failure (partial results are still written),
2 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys

import numpy as np

from . import harness
from .data_models import DataModel
from .driver import (
    ConvexUpdate,
    ScheduleParams,
    ZeroOneUpdate,
    kappa_threshold,
    run_active,
    total_label_bound,
)
from .errors import ConfigError, HalfspaceActiveError, ScheduleError, StreamExhausted
from .harness import ExperimentConfig, export_results, label_complexity_curve
from .losses import BUILTIN_LOSSES, get_loss, psi, psi_numeric
from .solvers import ConvexSolverParams

__all__ = ["main", "load_config", "config_digest", "DEFAULT_CONFIG"]

DEFAULT_CONFIG = {
    "model": {
        "dimension": 2,
        "marginal": "uniform-sphere",
        "conditional": "powered-margin",
        "w_star": [1.0, 0.0],
        "kappa": 1.0,
        "tau0": 1.0,
        "scale": 1.0,
        "seed": 0,
    },
    "update": {
        "kind": "convex",
        "loss": "truncated-quadratic",
        "restarts": 32,
    },
    "solver": {
        "max_iters": 20000,
        "grad_tol": 1e-8,
        "initial_step": 1.0,
        "backtrack_factor": 0.5,
        "armijo_c": 1e-4,
    },
    "schedule": {
        "mode": "fixed",
        "n": 500,
        "n0": None,
        "ratio": None,
        "mu": 1.0,
        "kappa": 1.0,
        "ell_minus": 1.0,
        "ell_plus": 1.0,
        "gamma_minus": 1.0,
        "gamma_plus": 1.0,
        "theta_eps": 1.0,
        "delta": 0.1,
        "d": 2,
        "m": 1,
        "L": 1.0,
        "R": 1.0,
        "a": 1.0,
        "gamma": 2.0,
        "floor_enabled": False,
    },
    "run": {
        "epochs": 6,
        "seeds": [0],
        "excess_risk_mc": 0,
    },
    "curve": {
        "epsilons": [0.2, 0.1],
        "seeds": [0, 1, 2, 3, 4],
        "passive_update": "zero-one",
        "passive_cap": 200000,
        "bootstrap": 500,
    },
    "check": {
        "only": None,
        "equivalence_samples": 100000,
        "pairs": 20,
        "n_mc": 1000000,
        "gradient_triples": 100,
        "scaling_trials": 50,
        "scaling_n": 400,
        "scaling_candidates": 128,
    },
    "out": "results",
    "seed": 0,
}

CHECK_NAMES = ("query-rule", "psi", "sphere", "gaussian", "gradient", "scaling")


def _validate_keys(config: dict, defaults: dict, prefix: str = "") -> None:
    for key, value in config.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            _validate_keys(value, defaults[key], prefix=path + ".")


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _apply_override(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    parts = dotted.split(".")
    walked = []
    for part in parts[:-1]:
        walked.append(part)
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown config key {'.'.join(walked)!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[parts[-1]] = value


def load_config(path: str | None, overrides=(), seed: int | None = None, out: str | None = None) -> dict:
    """Resolve defaults <- file <- --set overrides <- flag overrides."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                file_config = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path!r} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from None
        if not isinstance(file_config, dict):
            raise ConfigError("config root must be a JSON object")
        _validate_keys(file_config, DEFAULT_CONFIG)
        config = _deep_merge(config, file_config)
    for assignment in overrides:
        _apply_override(config, assignment)
    if seed is not None:
        config["seed"] = int(seed)
    if out is not None:
        config["out"] = out
    return config


def config_digest(config: dict) -> str:
    """Digest of the experiment identity (everything except where files land)."""
    payload = {k: v for k, v in config.items() if k != "out"}
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def build_model(config: dict) -> DataModel:
    mc = config["model"]
    kind = mc["conditional"]
    return DataModel(
        dimension=int(mc["dimension"]),
        marginal=mc["marginal"],
        conditional=kind,
        w_star=np.asarray(mc["w_star"], dtype=float),
        seed=int(mc["seed"]),
        scale=float(mc["scale"]),
        kappa=float(mc["kappa"]) if kind == "powered-margin" else None,
        tau0=float(mc["tau0"]),
    )


def build_update(config: dict, kind: str | None = None, R: float = 1.0):
    uc = config["update"]
    kind = uc["kind"] if kind is None else kind
    if kind == "zero-one":
        return ZeroOneUpdate(restarts=int(uc["restarts"]))
    if kind == "convex":
        sc = config["solver"]
        params = ConvexSolverParams(
            max_iters=int(sc["max_iters"]),
            grad_tol=float(sc["grad_tol"]),
            initial_step=float(sc["initial_step"]),
            backtrack_factor=float(sc["backtrack_factor"]),
            armijo_c=float(sc["armijo_c"]),
        )
        return ConvexUpdate(loss=get_loss(uc["loss"], R=R), params=params)
    raise ConfigError(f"unknown update kind {kind!r}")


def build_schedule(config: dict) -> ScheduleParams:
    sc = config["schedule"]
    kwargs = {k: sc[k] for k in (
        "mode", "n", "n0", "ratio", "mu", "kappa", "ell_minus", "ell_plus",
        "gamma_minus", "gamma_plus", "theta_eps", "delta", "d", "m",
        "L", "R", "a", "gamma", "floor_enabled",
    )}
    if kwargs["n"] is not None:
        kwargs["n"] = int(kwargs["n"])
    return ScheduleParams(**kwargs)


def _fmt6(value) -> str:
    if value is None:
        return "-"
    return f"{value:.6g}"


def _print_epoch_table(record) -> None:
    print(f"seed={record.seed} digest={record.config_digest} total_labels={record.total_labels}")
    print(f"{'k':>3} {'r_k':>10} {'n_k':>8} {'labels':>8} {'scanned':>9} {'chord_err':>11}")
    for e in record.epochs:
        print(
            f"{e.k:>3} {_fmt6(e.r_k):>10} {e.n_k:>8} {e.labels:>8} "
            f"{e.scanned:>9} {_fmt6(e.chord_error):>11}"
        )


def cmd_run(config: dict) -> int:
    model = build_model(config)
    update = build_update(config, R=model.R)
    schedule = build_schedule(config)
    digest = config_digest(config)
    records = []
    failure = None
    for seed in config["run"]["seeds"]:
        try:
            rec = run_active(
                model,
                update,
                schedule,
                m=int(config["run"]["epochs"]),
                seed=int(seed),
                excess_risk_mc=int(config["run"]["excess_risk_mc"]),
                config_digest=digest,
            )
        except StreamExhausted as exc:
            if exc.partial is not None:
                records.append(exc.partial)
            failure = exc
            break
        except HalfspaceActiveError as exc:
            failure = exc
            break
        records.append(rec)
        _print_epoch_table(rec)
    export_results(records, None, [], config["out"], config_digest=digest,
                   master_seed=int(config["seed"]))
    if failure is not None:
        print(f"error: {failure}", file=sys.stderr)
        return 1
    return 0


def cmd_curve(config: dict) -> int:
    model = build_model(config)
    cc = config["curve"]
    experiment = ExperimentConfig(
        model=model,
        update=build_update(config, R=model.R),
        schedule=build_schedule(config),
        epsilons=tuple(float(e) for e in cc["epsilons"]),
        seeds=tuple(int(s) for s in cc["seeds"]),
        passive_update=build_update(config, kind=cc["passive_update"], R=model.R),
        passive_cap=int(cc["passive_cap"]),
        master_seed=int(config["seed"]),
    )
    digest = config_digest(config)
    result = label_complexity_curve(experiment)
    paths = export_results(
        result.records, result, [], config["out"],
        config_digest=digest, master_seed=int(config["seed"]),
    )
    print(f"{'epsilon':>8} {'active_med':>11} {'passive_med':>12} {'censored':>9}")
    for p in result.points:
        print(
            f"{_fmt6(p.epsilon):>8} {_fmt6(p.labels_active_med):>11} "
            f"{_fmt6(p.labels_passive_med):>12} {str(p.censored).lower():>9}"
        )
    print(f"wrote {paths['curve']}")
    return 0


def _run_checks(config: dict, only) -> list[harness.CheckRow]:
    cc = config["check"]
    seed = int(config["seed"])
    selected = CHECK_NAMES if not only else tuple(only)
    unknown = set(selected) - set(CHECK_NAMES)
    if unknown:
        raise ConfigError(f"unknown check name(s): {sorted(unknown)}; known: {list(CHECK_NAMES)}")
    rows: list[harness.CheckRow] = []
    if "query-rule" in selected:
        rows += harness.check_query_rule_equivalence(
            total=int(cc["equivalence_samples"]), seed=seed
        )
    if "psi" in selected:
        rows += harness.check_psi_transform()
    if "sphere" in selected:
        rows += harness.check_sphere_identity(
            pairs=int(cc["pairs"]), n_mc=int(cc["n_mc"]), seed=seed
        )
    if "gaussian" in selected:
        rows += harness.check_gaussian_lower_bound(
            pairs=int(cc["pairs"]), n_mc=int(cc["n_mc"]), seed=seed
        )
    if "gradient" in selected:
        rows += harness.check_gradient_finite_difference(
            triples=int(cc["gradient_triples"]), seed=seed
        )
    if "scaling" in selected:
        rows += harness.check_concentration_scaling(
            trials=int(cc["scaling_trials"]),
            n=int(cc["scaling_n"]),
            candidates=int(cc["scaling_candidates"]),
            seed=seed,
        )
    return rows


def cmd_check(config: dict, only) -> int:
    rows = _run_checks(config, only)
    export_results([], None, rows, config["out"],
                   config_digest=config_digest(config), master_seed=int(config["seed"]))
    failed = [r for r in rows if not r.passed]
    for row in rows:
        status = "PASS" if row.passed else "FAIL"
        print(f"[{status}] {row.check_name} {row.parameter}: "
              f"observed={_fmt6(row.observed)} target={row.bound_or_target}")
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return 0 if not failed else 1


def cmd_psi_table(loss_name: str, step: float) -> int:
    if loss_name not in BUILTIN_LOSSES:
        print(f"error: unknown loss {loss_name!r}; available: {sorted(BUILTIN_LOSSES)}",
              file=sys.stderr)
        return 2
    if not 0.0 < step <= 1.0:
        print(f"error: step must lie in (0, 1], got {step}", file=sys.stderr)
        return 2
    loss = get_loss(loss_name)
    print("z,psi,psi_numeric,lower_bound")
    z = 0.0
    while z <= 1.0 + 1e-12:
        zc = min(z, 1.0)
        lower = loss.psi_lower_a * zc**loss.psi_lower_gamma
        print(f"{zc:.10g},{psi(loss, zc):.10g},{psi_numeric(loss, zc):.10g},{lower:.10g}")
        z += step
    return 0


def cmd_budget(config: dict) -> int:
    schedule = build_schedule(config)
    sc = config["schedule"]
    gamma = float(sc["gamma"])
    alpha_ncx = float(sc["gamma_minus"]) - float(sc["gamma_plus"]) / float(sc["kappa"])
    alpha_cvx = gamma * float(sc["gamma_minus"]) - gamma * float(sc["gamma_plus"]) / float(sc["kappa"]) - 1.0
    epochs = int(sc["m"])
    print(f"kappa_threshold(gamma={_fmt6(gamma)}) = {kappa_threshold(gamma):.6f}")
    print(f"alpha (non-convex) = {_fmt6(alpha_ncx)}   alpha (convex) = {_fmt6(alpha_cvx)}")
    modes = ("theory-nonconvex", "theory-convex")
    budgets = {}
    for mode in modes:
        s = ScheduleParams(**{**{k: getattr(schedule, k) for k in (
            "n", "n0", "ratio", "mu", "kappa", "ell_minus", "ell_plus",
            "gamma_minus", "gamma_plus", "theta_eps", "delta", "d", "m",
            "L", "R", "a", "gamma", "floor_enabled")}, "mode": mode, "n": None})
        budgets[mode] = [s.budget(k) for k in range(1, epochs + 1)]
    print(f"{'k':>3} {'r_k':>10} {'n_k (0-1)':>14} {'n_k (convex)':>14}")
    for k in range(1, epochs + 1):
        print(f"{k:>3} {_fmt6(2.0 ** (2 - k)):>10} "
              f"{budgets['theory-nonconvex'][k - 1]:>14} {budgets['theory-convex'][k - 1]:>14}")
    eps = 2.0 ** (1 - epochs)
    for label, alpha, n0 in (
        ("non-convex", alpha_ncx, budgets["theory-nonconvex"][0]),
        ("convex", alpha_cvx, budgets["theory-convex"][0]),
    ):
        bound = total_label_bound(alpha, eps, n0)
        branch = "power" if alpha > 0 else "log"
        print(f"total bound ({label}, eps={_fmt6(eps)}, {branch} branch) = {_fmt6(bound)}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="halfspace-active",
        description="Selective sampling for halfspaces: runs, curves, and verification checks.",
    )
    parser.add_argument("--verbose", action="store_true", help="enable info logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="config override (dotted key)")

    common(sub.add_parser("run", help="execute the epoch loop per seed"), True)
    common(sub.add_parser("curve", help="label-complexity curve, active vs passive"), True)
    p_check = sub.add_parser("check", help="run the verification suites")
    common(p_check, True)
    p_check.add_argument("--only", default=None,
                         help=f"comma-separated subset of {','.join(CHECK_NAMES)}")
    p_psi = sub.add_parser("psi-table", help="print a z -> psi(z) table as CSV")
    p_psi.add_argument("--loss", required=True, help="loss name")
    p_psi.add_argument("--step", type=float, default=0.1, help="grid step (default 0.1)")
    common(sub.add_parser("budget", help="evaluate the label-budget formulas"), False)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "psi-table":
        return cmd_psi_table(args.loss, args.step)
    try:
        config = load_config(args.config, args.overrides, seed=args.seed, out=args.out)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "curve":
            return cmd_curve(config)
        if args.command == "check":
            only = args.only.split(",") if args.only else (config["check"]["only"] or None)
            return cmd_check(config, only)
        if args.command == "budget":
            return cmd_budget(config)
    except (ConfigError, ScheduleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HalfspaceActiveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
