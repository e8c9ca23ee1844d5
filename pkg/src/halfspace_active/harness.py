"""Experiment orchestration: label-complexity curves and verification suites.

Everything here is driven by one master seed through named substreams, so
every number in the output files is reproducible.  Results are exported
as newline-delimited run records plus two CSVs (the curve and the check
table); medians rather than means summarize over seeds because failure
runs at small budgets are heavy-tailed.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace

import numpy as np

from . import data_models as dm
from .data_models import DataModel, exact_surrogate_risk, label_batch, sample_unlabeled
from .driver import (
    ConvexUpdate,
    RunRecord,
    ScheduleParams,
    ZeroOneUpdate,
    epochs_for_target,
    run_active,
    run_passive,
)
from .errors import ConfigError
from .geometry import HypothesisBall, disagreement_exists_oracle, normalize, should_query
from .losses import (
    SurrogateLoss,
    exponential_loss,
    psi,
    psi_numeric,
    truncated_quadratic_loss,
)
from .solvers import surrogate_gradient, surrogate_objective
from .streams import substream

__all__ = [
    "ExperimentConfig",
    "CurvePoint",
    "CurveResult",
    "CurveFits",
    "CheckRow",
    "label_complexity_curve",
    "curve_fits",
    "empirical_process_gap",
    "empirical_process_gap_profile",
    "angle_disagreement_report",
    "check_query_rule_equivalence",
    "check_psi_transform",
    "check_sphere_identity",
    "check_gaussian_lower_bound",
    "check_gradient_finite_difference",
    "check_concentration_scaling",
    "export_results",
    "parse_curve_csv",
    "CURVE_HEADER",
    "CHECKS_HEADER",
]

CURVE_HEADER = [
    "epsilon",
    "labels_active_med", "labels_active_q1", "labels_active_q3",
    "labels_passive_med", "labels_passive_q1", "labels_passive_q3",
    "censored",
]
CHECKS_HEADER = ["check_name", "parameter", "observed", "bound_or_target", "sigma", "pass"]


@dataclass(frozen=True)
class ExperimentConfig:
    """One label-complexity experiment: model, updates, schedule, targets."""

    model: DataModel
    update: ZeroOneUpdate | ConvexUpdate
    schedule: ScheduleParams
    epsilons: tuple[float, ...]
    seeds: tuple[int, ...]
    passive_update: ZeroOneUpdate | ConvexUpdate | None = None
    passive_cap: int = 200_000
    master_seed: int = 0

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ConfigError("need at least one seed")
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(not 0.0 < e < 2.0 for e in eps):
            raise ConfigError("epsilon targets must lie in (0, 2)")
        if list(eps) != sorted(eps, reverse=True) or len(set(eps)) != len(eps):
            raise ConfigError("epsilon targets must be strictly decreasing")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class CurvePoint:
    epsilon: float
    labels_active_med: float
    labels_active_q1: float
    labels_active_q3: float
    labels_passive_med: float
    labels_passive_q1: float
    labels_passive_q3: float
    censored: bool


@dataclass(frozen=True)
class CurveResult:
    points: tuple[CurvePoint, ...]
    achieved: tuple[tuple[float, float, float], ...]  # (med, q1, q3) final chord error per point
    # every passive probe: (n_total, final chord error per seed); shared across
    # targets and reused by the bootstrap so no probe is ever recomputed
    passive_errors: tuple[tuple[int, tuple[float, ...]], ...]
    records: tuple[RunRecord, ...]  # active runs backing the points


@dataclass(frozen=True)
class CheckRow:
    check_name: str
    parameter: str
    observed: float
    bound_or_target: str
    sigma: float
    passed: bool


def _quartiles(values) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=float)
    return (
        float(np.median(arr)),
        float(np.percentile(arr, 25)),
        float(np.percentile(arr, 75)),
    )


# ---------------------------------------------------------------------------
# Label-complexity curve
# ---------------------------------------------------------------------------


class _PassiveProbe:
    """Caches passive runs: one probe evaluates every seed at a given n_total."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.update = config.passive_update if config.passive_update is not None else config.update
        self.w_bar = config.model.w_bar.coords
        self.cache: dict[int, np.ndarray] = {}

    def errors(self, n: int) -> np.ndarray:
        if n not in self.cache:
            errs = []
            for seed in self.config.seeds:
                rec = run_passive(self.config.model, self.update, n, seed=seed)
                errs.append(float(np.linalg.norm(np.asarray(rec.final_w) - self.w_bar)))
            self.cache[n] = np.asarray(errs)
        return self.cache[n]

    def statistic(self, n: int, percentile: float) -> float:
        return float(np.percentile(self.errors(n), percentile))


def _bisect_labels(probe: _PassiveProbe, epsilon: float, percentile: float, cap: int) -> int:
    """Smallest n_total whose seed-percentile error is <= epsilon.

    Doubling then bisection; the statistic is only statistically monotone
    in n, so this is the usual practical approximation.  Returns the cap
    itself when even the cap fails (callers treat that as censored).
    """
    hi = 8
    while probe.statistic(hi, percentile) > epsilon:
        hi *= 2
        if hi >= cap:
            if probe.statistic(cap, percentile) > epsilon:
                return cap
            hi = cap
            break
    lo = max(1, hi // 2)
    while lo < hi:
        mid = (lo + hi) // 2
        if probe.statistic(mid, percentile) <= epsilon:
            hi = mid
        else:
            lo = mid + 1
    return hi


def label_complexity_curve(config: ExperimentConfig) -> CurveResult:
    """Active labels at the schedule vs. passive labels needed, per target.

    The active arm runs the epoch loop with m = ceil(log2(2/eps)); the
    passive arm bisects for the smallest plain-ERM sample size whose
    median error over the seeds reaches the same accuracy (quartile
    bisections give the IQR; a point whose median search hits the cap is
    censored).
    """
    if config.model.w_star is None:
        raise ConfigError("curve needs a synthetic model with known optimum")
    points, achieved, records = [], [], []
    w_bar = config.model.w_bar.coords
    probe = _PassiveProbe(config)
    for eps in config.epsilons:
        m = epochs_for_target(eps)
        labels, errors = [], []
        for seed in config.seeds:
            rec = run_active(config.model, config.update, config.schedule, m=m, seed=seed)
            records.append(rec)
            labels.append(rec.total_labels)
            errors.append(float(np.linalg.norm(np.asarray(rec.final_w) - w_bar)))
        cap = config.passive_cap
        lp_med = _bisect_labels(probe, eps, 50.0, cap)
        censored = lp_med >= cap and probe.statistic(cap, 50.0) > eps
        # lower-quartile error crosses earlier, so it bounds the IQR below
        lp_q1 = _bisect_labels(probe, eps, 25.0, cap)
        lp_q3 = _bisect_labels(probe, eps, 75.0, cap)
        la = _quartiles(labels)
        points.append(
            CurvePoint(
                epsilon=eps,
                labels_active_med=la[0], labels_active_q1=la[1], labels_active_q3=la[2],
                labels_passive_med=float(lp_med),
                labels_passive_q1=float(lp_q1),
                labels_passive_q3=float(lp_q3),
                censored=censored,
            )
        )
        achieved.append(_quartiles(errors))
    passive_errors = tuple(
        (n, tuple(map(float, probe.cache[n]))) for n in sorted(probe.cache)
    )
    return CurveResult(
        points=tuple(points),
        achieved=tuple(achieved),
        passive_errors=passive_errors,
        records=tuple(records),
    )


@dataclass(frozen=True)
class CurveFits:
    """Trend fits: active labels vs log(1/eps), passive labels log-log."""

    active_slope: float
    active_intercept: float
    active_r2: float
    passive_slope: float
    passive_intercept: float
    passive_r2: float
    passive_slope_ci: tuple[float, float]


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def curve_fits(result: CurveResult, bootstrap: int = 500, seed: int = 0) -> CurveFits:
    """Fit both label-complexity trends, with a bootstrap CI on the passive slope.

    The bootstrap resamples seeds (the passive per-seed label needs are
    kept in the result exactly for this) and refits the median curve.
    Censored points are excluded from the passive fit.
    """
    pts = result.points
    x = np.log(1.0 / np.array([p.epsilon for p in pts]))
    y_act = np.array([p.labels_active_med for p in pts])
    a_slope, a_inter, a_r2 = _linfit(x, y_act)

    keep = [i for i, p in enumerate(pts) if not p.censored]
    if len(keep) < 2:
        raise ConfigError("fewer than two uncensored passive points; cannot fit")
    xk = x[keep]
    y_pas = np.log(np.array([pts[i].labels_passive_med for i in keep]))
    p_slope, p_inter, p_r2 = _linfit(xk, y_pas)

    # bootstrap over seeds, re-reading the cached probe grid: for each
    # resample, the label need at epsilon is the smallest probed n whose
    # resampled median error crosses it
    grid = np.array([n for n, _ in result.passive_errors], dtype=float)
    errs = np.array([e for _, e in result.passive_errors], dtype=float)  # (grid, seeds)
    eps_kept = np.array([pts[i].epsilon for i in keep])
    rng = substream(seed, "curve-bootstrap")
    n_seeds = errs.shape[1]
    slopes = np.empty(bootstrap)
    for b in range(bootstrap):
        idx = rng.integers(0, n_seeds, size=n_seeds)
        med = np.median(errs[:, idx], axis=1)
        needs_b = np.empty(eps_kept.shape[0])
        for j, eps in enumerate(eps_kept):
            ok = med <= eps
            needs_b[j] = grid[np.nonzero(ok)[0][0]] if np.any(ok) else grid[-1]
        slopes[b] = np.polyfit(xk, np.log(needs_b), 1)[0]
    ci = (float(np.percentile(slopes, 2.5)), float(np.percentile(slopes, 97.5)))
    return CurveFits(
        active_slope=a_slope, active_intercept=a_inter, active_r2=a_r2,
        passive_slope=p_slope, passive_intercept=p_inter, passive_r2=p_r2,
        passive_slope_ci=ci,
    )


# ---------------------------------------------------------------------------
# Concentration-scaling experiment
# ---------------------------------------------------------------------------


def empirical_process_gap_profile(
    loss: SurrogateLoss,
    model: DataModel,
    radii,
    n: int,
    trials: int,
    candidates: int,
    rng: np.random.Generator,
) -> dict[float, float]:
    """Trial-mean approximate sup of |empirical - expected| risk difference.

    The sup over {w : ||w - w*|| <= r} is approximated by sampled
    candidates, half on the boundary sphere and half inside; radii are
    processed in ascending order with a cumulative candidate pool, so
    within each trial the gap is non-decreasing in r by construction
    (sup over nested sets), which is asserted.
    """
    radii = sorted(float(r) for r in radii)
    if not radii or radii[0] <= 0:
        raise ValueError("radii must be positive")
    if candidates < 2 or trials < 1:
        raise ValueError("need at least 2 candidates and 1 trial")
    w_star = model.w_star
    d = model.dimension
    base = exact_surrogate_risk(model, loss, w_star)
    sums = {r: 0.0 for r in radii}
    for _ in range(trials):
        X = sample_unlabeled(model, n, rng)
        y = label_batch(model, X, rng)
        emp_star = float(np.mean(loss.phi(y * (X @ w_star))))
        sup = 0.0
        prev = 0.0
        for r in radii:
            dirs = rng.standard_normal((candidates, d))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            n_boundary = candidates // 2
            radial = np.concatenate([
                np.ones(n_boundary),
                rng.random(candidates - n_boundary) ** (1.0 / d),
            ])
            W = w_star[None, :] + r * radial[:, None] * dirs
            expected = np.array([exact_surrogate_risk(model, loss, w) for w in W]) - base
            empirical = np.mean(loss.phi(y[:, None] * (X @ W.T)), axis=0) - emp_star
            sup = max(sup, float(np.max(np.abs(empirical - expected))))
            assert sup >= prev, "gap must be non-decreasing in r within a trial"
            prev = sup
            sums[r] += sup
    return {r: s / trials for r, s in sums.items()}


def empirical_process_gap(
    loss: SurrogateLoss,
    model: DataModel,
    r: float,
    n: int,
    trials: int,
    candidates: int,
    rng: np.random.Generator,
) -> float:
    """Single-radius view of the profile above."""
    return empirical_process_gap_profile(loss, model, [r], n, trials, candidates, rng)[float(r)]


# ---------------------------------------------------------------------------
# Inequality report and check suites
# ---------------------------------------------------------------------------


def angle_disagreement_report(
    model: DataModel, pair_count: int, n_mc: int, rng: np.random.Generator
) -> list[CheckRow]:
    """Angle-vs-disagreement checks for random hypothesis pairs.

    Sphere marginal: the disagreement probability must equal θ/π within
    3σ.  Gaussian marginal: θ/π must lower-bound it within 3σ (the
    log-concave constant 1/π is exact there too, so this is conservative).
    """
    rows = []
    sphere = model.marginal == "uniform-sphere"
    name = "sphere-identity" if sphere else "gaussian-lower-bound"
    for i in range(pair_count):
        u = normalize(rng.standard_normal(model.dimension))
        v = normalize(rng.standard_normal(model.dimension))
        exact = dm.disagreement_probability(model, u, v, exact=True).mean
        est = dm.disagreement_probability(model, u, v, n_mc=n_mc, rng=rng)
        slack = 3.0 * est.std_error
        if sphere:
            passed = abs(est.mean - exact) <= slack + 1e-12
        else:
            passed = exact <= est.mean + slack + 1e-12
        rows.append(
            CheckRow(
                check_name=name,
                parameter=f"pair{i:02d}",
                observed=est.mean,
                bound_or_target=repr(exact),
                sigma=est.std_error,
                passed=bool(passed),
            )
        )
    return rows


def check_query_rule_equivalence(
    total: int = 100_000,
    dims=(2, 3, 10),
    radii=(2.0, 1.0, 0.5, 0.25, 0.125),
    seed: int = 0,
) -> list[CheckRow]:
    """Margin rule vs. arc oracle on random (x, w, r): agreement must be exact."""
    rng = substream(seed, "query-rule-equivalence")
    per_cell = max(1, total // (len(dims) * len(radii)))
    rows = []
    for d in dims:
        for r in radii:
            agree = 0
            for _ in range(per_cell):
                w = normalize(rng.standard_normal(d))
                ball = HypothesisBall(w, r)
                x = rng.standard_normal(d)
                agree += should_query(x, ball) == disagreement_exists_oracle(x, ball)
            rows.append(
                CheckRow(
                    check_name="query-rule-equivalence",
                    parameter=f"d={d},r={r}",
                    observed=agree / per_cell,
                    bound_or_target="1.0",
                    sigma=0.0,
                    passed=agree == per_cell,
                )
            )
    return rows


def check_psi_transform(tol: float = 1e-6) -> list[CheckRow]:
    """Closed-form ψ vs. the numeric double infimum, plus the z²/2 minorant."""
    grid = [round(0.05 * i, 2) for i in range(1, 20)]
    rows = []
    for loss in (exponential_loss(), truncated_quadratic_loss()):
        worst = max(abs(psi(loss, z) - psi_numeric(loss, z)) for z in grid)
        rows.append(
            CheckRow(
                check_name="psi-closed-vs-numeric",
                parameter=loss.name,
                observed=worst,
                bound_or_target=repr(tol),
                sigma=0.0,
                passed=worst <= tol,
            )
        )
    exp = exponential_loss()
    minorant_ok = all(psi(exp, z) >= z * z / 2.0 for z in grid)
    rows.append(
        CheckRow(
            check_name="psi-exponential-minorant",
            parameter="z^2/2",
            observed=float(minorant_ok),
            bound_or_target="1.0",
            sigma=0.0,
            passed=minorant_ok,
        )
    )
    return rows


def _pair_model(marginal: str, d: int) -> DataModel:
    w = np.zeros(d)
    w[0] = 1.0
    return DataModel(d, marginal, "powered-margin", w, kappa=1.0)


def check_sphere_identity(
    dims=(2, 5), pairs: int = 20, n_mc: int = 1_000_000, seed: int = 0
) -> list[CheckRow]:
    rows = []
    for d in dims:
        rng = substream(seed, "sphere-identity", d)
        model = _pair_model("uniform-sphere", d)
        for row in angle_disagreement_report(model, pairs, n_mc, rng):
            rows.append(replace(row, parameter=f"d={d},{row.parameter}"))
    return rows


def check_gaussian_lower_bound(
    d: int = 10, pairs: int = 20, n_mc: int = 1_000_000, seed: int = 0
) -> list[CheckRow]:
    rng = substream(seed, "gaussian-lower", d)
    model = _pair_model("gaussian", d)
    return [
        replace(row, parameter=f"d={d},{row.parameter}")
        for row in angle_disagreement_report(model, pairs, n_mc, rng)
    ]


def check_gradient_finite_difference(
    triples: int = 100, tol: float = 1e-5, seed: int = 0
) -> list[CheckRow]:
    """Analytic surrogate gradient vs. central differences on random data.

    Margins within h of the truncated-quadratic kink are nudged away;
    the derivative check is only meaningful where φ' exists.
    """
    rng = substream(seed, "gradient-fd")
    losses_pool = (exponential_loss(), truncated_quadratic_loss())
    h = 1e-6
    worst = 0.0
    for _ in range(triples):
        loss = losses_pool[int(rng.integers(len(losses_pool)))]
        d = int(rng.integers(2, 6))
        n = int(rng.integers(5, 40))
        X = rng.standard_normal((n, d))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        w = rng.standard_normal(d) * 0.5
        margins = y * (X @ w)
        near_kink = np.abs(margins - 1.0) < 1e-4
        if np.any(near_kink):
            X[near_kink] *= 1.01
        g = surrogate_gradient(loss, w, (X, y))
        fd = np.empty(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            fd[i] = (
                surrogate_objective(loss, w + e, (X, y))
                - surrogate_objective(loss, w - e, (X, y))
            ) / (2.0 * h)
        rel = float(np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(g)))
        worst = max(worst, rel)
    return [
        CheckRow(
            check_name="gradient-finite-difference",
            parameter=f"{triples}-triples",
            observed=worst,
            bound_or_target=repr(tol),
            sigma=0.0,
            passed=worst <= tol,
        )
    ]


def check_concentration_scaling(
    trials: int = 50,
    n: int = 400,
    r: float = 0.4,
    candidates: int = 128,
    band=(1.4, 2.8),
    seed: int = 0,
) -> list[CheckRow]:
    """Gap ratios under radius doubling and sample quadrupling.

    The bound predicts gap ∝ r/√n, so both ratios target 2; the band is
    wide because the sup is approximated by candidate sampling.
    """
    model = DataModel(2, "uniform-sphere", "affine", np.array([0.4, 0.0]))
    loss = truncated_quadratic_loss()
    prof = empirical_process_gap_profile(
        loss, model, [r, 2 * r], n, trials, candidates, substream(seed, "th4-radius")
    )
    ratio_r = prof[2 * r] / prof[r]
    gap_small = empirical_process_gap(
        loss, model, r, n, trials, candidates, substream(seed, "th4-n-small")
    )
    gap_large = empirical_process_gap(
        loss, model, r, 4 * n, trials, candidates, substream(seed, "th4-n-large")
    )
    ratio_n = gap_small / gap_large
    lo, hi = band
    return [
        CheckRow(
            check_name="concentration-scaling",
            parameter=f"gap({2*r})/gap({r}),n={n}",
            observed=ratio_r,
            bound_or_target=f"[{lo},{hi}]",
            sigma=0.0,
            passed=lo <= ratio_r <= hi,
        ),
        CheckRow(
            check_name="concentration-scaling",
            parameter=f"gap(n={n})/gap(n={4*n}),r={r}",
            observed=ratio_n,
            bound_or_target=f"[{lo},{hi}]",
            sigma=0.0,
            passed=lo <= ratio_n <= hi,
        ),
    ]


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, header: list[str], rows, comment: str) -> None:
    buf = io.StringIO()
    buf.write(comment + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def export_results(
    records,
    curve: CurveResult | None,
    reports,
    out_dir: str,
    config_digest: str = "",
    master_seed: int = 0,
) -> dict[str, str]:
    """Write run_records.json, curve.csv, and checks.csv under out_dir.

    Outputs are byte-stable for fixed inputs; every file carries the
    config digest and master seed (JSON records as fields, CSVs as a
    leading comment).
    """
    os.makedirs(out_dir, exist_ok=True)
    comment = f"# config_digest={config_digest} master_seed={master_seed}"
    paths = {}

    records_path = os.path.join(out_dir, "run_records.json")
    with open(records_path, "w", encoding="utf-8", newline="") as fh:
        for rec in records:
            fh.write(rec.to_json_line() + "\n")
    paths["run_records"] = records_path

    curve_path = os.path.join(out_dir, "curve.csv")
    curve_rows = []
    if curve is not None:
        for p in curve.points:
            curve_rows.append([
                p.epsilon,
                p.labels_active_med, p.labels_active_q1, p.labels_active_q3,
                p.labels_passive_med, p.labels_passive_q1, p.labels_passive_q3,
                p.censored,
            ])
    _write_csv(curve_path, CURVE_HEADER, curve_rows, comment)
    paths["curve"] = curve_path

    checks_path = os.path.join(out_dir, "checks.csv")
    check_rows = [
        [r.check_name, r.parameter, r.observed, r.bound_or_target, r.sigma, r.passed]
        for r in reports
    ]
    _write_csv(checks_path, CHECKS_HEADER, check_rows, comment)
    paths["checks"] = checks_path
    return paths


def parse_curve_csv(path: str) -> tuple[CurvePoint, ...]:
    """Read curve.csv back into CurvePoints (exact float round-trip)."""
    points = []
    with open(path, encoding="utf-8") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    if header != CURVE_HEADER:
        raise ConfigError(f"unexpected curve header {header!r}")
    for row in reader:
        points.append(
            CurvePoint(
                epsilon=float(row[0]),
                labels_active_med=float(row[1]),
                labels_active_q1=float(row[2]),
                labels_active_q3=float(row[3]),
                labels_passive_med=float(row[4]),
                labels_passive_q1=float(row[5]),
                labels_passive_q3=float(row[6]),
                censored=row[7] == "true",
            )
        )
    return tuple(points)
