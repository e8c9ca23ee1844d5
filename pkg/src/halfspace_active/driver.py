"""The epoch loop: scan, query, fit, normalize, halve the radius.

Each run starts from a random unit vector with the whole sphere as its
hypothesis ball (radius 2, every instance queried), fits by the chosen
update on the labels collected that epoch, and halves the ball radius.
Budgets per epoch come from a fixed/geometric schedule or from the
theoretical formulas, which are implemented for verification but are far
too conservative for desk-scale experiments.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .data_models import (
    SUPPORTED_PAIRINGS,
    DataModel,
    eta_batch,
    label_batch,
    sample_unlabeled,
)
from .errors import DegenerateSolution, ScheduleError, StreamExhausted
from .geometry import HypothesisBall, UnitVector, chord_length, normalize, query_mask
from .losses import SurrogateLoss
from .solvers import ConvexSolverParams, erm_convex, erm_zero_one_2d, erm_zero_one_search
from .streams import substream

__all__ = [
    "ScheduleParams",
    "ZeroOneUpdate",
    "ConvexUpdate",
    "EpochRecord",
    "RunRecord",
    "FinitePool",
    "radius_at",
    "epochs_for_target",
    "nk_nonconvex",
    "nk_convex",
    "sample_floor",
    "kappa_threshold",
    "total_label_bound",
    "run_active",
    "run_passive",
]

logger = logging.getLogger(__name__)

_SCAN_CHUNK = 4096
FIRST_RADIUS = 2.0


def radius_at(k: int) -> float:
    """Ball radius of epoch k: r_1 = 2, then exact halvings 2^(2-k)."""
    if k < 1:
        raise ValueError("epochs are numbered from 1")
    return 2.0 ** (2 - k)


def epochs_for_target(epsilon: float) -> int:
    """Epoch count guaranteeing r_{m+1} <= epsilon: ceil(log2(2/eps))."""
    if not 0.0 < epsilon < 2.0:
        raise ValueError("target accuracy must lie in (0, 2)")
    return math.ceil(math.log2(2.0 / epsilon))


# ---------------------------------------------------------------------------
# Label budgets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleParams:
    """Per-epoch label budget specification.

    ``fixed`` uses n every epoch; ``geometric`` uses ceil(n0 * ratio^(k-1)).
    The two theory modes evaluate the label-budget formulas from the
    analysis; their constants are those of the excess-risk sandwich
    (ell/gamma pairs), the noise condition (mu, kappa), the disagreement
    coefficient at the target accuracy, and for the convex mode the loss
    constants (L, R, a, gamma).
    """

    mode: str
    n: int | None = None
    n0: float | None = None
    ratio: float | None = None
    mu: float = 1.0
    kappa: float = 1.0
    ell_minus: float = 1.0
    ell_plus: float = 1.0
    gamma_minus: float = 1.0
    gamma_plus: float = 1.0
    theta_eps: float = 1.0
    delta: float = 0.1
    d: int = 2
    m: int = 1
    L: float = 1.0
    R: float = 1.0
    a: float = 1.0
    gamma: float = 2.0
    floor_enabled: bool = False

    def __post_init__(self):
        modes = ("fixed", "geometric", "theory-nonconvex", "theory-convex")
        if self.mode not in modes:
            raise ScheduleError(f"unknown schedule mode {self.mode!r}; expected one of {modes}")
        if self.mode == "fixed":
            if self.n is None or self.n < 1:
                raise ScheduleError("fixed schedule needs n >= 1")
        elif self.mode == "geometric":
            if self.n0 is None or self.n0 < 1 or self.ratio is None or self.ratio <= 0:
                raise ScheduleError("geometric schedule needs n0 >= 1 and ratio > 0")
        else:
            positives = {
                "mu": self.mu, "ell_minus": self.ell_minus, "ell_plus": self.ell_plus,
                "gamma_plus": self.gamma_plus, "theta_eps": self.theta_eps,
                "L": self.L, "R": self.R, "a": self.a, "gamma": self.gamma,
            }
            for name, value in positives.items():
                if value <= 0:
                    raise ScheduleError(f"{name} must be positive, got {value!r}")
            if self.kappa < 1:
                raise ScheduleError("kappa must be at least 1")
            if self.gamma_minus < self.gamma_plus:
                raise ScheduleError("need gamma_minus >= gamma_plus")
            if not 0.0 < self.delta < 1.0:
                raise ScheduleError("delta must lie in (0, 1)")
            if self.m < 1 or self.d < 2:
                raise ScheduleError("need m >= 1 and d >= 2")

    def budget(self, k: int) -> int:
        if self.mode == "fixed":
            return int(self.n)
        if self.mode == "geometric":
            return max(1, math.ceil(self.n0 * self.ratio ** (k - 1)))
        if self.mode == "theory-nonconvex":
            return nk_nonconvex(k, self)
        return nk_convex(k, self)


def _checked_count(value: float, what: str) -> int:
    if not math.isfinite(value) or value <= 0:
        raise ScheduleError(f"{what} evaluated to {value!r}; parameters are inconsistent")
    return math.ceil(value)


def nk_nonconvex(k: int, s: ScheduleParams) -> int:
    """Epoch budget for the 0-1 update.

    2 c² θ²(ε) [log(4m/δ) + 2(d+1)(log 8 + 2 log(c θ(ε) / r^p))] r^(-2p)
    with p = γ₋ - γ₊/κ and c = μ ℓ₊^{1/κ} 2^{γ₀} / ℓ₋, γ₀ = 2 + γ₋ + γ₊/κ.
    """
    r = radius_at(k)
    gamma0 = 2.0 + s.gamma_minus + s.gamma_plus / s.kappa
    c = s.mu * s.ell_plus ** (1.0 / s.kappa) * 2.0**gamma0 / s.ell_minus
    p = s.gamma_minus - s.gamma_plus / s.kappa
    log_arg = c * s.theta_eps / r**p
    if not math.isfinite(log_arg) or log_arg <= 0:
        raise ScheduleError(f"log argument {log_arg!r} is not positive")
    bracket = math.log(4.0 * s.m / s.delta) + 2.0 * (s.d + 1) * (
        math.log(8.0) + 2.0 * math.log(log_arg)
    )
    value = 2.0 * c * c * s.theta_eps**2 * bracket * r ** (2.0 * (s.gamma_plus / s.kappa - s.gamma_minus))
    return _checked_count(value, "non-convex epoch budget")


def nk_convex(k: int, s: ScheduleParams) -> int:
    """Epoch budget for the convex update, optionally floored by the
    minimum sample count that the concentration argument needs."""
    r = radius_at(k)
    log_md = math.log(s.m / s.delta)
    if log_md < 0:
        raise ScheduleError("theory-convex budget needs m/delta > 1")
    base = (
        s.mu * s.ell_plus ** (1.0 / s.kappa) * 2.0 ** (s.gamma_minus + s.gamma_plus / s.kappa)
        * s.theta_eps / s.ell_minus
    ) ** (2.0 * s.gamma)
    deviation = (2.0 * s.L * s.R / s.a * (4.0 + math.sqrt(2.0 * log_md))) ** 2
    exponent = 2.0 * (1.0 + s.gamma * s.gamma_plus / s.kappa - s.gamma * s.gamma_minus)
    n = _checked_count(base * deviation * r**exponent, "convex epoch budget")
    if s.floor_enabled:
        n = max(n, sample_floor(s.m, s.delta))
    return n


def sample_floor(m: int, delta: float) -> int:
    """Minimum epoch sample count 1 + 2 log(m/δ) log((2/e) log(m/δ))."""
    if m < 1 or not 0.0 < delta < 1.0:
        raise ScheduleError("need m >= 1 and delta in (0, 1)")
    log_md = math.log(m / delta)
    arg = (2.0 / math.e) * log_md
    if arg <= 0:
        raise ScheduleError("sample floor needs m/delta > 1")
    return math.ceil(1.0 + 2.0 * log_md * math.log(arg))


def kappa_threshold(gamma: float) -> float:
    """Largest noise exponent with exponential savings: (1 + sqrt(1+4γ²))/(2γ)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    return (1.0 + math.sqrt(1.0 + 4.0 * gamma * gamma)) / (2.0 * gamma)


def total_label_bound(alpha: float, epsilon: float, n0: float) -> float:
    """Total-label bound over all epochs given the per-epoch growth rate α."""
    if not 0.0 < epsilon < 2.0:
        raise ValueError("epsilon must lie in (0, 2)")
    if n0 <= 0:
        raise ValueError("n0 must be positive")
    if alpha > 0:
        growth = 2.0 ** (2.0 * alpha)
        return n0 * growth / (growth - 1.0) * (4.0 / epsilon) ** (2.0 * alpha)
    return n0 * math.log2(4.0 / epsilon)


# ---------------------------------------------------------------------------
# Updates and run records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroOneUpdate:
    """Exact 2-D sweep when d = 2, restart search otherwise."""

    restarts: int = 32


@dataclass(frozen=True)
class ConvexUpdate:
    loss: SurrogateLoss
    params: ConvexSolverParams = ConvexSolverParams()


@dataclass(frozen=True)
class EpochRecord:
    k: int
    r_k: float
    n_k: int
    labels: int
    scanned: int
    w_k: tuple[float, ...]
    chord_error: float | None
    excess_risk_est: float | None


@dataclass(frozen=True)
class RunRecord:
    """Full trace of one run; radius halving and label totals are enforced."""

    seed: int
    config_digest: str
    epochs: tuple[EpochRecord, ...]
    final_w: tuple[float, ...]
    total_labels: int

    def __post_init__(self):
        for a, b in zip(self.epochs, self.epochs[1:]):
            if b.r_k != a.r_k / 2.0:
                raise ValueError(f"radius must halve between epochs: {a.r_k} -> {b.r_k}")
        if self.total_labels != sum(e.labels for e in self.epochs):
            raise ValueError("total_labels must equal the sum of per-epoch labels")

    def to_json_obj(self) -> dict:
        return {
            "seed": self.seed,
            "config_digest": self.config_digest,
            "epochs": [
                {
                    "k": e.k,
                    "r_k": e.r_k,
                    "n_k": e.n_k,
                    "labels": e.labels,
                    "scanned": e.scanned,
                    "chord_error": e.chord_error,
                    "excess_risk_est": e.excess_risk_est,
                }
                for e in self.epochs
            ],
            "total_labels": self.total_labels,
            "final_w": list(self.final_w),
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))


@dataclass
class FinitePool:
    """A fixed instance pool scanned sequentially across epochs.

    Labels come from ``y`` when given, else from the model's conditional.
    Used to exercise StreamExhausted; the generative sources never run dry.
    """

    X: np.ndarray
    model: DataModel | None = None
    y: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("pool must be a 2-D array of instances")
        if self.model is None and self.y is None:
            raise ValueError("pool needs a label source (model or y)")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64)
            if self.y.shape[0] != self.X.shape[0]:
                raise ValueError("pool labels must match pool instances")


class _CountingOracle:
    """Label source wrapper; every label charged to the run passes through here."""

    def __init__(self, fn):
        self._fn = fn
        self.count = 0

    def __call__(self, X: np.ndarray, idx: np.ndarray) -> np.ndarray:
        self.count += X.shape[0]
        return self._fn(X, idx)


class _ModelScan:
    """Inexhaustible i.i.d. scan: each epoch reads a fresh substream."""

    def __init__(self, model: DataModel, seed: int):
        self.model = model
        self.seed = seed
        self._rng = None

    def start_epoch(self, k: int) -> None:
        self._rng = substream(self.seed, "epoch", k, "scan")

    def next_chunk(self):
        X = sample_unlabeled(self.model, _SCAN_CHUNK, self._rng)
        return X, np.arange(X.shape[0])


class _PoolScan:
    """Sequential cursor over a finite pool, persisting across epochs."""

    def __init__(self, pool: FinitePool):
        self.pool = pool
        self.cursor = 0

    def start_epoch(self, k: int) -> None:
        pass

    def next_chunk(self):
        if self.cursor >= self.pool.X.shape[0]:
            return None
        end = min(self.cursor + _SCAN_CHUNK, self.pool.X.shape[0])
        idx = np.arange(self.cursor, end)
        self.cursor = end
        return self.pool.X[idx], idx

    def rewind(self, count: int) -> None:
        self.cursor -= count


def _collect_epoch(scan, ball: HypothesisBall, n_k: int, oracle: _CountingOracle):
    """Scan until n_k queried instances are labeled.

    Returns (X, y, scanned, exhausted); scanning stops at the instance
    that fills the budget, so trailing chunk rows stay unread (and are
    handed back to finite pools).
    """
    xs, ys = [], []
    scanned = 0
    got = 0
    while got < n_k:
        chunk = scan.next_chunk()
        if chunk is None:
            if xs:
                X = np.vstack(xs)
                y = np.concatenate(ys)
            else:
                X = np.empty((0, ball.dim))
                y = np.empty(0)
            return X, y, scanned, True
        X_chunk, idx_chunk = chunk
        mask = query_mask(X_chunk, ball)
        positions = np.nonzero(mask)[0]
        if got + positions.size >= n_k:
            need = n_k - got
            cut = int(positions[need - 1])
            scanned += cut + 1
            unread = X_chunk.shape[0] - (cut + 1)
            if unread and isinstance(scan, _PoolScan):
                scan.rewind(unread)
            take = positions[:need]
        else:
            scanned += X_chunk.shape[0]
            take = positions
        if take.size:
            sel = X_chunk[take]
            xs.append(sel)
            ys.append(oracle(sel, idx_chunk[take]))
            got += take.size
    return np.vstack(xs), np.concatenate(ys), scanned, False


def _make_oracle(source, seed: int, k: int) -> _CountingOracle:
    if isinstance(source, DataModel):
        rng = substream(seed, "epoch", k, "labels")
        return _CountingOracle(lambda X, idx: label_batch(source, X, rng))
    if source.y is not None:
        pool_y = source.y
        return _CountingOracle(lambda X, idx: pool_y[idx])
    rng = substream(seed, "epoch", k, "labels")
    model = source.model
    return _CountingOracle(lambda X, idx: label_batch(model, X, rng))


def _w_star_of(source) -> np.ndarray | None:
    model = source if isinstance(source, DataModel) else source.model
    return None if model is None else model.w_star


def _dimension_of(source) -> int:
    if isinstance(source, DataModel):
        return source.dimension
    return source.X.shape[1]


def _mc_excess_risk(model: DataModel, w: np.ndarray, n: int, rng) -> float:
    """Monte Carlo excess binary risk using the known conditional directly."""
    X = sample_unlabeled(model, n, rng)
    e = eta_batch(model, X)
    flip = ((X @ w) <= 0.0).astype(float) - ((X @ model.w_star) <= 0.0).astype(float)
    return float(np.mean((2.0 * e - 1.0) * flip))


def _solve_epoch(update, X, y, w_k: UnitVector, r_k: float, R: float | None, seed: int, k: int):
    if isinstance(update, ZeroOneUpdate):
        if X.shape[1] == 2:
            return erm_zero_one_2d((X, y), w_k, r_k)
        rng = substream(seed, "epoch", k, "search")
        return erm_zero_one_search((X, y), w_k, r_k, restarts=update.restarts, rng=rng)
    if R is None:
        raise ValueError("convex update needs the optimum's norm R")
    w_tilde = erm_convex(update.loss, (X, y), w_k, r_k, R, params=update.params)
    norm = float(np.linalg.norm(w_tilde))
    if norm <= 1e-12:
        raise DegenerateSolution("convex update returned a near-zero vector")
    return normalize(w_tilde)


_warned_pairings: set[tuple[str, str]] = set()


def _check_pairing(source, update) -> None:
    model = source if isinstance(source, DataModel) else source.model
    if model is None or not isinstance(update, ConvexUpdate):
        return
    pairing = (update.loss.name, model.conditional)
    if pairing not in SUPPORTED_PAIRINGS and pairing not in _warned_pairings:
        _warned_pairings.add(pairing)
        logger.warning(
            "no linear surrogate-risk minimizer for loss %r with conditional %r; "
            "running anyway, convergence guarantees do not apply",
            update.loss.name,
            model.conditional,
        )


def run_active(
    source,
    update,
    schedule: ScheduleParams,
    m: int,
    seed: int,
    R: float | None = None,
    excess_risk_mc: int = 0,
    config_digest: str = "",
) -> RunRecord:
    """Run the full epoch loop and return its trace.

    ``source`` is a DataModel (inexhaustible i.i.d. stream) or a
    FinitePool; the pool raises StreamExhausted with the partial trace
    attached if it runs dry.  Labels are only ever drawn for instances
    the query rule selected (epoch 1 selects everything).
    """
    if m < 1:
        raise ValueError("need at least one epoch")
    _check_pairing(source, update)
    if R is None and isinstance(update, ConvexUpdate):
        model = source if isinstance(source, DataModel) else source.model
        if model is None:
            raise ValueError("convex update needs R when the source has no model")
        R = model.R

    d = _dimension_of(source)
    w_star = _w_star_of(source)
    w_star_bar = None if w_star is None else w_star / np.linalg.norm(w_star)
    scan = _ModelScan(source, seed) if isinstance(source, DataModel) else _PoolScan(source)
    w_k = normalize(substream(seed, "init").standard_normal(d))
    r_k = FIRST_RADIUS
    epochs: list[EpochRecord] = []

    def entry(k, n_k, labels, scanned):
        chord = None if w_star_bar is None else chord_length(w_k, w_star_bar)
        excess = None
        model = source if isinstance(source, DataModel) else source.model
        if excess_risk_mc > 0 and model is not None:
            excess = _mc_excess_risk(
                model, w_k.coords, excess_risk_mc, substream(seed, "epoch", k, "risk")
            )
        return EpochRecord(
            k=k, r_k=r_k, n_k=n_k, labels=labels, scanned=scanned,
            w_k=tuple(float(v) for v in w_k.coords),
            chord_error=chord, excess_risk_est=excess,
        )

    for k in range(1, m + 1):
        n_k = schedule.budget(k)
        ball = HypothesisBall(w_k, r_k)
        scan.start_epoch(k)
        oracle = _make_oracle(source, seed, k)
        X, y, scanned, exhausted = _collect_epoch(scan, ball, n_k, oracle)
        if oracle.count != y.shape[0]:
            raise AssertionError("label audit failed: oracle calls != labels kept")
        if exhausted:
            epochs.append(entry(k, n_k, int(y.shape[0]), scanned))
            partial = RunRecord(
                seed=seed,
                config_digest=config_digest,
                epochs=tuple(epochs),
                final_w=tuple(float(v) for v in w_k.coords),
                total_labels=sum(e.labels for e in epochs),
            )
            raise StreamExhausted(
                f"pool ran dry in epoch {k} after {y.shape[0]}/{n_k} labels",
                partial=partial,
            )
        epochs.append(entry(k, n_k, int(y.shape[0]), scanned))
        if y.shape[0] == 0:
            logger.warning("EmptyEpoch: no labeled examples in epoch %d, keeping center", k)
        else:
            w_k = _solve_epoch(update, X, y, w_k, r_k, R, seed, k)
        r_k = r_k / 2.0

    return RunRecord(
        seed=seed,
        config_digest=config_digest,
        epochs=tuple(epochs),
        final_w=tuple(float(v) for v in w_k.coords),
        total_labels=sum(e.labels for e in epochs),
    )


def run_passive(
    source,
    update,
    n_total: int,
    seed: int,
    R: float | None = None,
    config_digest: str = "",
) -> RunRecord:
    """Label the first n_total instances unconditionally and fit once.

    Equivalent to a single epoch at radius 2: the 0-1 update sweeps the
    whole circle, the convex update searches the ball of radius 2R around
    R·w_1.
    """
    if n_total < 1:
        raise ValueError("passive run needs n_total >= 1")
    schedule = ScheduleParams(mode="fixed", n=n_total)
    return run_active(
        source, update, schedule, m=1, seed=seed, R=R, config_digest=config_digest
    )
