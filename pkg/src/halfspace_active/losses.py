"""Convex surrogate losses and their binary-risk conversion calculus.

A loss specification bundles φ, φ', a Lipschitz constant valid on the
margin range the algorithm can actually reach, an optional curvature
bound, and the ψ-transform

    ψ(z) = inf_{αz <= 0} C_z(α) - inf_α C_z(α),
    C_z(α) = (1+z)/2 φ(α) + (1-z)/2 φ(-α),

which converts convex excess risk into a bound on binary excess risk.
Two losses ship with closed-form transforms (exponential, truncated
quadratic); the logistic loss is numeric-only.  The module also computes
the power-law constants sandwiching binary excess risk between powers of
the chord distance to the optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import LossSpecError, NotSmooth

__all__ = [
    "SurrogateLoss",
    "AssumptionIIIConstants",
    "exponential_loss",
    "truncated_quadratic_loss",
    "logistic_loss",
    "get_loss",
    "BUILTIN_LOSSES",
    "phi",
    "phi_prime",
    "psi",
    "psi_numeric",
    "is_classification_calibrated",
    "upper_bound_constants",
    "lower_bound_constants",
    "working_margin_bound",
    "SPHERE_ANGLE_CONSTANT",
]

# Exact angle-to-disagreement factor on the sphere: Pr{signs differ} = θ/π.
# Default for the otherwise-free constant in the log-concave angle
# log-concave lower bound.
SPHERE_ANGLE_CONSTANT = 1.0 / math.pi

# Exponential-loss arguments are never evaluated below this; iterates live in
# bounded balls, so anything smaller means the solver left the trusted region.
EXP_CLAMP = -50.0

# Half-width of the golden-section bracket for the numeric ψ infima.
PSI_SEARCH_HALF_WIDTH = 50.0

_CALIBRATION_MARGIN = 1e-9


def working_margin_bound(R: float, r1: float = 2.0) -> float:
    """Largest |y w·x| reachable with ||x|| <= 1 and w in the epoch-1 ball, plus slack."""
    return R * (1.0 + r1) + 1.0


@dataclass(frozen=True)
class SurrogateLoss:
    """A convex loss φ with the constants the analysis needs.

    ``lipschitz`` is valid on |z| <= margin_bound only (the exponential
    loss has no global constant).  ``smoothness`` bounds φ'' on that
    interval and doubles as the strong-smoothness constant of the risk
    when instances satisfy ||x|| <= 1; it is None for non-smooth losses.
    ``psi_lower_a``/``psi_lower_gamma`` give the polynomial minorant
    ψ(z) >= a z^γ on (0, 1].
    """

    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    phi_prime: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    margin_bound: float
    psi_lower_a: float
    psi_lower_gamma: float
    smoothness: float | None = None
    psi_closed: Callable[[float], float] | None = None


@dataclass(frozen=True)
class AssumptionIIIConstants:
    """Constants of the two-sided power bound on binary excess risk.

    ell_minus * chord^gamma_minus <= excess <= ell_plus * chord^gamma_plus.
    """

    ell_minus: float
    gamma_minus: float
    ell_plus: float
    gamma_plus: float

    def __post_init__(self):
        if self.ell_minus <= 0 or self.ell_plus <= 0:
            raise ValueError("ell_minus and ell_plus must be positive")
        if not (self.gamma_minus >= self.gamma_plus > 0):
            raise ValueError("need gamma_minus >= gamma_plus > 0")


def phi(loss: SurrogateLoss, z: float) -> float:
    """Evaluate the loss at margin z."""
    if not math.isfinite(z):
        raise ValueError(f"margin must be finite, got {z!r}")
    return float(loss.phi(z))


def phi_prime(loss: SurrogateLoss, z: float) -> float:
    """Evaluate the loss derivative at margin z."""
    if not math.isfinite(z):
        raise ValueError(f"margin must be finite, got {z!r}")
    return float(loss.phi_prime(z))


# ---------------------------------------------------------------------------
# ψ-transform
# ---------------------------------------------------------------------------

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo: float, hi: float, tol: float = 1e-9) -> float:
    """Minimum value of a convex f on [lo, hi] by golden-section search."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return min(f(0.5 * (a + b)), f(lo), f(hi))


def _conditional_risk_min(loss: SurrogateLoss, eta: float, lo: float, hi: float) -> float:
    def risk(alpha: float) -> float:
        return eta * float(loss.phi(alpha)) + (1.0 - eta) * float(loss.phi(-alpha))

    return _golden_min(risk, lo, hi)


def psi_numeric(loss: SurrogateLoss, z: float) -> float:
    """ψ(z) from the two infima directly, independent of any closed form.

    Both one-dimensional infima are solved by golden-section search on
    [-A, A] with A = 50; the sign-constrained one is restricted to
    α z <= 0.  The difference is floored at zero.
    """
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"psi is defined on [0, 1], got {z!r}")
    A = PSI_SEARCH_HALF_WIDTH
    eta = (1.0 + z) / 2.0
    unconstrained = _conditional_risk_min(loss, eta, -A, A)
    if z == 0.0:
        constrained = unconstrained
    else:
        constrained = _conditional_risk_min(loss, eta, -A, 0.0)
    return max(0.0, constrained - unconstrained)


def psi(loss: SurrogateLoss, z: float) -> float:
    """ψ(z) via the closed form when the loss has one, else numerically."""
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"psi is defined on [0, 1], got {z!r}")
    if loss.psi_closed is not None:
        return float(loss.psi_closed(z))
    return psi_numeric(loss, z)


def is_classification_calibrated(loss: SurrogateLoss, eta_grid) -> bool:
    """Check H^-(η) > H(η) on the grid, i.e. wrong-sign predictions cost extra.

    H minimizes the conditional risk over all of R; H^- over predictions
    whose sign disagrees with 2η - 1.  Calibration requires a strict gap
    at every η != 1/2.
    """
    A = PSI_SEARCH_HALF_WIDTH
    for eta in eta_grid:
        if not 0.0 < eta < 1.0:
            raise ValueError(f"eta grid values must lie in (0, 1), got {eta!r}")
        if eta == 0.5:
            raise ValueError("eta = 1/2 is excluded from calibration checks")
        h = _conditional_risk_min(loss, eta, -A, A)
        if eta > 0.5:
            h_minus = _conditional_risk_min(loss, eta, -A, 0.0)
        else:
            h_minus = _conditional_risk_min(loss, eta, 0.0, A)
        if not h_minus > h + _CALIBRATION_MARGIN:
            return False
    return True


# ---------------------------------------------------------------------------
# Power-law constants for the excess-risk sandwich
# ---------------------------------------------------------------------------


def upper_bound_constants(loss: SurrogateLoss, R: float) -> tuple[float, float]:
    """(ell_plus, gamma_plus) from risk smoothness and the ψ minorant.

    A curvature bound L_phi with ||x|| <= 1 makes the convex excess risk
    at R*w̄ at most (L_phi R²/2)·chord², and ψ(z) >= a z^γ inverts that
    into excess <= (L_phi R²/(2a))^{1/γ} · chord^{2/γ}.
    """
    if R <= 0:
        raise ValueError(f"R must be positive, got {R!r}")
    if loss.smoothness is None:
        raise NotSmooth(f"loss {loss.name!r} has no curvature bound")
    a, gamma = loss.psi_lower_a, loss.psi_lower_gamma
    ell_plus = (loss.smoothness * R * R / (2.0 * a)) ** (1.0 / gamma)
    return ell_plus, 2.0 / gamma


def lower_bound_constants(
    mu: float, kappa: float, c: float = SPHERE_ANGLE_CONSTANT
) -> tuple[float, float]:
    """(ell_minus, gamma_minus) under low noise with an angle lower bound.

    For marginals where c·θ(u, v) lower-bounds the disagreement
    probability, the noise exponent κ gives chord <= (μ/c)·excess^{1/κ},
    i.e. excess >= (c/μ)^κ · chord^κ.  The constant c defaults to the
    uniform-sphere exact value 1/π.
    """
    if mu <= 0 or c <= 0:
        raise ValueError("mu and c must be positive")
    if kappa < 1:
        raise ValueError(f"noise exponent must satisfy kappa >= 1, got {kappa!r}")
    return (c / mu) ** kappa, kappa


# ---------------------------------------------------------------------------
# Built-in losses
# ---------------------------------------------------------------------------


def _validate(loss: SurrogateLoss, n_grid: int = 101) -> SurrogateLoss:
    """Grid spot-checks of the declared properties; raises LossSpecError."""
    M = loss.margin_bound
    zs = np.linspace(-M, M, n_grid)
    vals = np.asarray(loss.phi(zs), dtype=float)
    if np.any(vals < -1e-12):
        raise LossSpecError(f"{loss.name}: phi is negative on the working interval")
    mids = np.asarray(loss.phi((zs[:-1] + zs[1:]) / 2.0), dtype=float)
    if np.any(mids > (vals[:-1] + vals[1:]) / 2.0 + 1e-9):
        raise LossSpecError(f"{loss.name}: phi fails midpoint convexity")
    steps = np.abs(np.diff(vals))
    if np.any(steps > loss.lipschitz * np.abs(np.diff(zs)) + 1e-9):
        raise LossSpecError(f"{loss.name}: phi violates its Lipschitz constant")
    if loss.psi_closed is not None:
        zz = np.linspace(0.01, 1.0, 100)
        closed = np.array([loss.psi_closed(z) for z in zz])
        if np.any(closed < loss.psi_lower_a * zz**loss.psi_lower_gamma - 1e-12):
            raise LossSpecError(f"{loss.name}: psi_closed drops below a·z^gamma")
    return loss


def exponential_loss(R: float = 1.0) -> SurrogateLoss:
    """φ(z) = e^{-z}, saturated below the overflow clamp; ψ(z) = 1 - sqrt(1 - z²)."""
    M = working_margin_bound(R)
    return _validate(
        SurrogateLoss(
            name="exponential",
            phi=lambda z: np.exp(-np.maximum(z, EXP_CLAMP)),
            phi_prime=lambda z: np.where(
                np.asarray(z) > EXP_CLAMP, -np.exp(-np.maximum(z, EXP_CLAMP)), 0.0
            ),
            lipschitz=math.exp(M),
            margin_bound=M,
            smoothness=math.exp(M),
            psi_closed=lambda z: 1.0 - math.sqrt(max(0.0, 1.0 - z * z)),
            psi_lower_a=0.5,
            psi_lower_gamma=2.0,
        )
    )


def truncated_quadratic_loss(R: float = 1.0) -> SurrogateLoss:
    """φ(z) = max(0, 1 - z)²; ψ(z) = z²; curvature bound 2."""
    M = working_margin_bound(R)
    return _validate(
        SurrogateLoss(
            name="truncated-quadratic",
            phi=lambda z: np.square(np.maximum(0.0, 1.0 - z)),
            phi_prime=lambda z: -2.0 * np.maximum(0.0, 1.0 - z),
            lipschitz=2.0 * (1.0 + M),
            margin_bound=M,
            smoothness=2.0,
            psi_closed=lambda z: z * z,
            psi_lower_a=1.0,
            psi_lower_gamma=2.0,
        )
    )


def logistic_loss(R: float = 1.0) -> SurrogateLoss:
    """φ(z) = log(1 + e^{-z}); no closed-form ψ, numeric path only.

    The minorant ψ(z) >= z²/2 follows from Pinsker's inequality.
    """
    M = working_margin_bound(R)
    return _validate(
        SurrogateLoss(
            name="logistic",
            phi=lambda z: np.logaddexp(0.0, -np.asarray(z, dtype=float)),
            phi_prime=lambda z: -np.exp(-np.logaddexp(0.0, np.asarray(z, dtype=float))),
            lipschitz=1.0,
            margin_bound=M,
            smoothness=0.25,
            psi_closed=None,
            psi_lower_a=0.5,
            psi_lower_gamma=2.0,
        )
    )


BUILTIN_LOSSES = {
    "exponential": exponential_loss,
    "truncated-quadratic": truncated_quadratic_loss,
    "logistic": logistic_loss,
}


def get_loss(name: str, R: float = 1.0) -> SurrogateLoss:
    """Look up a built-in loss, sizing its constants for classifiers of norm R."""
    try:
        factory = BUILTIN_LOSSES[name]
    except KeyError:
        raise LossSpecError(
            f"unknown loss {name!r}; available: {sorted(BUILTIN_LOSSES)}"
        ) from None
    return factory(R=R)
