"""Closed-form constants for the weighted Langevin samplers.

Everything here is plain arithmetic on ``(d, beta, alpha, L, C_V)`` and the two
stationary moments ``ev = E[V(X)]`` and ``egrad2 = E[|grad V(X)|^2]``.  Gamma
functions are always evaluated through ``scipy.special.gammaln``.

Functions raise :class:`InapplicableError` when the hypothesis behind a
formula fails; :func:`theory_report` instead records such quantities as absent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .targets import TargetDensity

EXACT = "exact"
UPPER_BOUND = "upper-bound"

# Named hypotheses.  Every precondition checked below maps to one of these keys.
ASSUMPTIONS = {
    "normalizable": "beta > d/2 so that V^(-beta) is integrable",
    "finite-moments": "beta > d/2 + 1 so that E[V] and E[|grad V|^2] are finite",
    "positive-delta": "beta - 1 - C_V d/4 > 0 (contraction margin delta > 0)",
    "first-order-step": "h below the first-order step-size bound",
    "zeroth-order-step": "h below the zeroth-order step-size bound",
    "cv-below-beta-plus-one": "0 < C_V < beta + 1 for the strongly convex weighted Poincare constant",
    "beta-above-d": "beta > d for the strongly convex chi-square decay",
    "small-beta-gamma": "0 < gamma <= beta/(d+2)",
    "student-small-beta": "(d+2)/2 < beta <= d for the Student C_V(gamma)",
    "bridge-condition": "beta > L^2 d/(2 alpha^2) + 1",
    "alpha-below-L": "alpha <= L",
    "r-range": "0 < r < beta - d/2 - 1",
    "student-family": "target is an isotropic or anisotropic Student potential",
    "positive-accuracy": "eps > 0",
}


class InapplicableError(ValueError):
    """A formula was requested outside the hypotheses it is proved under.

    Attributes:
        value: The offending quantity (e.g. the non-positive delta), if any.
        assumption: Key into :data:`ASSUMPTIONS`.
    """

    def __init__(self, message: str, value: Optional[float] = None, assumption: Optional[str] = None):
        super().__init__(message)
        self.value = value
        self.assumption = assumption


class MomentsInfiniteError(InapplicableError):
    """``E[V]`` diverges because ``beta <= d/2 + 1``."""


# ---------------------------------------------------------------------------
# first-order chain


def delta(beta: float, d: int, cv: float) -> float:
    """Contraction margin ``(beta - 1 - C_V d/4) / (C_V d/4)``.

    Raises:
        InapplicableError: the margin is not positive.
    """
    if not cv > 0 or d < 1:
        raise ValueError("cv must be positive and d >= 1")
    quarter = cv * d / 4.0
    value = (beta - 1.0 - quarter) / quarter
    if not value > 0:
        raise InapplicableError(f"contraction margin delta={value} is not positive", value, "positive-delta")
    return value


def _need_positive_delta(delta_: float) -> None:
    if not delta_ > 0:
        raise InapplicableError(f"delta must be positive, got {delta_}", delta_, "positive-delta")


def first_order_step_bound(alpha: float, lipschitz: float, beta: float, delta_: float) -> float:
    """``min(1/(4(beta-1)L), 2 delta/(3(1+delta) alpha (beta-1)))``; admissible ``h`` lie strictly below."""
    _need_positive_delta(delta_)
    return min(1.0 / (4.0 * (beta - 1.0) * lipschitz), 2.0 * delta_ / (3.0 * (1.0 + delta_) * alpha * (beta - 1.0)))


@dataclass(frozen=True)
class ContractionParams:
    """One-step recursion ``W_{k+1} <= (1 - A) W_k + ...`` for the first-order chain.

    ``B`` and ``C`` are in length units; ``h`` is the step size.
    """

    A: float
    B: float
    C: float
    h: float

    def __post_init__(self) -> None:
        if not 0 < self.A < 1 or self.B < 0 or self.C < 0:
            raise ValueError(f"invalid contraction parameters A={self.A}, B={self.B}, C={self.C}")


@dataclass(frozen=True)
class ZeroOrderContractionParams(ContractionParams):
    """As :class:`ContractionParams`, plus the smoothing radius and batch size."""

    sigma: float = 0.0
    m: float = 1


def _check_step(h: float, bound: float, key: str) -> None:
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    if not h < bound:
        raise InapplicableError(f"h={h} is not below the step-size bound {bound}", h, key)


def contraction_params(
    h: float,
    alpha: float,
    lipschitz: float,
    beta: float,
    delta_: float,
    d: int,
    ev: float,
    egrad2: float,
) -> ContractionParams:
    """``(A, B, C)`` of the first-order W2 recursion at step ``h``.

    Raises:
        InapplicableError: ``h`` is not below :func:`first_order_step_bound`.
    """
    _check_step(h, first_order_step_bound(alpha, lipschitz, beta, delta_), "first-order-step")
    b1 = beta - 1.0
    a = alpha * delta_ * b1 * h / (3.0 * (1.0 + delta_))
    b = (
        4.0 * math.sqrt(alpha * b1 * (3.0 + delta_) / ((1.0 + delta_) * delta_))
        * h * (math.sqrt(d) * math.sqrt(ev) + b1 * math.sqrt(h) * math.sqrt(egrad2))
    )
    c = 3.0 * math.sqrt(d) * b1 * lipschitz * h**1.5 * math.sqrt(ev) + 2.0 * b1**2 * lipschitz * h**2 * math.sqrt(egrad2)
    return ContractionParams(a, b, c, h)


def asymptotic_bias(params: ContractionParams) -> float:
    """Limit of the W2 bound as ``k -> infinity``: ``C/A + B/sqrt(A(2-A))``."""
    a = params.A
    return params.C / a + params.B / math.sqrt(a * (2.0 - a))


def w2_bound(k: int, w2_init: float, params: ContractionParams) -> float:
    """``(1-A)^k W0 + C/A + B/sqrt(A(2-A))``; accepts either parameter type."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return (1.0 - params.A) ** k * w2_init + asymptotic_bias(params)


def step_size_for_accuracy(
    eps: float,
    d: int,
    beta: float,
    alpha: float,
    lipschitz: float,
    delta_: float,
    ev: float,
    egrad2: float,
) -> float:
    """Step size ``h*`` making the first-order asymptotic bias below ``eps/2``.

    The smaller of a ``d E[V]``-driven and an ``E[|grad V|^2]``-driven branch,
    clipped to :func:`first_order_step_bound`.
    """
    _need_positive_delta(delta_)
    if not eps > 0:
        raise InapplicableError("eps must be positive", eps, "positive-accuracy")
    kappa = 1.0 + lipschitz / alpha
    first = delta_**2 * eps**2 / (ev * 81.0 * d * (delta_ + 3.0) ** 2 * kappa**2)
    second = delta_ * eps / (math.sqrt(egrad2) * 81.0 * (beta - 1.0) * (delta_ + 3.0) * kappa)
    return min(first, second, first_order_step_bound(alpha, lipschitz, beta, delta_))


def log_accuracy_factor(w2_init: float, eps: float) -> float:
    """``log(2 W0 / eps)``, floored at zero."""
    return max(math.log(2.0 * w2_init / eps), 0.0)


def iteration_complexity(
    eps: float,
    w2_init: float,
    d: int,
    beta: float,
    alpha: float,
    lipschitz: float,
    delta_: float,
    ev: float,
    egrad2: float,
) -> int:
    """First-order iterations guaranteeing ``W2 < eps``; zero when ``W0 <= eps/2``."""
    h = step_size_for_accuracy(eps, d, beta, alpha, lipschitz, delta_, ev, egrad2)
    log_term = log_accuracy_factor(w2_init, eps)
    if log_term <= 0:
        return 0
    return math.ceil(3.0 * (1.0 + delta_) / (alpha * (beta - 1.0) * delta_ * h) * log_term)


def iteration_complexity_upper(
    eps: float,
    w2_init: float,
    d: int,
    beta: float,
    alpha: float,
    lipschitz: float,
    delta_: float,
    ev: float,
    egrad2: float,
) -> float:
    """The simplified ``273 * max{...} * log(2 W0/eps)`` bound on the iteration count."""
    _need_positive_delta(delta_)
    kappa = 1.0 + lipschitz / alpha
    first = (delta_ + 3.0) ** 3 * kappa**2 * d * ev / (alpha * delta_**3 * (beta - 1.0) * eps**2)
    second = (delta_ + 3.0) ** 2 * kappa * math.sqrt(egrad2) / (alpha * delta_**2 * eps)
    return 273.0 * max(first, second) * log_accuracy_factor(w2_init, eps)


# ---------------------------------------------------------------------------
# zeroth-order chain


def zeroth_order_step_bound(alpha: float, lipschitz: float, beta: float, delta_: float, d: int, m: float) -> float:
    """Step-size bound for the zeroth-order chain with batch size ``m`` (``m = inf`` allowed)."""
    _need_positive_delta(delta_)
    if not m >= 1:
        raise ValueError(f"batch size must be >= 1, got {m}")
    b1 = beta - 1.0
    terms = [2.0 * delta_ / (3.0 * (1.0 + delta_) * alpha * b1), 1.0 / (4.0 * b1 * lipschitz)]
    if math.isfinite(m):
        terms.append(alpha * m * delta_ / (24.0 * (1.0 + delta_) * b1 * (d + 5.0) * lipschitz**2))
    return min(terms)


def zeroth_order_params(
    h: float,
    sigma: float,
    m: float,
    alpha: float,
    lipschitz: float,
    beta: float,
    delta_: float,
    d: int,
    ev: float,
    egrad2: float,
) -> ZeroOrderContractionParams:
    """``(A', B', C')`` of the zeroth-order W2 recursion.

    ``m = inf`` together with ``sigma = 0`` is accepted and drops the estimator
    terms.
    """
    _check_step(h, zeroth_order_step_bound(alpha, lipschitz, beta, delta_, d, m), "zeroth-order-step")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    b1 = beta - 1.0
    inv_sqrt_m = 0.0 if math.isinf(m) else 1.0 / math.sqrt(m)
    a = alpha * delta_ * b1 * h / (6.0 * (1.0 + delta_))
    mix = math.sqrt((1.0 + delta_) * delta_)
    b = (
        (4.0 * math.sqrt(alpha) * b1**1.5 * math.sqrt(3.0 + delta_) * h**1.5 / mix
         + 2.0 * b1 * math.sqrt(d + 5.0) * h * inv_sqrt_m) * math.sqrt(egrad2)
        + 4.0 * math.sqrt(alpha * b1 * d * (3.0 + delta_)) * h / mix * math.sqrt(ev)
        + sigma * lipschitz * b1 * (d + 3.0) ** 1.5 * h * inv_sqrt_m
    )
    c = (
        3.0 * math.sqrt(d) * b1 * lipschitz * h**1.5 * math.sqrt(ev)
        + 2.0 * b1**2 * lipschitz * h**2 * math.sqrt(egrad2)
        + sigma * lipschitz * b1 * math.sqrt(d) * h
    )
    return ZeroOrderContractionParams(a, b, c, h, sigma=sigma, m=m)


def recommended_sigma(eps: float, delta_: float, d: int) -> float:
    """Order-level smoothing radius ``eps * delta / sqrt(d)``."""
    if not eps > 0 or not delta_ > 0:
        raise ValueError("eps and delta must be positive")
    return eps * delta_ / math.sqrt(d)


def sigma_for_accuracy(eps: float, delta_: float, d: int, alpha: float, lipschitz: float) -> float:
    """Smoothing radius whose small-``h`` bias contribution equals ``eps/4``.

    As ``h -> 0`` the zeroth-order bias tends to ``6(1+delta) L sigma sqrt(d)/(alpha delta)``;
    this returns the ``sigma`` setting that limit to ``eps/4``.  It is
    :func:`recommended_sigma` times ``alpha / (24 (1+delta) L)``.
    """
    return recommended_sigma(eps, delta_, d) * alpha / (24.0 * (1.0 + delta_) * lipschitz)


def zeroth_order_step_for_accuracy(
    eps: float,
    d: int,
    beta: float,
    alpha: float,
    lipschitz: float,
    delta_: float,
    ev: float,
    egrad2: float,
    m: float,
    sigma: Optional[float] = None,
) -> float:
    """Largest ``h`` (up to root-finding tolerance) with zeroth-order bias ``<= eps/2``.

    The bias is increasing in ``h``, so a bracketing root finder is used.
    ``sigma`` defaults to :func:`sigma_for_accuracy`.

    Raises:
        InapplicableError: ``sigma`` is so large that no ``h`` reaches ``eps/2``.
    """
    if not eps > 0:
        raise InapplicableError("eps must be positive", eps, "positive-accuracy")
    if sigma is None:
        sigma = sigma_for_accuracy(eps, delta_, d, alpha, lipschitz)
    cap = zeroth_order_step_bound(alpha, lipschitz, beta, delta_, d, m) * (1.0 - 1e-12)

    def excess(h: float) -> float:
        return asymptotic_bias(zeroth_order_params(h, sigma, m, alpha, lipschitz, beta, delta_, d, ev, egrad2)) - eps / 2

    if excess(cap) <= 0:
        return cap
    floor = 6.0 * (1.0 + delta_) * lipschitz * sigma * math.sqrt(d) / (alpha * delta_)
    if floor >= eps / 2:
        raise InapplicableError(f"smoothing bias floor {floor} is not below eps/2", floor, "positive-accuracy")
    lo = cap
    while excess(lo) > 0:
        lo /= 16.0
    return brentq(excess, lo, cap, xtol=lo * 1e-10, rtol=1e-13)


def zeroth_order_iteration_complexity(
    eps: float,
    w2_init: float,
    d: int,
    beta: float,
    alpha: float,
    lipschitz: float,
    delta_: float,
    ev: float,
    egrad2: float,
    m: float,
    sigma: Optional[float] = None,
) -> int:
    """``ceil(log(2 W0/eps) / A')`` at :func:`zeroth_order_step_for_accuracy`."""
    log_term = log_accuracy_factor(w2_init, eps)
    if log_term <= 0:
        return 0
    h = zeroth_order_step_for_accuracy(eps, d, beta, alpha, lipschitz, delta_, ev, egrad2, m, sigma)
    a = alpha * delta_ * (beta - 1.0) * h / (6.0 * (1.0 + delta_))
    return math.ceil(log_term / a)


def zeroth_order_complexity_order(
    eps: float,
    w2_init: float,
    d: int,
    delta_: float,
    ev: float,
    egrad2: float,
    m: float,
) -> float:
    """Order-level zeroth-order iteration count with all hidden constants set to one.

    ``max{E[V]/(eps^2 delta^3), sqrt(E|grad V|^2)/(eps delta^2), d E|grad V|^2/(eps^2 delta^2 m)} * log(2 W0/eps)``.
    """
    _need_positive_delta(delta_)
    terms = [ev / (eps**2 * delta_**3), math.sqrt(egrad2) / (eps * delta_**2)]
    if math.isfinite(m):
        terms.append(d * egrad2 / (eps**2 * delta_**2 * m))
    return max(terms) * log_accuracy_factor(w2_init, eps)


# ---------------------------------------------------------------------------
# weighted Poincare constants and chi-square rates


def wpi_constant_strongly_convex(alpha: float, beta: float, cv: float) -> float:
    """``1 / (alpha (sqrt(beta+1) - sqrt(C_V))^2)``.

    Raises:
        InapplicableError: ``C_V`` outside ``(0, beta+1)``.
    """
    if not 0 < cv < beta + 1:
        raise InapplicableError(f"C_V={cv} must lie in (0, beta+1={beta + 1})", cv, "cv-below-beta-plus-one")
    return 1.0 / (alpha * (math.sqrt(beta + 1.0) - math.sqrt(cv)) ** 2)


def chi2_rate_strongly_convex(alpha: float, beta: float, cv: float) -> float:
    """Exponential chi-square decay rate ``2 alpha (sqrt(beta+1) - sqrt(C_V))^2``.

    Returns ``0`` at the boundary ``C_V = beta + 1``.
    """
    if not 0 < cv <= beta + 1:
        raise InapplicableError(f"C_V={cv} must lie in (0, beta+1]", cv, "cv-below-beta-plus-one")
    return 2.0 * alpha * (math.sqrt(beta + 1.0) - math.sqrt(cv)) ** 2


def wpi_constant_small_beta(beta: float, gamma: float, cv_gamma: float, d: int) -> float:
    """``C_V(gamma) / (beta/gamma - 1)``.

    Raises:
        InapplicableError: ``gamma`` outside ``(0, beta/(d+2)]``.
    """
    if not 0 < gamma <= beta / (d + 2.0) * (1.0 + 1e-15):
        raise InapplicableError(f"gamma={gamma} must lie in (0, beta/(d+2)]", gamma, "small-beta-gamma")
    if not cv_gamma > 0:
        raise ValueError("cv_gamma must be positive")
    return cv_gamma / (beta / gamma - 1.0)


def chi2_rate_small_beta(beta: float, gamma: float, cv_gamma: float, d: int) -> float:
    """Reciprocal of :func:`wpi_constant_small_beta`."""
    return 1.0 / wpi_constant_small_beta(beta, gamma, cv_gamma, d)


def student_cv_gamma(d: int, beta: float) -> float:
    """``C_V(gamma) = (d+2)^2 / (2 beta (2 beta - d - 2))`` for ``V = 1 + |x|^2`` at ``gamma = beta/(d+2)``.

    Established for ``(d+2)/2 < beta <= d``, i.e. ``nu = 2 beta - d`` in ``(2, d]``.
    """
    if not (d + 2) / 2.0 < beta <= d:
        raise InapplicableError(f"need (d+2)/2 < beta <= d, got beta={beta}, d={d}", beta, "student-small-beta")
    return (d + 2.0) ** 2 / (2.0 * beta * (2.0 * beta - d - 2.0))


def wpi_constant_student_small_beta(d: int, beta: float) -> float:
    """Weighted Poincare constant of the isotropic Student law via ``gamma = beta/(d+2)``.

    Simplifies to ``(d+2)^2 / ((d+1)(d+nu)(nu-2))`` with ``nu = 2 beta - d``.
    """
    gamma = beta / (d + 2.0)
    return wpi_constant_small_beta(beta, gamma, student_cv_gamma(d, beta), d)


@dataclass(frozen=True)
class BridgeResult:
    """Small-beta hypothesis derived from strong convexity.

    ``gamma`` and ``cv_gamma`` are ``None`` when the sufficient condition fails.
    """

    gamma: Optional[float]
    cv_gamma: Optional[float]
    polynomial_predicate: bool

    @property
    def available(self) -> bool:
        return self.gamma is not None


def bridge_small_beta(alpha: float, lipschitz: float, beta: float, d: int, cv: Optional[float] = None) -> BridgeResult:
    """Derive ``(gamma, C_V(gamma))`` from ``(alpha, L)`` when ``beta > L^2 d/(2 alpha^2) + 1``.

    Also evaluates the polynomial-growth predicate
    ``beta <= d and C_V < (d+2)/(d+2-beta)`` when ``cv`` is given.
    """
    predicate = False
    if cv is not None:
        predicate = bool(beta <= d and cv < (d + 2.0) / (d + 2.0 - beta))
    if not beta > lipschitz**2 * d / (2.0 * alpha**2) + 1.0:
        return BridgeResult(None, None, predicate)
    ratio = alpha**2 / (2.0 * lipschitz**2)
    denom = beta - (1.0 - ratio) * (d + 2.0)
    if not denom > 0:
        return BridgeResult(None, None, predicate)
    cv_gamma = alpha * (d + 2.0) ** 2 / (2.0 * lipschitz**2 * beta) / denom
    return BridgeResult(beta / (d + 2.0), cv_gamma, predicate)


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentInfo:
    """``E[V]`` and ``E[|grad V|^2]`` with provenance ``exact`` or ``upper-bound``."""

    ev: float
    egrad2: float
    ev_provenance: str = EXACT
    egrad2_provenance: str = EXACT


def analytic_moments_student(d: int, beta: float, sigma=None) -> MomentInfo:
    """Closed-form stationary moments for the Student potentials.

    ``E[V] = (beta-1)/(beta-1-d/2)`` for every ``Sigma``.  Since
    ``Laplacian V = 2 tr(Sigma)`` is constant, integration by parts gives the
    exact value ``E[|grad V|^2] = 2 tr(Sigma)/(beta-1-d/2)`` (``2d/(...)`` for
    ``Sigma = I``).

    Raises:
        MomentsInfiniteError: ``beta <= d/2 + 1``.
    """
    gap = beta - 1.0 - d / 2.0
    if not gap > 0:
        raise MomentsInfiniteError(f"E[V] is infinite for beta={beta} <= d/2+1={d / 2 + 1}", beta, "finite-moments")
    trace = float(d) if sigma is None else float(np.trace(np.asarray(sigma, dtype=float)))
    return MomentInfo((beta - 1.0) / gap, 2.0 * trace / gap)


def second_moment_student(d: int, beta: float, sigma=None) -> float:
    """``E|X|^2 = tr(Sigma^{-1}) / (2 beta - d - 2)``."""
    if not beta > d / 2.0 + 1.0:
        raise MomentsInfiniteError("E|X|^2 is infinite", beta, "finite-moments")
    tr_inv = float(d) if sigma is None else float(np.trace(np.linalg.inv(np.asarray(sigma, dtype=float))))
    return tr_inv / (2.0 * beta - d - 2.0)


def default_w2_init(target: TargetDensity, init_second_moment: float = 0.0) -> float:
    """Crude bound ``sqrt(E|x0|^2) + sqrt(E_pi|X|^2)`` on the initial W2 distance."""
    sigma = None if target.kind != "anisotropic-student" else target.sigma
    return math.sqrt(init_second_moment) + math.sqrt(second_moment_student(target.d, target.beta, sigma))


def moment_bound_lyapunov(
    lipschitz: float, eps_lyap: float, radius: float, max_v_on_ball: float, beta: float, d: int
) -> tuple[float, float]:
    """Moment bounds for potentials that are quadratic-like outside the ball of ``radius``.

    The ball enters only through ``max_v_on_ball``; ``radius`` is kept for the record.
    """
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    ev = (d * lipschitz + eps_lyap) * max_v_on_ball
    return ev, d * lipschitz * ev / (beta - 1.0)


def gamma_ratio_and_bound(beta: float, d: int, r: float) -> tuple[float, float]:
    """Exact ``Gamma(beta)Gamma(r)/(Gamma(d/2+r)Gamma(beta-d/2))`` and its closed-form bound.

    The bound is ``((beta-d/2)/r)^(d/2)``, times ``sqrt((1+r)/r)`` for odd ``d``.
    For ``d = 2`` the two coincide exactly, so compare with a round-off allowance.
    """
    _check_r(beta, d, r)
    half = d / 2.0
    ratio = math.exp(gammaln(beta) + gammaln(r) - gammaln(half + r) - gammaln(beta - half))
    bound = ((beta - half) / r) ** half
    if d % 2 == 1:
        bound *= math.sqrt((1.0 + r) / r)
    return ratio, bound


def _check_r(beta: float, d: int, r: float) -> None:
    if not 0 < r < beta - d / 2.0 - 1.0:
        raise InapplicableError(f"r={r} must lie in (0, {beta - d / 2 - 1})", r, "r-range")


def moment_bound_general(alpha: float, lipschitz: float, v0: float, beta: float, d: int, r: float) -> tuple[float, float]:
    """Moment bounds for a strongly convex, gradient-Lipschitz ``V`` (log-space evaluation)."""
    _check_r(beta, d, r)
    if not alpha <= lipschitz:
        raise InapplicableError("need alpha <= L", alpha, "alpha-below-L")
    half = d / 2.0
    power = 1.0 / (beta - half - r)
    log_ratio = gammaln(beta) + gammaln(r) - gammaln(half + r) - gammaln(beta - half)
    log_ev = half * power * math.log(lipschitz / alpha) + math.log(v0) + power * log_ratio
    ev = math.exp(log_ev)
    return ev, d * lipschitz / (beta - 1.0) * ev


def best_moment_bound_general(
    alpha: float, lipschitz: float, v0: float, beta: float, d: int, n_grid: int = 256
) -> tuple[float, float, float]:
    """Smallest :func:`moment_bound_general` over an interior grid of ``r``; returns ``(r, ev, egrad2)``.

    A grid search only; no optimality is claimed.
    """
    upper = beta - d / 2.0 - 1.0
    if not upper > 0:
        raise MomentsInfiniteError("no admissible r", beta, "finite-moments")
    grid = upper * (np.arange(1, n_grid + 1) / (n_grid + 1))
    best = min(((moment_bound_general(alpha, lipschitz, v0, beta, d, r)[0], r) for r in grid))
    ev, r = best
    return float(r), ev, d * lipschitz / (beta - 1.0) * ev


# ---------------------------------------------------------------------------
# dissipativity, short-time moments, radial condition


@dataclass(frozen=True)
class Dissipativity:
    value: float
    contractive: bool


def dissipativity_constant_student(beta: float, d: int) -> Dissipativity:
    """Uniform-dissipativity constant ``2(beta - 1 - d/2)`` of the Student weighted diffusion."""
    value = 2.0 * (beta - 1.0 - d / 2.0)
    return Dissipativity(value, value > 0)


def dissipativity_condition(alpha: float, beta: float, d: int, cv: float, kappa: float) -> bool:
    """``alpha (beta - 1 - d C_V/4) <= kappa``."""
    return alpha * (beta - 1.0 - d * cv / 4.0) <= kappa


def moment_difference_bound(t: float, beta: float, lipschitz: float, d: int, ev0: float, egrad2_0: float) -> float:
    """Upper bound on ``E|X_t - X_0|^2`` for the weighted diffusion."""
    if t < 0:
        raise ValueError("t must be non-negative")
    b1 = beta - 1.0
    growth = 4.0 * b1**2 * lipschitz**2 * t**2 + d * b1 * lipschitz**2 * t**2 + 2.0 * d * lipschitz * t
    return 4.0 * (b1**2 * t**2 * egrad2_0 + t * d * ev0) * math.exp(growth)


def moment_difference_simplified(t: float, beta: float, d: int, ev0: float, egrad2_0: float) -> float:
    """``12 d t E[V] + 12 (beta-1)^2 t^2 E|grad V|^2``.

    Dominates :func:`moment_difference_bound` only when its exponential factor is
    at most ``e``, which for ``t < 1/(4(beta-1)L)`` needs ``beta - 1 >= 3d/4``.
    """
    return 12.0 * d * t * ev0 + 12.0 * (beta - 1.0) ** 2 * t**2 * egrad2_0


@dataclass(frozen=True)
class RadialConditionReport:
    holds: bool
    violations: tuple
    n_points: int


def check_radial_condition(
    phi: Callable[[np.ndarray], np.ndarray],
    phi_prime: Callable[[np.ndarray], np.ndarray],
    phi_double_prime: Callable[[np.ndarray], np.ndarray],
    cv: float,
    r_grid: Iterable[float],
) -> RadialConditionReport:
    """Grid check of ``phi'(r) <= min(phi''(r) r, C_V phi(r)/r)`` for a radial profile ``V = phi(|x|)``.

    A relative slack of ``1e-12`` absorbs round-off in equality cases.
    """
    r = np.asarray(list(r_grid), dtype=float)
    if r.size == 0 or np.any(r <= 0):
        raise ValueError("r_grid must be a non-empty set of positive radii")
    d1 = np.asarray(phi_prime(r), dtype=float)
    rhs = np.minimum(np.asarray(phi_double_prime(r), dtype=float) * r, cv * np.asarray(phi(r), dtype=float) / r)
    slack = 1e-12 * np.maximum(np.abs(rhs), 1.0)
    bad = d1 > rhs + slack
    return RadialConditionReport(not bool(bad.any()), tuple(float(x) for x in r[bad]), int(r.size))


# ---------------------------------------------------------------------------
# aggregated report


@dataclass(frozen=True)
class Quantity:
    """A derived value with the hypotheses it rests on.

    ``value`` is ``None`` when a hypothesis failed; ``reason`` then says which.
    """

    name: str
    value: Optional[float]
    assumptions: tuple
    provenance: str = EXACT
    reason: str = ""

    @property
    def valid(self) -> bool:
        return self.value is not None


@dataclass
class TheoryReport:
    """All constants for one target and accuracy request, keyed by name."""

    scenario: str
    quantities: dict = field(default_factory=dict)

    def add(self, q: Quantity) -> None:
        self.quantities[q.name] = q

    def __getitem__(self, name: str) -> Quantity:
        return self.quantities[name]

    def value(self, name: str) -> Optional[float]:
        return self.quantities[name].value

    def rows(self) -> list[dict]:
        """Long format: one row per quantity."""
        return [
            {
                "scenario": self.scenario,
                "quantity": q.name,
                "value": "" if q.value is None else repr(float(q.value)),
                "valid": int(q.valid),
                "provenance": q.provenance,
                "assumptions": ";".join(q.assumptions),
                "reason": q.reason,
            }
            for q in self.quantities.values()
        ]


def _attempt(report: TheoryReport, name: str, assumptions: Sequence[str], fn, provenance: str = EXACT):
    try:
        value = fn()
    except InapplicableError as exc:
        report.add(Quantity(name, None, tuple(assumptions), provenance, str(exc)))
        return None
    report.add(Quantity(name, None if value is None else float(value), tuple(assumptions), provenance))
    return value


def theory_report(
    target: TargetDensity,
    eps: float,
    *,
    w2_init: Optional[float] = None,
    m: float = 1,
    sigma: Optional[float] = None,
    h: Optional[float] = None,
    moments: Optional[MomentInfo] = None,
    scenario: str = "",
) -> TheoryReport:
    """Evaluate every applicable constant for ``target`` at accuracy ``eps``.

    Args:
        target: Target density.
        eps: W2 accuracy.
        w2_init: Initial W2 distance; defaults to :func:`default_w2_init` from the origin.
        m: Zeroth-order batch size.
        sigma: Zeroth-order smoothing radius; defaults to :func:`sigma_for_accuracy`.
        h: Step size at which to report the contraction parameters; defaults to ``h*``.
        moments: Stationary moments; computed analytically for Student targets.
        scenario: Label written to every CSV row.
    """
    d, beta, alpha, lip, cv = target.d, target.beta, target.alpha, target.lipschitz, target.cv
    rep = TheoryReport(scenario or f"{target.kind}:d={d}:beta={beta}")
    dl = _attempt(rep, "delta", ["positive-delta"], lambda: delta(beta, d, cv))

    if moments is None and target.family.is_student:
        sig = target.sigma if target.kind == "anisotropic-student" else None
        try:
            moments = analytic_moments_student(d, beta, sig)
        except MomentsInfiniteError:
            moments = None
    mom_assume = ["student-family", "finite-moments"]
    rep.add(Quantity("ev", None if moments is None else moments.ev, tuple(mom_assume),
                     EXACT if moments is None else moments.ev_provenance,
                     "" if moments is not None else "moments unavailable"))
    rep.add(Quantity("egrad2", None if moments is None else moments.egrad2, tuple(mom_assume),
                     EXACT if moments is None else moments.egrad2_provenance,
                     "" if moments is not None else "moments unavailable"))

    if w2_init is None and target.family.is_student and target.finite_mean_potential:
        w2_init = default_w2_init(target)
    rep.add(Quantity("w2_init", w2_init, ("finite-moments",), UPPER_BOUND,
                     "" if w2_init is not None else "no initial distance available"))

    def need(*values):
        if any(v is None for v in values):
            raise InapplicableError("an upstream quantity is absent")

    def with_delta(fn):
        def wrapped():
            need(dl)
            return fn()
        return wrapped

    def with_all(fn):
        def wrapped():
            need(dl, moments, w2_init)
            return fn()
        return wrapped

    base = ["positive-delta"]
    full = base + ["finite-moments"]
    _attempt(rep, "h_max_first", base, with_delta(lambda: first_order_step_bound(alpha, lip, beta, dl)))
    _attempt(rep, "h_max_zeroth", base, with_delta(lambda: zeroth_order_step_bound(alpha, lip, beta, dl, d, m)))
    h_star = _attempt(rep, "h_star_first", full, with_all(
        lambda: step_size_for_accuracy(eps, d, beta, alpha, lip, dl, moments.ev, moments.egrad2)))
    _attempt(rep, "K_first", full, with_all(
        lambda: iteration_complexity(eps, w2_init, d, beta, alpha, lip, dl, moments.ev, moments.egrad2)))
    _attempt(rep, "K_first_upper", full, with_all(
        lambda: iteration_complexity_upper(eps, w2_init, d, beta, alpha, lip, dl, moments.ev, moments.egrad2)),
        UPPER_BOUND)
    h_eval = h if h is not None else h_star
    params = {}

    def first_params():
        need(dl, moments, h_eval)
        params["first"] = contraction_params(h_eval, alpha, lip, beta, dl, d, moments.ev, moments.egrad2)
        return params["first"].A

    step_assume = full + ["first-order-step"]
    if _attempt(rep, "A", step_assume, first_params) is not None:
        p = params["first"]
        rep.add(Quantity("B", p.B, tuple(step_assume)))
        rep.add(Quantity("C", p.C, tuple(step_assume)))
        rep.add(Quantity("bias_first", asymptotic_bias(p), tuple(step_assume), UPPER_BOUND))
    else:
        for name in ("B", "C", "bias_first"):
            rep.add(Quantity(name, None, tuple(step_assume), reason=rep["A"].reason))

    sig = _attempt(rep, "sigma", base, with_delta(
        lambda: sigma if sigma is not None else sigma_for_accuracy(eps, dl, d, alpha, lip)))
    h0 = _attempt(rep, "h_star_zeroth", full, with_all(
        lambda: zeroth_order_step_for_accuracy(eps, d, beta, alpha, lip, dl, moments.ev, moments.egrad2, m, sig)))
    k0 = _attempt(rep, "K_zeroth", full, with_all(
        lambda: zeroth_order_iteration_complexity(eps, w2_init, d, beta, alpha, lip, dl, moments.ev, moments.egrad2, m, sig)))
    _attempt(rep, "evals_zeroth", full, lambda: (need(k0), k0 * (m + 1))[1])
    zero_assume = full + ["zeroth-order-step"]

    def zero_params():
        need(dl, moments, h0)
        params["zero"] = zeroth_order_params(h0, sig, m, alpha, lip, beta, dl, d, moments.ev, moments.egrad2)
        return params["zero"].A

    if _attempt(rep, "A_zeroth", zero_assume, zero_params) is not None:
        p = params["zero"]
        rep.add(Quantity("B_zeroth", p.B, tuple(zero_assume)))
        rep.add(Quantity("C_zeroth", p.C, tuple(zero_assume)))
    else:
        for name in ("B_zeroth", "C_zeroth"):
            rep.add(Quantity(name, None, tuple(zero_assume), reason=rep["A_zeroth"].reason))

    cvb = ["cv-below-beta-plus-one"]
    _attempt(rep, "wpi_constant", cvb, lambda: wpi_constant_strongly_convex(alpha, beta, cv))

    def rate():
        if not beta > d:
            raise InapplicableError(f"chi-square decay needs beta > d, got beta={beta}", beta, "beta-above-d")
        return chi2_rate_strongly_convex(alpha, beta, cv)

    _attempt(rep, "chi2_rate", cvb + ["beta-above-d"], rate)

    if target.kind == "isotropic-student":
        small = lambda: wpi_constant_student_small_beta(d, beta)  # noqa: E731
        small_assume = ["student-small-beta", "small-beta-gamma"]
    else:
        bridge = bridge_small_beta(alpha, lip, beta, d, cv)

        def small():
            if not bridge.available:
                raise InapplicableError("bridge condition fails", beta, "bridge-condition")
            return wpi_constant_small_beta(beta, bridge.gamma, bridge.cv_gamma, d)

        small_assume = ["bridge-condition", "small-beta-gamma"]
    c_small = _attempt(rep, "wpi_constant_small_beta", small_assume, small)
    _attempt(rep, "chi2_rate_small_beta", small_assume, lambda: (need(c_small), 1.0 / c_small)[1])

    def dissip():
        if not target.family.is_student:
            raise InapplicableError("closed form only for Student potentials", None, "student-family")
        res = dissipativity_constant_student(beta, d)
        if not res.contractive:
            raise InapplicableError(f"dissipativity constant {res.value} is not positive", res.value, "finite-moments")
        return res.value

    _attempt(rep, "dissipativity_constant", ["student-family", "finite-moments"], dissip)
    return rep
