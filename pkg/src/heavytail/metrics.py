"""Empirical diagnostics for sample ensembles.

* sliced Wasserstein-2 between two equal-size sample sets
* median-of-means moment estimates, robust when ``Var(V)`` is infinite
* Kolmogorov-Smirnov fit of the radial statistic ``u = x^T Sigma x / (1 + x^T Sigma x)``
  against ``Beta(d/2, beta - d/2)``

The Beta CDF is ``scipy.special.betainc`` (Cephes ``incbet``, a continued-fraction
/ power-series evaluation of the regularized incomplete Beta function).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import betainc
from scipy.stats import kstwo

from .targets import TargetDensity, UnsupportedOracleError, eval_grad, eval_potential

METRIC_COLUMNS = ("k", "sliced_w2", "sw2_se", "ev_hat", "egrad2_hat", "ks")
DEFAULT_PROJECTIONS = 128
HEAVY_TAIL_BLOCKS = 200
_BOOTSTRAP_RESAMPLES = 200


def w2_1d(a, b) -> float:
    """Quantile-coupling W2 between two equal-size empirical measures on the line.

    Inputs need not be pre-sorted.

    Raises:
        ValueError: the two samples have different sizes or are empty.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size != b.size:
        raise ValueError(f"sample sizes differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty samples")
    diff = a - b
    return float(math.sqrt(np.mean(diff * diff)))


@dataclass
class SlicedW2:
    value: float
    se: float
    n_projections: int
    per_projection: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]


def random_directions(d: int, n_proj: int, rng: np.random.Generator) -> np.ndarray:
    """``n_proj`` directions uniform on the unit sphere, shape ``(n_proj, d)``."""
    g = rng.standard_normal((n_proj, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sliced_w2(
    a,
    b,
    n_proj: int = DEFAULT_PROJECTIONS,
    rng: Union[np.random.Generator, int, None] = None,
    *,
    directions: Optional[np.ndarray] = None,
) -> SlicedW2:
    """Average of :func:`w2_1d` over random projections, with bootstrap SE.

    The projection directions are drawn first from ``rng`` and the bootstrap
    indices afterwards, so swapping ``a`` and ``b`` gives the identical result.

    Args:
        a: Samples ``(n, d)``.
        b: Samples ``(n, d)``.
        n_proj: Number of projections.
        rng: Generator or integer seed.
        directions: Explicit unit directions ``(n_proj, d)``; overrides ``n_proj``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"sample sets must have equal shapes, got {a.shape} and {b.shape}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if directions is None:
        if int(n_proj) != n_proj or n_proj < 1:
            raise ValueError(f"n_proj must be a positive integer, got {n_proj!r}")
        directions = random_directions(a.shape[1], int(n_proj), rng)
    theta = np.asarray(directions, dtype=float)
    pa = np.sort(np.einsum("nd,pd->pn", a, theta), axis=1)
    pb = np.sort(np.einsum("nd,pd->pn", b, theta), axis=1)
    diff = pa - pb
    per = np.sqrt(np.mean(diff * diff, axis=1))
    value = float(np.mean(per))
    p = per.size
    if p > 1:
        idx = rng.integers(0, p, size=(_BOOTSTRAP_RESAMPLES, p))
        se = float(np.std(per[idx].mean(axis=1), ddof=1))
    else:
        se = 0.0
    return SlicedW2(value, se, p, per)


@dataclass
class MomentEstimate:
    """Mean of ``f(X)`` estimated from samples; ``se`` is an approximate standard error."""

    value: float
    se: float
    blocks: int
    n: int
    plain_mean: float


MomentFn = Union[str, Callable[[np.ndarray], np.ndarray]]


def _moment_values(samples: np.ndarray, f: MomentFn, target: Optional[TargetDensity]) -> np.ndarray:
    if callable(f):
        return np.asarray(f(samples), dtype=float)
    if target is None:
        raise ValueError("a target is required for named moments")
    if f == "V":
        return eval_potential(target, samples)
    if f == "grad2":
        g = eval_grad(target, samples)
        return np.sum(g * g, axis=-1)
    raise ValueError(f"unknown moment {f!r}; use 'V', 'grad2' or a callable")


def default_blocks(target: TargetDensity) -> int:
    """200 blocks when ``Var(V)`` is infinite (``beta <= d/2 + 2``), else 1."""
    return HEAVY_TAIL_BLOCKS if target.beta <= target.d / 2 + 2 else 1


def robust_moment(
    samples,
    f: MomentFn = "V",
    blocks: Optional[int] = None,
    target: Optional[TargetDensity] = None,
) -> MomentEstimate:
    """Median of per-block means of ``f(samples)``; ``blocks=1`` is the plain mean.

    Blocks are contiguous and as equal in size as possible.  For ``blocks > 1``
    the standard error is the asymptotic median SE ``sqrt(pi/2) * sd(block means) / sqrt(blocks)``.
    """
    samples = np.asarray(samples, dtype=float)
    vals = _moment_values(samples, f, target).ravel()
    n = vals.size
    if blocks is None:
        blocks = default_blocks(target) if target is not None else 1
    if int(blocks) != blocks or blocks < 1 or blocks > n:
        raise ValueError(f"blocks must be an integer in [1, {n}], got {blocks!r}")
    blocks = int(blocks)
    mean = float(np.mean(vals))
    if blocks == 1:
        se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return MomentEstimate(mean, se, 1, n, mean)
    means = np.array([c.mean() for c in np.array_split(vals, blocks)])
    se = math.sqrt(math.pi / 2) * float(np.std(means, ddof=1)) / math.sqrt(blocks)
    return MomentEstimate(float(np.median(means)), se, blocks, n, mean)


def radial_statistic(samples, target: TargetDensity) -> np.ndarray:
    """``u = x^T Sigma x / (1 + x^T Sigma x) = 1 - 1/V(x)`` for Student targets."""
    if not target.family.is_student:
        raise UnsupportedOracleError("the radial Beta law is only known for Student targets")
    v = eval_potential(target, np.atleast_2d(np.asarray(samples, dtype=float)))
    return (v - 1.0) / v


def radial_beta_ks(samples, target: TargetDensity) -> float:
    """KS distance between the empirical law of ``u`` and ``Beta(d/2, beta - d/2)``."""
    u = np.sort(radial_statistic(samples, target))
    n = u.size
    cdf = betainc(target.d / 2.0, target.beta - target.d / 2.0, u)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def ks_critical_value(n: int, level: float = 0.01) -> float:
    """Exact one-sample KS critical value at significance ``level`` (``scipy.stats.kstwo``)."""
    return float(kstwo.ppf(1.0 - level, int(n)))


@dataclass
class MetricReport:
    """Diagnostics for one snapshot against a reference sample set."""

    k: int
    sliced_w2: float
    sw2_se: float
    ev_hat: MomentEstimate
    egrad2_hat: MomentEstimate
    ks: float
    n_samples: int
    n_projections: int

    def row(self) -> dict:
        return {
            "k": self.k,
            "sliced_w2": self.sliced_w2,
            "sw2_se": self.sw2_se,
            "ev_hat": self.ev_hat.value,
            "egrad2_hat": self.egrad2_hat.value,
            "ks": self.ks,
        }


def evaluate_snapshot(
    states,
    k: int,
    reference,
    target: TargetDensity,
    n_proj: int = DEFAULT_PROJECTIONS,
    projection_seed: int = 0,
) -> MetricReport:
    """Build a :class:`MetricReport`.

    ``reference`` must have at least as many rows as ``states``; its first
    ``len(states)`` rows are used for the sliced distance.  Non-finite rows
    (dropped chains) are excluded together with the matching reference rows.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    states = states[np.all(np.isfinite(states), axis=1)]
    n = states.shape[0]
    if reference.shape[0] < n:
        raise ValueError("reference sample is smaller than the ensemble")
    sw = sliced_w2(states, reference[:n], n_proj, np.random.default_rng(projection_seed))
    blocks = min(default_blocks(target), n)
    ev = robust_moment(states, "V", blocks, target)
    eg = robust_moment(states, "grad2", blocks, target)
    ks = radial_beta_ks(states, target) if target.family.is_student else float("nan")
    return MetricReport(k, sw.value, sw.se, ev, eg, ks, n, sw.n_projections)
