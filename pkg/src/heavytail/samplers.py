"""Discretizations of the weighted diffusion ``dX = -(beta-1) grad V dt + sqrt(2V) dB``.

Three chains are provided:

* ``first-order``: Euler-Maruyama, ``x' = x - h(beta-1) grad V(x) + sqrt(2 h V(x)) xi``
* ``zeroth-order``: the same step with ``grad V`` replaced by a Gaussian-smoothing
  estimate built from ``m + 1`` evaluations of ``V``
* ``ula``: the unadjusted Langevin baseline ``x' = x + h grad log pi(x) + sqrt(2h) xi``

All step functions work on a single state ``(d,)`` or a batch ``(n, d)``.

Random streams
--------------
Every chain owns independent PCG64 streams derived from
``SeedSequence(entropy=seed, spawn_key=(chain, stream))`` where ``stream`` is
``0`` for the initial draw, ``1`` for the diffusion noise ``xi`` and ``2`` for the
smoothing directions ``u``.  Gaussians come from numpy's ziggurat
``standard_normal``.  Because each chain consumes only its own streams, the
output does not depend on how chains are grouped into blocks or threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ensemble import SampleEnsemble
from .targets import TargetDensity, eval_grad, eval_potential

FIRST_ORDER = "first-order"
ZEROTH_ORDER = "zeroth-order"
ULA = "ula"
ALGORITHMS = (FIRST_ORDER, ZEROTH_ORDER, ULA)

DIVERGENCE_RADIUS = 1e12

STREAM_INIT = 0
STREAM_NOISE = 1
STREAM_DIRECTIONS = 2

# chains per work unit and steps per noise draw; neither affects results
_BLOCK = 512
_CHUNK = 64


class ChainDivergedError(RuntimeError):
    """A chain left the finite region ``|x| <= 1e12``."""

    def __init__(self, k: int, x: np.ndarray, chain: Optional[int] = None):
        self.k = k
        self.x = np.asarray(x)
        self.chain = chain
        where = f"chain {chain} " if chain is not None else ""
        super().__init__(f"{where}diverged at iteration {k}")


@dataclass
class SamplerConfig:
    """Knobs for one ensemble run.

    ``init`` is ``"point"`` (every chain starts at ``init_point``, default the
    origin, which is the minimizer of the Student potentials) or ``"gaussian"``
    (``init_point + init_scale * N(0, I)`` per chain).
    """

    h: float
    iterations: int
    chains: int = 1
    algorithm: str = FIRST_ORDER
    sigma: Optional[float] = None
    m: Optional[int] = None
    seed: int = 0
    init: str = "point"
    init_point: Optional[Sequence[float]] = None
    init_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.h > 0:
            raise ValueError(f"step size must be positive, got {self.h!r}")
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ValueError(f"iterations must be a non-negative integer, got {self.iterations!r}")
        if int(self.chains) != self.chains or self.chains < 1:
            raise ValueError(f"chains must be a positive integer, got {self.chains!r}")
        if self.algorithm == ZEROTH_ORDER:
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("zeroth-order sampling needs sigma > 0")
            if self.m is None or int(self.m) != self.m or self.m < 1:
                raise ValueError("zeroth-order sampling needs an integer batch size m >= 1")
        if self.init not in ("point", "gaussian"):
            raise ValueError(f"init must be 'point' or 'gaussian', got {self.init!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.iterations = int(self.iterations)
        self.chains = int(self.chains)
        self.seed = int(self.seed)


@dataclass
class GradientEstimate:
    """Gaussian-smoothing gradient estimate and the directions used."""

    value: np.ndarray
    directions: Optional[np.ndarray] = field(default=None, repr=False)
    potential_evals: int = 0


def _check_finite(x_new: np.ndarray, k: Optional[int]) -> np.ndarray:
    bad = _diverged_rows(x_new)
    if np.any(bad):
        raise ChainDivergedError(-1 if k is None else k, x_new)
    return x_new


def _diverged_rows(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        sq = np.sum(x * x, axis=-1)
    return ~np.isfinite(sq) | (sq > DIVERGENCE_RADIUS**2)


def _noise_scale(v: np.ndarray, h: float) -> np.ndarray:
    return np.sqrt(2.0 * h * v)[..., None]


def em_step(target: TargetDensity, x, h: float, xi, *, k: Optional[int] = None, check: bool = True) -> np.ndarray:
    """One Euler-Maruyama step of the weighted diffusion.

    Uses a single evaluation of ``V`` and of ``grad V`` at ``x``.

    Raises:
        ChainDivergedError: the new state is non-finite or beyond ``1e12``.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        v = eval_potential(target, x)
        g = eval_grad(target, x)
        out = x - h * (target.beta - 1.0) * g + _noise_scale(v, h) * np.asarray(xi, dtype=float)
    return _check_finite(out, k) if check else out


def zo_gradient(
    target: TargetDensity,
    x,
    sigma: float,
    m: int,
    rng: Optional[np.random.Generator] = None,
    *,
    directions: Optional[np.ndarray] = None,
    base_value: Optional[np.ndarray] = None,
) -> GradientEstimate:
    """``g(x) = (1/m) sum_i (V(x + sigma u_i) - V(x)) / sigma * u_i`` with ``u_i ~ N(0, I)``.

    ``directions`` may be passed explicitly with shape ``(..., m, d)``; otherwise
    they are drawn from ``rng``.  Exactly ``m + 1`` potential evaluations per
    state are made (``m`` if ``base_value`` is supplied).
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    if int(m) != m or m < 1:
        raise ValueError(f"batch size must be a positive integer, got {m!r}")
    x = np.asarray(x, dtype=float)
    if directions is None:
        if rng is None:
            raise ValueError("either rng or directions must be given")
        directions = rng.standard_normal(x.shape[:-1] + (m, target.d))
    u = np.asarray(directions, dtype=float)
    if u.shape != x.shape[:-1] + (m, target.d):
        raise ValueError(f"directions must have shape {x.shape[:-1] + (m, target.d)}, got {u.shape}")
    evals = m
    if base_value is None:
        base_value = eval_potential(target, x)
        evals += 1
    shifted = eval_potential(target, x[..., None, :] + sigma * u)
    coef = (shifted - np.asarray(base_value)[..., None]) / sigma
    value = np.mean(coef[..., None] * u, axis=-2)
    if not np.all(np.isfinite(value)):
        raise FloatingPointError("zeroth-order gradient estimate is not finite")
    return GradientEstimate(value=value, directions=u, potential_evals=evals)


def zo_step(
    target: TargetDensity,
    x,
    h: float,
    sigma: float,
    m: int,
    xi,
    rng: Optional[np.random.Generator] = None,
    *,
    directions: Optional[np.ndarray] = None,
    k: Optional[int] = None,
    check: bool = True,
) -> np.ndarray:
    """Zeroth-order step ``x' = x - h(beta-1) g(x) + sqrt(2 h V(x)) xi``.

    The base value ``V(x)`` is shared by the estimator and the noise scale, so a
    step costs ``m + 1`` potential evaluations.
    """
    x = np.asarray(x, dtype=float)
    v = eval_potential(target, x)
    est = zo_gradient(target, x, sigma, m, rng, directions=directions, base_value=v)
    with np.errstate(over="ignore", invalid="ignore"):
        out = x - h * (target.beta - 1.0) * est.value + _noise_scale(v, h) * np.asarray(xi, dtype=float)
    return _check_finite(out, k) if check else out


def ula_step(target: TargetDensity, x, h: float, xi, *, k: Optional[int] = None, check: bool = True) -> np.ndarray:
    """Unadjusted Langevin step; ``grad log pi = -beta grad V / V``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        v = eval_potential(target, x)
        g = eval_grad(target, x)
        out = x - h * target.beta * g / v[..., None] + math.sqrt(2.0 * h) * np.asarray(xi, dtype=float)
    return _check_finite(out, k) if check else out


def chain_generator(seed: int, chain: int, stream: int) -> np.random.Generator:
    """Independent generator for one ``(chain, stream)`` pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(chain), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def lineage(seed: int) -> str:
    return f"PCG64;SeedSequence(entropy={int(seed)},spawn_key=(chain,stream));streams:init=0,noise=1,directions=2"


def initial_states(target: TargetDensity, config: SamplerConfig, chains: Sequence[int]) -> np.ndarray:
    point = np.zeros(target.d) if config.init_point is None else np.asarray(config.init_point, dtype=float)
    if point.shape != (target.d,):
        raise ValueError(f"init_point must have length {target.d}")
    x = np.tile(point, (len(chains), 1))
    if config.init == "gaussian":
        for row, c in enumerate(chains):
            x[row] += config.init_scale * chain_generator(config.seed, c, STREAM_INIT).standard_normal(target.d)
    return x


def _draw(gens: list[np.random.Generator], shape: tuple) -> np.ndarray:
    return np.stack([g.standard_normal(shape) for g in gens])


def _run_block(target, config, chains, schedule, on_diverge):
    n = len(chains)
    d = target.d
    x = initial_states(target, config, chains)
    noise_gens = [chain_generator(config.seed, c, STREAM_NOISE) for c in chains]
    dir_gens = None
    if config.algorithm == ZEROTH_ORDER:
        dir_gens = [chain_generator(config.seed, c, STREAM_DIRECTIONS) for c in chains]
    snaps = np.empty((len(schedule), n, d))
    snap_fe = np.zeros((len(schedule), n), dtype=np.int64)
    snap_ge = np.zeros((len(schedule), n), dtype=np.int64)
    snap_dead = np.zeros((len(schedule), n), dtype=bool)
    fevals = np.zeros(n, dtype=np.int64)
    gevals = np.zeros(n, dtype=np.int64)
    dead = np.zeros(n, dtype=bool)
    slot = {k: i for i, k in enumerate(schedule)}

    def record(k):
        i = slot.get(k)
        if i is not None:
            snaps[i] = x
            snap_fe[i] = fevals
            snap_ge[i] = gevals
            snap_dead[i] = dead

    record(0)
    K = config.iterations
    h = config.h
    k = 0
    while k < K:
        steps = min(_CHUNK, K - k)
        xi = _draw(noise_gens, (steps, d))
        u = _draw(dir_gens, (steps, config.m, d)) if dir_gens is not None else None
        for j in range(steps):
            live = ~dead
            xs = x[live]
            if config.algorithm == FIRST_ORDER:
                new = em_step(target, xs, h, xi[live, j], check=False)
                gevals[live] += 1
                fevals[live] += 1
            elif config.algorithm == ZEROTH_ORDER:
                new = zo_step(target, xs, h, config.sigma, config.m, xi[live, j],
                              directions=u[live, j], check=False)
                fevals[live] += config.m + 1
            else:
                new = ula_step(target, xs, h, xi[live, j], check=False)
                gevals[live] += 1
                fevals[live] += 1
            k += 1
            bad = _diverged_rows(new)
            if np.any(bad):
                idx = np.flatnonzero(live)[bad]
                if on_diverge == "abort":
                    raise ChainDivergedError(k, new[bad][0], chain=chains[idx[0]])
                dead[idx] = True
                new[bad] = np.nan
            x[live] = new
            record(k)
    return snaps, snap_fe, snap_ge, snap_dead


def run_ensemble(
    target: TargetDensity,
    config: SamplerConfig,
    record_schedule: Optional[Sequence[int]] = None,
    *,
    threads: int = 1,
    on_diverge: str = "abort",
) -> list[SampleEnsemble]:
    """Advance ``config.chains`` independent chains ``config.iterations`` steps.

    Args:
        target: Target density.
        config: Sampler configuration.
        record_schedule: Sorted iteration indices in ``[0, K]`` to snapshot;
            defaults to ``[0, K]`` (just ``[0]`` when ``K = 0``).
        threads: Worker threads.  Results are bit-identical for any value.
        on_diverge: ``"abort"`` raises :class:`ChainDivergedError`;
            ``"drop-and-flag"`` freezes the chain at NaN and flags it.

    Returns:
        One :class:`SampleEnsemble` per scheduled iteration, in order.
    """
    if on_diverge not in ("abort", "drop-and-flag"):
        raise ValueError(f"on_diverge must be 'abort' or 'drop-and-flag', got {on_diverge!r}")
    K = config.iterations
    schedule = sorted({0, K}) if record_schedule is None else [int(k) for k in record_schedule]
    if sorted(set(schedule)) != schedule:
        raise ValueError("record_schedule must be sorted without duplicates")
    if schedule and (schedule[0] < 0 or schedule[-1] > K):
        raise ValueError(f"record_schedule must lie in [0, {K}]")
    all_chains = list(range(config.chains))
    blocks = [all_chains[i:i + _BLOCK] for i in range(0, len(all_chains), _BLOCK)]

    def work(block):
        return _run_block(target, config, block, schedule, on_diverge)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]

    out = []
    tag = lineage(config.seed)
    for i, k in enumerate(schedule):
        out.append(SampleEnsemble(
            k=k,
            states=np.concatenate([r[0][i] for r in results]),
            lineage=tag,
            potential_evals=np.concatenate([r[1][i] for r in results]),
            gradient_evals=np.concatenate([r[2][i] for r in results]),
            diverged=np.concatenate([r[3][i] for r in results]),
        ))
    return out
