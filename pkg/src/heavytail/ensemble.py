"""Container for a snapshot of many independent chains."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SampleEnsemble:
    """States of ``N`` chains at one iteration.

    Attributes:
        k: Iteration index of the snapshot (``0`` is the initial draw).
        states: Chain positions, shape ``(N, d)``.
        lineage: Human-readable description of how the per-chain random
            streams were derived, e.g. ``"seed=42;spawn_key=(chain, stream)"``.
        potential_evals: Potential evaluations spent per chain so far, shape ``(N,)``.
        gradient_evals: Gradient evaluations spent per chain so far, shape ``(N,)``.
        diverged: Boolean mask of chains dropped after divergence, shape ``(N,)``.
    """

    k: int
    states: np.ndarray
    lineage: str = ""
    potential_evals: np.ndarray = field(default=None)  # type: ignore[assignment]
    gradient_evals: np.ndarray = field(default=None)  # type: ignore[assignment]
    diverged: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        n = self.states.shape[0]
        if self.potential_evals is None:
            self.potential_evals = np.zeros(n, dtype=np.int64)
        if self.gradient_evals is None:
            self.gradient_evals = np.zeros(n, dtype=np.int64)
        if self.diverged is None:
            self.diverged = np.zeros(n, dtype=bool)

    @property
    def n_chains(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def alive(self) -> np.ndarray:
        """States of the chains that have not been dropped."""
        return self.states[~self.diverged]
