"""Exact distribution propagation and seeded trajectory sampling.

Propagation is exact rational arithmetic (row vector times row-stochastic
matrix). Sampling uses numpy's PCG64 generator, the package-wide PRNG, and is
bit-identical for identical (chain, n, seed): one (n, 3) uniform array is
drawn up front and column k decides scene k+1 by inverse CDF.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .chain import ChainModel
from .errors import DomainError, UndefinedRowError
from .types import DriverState, STATES


@dataclass(frozen=True, slots=True)
class StateDistribution:
    """Distribution over driver states at one scene."""

    scene: int
    probs: tuple[Fraction, Fraction, Fraction]

    def __post_init__(self):
        probs = tuple(Fraction(p) for p in self.probs)
        if len(probs) != 3 or any(p < 0 for p in probs) or sum(probs) != 1:
            raise DomainError("probs must be a distribution over the three states")
        object.__setattr__(self, "probs", probs)

    def __getitem__(self, state: DriverState) -> Fraction:
        return self.probs[int(state)]


@dataclass(frozen=True, slots=True)
class Trajectory:
    """One sampled path through the three scenes, tagged with its seed."""

    states: tuple[DriverState, DriverState, DriverState]
    seed: int


def propagate(chain: ChainModel) -> list[StateDistribution]:
    """Exact scene marginals: d1 = initial, d_{k+1} = d_k P_k."""
    current = chain.initial
    out = [StateDistribution(scene=1, probs=current)]
    for matrix in chain.steps:
        nxt = [Fraction(0)] * 3
        for origin in STATES:
            mass = current[int(origin)]
            if mass == 0:
                continue
            row = matrix.row(origin)
            if row is None:
                raise UndefinedRowError(
                    f"step {matrix.step} row {origin.wire} is undefined but reachable"
                )
            for dest in range(3):
                nxt[dest] += mass * row[dest]
        current = tuple(nxt)
        out.append(StateDistribution(scene=out[-1].scene + 1, probs=current))
    return out


def _float_rows(chain: ChainModel):
    initial = np.array([float(p) for p in chain.initial])
    steps = []
    for matrix in chain.steps:
        rows = np.zeros((3, 3))
        for origin in STATES:
            row = matrix.row(origin)
            if row is not None:
                rows[int(origin)] = [float(p) for p in row]
        steps.append(rows)
    return initial, steps


def _cumulative(probs: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs, axis=-1)
    cum[..., -1] = 1.0
    return cum


def sample_states(chain: ChainModel, n: int, seed: int) -> np.ndarray:
    """Sample n trajectories as an (n, 3) int array of state codes."""
    if n < 0:
        raise DomainError("n must be >= 0")
    propagate(chain)  # raises if an undefined row is reachable
    if n == 0:
        return np.zeros((0, 3), dtype=np.int64)
    initial, steps = _float_rows(chain)
    rng = np.random.Generator(np.random.PCG64(seed))
    uniforms = rng.random((n, 3))
    out = np.zeros((n, 3), dtype=np.int64)
    out[:, 0] = np.searchsorted(_cumulative(initial), uniforms[:, 0], side="right")
    for k, rows in enumerate(steps, start=1):
        cum = _cumulative(rows)
        previous = out[:, k - 1]
        row_cum = cum[previous]
        out[:, k] = (uniforms[:, k : k + 1] >= row_cum).sum(axis=1)
    return out


def sample(chain: ChainModel, n: int, seed: int) -> list[Trajectory]:
    """n independent trajectories, bit-identical under a fixed seed."""
    array = sample_states(chain, n, seed)
    return [
        Trajectory(
            states=tuple(DriverState(int(s)) for s in row),
            seed=seed,
        )
        for row in array
    ]


def total_variation(p: StateDistribution, q: StateDistribution) -> Fraction:
    """Half the L1 distance between two same-scene distributions."""
    if p.scene != q.scene:
        raise DomainError(f"scene mismatch: {p.scene} vs {q.scene}")
    return sum(abs(a - b) for a, b in zip(p.probs, q.probs)) / 2


def empirical_distribution(states: Sequence[int] | np.ndarray, scene: int) -> StateDistribution:
    """Relative frequencies of one scene column from sampled trajectories."""
    values = np.asarray(states)
    n = len(values)
    if n == 0:
        raise DomainError("empty sample")
    counts = [int((values == s).sum()) for s in range(3)]
    return StateDistribution(scene=scene, probs=tuple(Fraction(c, n) for c in counts))
