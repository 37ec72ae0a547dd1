"""Shared Monte Carlo helpers: fast samplers and count assembly for replicated runs."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from drivemc.chain import ChainModel, chain_from_counts
from drivemc.simulate import sample_states
from drivemc.types import DriverState


def counts_from_states(states: np.ndarray):
    """Tally start and step counts from an (n, 3) state index array."""
    start = tuple(int((states[:, 0] == v).sum()) for v in range(3))
    m1 = np.zeros((3, 3), dtype=np.int64)
    m2 = np.zeros((3, 3), dtype=np.int64)
    np.add.at(m1, (states[:, 0], states[:, 1]), 1)
    np.add.at(m2, (states[:, 1], states[:, 2]), 1)
    to_rows = lambda m: tuple(tuple(int(x) for x in row) for row in m)
    return start, to_rows(m1), to_rows(m2)


def chain_from_states(states: np.ndarray, label: str = "mc") -> ChainModel:
    start, m1, m2 = counts_from_states(states)
    return chain_from_counts(label, start, m1, m2)


def resampled_chain(chain: ChainModel, n: int, seed: int, label: str = "mc") -> ChainModel:
    return chain_from_states(sample_states(chain, n, seed), label=label)


def sequences_from_states(states: np.ndarray) -> list:
    return [tuple(DriverState(int(v)) for v in row) for row in states]


def _inverse_cdf(rows: np.ndarray, index: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized inverse CDF draw: rows[index] are the distributions, u the uniforms."""
    cum = np.cumsum(rows, axis=1)
    cum[:, -1] = 1.0
    return (u[:, None] >= cum[index]).sum(axis=1)


def sample_first_order(
    initial: Sequence[float],
    p1: Sequence[Sequence[float]],
    p2: Sequence[Sequence[float]],
    n: int,
    seed: int,
) -> np.ndarray:
    """Draw n trajectories from explicit float transition rows; first-order by design."""
    rng = np.random.default_rng(seed)
    u = rng.random((n, 3))
    cum0 = np.cumsum(np.asarray(initial, dtype=float))
    cum0[-1] = 1.0
    s1 = np.searchsorted(cum0, u[:, 0], side="right")
    s2 = _inverse_cdf(np.asarray(p1, dtype=float), s1, u[:, 1])
    s3 = _inverse_cdf(np.asarray(p2, dtype=float), s2, u[:, 2])
    return np.stack([s1, s2, s3], axis=1).astype(np.int64)


def sample_second_order(
    initial: Sequence[float],
    p1: Sequence[Sequence[float]],
    cond: Sequence[Sequence[float]],
    n: int,
    seed: int,
) -> np.ndarray:
    """Draw trajectories where s3 depends on (s1, s2); cond has 9 rows indexed 3*s1+s2."""
    rng = np.random.default_rng(seed)
    u = rng.random((n, 3))
    cum0 = np.cumsum(np.asarray(initial, dtype=float))
    cum0[-1] = 1.0
    s1 = np.searchsorted(cum0, u[:, 0], side="right")
    s2 = _inverse_cdf(np.asarray(p1, dtype=float), s1, u[:, 1])
    s3 = _inverse_cdf(np.asarray(cond, dtype=float), 3 * s1 + s2, u[:, 2])
    return np.stack([s1, s2, s3], axis=1).astype(np.int64)


def shift_toward(row: Sequence[float], target: int, delta: float) -> list:
    """Move delta probability mass onto row[target], scaling the others down."""
    row = [float(x) for x in row]
    rest = 1.0 - row[target]
    if rest <= delta:
        raise ValueError("not enough mass to shift")
    scale = (rest - delta) / rest
    out = [x * scale for x in row]
    out[target] = row[target] + delta
    return out


BALANCED_INITIAL = (0.2, 0.3, 0.5)
BALANCED_STEP = (
    (0.6, 0.3, 0.1),
    (0.2, 0.5, 0.3),
    (0.15, 0.25, 0.6),
)


def planted_second_order_rows(p2=BALANCED_STEP, delta: float = 0.3) -> list:
    """Conditional rows for (s1, s2) contexts that sit TV=delta away from first order.

    The s2 row is pushed toward s1, so the previous state leaves a footprint
    of exactly delta in total variation on every context.
    """
    rows = []
    for s1 in range(3):
        for s2 in range(3):
            rows.append(shift_toward(p2[s2], s1, delta))
    return rows
