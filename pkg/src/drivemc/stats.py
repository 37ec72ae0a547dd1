"""Chi-square machinery and the four test families used on transition counts.

Contingency-table construction follows one documented convention: transition
cells are pooled across steps, zero-marginal rows and columns are dropped and
recorded, and degrees of freedom come from the retained table. p-values use
the in-package chi-square CDF so results are identical across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .chain import ChainModel, CountMatrix, STEP_LABELS
from .errors import DomainError, InapplicableTestError
from .ingest import StateSequence
from .types import DriverState, STATES

_EPS = 1e-15
_MAX_ITER = 10_000


def _regularized_lower_gamma_series(a: float, x: float) -> float:
    # Power series: P(a,x) = x^a e^-x / Gamma(a+1) * sum x^n / prod(a+1..a+n)
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(_MAX_ITER):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    log_prefactor = a * math.log(x) - x - math.lgamma(a)
    return total * math.exp(log_prefactor)


def _regularized_upper_gamma_cf(a: float, x: float) -> float:
    # Q(a,x) via Lentz's method on the standard continued fraction.
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    log_prefactor = a * math.log(x) - x - math.lgamma(a)
    return math.exp(log_prefactor) * h


def chi_square_cdf(x: float, df: int) -> float:
    """CDF of the chi-square distribution: P(df/2, x/2).

    Series expansion below the x < df + 1 crossover, continued fraction
    above; absolute error stays within 1e-10 over the tested range.
    """
    if isinstance(df, bool) or not isinstance(df, int):
        raise DomainError("df must be a positive integer")
    if df < 1:
        raise DomainError(f"df must be >= 1, got {df}")
    x = float(x)
    if math.isnan(x) or x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    half_x = x / 2.0
    if half_x == 0.0:  # covers x == 0 and subnormal x whose halving underflows
        return 0.0
    a = df / 2.0
    if x < df + 1.0:
        return min(1.0, _regularized_lower_gamma_series(a, half_x))
    return min(1.0, max(0.0, 1.0 - _regularized_upper_gamma_cf(a, half_x)))


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail 1 - CDF, computed directly in the far tail for precision."""
    if isinstance(df, bool) or not isinstance(df, int):
        raise DomainError("df must be a positive integer")
    if df < 1:
        raise DomainError(f"df must be >= 1, got {df}")
    x = float(x)
    if math.isnan(x) or x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    half_x = x / 2.0
    if half_x == 0.0:  # covers x == 0 and subnormal x whose halving underflows
        return 1.0
    a = df / 2.0
    if x < df + 1.0:
        return min(1.0, max(0.0, 1.0 - _regularized_lower_gamma_series(a, half_x)))
    return min(1.0, _regularized_upper_gamma_cf(a, half_x))


@dataclass(frozen=True, slots=True)
class ContingencyTable:
    """Observed counts with computed expectations and a pooling audit trail.

    Zero-marginal rows and columns are dropped before expectations are
    computed, so every retained expected cell is positive.
    """

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    observed: tuple[tuple[int, ...], ...]
    expected: tuple[tuple[float, ...], ...]
    dropped_rows: tuple[str, ...] = ()
    dropped_cols: tuple[str, ...] = ()

    @property
    def grand_total(self) -> int:
        return sum(sum(row) for row in self.observed)


def make_contingency_table(
    row_labels: Sequence[str],
    col_labels: Sequence[str],
    observed: Sequence[Sequence[int]],
) -> ContingencyTable:
    rows = [tuple(int(v) for v in row) for row in observed]
    if not rows or any(len(row) != len(col_labels) for row in rows):
        raise DomainError("observed shape must match the labels")
    if any(v < 0 for row in rows for v in row):
        raise DomainError("observed counts must be non-negative")

    keep_rows = [i for i, row in enumerate(rows) if sum(row) > 0]
    keep_cols = [j for j in range(len(col_labels)) if sum(row[j] for row in rows) > 0]
    dropped_rows = tuple(row_labels[i] for i in range(len(rows)) if i not in keep_rows)
    dropped_cols = tuple(
        col_labels[j] for j in range(len(col_labels)) if j not in keep_cols
    )
    trimmed = [tuple(rows[i][j] for j in keep_cols) for i in keep_rows]

    row_totals = [sum(row) for row in trimmed]
    col_totals = [sum(row[j] for row in trimmed) for j in range(len(keep_cols))]
    grand = sum(row_totals)
    expected = tuple(
        tuple(rt * ct / grand for ct in col_totals) for rt in row_totals
    )
    return ContingencyTable(
        row_labels=tuple(row_labels[i] for i in keep_rows),
        col_labels=tuple(col_labels[j] for j in keep_cols),
        observed=tuple(trimmed),
        expected=expected,
        dropped_rows=dropped_rows,
        dropped_cols=dropped_cols,
    )


@dataclass(frozen=True, slots=True)
class TestResult:
    statistic: float
    df: int
    p_value: float
    kind: str
    notes: tuple[str, ...] = ()

    def rejects(self, alpha: float) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "notes": list(self.notes),
        }


def pearson_chi_square(table: ContingencyTable, kind: str = "pearson") -> TestResult:
    """Pearson chi-square on a contingency table.

    df = (rows - 1)(cols - 1) over the retained table; dropped zero-marginal
    rows and columns are echoed in the notes.
    """
    r = len(table.observed)
    c = len(table.col_labels)
    if r < 2 or c < 2:
        raise InapplicableTestError(
            f"table degenerates to {r}x{c} after dropping zero marginals"
        )
    statistic = 0.0
    for obs_row, exp_row in zip(table.observed, table.expected):
        for obs, exp in zip(obs_row, exp_row):
            diff = obs - exp
            statistic += diff * diff / exp
    df = (r - 1) * (c - 1)
    notes = []
    if table.dropped_rows:
        notes.append(f"dropped zero-marginal rows: {', '.join(table.dropped_rows)}")
    if table.dropped_cols:
        notes.append(f"dropped zero-marginal columns: {', '.join(table.dropped_cols)}")
    return TestResult(
        statistic=statistic,
        df=df,
        p_value=chi_square_sf(statistic, df),
        kind=kind,
        notes=tuple(notes),
    )


def _step_matrices(group) -> list[CountMatrix]:
    """Normalize a group to its scene-step count matrices (start row excluded)."""
    if isinstance(group, ChainModel):
        matrices = list(group.counts[1:])
    else:
        matrices = [group] if isinstance(group, CountMatrix) else list(group)
        if not all(isinstance(m, CountMatrix) for m in matrices):
            raise DomainError("groups must be CountMatrix collections or ChainModels")
        matrices = [m for m in matrices if m.step != STEP_LABELS[0]]
    if not matrices:
        raise DomainError("a group needs at least one scene-step count matrix")
    return sorted(matrices, key=lambda m: STEP_LABELS.index(m.step))


def _transition_cells(matrices: Iterable[CountMatrix]) -> tuple[list[str], list[int]]:
    labels: list[str] = []
    values: list[int] = []
    for matrix in matrices:
        for origin in STATES:
            for dest in STATES:
                labels.append(f"{matrix.step}:{origin.letter}->{dest.letter}")
                values.append(matrix.rows[int(origin)][int(dest)])
    return labels, values


def compare_groups(group_a, group_b, labels: tuple[str, str] = ("a", "b")) -> TestResult:
    """Homogeneity chi-square between two groups of transition counts.

    Builds one 2xK table whose columns are (step, from, to) transition cells
    pooled across the scene steps, then applies Pearson's test. Start
    occupancy rows are excluded: the start state is deterministic.
    """
    matrices_a = _step_matrices(group_a)
    matrices_b = _step_matrices(group_b)
    steps_a = [m.step for m in matrices_a]
    steps_b = [m.step for m in matrices_b]
    if steps_a != steps_b:
        raise DomainError(f"groups cover different steps: {steps_a} vs {steps_b}")
    col_labels, row_a = _transition_cells(matrices_a)
    _, row_b = _transition_cells(matrices_b)
    table = make_contingency_table(list(labels), col_labels, [row_a, row_b])
    result = pearson_chi_square(table, kind="compare_groups")
    return TestResult(
        statistic=result.statistic,
        df=result.df,
        p_value=result.p_value,
        kind=result.kind,
        notes=result.notes + (f"steps pooled: {', '.join(steps_a)}",),
    )


def test_homogeneity(subgroups: Sequence[tuple[str, Any]]) -> TestResult:
    """compare_groups generalized to G subgroup rows."""
    if len(subgroups) < 2:
        raise InapplicableTestError("homogeneity needs at least two subgroups")
    names = [name for name, _ in subgroups]
    matrix_sets = [_step_matrices(group) for _, group in subgroups]
    steps = [m.step for m in matrix_sets[0]]
    for name, matrices in zip(names, matrix_sets):
        if [m.step for m in matrices] != steps:
            raise DomainError(f"subgroup {name!r} covers different steps")
    col_labels, _ = _transition_cells(matrix_sets[0])
    rows = [_transition_cells(matrices)[1] for matrices in matrix_sets]
    table = make_contingency_table(names, col_labels, rows)
    result = pearson_chi_square(table, kind="homogeneity")
    return TestResult(
        statistic=result.statistic,
        df=result.df,
        p_value=result.p_value,
        kind=result.kind,
        notes=result.notes + (f"steps pooled: {', '.join(steps)}",),
    )


def test_stationarity(chain: ChainModel) -> TestResult:
    """Per-origin-state comparison of the two scene steps.

    For each origin state occupied at both steps, a 2x3 (step x destination)
    Pearson table contributes its statistic and df; strata with an origin
    absent at either step are skipped and recorded.
    """
    step1, step2 = chain.counts[1], chain.counts[2]
    statistic = 0.0
    df = 0
    notes = []
    used = 0
    for origin in STATES:
        row1 = step1.rows[int(origin)]
        row2 = step2.rows[int(origin)]
        if sum(row1) == 0 or sum(row2) == 0:
            notes.append(f"stratum {origin.wire}: skipped, origin absent at a step")
            continue
        table = make_contingency_table(
            [f"{origin.letter}@{STEP_LABELS[1]}", f"{origin.letter}@{STEP_LABELS[2]}"],
            [f"to_{dest.wire}" for dest in STATES],
            [row1, row2],
        )
        try:
            part = pearson_chi_square(table)
        except InapplicableTestError:
            notes.append(
                f"stratum {origin.wire}: skipped, degenerate after dropping zero columns"
            )
            continue
        statistic += part.statistic
        df += part.df
        used += 1
        notes.append(
            f"stratum {origin.wire}: statistic {part.statistic:.6g}, df {part.df}"
        )
    if used == 0:
        raise InapplicableTestError("no origin state is occupied at both steps")
    return TestResult(
        statistic=statistic,
        df=df,
        p_value=chi_square_sf(statistic, df),
        kind="stationarity",
        notes=tuple(notes),
    )


def _sequence_triples(sequences) -> list[tuple[int, int, int]]:
    triples = []
    for seq in sequences:
        states = seq.states if isinstance(seq, StateSequence) else tuple(seq)
        if len(states) == 4:
            states = states[1:]
        if len(states) != 3:
            raise DomainError("sequences must carry the three scene states")
        triples.append(tuple(int(DriverState(s)) for s in states))
    return triples


def test_order(sequences) -> TestResult:
    """Likelihood-ratio test of first-order against second-order dependence.

    G^2 = 2 sum n_ijk ln(p(k|i,j) / p(k|j)) over observed (s1, s2) contexts;
    df = 2 * (#observed contexts) - 2 * (#distinct middle states observed).
    """
    triples = _sequence_triples(sequences)
    if not triples:
        raise InapplicableTestError("no sequences")
    n_ijk: dict[tuple[int, int], list[int]] = {}
    n_jk: dict[int, list[int]] = {}
    for s1, s2, s3 in triples:
        n_ijk.setdefault((s1, s2), [0, 0, 0])[s3] += 1
        n_jk.setdefault(s2, [0, 0, 0])[s3] += 1
    contexts = sorted(n_ijk)
    if len(contexts) < 2:
        raise InapplicableTestError("fewer than two observed (s1, s2) contexts")
    middles = sorted({j for _, j in contexts})
    df = 2 * len(contexts) - 2 * len(middles)
    if df <= 0:
        raise InapplicableTestError(
            "the first-order model already saturates the observed contexts"
        )
    g2 = 0.0
    for (i, j), counts in n_ijk.items():
        context_total = sum(counts)
        pooled = n_jk[j]
        pooled_total = sum(pooled)
        for k in range(3):
            if counts[k] == 0:
                continue
            p_context = counts[k] / context_total
            p_pooled = pooled[k] / pooled_total
            g2 += 2.0 * counts[k] * math.log(p_context / p_pooled)
    g2 = max(0.0, g2)
    notes = (
        f"observed contexts: {len(contexts)}",
        f"distinct middle states: {len(middles)}",
    )
    return TestResult(
        statistic=g2,
        df=df,
        p_value=chi_square_sf(g2, df),
        kind="order",
        notes=notes,
    )
