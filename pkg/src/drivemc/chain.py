"""Non-stationary Markov chain estimation, count recovery, and dataset synthesis.

Counts are the primary representation throughout; probabilities are exact
Fractions derived on demand. Rows that were never observed stay undefined
instead of being fabricated.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import AmbiguityError, DomainError, InconsistencyError, ValidationError
from .ingest import Dataset, Provenance, StateSequence
from .types import (
    Condition,
    DriverState,
    Environment,
    InfoLevel,
    InteractionTrace,
    ParticipantProfile,
    SceneResponse,
    ScenarioOrder,
    Sex,
    STATES,
    StudyConfig,
    load_study_config,
)

STEP_LABELS = ("start->1", "1->2", "2->3")

# Wire/CSV column order mirrors the study's table layout (Alert, Normal,
# Takeover); internal indices stay in canonical state order (T=0, A=1, N=2).
_CSV_ORDER = (DriverState.ALERT, DriverState.NORMAL, DriverState.TAKEOVER)


def round_half_up_tenths(numerator: int, denominator: int) -> int:
    """Percentage of numerator/denominator in tenths of a percent, half-up."""
    if denominator <= 0:
        raise DomainError("denominator must be positive")
    return (2000 * numerator + denominator) // (2 * denominator)


def percent_tenths(value: Fraction) -> int:
    """A probability rendered as tenths of a percent, half-up."""
    return round_half_up_tenths(value.numerator, value.denominator)


def format_percent(value: Fraction) -> str:
    tenths = percent_tenths(value)
    return f"{tenths // 10}.{tenths % 10}"


@dataclass(frozen=True, slots=True)
class CountMatrix:
    """Integer transition counts for one step.

    The start step is a single row (the scene-1 occupancy); the scene steps
    are 3x3, indexed [from][to] in canonical state order.
    """

    step: str
    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.step not in STEP_LABELS:
            raise ValidationError(f"unknown step label {self.step!r}")
        rows = tuple(tuple(int(v) for v in row) for row in self.rows)
        expect_rows = 1 if self.step == STEP_LABELS[0] else 3
        if len(rows) != expect_rows or any(len(row) != 3 for row in rows):
            raise ValidationError(f"step {self.step} expects a {expect_rows}x3 count matrix")
        if any(v < 0 for row in rows for v in row):
            raise ValidationError("counts must be non-negative")
        object.__setattr__(self, "rows", rows)

    def row_totals(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.rows)

    def column_totals(self) -> tuple[int, ...]:
        return tuple(sum(row[j] for row in self.rows) for j in range(3))

    @property
    def total(self) -> int:
        return sum(self.row_totals())


@dataclass(frozen=True, slots=True)
class TransitionMatrix:
    """Row-stochastic probabilities for one scene step.

    Rows with no observations are None (undefined), never fabricated.
    """

    step: str
    probs: tuple[Optional[tuple[Fraction, Fraction, Fraction]], ...]

    def __post_init__(self):
        if self.step not in STEP_LABELS[1:]:
            raise ValidationError(f"unknown transition step {self.step!r}")
        rows = []
        for row in self.probs:
            if row is None:
                rows.append(None)
                continue
            row = tuple(Fraction(p) for p in row)
            if len(row) != 3 or any(p < 0 for p in row):
                raise ValidationError("probability rows are 3 non-negative entries")
            if sum(row) != 1:
                raise ValidationError(f"defined rows must sum to 1, got {sum(row)}")
            rows.append(row)
        if len(rows) != 3:
            raise ValidationError("a transition matrix has 3 origin rows")
        object.__setattr__(self, "probs", tuple(rows))

    def row(self, origin: DriverState) -> Optional[tuple[Fraction, ...]]:
        return self.probs[int(origin)]


@dataclass(frozen=True, slots=True)
class ChainModel:
    """Initial scene distribution plus per-step transition matrices, with counts."""

    label: str
    n: int
    initial: tuple[Fraction, Fraction, Fraction]
    steps: tuple[TransitionMatrix, TransitionMatrix]
    counts: tuple[CountMatrix, CountMatrix, CountMatrix]
    alpha: Fraction = Fraction(0)

    def __post_init__(self):
        initial = tuple(Fraction(p) for p in self.initial)
        if len(initial) != 3 or sum(initial) != 1 or any(p < 0 for p in initial):
            raise ValidationError("initial must be a distribution over the three states")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "alpha", Fraction(self.alpha))
        if tuple(c.step for c in self.counts) != STEP_LABELS:
            raise ValidationError("counts must cover start->1, 1->2, 2->3 in order")
        if tuple(s.step for s in self.steps) != STEP_LABELS[1:]:
            raise ValidationError("steps must cover 1->2 and 2->3 in order")
        if self.n != self.counts[0].total:
            raise ValidationError("n must equal the start row total")


@dataclass(frozen=True, slots=True)
class SecondOrderModel:
    """Relative-frequency estimate of P(s3 | s1, s2) with per-context counts.

    Context rows are indexed 3*s1 + s2; unobserved contexts have probs None.
    """

    label: str
    n: int
    counts: tuple[tuple[int, int, int], ...]
    probs: tuple[Optional[tuple[Fraction, Fraction, Fraction]], ...]

    def context_counts(self, s1: DriverState, s2: DriverState) -> tuple[int, int, int]:
        return self.counts[3 * int(s1) + int(s2)]

    def conditional(self, s1: DriverState, s2: DriverState):
        return self.probs[3 * int(s1) + int(s2)]


def _sequence_states(seq) -> tuple[int, int, int, int]:
    states = seq.states if isinstance(seq, StateSequence) else tuple(seq)
    if len(states) != 4:
        raise ValidationError("each sequence must have exactly 4 states")
    return tuple(int(DriverState(s)) for s in states)


def _probs_from_counts(rows, alpha: Fraction):
    probs = []
    for row in rows:
        total = sum(row)
        if total == 0 and alpha == 0:
            probs.append(None)
            continue
        denom = total + 3 * alpha
        probs.append(tuple(Fraction(c + alpha, 1) / denom for c in row))
    return tuple(probs)


def chain_from_counts(
    label: str,
    start_row: Sequence[int],
    step1_rows: Sequence[Sequence[int]],
    step2_rows: Sequence[Sequence[int]],
    alpha: Fraction = Fraction(0),
) -> ChainModel:
    """Assemble a ChainModel directly from integer count matrices."""
    counts = (
        CountMatrix(STEP_LABELS[0], (tuple(start_row),)),
        CountMatrix(STEP_LABELS[1], tuple(tuple(r) for r in step1_rows)),
        CountMatrix(STEP_LABELS[2], tuple(tuple(r) for r in step2_rows)),
    )
    n = counts[0].total
    if n == 0:
        raise ValidationError("a chain needs at least one sequence")
    if counts[0].rows[0] != counts[1].row_totals():
        raise ValidationError("start occupancy must equal the 1->2 origin row totals")
    if counts[1].column_totals() != counts[2].row_totals():
        raise ValidationError("1->2 destination totals must equal the 2->3 origin totals")
    alpha = Fraction(alpha)
    if alpha < 0:
        raise DomainError("alpha must be non-negative")
    initial = tuple(Fraction(c, n) for c in counts[0].rows[0])
    steps = (
        TransitionMatrix(STEP_LABELS[1], _probs_from_counts(counts[1].rows, alpha)),
        TransitionMatrix(STEP_LABELS[2], _probs_from_counts(counts[2].rows, alpha)),
    )
    return ChainModel(label=label, n=n, initial=initial, steps=steps, counts=counts, alpha=alpha)


def estimate_chain(sequences, label: str = "", alpha: Fraction = Fraction(0)) -> ChainModel:
    """Estimate the non-stationary first-order chain by relative frequency.

    alpha is optional additive smoothing applied to the derived probabilities
    only (counts stay raw); the default 0 leaves zero-count rows undefined.
    """
    seqs = [_sequence_states(s) for s in sequences]
    if not seqs:
        raise ValidationError("estimate_chain needs at least one sequence")
    start = [0, 0, 0]
    m1 = [[0] * 3 for _ in range(3)]
    m2 = [[0] * 3 for _ in range(3)]
    for _, s1, s2, s3 in seqs:
        start[s1] += 1
        m1[s1][s2] += 1
        m2[s2][s3] += 1
    return chain_from_counts(label, start, m1, m2, alpha)


def estimate_second_order(
    sequences, label: str = "", alpha: Fraction | int = 0
) -> SecondOrderModel:
    """Estimate P(s3 | s1, s2) by relative frequency per observed context."""
    seqs = [_sequence_states(s) for s in sequences]
    if not seqs:
        raise ValidationError("estimate_second_order needs at least one sequence")
    counts = [[0, 0, 0] for _ in range(9)]
    for _, s1, s2, s3 in seqs:
        counts[3 * s1 + s2][s3] += 1
    probs = _probs_from_counts(counts, Fraction(alpha))
    return SecondOrderModel(
        label=label,
        n=len(seqs),
        counts=tuple(tuple(row) for row in counts),
        probs=probs,
    )


# --------------------------------------------------------------------------
# Count recovery from one-decimal percentage tables


@dataclass(frozen=True, slots=True)
class RecoveredRow:
    counts: tuple[int, ...]
    deviations_tenths: tuple[int, ...]
    exact: bool


@dataclass(frozen=True, slots=True)
class RecoveredCounts:
    rows: tuple[tuple[int, ...], ...]
    reports: tuple[RecoveredRow, ...]
    mode: str


def _cell_tenths(cell) -> int:
    try:
        scaled = Decimal(str(cell)) * 10
    except (InvalidOperation, ValueError):
        raise DomainError(f"percentage {cell!r} is not a number") from None
    if scaled != scaled.to_integral_value():
        raise DomainError(f"percentage {cell!r} must be printed at one decimal")
    return int(scaled)


def _preimage(tenths: int, total: int) -> list[int]:
    return [c for c in range(total + 1) if round_half_up_tenths(c, total) == tenths]


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def _recover_row(percents: Sequence, total: int, mode: str, row_name: str) -> RecoveredRow:
    if total <= 0:
        raise DomainError(f"{row_name}: row total must be positive")
    tenths = [_cell_tenths(cell) for cell in percents]
    preimages = [_preimage(t, total) for t in tenths]
    exact = [
        combo
        for combo in itertools.product(*preimages)
        if sum(combo) == total
    ]
    if len(exact) == 1:
        return RecoveredRow(counts=exact[0], deviations_tenths=(0,) * len(tenths), exact=True)
    if len(exact) > 1:
        raise AmbiguityError(
            f"{row_name}: {len(exact)} integer rows re-round to the printed percentages",
            candidates=exact,
        )
    if mode == "strict":
        empty = [i for i, p in enumerate(preimages) if not p]
        detail = (
            f" (cells {empty} have no integer preimage at total {total})" if empty else ""
        )
        raise InconsistencyError(
            f"{row_name}: no integer row with total {total} re-rounds to the printed"
            f" percentages{detail}; the printed row is internally inconsistent"
        )

    # Nearest mode: minimize (sum, max) of absolute re-rounding deviations,
    # measured in tenths of a percent.
    best_key = None
    best: list[tuple[int, ...]] = []
    for combo in _compositions(total, len(tenths)):
        devs = [abs(round_half_up_tenths(c, total) - t) for c, t in zip(combo, tenths)]
        key = (sum(devs), max(devs))
        if best_key is None or key < best_key:
            best_key = key
            best = [combo]
        elif key == best_key:
            best.append(combo)
    if len(best) > 1:
        raise AmbiguityError(
            f"{row_name}: nearest-fit tie at deviation {best_key}", candidates=best
        )
    counts = best[0]
    deviations = tuple(
        round_half_up_tenths(c, total) - t for c, t in zip(counts, tenths)
    )
    return RecoveredRow(counts=counts, deviations_tenths=deviations, exact=False)


def recover_counts(
    percent_rows: Sequence[Sequence],
    row_totals: Sequence[int],
    mode: str = "strict",
) -> RecoveredCounts:
    """Reconstruct integer count rows from one-decimal percentages.

    Strict mode demands, per row, a unique composition of the row total whose
    half-up one-decimal percentages reproduce the printed row; zero solutions
    raise InconsistencyError, several raise AmbiguityError. Nearest mode falls
    back, only when no exact row exists, to the unique composition minimizing
    (sum, max) of the re-rounding deviations and reports those deviations.
    """
    if mode not in ("strict", "nearest"):
        raise DomainError(f"unknown recovery mode {mode!r}")
    if len(percent_rows) != len(row_totals):
        raise DomainError("one row total per percentage row is required")
    reports = tuple(
        _recover_row(row, int(total), mode, f"row {i}")
        for i, (row, total) in enumerate(zip(percent_rows, row_totals))
    )
    return RecoveredCounts(
        rows=tuple(r.counts for r in reports),
        reports=reports,
        mode=mode,
    )


# --------------------------------------------------------------------------
# Dataset synthesis


def _as_count_triple(value) -> tuple[CountMatrix, CountMatrix, CountMatrix]:
    if isinstance(value, ChainModel):
        return value.counts
    triple = tuple(value)
    if len(triple) != 3:
        raise ValidationError("expected (start, 1->2, 2->3) count matrices")
    out = []
    for label, entry in zip(STEP_LABELS, triple):
        if isinstance(entry, CountMatrix):
            if entry.step != label:
                raise ValidationError(f"count matrix order must be {STEP_LABELS}")
            out.append(entry)
        else:
            rows = entry if label != STEP_LABELS[0] else _as_start_rows(entry)
            out.append(CountMatrix(label, tuple(tuple(r) for r in rows)))
    return tuple(out)


def _as_start_rows(entry):
    entry = tuple(entry)
    if entry and isinstance(entry[0], (int, np.integer)):
        return (entry,)
    return entry


def _trajectories_from_counts(counts: tuple[CountMatrix, CountMatrix, CountMatrix]):
    """The exact multiset of (s1, s2, s3) trajectories implied by the counts.

    Pairing through each middle state is canonical: incoming transitions
    sorted by origin are zipped with outgoing transitions sorted by
    destination. Any pairing reproduces the same first-order counts; this one
    makes synthesis deterministic independent of the seed.
    """
    start, m1, m2 = counts
    if start.rows[0] != m1.row_totals():
        raise ValidationError("start occupancy must equal the 1->2 origin row totals")
    if m1.column_totals() != m2.row_totals():
        raise ValidationError(
            "1->2 destination totals must equal the 2->3 origin totals"
        )
    trajectories = []
    for middle in range(3):
        incoming = [
            first for first in range(3) for _ in range(m1.rows[first][middle])
        ]
        outgoing = [
            last for last in range(3) for _ in range(m2.rows[middle][last])
        ]
        trajectories.extend(
            (first, middle, last) for first, last in zip(incoming, outgoing)
        )
    trajectories.sort()
    return trajectories


_STATE_TO_LEVEL = {
    DriverState.NORMAL: 3,
    DriverState.ALERT: 1,
    DriverState.TAKEOVER: 0,
}

_CONDITION_CELLS = (
    (InfoLevel.HIGH, ScenarioOrder.HIGHWAY_FIRST),
    (InfoLevel.HIGH, ScenarioOrder.SUBURBS_FIRST),
    (InfoLevel.LOW, ScenarioOrder.HIGHWAY_FIRST),
    (InfoLevel.LOW, ScenarioOrder.SUBURBS_FIRST),
)


def _scene_response(state: int, scene_index: int, scenario_config) -> SceneResponse:
    level = _STATE_TO_LEVEL[DriverState(state)]
    scene = scenario_config.scene(scene_index)
    choice = next(c for c in scene.choices if c.loa_level == level)
    return SceneResponse(
        scene_index=scene_index,
        selected_choice_ids=frozenset({choice.id}),
        loa=Fraction(level),
        confidence=3,
        comfort=0,
        trust_items=(("reliable", 1),),
        trust_score=1,
    )


def synthesize_dataset(
    counts_by_environment: Mapping[Environment, Any],
    seed: int = 0,
    config: StudyConfig | None = None,
) -> Dataset:
    """Emit the exact dataset implied by per-environment count matrices.

    The per-environment trajectory multisets are fully determined by the
    counts; the seed only permutes which participant carries which trajectory
    and fills profile ages. Both environments are required because every
    trace contains both scenarios, and their totals must agree.
    """
    if config is None:
        config = load_study_config()
    counts = {
        Environment(env): _as_count_triple(value)
        for env, value in counts_by_environment.items()
    }
    missing = [env.value for env in Environment if env not in counts]
    if missing:
        raise ValidationError(f"synthesis needs counts for: {', '.join(missing)}")
    totals = {env: triple[0].total for env, triple in counts.items()}
    n = totals[Environment.HIGHWAY]
    if totals[Environment.SUBURBS] != n:
        raise ValidationError(f"environment totals differ: {totals}")
    if n == 0:
        raise ValidationError("cannot synthesize an empty dataset")

    rng = np.random.Generator(np.random.PCG64(seed))
    assignments = {}
    for env in (Environment.HIGHWAY, Environment.SUBURBS):
        trajectories = _trajectories_from_counts(counts[env])
        order = rng.permutation(n)
        assignments[env] = [trajectories[i] for i in order]
    ages = rng.integers(20, 74, size=n)

    traces = []
    sexes = {Sex.FEMALE: 0, Sex.MALE: 0}
    cells: dict[str, int] = {}
    for i in range(n):
        sex = Sex.FEMALE if i % 2 == 0 else Sex.MALE
        info, order = _CONDITION_CELLS[i % 4]
        condition = Condition(info_level=info, scenario_order=order)
        sexes[sex] += 1
        cell_key = f"{info.value}:{order.value}"
        cells[cell_key] = cells.get(cell_key, 0) + 1
        profile = ParticipantProfile(
            id=f"p{i + 1:04d}",
            age=int(ages[i]),
            sex=sex,
            has_license=True,
        )
        scenarios = []
        env_order = (
            (Environment.HIGHWAY, Environment.SUBURBS)
            if order is ScenarioOrder.HIGHWAY_FIRST
            else (Environment.SUBURBS, Environment.HIGHWAY)
        )
        for env in env_order:
            trajectory = assignments[env][i]
            scenario_config = config.scenario(env)
            scenes = tuple(
                _scene_response(state, scene_index, scenario_config)
                for scene_index, state in zip((1, 2, 3), trajectory)
            )
            scenarios.append((env, scenes))
        traces.append(
            InteractionTrace(
                profile=profile, condition=condition, scenarios=tuple(scenarios)
            )
        )

    notes = {
        "synthesized": True,
        "seed": int(seed),
        "n": n,
        "group_sizes": {
            "sex": {sex.value: count for sex, count in sexes.items()},
            "condition": cells,
        },
    }
    return Dataset(
        traces=tuple(traces),
        provenance=Provenance(sources=("<synthesized>",), notes=notes),
    )


# --------------------------------------------------------------------------
# Serialization


def _fraction_str(value: Fraction) -> str:
    return str(value)


def chain_to_dict(chain: ChainModel) -> dict[str, Any]:
    return {
        "label": chain.label,
        "n": chain.n,
        "alpha": _fraction_str(chain.alpha),
        "states": [s.wire for s in STATES],
        "initial": {
            "counts": list(chain.counts[0].rows[0]),
            "probs": [_fraction_str(p) for p in chain.initial],
        },
        "steps": [
            {
                "step": count.step,
                "counts": [list(row) for row in count.rows],
                "probs": [
                    None if row is None else [_fraction_str(p) for p in row]
                    for row in matrix.probs
                ],
            }
            for count, matrix in zip(chain.counts[1:], chain.steps)
        ],
    }


def chain_from_dict(data: Mapping[str, Any]) -> ChainModel:
    try:
        label = data["label"]
        alpha = Fraction(data.get("alpha", 0))
        start_row = tuple(int(v) for v in data["initial"]["counts"])
        steps = data["steps"]
        rows1 = tuple(tuple(int(v) for v in row) for row in steps[0]["counts"])
        rows2 = tuple(tuple(int(v) for v in row) for row in steps[1]["counts"])
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed chain document: {exc}") from None
    chain = chain_from_counts(label, start_row, rows1, rows2, alpha)
    stated = data["initial"].get("probs")
    if stated is not None:
        if tuple(Fraction(p) for p in stated) != chain.initial:
            raise ValidationError("stated initial probabilities disagree with the counts")
    return chain


def second_order_to_dict(model: SecondOrderModel) -> dict[str, Any]:
    contexts = []
    for first in STATES:
        for second in STATES:
            idx = 3 * int(first) + int(second)
            row = model.probs[idx]
            contexts.append(
                {
                    "context": [first.wire, second.wire],
                    "counts": list(model.counts[idx]),
                    "probs": None if row is None else [_fraction_str(p) for p in row],
                }
            )
    return {"label": model.label, "n": model.n, "states": [s.wire for s in STATES], "contexts": contexts}


def _csv_cells(values) -> str:
    return ",".join(str(v) for v in values)


def chain_to_percent_csv(chain: ChainModel) -> str:
    """Percentages at one decimal, rows and columns in the study table layout."""
    lines = ["table,row,to_alert,to_normal,to_takeover"]
    initial = [format_percent(chain.initial[int(s)]) for s in _CSV_ORDER]
    lines.append(_csv_cells(["initial", "start"] + initial))
    for matrix in chain.steps:
        table = f"step_{matrix.step.replace('->', '_')}"
        for origin in _CSV_ORDER:
            row = matrix.row(origin)
            if row is None:
                cells = ["", "", ""]
            else:
                cells = [format_percent(row[int(s)]) for s in _CSV_ORDER]
            lines.append(_csv_cells([table, origin.wire] + cells))
    return "\n".join(lines) + "\n"


def chain_to_count_csv(chain: ChainModel) -> str:
    lines = ["table,row,to_alert,to_normal,to_takeover"]
    start = chain.counts[0].rows[0]
    lines.append(_csv_cells(["initial", "start"] + [start[int(s)] for s in _CSV_ORDER]))
    for count in chain.counts[1:]:
        table = f"step_{count.step.replace('->', '_')}"
        for origin in _CSV_ORDER:
            row = count.rows[int(origin)]
            lines.append(
                _csv_cells([table, origin.wire] + [row[int(s)] for s in _CSV_ORDER])
            )
    return "\n".join(lines) + "\n"
