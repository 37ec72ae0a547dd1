"""Parse and validate line-delimited trace files into datasets and state sequences."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional

from .errors import ValidationError
from .types import (
    Condition,
    DriverState,
    Environment,
    InteractionTrace,
    ParticipantProfile,
    StudyConfig,
    map_state,
    trace_from_dict,
    trace_to_json,
)


@dataclass(frozen=True, slots=True)
class RejectionRecord:
    """One invalid input line and why it was rejected."""

    source: str
    line_number: int
    reason: str
    field: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        # fixed shape so report consumers need no key checks
        return {
            "source": self.source,
            "line_number": self.line_number,
            "reason": self.reason,
            "field": self.field,
        }


@dataclass(frozen=True, slots=True)
class Provenance:
    sources: tuple[str, ...] = ()
    rejections: tuple[RejectionRecord, ...] = ()
    notes: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class Dataset:
    """Validated traces plus the audit trail of where they came from."""

    traces: tuple[InteractionTrace, ...]
    provenance: Provenance

    def __len__(self) -> int:
        return len(self.traces)


@dataclass(frozen=True, slots=True)
class StateSequence:
    """One participant's coded path through one environment.

    states is always [s0, s1, s2, s3] with s0 = Normal (the study starts every
    participant from a fully autonomous ride).
    """

    participant_id: str
    environment: Environment
    states: tuple[DriverState, DriverState, DriverState, DriverState]

    def __post_init__(self):
        states = tuple(DriverState(s) for s in self.states)
        if len(states) != 4:
            raise ValidationError("a state sequence has exactly 4 states")
        if states[0] is not DriverState.NORMAL:
            raise ValidationError("the start state is always Normal")
        object.__setattr__(self, "states", states)


def _iter_lines(source) -> tuple[str, Iterable[tuple[int, str]]]:
    """Resolve a path / bytes / text / stream input to (name, numbered lines)."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        text = path.read_text("utf-8")
        return str(path), enumerate(text.splitlines(), start=1)
    if isinstance(source, bytes):
        return "<bytes>", enumerate(source.decode("utf-8").splitlines(), start=1)
    if isinstance(source, io.TextIOBase):
        name = getattr(source, "name", "<stream>")
        return str(name), enumerate(source.read().splitlines(), start=1)
    if hasattr(source, "read"):
        raw = source.read()
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        name = getattr(source, "name", "<stream>")
        return str(name), enumerate(raw.splitlines(), start=1)
    raise TypeError(f"unsupported input source {type(source).__name__}")


def parse_dataset(source, config: StudyConfig | None = None) -> Dataset:
    """Parse one line-delimited JSON trace file.

    Every line is validated independently; invalid lines become rejection
    records (line number, reason, offending field) and never abort the file.
    Duplicate participant ids keep the first occurrence.
    """
    name, lines = _iter_lines(source)
    traces: list[InteractionTrace] = []
    rejections: list[RejectionRecord] = []
    seen_ids: set[str] = set()
    for line_number, line in lines:
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            rejections.append(RejectionRecord(name, line_number, f"malformed JSON: {exc.msg}"))
            continue
        try:
            trace = trace_from_dict(data, config)
        except ValidationError as exc:
            rejections.append(RejectionRecord(name, line_number, str(exc), exc.field))
            continue
        if trace.profile.id in seen_ids:
            rejections.append(
                RejectionRecord(
                    name,
                    line_number,
                    f"duplicate participant id {trace.profile.id!r}",
                    "profile.id",
                )
            )
            continue
        seen_ids.add(trace.profile.id)
        traces.append(trace)
    return Dataset(
        traces=tuple(traces),
        provenance=Provenance(sources=(name,), rejections=tuple(rejections)),
    )


def parse_datasets(sources, config: StudyConfig | None = None) -> Dataset:
    """Parse several trace files into one dataset, preserving input order."""
    traces: list[InteractionTrace] = []
    rejections: list[RejectionRecord] = []
    names: list[str] = []
    seen_ids: set[str] = set()
    for source in sources:
        part = parse_dataset(source, config)
        names.extend(part.provenance.sources)
        rejections.extend(part.provenance.rejections)
        for trace in part.traces:
            if trace.profile.id in seen_ids:
                rejections.append(
                    RejectionRecord(
                        part.provenance.sources[0],
                        0,
                        f"duplicate participant id {trace.profile.id!r} across files",
                        "profile.id",
                    )
                )
                continue
            seen_ids.add(trace.profile.id)
            traces.append(trace)
    return Dataset(
        traces=tuple(traces),
        provenance=Provenance(sources=tuple(names), rejections=tuple(rejections)),
    )


def serialize_dataset(dataset: Dataset) -> str:
    """Render a dataset back to its line-delimited wire form."""
    return "".join(trace_to_json(trace) + "\n" for trace in dataset.traces)


def to_state_sequences(dataset: Dataset, environment: Environment) -> list[StateSequence]:
    """Code each trace's scenes in one environment as a 4-state sequence."""
    sequences = []
    for trace in dataset.traces:
        scenes = trace.scenes(environment)
        if tuple(s.scene_index for s in scenes) != (1, 2, 3):
            raise ValidationError(
                f"participant {trace.profile.id} is missing scenes in {environment.value}",
                field="scenes",
            )
        states = (DriverState.NORMAL,) + tuple(map_state(s.loa) for s in scenes)
        sequences.append(
            StateSequence(
                participant_id=trace.profile.id,
                environment=environment,
                states=states,
            )
        )
    return sequences


def slice_dataset(
    dataset: Dataset,
    predicate: Callable[[ParticipantProfile, Condition], bool],
    label: str = "",
) -> Dataset:
    """Subset a dataset by a predicate over (profile, condition), keeping order."""
    kept = tuple(t for t in dataset.traces if predicate(t.profile, t.condition))
    notes = dict(dataset.provenance.notes)
    if label:
        notes["slice"] = f"{notes.get('slice', '')}+{label}".lstrip("+")
    return Dataset(
        traces=kept,
        provenance=Provenance(
            sources=dataset.provenance.sources,
            rejections=dataset.provenance.rejections,
            notes=notes,
        ),
    )
