"""Domain vocabulary: participants, conditions, scenes, driver states, scenario config.

Everything here is an immutable value type. Levels of autonomy are exact
rationals (`fractions.Fraction`) so the state thresholds at 1/2 and 2 are
unambiguous; floats are rejected at the boundary rather than compared with
epsilons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import DomainError, ValidationError


class Sex(str, Enum):
    FEMALE = "female"
    MALE = "male"


class InfoLevel(str, Enum):
    HIGH = "high"
    LOW = "low"


class ScenarioOrder(str, Enum):
    HIGHWAY_FIRST = "highway_first"
    SUBURBS_FIRST = "suburbs_first"


class Environment(str, Enum):
    HIGHWAY = "highway"
    SUBURBS = "suburbs"


class DriverState(IntEnum):
    """Three-way behavioral abstraction of the selected level of autonomy.

    The integer codes are canonical (Takeover=0, Alert=1, Normal=2) and
    double as the display sort order.
    """

    TAKEOVER = 0
    ALERT = 1
    NORMAL = 2

    @property
    def wire(self) -> str:
        return self.name.lower()

    @property
    def letter(self) -> str:
        return self.name[0]

    @classmethod
    def from_wire(cls, text: str) -> "DriverState":
        try:
            return cls[str(text).upper()]
        except KeyError:
            raise ValidationError(f"unknown driver state {text!r}") from None


STATES: tuple[DriverState, ...] = (
    DriverState.TAKEOVER,
    DriverState.ALERT,
    DriverState.NORMAL,
)

LOA_MIN = Fraction(0)
LOA_MAX = Fraction(3)
_TAKEOVER_MAX = Fraction(1, 2)
_NORMAL_MIN = Fraction(2)


def as_loa(value) -> Fraction:
    """Coerce to an exact level-of-autonomy value in [0, 3].

    Accepts int or Fraction. Floats are rejected: the 1/2 and 2 thresholds
    demand exact arithmetic.
    """
    if isinstance(value, bool) or isinstance(value, float):
        raise DomainError("loa requires exact arithmetic; pass an int or Fraction")
    if isinstance(value, int):
        value = Fraction(value)
    if not isinstance(value, Fraction):
        raise DomainError(f"loa must be an int or Fraction, got {type(value).__name__}")
    if value < LOA_MIN or value > LOA_MAX:
        raise DomainError(f"loa {value} outside [0, 3]")
    return value


def parse_loa(raw) -> Fraction:
    """Read a level-of-autonomy value from its wire form.

    The wire form is an integer or a string such as "2", "5/3" or "1.5"
    (decimal strings are exact). Floats are rejected.
    """
    if isinstance(raw, bool) or isinstance(raw, float):
        raise ValidationError("loa must be an integer or a rational string", field="loa")
    if isinstance(raw, (int, Fraction)):
        value = raw
    elif isinstance(raw, str):
        try:
            value = Fraction(raw)
        except (ValueError, ZeroDivisionError):
            raise ValidationError(f"malformed loa {raw!r}", field="loa") from None
    else:
        raise ValidationError("loa must be an integer or a rational string", field="loa")
    try:
        return as_loa(value)
    except DomainError as exc:
        raise ValidationError(str(exc), field="loa") from None


def format_loa(value: Fraction) -> str:
    """Canonical wire form: "3", "1/2", "5/3"."""
    return str(as_loa(value))


def map_state(loa) -> DriverState:
    """Code a level of autonomy as a driver state.

    Takeover iff loa <= 1/2, Normal iff loa >= 2, Alert strictly between.
    Comparisons are exact rational comparisons.
    """
    value = as_loa(loa)
    if value <= _TAKEOVER_MAX:
        return DriverState.TAKEOVER
    if value < _NORMAL_MIN:
        return DriverState.ALERT
    return DriverState.NORMAL


# --------------------------------------------------------------------------
# Scenario configuration


@dataclass(frozen=True, slots=True)
class Choice:
    id: str
    text: str
    loa_level: int


@dataclass(frozen=True, slots=True)
class SceneConfig:
    scene_index: int
    narration: str
    image: str
    info_panels: Mapping[str, Any]
    choices: tuple[Choice, ...]

    def level_of(self, choice_id: str) -> int:
        for choice in self.choices:
            if choice.id == choice_id:
                return choice.loa_level
        raise ValidationError(
            f"unknown choice id {choice_id!r} for scene {self.scene_index}",
            field="selected_choice_ids",
        )


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    environment: Environment
    scenes: tuple[SceneConfig, ...]

    def scene(self, scene_index: int) -> SceneConfig:
        for scene in self.scenes:
            if scene.scene_index == scene_index:
                return scene
        raise ValidationError(f"no scene {scene_index} in {self.environment.value} scenario")


@dataclass(frozen=True, slots=True)
class ComfortOption:
    id: str
    text: str
    value: int


@dataclass(frozen=True, slots=True)
class TrustOption:
    item_label: str
    text: str
    polarity: int


@dataclass(frozen=True, slots=True)
class StudyConfig:
    """Scenario content plus the questionnaire item banks, one source of truth
    shared by ingestion and the scenario runner UI."""

    scenarios: Mapping[Environment, ScenarioConfig]
    confidence_scale: tuple[str, ...]
    comfort_options: tuple[ComfortOption, ...]
    trust_options: tuple[TrustOption, ...]
    raw: Mapping[str, Any]

    def scenario(self, environment: Environment) -> ScenarioConfig:
        return self.scenarios[environment]

    def trust_polarity(self, item_label: str) -> int:
        for option in self.trust_options:
            if option.item_label == item_label:
                return option.polarity
        raise ValidationError(f"unknown trust item {item_label!r}", field="trust_items")


def _config_scene(entry: Mapping[str, Any], environment: Environment) -> SceneConfig:
    choices = []
    seen = set()
    for raw in entry["choices"]:
        choice = Choice(id=raw["id"], text=raw["text"], loa_level=int(raw["loa_level"]))
        if choice.loa_level not in (0, 1, 2, 3):
            raise ValidationError(f"choice {choice.id!r} has loa_level outside 0..3")
        if choice.id in seen:
            raise ValidationError(f"duplicate choice id {choice.id!r}")
        seen.add(choice.id)
        choices.append(choice)
    if len(choices) < 2:
        raise ValidationError(f"scene {entry['scene_index']} of {environment.value} needs >= 2 choices")
    return SceneConfig(
        scene_index=int(entry["scene_index"]),
        narration=entry["narration"],
        image=entry["image"],
        info_panels=entry["info_panels"],
        choices=tuple(choices),
    )


def study_config_from_dict(document: Mapping[str, Any]) -> StudyConfig:
    scenarios: dict[Environment, ScenarioConfig] = {}
    for raw in document["scenarios"]:
        environment = Environment(raw["environment"])
        scenes = tuple(_config_scene(entry, environment) for entry in raw["scenes"])
        if tuple(s.scene_index for s in scenes) != (1, 2, 3):
            raise ValidationError(f"{environment.value} scenario must have scenes 1, 2, 3 in order")
        if environment in scenarios:
            raise ValidationError(f"duplicate scenario for {environment.value}")
        scenarios[environment] = ScenarioConfig(environment=environment, scenes=scenes)
    missing = [env.value for env in Environment if env not in scenarios]
    if missing:
        raise ValidationError(f"config missing scenarios: {', '.join(missing)}")

    confidence = tuple(str(label) for label in document["confidence_scale"])
    if len(confidence) != 5:
        raise ValidationError("confidence_scale must have exactly 5 labels")

    comfort = tuple(
        ComfortOption(id=o["id"], text=o["text"], value=int(o["value"]))
        for o in document["comfort_options"]
    )
    if any(o.value not in (-1, 0, 1) for o in comfort):
        raise ValidationError("comfort option values must be -1, 0 or 1")

    trust = tuple(
        TrustOption(item_label=o["item_label"], text=o["text"], polarity=int(o["polarity"]))
        for o in document["trust_options"]
    )
    if any(o.polarity not in (-1, 1) for o in trust):
        raise ValidationError("trust option polarity must be +1 or -1")
    labels = [o.item_label for o in trust]
    if len(labels) != len(set(labels)):
        raise ValidationError("trust item labels must be unique")

    return StudyConfig(
        scenarios=scenarios,
        confidence_scale=confidence,
        comfort_options=comfort,
        trust_options=trust,
        raw=document,
    )


def load_study_config(path: str | Path | None = None) -> StudyConfig:
    """Load a scenario config file; the bundled one when no path is given."""
    if path is None:
        text = resources.files("drivemc.data").joinpath("scenario.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return study_config_from_dict(json.loads(text))


def loa_from_choices(selected, scene_config: SceneConfig) -> Fraction:
    """Exact mean autonomy level over a non-empty set of selected choices."""
    ids = set(selected)
    if not ids:
        raise ValidationError("selection must not be empty", field="selected_choice_ids")
    levels = [scene_config.level_of(cid) for cid in sorted(ids)]
    return Fraction(sum(levels), len(levels))


# --------------------------------------------------------------------------
# Trace value types


@dataclass(frozen=True, slots=True)
class ParticipantProfile:
    id: str
    age: int
    sex: Sex
    has_license: bool
    gender: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("participant id must be a non-empty string", field="profile.id")
        if isinstance(self.age, bool) or not isinstance(self.age, int) or self.age < 18:
            raise ValidationError("age must be an integer >= 18", field="profile.age")
        if not isinstance(self.sex, Sex):
            raise ValidationError("sex must be a Sex value", field="profile.sex")
        if not isinstance(self.has_license, bool):
            raise ValidationError("has_license must be a boolean", field="profile.has_license")
        if self.gender is not None and not isinstance(self.gender, str):
            raise ValidationError("gender must be a string when present", field="profile.gender")


@dataclass(frozen=True, slots=True)
class Condition:
    info_level: InfoLevel
    scenario_order: ScenarioOrder

    def __post_init__(self):
        if not isinstance(self.info_level, InfoLevel):
            raise ValidationError("info_level must be an InfoLevel value", field="condition.info_level")
        if not isinstance(self.scenario_order, ScenarioOrder):
            raise ValidationError(
                "scenario_order must be a ScenarioOrder value", field="condition.scenario_order"
            )


@dataclass(frozen=True, slots=True)
class SceneResponse:
    scene_index: int
    selected_choice_ids: frozenset[str]
    loa: Fraction
    confidence: int
    comfort: int
    trust_items: tuple[tuple[str, int], ...]
    trust_score: int
    free_text: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.scene_index, bool) or self.scene_index not in (1, 2, 3):
            raise ValidationError("scene_index must be 1, 2 or 3", field="scene_index")
        ids = frozenset(self.selected_choice_ids)
        if not ids or not all(isinstance(c, str) and c for c in ids):
            raise ValidationError(
                "selected_choice_ids must be a non-empty set of ids", field="selected_choice_ids"
            )
        object.__setattr__(self, "selected_choice_ids", ids)
        try:
            object.__setattr__(self, "loa", as_loa(self.loa))
        except DomainError as exc:
            raise ValidationError(str(exc), field="loa") from None
        if isinstance(self.confidence, bool) or self.confidence not in (1, 2, 3, 4, 5):
            raise ValidationError("confidence must be an integer 1..5", field="confidence")
        if isinstance(self.comfort, bool) or self.comfort not in (-1, 0, 1):
            raise ValidationError("comfort must be -1, 0 or 1", field="comfort")
        items = []
        for entry in self.trust_items:
            label, pol = entry
            if isinstance(pol, bool) or not isinstance(pol, int) or pol not in (-1, 1):
                raise ValidationError("trust item polarity must be +1 or -1", field="trust_items")
            items.append((str(label), pol))
        items = tuple(items)
        if len({label for label, _ in items}) != len(items):
            raise ValidationError("trust item labels must be unique", field="trust_items")
        object.__setattr__(self, "trust_items", items)
        if isinstance(self.trust_score, bool) or not isinstance(self.trust_score, int):
            raise ValidationError("trust_score must be an integer", field="trust_score")
        if self.trust_score != sum(pol for _, pol in items):
            raise ValidationError(
                "trust_score must equal the sum of trust item polarities", field="trust_score"
            )
        if self.free_text is not None and not isinstance(self.free_text, str):
            raise ValidationError("free_text must be a string when present", field="free_text")

    @property
    def state(self) -> DriverState:
        return map_state(self.loa)


@dataclass(frozen=True, slots=True)
class InteractionTrace:
    profile: ParticipantProfile
    condition: Condition
    scenarios: tuple[tuple[Environment, tuple[SceneResponse, ...]], ...]
    questionnaires: Optional[Mapping[str, Any]] = None

    def __post_init__(self):
        scenarios = tuple((env, tuple(scenes)) for env, scenes in self.scenarios)
        object.__setattr__(self, "scenarios", scenarios)
        if len(scenarios) != 2:
            raise ValidationError("a trace must contain exactly two scenarios", field="scenarios")
        envs = [env for env, _ in scenarios]
        if set(envs) != {Environment.HIGHWAY, Environment.SUBURBS}:
            raise ValidationError(
                "scenarios must cover highway and suburbs exactly once", field="scenarios"
            )
        first = (
            Environment.HIGHWAY
            if self.condition.scenario_order is ScenarioOrder.HIGHWAY_FIRST
            else Environment.SUBURBS
        )
        if envs[0] is not first:
            raise ValidationError(
                f"scenario order must follow the condition ({first.value} first)",
                field="scenarios",
            )
        for position, (env, scenes) in enumerate(scenarios):
            indices = tuple(s.scene_index for s in scenes)
            if indices != (1, 2, 3):
                raise ValidationError(
                    f"{env.value} scenario must have scenes 1, 2, 3 exactly once",
                    field=f"scenarios[{position}].scenes",
                )

    def scenes(self, environment: Environment) -> tuple[SceneResponse, ...]:
        for env, scenes in self.scenarios:
            if env is environment:
                return scenes
        raise ValidationError(
            f"trace {self.profile.id} has no {environment.value} scenario",
            field="scenarios",
        )


# --------------------------------------------------------------------------
# Wire codec (one JSON object per trace; see docs/trace.schema.json)


def _require(data: Mapping[str, Any], key: str, path: str):
    if key not in data:
        raise ValidationError(f"missing field {key!r}", field=f"{path}.{key}" if path else key)
    return data[key]


def _enum(cls, raw, field_path: str):
    try:
        return cls(raw)
    except ValueError:
        allowed = ", ".join(member.value for member in cls)
        raise ValidationError(
            f"expected one of: {allowed}; got {raw!r}", field=field_path
        ) from None


def scene_response_from_dict(
    data: Mapping[str, Any],
    path: str,
    scene_config: SceneConfig | None = None,
    study_config: StudyConfig | None = None,
) -> SceneResponse:
    if not isinstance(data, Mapping):
        raise ValidationError("scene must be an object", field=path)
    scene_index = _require(data, "scene_index", path)
    raw_ids = _require(data, "selected_choice_ids", path)
    if not isinstance(raw_ids, (list, tuple)) or not raw_ids:
        raise ValidationError(
            "selected_choice_ids must be a non-empty array",
            field=f"{path}.selected_choice_ids",
        )
    ids = frozenset(str(c) for c in raw_ids)

    raw_items = _require(data, "trust_items", path)
    if not isinstance(raw_items, (list, tuple)):
        raise ValidationError("trust_items must be an array", field=f"{path}.trust_items")
    items = []
    for i, entry in enumerate(raw_items):
        if not isinstance(entry, Mapping) or "item_label" not in entry or "polarity" not in entry:
            raise ValidationError(
                "trust item must be an object with item_label and polarity",
                field=f"{path}.trust_items[{i}]",
            )
        items.append((str(entry["item_label"]), entry["polarity"]))
        if study_config is not None:
            try:
                expected = study_config.trust_polarity(str(entry["item_label"]))
            except ValidationError as exc:
                raise ValidationError(
                    str(exc), field=f"{path}.trust_items[{i}].item_label"
                ) from None
            if expected != entry["polarity"]:
                raise ValidationError(
                    f"trust item {entry['item_label']!r} has polarity {expected} in the config",
                    field=f"{path}.trust_items[{i}].polarity",
                )

    derived = None
    if scene_config is not None:
        try:
            derived = loa_from_choices(ids, scene_config)
        except ValidationError as exc:
            raise ValidationError(str(exc), field=f"{path}.selected_choice_ids") from None
    if "loa" in data:
        try:
            loa = parse_loa(data["loa"])
        except ValidationError as exc:
            raise ValidationError(str(exc), field=f"{path}.loa") from None
        if derived is not None and loa != derived:
            raise ValidationError(
                f"loa {loa} does not match the selected choices (expected {derived})",
                field=f"{path}.loa",
            )
    elif derived is not None:
        loa = derived
    else:
        raise ValidationError(
            "loa is required when no scenario config is available to derive it",
            field=f"{path}.loa",
        )

    score_sum = 0
    for _, pol in items:
        if pol in (-1, 1):
            score_sum += pol
    trust_score = data.get("trust_score", score_sum)

    try:
        return SceneResponse(
            scene_index=scene_index,
            selected_choice_ids=ids,
            loa=loa,
            confidence=_require(data, "confidence", path),
            comfort=_require(data, "comfort", path),
            trust_items=tuple(items),
            trust_score=trust_score,
            free_text=data.get("free_text"),
        )
    except ValidationError as exc:
        if exc.field and exc.field.startswith(path):
            raise
        raise ValidationError(str(exc), field=f"{path}.{exc.field}" if exc.field else path) from None


def trace_from_dict(
    data: Mapping[str, Any], config: StudyConfig | None = None
) -> InteractionTrace:
    """Build a validated trace from its wire form.

    When a study config is given, per-scene loa values are derived from the
    selected choice ids (and checked for consistency when also present), and
    choice/trust ids are validated against the config. Without a config the
    loa field is required verbatim.
    """
    if not isinstance(data, Mapping):
        raise ValidationError("trace must be a JSON object")

    raw_profile = _require(data, "profile", "")
    if not isinstance(raw_profile, Mapping):
        raise ValidationError("profile must be an object", field="profile")
    profile = ParticipantProfile(
        id=_require(raw_profile, "id", "profile"),
        age=_require(raw_profile, "age", "profile"),
        sex=_enum(Sex, _require(raw_profile, "sex", "profile"), "profile.sex"),
        has_license=_require(raw_profile, "has_license", "profile"),
        gender=raw_profile.get("gender"),
    )

    raw_condition = _require(data, "condition", "")
    if not isinstance(raw_condition, Mapping):
        raise ValidationError("condition must be an object", field="condition")
    condition = Condition(
        info_level=_enum(
            InfoLevel, _require(raw_condition, "info_level", "condition"), "condition.info_level"
        ),
        scenario_order=_enum(
            ScenarioOrder,
            _require(raw_condition, "scenario_order", "condition"),
            "condition.scenario_order",
        ),
    )

    raw_scenarios = _require(data, "scenarios", "")
    if not isinstance(raw_scenarios, (list, tuple)) or len(raw_scenarios) != 2:
        raise ValidationError("scenarios must be an array of two entries", field="scenarios")
    scenarios = []
    for position, raw in enumerate(raw_scenarios):
        spath = f"scenarios[{position}]"
        if not isinstance(raw, Mapping):
            raise ValidationError("scenario must be an object", field=spath)
        environment = _enum(
            Environment, _require(raw, "environment", spath), f"{spath}.environment"
        )
        raw_scenes = _require(raw, "scenes", spath)
        if not isinstance(raw_scenes, (list, tuple)) or len(raw_scenes) != 3:
            raise ValidationError(
                "scenes must be an array of three entries", field=f"{spath}.scenes"
            )
        scenario_config = config.scenario(environment) if config is not None else None
        scenes = []
        for i, raw_scene in enumerate(raw_scenes):
            scene_path = f"{spath}.scenes[{i}]"
            scene_config = None
            if scenario_config is not None and isinstance(raw_scene, Mapping):
                idx = raw_scene.get("scene_index")
                if idx in (1, 2, 3):
                    scene_config = scenario_config.scene(idx)
            scenes.append(
                scene_response_from_dict(raw_scene, scene_path, scene_config, config)
            )
        scenarios.append((environment, tuple(scenes)))

    questionnaires = data.get("questionnaires")
    if questionnaires is not None and not isinstance(questionnaires, Mapping):
        raise ValidationError("questionnaires must be an object when present", field="questionnaires")

    return InteractionTrace(
        profile=profile,
        condition=condition,
        scenarios=tuple(scenarios),
        questionnaires=questionnaires,
    )


def scene_response_to_dict(scene: SceneResponse) -> dict[str, Any]:
    out: dict[str, Any] = {
        "scene_index": scene.scene_index,
        "selected_choice_ids": sorted(scene.selected_choice_ids),
        "loa": format_loa(scene.loa),
        "confidence": scene.confidence,
        "comfort": scene.comfort,
        "trust_items": [
            {"item_label": label, "polarity": pol} for label, pol in scene.trust_items
        ],
        "trust_score": scene.trust_score,
    }
    if scene.free_text is not None:
        out["free_text"] = scene.free_text
    return out


def trace_to_dict(trace: InteractionTrace) -> dict[str, Any]:
    profile: dict[str, Any] = {
        "id": trace.profile.id,
        "age": trace.profile.age,
        "sex": trace.profile.sex.value,
        "has_license": trace.profile.has_license,
    }
    if trace.profile.gender is not None:
        profile["gender"] = trace.profile.gender
    out: dict[str, Any] = {
        "profile": profile,
        "condition": {
            "info_level": trace.condition.info_level.value,
            "scenario_order": trace.condition.scenario_order.value,
        },
        "scenarios": [
            {
                "environment": env.value,
                "scenes": [scene_response_to_dict(s) for s in scenes],
            }
            for env, scenes in trace.scenarios
        ],
    }
    if trace.questionnaires is not None:
        out["questionnaires"] = dict(trace.questionnaires)
    return out


def trace_to_json(trace: InteractionTrace) -> str:
    return json.dumps(trace_to_dict(trace), separators=(",", ":"))


def trace_from_json(line: str, config: StudyConfig | None = None) -> InteractionTrace:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON: {exc.msg}") from None
    return trace_from_dict(data, config)
