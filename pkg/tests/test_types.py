"""State coding, LoA arithmetic, and the wire codec."""

import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from drivemc.errors import DomainError, ValidationError
from drivemc.types import (
    DriverState,
    Environment,
    as_loa,
    format_loa,
    load_study_config,
    loa_from_choices,
    map_state,
    parse_loa,
    trace_from_dict,
    trace_from_json,
    trace_to_dict,
    trace_to_json,
)

T, A, N = DriverState.TAKEOVER, DriverState.ALERT, DriverState.NORMAL


class TestMapState:
    @pytest.mark.parametrize(
        "loa, expected",
        [
            (Fraction(0), T),
            (Fraction(1, 2), T),  # boundary belongs to takeover
            (Fraction(501, 1000), A),
            (Fraction(1), A),
            (Fraction(3, 2), A),
            (Fraction(1999, 1000), A),
            (Fraction(2), N),  # boundary belongs to normal
            (Fraction(5, 2), N),
            (Fraction(3), N),
        ],
    )
    def test_thresholds(self, loa, expected):
        assert map_state(loa) is expected

    def test_accepts_plain_int(self):
        assert map_state(0) is T
        assert map_state(1) is A
        assert map_state(3) is N

    def test_rejects_float(self):
        with pytest.raises(DomainError):
            map_state(0.5)

    def test_rejects_bool(self):
        with pytest.raises(DomainError):
            map_state(True)

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            map_state(Fraction(-1, 10))
        with pytest.raises(DomainError):
            map_state(4)

    @given(st.fractions(min_value=0, max_value=3))
    def test_matches_interval_definition(self, loa):
        state = map_state(loa)
        if loa <= Fraction(1, 2):
            assert state is T
        elif loa >= 2:
            assert state is N
        else:
            assert state is A


class TestLoaWire:
    @pytest.mark.parametrize(
        "raw, expected",
        [
            (2, Fraction(2)),
            ("3", Fraction(3)),
            ("1/2", Fraction(1, 2)),
            ("5/3", Fraction(5, 3)),
            ("1.5", Fraction(3, 2)),  # decimal strings parse exactly
        ],
    )
    def test_parse(self, raw, expected):
        assert parse_loa(raw) == expected

    @pytest.mark.parametrize("raw", [1.5, True, None, "abc", "1/0", "4", "-1", [1]])
    def test_parse_rejects(self, raw):
        with pytest.raises(ValidationError):
            parse_loa(raw)

    def test_format_is_canonical(self):
        assert format_loa(Fraction(3)) == "3"
        assert format_loa(Fraction(2, 4)) == "1/2"
        assert parse_loa(format_loa(Fraction(5, 3))) == Fraction(5, 3)

    @given(
        st.fractions(min_value=0, max_value=3).filter(lambda f: 0 <= f <= 3)
    )
    def test_round_trip(self, loa):
        assert parse_loa(format_loa(loa)) == loa

    def test_as_loa_rejects_float_even_if_exact(self):
        with pytest.raises(DomainError):
            as_loa(2.0)


@pytest.fixture(scope="module")
def scene():
    return load_study_config().scenario(Environment.HIGHWAY).scene(1)


class TestLoaFromChoices:

    def test_single_choice(self, scene):
        assert loa_from_choices({"hw1_continue"}, scene) == Fraction(3)

    def test_mean_over_selection(self, scene):
        # levels 3 and 0 average to 3/2
        loa = loa_from_choices({"hw1_continue", "hw1_take_over"}, scene)
        assert loa == Fraction(3, 2)

    def test_set_semantics_ignore_duplicates(self, scene):
        loa = loa_from_choices(["hw1_continue", "hw1_continue", "hw1_take_over"], scene)
        assert loa == Fraction(3, 2)

    def test_unknown_choice_rejected(self, scene):
        with pytest.raises(ValidationError):
            loa_from_choices({"hw1_continue", "nope"}, scene)

    def test_empty_selection_rejected(self, scene):
        with pytest.raises(ValidationError):
            loa_from_choices(set(), scene)

    def test_full_selection_mean(self, scene):
        ids = {c.id for c in scene.choices}
        # bundled levels are (3, 2, 2, 1, 1, 0) -> mean 3/2
        assert loa_from_choices(ids, scene) == Fraction(3, 2)


def _minimal_scene(index, choice, extra=None):
    scene = {
        "scene_index": index,
        "selected_choice_ids": [choice],
        "confidence": 4,
        "comfort": 0,
        "trust_items": [{"item_label": "reliable", "polarity": 1}],
    }
    if extra:
        scene.update(extra)
    return scene


def _minimal_trace():
    scenes = {
        "highway": [_minimal_scene(i, f"hw{i}_continue") for i in (1, 2, 3)],
        "suburbs": [_minimal_scene(i, f"sb{i}_take_over") for i in (1, 2, 3)],
    }
    return {
        "profile": {"id": "p1", "age": 30, "sex": "female", "has_license": True},
        "condition": {"info_level": "high", "scenario_order": "highway_first"},
        "scenarios": [
            {"environment": "highway", "scenes": scenes["highway"]},
            {"environment": "suburbs", "scenes": scenes["suburbs"]},
        ],
    }


class TestTraceCodec:
    def test_parses_and_derives_loa(self, study_config):
        trace = trace_from_dict(_minimal_trace(), study_config)
        assert [s.loa for s in trace.scenes(Environment.HIGHWAY)] == [Fraction(3)] * 3
        assert [s.loa for s in trace.scenes(Environment.SUBURBS)] == [Fraction(0)] * 3

    def test_declared_loa_checked_against_choices(self, study_config):
        data = _minimal_trace()
        data["scenarios"][0]["scenes"][0]["loa"] = "1/2"
        with pytest.raises(ValidationError) as err:
            trace_from_dict(data, study_config)
        assert "loa" in (err.value.field or "")

    def test_matching_declared_loa_accepted(self, study_config):
        data = _minimal_trace()
        data["scenarios"][0]["scenes"][0]["loa"] = 3
        trace = trace_from_dict(data, study_config)
        assert trace.scenes(Environment.HIGHWAY)[0].loa == 3

    def test_without_config_loa_required(self):
        data = _minimal_trace()
        with pytest.raises(ValidationError) as err:
            trace_from_dict(data)
        assert err.value.field.endswith(".loa")

    def test_without_config_declared_loa_used(self):
        data = _minimal_trace()
        for scenario in data["scenarios"]:
            for scene in scenario["scenes"]:
                scene["loa"] = "1/2"
        trace = trace_from_dict(data)
        assert trace.scenes(Environment.HIGHWAY)[0].loa == Fraction(1, 2)

    def test_trust_polarity_must_match_config(self, study_config):
        data = _minimal_trace()
        data["scenarios"][0]["scenes"][0]["trust_items"] = [
            {"item_label": "reliable", "polarity": -1}
        ]
        with pytest.raises(ValidationError) as err:
            trace_from_dict(data, study_config)
        assert "polarity" in err.value.field

    def test_trust_score_mismatch_rejected(self, study_config):
        data = _minimal_trace()
        data["scenarios"][0]["scenes"][0]["trust_score"] = 99
        with pytest.raises(ValidationError):
            trace_from_dict(data, study_config)

    def test_field_paths_locate_the_bad_scene(self, study_config):
        data = _minimal_trace()
        data["scenarios"][1]["scenes"][2]["confidence"] = 9
        with pytest.raises(ValidationError) as err:
            trace_from_dict(data, study_config)
        assert err.value.field.startswith("scenarios[1].scenes[2]")

    def test_scenarios_must_cover_both_environments(self, study_config):
        data = _minimal_trace()
        data["scenarios"][1] = data["scenarios"][0]
        with pytest.raises(ValidationError):
            trace_from_dict(data, study_config)

    def test_first_scenario_must_match_declared_order(self, study_config):
        data = _minimal_trace()
        data["condition"]["scenario_order"] = "suburbs_first"
        with pytest.raises(ValidationError):
            trace_from_dict(data, study_config)

    def test_underage_rejected(self, study_config):
        data = _minimal_trace()
        data["profile"]["age"] = 17
        with pytest.raises(ValidationError) as err:
            trace_from_dict(data, study_config)
        assert err.value.field == "profile.age"

    def test_round_trip_preserves_everything(self, study_config):
        data = _minimal_trace()
        data["questionnaires"] = {"dbq": [1, 2, 3]}
        data["scenarios"][0]["scenes"][0]["free_text"] = "felt fine"
        trace = trace_from_dict(data, study_config)
        again = trace_from_dict(trace_to_dict(trace), study_config)
        assert again == trace

    def test_json_round_trip(self, study_config):
        trace = trace_from_dict(_minimal_trace(), study_config)
        assert trace_from_json(trace_to_json(trace), study_config) == trace

    def test_serialized_loa_is_a_string(self, study_config):
        trace = trace_from_dict(_minimal_trace(), study_config)
        wire = trace_to_dict(trace)
        scene = wire["scenarios"][0]["scenes"][0]
        assert scene["loa"] == "3"
        assert isinstance(scene["trust_score"], int)

    def test_corpus_round_trips(self, study_dataset, study_config):
        for trace in study_dataset.traces[:25]:
            wire = trace_to_dict(trace)
            assert trace_from_dict(json.loads(json.dumps(wire)), study_config) == trace


class TestStudyConfig:
    def test_bundled_config_shape(self, study_config):
        assert set(study_config.scenarios) == set(Environment)
        for scenario in study_config.scenarios.values():
            assert [s.scene_index for s in scenario.scenes] == [1, 2, 3]
            for scene in scenario.scenes:
                assert len(scene.choices) == 6
                levels = sorted(c.loa_level for c in scene.choices)
                assert levels == [0, 1, 1, 2, 2, 3]

    def test_trust_polarities(self, study_config):
        assert study_config.trust_polarity("reliable") == 1
        assert study_config.trust_polarity("unreliable") == -1
        with pytest.raises(ValidationError):
            study_config.trust_polarity("sturdy")
