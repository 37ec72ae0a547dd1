"""Exact marginal propagation, vectorized sampling, and total variation."""

from fractions import Fraction

import numpy as np
import pytest

from _sim import counts_from_states
from drivemc.chain import ChainModel, CountMatrix, TransitionMatrix, estimate_chain
from drivemc.errors import DomainError, UndefinedRowError
from drivemc.ingest import StateSequence
from drivemc.simulate import (
    StateDistribution,
    empirical_distribution,
    propagate,
    sample,
    sample_states,
    total_variation,
)
from drivemc.types import DriverState, Environment

T, A, N = DriverState.TAKEOVER, DriverState.ALERT, DriverState.NORMAL


def _fractions(*counts, total=206):
    return tuple(Fraction(c, total) for c in counts)


class TestPropagate:
    def test_highway_marginals(self, highway_chain):
        scene1, scene2, scene3 = propagate(highway_chain)
        assert (scene1.scene, scene2.scene, scene3.scene) == (1, 2, 3)
        assert scene1.probs == _fractions(18, 57, 131)
        assert scene2.probs == _fractions(76, 82, 48)
        assert scene3.probs == _fractions(101, 67, 38)

    def test_suburbs_marginals(self, suburbs_chain):
        scene1, scene2, scene3 = propagate(suburbs_chain)
        assert scene1.probs == _fractions(4, 17, 185)
        assert scene2.probs == _fractions(24, 54, 128)
        assert scene3.probs == _fractions(29, 42, 135)

    def test_scene2_equals_step1_column_totals(self, highway_chain, suburbs_chain):
        for chain in (highway_chain, suburbs_chain):
            scene2 = propagate(chain)[1]
            columns = chain.counts[1].column_totals()
            assert scene2.probs == tuple(Fraction(c, chain.n) for c in columns)

    def test_unreachable_undefined_row_is_fine(self):
        # nobody starts in takeover, so its undefined row never gets mass
        sequences = [
            StateSequence("a", Environment.HIGHWAY, (N, A, A, T)),
            StateSequence("b", Environment.HIGHWAY, (N, N, N, N)),
        ]
        chain = estimate_chain(sequences, label="gap")
        assert chain.steps[0].row(T) is None
        scene3 = propagate(chain)[2]
        assert sum(scene3.probs) == 1

    def test_reachable_undefined_row_raises(self):
        # hand-built model: half the mass starts in takeover yet its row is missing
        half = Fraction(1, 2)
        defined = (Fraction(1), Fraction(0), Fraction(0))
        broken = ChainModel(
            label="broken",
            n=2,
            initial=(half, Fraction(0), half),
            steps=(
                TransitionMatrix("1->2", (None, defined, defined)),
                TransitionMatrix("2->3", (defined, defined, defined)),
            ),
            counts=(
                CountMatrix("start->1", ((1, 0, 1),)),
                CountMatrix("1->2", ((0, 0, 0), (0, 0, 0), (1, 0, 0))),
                CountMatrix("2->3", ((1, 0, 0), (0, 0, 0), (0, 0, 0))),
            ),
        )
        with pytest.raises(UndefinedRowError, match="reachable"):
            propagate(broken)


class TestStateDistribution:
    def test_validates_shape_and_mass(self):
        with pytest.raises(DomainError):
            StateDistribution(scene=1, probs=(Fraction(1, 2), Fraction(1, 2)))
        with pytest.raises(DomainError):
            StateDistribution(
                scene=1, probs=(Fraction(1, 2), Fraction(1, 4), Fraction(1, 8))
            )

    def test_total_variation_examples(self, highway_chain, suburbs_chain):
        hw1 = propagate(highway_chain)[0]
        sb1 = propagate(suburbs_chain)[0]
        assert total_variation(hw1, sb1) == Fraction(27, 103)
        assert total_variation(hw1, hw1) == 0

    def test_total_variation_requires_matching_scenes(self, highway_chain):
        scene1, scene2, _ = propagate(highway_chain)
        with pytest.raises(DomainError):
            total_variation(scene1, scene2)


class TestSampling:
    def test_same_seed_same_trajectories(self, highway_chain):
        a = sample_states(highway_chain, 500, 7)
        b = sample_states(highway_chain, 500, 7)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample_states(highway_chain, 500, 8))

    def test_prefix_stability(self, highway_chain):
        # first rows do not depend on how many trajectories follow them
        small = sample_states(highway_chain, 10, 42)
        large = sample_states(highway_chain, 10_000, 42)
        assert np.array_equal(small, large[:10])

    def test_trajectory_objects_carry_states_and_seed(self, highway_chain):
        trajectories = sample(highway_chain, 5, 42)
        assert len(trajectories) == 5
        assert trajectories[0].seed == 42
        assert all(len(t.states) == 3 for t in trajectories)
        assert all(isinstance(s, DriverState) for t in trajectories for s in t.states)
        states = sample_states(highway_chain, 5, 42)
        assert [tuple(int(s) for s in t.states) for t in trajectories] == [
            tuple(int(v) for v in row) for row in states
        ]

    def test_sample_validates_arguments(self, highway_chain):
        assert sample_states(highway_chain, 0, 1).shape == (0, 3)
        with pytest.raises(DomainError):
            sample_states(highway_chain, -3, 1)

    def test_empirical_matches_propagation_closely(self, highway_chain, suburbs_chain):
        for chain in (highway_chain, suburbs_chain):
            states = sample_states(chain, 50_000, 2024)
            exact = propagate(chain)
            for scene_index in range(3):
                observed = empirical_distribution(states[:, scene_index], scene_index + 1)
                assert float(total_variation(observed, exact[scene_index])) < 0.02

    def test_sampled_counts_follow_defined_rows_only(self, suburbs_chain):
        states = sample_states(suburbs_chain, 20_000, 99)
        _, m1, _ = counts_from_states(states)
        for origin in range(3):
            row = suburbs_chain.steps[0].probs[origin]
            for dest in range(3):
                if row is not None and row[dest] == 0:
                    assert m1[origin][dest] == 0


class TestEmpiricalDistribution:
    def test_exact_fractions(self):
        dist = empirical_distribution([0, 0, 1, 2, 2, 2], scene=2)
        assert dist.scene == 2
        assert dist.probs == (Fraction(1, 3), Fraction(1, 6), Fraction(1, 2))

    def test_rejects_empty(self):
        with pytest.raises(DomainError):
            empirical_distribution([], scene=1)

    def test_rejects_unknown_state_values(self):
        with pytest.raises(DomainError):
            empirical_distribution([0, 3], scene=1)
