import math

import numpy as np
import pytest

from ambsim import dualavg, engine, objectives, timing, topology


def small_config(**overrides):
    model = objectives.make_linear_regression(6, 1e-2, seed=3)
    defaults = dict(
        mode="amb",
        graph=topology.testbed_graph(),
        objective=model,
        timing=timing.ShiftedExponential(rate=2 / 3, shift=1.0, reference_batch=60),
        schedule=dualavg.Schedule(offset=10.0, work_scale=600.0),
        comm_time=1.0,
        tau=5,
        radius=10.0,
        seed=17,
        compute_time=2.5,
        rounds=5,
    )
    defaults.update(overrides)
    return engine.RunConfig(**defaults)


class TestConfigValidation:
    def test_mode_specific_requirements(self):
        with pytest.raises(ValueError, match="compute_time"):
            small_config(compute_time=None)
        with pytest.raises(ValueError, match="batch"):
            small_config(mode="fmb", compute_time=None, batch=None)
        with pytest.raises(ValueError, match="single-node"):
            small_config(mode="serial", rounds="exact")

    def test_round_spec_validation(self):
        with pytest.raises(ValueError):
            small_config(rounds=0)
        with pytest.raises(ValueError):
            small_config(rounds=("uniform", 0, 4))
        with pytest.raises(ValueError):
            small_config(rounds="sometimes")


class TestComputePhase:
    def test_deterministic_batch_sizes(self):
        cfg = small_config(
            graph=topology.complete_graph(2),
            timing=timing.DeterministicTiming(period=1.0, reference_batch=1),
            compute_time=3.0,
        )
        b, a, _ = engine._compute_phase(cfg, 1)
        assert list(b) == [3, 3]
        assert int(b.sum()) == 6
        assert list(a) == [1, 1]

    def test_floor_formula_reference_case(self):
        # 600-gradient pairing: batch time 2.5 for 60 gradients, window 2.5.
        cfg = small_config(
            timing=timing.DeterministicTiming(period=2.5, reference_batch=60),
            compute_time=2.5,
        )
        b, _, _ = engine._compute_phase(cfg, 1)
        assert all(b == 60)

    def test_fmb_remainder_rule(self):
        assert list(engine._fmb_batches(7, 3)) == [3, 2, 2]
        assert list(engine._fmb_batches(600, 10)) == [60] * 10

    def test_matched_compute_time(self):
        assert engine.matched_compute_time(600, 10, 2.5) == pytest.approx((1 + 10 / 600) * 2.5)
        assert engine.matched_compute_time(10**9, 10, 2.5) == pytest.approx(2.5, abs=1e-6)
        assert engine.matched_compute_time(60_000, 10, 14.5) == pytest.approx(14.5, abs=3e-3)


class TestConsensus:
    def test_mass_conservation_each_round(self):
        rng = np.random.default_rng(0)
        p = topology.build_consensus_matrix(topology.testbed_graph()).matrix
        values = rng.standard_normal((10, 4)) * 50
        total = values.sum(axis=0)
        current = values
        for _ in range(20):
            current = engine.average_consensus(p, current, 1)
            assert np.abs(current.sum(axis=0) - total).max() <= 1e-9 * np.abs(total).max()

    def test_geometric_contraction_in_disagreement(self):
        rng = np.random.default_rng(1)
        cm = topology.build_consensus_matrix(topology.testbed_graph())
        values = rng.standard_normal((10, 3))
        mean = values.mean(axis=0)
        initial = np.linalg.norm(values - mean)
        for r in range(1, 21):
            out = engine.average_consensus(cm.matrix, values, r)
            assert np.linalg.norm(out - mean) <= cm.lambda2**r * initial * (1 + 1e-9)

    def test_exact_mode_matches_error_free_dual(self):
        cfg = small_config(rounds="exact", tau=4)
        trace = engine.run(cfg)
        assert max(r.consensus_error for r in trace.records) <= 1e-9

    def test_finite_rounds_with_exact_normalization(self):
        cfg = small_config(rounds=30, exact_batch_norm=True, tau=3)
        trace = engine.run(cfg)
        # 30 rounds of a 0.944-mixing matrix shrink disagreement by ~0.18;
        # errors must decay well below the initial message spread.
        assert all(r.consensus_error < 1.0 for r in trace.records)

    def test_per_node_round_draws_are_in_range(self):
        cfg = small_config(rounds=("uniform", 2, 6), tau=3)
        trace = engine.run(cfg)
        for record in trace.records:
            assert record.rounds_used.min() >= 2
            assert record.rounds_used.max() <= 6

    def test_degenerate_batch_share_keeps_dual(self):
        # Path graph: node 0 is two hops from the only node with work, so a
        # single round leaves its batch-share estimate at zero.
        table = ((100.0,), (100.0,), (0.5,))
        cfg = small_config(
            graph=topology.make_graph(3, [(0, 1), (1, 2)]),
            timing=timing.TraceTiming(table=table, reference_batch=1),
            compute_time=1.0,
            rounds=1,
            tau=1,
        )
        trace = engine.run(cfg)
        record = trace.records[0]
        assert record.batch_sizes[0] == 0 and record.batch_sizes[2] == 2
        assert record.degenerate_nodes == 1


class TestWallClock:
    def test_amb_wall_clock_is_exact(self):
        cfg = small_config(tau=50)
        trace = engine.run(cfg)
        assert trace.wall[-1] == 50 * (cfg.compute_time + cfg.comm_time)
        for k, record in enumerate(trace.records, start=1):
            assert record.wall_end == k * (cfg.compute_time + cfg.comm_time)

    def test_fmb_wall_clock_accumulates_maxima(self):
        cfg = small_config(mode="fmb", compute_time=None, batch=600, tau=8)
        trace = engine.run(cfg)
        expected = 0.0
        for t, record in enumerate(trace.records, start=1):
            draws = [cfg.timing.batch_time(i, t, cfg.seed) for i in range(10)]
            expected += max(draws) + cfg.comm_time
            assert record.compute_duration == pytest.approx(max(draws), abs=1e-12)
        assert trace.wall[-1] == pytest.approx(expected, abs=1e-9)

    def test_fmb_uneven_batch_durations(self):
        cfg = small_config(mode="fmb", compute_time=None, batch=7,
                           graph=topology.complete_graph(3),
                           timing=timing.DeterministicTiming(period=3.0, reference_batch=7),
                           tau=1)
        trace = engine.run(cfg)
        record = trace.records[0]
        assert list(record.batch_sizes) == [3, 2, 2]
        assert record.compute_duration == pytest.approx(3 * 3.0 / 7)


class TestEmptyBatch:
    def test_flagged_and_dual_carried(self):
        cfg = small_config(
            timing=timing.DeterministicTiming(period=10.0, reference_batch=1),
            compute_time=3.0,
            tau=2,
        )
        trace = engine.run(cfg)
        assert all(r.empty_batch for r in trace.records)
        assert all(r.global_batch == 0 for r in trace.records)
        # duals started at zero and no gradients were taken, so they stay zero
        assert np.abs(trace.records[-1].primal_after).max() == 0.0


class TestSerialEquivalence:
    def test_serial_mode_equals_single_node_run(self):
        model = objectives.make_linear_regression(5, 1e-2, seed=4)
        shared = dict(
            objective=model,
            timing=timing.ShiftedExponential(rate=1.0, shift=0.5, reference_batch=10),
            schedule=dualavg.Schedule(offset=8.0, work_scale=50.0),
            comm_time=0.4, tau=10, radius=6.0, seed=9, compute_time=1.5,
            rounds="exact", exact_batch_norm=True,
        )
        serial = engine.run(engine.RunConfig(mode="serial", graph=topology.complete_graph(1), **shared))
        amb = engine.run(engine.RunConfig(mode="amb", graph=topology.complete_graph(1), **shared))
        for rs, ra in zip(serial.records, amb.records):
            assert np.array_equal(rs.primal_after, ra.primal_after)


class TestDeterminism:
    def test_identical_runs_are_bitwise_equal(self):
        for overrides in (
            dict(rounds=("uniform", 2, 6)),
            dict(timing=timing.GroupedPauseTiming.default_groups(base_gradient_time=0.2),
                 compute_time=3.0),
        ):
            a = engine.run(small_config(tau=4, **overrides))
            b = engine.run(small_config(tau=4, **overrides))
            for ra, rb in zip(a.records, b.records):
                assert np.array_equal(ra.primal_after, rb.primal_after)
                assert np.array_equal(ra.batch_sizes, rb.batch_sizes)
                assert np.array_equal(ra.batch_times, rb.batch_times)
                assert ra.consensus_error == rb.consensus_error

    def test_zero_epochs(self):
        trace = engine.run(small_config(tau=0))
        assert trace.tau == 0
        assert trace.records == []


class TestGroupedPauseIntegration:
    def test_amb_pauses_reduce_batches(self):
        pauses = timing.GroupedPauseTiming.default_groups(base_gradient_time=1.0)
        cfg = small_config(timing=pauses, compute_time=30.0, tau=2)
        trace = engine.run(cfg)
        record = trace.records[0]
        # group 0 nodes (~mean pause 5) finish about 30/6 gradients; group 4
        # nodes (~mean pause 55) rarely finish more than one.
        assert record.batch_sizes[0] >= record.batch_sizes[9]
        assert record.batch_sizes.max() <= 30

    def test_fmb_durations_include_pauses(self):
        pauses = timing.GroupedPauseTiming(group_means=(2.0,), group_vars=(0.0,),
                                           assignment=(0, 0), base_gradient_time=1.0)
        cfg = small_config(mode="fmb", compute_time=None, batch=6,
                           graph=topology.complete_graph(2), timing=pauses, tau=1)
        trace = engine.run(cfg)
        # 3 gradients of 1s with 2 pauses of 2s each.
        assert trace.records[0].compute_duration == pytest.approx(3.0 + 4.0)
