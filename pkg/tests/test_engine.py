import pytest

from anchorcache.engine import Engine, EngineConfig, run_engine
from anchorcache.errors import DimensionError, InvariantViolation, StateError
from anchorcache.memory import CacheConfig, Region, reconstruct_regions
from anchorcache.model import ModelConfig
from anchorcache.recache import Strategy
from anchorcache.rope import RopeConfig, RopeMode
from anchorcache.trace import canonical_dumps

from tests.helpers import make_schedule


class TestRun:
    def test_single_prompt_run_shape(self, no_switch):
        traces = run_engine(no_switch, EngineConfig())
        assert len(traces) == 30
        assert all(t.segment == 0 for t in traces)
        assert all(t.delta is False for t in traces)
        assert [t.t for t in traces] == list(range(30))

    def test_junction_region_from_activation_onwards(self, one_switch):
        traces = run_engine(one_switch, EngineConfig(strategy=Strategy.ANCHOR))
        for trace in traces:
            junction = sorted(
                e.frame for e in trace.regions if e.region is Region.JUNCTION
            )
            if trace.t >= 24:
                assert junction == [12, 13, 14]
                positions = [
                    e.position for e in trace.regions if e.region is Region.JUNCTION
                ]
                assert positions == [9, 10, 11]
            else:
                assert junction == []

    def test_first_junction_bearing_frame_is_exact(self, one_switch):
        traces = run_engine(one_switch, EngineConfig())
        first = next(
            t.t for t in traces if any(e.region is Region.JUNCTION for e in t.regions)
        )
        assert first == 24

    def test_unbounded_positions_grow_with_stream(self):
        sched = make_schedule([], 60)
        traces = run_engine(sched, EngineConfig(rope_mode=RopeMode.UNBOUNDED))
        max_pos = max(
            max((e.position for e in t.regions), default=0) for t in traces
        )
        max_pos = max(max_pos, max(t.query_position for t in traces))
        assert max_pos == 59
        violating = [t.t for t in traces if t.query_position > 21]
        assert violating == list(range(22, 60))

    def test_segment_field_tracks_boundaries(self):
        sched = make_schedule([10, 20], 30, seeds=[1, 2, 3])
        traces = run_engine(sched, EngineConfig())
        assert [t.segment for t in traces] == [0] * 10 + [1] * 10 + [2] * 10

    def test_trace_regions_match_oracle(self, one_switch):
        config = EngineConfig()
        engine = Engine(one_switch, config)
        traces = engine.run()
        for trace in traces:
            expected = {
                (r.value, f)
                for r, f in reconstruct_regions(
                    trace.t, one_switch, config.cache,
                    engine.history.refreshes, engine.history.restarts,
                )
            }
            assert trace.region_pairs() == expected


class TestStep:
    def test_step_reproduces_run(self, one_switch):
        by_run = run_engine(one_switch, EngineConfig())
        engine = Engine(one_switch, EngineConfig())
        by_step = [engine.step() for _ in range(one_switch.total_frames)]
        assert [canonical_dumps(t.to_dict()) for t in by_step] == [
            canonical_dumps(t.to_dict()) for t in by_run
        ]

    def test_boundary_step_increments_segment(self, one_switch):
        engine = Engine(one_switch, EngineConfig())
        prev = None
        for _ in range(14):
            trace = engine.step()
            if trace.t == 12:
                assert trace.segment == prev + 1
            elif prev is not None:
                assert trace.segment == prev
            prev = trace.segment

    def test_step_past_end_rejected(self, no_switch):
        engine = Engine(no_switch, EngineConfig())
        engine.run()
        with pytest.raises(StateError):
            engine.step()


class TestCheckedMode:
    def test_unbounded_aborts_at_first_breach(self, one_switch):
        config = EngineConfig(rope_mode=RopeMode.UNBOUNDED, checked=True)
        engine = Engine(one_switch, config)
        with pytest.raises(InvariantViolation) as exc:
            engine.run()
        assert exc.value.invariant == "position-bound"
        assert exc.value.frame == 22

    def test_tri_and_bounded_run_clean(self, one_switch):
        for mode in (RopeMode.TRI, RopeMode.BOUNDED):
            config = EngineConfig(rope_mode=mode, checked=True)
            traces = run_engine(one_switch, config)
            assert len(traces) == one_switch.total_frames

    def test_checked_matches_unchecked_traces(self, one_switch):
        a = run_engine(one_switch, EngineConfig(checked=True))
        b = run_engine(one_switch, EngineConfig(checked=False))
        assert [t.to_dict() for t in a] == [t.to_dict() for t in b]


class TestConfig:
    def test_mismatched_head_dims_rejected(self):
        with pytest.raises(DimensionError):
            EngineConfig(rope=RopeConfig(head_dim=4), model=ModelConfig())

    def test_overlap_warning(self):
        config = EngineConfig(
            cache=CacheConfig(window=20), rope=RopeConfig(p_max=21)
        )
        assert config.warnings()
        assert EngineConfig().warnings() == []

    def test_round_trip(self):
        config = EngineConfig(
            strategy=Strategy.FLUSH, rope_mode=RopeMode.BOUNDED, noise_seed=9
        )
        assert EngineConfig.from_dict(config.to_dict()) == config

    def test_schedule_model_width_mismatch_rejected(self):
        sched = make_schedule([], 10, d_model=16)
        with pytest.raises(DimensionError):
            Engine(sched, EngineConfig())


class TestSnapshot:
    @pytest.mark.parametrize("snap_at", [0, 5, 12, 13, 24, 33])
    def test_restore_reproduces_remaining_trace(self, one_switch, snap_at):
        config = EngineConfig(strategy=Strategy.ANCHOR)
        full = [t.to_dict() for t in run_engine(one_switch, config)]
        engine = Engine(one_switch, config)
        for _ in range(snap_at):
            engine.step()
        snap = engine.snapshot()
        restored = Engine.restore(snap)
        assert restored.t == snap_at
        rest = [restored.step().to_dict() for _ in range(snap_at, one_switch.total_frames)]
        assert [canonical_dumps(d) for d in rest] == [
            canonical_dumps(d) for d in full[snap_at:]
        ]

    def test_snapshot_is_json_serializable(self, one_switch):
        import json

        engine = Engine(one_switch, EngineConfig())
        for _ in range(14):
            engine.step()
        blob = json.dumps(engine.snapshot())
        restored = Engine.restore(json.loads(blob))
        assert restored.t == 14

    def test_snapshot_mid_collection_keeps_pending(self, one_switch):
        engine = Engine(one_switch, EngineConfig(strategy=Strategy.ANCHOR))
        for _ in range(13):
            engine.step()
        snap = engine.snapshot()
        assert snap["pending"] is not None
        restored = Engine.restore(snap)
        restored.step()
        restored.step()
        assert [e.frame for e in restored.state.junction] == [12, 13, 14]

    def test_unknown_version_rejected(self, one_switch):
        engine = Engine(one_switch, EngineConfig())
        snap = engine.snapshot()
        snap["version"] = 99
        with pytest.raises(StateError):
            Engine.restore(snap)

    def test_restore_preserves_checked_mode_history(self, one_switch):
        # Checked-mode membership re-derivation needs the refresh/restart log
        # to survive the snapshot.
        config = EngineConfig(strategy=Strategy.ANCHOR, checked=True)
        engine = Engine(one_switch, config)
        for _ in range(20):
            engine.step()
        restored = Engine.restore(engine.snapshot())
        assert restored.history.refreshes == {12: (12, 13, 14)}
        rest = restored.run()
        assert rest[-1].t == one_switch.total_frames - 1


class TestEdgeConfigs:
    """Awkward geometries must run clean and audit clean in checked mode."""

    @pytest.mark.parametrize(
        "boundaries,cache",
        [
            ([5, 6, 7], CacheConfig()),          # switches closer than n_junction
            ([3], CacheConfig(n_sink=1, n_junction=1, window=1)),
            ([1], CacheConfig()),                 # earliest possible switch
            ([10, 11], CacheConfig(window=2)),    # collection interrupted
            ([12], CacheConfig(n_junction=0)),    # no junction region at all
        ],
    )
    def test_runs_and_audits_clean(self, boundaries, cache):
        from anchorcache.check import check_trace
        from anchorcache.trace import build_header, parse_trace, trace_lines

        sched = make_schedule(boundaries, 40, seeds=list(range(1, len(boundaries) + 2)))
        for strategy in Strategy:
            config = EngineConfig(cache=cache, strategy=strategy, checked=True)
            traces = run_engine(sched, config)
            assert len(traces) == 40
            text = "\n".join(
                trace_lines(build_header(sched, config), [t.to_dict() for t in traces])
            )
            report = check_trace(*parse_trace(text))
            assert report.passed, (boundaries, strategy, report.to_dict())


class TestDeterminism:
    def test_same_seeds_same_traces(self, one_switch):
        a = run_engine(one_switch, EngineConfig(noise_seed=7))
        b = run_engine(one_switch, EngineConfig(noise_seed=7))
        assert [t.to_dict() for t in a] == [t.to_dict() for t in b]

    def test_noise_seed_changes_content_not_structure(self, one_switch):
        a = run_engine(one_switch, EngineConfig(noise_seed=1))
        b = run_engine(one_switch, EngineConfig(noise_seed=2))
        assert a[5].latent_checksum != b[5].latent_checksum
        assert a[5].region_pairs() == b[5].region_pairs()
