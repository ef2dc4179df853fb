import io
import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from multigrid_video.errors import ConfigError
from multigrid_video.schedule import (
    LONG_CYCLE_FACTORS,
    SHORT_CYCLE_FACTORS,
    CompiledPlan,
    CycleConfig,
    IterationRecord,
    LrSchedule,
    LrStage,
    Shape4D,
    compile,
    long_batch_multiplier,
    long_cycle_shape,
    read_plan_jsonl,
    round_spatial,
    scaled_batch,
    short_batch_multiplier,
    short_cycle_shape,
)

KIN_BASE = Shape4D(512, 32, 224, 224)
KIN_SCHED = LrSchedule(
    stages=(LrStage(0.8, 44000), LrStage(0.08, 28000),
            LrStage(0.008, 20000), LrStage(0.0008, 20000)),
    warmup_iters=16000, warmup_start_lr=0.002,
)
TOY_BASE = Shape4D(8, 8, 32, 32)
TOY_SCHED = LrSchedule(
    stages=(LrStage(0.04, 700), LrStage(0.004, 450),
            LrStage(0.0004, 300), LrStage(0.00004, 300)),
    warmup_iters=140, warmup_start_lr=0.004,
)


def count_blocks(seq):
    blocks = []
    for value in seq:
        if not blocks or value != blocks[-1][0]:
            blocks.append([value, 0])
        blocks[-1][1] += 1
    return blocks


class TestRounding:
    @pytest.mark.parametrize("x,expected", [
        (158.39, 158), (112.0, 112), (224.0, 224), (1.2, 2), (0.3, 2),
        (159.0, 160), (22.627, 22), (11.0, 12), (16.0, 16),
    ])
    def test_round_spatial(self, x, expected):
        assert round_spatial(x) == expected

    def test_round_spatial_is_even(self):
        for i in range(1, 500):
            v = round_spatial(i * 0.37)
            assert v % 2 == 0 and v >= 2


class TestMultipliers:
    def test_long_batch_multipliers(self):
        assert [long_batch_multiplier(i) for i in range(4)] == [8, 4, 2, 1]

    def test_long_multiplier_is_inverse_volume_factor(self):
        for i, (tf, hf, wf) in enumerate(LONG_CYCLE_FACTORS):
            assert long_batch_multiplier(i) == pytest.approx(1 / (tf * hf * wf))

    def test_short_batch_multipliers_table(self):
        table = [[short_batch_multiplier(i, m) for m in range(3)]
                 for i in range(4)]
        assert table == [[2, 1, 1], [2, 1, 1], [4, 2, 1], [4, 2, 1]]

    def test_scaled_batch_composes(self):
        assert scaled_batch(512, 0, 0) == 512 * 8 * 2
        assert scaled_batch(512, 3, 0) == 512 * 4
        assert scaled_batch(512, 3, 2) == 512
        assert scaled_batch(512, 0, 0, short_cycle=False) == 512 * 8
        # with the long cycle off the short pattern is the base-shape one
        assert scaled_batch(512, 0, 0, long_cycle=False) == 512 * 4
        assert scaled_batch(512, 0, 1, long_cycle=False) == 512 * 2


class TestShapes:
    def test_long_cycle_shapes_at_paper_scale(self):
        shapes = [long_cycle_shape(KIN_BASE, i) for i in range(4)]
        assert [(s.b, s.t, s.h, s.w) for s in shapes] == [
            (4096, 8, 158, 158), (2048, 16, 158, 158),
            (1024, 16, 224, 224), (512, 32, 224, 224)]

    def test_cost_within_band_at_paper_scale(self):
        base = KIN_BASE.cost
        for i in range(4):
            s = long_cycle_shape(KIN_BASE, i)
            assert abs(s.cost / base - 1.0) <= 0.01

    def test_short_cycle_shape_full_base(self):
        assert short_cycle_shape((224, 224), (224, 224), 0) == (112, 112)
        assert short_cycle_shape((224, 224), (224, 224), 1) == (158, 158)
        assert short_cycle_shape((224, 224), (224, 224), 2) == (224, 224)

    def test_short_cycle_shape_never_enlarges(self):
        # current base 158 clamps the m=1 and m=2 targets
        assert short_cycle_shape((224, 224), (158, 158), 0) == (112, 112)
        assert short_cycle_shape((224, 224), (158, 158), 1) == (158, 158)
        assert short_cycle_shape((224, 224), (158, 158), 2) == (158, 158)

    def test_shape4d_validation(self):
        with pytest.raises(ConfigError):
            Shape4D(0, 1, 1, 1)


class TestValidation:
    def test_schedule_needs_stages(self):
        with pytest.raises(ConfigError):
            LrSchedule(stages=())

    def test_stage_fields(self):
        with pytest.raises(ConfigError):
            LrStage(0.0, 10)
        with pytest.raises(ConfigError):
            LrStage(0.1, 0)

    def test_schedule_mode(self):
        with pytest.raises(ConfigError):
            LrSchedule(stages=(LrStage(0.1, 10),), mode="linear")

    def test_cycle_config(self):
        with pytest.raises(ConfigError):
            CycleConfig(mode="double")
        with pytest.raises(ConfigError):
            CycleConfig(epoch_multiplier=0.0)

    def test_cycles_need_two_stages(self):
        sched = LrSchedule(stages=(LrStage(0.1, 100),))
        with pytest.raises(ConfigError, match="stages"):
            compile(Shape4D(4, 4, 16, 16), sched, CycleConfig(), 100)
        # fine without cycles
        plan = compile(Shape4D(4, 4, 16, 16), sched,
                       CycleConfig(long_cycle=False, short_cycle=False,
                                   epoch_multiplier=1.0), 100)
        assert plan.total_iters == 100

    def test_compile_argument_validation(self):
        with pytest.raises(ConfigError):
            compile(TOY_BASE, TOY_SCHED, CycleConfig(), 0)
        with pytest.raises(ConfigError):
            compile(TOY_BASE, TOY_SCHED, CycleConfig(), 100, bn_base=0)


class TestBaselinePlan:
    def test_reproduces_recipe_exactly(self):
        plan = compile(KIN_BASE, KIN_SCHED,
                       CycleConfig(long_cycle=False, short_cycle=False,
                                   epoch_multiplier=1.0), 240000)
        assert plan.total_iters == 112000
        assert plan.total_clips == 112000 * 512
        assert plan.epochs == pytest.approx(238.9333, abs=1e-3)
        recs = plan.records
        assert all(r.phase == "baseline" for r in recs)
        assert all((r.b, r.t, r.h, r.w) == (512, 32, 224, 224) for r in recs)
        assert all(r.long_idx == 3 and r.short_m == 2 for r in recs)
        # stage boundaries at 44k / 72k / 92k
        assert recs[43999].lr_stage == 0 and recs[44000].lr_stage == 1
        assert recs[71999].lr_stage == 1 and recs[72000].lr_stage == 2
        assert recs[91999].lr_stage == 2 and recs[92000].lr_stage == 3
        assert recs[44000].lr == 0.08
        assert recs[111999].lr == 0.0008
        # warmup: starts at 0.002, reaches the stage rate at iter 16000
        assert recs[0].lr == 0.002
        assert recs[8000].lr == pytest.approx(0.002 + (0.8 - 0.002) * 0.5)
        assert recs[15999].lr < 0.8
        assert recs[16000].lr == 0.8

    def test_epoch_multiplier_scales_baseline(self):
        plan = compile(TOY_BASE, TOY_SCHED,
                       CycleConfig(long_cycle=False, short_cycle=False,
                                   epoch_multiplier=2.0), 2000)
        assert plan.total_iters == 2 * TOY_SCHED.total_iters
        # proportional boundaries: stage 0 doubles too
        assert plan.records[1399].lr_stage == 0
        assert plan.records[1400].lr_stage == 1

    def test_cum_clips_and_epoch_fields(self):
        plan = compile(Shape4D(4, 2, 8, 8),
                       LrSchedule(stages=(LrStage(0.1, 10),)),
                       CycleConfig(long_cycle=False, short_cycle=False,
                                   epoch_multiplier=1.0), 20)
        for i, r in enumerate(plan.records):
            assert r.cum_clips == 4 * (i + 1)
            assert r.epoch == pytest.approx(4 * (i + 1) / 20)


@pytest.fixture(scope="module")
def kin_plan():
    return compile(KIN_BASE, KIN_SCHED, CycleConfig(epoch_multiplier=1.5),
                   240000)


class TestMultigridPlan:
    def test_iteration_ratio_in_window(self, kin_plan):
        assert 3.3 <= kin_plan.iteration_ratio <= 3.5

    def test_clip_budget_hit(self, kin_plan):
        target = 1.5 * 112000 * 512
        assert abs(kin_plan.total_clips - target) <= 3 * 512 * 32

    def test_short_m_is_iter_mod_3(self, kin_plan):
        assert all(r.short_m == r.iteration % 3 for r in kin_plan.records)

    def test_one_long_cycle_per_stage(self, kin_plan):
        for stage in range(3):
            seq = [r.long_idx for r in kin_plan.records
                   if r.phase == "multigrid" and r.lr_stage == stage]
            blocks = count_blocks(seq)
            assert [b[0] for b in blocks] == [0, 1, 2, 3]
            lengths = [b[1] for b in blocks]
            assert max(lengths) - min(lengths) <= 1

    def test_block_slack_goes_to_later_shapes(self):
        plan = compile(TOY_BASE, TOY_SCHED, CycleConfig(epoch_multiplier=1.0),
                       2000)
        for stage in range(3):
            seq = [r.long_idx for r in plan.records
                   if r.phase == "multigrid" and r.lr_stage == stage]
            blocks = count_blocks(seq)
            lengths = [b[1] for b in blocks]
            assert lengths == sorted(lengths)

    def test_finetune_runs_at_base_shape_with_short_cycle(self, kin_plan):
        ft = [r for r in kin_plan.records if r.phase == "finetune"]
        assert ft, "no finetune stage"
        assert all(r.long_idx == 3 for r in ft)
        assert all(r.t == 32 for r in ft)
        assert {(r.h, r.w) for r in ft} == {(112, 112), (158, 158), (224, 224)}

    def test_finetune_lr_halves(self, kin_plan):
        ft = [r for r in kin_plan.records if r.phase == "finetune"]
        half = len(ft) // 2
        assert all(r.lr == 0.008 and r.lr_stage == 2 for r in ft[:half])
        assert all(r.lr == 0.0008 and r.lr_stage == 3 for r in ft[half:])

    def test_lr_scaled_by_long_multiplier_only(self, kin_plan):
        warmup = 16000 * kin_plan.total_iters / 112000
        stage_lr = [0.8, 0.08, 0.008, 0.0008]
        for r in kin_plan.records:
            if r.iteration < warmup or r.phase == "finetune":
                continue
            factor = long_batch_multiplier(r.long_idx)
            assert factor in (8, 4, 2, 1)
            assert r.lr == pytest.approx(stage_lr[r.lr_stage] * factor)

    def test_batch_is_exact_product_of_multipliers(self, kin_plan):
        for r in kin_plan.records:
            if r.phase == "finetune":
                expect = 512 * short_batch_multiplier(3, r.short_m)
            else:
                expect = scaled_batch(512, r.long_idx, r.short_m)
            assert r.b == expect

    def test_bn_groups(self, kin_plan):
        assert {r.bn_group for r in kin_plan.records} == {8, 16, 32}
        for r in kin_plan.records:
            assert r.b % r.bn_group == 0

    def test_cost_stays_within_10_percent(self, kin_plan):
        base = KIN_BASE.cost
        for r in kin_plan.records:
            assert abs(r.b * r.t * r.h * r.w / base - 1.0) <= 0.10

    def test_cum_clips_is_running_sum(self, kin_plan):
        total = 0
        for r in kin_plan.records:
            total += r.b
            assert r.cum_clips == total

    def test_compile_is_deterministic(self):
        p1 = compile(TOY_BASE, TOY_SCHED, CycleConfig(epoch_multiplier=1.0), 2000)
        p2 = compile(TOY_BASE, TOY_SCHED, CycleConfig(epoch_multiplier=1.0), 2000)
        assert p1.records == p2.records


class TestCycleVariants:
    def test_short_only_ratio(self):
        plan = compile(KIN_BASE, KIN_SCHED,
                       CycleConfig(long_cycle=False, epoch_multiplier=1.5),
                       240000)
        # mean batch multiplier is (4+2+1)/3, so iters ~ em * 3/7 * base
        assert plan.iteration_ratio == pytest.approx(7 / 3 / 1.5, rel=1e-3)
        assert all(r.long_idx == 3 for r in plan.records)
        assert all(r.t == 32 for r in plan.records)

    def test_long_only_has_constant_short_position(self):
        plan = compile(KIN_BASE, KIN_SCHED,
                       CycleConfig(short_cycle=False, epoch_multiplier=1.5),
                       240000)
        assert all(r.short_m == 2 for r in plan.records)
        assert {r.bn_group for r in plan.records} == {8}
        assert {r.b for r in plan.records} == {512, 1024, 2048, 4096}

    def test_single_cycle_spans_all_pre_finetune_stages(self):
        plan = compile(KIN_BASE, KIN_SCHED,
                       CycleConfig(mode="single", epoch_multiplier=1.5),
                       240000)
        pre = [r for r in plan.records if r.phase == "multigrid"]
        blocks = count_blocks([r.long_idx for r in pre])
        assert [b[0] for b in blocks] == [0, 1, 2, 3]
        lengths = [b[1] for b in blocks]
        assert max(lengths) - min(lengths) <= 1
        # long-cycle steps cross stage boundaries
        assert len({r.lr_stage for r in pre if r.long_idx == 0}) >= 1
        assert [r for r in plan.records if r.phase == "finetune"]

    def test_cosine_mode(self):
        sched = LrSchedule(stages=KIN_SCHED.stages, warmup_iters=0,
                           mode="cosine")
        plan = compile(KIN_BASE, sched, CycleConfig(epoch_multiplier=1.5),
                       240000)
        total = plan.total_iters
        for r in plan.records[:: max(1, total // 97)]:
            factor = long_batch_multiplier(r.long_idx)
            expect = 0.8 * 0.5 * (1 + math.cos(math.pi * r.iteration / total))
            assert r.lr == pytest.approx(expect * factor)
        # no halves rule: the last records follow the cosine tail
        tail = plan.records[-1]
        assert tail.lr == pytest.approx(
            0.8 * 0.5 * (1 + math.cos(math.pi * tail.iteration / total)))

    def test_warmup_scales_with_plan_length(self):
        plan = compile(TOY_BASE, TOY_SCHED, CycleConfig(epoch_multiplier=1.0),
                       2000)
        # warmup 140 over 1750 base iters scales to 27 of 340
        n = plan.total_iters
        warm = math.ceil(140 * n / 1750 - 0.5)
        assert plan.records[0].lr == 0.004
        lm = long_batch_multiplier(plan.records[warm].long_idx)
        assert plan.records[warm].lr == pytest.approx(0.04 * lm)
        assert plan.records[warm - 1].lr < plan.records[warm].lr


class TestPlanSerialization:
    def test_jsonl_roundtrip(self, tmp_path):
        plan = compile(Shape4D(4, 4, 16, 16),
                       LrSchedule(stages=(LrStage(0.02, 30), LrStage(0.002, 15))),
                       CycleConfig(epoch_multiplier=1.0), 100)
        path = tmp_path / "plan.jsonl"
        plan.to_jsonl(path)
        back = read_plan_jsonl(path)
        assert tuple(back) == plan.records

    def test_jsonl_field_names(self):
        plan = compile(Shape4D(4, 4, 16, 16),
                       LrSchedule(stages=(LrStage(0.02, 12), LrStage(0.002, 6))),
                       CycleConfig(epoch_multiplier=1.0), 50)
        buf = io.StringIO()
        plan.to_jsonl(buf)
        first = json.loads(buf.getvalue().splitlines()[0])
        assert list(first) == ["iter", "phase", "long_idx", "short_m",
                               "b", "t", "h", "w", "lr", "bn_group",
                               "lr_stage", "cum_clips", "epoch"]

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "plan.jsonl"
        path.write_text('{"iter": 0}\n')
        with pytest.raises(ConfigError, match="missing keys"):
            read_plan_jsonl(path)


@given(
    b=st.integers(1, 64),
    t=st.sampled_from([2, 4, 8, 16, 32]),
    hw=st.sampled_from([16, 24, 32, 56, 112, 224]),
    stage_len=st.integers(8, 200),
    n_stages=st.integers(2, 5),
    em=st.floats(0.5, 2.0),
    long_on=st.booleans(),
    short_on=st.booleans(),
    mode=st.sampled_from(["multi", "single"]),
)
@settings(max_examples=40, deadline=None)
def test_compile_invariants_hold_for_arbitrary_recipes(
        b, t, hw, stage_len, n_stages, em, long_on, short_on, mode):
    base = Shape4D(b, t, hw, hw)
    stages = tuple(LrStage(0.1 * 10.0 ** -i, stage_len) for i in range(n_stages))
    sched = LrSchedule(stages=stages)
    cycles = CycleConfig(long_cycle=long_on, short_cycle=short_on,
                         mode=mode, epoch_multiplier=em)
    plan = compile(base, sched, cycles, dataset_size=1000)
    recs = plan.records
    assert plan.total_iters >= 1
    # iterations are dense and ordered
    assert [r.iteration for r in recs] == list(range(len(recs)))
    # clip budget within tolerance of the target
    target = em * sched.total_iters * b
    assert abs(plan.total_clips - round(target)) <= 3 * b * 32
    # batch is always a positive multiple of the base batch
    assert all(r.b % b == 0 and r.b >= b for r in recs)
    # statistics group always divides the batch
    assert all(r.b % r.bn_group == 0 for r in recs)
    # dims never exceed the base shape
    assert all(r.t <= t and r.h <= hw and r.w <= hw for r in recs)
    if not (long_on or short_on):
        assert all(r.phase == "baseline" for r in recs)
    else:
        assert recs[-1].phase == "finetune"
        assert all(r.short_m == (r.iteration % 3 if short_on else 2)
                   for r in recs)
