import math

import numpy as np
import pytest

from gdq.e2b import (
    ATC_SELECT_MODES,
    CalibratedThresholds,
    E2BConfig,
    assign_bit,
    atc_update,
    calibrate_thresholds,
    load_thresholds,
    refine_plan,
    resolve_thresholds,
    save_thresholds,
    stats_digest,
)
from gdq.entropy import EntropyStats
from gdq.metrics import fab
from gdq.plan import PatchPlan


def make_plan(i, gbc_bit, entropy=0.5):
    return PatchPlan(patch_id=i, origin=(0, 0), entropy=entropy,
                     gbc_bit=gbc_bit, final_bit=gbc_bit)


def bucket_oracle(entropy, raw_values, fractions, codes):
    """Independent sort-and-bucket: thresholds at ceil(M*t) of the sorted list."""
    ordered = sorted(raw_values)
    m = len(ordered)
    cuts = [ordered[min(max(math.ceil(m * t), 1), m) - 1] for t in fractions]
    for cut, code in zip(cuts, codes):
        if entropy <= cut:
            return code
    return codes[-1]


class TestResolveThresholds:
    def test_even_grid(self):
        stats = EntropyStats(values=tuple(np.round(np.linspace(0.1, 1.0, 10), 10)))
        thr = resolve_thresholds(stats, E2BConfig(thresholds=(0.5, 0.9)))
        assert thr.cutoffs == (0.5, 0.9)

    def test_two_patch_corpus(self):
        stats = EntropyStats(values=(0.2, 0.8))
        thr = resolve_thresholds(stats, E2BConfig(thresholds=(0.5,), bit_codes=(4, 8)))
        assert thr.cutoffs == (0.2,)

    def test_cutoffs_non_decreasing_any_stats(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            stats = EntropyStats.from_entropies(rng.random(rng.integers(2, 30)))
            thr = resolve_thresholds(stats, E2BConfig(thresholds=(0.3, 0.6, 0.9),
                                                      bit_codes=(4, 5, 6, 8)))
            assert list(thr.cutoffs) == sorted(thr.cutoffs)
            assert stats.h_min <= thr.cutoffs[0]
            assert thr.cutoffs[-1] <= stats.h_max

    def test_records_digest(self):
        stats = EntropyStats(values=(0.2, 0.8))
        thr = resolve_thresholds(stats, E2BConfig())
        assert thr.stats_digest == stats_digest(stats)


class TestAssignBit:
    def test_lowest_interval(self):
        thr = CalibratedThresholds(fractions=(0.5, 0.9), cutoffs=(0.5, 0.9), gamma=0.9997)
        assert assign_bit(0.0, thr, E2BConfig()) == 4

    def test_middle_interval(self):
        thr = CalibratedThresholds(fractions=(0.5, 0.9), cutoffs=(0.5, 0.9), gamma=0.9997)
        assert assign_bit(0.7, thr, E2BConfig()) == 5

    def test_boundary_belongs_to_lower_interval(self):
        thr = CalibratedThresholds(fractions=(0.5, 0.9), cutoffs=(0.5, 0.9), gamma=0.9997)
        assert assign_bit(0.5, thr, E2BConfig()) == 4

    def test_above_top_cutoff(self):
        thr = CalibratedThresholds(fractions=(0.5, 0.9), cutoffs=(0.5, 0.9), gamma=0.9997)
        assert assign_bit(5.0, thr, E2BConfig()) == 8

    def test_matches_bucket_oracle_on_random_stats(self):
        rng = np.random.default_rng(1)
        cfg = E2BConfig(thresholds=(0.5, 0.9), bit_codes=(4, 5, 8))
        for _ in range(100):
            raw = list(rng.random(rng.integers(2, 40)))
            stats = EntropyStats.from_entropies(raw)
            thr = resolve_thresholds(stats, cfg)
            queries = list(raw) + list(thr.cutoffs) + [0.0, 1.5, float(rng.random())]
            for e in queries:
                assert assign_bit(e, thr, cfg) == bucket_oracle(
                    e, raw, cfg.thresholds, cfg.bit_codes
                )

    def test_monotone_in_entropy(self):
        rng = np.random.default_rng(2)
        stats = EntropyStats.from_entropies(rng.random(25))
        cfg = E2BConfig()
        thr = resolve_thresholds(stats, cfg)
        es = np.sort(rng.random(50) * 1.2)
        bits = [assign_bit(e, thr, cfg) for e in es]
        assert bits == sorted(bits)


class TestAtcUpdate:
    def test_worked_example(self):
        # batch spanning [0, 1] so Norm(0.8) = 0.8
        t = atc_update(0.5, [0.0, 1.0, 0.8], 0.8, 0.9997)
        assert t == pytest.approx(0.50009, abs=1e-12)

    def test_fixed_point(self):
        t0 = 0.37
        t = atc_update(t0, [0.0, 1.0, t0], t0, 0.9997)
        assert t == pytest.approx(t0, abs=1e-15)

    def test_closed_form_geometric_series(self):
        gamma, n, t0, steps = 0.9997, 0.25, 0.9, 500
        t = t0
        for _ in range(steps):
            t = atc_update(t, [0.0, 1.0], n, gamma)
        closed = n + (t0 - n) * gamma**steps  # geometric-series oracle
        assert t == pytest.approx(closed, abs=1e-12)

    def test_flat_batch_norm_half(self):
        t = atc_update(0.5, [0.3, 0.3, 0.3], 0.3, 0.5)
        assert t == pytest.approx(0.5 * 0.5 + 0.5 * 0.5)

    def test_stays_in_unit_interval(self):
        rng = np.random.default_rng(3)
        t = 0.5
        for _ in range(2000):
            batch = rng.random(4) * 10
            t = atc_update(t, batch, float(rng.choice(batch)), 0.9)
            assert 0.0 < t < 1.0

    def test_bounded_drift_per_step(self):
        rng = np.random.default_rng(4)
        t = 0.5
        for _ in range(500):
            batch = list(rng.random(8))
            t_next = atc_update(t, batch, batch[0], 0.9997)
            assert abs(t_next - t) <= 3e-4 + 1e-12
            t = t_next

    def test_empty_batch_raises(self):
        with pytest.raises(ValueError, match="non-empty"):
            atc_update(0.5, [], 0.5, 0.9997)


class TestCalibrateThresholds:
    def test_gamma_one_keeps_fractions(self):
        stats = EntropyStats.from_entropies(np.linspace(0.1, 1.0, 40))
        cfg = E2BConfig(gamma=1.0)
        thr = calibrate_thresholds(stats, cfg, batch_size=16)
        assert thr.fractions == cfg.thresholds
        assert thr.cutoffs == resolve_thresholds(stats, cfg).cutoffs

    def test_single_batch_is_one_iteration(self):
        stats = EntropyStats.from_entropies(np.linspace(0.1, 1.0, 12))
        thr = calibrate_thresholds(stats, E2BConfig(), batch_size=16)
        assert thr.iterations == 1

    def test_identical_corpus_matches_closed_form(self):
        # every batch is flat -> Norm = 0.5 at each of the 2 iterations
        stats = EntropyStats.from_entropies([0.42] * 32)
        cfg = E2BConfig(thresholds=(0.5, 0.9), gamma=0.9997)
        thr = calibrate_thresholds(stats, cfg, batch_size=16)
        assert thr.iterations == 2
        for t0, t_final in zip(cfg.thresholds, thr.fractions):
            closed = 0.5 + (t0 - 0.5) * cfg.gamma**2
            assert t_final == pytest.approx(closed, abs=1e-12)

    @pytest.mark.parametrize("select", ATC_SELECT_MODES)
    def test_trace_records_every_iteration(self, select):
        stats = EntropyStats.from_entropies(np.linspace(0.0, 1.0, 48))
        trace = []
        thr = calibrate_thresholds(stats, E2BConfig(), batch_size=16,
                                   select=select, trace=trace)
        assert thr.iterations == 3
        assert [it for it, _ in trace] == [1, 2, 3]
        assert trace[-1][1] == thr.fractions

    def test_bad_select_mode(self):
        stats = EntropyStats.from_entropies([0.1, 0.2])
        with pytest.raises(ValueError, match="select"):
            calibrate_thresholds(stats, E2BConfig(), select="median")


class TestRefinePlan:
    CFG = E2BConfig(thresholds=(0.5, 0.9), bit_codes=(4, 5, 8))
    THR = CalibratedThresholds(fractions=(0.5, 0.9), cutoffs=(0.4, 0.8), gamma=0.9997)

    def test_two_step_pipeline_semantics(self):
        plans = [make_plan(0, 4, 0.1), make_plan(1, 6, 0.9), make_plan(2, 8, 0.6)]
        refined = refine_plan(plans, self.THR, self.CFG, gbc_high_bit=8)
        assert [p.final_bit for p in refined] == [4, 6, 5]
        assert [p.gbc_bit for p in refined] == [4, 6, 8]  # audit trail preserved

    def test_no_high_bit_patches_unchanged(self):
        plans = [make_plan(0, 4), make_plan(1, 6)]
        refined = refine_plan(plans, self.THR, self.CFG)
        assert [p.final_bit for p in refined] == [4, 6]

    def test_all_high_entropy_stay_at_top(self):
        plans = [make_plan(i, 8, entropy=0.95) for i in range(3)]
        refined = refine_plan(plans, self.THR, self.CFG)
        assert [p.final_bit for p in refined] == [8, 8, 8]

    def test_never_raises_low_gbc_bits_and_fab_non_increasing(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            plans = [
                make_plan(i, int(rng.choice([4, 6, 8])), float(rng.random()))
                for i in range(12)
            ]
            refined = refine_plan(plans, self.THR, self.CFG)
            for before, after in zip(plans, refined):
                if before.gbc_bit != 8:
                    assert after.final_bit == before.gbc_bit
            assert fab(refined) <= fab(plans)

    def test_code_dominance_on_identical_plans(self):
        plans = [make_plan(i, 8, e) for i, e in enumerate(np.linspace(0, 1, 11))]
        low = refine_plan(plans, self.THR, E2BConfig(bit_codes=(4, 5, 8)))
        high = refine_plan(plans, self.THR, E2BConfig(bit_codes=(4, 7, 8)))
        assert all(h.final_bit >= l.final_bit for h, l in zip(high, low))
        assert fab(high) >= fab(low)

    def test_missing_entropy_raises(self):
        plans = [make_plan(0, 8, entropy=None)]
        with pytest.raises(ValueError, match="entropy"):
            refine_plan(plans, self.THR, self.CFG)


def test_config_validation():
    with pytest.raises(ValueError):
        E2BConfig(thresholds=(0.9, 0.5))
    with pytest.raises(ValueError):
        E2BConfig(thresholds=(0.5, 0.5))
    with pytest.raises(ValueError):
        E2BConfig(thresholds=(0.0, 0.5))
    with pytest.raises(ValueError):
        E2BConfig(bit_codes=(4, 8))
    with pytest.raises(ValueError):
        E2BConfig(bit_codes=(8, 5, 4))
    with pytest.raises(ValueError):
        E2BConfig(gamma=0.0)


def test_thresholds_json_round_trip(tmp_path):
    thr = CalibratedThresholds(fractions=(0.5, 0.9), cutoffs=(0.41, 0.97),
                               gamma=0.9997, iterations=5, stats_digest="abc123")
    path = tmp_path / "thr.json"
    save_thresholds(path, thr)
    assert load_thresholds(path) == thr
