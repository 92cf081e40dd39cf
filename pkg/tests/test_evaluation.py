import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flis.errors import UndefinedMetricError
from flis.evaluation import (
    CostParams,
    class_dice,
    dice,
    estimate_table,
    format_estimates,
    mean_sd,
    mem_ddls,
    mem_flis,
    mem_src,
    ops_ddls,
    ops_flis,
    read_dice_csv,
    write_dice_csv,
)


class TestDice:
    def test_identical(self):
        a = np.array([1, 0, 1, 1], bool)
        assert dice(a, a) == 1.0

    def test_disjoint(self):
        assert dice([1, 0, 0, 0], [0, 1, 0, 0]) == 0.0

    def test_half_overlap(self):
        assert dice([1, 1, 1, 1, 0, 0], [0, 0, 1, 1, 1, 1]) == 0.5

    def test_both_empty(self):
        with pytest.raises(UndefinedMetricError):
            dice([0, 0], [0, 0])

    def test_class_dice_marks_na(self):
        d = class_dice(np.array([1, 1, 2]), np.array([1, 2, 2]))
        assert d[1] == pytest.approx(2 / 3) and math.isnan(d[3])

    @given(st.lists(st.booleans(), min_size=1, max_size=40),
           st.lists(st.booleans(), min_size=1, max_size=40))
    def test_symmetric(self, a, b):
        n = min(len(a), len(b))
        a, b = np.array(a[:n]), np.array(b[:n])
        if a.any() or b.any():
            assert dice(a, b) == dice(b, a)
            assert 0.0 <= dice(a, b) <= 1.0

    def test_monotone_in_intersection(self):
        a = np.zeros(10, bool)
        a[:4] = True
        prev = -1.0
        for k in range(5):
            b = np.zeros(10, bool)
            b[4 - k: 8 - k] = True
            cur = dice(a, b)
            assert cur > prev
            prev = cur


def test_mean_sd_ignores_nan():
    m, s = mean_sd([1.0, float("nan"), 3.0])
    assert m == 2.0 and s == pytest.approx(math.sqrt(2))


def test_dice_csv_round_trip():
    rows = [(0, "brain", 0.5), (0, "csf", float("nan")), (1, "subdural", 0.25)]
    buf = io.StringIO()
    write_dice_csv(rows, buf)
    back = read_dice_csv(io.StringIO(buf.getvalue()))
    assert back[0] == rows[0] and back[2] == rows[2] and math.isnan(back[1][2])


TABLE3 = CostParams(N=4700, K=120, d=242, L=5, Ix=512, Iy=512)
TABLE4 = CostParams(K=80, d=242, Nt=15, Ix=512, Iy=512)


class TestEstimators:
    def test_flis_ops_table(self):
        assert ops_flis(TABLE3) == 2_614_140_000 / 262_144
        assert abs(ops_flis(TABLE3) / 1.005e4 - 1) < 0.01

    def test_ddls_ops_table(self):
        assert abs(ops_ddls(TABLE3) / 1.39e9 - 1) < 0.01

    def test_small_values(self):
        p = CostParams(N=1, K=1, d=0, L=0, Ix=1, Iy=1)
        assert ops_flis(p) == 54
        z = CostParams(K=0)
        assert ops_flis(z) == 0 and ops_ddls(z) == 0

    def test_memory_table(self):
        assert mem_flis(TABLE4) == 940_800
        assert mem_flis(CostParams(K=80, d=121)) == 476_160
        assert abs(mem_ddls(TABLE4) / 1.24e11 - 1) < 0.01
        assert abs(mem_src(TABLE4) / 9.2e11 - 1) < 0.01

    def test_doubling_k_doubles_memory(self):
        p2 = CostParams(K=160)
        assert mem_flis(p2) == 2 * mem_flis(TABLE4)
        assert mem_ddls(p2) == 2 * mem_ddls(TABLE4)

    def test_per_pixel_ddls_exceeds_flis(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = CostParams(N=rng.integers(1, 5000), K=rng.integers(1, 200),
                           d=rng.integers(2, 400), L=rng.integers(1, 10),
                           Ix=rng.integers(2, 600), Iy=rng.integers(2, 600))
            ratio = (2 * (p.d + 3) + p.L**2) / (2 * (p.d / 2 + 3) + p.L**2)
            if p.Ix * p.Iy > ratio:
                assert ops_ddls(p) > ops_flis(p)

    def test_partitions_scale_memory_only(self):
        t1 = dict(estimate_table(TABLE4, 1))
        t12 = dict(estimate_table(TABLE4, 12))
        assert t12["M_FLIS(d)"] == 12 * t1["M_FLIS(d)"]
        assert t12["C_FLIS"] == t1["C_FLIS"]

    def test_report_mentions_both_interpretations(self):
        text = format_estimates(TABLE4)
        assert "M_FLIS(d)" in text and "M_FLIS(d/2)" in text and "note:" in text
