"""Scale plans, window grids, and patch round-trips."""
import numpy as np
import pytest

from zoomseg.errors import DimMismatch, EndpointsMismatch, IndivisibleGrid, NonMonotonicScales, OutOfBounds
from zoomseg.maps import ProbMap
from zoomseg.tiling import (
    Window,
    build_scale_plan,
    extract_patch,
    pad_to_canvas,
    paste_patch,
    windows_for_scale,
)

WIDE_FOUR_LEVELS = [(1024, 2048), (512, 1024), (256, 512), (128, 256)]


def random_valid_plan(rng):
    """A random (H, W, plan) triple satisfying all strict-mode invariants."""
    proc_h = int(rng.choice([8, 16, 24]))
    proc_w = int(rng.choice([8, 16, 32]))
    m = int(rng.integers(1, 5))
    factors = rng.choice([2, 3, 4], size=m - 1)
    levels = [(proc_h, proc_w)]
    for f in factors:
        h, w = levels[0]
        levels.insert(0, (h * int(f), w * int(f)))
    H, W = levels[0]
    return H, W, levels, proc_h, proc_w


class TestBuildScalePlan:
    def test_four_level_wide_plan_valid(self):
        plan = build_scale_plan(1024, 2048, 128, 256, WIDE_FOUR_LEVELS)
        assert plan.num_levels == 4
        assert plan.levels[0] == (1024, 2048)
        assert plan.levels[-1] == (128, 256)

    def test_single_level_degenerate(self):
        plan = build_scale_plan(64, 64, 64, 64, [(64, 64)])
        assert plan.num_levels == 1

    def test_out_of_order_levels_rejected(self):
        with pytest.raises(NonMonotonicScales):
            build_scale_plan(
                2048, 2048, 512, 512, [(2048, 2048), (512, 512), (1024, 1024)]
            )

    def test_wrong_endpoints_rejected(self):
        with pytest.raises(EndpointsMismatch):
            build_scale_plan(1024, 1024, 128, 128, [(512, 512), (128, 128)])
        with pytest.raises(EndpointsMismatch):
            build_scale_plan(1024, 1024, 128, 128, [(1024, 1024), (256, 256)])

    def test_indivisible_rejected_in_strict_mode(self):
        with pytest.raises(IndivisibleGrid):
            build_scale_plan(900, 900, 128, 128, [(900, 900), (128, 128)])

    def test_pad_mode_allows_oversized_canvas(self):
        plan = build_scale_plan(500, 500, 128, 128, [(512, 512), (256, 256), (128, 128)], pad=True)
        assert plan.canvas_h == 512
        assert plan.image_h == 500

    def test_pad_mode_canvas_must_cover_image(self):
        with pytest.raises(EndpointsMismatch):
            build_scale_plan(600, 600, 128, 128, [(512, 512), (128, 128)], pad=True)


class TestWindowsForScale:
    def test_four_level_window_counts(self):
        plan = build_scale_plan(1024, 2048, 128, 256, WIDE_FOUR_LEVELS)
        counts = [len(windows_for_scale(plan, s)) for s in range(1, 5)]
        assert counts == [1, 4, 16, 64]
        assert sum(counts) == 85

    def test_three_level_square_counts(self):
        plan = build_scale_plan(
            2448, 2448, 612, 612, [(2448, 2448), (1224, 1224), (612, 612)]
        )
        counts = [len(windows_for_scale(plan, s)) for s in range(1, 4)]
        assert counts == [1, 4, 16]

    def test_coarsest_scale_is_whole_image(self):
        plan = build_scale_plan(1024, 2048, 128, 256, WIDE_FOUR_LEVELS)
        wins = windows_for_scale(plan, 1)
        assert wins == [Window(x=0, y=0, w=2048, h=1024)]

    def test_row_major_order(self):
        plan = build_scale_plan(4, 4, 2, 2, [(4, 4), (2, 2)])
        wins = windows_for_scale(plan, 2)
        assert [(w.x, w.y) for w in wins] == [(0, 0), (2, 0), (0, 2), (2, 2)]

    def test_disjoint_exact_cover_on_random_plans(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            H, W, levels, ph, pw = random_valid_plan(rng)
            plan = build_scale_plan(H, W, ph, pw, levels)
            for s in range(1, plan.num_levels + 1):
                wins = windows_for_scale(plan, s)
                h, w = plan.levels[s - 1]
                assert len(wins) == (H // h) * (W // w)
                coverage = np.zeros((H, W), dtype=np.int32)
                for win in wins:
                    coverage[win.y : win.y + win.h, win.x : win.x + win.w] += 1
                assert (coverage == 1).all()

    def test_window_count_strictly_increases(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            H, W, levels, ph, pw = random_valid_plan(rng)
            plan = build_scale_plan(H, W, ph, pw, levels)
            counts = [len(windows_for_scale(plan, s)) for s in range(1, plan.num_levels + 1)]
            assert all(a < b for a, b in zip(counts, counts[1:]))


class TestExtractPaste:
    def _map(self, h=4, w=4, c=3, seed=0):
        rng = np.random.default_rng(seed)
        return ProbMap(rng.uniform(0.1, 1.0, (h, w, c)).astype(np.float32))

    def test_full_window_extract_is_identity(self):
        m = self._map()
        out = extract_patch(m, Window(0, 0, 4, 4))
        np.testing.assert_array_equal(out.data, m.data)

    def test_extract_out_of_bounds(self):
        with pytest.raises(OutOfBounds):
            extract_patch(self._map(), Window(2, 2, 4, 4))

    def test_extract_then_paste_round_trip(self):
        m = self._map()
        win = Window(1, 2, 3, 2)
        zero = ProbMap(np.full((4, 4, 3), 1e-6, dtype=np.float32))
        patch = extract_patch(m, win)
        pasted = paste_patch(zero, win, patch)
        np.testing.assert_array_equal(
            pasted.data[win.y : win.y + win.h, win.x : win.x + win.w], patch.data
        )
        outside = np.ones((4, 4), dtype=bool)
        outside[win.y : win.y + win.h, win.x : win.x + win.w] = False
        np.testing.assert_array_equal(pasted.data[outside], zero.data[outside])

    def test_quadrant_reassembly(self):
        m = self._map(4, 4)
        quads = [Window(0, 0, 2, 2), Window(2, 0, 2, 2), Window(0, 2, 2, 2), Window(2, 2, 2, 2)]
        acc = ProbMap(np.full((4, 4, 3), 1e-6, dtype=np.float32))
        for win in quads:
            acc = paste_patch(acc, win, extract_patch(m, win))
        np.testing.assert_array_equal(acc.data, m.data)

    def test_idempotent_paste(self):
        m = self._map()
        win = Window(0, 1, 2, 2)
        out = paste_patch(m, win, extract_patch(m, win))
        np.testing.assert_array_equal(out.data, m.data)

    def test_disjoint_pastes_commute(self):
        m = self._map()
        w1, w2 = Window(0, 0, 2, 2), Window(2, 2, 2, 2)
        p1 = ProbMap(np.full((2, 2, 3), 0.25, dtype=np.float32))
        p2 = ProbMap(np.full((2, 2, 3), 0.75, dtype=np.float32))
        a = paste_patch(paste_patch(m, w1, p1), w2, p2)
        b = paste_patch(paste_patch(m, w2, p2), w1, p1)
        np.testing.assert_array_equal(a.data, b.data)

    def test_full_overwrite(self):
        m = self._map(seed=1)
        other = self._map(seed=2)
        out = paste_patch(m, Window(0, 0, 4, 4), other)
        np.testing.assert_array_equal(out.data, other.data)

    def test_paste_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            paste_patch(self._map(), Window(0, 0, 2, 2), self._map(3, 3))

    def test_shuffled_window_order_gives_same_result(self):
        m = self._map(8, 8, 2, seed=5)
        plan = build_scale_plan(8, 8, 2, 2, [(8, 8), (4, 4), (2, 2)])
        wins = windows_for_scale(plan, 3)
        rng = np.random.default_rng(9)
        patches = {w: extract_patch(m, w) for w in wins}
        base = ProbMap(np.full((8, 8, 2), 1e-6, dtype=np.float32))
        in_order = base
        for w in wins:
            in_order = paste_patch(in_order, w, patches[w])
        shuffled = base
        for w in rng.permutation(len(wins)):
            win = wins[int(w)]
            shuffled = paste_patch(shuffled, win, patches[win])
        np.testing.assert_array_equal(in_order.data, shuffled.data)


class TestPadToCanvas:
    def test_edge_replication(self):
        arr = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        out = pad_to_canvas(arr, 3, 4)
        assert out.shape == (3, 4)
        np.testing.assert_array_equal(out[2], [3.0, 4.0, 4.0, 4.0])
        np.testing.assert_array_equal(out[:, 3], [2.0, 4.0, 4.0])

    def test_noop_when_already_canvas(self):
        arr = np.zeros((2, 2), dtype=np.float32)
        assert pad_to_canvas(arr, 2, 2) is arr
