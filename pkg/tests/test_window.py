import numpy as np
import pytest

from datm import numkit as nk
from datm.distill import MatchWindow, advance_window, sample_start_epoch


class TestMatchWindow:
    def test_invariants_enforced(self):
        with pytest.raises(nk.ShapeError):
            MatchWindow(t_lower=5, t_upper=4, t_init=5, ramp_iters=10, span=2, steps=5)
        with pytest.raises(nk.ShapeError):
            MatchWindow(t_lower=3, t_upper=10, t_init=1, ramp_iters=10, span=2, steps=5)

    def test_horizon_check(self):
        w = MatchWindow(t_lower=0, t_upper=10, t_init=0, ramp_iters=5, span=3, steps=5)
        w.validate_horizon(13)
        with pytest.raises(nk.ShapeError):
            w.validate_horizon(12)

    def test_fixed_constructor(self):
        w = MatchWindow.fixed(4, 9, span=2, steps=5)
        assert w.t_init == 9 and w.t_float == 9


class TestAdvance:
    def test_formula_anchors(self):
        w = MatchWindow(t_lower=0, t_upper=10, t_init=2, ramp_iters=4, span=1, steps=1)
        assert advance_window(w, 0).t_float == 2
        assert advance_window(w, 2).t_float == 6
        assert advance_window(w, 4).t_float == 10
        assert advance_window(w, 100).t_float == 10

    def test_nondecreasing_reaches_upper_at_ramp(self):
        w = MatchWindow(t_lower=1, t_upper=17, t_init=3, ramp_iters=7, span=1, steps=1)
        values = [advance_window(w, i).t_float for i in range(20)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[7] == 17
        assert values[6] < 17


class TestSampleStartEpoch:
    def test_singleton_support(self):
        w = MatchWindow(t_lower=5, t_upper=5, t_init=5, ramp_iters=1, span=1, steps=1)
        rng = nk.Rng(0)
        assert all(sample_start_epoch(w, rng) == 5 for _ in range(20))

    def test_two_point_frequency(self):
        w = MatchWindow(t_lower=0, t_upper=1, t_init=1, ramp_iters=1, span=1, steps=1)
        rng = nk.Rng(123)
        draws = np.array([sample_start_epoch(w, rng) for _ in range(100_000)])
        freq = (draws == 0).mean()
        assert 0.49 <= freq <= 0.51

    def test_within_bounds_given_invariants(self):
        w = MatchWindow(t_lower=2, t_upper=9, t_init=4, ramp_iters=10, span=3, steps=1)
        w.validate_horizon(12)
        rng = nk.Rng(5)
        for i in range(50):
            cur = advance_window(w, i)
            t = sample_start_epoch(cur, rng)
            assert 2 <= t <= cur.t_float <= 9
            assert t + w.span <= 12
