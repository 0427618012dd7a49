import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowbypass.errors import ConfigError
from flowbypass.timegrid import make_time_grid
from oracles import shifted_times


class TestMakeTimeGrid:
    def test_defaults(self):
        g = make_time_grid()
        assert g.n_steps == 50 and g.shift == 3.0 and len(g) == 51

    def test_matches_formula(self):
        # [DERIVED] from the scalar formula in oracles.shifted_times
        g = make_time_grid(10, 3.0)
        np.testing.assert_allclose(g.times, shifted_times(10, 3.0), rtol=0, atol=1e-15)
        assert g[5] == pytest.approx(15 / 20)

    def test_shift_one_is_uniform(self):
        g = make_time_grid(8, 1.0)
        np.testing.assert_allclose(g.times, np.linspace(0, 1, 9), atol=1e-15)

    def test_read_only(self):
        g = make_time_grid(4)
        with pytest.raises(ValueError):
            g.times[1] = 0.3

    @pytest.mark.parametrize("n", [1, 0, -3, 2.5, True])
    def test_bad_steps(self, n):
        with pytest.raises(ConfigError):
            make_time_grid(n, 3.0)

    @pytest.mark.parametrize("shift", [0.0, -1.0, float("nan"), float("inf")])
    def test_bad_shift(self, shift):
        with pytest.raises(ConfigError):
            make_time_grid(10, shift)

    def test_index_of(self):
        g = make_time_grid(50, 3.0)
        assert g.index_of(0.75) == 25
        with pytest.raises(ConfigError):
            g.index_of(0.7)


class TestGridProperties:
    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(2, 400), shift=st.floats(0.05, 20.0))
    def test_endpoints_and_monotone(self, n, shift):
        t = make_time_grid(n, shift).times
        assert t[0] == 0.0 and t[-1] == 1.0
        assert np.all(np.diff(t) > 0)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(3, 400), shift=st.floats(1.01, 20.0))
    def test_widths_shrink_for_shift_above_one(self, n, shift):
        # t_i is concave in i when shift > 1, so steps near t=1 are the finest
        w = make_time_grid(n, shift).widths()
        assert np.all(np.diff(w) < 1e-15)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(3, 400), shift=st.floats(0.05, 0.99))
    def test_widths_grow_for_shift_below_one(self, n, shift):
        w = make_time_grid(n, shift).widths()
        assert np.all(np.diff(w) > -1e-15)
