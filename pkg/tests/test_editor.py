import numpy as np
import pytest

from flowbypass.editor import (
    DEFAULT_COMBO,
    PRESET_NAMES,
    PRESETS,
    EditConfig,
    PromptCombo,
    SweepSpec,
    count_violations,
    edit,
    run_sweep,
    sample_dataset,
)
from flowbypass.errors import ConfigError, EditError, FieldError
from flowbypass.field import NULL, ConstantField, DiagonalLinearField, labeled
from flowbypass.metrics import fidelity
from flowbypass.timegrid import make_time_grid
from flowbypass.trajectory import expected_eval_budget, invert, reconstruct
from conftest import X, Y, shifted_pair


class TestPromptCombo:
    def test_twelve_presets(self):
        assert len(PRESET_NAMES) == 12 == len(set(PRESET_NAMES))
        for name in PRESET_NAMES:
            assert PRESETS[name].name == name

    def test_default_roles(self):
        assert DEFAULT_COMBO == "ee/yx"
        assert PromptCombo.from_name("ee/yx").conditions(X, Y) == (NULL, NULL, Y, X)
        assert PromptCombo.from_name("xy/ye").conditions(X, Y) == (X, Y, Y, NULL)

    @pytest.mark.parametrize("bad", ["ee", "ee/y", "ez/yx", "eee/yx", ""])
    def test_bad_names(self, bad):
        with pytest.raises(ConfigError):
            PromptCombo.from_name(bad)

    def test_explicit_roles(self):
        with pytest.raises(ConfigError):
            PromptCombo("origin", "edit", "null", "other")


class TestEditConfig:
    def test_defaults(self):
        c = EditConfig()
        assert (c.n_steps, c.shift, c.bypass_index, c.zeta, c.combo) == (50, 3.0, 30, 0.01, "ee/yx")

    @pytest.mark.parametrize("kwargs", [
        {"bypass_index": 51}, {"bypass_index": -1}, {"zeta": 0.0}, {"n_steps": 1},
        {"shift": 0.0}, {"combo": "qq/yx"}, {"derivative_mode": "full"},
        {"cfg_scale": float("nan")},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            EditConfig(**kwargs)

    def test_shared_and_separate_scales(self):
        gi, gr = EditConfig(combo="xy/yx", cfg_scale=3.0).guidances(X, Y)
        assert gi.scale == gr.scale == 3.0
        gi, gr = EditConfig(combo="xy/yx", cfg_scale=3.0, cfg_scale_inv=1.5).guidances(X, Y)
        assert (gi.scale, gr.scale) == (1.5, 3.0)


class TestEdit:
    def test_constant_field_b_invariance(self):
        # [DERIVED] Euler is exact on constant fields: y0 = x0 - (v_y - v_x)
        f = ConstantField({"x": [0.0, 0.0], "y": [1.0, 0.0]}, null=[0.0, 0.0])
        x0 = np.array([0.4, -0.3])
        for b_idx in range(51):
            res = edit(f, x0, X, Y, EditConfig(combo="xx/yy", bypass_index=b_idx))
            np.testing.assert_allclose(res.y0, x0 - [1.0, 0.0], atol=1e-12)

    def test_no_bypass_is_partial_round_trip(self, pair_field):
        x0 = np.array([0.8, 0.3])
        cfg = EditConfig(use_bypass=False, bypass_index=20)
        res = edit(pair_field, x0, X, X, cfg)
        grid = make_time_grid(50, 3.0)
        gi, gr = cfg.guidances(X, X)
        rec = invert(pair_field, x0, grid, gi, gr)
        y0 = reconstruct(pair_field, rec.states[20], grid, 20, gr)
        assert res.metrics.fidelity == pytest.approx(fidelity(x0, y0), rel=1e-14)
        assert np.array_equal(res.b_star, np.zeros(2))

    def test_bypass_off_at_full_inversion_is_same(self, pair_field):
        x0 = np.array([0.8, 0.3])
        a = edit(pair_field, x0, X, Y, EditConfig(bypass_index=50))
        b = edit(pair_field, x0, X, Y, EditConfig(bypass_index=50, use_bypass=False))
        np.testing.assert_array_equal(a.y0, b.y0)

    def test_counters(self, pair_field):
        cfg = EditConfig(bypass_index=17)
        res = edit(pair_field, np.array([0.8, 0.3]), X, Y, cfg)
        gi, gr = cfg.guidances(X, Y)
        assert res.eval_counters == expected_eval_budget(50, 17, gi, gr, 2)

    def test_to_dict(self, pair_field):
        d = edit(pair_field, np.array([0.8, 0.3]), X, Y).to_dict()
        assert set(d) >= {"config", "t_B", "x0", "y0", "b_star", "metrics", "eval_counters"}
        assert d["t_B"] == pytest.approx(90 / 110)

    def test_unknown_condition(self, pair_field):
        with pytest.raises(FieldError):
            edit(pair_field, np.zeros(2), X, labeled("zz"))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_failure_names_stage(self):
        f = DiagonalLinearField({"x": ([-1e308], [0.0]), "y": ([-1e308], [1.0])})
        with pytest.raises(EditError) as info:
            with np.errstate(all="ignore"):
                edit(f, np.array([5.0]), X, Y, EditConfig(combo="xx/yy"))
        assert info.value.stage == "inversion"

    def test_metrics_absent_without_mixture(self):
        f = ConstantField({"x": [0.0], "y": [1.0]})
        assert edit(f, np.zeros(1), X, Y).metrics is None


class TestSweep:
    def test_dataset_is_seeded(self, pair_field):
        a = sample_dataset(pair_field, X, Y, 5, seed=3)
        b = sample_dataset(pair_field, X, Y, 5, seed=3)
        c = sample_dataset(pair_field, X, Y, 5, seed=4)
        assert all(np.array_equal(p[0], q[0]) for p, q in zip(a, b))
        assert not np.array_equal(a[0][0], c[0][0])

    def test_means_and_order(self, pair_field):
        ds = sample_dataset(pair_field, X, Y, 4, seed=1)
        rep = run_sweep(pair_field, ds, SweepSpec("bypass_index", [10, 40]))
        assert [(r["setting_index"], r["point_index"]) for r in rep.points] == \
            [(s, p) for s in range(2) for p in range(4)]
        for si, m in enumerate(rep.means):
            fids = [r["fidelity"] for r in rep.points if r["setting_index"] == si]
            assert m["mean_fidelity"] == pytest.approx(np.mean(fids), rel=1e-15)
            assert m["n_ok"] == 4

    def test_no_bypass_axis(self, pair_field):
        spec = SweepSpec("no_bypass_index", [30])
        assert spec.config_for(30).use_bypass is False

    def test_jobs_do_not_change_report(self, pair_field):
        ds = sample_dataset(pair_field, X, Y, 6, seed=2)
        spec = SweepSpec("zeta", [0.001, 0.1])
        assert run_sweep(pair_field, ds, spec, 1).to_dict() == run_sweep(pair_field, ds, spec, 2).to_dict()

    def test_point_failures_are_recorded(self):
        f = shifted_pair()
        ds = [(np.zeros(2), X, labeled("zz"))]
        rep = run_sweep(f, ds, SweepSpec("bypass_index", [10]))
        assert rep.means[0]["n_failed"] == 1 and rep.means[0]["mean_fidelity"] is None

    @pytest.mark.parametrize("axis,values", [("omega", [1.0]), ("bypass_index", []),
                                             ("bypass_index", [99])])
    def test_bad_spec(self, axis, values):
        with pytest.raises(ConfigError):
            SweepSpec(axis, values)

    def test_count_violations(self):
        assert count_violations([1, 2, 2, 3]) == 0
        assert count_violations([1, 0, 2, 1]) == 2
        assert count_violations([3, 2, 1], increasing=False) == 0
