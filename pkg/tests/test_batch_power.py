import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcpowersim.batch_power import (
    JobClassModel,
    PowerSynthesisConfig,
    PowerTemplate,
    TemplateStore,
    add_alpha_pmf,
    ar1_residuals,
    expected_gpu_runtime_hours,
    sample_job,
    select_template,
    synthesize_job_power,
    template_minute_stats,
)
from dcpowersim.errors import ConfigurationError
from dcpowersim.seeds import substream


def _model(leaf_log_level, tl=7200, gpus=2):
    grid = np.array([0.25, 0.5, 0.75])
    return JobClassModel(
        group="g",
        tl_support=(tl,),
        tl_pmf=np.array([1.0]),
        gpu_tables={tl: ((gpus,), np.array([1.0]))},
        quantile_grid=grid,
        leaf_quantiles={(tl, gpus): np.full(3, leaf_log_level)},
        tl_quantiles={},
        group_quantiles=None,
    )


class TestRuntimeSampling:
    def test_degenerate_curve_fixes_runtime(self):
        model = _model(math.log(3600.0))
        for _ in range(20):
            tl, gpus, rt = sample_job(model, substream(1, "rt"))
            assert (tl, gpus) == (7200, 2)
            assert rt == pytest.approx(3600.0)

    def test_time_limit_truncates(self):
        model = _model(math.log(10800.0))
        _, _, rt = sample_job(model, substream(2, "rt"))
        assert rt == pytest.approx(7200.0)

    def test_add_alpha_pmf_hand_case(self):
        # counts 3 and 1 with add-alpha 1 over a 2-point support
        assert np.allclose(add_alpha_pmf([3, 1], 1.0), [4.0 / 6.0, 2.0 / 6.0])

    def test_expected_work_matches_degenerate_model(self):
        model = _model(math.log(3600.0))
        assert expected_gpu_runtime_hours(model) == pytest.approx(2.0)


def _template(key, n=5, mean=0.5, phi=0.5, support=200):
    means = np.full(n, mean)
    return PowerTemplate(
        key=key,
        minute_mean=means,
        minute_std=np.full(n, 0.05),
        minute_p5=means - 0.1,
        minute_p95=means + 0.1,
        ar1_phi=phi,
        support_count=support,
    )


class TestTemplateSelection:
    def test_leaf_at_gate_boundary_selected(self):
        store = TemplateStore(
            nodes={
                ("g", 3600, 2): _template(("g", 3600, 2), support=194),
                ("g", 3600): _template(("g", 3600), support=10_000),
            },
            runtime_bin_edges_log={},
        )
        chosen = select_template(store, ("g", 3600, 2, None), gate=194)
        assert chosen.key == ("g", 3600, 2)
        assert chosen.backoff_level == "gpus"

    def test_leaf_below_gate_backs_off_to_parent(self):
        store = TemplateStore(
            nodes={
                ("g", 3600, 2): _template(("g", 3600, 2), support=193),
                ("g", 3600): _template(("g", 3600), support=500),
            },
            runtime_bin_edges_log={},
        )
        chosen = select_template(store, ("g", 3600, 2, None), gate=194)
        assert chosen.key == ("g", 3600)
        assert chosen.backoff_level == "time-limit"

    def test_full_backoff_to_group_node(self):
        store = TemplateStore(
            nodes={
                ("g", 3600, 2): _template(("g", 3600, 2), support=5),
                ("g", 3600): _template(("g", 3600), support=50),
                ("g",): _template(("g",), support=10_000),
            },
            runtime_bin_edges_log={},
        )
        chosen = select_template(store, ("g", 3600, 2, None), gate=194)
        assert chosen.key == ("g",)
        assert chosen.backoff_level == "group"

    def test_runtime_bin_node_preferred_when_supported(self):
        store = TemplateStore(
            nodes={
                ("g", 3600, 2, 1): _template(("g", 3600, 2, 1), support=300),
                ("g", 3600, 2): _template(("g", 3600, 2), support=300),
            },
            runtime_bin_edges_log={
                ("g", 3600, 2): np.log([600.0, 1800.0, 3600.0])
            },
        )
        rbin = store.runtime_bin("g", 3600, 2, 2400.0)
        assert rbin == 1
        chosen = select_template(store, ("g", 3600, 2, rbin), gate=194)
        assert chosen.backoff_level == "runtime-bin"

    def test_no_node_meets_gate_raises(self):
        store = TemplateStore(
            nodes={("g",): _template(("g",), support=10)},
            runtime_bin_edges_log={},
        )
        with pytest.raises(ConfigurationError):
            select_template(store, ("g", 3600, 2, None), gate=194)


class TestMinuteStats:
    def test_query_past_end_holds_last_minute(self):
        tpl = _template(("g",), n=10)
        assert template_minute_stats(tpl, 10) == template_minute_stats(tpl, 9)

    def test_in_range_identity(self):
        tpl = PowerTemplate(
            key=("g",),
            minute_mean=np.arange(10, dtype=float) + 1.0,
            minute_std=np.zeros(10),
            minute_p5=np.arange(10, dtype=float) + 1.0,
            minute_p95=np.arange(10, dtype=float) + 1.0,
            ar1_phi=0.0,
            support_count=1,
        )
        assert template_minute_stats(tpl, 9)[0] == pytest.approx(10.0)

    def test_length_one_template_always_minute_zero(self):
        tpl = _template(("g",), n=1, mean=0.7)
        for minute in (0, 5, 500):
            assert template_minute_stats(tpl, minute)[0] == pytest.approx(0.7)


class TestResiduals:
    def test_white_noise_autocorrelation_near_zero(self):
        eps = ar1_residuals(0.0, 10**5, substream(1, "white"))
        r = np.corrcoef(eps[:-1], eps[1:])[0, 1]
        assert abs(r) <= 0.02

    def test_ar1_autocorrelation_matches_phi(self):
        eps = ar1_residuals(0.8, 10**5, substream(2, "ar"))
        r = np.corrcoef(eps[:-1], eps[1:])[0, 1]
        assert abs(r - 0.8) <= 0.02

    @given(st.floats(min_value=-0.95, max_value=0.95))
    @settings(max_examples=20, deadline=None)
    def test_residuals_unit_stationary_variance(self, phi):
        eps = ar1_residuals(phi, 30_000, substream(3, "var", str(phi)))
        assert eps.var() == pytest.approx(1.0, abs=0.1)


class TestSynthesis:
    def test_noiseless_output_is_scaled_clipped_mean(self):
        means = np.array([0.2, 0.6, 0.9])
        tpl = PowerTemplate(
            key=("g",),
            minute_mean=means,
            minute_std=np.full(3, 0.1),
            minute_p5=means - 0.05,
            minute_p95=means + 0.05,
            ar1_phi=0.3,
            support_count=50,
        )
        cfg = PowerSynthesisConfig(noise_factor=0.0, hw_factor=2.0, template_gate=0)
        out = synthesize_job_power(tpl, 180.0, 4, cfg, substream(4, "noiseless"))
        assert np.allclose(out, 2.0 * 4 * means)

    def test_trace_length_is_ceil_of_runtime_minutes(self):
        tpl = _template(("g",), n=3)
        cfg = PowerSynthesisConfig(noise_factor=0.0, hw_factor=1.0, template_gate=0)
        assert len(synthesize_job_power(tpl, 61.0, 1, cfg, substream(5, "len"))) == 2
        assert len(synthesize_job_power(tpl, 60.0, 1, cfg, substream(5, "len"))) == 1

    def test_output_respects_clip_band(self):
        tpl = _template(("g",), n=50, mean=0.5)
        cfg = PowerSynthesisConfig(noise_factor=5.0, hw_factor=1.0, template_gate=0)
        out = synthesize_job_power(tpl, 3000.0, 1, cfg, substream(6, "clip"))
        assert np.all(out >= 0.4 - 1e-12)
        assert np.all(out <= 0.6 + 1e-12)
