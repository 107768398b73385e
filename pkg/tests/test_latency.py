"""Latency model tests: mixtures, bounds, diurnal scaling, histograms."""
import pytest
from hypothesis import given, strategies as st

from chargesim.latency import (
    DiurnalProfile,
    LatencyModel,
    LinkKind,
    MixtureComponent,
    TimingBudget,
    count_modes,
    default_models,
    empirical_histogram,
    ethernet_default,
    histograms_indistinguishable,
    round_trip_time,
    sample_latency,
    threeg_default,
    worst_case_budget,
)
from chargesim.sim import substream


def fixed_model(location, kind=LinkKind.ETHERNET, hard_max=None):
    return LatencyModel(
        kind=kind,
        components=(MixtureComponent(1.0, location, 0.0),),
        hard_max=hard_max if hard_max is not None else max(location * 2, 1e-6),
    )


class TestSampling:
    def test_degenerate_model_is_constant(self):
        model = fixed_model(0.2)
        rng = substream(1, "t")
        assert all(sample_latency(model, rng) == 0.2 for _ in range(100))

    def test_default_threeg_bounded_by_worst_case(self):
        model = threeg_default()
        rng = substream(2, "t")
        draws = [model.sample(rng) for _ in range(20000)]
        assert max(draws) <= 4.5
        assert min(draws) > 0.0

    def test_default_ethernet_is_microsecond_band(self):
        model = ethernet_default()
        rng = substream(3, "t")
        assert all(model.sample(rng) <= 1e-3 for _ in range(5000))

    def test_default_threeg_has_four_components(self):
        assert len(threeg_default().components) == 4

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            LatencyModel(
                kind=LinkKind.WIFI,
                components=(MixtureComponent(0.5, 1.0, 0.1), MixtureComponent(0.4, 2.0, 0.1)),
                hard_max=5.0,
            )

    def test_non_positive_weight_rejected(self):
        with pytest.raises(ValueError):
            LatencyModel(
                kind=LinkKind.WIFI,
                components=(MixtureComponent(0.0, 1.0, 0.1), MixtureComponent(1.0, 2.0, 0.1)),
                hard_max=5.0,
            )

    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_samples_always_in_support(self, seed):
        model = threeg_default()
        rng = substream(seed, "support")
        x = model.sample(rng)
        assert 0.0 < x <= model.hard_max


class TestDiurnal:
    def test_profile_validates_length_and_range(self):
        with pytest.raises(ValueError):
            DiurnalProfile(scale=(1.0,) * 167)
        with pytest.raises(ValueError):
            DiurnalProfile(scale=(0.0,) + (1.0,) * 167)

    def test_fast_hours_scale_location_but_not_support(self):
        fast = DiurnalProfile.with_fast_hours(range(0, 24), 0.5)
        model = LatencyModel(
            kind=LinkKind.THREE_G,
            components=threeg_default().components,
            hard_max=4.5,
            diurnal=fast,
        )
        rng_fast = substream(9, "d")
        rng_slow = substream(9, "d")
        fast_hour = [model.sample(rng_fast, at=3600.0) for _ in range(4000)]       # inside fast day
        slow_hour = [model.sample(rng_slow, at=3600.0 * 30) for _ in range(4000)]  # later in the week
        assert sum(fast_hour) / 4000 < sum(slow_hour) / 4000
        # support invariance: the clamp still rules at every hour
        for hour in range(0, 168, 13):
            rng = substream(9, f"h{hour}")
            assert max(model.sample(rng, at=hour * 3600.0) for _ in range(2000)) <= 4.5

    def test_multiplier_is_week_periodic(self):
        prof = DiurnalProfile.with_fast_hours([5], 0.25)
        assert prof.multiplier(5 * 3600.0) == 0.25
        assert prof.multiplier((5 + 168) * 3600.0) == 0.25
        assert prof.multiplier(6 * 3600.0) == 1.0


class TestRoundTrip:
    def test_ethernet_co_located_is_metering_dominated(self):
        # cloud terms zero, link negligible, metering pinned at 0.2
        budget = TimingBudget(t_ethernet=0.0, t_metering=0.2)
        assert round_trip_time(budget, LinkKind.ETHERNET) == pytest.approx(0.2)

    def test_all_zero_budget_gives_zero(self):
        assert round_trip_time(TimingBudget(), LinkKind.THREE_G) == 0.0

    def test_threeg_worst_case_round_trip(self):
        # 20 s over four readings means 20/4 - 4.5 = 0.5 s of metering
        budget = TimingBudget(t_3g=4.5, t_metering=0.5)
        assert round_trip_time(budget, LinkKind.THREE_G) == pytest.approx(5.0)

    def test_sampled_round_trip_adds_link_and_metering(self):
        models = default_models()
        fixed = models.__class__(
            ethernet=fixed_model(0.001),
            wifi=fixed_model(0.02),
            threeg=fixed_model(4.5, LinkKind.THREE_G, hard_max=4.5),
            local_bus=fixed_model(0.001),
            metering=fixed_model(0.5, hard_max=0.5),
        )
        rng = substream(1, "rtt")
        assert round_trip_time(fixed, LinkKind.THREE_G, rng) == pytest.approx(5.0)

    def test_uplink_is_half_the_round_trip(self):
        budget = TimingBudget(t_3g=5.0)
        assert budget.t_3g_uplink == 2.5

    def test_negative_budget_field_rejected(self):
        with pytest.raises(ValueError):
            TimingBudget(t_3g=-1.0)

    def test_worst_case_budget_bounds_models(self):
        models = default_models()
        budget = worst_case_budget(models)
        assert budget.t_3g == models.threeg.hard_max
        assert budget.t_metering == models.metering.hard_max
        assert budget.t_ethernet == models.local_bus.hard_max


class TestHistogram:
    def test_degenerate_model_fills_one_bin(self):
        hist = empirical_histogram(fixed_model(0.2, hard_max=1.0), 500, 10, substream(1, "h"))
        assert sum(1 for c in hist.counts if c > 0) == 1
        assert hist.n == 500

    def test_zero_bins_rejected(self):
        with pytest.raises(ValueError):
            empirical_histogram(fixed_model(0.2), 10, 0, substream(1, "h"))

    def test_zero_draws_rejected(self):
        with pytest.raises(ValueError):
            empirical_histogram(fixed_model(0.2), 0, 10, substream(1, "h"))

    def test_default_threeg_shows_four_modes_at_1e5(self):
        hist = empirical_histogram(threeg_default(), 100_000, 45, substream(4, "h"))
        assert hist.mode_count() == 4

    def test_mixture_mean_matches_analytic_within_one_percent(self):
        # closed form: 0.4*0.8 + 0.3*1.5 + 0.2*2.5 + 0.1*4.0 = 1.67
        model = threeg_default()
        assert model.analytic_mean() == pytest.approx(1.67, abs=1e-12)
        rng = substream(6, "mean")
        n = 100_000
        draws_mean = sum(model.sample(rng) for _ in range(n)) / n
        assert draws_mean == pytest.approx(1.67, rel=0.01)

    def test_count_modes_on_synthetic_shapes(self):
        assert count_modes([0, 2, 10, 2, 0, 0, 2, 9, 2, 0]) == 2
        assert count_modes([5, 5, 5]) == 1
        assert count_modes([]) == 0
        assert count_modes([0, 0, 0]) == 0

    def test_same_model_different_streams_indistinguishable(self):
        model = threeg_default()
        h1 = empirical_histogram(model, 30_000, 30, substream(12, "loc-a"))
        h2 = empirical_histogram(model, 30_000, 30, substream(12, "loc-b"))
        assert histograms_indistinguishable(h1, h2, alpha=0.01)

    def test_shifted_model_is_distinguishable(self):
        base = threeg_default()
        shifted = LatencyModel(
            kind=LinkKind.THREE_G,
            components=tuple(
                MixtureComponent(c.weight, c.location + 0.3, c.spread)
                for c in base.components
            ),
            hard_max=4.8,
        )
        h1 = empirical_histogram(base, 30_000, 30, substream(12, "loc-a"), )
        # same binning is required: rebin shifted draws over base's range
        from chargesim.latency import histogram_of
        rng = substream(12, "loc-b")
        draws = [min(shifted.sample(rng), base.hard_max) for _ in range(30_000)]
        h2 = histogram_of(draws, 30, 0.0, base.hard_max)
        assert not histograms_indistinguishable(h1, h2, alpha=0.01)
