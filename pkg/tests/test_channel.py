import math

import pytest

from ratmesh.channel import (
    ChannelParams,
    RatParams,
    channel_curve,
    default_channel_params,
    default_rats,
    link_prob,
    link_prob_batch,
    los_distance,
    mean_loss,
    median_loss_los,
    median_loss_nlos,
    outage_prob,
    q_function,
    write_curve_csv,
)

PARAMS = default_channel_params()
RAT1, RAT2 = default_rats()


class TestLosDistance:
    def test_reference_value_exact(self):
        assert los_distance(0.1) == 276.0

    def test_hand_computed_value(self):
        # 212*(log10 0.01)^2 - 64*log10(0.01) = 212*4 + 128
        assert los_distance(0.01) == pytest.approx(976.0, abs=1e-9)

    def test_limit_toward_one_vanishes(self):
        assert los_distance(1.0 - 1e-12) == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.5, 2.0])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            los_distance(bad)


class TestMedianLoss:
    def test_los_free_space_anchor(self):
        # 1 km at 1 MHz with no offset leaves only the free-space constant.
        p = ChannelParams(delta_los=0.0)
        assert median_loss_los(1000.0, 1.0, p) == pytest.approx(32.45, abs=1e-12)

    def test_los_at_transition_distance(self):
        assert median_loss_los(276.0, 2400.0, PARAMS) == pytest.approx(
            80.97240647553646, abs=1e-9)

    def test_los_short_range_868(self):
        assert median_loss_los(100.0, 868.0, PARAMS) == pytest.approx(
            63.32039450352985, abs=1e-9)

    def test_nlos_anchor(self):
        p = ChannelParams(l_urban=0.0, delta_nlos=0.0)
        assert median_loss_nlos(1000.0, 1.0, p) == pytest.approx(9.5, abs=1e-12)

    def test_nlos_long_range_1km(self):
        assert median_loss_nlos(1000.0, 868.0, PARAMS) == pytest.approx(
            139.53338763294215, abs=1e-9)

    def test_nlos_past_transition(self):
        assert median_loss_nlos(296.0, 2400.0, PARAMS) == pytest.approx(
            138.26117431937982, abs=1e-9)

    @pytest.mark.parametrize("d", [0.0, -5.0])
    def test_rejects_nonpositive_distance(self, d):
        with pytest.raises(ValueError):
            median_loss_los(d, 2400.0, PARAMS)
        with pytest.raises(ValueError):
            median_loss_nlos(d, 2400.0, PARAMS)


class TestMeanLoss:
    def test_matches_los_at_lower_edge(self):
        assert mean_loss(276.0, 2400.0, PARAMS) == pytest.approx(
            median_loss_los(276.0, 2400.0, PARAMS), abs=1e-12)

    def test_matches_nlos_at_upper_edge(self):
        assert mean_loss(296.0, 2400.0, PARAMS) == pytest.approx(
            median_loss_nlos(296.0, 2400.0, PARAMS), abs=1e-12)

    def test_midpoint_interpolation(self):
        assert mean_loss(286.0, 2400.0, PARAMS) == pytest.approx(
            109.61679039745815, abs=1e-9)

    @pytest.mark.parametrize("f", [868.0, 2400.0])
    def test_continuity_at_both_edges(self, f):
        # One-sided limits coincide: the interpolation hits the regime value
        # exactly at each edge of the transition zone.
        lo = PARAMS.d_los
        hi = PARAMS.d_los + PARAMS.transition_width
        assert abs(mean_loss(lo, f, PARAMS) - median_loss_los(lo, f, PARAMS)) < 1e-9
        assert abs(mean_loss(hi, f, PARAMS) - median_loss_nlos(hi, f, PARAMS)) < 1e-9
        # And the interpolated values approach the edges smoothly.
        eps = 1e-9
        assert abs(mean_loss(lo + eps, f, PARAMS) - mean_loss(lo, f, PARAMS)) < 1e-6
        assert abs(mean_loss(hi - eps, f, PARAMS) - mean_loss(hi, f, PARAMS)) < 1e-6

    @pytest.mark.parametrize("f", [868.0, 2400.0])
    def test_nondecreasing_on_fine_grid(self, f):
        prev = mean_loss(1.0, f, PARAMS)
        for d in range(2, 5001):
            cur = mean_loss(float(d), f, PARAMS)
            assert cur >= prev - 1e-12
            prev = cur


class TestQFunction:
    def test_symmetry_point(self):
        assert q_function(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_limits(self):
        assert q_function(math.inf) == 0.0
        assert q_function(-math.inf) == 1.0

    def test_table_value(self):
        assert q_function(1.0) == pytest.approx(0.15865525393145707, abs=1e-12)

    def test_complement_identity(self):
        z = -8.0
        while z <= 8.0:
            assert abs(q_function(z) + q_function(-z) - 1.0) < 1e-12
            z += 0.25


class TestOutage:
    def test_half_where_loss_equals_mcl(self):
        # Find d with mean loss equal to the MCL by bisection, then check 0.5.
        lo, hi = 1.0, 5000.0
        for _ in range(200):
            mid = (lo + hi) / 2
            if mean_loss(mid, RAT2.carrier_freq_mhz, PARAMS) < RAT2.max_coupling_loss_db:
                lo = mid
            else:
                hi = mid
        assert outage_prob((lo + hi) / 2, RAT2, PARAMS) == pytest.approx(0.5, abs=1e-6)

    def test_short_distance_limit(self):
        assert outage_prob(0.5, RAT1, PARAMS) < 1e-12

    def test_long_range_1km(self):
        assert outage_prob(1000.0, RAT2, PARAMS) == pytest.approx(
            0.019383152811768646, abs=1e-12)

    def test_complementarity(self):
        for d in (10.0, 276.0, 290.0, 1000.0, 4000.0):
            assert link_prob(d, RAT2, PARAMS) + outage_prob(d, RAT2, PARAMS) == 1.0

    def test_link_prob_1km_long_range(self):
        assert link_prob(1000.0, RAT2, PARAMS) == pytest.approx(
            0.9806168471882314, abs=1e-12)

    @pytest.mark.parametrize("rat", [RAT1, RAT2])
    def test_monotone_nondecreasing(self, rat):
        prev = 0.0
        for d in range(1, 5001):
            cur = outage_prob(float(d), rat, PARAMS)
            assert 0.0 <= cur <= 1.0
            assert cur >= prev - 1e-12
            prev = cur

    def test_literal_sign_flips_orientation(self):
        d = 1000.0
        assert outage_prob(d, RAT2, PARAMS, literal_sign=True) == pytest.approx(
            1.0 - outage_prob(d, RAT2, PARAMS), abs=1e-15)

    def test_batch_matches_scalar(self):
        ds = [1.0, 100.0, 276.0, 286.0, 296.0, 1234.5, 4999.0]
        batch = link_prob_batch(ds, RAT2, PARAMS)
        for d, p in zip(ds, batch):
            assert p == pytest.approx(link_prob(d, RAT2, PARAMS), abs=1e-15)


class TestChannelCurve:
    def test_transition_zone_jump_short_range(self):
        rows = channel_curve(RAT1, [276.0, 296.0], PARAMS)
        assert rows[0][1] < 0.001
        assert rows[1][1] > 0.999

    def test_long_range_low_outage_within_1km(self):
        rows = channel_curve(RAT2, [float(d) for d in range(50, 1001, 50)], PARAMS)
        assert all(p < 0.05 for _d, p in rows)

    def test_single_point(self):
        assert len(channel_curve(RAT2, [100.0], PARAMS)) == 1

    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError):
            channel_curve(RAT1, [], PARAMS)
        with pytest.raises(ValueError):
            channel_curve(RAT1, [10.0, 10.0], PARAMS)
        with pytest.raises(ValueError):
            channel_curve(RAT1, [-1.0, 5.0], PARAMS)

    def test_csv_output(self, tmp_path):
        rows = channel_curve(RAT1, [100.0, 200.0], PARAMS)
        path = tmp_path / "curve.csv"
        write_curve_csv(rows, path)
        text = path.read_text()
        lines = text.splitlines()
        assert lines[0] == "d_m,p_out"
        assert len(lines) == 3
        assert text.endswith("\n")


class TestParams:
    def test_d_los_recomputed_on_construction(self):
        p = ChannelParams(location_pct=0.01)
        assert p.d_los == pytest.approx(976.0)

    def test_rejects_bad_channel_params(self):
        with pytest.raises(ValueError):
            ChannelParams(transition_width=0.0)
        with pytest.raises(ValueError):
            ChannelParams(shadow_sigma=-1.0)
        with pytest.raises(ValueError):
            ChannelParams(location_pct=1.5)

    def test_rejects_bad_rat_params(self):
        with pytest.raises(ValueError):
            RatParams(3, 868.0, 154.0)
        with pytest.raises(ValueError):
            RatParams(1, -1.0, 105.0)
        with pytest.raises(ValueError):
            RatParams(2, 868.0, 154.0, time_cost=0.5)
