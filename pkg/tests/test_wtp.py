import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from panelmxl.errors import DomainError, IdentificationError
from panelmxl.estimate import result_from_json, result_to_json
from panelmxl.modelspec import parse_model_spec
from panelmxl.wtp import (ScenarioSpec, build_report, coefficient_of_variation,
                          magnitude_ratio, marginal_money_values,
                          report_csv_lines, scenario_report, scenario_value,
                          sign_share, sign_shares)


class TestCoefficientOfVariation:
    # Published (location, spread) pairs and their dispersion ratios.
    @pytest.mark.parametrize("mean,sd,expected", [
        (-3.714, 1.028, -0.277), (-1.273, -1.911, 1.501), (7.756, 10.872, 1.402),
        (-3.536, 0.605, -0.171), (71.771, 57.285, 0.798), (-271.125, -57.813, 0.213),
    ])
    def test_published_pairs(self, mean, sd, expected):
        assert coefficient_of_variation(mean, sd) == pytest.approx(expected,
                                                                   abs=1e-3)

    def test_zero_mean_undefined(self):
        with pytest.raises(DomainError):
            coefficient_of_variation(0.0, 1.0)

    @given(m=st.floats(0.001, 100), s=st.floats(-100, 100),
           c=st.floats(0.001, 50), sm=st.booleans(), sc=st.booleans())
    @settings(max_examples=60, deadline=None)
    def test_scale_invariant(self, m, s, c, sm, sc):
        m = -m if sm else m
        c = -c if sc else c
        assert coefficient_of_variation(c * m, c * s) == pytest.approx(
            coefficient_of_variation(m, s), rel=1e-12)


class TestSignShare:
    def test_standard_normal(self):
        assert sign_share(0.0, 1.0) == 0.5

    def test_published_peer_effect(self):
        # Oracle: scipy normal CDF at 71.771 / 57.285.
        expected = float(norm.cdf(71.771 / 57.285))
        assert sign_share(71.771, 57.285) == pytest.approx(expected, abs=1e-12)
        assert sign_share(71.771, 57.285) == pytest.approx(0.8949, abs=1e-4)

    def test_degenerate(self):
        assert sign_share(5.0, 0.0) == 1.0
        assert sign_share(-5.0, 0.0) == 0.0

    @given(m=st.floats(-40, 40), s=st.floats(0.01, 60))
    @settings(max_examples=60, deadline=None)
    def test_complement(self, m, s):
        assert sign_share(m, s) + sign_share(-m, s) == pytest.approx(1.0,
                                                                     abs=1e-12)


class TestScenarioValue:
    INTERACTIONS_STAY = {"moderate": 227.238, "extreme": 347.974}
    INTERACTIONS_RIDE = {"moderate": -43.598, "extreme": -72.809}

    def test_peers_staying_moderate(self):
        net = scenario_value(-271.125, self.INTERACTIONS_STAY,
                             ScenarioSpec("moderate"))
        assert net == pytest.approx(-43.887, abs=1e-9)

    def test_peers_staying_extreme(self):
        net = scenario_value(-271.125, self.INTERACTIONS_STAY,
                             ScenarioSpec("extreme"))
        assert net == pytest.approx(76.849, abs=1e-9)

    def test_peers_ride_moderate(self):
        net = scenario_value(71.771, self.INTERACTIONS_RIDE,
                             ScenarioSpec("moderate"))
        assert net == pytest.approx(28.173, abs=1e-9)

    def test_peers_ride_extreme(self):
        net = scenario_value(71.771, self.INTERACTIONS_RIDE,
                             ScenarioSpec("extreme"))
        assert net == pytest.approx(-1.038, abs=1e-9)

    def test_low_scenario_is_base(self):
        assert scenario_value(-271.125, self.INTERACTIONS_STAY,
                              ScenarioSpec("low")) == -271.125

    @given(b=st.floats(-300, 300), i=st.floats(-300, 300))
    @settings(max_examples=40, deadline=None)
    def test_linear(self, b, i):
        s = ScenarioSpec("moderate")
        doubled = scenario_value(2 * b, {"moderate": 2 * i}, s)
        assert doubled == 2 * scenario_value(b, {"moderate": i}, s)

    def test_unknown_threat_rejected(self):
        with pytest.raises(DomainError):
            ScenarioSpec("apocalyptic")


class TestRatios:
    def test_wait_over_travel(self, table4):
        assert magnitude_ratio(table4, "wait_time", "travel_time") == \
            pytest.approx(1.249, abs=2e-3)

    def test_fear_over_anxiety(self, table4):
        assert magnitude_ratio(table4, "fear", "anxiety") == \
            pytest.approx(1.319, abs=2e-3)

    def test_staying_over_ride(self, table4):
        assert magnitude_ratio(table4, "peers_staying", "peers_ride") == \
            pytest.approx(3.778, abs=5e-3)


class TestMarginalValues:
    def test_wtp_space_directions(self, table4):
        rows = {r.attribute: r for r in marginal_money_values(table4)}
        assert "cost" not in rows  # the scale parameter is not a money value
        travel = rows["travel_time"]
        assert travel.direction == "compensate"
        assert travel.amount == pytest.approx(0.634, abs=1e-9)
        staying = rows["peers_staying"]
        assert staying.direction == "pay"
        assert staying.amount == pytest.approx(271.125, abs=1e-9)

    def test_zero_value(self):
        spec_text = ("space wtp\nprice p\nparam phi fixed init=-1\n"
                     "param z fixed init=0\nterm phi on p alts=1\n"
                     "term z on x alts=1\n")
        res = _result_for(spec_text, {"phi": -1.0, "z": 0.0})
        (row,) = marginal_money_values(res)
        assert row.amount == 0.0

    def test_independent_of_price_coefficient(self, table4):
        # The defining property of the wtp parameterization.
        import copy
        other = copy.deepcopy(table4)
        i = list(other.names).index("cost")
        other.estimates[i] = -1.234
        other.estimates[i + 1] = 0.1
        a = [(r.attribute, r.amount, r.direction) for r in marginal_money_values(table4)]
        b = [(r.attribute, r.amount, r.direction) for r in marginal_money_values(other)]
        assert a == b

    def test_preference_space_fixed_price_ratio(self):
        spec_text = ("space preference\nprice p\nparam phi fixed init=-0.02\n"
                     "param bt fixed init=-0.01268\n"
                     "term phi on p alts=1\nterm bt on t alts=1\n")
        res = _result_for(spec_text, {"phi": -0.02, "bt": -0.01268})
        (row,) = marginal_money_values(res)
        assert row.mean == pytest.approx(0.634, rel=1e-12)
        assert row.direction == "compensate"

    def test_preference_space_random_price_simulation(self):
        spec_text = ("space preference\nprice p\n"
                     "param phi random neglognormal init=-3.714 init_sd=1.028\n"
                     "param b fixed init=-0.02\n"
                     "term phi on p alts=1\nterm b on t alts=1\n")
        res = _result_for(spec_text, {"phi": -3.714, "phi_sd": 1.028, "b": -0.02})
        (row,) = marginal_money_values(res)
        # E[b / (-e^{m+s xi})] = -b * exp(-m + s^2/2).
        expected = -(-0.02) * math.exp(3.714 + 0.5 * 1.028 ** 2)
        assert row.mean == pytest.approx(expected, rel=0.02)  # Monte Carlo
        assert row.median == pytest.approx(-(-0.02) * math.exp(3.714), rel=0.02)

    def test_preference_space_normal_price_refused(self):
        spec_text = ("space preference\nprice p\n"
                     "param phi random normal init=-0.02 init_sd=0.01\n"
                     "param b fixed init=1\n"
                     "term phi on p alts=1\nterm b on t alts=1\n")
        res = _result_for(spec_text, {"phi": -0.02, "phi_sd": 0.01, "b": 1.0})
        with pytest.raises(IdentificationError):
            marginal_money_values(res)


def _result_for(spec_text, values):
    """Minimal result document wrapping given estimates."""
    from panelmxl.estimate import EstimationResult
    spec = parse_model_spec(spec_text)
    names = spec.estimated_names()
    est = np.array([values[n] for n in names], dtype=float)
    nan = np.full(len(names), np.nan)
    return EstimationResult(
        estimates=est, names=names, classical_se=nan, robust_se=nan,
        robust_t=nan, ll_final=0.0, ll_null=-1.0, adjusted_rho_sq=0.0,
        n_individuals=1, n_outcomes=1, n_draws=1, converged=True,
        iterations=0, spec=spec)


class TestScenarioReport:
    def test_extreme_scenario_rows(self, table4):
        rows = {r.attribute: r for r in scenario_report(table4,
                                                        ScenarioSpec("extreme"))}
        staying = rows["peers_staying"]
        assert staying.direction == "compensate"
        assert staying.amount == pytest.approx(76.849, abs=1e-6)
        ride = rows["peers_ride"]
        assert ride.direction == "pay"
        assert ride.amount == pytest.approx(1.038, abs=1e-6)
        pandemic = rows["pandemic_risk"]
        assert pandemic.amount == pytest.approx(abs(-219.452 + 3 * 85.021),
                                                abs=1e-6)
        assert pandemic.direction == "compensate"

    def test_moderate_scenario_rows(self, table4):
        rows = {r.attribute: r for r in scenario_report(table4,
                                                        ScenarioSpec("moderate"))}
        assert rows["peers_staying"].direction == "pay"
        assert rows["peers_staying"].amount == pytest.approx(43.887, abs=1e-6)
        assert rows["peers_ride"].direction == "compensate"
        assert rows["peers_ride"].amount == pytest.approx(28.173, abs=1e-6)

    def test_low_scenario_equals_base(self, table4):
        rows = {r.attribute: r for r in scenario_report(table4,
                                                        ScenarioSpec("low"))}
        assert rows["peers_staying"].amount == pytest.approx(271.125)
        assert rows["peers_staying"].direction == "pay"

    def test_csv_row_for_extreme_staying(self, table4):
        report = build_report(table4, scenarios=("extreme",))
        lines = report_csv_lines(report)
        assert lines[0] == "attribute,scenario,net_value,direction,unit"
        assert "peers_staying,extreme,76.85,compensate,per unit" in lines


class TestReport:
    def test_cov_table_matches_published(self, table4):
        report = build_report(table4)
        cov = dict(report.cov_table)
        assert cov["cost"] == pytest.approx(-0.171, abs=1e-3)
        assert cov["peers_ride"] == pytest.approx(0.798, abs=1e-3)
        assert cov["peers_staying"] == pytest.approx(0.213, abs=1e-3)

    def test_sign_shares(self, table4):
        shares = dict(sign_shares(table4))
        assert shares["cost"] == 0.0  # strictly negative by construction
        assert shares["peers_ride"] == pytest.approx(0.8949, abs=1e-4)
        assert shares["peers_staying"] == pytest.approx(
            float(norm.cdf(-271.125 / 57.813)), abs=1e-12)

    def test_fixture_round_trips_through_json(self, table4):
        back = result_from_json(result_to_json(table4))
        assert np.array_equal(back.estimates, table4.estimates)
        assert back.names == table4.names
