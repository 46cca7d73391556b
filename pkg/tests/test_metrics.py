import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import count_metrics
from fairrepair.errors import UndefinedGroupError
from fairrepair.metrics import (
    FairnessReport, FairnessThresholds, PredictionSet, demographic_parity, demographic_parity_ratio,
    equal_opportunity, evaluate, report_from_predictions,
)


def P(y_hat, s, y=None):
    y = y if y is not None else [1] * len(s)
    return PredictionSet(np.array(y_hat), np.array(y), np.array(s))


def random_prediction_set(rng, n):
    """Random binary vectors with both groups holding at least one Y=1 row."""
    while True:
        s = rng.integers(0, 2, n)
        y = rng.integers(0, 2, n)
        y_hat = rng.integers(0, 2, n)
        if all(((s == g) & (y == 1)).any() for g in (0, 1)):
            return y_hat, y, s


@st.composite
def prediction_sets(draw, min_size=4, max_size=60):
    n = draw(st.integers(min_size, max_size))
    bits = st.lists(st.integers(0, 1), min_size=n, max_size=n)
    y_hat, y, s = draw(bits), draw(bits), draw(bits)
    # guarantee both groups have a positive row
    s[0], y[0], s[1], y[1] = 0, 1, 1, 1
    return np.array(y_hat), np.array(y), np.array(s)


class TestDemographicParity:
    def test_symmetric_groups(self):
        assert demographic_parity(P([1, 0, 1, 0], [0, 0, 1, 1])) == 0.0

    def test_direct_count(self):
        assert demographic_parity(P([1, 1, 1, 0, 1, 0], [0, 0, 0, 0, 1, 1])) == pytest.approx(0.25)

    def test_empty_group(self):
        with pytest.raises(UndefinedGroupError):
            demographic_parity(P([1, 0], [0, 0]))


class TestRatio:
    def test_equal_rates(self):
        assert demographic_parity_ratio(P([1, 0, 1, 0], [0, 0, 1, 1])) == 1.0

    def test_two_thirds(self):
        # S=1 rate 0.5, S=0 rate 0.75
        p = P([1, 1, 1, 0, 1, 0], [0, 0, 0, 0, 1, 1])
        assert demographic_parity_ratio(p) == pytest.approx(2 / 3)

    def test_infinite_flag(self):
        p = P([0, 0, 1, 0], [0, 0, 1, 1])
        assert demographic_parity_ratio(p) == math.inf
        rep = report_from_predictions(p)
        assert rep.dpr_is_inf
        doc = rep.to_dict()
        assert doc["dpr_is_inf"] and doc["dpr"] is None

    def test_zero_over_zero(self):
        assert demographic_parity_ratio(P([0, 0, 0, 0], [0, 0, 1, 1])) == 1.0


class TestEqualOpportunity:
    def test_identical_tpr(self):
        assert equal_opportunity(P([1, 0, 1, 0], [0, 0, 1, 1], [1, 1, 1, 1])) == 0.0

    def test_direct_count(self):
        y_hat = [1, 1, 0, 0, 1, 0, 0, 0]
        s = [0, 0, 0, 0, 1, 1, 1, 1]
        assert equal_opportunity(P(y_hat, s, [1] * 8)) == pytest.approx(0.25)

    def test_no_positives_in_group(self):
        with pytest.raises(UndefinedGroupError) as info:
            equal_opportunity(P([1, 0], [0, 1], [1, 0]))
        assert info.value.metric == "eo"


class TestReport:
    def test_20_row_fixture(self):
        y = [1, 1, 1, 0, 0, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 1, 0, 0]
        s = [0] * 10 + [1] * 10
        y_hat = [1, 1, 0, 0, 1, 1, 0, 1, 1, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 0]
        rep = report_from_predictions(PredictionSet(y_hat, y, s))
        # group 0: 6/10 positive; y=1 rows (0,1,2,5,8,9) -> predicted 1,1,0,1,1,0 -> 4/6
        # group 1: 3/10 positive; y=1 rows (10,11,15,17) -> predicted 1,0,1,0 -> 2/4
        assert rep.group_positive_rates == {"s0": 0.6, "s1": 0.3}
        assert rep.dp == pytest.approx(0.3)
        assert rep.dpr == pytest.approx(0.5)
        assert rep.eo == pytest.approx(4 / 6 - 0.5)
        assert rep.acc == pytest.approx(13 / 20)
        assert rep.counts == {"s0_y0": 4, "s0_y1": 6, "s1_y0": 6, "s1_y1": 4}
        assert rep.passes == {"dp": False, "dpr": False, "eo": False}

    def test_perfect_classifier_independent_groups(self):
        y = np.array([0, 1, 0, 1, 0, 1, 0, 1])
        s = np.array([0, 0, 1, 1, 0, 0, 1, 1])
        rep = report_from_predictions(PredictionSet(y, y, s))
        assert (rep.acc, rep.dp, rep.eo, rep.dpr) == (1.0, 0.0, 0.0, 1.0)

    def test_undefined_metric_leaves_others(self):
        rep = report_from_predictions(PredictionSet([1, 0, 1], [1, 0, 0], [0, 0, 1]))
        assert rep.eo is None and "eo" in rep.errors
        assert rep.dp is not None and rep.dpr is not None

    def test_json_round_trip(self):
        rep = report_from_predictions(PredictionSet([0, 0, 1, 0], [0, 1, 1, 1], [0, 0, 1, 1]))
        back = FairnessReport.from_dict(rep.to_dict())
        assert back == rep

    def test_thresholds(self):
        rep = report_from_predictions(P([1, 0, 1, 0], [0, 0, 1, 1]), FairnessThresholds(0.0, 1.0, 0.0))
        assert rep.passes["dp"] and rep.passes["dpr"]

    def test_evaluate_uses_predictions(self):
        class Fixed:
            def predict(self, X):
                return np.array([1, 0, 1, 0])

        class Data:
            X = np.zeros((4, 1))
            Y = np.array([1, 0, 1, 1])
            S = np.array([0, 0, 1, 1])

        rep = evaluate(Fixed(), Data())
        assert rep.acc == 0.75


class TestOracleAgreement:
    def test_1000_random_sets(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            y_hat, y, s = random_prediction_set(rng, int(rng.integers(4, 80)))
            want = count_metrics(y_hat.tolist(), y.tolist(), s.tolist())
            rep = report_from_predictions(PredictionSet(y_hat, y, s))
            assert rep.dp == pytest.approx(want["dp"], abs=1e-12)
            assert rep.eo == pytest.approx(want["eo"], abs=1e-12)
            assert rep.acc == pytest.approx(want["acc"], abs=1e-12)
            if math.isinf(want["dpr"]):
                assert rep.dpr_is_inf
            else:
                assert rep.dpr == pytest.approx(want["dpr"], rel=1e-12)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(prediction_sets(), st.randoms(use_true_random=False))
    def test_permutation_invariance(self, data, rnd):
        y_hat, y, s = data
        perm = list(range(len(y)))
        rnd.shuffle(perm)
        a = report_from_predictions(PredictionSet(y_hat, y, s))
        b = report_from_predictions(PredictionSet(y_hat[perm], y[perm], s[perm]))
        assert (a.acc, a.dp, a.eo) == pytest.approx((b.acc, b.dp, b.eo), abs=1e-12)
        assert a.dpr == b.dpr

    @settings(max_examples=200, deadline=None)
    @given(prediction_sets())
    def test_group_swap(self, data):
        y_hat, y, s = data
        a = report_from_predictions(PredictionSet(y_hat, y, s))
        b = report_from_predictions(PredictionSet(y_hat, y, 1 - s))
        assert a.dp == pytest.approx(b.dp, abs=1e-12)
        assert a.eo == pytest.approx(b.eo, abs=1e-12)
        if not a.dpr_is_inf and not b.dpr_is_inf and a.dpr > 0:
            assert b.dpr == pytest.approx(1 / a.dpr, rel=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(prediction_sets())
    def test_ranges(self, data):
        rep = report_from_predictions(PredictionSet(*data))
        assert 0 <= rep.dp <= 1 and 0 <= rep.eo <= 1 and rep.dpr >= 0

    @settings(max_examples=100, deadline=None)
    @given(prediction_sets())
    def test_self_concatenation(self, data):
        y_hat, y, s = data
        a = report_from_predictions(PredictionSet(y_hat, y, s))
        b = report_from_predictions(PredictionSet(np.tile(y_hat, 2), np.tile(y, 2), np.tile(s, 2)))
        assert (a.acc, a.dp, a.eo) == pytest.approx((b.acc, b.dp, b.eo), abs=1e-12)
        assert a.dpr == b.dpr or a.dpr == pytest.approx(b.dpr, rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(prediction_sets())
    def test_ratio_times_rate(self, data):
        rep = report_from_predictions(PredictionSet(*data))
        r0, r1 = rep.group_positive_rates["s0"], rep.group_positive_rates["s1"]
        assert rep.dp == pytest.approx(abs(r0 - r1), abs=1e-12)
        if not rep.dpr_is_inf and r0 > 0:
            assert rep.dpr * r0 == pytest.approx(r1, abs=1e-12)
