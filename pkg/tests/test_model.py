import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gbm_problem, wiener_problem
from homing import CaseKind, DomainError, HomingProblem, PowerLaw, classify, eval_coefficient, validate_problem

laws = st.builds(
    PowerLaw,
    st.floats(min_value=0.1, max_value=10.0, allow_nan=False),
    st.integers(min_value=-3, max_value=3),
)


@st.composite
def problems(draw):
    d1 = draw(st.floats(min_value=0.1, max_value=5.0))
    width = draw(st.floats(min_value=0.1, max_value=5.0))
    return HomingProblem(
        draw(laws), draw(laws), draw(laws),
        lam=draw(st.sampled_from([0.0, 0.5, -0.5, 1.0])),
        terminal_cost=draw(st.floats(min_value=0.01, max_value=100.0)),
        d1=d1, d2=d1 + width,
    )


class TestPowerLaw:
    def test_constant_law(self):
        assert eval_coefficient(PowerLaw(0.5, 0), 0.7) == 0.5

    def test_square(self):
        assert eval_coefficient(PowerLaw(1.0, 2), 3.0) == 9.0

    def test_pole_at_zero(self):
        with pytest.raises(DomainError):
            eval_coefficient(PowerLaw(2.0, -1), 0.0)
        with pytest.raises(DomainError):
            eval_coefficient(PowerLaw(2.0, -1), np.array([0.0, 1.0]))

    def test_zero_to_the_zero_is_one(self):
        assert eval_coefficient(PowerLaw(3.0, 0), 0.0) == 3.0
        np.testing.assert_array_equal(eval_coefficient(PowerLaw(3.0, 0), np.zeros(3)), 3.0)
        assert eval_coefficient(PowerLaw(3.0, 2), 0.0) == 0.0

    @pytest.mark.parametrize("coef", [0.0, -1.0, math.inf, math.nan])
    def test_bad_coefficient(self, coef):
        with pytest.raises(DomainError):
            PowerLaw(coef, 0)

    @pytest.mark.parametrize("exp", [0.5, "1", True])
    def test_non_integer_exponent(self, exp):
        with pytest.raises(DomainError):
            PowerLaw(1.0, exp)

    def test_integral_float_exponent_is_accepted(self):
        assert PowerLaw(1.0, 2.0).exponent == 2

    @given(laws, st.floats(min_value=0.01, max_value=10.0))
    def test_scalar_matches_array(self, pl, x):
        assert eval_coefficient(pl, x) == pytest.approx(float(eval_coefficient(pl, np.array([x]))[0]), rel=1e-14)


class TestValidation:
    def test_wiener_valid(self, wiener):
        assert validate_problem(wiener) is wiener

    def test_degenerate_interval(self):
        with pytest.raises(DomainError, match="d1 < d2"):
            validate_problem(wiener_problem(d1=1.0, d2=1.0))

    def test_log_branch_at_zero(self):
        with pytest.raises(DomainError, match=r"d1 must be > 0.*ln x"):
            validate_problem(gbm_problem(d1=0.0))

    def test_negative_power_at_zero(self):
        p = wiener_problem(drift=PowerLaw(1.0, -1))
        with pytest.raises(DomainError, match="pole"):
            validate_problem(p)

    def test_fractional_power_at_zero(self):
        # n = 2j - l = 1 puts x**(-1/2) into F''
        p = wiener_problem(variance=PowerLaw(1.0, 1), cost_weight=PowerLaw(0.5, 1))
        with pytest.raises(DomainError, match=r"x\*\*\(-1/2\)"):
            validate_problem(p)

    @pytest.mark.parametrize("field,value", [("terminal_cost", 0.0), ("terminal_cost", -1.0), ("d1", -0.5), ("lam", math.nan)])
    def test_bad_scalars(self, field, value):
        with pytest.raises(DomainError):
            validate_problem(wiener_problem(**{field: value}))

    @given(problems())
    def test_idempotent(self, p):
        try:
            first = validate_problem(p)
        except DomainError:
            return
        assert validate_problem(first) == first


class TestClassify:
    def test_wiener_both(self, wiener):
        tag = classify(wiener)
        assert tag.kind is CaseKind.BOTH
        assert (tag.n, tag.m) == (0, 0)
        assert tag.h0 == pytest.approx(0.25) and tag.g0 == pytest.approx(0.25)
        assert str(tag) == "Both(n=0, h0=0.25, m=0, g0=0.25)"

    def test_gbm_case2(self, gbm):
        tag = classify(gbm)
        assert tag.kind is CaseKind.CASE2
        assert tag.m == 2 and tag.g0 == pytest.approx(1 / 8)

    def test_neither(self):
        p = wiener_problem(drift=PowerLaw(1.0, 1), lam=1.0, d1=0.5)
        assert classify(p).kind is CaseKind.NEITHER

    def test_exponent_outside_range_is_neither(self):
        # n = 2*3 - 0 = 6 > 4, lam != 0 rules out Case 2
        p = wiener_problem(variance=PowerLaw(1.0, 3), lam=0.5, d1=0.5)
        assert classify(p).kind is CaseKind.NEITHER

    @given(problems())
    def test_pure_and_consistent(self, p):
        a, b = classify(p), classify(HomingProblem.from_dict(p.to_dict()))
        assert a == b
        if a.kind is CaseKind.BOTH:
            assert a.m == a.n
            assert a.g0 == pytest.approx(a.h0 / p.drift.coefficient, rel=1e-14)


class TestSerialization:
    @given(problems())
    def test_json_roundtrip(self, p):
        assert HomingProblem.from_json(p.to_json()) == p

    def test_lambda_key(self, wiener):
        assert "lambda" in json.loads(wiener.to_json())

    def test_missing_keys(self):
        with pytest.raises(DomainError, match="missing"):
            HomingProblem.from_dict({"d1": 0.0})

    def test_load(self, tmp_path, gbm):
        path = tmp_path / "p.json"
        path.write_text(gbm.to_json())
        assert HomingProblem.load(path) == gbm
