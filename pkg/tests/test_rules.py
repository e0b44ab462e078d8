import math

import pytest

from core.rules import Expression, ParameterRule


def test_functions_and_variable():
    assert Expression("sqrt(n)")(10_000) == pytest.approx(100.0)
    assert Expression("log n")(math.e ** 3) == pytest.approx(3.0)
    assert Expression("loglog(n)")(math.e ** math.e) == pytest.approx(1.0)


def test_operator_precedence():
    assert Expression("2^3^2")(1) == 512.0
    assert Expression("-2^2")(1) == -4.0
    assert Expression("1 + 2*3")(1) == 7.0
    assert Expression("(1 + 2)*3")(1) == 9.0
    assert Expression("2×3 − 1")(1) == 5.0
    assert Expression("n/4/2")(16) == 2.0


def test_presets_evaluate():
    rule = ParameterRule.preset("critical")
    params = rule.params_at(10_000)
    assert params.d == 100
    assert params.lam == pytest.approx(1 - math.log(100) / 100)


@pytest.mark.parametrize("text", ["sqrt(", "n +", "foo(n)", "", "n n"])
def test_parse_errors(text):
    with pytest.raises(ValueError):
        Expression(text)


@pytest.mark.parametrize("text", ["log(0 - n)", "1/(n - n)", "sqrt(0 - 1)", "(0 - 1)^0.5"])
def test_evaluation_errors(text):
    with pytest.raises(ValueError):
        Expression(text)(10)


def test_rule_parse():
    rule = ParameterRule.parse("d = sqrt(n); lambda = 1 - 1/sqrt(n)")
    params = rule.params_at(10_000)
    assert params.d == 100
    assert params.lam == pytest.approx(0.99)
    multiline = ParameterRule.parse("d = 5\nlambda = 0.5\n")
    assert multiline.params_at(100).d == 5


def test_rule_parse_rejects_bad_keys():
    with pytest.raises(ValueError):
        ParameterRule.parse("d = 5")
    with pytest.raises(ValueError):
        ParameterRule.parse("d = 5; mu = 0.5; lambda = 0.5")
    with pytest.raises(ValueError):
        ParameterRule.preset("nope")


def test_d_is_rounded_and_clamped():
    assert ParameterRule("2*n", "0.5").d_at(10) == 10
    assert ParameterRule("0", "0.5").d_at(10) == 1
    assert ParameterRule("log(n)", "0.5").d_at(1000) == 7


def test_constant_rule():
    rule = ParameterRule.constant(30, 0.8)
    assert rule.params_at(10_000).d == 30
    assert rule.lam_at(10_000) == 0.8
