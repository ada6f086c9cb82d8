import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarm_symreg import exprtree as et
from swarm_symreg.exprtree import (
    COMPLEX_RESULT,
    DOMAIN_ERROR,
    NON_FINITE,
    CostTable,
    ExprError,
    ExprSyntaxError,
    Invalid,
    Op,
    Param,
    Var,
)


def two_term_power_law():
    # p0/x0^p1 - p2/x0^p3
    expr = Op(
        "sub",
        (
            Op("div", (Param(0), Op("pow", (Var(0), Param(1))))),
            Op("div", (Param(2), Op("pow", (Var(0), Param(3))))),
        ),
    )
    return expr


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_constant_leaf():
    assert et.evaluate(Param(0), [3.5], []) == 3.5


def test_evaluate_hex_target_at_point():
    # direct arithmetic oracle: 1.2e-10/0.1^12 - 2.2e-5/0.1^6 = 120 - 22
    expr = two_term_power_law()
    params = [1.2e-10, 12.0, 2.2e-5, 6.0]
    got = et.evaluate(expr, params, [0.1])
    assert got == pytest.approx(98.0, rel=1e-9)


def test_evaluate_negative_base_fractional_exponent_is_complex():
    expr = Op("pow", (Var(0), Param(0)))
    out = et.evaluate(expr, [0.5], [-1.0])
    assert out == Invalid(COMPLEX_RESULT)


def test_evaluate_division_by_zero_is_domain_error():
    expr = Op("div", (Param(0), Var(0)))
    assert et.evaluate(expr, [1.0], [0.0]) == Invalid(DOMAIN_ERROR)


def test_evaluate_overflow_is_non_finite():
    expr = Op("pow", (Param(0), Param(1)))
    assert et.evaluate(expr, [1e300, 4.0], []) == Invalid(NON_FINITE)


def test_evaluate_zero_base_negative_exponent_is_domain_error():
    expr = Op("pow", (Var(0), Param(0)))
    assert et.evaluate(expr, [-1.0], [0.0]) == Invalid(DOMAIN_ERROR)


def test_evaluate_rejects_wrong_param_count():
    with pytest.raises(ExprError):
        et.evaluate(Param(0), [], [])


def test_evaluate_neg():
    expr = Op("neg", (Var(0),))
    assert et.evaluate(expr, [], [2.5]) == -2.5


# ---------------------------------------------------------------------------
# batch evaluation agrees with the scalar path


@st.composite
def random_tree(draw, max_depth=4, n_features=2):
    depth = draw(st.integers(0, max_depth))
    counter = {"slot": 0}

    def build(d):
        if d <= 0 or draw(st.booleans()) and d < max_depth:
            if draw(st.booleans()):
                return Var(draw(st.integers(0, n_features - 1)))
            p = Param(counter["slot"])
            counter["slot"] += 1
            return p
        kind = draw(st.sampled_from(["add", "sub", "mul", "div", "pow", "neg"]))
        if kind == "neg":
            return Op(kind, (build(d - 1),))
        return Op(kind, (build(d - 1), build(d - 1)))

    expr = build(depth)
    params = draw(
        st.lists(
            st.floats(-10, 10, allow_nan=False),
            min_size=counter["slot"],
            max_size=counter["slot"],
        )
    )
    return expr, np.asarray(params)


@given(random_tree(), st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2))
@settings(max_examples=200, deadline=None)
def test_batch_matches_scalar(tree, row):
    expr, params = tree
    X = np.asarray([row])
    scalar = et.evaluate(expr, params, row)
    batch = et.evaluate_rows(expr, params, X)
    if isinstance(scalar, Invalid):
        assert isinstance(batch, Invalid)
    else:
        assert not isinstance(batch, Invalid)
        assert batch[0] == scalar


def test_batch_shapes_and_reason_codes():
    expr = Op("div", (Param(0), Var(0)))
    X = np.array([[1.0], [2.0]])
    params = np.array([[4.0], [8.0]])
    values, reasons = et.evaluate_batch(expr, params, X)
    assert values.shape == (2, 2)
    assert reasons.tolist() == [0, 0]
    np.testing.assert_allclose(values, [[4.0, 2.0], [8.0, 4.0]])


def test_batch_flags_only_offending_candidate():
    expr = Op("pow", (Param(0), Param(1)))
    params = np.array([[2.0, 3.0], [-2.0, 0.5]])
    X = np.zeros((3, 1))
    values, reasons = et.evaluate_batch(expr, params, X)
    assert reasons[0] == 0
    assert reasons[1] != 0
    np.testing.assert_allclose(values[0], 8.0)


# ---------------------------------------------------------------------------
# complexity


def test_complexity_single_param_leaf():
    assert et.complexity(Param(0)) == 0


def test_complexity_add_costs_two():
    assert et.complexity(Op("add", (Var(0), Var(1)))) == 2


def test_complexity_two_term_power_law():
    # sub 2 + 2*div 2 + 2*pow 2 with constant exponents = 10
    assert et.complexity(two_term_power_law()) == 10


def test_complexity_pow_with_operator_exponent():
    expr = Op("pow", (Var(0), Op("add", (Param(0), Param(1)))))
    assert et.complexity(expr) == 20 + 2
    # a variable exponent is also not a single parameter leaf
    assert et.complexity(Op("pow", (Var(0), Var(0)))) == 20


def test_complexity_additive_for_non_pow():
    a = two_term_power_law()
    b = Op("neg", (Var(0),))
    both = Op("mul", (a, et.shift_param_slots(b, 4)))
    assert et.complexity(both) == 2 + et.complexity(a) + et.complexity(b)


def test_cost_table_validation():
    with pytest.raises(ExprError):
        CostTable(costs={"add": -1, "sub": 2, "mul": 2, "div": 2, "pow": 2, "neg": 1})
    with pytest.raises(ExprError):
        CostTable(pow_with_operator_exponent=1)


# ---------------------------------------------------------------------------
# structural equality


def test_structural_equal_ignores_parameters():
    a = Op("div", (Param(0), Var(0)))
    b = Op("div", (Param(0), Var(0)))
    assert et.structural_equal(a, b)


def test_structural_equal_distinguishes_operators():
    a = Op("div", (Param(0), Var(0)))
    b = Op("mul", (Param(0), Var(0)))
    assert not et.structural_equal(a, b)


def test_structural_equal_distinguishes_variable_indices():
    assert not et.structural_equal(Var(0), Var(1))


@given(random_tree(), random_tree(), random_tree())
@settings(max_examples=100, deadline=None)
def test_structural_equal_is_equivalence(ta, tb, tc):
    a, b, c = ta[0], tb[0], tc[0]
    assert et.structural_equal(a, a)
    assert et.structural_equal(a, b) == et.structural_equal(b, a)
    if et.structural_equal(a, b) and et.structural_equal(b, c):
        assert et.structural_equal(a, c)


@given(random_tree())
@settings(max_examples=100, deadline=None)
def test_structure_key_matches_structural_equal(tree):
    expr, params = tree
    # perturbing parameter values changes neither key nor complexity
    expr2, params2 = et.canonicalize_params(
        expr, {s: v + 1.0 for s, v in zip(et.param_slots(expr), params)}
    )
    assert et.structure_key(expr) == et.structure_key(expr2)
    assert et.structural_equal(expr, expr2)
    assert et.complexity(expr) == et.complexity(expr2)


# ---------------------------------------------------------------------------
# serialize / parse


def test_serialize_simple_sum():
    expr = Op("add", (Param(0), Var(0)))
    assert et.serialize(expr, [2.0]) == "(2 + x0)"


def test_parse_round_trip_table_style_string():
    text = "((8.0000000000000005e-09 / (x0 ^ 10.07)) - (9.7999999999999993e-06 / (x0 ^ 6.54)))"
    expr, params = et.parse(text)
    assert et.structural_equal(expr, two_term_power_law())
    assert et.serialize(expr, params) == text


@given(random_tree())
@settings(max_examples=150, deadline=None)
def test_round_trip_random_trees(tree):
    expr, params = tree
    text = et.serialize(expr, params)
    expr2, params2 = et.parse(text)
    assert et.structural_equal(expr, expr2)
    assert et.serialize(expr2, params2) == text


def test_parse_reports_end_of_input():
    with pytest.raises(ExprSyntaxError) as e:
        et.parse("(2 +")
    assert e.value.position == 4


def test_parse_reports_bad_character():
    with pytest.raises(ExprSyntaxError) as e:
        et.parse("(2 + $)")
    assert e.value.position == 5


def test_parse_rejects_trailing_tokens():
    with pytest.raises(ExprSyntaxError):
        et.parse("x0 x1")


def test_serialize_negative_parameter_round_trips():
    expr = Op("mul", (Var(0), Param(0)))
    text = et.serialize(expr, [-3.5])
    assert text == "(x0 * -3.5)"
    expr2, params2 = et.parse(text)
    assert et.structural_equal(expr, expr2)
    assert params2[0] == -3.5


def test_neg_serialization_round_trips():
    expr = Op("neg", (Param(0),))
    text = et.serialize(expr, [3.5])
    expr2, _ = et.parse(text)
    assert et.structural_equal(expr, expr2)


# ---------------------------------------------------------------------------
# surgery helpers


def test_paths_and_replace():
    expr = two_term_power_law()
    paths = et.all_paths(expr)
    assert () in paths and (0, 1, 0) in paths
    assert et.get_subtree(expr, (0, 0)) == Param(0)
    new = et.replace_subtree(expr, (1,), Var(0))
    assert isinstance(new, Op) and new.children[1] == Var(0)
    # original untouched
    assert isinstance(expr.children[1], Op)


def test_canonicalize_renumbers_left_to_right():
    expr = Op("add", (Param(7), Op("mul", (Param(3), Var(0)))))
    new_expr, params = et.canonicalize_params(expr, {7: 1.5, 3: 2.5})
    assert et.param_slots(new_expr) == (0, 1)
    np.testing.assert_allclose(params, [1.5, 2.5])
    et.validate(new_expr, n_features=1)


def test_validate_catches_bad_trees():
    with pytest.raises(ExprError):
        et.validate(Op("add", (Param(0), Param(0))))
    with pytest.raises(ExprError):
        et.validate(Op("add", (Param(1), Var(0))))
    with pytest.raises(ExprError):
        et.validate(Var(3), n_features=2)
    with pytest.raises(ExprError):
        Op("add", (Var(0),))


def test_determinism_of_evaluation():
    expr = two_term_power_law()
    params = [1.2e-10, 12.0, 2.2e-5, 6.0]
    X = np.linspace(0.07, 0.4, 50).reshape(-1, 1)
    a = et.evaluate_rows(expr, params, X)
    b = et.evaluate_rows(expr, params, X)
    np.testing.assert_array_equal(a, b)
    scalar = et.evaluate(expr, params, [float(X[17, 0])])
    assert scalar == a[17]
