"""Expression trees for symbolic regression.

Trees are immutable: operator nodes (``Op``) hold tuples of children, leaves
are input variables (``Var``) or tunable parameter slots (``Param``).
Parameter *values* live outside the tree in the owning individual's parameter
vector, so structure search and parameter tuning can act independently.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Var",
    "Param",
    "Op",
    "ExprNode",
    "Invalid",
    "CostTable",
    "DEFAULT_COSTS",
    "ExprError",
    "ExprSyntaxError",
    "NON_FINITE",
    "COMPLEX_RESULT",
    "DOMAIN_ERROR",
    "evaluate",
    "evaluate_rows",
    "evaluate_batch",
    "complexity",
    "structural_equal",
    "structure_key",
    "node_count",
    "tree_depth",
    "param_slots",
    "param_count",
    "validate",
    "all_paths",
    "get_subtree",
    "replace_subtree",
    "shift_param_slots",
    "canonicalize_params",
    "serialize",
    "parse",
]

# Invalid-evaluation reasons.
NON_FINITE = "non_finite"
COMPLEX_RESULT = "complex_result"
DOMAIN_ERROR = "domain_error"

ARITY = {"add": 2, "sub": 2, "mul": 2, "div": 2, "pow": 2, "neg": 1}
BINARY_KINDS = ("add", "sub", "mul", "div", "pow")

_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
_KIND_OF_INFIX = {sym: kind for kind, sym in _INFIX.items()}

# Coalesced reason codes used by the batch evaluator (0 = valid).
_REASON_CODES = {DOMAIN_ERROR: 1, COMPLEX_RESULT: 2, NON_FINITE: 3}
_CODE_REASONS = {v: k for k, v in _REASON_CODES.items()}


class ExprError(ValueError):
    """Malformed tree or violated caller contract (distinct from Invalid data)."""


class ExprSyntaxError(ValueError):
    """Raised by :func:`parse`; carries the character position of the error."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class Var:
    """Input-column leaf; ``index`` addresses a dataset feature column."""

    index: int


@dataclass(frozen=True)
class Param:
    """Tunable numeric leaf; ``slot`` indexes the owner's parameter vector."""

    slot: int


@dataclass(frozen=True)
class Op:
    kind: str
    children: tuple["ExprNode", ...]

    def __post_init__(self):
        if self.kind not in ARITY:
            raise ExprError(f"unknown operator kind {self.kind!r}")
        if len(self.children) != ARITY[self.kind]:
            raise ExprError(
                f"{self.kind} expects {ARITY[self.kind]} children, got {len(self.children)}"
            )


ExprNode = Union[Var, Param, Op]


@dataclass(frozen=True)
class Invalid:
    """Marker for a discarded evaluation; reason is one of the module constants."""

    reason: str


def _default_costs() -> dict[str, int]:
    # Cost equals arity; power with a non-parameter exponent is special-cased
    # in CostTable.pow_with_operator_exponent.
    return {"add": 2, "sub": 2, "mul": 2, "div": 2, "pow": 2, "neg": 1}


@dataclass(frozen=True)
class CostTable:
    """Per-operator complexity costs.

    ``pow_with_operator_exponent`` applies to a pow node whose exponent
    subtree is anything other than a single parameter leaf.
    """

    costs: Mapping[str, int] = None  # type: ignore[assignment]
    pow_with_operator_exponent: int = 20

    def __post_init__(self):
        if self.costs is None:
            object.__setattr__(self, "costs", _default_costs())
        for kind, c in self.costs.items():
            if c < 0:
                raise ExprError(f"negative cost for {kind}")
        if self.pow_with_operator_exponent < self.costs.get("pow", 0):
            raise ExprError("pow_with_operator_exponent must be >= cost(pow)")

    def cost(self, kind: str) -> int:
        return self.costs[kind]


DEFAULT_COSTS = CostTable()


# ---------------------------------------------------------------------------
# Structure queries


def node_count(expr: ExprNode) -> int:
    if isinstance(expr, Op):
        return 1 + sum(node_count(c) for c in expr.children)
    return 1


def tree_depth(expr: ExprNode) -> int:
    if isinstance(expr, Op):
        return 1 + max(tree_depth(c) for c in expr.children)
    return 1


def param_slots(expr: ExprNode) -> tuple[int, ...]:
    """Parameter slots in left-to-right (preorder) order of first appearance."""
    out: list[int] = []

    def rec(n: ExprNode) -> None:
        if isinstance(n, Param):
            out.append(n.slot)
        elif isinstance(n, Op):
            for c in n.children:
                rec(c)

    rec(expr)
    return tuple(out)


def param_count(expr: ExprNode) -> int:
    return len(param_slots(expr))


def validate(expr: ExprNode, n_features: int | None = None) -> None:
    """Check arity, slot uniqueness/contiguity and variable bounds.

    Raises ExprError on the first violation.
    """
    slots = param_slots(expr)
    if len(set(slots)) != len(slots):
        raise ExprError("duplicate parameter slot in tree")
    if slots and sorted(slots) != list(range(len(slots))):
        raise ExprError("parameter slots must be contiguous from 0")

    def rec(n: ExprNode) -> None:
        if isinstance(n, Var):
            if n.index < 0:
                raise ExprError(f"negative variable index {n.index}")
            if n_features is not None and n.index >= n_features:
                raise ExprError(
                    f"variable x{n.index} out of range for {n_features} feature(s)"
                )
        elif isinstance(n, Op):
            for c in n.children:
                rec(c)

    rec(expr)


def structural_equal(a: ExprNode, b: ExprNode) -> bool:
    """Tree isomorphism over operator kinds, child order and variable indices.

    Parameter leaves always match each other regardless of slot or value.
    """
    if isinstance(a, Param):
        return isinstance(b, Param)
    if isinstance(a, Var):
        return isinstance(b, Var) and a.index == b.index
    if not isinstance(b, Op) or a.kind != b.kind:
        return False
    return all(structural_equal(x, y) for x, y in zip(a.children, b.children))


def structure_key(expr: ExprNode) -> str:
    """Canonical string such that key(a) == key(b) iff structural_equal(a, b)."""
    if isinstance(expr, Param):
        return "p"
    if isinstance(expr, Var):
        return f"x{expr.index}"
    inner = " ".join(structure_key(c) for c in expr.children)
    return f"({expr.kind} {inner})"


def complexity(expr: ExprNode, costs: CostTable = DEFAULT_COSTS) -> int:
    """Sum of operator costs over the tree; leaves cost nothing."""
    if not isinstance(expr, Op):
        return 0
    own = costs.cost(expr.kind)
    if expr.kind == "pow" and not isinstance(expr.children[1], Param):
        own = costs.pow_with_operator_exponent
    return own + sum(complexity(c, costs) for c in expr.children)


# ---------------------------------------------------------------------------
# Evaluation


class _EvalFailure(Exception):
    def __init__(self, reason: str):
        self.reason = reason


def _eval_scalar(n: ExprNode, params: Sequence[float], row: Sequence[float]) -> float:
    if isinstance(n, Param):
        return float(params[n.slot])
    if isinstance(n, Var):
        return float(row[n.index])
    kind = n.kind
    if kind == "neg":
        return -_eval_scalar(n.children[0], params, row)
    a = _eval_scalar(n.children[0], params, row)
    b = _eval_scalar(n.children[1], params, row)
    if kind == "add":
        out = a + b
    elif kind == "sub":
        out = a - b
    elif kind == "mul":
        out = a * b
    elif kind == "div":
        if b == 0.0:
            raise _EvalFailure(DOMAIN_ERROR)
        out = a / b
    else:  # pow
        if a < 0.0 and not float(b).is_integer():
            raise _EvalFailure(COMPLEX_RESULT)
        if a == 0.0 and b < 0.0:
            raise _EvalFailure(DOMAIN_ERROR)
        try:
            out = a**b
        except OverflowError:
            raise _EvalFailure(NON_FINITE) from None
    if not math.isfinite(out):
        raise _EvalFailure(NON_FINITE)
    return out


def evaluate(
    expr: ExprNode, params: Sequence[float], features: Sequence[float]
) -> float | Invalid:
    """Evaluate one dataset row; returns the value or an Invalid marker.

    Failures are detected eagerly at the offending node: division by zero and
    0^negative give ``domain_error``, a negative base under a non-integer
    exponent gives ``complex_result``, NaN/infinity gives ``non_finite``.
    """
    if param_count(expr) != len(params):
        raise ExprError(
            f"expected {param_count(expr)} parameter(s), got {len(params)}"
        )
    try:
        return _eval_scalar(expr, params, features)
    except _EvalFailure as f:
        return Invalid(f.reason)
    except IndexError:
        raise ExprError("variable index out of range for feature row") from None


def evaluate_batch(
    expr: ExprNode, params: np.ndarray, X: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate many parameter vectors over all dataset rows at once.

    ``params`` has shape (P, S) and ``X`` shape (N, F).  Returns
    ``(values, reasons)`` where values has shape (P, N) and reasons shape (P,)
    with 0 for valid candidates and a nonzero code otherwise.  Values of
    invalid candidates are unspecified.  Per-element float operations match
    :func:`evaluate`; only the failure *reason* may be coalesced differently
    when a candidate fails in several ways.
    """
    params = np.asarray(params, dtype=float)
    X = np.asarray(X, dtype=float)
    if params.ndim != 2:
        raise ExprError("params must be a 2-d array (candidates x slots)")
    if X.ndim != 2:
        raise ExprError("features must be a 2-d array (rows x columns)")
    P, N = params.shape[0], X.shape[0]
    validate(expr, n_features=X.shape[1])
    if param_count(expr) != params.shape[1]:
        raise ExprError(
            f"expected {param_count(expr)} parameter slot(s), got {params.shape[1]}"
        )

    bad_domain = np.zeros(P, dtype=bool)
    bad_complex = np.zeros(P, dtype=bool)
    bad_nonfinite = np.zeros(P, dtype=bool)

    def rec(n: ExprNode) -> np.ndarray:
        if isinstance(n, Var):
            return np.broadcast_to(X[:, n.index], (P, N))
        if isinstance(n, Param):
            return np.broadcast_to(params[:, n.slot : n.slot + 1], (P, N))
        if n.kind == "neg":
            return -rec(n.children[0])
        a = rec(n.children[0])
        b = rec(n.children[1])
        if n.kind == "add":
            out = a + b
        elif n.kind == "sub":
            out = a - b
        elif n.kind == "mul":
            out = a * b
        elif n.kind == "div":
            bad_domain[:] |= (b == 0.0).any(axis=1)
            out = a / b
        else:  # pow
            bad_complex[:] |= ((a < 0.0) & (np.floor(b) != b)).any(axis=1)
            bad_domain[:] |= ((a == 0.0) & (b < 0.0)).any(axis=1)
            out = np.power(a, b)
        bad_nonfinite[:] |= ~np.isfinite(out).all(axis=1)
        return out

    with np.errstate(all="ignore"):
        values = np.array(np.broadcast_to(rec(expr), (P, N)), dtype=float)

    reasons = np.zeros(P, dtype=np.uint8)
    reasons[bad_nonfinite] = _REASON_CODES[NON_FINITE]
    reasons[bad_complex] = _REASON_CODES[COMPLEX_RESULT]
    reasons[bad_domain] = _REASON_CODES[DOMAIN_ERROR]
    return values, reasons


def evaluate_rows(
    expr: ExprNode, params: Sequence[float], X: np.ndarray
) -> np.ndarray | Invalid:
    """Vectorized single-candidate evaluation over all rows of ``X``."""
    values, reasons = evaluate_batch(expr, np.atleast_2d(np.asarray(params, float)), X)
    if reasons[0]:
        return Invalid(_CODE_REASONS[int(reasons[0])])
    return values[0]


# ---------------------------------------------------------------------------
# Paths and surgery (used by the macro layer's variation operators)


def all_paths(expr: ExprNode) -> list[tuple[int, ...]]:
    """Preorder list of paths; each path is a tuple of child indices."""
    out: list[tuple[int, ...]] = []

    def rec(n: ExprNode, path: tuple[int, ...]) -> None:
        out.append(path)
        if isinstance(n, Op):
            for i, c in enumerate(n.children):
                rec(c, path + (i,))

    rec(expr, ())
    return out


def get_subtree(expr: ExprNode, path: tuple[int, ...]) -> ExprNode:
    node = expr
    for i in path:
        if not isinstance(node, Op):
            raise ExprError(f"path {path} leaves the tree")
        node = node.children[i]
    return node


def replace_subtree(expr: ExprNode, path: tuple[int, ...], new: ExprNode) -> ExprNode:
    if not path:
        return new
    if not isinstance(expr, Op):
        raise ExprError(f"path {path} leaves the tree")
    i = path[0]
    children = tuple(
        replace_subtree(c, path[1:], new) if j == i else c
        for j, c in enumerate(expr.children)
    )
    return Op(expr.kind, children)


def shift_param_slots(expr: ExprNode, offset: int) -> ExprNode:
    if isinstance(expr, Param):
        return Param(expr.slot + offset)
    if isinstance(expr, Op):
        return Op(expr.kind, tuple(shift_param_slots(c, offset) for c in expr.children))
    return expr


def canonicalize_params(
    expr: ExprNode, values: Mapping[int, float]
) -> tuple[ExprNode, np.ndarray]:
    """Renumber parameter slots 0..k-1 in left-to-right order.

    ``values`` maps old slots to their numeric values; the returned vector is
    aligned with the new numbering.  Old slots must be unique in the tree.
    """
    mapping: dict[int, int] = {}
    vals: list[float] = []

    def rec(n: ExprNode) -> ExprNode:
        if isinstance(n, Param):
            if n.slot in mapping:
                raise ExprError(f"duplicate parameter slot {n.slot}")
            if n.slot not in values:
                raise ExprError(f"no value supplied for parameter slot {n.slot}")
            mapping[n.slot] = len(vals)
            vals.append(float(values[n.slot]))
            return Param(mapping[n.slot])
        if isinstance(n, Op):
            return Op(n.kind, tuple(rec(c) for c in n.children))
        return n

    new_expr = rec(expr)
    return new_expr, np.asarray(vals, dtype=float)


# ---------------------------------------------------------------------------
# Text form


def serialize(expr: ExprNode, params: Sequence[float]) -> str:
    """Deterministic infix string with explicit parentheses.

    Parameters are inlined as decimal literals at 17 significant digits, so
    the text round-trips bit-exactly through :func:`parse`.
    """
    if param_count(expr) != len(params):
        raise ExprError(
            f"expected {param_count(expr)} parameter(s), got {len(params)}"
        )

    def rec(n: ExprNode) -> str:
        if isinstance(n, Var):
            return f"x{n.index}"
        if isinstance(n, Param):
            return format(float(params[n.slot]), ".17g")
        if n.kind == "neg":
            return f"(- {rec(n.children[0])})"
        return f"({rec(n.children[0])} {_INFIX[n.kind]} {rec(n.children[1])})"

    return rec(expr)


_TOKEN_RE = re.compile(
    r"(?P<num>-?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>x\d+)|(?P<sym>[-+*/^()])"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[i]!r}", i)
        kind = m.lastgroup or "sym"
        tokens.append((kind, m.group(), i))
        i = m.end()
    return tokens


def parse(text: str) -> tuple[ExprNode, np.ndarray]:
    """Parse the infix form produced by :func:`serialize`.

    Numeric literals become parameter leaves with slots assigned left to
    right.  Raises ExprSyntaxError with the character position on malformed
    input.
    """
    tokens = _tokenize(text)
    values: list[float] = []
    end = len(text)

    def need(i: int) -> tuple[str, str, int]:
        if i >= len(tokens):
            raise ExprSyntaxError("unexpected end of input", end)
        return tokens[i]

    def parse_expr(i: int) -> tuple[ExprNode, int]:
        kind, tok, pos = need(i)
        if kind == "num":
            values.append(float(tok))
            return Param(len(values) - 1), i + 1
        if kind == "var":
            return Var(int(tok[1:])), i + 1
        if tok != "(":
            raise ExprSyntaxError(f"unexpected token {tok!r}", pos)
        nkind, ntok, npos = need(i + 1)
        if nkind == "sym" and ntok == "-":
            child, j = parse_expr(i + 2)
            ckind, ctok, cpos = need(j)
            if ctok != ")":
                raise ExprSyntaxError(f"expected ')', found {ctok!r}", cpos)
            return Op("neg", (child,)), j + 1
        left, j = parse_expr(i + 1)
        okind, otok, opos = need(j)
        if okind != "sym" or otok not in _KIND_OF_INFIX:
            raise ExprSyntaxError(f"expected operator, found {otok!r}", opos)
        right, k = parse_expr(j + 1)
        ckind, ctok, cpos = need(k)
        if ctok != ")":
            raise ExprSyntaxError(f"expected ')', found {ctok!r}", cpos)
        return Op(_KIND_OF_INFIX[otok], (left, right)), k + 1

    node, i = parse_expr(0)
    if i != len(tokens):
        raise ExprSyntaxError(f"trailing input {tokens[i][1]!r}", tokens[i][2])
    return node, np.asarray(values, dtype=float)
