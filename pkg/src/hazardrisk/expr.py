"""Restricted arithmetic expressions for deterministic network nodes.

Only numbers, parent names, ``+ - * /``, unary minus, comparisons and the
functions in :data:`FUNCTIONS` are accepted. Expressions are parsed once
into a closure that evaluates element-wise on numpy arrays.
"""

import ast
import operator

import numpy as np

from .errors import ValidationError


def _nary(reduce):
    def f(*args):
        if not args:
            raise ValidationError("function needs at least one argument")
        return reduce(np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args]))
    return f


FUNCTIONS = {
    "min": _nary(lambda arrs: np.minimum.reduce(arrs)),
    "max": _nary(lambda arrs: np.maximum.reduce(arrs)),
    "median": _nary(lambda arrs: np.median(np.stack(arrs), axis=0)),
    "abs": np.abs,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_CMPOPS = {ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater,
           ast.GtE: np.greater_equal, ast.Eq: np.equal, ast.NotEq: np.not_equal}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def compile_expression(text, variables):
    """Return ``(fn, names)`` where ``fn(env)`` evaluates ``text`` over ``env``.

    ``names`` lists the variables actually referenced.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"invalid expression {text!r}: {exc.msg}") from None
    allowed = set(variables)
    used = []

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id not in allowed:
                raise ValidationError(f"expression {text!r} references unknown name {node.id!r}")
            if node.id not in used:
                used.append(node.id)
            name = node.id
            return lambda env: env[name]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, a, b = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda env: op(a(env), b(env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            op, a = _UNARY[type(node.op)], build(node.operand)
            return lambda env: op(a(env))
        if isinstance(node, ast.Compare):
            parts = [build(node.left)] + [build(c) for c in node.comparators]
            ops = [_CMPOPS.get(type(o)) for o in node.ops]
            if None in ops:
                raise ValidationError(f"unsupported comparison in {text!r}")

            def cmp(env):
                vals = [p(env) for p in parts]
                out = True
                for op, lhs, rhs in zip(ops, vals, vals[1:]):
                    out = np.logical_and(out, op(lhs, rhs))
                return np.asarray(out, dtype=float)
            return cmp
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in FUNCTIONS and not node.keywords:
            fn = FUNCTIONS[node.func.id]
            args = [build(a) for a in node.args]
            if node.func.id in ("abs", "sqrt", "exp", "log") and len(args) != 1:
                raise ValidationError(f"{node.func.id}() takes one argument in {text!r}")
            return lambda env: fn(*[a(env) for a in args])
        raise ValidationError(f"unsupported construct {ast.dump(node)[:40]}... in {text!r}")

    fn = build(tree)
    return fn, used
