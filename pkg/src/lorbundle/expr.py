"""Tiny expression grammar and numeric compilation helpers.

Expressions are strings over chart coordinate names using ``+ - * / ^``,
``sin``, ``cos``, ``exp``, numeric constants and ``pi``.  They are parsed
into sympy objects so that every module gets exact partial derivatives.
"""

from __future__ import annotations

import ast
from typing import Iterable, Sequence

import numpy as np
import sympy as sp

ALLOWED_FUNCS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}


class ExpressionError(ValueError):
    """Raised for expressions outside the supported grammar."""


def _check_node(node: ast.AST, names: set[str]) -> None:
    if isinstance(node, ast.Expression):
        _check_node(node.body, names)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check_node(node.left, names)
        _check_node(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError(f"unary {type(node.op).__name__} not allowed")
        _check_node(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in ALLOWED_FUNCS:
            raise ExpressionError("only sin, cos, exp calls are allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check_node(node.args[0], names)
    elif isinstance(node, ast.Name):
        if node.id not in names and node.id != "pi":
            raise ExpressionError(f"unknown symbol {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"bad constant {node.value!r}")
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__}")


def parse_expr(text: str | float | int, symbols: Iterable[sp.Symbol]) -> sp.Expr:
    """Parse ``text`` into a sympy expression over ``symbols``."""
    if isinstance(text, (int, float)):
        return sp.nsimplify(text) if float(text).is_integer() else sp.Float(text)
    symbols = list(symbols)
    table = {s.name: s for s in symbols}
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    _check_node(tree, set(table))
    return _build(tree.body, table)


def _build(node: ast.AST, table: dict[str, sp.Symbol]) -> sp.Expr:
    if isinstance(node, ast.BinOp):
        a, b = _build(node.left, table), _build(node.right, table)
        op = type(node.op)
        if op is ast.Add:
            return a + b
        if op is ast.Sub:
            return a - b
        if op is ast.Mult:
            return a * b
        if op is ast.Div:
            return a / b
        return a**b
    if isinstance(node, ast.UnaryOp):
        a = _build(node.operand, table)
        return -a if isinstance(node.op, ast.USub) else a
    if isinstance(node, ast.Call):
        return ALLOWED_FUNCS[node.func.id](_build(node.args[0], table))
    if isinstance(node, ast.Name):
        return sp.pi if node.id == "pi" else table[node.id]
    value = node.value
    return sp.Integer(value) if isinstance(value, int) else sp.Float(value)


def compile_array(exprs, symbols: Sequence[sp.Symbol]):
    """Compile a (nested) array of sympy expressions into a numpy function.

    The returned callable takes one coordinate array of shape ``(d,)`` or
    ``(d, N)`` and returns an array of shape ``exprs.shape`` or
    ``exprs.shape + (N,)``.  Constant entries are broadcast.
    """
    arr = np.array(exprs, dtype=object)
    shape = arr.shape
    flat = [sp.sympify(e) for e in arr.ravel()]
    fn = sp.lambdify([list(symbols)], flat, modules="numpy", cse=True)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        vals = fn(x)
        tail = x.shape[1:]
        out = np.empty((len(flat),) + tail)
        for i, val in enumerate(vals):
            out[i] = val
        return out.reshape(shape + tail)

    evaluate.exprs = arr
    return evaluate


def compile_scalar(expr, symbols: Sequence[sp.Symbol]):
    fn = compile_array([expr], symbols)
    return lambda x: fn(x)[0]


def jacobian_array(arr, symbols: Sequence[sp.Symbol]) -> np.ndarray:
    """Partial derivatives; the new axis is appended last."""
    arr = np.array(arr, dtype=object)
    out = np.empty(arr.shape + (len(symbols),), dtype=object)
    for idx in np.ndindex(arr.shape):
        for k, s in enumerate(symbols):
            out[idx + (k,)] = sp.diff(arr[idx], s)
    return out
