"""Observables: evaluation helpers, a polynomial parser and the test bank."""

from __future__ import annotations

import ast
from fractions import Fraction

import numpy as np
from numpy.polynomial import Polynomial

from ._validation import DomainError

__all__ = ["evaluate", "parse_polynomial", "polynomial_text", "exact_integral", "OBSERVABLE_BANK", "bank_polynomial"]


def evaluate(f, x) -> np.ndarray:
    """Evaluate ``f`` at the points ``x``, vectorized when ``f`` allows it."""
    x = np.asarray(x, dtype=float)
    try:
        out = np.asarray(f(x), dtype=float)
        if out.shape == x.shape:
            return out
        if out.ndim == 0:
            return np.full(x.shape, float(out))
    except (TypeError, ValueError):
        pass
    return np.array([float(f(float(t))) for t in x.ravel()]).reshape(x.shape)


_T = Polynomial([0.0, 1.0])


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return Polynomial([float(node.value)])
    if isinstance(node, ast.Name):
        if node.id in ("t", "x"):
            return _T
        raise DomainError(f"unknown symbol {node.id!r}; polynomials are in the variable t")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = _eval_node(node.operand)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.BinOp):
        left = _eval_node(node.left)
        if isinstance(node.op, ast.Pow):
            exp = node.right
            if not (isinstance(exp, ast.Constant) and isinstance(exp.value, int) and 0 <= exp.value <= 50):
                raise DomainError("exponents must be integer literals between 0 and 50")
            return left**exp.value
        right = _eval_node(node.right)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if isinstance(node.op, ast.Div):
            if right.degree() != 0:
                raise DomainError("division is only allowed by constants")
            return left / right.coef[0]
    raise DomainError("not a polynomial expression")


def parse_polynomial(text: str) -> Polynomial:
    """Parse text such as ``"3*t^2-4*t"`` into a numpy Polynomial."""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise DomainError(f"cannot parse polynomial {text!r}: {exc.msg}") from None
    poly = _eval_node(tree)
    return poly.trim() if np.any(poly.coef) else Polynomial([0.0])


def polynomial_text(p: Polynomial) -> str:
    """Highest power first, e.g. ``3*t^2-4*t``; parses back to ``p``."""
    terms = []
    for power in range(len(p.coef) - 1, -1, -1):
        c = float(p.coef[power])
        if c == 0:
            continue
        var = "" if power == 0 else ("t" if power == 1 else f"t^{power}")
        if not var:
            terms.append(str(int(c)) if c.is_integer() else repr(c))
        elif c in (1.0, -1.0):
            terms.append(("-" if c < 0 else "") + var)
        else:
            terms.append(f"{int(c) if c.is_integer() else repr(c)}*{var}")
    return "+".join(terms).replace("+-", "-") or "0"


def exact_integral(p: Polynomial) -> float:
    """Integral over [0, 1] summed in rational arithmetic."""
    total = sum(Fraction(float(c)) / (k + 1) for k, c in enumerate(p.coef))
    return float(total)


# Six observables with f(1) equal to the integral of f over [0, 1], and six without.
OBSERVABLE_BANK: dict[str, str] = {
    "one": "1",
    "five": "5",
    "quad_admissible": "3*t^2-4*t",
    "cubic_admissible": "2*t^3-3*t^2+t",
    "cubic_shift": "t^3-1.5*t",
    "quartic_shift": "t^4-1.6*t+2",
    "t": "t",
    "t2": "t^2",
    "t3": "t^3",
    "legendre2": "6*t^2-6*t+1",
    "cubic_mix": "4*t^3-3*t",
    "quartic": "t^4-t^2+0.5",
}


def bank_polynomial(name: str) -> Polynomial:
    return parse_polynomial(OBSERVABLE_BANK[name])

