"""Positive anisotropy weights ``a(x)`` with gradients and ``gamma = grad ln a``."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np


class WeightError(ValueError):
    """Raised for malformed weight descriptions or non-positive weights."""


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)
_NAMES = {"exp", "ln", "sin", "cos", "x1", "x2", "pi"}


def tokenize(expr: str) -> list:
    """Split ``expr`` into tokens, rejecting anything outside the grammar."""
    pos, out = 0, []
    expr = expr.strip()
    while pos < len(expr):
        m = _TOKEN.match(expr, pos)
        if m is None or m.end() == pos:
            raise WeightError(f"unexpected character at {pos}: {expr[pos:pos + 8]!r}")
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "name" and val not in _NAMES:
            raise WeightError(f"unknown identifier {val!r}")
        out.append((kind, val))
        pos = m.end()
    return out


def _check_syntax(tokens):
    # recursive descent over  e := t (('+'|'-') t)* ; t := f (('*'|'/') f)* ;
    # f := ('+'|'-') f | p ('^' f)? ; p := num | var | fn '(' e ')' | '(' e ')'
    i = 0

    def peek():
        return tokens[i] if i < len(tokens) else (None, None)

    def eat(val=None):
        nonlocal i
        tok = peek()
        if tok[0] is None or (val is not None and tok[1] != val):
            raise WeightError(f"expected {val or 'token'} at token {i}")
        i += 1
        return tok

    def e():
        t()
        while peek()[1] in ("+", "-"):
            eat()
            t()

    def t():
        f()
        while peek()[1] in ("*", "/"):
            eat()
            f()

    def f():
        if peek()[1] in ("+", "-"):
            eat()
            f()
            return
        p()
        if peek()[1] == "^":
            eat()
            f()

    def p():
        kind, val = peek()
        if kind == "num" or val in ("x1", "x2", "pi"):
            eat()
        elif val in ("exp", "ln", "sin", "cos"):
            eat()
            eat("(")
            e()
            eat(")")
        elif val == "(":
            eat()
            e()
            eat(")")
        else:
            raise WeightError(f"unexpected token {val!r}")

    e()
    if i != len(tokens):
        raise WeightError(f"trailing tokens after position {i}")


@dataclass(frozen=True, eq=False)
class Weight:
    """Smooth positive weight on the plane.

    Attributes
    ----------
    kind : str
        ``constant``, ``power`` or ``expression``.
    params : dict
        Kind-specific parameters (``value``; ``M1``, ``Mn``, ``n``; ``expression``).
    """

    kind: str
    params: dict = field(default_factory=dict)
    _f: object = field(default=None, repr=False)
    _g: object = field(default=None, repr=False)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return self._f(x)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return self._g(x)

    def gamma(self, x) -> np.ndarray:
        """``grad ln a``."""
        x = np.asarray(x, float)
        return self.grad(x) / self(x)[..., None]

    def dnu(self, x, nu) -> np.ndarray:
        """Directional derivative along ``nu``."""
        return np.sum(self.grad(x) * np.asarray(nu, float), axis=-1)

    def hessian(self, x, h: float = 1e-5) -> np.ndarray:
        """Central-difference Hessian (used only for diagnostics)."""
        x = np.asarray(x, float)
        H = np.empty(x.shape[:-1] + (2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            H[..., :, j] = (self.grad(x + e) - self.grad(x - e)) / (2 * h)
        return H

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


def constant_weight(value: float = 1.0) -> Weight:
    value = float(value)
    if value <= 0:
        raise WeightError("constant weight must be positive")

    def f(x):
        return np.full(x.shape[:-1], value)

    def g(x):
        return np.zeros(x.shape)

    return Weight("constant", {"value": value}, f, g)


def power_weight(M1: int, Mn: int | None = None, n: int = 1) -> Weight:
    """``x1^(M1-1)`` for ``n=1`` and ``x1^(M1-1) x2^(Mn-1)`` for ``n=2``."""
    M1 = int(M1)
    Mn = M1 if Mn is None else int(Mn)
    if n not in (1, 2):
        raise WeightError("power weight needs n in {1, 2}")
    p1, p2 = M1 - 1, (Mn - 1 if n == 2 else 0)

    def f(x):
        return x[..., 0] ** p1 * x[..., 1] ** p2

    def g(x):
        out = np.empty(x.shape)
        out[..., 0] = p1 * x[..., 0] ** (p1 - 1) * x[..., 1] ** p2 if p1 else 0.0
        out[..., 1] = p2 * x[..., 0] ** p1 * x[..., 1] ** (p2 - 1) if p2 else 0.0
        return out

    return Weight("power", {"M1": M1, "Mn": Mn, "n": n}, f, g)


def expression_weight(expr: str) -> Weight:
    """Weight from an arithmetic expression in ``x1``, ``x2``."""
    import sympy as sp

    _check_syntax(tokenize(expr))
    x1, x2 = sp.symbols("x1 x2", real=True)
    src = expr.replace("^", "**")
    parsed = sp.sympify(src, locals={"x1": x1, "x2": x2, "ln": sp.log, "exp": sp.exp,
                                     "sin": sp.sin, "cos": sp.cos, "pi": sp.pi})
    fa = sp.lambdify((x1, x2), parsed, "numpy")
    fg = [sp.lambdify((x1, x2), sp.diff(parsed, v), "numpy") for v in (x1, x2)]

    def f(x):
        return np.broadcast_to(fa(x[..., 0], x[..., 1]), x.shape[:-1]).astype(float)

    def g(x):
        out = np.empty(x.shape)
        for j in range(2):
            out[..., j] = fg[j](x[..., 0], x[..., 1])
        return out

    return Weight("expression", {"expression": expr}, f, g)


def build_weight(spec: dict | None) -> Weight:
    spec = dict(spec or {})
    kind = str(spec.get("kind", "constant")).lower()
    if kind == "constant":
        return constant_weight(spec.get("value", 1.0))
    if kind == "power":
        return power_weight(spec.get("M1", 2), spec.get("Mn"), int(spec.get("n", 1)))
    if kind == "expression":
        return expression_weight(str(spec["expression"]))
    raise WeightError(f"unknown weight kind {kind!r}")


def check_positive(weight: Weight, dom, n: int = 4000) -> float:
    """Minimum of ``a`` over interior and boundary samples; raise if not positive."""
    x0, y0, x1, y1 = dom.bbox
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
    pts = pts[dom.interior_test(pts)]
    pts = np.vstack([pts, dom.samples(512).points])
    if weight.kind == "power":
        k = weight.params["n"]
        if np.any(pts[:, :k] <= 0):
            raise WeightError("power weight needs the domain inside x_i > 0")
    vals = weight(pts)
    if not np.all(np.isfinite(vals)) or vals.min() <= 0:
        raise WeightError("weight is not strictly positive on the domain")
    return float(vals.min())
