"""Canonical-form models: basis-function trees, evaluation, complexity, rendering.

A model is an offset plus a least-squares-weighted sum of basis functions.
Each basis function is a derivation tree over the canonical grammar whose
payload leaves are variable combos (integer-exponent products of inputs),
weight nodes (an evolved real, interpreted into a signed decade range) and
operator names.  Evaluation is vectorized over sample matrices, and any
non-finite sub-result poisons the whole basis value at that sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

INF = float("inf")


# ---------------------------------------------------------------------------
# tree nodes
# ---------------------------------------------------------------------------

class VCLeaf:
    """Variable combo: one integer exponent per design variable (0 = absent)."""

    __slots__ = ("exponents",)

    def __init__(self, exponents: Sequence[int]):
        self.exponents = [int(e) for e in exponents]

    def clone(self) -> "VCLeaf":
        return VCLeaf(self.exponents)

    def __repr__(self) -> str:
        return f"VCLeaf({self.exponents})"


class WeightLeaf:
    """Evolved weight; stored value lives in [-2B, 2B], interpreted at eval time."""

    __slots__ = ("stored",)

    def __init__(self, stored: float):
        self.stored = float(stored)

    def clone(self) -> "WeightLeaf":
        return WeightLeaf(self.stored)

    def __repr__(self) -> str:
        return f"WeightLeaf({self.stored!r})"


class OpLeaf:
    """Operator choice made under a 1OP/2OP/4OP nonterminal."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def clone(self) -> "OpLeaf":
        return OpLeaf(self.name)

    def __repr__(self) -> str:
        return f"OpLeaf({self.name!r})"


class NTNode:
    """Nonterminal node: grammar symbol, chosen alternative index, children."""

    __slots__ = ("symbol", "alt", "children")

    def __init__(self, symbol: str, alt: int, children: list):
        self.symbol = symbol
        self.alt = alt
        self.children = children

    def clone(self) -> "NTNode":
        return NTNode(self.symbol, self.alt, [c.clone() for c in self.children])

    def __repr__(self) -> str:
        return f"NTNode({self.symbol}, alt={self.alt}, n={len(self.children)})"


# a basis function is an NTNode whose symbol is the grammar start symbol
BasisTree = NTNode


def walk(tree: NTNode):
    """Yield (node, parent, child_index, level) over the whole tree, preorder.

    Level counts nonterminal expansions: the root is level 1, payload leaves
    inherit their parent's level + 1 only through nonterminal children.
    """
    stack = [(tree, None, -1, 1)]
    while stack:
        node, parent, idx, level = stack.pop()
        yield node, parent, idx, level
        if isinstance(node, NTNode):
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((node.children[i], node, i, level + 1))


def tree_depth(tree: NTNode) -> int:
    """Depth in nonterminal levels; a bare REPVC -> 'VC' tree has depth 1."""
    best = 0
    for node, _, _, level in walk(tree):
        if isinstance(node, NTNode) and level > best:
            best = level
    return best


# ---------------------------------------------------------------------------
# operator registry
# ---------------------------------------------------------------------------

def _relu(x):
    return _mask_nonfinite(np.maximum(0.0, x), x)


def _negrelu(x):
    return _mask_nonfinite(np.minimum(0.0, x), x)


def _mask_nonfinite(result, *inputs):
    # any non-finite input poisons the output; guards ops like max(0, -inf) -> 0
    bad = None
    for v in inputs:
        b = ~np.isfinite(v)
        bad = b if bad is None else (bad | b)
    if bad is not None and np.any(bad):
        result = np.where(bad, np.nan, result)
    return result


@dataclass(frozen=True)
class OpSpec:
    name: str
    arity: int
    fn: Callable


OPS: Dict[str, OpSpec] = {}


def _register(name: str, arity: int, fn: Callable) -> None:
    OPS[name] = OpSpec(name, arity, fn)


_register("sqrt", 1, np.sqrt)
_register("ln", 1, np.log)
_register("log10", 1, np.log10)
_register("inv", 1, lambda x: np.divide(1.0, x))
_register("abs", 1, np.abs)
_register("sq", 1, np.square)
_register("sin", 1, np.sin)
_register("cos", 1, np.cos)
_register("tan", 1, np.tan)
_register("relu", 1, _relu)
_register("negrelu", 1, _negrelu)
_register("exp2", 1, np.exp2)
_register("exp10", 1, lambda x: np.power(10.0, x))

_register("add", 2, lambda a, b: a + b)
_register("mul", 2, lambda a, b: a * b)
_register("max", 2, lambda a, b: _mask_nonfinite(np.maximum(a, b), a, b))
_register("min", 2, lambda a, b: _mask_nonfinite(np.minimum(a, b), a, b))
_register("pow", 2, np.power)
_register("div", 2, np.divide)

# four-slot conditionals; lte0 tests its first slot against zero
_register("lte4", 4, None)
_register("lte0", 4, None)

# grammar-file terminal spellings -> canonical operator names
GRAMMAR_OP_TOKENS: Dict[str, str] = {
    "SQRT": "sqrt", "LN": "ln", "LOG10": "log10", "INV": "inv", "ABS": "abs",
    "SQ": "sq", "SIN": "sin", "COS": "cos", "TAN": "tan", "RELU": "relu",
    "NEGRELU": "negrelu", "EXP2": "exp2", "EXP10": "exp10",
    "ADD": "add", "MUL": "mul", "MAX": "max", "MIN": "min", "POW": "pow",
    "DIVIDE": "div", "DIV": "div",
    "LTE": "lte4", "LTE0": "lte0",
}


# ---------------------------------------------------------------------------
# weight interpretation and variable combos
# ---------------------------------------------------------------------------

def interpret_weight(stored: float, B: float) -> float:
    """Map a stored weight to 0 or a signed value with magnitude in [1e-B, 1e+B]."""
    if abs(stored) > 2.0 * B:
        raise ValueError(f"stored weight {stored} outside [-2B, 2B] for B={B}")
    if stored == 0.0:
        return 0.0
    return math.copysign(10.0 ** (abs(stored) - B), stored)


def vc_column(exponents: Sequence[int], X: np.ndarray) -> np.ndarray:
    """prod_i X[:, i] ** e_i for one variable combo; non-finite results propagate."""
    out = np.ones(X.shape[0])
    with np.errstate(all="ignore"):
        for i, e in enumerate(exponents):
            if e:
                out = out * np.power(X[:, i], float(e))
    return out


def vc_value(vc: VCLeaf, x: Sequence[float]) -> float:
    X = np.asarray(x, dtype=float).reshape(1, -1)
    return float(vc_column(vc.exponents, X)[0])


def repair_all_zero_vc(exponents: List[int], rng) -> List[int]:
    """If every exponent is zero, re-add a random +/-1 exponent on a random dim."""
    if any(exponents):
        return exponents
    out = list(exponents)
    dim = int(rng.integers(len(out)))
    out[dim] = 1 if rng.integers(2) == 0 else -1
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _eval(node, X: np.ndarray, B: float):
    if isinstance(node, VCLeaf):
        return vc_column(node.exponents, X)
    if isinstance(node, WeightLeaf):
        return np.float64(interpret_weight(node.stored, B))

    sym = node.symbol
    ch = node.children

    if sym == "REPVC":
        val = _eval(ch[0], X, B)
        for c in ch[1:]:
            val = val * _eval(c, X, B)
        return val

    if sym == "REPOP":
        c0 = ch[0]
        if isinstance(c0, NTNode) and c0.symbol == "REPOP":
            return _eval(c0, X, B) * _eval(ch[1], X, B)
        opname = c0.children[0].name
        if c0.symbol == "1OP":
            arg = _eval(ch[1], X, B) + _eval(ch[2], X, B)
            return _mask_nonfinite(OPS[opname].fn(arg), arg)
        if c0.symbol == "2OP":
            a, b = _eval(ch[1], X, B)
            return _mask_nonfinite(OPS[opname].fn(a, b), a, b)
        if c0.symbol == "4OP":
            vals = [_eval(c, X, B) for c in ch[1:]]
            t, c, a, b = vals
            test = t < (c if opname == "lte4" else 0.0)
            return _mask_nonfinite(np.where(test, a, b), *vals)
        raise ValueError(f"cannot interpret REPOP child {c0!r}")

    if sym == "REPADD":
        if isinstance(ch[0], WeightLeaf):
            return _eval(ch[0], X, B) * _eval(ch[1], X, B)
        return _eval(ch[0], X, B) + _eval(ch[1], X, B)

    if sym == "MAYBEW":
        if len(ch) == 1:
            return _eval(ch[0], X, B)
        return _eval(ch[0], X, B) + _eval(ch[1], X, B)

    if sym == "2ARGS":
        if isinstance(ch[0], WeightLeaf):
            return (_eval(ch[0], X, B) + _eval(ch[1], X, B), _eval(ch[2], X, B))
        return (_eval(ch[0], X, B), _eval(ch[1], X, B) + _eval(ch[2], X, B))

    raise ValueError(f"cannot interpret nonterminal {sym!r}")


def eval_basis_matrix(tree: BasisTree, X: np.ndarray, B: float) -> np.ndarray:
    """Evaluate one basis function over an N x d sample matrix; returns length N."""
    with np.errstate(all="ignore"):
        val = _eval(tree, X, B)
    if np.ndim(val) == 0:
        return np.full(X.shape[0], float(val))
    return val


def eval_basis(tree: BasisTree, x: Sequence[float], B: float) -> float:
    X = np.asarray(x, dtype=float).reshape(1, -1)
    return float(eval_basis_matrix(tree, X, B)[0])


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass
class Model:
    """A set of basis trees plus least-squares coefficients and cached scores."""

    bases: List[BasisTree] = field(default_factory=list)
    coeffs: Optional[np.ndarray] = None    # length M+1: offset a0 then one weight per basis
    train_error: float = INF               # percent; +inf marks an invalid individual
    test_error: Optional[float] = None
    complexity: float = 0.0
    valid: bool = False

    @property
    def n_bases(self) -> int:
        return len(self.bases)

    def clone(self) -> "Model":
        return Model(
            bases=[t.clone() for t in self.bases],
            coeffs=None if self.coeffs is None else np.array(self.coeffs, dtype=float),
            train_error=self.train_error,
            test_error=self.test_error,
            complexity=self.complexity,
            valid=self.valid,
        )


def eval_model_matrix(m: Model, X: np.ndarray, B: float) -> np.ndarray:
    if m.coeffs is None:
        raise ValueError("model has no fitted coefficients")
    out = np.full(X.shape[0], float(m.coeffs[0]))
    for j, tree in enumerate(m.bases):
        out = out + float(m.coeffs[j + 1]) * eval_basis_matrix(tree, X, B)
    return out


def eval_model(m: Model, x: Sequence[float], B: float = 10.0) -> float:
    X = np.asarray(x, dtype=float).reshape(1, -1)
    return float(eval_model_matrix(m, X, B)[0])


def nnodes(tree: BasisTree) -> int:
    """Expression-node count: payload leaves only (VCs, weights, operators)."""
    count = 0
    for node, _, _, _ in walk(tree):
        if isinstance(node, (VCLeaf, WeightLeaf, OpLeaf)):
            count += 1
    return count


def _vccost(tree: BasisTree, wvc: float) -> float:
    cost = 0.0
    for node, _, _, _ in walk(tree):
        if isinstance(node, VCLeaf):
            cost += wvc * sum(abs(e) for e in node.exponents)
    return cost


def complexity_of_bases(bases: Sequence[BasisTree], wb: float, wvc: float) -> float:
    return float(sum(wb + nnodes(t) + _vccost(t, wvc) for t in bases))


def complexity(m: Model, wb: float, wvc: float) -> float:
    """Basis-count, node-count and exponent cost of a model; 0 for a constant."""
    return complexity_of_bases(m.bases, wb, wvc)


# ---------------------------------------------------------------------------
# canonical text rendering
# ---------------------------------------------------------------------------

def _fmt(value: float, sig_figs: int) -> str:
    return f"%.{sig_figs}g" % float(value)


def _vc_text(exponents: Sequence[int], var_names: Sequence[str]) -> Tuple[str, str]:
    """Return (numerator, denominator) strings; either may be empty."""
    num, den = [], []
    for e, name in zip(exponents, var_names):
        if e > 0:
            num.append(name if e == 1 else f"{name}^{e}")
        elif e < 0:
            den.append(name if e == -1 else f"{name}^{-e}")
    def group(parts):
        if not parts:
            return ""
        if len(parts) == 1:
            return parts[0]
        return "(" + "*".join(parts) + ")"
    return group(num), group(den)


def _render(node, var_names, sig_figs, B) -> str:
    if isinstance(node, VCLeaf):
        num, den = _vc_text(node.exponents, var_names)
        if num and den:
            return f"{num} / {den}"
        if num:
            return num
        return f"1 / {den}"
    if isinstance(node, WeightLeaf):
        return _fmt(interpret_weight(node.stored, B), sig_figs)

    sym = node.symbol
    ch = node.children

    if sym == "REPVC":
        return " * ".join(_render(c, var_names, sig_figs, B) for c in ch)

    if sym == "REPOP":
        c0 = ch[0]
        if isinstance(c0, NTNode) and c0.symbol == "REPOP":
            return " * ".join(_render(c, var_names, sig_figs, B) for c in ch)
        opname = c0.children[0].name
        if c0.symbol == "1OP":
            inner = _sum_text(ch[1], ch[2], var_names, sig_figs, B)
            return _apply_1op_text(opname, inner)
        if c0.symbol == "2OP":
            a, b = _two_arg_texts(ch[1], var_names, sig_figs, B)
            return _apply_2op_text(opname, a, b)
        if c0.symbol == "4OP":
            args = ", ".join(_render(c, var_names, sig_figs, B) for c in ch[1:])
            return f"{opname}({args})"

    if sym == "REPADD":
        if isinstance(ch[0], WeightLeaf):
            w = interpret_weight(ch[0].stored, B)
            return _weighted_term_text(w, ch[1], var_names, sig_figs, B)
        left = _render(ch[0], var_names, sig_figs, B)
        right = _render(ch[1], var_names, sig_figs, B)
        if right.startswith("-"):
            return f"{left} - {right[1:]}"
        return f"{left} + {right}"

    if sym == "MAYBEW":
        if len(ch) == 1:
            return _render(ch[0], var_names, sig_figs, B)
        return _sum_text(ch[0], ch[1], var_names, sig_figs, B)

    raise ValueError(f"cannot render nonterminal {sym!r}")


def _sum_text(w_leaf, repadd, var_names, sig_figs, B) -> str:
    """Text for 'W + REPADD' groups."""
    lead = _fmt(interpret_weight(w_leaf.stored, B), sig_figs)
    rest = _render(repadd, var_names, sig_figs, B)
    if rest.startswith("-"):
        return f"{lead} - {rest[1:]}"
    return f"{lead} + {rest}"


def _two_arg_texts(two_args_node, var_names, sig_figs, B):
    ch = two_args_node.children
    if isinstance(ch[0], WeightLeaf):
        return (_sum_text(ch[0], ch[1], var_names, sig_figs, B),
                _render(ch[2], var_names, sig_figs, B))
    return (_render(ch[0], var_names, sig_figs, B),
            _sum_text(ch[1], ch[2], var_names, sig_figs, B))


def _apply_1op_text(opname: str, inner: str) -> str:
    if opname == "inv":
        return f"1 / ({inner})"
    if opname == "sq":
        return f"({inner})^2"
    if opname == "exp2":
        return f"2^({inner})"
    if opname == "exp10":
        return f"10^({inner})"
    if opname == "relu":
        return f"max(0, {inner})"
    if opname == "negrelu":
        return f"min(0, {inner})"
    return f"{opname}({inner})"


def _apply_2op_text(opname: str, a: str, b: str) -> str:
    if opname == "add":
        if b.startswith("-"):
            return f"({a} - {b[1:]})"
        return f"({a} + {b})"
    if opname == "mul":
        return f"({a}) * ({b})"
    if opname == "div":
        return f"({a}) / ({b})"
    return f"{opname}({a}, {b})"


def _is_pure_vc(tree: BasisTree) -> Optional[VCLeaf]:
    if (isinstance(tree, NTNode) and tree.symbol == "REPVC"
            and len(tree.children) == 1 and isinstance(tree.children[0], VCLeaf)):
        return tree.children[0]
    return None


def _weighted_term_text(coeff: float, body, var_names, sig_figs, B) -> str:
    """Render 'coeff * body', folding pure variable-combo ratios into the coefficient."""
    c_txt = _fmt(coeff, sig_figs)
    vc = body if isinstance(body, VCLeaf) else None
    if vc is None and isinstance(body, NTNode):
        vc = _is_pure_vc(body) if body.symbol == "REPVC" else None
    if vc is not None:
        num, den = _vc_text(vc.exponents, var_names)
        if num and den:
            return f"{c_txt} * {num} / {den}"
        if num:
            return f"{c_txt} * {num}"
        return f"{c_txt} / {den}"
    return f"{c_txt} * {_render(body, var_names, sig_figs, B)}"


def to_canonical_text(m: Model, var_names: Sequence[str], sig_figs: int = 3,
                      log_scaled: bool = False, B: float = 10.0) -> str:
    """Deterministic infix rendering: offset first, then one term per basis."""
    if m.coeffs is None:
        raise ValueError("model has no fitted coefficients")
    parts = [_fmt(m.coeffs[0], sig_figs)]
    for j, tree in enumerate(m.bases):
        c = float(m.coeffs[j + 1])
        sign = "-" if c < 0 else "+"
        body = _weighted_term_text(abs(c), tree, var_names, sig_figs, B)
        parts.append(f"{sign} {body}")
    text = " ".join(parts)
    if log_scaled:
        return f"10^({text})"
    return text


# ---------------------------------------------------------------------------
# structured serialization (bit-exact round trip)
# ---------------------------------------------------------------------------

def tree_to_dict(node) -> dict:
    if isinstance(node, VCLeaf):
        return {"kind": "vc", "exponents": list(node.exponents)}
    if isinstance(node, WeightLeaf):
        return {"kind": "w", "stored": node.stored}
    if isinstance(node, OpLeaf):
        return {"kind": "op", "name": node.name}
    return {"kind": "nt", "symbol": node.symbol, "alt": node.alt,
            "children": [tree_to_dict(c) for c in node.children]}


def tree_from_dict(d: dict):
    kind = d["kind"]
    if kind == "vc":
        return VCLeaf(d["exponents"])
    if kind == "w":
        return WeightLeaf(d["stored"])
    if kind == "op":
        return OpLeaf(d["name"])
    if kind == "nt":
        return NTNode(d["symbol"], int(d["alt"]), [tree_from_dict(c) for c in d["children"]])
    raise ValueError(f"unknown tree node kind {kind!r}")


def model_to_dict(m: Model) -> dict:
    return {
        "bases": [tree_to_dict(t) for t in m.bases],
        "coeffs": None if m.coeffs is None else [float(c) for c in m.coeffs],
        "train_error_pct": m.train_error,
        "test_error_pct": m.test_error,
        "complexity": m.complexity,
        "valid": m.valid,
    }


def model_from_dict(d: dict) -> Model:
    coeffs = d.get("coeffs")
    return Model(
        bases=[tree_from_dict(t) for t in d["bases"]],
        coeffs=None if coeffs is None else np.asarray(coeffs, dtype=float),
        train_error=d.get("train_error_pct", INF),
        test_error=d.get("test_error_pct"),
        complexity=d.get("complexity", 0.0),
        valid=bool(d.get("valid", False)),
    )
