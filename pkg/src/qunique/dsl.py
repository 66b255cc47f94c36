"""The ``.qm`` rate-expression language.

A model file looks like::

    # Schlögl's second model on two sites
    model schlogl2
    dim 2
    param beta0 = 1
    param beta2 = 1
    param delta1 = 1
    param delta3 = 1
    trans for u in sites: delta +e(u) rate beta0 + beta2*x(u)*(x(u)-1)
    trans for u in sites: delta -e(u) rate delta1*x(u) + delta3*x(u)*(x(u)-1)*(x(u)-2)
    trans for u in sites, v in sites where u != v: delta -e(u) +e(v) rate x(u)*uniform

Grammar::

    model  := "model" IDENT NL "dim" INT NL {"param" IDENT "=" NUMBER NL} {family NL}
    family := "trans" ["for" IDENT "in" "sites" ["," IDENT "in" "sites"]] ["where" bexpr]
              ":" "delta" dterm {dterm} "rate" expr
    dterm  := ("+"|"-") "e" "(" sexpr ")"
    bexpr  := expr CMP expr, combined with "and"/"or" (parentheses allowed)
    sexpr  := site-variable | INT

The same expression syntax (plus ``level`` and ``sum(u, expr)``) is used for
test functions in certificate sidecar files, see :func:`parse_certificate`.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .errors import DSLSyntaxError, EvaluationError, ModelDefinitionError, ResourceError, UsageError
from .generator import GeneratorModel, StateVec

MAX_COORDINATE = 2 ** 53

KEYWORDS = frozenset({
    "model", "dim", "param", "trans", "for", "in", "sites", "where", "delta", "rate",
    "and", "or", "e", "x", "uniform", "level", "sum",
})
_COMPARATORS = ("==", "!=", "<=", ">=", "<", ">")


# ---------------------------------------------------------------------------
# abstract syntax

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class SiteVar:
    name: str


@dataclass(frozen=True)
class Coord:
    site: Union[str, int]


@dataclass(frozen=True)
class Builtin:
    name: str  # "dim", "uniform" or "level"


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class SiteSum:
    var: str
    body: object


@dataclass(frozen=True)
class Compare:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    left: object
    right: object


@dataclass(frozen=True)
class DeltaTerm:
    sign: int
    site: Union[str, int]


@dataclass(frozen=True)
class TransitionFamily:
    site_vars: tuple
    guard: Optional[object]
    delta: tuple
    rate: object


@dataclass(frozen=True)
class ModelSpec:
    name: str
    dimension: int
    params: tuple  # ((name, value), ...) in declaration order
    families: tuple

    @property
    def param_dict(self) -> dict:
        return dict(self.params)


@dataclass(frozen=True)
class CertificateSpec:
    kind: str
    phi: object
    c: float
    params: tuple = ()
    bound: Optional[float] = None
    windows: tuple = ()
    bounded_rates: Optional[float] = None
    name: str = "certificate"


# ---------------------------------------------------------------------------
# lexer

@dataclass(frozen=True)
class Token:
    kind: str  # NL, IDENT, NUMBER, OP, EOF
    value: str
    line: int
    column: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|[-+*/^(),:=<>])
""", re.VERBOSE)


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            tokens.append(Token("NL", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "number":
            tokens.append(Token("NUMBER", m.group(), line, col))
        elif kind == "ident":
            tokens.append(Token("IDENT", m.group(), line, col))
        elif kind == "op":
            tokens.append(Token("OP", m.group(), line, col))
        pos = m.end()
    tokens.append(Token("NL", "\n", line, pos - line_start + 1))
    tokens.append(Token("EOF", "", line + 1, 1))
    return tokens


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str, certificate: bool = False):
        self.tokens = tokenize(text)
        self.pos = 0
        self.certificate = certificate
        self.params: dict = {}
        self.site_vars: tuple = ()
        self.dimension: Optional[int] = None

    # token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message, expected=(), tok=None):
        tok = tok or self.tok
        raise DSLSyntaxError(message, tok.line, tok.column, expected)

    def describe(self, tok) -> str:
        return {"NL": "end of line", "EOF": "end of input"}.get(tok.kind, repr(tok.value))

    def at(self, value) -> bool:
        return self.tok.kind in ("OP", "IDENT") and self.tok.value == value

    def accept(self, value) -> bool:
        if self.at(value):
            self.pos += 1
            return True
        return False

    def expect(self, value) -> Token:
        tok = self.tok
        if not self.at(value):
            self.error(f"unexpected {self.describe(tok)}", [repr(value)])
        self.pos += 1
        return tok

    def expect_ident(self, what="identifier") -> Token:
        tok = self.tok
        if tok.kind != "IDENT":
            self.error(f"unexpected {self.describe(tok)}", [what])
        self.pos += 1
        return tok

    def expect_nl(self):
        if self.tok.kind != "NL":
            self.error(f"unexpected {self.describe(self.tok)}", ["end of line"])
        while self.tok.kind == "NL":
            self.pos += 1

    def skip_nl(self):
        while self.tok.kind == "NL":
            self.pos += 1

    def number(self) -> float:
        sign = -1.0 if self.accept("-") else 1.0
        tok = self.tok
        if tok.kind != "NUMBER":
            self.error(f"unexpected {self.describe(tok)}", ["number"])
        self.pos += 1
        return sign * float(tok.value)

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "NUMBER" or not tok.value.isdigit():
            self.error(f"unexpected {self.describe(tok)}", ["integer"])
        self.pos += 1
        return int(tok.value)

    def new_name(self, tok: Token, what: str) -> str:
        name = tok.value
        if name in KEYWORDS:
            self.error(f"{what} name {name!r} is reserved", tok=tok)
        if name in self.params:
            self.error(f"{what} name {name!r} clashes with a parameter", tok=tok)
        if name in self.site_vars:
            self.error(f"{what} name {name!r} clashes with a site variable", tok=tok)
        return name

    # model
    def parse_model(self) -> ModelSpec:
        self.skip_nl()
        self.expect("model")
        name = self.expect_ident("model name").value
        self.expect_nl()
        self.expect("dim")
        dim_tok = self.tok
        dimension = self.integer()
        if dimension < 1:
            self.error("dimension must be at least 1", tok=dim_tok)
        self.dimension = dimension
        self.expect_nl()
        params = []
        while self.at("param"):
            params.append(self.parse_param())
        families = []
        while self.at("trans"):
            families.append(self.parse_family())
            self.site_vars = ()
        if self.tok.kind != "EOF":
            expected = ["'trans'"] if families else ["'param'", "'trans'"]
            self.error(f"unexpected {self.describe(self.tok)}", expected)
        return ModelSpec(name, dimension, tuple(params), tuple(families))

    def parse_param(self):
        self.expect("param")
        tok = self.expect_ident("parameter name")
        if tok.value in self.params:
            self.error(f"duplicate parameter {tok.value!r}", tok=tok)
        name = self.new_name(tok, "parameter")
        self.expect("=")
        value = self.number()
        self.expect_nl()
        self.params[name] = value
        return (name, value)

    def parse_family(self) -> TransitionFamily:
        self.expect("trans")
        site_vars = []
        if self.accept("for"):
            site_vars.append(self.parse_site_binding())
            if self.accept(","):
                site_vars.append(self.parse_site_binding())
        self.site_vars = tuple(site_vars)
        guard = None
        if self.accept("where"):
            guard = self.parse_bexpr()
        if not self.at(":"):
            expected = ["':'", "'where'"] if guard is None else ["':'", "'and'", "'or'"]
            if not site_vars and guard is None:
                expected.append("'for'")
            self.error(f"unexpected {self.describe(self.tok)}", expected)
        self.pos += 1
        if not self.at("delta"):
            self.error(f"missing delta clause, found {self.describe(self.tok)}", ["'delta'"])
        self.pos += 1
        terms = []
        while self.at("+") or self.at("-"):
            sign = 1 if self.tok.value == "+" else -1
            self.pos += 1
            self.expect("e")
            self.expect("(")
            site = self.parse_sexpr()
            self.expect(")")
            terms.append(DeltaTerm(sign, site))
        if not terms:
            self.error("delta has no terms", ["'+'", "'-'"])
        if not self.at("rate"):
            self.error(f"unexpected {self.describe(self.tok)}", ["'+'", "'-'", "'rate'"])
        self.pos += 1
        rate = self.parse_expr()
        self.expect_nl()
        return TransitionFamily(tuple(site_vars), guard, tuple(terms), rate)

    def parse_site_binding(self) -> str:
        tok = self.expect_ident("site variable")
        if tok.value in self.site_vars:
            self.error(f"duplicate site variable {tok.value!r}", tok=tok)
        name = self.new_name(tok, "site variable")
        self.expect("in")
        self.expect("sites")
        self.site_vars = self.site_vars + (name,)
        return name

    def parse_sexpr(self):
        tok = self.tok
        if tok.kind == "NUMBER":
            index = self.integer()
            if self.dimension is not None and index >= self.dimension:
                self.error(f"site index {index} out of range for dim {self.dimension}", tok=tok)
            return index
        if tok.kind == "IDENT":
            if tok.value in self.site_vars:
                self.pos += 1
                return tok.value
            self.error(f"unknown site variable {tok.value!r}", tok=tok)
        self.error(f"unexpected {self.describe(tok)}", ["site variable", "integer"])

    # boolean expressions
    def parse_bexpr(self):
        left = self.parse_band()
        while self.accept("or"):
            left = BoolOp("or", left, self.parse_band())
        return left

    def parse_band(self):
        left = self.parse_bcmp()
        while self.accept("and"):
            left = BoolOp("and", left, self.parse_bcmp())
        return left

    def parse_bcmp(self):
        if self.at("("):
            saved = self.pos
            self.pos += 1
            try:
                inner = self.parse_bexpr()
                self.expect(")")
                if not any(self.at(op) for op in _COMPARATORS):
                    return inner
            except DSLSyntaxError:
                pass
            self.pos = saved
        left = self.parse_expr()
        for op in _COMPARATORS:
            if self.accept(op):
                return Compare(op, left, self.parse_expr())
        self.error(f"unexpected {self.describe(self.tok)}", [repr(op) for op in _COMPARATORS])

    # arithmetic
    def parse_expr(self):
        left = self.parse_term()
        while self.at("+") or self.at("-"):
            op = self.tok.value
            self.pos += 1
            left = BinOp(op, left, self.parse_term())
        return left

    def parse_term(self):
        left = self.parse_unary()
        while self.at("*") or self.at("/"):
            op = self.tok.value
            self.pos += 1
            left = BinOp(op, left, self.parse_unary())
        return left

    def parse_unary(self):
        if self.accept("-"):
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        if self.accept("^"):
            tok = self.tok
            exponent = self.parse_unary()
            lit = exponent.operand if isinstance(exponent, Neg) else exponent
            if isinstance(lit, Num) and not lit.value.is_integer():
                self.error(f"exponent must be an integer, got {tok.value}", tok=tok)
            return BinOp("^", base, exponent)
        return base

    def parse_atom(self):
        tok = self.tok
        if tok.kind == "NUMBER":
            self.pos += 1
            return Num(float(tok.value))
        if self.accept("("):
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.kind == "IDENT":
            name = tok.value
            self.pos += 1
            if name == "x":
                self.expect("(")
                site = self.parse_sexpr()
                self.expect(")")
                return Coord(site)
            if name in ("dim", "uniform"):
                return Builtin(name)
            if name == "level" and self.certificate:
                return Builtin("level")
            if name == "sum" and self.certificate:
                self.expect("(")
                var_tok = self.expect_ident("site variable")
                var = self.new_name(var_tok, "site variable")
                self.expect(",")
                outer = self.site_vars
                self.site_vars = outer + (var,)
                body = self.parse_expr()
                self.site_vars = outer
                self.expect(")")
                return SiteSum(var, body)
            if name in self.site_vars:
                return SiteVar(name)
            if name in self.params:
                return Param(name)
            self.error(f"unknown identifier {name!r}", tok=tok)
        self.error(f"unexpected {self.describe(tok)}", ["number", "identifier", "'('", "'-'"])

    # certificates
    def parse_certificate(self) -> CertificateSpec:
        fields = {}
        self.skip_nl()
        name = "certificate"
        if self.accept("certificate"):
            name = self.expect_ident("certificate name").value
            self.expect_nl()
        while self.tok.kind != "EOF":
            tok = self.expect_ident("certificate field")
            key = tok.value
            if key in fields and key != "param":
                self.error(f"duplicate field {key!r}", tok=tok)
            if key == "param":
                p = self.expect_ident("parameter name")
                if p.value in self.params:
                    self.error(f"duplicate parameter {p.value!r}", tok=p)
                pname = self.new_name(p, "parameter")
                self.expect("=")
                self.params[pname] = self.number()
                fields["param"] = True
            elif key == "kind":
                kind = self.expect_ident("certificate kind").value
                if kind not in CERTIFICATE_KINDS:
                    self.error(f"unknown certificate kind {kind!r}", [repr(k) for k in CERTIFICATE_KINDS])
                fields[key] = kind
            elif key == "phi":
                fields[key] = self.parse_expr()
            elif key in ("c", "bound", "bounded_rates"):
                fields[key] = self.number()
            elif key == "windows":
                caps = [self.integer()]
                while self.tok.kind == "NUMBER":
                    caps.append(self.integer())
                fields[key] = tuple(caps)
            else:
                self.error(f"unknown certificate field {key!r}",
                           ["'kind'", "'phi'", "'c'", "'bound'", "'windows'", "'bounded_rates'", "'param'"],
                           tok=tok)
            self.expect_nl()
        for required in ("kind", "phi"):
            if required not in fields:
                self.error(f"certificate is missing the {required!r} field")
        if "c" not in fields and fields["kind"] != "corollary":
            self.error("certificate is missing the 'c' field")
        return CertificateSpec(
            kind=fields["kind"], phi=fields["phi"], c=fields.get("c", math.nan),
            params=tuple(self.params.items()), bound=fields.get("bound"),
            windows=fields.get("windows", ()), bounded_rates=fields.get("bounded_rates"), name=name)


CERTIFICATE_KINDS = ("uniqueness", "corollary", "nonuniqueness")


def parse_model(text: str) -> ModelSpec:
    """Parse ``.qm`` source into a :class:`ModelSpec`."""
    return _Parser(text).parse_model()


def parse_certificate(text: str) -> CertificateSpec:
    """Parse a certificate sidecar file.

    Example::

        certificate schlogl_level
        kind uniqueness
        phi 1 + level
        c 40
        windows 50 100 200 300
    """
    return _Parser(text, certificate=True).parse_certificate()


def parse_expression(text: str, params=(), site_vars=(), certificate=True):
    """Parse a single arithmetic expression, e.g. a ``--phi`` flag."""
    parser = _Parser(text, certificate=certificate)
    parser.params = dict(params)
    parser.site_vars = tuple(site_vars)
    parser.skip_nl()
    expr = parser.parse_expr()
    parser.skip_nl()
    if parser.tok.kind != "EOF":
        parser.error(f"unexpected {parser.describe(parser.tok)}", ["operator", "end of input"])
    return expr


# ---------------------------------------------------------------------------
# pretty printing

_PREC = {"+": 4, "-": 4, "*": 5, "/": 5, "^": 7}


def _fmt_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def format_expr(node, parent_prec: int = 0) -> str:
    if isinstance(node, Num):
        text, prec = _fmt_number(node.value), 9
    elif isinstance(node, (Param, SiteVar)):
        text, prec = node.name, 9
    elif isinstance(node, Builtin):
        text, prec = node.name, 9
    elif isinstance(node, Coord):
        text, prec = f"x({node.site})", 9
    elif isinstance(node, SiteSum):
        text, prec = f"sum({node.var}, {format_expr(node.body)})", 9
    elif isinstance(node, Neg):
        text, prec = "-" + format_expr(node.operand, 6), 6
    elif isinstance(node, BinOp):
        prec = _PREC[node.op]
        if node.op == "^":
            left = format_expr(node.left, prec + 1)
            right = format_expr(node.right, 6)
        else:
            left = format_expr(node.left, prec)
            right = format_expr(node.right, prec + 1)
        sep = "" if node.op == "^" else " "
        text = f"{left}{sep}{node.op}{sep}{right}"
    elif isinstance(node, Compare):
        text, prec = f"{format_expr(node.left)} {node.op} {format_expr(node.right)}", 3
    elif isinstance(node, BoolOp):
        prec = 1 if node.op == "or" else 2
        text = f"{format_expr(node.left, prec)} {node.op} {format_expr(node.right, prec + 1)}"
    else:
        raise TypeError(f"not an expression node: {node!r}")
    return f"({text})" if prec < parent_prec else text


def format_model(spec: ModelSpec) -> str:
    """Canonical source text for ``spec``; ``parse_model`` inverts it."""
    lines = [f"model {spec.name}", f"dim {spec.dimension}"]
    for name, value in spec.params:
        lines.append(f"param {name} = {_fmt_number(value)}")
    for fam in spec.families:
        head = "trans"
        if fam.site_vars:
            head += " for " + ", ".join(f"{v} in sites" for v in fam.site_vars)
        if fam.guard is not None:
            head += " where " + format_expr(fam.guard)
        delta = " ".join(f"{'+' if t.sign > 0 else '-'}e({t.site})" for t in fam.delta)
        lines.append(f"{head}: delta {delta} rate {format_expr(fam.rate)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# evaluation

def _pow(base: float, exponent: float) -> float:
    if not float(exponent).is_integer():
        raise ModelDefinitionError(f"non-integer exponent {exponent}")
    if base == 0 and exponent == 0:
        raise ModelDefinitionError("0^0 is undefined")
    if base == 0 and exponent < 0:
        raise ModelDefinitionError("division by zero in 0^negative")
    return float(base) ** int(exponent)


def _div(a: float, b: float) -> float:
    if b == 0:
        raise ModelDefinitionError("division by zero")
    return a / b


_ARITH = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "^": _pow,
}
_CMP = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}

Evaluator = Callable[[tuple, dict], float]


def compile_expr(node, params: dict, dimension: int) -> Evaluator:
    """Compile an expression into ``f(state, env) -> value``.

    ``env`` maps site-variable names to site indices.
    """
    if isinstance(node, Num):
        value = node.value
        return lambda x, env: value
    if isinstance(node, Param):
        if node.name not in params:
            raise UsageError(f"unknown parameter {node.name!r}")
        value = float(params[node.name])
        return lambda x, env: value
    if isinstance(node, SiteVar):
        name = node.name
        return lambda x, env: float(env[name])
    if isinstance(node, Coord):
        site = node.site
        if isinstance(site, int):
            if site >= dimension:
                raise EvaluationError(f"x({site}) out of range for dimension {dimension}")
            return lambda x, env: float(x[site])
        return lambda x, env: float(x[env[site]])
    if isinstance(node, Builtin):
        if node.name == "dim":
            return lambda x, env: float(dimension)
        if node.name == "level":
            return lambda x, env: float(sum(x))

        def uniform(x, env):
            if dimension == 1:
                raise ModelDefinitionError("uniform = 1/(dim-1) is undefined for dim 1")
            return 1.0 / (dimension - 1)
        return uniform
    if isinstance(node, Neg):
        inner = compile_expr(node.operand, params, dimension)
        return lambda x, env: -inner(x, env)
    if isinstance(node, BinOp):
        fn = _ARITH[node.op]
        left = compile_expr(node.left, params, dimension)
        right = compile_expr(node.right, params, dimension)
        return lambda x, env: fn(left(x, env), right(x, env))
    if isinstance(node, SiteSum):
        body = compile_expr(node.body, params, dimension)
        var = node.var

        def site_sum(x, env):
            local = dict(env)
            total = 0.0
            for u in range(dimension):
                local[var] = u
                total += body(x, local)
            return total
        return site_sum
    if isinstance(node, Compare):
        fn = _CMP[node.op]
        left = compile_expr(node.left, params, dimension)
        right = compile_expr(node.right, params, dimension)
        return lambda x, env: fn(left(x, env), right(x, env))
    if isinstance(node, BoolOp):
        left = compile_expr(node.left, params, dimension)
        right = compile_expr(node.right, params, dimension)
        if node.op == "and":
            return lambda x, env: left(x, env) and right(x, env)
        return lambda x, env: left(x, env) or right(x, env)
    raise TypeError(f"not an expression node: {node!r}")


def _depends_on_state(node) -> bool:
    if isinstance(node, Coord) or (isinstance(node, Builtin) and node.name == "level"):
        return True
    for attr in ("operand", "left", "right", "body"):
        child = getattr(node, attr, None)
        if child is not None and _depends_on_state(child):
            return True
    return False


@dataclass
class _CompiledFamily:
    index: int
    family: TransitionFamily
    guard: Optional[Evaluator]
    rate: Evaluator
    # (env, delta vector) per site assignment; guards depending only on site
    # variables are resolved here
    assignments: list = field(default_factory=list)


def _delta_vector(terms, env, dimension):
    vec = [0] * dimension
    for t in terms:
        site = t.site if isinstance(t.site, int) else env[t.site]
        vec[site] += t.sign
    return tuple(vec)


def _compile_families(spec: ModelSpec, params: dict) -> list:
    d = spec.dimension
    compiled = []
    for k, fam in enumerate(spec.families):
        guard = compile_expr(fam.guard, params, d) if fam.guard is not None else None
        static_guard = guard is not None and not _depends_on_state(fam.guard)
        cf = _CompiledFamily(k, fam, None if static_guard else guard, compile_expr(fam.rate, params, d))
        for combo in itertools.product(range(d), repeat=len(fam.site_vars)):
            env = dict(zip(fam.site_vars, combo))
            if static_guard and not guard((0,) * d, env):
                continue
            delta = _delta_vector(fam.delta, env, d)
            if not any(delta) and cf.guard is None:
                raise ModelDefinitionError(
                    f"{spec.name}: family {k} has zero delta for sites {env}; add a guard")
            cf.assignments.append((env, delta))
        compiled.append(cf)
    return compiled


def iter_family_transitions(compiled: list, state: StateVec, model_name: str = "model"):
    """Yield ``(family_index, env, target, rate)`` for every emitted transition."""
    for cf in compiled:
        for env, delta in cf.assignments:
            if cf.guard is not None and not cf.guard(state, env):
                continue
            if not any(delta):
                raise ModelDefinitionError(
                    f"{model_name}: family {cf.index} has zero delta for sites {env} at state {tuple(state)}")
            coords = [a + b for a, b in zip(state, delta)]
            if min(coords) < 0:
                continue
            if max(coords) > MAX_COORDINATE:
                raise ResourceError(f"{model_name}: coordinate overflow leaving state {tuple(state)}")
            try:
                rate = cf.rate(state, env)
            except ModelDefinitionError as exc:
                raise ModelDefinitionError(
                    f"{model_name}: family {cf.index} at state {tuple(state)}: {exc}") from exc
            if rate < 0:
                raise ModelDefinitionError(
                    f"{model_name}: negative rate {rate:g} from family {cf.index} "
                    f"at state {tuple(state)} (sites {env})")
            if rate == 0:
                continue
            yield cf.index, env, StateVec._trusted(coords), rate


def instantiate(spec: ModelSpec, overrides: Optional[dict] = None) -> GeneratorModel:
    """Turn a parsed spec into a :class:`GeneratorModel`.

    ``overrides`` replaces parameter values; unknown names are rejected.
    """
    params = spec.param_dict
    for key, value in (overrides or {}).items():
        if key not in params:
            raise UsageError(f"model {spec.name!r} has no parameter {key!r}")
        params[key] = float(value)
    compiled = _compile_families(spec, params)
    name = spec.name

    def transitions(state):
        return [(t, r) for _, _, t, r in iter_family_transitions(compiled, state, name)]

    return GeneratorModel(
        dimension=spec.dimension,
        transitions_fn=transitions,
        name=name,
        params=params,
        metadata={"source": "dsl", "spec": spec, "compiled_families": compiled},
    )


def compile_state_function(expr, dimension: int, params=None) -> Callable[[StateVec], float]:
    """Compile a test-function expression into ``phi(state) -> float``."""
    fn = compile_expr(expr, dict(params or {}), dimension)
    empty: dict = {}

    def phi(state):
        return fn(state, empty)
    phi.expression = format_expr(expr)
    return phi


def load_model(path, overrides=None) -> GeneratorModel:
    with open(path, encoding="utf-8") as fh:
        return instantiate(parse_model(fh.read()), overrides)
