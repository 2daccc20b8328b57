# path: src/qhj_app/grammar.py
"""
Text form of operator and c-number expressions.

parse() reads the grammar documented in docs/grammar.md, print_expr() writes
the canonical text of an expression such that parsing it back yields the same
canonical terms.
"""
import re
from dataclasses import dataclass

import sympy as sp

from .opalg import (
    CONSTANT_SYMBOLS,
    FUNCTION_SYMBOLS,
    TENSOR_SYMBOLS,
    TIME,
    CNumberExpr,
    CoordFn,
    Index,
    Momentum,
    OpAlgError,
    OperatorExpr,
    SDeriv,
    Tensor,
    differentiate,
)

OPERATOR = 'operator'
CNUMBER = 'cnumber'
MODES = (OPERATOR, CNUMBER)

_TOKEN_SPEC = [
    ('SPACE', r'\s+'),
    ('SDERIV', r'dS/d(?:q[_^][a-z]+|t)(?![A-Za-z0-9_^])'),
    ('DOPEN', r'd\['),
    ('DVAR', r'd(?:q[_^][a-z]+|t)(?![A-Za-z0-9_^])'),
    ('CLIGHT', r'c_light(?![A-Za-z0-9_^])'),
    ('NUMBER', r'\d+'),
    ('NAME', r'[A-Za-z][A-Za-z0-9]*(?:[_^][a-z]+)*'),
    ('POW', r'\*\*'),
    ('OP', r'[-+*/()\[\],]'),
]
_TOKEN_RE = re.compile('|'.join(f'(?P<{kind}>{pattern})' for kind, pattern in _TOKEN_SPEC))
_INDEX_RE = re.compile(r'([_^])([a-z]+)')


class GrammarError(OpAlgError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownSymbolError(GrammarError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


def tokenize(text):
    tokens = []
    position = 0
    while position < len(text):
        match = _TOKEN_RE.match(text, position)
        if match is None:
            raise GrammarError(f"Unexpected character {text[position]!r}", position)
        if match.lastgroup != 'SPACE':
            tokens.append(Token(match.lastgroup, match.group(), position))
        position = match.end()
    return tokens


def _parse_var(text, position):
    # text is 't' or 'q_i' / 'q^mu'
    if text == 't':
        return TIME
    try:
        return Index(text[2:], up=text[1] == '^')
    except OpAlgError as exc:
        raise GrammarError(str(exc), position) from exc


class _Parser:
    def __init__(self, text, mode, definitions):
        if mode not in MODES:
            raise ValueError(f"Unknown parse mode '{mode}'")
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.mode = mode
        self.cls = OperatorExpr if mode == OPERATOR else CNumberExpr
        self.definitions = definitions or {}

    def peek(self, offset=0):
        index = self.pos + offset
        return self.tokens[index] if index < len(self.tokens) else None

    def at(self, kind, text=None, offset=0):
        token = self.peek(offset)
        return token is not None and token.kind == kind and (text is None or token.text == text)

    def advance(self):
        token = self.peek()
        if token is None:
            raise GrammarError("Unexpected end of input", len(self.text))
        self.pos += 1
        return token

    def expect(self, kind, text):
        token = self.advance()
        if token.kind != kind or token.text != text:
            raise GrammarError(f"Expected '{text}' but found '{token.text}'", token.position)
        return token

    def parse(self):
        if not self.tokens:
            raise GrammarError("Empty expression", 0)
        result = self.expression()
        if self.peek() is not None:
            token = self.peek()
            raise GrammarError(f"Unexpected token '{token.text}'", token.position)
        return result

    def expression(self):
        negative = False
        if self.at('OP', '-') or self.at('OP', '+'):
            negative = self.advance().text == '-'
        result = self.product()
        if negative:
            result = -result
        while self.at('OP', '+') or self.at('OP', '-'):
            op = self.advance().text
            right = self.product()
            result = result + right if op == '+' else result - right
        return result

    def product(self):
        result = self.power()
        while self.at('OP', '*') or self.at('OP', '/'):
            op = self.advance()
            right = self.power()
            try:
                result = result * right if op.text == '*' else result / right
            except (OpAlgError, ZeroDivisionError) as exc:
                raise GrammarError(str(exc), op.position) from exc
        return result

    def power(self):
        base = self.atom()
        if not self.at('POW'):
            return base
        op = self.advance()
        negative = False
        if self.at('OP', '-'):
            self.advance()
            negative = True
        token = self.advance()
        if token.kind != 'NUMBER':
            raise GrammarError("Exponent must be an integer", token.position)
        exponent = int(token.text) * (-1 if negative else 1)
        try:
            return base ** exponent
        except OpAlgError as exc:
            raise GrammarError(str(exc), op.position) from exc

    def atom(self):
        token = self.advance()
        if token.kind == 'NUMBER':
            return self.cls.constant(sp.Integer(token.text))
        if token.kind == 'CLIGHT':
            return self.cls.constant(CONSTANT_SYMBOLS['c_light'])
        if token.kind == 'SDERIV':
            var = _parse_var(token.text[4:], token.position)
            if self.mode == OPERATOR:
                return self.cls.factor(SDeriv(var))
            return self.cls.factor(CoordFn('S', derivs=(var,)))
        if token.kind == 'DOPEN':
            return self.derivative(token)
        if token.kind == 'NAME':
            return self.name(token)
        if token.kind == 'OP' and token.text == '(':
            inner = self.expression()
            self.expect('OP', ')')
            return inner
        raise GrammarError(f"Unexpected token '{token.text}'", token.position)

    def derivative(self, opening):
        inner = self.expression()
        self.expect('OP', ']')
        variables = []
        while self.at('OP', '/') and self.at('DVAR', offset=1):
            self.advance()
            token = self.advance()
            variables.append(_parse_var(token.text[1:], token.position))
        if not variables:
            raise GrammarError("Derivative without a variable", opening.position)
        if self.mode == CNUMBER:
            for var in variables:
                inner = differentiate(inner, var)
            return inner
        if len(inner.terms) != 1 or len(inner.terms[0][1]) != 1 or not isinstance(inner.terms[0][1][0], CoordFn):
            raise GrammarError("Operator derivatives apply to a single function symbol", opening.position)
        coeff, (factor,) = inner.terms[0]
        for var in variables:
            factor = factor.differentiated(var)
        return OperatorExpr.factor(factor, coeff=coeff)

    def name(self, token):
        base = re.match(r'[A-Za-z][A-Za-z0-9]*', token.text).group()
        try:
            indices = tuple(Index(name, up=mark == '^') for mark, name in _INDEX_RE.findall(token.text[len(base):]))
        except OpAlgError as exc:
            raise GrammarError(str(exc), token.position) from exc
        if base == 'i' and not indices:
            return self.cls.constant(sp.I)
        if base in CONSTANT_SYMBOLS and not indices:
            return self.cls.constant(CONSTANT_SYMBOLS[base])
        if base == 'p' and len(indices) == 1:
            if self.mode == CNUMBER:
                raise GrammarError("Momentum operators are not allowed in c-number expressions", token.position)
            return self.cls.factor(Momentum(indices[0]))
        if base in TENSOR_SYMBOLS:
            self._check_arity(base, indices, TENSOR_SYMBOLS[base], token)
            return self.cls.factor(Tensor(base, indices))
        if base in FUNCTION_SYMBOLS:
            self._check_arity(base, indices, FUNCTION_SYMBOLS[base], token)
            self._skip_arguments()
            return self.cls.factor(CoordFn(base, indices))
        if base in self.definitions and not indices:
            return self._definition(base, token)
        raise UnknownSymbolError(f"Unknown symbol '{token.text}'", token.position)

    def _check_arity(self, base, indices, expected, token):
        if len(indices) != expected:
            raise GrammarError(f"Symbol '{base}' takes {expected} indices, got {len(indices)}", token.position)

    def _skip_arguments(self):
        # a(q,t) documents the arguments; they carry no information
        if not self.at('OP', '('):
            return
        self.advance()
        while not self.at('OP', ')'):
            token = self.advance()
            if token.kind not in ('NAME', 'OP') or (token.kind == 'OP' and token.text != ','):
                raise GrammarError(f"Unexpected argument token '{token.text}'", token.position)
        self.advance()

    def _definition(self, base, token):
        value = self.definitions[base]
        if isinstance(value, str):
            nested = {k: v for k, v in self.definitions.items() if k != base}
            try:
                value = _Parser(value, self.mode, nested).parse()
            except GrammarError as exc:
                raise GrammarError(f"In definition of '{base}': {exc}", token.position) from exc
        if not isinstance(value, self.cls):
            raise GrammarError(f"Definition '{base}' has the wrong expression type", token.position)
        return value


def parse(text, mode=CNUMBER, definitions=None):
    """Parse `text` into an OperatorExpr (mode='operator') or a CNumberExpr (mode='cnumber')."""
    return _Parser(text, mode, definitions).parse()


def parse_operator_expr(text, definitions=None):
    return parse(text, OPERATOR, definitions)


def parse_cnumber_expr(text, definitions=None):
    return parse(text, CNUMBER, definitions)


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

def _var_text(var):
    return 't' if var.is_time else f'q{var}'


def format_factor(factor, cnumber=True):
    if isinstance(factor, SDeriv):
        return f'dS/d{_var_text(factor.var)}'
    if isinstance(factor, Momentum):
        return f'p{factor.var}'
    if isinstance(factor, Tensor):
        return factor.name + ''.join(str(i) for i in factor.indices)
    base = factor.name + ''.join(str(i) for i in factor.indices)
    if not factor.derivs:
        return base
    if cnumber and factor.name == 'S' and len(factor.derivs) == 1:
        return f'dS/d{_var_text(factor.derivs[0])}'
    return f'd[{base}]' + ''.join(f'/d{_var_text(d)}' for d in factor.derivs)


def _with_power(text, power):
    return text if power == 1 else f'{text}**{power}'


def _format_term(coeff, factors, cnumber):
    numerator, denominator = [], []
    negative = False
    if isinstance(coeff, sp.Add):
        numerator.append(f'({_format_sum(coeff)})')
    else:
        rational, rest = coeff.as_coeff_Mul()
        negative = rational < 0
        rational = abs(rational)
        powers = {base: exp for base, exp in rest.as_powers_dict().items() if base != 1}
        if powers.pop(sp.I, 0):
            numerator.append('i')
        for base in sorted(powers, key=str):
            exp = int(powers[base])
            if exp > 0:
                numerator.append(_with_power(str(base), exp))
            else:
                denominator.append(_with_power(str(base), -exp))
        lead = str(rational.p) if rational.q == 1 else f'{rational.p}/{rational.q}'
        if lead != '1':
            numerator.insert(0, lead)
    for item in factors:
        if cnumber:
            factor, power = item
            text = format_factor(factor, cnumber=True)
            if power > 0:
                numerator.append(_with_power(text, power))
            else:
                denominator.append(_with_power(text, -power))
        else:
            numerator.append(format_factor(item, cnumber=False))
    body = '*'.join(numerator) if numerator else '1'
    return negative, body + ''.join(f'/{d}' for d in denominator)


def _format_sum(coeff):
    parts = []
    for n, term in enumerate(sorted(sp.Add.make_args(coeff), key=sp.default_sort_key)):
        negative, body = _format_term(term, (), True)
        if n == 0:
            parts.append(('-' if negative else '') + body)
        else:
            parts.append((' - ' if negative else ' + ') + body)
    return ''.join(parts)


def print_expr(expr):
    """Canonical text of an OperatorExpr or CNumberExpr."""
    if expr.is_zero:
        return '0'
    cnumber = isinstance(expr, CNumberExpr)
    parts = []
    for n, (coeff, factors) in enumerate(expr.terms):
        negative, body = _format_term(coeff, factors, cnumber)
        if n == 0:
            parts.append(('-' if negative else '') + body)
        else:
            parts.append((' - ' if negative else ' + ') + body)
    return ''.join(parts)
