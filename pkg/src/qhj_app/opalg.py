# path: src/qhj_app/opalg.py
"""
Non-commutative operator algebra and commutative c-number algebra used by the
derivation pipelines.

Two expression types live here:

* OperatorExpr: sums of coefficient * ordered factor products. Factors are
  functions of (q, t), constant symmetric tensors, the operator dS/dq (SDeriv)
  and momenta p (Momentum).
* CNumberExpr: sums of coefficient * commutative monomials with integer
  powers (negative powers allowed, so division by monomials is exact).

Coefficients are exact sympy expressions over the rationals, the imaginary
unit and the positive symbols hbar, m, m0, c_light. Every expression is kept in
canonical form, so structural equality is algebraic equality.
"""
import itertools
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import sympy as sp

logger = logging.getLogger(__name__)

HBAR, MASS, MASS0, C_LIGHT = sp.symbols('hbar m m0 c_light', positive=True)
CONSTANT_SYMBOLS = {'hbar': HBAR, 'm': MASS, 'm0': MASS0, 'c_light': C_LIGHT}

LATIN_INDICES = ('i', 'j', 'k', 'l', 'n', 'r', 's')
GREEK_INDICES = ('mu', 'nu', 'rho', 'sigma', 'kappa', 'lambda')
TIME_NAME = 't'

FUNCTION_SYMBOLS = {  # name -> number of tensor indices
    'a': 0,
    'b': 1,
    'c': 0,
    'S': 0,
    'R': 0,
    'V': 0,
    'Vvec': 1,
    'alpha': 0,
}
TENSOR_SYMBOLS = {'A': 2}


class OpAlgError(Exception):
    """Base class for every algebra failure."""


class IndexStructureError(OpAlgError):
    pass


class MoreThanTwoSDerivs(OpAlgError):
    pass


class NotNormalForm(OpAlgError):
    pass


class UnsupportedMomentum(OpAlgError):
    pass


class SubstitutionError(OpAlgError):
    pass


class InexactCoefficient(OpAlgError):
    pass


class Regime(str, Enum):
    NONRELATIVISTIC = 'nonrelativistic'
    RELATIVISTIC = 'relativistic'


class _Identity:
    """Marker bound to a tensor symbol to replace it with the Kronecker delta."""

    def __repr__(self):
        return 'IDENTITY'


IDENTITY = _Identity()


# ---------------------------------------------------------------------------
# Indices and factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Index:
    name: str
    up: bool = False

    def __post_init__(self):
        if self.name not in LATIN_INDICES and self.name not in GREEK_INDICES and self.name != TIME_NAME:
            raise IndexStructureError(f"Unsupported index name '{self.name}'")

    @property
    def is_time(self):
        return self.name == TIME_NAME

    @property
    def is_greek(self):
        return self.name in GREEK_INDICES

    def key(self):
        return (self.name, self.up)

    def __str__(self):
        return ('^' if self.up else '_') + self.name


TIME = Index(TIME_NAME)


def _rename_index(index, mapping, flips=frozenset()):
    if index.name in mapping:
        return Index(mapping[index.name], index.up != (index.name in flips))
    return index


def _sorted_indices(indices):
    return tuple(sorted(indices, key=Index.key))


@dataclass(frozen=True)
class CoordFn:
    """A function of (q, t), optionally carrying tensor indices and partial derivatives."""
    name: str
    indices: tuple = ()
    derivs: tuple = ()

    is_function = True

    def __post_init__(self):
        object.__setattr__(self, 'indices', tuple(self.indices))
        object.__setattr__(self, 'derivs', _sorted_indices(self.derivs))

    def slots(self):
        return self.indices + self.derivs

    def key(self):
        return (0, self.name, tuple(i.key() for i in self.indices), tuple(d.key() for d in self.derivs))

    def rename(self, mapping, flips=frozenset()):
        return CoordFn(
            self.name,
            tuple(_rename_index(i, mapping, flips) for i in self.indices),
            tuple(_rename_index(d, mapping, flips) for d in self.derivs),
        )

    def differentiated(self, var):
        return CoordFn(self.name, self.indices, self.derivs + (var,))


@dataclass(frozen=True)
class Tensor:
    """Constant symmetric tensor such as the metric-like matrix A."""
    name: str
    indices: tuple = ()

    is_function = True

    def __post_init__(self):
        object.__setattr__(self, 'indices', _sorted_indices(self.indices))

    def slots(self):
        return self.indices

    def key(self):
        return (1, self.name, tuple(i.key() for i in self.indices))

    def rename(self, mapping, flips=frozenset()):
        return Tensor(self.name, tuple(_rename_index(i, mapping, flips) for i in self.indices))


@dataclass(frozen=True)
class SDeriv:
    """The operator dS/dq (or dS/dt) in the substituted Hamiltonian."""
    var: Index

    is_function = False

    def slots(self):
        return (self.var,)

    def key(self):
        return (2, self.var.key())

    def rename(self, mapping, flips=frozenset()):
        return SDeriv(_rename_index(self.var, mapping, flips))


@dataclass(frozen=True)
class Momentum:
    var: Index

    is_function = False

    def slots(self):
        return (self.var,)

    def key(self):
        return (3, self.var.key())

    def rename(self, mapping, flips=frozenset()):
        return Momentum(_rename_index(self.var, mapping, flips))


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

def exact_coefficient(value):
    coeff = sp.expand(sp.sympify(value))
    if coeff.has(sp.Float):
        raise InexactCoefficient(f"Floating point coefficient {coeff} is not allowed")
    return coeff


def assert_exact(expr):
    """Re-check every coefficient of an expression for floating point contamination."""
    for coeff, _ in expr.terms:
        if coeff.has(sp.Float):
            raise InexactCoefficient(f"Floating point coefficient {coeff} is not allowed")
    return True


# ---------------------------------------------------------------------------
# Index bookkeeping shared by both expression types
# ---------------------------------------------------------------------------

def _census(slots):
    counts = Counter(idx.name for idx in slots if not idx.is_time)
    for name, count in counts.items():
        if count > 2:
            raise IndexStructureError(f"Index '{name}' occurs {count} times in one term")
    dummies = sorted(name for name, count in counts.items() if count == 2)
    free = sorted(name for name, count in counts.items() if count == 1)
    return dummies, free


def _fresh_name(name, used):
    pool = GREEK_INDICES if name in GREEK_INDICES else LATIN_INDICES
    for candidate in pool:
        if candidate not in used:
            used.add(candidate)
            return candidate
    raise IndexStructureError(f"Ran out of index names while renaming '{name}'")


class _Ordered:
    """Term-shape helpers for ordered factor tuples (operator terms)."""

    @staticmethod
    def slots(factors):
        return [slot for f in factors for slot in f.slots()]

    @staticmethod
    def rename(factors, mapping, flips=frozenset()):
        return tuple(f.rename(mapping, flips) for f in factors)

    @staticmethod
    def arrange(factors):
        # Function factors commute among themselves: sort each maximal run.
        arranged, run = [], []
        for factor in factors:
            if factor.is_function:
                run.append(factor)
                continue
            arranged.extend(sorted(run, key=lambda f: f.key()))
            run = []
            arranged.append(factor)
        arranged.extend(sorted(run, key=lambda f: f.key()))
        return tuple(arranged)

    @staticmethod
    def key(factors):
        return tuple(f.key() for f in factors)

    @staticmethod
    def product(left, right):
        return left + right


class _Commutative:
    """Term-shape helpers for commutative monomials of (factor, power) pairs."""

    @staticmethod
    def slots(monomial):
        return [slot for f, p in monomial for _ in range(abs(p)) for slot in f.slots()]

    @staticmethod
    def rename(monomial, mapping, flips=frozenset()):
        return tuple((f.rename(mapping, flips), p) for f, p in monomial)

    @staticmethod
    def arrange(monomial):
        powers = Counter()
        for factor, power in monomial:
            powers[factor] += power
        return tuple(sorted(((f, p) for f, p in powers.items() if p != 0), key=lambda fp: (fp[0].key(), fp[1])))

    @staticmethod
    def key(monomial):
        return tuple((f.key(), p) for f, p in monomial)

    @staticmethod
    def product(left, right):
        return left + right


def _canonical_term(shape, factors):
    """Rename summed indices to the fixed pool and return (key, factors) of the least variant."""
    factors = shape.arrange(factors)
    dummies, free = _census(shape.slots(factors))
    if not dummies:
        return shape.key(factors), factors
    latin = [d for d in dummies if d not in GREEK_INDICES]
    greek = [d for d in dummies if d in GREEK_INDICES]
    latin_targets = [n for n in LATIN_INDICES if n not in free][:len(latin)]
    greek_targets = [n for n in GREEK_INDICES if n not in free][:len(greek)]
    if len(latin_targets) < len(latin) or len(greek_targets) < len(greek):
        raise IndexStructureError("Too many summed indices in one term")
    best = None
    for latin_perm in itertools.permutations(latin_targets):
        for greek_perm in itertools.permutations(greek_targets):
            mapping = dict(zip(latin, latin_perm))
            mapping.update(zip(greek, greek_perm))
            for bits in itertools.product((False, True), repeat=len(greek)):
                flips = frozenset(g for g, flip in zip(greek, bits) if flip)
                candidate = shape.arrange(shape.rename(factors, mapping, flips))
                key = shape.key(candidate)
                if best is None or key < best[0]:
                    best = (key, candidate)
    return best


def _rename_apart(shape, left, right):
    """Rename summed indices so that multiplying two terms contracts only their free indices."""
    left_dummies, left_free = _census(shape.slots(left))
    right_dummies, right_free = _census(shape.slots(right))
    left_names = set(left_dummies) | set(left_free)
    right_names = set(right_dummies) | set(right_free)
    used = left_names | right_names
    right_map = {d: _fresh_name(d, used) for d in right_dummies if d in left_names}
    if right_map:
        right = shape.rename(right, right_map)
    left_map = {d: _fresh_name(d, used) for d in left_dummies if d in right_free}
    if left_map:
        left = shape.rename(left, left_map)
    return left, right


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

class _Expr:
    _shape = None
    __slots__ = ('terms',)

    def __init__(self, terms=()):
        collected = {}
        representative = {}
        for coeff, factors in terms:
            coeff = exact_coefficient(coeff)
            if coeff == 0:
                continue
            key, canonical = _canonical_term(self._shape, tuple(factors))
            collected[key] = collected.get(key, 0) + coeff
            representative[key] = canonical
        canonical_terms = []
        for key in sorted(collected):
            coeff = sp.expand(collected[key])
            if coeff != 0:
                canonical_terms.append((coeff, representative[key]))
        self.terms = tuple(canonical_terms)

    # construction helpers
    @classmethod
    def constant(cls, value):
        return cls([(value, ())])

    @classmethod
    def _coerce(cls, other):
        if isinstance(other, cls):
            return other
        if isinstance(other, _Expr):
            raise TypeError(f"Cannot combine {cls.__name__} with {type(other).__name__}")
        return cls.constant(other)

    # arithmetic
    def __add__(self, other):
        other = self._coerce(other)
        return type(self)(self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return type(self)((-c, f) for c, f in self.terms)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def scale(self, value):
        value = exact_coefficient(value)
        return type(self)((c * value, f) for c, f in self.terms)

    def __mul__(self, other):
        if not isinstance(other, _Expr):
            return self.scale(other)
        other = self._coerce(other)
        products = []
        for c1, f1 in self.terms:
            for c2, f2 in other.terms:
                left, right = _rename_apart(self._shape, f1, f2)
                products.append((c1 * c2, self._shape.product(left, right)))
        return type(self)(products)

    def __rmul__(self, other):
        if isinstance(other, _Expr):
            return self._coerce(other) * self
        return self.scale(other)

    # inspection
    @property
    def is_zero(self):
        return not self.terms

    @property
    def coefficient_only(self):
        """The coefficient if the expression has no factors, otherwise None."""
        if not self.terms:
            return sp.Integer(0)
        if len(self.terms) == 1 and not self.terms[0][1]:
            return self.terms[0][0]
        return None

    def map_coefficients(self, function):
        return type(self)((function(c), f) for c, f in self.terms)

    def __eq__(self, other):
        return type(self) is type(other) and self.terms == other.terms

    def __hash__(self):
        return hash((type(self).__name__, self.terms))

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __str__(self):
        from .grammar import print_expr
        return print_expr(self)

    def __repr__(self):
        return f"{type(self).__name__}({str(self)!r})"


class OperatorExpr(_Expr):
    _shape = _Ordered
    __slots__ = ()

    @classmethod
    def factor(cls, factor, coeff=1):
        return cls([(coeff, (factor,))])

    def __truediv__(self, other):
        if isinstance(other, _Expr):
            value = other.coefficient_only
            if value is None or value == 0:
                raise OpAlgError("Operator expressions can only be divided by nonzero constants")
            other = value
        return self.scale(1 / sp.sympify(other))

    def __pow__(self, exponent):
        if not isinstance(exponent, int) or exponent < 0:
            value = self.coefficient_only
            if value is None or value == 0:
                raise OpAlgError("Negative powers of operators are not defined")
            return OperatorExpr.constant(value ** exponent)
        result = OperatorExpr.constant(1)
        for _ in range(exponent):
            result = result * self
        return result


class CNumberExpr(_Expr):
    _shape = _Commutative
    __slots__ = ()

    @classmethod
    def factor(cls, factor, power=1, coeff=1):
        return cls([(coeff, ((factor, power),))])

    def inverse(self):
        if len(self.terms) != 1:
            raise SubstitutionError(f"Cannot invert non-monomial expression {self}")
        coeff, monomial = self.terms[0]
        return CNumberExpr([(1 / coeff, tuple((f, -p) for f, p in monomial))])

    def __truediv__(self, other):
        if isinstance(other, _Expr):
            return self * self._coerce(other).inverse()
        if sp.sympify(other) == 0:
            raise ZeroDivisionError("Division of an expression by zero")
        return self.scale(1 / sp.sympify(other))

    def __rtruediv__(self, other):
        return self._coerce(other) * self.inverse()

    def __pow__(self, exponent):
        if not isinstance(exponent, int):
            raise OpAlgError("Only integer powers are supported")
        if exponent < 0:
            return self.inverse() ** (-exponent)
        result = CNumberExpr.constant(1)
        for _ in range(exponent):
            result = result * self
        return result

    def contains(self, name):
        return any(f.name == name for _, monomial in self.terms for f, _p in monomial if not isinstance(f, (SDeriv, Momentum)))


# ---------------------------------------------------------------------------
# Hamiltonian construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HamiltonianSpec:
    """
    Coefficient functions of the general quadratic Hamiltonian
    H = a_ij p_i p_j + b_i p_i + c with a_ij = a A_ij / 2m (nonrelativistic)
    or H = a p^mu p_mu + b_mu p^mu + c (relativistic).

    `a` is a function name or the literal 1, `b`/`c` a function name or 0,
    `A` the tensor name or IDENTITY (always IDENTITY in the relativistic regime).
    """
    regime: Regime = Regime.NONRELATIVISTIC
    a: object = 'a'
    A: object = 'A'
    b: object = 'b'
    c: object = 'c'

    def __post_init__(self):
        if self.a != 1 and self.a not in FUNCTION_SYMBOLS:
            raise OpAlgError(f"Coefficient a must be 1 or a function symbol, got {self.a!r}")
        for label, value in (('b', self.b), ('c', self.c)):
            if value != 0 and value not in FUNCTION_SYMBOLS:
                raise OpAlgError(f"Coefficient {label} must be 0 or a function symbol, got {value!r}")
        if self.A is not IDENTITY and self.A not in TENSOR_SYMBOLS:
            raise OpAlgError(f"Tensor A must be IDENTITY or a tensor symbol, got {self.A!r}")
        if self.regime == Regime.RELATIVISTIC and self.A is not IDENTITY:
            raise OpAlgError("The relativistic Hamiltonian contracts momenta with the metric; A must be IDENTITY")

    def bindings(self):
        """Substitutions that turn the canonical (a, A, b, c) expressions into this spec."""
        bindings = {}
        for name, value in (('a', self.a), ('b', self.b), ('c', self.c)):
            if value != name:
                bindings[name] = value
        if self.A is IDENTITY:
            bindings['A'] = IDENTITY
        return bindings

    def to_dict(self):
        return {
            'regime': self.regime.value,
            'a': self.a,
            'A': 'identity' if self.A is IDENTITY else self.A,
            'b': self.b,
            'c': self.c,
        }


def _weyl_quadratic(weight_factors, first, second, coeff):
    """1/4 w p p + 1/2 p w p + 1/4 p p w for the function factors w."""
    p1, p2 = Momentum(first), Momentum(second)
    w = tuple(weight_factors)
    return [
        (coeff * sp.Rational(1, 4), w + (p1, p2)),
        (coeff * sp.Rational(1, 2), (p1,) + w + (p2,)),
        (coeff * sp.Rational(1, 4), (p1, p2) + w),
    ]


def _weyl_linear(weight_factors, var, coeff):
    p = Momentum(var)
    w = tuple(weight_factors)
    return [(coeff * sp.Rational(1, 2), w + (p,)), (coeff * sp.Rational(1, 2), (p,) + w)]


def build_weyl_hamiltonian(spec):
    """Weyl-ordered operator Hamiltonian for the given coefficient spec."""
    terms = []
    a_factors = [] if spec.a == 1 else [CoordFn(spec.a)]
    if spec.regime == Regime.NONRELATIVISTIC:
        i, j = Index('i'), Index('j')
        if spec.A is IDENTITY:
            terms += _weyl_quadratic(a_factors, i, i, 1 / (2 * MASS))
        else:
            terms += _weyl_quadratic(a_factors + [Tensor(spec.A, (i, j))], i, j, 1 / (2 * MASS))
        if spec.b != 0:
            terms += _weyl_linear([CoordFn(spec.b, (i,))], i, 1)
    else:
        mu_up, mu_down = Index('mu', up=True), Index('mu')
        terms += _weyl_quadratic(a_factors, mu_up, mu_down, 1)
        if spec.b != 0:
            terms += _weyl_linear([CoordFn(spec.b, (mu_down,))], mu_up, 1)
    if spec.c != 0:
        terms.append((1, (CoordFn(spec.c),)))
    hamiltonian = OperatorExpr(terms)
    logger.debug(f"Built Weyl Hamiltonian for {spec.to_dict()}: {len(hamiltonian)} terms")
    return hamiltonian


def substitute_momenta(expr, regime, time_weight=None):
    """
    Replace p_i by dS/dq_i (nonrelativistic) or p^mu by -dS/dq^mu (relativistic).

    With `time_weight` (a function name or 1) the symmetrized time term
    1/2 (w dS/dt + dS/dt w) is added, assembling the full operator equation.
    """
    sign = 1 if regime == Regime.NONRELATIVISTIC else -1
    terms = []
    for coeff, factors in expr.terms:
        momenta = [f for f in factors if isinstance(f, Momentum)]
        if len(momenta) > 2:
            raise UnsupportedMomentum(f"Term with {len(momenta)} momenta is beyond quadratic order")
        for p in momenta:
            if p.var.is_greek != (regime == Regime.RELATIVISTIC):
                raise UnsupportedMomentum(f"Momentum index {p.var} does not belong to the {regime.value} regime")
        replaced = tuple(SDeriv(f.var) if isinstance(f, Momentum) else f for f in factors)
        terms.append((coeff * sign ** len(momenta), replaced))
    if time_weight is not None:
        if time_weight == 1:
            terms.append((1, (SDeriv(TIME),)))
        else:
            weight = CoordFn(time_weight)
            terms.append((sp.Rational(1, 2), (weight, SDeriv(TIME))))
            terms.append((sp.Rational(1, 2), (SDeriv(TIME), weight)))
    return OperatorExpr(terms)


# ---------------------------------------------------------------------------
# Normal ordering and projection
# ---------------------------------------------------------------------------

def _first_redex(factors, treat_s_deriv_as_function):
    for position in range(len(factors) - 1):
        left, right = factors[position], factors[position + 1]
        if isinstance(left, (SDeriv, Momentum)) and right.is_function:
            return position
        if treat_s_deriv_as_function and isinstance(left, SDeriv) and isinstance(right, SDeriv):
            return position
    return None


def normalize(expr, treat_s_deriv_as_function=False):
    """
    Move every function factor to the left of every dS/dq (and p) using
    D_x F = F D_x - i hbar dF/dx, rewriting the leftmost redex first.

    With `treat_s_deriv_as_function` the product D_x D_y is rewritten as
    (dS/dy) D_x - i hbar d2S/dxdy, i.e. the right factor is treated as a
    function of q.
    """
    pending = list(expr.terms)
    finished = []
    rewrites = 0
    while pending:
        coeff, factors = pending.pop()
        position = _first_redex(factors, treat_s_deriv_as_function)
        if position is None:
            finished.append((coeff, factors))
            continue
        rewrites += 1
        left, right = factors[position], factors[position + 1]
        head, tail = factors[:position], factors[position + 2:]
        if isinstance(right, Tensor):
            pending.append((coeff, head + (right, left) + tail))
        elif isinstance(right, CoordFn):
            pending.append((coeff, head + (right, left) + tail))
            pending.append((-sp.I * HBAR * coeff, head + (right.differentiated(left.var),) + tail))
        else:
            as_function = CoordFn('S', derivs=(right.var,))
            pending.append((coeff, head + (as_function, left) + tail))
            pending.append((-sp.I * HBAR * coeff, head + (CoordFn('S', derivs=(left.var, right.var)),) + tail))
    logger.debug(f"normalize: {rewrites} commutator rewrites")
    return OperatorExpr(finished)


def is_normal_form(expr):
    return all(_first_redex(factors, False) is None for _, factors in expr.terms)


def project_matrix_element(expr):
    """
    <Q|expr|S>/<Q|S> for a normal-ordered operator expression: dS/dq_x becomes
    the c-number dS/dq_x and D_x D_y becomes S_x S_y - i hbar S_xy.
    """
    terms = []
    for coeff, factors in expr.terms:
        if any(isinstance(f, Momentum) for f in factors):
            raise UnsupportedMomentum("Momenta must be substituted before projection")
        if _first_redex(factors, False) is not None:
            raise NotNormalForm("Projection requires a normal-ordered expression")
        derivs = [f for f in factors if isinstance(f, SDeriv)]
        functions = tuple((f, 1) for f in factors if f.is_function)
        if len(derivs) > 2:
            raise MoreThanTwoSDerivs(f"Term with {len(derivs)} dS/dq factors cannot be projected")
        if len(derivs) == 2:
            first, second = derivs[0].var, derivs[1].var
            terms.append((coeff, functions + ((CoordFn('S', derivs=(first,)), 1), (CoordFn('S', derivs=(second,)), 1))))
            terms.append((-sp.I * HBAR * coeff, functions + ((CoordFn('S', derivs=(first, second)), 1),)))
        elif len(derivs) == 1:
            terms.append((coeff, functions + ((CoordFn('S', derivs=(derivs[0].var,)), 1),)))
        else:
            terms.append((coeff, functions))
    return CNumberExpr(terms)


def split_real_imag(expr):
    """Return (Re, Im) with every function symbol taken as real; Im is the coefficient of i."""
    real_terms, imag_terms = [], []
    for coeff, monomial in expr.terms:
        re, im = coeff.as_real_imag()
        real_terms.append((re, monomial))
        imag_terms.append((im, monomial))
    return CNumberExpr(real_terms), CNumberExpr(imag_terms)


# ---------------------------------------------------------------------------
# Differentiation and substitution
# ---------------------------------------------------------------------------

def differentiate(expr, var):
    """Formal partial derivative of a c-number expression (product and chain rule)."""
    terms = []
    for coeff, monomial in expr.terms:
        dummies, free = _census(_Commutative.slots(monomial))
        if var.name in dummies:
            used = set(dummies) | set(free) | {var.name}
            monomial = _Commutative.rename(monomial, {var.name: _fresh_name(var.name, used)})
        for position, (factor, power) in enumerate(monomial):
            if not isinstance(factor, CoordFn):
                continue
            rest = monomial[:position] + monomial[position + 1:]
            reduced = ((factor, power - 1),) if power != 1 else ()
            terms.append((coeff * power, rest + reduced + ((factor.differentiated(var), 1),)))
    return CNumberExpr(terms)


@dataclass(frozen=True)
class Binding:
    """
    Replacement template for a function symbol. `params` name the template's
    free indices in the order of the symbol's own indices.
    """
    expr: CNumberExpr
    params: tuple = ()
    divergence_free: bool = False

    def instantiate(self, factor):
        template = self.expr
        if template.coefficient_only is not None:
            return CNumberExpr() if factor.derivs else template
        if len(self.params) != len(factor.indices):
            raise SubstitutionError(
                f"Binding for '{factor.name}' expects {len(self.params)} indices, got {len(factor.indices)}"
            )
        if factor.indices:
            template = _instantiate_indices(template, self.params, factor)
        for var in factor.derivs:
            template = differentiate(template, var)
        return template


def _instantiate_indices(template, params, factor):
    targets = {p.name: idx for p, idx in zip(params, factor.indices)}
    terms = []
    for coeff, monomial in template.terms:
        dummies, free = _census(_Commutative.slots(monomial))
        used = set(dummies) | set(free) | {i.name for i in factor.slots()}
        clash = {d: _fresh_name(d, used) for d in dummies if d in {i.name for i in factor.slots()} or d in targets}
        if clash:
            monomial = _Commutative.rename(monomial, clash)
        mapping = {p: idx.name for p, idx in targets.items()}
        flips = frozenset(p.name for p, idx in zip(params, factor.indices) if p.up != idx.up)
        terms.append((coeff, _Commutative.rename(monomial, mapping, flips)))
    return CNumberExpr(terms)


def _as_binding(value):
    if isinstance(value, Binding):
        return value
    if isinstance(value, CNumberExpr):
        return Binding(value)
    return Binding(CNumberExpr.constant(value))


def contract_identity(expr, name='A'):
    """Replace the tensor `name` by the Kronecker delta and contract it away."""
    shape = expr._shape
    terms = []
    for coeff, factors in expr.terms:
        factors = tuple(factors)
        while True:
            position = next(
                (n for n, item in enumerate(factors) if isinstance(_factor_of(item), Tensor) and _factor_of(item).name == name),
                None,
            )
            if position is None:
                break
            tensor = _factor_of(factors[position])
            if shape is _Commutative and factors[position][1] != 1:
                raise SubstitutionError(f"Cannot contract a power of tensor '{name}'")
            rest = factors[:position] + factors[position + 1:]
            x, y = tensor.indices
            if x.name == y.name:
                raise SubstitutionError(f"Trace of tensor '{name}' is not supported")
            rest_names = Counter(idx.name for idx in shape.slots(rest))
            if rest_names[y.name]:
                factors = shape.rename(rest, {y.name: x.name})
            elif rest_names[x.name]:
                factors = shape.rename(rest, {x.name: y.name})
            else:
                raise SubstitutionError(f"Tensor '{name}' with two free indices cannot be contracted")
        terms.append((coeff, factors))
    return type(expr)(terms)


def _factor_of(item):
    return item[0] if isinstance(item, tuple) else item


def substitute_functions(expr, bindings):
    """
    Replace function symbols in a c-number expression.

    `bindings` maps a symbol name to a Binding, a CNumberExpr, a constant, a
    replacement symbol name (str) or IDENTITY for tensors. Derivatives of a
    bound symbol are expanded by the chain rule; negative powers require the
    substituted expression to be a monomial.
    """
    for name, value in bindings.items():
        if value is IDENTITY:
            expr = contract_identity(expr, name)
    bindings = {n: v for n, v in bindings.items() if v is not IDENTITY}
    result = CNumberExpr()
    for coeff, monomial in expr.terms:
        piece = CNumberExpr.constant(coeff)
        for factor, power in monomial:
            value = bindings.get(factor.name) if isinstance(factor, CoordFn) else None
            if value is None:
                piece = piece * CNumberExpr.factor(factor, power)
                continue
            if isinstance(value, str):
                piece = piece * CNumberExpr.factor(CoordFn(value, factor.indices, factor.derivs), power)
                continue
            binding = _as_binding(value)
            if binding.divergence_free and any(d.name in {i.name for i in factor.indices} for d in factor.derivs):
                piece = CNumberExpr()
                break
            replacement = binding.instantiate(factor)
            if power < 0 and len(replacement) != 1:
                raise SubstitutionError(
                    f"Substituting '{factor.name}' into a negative power needs a monomial, got {replacement}"
                )
            piece = piece * replacement ** power
        result = result + piece
    return result


def substitute_operator_functions(expr, bindings):
    """Specialize an operator expression: constants, symbol renames and IDENTITY only."""
    for name, value in bindings.items():
        if value is IDENTITY:
            expr = contract_identity(expr, name)
    terms = []
    for coeff, factors in expr.terms:
        replaced = []
        for factor in factors:
            value = bindings.get(factor.name) if isinstance(factor, CoordFn) else None
            if value is None or value is IDENTITY:
                replaced.append(factor)
            elif isinstance(value, str):
                replaced.append(CoordFn(value, factor.indices, factor.derivs))
            elif isinstance(value, _Expr):
                raise SubstitutionError("Operator expressions accept constant or renaming bindings only")
            elif factor.derivs:
                coeff = 0
            else:
                coeff = coeff * exact_coefficient(value)
        if coeff != 0:
            terms.append((coeff, tuple(replaced)))
    return OperatorExpr(terms)


def substitute_constants(expr, mapping):
    """Substitute coefficient symbols, e.g. {MASS: MASS0}."""
    return expr.map_coefficients(lambda c: sp.expand(c.subs(mapping)))


def solve_linear(expr, target, name):
    """
    Solve expr == target for the function symbol `name`, which must occur
    linearly, undifferentiated and without indices. Returns None when the
    symbol does not occur that way.
    """
    linear, rest = [], []
    for coeff, monomial in expr.terms:
        hits = [(f, p) for f, p in monomial if isinstance(f, CoordFn) and f.name == name]
        if not hits:
            rest.append((coeff, monomial))
            continue
        factor, power = hits[0]
        if len(hits) > 1 or power != 1 or factor.derivs or factor.indices:
            return None
        linear.append((coeff, tuple(fp for fp in monomial if fp[0] != factor)))
    multiplier = CNumberExpr(linear)
    if len(multiplier) != 1:
        return None
    return (target - CNumberExpr(rest)) / multiplier


def expr_equal(left, right):
    if type(left) is not type(right):
        return False
    return (left - right).is_zero
