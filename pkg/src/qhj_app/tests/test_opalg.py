# path: src/qhj_app/tests/test_opalg.py
import sympy as sp
from django.test import SimpleTestCase
from hypothesis import assume, given, settings as hypothesis_settings, strategies as st

from qhj_app.grammar import parse_cnumber_expr, parse_operator_expr
from qhj_app.opalg import (
    HBAR,
    IDENTITY,
    Binding,
    CNumberExpr,
    CoordFn,
    HamiltonianSpec,
    Index,
    InexactCoefficient,
    MoreThanTwoSDerivs,
    NotNormalForm,
    OpAlgError,
    Regime,
    UnsupportedMomentum,
    assert_exact,
    build_weyl_hamiltonian,
    contract_identity,
    differentiate,
    exact_coefficient,
    expr_equal,
    is_normal_form,
    normalize,
    project_matrix_element,
    solve_linear,
    split_real_imag,
    substitute_functions,
    substitute_momenta,
)

OPERATOR_WORDS = ['a', 'V', 'R', 'd[a]/dq_j', 'dS/dq_i', 'dS/dt']
S_DERIVATIVES = {'dS/dq_i': '/dq_i', 'dS/dt': '/dt'}
CNUMBER_WORDS = ['a', 'a**2', 'a**-1', 'R', 'V', 'd[a]/dq_j', 'd[R]/dq_j', 'dS/dq_k', 'hbar*d[a]/dt']
operator_words = st.lists(st.sampled_from(OPERATOR_WORDS), min_size=1, max_size=5, unique=True)


def commuted(words, position):
    """Text of the product with the pair at `position` rewritten by D F = F D - i hbar dF."""
    derivative, function = words[position], words[position + 1]
    suffix = S_DERIVATIVES[derivative]
    d_function = function + suffix if function.startswith('d[') else f'd[{function}]{suffix}'
    pair = f'({function}*{derivative} - i*hbar*{d_function})'
    return '*'.join(words[:position] + [pair] + words[position + 2:])


class NormalizeTests(SimpleTestCase):

    def test_moves_function_left_of_space_derivative(self):
        produced = normalize(parse_operator_expr('dS/dq_i*a'))
        self.assertEqual(produced, parse_operator_expr('a*dS/dq_i - i*hbar*d[a]/dq_i'))

    def test_moves_function_left_of_time_derivative(self):
        produced = normalize(parse_operator_expr('dS/dt*a'))
        self.assertEqual(produced, parse_operator_expr('a*dS/dt - i*hbar*d[a]/dt'))

    def test_normal_form_is_left_alone(self):
        expr = parse_operator_expr('a*dS/dq_i + c')
        self.assertTrue(is_normal_form(expr))
        self.assertEqual(normalize(expr), expr)

    def test_two_derivatives_around_function(self):
        produced = normalize(parse_operator_expr('dS/dq_i*a*dS/dq_i'))
        expected = parse_operator_expr('a*dS/dq_i*dS/dq_i - i*hbar*d[a]/dq_i*dS/dq_i')
        self.assertEqual(produced, expected)

    def test_s_derivative_treated_as_function(self):
        produced = normalize(parse_operator_expr('dS/dq_i*dS/dq_j'), treat_s_deriv_as_function=True)
        self.assertTrue(expr_equal(produced, parse_operator_expr('d[S]/dq_j*dS/dq_i - i*hbar*d[S]/dq_i/dq_j')))

    @given(operator_words)
    @hypothesis_settings(max_examples=60, deadline=None)
    def test_normalize_is_idempotent(self, words):
        expr = parse_operator_expr('*'.join(words))
        once = normalize(expr)
        self.assertTrue(is_normal_form(once))
        self.assertEqual(normalize(once), once)

    @given(operator_words, st.integers(min_value=0, max_value=4))
    @hypothesis_settings(max_examples=60, deadline=None)
    def test_rewrite_order_does_not_matter(self, words, choice):
        redexes = [
            n for n in range(len(words) - 1)
            if words[n] in S_DERIVATIVES and words[n + 1] not in S_DERIVATIVES
        ]
        assume(redexes)
        position = redexes[choice % len(redexes)]
        expected = normalize(parse_operator_expr('*'.join(words)))
        self.assertEqual(normalize(parse_operator_expr(commuted(words, position))), expected)


class ProjectionTests(SimpleTestCase):

    def test_single_derivative_becomes_cnumber(self):
        produced = project_matrix_element(parse_operator_expr('a*dS/dq_i'))
        self.assertEqual(produced, parse_cnumber_expr('a*dS/dq_i'))

    def test_two_derivatives_pick_up_second_derivative(self):
        produced = project_matrix_element(parse_operator_expr('dS/dq_i*dS/dq_j'))
        self.assertEqual(produced, parse_cnumber_expr('dS/dq_i*dS/dq_j - i*hbar*d[S]/dq_i/dq_j'))

    def test_more_than_two_derivatives_rejected(self):
        with self.assertRaises(MoreThanTwoSDerivs):
            project_matrix_element(parse_operator_expr('dS/dq_i*dS/dq_j*dS/dq_k'))

    def test_requires_normal_form(self):
        with self.assertRaises(NotNormalForm):
            project_matrix_element(parse_operator_expr('dS/dq_i*a'))

    def test_requires_substituted_momenta(self):
        with self.assertRaises(UnsupportedMomentum):
            project_matrix_element(parse_operator_expr('p_i*p_i'))

    @given(operator_words, operator_words, st.integers(-3, 3), st.integers(1, 4))
    @hypothesis_settings(max_examples=60, deadline=None)
    def test_projection_is_linear(self, left, right, numerator, denominator):
        first = normalize(parse_operator_expr('*'.join(left)))
        second = normalize(parse_operator_expr('*'.join(right)))
        weight = sp.Rational(numerator, denominator)
        combined = project_matrix_element(first + second.scale(weight))
        separate = project_matrix_element(first) + project_matrix_element(second).scale(weight)
        self.assertEqual(combined, separate)


class HamiltonianTests(SimpleTestCase):

    def test_identity_metric_collapses_to_kinetic_term(self):
        hamiltonian = build_weyl_hamiltonian(HamiltonianSpec(a=1, A=IDENTITY, b=0, c='V'))
        self.assertEqual(hamiltonian, parse_operator_expr('p_i*p_i/(2*m) + V'))

    def test_momentum_substitution(self):
        produced = substitute_momenta(parse_operator_expr('p_i*a*p_i'), Regime.NONRELATIVISTIC, time_weight=1)
        self.assertEqual(produced, parse_operator_expr('dS/dq_i*a*dS/dq_i + dS/dt'))

    def test_relativistic_substitution_flips_sign(self):
        produced = substitute_momenta(parse_operator_expr('b_mu*p^mu'), Regime.RELATIVISTIC)
        self.assertEqual(produced, parse_operator_expr('-b_mu*dS/dq^mu'))

    def test_cubic_momentum_rejected(self):
        with self.assertRaises(UnsupportedMomentum):
            substitute_momenta(parse_operator_expr('p_i*p_j*p_k'), Regime.NONRELATIVISTIC)

    def test_wrong_regime_index_rejected(self):
        with self.assertRaises(UnsupportedMomentum):
            substitute_momenta(parse_operator_expr('p_i*p_i'), Regime.RELATIVISTIC)

    def test_relativistic_spec_needs_identity_metric(self):
        with self.assertRaises(OpAlgError):
            HamiltonianSpec(regime=Regime.RELATIVISTIC, A='A')


class CNumberTests(SimpleTestCase):

    def test_split_real_imag(self):
        real, imag = split_real_imag(parse_cnumber_expr('V + i*hbar*d[R]/dt'))
        self.assertEqual(real, parse_cnumber_expr('V'))
        self.assertEqual(imag, parse_cnumber_expr('hbar*d[R]/dt'))

    def test_split_reassembles(self):
        expr = parse_cnumber_expr('a*(dS/dq_i*dS/dq_i - i*hbar*d[S]/dq_i/dq_i)/m + 2*c - i*hbar*d[a]/dt')
        real, imag = split_real_imag(expr)
        self.assertEqual(real + imag.scale(sp.I), expr)

    @given(st.lists(
        st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.sampled_from(CNUMBER_WORDS)),
        min_size=1, max_size=4,
    ))
    @hypothesis_settings(max_examples=60, deadline=None)
    def test_split_reassembles_any_sum(self, pieces):
        expr = CNumberExpr()
        for re, im, word in pieces:
            expr = expr + parse_cnumber_expr(word).scale(re + im * sp.I)
        real, imag = split_real_imag(expr)
        self.assertEqual(real + imag.scale(sp.I), expr)
        self.assertTrue(all(coeff.is_real for coeff, _ in real.terms + imag.terms))
        self.assertEqual(split_real_imag(expr.scale(sp.I)), (-imag, real))

    @given(st.lists(st.sampled_from(CNUMBER_WORDS), min_size=1, max_size=4, unique=True))
    @hypothesis_settings(max_examples=60, deadline=None)
    def test_differentiation_commutes_with_substitution(self, words):
        expr = parse_cnumber_expr('*'.join(words))
        binding = {'a': parse_cnumber_expr('R**2*V')}
        i = Index('i')
        self.assertEqual(
            substitute_functions(differentiate(expr, i), binding),
            differentiate(substitute_functions(expr, binding), i),
        )

    def test_dummy_indices_are_canonical(self):
        self.assertEqual(parse_cnumber_expr('dS/dq_i*dS/dq_i'), parse_cnumber_expr('dS/dq_j*dS/dq_j'))

    def test_product_rule(self):
        produced = differentiate(parse_cnumber_expr('R**2*V'), Index('i'))
        self.assertEqual(produced, parse_cnumber_expr('2*R*d[R]/dq_i*V + R**2*d[V]/dq_i'))

    def test_contract_identity(self):
        produced = contract_identity(parse_cnumber_expr('A_i_j*dS/dq_i*dS/dq_j'))
        self.assertEqual(produced, parse_cnumber_expr('dS/dq_i*dS/dq_i'))

    def test_laplacian_of_square_prefactor(self):
        expr = parse_cnumber_expr('-1/8*hbar**2*d[a]/dq_i/dq_i/a/m')
        produced = substitute_functions(expr, {'a': parse_cnumber_expr('R**2')})
        expected = parse_cnumber_expr('-1/4*hbar**2*d[R]/dq_i/dq_i/R/m - 1/4*hbar**2*d[R]/dq_i*d[R]/dq_i/R**2/m')
        self.assertEqual(produced, expected)

    def test_classical_limit_drops_hbar(self):
        real = parse_cnumber_expr('dS/dt + dS/dq_i*dS/dq_i/(2*m) - 1/8*hbar**2*d[a]/dq_i/dq_i/a/m + b_i*dS/dq_i/a + c/a')
        produced = substitute_functions(real, {'a': 1, 'b': 0, 'c': 0})
        self.assertEqual(produced, parse_cnumber_expr('dS/dt + dS/dq_i*dS/dq_i/(2*m)'))
        self.assertFalse(any(coeff.has(HBAR) for coeff, _ in produced.terms))

    def test_divergence_free_binding(self):
        i = Index('i')
        binding = Binding(parse_cnumber_expr('R**2*Vvec_i'), params=(i,), divergence_free=True)
        produced = substitute_functions(parse_cnumber_expr('d[b_i]/dq_i + b_i*dS/dq_i'), {'b': binding})
        self.assertEqual(produced, parse_cnumber_expr('R**2*Vvec_i*dS/dq_i'))

    def test_renaming_binding(self):
        produced = substitute_functions(parse_cnumber_expr('d[c]/dq_i'), {'c': 'V'})
        self.assertEqual(produced, CNumberExpr.factor(CoordFn('V', derivs=(Index('i'),))))

    def test_solve_linear(self):
        solved = solve_linear(parse_cnumber_expr('c/R**2 + V'), parse_cnumber_expr('V - 1/2*m0'), 'c')
        self.assertEqual(solved, parse_cnumber_expr('-1/2*m0*R**2'))

    def test_solve_linear_refuses_nonlinear_symbol(self):
        self.assertIsNone(solve_linear(parse_cnumber_expr('c**2 + V'), parse_cnumber_expr('V'), 'c'))

    def test_expr_equal(self):
        self.assertTrue(expr_equal(parse_cnumber_expr('R + V'), parse_cnumber_expr('V + R')))
        self.assertFalse(expr_equal(parse_cnumber_expr('R + V'), parse_cnumber_expr('V + R + 1')))
        self.assertFalse(expr_equal(parse_cnumber_expr('V'), parse_operator_expr('V')))


class ExactnessTests(SimpleTestCase):

    def test_float_coefficient_rejected(self):
        with self.assertRaises(InexactCoefficient):
            exact_coefficient(0.5)
        with self.assertRaises(InexactCoefficient):
            parse_cnumber_expr('R').scale(sp.Float(0.25))

    def test_parsed_expressions_are_exact(self):
        self.assertTrue(assert_exact(parse_cnumber_expr('-1/8*hbar**2*d[R**2]/dq_i/dq_i/R**2/m')))

    def test_rational_arithmetic_stays_exact(self):
        expr = parse_cnumber_expr('R/3') + parse_cnumber_expr('R/6')
        self.assertEqual(expr, parse_cnumber_expr('R/2'))
