# path: src/qhj_app/tests/test_grammar.py
from django.test import SimpleTestCase

from qhj_app.derive import load_goldens
from qhj_app.grammar import (
    CNUMBER,
    GrammarError,
    UnknownSymbolError,
    parse,
    parse_cnumber_expr,
    parse_operator_expr,
    print_expr,
    tokenize,
)
from qhj_app.opalg import CNumberExpr, OperatorExpr


class ParseTests(SimpleTestCase):

    def test_modes_build_matching_types(self):
        self.assertIsInstance(parse_operator_expr('a*dS/dq_i'), OperatorExpr)
        self.assertIsInstance(parse_cnumber_expr('a*dS/dq_i'), CNumberExpr)

    def test_argument_lists_are_ignored(self):
        self.assertEqual(parse_cnumber_expr('a(q,t)*V(q,t)'), parse_cnumber_expr('a*V'))

    def test_definitions_expand(self):
        definitions = {'QP': '-1/2*hbar**2*d[R]/dq_i/dq_i/R/m'}
        self.assertEqual(
            parse_cnumber_expr('2*QP', definitions),
            parse_cnumber_expr('-hbar**2*d[R]/dq_i/dq_i/R/m'),
        )

    def test_cnumber_derivative_of_product(self):
        self.assertEqual(parse_cnumber_expr('d[R*V]/dq_i'), parse_cnumber_expr('d[R]/dq_i*V + R*d[V]/dq_i'))

    def test_imaginary_unit(self):
        expr = parse_cnumber_expr('i*hbar*R')
        self.assertEqual(print_expr(expr), 'i*hbar*R')

    def test_tokens_keep_positions(self):
        tokens = tokenize('dS/dq_i * a')
        self.assertEqual([(t.kind, t.position) for t in tokens], [('SDERIV', 0), ('OP', 8), ('NAME', 10)])


class GrammarErrorTests(SimpleTestCase):

    def test_unexpected_character(self):
        with self.assertRaises(GrammarError) as ctx:
            parse_cnumber_expr('R + $')
        self.assertEqual(ctx.exception.position, 4)

    def test_unknown_symbol(self):
        with self.assertRaises(UnknownSymbolError) as ctx:
            parse_cnumber_expr('R + foo')
        self.assertEqual(ctx.exception.position, 4)

    def test_unexpected_end(self):
        with self.assertRaises(GrammarError) as ctx:
            parse_cnumber_expr('R +')
        self.assertEqual(ctx.exception.position, 3)

    def test_momentum_not_a_cnumber(self):
        with self.assertRaises(GrammarError):
            parse_cnumber_expr('p_i*p_i')

    def test_operator_derivative_needs_single_symbol(self):
        with self.assertRaises(GrammarError):
            parse_operator_expr('d[a*R]/dq_i')

    def test_wrong_index_count(self):
        with self.assertRaises(GrammarError):
            parse_cnumber_expr('A_i')

    def test_non_integer_exponent(self):
        with self.assertRaises(GrammarError):
            parse_cnumber_expr('R**m')


class PrintTests(SimpleTestCase):

    def test_goldens_reparse_to_same_expression(self):
        goldens = load_goldens()
        for label, entry in goldens.entries.items():
            for text in filter(None, (entry.text, entry.lhs, entry.printed)):
                with self.subTest(label=label, text=text):
                    expr = parse(text, entry.mode, goldens.definitions if entry.mode == CNUMBER else None)
                    self.assertEqual(parse(print_expr(expr), entry.mode), expr)

    def test_zero(self):
        self.assertEqual(print_expr(parse_cnumber_expr('R - R')), '0')
