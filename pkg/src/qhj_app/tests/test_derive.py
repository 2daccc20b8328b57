# path: src/qhj_app/tests/test_derive.py
import hashlib
import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from qhj_app.derive import (
    GOLDENS_DIR,
    PIPELINES,
    GoldenFileError,
    UnknownPipeline,
    derive_nonrel_general,
    golden_check,
    load_goldens,
)
from qhj_app.grammar import parse_cnumber_expr
from qhj_app.opalg import HBAR, IDENTITY, HamiltonianSpec, expr_equal


class GoldenFileTests(SimpleTestCase):

    def test_manifest_matches_golden_file(self):
        digest = hashlib.sha256((GOLDENS_DIR / 'goldens.json').read_bytes()).hexdigest()
        expected = (GOLDENS_DIR / 'goldens.sha256').read_text(encoding='utf-8').split()[0]
        self.assertEqual(digest, expected)
        self.assertEqual(load_goldens().digest, expected)

    def test_tampered_golden_file_rejected(self):
        payload = json.loads((GOLDENS_DIR / 'goldens.json').read_text(encoding='utf-8'))
        payload['entries'][0]['text'] = 'c'
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'goldens.json'
            path.write_text(json.dumps(payload), encoding='utf-8')
            with self.assertRaises(GoldenFileError):
                load_goldens(path, GOLDENS_DIR / 'goldens.sha256')

    def test_every_entry_names_a_pipeline(self):
        goldens = load_goldens()
        self.assertTrue(all(entry.pipeline in PIPELINES for entry in goldens.entries.values()))


class PipelineTests(SimpleTestCase):

    def assertPipelinePasses(self, report):
        failed = [step.to_dict() for step in report.steps if not step.matched]
        self.assertEqual(failed, [])
        self.assertTrue(report.passed)

    def test_nonrel_general(self):
        self.assertPipelinePasses(golden_check('nonrel-general'))

    def test_nonrel_general_specialized(self):
        spec = HamiltonianSpec(a=1, A=IDENTITY, b=0, c='V')
        report = derive_nonrel_general(spec)
        self.assertPipelinePasses(report)
        self.assertEqual(report.spec['A'], 'identity')

    def test_nonrel_bohm(self):
        report = golden_check('nonrel-bohm')
        self.assertPipelinePasses(report)
        labels = {step.label for step in report.steps}
        self.assertTrue({'general-qhj', 'bohm-continuity', 'general-qhj-qpqk', 'bohm-offset'} <= labels)

    def test_relativistic(self):
        self.assertPipelinePasses(golden_check('relativistic'))

    def test_unknown_pipeline(self):
        with self.assertRaises(UnknownPipeline):
            golden_check('nosuch')

    def test_classical_limit_has_no_hbar(self):
        report = golden_check('nonrel-general')
        for label in ('classical-hj', 'classical-continuity'):
            produced = report.produced(label)
            self.assertFalse(any(coeff.has(HBAR) for coeff, _ in produced.terms), label)

    def test_constant_amplitude_gives_mass_shell(self):
        report = golden_check('relativistic')
        self.assertEqual(
            report.produced('mass-shell'),
            parse_cnumber_expr('dS/dq^mu*dS/dq_mu - m0**2*c_light**2'),
        )


class DerivationNoteTests(SimpleTestCase):

    def test_c_identification_is_resolved(self):
        report = golden_check('relativistic')
        notes = {note.topic: note for note in report.notes}
        self.assertIn('c-identification', notes)
        solved = notes['c-identification'].expressions['solved-from-derived-real-part']
        self.assertEqual(parse_cnumber_expr(solved), parse_cnumber_expr('-1/2*m0*c_light**2*R**2'))
        self.assertIn('printed-kg-c-identification', notes)

    def test_printed_relativistic_forms_are_flagged(self):
        topics = {note.topic for note in golden_check('relativistic').notes}
        self.assertTrue({'printed-rel-cnumber', 'printed-rel-real', 'printed-rel-imag', 'b-normalization'} <= topics)

    def test_half_sum_prefactor_is_flagged(self):
        topics = {note.topic for note in golden_check('nonrel-bohm').notes}
        self.assertIn('printed-half-qp-qk-laplacian', topics)

    def test_printed_half_sum_is_the_full_sum(self):
        goldens = load_goldens()
        half = goldens.expr('half-qp-qk-laplacian')
        self.assertTrue(expr_equal(goldens.printed_expr('half-qp-qk-laplacian'), half.scale(2)))
        self.assertIn('QP + QK', goldens.entry('half-qp-qk-laplacian').note)

    def test_reports_are_deterministic(self):
        first = golden_check('nonrel-bohm')
        second = golden_check('nonrel-bohm')
        self.assertEqual(first.to_dict(), second.to_dict())
        self.assertEqual(first.to_text(), second.to_text())
