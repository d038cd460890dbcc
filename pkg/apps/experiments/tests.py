import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings
from rest_framework.test import APIClient

from .models import ExperimentRun
from .serializers import ExperimentConfigSerializer
from .services.artifacts import to_jsonable
from .services.builders import build_ensemble_config


SMALL_ENSEMBLE = {
    'command': 'ensemble',
    'h': 0.5,
    'n_samples': 20,
    'moments': [1, 2],
    'model': {'variant': 'alloy', 'spacing': 0.5, 'charge': {'family': 'uniform', 'low': 0.0, 'high': 0.005}},
}


class LabCommandMixin:

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def write_config(self, document, name='config.json') -> Path:
        path = self.root / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return path

    def run_lab(self, document, out='out', **overrides):
        path = self.write_config(document)
        stdout = StringIO()
        call_command('lab', document['command'], config=str(path), out=str(self.root / out), stdout=stdout, **overrides)
        return json.loads((self.root / out / 'report.json').read_text(encoding='utf-8'))


# =============================================================================
# CONFIG VALIDATION
# =============================================================================

class ExperimentConfigSerializerTests(TestCase):

    def test_minimal_solve_config(self):
        serializer = ExperimentConfigSerializer(data={'command': 'solve', 'h': 0.5})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data['seed'], 0)

    def test_unknown_top_level_key(self):
        serializer = ExperimentConfigSerializer(data={'command': 'solve', 'h': 0.5, 'grid': 3})
        self.assertFalse(serializer.is_valid())
        self.assertIn('grid', serializer.errors)

    def test_unknown_nested_key(self):
        data = {'command': 'solve', 'h': 0.5, 'problem': {'p': 2.0, 'exponent': 3}}
        serializer = ExperimentConfigSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn('exponent', serializer.errors['problem'])

    def test_exponent_must_exceed_one(self):
        serializer = ExperimentConfigSerializer(data={'command': 'solve', 'h': 0.5, 'problem': {'p': 0.5}})
        self.assertFalse(serializer.is_valid())
        self.assertIn('p', serializer.errors['problem'])

    def test_command_fields_required(self):
        serializer = ExperimentConfigSerializer(data={'command': 'clt', 'h': 0.5, 'model': SMALL_ENSEMBLE['model']})
        self.assertFalse(serializer.is_valid())
        self.assertIn('k', serializer.errors)
        self.assertIn('trials', serializer.errors)

    def test_base_measure_outside_ball(self):
        data = {
            'command': 'borel-cantelli',
            'c_tilde': 0.3,
            'k_max': 2,
            'model': {
                'variant': 'series',
                'base_measures': [[{'location': [0.0, 0.0, 1.5], 'weight': 1.0}]],
                'coefficients': [{'family': 'deterministic', 'value': 0.1}],
            },
        }
        serializer = ExperimentConfigSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn('model', serializer.errors)

    def test_exceedance_check_needs_series(self):
        data = {'command': 'borel-cantelli', 'model': SMALL_ENSEMBLE['model'], 'c_tilde': 0.3, 'k_max': 4}
        serializer = ExperimentConfigSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn('model', serializer.errors)

    def test_invalid_law(self):
        model = {'variant': 'alloy', 'spacing': 0.5, 'charge': {'family': 'uniform', 'low': 1.0, 'high': 0.0}}
        serializer = ExperimentConfigSerializer(data={'command': 'ensemble', 'h': 0.5, 'model': model})
        self.assertFalse(serializer.is_valid())
        self.assertIn('model', serializer.errors)

    def test_series_builders(self):
        base = [[{'location': [0.1, 0.0, 0.0], 'weight': 1.0}]]
        data = {
            'command': 'borel-cantelli',
            'model': {'variant': 'series', 'builder': 'geometric_exceedance', 'base_measures': base, 'value': 0.4, 'terms': 16},
            'c_tilde': 0.3,
            'k_max': 8,
        }
        serializer = ExperimentConfigSerializer(data=data)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = build_ensemble_config(serializer.validated_data)
        self.assertTrue(cfg.model.cumulative)
        self.assertEqual(cfg.model.terms, 16)

    def test_defaults_resolve(self):
        serializer = ExperimentConfigSerializer(data={'command': 'solve', 'h': 0.25})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = build_ensemble_config(serializer.validated_data)
        self.assertEqual(cfg.domain.dim, 3)
        self.assertEqual(cfg.f.sup_norm, 1.0)
        self.assertAlmostEqual(cfg.spec.K, 0.4)

    def test_jsonable_drops_non_finite(self):
        self.assertEqual(to_jsonable({'a': float('inf'), 'b': (1, 2.5)}), {'a': None, 'b': [1, 2.5]})


# =============================================================================
# LAB COMMAND
# =============================================================================

class LabCommandTests(LabCommandMixin, TestCase):

    def test_solve_with_zero_source(self):
        document = {'command': 'solve', 'h': 0.5, 'problem': {'g': {'kind': 'constant', 'value': 0.0}}}
        report = self.run_lab(document)
        self.assertEqual(report['report']['sup_norm'], 0.0)
        self.assertTrue(report['pass'])
        self.assertEqual(report['config']['command'], 'solve')
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.PASSED)
        self.assertEqual(run.exit_code, 0)
        field = pd.read_csv(self.root / 'out' / 'field.csv')
        self.assertEqual(list(field.columns), ['x1', 'x2', 'x3', 'u'])

    def test_solve_with_explicit_measure(self):
        document = {
            'command': 'solve',
            'h': 0.5,
            'measure': [{'location': [0.0, 0.0, 0.0], 'weight': 0.1}],
        }
        report = self.run_lab(document)
        self.assertAlmostEqual(report['report']['tau'], 0.2)
        self.assertLessEqual(report['report']['sup_norm'], report['report']['norm_bound'])

    def test_atom_outside_ball_exits_two(self):
        document = {'command': 'solve', 'h': 0.5, 'measure': [{'location': [2.0, 0.0, 0.0], 'weight': 0.1}]}
        path = self.write_config(document)
        with self.assertRaises(CommandError) as caught:
            call_command('lab', 'solve', config=str(path), out=str(self.root / 'outside'))
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('measure', str(caught.exception))

    def test_malformed_exponent_exits_two(self):
        path = self.write_config({'command': 'solve', 'h': 0.5, 'problem': {'p': 0.5}})
        with self.assertRaises(CommandError) as caught:
            call_command('lab', 'solve', config=str(path), out=str(self.root / 'bad'))
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('problem.p', str(caught.exception))
        self.assertFalse((self.root / 'bad' / 'report.json').exists())

    def test_missing_config_exits_two(self):
        with self.assertRaises(CommandError) as caught:
            call_command('lab', 'solve', config=str(self.root / 'absent.json'))
        self.assertEqual(caught.exception.returncode, 2)

    def test_command_mismatch_exits_two(self):
        path = self.write_config({'command': 'solve', 'h': 0.5})
        with self.assertRaises(CommandError) as caught:
            call_command('lab', 'ensemble', config=str(path))
        self.assertEqual(caught.exception.returncode, 2)

    def test_green_check(self):
        report = self.run_lab({'command': 'green-check', 'h': 1.0 / 12})
        self.assertLessEqual(report['report']['sup_relative_error'], 0.03)
        self.assertTrue(report['verdicts']['torsion_oracle'])

    def test_failed_verdict_exits_one(self):
        path = self.write_config({'command': 'green-check', 'h': 0.5, 'tolerance': 1e-9})
        with self.assertRaises(CommandError) as caught:
            call_command('lab', 'green-check', config=str(path), out=str(self.root / 'strict'))
        self.assertEqual(caught.exception.returncode, 1)
        report = json.loads((self.root / 'strict' / 'report.json').read_text(encoding='utf-8'))
        self.assertFalse(report['pass'])
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.Status.FAILED)

    def test_hypothesis_violation_exits_three(self):
        document = dict(SMALL_ENSEMBLE)
        document['model'] = {'variant': 'alloy', 'spacing': 2.0, 'charge': {'family': 'deterministic', 'value': 0.75}}
        path = self.write_config(document)
        with self.assertRaises(CommandError) as caught:
            call_command('lab', 'ensemble', config=str(path), out=str(self.root / 'violated'))
        self.assertEqual(caught.exception.returncode, 3)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.ERROR)
        self.assertEqual(run.exit_code, 3)

    def test_ensemble_artifacts(self):
        report = self.run_lab(SMALL_ENSEMBLE)
        self.assertEqual(report['report']['admissible_probability']['p_hat'], 1.0)
        self.assertEqual(len(report['report']['moments']), 2)
        samples = pd.read_csv(self.root / 'out' / 'samples.csv')
        self.assertEqual(len(samples), 20)

    def test_ensemble_without_moments_still_checks_norm_bound(self):
        document = {key: value for key, value in SMALL_ENSEMBLE.items() if key != 'moments'}
        report = self.run_lab(document)
        self.assertEqual(report['verdicts'], {'norm_bound': True})
        self.assertEqual(report['report']['norm_bound_violations'], [])
        self.assertIn('norm_bound', pd.read_csv(self.root / 'out' / 'samples.csv').columns)

    def test_shipped_clt_config_passes(self):
        path = Path(settings.BASE_DIR) / 'experiments' / 'clt_alloy.json'
        out = self.root / 'clt'
        call_command('lab', 'clt', config=str(path), out=str(out), stdout=StringIO())
        report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
        self.assertEqual(report['config']['estimator'], 'pooled')
        self.assertEqual(report['verdicts'], {'ks': True, 'self_test': True})
        self.assertTrue(report['pass'])

    def test_seed_override_keeps_bound_verdicts(self):
        first = self.run_lab(SMALL_ENSEMBLE, out='seed1', seed=1)
        second = self.run_lab(SMALL_ENSEMBLE, out='seed2', seed=2)
        self.assertEqual(first['verdicts'], second['verdicts'])
        self.assertEqual(first['config']['seed'], 1)
        self.assertNotEqual(
            (self.root / 'seed1' / 'samples.csv').read_text(),
            (self.root / 'seed2' / 'samples.csv').read_text(),
        )

    def test_overrides_reach_resolved_config(self):
        report = self.run_lab(SMALL_ENSEMBLE, n_samples=5, threads=2, h=0.5)
        self.assertEqual(report['config']['n_samples'], 5)
        self.assertEqual(report['config']['threads'], 2)

    def test_rerun_is_bit_identical(self):
        self.run_lab(SMALL_ENSEMBLE, out='a')
        self.run_lab(SMALL_ENSEMBLE, out='b', threads=3)
        self.assertEqual(
            (self.root / 'a' / 'samples.csv').read_bytes(),
            (self.root / 'b' / 'samples.csv').read_bytes(),
        )

    def test_borel_cantelli_command(self):
        document = {
            'command': 'borel-cantelli',
            'n_samples': 200,
            'model': {
                'variant': 'series',
                'builder': 'geometric_exceedance',
                'base_measures': [[{'location': [0.1, 0.0, 0.0], 'weight': 1.0}]],
                'value': 0.4,
                'terms': 20,
            },
            'c_tilde': 0.3,
            'k_max': 10,
        }
        report = self.run_lab(document)
        self.assertTrue(report['verdicts']['tail_admissible'])
        partial = pd.read_csv(self.root / 'out' / 'partial_sums.csv')
        self.assertEqual(list(partial['k']), list(range(1, 11)))

    @override_settings(LAB_RECORD_RUNS=False)
    def test_recording_can_be_disabled(self):
        self.run_lab({'command': 'solve', 'h': 0.5})
        self.assertFalse(ExperimentRun.objects.exists())


# =============================================================================
# API
# =============================================================================

class ExperimentRunApiTests(TestCase):

    def setUp(self):
        self.client = APIClient()
        self.passed = ExperimentRun.objects.create(command='solve', status='passed', seed=1, config={'h': 0.5})
        self.failed = ExperimentRun.objects.create(command='clt', status='failed', seed=2, exit_code=1)

    def test_list_runs(self):
        response = self.client.get('/api/runs/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(len(response.json()), 2)

    def test_filter_by_status(self):
        response = self.client.get('/api/runs/', {'status': 'failed'})
        self.assertEqual([run['id'] for run in response.json()], [self.failed.pk])

    def test_filter_by_command(self):
        response = self.client.get('/api/runs/', {'command': 'solve'})
        self.assertEqual([run['id'] for run in response.json()], [self.passed.pk])

    def test_run_detail(self):
        response = self.client.get(f'/api/runs/{self.passed.pk}/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['config'], {'h': 0.5})

    def test_missing_run(self):
        self.assertEqual(self.client.get('/api/runs/9999/').status_code, 404)

    def test_validate_config(self):
        response = self.client.post('/api/configs/validate/', SMALL_ENSEMBLE, format='json')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['config']['model']['variant'], 'alloy')

    def test_validate_rejects_unknown_keys(self):
        response = self.client.post('/api/configs/validate/', {**SMALL_ENSEMBLE, 'colour': 'red'}, format='json')
        self.assertEqual(response.status_code, 400)
        self.assertIn('colour', response.json())
