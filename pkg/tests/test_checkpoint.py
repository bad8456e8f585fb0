"""Test checkpoint."""

import json
import os
import shutil
import tempfile
import unittest

import numpy as np

from intentspace import checkpoint
from intentspace import model as im
from intentspace.errors import FormatError, PathError


def extended_model(form=im.BasisForm.FULL_MATRIX, scorer=im.ScorerKind.SHARED):
    m = im.init_model(['a', 'b'], 3, 4, form=form,
                      rank=2 if form == im.BasisForm.REDUCED_RANK else None, scorer=scorer,
                      seed=5)
    ids = im.append_intents(m, ['new'])
    if form != im.BasisForm.VECTOR_BIAS:
        im.add_expansions(m, ids)
        m.expansions.omega[ids[0]] = m.expansions.omega[ids[0]] + 1e-3 / 7
    return m


class TestCheckpoint(unittest.TestCase):
    """Test save and load."""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmpdir)
        self.path = os.path.join(self.tmpdir, 'model.json')

    def test_round_trip(self):
        for form in im.BasisForm:
            for scorer in im.ScorerKind:
                with self.subTest(form=form, scorer=scorer):
                    m = extended_model(form, scorer)
                    checkpoint.save(m, self.path)
                    loaded = checkpoint.load(self.path)
                    self.assertEqual(loaded.labels, m.labels)
                    self.assertEqual(loaded.seen_count, 2)
                    self.assertEqual(loaded.bases.form, form)
                    self.assertEqual(loaded.all_param_names(), m.all_param_names())
                    self.assertTrue(all(checkpoint.tensor_diff(m, loaded).values()))
                    self.assertTrue(all(checkpoint.tensor_diff(loaded, m).values()))
                    self.assertFalse(os.path.exists(self.path + '.part'))

    def test_baseline(self):
        rnn = im.init_baseline(['a', 'b'], 3, 4, seed=2)
        checkpoint.save(rnn, self.path)
        loaded = checkpoint.load(self.path)
        self.assertIsInstance(loaded, im.BaselineRnn)
        self.assertTrue(all(checkpoint.tensor_diff(rnn, loaded).values()))

    def test_predictions_survive(self):
        m = extended_model()
        checkpoint.save(m, self.path)
        sentence = np.random.default_rng(1).normal(size=(3, 3))
        np.testing.assert_array_equal(im.predict_distribution(checkpoint.load(self.path),
                                                              sentence),
                                      im.predict_distribution(m, sentence))

    def test_bad_files(self):
        good = checkpoint.to_dict(extended_model())
        for name, change in [
                ('format', {'format': 'other'}),
                ('version', {'version': 99}),
                ('kind', {'kind': 'mystery'}),
                ('mode', {'mode': 'hyperbolic'}),
                ('shape', {'params': [{'name': 'V', 'shape': [2, 2], 'data': [1.0]}]}),
                ('missing', {'labels': None}),
        ]:
            with self.subTest(name=name):
                doc = dict(good, **change)
                with open(self.path, 'w', encoding='utf-8') as f:
                    json.dump(doc, f)
                with self.assertRaises(FormatError):
                    checkpoint.load(self.path)

    def test_not_json(self):
        with open(self.path, 'w', encoding='utf-8') as f:
            f.write('{not json')
        with self.assertRaises(FormatError):
            checkpoint.load(self.path)

    def test_missing(self):
        with self.assertRaises(PathError):
            checkpoint.load(os.path.join(self.tmpdir, 'nope.json'))


class TestTensorDiff(unittest.TestCase):
    """Test tensor_diff."""

    def test_diff(self):
        m = im.init_model(['a', 'b'], 2, 3)
        other = m.copy()
        im.append_intents(other, ['new'])
        self.assertTrue(all(checkpoint.tensor_diff(m, other).values()))
        other.coords.beta[0, 0] += 1e-12
        other.V = other.V * 2.0
        diff = checkpoint.tensor_diff(m, other)
        self.assertFalse(diff['beta'])
        self.assertFalse(diff['V'])
        self.assertTrue(diff['bases'])

    def test_missing_tensor(self):
        m = extended_model()
        other = im.init_model(['a', 'b'], 3, 4, seed=5)
        self.assertFalse(checkpoint.tensor_diff(m, other)['omega.2'])
