"""Test unseen."""

import csv
import dataclasses
import math
import os
import shutil
import tempfile
import unittest

import numpy as np

from intentspace import checkpoint, config, evaluation, training, unseen
from intentspace import model as im
from intentspace.data import EncodedExample, LabeledDataset, make_example
from intentspace.errors import ConfigError, EmptyInputError, EvalError, RangeError

NEW = 'BookRestaurant'


def zero_model(labels=('a', 'b', 'c'), hidden=3, inputs=2):
    m = im.init_model(list(labels), inputs, hidden, mode=im.SpaceMode.SIMPLEX)
    m.V = np.zeros_like(m.V)
    m.b = np.zeros_like(m.b)
    m.bases.tensors = np.zeros_like(m.bases.tensors)
    m.scorer.a = np.zeros_like(m.scorer.a)
    m.scorer.d = np.zeros_like(m.scorer.d)
    return m


class TestAddIntents(unittest.TestCase):
    """Test add_intents on the bundled toy corpus."""

    @classmethod
    def setUpClass(cls):
        cfg = config.load_config(config.TOY_CONFIG)
        cfg.training = dataclasses.replace(cfg.training, max_epochs_seen=20,
                                           max_epochs_coords=10, max_epochs_omega=30)
        cls.cfg = cfg
        cls.corpus = evaluation.load_corpus(cfg)
        cls.part = evaluation.partition(cls.corpus, [NEW], cfg)
        cls.model, _ = evaluation.train_model(cls.corpus, cls.part.seen_train,
                                              cls.part.seen_valid, cfg)
        cls.sample = unseen.draw_seen_sample(cls.corpus.encode(cls.part.seen_train),
                                             cfg.training.k_reg_sentences, cfg.seed)

    def request(self, enable_omega=True, **training_changes):
        return unseen.ExtensionRequest(
            [NEW], self.part.unseen_train, self.sample, self.corpus.table,
            dataclasses.replace(self.cfg.training, **training_changes), enable_omega)

    def test_frozen(self):
        before = checkpoint.to_dict(self.model)
        for enable_omega in (True, False):
            with self.subTest(enable_omega=enable_omega):
                ext, history = unseen.add_intents(self.model, self.request(enable_omega))
                self.assertEqual(ext.labels, self.model.labels + [NEW])
                self.assertEqual(ext.seen_count, self.model.seen_count)
                diff = checkpoint.tensor_diff(self.model, ext)
                self.assertTrue(all(diff.values()), diff)
                self.assertEqual(checkpoint.to_dict(self.model), before)
                self.assertEqual(set(ext.expansions.omega), {2} if enable_omega else set())
                phases = {h.phase for h in history}
                expected = {training.PHASE_ALPHA, training.PHASE_OMEGA}
                self.assertEqual(phases, expected if enable_omega
                                 else {training.PHASE_ALPHA})

    def test_learns(self):
        ext, history = unseen.add_intents(self.model, self.request())
        first = history[0].train_loss
        best = min(h.train_loss for h in history if h.phase == training.PHASE_OMEGA)
        self.assertLess(best, first)
        self.assertIsNotNone(training.top1_accuracy(ext, self.corpus.encode(
            self.part.unseen_train)))

    def test_rank_term_strength(self):
        weak, _ = unseen.add_intents(self.model, self.request(False, epsilon=0.0))
        strong, _ = unseen.add_intents(self.model, self.request(False, epsilon=10.0))
        self.assertLess(training.reg_rank_preservation(strong, self.sample, [2]),
                        training.reg_rank_preservation(weak, self.sample, [2]))
        before = [im.predict_top1(self.model, ex.inputs) for ex in self.sample]
        after = [im.predict_top1(strong, ex.inputs) for ex in self.sample]
        self.assertEqual(after, before)

    def test_label_clash(self):
        req = unseen.ExtensionRequest(
            ['PlayMusic'], self.part.seen_train.restrict(['PlayMusic']), self.sample,
            self.corpus.table, self.cfg.training)
        with self.assertRaises(ConfigError):
            unseen.add_intents(self.model, req)


class TestToyExtension(unittest.TestCase):
    """Test adding a held-out intent with the bundled toy configuration."""

    def test_held_out_intent(self):
        cfg = config.load_config(config.TOY_CONFIG)
        corpus = evaluation.load_corpus(cfg)
        part = evaluation.partition(corpus, [NEW], cfg)
        model, _ = evaluation.train_model(corpus, part.seen_train, part.seen_valid, cfg)
        seen_test = corpus.encode(part.seen_test)
        base = evaluation.evaluate(model, seen_test)
        ext, history = evaluation.extend_model(model, corpus, part, [NEW], cfg,
                                               enable_omega=True)
        self.assertIn(training.PHASE_OMEGA, {h.phase for h in history})
        report = evaluation.evaluate(ext, seen_test + corpus.encode(part.unseen_test), [NEW])
        self.assertGreaterEqual(report.unseen_accuracy, 95.0)
        self.assertGreaterEqual(report.seen_accuracy, base.seen_accuracy - 10.0)
        self.assertTrue(all(checkpoint.tensor_diff(model, ext).values()))


class TestExtensionRequest(unittest.TestCase):
    """Test ExtensionRequest validation."""

    def setUp(self):
        self.table = None
        self.data = LabeledDataset.from_examples([])
        self.sample = [EncodedExample(np.zeros((1, 2)), 'a')]

    def test_errors(self):
        new = LabeledDataset.from_examples([make_example('book a table', 'Book')])
        for labels, dataset, sample, error in [
                ([], new, self.sample, EmptyInputError),
                (['Book', 'Book'], new, self.sample, ConfigError),
                (['Book'], self.data, self.sample, EmptyInputError),
                (['Book'], new, [], EmptyInputError),
                (['Other'], new, self.sample, ConfigError),
        ]:
            with self.subTest(labels=labels):
                with self.assertRaises(error):
                    unseen.ExtensionRequest(labels, dataset, sample, self.table)


class TestDrawSeenSample(unittest.TestCase):
    """Test draw_seen_sample."""

    def test_draw(self):
        examples = [EncodedExample(np.full((1, 1), i), label)
                    for i, label in enumerate('aabbbbc')]
        sample = unseen.draw_seen_sample(examples, 2, seed=3)
        self.assertEqual([ex.intent for ex in sample], ['a', 'a', 'b', 'b', 'c'])
        values = [float(ex.inputs[0, 0]) for ex in sample]
        self.assertEqual(values, sorted(values))

    def test_range(self):
        with self.assertRaises(RangeError):
            unseen.draw_seen_sample([], 0, seed=0)


class TestDetection(unittest.TestCase):
    """Test the entropy and coordinate detectors."""

    def test_decision(self):
        for value, threshold, decision in [
                (1.0, 1.0, unseen.Decision.SEEN),
                (math.nextafter(1.0, 2.0), 1.0, unseen.Decision.UNSEEN),
                (0.2, 0.5, unseen.Decision.SEEN),
        ]:
            with self.subTest(value=value, threshold=threshold):
                self.assertEqual(unseen.DetectionResult(value, threshold).decision, decision)

    def test_entropy(self):
        m = zero_model()
        result = unseen.detect_by_entropy(m, np.ones((2, 2)), 1.0)
        self.assertAlmostEqual(result.value, math.log(3))
        self.assertEqual(result.decision, unseen.Decision.UNSEEN)
        self.assertEqual(result.measure, 'entropy')

    def test_estimate_single_basis(self):
        m = im.init_model(['a'], 2, 3, seed=1)
        alpha = unseen.estimate_sentence_coordinates(m, np.ones((2, 2)))
        np.testing.assert_allclose(alpha, [1.0])

    def test_estimate(self):
        m = im.init_model(['a', 'b', 'c'], 2, 3, seed=1, init_scale=0.5)
        alpha = unseen.estimate_sentence_coordinates(m, np.ones((2, 2)), steps=5)
        self.assertEqual(alpha.shape, (3,))
        self.assertAlmostEqual(float(alpha.sum()), 1.0)
        self.assertEqual(m.labels, ['a', 'b', 'c'])
        with self.assertRaises(RangeError):
            unseen.estimate_sentence_coordinates(m, np.ones((2, 2)), steps=0)

    def test_estimate_per_intent_scorer(self):
        m = im.init_model(['a', 'b'], 2, 3, scorer=im.ScorerKind.PER_INTENT, seed=2)
        alpha = unseen.estimate_sentence_coordinates(m, np.ones((2, 2)), steps=3)
        self.assertAlmostEqual(float(alpha.sum()), 1.0)

    def test_nearest_intent(self):
        m = im.init_model(['a', 'b'], 2, 3, mode=im.SpaceMode.EUCLIDEAN)
        for alpha, expected in [([0.9, 0.1], 0), ([0.2, 0.7], 1)]:
            with self.subTest(alpha=alpha):
                best, distance = unseen.nearest_intent(m, np.array(alpha))
                self.assertEqual(best, expected)
                self.assertAlmostEqual(distance, float(np.linalg.norm(
                    np.eye(2)[expected] - alpha)))

    def test_detect_by_coordinates(self):
        m = im.init_model(['a', 'b'], 2, 3, seed=1)
        result = unseen.detect_by_coordinates(m, np.ones((2, 2)), 5.0, steps=2)
        self.assertEqual(result.measure, 'distance')
        self.assertGreaterEqual(result.value, 0.0)
        self.assertEqual(result.decision, unseen.Decision.SEEN)


class TestRoc(unittest.TestCase):
    """Test ROC computation."""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmpdir)

    def test_separable(self):
        curve = unseen.roc_from_scores([0.1, 0.2, 0.9, 0.8], [False, False, True, True])
        self.assertEqual(curve.auc, 1.0)
        self.assertEqual(curve.points[0][1:], (0.0, 0.0))
        self.assertEqual(curve.points[-1][1:], (1.0, 1.0))
        self.assertEqual((curve.positives, curve.negatives), (2, 2))

    def test_auc(self):
        for scores, truth, expected in [
                ([0.5, 0.5, 0.5, 0.5], [False, True, False, True], 0.5),
                ([0.9, 0.8, 0.1, 0.2], [False, False, True, True], 0.0),
                ([0.3, 0.6, 0.4, 0.8], [False, False, True, True], 0.75),
        ]:
            with self.subTest(scores=scores):
                self.assertAlmostEqual(unseen.roc_from_scores(scores, truth).auc, expected)

    def test_single_class(self):
        for truth in ([True, True], [False, False]):
            with self.subTest(truth=truth):
                with self.assertRaises(EvalError):
                    unseen.roc_from_scores([0.1, 0.2], truth)

    def test_model_roc(self):
        m = zero_model()
        examples = [EncodedExample(np.ones((2, 2)), label) for label in 'abca']
        curve = unseen.roc_curve(m, examples, ['c'])
        self.assertAlmostEqual(curve.auc, 0.5)

    def test_write(self):
        path = os.path.join(self.tmpdir, 'roc.csv')
        unseen.write_roc_csv(path, unseen.roc_from_scores([0.2, 0.7], [False, True]))
        with open(path, encoding='utf-8', newline='') as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows, [['threshold', 'fpr', 'tpr'],
                                ['0.7', '0.0', '0.0'],
                                ['0.2', '0.0', '1.0'],
                                ['-inf', '1.0', '1.0']])
