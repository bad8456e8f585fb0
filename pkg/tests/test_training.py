"""Test training."""

import csv
import dataclasses
import itertools
import math
import os
import shutil
import tempfile
import unittest

import numpy as np

from intentspace import checkpoint, config, evaluation, training
from intentspace import model as im
from intentspace.data import EncodedExample
from intentspace.errors import ConfigError, EmptyInputError, EvalError
from intentspace.mathcore import grad_check


def zero_model(labels=('a', 'b', 'c'), hidden=3, inputs=2, scorer=im.ScorerKind.SHARED):
    """A model whose every intent scores exactly 0.5 on any sentence."""
    m = im.init_model(list(labels), inputs, hidden, mode=im.SpaceMode.EUCLIDEAN, scorer=scorer)
    m.V = np.zeros_like(m.V)
    m.b = np.zeros_like(m.b)
    m.bases.tensors = np.zeros_like(m.bases.tensors)
    m.scorer.a = np.zeros_like(m.scorer.a)
    m.scorer.d = np.zeros_like(m.scorer.d)
    return m


def sentences(labels, words=2, inputs=2, seed=0):
    rng = np.random.default_rng(seed)
    return [EncodedExample(rng.normal(size=(words, inputs)), label) for label in labels]


def load_toy(**training_changes):
    cfg = config.load_config(config.TOY_CONFIG)
    cfg.training = dataclasses.replace(cfg.training, **training_changes)
    corpus = evaluation.load_corpus(cfg)
    part = evaluation.partition(corpus, [], cfg)
    return cfg, corpus, part


class TestTrainingConfig(unittest.TestCase):
    """Test TrainingConfig."""

    def test_defaults(self):
        for optimizer, lr, expected in [('sgd', None, 0.05), ('adam', None, 1e-3),
                                        ('adam', 0.02, 0.02)]:
            with self.subTest(optimizer=optimizer, lr=lr):
                cfg = training.TrainingConfig(optimizer=optimizer, lr=lr)
                self.assertEqual(cfg.learning_rate, expected)
                self.assertEqual(cfg.make_optimizer().lr, expected)

    def test_invalid(self):
        for changes in [{'optimizer': 'rmsprop'}, {'lr': 0.0}, {'batch_size': 0},
                        {'interleave_epochs': 0}, {'epsilon': -0.1}, {'workers': 0}]:
            with self.subTest(changes=changes):
                with self.assertRaises(ConfigError):
                    training.TrainingConfig(**changes)


class TestObjective(unittest.TestCase):
    """Test the loss and regularisers."""

    def test_nll_uniform(self):
        m = zero_model()
        self.assertAlmostEqual(training.loss_nll(m, sentences('abc')), math.log(3))

    def test_nll_errors(self):
        m = zero_model()
        with self.assertRaises(EmptyInputError):
            training.loss_nll(m, [])
        with self.assertRaises(EvalError):
            training.loss_nll(m, sentences('z'))

    def test_rank_preservation(self):
        m = zero_model(scorer=im.ScorerKind.PER_INTENT)
        m.scorer.d = np.array([0.0, math.log(3), -math.log(3)])
        # seen scores 0.5 and 0.75, unseen score 0.25
        value = training.reg_rank_preservation(m, sentences('aab'), [2])
        self.assertAlmostEqual(value, -math.log(3))

    def test_rank_preservation_errors(self):
        m = zero_model()
        with self.assertRaises(EmptyInputError):
            training.reg_rank_preservation(m, [], [2])
        with self.assertRaises(ConfigError):
            training.reg_rank_preservation(m, sentences('a'), [0, 1, 2])

    def test_reg_coordinates(self):
        alpha = np.array([0.75, 0.25])
        kl = float(np.sum(alpha * np.log(alpha / 0.5)))
        for mode, beta, expected in [
                (im.SpaceMode.SIMPLEX, [0.0, 0.0], 0.0),
                (im.SpaceMode.SIMPLEX, [math.log(3), 0.0], kl),
                (im.SpaceMode.EUCLIDEAN, [0.6, 0.8], 1.0),
                (im.SpaceMode.EUCLIDEAN, [0.0, 0.0], 0.0),
        ]:
            with self.subTest(mode=mode, beta=beta):
                m = im.init_model(['a', 'b'], 2, 2, mode=mode)
                m.coords.beta = np.vstack([m.coords.beta, [beta]])
                m.labels.append('new')
                self.assertAlmostEqual(training.reg_coordinates(m, [2]), expected)
        self.assertEqual(training.reg_coordinates(m, []), 0.0)

    def test_combine(self):
        self.assertAlmostEqual(training.combine_objective(1.0, 0.25, 0.05, 0.2, 1.0), 1.1)

    def test_plain_objective(self):
        m = im.init_model(['a', 'b'], 2, 3, seed=1)
        batch = sentences('ab')
        self.assertEqual(training.objective(m, training.ObjectiveTerms(batch)),
                         training.loss_nll(m, batch))


class TestBackward(unittest.TestCase):
    """Test analytic gradients."""

    def test_gradient_check(self):
        for form, mode, scorer in itertools.product(im.BasisForm, im.SpaceMode,
                                                    im.ScorerKind):
            with self.subTest(form=form, mode=mode, scorer=scorer):
                errors = training.random_gradient_check(3, form, mode, scorer)
                self.assertTrue(errors)
                for block, error in errors.items():
                    self.assertLess(error, training.GRAD_CHECK_TOLERANCE, block)

    def test_value_matches_objective(self):
        m, terms = training.gradient_check_instance(seed=1)
        value, _ = training.backward(m, terms, training.ParamSelector(
            frozenset({im.Block.SCORER})))
        self.assertAlmostEqual(value, training.objective(m, terms), places=12)

    def test_selected_only(self):
        m, terms = training.gradient_check_instance(seed=2)
        for blocks, expected in [
                ({im.Block.COORDINATES}, {'beta'}),
                ({im.Block.SCORER}, {'a', 'd'}),
                ({im.Block.EXPANSIONS}, {'omega.2'}),
                ({im.Block.BASES, im.Block.INPUT}, {'bases', 'V', 'b'}),
        ]:
            with self.subTest(blocks=blocks):
                _, grads = training.backward(m, terms, training.ParamSelector(
                    frozenset(blocks)))
                self.assertEqual(set(grads), expected)

    def test_row_mask(self):
        m, terms = training.gradient_check_instance(seed=2, scorer=im.ScorerKind.PER_INTENT)
        selector = training.ParamSelector(frozenset({im.Block.COORDINATES, im.Block.SCORER}),
                                          frozenset({2}))
        _, grads = training.backward(m, terms, selector)
        for name in ('beta', 'a', 'd'):
            with self.subTest(name=name):
                self.assertFalse(np.any(grads[name][:2]))
                self.assertTrue(np.any(grads[name][2]))

    def test_workers(self):
        m, terms = training.gradient_check_instance(seed=4)
        selector = training.ParamSelector(frozenset(im.Block))
        value1, grads1 = training.backward(m, terms, selector, workers=1)
        value2, grads2 = training.backward(m, terms, selector, workers=3)
        self.assertEqual(value1, value2)
        self.assertEqual(set(grads1), set(grads2))
        for name in grads1:
            np.testing.assert_array_equal(grads1[name], grads2[name])

    def test_empty_selector(self):
        with self.assertRaises(ConfigError):
            training.ParamSelector(frozenset())

    def test_empty_batch(self):
        m, _ = training.gradient_check_instance()
        with self.assertRaises(EmptyInputError):
            training.backward(m, training.ObjectiveTerms([]),
                              training.ParamSelector(frozenset({im.Block.SCORER})))

    def test_baseline_gradients(self):
        rnn = im.init_baseline(['a', 'b', 'c'], 2, 4, seed=3, init_scale=0.5)
        batch = sentences('abca', words=3)
        value, grads = training.baseline_backward(rnn, batch)
        self.assertAlmostEqual(value, training.baseline_loss(rnn, batch))
        perturbed = rnn.copy()
        for name, grad in grads.items():
            with self.subTest(name=name):
                original = rnn.get_param(name)

                def f(p, name=name):
                    perturbed.set_param(name, p.copy())
                    return training.baseline_loss(perturbed, batch)

                self.assertLess(grad_check(f, original, grad), training.GRAD_CHECK_TOLERANCE)
                perturbed.set_param(name, original.copy())


class TestApplyGradients(unittest.TestCase):
    """Test apply_gradients."""

    def test_rows(self):
        m = im.init_model(['a', 'b', 'c'], 2, 3)
        before = m.coords.beta.copy()
        grads = {'beta': np.ones_like(before)}
        training.apply_gradients(m, grads, training.SGD(0.1),
                                 lambda name: np.array([1]))
        np.testing.assert_array_equal(m.coords.beta[[0, 2]], before[[0, 2]])
        np.testing.assert_allclose(m.coords.beta[1], before[1] - 0.1)

    def test_decay_only_on_decayed(self):
        m = im.init_model(['a', 'b'], 2, 3)
        beta, V = m.coords.beta.copy(), m.V.copy()
        training.apply_gradients(m, {'beta': np.zeros_like(beta), 'V': np.zeros_like(V)},
                                 training.SGD(0.1, weight_decay=0.5))
        np.testing.assert_array_equal(m.coords.beta, beta)
        np.testing.assert_allclose(m.V, V * 0.95)


class TestEarlyStopping(unittest.TestCase):
    """Test EarlyStopping."""

    def test_update(self):
        m = im.init_model(['a'], 2, 2)
        stopper = training.EarlyStopping(patience=2)
        for metric, stop in [(0.5, False), (0.7, False), (0.7, False), (0.6, True)]:
            with self.subTest(metric=metric):
                m.b = np.full(2, metric)
                self.assertEqual(stopper.update(metric, m, ['b']), stop)
        self.assertEqual(stopper.best, 0.7)
        stopper.restore(m)
        np.testing.assert_array_equal(m.b, [0.7, 0.7])

    def test_tiebreak(self):
        m = im.init_model(['a'], 2, 2)
        stopper = training.EarlyStopping(patience=5)
        for value, (metric, tiebreak) in enumerate([(0.5, 0.0), (1.0, 0.5), (1.0, 1.0),
                                                    (1.0, 0.5), (0.8, 1.0)]):
            with self.subTest(value=value):
                m.b = np.full(2, float(value))
                self.assertFalse(stopper.update(metric, m, ['b'], tiebreak=tiebreak))
        self.assertEqual((stopper.best, stopper.best_tiebreak), (1.0, 1.0))
        self.assertEqual(stopper.bad_epochs, 3)
        stopper.restore(m)
        np.testing.assert_array_equal(m.b, [2.0, 2.0])


class TestHistory(unittest.TestCase):
    """Test write_history."""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmpdir)

    def test_write(self):
        path = os.path.join(self.tmpdir, 'history.csv')
        training.write_history(path, [training.HistoryEntry(0, 1, 'W', 0.5, 0.25),
                                      training.HistoryEntry(1, 2, 'alpha', 0.125, None, 1.0)])
        with open(path, encoding='utf-8', newline='') as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows, [list(training.HISTORY_FIELDS),
                                ['0', '1', 'W', '0.5', '0.25', ''],
                                ['1', '2', 'alpha', '0.125', '', '1.0']])


class TestTrainSeen(unittest.TestCase):
    """Test seen-intent training on the bundled toy corpus."""

    def test_learns_toy(self):
        cfg, corpus, part = load_toy()
        train = corpus.encode(part.seen_train)
        model = evaluation.build_model(part.seen_train.labels, corpus.table.dim, cfg.model,
                                       cfg.seed)
        model, history = training.train_seen(model, train, train, cfg.training)
        self.assertLessEqual(len(history), cfg.training.max_epochs_seen)
        self.assertEqual([h.phase for h in history[:6]], ['W'] * 5 + ['alpha'])
        self.assertEqual(training.top1_accuracy(model, train), 1.0)
        self.assertEqual(training.top1_accuracy(model, train),
                         max(h.seen_acc for h in history))

    def test_deterministic(self):
        tmpdir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, tmpdir)
        cfg, corpus, part = load_toy(max_epochs_seen=4, interleave_epochs=2)
        train = corpus.encode(part.seen_train)
        valid = corpus.encode(part.seen_valid)
        runs = []
        for _ in range(2):
            model = evaluation.build_model(part.seen_train.labels, corpus.table.dim,
                                           cfg.model, cfg.seed)
            _, history = training.train_seen(model, train, valid, cfg.training)
            runs.append(checkpoint.to_dict(model))
            run_dir = os.path.join(tmpdir, str(len(runs)))
            os.mkdir(run_dir)
            training.write_history(os.path.join(run_dir, 'history.csv'), history)
            checkpoint.save(model, os.path.join(run_dir, 'checkpoint.json'))
        self.assertEqual(runs[0], runs[1])
        for name in ('history.csv', 'checkpoint.json'):
            with self.subTest(name=name):
                with open(os.path.join(tmpdir, '1', name), 'rb') as f:
                    first = f.read()
                with open(os.path.join(tmpdir, '2', name), 'rb') as f:
                    second = f.read()
                self.assertTrue(first)
                self.assertEqual(first, second)

    def test_empty(self):
        m = im.init_model(['a'], 2, 2)
        with self.assertRaises(EmptyInputError):
            training.train_seen(m, [], [], training.TrainingConfig())

    def test_baseline(self):
        cfg, corpus, part = load_toy(max_epochs_seen=3)
        train = corpus.encode(part.seen_train)
        rnn = im.init_baseline(part.seen_train.labels, corpus.table.dim, 10)
        rnn, history = training.train_baseline(rnn, train, [], cfg.training)
        self.assertEqual([h.epoch for h in history], [1, 2, 3])
        self.assertIsNotNone(training.top1_accuracy(rnn, train))
