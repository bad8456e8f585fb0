"""Test config."""

import json
import os
import shutil
import tempfile
import unittest
from unittest import mock

from intentspace import config
from intentspace.errors import ConfigError, PathError


class TestLoadConfig(unittest.TestCase):
    """Test load_config."""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmpdir)
        self.path = os.path.join(self.tmpdir, 'run.yaml')

    def write(self, text):
        with open(self.path, 'w', encoding='utf-8') as f:
            f.write(text)

    def test_toy(self):
        cfg = config.load_config(config.TOY_CONFIG)
        self.assertEqual(cfg.model.hidden_size, 10)
        self.assertEqual(cfg.training.optimizer, 'adam')
        self.assertTrue(os.path.isabs(cfg.data.corpus))
        config.check_paths(cfg)

    def test_defaults(self):
        self.write('')
        cfg = config.load_config(self.path)
        self.assertEqual(cfg.seed, 0)
        self.assertEqual(cfg.model.form, 'full')
        self.assertEqual(cfg.training.epsilon, 0.2)
        self.assertEqual(cfg.output.directory, os.path.join(self.tmpdir, 'runs'))

    def test_relative_paths(self):
        self.write('data:\n  corpus: sub/corpus.jsonl\n  embeddings: /abs/vectors.txt\n')
        cfg = config.load_config(self.path)
        self.assertEqual(cfg.data.corpus, os.path.join(self.tmpdir, 'sub', 'corpus.jsonl'))
        self.assertEqual(cfg.data.embeddings, '/abs/vectors.txt')

    def test_home_path(self):
        self.write('data:\n  corpus: ~/corpus.jsonl\n')
        with mock.patch.dict(os.environ, {'HOME': '/home/someone'}):
            cfg = config.load_config(self.path)
        self.assertEqual(cfg.data.corpus, '/home/someone/corpus.jsonl')

    def test_seed(self):
        self.write('seed: 7\ntraining:\n  seed: 3\n')
        cfg = config.load_config(self.path)
        self.assertEqual(cfg.seed, 7)
        self.assertEqual(cfg.training.seed, 7)

    def test_errors(self):
        for text in [
                'model:\n  colour: blue\n',
                'extra:\n  key: 1\n',
                'model:\n  hidden_size: ten\n',
                'model:\n  hidden_size: true\n',
                'model:\n  mode: hyperbolic\n',
                'model:\n  form: reduced-rank\n',
                'model: 3\n',
                'split:\n  unseen: GetWeather\n',
                'training:\n  optimizer: rmsprop\n',
                'seed: one\n',
                '- a\n- b\n',
                'model: [unclosed\n',
        ]:
            with self.subTest(text=text):
                self.write(text)
                with self.assertRaises(ConfigError):
                    config.load_config(self.path)

    def test_int_accepted_as_float(self):
        self.write('training:\n  lr: 1\n  epsilon: 0\n')
        cfg = config.load_config(self.path)
        self.assertEqual(cfg.training.lr, 1.0)
        self.assertIsInstance(cfg.training.epsilon, float)

    def test_missing(self):
        with self.assertRaises(PathError):
            config.load_config(os.path.join(self.tmpdir, 'nope.yaml'))

    def test_overrides(self):
        self.write('training:\n  epsilon: 0.5\n')
        cfg = config.load_config(self.path, [
            'training.epsilon=2', 'seed=4', 'split.unseen=[GetWeather, RateBook]',
            'model.rank=null'])
        self.assertEqual(cfg.training.epsilon, 2.0)
        self.assertEqual(cfg.seed, 4)
        self.assertEqual(cfg.split.unseen, ['GetWeather', 'RateBook'])
        self.assertIsNone(cfg.model.rank)

    def test_bad_overrides(self):
        self.write('')
        for item in ['training.epsilon', 'nosuch.key=1', 'seedless=1']:
            with self.subTest(item=item):
                with self.assertRaises(ConfigError):
                    config.load_config(self.path, [item])

    def test_check_paths(self):
        self.write('data:\n  corpus: corpus.jsonl\n  embeddings: vectors.txt\n')
        cfg = config.load_config(self.path)
        with self.assertRaises(PathError):
            config.check_paths(cfg)
        self.write('')
        with self.assertRaises(ConfigError):
            config.check_paths(config.load_config(self.path))


class TestRunDirectory(unittest.TestCase):
    """Test configuration hashing and run manifests."""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmpdir)

    def test_hash(self):
        a = config.from_dict({'seed': 1}, self.tmpdir)
        b = config.from_dict({'seed': 1}, self.tmpdir)
        c = config.from_dict({'seed': 2}, self.tmpdir)
        self.assertEqual(config.config_hash(a), config.config_hash(b))
        self.assertNotEqual(config.config_hash(a), config.config_hash(c))
        self.assertEqual(len(config.config_hash(a)), 12)
        self.assertTrue(config.run_directory(c).endswith('-s2'))

    def test_manifest(self):
        cfg = config.from_dict({'seed': 3, 'model': {'hidden_size': 5}}, self.tmpdir)
        path = config.write_manifest(self.tmpdir, cfg, 'train', {'results': {'x': 1.0}})
        with open(path, encoding='utf-8') as f:
            manifest = json.load(f)
        self.assertEqual(manifest['command'], 'train')
        self.assertEqual(manifest['seed'], 3)
        self.assertEqual(manifest['config']['model']['hidden_size'], 5)
        self.assertEqual(manifest['config_hash'], config.config_hash(cfg))
        self.assertEqual(manifest['results'], {'x': 1.0})
        self.assertIn('numpy', manifest['versions'])
