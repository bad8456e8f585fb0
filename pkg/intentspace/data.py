"""Labelled intent datasets: loading, conversion and splitting.

The canonical on-disk format is JSON Lines, one object per sentence with string fields `text`
and `intent` and an optional `split` (train, valid or test; train when absent).
"""

import csv
import glob
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from intentspace import embeddings
from intentspace.errors import ConfigError, FormatError, ParseError, RangeError, SplitError
from intentspace.mathcore import make_rng

SPLITS = ('train', 'valid', 'test')

# Directory of the SNIPS benchmark holding one sub-directory per intent
SNIPS_SUBDIR = '2017-06-custom-intent-engines'

# Column names accepted for the sentence text in ATIS exports
ATIS_TEXT_COLUMNS = ('query', 'text', 'sentence', 'tokens', 'utterance')

# Sentence delimiters some ATIS exports keep
ATIS_MARKERS = frozenset({'bos', 'eos'})


@dataclass(frozen=True)
class LabeledExample:
    """A tokenised sentence with its reference intent."""

    tokens: tuple[str, ...]
    intent: str
    split: str = 'train'
    text: str = ''

    def __post_init__(self):
        if not self.tokens:
            raise ValueError('example has no tokens')
        if not self.intent:
            raise ValueError('example has no intent')


@dataclass
class LabeledDataset:
    """Examples plus a dense, insertion-ordered label index."""

    examples: list[LabeledExample] = field(default_factory=list)
    label_index: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_examples(cls, examples: list[LabeledExample],
                      labels: Optional[list[str]] = None) -> 'LabeledDataset':
        """Build a dataset, indexing labels in the given order or by first appearance."""
        order = list(labels) if labels is not None else []
        seen = set(order)
        for ex in examples:
            if ex.intent not in seen:
                seen.add(ex.intent)
                order.append(ex.intent)
        return cls(list(examples), {label: i for i, label in enumerate(order)})

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def labels(self) -> list[str]:
        return list(self.label_index)

    def counts(self) -> Counter:
        return Counter(ex.intent for ex in self.examples)

    def split(self, name: str) -> 'LabeledDataset':
        """Examples of one split, keeping the label index."""
        return LabeledDataset([ex for ex in self.examples if ex.split == name],
                              dict(self.label_index))

    def restrict(self, labels) -> 'LabeledDataset':
        """Examples whose intent is in labels, re-indexed in this dataset's label order."""
        keep = frozenset(labels)
        order = [label for label in self.label_index if label in keep]
        return LabeledDataset([ex for ex in self.examples if ex.intent in keep],
                              {label: i for i, label in enumerate(order)})

    def vocabulary(self) -> set[str]:
        return {tok for ex in self.examples for tok in ex.tokens}


@dataclass(frozen=True)
class SplitSpec:
    """Which labels are seen and which are held out."""

    seen_labels: frozenset = frozenset()
    unseen_labels: frozenset = frozenset()
    validation_per_intent: int = 0

    def __post_init__(self):
        if overlap := set(self.seen_labels) & set(self.unseen_labels):
            raise ConfigError(f'labels both seen and unseen: {", ".join(sorted(overlap))}')
        if self.validation_per_intent < 0:
            raise ConfigError('validation_per_intent must be non-negative')


@dataclass(frozen=True)
class EncodedExample:
    """An example ready for the model: a (T, d_in) array and its intent name."""

    inputs: np.ndarray
    intent: str
    text: str = ''


def make_example(text: str, intent: str, split: str = 'train') -> Optional[LabeledExample]:
    """Tokenise text into an example; None if nothing is left after tokenising."""
    tokens = tuple(embeddings.tokenize(text))
    if not tokens:
        return None
    return LabeledExample(tokens, intent, split, text)


def encode_dataset(table: embeddings.EmbeddingTable,
                   dataset: LabeledDataset) -> list[EncodedExample]:
    return [EncodedExample(embeddings.encode_sentence(table, list(ex.tokens)), ex.intent,
                           ex.text or ' '.join(ex.tokens))
            for ex in dataset.examples]


def load_jsonl(path: str) -> LabeledDataset:
    """Load the canonical JSON Lines format."""
    examples = []
    with open(path, encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f'{path}: {e.msg}', lineno) from e
            if not isinstance(obj, dict):
                raise ParseError(f'{path}: expected an object', lineno)
            text, intent = obj.get('text'), obj.get('intent')
            split = obj.get('split', 'train')
            if not isinstance(text, str) or not isinstance(intent, str) or not intent:
                raise ParseError(f'{path}: missing string field "text" or "intent"', lineno)
            if split not in SPLITS:
                raise ParseError(f'{path}: unknown split "{split}"', lineno)
            if ex := make_example(text, intent, split):
                examples.append(ex)
            else:
                logging.warning('%s line %d has no tokens; skipping', path, lineno)
    dataset = LabeledDataset.from_examples(examples)
    logging.info('Loaded %d examples with %d intents from %s',
                 len(dataset), len(dataset.label_index), path)
    return dataset


def save_jsonl(dataset: LabeledDataset, path: str):
    """Write the canonical format; the split field is written for non-train examples only."""
    with open(path, 'w', encoding='utf-8') as f:
        for ex in dataset.examples:
            obj = {'text': ex.text or ' '.join(ex.tokens), 'intent': ex.intent}
            if ex.split != 'train':
                obj['split'] = ex.split
            f.write(json.dumps(obj, ensure_ascii=False))
            f.write('\n')


def read_snips_file(path: str, intent: str) -> list[str]:
    """Read the sentences of one SNIPS benchmark JSON file."""
    try:
        with open(path, encoding='utf-8') as f:
            content = json.load(f)
    except UnicodeDecodeError:
        with open(path, encoding='latin-1') as f:
            content = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f'{path}: {e.msg}') from e
    if not isinstance(content, dict) or intent not in content:
        raise FormatError(f'{path}: no entry for intent {intent}')
    return [''.join(chunk['text'] for chunk in item['data']) for item in content[intent]]


def find_snips_root(root: str) -> str:
    """Locate the directory holding per-intent sub-directories."""
    nested = os.path.join(root, SNIPS_SUBDIR)
    return nested if os.path.isdir(nested) else root


def load_snips(root: str, validation_per_intent: int = 100) -> LabeledDataset:
    """Load the SNIPS benchmark layout.

    Training sentences come from train_<Intent>_full.json (or train_<Intent>.json), test
    sentences from validate_<Intent>.json. The first validation_per_intent training sentences
    of each intent are moved to the valid split.
    """
    base = find_snips_root(root)
    if not os.path.isdir(base):
        raise FormatError(f'{root} is not a directory')
    intents = sorted(d for d in os.listdir(base) if os.path.isdir(os.path.join(base, d)))
    if not intents:
        raise FormatError(f'{base}: no intent directories found')

    examples = []
    for intent in intents:
        idir = os.path.join(base, intent)
        train_file = next((p for p in (os.path.join(idir, f'train_{intent}_full.json'),
                                       os.path.join(idir, f'train_{intent}.json'))
                           if os.path.exists(p)), None)
        test_file = os.path.join(idir, f'validate_{intent}.json')
        if not train_file or not os.path.exists(test_file):
            raise FormatError(f'{idir}: missing train or validate file for intent {intent}')
        for split, path in (('train', train_file), ('test', test_file)):
            for text in read_snips_file(path, intent):
                if ex := make_example(text, intent, split):
                    examples.append(ex)
                else:
                    logging.warning('Empty sentence in %s; skipping', path)

    dataset = LabeledDataset.from_examples(examples)
    if validation_per_intent:
        train, valid = make_validation_split(dataset.split('train'), validation_per_intent)
        dataset = LabeledDataset(train.examples + valid.examples + dataset.split('test').examples,
                                 dataset.label_index)
    logging.info('Loaded SNIPS: %s',
                 ', '.join(f'{s} {len(dataset.split(s))}' for s in SPLITS))
    return dataset


def read_delimited(path: str) -> list[tuple[str, str]]:
    """Read (text, intent) pairs from a CSV or TSV export."""
    with open(path, encoding='utf-8', newline='') as f:
        sample = f.read(4096)
        f.seek(0)
        delimiter = '\t' if sample.count('\t') > sample.count(',') else ','
        rows = [row for row in csv.reader(f, delimiter=delimiter) if row]
    if not rows:
        raise FormatError(f'{path}: empty file')

    header = [c.strip().lower() for c in rows[0]]
    if 'intent' in header:
        intent_col = header.index('intent')
        text_col = next((header.index(c) for c in ATIS_TEXT_COLUMNS if c in header), None)
        if text_col is None:
            raise FormatError(f'{path}: no text column (one of {", ".join(ATIS_TEXT_COLUMNS)})')
        rows = rows[1:]
    else:
        # Header-less exports put the intent first
        intent_col, text_col = 0, 1

    pairs = []
    for lineno, row in enumerate(rows, start=2 if 'intent' in header else 1):
        if len(row) <= max(intent_col, text_col):
            raise ParseError(f'{path}: too few columns', lineno)
        pairs.append((row[text_col], row[intent_col].strip()))
    return pairs


def atis_label(raw: str) -> str:
    return raw.removeprefix('atis_')


def load_atis(train_path: str, test_path: str) -> LabeledDataset:
    """Load an ATIS export, dropping intents absent from either split."""
    splits = {}
    for split, path in (('train', train_path), ('test', test_path)):
        examples = []
        for text, raw_intent in read_delimited(path):
            tokens = [t for t in embeddings.tokenize(text) if t not in ATIS_MARKERS]
            if tokens and raw_intent:
                examples.append(LabeledExample(tuple(tokens), atis_label(raw_intent), split,
                                               ' '.join(tokens)))
        splits[split] = examples

    common = ({ex.intent for ex in splits['train']} & {ex.intent for ex in splits['test']})
    dropped = ({ex.intent for exs in splits.values() for ex in exs}) - common
    if dropped:
        logging.info('Dropping intents not in both splits: %s', ', '.join(sorted(dropped)))
    examples = [ex for exs in splits.values() for ex in exs if ex.intent in common]
    dataset = LabeledDataset.from_examples(examples)
    logging.info('Loaded ATIS: %d intents, train %d, test %d', len(dataset.label_index),
                 len(dataset.split('train')), len(dataset.split('test')))
    return dataset


def find_atis_files(directory: str) -> tuple[str, str]:
    """Locate the train and test exports in a directory."""
    def pick(kind: str) -> str:
        found = sorted(p for ext in ('csv', 'tsv')
                       for p in glob.glob(os.path.join(directory, f'*{kind}*.{ext}')))
        if not found:
            raise FormatError(f'{directory}: no {kind} CSV/TSV file found')
        return found[0]

    if not os.path.isdir(directory):
        raise FormatError(f'{directory} is not a directory')
    return pick('train'), pick('test')


def make_validation_split(d: LabeledDataset, n_per_intent: int,
                          ) -> tuple[LabeledDataset, LabeledDataset]:
    """Move the first n_per_intent examples of each intent (file order) to a validation set."""
    if n_per_intent < 0:
        raise SplitError('n_per_intent must be non-negative')
    counts = d.counts()
    for label in d.label_index:
        if counts[label] < n_per_intent:
            raise SplitError(f'intent {label} has {counts[label]} examples, '
                             f'fewer than {n_per_intent}')
    taken = Counter()
    train, valid = [], []
    for ex in d.examples:
        if taken[ex.intent] < n_per_intent:
            taken[ex.intent] += 1
            valid.append(LabeledExample(ex.tokens, ex.intent, 'valid', ex.text))
        else:
            train.append(ex)
    return (LabeledDataset(train, dict(d.label_index)),
            LabeledDataset(valid, dict(d.label_index)))


def partition_seen_unseen(d: LabeledDataset, spec: SplitSpec,
                          ) -> tuple[LabeledDataset, LabeledDataset]:
    """Route examples by label into seen and unseen datasets."""
    unknown = (set(spec.seen_labels) | set(spec.unseen_labels)) - set(d.label_index)
    if unknown:
        raise ConfigError(f'labels not in dataset: {", ".join(sorted(unknown))}')
    unseen_labels = frozenset(spec.unseen_labels)
    seen_labels = (frozenset(spec.seen_labels) if spec.seen_labels
                   else frozenset(d.label_index) - unseen_labels)
    return d.restrict(seen_labels), d.restrict(unseen_labels)


def subsample_unseen(unseen: LabeledDataset, n: int, seed: int) -> LabeledDataset:
    """Draw n examples, keeping each intent's share where it divides evenly.

    Leftover places go to the intents with the largest fractional share, ties in label order.
    Selected examples keep their original order.
    """
    total = len(unseen)
    if n < 0 or n > total:
        raise RangeError(f'cannot draw {n} of {total} examples')
    if n == total:
        return LabeledDataset(list(unseen.examples), dict(unseen.label_index))

    counts = unseen.counts()
    labels = [label for label in unseen.label_index if counts[label]]
    quotas = {label: n * counts[label] // total for label in labels}
    by_fraction = sorted(labels, key=lambda lb: (-(n * counts[lb] % total),
                                                 unseen.label_index[lb]))
    for label in by_fraction[:n - sum(quotas.values())]:
        quotas[label] += 1

    rng = make_rng(seed)
    chosen = []
    for label in labels:
        positions = [i for i, ex in enumerate(unseen.examples) if ex.intent == label]
        chosen.extend(rng.choice(positions, size=quotas[label], replace=False).tolist())
    return LabeledDataset([unseen.examples[i] for i in sorted(chosen)], dict(unseen.label_index))
