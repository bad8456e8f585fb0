"""Accuracy, evaluation reports, coordinate export and the experiment drivers."""

import csv
import json
import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Union

import numpy as np

from intentspace import training
from intentspace.config import ModelConfig, RunConfig
from intentspace.data import (EncodedExample, LabeledDataset, SplitSpec, encode_dataset,
                              load_jsonl, make_validation_split, partition_seen_unseen,
                              subsample_unseen)
from intentspace.embeddings import EmbeddingTable, load_embeddings
from intentspace.errors import EvalError
from intentspace.model import (BaselineRnn, IntentSpaceModel, SpaceMode, baseline_forward,
                               composed_recurrent, entropy, init_baseline, init_model,
                               predict_distribution)
from intentspace.unseen import ExtensionRequest, add_intents, draw_seen_sample

# Default subsample sizes for the unseen-data sweep; 0 is the seen-only row
TABLE3_SIZES = (0, 1, 10, 100, 500, 1000, 1500)

AnyModel = Union[IntentSpaceModel, BaselineRnn]


def accuracy(model: AnyModel, examples: Sequence[EncodedExample],
             restrict_to: Optional[Sequence[str]] = None) -> float:
    """Top-1 accuracy in percent, rounded to two decimals."""
    acc = training.top1_accuracy(model, examples, restrict_to)
    if acc is None:
        raise EvalError('no examples to evaluate')
    return round(100.0 * acc, 2)


def _distributions(model: AnyModel, examples: Sequence[EncodedExample]) -> np.ndarray:
    if isinstance(model, BaselineRnn):
        return np.array([baseline_forward(model, ex.inputs) for ex in examples])
    recurrent = composed_recurrent(model)
    return np.array([predict_distribution(model, ex.inputs, recurrent) for ex in examples])


@dataclass
class EvalReport:
    """Accuracies (percent) and entropy summary of a model on a labelled set."""

    seen_accuracy: Optional[float]
    unseen_accuracy: Optional[float]
    per_intent_accuracy: dict[str, float]
    entropy_stats: dict[str, float]
    coordinates: list[list[float]] = field(default_factory=list)
    simple_average: Optional[float] = None
    weighted_average: Optional[float] = None
    sentences: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def evaluate(model: AnyModel, examples: Sequence[EncodedExample],
             unseen_labels: Sequence[str] = ()) -> EvalReport:
    """Evaluate on examples, grouping intents in unseen_labels apart from the rest."""
    if not examples:
        raise EvalError('no examples to evaluate')
    index = {label: i for i, label in enumerate(model.labels)}
    if missing := {ex.intent for ex in examples} - set(index):
        raise EvalError(f'intents not in the model: {", ".join(sorted(missing))}')
    dists = _distributions(model, examples)
    preds = np.argmax(dists, axis=1)
    correct = np.array([p == index[ex.intent] for p, ex in zip(preds, examples)])
    ents = np.array([entropy(d) for d in dists])
    unseen = np.array([ex.intent in set(unseen_labels) for ex in examples])

    def pct(mask) -> Optional[float]:
        return round(100.0 * float(np.mean(correct[mask])), 2) if mask.any() else None

    per_intent = {}
    for label in model.labels:
        mask = np.array([ex.intent == label for ex in examples])
        if mask.any():
            per_intent[label] = pct(mask)
    seen_acc, unseen_acc = pct(~unseen), pct(unseen)
    stats = {'mean': float(ents.mean()), 'min': float(ents.min()), 'max': float(ents.max())}
    if (~unseen).any():
        stats['mean_seen'] = float(ents[~unseen].mean())
    if unseen.any():
        stats['mean_unseen'] = float(ents[unseen].mean())
    available = [a for a in (seen_acc, unseen_acc) if a is not None]
    report = EvalReport(
        seen_accuracy=seen_acc,
        unseen_accuracy=unseen_acc,
        per_intent_accuracy=per_intent,
        entropy_stats=stats,
        simple_average=round(float(np.mean(available)), 2),
        weighted_average=pct(np.ones(len(examples), dtype=bool)),
        sentences={'seen': int((~unseen).sum()), 'unseen': int(unseen.sum())})
    if isinstance(model, IntentSpaceModel):
        report.coordinates = model.coords.alpha().tolist()
    return report


def export_coordinates(model: IntentSpaceModel, path: str):
    """Write the normalised coordinate matrix, one row per intent, one column per basis.

    Untrained Euclidean models export the exact identity for their seen intents. Simplex
    rows start from finite logits, so their seen rows are only close to one-hot (diagonal
    above 0.9999 with the default gap).
    """
    alpha = model.coords.alpha()
    if model.mode == SpaceMode.SIMPLEX:
        logging.debug('Row sums %s', alpha.sum(axis=1))
    bases = [model.labels[b] if b < model.seen_count else f'basis{b}'
             for b in range(model.bases.count)]
    with open(path, 'w', newline='', encoding='utf-8') as f:
        w = csv.writer(f, lineterminator='\n')
        w.writerow(['intent'] + bases)
        for label, row in zip(model.labels, alpha):
            w.writerow([label] + [repr(float(v)) for v in row])


@dataclass
class Corpus:
    """A labelled corpus and the word vectors to encode it with."""

    dataset: LabeledDataset
    table: EmbeddingTable

    def encode(self, dataset: LabeledDataset) -> list[EncodedExample]:
        return encode_dataset(self.table, dataset)


def load_corpus(cfg: RunConfig) -> Corpus:
    dataset = load_jsonl(cfg.data.corpus)
    vocab = dataset.vocabulary() if cfg.data.restrict_vocabulary else None
    return Corpus(dataset, load_embeddings(cfg.data.embeddings, cfg.data.embedding_dim, vocab))


@dataclass
class Partition:
    """Train/validation/test sets of the seen and of the unseen intents."""

    seen_train: LabeledDataset
    seen_valid: LabeledDataset
    seen_test: LabeledDataset
    unseen_train: LabeledDataset
    unseen_valid: LabeledDataset
    unseen_test: LabeledDataset


def _three_way(d: LabeledDataset, validation_per_intent: int,
               ) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    train, valid = d.split('train'), d.split('valid')
    if not len(valid) and validation_per_intent and len(train):
        train, valid = make_validation_split(train, validation_per_intent)
    return train, valid, d.split('test')


def partition(corpus: Corpus, unseen_labels: Sequence[str], cfg: RunConfig,
              seen_labels: Sequence[str] = ()) -> Partition:
    spec = SplitSpec(frozenset(seen_labels), frozenset(unseen_labels),
                     cfg.split.validation_per_intent)
    seen, unseen = partition_seen_unseen(corpus.dataset, spec)
    return Partition(*_three_way(seen, spec.validation_per_intent),
                     *_three_way(unseen, spec.validation_per_intent))


def build_model(labels: list[str], input_size: int, model_cfg: ModelConfig, seed: int,
                ) -> AnyModel:
    if model_cfg.architecture == 'baseline':
        return init_baseline(labels, input_size, model_cfg.hidden_size, seed,
                             model_cfg.init_scale)
    return init_model(labels, input_size, model_cfg.hidden_size, model_cfg.basis_form,
                      model_cfg.rank, model_cfg.space_mode, model_cfg.scorer_kind, seed,
                      model_cfg.init_scale, model_cfg.one_hot_gap)


def train_model(corpus: Corpus, train: LabeledDataset, valid: LabeledDataset, cfg: RunConfig,
                model_cfg: Optional[ModelConfig] = None,
                ) -> tuple[AnyModel, list[training.HistoryEntry]]:
    """Initialise and train a model of train's intents."""
    model_cfg = model_cfg or cfg.model
    model = build_model(train.labels, corpus.table.dim, model_cfg, cfg.seed)
    train_enc, valid_enc = corpus.encode(train), corpus.encode(valid)
    if isinstance(model, BaselineRnn):
        return training.train_baseline(model, train_enc, valid_enc, cfg.training)
    return training.train_seen(model, train_enc, valid_enc, cfg.training)


def extend_model(model: IntentSpaceModel, corpus: Corpus, part: Partition,
                 new_labels: Sequence[str], cfg: RunConfig,
                 unseen_sentences: Optional[int] = None, enable_omega: Optional[bool] = None,
                 ) -> tuple[IntentSpaceModel, list[training.HistoryEntry]]:
    """Add new_labels to a trained model using the partition's unseen data."""
    unseen_train = part.unseen_train.restrict(new_labels)
    if unseen_sentences is not None:
        unseen_train = subsample_unseen(unseen_train, unseen_sentences, cfg.seed)
    sample = draw_seen_sample(corpus.encode(part.seen_train), cfg.training.k_reg_sentences,
                              cfg.seed)
    req = ExtensionRequest(list(new_labels), unseen_train, sample, corpus.table, cfg.training,
                           cfg.model.omega if enable_omega is None else enable_omega,
                           part.unseen_valid.restrict(new_labels))
    return add_intents(model, req)


def _test_set(corpus: Corpus, part: Partition, new_labels: Sequence[str],
              ) -> list[EncodedExample]:
    return corpus.encode(part.seen_test) + corpus.encode(part.unseen_test.restrict(new_labels))


def _row(name: str, report: EvalReport, **extra) -> dict[str, Any]:
    row = {'name': name, 'seen_accuracy': report.seen_accuracy,
           'unseen_accuracy': report.unseen_accuracy}
    row.update(extra)
    return row


def _averages(rows: list[dict[str, Any]], key: str) -> Optional[float]:
    values = [r[key] for r in rows if r.get(key) is not None]
    return round(float(np.mean(values)), 2) if values else None


def run_configuration(corpus: Corpus, unseen_labels: Sequence[str], cfg: RunConfig,
                      model_cfg: Optional[ModelConfig] = None,
                      ) -> tuple[IntentSpaceModel, EvalReport]:
    """Train on the seen intents, add unseen_labels and evaluate on the test split."""
    part = partition(corpus, unseen_labels, cfg)
    model, _ = train_model(corpus, part.seen_train, part.seen_valid, cfg, model_cfg)
    ext, _ = extend_model(model, corpus, part, unseen_labels, cfg,
                          cfg.split.unseen_sentences)
    return ext, evaluate(ext, _test_set(corpus, part, unseen_labels), unseen_labels)


def run_table1(corpus: Corpus, cfg: RunConfig, unseen: str = 'GetWeather') -> dict[str, Any]:
    """Baseline, Euclidean and simplex spaces with one unseen intent."""
    part = partition(corpus, [unseen], cfg)
    rows = []
    baseline_cfg = ModelConfig(**{**asdict(cfg.model), 'architecture': 'baseline'})
    rnn, _ = train_model(corpus, part.seen_train, part.seen_valid, cfg, baseline_cfg)
    rows.append(_row('baseline', evaluate(rnn, corpus.encode(part.seen_test))))
    for mode in (SpaceMode.EUCLIDEAN, SpaceMode.SIMPLEX):
        model_cfg = ModelConfig(**{**asdict(cfg.model), 'architecture': 'intent-space',
                                   'mode': mode.value})
        _, report = run_configuration(corpus, [unseen], cfg, model_cfg)
        rows.append(_row(mode.value, report))
        logging.info('%s: seen %s, unseen %s', mode.value, report.seen_accuracy,
                     report.unseen_accuracy)
    return {'experiment': 'table1', 'unseen': unseen, 'rows': rows}


def run_table2(corpus: Corpus, cfg: RunConfig,
               intents: Optional[Sequence[str]] = None) -> dict[str, Any]:
    """Hold out each intent in turn."""
    rows = []
    weighted = []
    for label in intents or corpus.dataset.labels:
        _, report = run_configuration(corpus, [label], cfg)
        rows.append(_row(label, report, weighted_average=report.weighted_average))
        weighted.append((report.weighted_average, sum(report.sentences.values())))
        logging.info('%s: seen %s, unseen %s', label, report.seen_accuracy,
                     report.unseen_accuracy)
    total = sum(n for _, n in weighted)
    return {
        'experiment': 'table2',
        'rows': rows,
        'average_seen': _averages(rows, 'seen_accuracy'),
        'average_unseen': _averages(rows, 'unseen_accuracy'),
        'weighted_average': round(sum(a * n for a, n in weighted) / total, 2),
    }


def run_table3(corpus: Corpus, cfg: RunConfig, sizes: Sequence[int] = TABLE3_SIZES,
               unseen: str = 'GetWeather') -> dict[str, Any]:
    """Vary the number of unseen-intent training sentences; the seen model is shared."""
    part = partition(corpus, [unseen], cfg)
    model, _ = train_model(corpus, part.seen_train, part.seen_valid, cfg)
    rows = []
    for size in sizes:
        if size == 0:
            report = evaluate(model, corpus.encode(part.seen_test))
        else:
            ext, _ = extend_model(model, corpus, part, [unseen], cfg, size)
            report = evaluate(ext, _test_set(corpus, part, [unseen]), [unseen])
        rows.append(_row(str(size), report, sentences=size))
        logging.info('%d sentences: seen %s, unseen %s', size, report.seen_accuracy,
                     report.unseen_accuracy)
    return {'experiment': 'table3', 'unseen': unseen, 'rows': rows}


def coordinate_argmax(model: IntentSpaceModel, label: str) -> str:
    """Label of the basis contributing most to an intent."""
    row = model.coords.alpha()[model.label_id(label)]
    return model.labels[int(np.argmax(row))]


def run_two_intents(corpus: Corpus, cfg: RunConfig,
                    unseen: Sequence[str] = ('BookRestaurant', 'RateBook')) -> dict[str, Any]:
    """Add two intents jointly and one at a time, and compare their main contributors."""
    part = partition(corpus, unseen, cfg)
    model, _ = train_model(corpus, part.seen_train, part.seen_valid, cfg)
    joint, _ = extend_model(model, corpus, part, unseen, cfg, cfg.split.unseen_sentences)
    report = evaluate(joint, _test_set(corpus, part, unseen), unseen)
    contributors = {}
    for label in unseen:
        single, _ = extend_model(model, corpus, part, [label], cfg, None)
        together, alone = coordinate_argmax(joint, label), coordinate_argmax(single, label)
        contributors[label] = {
            'joint': together,
            'independent': alone,
            'agree': together == alone,
            'joint_coordinates': joint.coords.alpha()[joint.label_id(label)].tolist(),
            'independent_coordinates': single.coords.alpha()[single.label_id(label)].tolist(),
        }
    return {'experiment': 'two-intents', 'rows': [_row('+'.join(unseen), report)],
            'contributors': contributors}


def run_seen_only(corpus: Corpus, cfg: RunConfig) -> dict[str, Any]:
    """Baseline RNN against the intent space on all intents, nothing held out."""
    part = partition(corpus, [], cfg)
    rows = []
    for arch in ('baseline', 'intent-space'):
        model_cfg = ModelConfig(**{**asdict(cfg.model), 'architecture': arch})
        model, _ = train_model(corpus, part.seen_train, part.seen_valid, cfg, model_cfg)
        rows.append(_row(arch, evaluate(model, corpus.encode(part.seen_test))))
    return {'experiment': 'seen-only', 'rows': rows}


EXPERIMENTS = {
    'table1': run_table1,
    'table2': run_table2,
    'table3': run_table3,
    'two-intents': run_two_intents,
    'seen-only': run_seen_only,
}


def write_report(path: str, report: dict[str, Any]):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(report, f, indent=2)
        f.write('\n')
