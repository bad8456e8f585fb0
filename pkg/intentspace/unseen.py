"""Adding unseen intents to a trained model and detecting sentences of unseen intents."""

import csv
import enum
import itertools
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from intentspace.data import EncodedExample, LabeledDataset, encode_dataset
from intentspace.embeddings import EmbeddingTable
from intentspace.errors import ConfigError, EmptyInputError, EvalError, RangeError
from intentspace.mathcore import DTYPE, make_rng
from intentspace.model import (Block, IntentSpaceModel, ScorerKind, add_expansions,
                               append_intents, entropy, normalize_coordinates,
                               predict_distribution)
from intentspace.training import (PHASE_ALPHA, PHASE_OMEGA, EarlyStopping, HistoryEntry,
                                  ObjectiveTerms, ParamSelector, TrainingConfig,
                                  apply_gradients, backward, reg_rank_preservation,
                                  run_epoch, top1_accuracy)

# Label of the temporary intent used to estimate a sentence's coordinates
VIRTUAL_LABEL = '<virtual>'

# Fixed procedure for coordinate estimation
ESTIMATE_STEPS = 25
ESTIMATE_LR = 0.1


@dataclass
class ExtensionRequest:
    """New intents and the data needed to place them in an existing intent space."""

    new_labels: list[str]
    unseen_train: LabeledDataset
    seen_sample: list[EncodedExample]
    table: EmbeddingTable
    cfg: TrainingConfig = field(default_factory=TrainingConfig)
    enable_omega: bool = True
    unseen_valid: Optional[LabeledDataset] = None

    def __post_init__(self):
        if not self.new_labels:
            raise EmptyInputError('no intents to add')
        if len(set(self.new_labels)) != len(self.new_labels):
            raise ConfigError('duplicate labels in extension request')
        if not len(self.unseen_train):
            raise EmptyInputError('no training sentences for the new intents')
        if not self.seen_sample:
            raise EmptyInputError('no seen sentences for the rank-preservation term')
        if stray := set(self.unseen_train.counts()) - set(self.new_labels):
            raise ConfigError(f'unseen data has other intents: {", ".join(sorted(stray))}')


class Decision(enum.Enum):
    SEEN = 'seen'
    UNSEEN = 'unseen'


@dataclass(frozen=True)
class DetectionResult:
    """Outcome of a detector: unseen when value exceeds threshold."""

    value: float
    threshold: float
    measure: str = 'entropy'

    @property
    def decision(self) -> Decision:
        return Decision.UNSEEN if self.value > self.threshold else Decision.SEEN


def draw_seen_sample(examples: Sequence[EncodedExample], per_intent: int, seed: int,
                     ) -> list[EncodedExample]:
    """Pick up to per_intent examples of each intent, keeping their original order."""
    if per_intent < 1:
        raise RangeError('sample size must be positive')
    rng = make_rng(seed)
    positions = {}
    for i, ex in enumerate(examples):
        positions.setdefault(ex.intent, []).append(i)
    chosen = []
    for idx in positions.values():
        chosen.extend(rng.choice(idx, size=min(per_intent, len(idx)), replace=False).tolist())
    return [examples[i] for i in sorted(chosen)]


def _extension_phase(model: IntentSpaceModel, phase: str, step: int,
                     selector: ParamSelector, max_epochs: int,
                     train: list[EncodedExample], monitor: list[EncodedExample],
                     seen_sample: list[EncodedExample], new_ids: tuple[int, ...],
                     cfg: TrainingConfig, rng: np.random.Generator, optimizer,
                     history: list[HistoryEntry]):
    names = selector.param_names(model)
    window = min(cfg.batch_size, len(seen_sample))
    counter = itertools.count()

    def step_fn(batch, _i):
        start = next(counter) * window
        sample = [seen_sample[(start + k) % len(seen_sample)] for k in range(window)]
        terms = ObjectiveTerms(batch, sample, new_ids, cfg.epsilon, cfg.zeta)
        return backward(model, terms, selector, cfg.workers)

    stopper = EarlyStopping(cfg.early_stop_patience)
    for epoch in range(1, max_epochs + 1):
        loss = run_epoch(model, train, rng, cfg.batch_size, step_fn,
                         lambda grads: apply_gradients(model, grads, optimizer,
                                                       lambda n: selector.rows(model, n)))
        unseen_acc = top1_accuracy(model, monitor)
        seen_acc = top1_accuracy(model, seen_sample)
        history.append(HistoryEntry(step, epoch, phase, loss, seen_acc, unseen_acc))
        logging.info('%s epoch %d: loss %.4f, rank term %.4f, seen %.4f, unseen %.4f',
                     phase, epoch, loss, reg_rank_preservation(model, seen_sample, new_ids),
                     seen_acc, unseen_acc)
        if stopper.update(unseen_acc, model, names, tiebreak=seen_acc):
            logging.info('Stopping early after epoch %d', epoch)
            break
    stopper.restore(model)


def add_intents(model: IntentSpaceModel, req: ExtensionRequest,
                ) -> tuple[IntentSpaceModel, list[HistoryEntry]]:
    """Return a copy of model extended with req.new_labels.

    Only the new coordinate rows (and new per-intent scorer rows) are estimated, then, when
    enabled, identity-initialised expansion matrices of the new intents. Every tensor model
    already had keeps its exact value; model itself is not modified.
    """
    if clash := set(req.new_labels) & set(model.labels):
        raise ConfigError(f'intents already in the model: {", ".join(sorted(clash))}')
    cfg = req.cfg
    ext = model.copy()
    new_ids = tuple(append_intents(ext, list(req.new_labels), cfg.seed))
    train = encode_dataset(req.table, req.unseen_train)
    monitor = (encode_dataset(req.table, req.unseen_valid)
               if req.unseen_valid is not None and len(req.unseen_valid) else train)
    rng = make_rng(cfg.seed)
    optimizer = cfg.make_optimizer()
    history = []
    logging.info('Adding %s', ', '.join(req.new_labels))

    blocks = {Block.COORDINATES}
    if ext.scorer.kind == ScorerKind.PER_INTENT:
        blocks.add(Block.SCORER)
    _extension_phase(ext, PHASE_ALPHA, 0, ParamSelector(frozenset(blocks), frozenset(new_ids)),
                     cfg.max_epochs_coords, train, monitor, req.seen_sample, new_ids, cfg,
                     rng, optimizer, history)
    if req.enable_omega:
        add_expansions(ext, list(new_ids))
        _extension_phase(ext, PHASE_OMEGA, 1,
                         ParamSelector(frozenset({Block.EXPANSIONS}), frozenset(new_ids)),
                         cfg.max_epochs_omega, train, monitor, req.seen_sample, new_ids, cfg,
                         rng, optimizer, history)
    return ext, history


def detect_by_entropy(model: IntentSpaceModel, sentence, rho: float) -> DetectionResult:
    return DetectionResult(entropy(predict_distribution(model, sentence)), rho)


@dataclass
class RocCurve:
    """Threshold sweep points (threshold, fpr, tpr) from (0, 0) to (1, 1)."""

    points: list[tuple[float, float, float]]
    auc: float
    positives: int
    negatives: int


def roc_from_scores(scores: Sequence[float], is_unseen: Sequence[bool]) -> RocCurve:
    """Sweep a "score > threshold means unseen" rule over every observed score."""
    scores = np.asarray(scores, dtype=DTYPE)
    truth = np.asarray(is_unseen, dtype=bool)
    positives = int(truth.sum())
    negatives = int(len(truth) - positives)
    if not positives or not negatives:
        raise EvalError('ROC needs both seen and unseen sentences')
    thresholds = sorted(set(scores.tolist()), reverse=True) + [-math.inf]
    points = []
    for rho in thresholds:
        flagged = scores > rho
        points.append((rho, float(np.sum(flagged & ~truth) / negatives),
                       float(np.sum(flagged & truth) / positives)))
    auc = sum((x1 - x0) * (y0 + y1) / 2.0
              for (_, x0, y0), (_, x1, y1) in zip(points, points[1:]))
    return RocCurve(points, float(auc), positives, negatives)


def roc_curve(model: IntentSpaceModel, examples: Sequence[EncodedExample],
              unseen_labels: Sequence[str]) -> RocCurve:
    """Entropy ROC for telling sentences of unseen_labels from the rest."""
    unseen = frozenset(unseen_labels)
    entropies = [entropy(predict_distribution(model, ex.inputs)) for ex in examples]
    return roc_from_scores(entropies, [ex.intent in unseen for ex in examples])


def write_roc_csv(path: str, curve: RocCurve):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        w = csv.writer(f, lineterminator='\n')
        w.writerow(('threshold', 'fpr', 'tpr'))
        for rho, fpr, tpr in curve.points:
            w.writerow((repr(rho), repr(fpr), repr(tpr)))


def estimate_sentence_coordinates(model: IntentSpaceModel, sentence,
                                  steps: int = ESTIMATE_STEPS,
                                  lr: float = ESTIMATE_LR) -> np.ndarray:
    """Coordinates of a virtual intent fitted to one sentence, the model otherwise frozen.

    The virtual intent starts uniform over the bases and follows steps plain gradient steps
    on -log P(virtual | sentence). With per-intent scorers it scores with the mean row.
    """
    if steps < 1:
        raise RangeError('steps must be at least 1')
    virtual = model.copy()
    (v,) = append_intents(virtual, [VIRTUAL_LABEL])
    if virtual.scorer.kind == ScorerKind.PER_INTENT:
        virtual.scorer.a[v] = np.mean(virtual.scorer.a[:v], axis=0)
        virtual.scorer.d[v] = np.mean(virtual.scorer.d[:v])
    selector = ParamSelector(frozenset({Block.COORDINATES}), frozenset({v}))
    terms = ObjectiveTerms([EncodedExample(np.asarray(sentence, dtype=DTYPE), VIRTUAL_LABEL)])
    for _ in range(steps):
        _, grads = backward(virtual, terms, selector)
        beta = virtual.coords.beta.copy()
        beta[v] -= lr * grads['beta'][v]
        virtual.coords.beta = beta
    return normalize_coordinates(virtual.coords, v)


def nearest_intent(model: IntentSpaceModel, alpha: np.ndarray) -> tuple[int, float]:
    """Closest known intent by L2 distance between normalised coordinates."""
    rows = model.coords.alpha()
    distances = np.linalg.norm(rows - alpha, axis=1)
    best = int(np.argmin(distances))
    return best, float(distances[best])


def detect_by_coordinates(model: IntentSpaceModel, sentence, threshold: float,
                          steps: int = ESTIMATE_STEPS) -> DetectionResult:
    """Unseen when the sentence's estimated coordinates are far from every known intent."""
    _, distance = nearest_intent(model, estimate_sentence_coordinates(model, sentence, steps))
    return DetectionResult(distance, threshold, 'distance')
