"""Losses, regularisers, analytic gradients and the training loops.

Gradients are computed by backpropagation through time over the intent-dependent
recurrences. The recurrent-matrix gradients of a whole batch are accumulated per intent first
and mapped onto bases, coordinates and expansions once per batch.
"""

import concurrent.futures
import csv
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from intentspace.data import EncodedExample
from intentspace.errors import ConfigError, EmptyInputError, EvalError
from intentspace.mathcore import DTYPE, check_finite, grad_check, make_rng, softmax_backward
from intentspace.model import (BaselineRnn, BasisForm, Block, ForwardTrace, IntentSpaceModel,
                               ScorerKind, SpaceMode, add_expansions, append_intents,
                               baseline_forward, baseline_states, composed_offsets,
                               composed_recurrent, init_model, predict_top1, trace_sentence)
from intentspace.optim import SGD, Adam

# Parameters that weight decay applies to
DECAYED = frozenset({'bases', 'V', 'b', 'U', 'a', 'd', 'A'})

# Phase tags used in training histories
PHASE_W = 'W'
PHASE_ALPHA = 'alpha'
PHASE_OMEGA = 'omega'

HISTORY_FIELDS = ('step', 'epoch', 'phase', 'train_loss', 'seen_acc', 'unseen_acc')

AnyModel = Union[IntentSpaceModel, BaselineRnn]


@dataclass
class TrainingConfig:
    """Optimiser, schedule and objective settings."""

    optimizer: str = 'sgd'
    lr: Optional[float] = None
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    interleave_epochs: int = 5
    max_epochs_seen: int = 50
    max_epochs_coords: int = 150
    max_epochs_omega: int = 500
    epsilon: float = 0.20
    zeta: float = 1.00
    early_stop_patience: int = 5
    batch_size: int = 16
    seed: int = 0
    k_reg_sentences: int = 50
    workers: int = 1

    def __post_init__(self):
        if self.optimizer not in ('sgd', 'adam'):
            raise ConfigError(f'training.optimizer: unknown optimizer {self.optimizer}')
        if self.lr is not None and self.lr <= 0:
            raise ConfigError('training.lr must be positive')
        for name in ('interleave_epochs', 'max_epochs_seen', 'max_epochs_coords',
                     'max_epochs_omega', 'early_stop_patience', 'batch_size',
                     'k_reg_sentences', 'workers'):
            if getattr(self, name) < 1:
                raise ConfigError(f'training.{name} must be positive')
        if self.epsilon < 0 or self.zeta < 0:
            raise ConfigError('training.epsilon and training.zeta must be non-negative')

    @property
    def learning_rate(self) -> float:
        if self.lr is not None:
            return self.lr
        return 0.05 if self.optimizer == 'sgd' else 1e-3

    def make_optimizer(self) -> Union[SGD, Adam]:
        if self.optimizer == 'sgd':
            return SGD(self.learning_rate, self.weight_decay)
        return Adam(self.learning_rate, self.beta1, self.beta2, self.adam_eps,
                    self.weight_decay)


@dataclass(frozen=True)
class ParamSelector:
    """Parameter blocks to train, optionally restricted to some intents' rows."""

    blocks: frozenset
    intents: Optional[frozenset] = None

    def __post_init__(self):
        if not self.blocks:
            raise ConfigError('no parameter blocks selected')

    def param_names(self, model: IntentSpaceModel) -> list[str]:
        names = []
        for block in Block:
            if block not in self.blocks:
                continue
            for name in model.param_names(block):
                if (name.startswith('omega.') and self.intents is not None
                        and int(name.split('.', 1)[1]) not in self.intents):
                    continue
                names.append(name)
        return names

    def rows(self, model: IntentSpaceModel, name: str) -> Optional[np.ndarray]:
        """Rows of a per-intent tensor that may change; None means the whole tensor."""
        if self.intents is None or name.startswith('omega.') or not model.per_intent(name):
            return None
        return np.array(sorted(self.intents), dtype=int)

    def needs_recurrence(self) -> bool:
        return bool(self.blocks & {Block.BASES, Block.COORDINATES, Block.EXPANSIONS,
                                   Block.INPUT})

    def active_intents(self, model: IntentSpaceModel) -> np.ndarray:
        """Intents whose recurrences must be back-propagated."""
        if not self.needs_recurrence():
            return np.array([], dtype=int)
        if self.intents is None or self.blocks & {Block.BASES, Block.INPUT}:
            return np.arange(model.num_intents)
        return np.array(sorted(self.intents), dtype=int)


@dataclass
class ObjectiveTerms:
    """What the objective is made of for one mini-batch.

    With no new intents the objective is the plain NLL of batch. Otherwise it is the NLL of
    batch plus epsilon times the rank-preservation term over seen_sample and zeta times the
    coordinate regulariser over the new intents.
    """

    batch: Sequence[EncodedExample]
    seen_sample: Sequence[EncodedExample] = ()
    new_intents: tuple[int, ...] = ()
    epsilon: float = 0.0
    zeta: float = 0.0


def _label_ids(model: AnyModel, examples: Sequence[EncodedExample]) -> list[int]:
    index = {label: i for i, label in enumerate(model.labels)}
    try:
        return [index[ex.intent] for ex in examples]
    except KeyError as e:
        raise EvalError(f'intent {e.args[0]} is not in the model') from None


def _seen_mask(model: IntentSpaceModel, unseen_ids: Sequence[int]) -> np.ndarray:
    mask = np.ones(model.num_intents, dtype=bool)
    mask[list(unseen_ids)] = False
    if not mask.any():
        raise ConfigError('no seen intents left for the rank-preservation term')
    return mask


def _nll_scores(scores: np.ndarray, y: int, weight: float) -> tuple[float, np.ndarray]:
    """Value and score gradient of weight * -log P(y)."""
    total = np.sum(scores)
    dS = np.full_like(scores, weight / total)
    dS[y] -= weight / scores[y]
    return weight * (math.log(total) - math.log(scores[y])), dS


def _rank_scores(scores: np.ndarray, seen: np.ndarray, unseen_ids: Sequence[int],
                 weight: float, k: int) -> tuple[float, np.ndarray]:
    """Value and score gradient of weight times one sentence's rank-preservation share."""
    seen_ids = np.flatnonzero(seen)
    m = seen_ids[np.argmax(scores[seen_ids])]
    u = len(unseen_ids)
    dS = np.zeros_like(scores)
    value = 0.0
    for c in unseen_ids:
        value -= math.log(scores[m]) - math.log(scores[c])
        dS[c] += weight / (k * u * scores[c])
    dS[m] -= weight / (k * scores[m])
    return weight * value / (k * u), dS


def loss_nll(model: IntentSpaceModel, batch: Sequence[EncodedExample]) -> float:
    """Mean negative log-probability of the reference intents."""
    if not batch:
        raise EmptyInputError('empty batch')
    recurrent = composed_recurrent(model)
    total = 0.0
    for ex, y in zip(batch, _label_ids(model, batch)):
        scores = trace_sentence(model, ex.inputs, recurrent=recurrent).scores
        total += _nll_scores(scores, y, 1.0)[0]
    return total / len(batch)


def reg_rank_preservation(model: IntentSpaceModel, seen_sample: Sequence[EncodedExample],
                          unseen_ids: Sequence[int]) -> float:
    """Mean log-ratio penalty keeping unseen scores below the best seen score."""
    if not seen_sample or not unseen_ids:
        raise EmptyInputError('rank preservation needs sentences and unseen intents')
    seen = _seen_mask(model, unseen_ids)
    recurrent = composed_recurrent(model)
    total = 0.0
    for ex in seen_sample:
        scores = trace_sentence(model, ex.inputs, recurrent=recurrent).scores
        total += _rank_scores(scores, seen, unseen_ids, 1.0, len(seen_sample))[0]
    return total


def _coordinate_penalty(model: IntentSpaceModel, intents: Sequence[int],
                        ) -> tuple[float, np.ndarray]:
    """reg_coordinates and its gradient with respect to beta."""
    intents = list(intents)
    dbeta = np.zeros_like(model.coords.beta)
    if not intents:
        return 0.0, dbeta
    n = len(intents)
    alpha = model.coords.alpha()[intents]
    if model.mode == SpaceMode.SIMPLEX:
        count = alpha.shape[1]
        logs = np.log(np.maximum(alpha, np.finfo(DTYPE).tiny))
        value = float(np.sum(alpha * logs) / n + math.log(count))
        dbeta[intents] = softmax_backward(alpha, (logs + 1.0) / n)
    else:
        value = float(np.sum(alpha * alpha) / n)
        dbeta[intents] = 2.0 * alpha / n
    return value, dbeta


def reg_coordinates(model: IntentSpaceModel, intents: Sequence[int]) -> float:
    """Mean KL to uniform (simplex) or mean squared norm (Euclidean) of coordinates."""
    return _coordinate_penalty(model, intents)[0]


def combine_objective(nll: float, rank: float, coords: float, epsilon: float,
                      zeta: float) -> float:
    return nll + epsilon * rank + zeta * coords


def objective(model: IntentSpaceModel, terms: ObjectiveTerms) -> float:
    """Value of the training objective described by terms."""
    nll = loss_nll(model, terms.batch)
    if not terms.new_intents:
        return nll
    rank = (reg_rank_preservation(model, terms.seen_sample, terms.new_intents)
            if terms.epsilon and terms.seen_sample else 0.0)
    return combine_objective(nll, rank, reg_coordinates(model, terms.new_intents),
                             terms.epsilon, terms.zeta)


@dataclass
class _SentenceGrad:
    """Gradient contributions of one sentence."""

    value: float
    intents: np.ndarray
    dU: Optional[np.ndarray] = None
    doffsets: Optional[np.ndarray] = None
    dV: Optional[np.ndarray] = None
    db: Optional[np.ndarray] = None
    da: Optional[np.ndarray] = None
    dd: Optional[np.ndarray] = None


def _sentence_backward(model: IntentSpaceModel, trace: ForwardTrace, value: float,
                       dS: np.ndarray, selector: ParamSelector, active: np.ndarray,
                       ) -> _SentenceGrad:
    """Back-propagate dL/dS through the scorer and the active intents' recurrences."""
    out = _SentenceGrad(value, active)
    s = trace.scores
    g = dS * s * (1.0 - s)
    h_T = trace.states[-1]
    if Block.SCORER in selector.blocks:
        if model.scorer.kind == ScorerKind.SHARED:
            out.da = g @ h_T
            out.dd = np.asarray(np.sum(g))
        else:
            out.da = g[:, None] * h_T
            out.dd = g.copy()
    if not len(active):
        return out

    want_input = Block.INPUT in selector.blocks
    x = trace.inputs
    U = trace.recurrent[active]
    states = trace.states[:, active]
    H = model.hidden_size
    dU = np.zeros((len(active), H, H), dtype=DTYPE)
    doff = np.zeros((len(active), H), dtype=DTYPE)
    dV = np.zeros_like(model.V) if want_input else None
    db = np.zeros_like(model.b) if want_input else None
    dh = g[active, None] * trace.scorer_a[active]
    for t in range(x.shape[0], 0, -1):
        h = states[t]
        dz = dh * h * (1.0 - h)
        dU += np.einsum('ni,nj->nij', dz, states[t - 1])
        doff += dz
        if want_input:
            dz_sum = dz.sum(axis=0)
            dV += np.outer(dz_sum, x[t - 1])
            db += dz_sum
        dh = np.einsum('nji,nj->ni', U, dz)
    out.dU, out.doffsets, out.dV, out.db = dU, doff, dV, db
    return out


def _map_composition(model: IntentSpaceModel, dU: np.ndarray, doff: np.ndarray,
                     active: np.ndarray, selector: ParamSelector) -> dict[str, np.ndarray]:
    """Turn per-intent recurrent gradients into basis, coordinate and expansion gradients."""
    grads = {}
    alpha = model.coords.alpha()
    dalpha = np.zeros_like(alpha)
    bases = model.bases

    if bases.form == BasisForm.VECTOR_BIAS:
        dalpha[active] = doff[active] @ bases.tensors.T
        if Block.BASES in selector.blocks:
            grads['bases'] = alpha[active].T @ doff[active]
        if Block.INPUT in selector.blocks:
            grads['U'] = dU[active].sum(axis=0)
    else:
        W = bases.matrices()
        dW = np.zeros_like(W)
        expanded = [c for c in active if c in model.expansions.omega]
        plain = [c for c in active if c not in model.expansions.omega]
        if plain:
            dalpha[plain] = np.einsum('cij,bij->cb', dU[plain], W)
            dW += np.einsum('cb,cij->bij', alpha[plain], dU[plain])
        for c in expanded:
            omega = model.expansions.omega[c]
            dalpha[c] = np.einsum('ik,bij,bjk->b', dU[c], omega, W)
            dW += np.einsum('b,bij,ik->bjk', alpha[c], omega, dU[c])
            name = f'omega.{c}'
            if name in selector.param_names(model):
                grads[name] = alpha[c][:, None, None] * np.einsum('ik,bjk->bij', dU[c], W)
        if Block.BASES in selector.blocks:
            if bases.form == BasisForm.REDUCED_RANK:
                sym = dW + dW.transpose(0, 2, 1)
                grads['bases'] = np.einsum('bij,bkj->bki', sym, bases.tensors)
            else:
                grads['bases'] = dW

    if Block.COORDINATES in selector.blocks:
        if model.mode == SpaceMode.SIMPLEX:
            grads['beta'] = softmax_backward(alpha, dalpha)
        else:
            grads['beta'] = dalpha
    return grads


def _map_pool(fn: Callable, items: Sequence, workers: int) -> list:
    """Map fn over items, in a thread pool when workers > 1; results keep input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def backward(model: IntentSpaceModel, terms: ObjectiveTerms, selector: ParamSelector,
             workers: int = 1) -> tuple[float, dict[str, np.ndarray]]:
    """Objective value and analytic gradients for exactly the selected parameters.

    Rows of per-intent tensors outside the selector's intents are zero.
    """
    if not terms.batch:
        raise EmptyInputError('empty batch')
    C, H = model.num_intents, model.hidden_size
    recurrent = composed_recurrent(model)
    offsets = composed_offsets(model)
    active = selector.active_intents(model)
    use_rank = bool(terms.new_intents) and terms.epsilon > 0 and bool(terms.seen_sample)
    seen = _seen_mask(model, terms.new_intents) if use_rank else None

    jobs = [(ex.inputs, y, False) for ex, y in zip(terms.batch, _label_ids(model, terms.batch))]
    if use_rank:
        jobs.extend((ex.inputs, -1, True) for ex in terms.seen_sample)

    def run(job) -> _SentenceGrad:
        inputs, y, is_rank = job
        trace = trace_sentence(model, inputs, recurrent=recurrent, offsets=offsets)
        if is_rank:
            value, dS = _rank_scores(trace.scores, seen, terms.new_intents, terms.epsilon,
                                     len(terms.seen_sample))
        else:
            value, dS = _nll_scores(trace.scores, y, 1.0 / len(terms.batch))
        return _sentence_backward(model, trace, value, dS, selector, active)

    parts = _map_pool(run, jobs, workers)

    # Reduce in input order
    value = 0.0
    dU = np.zeros((C, H, H), dtype=DTYPE)
    doff = np.zeros((C, H), dtype=DTYPE)
    da = dd = dV = db = None
    for part in parts:
        value += part.value
        if len(active):
            dU[active] += part.dU
            doff[active] += part.doffsets
        if part.da is not None:
            da = part.da if da is None else da + part.da
            dd = part.dd if dd is None else dd + part.dd
        if part.dV is not None:
            dV = part.dV if dV is None else dV + part.dV
            db = part.db if db is None else db + part.db

    grads = {}
    if len(active):
        grads.update(_map_composition(model, dU, doff, active, selector))
    if Block.INPUT in selector.blocks:
        grads['V'] = dV if dV is not None else np.zeros_like(model.V)
        grads['b'] = db if db is not None else np.zeros_like(model.b)
    if Block.SCORER in selector.blocks:
        grads['a'] = da
        grads['d'] = dd

    if terms.new_intents:
        penalty, dbeta = _coordinate_penalty(model, terms.new_intents)
        value += terms.zeta * penalty
        if 'beta' in grads:
            grads['beta'] = grads['beta'] + terms.zeta * dbeta

    for name in list(grads):
        rows = selector.rows(model, name)
        if rows is not None:
            masked = np.zeros_like(grads[name])
            masked[rows] = grads[name][rows]
            grads[name] = masked
    return value, grads


def baseline_loss(rnn: BaselineRnn, batch: Sequence[EncodedExample]) -> float:
    if not batch:
        raise EmptyInputError('empty batch')
    total = 0.0
    for ex, y in zip(batch, _label_ids(rnn, batch)):
        total -= math.log(baseline_forward(rnn, ex.inputs)[y])
    return total / len(batch)


def baseline_backward(rnn: BaselineRnn, batch: Sequence[EncodedExample],
                      ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean NLL and gradients for every trainable baseline tensor."""
    if not batch:
        raise EmptyInputError('empty batch')
    grads = {name: np.zeros_like(rnn.get_param(name)) for name in ('U', 'V', 'b', 'A', 'd')}
    n = len(batch)
    value = 0.0
    for ex, y in zip(batch, _label_ids(rnn, batch)):
        states = baseline_states(rnn, ex.inputs)
        h_T = states[-1]
        logits = rnn.A @ h_T + rnn.d
        probs = np.exp(logits - np.max(logits))
        probs /= np.sum(probs)
        value -= math.log(probs[y]) / n
        dlogits = probs.copy()
        dlogits[y] -= 1.0
        dlogits /= n
        grads['A'] += np.outer(dlogits, h_T)
        grads['d'] += dlogits
        dh = rnn.A.T @ dlogits
        for t in range(ex.inputs.shape[0], 0, -1):
            h = states[t]
            dz = dh * h * (1.0 - h)
            grads['U'] += np.outer(dz, states[t - 1])
            grads['V'] += np.outer(dz, ex.inputs[t - 1])
            grads['b'] += dz
            dh = rnn.U.T @ dz
    return value, grads


def apply_gradients(model: AnyModel, grads: dict[str, np.ndarray], optimizer,
                    rows: Optional[Callable[[str], Optional[np.ndarray]]] = None):
    """Update parameters from grads; only the given rows of per-intent tensors change."""
    for name, grad in grads.items():
        param = model.get_param(name)
        sel = rows(name) if rows else None
        decay = name in DECAYED
        if sel is None:
            new = optimizer.step(name, param, grad, decay)
        else:
            new = param.copy()
            new[sel] = optimizer.step(name, param[sel], grad[sel], decay)
        model.set_param(name, check_finite(np.asarray(new, dtype=DTYPE), name))


def check_model_gradients(model: IntentSpaceModel, terms: ObjectiveTerms,
                          selector: ParamSelector, eps: float = 1e-5) -> dict[str, float]:
    """Maximum relative error of each selected gradient against central differences."""
    _, grads = backward(model, terms, selector)
    perturbed = model.copy()
    errors = {}
    for name, grad in grads.items():
        original = perturbed.get_param(name).copy()
        rows = selector.rows(model, name)
        point = original if rows is None else original[rows]
        analytic = grad if rows is None else grad[rows]

        def f(p, name=name, original=original, rows=rows):
            full = p.copy() if rows is None else original.copy()
            if rows is not None:
                full[rows] = p
            perturbed.set_param(name, full)
            return objective(perturbed, terms)

        errors[name] = grad_check(f, point, analytic, eps)
        perturbed.set_param(name, original)
    return errors


def top1_accuracy(model: AnyModel, examples: Sequence[EncodedExample],
                  intents: Optional[Sequence[str]] = None) -> Optional[float]:
    """Fraction of examples (optionally only those of some intents) predicted correctly."""
    if intents is not None:
        keep = frozenset(intents)
        examples = [ex for ex in examples if ex.intent in keep]
    if not examples:
        return None
    ids = _label_ids(model, examples)
    if isinstance(model, BaselineRnn):
        preds = [int(np.argmax(baseline_forward(model, ex.inputs))) for ex in examples]
    else:
        recurrent = composed_recurrent(model)
        preds = [predict_top1(model, ex.inputs, recurrent) for ex in examples]
    return sum(p == y for p, y in zip(preds, ids)) / len(examples)


@dataclass
class HistoryEntry:
    """One training epoch."""

    step: int
    epoch: int
    phase: str
    train_loss: float
    seen_acc: Optional[float] = None
    unseen_acc: Optional[float] = None


def write_history(path: str, history: Sequence[HistoryEntry]):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        w = csv.writer(f, lineterminator='\n')
        w.writerow(HISTORY_FIELDS)
        for h in history:
            w.writerow([h.step, h.epoch, h.phase, repr(h.train_loss),
                        '' if h.seen_acc is None else repr(h.seen_acc),
                        '' if h.unseen_acc is None else repr(h.unseen_acc)])


@dataclass
class EarlyStopping:
    """Tracks the best monitored value and a snapshot of the parameters that produced it.

    An epoch that only equals the best value replaces the snapshot when its tiebreak is at
    least as high as the snapshot's, but still counts towards the patience.
    """

    patience: int
    best: float = -math.inf
    best_tiebreak: float = -math.inf
    bad_epochs: int = 0
    snapshot: dict[str, np.ndarray] = field(default_factory=dict)

    def update(self, metric: float, model: AnyModel, names: Sequence[str],
               tiebreak: float = 0.0) -> bool:
        """Record metric; True when training should stop."""
        if metric > self.best or (metric == self.best and tiebreak >= self.best_tiebreak):
            self.snapshot = {n: model.get_param(n).copy() for n in names}
            self.best_tiebreak = tiebreak
        if metric > self.best:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    def restore(self, model: AnyModel):
        for name, value in self.snapshot.items():
            model.set_param(name, value)


def run_epoch(model: AnyModel, examples: Sequence[EncodedExample], rng: np.random.Generator,
              batch_size: int, step_fn: Callable[[list, int], tuple[float, dict]],
              apply_fn: Callable[[dict], None]) -> float:
    """One shuffled pass over examples; returns the mean batch objective."""
    order = rng.permutation(len(examples))
    losses = []
    for i, start in enumerate(range(0, len(examples), batch_size)):
        batch = [examples[j] for j in order[start:start + batch_size]]
        value, grads = step_fn(batch, i)
        apply_fn(grads)
        losses.append(value)
        logging.debug('batch %d loss %.6f', i, value)
    return float(np.mean(losses))


def train_seen(model: IntentSpaceModel, train: Sequence[EncodedExample],
               valid: Sequence[EncodedExample], cfg: TrainingConfig,
               ) -> tuple[IntentSpaceModel, list[HistoryEntry]]:
    """Interleaved seen-intent training, in place.

    Bases, input and scorer are trained for interleave_epochs epochs with the coordinates
    fixed, then the coordinates with everything else fixed, alternating until early stopping
    on validation accuracy or max_epochs_seen epochs. The best parameters are restored.
    """
    if not train:
        raise EmptyInputError('no training examples')
    monitor_set = valid if valid else train
    rng = make_rng(cfg.seed)
    optimizer = cfg.make_optimizer()
    phases = [(PHASE_W, ParamSelector(frozenset({Block.BASES, Block.INPUT, Block.SCORER}))),
              (PHASE_ALPHA, ParamSelector(frozenset({Block.COORDINATES})))]
    trainable = sorted({n for _, sel in phases for n in sel.param_names(model)})
    stopper = EarlyStopping(cfg.early_stop_patience)
    history = []
    epoch = 0
    step = 0
    stop = False
    while not stop and epoch < cfg.max_epochs_seen:
        phase, selector = phases[step % 2]
        for _ in range(cfg.interleave_epochs):
            if epoch >= cfg.max_epochs_seen:
                break
            epoch += 1
            loss = run_epoch(
                model, train, rng, cfg.batch_size,
                lambda batch, _i, sel=selector: backward(model, ObjectiveTerms(batch), sel,
                                                         cfg.workers),
                lambda grads, sel=selector: apply_gradients(
                    model, grads, optimizer, lambda n: sel.rows(model, n)))
            acc = top1_accuracy(model, monitor_set)
            history.append(HistoryEntry(step, epoch, phase, loss, acc))
            logging.info('%s epoch %d: loss %.4f, accuracy %.4f', phase, epoch, loss, acc)
            if stopper.update(acc, model, trainable):
                logging.info('Stopping early after epoch %d', epoch)
                stop = True
                break
        step += 1
    stopper.restore(model)
    return model, history


def train_baseline(rnn: BaselineRnn, train: Sequence[EncodedExample],
                   valid: Sequence[EncodedExample], cfg: TrainingConfig,
                   ) -> tuple[BaselineRnn, list[HistoryEntry]]:
    """Train a softmax RNN in place with early stopping on validation accuracy."""
    if not train:
        raise EmptyInputError('no training examples')
    monitor_set = valid if valid else train
    rng = make_rng(cfg.seed)
    optimizer = cfg.make_optimizer()
    names = ['U', 'V', 'b', 'A', 'd']
    stopper = EarlyStopping(cfg.early_stop_patience)
    history = []
    for epoch in range(1, cfg.max_epochs_seen + 1):
        loss = run_epoch(rnn, train, rng, cfg.batch_size,
                         lambda batch, _i: baseline_backward(rnn, batch),
                         lambda grads: apply_gradients(rnn, grads, optimizer))
        acc = top1_accuracy(rnn, monitor_set)
        history.append(HistoryEntry(0, epoch, PHASE_W, loss, acc))
        logging.info('baseline epoch %d: loss %.4f, accuracy %.4f', epoch, loss, acc)
        if stopper.update(acc, rnn, names):
            logging.info('Stopping early after epoch %d', epoch)
            break
    stopper.restore(rnn)
    return rnn, history


# Largest relative error accepted by the gradient check
GRAD_CHECK_TOLERANCE = 1e-4


def gradient_check_instance(seed: int = 0, form: BasisForm = BasisForm.FULL_MATRIX,
                            mode: SpaceMode = SpaceMode.SIMPLEX,
                            scorer: ScorerKind = ScorerKind.SHARED, hidden_size: int = 6,
                            input_size: int = 4, words: int = 3,
                            ) -> tuple[IntentSpaceModel, ObjectiveTerms]:
    """A small random model with two seen intents, one added intent and a full objective."""
    rng = make_rng(seed)
    model = init_model(['first', 'second'], input_size, hidden_size, form,
                       2 if form == BasisForm.REDUCED_RANK else None, mode, scorer, seed,
                       init_scale=0.5)
    (new,) = append_intents(model, ['added'], seed)
    model.coords.beta = model.coords.beta + rng.normal(0.0, 0.5, size=model.coords.beta.shape)
    if form != BasisForm.VECTOR_BIAS:
        add_expansions(model, [new])
        omega = model.expansions.omega[new]
        model.expansions.omega[new] = omega + rng.normal(0.0, 0.1, size=omega.shape)

    def sentence(label):
        return EncodedExample(rng.normal(0.0, 1.0, size=(words, input_size)), label)

    batch = [sentence('added'), sentence('first'), sentence('added')]
    sample = [sentence('first'), sentence('second')]
    return model, ObjectiveTerms(batch, sample, (new,), 0.2, 1.0)


def random_gradient_check(seed: int = 0, form: BasisForm = BasisForm.FULL_MATRIX,
                          mode: SpaceMode = SpaceMode.SIMPLEX,
                          scorer: ScorerKind = ScorerKind.SHARED) -> dict[str, float]:
    """Worst relative gradient error per parameter block on a gradient_check_instance()."""
    model, terms = gradient_check_instance(seed, form, mode, scorer)
    results = {}
    for block in Block:
        if block == Block.EXPANSIONS and form == BasisForm.VECTOR_BIAS:
            continue
        errors = check_model_gradients(model, terms, ParamSelector(frozenset({block})))
        results[block.value] = max(errors.values())
        logging.info('%s: max relative error %.3g', block.value, results[block.value])
    return results
