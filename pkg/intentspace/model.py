"""The intent-space classifier and the discrete-softmax baseline RNN.

Intents are points (coordinates) over shared bases. Each intent composes its own recurrent
matrix from the bases, runs its own recurrence over the sentence and is scored by a sigmoid;
scores are normalised over all intents currently in the model.
"""

import copy
import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from intentspace.errors import (DomainError, EmptyInputError, EvalError, ShapeError,
                                UnsupportedFormError)
from intentspace.mathcore import DTYPE, make_rng, sigmoid, softmax

# Default range of the uniform initialisation noise
INIT_SCALE = 0.05

# Logit gap between the diagonal and the rest of a one-hot row in simplex spaces
ONE_HOT_GAP = 10.0


class SpaceMode(enum.Enum):
    """Coordinate constraint."""

    EUCLIDEAN = 'euclidean'
    SIMPLEX = 'simplex'


class BasisForm(enum.Enum):
    """How bases are parameterised."""

    FULL_MATRIX = 'full'
    REDUCED_RANK = 'reduced-rank'
    VECTOR_BIAS = 'vector-bias'


class ScorerKind(enum.Enum):
    """Whether the scoring layer is shared by all intents."""

    SHARED = 'shared'
    PER_INTENT = 'per-intent'


class Block(enum.Enum):
    """Parameter blocks that can be selected for training."""

    BASES = 'bases'
    COORDINATES = 'coordinates'
    EXPANSIONS = 'expansions'
    INPUT = 'input'
    SCORER = 'scorer'


@dataclass
class BasisSet:
    """Shared bases.

    tensors holds (B, H, H) matrices for the full form, (B, K, H) factors for the reduced-rank
    form and (B, H) vectors for the vector-bias form, which also owns a shared recurrent
    matrix.
    """

    form: BasisForm
    tensors: np.ndarray
    shared_recurrent: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        return self.tensors.shape[0]

    @property
    def rank(self) -> Optional[int]:
        return self.tensors.shape[1] if self.form == BasisForm.REDUCED_RANK else None

    def matrices(self) -> np.ndarray:
        """Basis matrices W_b, shape (B, H, H)."""
        if self.form == BasisForm.FULL_MATRIX:
            return self.tensors
        if self.form == BasisForm.REDUCED_RANK:
            return np.einsum('bki,bkj->bij', self.tensors, self.tensors)
        raise UnsupportedFormError('vector bases have no matrix form')


@dataclass
class CoordinateBlock:
    """Unnormalised coordinates, one row per intent."""

    beta: np.ndarray
    mode: SpaceMode

    def alpha(self) -> np.ndarray:
        """All normalised coordinate rows, shape (C, B)."""
        if self.mode == SpaceMode.SIMPLEX:
            return softmax(self.beta, axis=-1)
        return self.beta


def normalize_coordinates(coords: CoordinateBlock, c: int) -> np.ndarray:
    if coords.mode == SpaceMode.SIMPLEX:
        return softmax(coords.beta[c])
    return coords.beta[c]


@dataclass
class ExpansionBlock:
    """Expansion matrices Omega_{c,b}, stored as (B, H, H) per expanded intent."""

    omega: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class ScorerParams:
    """Scoring layer: a and d shared, or one row per intent."""

    kind: ScorerKind
    a: np.ndarray
    d: np.ndarray

    def rows(self, intents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Scorer weights and offsets for the given intents."""
        if self.kind == ScorerKind.SHARED:
            return (np.broadcast_to(self.a, (len(intents), self.a.shape[0])),
                    np.broadcast_to(self.d, (len(intents),)))
        return self.a[intents], self.d[intents]


@dataclass
class IntentSpaceModel:
    """Intent-space RNN classifier."""

    V: np.ndarray
    b: np.ndarray
    bases: BasisSet
    coords: CoordinateBlock
    expansions: ExpansionBlock
    scorer: ScorerParams
    labels: list[str]
    h0: np.ndarray
    seen_count: int = 0

    @property
    def hidden_size(self) -> int:
        return self.V.shape[0]

    @property
    def input_size(self) -> int:
        return self.V.shape[1]

    @property
    def num_intents(self) -> int:
        return len(self.labels)

    @property
    def mode(self) -> SpaceMode:
        return self.coords.mode

    def label_id(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise EvalError(f'intent {label} is not in the model') from None

    def copy(self) -> 'IntentSpaceModel':
        return copy.deepcopy(self)

    def param_names(self, block: Block) -> list[str]:
        """Names of the parameter tensors making up a block."""
        if block == Block.BASES:
            return ['bases']
        if block == Block.COORDINATES:
            return ['beta']
        if block == Block.EXPANSIONS:
            return [f'omega.{c}' for c in sorted(self.expansions.omega)]
        if block == Block.INPUT:
            names = ['V', 'b']
            if self.bases.form == BasisForm.VECTOR_BIAS:
                names.append('U')
            return names
        return ['a', 'd']

    def all_param_names(self) -> list[str]:
        """Every tensor in declared (checkpoint) order."""
        return (self.param_names(Block.INPUT) + ['bases', 'beta', 'a', 'd', 'h0']
                + self.param_names(Block.EXPANSIONS))

    def per_intent(self, name: str) -> bool:
        """True if the tensor's leading axis (or key) is indexed by intent."""
        return (name == 'beta' or name.startswith('omega.')
                or (name in ('a', 'd') and self.scorer.kind == ScorerKind.PER_INTENT))

    def get_param(self, name: str) -> np.ndarray:
        if name.startswith('omega.'):
            return self.expansions.omega[int(name.split('.', 1)[1])]
        holder, attr = self._param_location(name)
        return getattr(holder, attr)

    def set_param(self, name: str, value: np.ndarray):
        current = self.get_param(name)
        if current.shape != value.shape:
            raise ShapeError(f'{name}: shape {value.shape} != {current.shape}')
        if name.startswith('omega.'):
            self.expansions.omega[int(name.split('.', 1)[1])] = value
        else:
            holder, attr = self._param_location(name)
            setattr(holder, attr, value)

    def _param_location(self, name: str) -> tuple[object, str]:
        return {
            'V': (self, 'V'),
            'b': (self, 'b'),
            'h0': (self, 'h0'),
            'U': (self.bases, 'shared_recurrent'),
            'bases': (self.bases, 'tensors'),
            'beta': (self.coords, 'beta'),
            'a': (self.scorer, 'a'),
            'd': (self.scorer, 'd'),
        }[name]


@dataclass
class BaselineRnn:
    """Standard RNN with a softmax over a fixed set of intents."""

    U: np.ndarray
    V: np.ndarray
    b: np.ndarray
    A: np.ndarray
    d: np.ndarray
    h0: np.ndarray
    labels: list[str]

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @property
    def num_intents(self) -> int:
        return len(self.labels)

    def label_id(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise EvalError(f'intent {label} is not in the model') from None

    def copy(self) -> 'BaselineRnn':
        return copy.deepcopy(self)

    def all_param_names(self) -> list[str]:
        return ['U', 'V', 'b', 'A', 'd', 'h0']

    def get_param(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def set_param(self, name: str, value: np.ndarray):
        if getattr(self, name).shape != value.shape:
            raise ShapeError(f'{name}: shape {value.shape} != {getattr(self, name).shape}')
        setattr(self, name, value)


def input_matrix(hidden: int, d_in: int) -> np.ndarray:
    """Identity input matrix; truncated or zero-padded when H != d_in."""
    return np.eye(hidden, d_in, dtype=DTYPE)


def one_hot_coordinates(count: int, mode: SpaceMode, gap: float = ONE_HOT_GAP) -> np.ndarray:
    if mode == SpaceMode.EUCLIDEAN:
        return np.eye(count, dtype=DTYPE)
    return gap * (np.eye(count, dtype=DTYPE) - 1.0)


def uniform_coordinates(rows: int, count: int, mode: SpaceMode) -> np.ndarray:
    """Rows whose normalised coordinates are uniform over the bases."""
    if mode == SpaceMode.EUCLIDEAN:
        return np.full((rows, count), 1.0 / count, dtype=DTYPE)
    return np.zeros((rows, count), dtype=DTYPE)


def init_model(labels: list[str], input_size: int, hidden_size: int = 300,
               form: BasisForm = BasisForm.FULL_MATRIX, rank: Optional[int] = None,
               mode: SpaceMode = SpaceMode.SIMPLEX, scorer: ScorerKind = ScorerKind.SHARED,
               seed: int = 0, init_scale: float = INIT_SCALE,
               one_hot_gap: float = ONE_HOT_GAP) -> IntentSpaceModel:
    """Create a model with one basis per seen intent and one-hot coordinates."""
    if not labels:
        raise EmptyInputError('a model needs at least one intent')
    if hidden_size < 1 or input_size < 1:
        raise ShapeError('sizes must be positive')
    rng = make_rng(seed)
    H = hidden_size
    B = C = len(labels)

    def noise(*shape):
        return np.asarray(rng.uniform(-init_scale, init_scale, size=shape),
                          dtype=DTYPE).reshape(shape)

    V = input_matrix(H, input_size)
    b = noise(H)
    shared_recurrent = None
    if form == BasisForm.FULL_MATRIX:
        tensors = np.eye(H, dtype=DTYPE) + noise(B, H, H)
    elif form == BasisForm.REDUCED_RANK:
        if not rank or rank < 1:
            raise ShapeError('reduced-rank bases need a rank K >= 1')
        tensors = noise(B, rank, H)
    else:
        tensors = noise(B, H)
        shared_recurrent = np.eye(H, dtype=DTYPE) + noise(H, H)

    if scorer == ScorerKind.SHARED:
        a, d = noise(H), noise()
    else:
        a, d = noise(C, H), noise(C)

    return IntentSpaceModel(
        V=V, b=b,
        bases=BasisSet(form, tensors, shared_recurrent),
        coords=CoordinateBlock(one_hot_coordinates(B, mode, one_hot_gap), mode),
        expansions=ExpansionBlock(),
        scorer=ScorerParams(scorer, a, np.asarray(d, dtype=DTYPE)),
        labels=list(labels),
        h0=np.zeros(H, dtype=DTYPE),
        seen_count=C)


def append_intents(model: IntentSpaceModel, names: list[str], seed: int = 0) -> list[int]:
    """Add uniformly-placed intents in place and return their ids.

    Existing tensors are replaced by extended copies; their old rows keep their values.
    """
    U = len(names)
    first = model.num_intents
    B = model.bases.count
    model.coords.beta = np.vstack([model.coords.beta,
                                   uniform_coordinates(U, B, model.mode)])
    if model.scorer.kind == ScorerKind.PER_INTENT:
        rng = make_rng(seed + first)
        model.scorer.a = np.vstack([model.scorer.a, rng.uniform(
            -INIT_SCALE, INIT_SCALE, size=(U, model.hidden_size))])
        model.scorer.d = np.concatenate([model.scorer.d,
                                         rng.uniform(-INIT_SCALE, INIT_SCALE, size=U)])
    model.labels.extend(names)
    return list(range(first, first + U))


def add_expansions(model: IntentSpaceModel, intents: list[int]):
    """Create identity expansion matrices for the given intents."""
    if model.bases.form == BasisForm.VECTOR_BIAS:
        raise UnsupportedFormError('expansions need matrix bases')
    H, B = model.hidden_size, model.bases.count
    for c in intents:
        if c not in model.expansions.omega:
            model.expansions.omega[c] = np.tile(np.eye(H, dtype=DTYPE), (B, 1, 1))


def compose_recurrent(model: IntentSpaceModel, c: int) -> np.ndarray:
    """U_c = sum_b alpha_{c,b} (Omega_{c,b}) W_b."""
    alpha = normalize_coordinates(model.coords, c)
    W = model.bases.matrices()
    if c in model.expansions.omega:
        return np.einsum('b,bij,bjk->ik', alpha, model.expansions.omega[c], W)
    return np.einsum('b,bij->ij', alpha, W)


def compose_bias(model: IntentSpaceModel, c: int) -> np.ndarray:
    """u_c = sum_b alpha_{c,b} w_b for vector bases."""
    if model.bases.form != BasisForm.VECTOR_BIAS:
        raise UnsupportedFormError('bias composition needs vector bases')
    return normalize_coordinates(model.coords, c) @ model.bases.tensors


def composed_recurrent(model: IntentSpaceModel) -> np.ndarray:
    """Recurrent matrices for every intent, shape (C, H, H)."""
    C, H = model.num_intents, model.hidden_size
    if model.bases.form == BasisForm.VECTOR_BIAS:
        return np.broadcast_to(model.bases.shared_recurrent, (C, H, H))
    alpha = model.coords.alpha()
    W = model.bases.matrices()
    U = np.einsum('cb,bij->cij', alpha, W)
    for c, omega in model.expansions.omega.items():
        U[c] = np.einsum('b,bij,bjk->ik', alpha[c], omega, W)
    return U


def composed_offsets(model: IntentSpaceModel) -> Optional[np.ndarray]:
    """Intent offsets for vector bases, shape (C, H); None for matrix bases."""
    if model.bases.form != BasisForm.VECTOR_BIAS:
        return None
    return model.coords.alpha() @ model.bases.tensors


@dataclass
class ForwardTrace:
    """Everything the backward pass needs from one sentence."""

    intents: np.ndarray
    inputs: np.ndarray
    recurrent: np.ndarray
    states: np.ndarray
    scores: np.ndarray
    scorer_a: np.ndarray


def check_sentence(sentence, input_size: int) -> np.ndarray:
    x = np.asarray(sentence, dtype=DTYPE)
    if x.ndim != 2 or x.shape[1] != input_size:
        raise ShapeError(f'sentence shape {x.shape} does not match input size {input_size}')
    if x.shape[0] == 0:
        raise EmptyInputError('empty sentence')
    return x


def trace_sentence(model: IntentSpaceModel, sentence, intents=None,
                   recurrent: Optional[np.ndarray] = None,
                   offsets: Optional[np.ndarray] = None) -> ForwardTrace:
    """Run the intent-dependent recurrences and scorer for some (default all) intents.

    recurrent and offsets may carry precomputed composed_recurrent()/composed_offsets() for
    all intents, which is how training shares one composition across a batch.
    """
    x = check_sentence(sentence, model.input_size)
    ids = np.arange(model.num_intents) if intents is None else np.asarray(intents, dtype=int)
    if recurrent is None:
        recurrent = composed_recurrent(model)
    if offsets is None:
        offsets = composed_offsets(model)
    U = recurrent[ids]
    drive = x @ model.V.T + model.b
    states = np.empty((x.shape[0] + 1, len(ids), model.hidden_size), dtype=DTYPE)
    states[0] = model.h0
    for t in range(x.shape[0]):
        z = np.einsum('nij,nj->ni', U, states[t]) + drive[t]
        if offsets is not None:
            z = z + offsets[ids]
        states[t + 1] = sigmoid(z)
    a, d = model.scorer.rows(ids)
    scores = sigmoid(np.einsum('ni,ni->n', a, states[-1]) + d)
    return ForwardTrace(ids, x, U, states, scores, a)


def forward_intent(model: IntentSpaceModel, sentence, c: int,
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Final state and all states h_{c,0..T} of intent c's recurrence."""
    trace = trace_sentence(model, sentence, [c])
    return trace.states[-1, 0], trace.states[:, 0]


def score(model: IntentSpaceModel, h: np.ndarray, c: int) -> float:
    a, d = model.scorer.rows(np.array([c]))
    return float(sigmoid(a[0] @ h + d[0]))


def predict_distribution(model: IntentSpaceModel, sentence,
                         recurrent: Optional[np.ndarray] = None) -> np.ndarray:
    scores = trace_sentence(model, sentence, recurrent=recurrent).scores
    return scores / np.sum(scores)


def predict_top1(model: IntentSpaceModel, sentence,
                 recurrent: Optional[np.ndarray] = None) -> int:
    """Most probable intent id; ties go to the lowest id."""
    return int(np.argmax(predict_distribution(model, sentence, recurrent)))


def entropy(dist) -> float:
    """Natural-log entropy with 0 log 0 = 0."""
    p = np.asarray(dist, dtype=DTYPE)
    if np.any(p < 0):
        raise DomainError('probabilities must be non-negative')
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def init_baseline(labels: list[str], input_size: int, hidden_size: int = 300, seed: int = 0,
                  init_scale: float = INIT_SCALE) -> BaselineRnn:
    if not labels:
        raise EmptyInputError('a model needs at least one intent')
    rng = make_rng(seed)
    H, C = hidden_size, len(labels)
    return BaselineRnn(
        U=np.eye(H, dtype=DTYPE) + rng.uniform(-init_scale, init_scale, size=(H, H)),
        V=input_matrix(H, input_size),
        b=rng.uniform(-init_scale, init_scale, size=H),
        A=rng.uniform(-init_scale, init_scale, size=(C, H)),
        d=rng.uniform(-init_scale, init_scale, size=C),
        h0=np.zeros(H, dtype=DTYPE),
        labels=list(labels))


def baseline_states(rnn: BaselineRnn, sentence) -> np.ndarray:
    """History states h_0..h_T, shape (T + 1, H)."""
    x = check_sentence(sentence, rnn.V.shape[1])
    drive = x @ rnn.V.T + rnn.b
    states = np.empty((x.shape[0] + 1, rnn.hidden_size), dtype=DTYPE)
    states[0] = rnn.h0
    for t in range(x.shape[0]):
        states[t + 1] = sigmoid(rnn.U @ states[t] + drive[t])
    return states


def baseline_forward(rnn: BaselineRnn, sentence) -> np.ndarray:
    h = baseline_states(rnn, sentence)[-1]
    return softmax(rnn.A @ h + rnn.d)
