"""Pre-trained word vectors and sentence encoding.

Vectors are read from the GloVe text format: one record per line, the token followed by dim
space-separated decimal floats, UTF-8, no header.
"""

import logging
import string
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from intentspace.errors import EmptyInputError, FormatError, ParseError, ShapeError
from intentspace.mathcore import DTYPE

# ASCII punctuation removed from the ends of each token
STRIP_CHARS = string.punctuation


@dataclass
class EmbeddingTable:
    """Token to vector map with an out-of-vocabulary fallback."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    oov_vector: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, token: str) -> np.ndarray:
        vec = self.entries.get(token)
        return self.oov_vector if vec is None else vec


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and strip surrounding ASCII punctuation."""
    tokens = (t.strip(STRIP_CHARS) for t in text.lower().split())
    return [t for t in tokens if t]


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_embeddings(path: str, dim: int, vocabulary: Optional[Iterable[str]] = None,
                    ) -> EmbeddingTable:
    """Load a GloVe text file.

    The OOV vector is the mean over every row in the file, including rows left out by a
    vocabulary restriction.

    Args:
        path: embedding file
        dim: expected vector length
        vocabulary: if given, only these tokens are stored
    """
    wanted = frozenset(vocabulary) if vocabulary is not None else None
    table = EmbeddingTable(dim)
    total = np.zeros(dim, dtype=DTYPE)
    rows = 0
    with open(path, encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip()
            if not line:
                continue
            parts = line.split(' ')
            if len(parts) < dim + 1:
                raise FormatError(f'{path} line {lineno}: expected {dim} values, '
                                  f'found {len(parts) - 1}')
            # Some large GloVe files contain tokens with embedded spaces; a numeric field
            # inside the token means the row has too many values
            if any(_is_number(p) for p in parts[1:len(parts) - dim]):
                raise FormatError(f'{path} line {lineno}: expected {dim} values, '
                                  f'found {len(parts) - 1}')
            token = ' '.join(parts[:len(parts) - dim])
            try:
                vec = np.array([float(p) for p in parts[-dim:]], dtype=DTYPE)
            except ValueError as e:
                raise ParseError(f'{path}: {e}', lineno) from e
            if not token:
                raise ParseError(f'{path}: empty token', lineno)
            total += vec
            rows += 1
            if wanted is None or token in wanted:
                table.entries[token] = vec

    if not rows:
        raise FormatError(f'{path}: no vectors found')
    table.oov_vector = total / rows
    logging.info('Loaded %d of %d vectors from %s', len(table.entries), rows, path)
    return table


def encode_sentence(table: EmbeddingTable, tokens: list[str]) -> np.ndarray:
    """Map tokens to a (T, dim) array; unknown tokens take the OOV vector."""
    if not tokens:
        raise EmptyInputError('cannot encode an empty sentence')
    return np.stack([table.lookup(t) for t in tokens])


def table_from_vectors(vectors: dict[str, list[float]]) -> EmbeddingTable:
    """Build a table in memory; mainly useful for tests and small tools."""
    if not vectors:
        raise FormatError('no vectors given')
    entries = {tok: np.asarray(v, dtype=DTYPE) for tok, v in vectors.items()}
    dims = {v.shape for v in entries.values()}
    if len(dims) != 1:
        raise ShapeError(f'vectors have differing shapes {sorted(dims)}')
    dim = next(iter(dims))[0]
    return EmbeddingTable(dim, entries, np.mean(np.stack(list(entries.values())), axis=0))
