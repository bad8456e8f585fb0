"""JSON checkpoint container for intent-space and baseline models.

Parameters are stored in declared order as {name, shape, data} with data flattened in C
order. Floats are written with their shortest repr, so loading reproduces every tensor
bitwise.
"""

import json
import logging
import os
from typing import Any, Union

import numpy as np

from intentspace.errors import FormatError, PathError
from intentspace.mathcore import DTYPE
from intentspace.model import (BaselineRnn, BasisForm, BasisSet, CoordinateBlock,
                               ExpansionBlock, IntentSpaceModel, ScorerKind, ScorerParams,
                               SpaceMode)

FORMAT = 'intentspace-checkpoint'
VERSION = 1

KIND_INTENT_SPACE = 'intent-space'
KIND_BASELINE = 'baseline'


def _encode_param(name: str, value: np.ndarray) -> dict[str, Any]:
    arr = np.asarray(value, dtype=DTYPE)
    return {'name': name, 'shape': list(arr.shape), 'data': arr.ravel().tolist()}


def to_dict(model: Union[IntentSpaceModel, BaselineRnn]) -> dict[str, Any]:
    if isinstance(model, BaselineRnn):
        return {
            'format': FORMAT,
            'version': VERSION,
            'kind': KIND_BASELINE,
            'dims': {'hidden': model.hidden_size, 'input': model.V.shape[1],
                     'intents': model.num_intents},
            'labels': list(model.labels),
            'params': [_encode_param(n, model.get_param(n)) for n in model.all_param_names()],
        }
    return {
        'format': FORMAT,
        'version': VERSION,
        'kind': KIND_INTENT_SPACE,
        'dims': {'hidden': model.hidden_size, 'input': model.input_size,
                 'bases': model.bases.count, 'intents': model.num_intents,
                 'rank': model.bases.rank},
        'form': model.bases.form.value,
        'mode': model.mode.value,
        'scorer': model.scorer.kind.value,
        'labels': list(model.labels),
        'seen_count': model.seen_count,
        'params': [_encode_param(n, model.get_param(n)) for n in model.all_param_names()],
    }


def _decode_params(doc: dict[str, Any]) -> dict[str, np.ndarray]:
    params = {}
    for p in doc['params']:
        data = np.array(p['data'], dtype=DTYPE)
        shape = tuple(p['shape'])
        if data.size != int(np.prod(shape)):
            raise FormatError(f'parameter {p["name"]} does not match its shape {shape}')
        params[p['name']] = data.reshape(shape)
    return params


def from_dict(doc: dict[str, Any]) -> Union[IntentSpaceModel, BaselineRnn]:
    try:
        if doc.get('format') != FORMAT:
            raise FormatError('not an intentspace checkpoint')
        if doc.get('version') != VERSION:
            raise FormatError(f'unsupported checkpoint version {doc.get("version")}')
        params = _decode_params(doc)
        labels = list(doc['labels'])
        if doc['kind'] == KIND_BASELINE:
            return BaselineRnn(params['U'], params['V'], params['b'], params['A'],
                               params['d'], params['h0'], labels)
        if doc['kind'] != KIND_INTENT_SPACE:
            raise FormatError(f'unknown model kind {doc["kind"]}')
        form = BasisForm(doc['form'])
        omega = {int(name.split('.', 1)[1]): value for name, value in params.items()
                 if name.startswith('omega.')}
        return IntentSpaceModel(
            V=params['V'], b=params['b'],
            bases=BasisSet(form, params['bases'], params.get('U')),
            coords=CoordinateBlock(params['beta'], SpaceMode(doc['mode'])),
            expansions=ExpansionBlock(omega),
            scorer=ScorerParams(ScorerKind(doc['scorer']), params['a'], params['d']),
            labels=labels,
            h0=params['h0'],
            seen_count=int(doc['seen_count']))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f'malformed checkpoint: {e}') from e


def save(model: Union[IntentSpaceModel, BaselineRnn], path: str):
    """Write a checkpoint; the file is replaced atomically."""
    tmp = path + '.part'
    with open(tmp, 'w', encoding='utf-8') as f:
        json.dump(to_dict(model), f)
        f.write('\n')
    os.replace(tmp, path)
    logging.info('Wrote checkpoint %s', path)


def load(path: str) -> Union[IntentSpaceModel, BaselineRnn]:
    try:
        with open(path, encoding='utf-8') as f:
            doc = json.load(f)
    except OSError as e:
        raise PathError(f'cannot read checkpoint: {e}') from e
    except json.JSONDecodeError as e:
        raise FormatError(f'{path}: {e}') from e
    return from_dict(doc)


def tensor_diff(before: Union[IntentSpaceModel, BaselineRnn],
                after: Union[IntentSpaceModel, BaselineRnn]) -> dict[str, bool]:
    """For every tensor of before, whether after still holds it bitwise (leading rows).

    Tensors that grew along their first axis compare only the rows before already had.
    """
    result = {}
    for name in before.all_param_names():
        old = np.asarray(before.get_param(name))
        try:
            new = np.asarray(after.get_param(name))
        except KeyError:
            result[name] = False
            continue
        if old.ndim and new.ndim == old.ndim and new.shape[1:] == old.shape[1:]:
            new = new[:old.shape[0]]
        result[name] = old.shape == new.shape and old.tobytes() == new.tobytes()
    return result
