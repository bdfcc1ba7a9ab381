"""
Reading instance files and writing results as JSON

Floats are written with Python's shortest round-trip representation, so a result file
re-parses into bit-identical numbers. Non-finite values use the JSON extensions
``Infinity`` and ``NaN`` that :mod:`json` accepts on reading.
"""

import json
from pathlib import Path

import numpy as np

from ..__version__ import get_version
from ..utils.utils import module_versions
from .distributions import DiscreteDistribution
from .errors import InstanceFormatError
from .program import UQInstance


def _to_builtin(value):
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_builtin(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def read_json(path):
    """
    Parse a JSON file, turning syntax errors into InstanceFormatError with the line
    and column of the problem
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise InstanceFormatError(f"Cannot read {path}: {err}") from err
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise InstanceFormatError(
            f"{path}: invalid JSON at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from err


def read_instance(path):
    data = read_json(path)
    if not isinstance(data, dict):
        raise InstanceFormatError(f"{path}: an instance must be a JSON object")
    return UQInstance.from_dict(data)


def read_distribution(path):
    data = read_json(path)
    if not isinstance(data, dict):
        raise InstanceFormatError(f"{path}: a distribution must be a JSON object")
    return DiscreteDistribution.from_dict(data)


def provenance():
    return {"structwdro_version": get_version(), "module_versions": module_versions()}


def dumps_result(result, *, with_provenance=True):
    """
    JSON text for ``result`` (a dict), with a provenance entry added
    """
    result = _to_builtin(result)
    if with_provenance:
        result = dict(result, provenance=provenance())
    return json.dumps(result, indent=2, sort_keys=True) + "\n"


def write_result(path, result, *, with_provenance=True):
    Path(path).write_text(dumps_result(result, with_provenance=with_provenance))
