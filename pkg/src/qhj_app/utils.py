# path: src/qhj_app/utils.py

import csv
import dataclasses
import json
import logging
import math
from enum import Enum
from pathlib import Path

import numpy as np
from django.conf import settings

logger = logging.getLogger(__name__)

# qhj_app/utils.py is the toolbox shared by the library modules and the management commands:
# settings lookup with defaults, JSON-safe conversion and deterministic artifact writing.


def get_setting(name, default):
    """
    Returns a project setting, or the default when settings are not configured
    (library use outside of manage.py).
    """
    if not settings.configured:
        return default
    return getattr(settings, name, default)


def to_serializable_dict(obj):
    """
    Recursively converts numpy values, paths, enums and dataclasses in a
    dictionary/list to plain JSON types. Non-finite floats become None.
    """
    if isinstance(obj, dict):
        return {str(k): to_serializable_dict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_serializable_dict(elem) for elem in obj]
    if isinstance(obj, np.ndarray):
        return to_serializable_dict(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, complex):
        return {'real': to_serializable_dict(obj.real), 'imag': to_serializable_dict(obj.imag)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_serializable_dict(dataclasses.asdict(obj))
    return obj


def dumps_json(payload):
    """Deterministic JSON text: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(to_serializable_dict(payload), sort_keys=True, indent=2, allow_nan=False) + '\n'


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(payload), encoding='utf-8')
    logger.debug(f"Wrote {path}")
    return path


def format_float(value):
    return format(float(value), '.17g')


def write_csv(path, header, rows):
    """Writes rows of numbers (floats formatted with 17 significant digits) or strings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    logger.debug(f"Wrote {path}")
    return path
