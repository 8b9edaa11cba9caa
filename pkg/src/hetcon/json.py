"""Utility functions related to json."""
from __future__ import annotations

import json
import math
import os

import hetcon.error

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from typing import Any


class JsonError(hetcon.error.HetconError):
    pass


def sanitize(obj: Any) -> Any:
    """Replace non-finite floats by None, recursively.

    JSON has no representation for infinities or NaN. Callers are expected
    to carry an explicit flag next to any value that may be non-finite.

    :param obj: a Python object made of dicts, lists, tuples and scalars
    :return: a copy of obj that json.dumps accepts with allow_nan=False
    """
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    elif isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    return obj


def dumps(obj: Any) -> str:
    """Serialize a report to a JSON string.

    Floats use the shortest representation that round-trips.

    :param obj: a Python object that can serialized to JSON
    """
    return json.dumps(sanitize(obj), indent=2, allow_nan=False) + "\n"


def dump_to_json_file(path: str, obj: Any) -> None:
    """Dump a Python object to a json file.

    :param path: path to the json file
    :param obj: a Python object that can serialized to JSON
    """
    with open(path, "w") as fd:
        fd.write(dumps(obj))


def loads(content: str, source: str = "<string>") -> Any:
    """Parse a JSON document.

    :param content: the JSON text
    :param source: name of the document used in error messages
    :raise JsonError: on syntax errors, with line and column
    """
    try:
        return json.loads(content)
    except json.JSONDecodeError as err:
        raise JsonError(
            f"{source}:{err.lineno}:{err.colno}: {err.msg}", origin="loads"
        ) from err


def load_from_json_file(
    path: str, default: Any = None, ignore_non_existing: bool = True
) -> Any:
    """Load a Python object from a JSON file.

    :param path: json file path
    :param default: default value returned if ignore_non_existing is True and
        the specified file does not exist.
    :param ignore_non_existing: if False raise JsonError if the file does not
        exist, otherwise return default value
    :return: a Python object
    """
    if os.path.isfile(path):
        with open(path) as fd:
            return loads(fd.read(), source=path)
    else:
        if ignore_non_existing:
            return default
        else:
            raise JsonError(f"json file {path} does not exist")
