"""Key-value config files for the training harness.

Format: one ``key = value`` pair per line; ``#`` starts a comment; blank
lines are ignored.  Values are parsed as JSON when possible (numbers,
booleans, arrays like ``[64, 64]``) and kept as strings otherwise.  Keys are
the TrainConfig field names; any CLI flag overrides the file.
"""

from __future__ import annotations

import json

from .errors import InvalidSpecError


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def read_config(path) -> dict:
    """Parse a config file into a {key: value} mapping."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidSpecError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = parse_value(value)
    return out


def write_config(path, mapping: dict) -> None:
    with open(path, "w") as fh:
        for key in sorted(mapping):
            fh.write(f"{key} = {json.dumps(mapping[key])}\n")
