"""Tolerant extraction of structured code lists from model output.

Models wrap their answers in prose, code fences, or apologies; the parsers
here scan for the first well-formed JSON value of the expected shape and
ignore everything around it.
"""

from __future__ import annotations

import json


def extract_json_array(text: str) -> list | None:
    """First well-formed JSON list of objects found in the text, else None."""
    decoder = json.JSONDecoder()
    for i, char in enumerate(text):
        if char != "[":
            continue
        try:
            value, _ = decoder.raw_decode(text[i:])
        except json.JSONDecodeError:
            continue
        if isinstance(value, list) and all(isinstance(v, dict) for v in value):
            return value
    return None


def extract_json_object(text: str) -> dict | None:
    """First well-formed JSON object found in the text, else None."""
    decoder = json.JSONDecoder()
    for i, char in enumerate(text):
        if char != "{":
            continue
        try:
            value, _ = decoder.raw_decode(text[i:])
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    return None


def clean_label(value) -> str | None:
    """Trimmed label text, or None when the entry carries no usable label."""
    if not isinstance(value, str):
        return None
    label = " ".join(value.split())
    return label or None
