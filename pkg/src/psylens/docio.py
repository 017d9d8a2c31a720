"""Canonical JSON document I/O.

Every on-disk format carries a versioned ``schema`` string at the document
root. Writing always uses the same canonical form (UTF-8, two-space indent,
keys in insertion order, trailing newline) so that serialize(load(x))
round-trips byte-identically for files produced by this package.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .errors import ParseError


def canonical_json(doc: dict[str, Any]) -> str:
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def write_json_document(path: str | Path, doc: dict[str, Any]) -> None:
    Path(path).write_text(canonical_json(doc), encoding="utf-8")


def read_json_document(path: str | Path, expected_schema: str) -> dict[str, Any]:
    """Read a schema-tagged JSON document, failing with location info."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: file not found") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object at the document root")
    schema = doc.get("schema")
    if schema != expected_schema:
        raise ParseError(f"{path}: schema mismatch: expected {expected_schema!r}, found {schema!r}")
    return doc


def require_field(doc: dict[str, Any], field: str, context: str) -> Any:
    if field not in doc:
        raise ParseError(f"{context}: missing required field {field!r}")
    return doc[field]
