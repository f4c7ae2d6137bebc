"""Minimal JSON-Schema-subset validator for tool arguments.

Tool inputs parsed with exact rationals carry Fraction values where plain
JSON has floats; a stock validator would reject them as non-numbers, so
this one treats int/float/Fraction uniformly as "number". Supported
keywords: type, properties, required, items, enum, additionalProperties
(boolean), anyOf, minimum. That covers every schema the gateway declares.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Any, Mapping

_NUMBER_TYPES = (int, float, Fraction)


def _type_ok(value: Any, expected: str) -> bool:
    if expected == "object":
        return isinstance(value, Mapping)
    if expected == "array":
        return isinstance(value, list)
    if expected == "string":
        return isinstance(value, str)
    if expected == "boolean":
        return isinstance(value, bool)
    if expected == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if expected == "number":
        return isinstance(value, _NUMBER_TYPES) and not isinstance(value, bool)
    if expected == "null":
        return value is None
    return True


def validate(value: Any, schema: Mapping[str, Any], path: str = "$") -> list[str]:
    """Returns a list of human-readable violations; empty means valid."""
    errors: list[str] = []
    if not isinstance(schema, Mapping):
        return errors

    if "anyOf" in schema:
        branches = schema["anyOf"]
        collected = []
        for branch in branches:
            branch_errors = validate(value, branch, path)
            if not branch_errors:
                return []
            collected.append(branch_errors[0])
        errors.append(f"{path}: no alternative matched ({'; '.join(collected)})")
        return errors

    expected = schema.get("type")
    if expected is not None:
        types = expected if isinstance(expected, list) else [expected]
        if not any(_type_ok(value, t) for t in types):
            errors.append(f"{path}: expected {expected}, got {type(value).__name__}")
            return errors

    if "enum" in schema and value not in schema["enum"]:
        errors.append(f"{path}: {value!r} not in {schema['enum']}")

    if "minimum" in schema and isinstance(value, _NUMBER_TYPES) \
            and not isinstance(value, bool) and value < schema["minimum"]:
        errors.append(f"{path}: {value} below minimum {schema['minimum']}")

    if isinstance(value, Mapping):
        for key in schema.get("required", []):
            if key not in value:
                errors.append(f"{path}: missing required property {key!r}")
        properties = schema.get("properties", {})
        for key, subschema in properties.items():
            if key in value:
                errors.extend(validate(value[key], subschema, f"{path}.{key}"))
        if schema.get("additionalProperties") is False:
            for key in value:
                if key not in properties and key != "_meta":
                    errors.append(f"{path}: unexpected property {key!r}")

    if isinstance(value, list) and "items" in schema:
        for i, item in enumerate(value):
            errors.extend(validate(item, schema["items"], f"{path}[{i}]"))

    return errors
