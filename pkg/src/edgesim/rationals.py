"""Exact-arithmetic helpers shared across the simulator.

Simulation times, message sizes, capacities, and costs are kept as
``fractions.Fraction`` so event ordering, trace additivity, and metric
identities hold exactly across reruns and platforms. JSON documents are
parsed with ``parse_float=Fraction``, which hands the *raw decimal text* to
Fraction, so ``0.9`` really is 9/10 and not a binary float.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any


def frac(value: Any) -> Fraction:
    """Convert a scalar (int, float, str, Fraction) to Fraction exactly.

    Strings accept plain decimals, exponents, and "p/q" forms. Floats go
    through their shortest round-trip repr, so ``frac(0.9) == Fraction(9, 10)``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a quantity")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rational quantity")


def loads_exact(text: str) -> Any:
    """json.loads with exact decimal fractions for every float literal."""
    return json.loads(text, parse_float=Fraction)


def load_exact(path: str | Path) -> Any:
    return loads_exact(Path(path).read_text(encoding="utf-8"))


def quantity_jsonable(q: Fraction) -> int | float | str:
    """Serialize a Fraction losslessly: int when integral, decimal float when
    the float round-trips exactly, else a "p/q" string."""
    if q.denominator == 1:
        return int(q)
    f = float(q)
    if Fraction(str(f)) == q:
        return f
    return f"{q.numerator}/{q.denominator}"


def jsonable(value: Any) -> Any:
    """Recursively convert Fractions (and tuples/sets) into JSON-safe values."""
    if isinstance(value, Fraction):
        return quantity_jsonable(value)
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted(jsonable(v) for v in value)
    return value


def dumps_canonical(value: Any) -> str:
    """Deterministic JSON text: sorted keys, compact separators."""
    return json.dumps(jsonable(value), sort_keys=True, separators=(",", ":"))


def approx_float(q: Fraction | None, digits: int = 6) -> float | None:
    """Float view for wire payloads; None passes through."""
    if q is None:
        return None
    return round(float(q), digits)
