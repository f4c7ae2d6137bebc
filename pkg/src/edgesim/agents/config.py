"""Control-loop configuration: thresholds, scoring weights, and budget.

All quantities are exact rationals so strategy selection and destination
scoring are reproducible bit-for-bit. Every constant can be overridden
from a plain JSON document (file or inline), which is how scenario runs
tune the loop without code changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Mapping

from ..rationals import frac, jsonable

STRATEGIES = ("cost", "overload", "congestion", "balanced")


def _default_weights() -> dict[str, tuple[Fraction, Fraction]]:
    # (alpha, beta) = (utilization weight, node-cost weight) per strategy.
    return {
        "cost": (frac(25), frac(60)),
        "overload": (frac(55), frac(20)),
        "congestion": (frac(25), frac(12)),
        "balanced": (frac(35), frac(20)),
    }


@dataclass(frozen=True)
class AgentConfig:
    node_threshold: Fraction = frac("0.08")
    overload_windows: int = 1
    link_threshold: Fraction = frac("0.5")
    cost_threshold: Fraction = frac("8.7")
    region_penalty: Fraction = frac("25.0")
    budget: int = 4
    weights: Mapping[str, tuple[Fraction, Fraction]] = field(
        default_factory=_default_weights)
    window_length: Fraction = frac(100)
    latency_requirements: Mapping[str, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("node_threshold", "link_threshold", "cost_threshold",
                     "region_penalty", "window_length"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.overload_windows < 1:
            raise ValueError("overload_windows must be >= 1")
        missing = [s for s in STRATEGIES if s not in self.weights]
        if missing:
            raise ValueError(f"weights missing strategies: {missing}")

    def alpha(self, strategy: str) -> Fraction:
        return self.weights[strategy][0]

    def beta(self, strategy: str) -> Fraction:
        return self.weights[strategy][1]

    def with_requirements(self, requirements: Mapping[str, Any]) -> "AgentConfig":
        return replace(self, latency_requirements={
            app: frac(v) for app, v in requirements.items()})

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "AgentConfig":
        """Build from a JSON-style object; absent keys keep defaults."""
        kwargs: dict[str, Any] = {}
        for key in ("node_threshold", "link_threshold", "cost_threshold",
                    "region_penalty", "window_length"):
            if key in doc:
                kwargs[key] = frac(doc[key])
        for key in ("overload_windows", "budget"):
            if key in doc:
                kwargs[key] = int(doc[key])
        if "weights" in doc:
            weights = dict(_default_weights())
            for strategy, pair in doc["weights"].items():
                weights[strategy] = (frac(pair[0]), frac(pair[1]))
            kwargs["weights"] = weights
        if "latency_requirements" in doc:
            kwargs["latency_requirements"] = {
                app: frac(v) for app, v in doc["latency_requirements"].items()}
        return cls(**kwargs)

    def to_document(self) -> dict:
        return {
            "node_threshold": jsonable(self.node_threshold),
            "overload_windows": self.overload_windows,
            "link_threshold": jsonable(self.link_threshold),
            "cost_threshold": jsonable(self.cost_threshold),
            "region_penalty": jsonable(self.region_penalty),
            "budget": self.budget,
            "weights": {s: [jsonable(a), jsonable(b)]
                        for s, (a, b) in sorted(self.weights.items())},
            "window_length": jsonable(self.window_length),
            "latency_requirements": {
                app: jsonable(v)
                for app, v in sorted(self.latency_requirements.items())},
        }
